//! Synthetic corpus generator with known ground truth.
//!
//! Articles are templated the way distant supervision finds facts in real
//! text: each triple's object is preceded by its relation's cue token, so a
//! model can locate answers from the query instead of memorizing. A span
//! object occupies one contiguous block `cue w1 .. wk`; a sequence object is
//! scattered as `(cue, token)` pairs, which keeps its tokens non-adjacent.
//! Object words come from a pool disjoint from the filler pool and are
//! unique within an article, so a placed object has exactly the occurrences
//! the generator intended.

use crate::corpus::{Article, CorpusError, RelationTriple};
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    /// Total word inventory split between filler and object pools.
    pub vocab_size: usize,
    pub article_count: usize,
    pub len_min: usize,
    pub len_max: usize,
    /// Size of the global relation inventory.
    pub relation_count: usize,
    pub triples_min: usize,
    pub triples_max: usize,
    pub object_len_max: usize,
    /// Probability that a triple is embedded as a scattered subsequence.
    pub seq_fraction: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            vocab_size: 200,
            article_count: 50,
            len_min: 30,
            len_max: 60,
            relation_count: 12,
            triples_min: 6,
            triples_max: 8,
            object_len_max: 3,
            seq_fraction: 0.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleTruth {
    pub relation: Vec<String>,
    pub object: Vec<String>,
    /// True when the object was embedded as a scattered subsequence.
    pub seq: bool,
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub articles: Vec<Article>,
    /// Per-article intended triples, aligned with `articles`.
    pub truth: Vec<Vec<TripleTruth>>,
    pub total_triples: usize,
    pub seq_triples: usize,
}

fn relation_tokens(idx: usize) -> Vec<String> {
    // alternate one- and two-token relations
    if idx % 2 == 0 {
        vec![format!("r{idx:03}")]
    } else {
        vec![format!("r{idx:03}"), "attr".to_string()]
    }
}

pub fn generate_synthetic_corpus(spec: &GeneratorSpec) -> Result<GeneratedCorpus, CorpusError> {
    validate(spec)?;
    let object_pool = (spec.vocab_size / 4).max(2 * spec.triples_max * spec.object_len_max);
    let filler_pool = spec.vocab_size.saturating_sub(object_pool);
    if filler_pool == 0 {
        return Err(CorpusError::InfeasibleSpec(format!(
            "vocab_size {} leaves no filler words after reserving {} object words",
            spec.vocab_size, object_pool
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut articles = Vec::with_capacity(spec.article_count);
    let mut truth = Vec::with_capacity(spec.article_count);
    let mut total_triples = 0;
    let mut seq_triples = 0;

    for idx in 0..spec.article_count {
        let len = rng.random_range(spec.len_min..=spec.len_max);
        let k = rng.random_range(spec.triples_min..=spec.triples_max);

        // decide kinds and object lengths, then shrink until they fit
        let kinds: Vec<bool> = (0..k).map(|_| rng.random::<f64>() < spec.seq_fraction).collect();
        let mut lens: Vec<usize> = kinds
            .iter()
            .map(|&seq| {
                if seq {
                    rng.random_range(2..=spec.object_len_max.max(2))
                } else {
                    rng.random_range(1..=spec.object_len_max)
                }
            })
            .collect();
        let footprint = |lens: &[usize], kinds: &[bool]| -> usize {
            lens.iter()
                .zip(kinds)
                .map(|(l, &seq)| l + usize::from(seq))
                .sum()
        };
        while footprint(&lens, &kinds) > len {
            let Some(pos) = (0..k)
                .filter(|&i| lens[i] > if kinds[i] { 2 } else { 1 })
                .max_by_key(|&i| lens[i])
            else {
                return Err(CorpusError::InfeasibleSpec(format!(
                    "article of {len} tokens cannot hold {k} objects"
                )));
            };
            lens[pos] -= 1;
        }

        let relations = sample(&mut rng, spec.relation_count, k).into_vec();
        let total_object_tokens: usize = lens.iter().sum();
        let object_words: Vec<String> = sample(&mut rng, object_pool, total_object_tokens)
            .into_iter()
            .map(|w| format!("x{w:04}"))
            .collect();

        let mut tokens: Vec<String> = (0..len)
            .map(|_| format!("w{:04}", rng.random_range(0..filler_pool)))
            .collect();
        let mut occupied = vec![false; len];
        let mut triples = Vec::with_capacity(k);
        let mut truths = Vec::with_capacity(k);
        let mut word_cursor = 0;

        for t in 0..k {
            let object: Vec<String> =
                object_words[word_cursor..word_cursor + lens[t]].to_vec();
            word_cursor += lens[t];
            let positions = if kinds[t] {
                place_scattered(&mut rng, &occupied, object.len(), len).ok_or_else(|| {
                    CorpusError::InfeasibleSpec(format!(
                        "no scattered placement for a {}-token object in {len} tokens",
                        object.len()
                    ))
                })?
            } else {
                place_contiguous(&mut rng, &occupied, object.len()).ok_or_else(|| {
                    CorpusError::InfeasibleSpec(format!(
                        "no contiguous placement for a {}-token object in {len} tokens",
                        object.len()
                    ))
                })?
            };
            for (word, &pos) in object.iter().zip(&positions) {
                tokens[pos] = word.clone();
                occupied[pos] = true;
            }
            let relation = relation_tokens(relations[t]);
            triples.push(RelationTriple {
                relation: relation.clone(),
                object: object.clone(),
            });
            truths.push(TripleTruth {
                relation,
                object,
                seq: kinds[t],
            });
            total_triples += 1;
            if kinds[t] {
                seq_triples += 1;
            }
        }

        articles.push(Article {
            id: format!("a{idx:05}"),
            title: format!("subject-{idx:04}"),
            tokens,
            triples,
            queries: Vec::new(),
        });
        truth.push(truths);
    }

    Ok(GeneratedCorpus {
        articles,
        truth,
        total_triples,
        seq_triples,
    })
}

fn validate(spec: &GeneratorSpec) -> Result<(), CorpusError> {
    let positive = [
        ("vocab_size", spec.vocab_size),
        ("article_count", spec.article_count),
        ("len_min", spec.len_min),
        ("relation_count", spec.relation_count),
        ("triples_min", spec.triples_min),
        ("object_len_max", spec.object_len_max),
    ];
    for (name, v) in positive {
        if v == 0 {
            return Err(CorpusError::InfeasibleSpec(format!("{name} must be positive")));
        }
    }
    if spec.len_max < spec.len_min || spec.triples_max < spec.triples_min {
        return Err(CorpusError::InfeasibleSpec(
            "ranges must satisfy min <= max".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.seq_fraction) {
        return Err(CorpusError::InfeasibleSpec(format!(
            "seq_fraction {} outside [0,1]",
            spec.seq_fraction
        )));
    }
    if spec.object_len_max > spec.len_min {
        return Err(CorpusError::InfeasibleSpec(format!(
            "objects of {} tokens cannot fit articles of {} tokens",
            spec.object_len_max, spec.len_min
        )));
    }
    if spec.relation_count < spec.triples_max {
        return Err(CorpusError::InfeasibleSpec(format!(
            "relation inventory {} smaller than triples_max {}",
            spec.relation_count, spec.triples_max
        )));
    }
    // worst case: every triple scattered, two tokens plus one gap each
    if spec.triples_max * 3 > spec.len_min && spec.seq_fraction > 0.0 {
        return Err(CorpusError::InfeasibleSpec(format!(
            "len_min {} too small for up to {} scattered objects",
            spec.len_min, spec.triples_max
        )));
    }
    if spec.triples_max > spec.len_min {
        return Err(CorpusError::InfeasibleSpec(format!(
            "len_min {} too small for {} objects",
            spec.len_min, spec.triples_max
        )));
    }
    Ok(())
}

/// Random free contiguous run of `width` positions.
fn place_contiguous<R: Rng>(rng: &mut R, occupied: &[bool], width: usize) -> Option<Vec<usize>> {
    let starts: Vec<usize> = (0..occupied.len().saturating_sub(width - 1))
        .filter(|&s| occupied[s..s + width].iter().all(|o| !o))
        .collect();
    if starts.is_empty() {
        return None;
    }
    let s = starts[rng.random_range(0..starts.len())];
    Some((s..s + width).collect())
}

/// Random free increasing positions that are not all adjacent, so the object
/// occurs as a subsequence but never as a span.
fn place_scattered<R: Rng>(
    rng: &mut R,
    occupied: &[bool],
    width: usize,
    len: usize,
) -> Option<Vec<usize>> {
    let free: Vec<usize> = (0..len).filter(|&i| !occupied[i]).collect();
    if free.len() < width {
        return None;
    }
    for _ in 0..200 {
        let mut picks = sample(rng, free.len(), width).into_vec();
        picks.sort_unstable();
        let positions: Vec<usize> = picks.iter().map(|&i| free[i]).collect();
        let all_adjacent = positions.windows(2).all(|w| w[1] == w[0] + 1);
        if !all_adjacent {
            return Some(positions);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::pipeline::{assign_answers, clip_triples};
    use crate::corpus::AnswerKind;

    #[test]
    fn same_seed_gives_identical_corpora() {
        let spec = GeneratorSpec {
            article_count: 8,
            seq_fraction: 0.3,
            ..GeneratorSpec::default()
        };
        let a = generate_synthetic_corpus(&spec).unwrap();
        let b = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(a.articles, b.articles);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn zero_seq_fraction_yields_only_span_queries() {
        let spec = GeneratorSpec {
            article_count: 10,
            seq_fraction: 0.0,
            ..GeneratorSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(corpus.seq_triples, 0);
        for article in &corpus.articles {
            let (clipped, report) = clip_triples(article);
            assert_eq!(report.kept, article.triples.len());
            let (queries, assign) = assign_answers(&clipped);
            assert_eq!(assign.unmatched, 0);
            assert!(queries.iter().all(|q| q.kind == AnswerKind::Span));
        }
    }

    #[test]
    fn assignment_recovers_the_generators_intended_kinds() {
        let spec = GeneratorSpec {
            article_count: 30,
            seq_fraction: 0.25,
            ..GeneratorSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let mut seq_found = 0;
        let mut total = 0;
        for (article, truths) in corpus.articles.iter().zip(&corpus.truth) {
            let (clipped, _) = clip_triples(article);
            let (queries, _) = assign_answers(&clipped);
            assert_eq!(queries.len(), truths.len());
            for (q, t) in queries.iter().zip(truths) {
                assert_eq!(q.answer_tokens, t.object);
                let expected = if t.seq { AnswerKind::Seq } else { AnswerKind::Span };
                assert_eq!(q.kind, expected, "object {:?}", t.object);
                total += 1;
                if q.kind == AnswerKind::Seq {
                    seq_found += 1;
                }
            }
        }
        assert_eq!(total, corpus.total_triples);
        assert_eq!(seq_found, corpus.seq_triples);
    }

    #[test]
    fn locations_gather_to_answers_on_generated_corpora() {
        let spec = GeneratorSpec {
            article_count: 20,
            seq_fraction: 0.2,
            ..GeneratorSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        for article in &corpus.articles {
            let (clipped, _) = clip_triples(article);
            let (queries, _) = assign_answers(&clipped);
            for q in queries {
                assert!(!q.locations.is_empty());
                for loc in &q.locations {
                    let gathered: Vec<&str> = loc.gather(&clipped.tokens);
                    let expected: Vec<&str> =
                        q.answer_tokens.iter().map(|s| s.as_str()).collect();
                    assert_eq!(gathered, expected);
                }
            }
        }
    }

    #[test]
    fn rejects_infeasible_specs() {
        let overlong = GeneratorSpec {
            len_min: 2,
            len_max: 3,
            object_len_max: 5,
            ..GeneratorSpec::default()
        };
        assert!(matches!(
            generate_synthetic_corpus(&overlong),
            Err(CorpusError::InfeasibleSpec(_))
        ));

        let bad_fraction = GeneratorSpec {
            seq_fraction: 1.5,
            ..GeneratorSpec::default()
        };
        assert!(generate_synthetic_corpus(&bad_fraction).is_err());
    }

    #[test]
    fn article_lengths_and_triple_counts_respect_spec() {
        let spec = GeneratorSpec {
            article_count: 12,
            ..GeneratorSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(corpus.articles.len(), 12);
        for a in &corpus.articles {
            assert!(a.tokens.len() >= spec.len_min && a.tokens.len() <= spec.len_max);
            assert!(a.triples.len() >= spec.triples_min && a.triples.len() <= spec.triples_max);
        }
    }
}
