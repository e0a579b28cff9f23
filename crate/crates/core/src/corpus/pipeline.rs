//! Benchmark construction: clipping, span/sequence answer assignment,
//! distillation, bucketing with a seeded 5/1/5 split, and statistics.

use crate::corpus::{
    AnnotatedQuery, AnswerKind, AnswerLocation, Article, Bucket, DatasetManifest, Family,
    Split,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClipReport {
    pub kept: usize,
    pub multi_object: usize,
    pub out_of_text: usize,
    pub duplicate: usize,
}

impl ClipReport {
    pub fn merge(&mut self, other: &ClipReport) {
        self.kept += other.kept;
        self.multi_object += other.multi_object;
        self.out_of_text += other.out_of_text;
        self.duplicate += other.duplicate;
    }
}

/// Clipping: drops exact duplicate triples, then every triple whose relation
/// has multiple distinct objects within this article, then triples whose
/// object is not contained in the article's token multiset.
pub fn clip_triples(article: &Article) -> (Article, ClipReport) {
    let mut report = ClipReport::default();

    let mut seen = std::collections::HashSet::new();
    let mut unique = Vec::new();
    for t in &article.triples {
        if seen.insert(t.clone()) {
            unique.push(t.clone());
        } else {
            report.duplicate += 1;
        }
    }

    let mut objects_per_relation: HashMap<Vec<String>, usize> = HashMap::new();
    for t in &unique {
        *objects_per_relation.entry(t.relation.clone()).or_insert(0) += 1;
    }

    let mut available: HashMap<&str, usize> = HashMap::new();
    for tok in &article.tokens {
        *available.entry(tok.as_str()).or_insert(0) += 1;
    }

    let mut kept = Vec::new();
    for t in unique {
        if objects_per_relation[&t.relation] > 1 {
            report.multi_object += 1;
            continue;
        }
        let mut needed: HashMap<&str, usize> = HashMap::new();
        for tok in &t.object {
            *needed.entry(tok.as_str()).or_insert(0) += 1;
        }
        let contained = needed
            .iter()
            .all(|(tok, n)| available.get(tok).copied().unwrap_or(0) >= *n);
        if contained {
            kept.push(t);
        } else {
            report.out_of_text += 1;
        }
    }
    report.kept = kept.len();
    let mut clipped = article.clone();
    clipped.triples = kept;
    (clipped, report)
}

/// All contiguous occurrences of `object` in `tokens`, left to right.
pub fn find_span_locations(tokens: &[String], object: &[String]) -> Vec<AnswerLocation> {
    if object.is_empty() || object.len() > tokens.len() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for start in 0..=(tokens.len() - object.len()) {
        if tokens[start..start + object.len()] == *object {
            out.push(AnswerLocation::new((start..start + object.len()).collect()));
        }
    }
    out
}

/// Leftmost-greedy ordered subsequence match: each object token takes the
/// earliest document position after the previous match.
pub fn find_subsequence_location(tokens: &[String], object: &[String]) -> Option<AnswerLocation> {
    if object.is_empty() {
        return None;
    }
    let mut indices = Vec::with_capacity(object.len());
    let mut from = 0;
    for want in object {
        let found = tokens[from..].iter().position(|t| t == want)? + from;
        indices.push(found);
        from = found + 1;
    }
    Some(AnswerLocation::new(indices))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssignReport {
    pub span_queries: usize,
    pub seq_queries: usize,
    /// Triples that survived clipping but have no ordered match; tolerated
    /// because multiset containment does not imply an ordered subsequence.
    pub unmatched: usize,
}

impl AssignReport {
    pub fn merge(&mut self, other: &AssignReport) {
        self.span_queries += other.span_queries;
        self.seq_queries += other.seq_queries;
        self.unmatched += other.unmatched;
    }
}

/// Query and answer assignment over a clipped article: the relation becomes
/// the query and the object the answer. Span matches win (all occurrences
/// kept as ground truths); otherwise the greedy subsequence match is used.
pub fn assign_answers(article: &Article) -> (Vec<AnnotatedQuery>, AssignReport) {
    let mut report = AssignReport::default();
    let mut queries = Vec::new();
    for t in &article.triples {
        let spans = find_span_locations(&article.tokens, &t.object);
        if !spans.is_empty() {
            report.span_queries += 1;
            queries.push(AnnotatedQuery {
                query_tokens: t.relation.clone(),
                answer_tokens: t.object.clone(),
                locations: spans,
                kind: AnswerKind::Span,
            });
        } else if let Some(loc) = find_subsequence_location(&article.tokens, &t.object) {
            report.seq_queries += 1;
            queries.push(AnnotatedQuery {
                query_tokens: t.relation.clone(),
                answer_tokens: t.object.clone(),
                locations: vec![loc],
                kind: AnswerKind::Seq,
            });
        } else {
            report.unmatched += 1;
        }
    }
    (queries, report)
}

/// Distillation: keeps exactly the articles with at least `min_triples`
/// annotated queries.
pub fn distill(corpus: Vec<Article>, min_triples: usize) -> Vec<Article> {
    corpus
        .into_iter()
        .filter(|a| a.queries.len() >= min_triples)
        .collect()
}

/// Buckets by token count, forms the SPAN (all-span articles) and SEQ (all
/// articles) families, and performs a seeded shuffle plus contiguous 5/1/5
/// split within each (family, bucket). Leftover articles go to train.
pub fn bucket_and_split(corpus: &[Article], seed: u64) -> Vec<DatasetManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifests = Vec::new();
    for family in [Family::Span, Family::Seq] {
        for bucket in [Bucket::S, Bucket::M, Bucket::L] {
            let mut members: Vec<&Article> = corpus
                .iter()
                .filter(|a| Bucket::of_len(a.tokens.len()) == bucket)
                .filter(|a| match family {
                    Family::Span => a.queries.iter().all(|q| q.kind == AnswerKind::Span),
                    Family::Seq => true,
                })
                .collect();
            members.shuffle(&mut rng);

            let n = members.len();
            let dev_n = n / 11;
            let test_n = 5 * n / 11;
            let train_n = n - dev_n - test_n;
            let sections = [
                (Split::Train, &members[..train_n]),
                (Split::Dev, &members[train_n..train_n + dev_n]),
                (Split::Test, &members[train_n + dev_n..]),
            ];
            for (split, articles) in sections {
                let triples: usize = articles.iter().map(|a| a.queries.len()).sum();
                let seq_triples: usize = articles
                    .iter()
                    .map(|a| a.queries.iter().filter(|q| q.kind == AnswerKind::Seq).count())
                    .sum();
                manifests.push(DatasetManifest {
                    family,
                    bucket,
                    split,
                    ids: articles.iter().map(|a| a.id.clone()).collect(),
                    docs: articles.len(),
                    triples,
                    seq_triples,
                });
            }
        }
    }
    manifests
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub family: Family,
    /// None marks the Total column.
    pub bucket: Option<Bucket>,
    pub docs: usize,
    pub triples: usize,
    pub seq_triples: usize,
    /// 100 * seq / triples, rounded to two decimals; 0 when empty.
    pub pct_seq: f64,
}

/// Aggregates manifest counts per (family, bucket) across splits, plus a
/// Total row per family.
pub fn compute_stats(manifests: &[DatasetManifest]) -> Vec<StatsRow> {
    let mut rows = Vec::new();
    for family in [Family::Span, Family::Seq] {
        let mut total = (0usize, 0usize, 0usize);
        for bucket in [Bucket::S, Bucket::M, Bucket::L] {
            let (mut docs, mut triples, mut seq) = (0, 0, 0);
            for m in manifests
                .iter()
                .filter(|m| m.family == family && m.bucket == bucket)
            {
                docs += m.docs;
                triples += m.triples;
                seq += m.seq_triples;
            }
            total.0 += docs;
            total.1 += triples;
            total.2 += seq;
            rows.push(StatsRow {
                family,
                bucket: Some(bucket),
                docs,
                triples,
                seq_triples: seq,
                pct_seq: pct(seq, triples),
            });
        }
        rows.push(StatsRow {
            family,
            bucket: None,
            docs: total.0,
            triples: total.1,
            seq_triples: total.2,
            pct_seq: pct(total.2, total.1),
        });
    }
    rows
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        (10_000.0 * part as f64 / whole as f64).round() / 100.0
    }
}

fn bucket_label(b: Option<Bucket>) -> String {
    match b {
        Some(b) => b.to_string(),
        None => "Total".to_string(),
    }
}

/// `family,bucket,docs,triples,seq_triples,pct_seq` rows.
pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from("family,bucket,docs,triples,seq_triples,pct_seq\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.2}\n",
            r.family,
            bucket_label(r.bucket),
            r.docs,
            r.triples,
            r.seq_triples,
            r.pct_seq
        ));
    }
    out
}

/// Human-readable table with S/M/L/Total columns per family.
pub fn stats_table(rows: &[StatsRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22}{:>12}{:>12}{:>12}{:>12}\n",
        "", "S", "M", "L", "Total"
    ));
    for family in [Family::Span, Family::Seq] {
        let fam: Vec<&StatsRow> = rows.iter().filter(|r| r.family == family).collect();
        let cell = |f: &dyn Fn(&StatsRow) -> String| -> Vec<String> {
            fam.iter().map(|r| f(r)).collect()
        };
        let print_line = |out: &mut String, label: String, cells: Vec<String>| {
            out.push_str(&format!(
                "{:<22}{:>12}{:>12}{:>12}{:>12}\n",
                label, cells[0], cells[1], cells[2], cells[3]
            ));
        };
        print_line(
            &mut out,
            format!("{family} # Docs"),
            cell(&|r| r.docs.to_string()),
        );
        print_line(
            &mut out,
            format!("{family} # Triples"),
            cell(&|r| r.triples.to_string()),
        );
        if family == Family::Seq {
            print_line(
                &mut out,
                format!("{family} # Seq-triples"),
                cell(&|r| r.seq_triples.to_string()),
            );
            print_line(
                &mut out,
                format!("{family} %Seq-triples"),
                cell(&|r| format!("{:.2}", r.pct_seq)),
            );
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub clip: ClipReport,
    pub assign: AssignReport,
    pub articles_in: usize,
    pub articles_distilled_out: usize,
}

/// Full construction pass: clip -> assign -> distill -> bucket/split.
/// Returns the annotated articles that survived distillation, the manifests,
/// and a report of everything dropped along the way.
pub fn build_dataset(
    raw: Vec<Article>,
    min_triples: usize,
    seed: u64,
) -> (Vec<Article>, Vec<DatasetManifest>, BuildReport) {
    let mut report = BuildReport {
        articles_in: raw.len(),
        ..BuildReport::default()
    };
    let mut annotated = Vec::with_capacity(raw.len());
    for article in &raw {
        let (mut clipped, clip_report) = clip_triples(article);
        report.clip.merge(&clip_report);
        let (queries, assign_report) = assign_answers(&clipped);
        report.assign.merge(&assign_report);
        clipped.queries = queries;
        annotated.push(clipped);
    }
    let kept = distill(annotated, min_triples);
    report.articles_distilled_out = report.articles_in - kept.len();
    let manifests = bucket_and_split(&kept, seed);
    (kept, manifests, report)
}
