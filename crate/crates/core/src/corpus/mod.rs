//! Corpus types, line-delimited JSON I/O, and the benchmark construction
//! pipeline.

pub mod generate;
pub mod pipeline;
pub mod tokenize;

pub use generate::{generate_synthetic_corpus, GeneratedCorpus, GeneratorSpec, TripleTruth};
pub use pipeline::{
    assign_answers, bucket_and_split, build_dataset, clip_triples, compute_stats, distill,
    find_span_locations, find_subsequence_location, stats_csv, stats_table, AssignReport,
    BuildReport, ClipReport, StatsRow,
};
pub use tokenize::tokenize;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: article {id:?} has no tokens")]
    EmptyArticle { line: usize, id: String },
    #[error("line {line}: duplicate article id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
}

/// One relation triple; the subject is implicitly the article title.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationTriple {
    pub relation: Vec<String>,
    pub object: Vec<String>,
}

/// Strictly increasing token positions; contiguous positions form a span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerLocation {
    pub indices: Vec<usize>,
}

impl AnswerLocation {
    pub fn new(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        AnswerLocation { indices }
    }

    pub fn is_span(&self) -> bool {
        self.indices.windows(2).all(|w| w[1] == w[0] + 1)
    }

    pub fn gather<'a>(&self, tokens: &'a [String]) -> Vec<&'a str> {
        self.indices.iter().map(|&i| tokens[i].as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Span,
    Seq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedQuery {
    pub query_tokens: Vec<String>,
    pub answer_tokens: Vec<String>,
    pub locations: Vec<AnswerLocation>,
    pub kind: AnswerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    /// The first entity of every triple in this article.
    pub title: String,
    pub tokens: Vec<String>,
    pub triples: Vec<RelationTriple>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<AnnotatedQuery>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    Span,
    Seq,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Span => write!(f, "SPAN"),
            Family::Seq => write!(f, "SEQ"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    S,
    M,
    L,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bucket::S => write!(f, "S"),
            Bucket::M => write!(f, "M"),
            Bucket::L => write!(f, "L"),
        }
    }
}

impl Bucket {
    /// S below 400 tokens, M for 400..=700, L above 700.
    pub fn of_len(len: usize) -> Bucket {
        if len < 400 {
            Bucket::S
        } else if len <= 700 {
            Bucket::M
        } else {
            Bucket::L
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub family: Family,
    pub bucket: Bucket,
    pub split: Split,
    pub ids: Vec<String>,
    pub docs: usize,
    pub triples: usize,
    pub seq_triples: usize,
}

/// Reads a line-delimited corpus, validating tokens and id uniqueness.
/// Errors carry 1-based line numbers.
pub fn read_corpus(path: &Path) -> Result<Vec<Article>, CorpusError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut seen = std::collections::HashSet::new();
    let mut articles = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let article: Article =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: n, source })?;
        if article.tokens.is_empty() {
            return Err(CorpusError::EmptyArticle {
                line: n,
                id: article.id,
            });
        }
        if !seen.insert(article.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: n,
                id: article.id,
            });
        }
        articles.push(article);
    }
    Ok(articles)
}

pub fn write_corpus(path: &Path, articles: &[Article]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for a in articles {
        serde_json::to_writer(&mut w, a).map_err(|source| CorpusError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifests(path: &Path) -> Result<Vec<DatasetManifest>, CorpusError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: DatasetManifest = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Json {
                line: i + 1,
                source,
            })?;
        out.push(m);
    }
    Ok(out)
}

pub fn write_manifests(path: &Path, manifests: &[DatasetManifest]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for m in manifests {
        serde_json::to_writer(&mut w, m).map_err(|source| CorpusError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn answer_location_span_detection() {
        assert!(AnswerLocation::new(vec![3, 4, 5]).is_span());
        assert!(AnswerLocation::new(vec![3]).is_span());
        assert!(!AnswerLocation::new(vec![3, 5]).is_span());
    }

    #[test]
    fn corpus_round_trip_is_byte_identical() {
        let articles = vec![Article {
            id: "a1".into(),
            title: "thing one".into(),
            tokens: toks(&["alpha", "beta", "gamma"]),
            triples: vec![RelationTriple {
                relation: toks(&["color"]),
                object: toks(&["beta"]),
            }],
            queries: vec![AnnotatedQuery {
                query_tokens: toks(&["color"]),
                answer_tokens: toks(&["beta"]),
                locations: vec![AnswerLocation::new(vec![1])],
                kind: AnswerKind::Span,
            }],
        }];
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        write_corpus(&p1, &articles).unwrap();
        let back = read_corpus(&p1).unwrap();
        assert_eq!(back, articles);
        write_corpus(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn locations_serialize_as_plain_index_arrays() {
        let q = AnnotatedQuery {
            query_tokens: toks(&["color"]),
            answer_tokens: toks(&["red"]),
            locations: vec![AnswerLocation::new(vec![2, 5])],
            kind: AnswerKind::Seq,
        };
        let json = serde_json::to_string(&q).unwrap();
        assert!(json.contains("\"locations\":[[2,5]]"), "{json}");
        assert!(json.contains("\"kind\":\"seq\""), "{json}");
    }

    #[test]
    fn read_corpus_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"a\",\"title\":\"t\",\"tokens\":[\"x\"],\"triples\":[]}\nnot json\n",
        )
        .unwrap();
        match read_corpus(&p) {
            Err(CorpusError::Json { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn read_corpus_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dup.jsonl");
        let art = "{\"id\":\"a\",\"title\":\"t\",\"tokens\":[\"x\"],\"triples\":[]}";
        std::fs::write(&p, format!("{art}\n{art}\n")).unwrap();
        assert!(matches!(
            read_corpus(&p),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn bucket_boundaries_follow_the_cutoffs() {
        assert_eq!(Bucket::of_len(399), Bucket::S);
        assert_eq!(Bucket::of_len(400), Bucket::M);
        assert_eq!(Bucket::of_len(700), Bucket::M);
        assert_eq!(Bucket::of_len(701), Bucket::L);
    }
}
