//! QA metrics (exact match, token F1) and their aggregates.

pub mod expand;
pub mod sweep;

pub use expand::{expand_neighbor_queries, ArticlePool, PoolQuery, QueryPool};
pub use sweep::{
    best_f1, default_delta_grid, parse_pr_csv, pr_to_csv, sweep_pr_curve, PRPoint, SweepItem,
};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// One decoded answer with its confidence scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub article_id: String,
    pub query_tokens: Vec<String>,
    /// Empty when the decoder stopped on eos immediately (no answer).
    pub answer_tokens: Vec<String>,
    pub score_mul: f64,
    pub score_avg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Mul,
    Avg,
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoreKind::Mul => write!(f, "mul"),
            ScoreKind::Avg => write!(f, "avg"),
        }
    }
}

impl Prediction {
    pub fn score(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Mul => self.score_mul,
            ScoreKind::Avg => self.score_avg,
        }
    }
}

fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}

/// Lowercases, drops the articles "a"/"an"/"the", then strips leading and
/// trailing punctuation tokens.
pub fn normalize_answer(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = tokens
        .iter()
        .map(|t| t.to_lowercase())
        .filter(|t| t != "a" && t != "an" && t != "the")
        .collect();
    while out.first().is_some_and(|t| is_punctuation(t)) {
        out.remove(0);
    }
    while out.last().is_some_and(|t| is_punctuation(t)) {
        out.pop();
    }
    out
}

/// 1 iff the normalized prediction equals any normalized gold variant.
pub fn exact_match(prediction: &[String], gold_variants: &[Vec<String>]) -> bool {
    let pred = normalize_answer(prediction);
    gold_variants
        .iter()
        .any(|gold| normalize_answer(gold) == pred)
}

fn bag(tokens: &[String]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Bag-of-tokens F1 after normalization, max over gold variants. Both sides
/// empty scores 1; exactly one empty scores 0.
pub fn token_f1(prediction: &[String], gold_variants: &[Vec<String>]) -> f64 {
    let pred = normalize_answer(prediction);
    let mut best: f64 = 0.0;
    for variant in gold_variants {
        let gold = normalize_answer(variant);
        let score = if pred.is_empty() && gold.is_empty() {
            1.0
        } else if pred.is_empty() || gold.is_empty() {
            0.0
        } else {
            let pb = bag(&pred);
            let gb = bag(&gold);
            let common: usize = pb
                .iter()
                .map(|(tok, n)| (*n).min(gb.get(tok).copied().unwrap_or(0)))
                .sum();
            if common == 0 {
                0.0
            } else {
                let p = common as f64 / pred.len() as f64;
                let r = common as f64 / gold.len() as f64;
                2.0 * p * r / (p + r)
            }
        };
        best = best.max(score);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QaReport {
    /// Exact-match count over gold queries.
    pub em_count: usize,
    pub total: usize,
    pub em_percent: f64,
    pub f1_percent: f64,
}

impl QaReport {
    pub fn em_fraction(&self) -> f64 {
        self.em_count as f64 / self.total as f64
    }
}

/// Mean EM and F1 over (prediction, gold variants) pairs, as percentages.
pub fn evaluate_qa(pairs: &[(Vec<String>, Vec<Vec<String>>)]) -> QaReport {
    let total = pairs.len();
    let mut em_count = 0;
    let mut f1_sum = 0.0;
    for (pred, gold) in pairs {
        if exact_match(pred, gold) {
            em_count += 1;
        }
        f1_sum += token_f1(pred, gold);
    }
    QaReport {
        em_count,
        total,
        em_percent: 100.0 * em_count as f64 / total as f64,
        f1_percent: 100.0 * f1_sum / total as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalize_drops_articles_then_edge_punctuation() {
        assert_eq!(
            normalize_answer(&toks(&["The", "9", "June", "1914"])),
            toks(&["9", "june", "1914"])
        );
        assert_eq!(normalize_answer(&[]), Vec::<String>::new());
        assert_eq!(normalize_answer(&toks(&["A", ",", "fever"])), toks(&["fever"]));
    }

    #[test]
    fn exact_match_is_case_insensitive() {
        assert!(exact_match(
            &toks(&["9", "june", "1914"]),
            &[toks(&["9", "June", "1914"])]
        ));
    }

    #[test]
    fn exact_match_empty_prediction_fails_nonempty_gold() {
        assert!(!exact_match(&[], &[toks(&["x"])]));
    }

    #[test]
    fn exact_match_takes_max_over_variants() {
        assert!(exact_match(
            &toks(&["2", "march", "1625"]),
            &[toks(&["2", "March", "1625"]), toks(&["2", "September"])]
        ));
    }

    #[test]
    fn token_f1_identical_and_disjoint() {
        assert_eq!(token_f1(&toks(&["x", "y"]), &[toks(&["x", "y"])]), 1.0);
        assert_eq!(token_f1(&toks(&["x"]), &[toks(&["y"])]), 0.0);
    }

    #[test]
    fn token_f1_partial_overlap_matches_hand_count() {
        // "on 2 march 1625" vs "2 march 1625": P = 3/4, R = 1 -> F1 = 6/7
        let f1 = token_f1(&toks(&["on", "2", "march", "1625"]), &[toks(&["2", "march", "1625"])]);
        assert!((f1 - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn token_f1_counts_multiplicity() {
        // pred has one "y", gold needs two: common = 2 (x, y), P = 2/2, R = 2/3
        let f1 = token_f1(&toks(&["x", "y"]), &[toks(&["x", "y", "y"])]);
        let p: f64 = 1.0;
        let r: f64 = 2.0 / 3.0;
        assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn evaluate_qa_all_correct_and_all_empty() {
        let gold = vec![toks(&["x", "y"])];
        let perfect = vec![(toks(&["x", "y"]), gold.clone()); 4];
        let report = evaluate_qa(&perfect);
        assert_eq!(report.em_percent, 100.0);
        assert_eq!(report.f1_percent, 100.0);

        let empty: Vec<(Vec<String>, Vec<Vec<String>>)> =
            vec![(Vec::new(), gold.clone()); 4];
        let report = evaluate_qa(&empty);
        assert_eq!(report.em_percent, 0.0);
        assert_eq!(report.f1_percent, 0.0);
    }

    #[test]
    fn evaluate_qa_mixed_matches_hand_computation() {
        let pairs = vec![
            (toks(&["x"]), vec![toks(&["x"])]),            // EM 1, F1 1
            (toks(&["x", "y"]), vec![toks(&["x"])]),       // EM 0, F1 2/3
            (Vec::new(), vec![toks(&["x"])]),              // EM 0, F1 0
            (toks(&["z"]), vec![toks(&["x"])]),            // EM 0, F1 0
        ];
        let report = evaluate_qa(&pairs);
        assert!((report.em_percent - 25.0).abs() < 1e-12);
        let expected_f1 = 100.0 * (1.0 + 2.0 / 3.0) / 4.0;
        assert!((report.f1_percent - expected_f1).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn em_implies_f1_one(
            pred in proptest::collection::vec("[a-c]{1,3}", 0..5),
            gold in proptest::collection::vec("[a-c]{1,3}", 1..5),
        ) {
            if exact_match(&pred, &[gold.clone()]) {
                prop_assert!((token_f1(&pred, &[gold]) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn metrics_symmetric_under_variant_reorder(
            pred in proptest::collection::vec("[a-c]{1,2}", 0..4),
            v1 in proptest::collection::vec("[a-c]{1,2}", 1..4),
            v2 in proptest::collection::vec("[a-c]{1,2}", 1..4),
        ) {
            let fwd = [v1.clone(), v2.clone()];
            let rev = [v2, v1];
            prop_assert_eq!(exact_match(&pred, &fwd), exact_match(&pred, &rev));
            prop_assert!((token_f1(&pred, &fwd) - token_f1(&pred, &rev)).abs() < 1e-12);
        }
    }
}
