//! Precision-recall sweeps over a confidence threshold.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct PRPoint {
    pub delta: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One prediction reduced to what the sweep needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepItem {
    pub score: f64,
    /// Nonempty answer (an immediate-eos decode is not an answer).
    pub answered: bool,
    /// Exact match against the query's gold answer; false for expanded
    /// queries, which have no gold.
    pub correct: bool,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("pr file line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("pr value {value} at line {line} outside [0, 1]")]
    OutOfRange { line: usize, value: f64 },
}

/// Precision and recall per threshold. A threshold that answers nothing has
/// precision 1.0 by convention; recall is true positives over `gold_total`.
pub fn sweep_pr_curve(items: &[SweepItem], gold_total: usize, deltas: &[f64]) -> Vec<PRPoint> {
    let mut sorted: Vec<f64> = deltas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    sorted.dedup();
    sorted
        .into_iter()
        .map(|delta| {
            let mut answered = 0usize;
            let mut tp = 0usize;
            for item in items {
                if item.answered && item.score >= delta {
                    answered += 1;
                    if item.correct {
                        tp += 1;
                    }
                }
            }
            let precision = if answered == 0 {
                1.0
            } else {
                tp as f64 / answered as f64
            };
            let recall = if gold_total == 0 {
                0.0
            } else {
                tp as f64 / gold_total as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            PRPoint {
                delta,
                precision,
                recall,
                f1,
            }
        })
        .collect()
}

/// The argmax-F1 point; ties go to the lowest threshold.
pub fn best_f1(points: &[PRPoint]) -> Option<&PRPoint> {
    points
        .iter()
        .reduce(|best, p| if p.f1 > best.f1 { p } else { best })
}

/// 101 evenly spaced thresholds plus every observed score.
pub fn default_delta_grid(observed: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    grid.extend(observed.filter(|s| s.is_finite()));
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    grid.dedup();
    grid
}

/// `delta,precision,recall,f1` rows with a trailing best-F1 comment.
pub fn pr_to_csv(points: &[PRPoint]) -> String {
    let mut out = String::new();
    for p in points {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6}\n",
            p.delta, p.precision, p.recall, p.f1
        ));
    }
    if let Some(best) = best_f1(points) {
        out.push_str(&format!("# best_f1={:.6} delta={:.6}\n", best.f1, best.delta));
    }
    out
}

/// Parses the `pr_to_csv` format, skipping `#` comment lines. Every value
/// must lie in [0, 1].
pub fn parse_pr_csv(text: &str) -> Result<Vec<PRPoint>, SweepError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(SweepError::BadRow {
                line,
                reason: format!("expected 4 comma-separated values, got {}", fields.len()),
            });
        }
        let mut values = [0.0f64; 4];
        for (slot, field) in values.iter_mut().zip(&fields) {
            let v: f64 = field.trim().parse().map_err(|_| SweepError::BadRow {
                line,
                reason: format!("not a number: {field:?}"),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(SweepError::OutOfRange { line, value: v });
            }
            *slot = v;
        }
        points.push(PRPoint {
            delta: values[0],
            precision: values[1],
            recall: values[2],
            f1: values[3],
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(score: f64, answered: bool, correct: bool) -> SweepItem {
        SweepItem {
            score,
            answered,
            correct,
        }
    }

    #[test]
    fn delta_zero_recall_is_the_em_rate() {
        // 10 gold queries; 6 answered correctly, 2 answered wrong, 2 empty
        let mut items = Vec::new();
        for i in 0..6 {
            items.push(item(0.1 + 0.1 * i as f64, true, true));
        }
        items.push(item(0.5, true, false));
        items.push(item(0.9, true, false));
        items.push(item(0.2, false, false));
        items.push(item(0.3, false, false));
        let points = sweep_pr_curve(&items, 10, &[0.0]);
        assert_eq!(points[0].recall, 6.0 / 10.0);
        assert_eq!(points[0].precision, 6.0 / 8.0);
    }

    #[test]
    fn delta_above_one_answers_nothing() {
        let items = vec![item(1.0, true, true), item(0.4, true, false)];
        let points = sweep_pr_curve(&items, 2, &[1.0 + 1e-9]);
        assert_eq!(points[0].recall, 0.0);
        assert_eq!(points[0].precision, 1.0);
        assert_eq!(points[0].f1, 0.0);
    }

    #[test]
    fn hand_computed_ten_query_table() {
        // scores: correct at .9 .8 .7, wrong at .6, correct at .5, wrong at .4,
        // correct at .3 .2, wrong at .1, empty prediction
        let items = vec![
            item(0.9, true, true),
            item(0.8, true, true),
            item(0.7, true, true),
            item(0.6, true, false),
            item(0.5, true, true),
            item(0.4, true, false),
            item(0.3, true, true),
            item(0.2, true, true),
            item(0.1, true, false),
            item(0.0, false, false),
        ];
        let gold = 8;
        let points = sweep_pr_curve(&items, gold, &[0.0, 0.45, 0.65, 0.95]);
        // delta = 0.0: answered 9, tp 6
        assert_eq!(points[0].precision, 6.0 / 9.0);
        assert_eq!(points[0].recall, 6.0 / 8.0);
        // delta = 0.45: answered 6 (.9 .8 .7 .6 .5), wait .5 >= .45 yes and .4 no -> 5 answered? (.9,.8,.7,.6,.5)
        assert_eq!(points[1].precision, 4.0 / 5.0);
        assert_eq!(points[1].recall, 4.0 / 8.0);
        // delta = 0.65: answered 3 (.9 .8 .7), tp 3
        assert_eq!(points[2].precision, 1.0);
        assert_eq!(points[2].recall, 3.0 / 8.0);
        // delta = 0.95: answered 0
        assert_eq!(points[3].precision, 1.0);
        assert_eq!(points[3].recall, 0.0);
    }

    #[test]
    fn best_f1_breaks_ties_toward_lowest_delta() {
        let points = vec![
            PRPoint { delta: 0.1, precision: 0.5, recall: 0.5, f1: 0.5 },
            PRPoint { delta: 0.2, precision: 0.5, recall: 0.5, f1: 0.5 },
            PRPoint { delta: 0.3, precision: 0.1, recall: 0.1, f1: 0.1 },
        ];
        assert_eq!(best_f1(&points).unwrap().delta, 0.1);
    }

    #[test]
    fn default_grid_contains_endpoints_and_observed() {
        let grid = default_delta_grid([0.123, 0.5].into_iter());
        assert_eq!(grid.first(), Some(&0.0));
        assert_eq!(grid.last(), Some(&1.0));
        assert!(grid.contains(&0.123));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let items = vec![item(0.7, true, true), item(0.2, true, false)];
        let points = sweep_pr_curve(&items, 2, &[0.0, 0.5]);
        let csv = pr_to_csv(&points);
        assert!(csv.contains("# best_f1="));
        let parsed = parse_pr_csv(&csv).unwrap();
        assert_eq!(parsed.len(), points.len());

        assert!(matches!(
            parse_pr_csv("0.5,0.5,0.5\n"),
            Err(SweepError::BadRow { line: 1, .. })
        ));
        assert!(matches!(
            parse_pr_csv("0.5,1.5,0.5,0.5\n"),
            Err(SweepError::OutOfRange { line: 1, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recall_never_increases_with_delta(
            scores in proptest::collection::vec((0.0f64..=1.0, any::<bool>(), any::<bool>()), 1..40),
            deltas in proptest::collection::vec(0.0f64..=1.0, 1..20),
        ) {
            let items: Vec<SweepItem> = scores
                .iter()
                .map(|(s, a, c)| item(*s, *a, *a && *c))
                .collect();
            let gold = items.iter().filter(|i| i.correct).count().max(1);
            let points = sweep_pr_curve(&items, gold, &deltas);
            for w in points.windows(2) {
                prop_assert!(w[1].recall <= w[0].recall + 1e-15);
            }
        }

        #[test]
        fn sweep_depends_only_on_score_correct_multiset(
            scores in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 2..30),
        ) {
            let items: Vec<SweepItem> = scores
                .iter()
                .map(|(s, c)| item(*s, true, *c))
                .collect();
            let mut shuffled = items.clone();
            shuffled.reverse();
            let deltas = [0.0, 0.25, 0.5, 0.75, 1.0];
            let a = sweep_pr_curve(&items, 10, &deltas);
            let b = sweep_pr_curve(&shuffled, 10, &deltas);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn sweep_matches_brute_force_counter(
            scores in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..25),
            delta in 0.0f64..=1.0,
        ) {
            let items: Vec<SweepItem> = scores
                .iter()
                .map(|(s, c)| item(*s, true, *c))
                .collect();
            let gold = 7;
            let p = &sweep_pr_curve(&items, gold, &[delta])[0];
            // independent counting pass
            let answered = scores.iter().filter(|(s, _)| *s >= delta).count();
            let tp = scores.iter().filter(|(s, c)| *s >= delta && *c).count();
            let precision = if answered == 0 { 1.0 } else { tp as f64 / answered as f64 };
            let recall = tp as f64 / gold as f64;
            prop_assert_eq!(p.precision, precision);
            prop_assert_eq!(p.recall, recall);
        }
    }
}
