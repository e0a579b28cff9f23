//! Mini-batch AdaDelta training with per-epoch dev evaluation and early
//! stopping on dev exact match.

use crate::config::{ModelConfig, TrainConfig};
use crate::corpus::Article;
use crate::eval;
use crate::graph::Graph;
use crate::model::params::{Binding, Parameters};
use crate::model::{build_memory, decode::pointer_decode_train, Model, ModelError};
use crate::optim::AdaDeltaState;
use crate::vocab::Vocabulary;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// One (document, query) pair prepared for the model: truncated, with the
/// leftmost answer location as the training target when one survives
/// truncation.
#[derive(Debug, Clone)]
pub struct QaExample {
    pub article_id: String,
    pub doc_tokens: Vec<String>,
    pub query_tokens: Vec<String>,
    /// None when every gold location was truncated away.
    pub target: Option<Vec<usize>>,
    pub gold_answer: Vec<String>,
}

/// Builds examples from annotated articles. Documents are truncated to
/// `max_doc_len` and queries to `max_query_len`; of a query's gold locations,
/// the leftmost that survives truncation supervises training.
pub fn prepare_examples(articles: &[Article], cfg: &ModelConfig) -> Vec<QaExample> {
    let mut out = Vec::new();
    for article in articles {
        let doc_len = article.tokens.len().min(cfg.max_doc_len);
        let doc_tokens = article.tokens[..doc_len].to_vec();
        for q in &article.queries {
            let mut surviving: Vec<&Vec<usize>> = q
                .locations
                .iter()
                .map(|l| &l.indices)
                .filter(|idx| idx.iter().all(|&i| i < doc_len))
                .collect();
            surviving.sort();
            let target = surviving.first().map(|idx| (*idx).clone());
            let query_len = q.query_tokens.len().min(cfg.max_query_len);
            out.push(QaExample {
                article_id: article.id.clone(),
                doc_tokens: doc_tokens.clone(),
                query_tokens: q.query_tokens[..query_len].to_vec(),
                target,
                gold_answer: q.answer_tokens.clone(),
            });
        }
    }
    out
}

/// Builds the vocabulary from training documents and queries, in
/// first-occurrence order.
pub fn build_vocab(articles: &[Article]) -> Vocabulary {
    let mut tokens: Vec<&str> = Vec::new();
    for a in articles {
        tokens.extend(a.tokens.iter().map(|s| s.as_str()));
        for q in &a.queries {
            tokens.extend(q.query_tokens.iter().map(|s| s.as_str()));
        }
    }
    Vocabulary::build(tokens)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev_em: f64,
    pub dev_f1: f64,
}

pub struct TrainOutcome {
    /// Config, vocabulary, and the best parameters by dev EM.
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Training queries whose answers were entirely truncated away.
    pub skipped_examples: usize,
    pub best_epoch: usize,
    pub best_dev_em: f64,
}

fn dev_report(
    params: &Parameters,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    examples: &[QaExample],
) -> Result<eval::QaReport, ModelError> {
    let mut pairs = Vec::with_capacity(examples.len());
    for ex in examples {
        let decoded =
            crate::model::decode_once(params, vocab, cfg, &ex.doc_tokens, &ex.query_tokens)?;
        pairs.push((decoded.answer_tokens, vec![ex.gold_answer.clone()]));
    }
    Ok(eval::evaluate_qa(&pairs))
}

pub fn train(
    train_articles: &[Article],
    dev_articles: &[Article],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome, ModelError> {
    let vocab = build_vocab(train_articles);
    let mut rng = ChaCha8Rng::seed_from_u64(model_cfg.seed);
    let mut params = Parameters::init(model_cfg, &vocab, &mut rng);

    let train_examples = prepare_examples(train_articles, model_cfg);
    let dev_examples = prepare_examples(dev_articles, model_cfg);
    let trainable: Vec<usize> = (0..train_examples.len())
        .filter(|&i| train_examples[i].target.is_some())
        .collect();
    let skipped_examples = train_examples.len() - trainable.len();
    if trainable.is_empty() {
        return Err(ModelError::EmptyDataset);
    }

    let mut optimizer = AdaDeltaState::new(train_cfg.rho, train_cfg.epsilon, train_cfg.lr);
    let mut log = Vec::new();
    let mut best_params = params.clone();
    let mut best_dev_em = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut epochs_since_improvement = 0;

    let mut order = trainable.clone();
    for epoch in 1..=train_cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(train_cfg.batch_size.max(1)) {
            let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for &i in batch {
                let ex = &train_examples[i];
                let target = ex.target.as_ref().expect("filtered to trainable");
                let mut g = Graph::new();
                let binding = Binding::new(&mut g, &params);
                let memory = build_memory(
                    &mut g,
                    &binding,
                    &vocab,
                    model_cfg,
                    &ex.doc_tokens,
                    &ex.query_tokens,
                    true,
                    &mut rng,
                )?;
                let (loss, forced) = pointer_decode_train(&mut g, &binding, memory, target)?;
                g.backward(loss)?;
                binding.collect_grads(&g, &mut grads);
                loss_sum += forced.loss;
            }
            let scale = 1.0 / batch.len() as f64;
            for (name, grad) in grads.iter_mut() {
                grad.iter_mut().for_each(|v| *v *= scale);
                let tensor = params
                    .store_mut()
                    .get_mut(name)
                    .expect("gradient for unknown parameter");
                optimizer.step(name, tensor.data_mut(), grad)?;
            }
        }

        let report = dev_report(&params, &vocab, model_cfg, &dev_examples)?;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / trainable.len() as f64,
            dev_em: report.em_percent,
            dev_f1: report.f1_percent,
        };
        on_epoch(&entry);
        log.push(entry);

        if report.em_percent > best_dev_em {
            best_dev_em = report.em_percent;
            best_epoch = epoch;
            best_params = params.clone();
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
        }
        if let Some(goal) = train_cfg.stop_at_dev_em {
            if best_dev_em >= goal {
                break;
            }
        }
        if epochs_since_improvement >= train_cfg.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        model: Model {
            config: model_cfg.clone(),
            vocab,
            params: best_params,
        },
        log,
        skipped_examples,
        best_epoch,
        best_dev_em,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, pipeline, GeneratorSpec};

    fn tiny_corpus(seed: u64) -> Vec<Article> {
        let spec = GeneratorSpec {
            vocab_size: 40,
            article_count: 4,
            len_min: 10,
            len_max: 14,
            relation_count: 4,
            triples_min: 2,
            triples_max: 3,
            object_len_max: 2,
            seq_fraction: 0.0,
            seed,
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        corpus
            .articles
            .into_iter()
            .map(|a| {
                let (mut clipped, _) = pipeline::clip_triples(&a);
                let (queries, _) = pipeline::assign_answers(&clipped);
                clipped.queries = queries;
                clipped
            })
            .collect()
    }

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d: 6,
            char_embed_dim: 4,
            char_filters: 6,
            char_width: 3,
            dropout_rate: 0.0,
            max_doc_len: 20,
            max_query_len: 4,
            max_answer_len: 4,
            seed: 3,
        }
    }

    #[test]
    fn prepare_examples_picks_leftmost_surviving_location() {
        use crate::corpus::{AnnotatedQuery, AnswerKind, AnswerLocation};
        let article = Article {
            id: "a".into(),
            title: "t".into(),
            tokens: (0..30).map(|i| format!("w{i}")).collect(),
            triples: Vec::new(),
            queries: vec![AnnotatedQuery {
                query_tokens: vec!["q".into()],
                answer_tokens: vec!["w25".into()],
                locations: vec![
                    AnswerLocation::new(vec![25]),
                    AnswerLocation::new(vec![5]),
                ],
                kind: AnswerKind::Span,
            }],
        };
        let cfg = ModelConfig {
            max_doc_len: 30,
            ..tiny_cfg()
        };
        let ex = prepare_examples(&[article.clone()], &cfg);
        assert_eq!(ex[0].target, Some(vec![5]));

        // truncate away the leftmost candidate; the other survives
        let cfg = ModelConfig {
            max_doc_len: 10,
            ..tiny_cfg()
        };
        let ex = prepare_examples(&[article.clone()], &cfg);
        assert_eq!(ex[0].target, Some(vec![5]));

        // truncate away everything
        let cfg = ModelConfig {
            max_doc_len: 4,
            ..tiny_cfg()
        };
        let ex = prepare_examples(&[article], &cfg);
        assert_eq!(ex[0].target, None);
    }

    #[test]
    fn lr_zero_keeps_dev_em_constant() {
        let corpus = tiny_corpus(11);
        let cfg = tiny_cfg();
        let tc = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            lr: 0.0,
            patience: 10,
            ..TrainConfig::default()
        };
        let outcome = train(&corpus, &corpus, &cfg, &tc, &mut |_| {}).unwrap();
        let ems: Vec<f64> = outcome.log.iter().map(|l| l.dev_em).collect();
        assert!(ems.windows(2).all(|w| w[0] == w[1]), "{ems:?}");
    }

    #[test]
    fn training_is_reproducible_under_a_fixed_seed() {
        let corpus = tiny_corpus(13);
        let cfg = tiny_cfg();
        let tc = TrainConfig {
            max_epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train(&corpus, &corpus, &cfg, &tc, &mut |_| {}).unwrap();
        let b = train(&corpus, &corpus, &cfg, &tc, &mut |_| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn a_few_epochs_reduce_the_loss() {
        let corpus = tiny_corpus(17);
        let cfg = tiny_cfg();
        let tc = TrainConfig {
            max_epochs: 8,
            batch_size: 4,
            patience: 100,
            ..TrainConfig::default()
        };
        let outcome = train(&corpus, &corpus, &cfg, &tc, &mut |_| {}).unwrap();
        let first = outcome.log.first().unwrap().loss;
        let last = outcome.log.last().unwrap().loss;
        assert!(last < first, "loss {first} -> {last}");
    }
}
