//! Named trainable tensors and their graph bindings.

use crate::config::ModelConfig;
use crate::graph::{Graph, NodeId};
use crate::model::ModelError;
use crate::tensor::Tensor;
use crate::vocab::Vocabulary;
use rand::Rng;
use std::collections::BTreeMap;

/// Creation order is fixed so initialization is reproducible under a seed.
fn shape_table(cfg: &ModelConfig, words: usize, chars: usize) -> Vec<(&'static str, Vec<usize>)> {
    let d = cfg.d;
    let ew = cfg.embed_width();
    let conv_in = cfg.char_width * cfg.char_embed_dim;
    vec![
        ("embed/word", vec![words, d]),
        ("embed/char", vec![chars, cfg.char_embed_dim]),
        ("charcnn/filters", vec![conv_in, cfg.char_filters]),
        ("charcnn/bias", vec![cfg.char_filters]),
        ("highway/proj", vec![ew, d]),
        ("highway/w_gate", vec![ew, d]),
        ("highway/b_gate", vec![d]),
        ("highway/w_trans", vec![ew, d]),
        ("highway/b_trans", vec![d]),
        // shared context/query encoder, input d, hidden d per direction
        ("encoder/fwd/w", vec![2 * d, 4 * d]),
        ("encoder/fwd/b", vec![4 * d]),
        ("encoder/bwd/w", vec![2 * d, 4 * d]),
        ("encoder/bwd/b", vec![4 * d]),
        // trilinear similarity over [u; v; u*v]
        ("attn/w_sim", vec![6 * d]),
        ("selfmatch/w_key", vec![8 * d, d]),
        ("selfmatch/w_query", vec![8 * d, d]),
        ("selfmatch/w_score", vec![d]),
        // self-match BiLSTM input is [h; c] = 16d, hidden d per direction
        ("selfmatch/fwd/w", vec![16 * d + d, 4 * d]),
        ("selfmatch/fwd/b", vec![4 * d]),
        ("selfmatch/bwd/w", vec![16 * d + d, 4 * d]),
        ("selfmatch/bwd/b", vec![4 * d]),
        ("decoder/w_mem", vec![2 * d, d]),
        ("decoder/w_state", vec![2 * d, d]),
        ("decoder/w_score", vec![d]),
        // decoder LSTM: input c_t (2d), hidden p_t (2d)
        ("decoder/lstm/w", vec![4 * d, 8 * d]),
        ("decoder/lstm/b", vec![8 * d]),
        ("decoder/eos", vec![2 * d]),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    store: BTreeMap<String, Tensor>,
}

impl Parameters {
    /// Fresh parameters, uniform in [-0.1, 0.1), LSTM forget-gate biases at 1.
    pub fn init<R: Rng>(cfg: &ModelConfig, vocab: &Vocabulary, rng: &mut R) -> Self {
        const LSTM_BIASES: [&str; 5] = [
            "encoder/fwd/b",
            "encoder/bwd/b",
            "selfmatch/fwd/b",
            "selfmatch/bwd/b",
            "decoder/lstm/b",
        ];
        let mut store = BTreeMap::new();
        for (name, shape) in shape_table(cfg, vocab.word_count(), vocab.char_count()) {
            let mut t = if name.ends_with("/b") || name.ends_with("bias") {
                Tensor::zeros(shape)
            } else {
                Tensor::uniform(shape, -0.1, 0.1, rng)
            };
            if LSTM_BIASES.contains(&name) {
                // forget gate starts open; gate order is (i, f, g, o)
                let hidden = t.numel() / 4;
                for v in &mut t.data_mut()[hidden..2 * hidden] {
                    *v = 1.0;
                }
            }
            t.requires_grad = true;
            store.insert(name.to_string(), t);
        }
        Parameters { store }
    }

    pub fn from_store(store: BTreeMap<String, Tensor>) -> Self {
        let mut store = store;
        for t in store.values_mut() {
            t.requires_grad = true;
        }
        Parameters { store }
    }

    pub fn store(&self) -> &BTreeMap<String, Tensor> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.store
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ModelError> {
        self.store
            .get(name)
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    /// Checks every tensor against the shapes implied by config and vocab.
    pub fn validate_shapes(
        &self,
        cfg: &ModelConfig,
        vocab: &Vocabulary,
    ) -> Result<(), ModelError> {
        for (name, shape) in shape_table(cfg, vocab.word_count(), vocab.char_count()) {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ShapeMismatchNamed {
                    name: name.to_string(),
                    expected: shape,
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Loads pretrained word vectors from `token v1 .. vd` lines. Tokens not
    /// in the vocabulary are ignored; vocabulary rows not in the file keep
    /// their random initialization. Returns the number of rows loaded.
    pub fn load_word_vectors(
        &mut self,
        vocab: &Vocabulary,
        text: &str,
    ) -> Result<usize, ModelError> {
        let d = {
            let t = self.get("embed/word")?;
            t.shape()[1]
        };
        let table = self
            .store
            .get_mut("embed/word")
            .ok_or_else(|| ModelError::MissingParam("embed/word".into()))?;
        let mut loaded = 0;
        for line in text.lines() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f64> = parts.filter_map(|p| p.parse().ok()).collect();
            if values.len() != d {
                continue;
            }
            let id = vocab.word_id(token);
            if id == crate::vocab::UNK_ID && token != crate::vocab::UNK_TOKEN {
                continue;
            }
            table.data_mut()[id * d..(id + 1) * d].copy_from_slice(&values);
            loaded += 1;
        }
        Ok(loaded)
    }
}

/// Leaf node ids for every parameter in one graph.
pub struct Binding {
    ids: BTreeMap<String, NodeId>,
}

impl Binding {
    pub fn new(graph: &mut Graph, params: &Parameters) -> Self {
        let ids = params
            .store()
            .iter()
            .map(|(name, t)| (name.clone(), graph.leaf(t)))
            .collect();
        Binding { ids }
    }

    pub fn id(&self, name: &str) -> Result<NodeId, ModelError> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    /// Pulls accumulated leaf gradients out of the graph, adding them into
    /// `acc` keyed by parameter name.
    pub fn collect_grads(&self, graph: &Graph, acc: &mut BTreeMap<String, Vec<f64>>) {
        for (name, &id) in &self.ids {
            if let Some(g) = graph.grad(id) {
                match acc.get_mut(name) {
                    Some(buf) => {
                        for (a, b) in buf.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                    None => {
                        acc.insert(name.clone(), g.to_vec());
                    }
                }
            }
        }
    }
}
