//! The QA network: embeddings -> highway -> BiLSTM encoders -> attention
//! flow -> self-matching -> pointer-network decoder.

pub mod decode;
pub mod layers;
pub mod params;
pub mod train;

pub use decode::{
    pointer_decode_greedy, pointer_decode_train, sequence_nll, DecodeResult, ForcedDecode,
    StopReason,
};
pub use params::{Binding, Parameters};
pub use train::{build_vocab, prepare_examples, train, EpochLog, QaExample, TrainOutcome};

use crate::config::ModelConfig;
use crate::graph::{Graph, NodeId};
use crate::optim::OptimError;
use crate::tensor::TensorError;
use crate::vocab::Vocabulary;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("empty token sequence")]
    EmptyTokens,
    #[error("no trainable examples in the dataset")]
    EmptyDataset,
    #[error("sequence of {len} tokens exceeds the configured max of {max}")]
    TooLong { len: usize, max: usize },
    #[error("target index {index} out of range for a document of {len} tokens")]
    TargetOutOfRange { index: usize, len: usize },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("parameter {name}: expected shape {expected:?}, checkpoint has {got:?}")]
    ShapeMismatchNamed {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("vocabulary mismatch for {what}: expected {expected}, got {got}")]
    VocabMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
}

/// Builds the full encoder stack for one (document, query) pair and returns
/// the self-matched memory `O (n, 2d)`.
///
/// In training mode, inverted dropout is applied to the embedding outputs,
/// the highway outputs, the query-aware rows, and the memory itself.
pub fn build_memory(
    g: &mut Graph,
    b: &Binding,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    doc_tokens: &[String],
    query_tokens: &[String],
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, ModelError> {
    let rate = cfg.dropout_rate;
    let x = layers::embed_tokens(g, b, vocab, cfg, doc_tokens, cfg.max_doc_len)?;
    let x = g.dropout(x, rate, training, rng)?;
    let q = layers::embed_tokens(g, b, vocab, cfg, query_tokens, cfg.max_query_len)?;
    let q = g.dropout(q, rate, training, rng)?;

    let u = layers::highway(g, b, x)?;
    let u = g.dropout(u, rate, training, rng)?;
    let v = layers::highway(g, b, q)?;
    let v = g.dropout(v, rate, training, rng)?;

    let u_enc = layers::bilstm_encode(g, b, "encoder", u, cfg.d)?;
    let v_enc = layers::bilstm_encode(g, b, "encoder", v, cfg.d)?;

    let h = layers::attention_flow(g, b, u_enc, v_enc)?;
    let h = g.dropout(h, rate, training, rng)?;

    let o = layers::self_match(g, b, h, cfg.d)?;
    Ok(g.dropout(o, rate, training, rng)?)
}

/// Greedy decoding against an explicit parameter store, dropout disabled.
/// The document is truncated to `max_doc_len`, the query to `max_query_len`.
pub fn decode_once(
    params: &Parameters,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    doc_tokens: &[String],
    query_tokens: &[String],
) -> Result<DecodeResult, ModelError> {
    let doc = &doc_tokens[..doc_tokens.len().min(cfg.max_doc_len)];
    let query = &query_tokens[..query_tokens.len().min(cfg.max_query_len)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let b = Binding::new(&mut g, params);
    let o = build_memory(&mut g, &b, vocab, cfg, doc, query, false, &mut rng)?;
    pointer_decode_greedy(&mut g, &b, o, doc, cfg.max_answer_len)
}

/// A frozen model: config, vocabulary, and parameters, ready for inference.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Parameters,
}

impl Model {
    /// Fresh random parameters seeded from `config.seed`.
    pub fn init(config: ModelConfig, vocab: Vocabulary) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Parameters::init(&config, &vocab, &mut rng);
        Model {
            config,
            vocab,
            params,
        }
    }

    /// Wraps loaded parameters, validating every shape against the config
    /// and vocabulary.
    pub fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        params: Parameters,
    ) -> Result<Self, ModelError> {
        let words = params.get("embed/word")?.shape()[0];
        if words != vocab.word_count() {
            return Err(ModelError::VocabMismatch {
                what: "word embedding rows".into(),
                expected: vocab.word_count(),
                got: words,
            });
        }
        let chars = params.get("embed/char")?.shape()[0];
        if chars != vocab.char_count() {
            return Err(ModelError::VocabMismatch {
                what: "char embedding rows".into(),
                expected: vocab.char_count(),
                got: chars,
            });
        }
        params.validate_shapes(&config, &vocab)?;
        Ok(Model {
            config,
            vocab,
            params,
        })
    }

    fn truncate<'a>(&self, tokens: &'a [String], max: usize) -> &'a [String] {
        &tokens[..tokens.len().min(max)]
    }

    /// Greedy answer decoding for one query, dropout disabled. The document
    /// is truncated to `max_doc_len`, the query to `max_query_len`.
    pub fn decode(
        &self,
        doc_tokens: &[String],
        query_tokens: &[String],
    ) -> Result<DecodeResult, ModelError> {
        decode_once(&self.params, &self.vocab, &self.config, doc_tokens, query_tokens)
    }

    /// Teacher-forced decoding of a fixed path, dropout disabled.
    pub fn forced(
        &self,
        doc_tokens: &[String],
        query_tokens: &[String],
        targets: &[usize],
    ) -> Result<ForcedDecode, ModelError> {
        let doc = self.truncate(doc_tokens, self.config.max_doc_len);
        let query = self.truncate(query_tokens, self.config.max_query_len);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let b = Binding::new(&mut g, &self.params);
        let o = build_memory(
            &mut g,
            &b,
            &self.vocab,
            &self.config,
            doc,
            query,
            false,
            &mut rng,
        )?;
        let (_, forced) = pointer_decode_train(&mut g, &b, o, targets)?;
        Ok(forced)
    }
}
