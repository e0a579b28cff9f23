//! Pointer-network sequence decoder over self-matched memory rows.
//!
//! The memory is extended with a learned eos vector at slot `n`; selecting
//! that slot terminates decoding. The attention-context sum feeding the
//! decoder LSTM excludes the eos slot.

use crate::graph::{Graph, NodeId};
use crate::model::params::Binding;
use crate::model::ModelError;
use crate::tensor::argmax_lowest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Eos,
    MaxLen,
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    /// Document positions chosen per step, each in `[0, n)`.
    pub answer_indices: Vec<usize>,
    pub answer_tokens: Vec<String>,
    /// Chosen-step probabilities over the answer steps. For an immediate-eos
    /// decode this holds the single eos probability, so the score products
    /// below stay consistent.
    pub step_probs: Vec<f64>,
    /// Full n+1-slot distribution of every executed step, including the
    /// terminating eos step when decoding stopped on eos.
    pub distributions: Vec<Vec<f64>>,
    /// Product of `step_probs`.
    pub score_mul: f64,
    /// Mean of `step_probs`.
    pub score_avg: f64,
    pub stopped_by: StopReason,
}

#[derive(Debug, Clone)]
pub struct ForcedDecode {
    /// Teacher-forced loss: `-sum_t log beta^t[y_t] - log beta^{L+1}[eos]`.
    pub loss: f64,
    /// Distributions of the L pointing steps plus the final eos step.
    pub distributions: Vec<Vec<f64>>,
    /// `-log beta^{L+1}[eos]`, the appended supervision term.
    pub eos_nll: f64,
}

/// Negative log likelihood of a pointed path plus its eos step, computed
/// from plain per-step distributions.
pub fn sequence_nll(distributions: &[Vec<f64>], targets: &[usize], eos_slot: usize) -> f64 {
    let mut nll = 0.0;
    for (t, y) in targets.iter().enumerate() {
        nll -= distributions[t][*y].ln();
    }
    nll -= distributions[targets.len()][eos_slot].ln();
    nll
}

struct PointerDecoder {
    memory_keys: NodeId,
    o: NodeId,
    n: usize,
    w_state: NodeId,
    w_score: NodeId,
    lstm_w: NodeId,
    lstm_b: NodeId,
    hidden: usize,
    p: NodeId,
    cell: NodeId,
}

impl PointerDecoder {
    fn new(g: &mut Graph, b: &Binding, o: NodeId) -> Result<Self, ModelError> {
        let n = g.shape(o)[0];
        let width = g.shape(o)[1];
        let eos = b.id("decoder/eos")?;
        let eos_row = g.reshape(eos, vec![1, width])?;
        let memory = g.concat_rows(&[o, eos_row])?;
        let memory_keys = g.matmul(memory, b.id("decoder/w_mem")?)?;
        // p_0 is the last memory row o_n; the LSTM cell state starts at zero
        let p = g.row(o, n - 1)?;
        let cell = g.constant(vec![1, width], vec![0.0; width])?;
        Ok(PointerDecoder {
            memory_keys,
            o,
            n,
            w_state: b.id("decoder/w_state")?,
            w_score: b.id("decoder/w_score")?,
            lstm_w: b.id("decoder/lstm/w")?,
            lstm_b: b.id("decoder/lstm/b")?,
            hidden: width,
            p,
            cell,
        })
    }

    /// Distribution over n+1 slots for the current state.
    fn step_distribution(&self, g: &mut Graph) -> Result<NodeId, ModelError> {
        let query = g.matmul(self.p, self.w_state)?;
        let scores = g.attn_scores(self.memory_keys, query, self.w_score)?;
        Ok(g.softmax_rows(scores)?)
    }

    /// Advances the LSTM state with the attention context of `beta`,
    /// excluding the eos slot from the context sum.
    fn advance(&mut self, g: &mut Graph, beta: NodeId) -> Result<(), ModelError> {
        let pointing = g.slice_cols(beta, 0, self.n)?;
        let context = g.matmul(pointing, self.o)?;
        let hid = self.hidden;
        let cat = g.concat_cols(&[context, self.p])?;
        let z = g.matmul(cat, self.lstm_w)?;
        let z = g.add_row(z, self.lstm_b)?;
        let i = g.slice_cols(z, 0, hid)?;
        let i = g.sigmoid(i);
        let f = g.slice_cols(z, hid, hid)?;
        let f = g.sigmoid(f);
        let u = g.slice_cols(z, 2 * hid, hid)?;
        let u = g.tanh(u);
        let o = g.slice_cols(z, 3 * hid, hid)?;
        let o = g.sigmoid(o);
        let fc = g.mul(f, self.cell)?;
        let iu = g.mul(i, u)?;
        let c2 = g.add(fc, iu)?;
        let tc = g.tanh(c2);
        self.p = g.mul(o, tc)?;
        self.cell = c2;
        Ok(())
    }
}

/// Teacher-forced decoding: returns the scalar loss node for backprop plus
/// the realized per-step distributions. An eos target is appended at step
/// L+1 so the decoder learns to stop.
pub fn pointer_decode_train(
    g: &mut Graph,
    b: &Binding,
    o: NodeId,
    targets: &[usize],
) -> Result<(NodeId, ForcedDecode), ModelError> {
    let n = g.shape(o)[0];
    for &y in targets {
        if y >= n {
            return Err(ModelError::TargetOutOfRange { index: y, len: n });
        }
    }
    let mut dec = PointerDecoder::new(g, b, o)?;
    let mut nll_terms = Vec::with_capacity(targets.len() + 1);
    let mut distributions = Vec::with_capacity(targets.len() + 1);
    for step in 0..=targets.len() {
        let beta = dec.step_distribution(g)?;
        distributions.push(g.value(beta).to_vec());
        let slot = if step < targets.len() { targets[step] } else { n };
        let picked = g.pick(beta, slot)?;
        let lnp = g.ln(picked)?;
        nll_terms.push(g.affine(lnp, -1.0, 0.0));
        if step < targets.len() {
            dec.advance(g, beta)?;
        }
    }
    let loss = g.add_n(&nll_terms)?;
    let eos_nll = -distributions[targets.len()][n].ln();
    let forced = ForcedDecode {
        loss: g.value(loss)[0],
        distributions,
        eos_nll,
    };
    Ok((loss, forced))
}

/// Greedy decoding: argmax per step (ties to the lowest index), stopping on
/// the eos slot or after `max_answer_len` steps.
pub fn pointer_decode_greedy(
    g: &mut Graph,
    b: &Binding,
    o: NodeId,
    doc_tokens: &[String],
    max_answer_len: usize,
) -> Result<DecodeResult, ModelError> {
    let n = g.shape(o)[0];
    let mut dec = PointerDecoder::new(g, b, o)?;
    let mut indices = Vec::new();
    let mut step_probs = Vec::new();
    let mut distributions = Vec::new();
    let stopped_by = loop {
        let beta = dec.step_distribution(g)?;
        let dist = g.value(beta).to_vec();
        let choice = argmax_lowest(&dist);
        distributions.push(dist.clone());
        if choice == n {
            if indices.is_empty() {
                // immediate eos: the eos probability is the whole score
                step_probs.push(dist[n]);
            }
            break StopReason::Eos;
        }
        indices.push(choice);
        step_probs.push(dist[choice]);
        if indices.len() >= max_answer_len {
            break StopReason::MaxLen;
        }
        dec.advance(g, beta)?;
    };
    let score_mul = step_probs.iter().product();
    let score_avg = step_probs.iter().sum::<f64>() / step_probs.len() as f64;
    let answer_tokens = indices.iter().map(|&i| doc_tokens[i].clone()).collect();
    Ok(DecodeResult {
        answer_indices: indices,
        answer_tokens,
        step_probs,
        distributions,
        score_mul,
        score_avg,
        stopped_by,
    })
}

impl DecodeResult {
    /// True when the very first step selected eos (no answer produced).
    pub fn is_immediate_eos(&self) -> bool {
        self.answer_indices.is_empty()
    }
}
