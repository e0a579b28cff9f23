//! Graph-building blocks of the QA network: token embedding with a char
//! CNN, highway layer, BiLSTM encoders, attention flow, and self-matching.

use crate::config::ModelConfig;
use crate::graph::{Graph, NodeId};
use crate::model::params::Binding;
use crate::model::ModelError;
use crate::vocab::Vocabulary;

/// Embeds tokens as `[word embedding ; char-CNN feature]` rows, `(n, d + F)`.
///
/// The char CNN embeds characters, convolves `char_filters` filters of width
/// `char_width` over time, and max-pools over time. Words shorter than the
/// filter width are padded with the pad character.
pub fn embed_tokens(
    g: &mut Graph,
    b: &Binding,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    tokens: &[String],
    max_len: usize,
) -> Result<NodeId, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyTokens);
    }
    if tokens.len() > max_len {
        return Err(ModelError::TooLong {
            len: tokens.len(),
            max: max_len,
        });
    }
    let word_ids: Vec<usize> = tokens.iter().map(|t| vocab.word_id(t)).collect();
    let words = g.gather_rows(b.id("embed/word")?, &word_ids)?;

    let char_table = b.id("embed/char")?;
    let filters = b.id("charcnn/filters")?;
    let bias = b.id("charcnn/bias")?;
    let mut char_rows = Vec::with_capacity(tokens.len());
    for token in tokens {
        let char_ids = vocab.char_ids_padded(token, cfg.char_width);
        let embedded = g.gather_rows(char_table, &char_ids)?;
        let windows = g.im2row(embedded, cfg.char_width)?;
        let conv = g.matmul(windows, filters)?;
        let conv = g.add_row(conv, bias)?;
        let pooled = g.max_over_rows(conv)?;
        char_rows.push(g.reshape(pooled, vec![1, cfg.char_filters])?);
    }
    let chars = g.concat_rows(&char_rows)?;
    Ok(g.concat_cols(&[words, chars])?)
}

/// Gated highway over embedding rows, producing `(n, d)`:
/// `u = g * relu(W_x x + b_x) + (1 - g) * (P x)` with `g = sigmoid(W_g x + b_g)`.
///
/// The learned projection `P` brings the carry path from embedding width
/// down to `d` so the gate and transform operate in the same space.
pub fn highway(g: &mut Graph, b: &Binding, x: NodeId) -> Result<NodeId, ModelError> {
    let carry = g.matmul(x, b.id("highway/proj")?)?;
    let gate = g.matmul(x, b.id("highway/w_gate")?)?;
    let gate = g.add_row(gate, b.id("highway/b_gate")?)?;
    let gate = g.sigmoid(gate);
    let trans = g.matmul(x, b.id("highway/w_trans")?)?;
    let trans = g.add_row(trans, b.id("highway/b_trans")?)?;
    let trans = g.relu(trans);
    let gated = g.mul(gate, trans)?;
    let inverse = g.affine(gate, -1.0, 1.0);
    let carried = g.mul(inverse, carry)?;
    Ok(g.add(gated, carried)?)
}

struct LstmCell {
    w: NodeId,
    b: NodeId,
    hidden: usize,
}

impl LstmCell {
    /// One step; gate order (i, f, g, o), zero initial states supplied by
    /// the caller. Returns (h', c').
    fn step(
        &self,
        g: &mut Graph,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId), ModelError> {
        let hid = self.hidden;
        let cat = g.concat_cols(&[x, h])?;
        let z = g.matmul(cat, self.w)?;
        let z = g.add_row(z, self.b)?;
        let i = g.slice_cols(z, 0, hid)?;
        let i = g.sigmoid(i);
        let f = g.slice_cols(z, hid, hid)?;
        let f = g.sigmoid(f);
        let u = g.slice_cols(z, 2 * hid, hid)?;
        let u = g.tanh(u);
        let o = g.slice_cols(z, 3 * hid, hid)?;
        let o = g.sigmoid(o);
        let fc = g.mul(f, c)?;
        let iu = g.mul(i, u)?;
        let c2 = g.add(fc, iu)?;
        let tc = g.tanh(c2);
        let h2 = g.mul(o, tc)?;
        Ok((h2, c2))
    }

    fn run(
        &self,
        g: &mut Graph,
        seq: NodeId,
        reverse: bool,
    ) -> Result<Vec<NodeId>, ModelError> {
        let n = g.shape(seq)[0];
        let mut h = g.constant(vec![1, self.hidden], vec![0.0; self.hidden])?;
        let mut c = g.constant(vec![1, self.hidden], vec![0.0; self.hidden])?;
        let mut outputs = vec![h; n];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let x = g.row(seq, t)?;
            let (h2, c2) = self.step(g, x, h, c)?;
            h = h2;
            c = c2;
            outputs[t] = h;
        }
        Ok(outputs)
    }
}

/// Bidirectional LSTM over `(n, in)` rows; concatenated per-position outputs
/// `(n, 2 * hidden)` with zero initial states in both directions.
pub fn bilstm_encode(
    g: &mut Graph,
    b: &Binding,
    prefix: &str,
    seq: NodeId,
    hidden: usize,
) -> Result<NodeId, ModelError> {
    if g.shape(seq)[0] == 0 {
        return Err(ModelError::EmptyTokens);
    }
    let fwd = LstmCell {
        w: b.id(&format!("{prefix}/fwd/w"))?,
        b: b.id(&format!("{prefix}/fwd/b"))?,
        hidden,
    };
    let bwd = LstmCell {
        w: b.id(&format!("{prefix}/bwd/w"))?,
        b: b.id(&format!("{prefix}/bwd/b"))?,
        hidden,
    };
    let fwd_rows = fwd.run(g, seq, false)?;
    let bwd_rows = bwd.run(g, seq, true)?;
    let fwd_all = g.concat_rows(&fwd_rows)?;
    let bwd_all = g.concat_rows(&bwd_rows)?;
    Ok(g.concat_cols(&[fwd_all, bwd_all])?)
}

/// Attention flow between context rows `U (n, 2d)` and query rows `V (m, 2d)`,
/// yielding query-aware rows `(n, 8d)`.
///
/// Trilinear similarity `S[t][j] = w . [u_t; v_j; u_t * v_j]`, context-to-query
/// attention from row softmaxes of S, query-to-context attention from the
/// softmax over per-row maxima, composed as `[u; u~; u * u~; u * u^]`.
pub fn attention_flow(
    g: &mut Graph,
    b: &Binding,
    u: NodeId,
    v: NodeId,
) -> Result<NodeId, ModelError> {
    let width = g.shape(u)[1];
    let w_sim = b.id("attn/w_sim")?;
    let w_u = g.slice_cols(w_sim, 0, width)?;
    let w_v = g.slice_cols(w_sim, width, width)?;
    let w_uv = g.slice_cols(w_sim, 2 * width, width)?;

    // S = (U * w_uv) V^T + (U w_u^T) 1^T + 1 (V w_v^T)^T
    let scaled = g.mul_row(u, w_uv)?;
    let vt = g.transpose(v);
    let s = g.matmul(scaled, vt)?;
    let w_u_col = g.transpose(w_u);
    let u_part = g.matmul(u, w_u_col)?;
    let s = g.add_col(s, u_part)?;
    let w_v_col = g.transpose(w_v);
    let v_part = g.matmul(v, w_v_col)?;
    let s = g.add_row(s, v_part)?;

    // context-to-query
    let att = g.softmax_rows(s)?;
    let u_tilde = g.matmul(att, v)?;

    // query-to-context: softmax over per-row maxima of S
    let st = g.transpose(s);
    let row_max = g.max_over_rows(st)?;
    let q2c = g.softmax_rows(row_max)?;
    let u_hat = g.matmul(q2c, u)?;

    let u_ut = g.mul(u, u_tilde)?;
    let u_uh = g.mul_row(u, u_hat)?;
    Ok(g.concat_cols(&[u, u_tilde, u_ut, u_uh])?)
}

/// Self-matching over query-aware rows `H (n, 8d)`:
/// scores `w . tanh(W_key h_j + W_query h_t)`, attention context
/// `c_t = sum_i a_i^t h_i`, then a BiLSTM over `[h_t; c_t]` rows -> `(n, 2d)`.
pub fn self_match(
    g: &mut Graph,
    b: &Binding,
    h: NodeId,
    d: usize,
) -> Result<NodeId, ModelError> {
    let keys = g.matmul(h, b.id("selfmatch/w_key")?)?;
    let queries = g.matmul(h, b.id("selfmatch/w_query")?)?;
    let scores = g.attn_scores(keys, queries, b.id("selfmatch/w_score")?)?;
    let att = g.softmax_rows(scores)?;
    let context = g.matmul(att, h)?;
    let combined = g.concat_cols(&[h, context])?;
    bilstm_encode(g, b, "selfmatch", combined, d)
}
