//! Forward and reverse-mode passes of the attention encoder-decoder.
//!
//! GRU (gate blocks stacked update, reset, candidate):
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r * h) + b_h)
//! h' = (1 - z) * h + z * h~
//! ```
//!
//! The source is framed with a trailing `</s>` and read by a forward and a
//! backward GRU; annotation `h_j` concatenates both states at position `j`.
//! The decoder starts from `s_0 = tanh(W_init hb_0 + b_init)` where `hb_0` is
//! the backward state at the first source position. Step `i` consumes the
//! previous target token `y` and state `s`:
//!
//! ```text
//! e_j   = v_a . tanh(W_a s + U_a h_j)
//! alpha = softmax(e)
//! c     = sum_j alpha_j h_j
//! s'    = GRU([emb(y); c], s)
//! p     = softmax(W_o [s'; c; emb(y)] + b_o)
//! ```

use super::params::{GruParams, ModelParams, Tensor};
use crate::textcore::{SentencePair, TokenId, BOS, EOS};
use crate::{Error, Result};

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[i] = W[rows.start + i] . x`
fn matvec_rows(w: &Tensor, rows: std::ops::Range<usize>, x: &[f64], out: &mut [f64]) {
    for (o, r) in out.iter_mut().zip(rows) {
        *o = dot(w.row(r), x);
    }
}

/// `out += W[rows]^T g`
fn add_matvec_t(w: &Tensor, rows: std::ops::Range<usize>, g: &[f64], out: &mut [f64]) {
    for (gi, r) in g.iter().zip(rows) {
        if *gi != 0.0 {
            axpy(*gi, w.row(r), out);
        }
    }
}

/// `dW[rows] += g x^T`
fn add_outer(dw: &mut Tensor, rows: std::ops::Range<usize>, g: &[f64], x: &[f64]) {
    for (gi, r) in g.iter().zip(rows) {
        if *gi != 0.0 {
            axpy(*gi, x, dw.row_mut(r));
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    h: Vec<f64>,
}

fn gru_forward(p: &GruParams, x: Vec<f64>, h_prev: Vec<f64>) -> GruStep {
    let h = h_prev.len();
    let mut a = vec![0.0; 3 * h];
    matvec_rows(&p.input, 0..3 * h, &x, &mut a);
    let bias = p.bias.data();
    let mut u = vec![0.0; 2 * h];
    matvec_rows(&p.recurrent, 0..2 * h, &h_prev, &mut u);
    let mut z = vec![0.0; h];
    let mut r = vec![0.0; h];
    for k in 0..h {
        z[k] = sigmoid(a[k] + u[k] + bias[k]);
        r[k] = sigmoid(a[h + k] + u[h + k] + bias[h + k]);
    }
    let rh: Vec<f64> = r.iter().zip(&h_prev).map(|(r, h)| r * h).collect();
    let mut cand = vec![0.0; h];
    matvec_rows(&p.recurrent, 2 * h..3 * h, &rh, &mut cand);
    for k in 0..h {
        cand[k] = (cand[k] + a[2 * h + k] + bias[2 * h + k]).tanh();
    }
    let new_h = (0..h)
        .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * cand[k])
        .collect();
    GruStep {
        x,
        h_prev,
        z,
        r,
        cand,
        h: new_h,
    }
}

/// Accumulates parameter gradients for one GRU step and adds the input and
/// previous-state gradients into `dx` and `dh_prev`.
fn gru_backward(p: &GruParams, g: &mut GruParams, st: &GruStep, dh: &[f64], dx: &mut [f64], dh_prev: &mut [f64]) {
    let h = dh.len();
    let mut da = vec![0.0; 3 * h];
    for k in 0..h {
        let dz = dh[k] * (st.cand[k] - st.h_prev[k]);
        let dcand = dh[k] * st.z[k];
        dh_prev[k] += dh[k] * (1.0 - st.z[k]);
        da[k] = dz * st.z[k] * (1.0 - st.z[k]);
        da[2 * h + k] = dcand * (1.0 - st.cand[k] * st.cand[k]);
    }
    let mut drh = vec![0.0; h];
    add_matvec_t(&p.recurrent, 2 * h..3 * h, &da[2 * h..], &mut drh);
    for k in 0..h {
        let dr = drh[k] * st.h_prev[k];
        dh_prev[k] += drh[k] * st.r[k];
        da[h + k] = dr * st.r[k] * (1.0 - st.r[k]);
    }
    let rh: Vec<f64> = st.r.iter().zip(&st.h_prev).map(|(r, h)| r * h).collect();

    add_outer(&mut g.input, 0..3 * h, &da, &st.x);
    axpy(1.0, &da, g.bias.data_mut());
    add_outer(&mut g.recurrent, 0..2 * h, &da[..2 * h], &st.h_prev);
    add_outer(&mut g.recurrent, 2 * h..3 * h, &da[2 * h..], &rh);
    add_matvec_t(&p.input, 0..3 * h, &da, dx);
    add_matvec_t(&p.recurrent, 0..2 * h, &da[..2 * h], dh_prev);
}

/// Encoder output reused by every decoder step of one source sentence.
#[derive(Debug, Clone)]
pub struct EncodedSource {
    len: usize,
    /// `len x 2H` annotations.
    annotations: Vec<f64>,
    /// `len x H` precomputed `U_a h_j`.
    projected: Vec<f64>,
    init_state: Vec<f64>,
}

impl EncodedSource {
    /// Number of encoded positions, including the trailing `</s>`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.init_state.clone()
    }
}

struct EncoderTrace {
    tokens: Vec<TokenId>,
    fwd: Vec<GruStep>,
    /// Indexed by source position.
    bwd: Vec<GruStep>,
}

fn check_ids(ids: &[TokenId], limit: usize, side: &str) -> Result<()> {
    match ids.iter().find(|&&t| t as usize >= limit) {
        Some(bad) => Err(Error::Corruption(format!(
            "{side} token id {bad} out of range for vocabulary of size {limit}"
        ))),
        None => Ok(()),
    }
}

fn encode_traced(params: &ModelParams, source: &[TokenId]) -> Result<(EncodedSource, EncoderTrace)> {
    let dims = params.dims();
    if source.is_empty() {
        return Err(Error::Data("cannot encode an empty source sentence".into()));
    }
    check_ids(source, dims.src_vocab, "source")?;
    let h = dims.hidden_dim;
    let mut tokens = source.to_vec();
    tokens.push(EOS);
    let n = tokens.len();

    let mut fwd = Vec::with_capacity(n);
    let mut state = vec![0.0; h];
    for &t in &tokens {
        let x = params.src_embed.row(t as usize).to_vec();
        let st = gru_forward(&params.enc_fwd, x, state);
        state = st.h.clone();
        fwd.push(st);
    }
    let mut bwd_rev = Vec::with_capacity(n);
    let mut state = vec![0.0; h];
    for &t in tokens.iter().rev() {
        let x = params.src_embed.row(t as usize).to_vec();
        let st = gru_forward(&params.enc_bwd, x, state);
        state = st.h.clone();
        bwd_rev.push(st);
    }
    bwd_rev.reverse();
    let bwd = bwd_rev;

    let mut annotations = vec![0.0; n * 2 * h];
    for j in 0..n {
        annotations[j * 2 * h..j * 2 * h + h].copy_from_slice(&fwd[j].h);
        annotations[j * 2 * h + h..(j + 1) * 2 * h].copy_from_slice(&bwd[j].h);
    }
    let mut projected = vec![0.0; n * h];
    for j in 0..n {
        matvec_rows(
            &params.att_annotation,
            0..h,
            &annotations[j * 2 * h..(j + 1) * 2 * h],
            &mut projected[j * h..(j + 1) * h],
        );
    }
    let mut init_state = vec![0.0; h];
    matvec_rows(&params.init_weight, 0..h, &bwd[0].h, &mut init_state);
    for (s, b) in init_state.iter_mut().zip(params.init_bias.data()) {
        *s = (*s + b).tanh();
    }
    Ok((
        EncodedSource {
            len: n,
            annotations,
            projected,
            init_state,
        },
        EncoderTrace { tokens, fwd, bwd },
    ))
}

struct DecoderStep {
    prev_token: TokenId,
    s_prev: Vec<f64>,
    /// `len x H` values of `tanh(W_a s + U_a h_j)`.
    att_tanh: Vec<f64>,
    alpha: Vec<f64>,
    gru: GruStep,
    readout: Vec<f64>,
    probs: Vec<f64>,
}

fn decoder_step(params: &ModelParams, enc: &EncodedSource, s_prev: Vec<f64>, prev_token: TokenId) -> DecoderStep {
    let dims = params.dims();
    let (h, e) = (dims.hidden_dim, dims.embed_dim);
    let ann = 2 * h;
    let n = enc.len;

    let mut wa = vec![0.0; h];
    matvec_rows(&params.att_state, 0..h, &s_prev, &mut wa);
    let v = params.att_score.data();
    let mut att_tanh = vec![0.0; n * h];
    let mut alpha = vec![0.0; n];
    for j in 0..n {
        let proj = &enc.projected[j * h..(j + 1) * h];
        let a = &mut att_tanh[j * h..(j + 1) * h];
        for k in 0..h {
            a[k] = (wa[k] + proj[k]).tanh();
        }
        alpha[j] = dot(v, a);
    }
    softmax_in_place(&mut alpha);
    let mut context = vec![0.0; ann];
    for j in 0..n {
        axpy(alpha[j], &enc.annotations[j * ann..(j + 1) * ann], &mut context);
    }

    let mut x = Vec::with_capacity(e + ann);
    x.extend_from_slice(params.tgt_embed.row(prev_token as usize));
    x.extend_from_slice(&context);
    let gru = gru_forward(&params.dec, x, s_prev.clone());

    let mut readout = Vec::with_capacity(dims.readout_dim());
    readout.extend_from_slice(&gru.h);
    readout.extend_from_slice(&context);
    readout.extend_from_slice(params.tgt_embed.row(prev_token as usize));
    let mut probs = vec![0.0; dims.tgt_vocab];
    matvec_rows(&params.out_weight, 0..dims.tgt_vocab, &readout, &mut probs);
    for (p, b) in probs.iter_mut().zip(params.out_bias.data()) {
        *p += b;
    }
    softmax_in_place(&mut probs);
    DecoderStep {
        prev_token,
        s_prev,
        att_tanh,
        alpha,
        gru,
        readout,
        probs,
    }
}

impl ModelParams {
    /// Runs the encoder over `source` (a trailing `</s>` is added).
    pub fn encode(&self, source: &[TokenId]) -> Result<EncodedSource> {
        Ok(encode_traced(self, source)?.0)
    }

    /// One decoder step: distribution over the next target token and the new
    /// decoder state, given the previous token (`<s>` at the first step).
    pub fn step(&self, enc: &EncodedSource, state: &[f64], prev_token: TokenId) -> Result<(Vec<f64>, Vec<f64>)> {
        check_ids(&[prev_token], self.dims().tgt_vocab, "target")?;
        let st = decoder_step(self, enc, state.to_vec(), prev_token);
        Ok((st.probs, st.gru.h))
    }
}

/// Next-token distributions for a teacher-forced prefix.
///
/// Returns `prefix.len() + 1` distributions: step `i` conditions on `<s>`
/// followed by `prefix[..i]`.
pub fn forward_probs(params: &ModelParams, source: &[TokenId], target_prefix: &[TokenId]) -> Result<Vec<Vec<f64>>> {
    check_ids(target_prefix, params.dims().tgt_vocab, "target")?;
    let enc = params.encode(source)?;
    let mut state = enc.initial_state();
    let mut out = Vec::with_capacity(target_prefix.len() + 1);
    let mut prev = BOS;
    for i in 0..=target_prefix.len() {
        let st = decoder_step(params, &enc, state, prev);
        state = st.gru.h;
        out.push(st.probs);
        if let Some(&t) = target_prefix.get(i) {
            prev = t;
        }
    }
    Ok(out)
}

/// Summed negative log-likelihood of `target` followed by `</s>`.
pub fn sentence_nll(params: &ModelParams, source: &[TokenId], target: &[TokenId]) -> Result<f64> {
    let dists = forward_probs(params, source, target)?;
    Ok(dists
        .iter()
        .zip(target.iter().chain(std::iter::once(&EOS)))
        .map(|(p, &t)| -p[t as usize].ln())
        .sum())
}

/// Forward and backward pass for one pair; gradients of `scale * NLL` are
/// added to `grads`. Returns the unscaled NLL.
fn accumulate_pair(params: &ModelParams, pair: &SentencePair, scale: f64, grads: &mut ModelParams) -> Result<f64> {
    let dims = params.dims();
    check_ids(&pair.target, dims.tgt_vocab, "target")?;
    let (h, e) = (dims.hidden_dim, dims.embed_dim);
    let ann = 2 * h;
    let (enc, trace) = encode_traced(params, &pair.source)?;
    let n = enc.len;

    let inputs: Vec<TokenId> = std::iter::once(BOS).chain(pair.target.iter().copied()).collect();
    let outputs: Vec<TokenId> = pair.target.iter().copied().chain(std::iter::once(EOS)).collect();
    let mut steps = Vec::with_capacity(inputs.len());
    let mut state = enc.initial_state();
    let mut nll = 0.0;
    for (&prev, &gold) in inputs.iter().zip(&outputs) {
        let st = decoder_step(params, &enc, state, prev);
        nll -= st.probs[gold as usize].ln();
        state = st.gru.h.clone();
        steps.push(st);
    }

    let mut d_ann = vec![0.0; n * ann];
    let mut d_proj = vec![0.0; n * h];
    let mut ds_next = vec![0.0; h];
    let v = params.att_score.data();
    for (st, &gold) in steps.iter().zip(&outputs).rev() {
        let mut dlogits: Vec<f64> = st.probs.iter().map(|p| p * scale).collect();
        dlogits[gold as usize] -= scale;
        axpy(1.0, &dlogits, grads.out_bias.data_mut());
        add_outer(&mut grads.out_weight, 0..dims.tgt_vocab, &dlogits, &st.readout);
        let mut d_readout = vec![0.0; dims.readout_dim()];
        add_matvec_t(&params.out_weight, 0..dims.tgt_vocab, &dlogits, &mut d_readout);

        let mut ds = d_readout[..h].to_vec();
        axpy(1.0, &ds_next, &mut ds);
        let mut dc = d_readout[h..h + ann].to_vec();
        let mut de = d_readout[h + ann..].to_vec();

        let mut dx = vec![0.0; e + ann];
        let mut ds_prev = vec![0.0; h];
        gru_backward(&params.dec, &mut grads.dec, &st.gru, &ds, &mut dx, &mut ds_prev);
        axpy(1.0, &dx[..e], &mut de);
        axpy(1.0, &dx[e..], &mut dc);
        axpy(1.0, &de, grads.tgt_embed.row_mut(st.prev_token as usize));

        // attention
        let mut dalpha = vec![0.0; n];
        for j in 0..n {
            let hj = &enc.annotations[j * ann..(j + 1) * ann];
            dalpha[j] = dot(&dc, hj);
            axpy(st.alpha[j], &dc, &mut d_ann[j * ann..(j + 1) * ann]);
        }
        let mean = dot(&st.alpha, &dalpha);
        let mut dwa = vec![0.0; h];
        for j in 0..n {
            let dscore = st.alpha[j] * (dalpha[j] - mean);
            if dscore == 0.0 {
                continue;
            }
            let a = &st.att_tanh[j * h..(j + 1) * h];
            axpy(dscore, a, grads.att_score.data_mut());
            let dp = &mut d_proj[j * h..(j + 1) * h];
            for k in 0..h {
                let dpre = dscore * v[k] * (1.0 - a[k] * a[k]);
                dwa[k] += dpre;
                dp[k] += dpre;
            }
        }
        add_outer(&mut grads.att_state, 0..h, &dwa, &st.s_prev);
        add_matvec_t(&params.att_state, 0..h, &dwa, &mut ds_prev);
        ds_next = ds_prev;
    }

    // initial decoder state
    let mut d_hb0 = vec![0.0; h];
    let dpre: Vec<f64> = ds_next
        .iter()
        .zip(&enc.init_state)
        .map(|(d, s)| d * (1.0 - s * s))
        .collect();
    axpy(1.0, &dpre, grads.init_bias.data_mut());
    add_outer(&mut grads.init_weight, 0..h, &dpre, &trace.bwd[0].h);
    add_matvec_t(&params.init_weight, 0..h, &dpre, &mut d_hb0);

    for j in 0..n {
        let hj = &enc.annotations[j * ann..(j + 1) * ann];
        let dp = &d_proj[j * h..(j + 1) * h];
        add_outer(&mut grads.att_annotation, 0..h, dp, hj);
        add_matvec_t(&params.att_annotation, 0..h, dp, &mut d_ann[j * ann..(j + 1) * ann]);
    }

    let mut carry = vec![0.0; h];
    for t in (0..n).rev() {
        let mut dh = d_ann[t * ann..t * ann + h].to_vec();
        axpy(1.0, &carry, &mut dh);
        let mut dx = vec![0.0; e];
        let mut dh_prev = vec![0.0; h];
        gru_backward(&params.enc_fwd, &mut grads.enc_fwd, &trace.fwd[t], &dh, &mut dx, &mut dh_prev);
        axpy(1.0, &dx, grads.src_embed.row_mut(trace.tokens[t] as usize));
        carry = dh_prev;
    }
    let mut carry = d_hb0;
    for t in 0..n {
        let mut dh = d_ann[t * ann + h..(t + 1) * ann].to_vec();
        axpy(1.0, &carry, &mut dh);
        let mut dx = vec![0.0; e];
        let mut dh_prev = vec![0.0; h];
        gru_backward(&params.enc_bwd, &mut grads.enc_bwd, &trace.bwd[t], &dh, &mut dx, &mut dh_prev);
        axpy(1.0, &dx, grads.src_embed.row_mut(trace.tokens[t] as usize));
        carry = dh_prev;
    }
    Ok(nll)
}

/// Number of predicted tokens for a pair: the target plus `</s>`.
pub(crate) fn predicted_tokens(pair: &SentencePair) -> usize {
    pair.target.len() + 1
}

/// Mean per-token cross-entropy over a batch and its exact gradient.
pub fn loss_and_gradients(params: &ModelParams, batch: &[SentencePair]) -> Result<(f64, ModelParams)> {
    let mut grads = ModelParams::zeros(params.dims());
    let loss = loss_and_gradients_into(params, batch, &mut grads)?;
    Ok((loss, grads))
}

/// Like [`loss_and_gradients`] but reuses `grads`, which is zeroed first.
pub fn loss_and_gradients_into(params: &ModelParams, batch: &[SentencePair], grads: &mut ModelParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("cannot compute a loss on an empty batch".into()));
    }
    grads.fill(0.0);
    let tokens: usize = batch.iter().map(predicted_tokens).sum();
    let scale = 1.0 / tokens as f64;
    let mut nll = 0.0;
    for pair in batch {
        nll += accumulate_pair(params, pair, scale, grads)?;
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("grad:{name}")));
    }
    let loss = nll * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnmodel::ModelDims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar GRU for hidden size 1: `w`/`u`/`b` are the update, reset and
    /// candidate rows.
    fn gru1(w: &[&[f64]; 3], u: [f64; 3], b: [f64; 3], x: &[f64], h: f64) -> f64 {
        let lin = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let z = sig(lin(w[0]) + u[0] * h + b[0]);
        let r = sig(lin(w[1]) + u[1] * h + b[1]);
        let c = (lin(w[2]) + u[2] * r * h + b[2]).tanh();
        (1.0 - z) * h + z * c
    }

    fn tiny_params() -> ModelParams {
        let dims = ModelDims::new(4, 4, 1, 1).unwrap();
        let mut p = ModelParams::zeros(dims);
        for (k, (_, t)) in p.tensors_mut().into_iter().enumerate() {
            for (i, x) in t.data_mut().iter_mut().enumerate() {
                let v = 0.05 * ((3 * k + 7 * i) % 11) as f64 - 0.25;
                *x = v;
            }
        }
        p
    }

    fn gru_rows(g: &GruParams) -> ([&[f64]; 3], [f64; 3], [f64; 3]) {
        let u = g.recurrent.data();
        let b = g.bias.data();
        (
            [g.input.row(0), g.input.row(1), g.input.row(2)],
            [u[0], u[1], u[2]],
            [b[0], b[1], b[2]],
        )
    }

    /// Hand evaluation of the step-0 distribution for a 1-unit model with
    /// source `[3]` (framed as `3 </s>`).
    #[test]
    fn step_zero_matches_scalar_evaluation() {
        let p = tiny_params();
        let src = [3u32, EOS];
        let emb = |t: u32| p.src_embed.row(t as usize)[0];

        let (w, u, b) = gru_rows(&p.enc_fwd);
        let f0 = gru1(&w, u, b, &[emb(src[0])], 0.0);
        let f1 = gru1(&w, u, b, &[emb(src[1])], f0);
        let (w, u, b) = gru_rows(&p.enc_bwd);
        let b1 = gru1(&w, u, b, &[emb(src[1])], 0.0);
        let b0 = gru1(&w, u, b, &[emb(src[0])], b1);
        let ann = [[f0, b0], [f1, b1]];

        let s0 = (p.init_weight.data()[0] * b0 + p.init_bias.data()[0]).tanh();
        let wa = p.att_state.data()[0];
        let ua = p.att_annotation.data();
        let va = p.att_score.data()[0];
        let e: Vec<f64> = ann
            .iter()
            .map(|h| va * (wa * s0 + ua[0] * h[0] + ua[1] * h[1]).tanh())
            .collect();
        let z = e[0].exp() + e[1].exp();
        let alpha = [e[0].exp() / z, e[1].exp() / z];
        let c = [
            alpha[0] * ann[0][0] + alpha[1] * ann[1][0],
            alpha[0] * ann[0][1] + alpha[1] * ann[1][1],
        ];
        let y = p.tgt_embed.row(BOS as usize)[0];
        let (w, u, b) = gru_rows(&p.dec);
        let s1 = gru1(&w, u, b, &[y, c[0], c[1]], s0);
        let readout = [s1, c[0], c[1], y];
        let logits: Vec<f64> = (0..4)
            .map(|k| {
                p.out_weight.row(k).iter().zip(&readout).map(|(a, b)| a * b).sum::<f64>() + p.out_bias.data()[k]
            })
            .collect();
        let zsum: f64 = logits.iter().map(|l| l.exp()).sum();
        let expected: Vec<f64> = logits.iter().map(|l| l.exp() / zsum).collect();

        let got = forward_probs(&p, &[3], &[]).unwrap();
        assert_eq!(got.len(), 1);
        for (g, e) in got[0].iter().zip(&expected) {
            assert!((g - e).abs() < 1e-14, "{g} vs {e}");
        }
    }

    #[test]
    fn distributions_are_normalized() {
        let p = ModelParams::init(ModelDims::new(9, 11, 5, 6).unwrap(), 3);
        let dists = forward_probs(&p, &[4, 5, 8], &[6, 7, 10, 4]).unwrap();
        assert_eq!(dists.len(), 5);
        for d in dists {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let dims = ModelDims::new(6, 10, 3, 4).unwrap();
        let p = ModelParams::zeros(dims);
        for d in forward_probs(&p, &[4, 5], &[6, 7]).unwrap() {
            assert!(d.iter().all(|&x| x == 0.1));
        }
        let batch = vec![SentencePair {
            id: 0,
            source: vec![4, 5],
            target: vec![6, 7, 8],
        }];
        let (loss, _) = loss_and_gradients(&p, &batch).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let p = ModelParams::init(ModelDims::new(6, 7, 3, 4).unwrap(), 1);
        assert!(forward_probs(&p, &[6], &[]).is_err());
        assert!(forward_probs(&p, &[5], &[7]).is_err());
        assert!(forward_probs(&p, &[], &[]).is_err());
        let batch = vec![SentencePair {
            id: 0,
            source: vec![4],
            target: vec![9],
        }];
        assert!(loss_and_gradients(&p, &batch).is_err());
        assert!(loss_and_gradients(&p, &[]).is_err());
    }

    #[test]
    fn confident_correct_model_has_zero_output_gradient() {
        // Output bias alone decides: target "</s>" only, probability ~1.
        let dims = ModelDims::new(5, 5, 2, 3).unwrap();
        let mut p = ModelParams::init(dims, 2);
        p.out_weight.fill(0.0);
        p.out_bias.fill(-800.0);
        p.out_bias.data_mut()[EOS as usize] = 800.0;
        let batch = vec![SentencePair {
            id: 0,
            source: vec![4, 3],
            target: vec![],
        }];
        let (loss, g) = loss_and_gradients(&p, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.out_weight.data().iter().all(|&x| x == 0.0));
        assert!(g.out_bias.data().iter().all(|&x| x == 0.0));
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dims = ModelDims::new(7, 8, 3, 4).unwrap();
        let mut params = ModelParams::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Wider than the training init: keeps gradients well above the
        // ~1e-11 rounding noise of the central difference.
        for (_, t) in params.tensors_mut() {
            for x in t.data_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        let batch: Vec<SentencePair> = (0..3)
            .map(|i| SentencePair {
                id: i,
                source: (0..2 + i as usize).map(|_| rng.gen_range(3..7)).collect(),
                target: (0..1 + i as usize).map(|_| rng.gen_range(3..8)).collect(),
            })
            .collect();
        let (_, grads) = loss_and_gradients(&params, &batch).unwrap();
        let eps = 1e-5;
        let mut checked = 0;
        for ti in 0..18 {
            let len = params.tensors()[ti].1.len();
            for k in 0..len {
                let orig = params.tensors()[ti].1.data()[k];
                params.tensors_mut()[ti].1.data_mut()[k] = orig + eps;
                let up = loss_and_gradients(&params, &batch).unwrap().0;
                params.tensors_mut()[ti].1.data_mut()[k] = orig - eps;
                let down = loss_and_gradients(&params, &batch).unwrap().0;
                params.tensors_mut()[ti].1.data_mut()[k] = orig;
                let fd = (up - down) / (2.0 * eps);
                let an = grads.tensors()[ti].1.data()[k];
                let name = grads.tensors()[ti].0;
                assert!(rel_err(an, fd) < 1e-4, "{name}[{k}]: analytic {an} vs fd {fd}");
                checked += 1;
            }
        }
        assert_eq!(checked, dims.num_params());
    }
}
