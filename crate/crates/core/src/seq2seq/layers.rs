use rand::{Rng, RngCore};

use crate::error::{Result, TaasError};
use crate::numeric::nn::{FeedForward, LayerNorm, Linear};
use crate::numeric::{Graph, Matrix, ParamStore, Var};

/// Dropout switch threaded through a forward pass. Without an rng every
/// dropout site is the identity.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: Option<&'r mut dyn RngCore>,
}

impl<'r> Dropout<'r> {
    pub fn off() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: &'r mut dyn RngCore) -> Self {
        Dropout { rate, rng: Some(rng) }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => g.dropout(x, self.rate, rng),
            _ => Ok(x),
        }
    }
}

/// Sinusoidal position encodings for positions `0..n`.
pub fn positional_encoding(n: usize, width: usize) -> Matrix {
    let mut m = Matrix::zeros(n, width);
    for pos in 0..n {
        for i in 0..width {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / width as f64);
            m.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

/// Multi-head scaled dot-product attention. The `H x H` projections are
/// split column-wise into `heads` blocks of width `H / heads`.
#[derive(Clone, Copy, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || !hidden.is_multiple_of(heads) {
            return Err(TaasError::config("heads", format!("{hidden} is not divisible by {heads}")));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), hidden, hidden, rng)?,
            key: Linear::new(store, &format!("{name}.key"), hidden, hidden, rng)?,
            value: Linear::new(store, &format!("{name}.value"), hidden, hidden, rng)?,
            output: Linear::new(store, &format!("{name}.output"), hidden, hidden, rng)?,
            heads,
        })
    }

    /// `queries` is `n x H`, `memory` is `m x H`, `keep` is the row-major
    /// `n x m` visibility mask.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, queries: Var, memory: Var, keep: &[bool]) -> Result<Var> {
        let q = self.query.forward(g, store, queries)?;
        let k = self.key.forward(g, store, memory)?;
        let v = self.value.forward(g, store, memory)?;
        let width = g.shape(q).1 / self.heads;
        let scale = 1.0 / (width as f64).sqrt();
        let mut outputs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = g.slice_cols(q, head * width, width)?;
            let kh = g.slice_cols(k, head * width, width)?;
            let vh = g.slice_cols(v, head * width, width)?;
            let scores = g.matmul_bt(qh, kh)?;
            let scores = g.scale(scores, scale);
            let weights = g.softmax_masked(scores, keep.to_vec())?;
            outputs.push(g.matmul(weights, vh)?);
        }
        let joined = g.concat_cols(&outputs)?;
        self.output.forward(g, store, joined)
    }
}

/// Pre-norm encoder block: self-attention then feed-forward, each wrapped
/// as `x + dropout(sublayer(norm(x)))`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderLayer {
    pub attention_norm: LayerNorm,
    pub attention: MultiHeadAttention,
    pub ffn_norm: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        ffn_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(EncoderLayer {
            attention_norm: LayerNorm::new(store, &format!("{name}.attention_norm"), hidden)?,
            attention: MultiHeadAttention::new(store, &format!("{name}.attention"), hidden, heads, rng)?,
            ffn_norm: LayerNorm::new(store, &format!("{name}.ffn_norm"), hidden)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), hidden, ffn_width, hidden, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, keep: &[bool], dropout: &mut Dropout) -> Result<Var> {
        let normed = self.attention_norm.forward(g, store, x)?;
        let attended = self.attention.forward(g, store, normed, normed, keep)?;
        let attended = dropout.apply(g, attended)?;
        let x = g.add(x, attended)?;
        let normed = self.ffn_norm.forward(g, store, x)?;
        let transformed = self.ffn.forward(g, store, normed)?;
        let transformed = dropout.apply(g, transformed)?;
        g.add(x, transformed)
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention over the
/// memory, feed-forward.
#[derive(Clone, Copy, Debug)]
pub struct DecoderLayer {
    pub self_norm: LayerNorm,
    pub self_attention: MultiHeadAttention,
    pub cross_norm: LayerNorm,
    pub cross_attention: MultiHeadAttention,
    pub ffn_norm: LayerNorm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        ffn_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(DecoderLayer {
            self_norm: LayerNorm::new(store, &format!("{name}.self_norm"), hidden)?,
            self_attention: MultiHeadAttention::new(store, &format!("{name}.self_attention"), hidden, heads, rng)?,
            cross_norm: LayerNorm::new(store, &format!("{name}.cross_norm"), hidden)?,
            cross_attention: MultiHeadAttention::new(store, &format!("{name}.cross_attention"), hidden, heads, rng)?,
            ffn_norm: LayerNorm::new(store, &format!("{name}.ffn_norm"), hidden)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), hidden, ffn_width, hidden, rng)?,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        causal: &[bool],
        memory: Var,
        memory_keep: &[bool],
        dropout: &mut Dropout,
    ) -> Result<Var> {
        let normed = self.self_norm.forward(g, store, x)?;
        let attended = self.self_attention.forward(g, store, normed, normed, causal)?;
        let attended = dropout.apply(g, attended)?;
        let x = g.add(x, attended)?;
        let normed = self.cross_norm.forward(g, store, x)?;
        let crossed = self.cross_attention.forward(g, store, normed, memory, memory_keep)?;
        let crossed = dropout.apply(g, crossed)?;
        let x = g.add(x, crossed)?;
        let normed = self.ffn_norm.forward(g, store, x)?;
        let transformed = self.ffn.forward(g, store, normed)?;
        let transformed = dropout.apply(g, transformed)?;
        g.add(x, transformed)
    }
}

/// Row-major `n x n` lower-triangular visibility.
pub fn causal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|i| i % n <= i / n).collect()
}

/// Row-major `n x m` mask that repeats the key mask on every query row.
pub fn key_mask(n: usize, keys: &[bool]) -> Vec<bool> {
    keys.iter().copied().cycle().take(n * keys.len()).collect()
}
