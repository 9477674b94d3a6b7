//! Small parameterized building blocks on top of [`Graph`].

use rand::Rng;

use super::graph::{Graph, Var};
use super::matrix::{Matrix, LAYER_NORM_EPS};
use super::param::{ParamId, ParamStore};
use crate::error::Result;

/// Affine map `x W + b` over row vectors.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Result<Self> {
        Ok(Linear {
            weight: store.weight(format!("{name}.weight"), inputs, outputs, rng)?,
            bias: store.bias(format!("{name}.bias"), outputs)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add(format!("{name}.gain"), Matrix::filled(1, width, 1.0))?,
            bias: store.bias(format!("{name}.bias"), width)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

/// Two affine maps with a ReLU in between.
#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(FeedForward {
            inner: Linear::new(store, &format!("{name}.inner"), inputs, hidden, rng)?,
            outer: Linear::new(store, &format!("{name}.outer"), hidden, outputs, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, store, x)?;
        let h = g.relu(h);
        self.outer.forward(g, store, h)
    }
}
