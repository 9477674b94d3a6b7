//! Topic-aware attention: topic embeddings `P` from `beta`, token scores
//! against `P`, topic-averaged and masked-normalized weights, and the pooled
//! sequence vector `s`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TaasError};
use crate::numeric::nn::{FeedForward, LayerNorm};
use crate::numeric::{matmul, matmul_bt, Graph, Matrix, ParamStore, Var};

/// Where the layer norm sits in the topic projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    /// `P = F + LN(softmax_rows(F))` with `F = FFN(beta)`.
    #[default]
    Residual,
    /// `P = LN(F + softmax_rows(F))`.
    PostLn,
}

impl std::str::FromStr for ProjectionVariant {
    type Err = TaasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(ProjectionVariant::Residual),
            "post_ln" => Ok(ProjectionVariant::PostLn),
            other => Err(TaasError::config(
                "projection_variant",
                format!("unknown variant {other:?} (expected residual or post_ln)"),
            )),
        }
    }
}

/// Maps `beta` (`K x V_topics`) to topic embeddings `P` (`K x H`).
#[derive(Clone, Copy, Debug)]
pub struct TopicProjection {
    pub ffn: FeedForward,
    pub norm: LayerNorm,
    pub variant: ProjectionVariant,
    pub topic_vocab_size: usize,
    pub hidden: usize,
}

/// Per-document attention values.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicAttentionWeights {
    /// Raw scores `a`, `K x N`, topic-major.
    pub scores: Matrix,
    /// Topic-averaged scores, length `N`.
    pub alpha: Vec<f64>,
    /// Masked softmax of `alpha`; zero on PAD positions.
    pub alpha_hat: Vec<f64>,
}

/// Graph nodes of one attention pass.
#[derive(Clone, Copy, Debug)]
pub struct TopicAttentionVars {
    pub scores: Var,
    pub alpha: Var,
    pub alpha_hat: Var,
    /// `1 x H`.
    pub pooled: Var,
}

impl TopicProjection {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        topic_vocab_size: usize,
        hidden: usize,
        variant: ProjectionVariant,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(TopicProjection {
            ffn: FeedForward::new(store, &format!("{prefix}.ffn"), topic_vocab_size, hidden, hidden, rng)?,
            norm: LayerNorm::new(store, &format!("{prefix}.norm"), hidden)?,
            variant,
            topic_vocab_size,
            hidden,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, beta: Var) -> Result<Var> {
        let (rows, cols) = g.shape(beta);
        if cols != self.topic_vocab_size {
            return Err(TaasError::dims("project_topics", (rows, cols), (rows, self.topic_vocab_size)));
        }
        let f = self.ffn.forward(g, store, beta)?;
        let soft = g.softmax_rows(f);
        match self.variant {
            ProjectionVariant::Residual => {
                let normed = self.norm.forward(g, store, soft)?;
                g.add(f, normed)
            }
            ProjectionVariant::PostLn => {
                let sum = g.add(f, soft)?;
                self.norm.forward(g, store, sum)
            }
        }
    }

    /// Topic embeddings for a concrete `beta`.
    pub fn project_topics(&self, store: &ParamStore, beta: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let b = g.input(beta.clone());
        let p = self.forward(&mut g, store, b)?;
        Ok(g.value(p).clone())
    }
}

/// Scores, topic average, masked softmax and pooling on the graph. `h` is
/// `N x H`, `topics` is `K x H`.
pub fn attend(g: &mut Graph, topics: Var, h: Var, mask: &[bool]) -> Result<TopicAttentionVars> {
    let n = g.shape(h).0;
    if mask.len() != n {
        return Err(TaasError::dims("topic attention mask", (n, g.shape(h).1), (mask.len(), 1)));
    }
    let scores = g.matmul_bt(topics, h)?;
    let alpha = g.mean_rows(scores);
    let alpha_hat = g.softmax_masked(alpha, mask.to_vec())?;
    let pooled = g.matmul(alpha_hat, h)?;
    Ok(TopicAttentionVars {
        scores,
        alpha,
        alpha_hat,
        pooled,
    })
}

/// `a = P hᵀ`: entry `(t, i)` is `<P_t, h_i>`.
pub fn score(h: &Matrix, topics: &Matrix) -> Result<Matrix> {
    if h.cols() != topics.cols() {
        return Err(TaasError::dims("score", h.shape(), topics.shape()));
    }
    matmul_bt(topics, h)
}

/// Averages `a` over topics and applies a softmax restricted to positions
/// where `mask` is true.
pub fn pool_and_normalize(scores: &Matrix, mask: &[bool]) -> Result<TopicAttentionWeights> {
    if mask.len() != scores.cols() {
        return Err(TaasError::dims("pool_and_normalize", scores.shape(), (1, mask.len())));
    }
    let k = scores.rows() as f64;
    let alpha: Vec<f64> = (0..scores.cols())
        .map(|i| (0..scores.rows()).map(|t| scores.get(t, i)).sum::<f64>() / k)
        .collect();
    let mut alpha_hat = alpha.clone();
    if !crate::numeric::softmax_in_place(&mut alpha_hat, Some(mask)) {
        return Err(TaasError::EmptySequence);
    }
    Ok(TopicAttentionWeights {
        scores: scores.clone(),
        alpha,
        alpha_hat,
    })
}

/// `s = α̂ᵀ h`.
pub fn pool_sequence(alpha_hat: &[f64], h: &Matrix) -> Result<Vec<f64>> {
    Ok(matmul(&Matrix::row_vector(alpha_hat), h)?.data().to_vec())
}
