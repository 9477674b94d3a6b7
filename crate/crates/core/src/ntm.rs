//! Variational neural topic model over bag-of-words documents.
//!
//! Inference: `hidden = softplus(f(bow))`, `mu = g1(hidden)`,
//! `logvar = g2(hidden)`. A latent draw `omega = mu + exp(logvar / 2) * eps`
//! is mapped to topic proportions `z = softmax(W_omega omega + b_omega)`.
//! Words are reconstructed from the mixture `z · beta`, where
//! `beta = softmax_rows(W_dec)` is the `K x V_topics` topic-word matrix.
//! The loss is `KL(q(omega | d) || N(0, I)) - log p(bow | z)`, averaged over
//! documents.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::BowVector;
use crate::error::{Result, TaasError};
use crate::numeric::nn::Linear;
use crate::numeric::{softmax_rows, AdamConfig, Graph, Matrix, ParamId, ParamStore, Var};

/// Floor added inside the reconstruction log.
pub const PROB_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NtmConfig {
    /// `V_topics`.
    pub vocab_size: usize,
    pub num_topics: usize,
    /// Width of the Gaussian latent `omega`.
    pub latent_dim: usize,
    /// Width of the shared hidden layer `f`.
    pub hidden: usize,
}

impl NtmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(TaasError::config("topic_vocab_size", "must be at least 1"));
        }
        if self.num_topics < 2 {
            return Err(TaasError::config("num_topics", "must be at least 2"));
        }
        if self.latent_dim == 0 {
            return Err(TaasError::config("latent_dim", "must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(TaasError::config("ntm_hidden", "must be at least 1"));
        }
        Ok(())
    }
}

/// Parameter handles of the topic model.
#[derive(Clone, Debug)]
pub struct NeuralTopicModel {
    pub config: NtmConfig,
    pub encoder: Linear,
    pub mu_head: Linear,
    pub logvar_head: Linear,
    pub topic_head: Linear,
    pub topic_word: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DocTopicSample {
    pub omega: Vec<f64>,
    /// Topic proportions `z_d`.
    pub topics: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

/// Graph nodes for one pass over a batch of bag-of-words rows.
#[derive(Clone, Copy, Debug)]
pub struct NtmForward {
    pub mu: Var,
    pub logvar: Var,
    pub omega: Var,
    pub topics: Var,
    pub beta: Var,
    /// Sum over rows of `KL - log-likelihood`.
    pub loss_sum: Var,
    pub kl_sum: f64,
    pub recon_sum: f64,
}

impl NeuralTopicModel {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, config: NtmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let NtmConfig {
            vocab_size,
            num_topics,
            latent_dim,
            hidden,
        } = config;
        Ok(NeuralTopicModel {
            config,
            encoder: Linear::new(store, &format!("{prefix}.f"), vocab_size, hidden, rng)?,
            mu_head: Linear::new(store, &format!("{prefix}.g1"), hidden, latent_dim, rng)?,
            logvar_head: Linear::new(store, &format!("{prefix}.g2"), hidden, latent_dim, rng)?,
            topic_head: Linear::new(store, &format!("{prefix}.w_omega"), latent_dim, num_topics, rng)?,
            topic_word: store.weight(format!("{prefix}.w_dec"), num_topics, vocab_size, rng)?,
        })
    }

    /// `beta` as a graph node (rows are distributions over the topic vocabulary).
    pub fn beta_var(&self, g: &mut Graph, store: &ParamStore) -> Var {
        let w = g.param(store, self.topic_word);
        g.softmax_rows(w)
    }

    /// Topic-word distribution `beta`, `K x V_topics`.
    pub fn beta(&self, store: &ParamStore) -> Matrix {
        softmax_rows(store.value(self.topic_word))
    }

    /// Runs inference and reconstruction for `bow` (`B x V_topics`).
    /// `noise` (`B x latent_dim`) switches on the reparameterized draw;
    /// without it `omega = mu`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, bow: &Matrix, noise: Option<&Matrix>) -> Result<NtmForward> {
        if bow.cols() != self.config.vocab_size {
            return Err(TaasError::dims("ntm input", bow.shape(), (1, self.config.vocab_size)));
        }
        let rows = bow.rows();
        let x = g.input(bow.clone());
        let hidden = self.encoder.forward(g, store, x)?;
        let hidden = g.softplus(hidden);
        let mu = self.mu_head.forward(g, store, hidden)?;
        let logvar = self.logvar_head.forward(g, store, hidden)?;
        let omega = match noise {
            Some(eps) => {
                let half = g.scale(logvar, 0.5);
                let std = g.exp(half);
                let spread = g.mul_const(std, eps.clone())?;
                g.add(mu, spread)?
            }
            None => mu,
        };
        let logits = self.topic_head.forward(g, store, omega)?;
        let topics = g.softmax_rows(logits);

        let beta = self.beta_var(g, store);
        let mixture = g.matmul(topics, beta)?;
        let log_mix = g.ln(mixture, PROB_FLOOR);
        let weighted = g.mul_const(log_mix, bow.clone())?;
        let recon = g.sum_all(weighted);

        let var = g.exp(logvar);
        let mu_sq = g.mul(mu, mu)?;
        let t = g.add(var, mu_sq)?;
        let t = g.sub(t, logvar)?;
        let t = g.add_const(t, &Matrix::filled(rows, self.config.latent_dim, -1.0))?;
        let t = g.sum_all(t);
        let kl = g.scale(t, 0.5);

        let loss_sum = g.sub(kl, recon)?;
        Ok(NtmForward {
            mu,
            logvar,
            omega,
            topics,
            beta,
            loss_sum,
            kl_sum: g.scalar(kl),
            recon_sum: g.scalar(recon),
        })
    }

    /// Standard-normal noise for a reparameterized pass over `rows` documents.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Matrix {
        let data = (0..rows * self.config.latent_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix::from_vec(rows, self.config.latent_dim, data).expect("shape matches")
    }

    /// Document-topic inference for one document.
    pub fn infer<R: Rng + ?Sized>(&self, store: &ParamStore, bow: &BowVector, sample: bool, rng: &mut R) -> Result<DocTopicSample> {
        let input = Matrix::row_vector(&bow.as_f64());
        let noise = sample.then(|| self.sample_noise(1, rng));
        let mut g = Graph::new();
        let out = self.forward(&mut g, store, &input, noise.as_ref())?;
        Ok(DocTopicSample {
            omega: g.value(out.omega).data().to_vec(),
            topics: g.value(out.topics).data().to_vec(),
            mu: g.value(out.mu).data().to_vec(),
            logvar: g.value(out.logvar).data().to_vec(),
        })
    }

    /// Mean loss over the rows of `bow`; one reparameterized draw per row when
    /// `rng` is given.
    pub fn loss<R: Rng + ?Sized>(&self, store: &ParamStore, bow: &Matrix, rng: Option<&mut R>) -> Result<f64> {
        let noise = rng.map(|r| self.sample_noise(bow.rows(), r));
        let mut g = Graph::new();
        let out = self.forward(&mut g, store, bow, noise.as_ref())?;
        Ok(g.scalar(out.loss_sum) / bow.rows().max(1) as f64)
    }

    /// Words of topic `k` ranked by descending probability (ties by index).
    pub fn top_words(beta: &Matrix, k: usize, n: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = beta.row(k).iter().cloned().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(n);
        ranked
    }
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(m, lv)| lv.exp() + m * m - 1.0 - lv).sum::<f64>()
}

/// `Σ_w count(w) · ln((zᵀ beta)_w + floor)`.
pub fn reconstruct_log_likelihood(topics: &[f64], beta: &Matrix, bow: &[f64]) -> f64 {
    (0..beta.cols())
        .filter(|&w| bow[w] != 0.0)
        .map(|w| {
            let p: f64 = topics.iter().enumerate().map(|(k, z)| z * beta.get(k, w)).sum();
            bow[w] * (p + PROB_FLOOR).ln()
        })
        .sum()
}

/// Trains the topic model alone on `bows` (`D x V_topics`) for `epochs`
/// passes of shuffled mini-batches. Returns the mean training loss of each
/// epoch.
pub fn train_ntm<R: Rng + ?Sized>(
    ntm: &NeuralTopicModel,
    store: &mut ParamStore,
    bows: &Matrix,
    epochs: usize,
    batch_size: usize,
    adam: &AdamConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    use rand::seq::SliceRandom;

    let docs = bows.rows();
    if docs == 0 {
        return Err(TaasError::EmptyCorpus("no documents for topic model training".into()));
    }
    let batch_size = batch_size.max(1);
    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..docs).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| bows.row(i)).collect();
            let batch = Matrix::from_rows(&rows)?;
            let noise = ntm.sample_noise(batch.rows(), rng);
            let mut g = Graph::new();
            let out = ntm.forward(&mut g, store, &batch, Some(&noise))?;
            let loss = g.scale(out.loss_sum, 1.0 / batch.rows() as f64);
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(TaasError::Divergence {
                    epoch,
                    batch: b,
                    what: "topic model loss",
                });
            }
            total += g.scalar(out.loss_sum);
            g.backward(loss, store)?;
            store.adam_step_all(adam);
        }
        history.push(total / docs as f64);
    }
    Ok(history)
}
