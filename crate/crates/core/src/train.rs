//! Episodic meta-training of the embedding head.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::data::LabeledDataset;
use crate::embed::{loss_gradients, EmbeddingNetwork};
use crate::episodes::{EpisodeConfig, EpisodeSampler};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidTrainConfig(format!(
                "unknown optimizer {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes_total: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub val_every: usize,
    pub val_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes_total: 1000,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            val_every: 100,
            val_episodes: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidTrainConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.episodes_total == 0 {
            return fail("episodes_total must be at least 1".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.val_every == 0 || self.val_episodes == 0 {
            return fail("val_every and val_episodes must be at least 1".into());
        }
        Ok(())
    }

    /// Seed of the validation episodes. Every validation round reuses it, so
    /// rounds differ only in the network being scored.
    pub fn validation_seed(&self) -> u64 {
        rng::labeled_seed(self.seed, "validation")
    }

    fn episode_seed(&self) -> u64 {
        rng::labeled_seed(self.seed, "train-episodes")
    }
}

/// SGD or Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Optimizer {
    pub fn new(config: &TrainConfig, n_params: usize) -> Self {
        let moments = match config.optimizer {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => n_params,
        };
        Self {
            kind: config.optimizer,
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(
            &TrainConfig {
                optimizer: OptimizerKind::Sgd,
                learning_rate,
                ..TrainConfig::default()
            },
            0,
        )
    }

    pub fn adam(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64, n_params: usize) -> Self {
        Self::new(
            &TrainConfig {
                optimizer: OptimizerKind::Adam,
                learning_rate,
                beta1,
                beta2,
                epsilon,
                ..TrainConfig::default()
            },
            n_params,
        )
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len()
            || (self.kind == OptimizerKind::Adam && self.m.len() != params.len())
        {
            return Err(Error::ShapeMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    apply(p, lr * g);
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    apply(p, lr * m_hat / (v_hat.sqrt() + self.epsilon));
                }
            }
        }
        Ok(())
    }
}

// A zero update leaves the bits alone; `-0.0 - -0.0` would flip the sign.
fn apply(p: &mut f64, delta: f64) {
    if delta != 0.0 {
        *p -= delta;
    }
}

/// Applies one optimizer update to the network's parameters.
pub fn optimizer_step(
    network: &mut EmbeddingNetwork,
    grads: &[f64],
    optimizer: &mut Optimizer,
) -> Result<()> {
    let mut params = network.params();
    optimizer.step(&mut params, grads)?;
    network.set_params(&params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    /// Number of episodes trained so far.
    pub episode: usize,
    /// Mean training loss over the episodes since the previous record.
    pub loss: f64,
    pub val_accuracy: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<TrainRecord>,
    /// Loss of every training episode, measured before its update.
    pub episode_losses: Vec<f64>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,loss,val_accuracy,elapsed_s\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{:.6},{:.4},{:.3}",
                r.episode, r.loss, r.val_accuracy, r.elapsed_s
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Samples an episode from `train`, takes one optimizer step on its loss, and
/// every `val_every` episodes (and at the end) scores the current network on
/// `val_episodes` validation episodes.
pub fn meta_train(
    train: &LabeledDataset,
    val: &LabeledDataset,
    episode_config: &EpisodeConfig,
    config: &TrainConfig,
    initial: &EmbeddingNetwork,
) -> Result<(EmbeddingNetwork, TrainHistory)> {
    config.validate()?;
    let sampler = EpisodeSampler::new(train, *episode_config)?;
    // Fail early if validation episodes cannot be drawn.
    EpisodeSampler::new(val, *episode_config)?;

    let start = Instant::now();
    let mut net = initial.clone();
    let mut optimizer = Optimizer::new(config, net.num_params());
    let mut history = TrainHistory::default();
    let mut rng = rng::seeded(config.episode_seed());
    let mut since_last = 0.0;
    let mut n_since_last = 0usize;

    for i in 1..=config.episodes_total {
        let episode = sampler.sample(&mut rng)?;
        let (loss, grads) = loss_gradients(&net, &episode.batch(train))?;
        history.episode_losses.push(loss);
        since_last += loss;
        n_since_last += 1;
        if net.num_params() > 0 {
            optimizer_step(&mut net, &grads.flatten(), &mut optimizer)?;
        }

        if i % config.val_every == 0 || i == config.episodes_total {
            let eval = evaluate(
                val,
                &net,
                episode_config,
                config.val_episodes,
                config.validation_seed(),
                1,
            )?;
            history.records.push(TrainRecord {
                episode: i,
                loss: since_last / n_since_last as f64,
                val_accuracy: eval.accuracy_mean,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
            since_last = 0.0;
            n_since_last = 0;
        }
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_params() {
        let params = vec![1.5, -0.0, 3.25e-7];
        for mut opt in [Optimizer::sgd(0.0), Optimizer::adam(0.0, 0.9, 0.999, 1e-8, 3)] {
            let mut p = params.clone();
            opt.step(&mut p, &[0.3, -2.0, 7.0]).unwrap();
            let a: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = params.iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let mut p = vec![1.0];
        Optimizer::sgd(0.1).step(&mut p, &[0.5]).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        for &g in &[0.5, -3.0, 1e-3] {
            let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
            let mut p = vec![2.0];
            Optimizer::adam(lr, b1, b2, eps, 1).step(&mut p, &[g]).unwrap();
            // Bias-corrected moments after one step are g and g^2 exactly.
            let m_hat = (1.0 - b1) * g / (1.0 - b1);
            let v_hat = (1.0 - b2) * g * g / (1.0 - b2);
            let expect = 2.0 - lr * m_hat / (f64::sqrt(v_hat) + eps);
            assert!((p[0] - expect).abs() < 1e-10);
            assert!(((2.0 - p[0]).abs() - lr).abs() < 1e-6 * lr / g.abs().min(1.0) + 1e-9);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0; 3];
        assert!(matches!(
            Optimizer::sgd(0.1).step(&mut p, &[1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Optimizer::adam(0.1, 0.9, 0.99, 1e-8, 2).step(&mut p, &[1.0, 2.0, 3.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { episodes_total: 0, ..Default::default() },
            TrainConfig { beta1: 1.0, ..Default::default() },
            TrainConfig { beta2: 0.0, ..Default::default() },
            TrainConfig { val_every: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn history_csv_shape() {
        let h = TrainHistory {
            records: vec![TrainRecord { episode: 10, loss: 0.5, val_accuracy: 0.75, elapsed_s: 1.0 }],
            episode_losses: vec![],
        };
        assert_eq!(h.to_csv(), "episode,loss,val_accuracy,elapsed_s\n10,0.500000,0.7500,1.000\n");
    }
}
