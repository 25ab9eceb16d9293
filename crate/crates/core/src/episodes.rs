//! N-way K-shot episode construction.

use std::collections::BTreeMap;

use rand::seq::index;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Shape of one few-shot task. `q_query` counts queries per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpisodeConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

impl EpisodeConfig {
    pub fn new(n_way: usize, k_shot: usize, q_query: usize) -> Result<Self> {
        let cfg = Self {
            n_way,
            k_shot,
            q_query,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::InvalidEpisodeConfig(format!(
                "n_way must be at least 2, got {}",
                self.n_way
            )));
        }
        if self.k_shot < 1 || self.q_query < 1 {
            return Err(Error::InvalidEpisodeConfig(format!(
                "k_shot and q_query must be positive, got {} and {}",
                self.k_shot, self.q_query
            )));
        }
        Ok(())
    }

    /// Examples a class must hold to take part in an episode.
    pub fn per_class(&self) -> usize {
        self.k_shot + self.q_query
    }
}

/// One sampled task, stored as dataset indices.
///
/// `support[k]` and `query[k]` hold the examples of episode class `k`, whose
/// global id is `class_ids[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub class_ids: Vec<usize>,
    pub support: Vec<Vec<usize>>,
    pub query: Vec<Vec<usize>>,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.class_ids.len()
    }

    /// Borrowed features with episode-local labels.
    pub fn batch<'a>(&self, dataset: &'a LabeledDataset) -> EpisodeBatch<'a> {
        let mut batch = EpisodeBatch {
            n_way: self.n_way(),
            support: Vec::new(),
            support_labels: Vec::new(),
            query: Vec::new(),
            query_labels: Vec::new(),
        };
        for (k, (s, q)) in self.support.iter().zip(&self.query).enumerate() {
            for &i in s {
                batch.support.push(dataset.examples[i].features.as_slice());
                batch.support_labels.push(k);
            }
            for &i in q {
                batch.query.push(dataset.examples[i].features.as_slice());
                batch.query_labels.push(k);
            }
        }
        batch
    }
}

/// Raw feature views of one episode. Labels index into `0..n_way`.
#[derive(Debug, Clone)]
pub struct EpisodeBatch<'a> {
    pub n_way: usize,
    pub support: Vec<&'a [f64]>,
    pub support_labels: Vec<usize>,
    pub query: Vec<&'a [f64]>,
    pub query_labels: Vec<usize>,
}

/// Classes holding at least `k_shot + q_query` examples, ascending.
pub fn eligible_classes(dataset: &LabeledDataset, config: &EpisodeConfig) -> Vec<usize> {
    let sizes = dataset.class_sizes();
    sizes
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= config.per_class())
        .map(|(c, _)| c)
        .collect()
}

/// Precomputed class membership so repeated sampling does not rescan the dataset.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    config: EpisodeConfig,
    eligible: Vec<usize>,
    members: BTreeMap<usize, Vec<usize>>,
}

impl EpisodeSampler {
    pub fn new(dataset: &LabeledDataset, config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        let eligible = eligible_classes(dataset, &config);
        if eligible.len() < config.n_way {
            return Err(Error::InsufficientClasses {
                eligible: eligible.len(),
                needed: config.n_way,
            });
        }
        let mut members: BTreeMap<usize, Vec<usize>> =
            eligible.iter().map(|&c| (c, Vec::new())).collect();
        for (i, ex) in dataset.examples.iter().enumerate() {
            if let Some(m) = members.get_mut(&ex.label) {
                m.push(i);
            }
        }
        Ok(Self {
            config,
            eligible,
            members,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<Episode> {
        let cfg = &self.config;
        let picked = index::sample(rng, self.eligible.len(), cfg.n_way);
        let mut episode = Episode {
            class_ids: Vec::with_capacity(cfg.n_way),
            support: Vec::with_capacity(cfg.n_way),
            query: Vec::with_capacity(cfg.n_way),
        };
        for slot in picked.iter() {
            let class = self.eligible[slot];
            let pool = &self.members[&class];
            if pool.len() < cfg.per_class() {
                return Err(Error::InsufficientSamples {
                    class,
                    available: pool.len(),
                    needed: cfg.per_class(),
                });
            }
            let chosen: Vec<usize> = index::sample(rng, pool.len(), cfg.per_class())
                .iter()
                .map(|j| pool[j])
                .collect();
            let (s, q) = chosen.split_at(cfg.k_shot);
            episode.class_ids.push(class);
            episode.support.push(s.to_vec());
            episode.query.push(q.to_vec());
        }
        Ok(episode)
    }
}

/// Samples one episode, advancing `rng`.
pub fn sample_episode(
    dataset: &LabeledDataset,
    config: &EpisodeConfig,
    rng: &mut Rng,
) -> Result<Episode> {
    EpisodeSampler::new(dataset, *config)?.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabeledDataset, LabeledExample};
    use crate::rng::seeded;
    use std::collections::HashSet;

    fn dataset(sizes: &[usize]) -> LabeledDataset {
        let mut examples = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                let id = examples.len();
                examples.push(LabeledExample {
                    features: vec![id as f64],
                    label: c,
                    source_id: id,
                });
            }
        }
        LabeledDataset::new(
            (0..sizes.len()).map(|c| format!("c{c}")).collect(),
            examples,
        )
        .unwrap()
    }

    #[test]
    fn counts_and_disjointness() {
        let d = dataset(&[30, 30, 30]);
        let cfg = EpisodeConfig::new(3, 5, 10).unwrap();
        let ep = sample_episode(&d, &cfg, &mut seeded(1)).unwrap();
        assert_eq!(ep.support.iter().map(Vec::len).sum::<usize>(), 15);
        assert_eq!(ep.query.iter().map(Vec::len).sum::<usize>(), 30);
        let mut seen = HashSet::new();
        for (k, &class) in ep.class_ids.iter().enumerate() {
            for &i in ep.support[k].iter().chain(&ep.query[k]) {
                assert!(seen.insert(i));
                assert_eq!(d.examples[i].label, class);
            }
        }
    }

    #[test]
    fn small_class_makes_too_few_eligible() {
        let d = dataset(&[30, 12, 30]);
        let cfg = EpisodeConfig::new(3, 5, 10).unwrap();
        let err = sample_episode(&d, &cfg, &mut seeded(1)).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientClasses {
                eligible: 2,
                needed: 3
            }
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let d = dataset(&[40, 35, 50, 20]);
        let cfg = EpisodeConfig::new(3, 5, 10).unwrap();
        let a = sample_episode(&d, &cfg, &mut seeded(9)).unwrap();
        let b = sample_episode(&d, &cfg, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eligibility_examples() {
        let cfg = EpisodeConfig::new(3, 5, 10).unwrap();
        assert_eq!(eligible_classes(&dataset(&[100, 14, 50]), &cfg), vec![0, 2]);
        assert_eq!(eligible_classes(&dataset(&[0, 0, 0]), &cfg), Vec::<usize>::new());
    }

    #[test]
    fn eligibility_matches_filter_oracle() {
        use rand::Rng;
        let mut rng = seeded(3);
        let sizes: Vec<usize> = (0..50).map(|_| rng.random_range(0..40)).collect();
        let d = dataset(&sizes);
        let cfg = EpisodeConfig::new(2, 7, 9).unwrap();
        let mut oracle = Vec::new();
        for c in 0..sizes.len() {
            let n = d.examples.iter().filter(|e| e.label == c).count();
            if n >= 16 {
                oracle.push(c);
            }
        }
        assert_eq!(eligible_classes(&d, &cfg), oracle);
    }

    #[test]
    fn config_validation() {
        assert!(EpisodeConfig::new(1, 1, 1).is_err());
        assert!(EpisodeConfig::new(2, 0, 1).is_err());
        assert!(EpisodeConfig::new(2, 1, 0).is_err());
    }
}
