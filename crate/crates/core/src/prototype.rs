//! Prototype computation and nearest-prototype classification.
//!
//! A class prototype is the componentwise mean of the embedded support points of
//! that class. Queries are scored by squared Euclidean distance to each
//! prototype; the class posterior is a softmax over negative distances and the
//! episodic loss is the mean negative log posterior of the true class.

use crate::error::{Error, Result};

/// Class prototypes of one episode, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    prototypes: Vec<Vec<f64>>,
    class_ids: Vec<usize>,
}

impl PrototypeSet {
    /// Wraps precomputed prototypes. Class ids default to `0..n`.
    pub fn from_vectors(prototypes: Vec<Vec<f64>>) -> Result<Self> {
        let dim = match prototypes.first() {
            Some(p) => p.len(),
            None => return Err(Error::EmptyClass { class: 0 }),
        };
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        for p in &prototypes {
            check_dim(dim, p.len())?;
            check_finite(p, "prototype")?;
        }
        let class_ids = (0..prototypes.len()).collect();
        Ok(Self {
            prototypes,
            class_ids,
        })
    }

    /// Attaches global class identifiers, one per prototype.
    pub fn with_class_ids(mut self, class_ids: Vec<usize>) -> Result<Self> {
        check_dim(self.prototypes.len(), class_ids.len())?;
        self.class_ids = class_ids;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    pub fn prototype(&self, k: usize) -> &[f64] {
        &self.prototypes[k]
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    /// Squared distances from `query` to every prototype, in class order.
    pub fn distances(&self, query: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), query.len())?;
        check_finite(query, "query")?;
        Ok(self
            .prototypes
            .iter()
            .map(|p| sq_dist_unchecked(query, p))
            .collect())
    }
}

/// Softmax over negative squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    pub probabilities: Vec<f64>,
}

impl ClassPosterior {
    /// Index of the most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probabilities.iter().enumerate().skip(1) {
            if p > self.probabilities[best] {
                best = k;
            }
        }
        best
    }
}

/// Mean of the support embeddings of each class.
pub fn compute_prototypes<V: AsRef<[f64]>>(
    support: &[V],
    labels: &[usize],
    n_classes: usize,
) -> Result<PrototypeSet> {
    check_dim(support.len(), labels.len())?;
    if n_classes == 0 {
        return Err(Error::EmptyClass { class: 0 });
    }
    let dim = support
        .first()
        .map(|v| v.as_ref().len())
        .ok_or(Error::EmptyClass { class: 0 })?;
    if dim == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }

    let mut sums = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (v, &label) in support.iter().zip(labels) {
        let v = v.as_ref();
        check_dim(dim, v.len())?;
        check_finite(v, "support embedding")?;
        if label >= n_classes {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        counts[label] += 1;
        for (s, x) in sums[label].iter_mut().zip(v) {
            *s += x;
        }
    }
    for (class, (sum, &count)) in sums.iter_mut().zip(&counts).enumerate() {
        if count == 0 {
            return Err(Error::EmptyClass { class });
        }
        let n = count as f64;
        sum.iter_mut().for_each(|s| *s /= n);
    }
    Ok(PrototypeSet {
        prototypes: sums,
        class_ids: (0..n_classes).collect(),
    })
}

pub fn squared_euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    check_finite(a, "vector")?;
    check_finite(b, "vector")?;
    Ok(sq_dist_unchecked(a, b))
}

pub fn posterior_over_classes(query: &[f64], prototypes: &PrototypeSet) -> Result<ClassPosterior> {
    let d = prototypes.distances(query)?;
    Ok(ClassPosterior {
        probabilities: softmax_neg(&d),
    })
}

/// Nearest prototype; exact ties resolve to the lowest class index.
pub fn classify_query(query: &[f64], prototypes: &PrototypeSet) -> Result<usize> {
    let d = prototypes.distances(query)?;
    Ok(argmin(&d))
}

/// Mean negative log posterior of the true class over all queries.
pub fn episode_loss<V: AsRef<[f64]>>(
    queries: &[V],
    labels: &[usize],
    prototypes: &PrototypeSet,
) -> Result<f64> {
    check_dim(queries.len(), labels.len())?;
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let n_classes = prototypes.len();
    let mut total = 0.0;
    for (q, &label) in queries.iter().zip(labels) {
        if label >= n_classes {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        let d = prototypes.distances(q.as_ref())?;
        total += neg_log_softmax(&d, label);
    }
    Ok(total / queries.len() as f64)
}

pub(crate) fn argmin(d: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in d.iter().enumerate().skip(1) {
        if x < d[best] {
            best = k;
        }
    }
    best
}

/// `softmax(-d)` with the largest logit (smallest distance) subtracted first.
pub(crate) fn softmax_neg(d: &[f64]) -> Vec<f64> {
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = d.iter().map(|&x| (dmin - x).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// `-log softmax(-d)[label]`, computed through a stabilized log-sum-exp.
pub(crate) fn neg_log_softmax(d: &[f64], label: usize) -> f64 {
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let lse: f64 = d.iter().map(|&x| (dmin - x).exp()).sum::<f64>().ln();
    (d[label] - dmin + lse).max(0.0)
}

pub(crate) fn sq_dist_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput { what })
    }
}
