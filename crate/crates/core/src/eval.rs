//! Episodic evaluation, confusion matrices and Table-style reports.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::embed::EmbeddingNetwork;
use crate::episodes::{Episode, EpisodeConfig, EpisodeSampler};
use crate::error::{Error, Result};
use crate::prototype::{classify_query, compute_prototypes};
use crate::rng;

pub const REPORT_HEADER: &str =
    "backbone,n_way,k_shot,mode,episodes,accuracy_mean,accuracy_ci95,wall_time_s";

/// z value of a two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    WithoutTraining,
    WithTraining,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::WithoutTraining => "without_training",
            Mode::WithTraining => "with_training",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "without_training" => Ok(Mode::WithoutTraining),
            "with_training" => Ok(Mode::WithTraining),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Counts indexed `[actual][predicted]` by global class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        let mut cm = Self::new(n);
        for (a, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            cm.counts[a * n..(a + 1) * n].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual * self.n_classes + predicted] += 1;
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.n_classes + predicted]
    }

    pub fn row(&self, actual: usize) -> &[u64] {
        &self.counts[actual * self.n_classes..(actual + 1) * self.n_classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Recall of each class weighted by its share of the queries.
pub fn weighted_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut acc = 0.0;
    for c in 0..cm.n_classes() {
        let support: u64 = cm.row(c).iter().sum();
        if support == 0 {
            continue;
        }
        let recall = cm.get(c, c) as f64 / support as f64;
        acc += support as f64 / total as f64 * recall;
    }
    Ok(acc)
}

/// Per-query outcome of one episode, in global class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeResult {
    pub actual: Vec<usize>,
    pub predicted: Vec<usize>,
}

impl EpisodeResult {
    pub fn correct(&self) -> usize {
        self.actual
            .iter()
            .zip(&self.predicted)
            .filter(|(a, p)| a == p)
            .count()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.actual.len() as f64
    }
}

/// Embeds the episode, builds prototypes and labels every query.
pub fn run_episode(
    dataset: &LabeledDataset,
    network: &EmbeddingNetwork,
    episode: &Episode,
) -> Result<EpisodeResult> {
    let batch = episode.batch(dataset);
    let support = batch
        .support
        .iter()
        .map(|x| network.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let protos = compute_prototypes(&support, &batch.support_labels, batch.n_way)?;
    let mut result = EpisodeResult {
        actual: Vec::with_capacity(batch.query.len()),
        predicted: Vec::with_capacity(batch.query.len()),
    };
    for (q, &label) in batch.query.iter().zip(&batch.query_labels) {
        let z = network.forward(q)?;
        let k = classify_query(&z, &protos)?;
        result.actual.push(episode.class_ids[label]);
        result.predicted.push(episode.class_ids[k]);
    }
    Ok(result)
}

/// Aggregate of many frozen-parameter episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub episodes: usize,
    pub correct: u64,
    pub total: u64,
    pub accuracy_mean: f64,
    pub accuracy_ci95: f64,
    pub episode_accuracies: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub wall_time_s: f64,
}

/// Runs `n_episodes` episodes; episode `i` draws from its own stream of `seed`,
/// so results do not depend on `threads`.
pub fn evaluate(
    dataset: &LabeledDataset,
    network: &EmbeddingNetwork,
    config: &EpisodeConfig,
    n_episodes: usize,
    seed: u64,
    threads: usize,
) -> Result<Evaluation> {
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    if network.input_dim() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: network.input_dim(),
            actual: dataset.dim(),
        });
    }
    let start = Instant::now();
    let sampler = EpisodeSampler::new(dataset, *config)?;
    let one = |i: usize| -> Result<EpisodeResult> {
        let mut r = rng::stream(seed, i as u64);
        let episode = sampler.sample(&mut r)?;
        run_episode(dataset, network, &episode)
    };
    let results: Vec<EpisodeResult> = if threads <= 1 {
        (0..n_episodes).map(one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..n_episodes)
                .into_par_iter()
                .map(one)
                .collect::<Result<Vec<_>>>()
        })?
    };

    let mut confusion = ConfusionMatrix::new(dataset.n_classes());
    let mut correct = 0u64;
    let mut total = 0u64;
    let mut episode_accuracies = Vec::with_capacity(n_episodes);
    for r in &results {
        for (&a, &p) in r.actual.iter().zip(&r.predicted) {
            confusion.record(a, p);
        }
        correct += r.correct() as u64;
        total += r.actual.len() as u64;
        episode_accuracies.push(r.accuracy());
    }
    // Episodes are equally sized, so the micro average equals the mean of
    // per-episode accuracies and is exact when every episode scores the same.
    let accuracy_mean = correct as f64 / total as f64;
    let accuracy_ci95 = ci95(&episode_accuracies);
    Ok(Evaluation {
        episodes: n_episodes,
        correct,
        total,
        accuracy_mean,
        accuracy_ci95,
        episode_accuracies,
        confusion,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Normal-approximation half-width over per-episode values.
pub fn ci95(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Z95 * (var / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub backbone: String,
    pub n_way: usize,
    pub k_shot: usize,
    pub mode: Mode,
    pub episodes: usize,
    pub accuracy_mean: f64,
    pub accuracy_ci95: f64,
    pub wall_time_s: f64,
    pub confusion: Option<ConfusionMatrix>,
}

impl ReportRow {
    pub fn from_evaluation(
        backbone: impl Into<String>,
        config: &EpisodeConfig,
        mode: Mode,
        eval: &Evaluation,
    ) -> Self {
        Self {
            backbone: backbone.into(),
            n_way: config.n_way,
            k_shot: config.k_shot,
            mode,
            episodes: eval.episodes,
            accuracy_mean: eval.accuracy_mean,
            accuracy_ci95: eval.accuracy_ci95,
            wall_time_s: eval.wall_time_s,
            confusion: Some(eval.confusion.clone()),
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.4},{:.3}",
            self.backbone,
            self.n_way,
            self.k_shot,
            self.mode.as_str(),
            self.episodes,
            self.accuracy_mean,
            self.accuracy_ci95,
            self.wall_time_s
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
}

/// Orders rows by backbone, then shot, then mode (without training first).
pub fn summarize(
    mut rows: Vec<ReportRow>,
    class_names: Vec<String>,
    seed: u64,
    config_hash: impl Into<String>,
) -> EvalReport {
    rows.sort_by(|a, b| {
        (&a.backbone, a.k_shot, a.mode, a.n_way).cmp(&(&b.backbone, b.k_shot, b.mode, b.n_way))
    });
    EvalReport {
        rows,
        class_names,
        seed,
        config_hash: config_hash.into(),
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    /// One block per row: a `#` title line, a header of predicted classes, then
    /// one line per actual class. Blocks are separated by a blank line.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let Some(cm) = &r.confusion else { continue };
            if !out.is_empty() {
                out.push('\n');
            }
            writeln!(
                out,
                "# backbone={} n_way={} k_shot={} mode={}",
                r.backbone,
                r.n_way,
                r.k_shot,
                r.mode.as_str()
            )
            .unwrap();
            out.push_str("actual\\predicted");
            for c in 0..cm.n_classes() {
                write!(out, ",{}", self.class_name(c)).unwrap();
            }
            out.push('\n');
            for a in 0..cm.n_classes() {
                out.push_str(&self.class_name(a));
                for v in cm.row(a) {
                    write!(out, ",{v}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    fn class_name(&self, c: usize) -> String {
        self.class_names
            .get(c)
            .cloned()
            .unwrap_or_else(|| c.to_string())
    }

    pub fn render_table(&self) -> String {
        render_table(&self.rows)
    }
}

/// Aligned text table with one line per (backbone, n_way, shot) and the two
/// modes side by side.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut keys: Vec<(&str, usize, usize)> = Vec::new();
    for r in rows {
        let key = (r.backbone.as_str(), r.n_way, r.k_shot);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let cell = |key: (&str, usize, usize), mode: Mode| -> (String, String) {
        rows.iter()
            .find(|r| (r.backbone.as_str(), r.n_way, r.k_shot) == key && r.mode == mode)
            .map(|r| {
                (
                    format!("{:.2}% ±{:.2}", 100.0 * r.accuracy_mean, 100.0 * r.accuracy_ci95),
                    format_duration(r.wall_time_s),
                )
            })
            .unwrap_or_else(|| ("-".into(), "-".into()))
    };
    let width = keys
        .iter()
        .map(|k| k.0.len())
        .max()
        .unwrap_or(0)
        .max("Backbone".len());
    let mut out = String::new();
    writeln!(
        out,
        "{:<width$}  {:>5}  {:>4}  {:>16}  {:>12}  {:>16}  {:>12}",
        "Backbone", "Way", "Shot", "w/o train acc", "time", "w/ train acc", "time"
    )
    .unwrap();
    let mut last = "";
    for key in keys {
        let (a0, t0) = cell(key, Mode::WithoutTraining);
        let (a1, t1) = cell(key, Mode::WithTraining);
        let label = if key.0 == last { "" } else { key.0 };
        last = key.0;
        writeln!(
            out,
            "{:<width$}  {:>5}  {:>4}  {:>16}  {:>12}  {:>16}  {:>12}",
            label, key.1, key.2, a0, t0, a1, t1
        )
        .unwrap();
    }
    out
}

fn format_duration(secs: f64) -> String {
    if secs >= 3600.0 {
        format!("{:02} h {:02} min", (secs / 3600.0) as u64, ((secs % 3600.0) / 60.0) as u64)
    } else if secs >= 60.0 {
        format!("{:02} min {:02} s", (secs / 60.0) as u64, (secs % 60.0) as u64)
    } else {
        format!("{secs:.2} s")
    }
}

/// Reads rows back from a report CSV (confusion matrices are not part of it).
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == REPORT_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "report header mismatch: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Config(format!("report line {}: bad {what}", n + 2));
        if f.len() != 8 {
            return Err(bad("field count"));
        }
        rows.push(ReportRow {
            backbone: f[0].to_string(),
            n_way: f[1].parse().map_err(|_| bad("n_way"))?,
            k_shot: f[2].parse().map_err(|_| bad("k_shot"))?,
            mode: f[3].parse()?,
            episodes: f[4].parse().map_err(|_| bad("episodes"))?,
            accuracy_mean: f[5].parse().map_err(|_| bad("accuracy_mean"))?,
            accuracy_ci95: f[6].parse().map_err(|_| bad("accuracy_ci95"))?,
            wall_time_s: f[7].parse().map_err(|_| bad("wall_time_s"))?,
            confusion: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_accuracy_examples() {
        let diag = ConfusionMatrix::from_rows(&[vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(weighted_accuracy(&diag).unwrap(), 1.0);
        let cm = ConfusionMatrix::from_rows(&[vec![10, 0, 0], vec![0, 0, 10], vec![0, 10, 0]]).unwrap();
        assert!((weighted_accuracy(&cm).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            weighted_accuracy(&ConfusionMatrix::new(3)),
            Err(Error::EmptyMatrix)
        ));
        let partial = ConfusionMatrix::from_rows(&[vec![3, 1, 0], vec![0, 0, 0], vec![2, 0, 4]]).unwrap();
        assert!((weighted_accuracy(&partial).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn weighted_accuracy_matches_recall_weighting_oracle() {
        use rand::Rng;
        let mut r = rng::seeded(8);
        for _ in 0..100 {
            let n = r.random_range(2..6);
            let rows: Vec<Vec<u64>> = (0..n)
                .map(|_| (0..n).map(|_| if r.random_bool(0.2) { 0 } else { r.random_range(0..50) }).collect())
                .collect();
            let cm = ConfusionMatrix::from_rows(&rows).unwrap();
            let total: u64 = rows.iter().flatten().sum();
            if total == 0 {
                continue;
            }
            // Independent route: per-class recall, weighted by class frequency.
            let mut oracle = 0.0;
            for (c, row) in rows.iter().enumerate() {
                let support: u64 = row.iter().sum();
                if support > 0 {
                    oracle += (support as f64 / total as f64) * (row[c] as f64 / support as f64);
                }
            }
            let w = weighted_accuracy(&cm).unwrap();
            assert!((w - oracle).abs() < 1e-12);
            assert!((w - cm.trace() as f64 / total as f64).abs() < 1e-12);
        }
    }

    fn row(backbone: &str, k: usize, mode: Mode) -> ReportRow {
        ReportRow {
            backbone: backbone.into(),
            n_way: 3,
            k_shot: k,
            mode,
            episodes: 10,
            accuracy_mean: 0.5,
            accuracy_ci95: 0.01,
            wall_time_s: 0.25,
            confusion: None,
        }
    }

    #[test]
    fn summarize_orders_shots() {
        let rows = [20, 1, 5, 10]
            .iter()
            .map(|&k| row("vgg16", k, Mode::WithoutTraining))
            .collect();
        let report = summarize(rows, vec![], 0, "h");
        let shots: Vec<usize> = report.rows.iter().map(|r| r.k_shot).collect();
        assert_eq!(shots, vec![1, 5, 10, 20]);
        let single = summarize(vec![row("a", 3, Mode::WithTraining)], vec![], 0, "h");
        assert_eq!(single.rows.len(), 1);
    }

    #[test]
    fn summarize_matches_sort_oracle() {
        use rand::seq::SliceRandom;
        let mut rows = Vec::new();
        for b in ["resnet18", "resnet50", "vgg16"] {
            for k in [1, 5, 10, 20] {
                for m in [Mode::WithoutTraining, Mode::WithTraining] {
                    rows.push(row(b, k, m));
                }
            }
        }
        assert_eq!(rows.len(), 24);
        let oracle = rows.clone();
        rows.shuffle(&mut rng::seeded(3));
        let report = summarize(rows, vec![], 0, "h");
        assert_eq!(report.rows, oracle);
    }

    #[test]
    fn csv_round_trip_and_format() {
        let report = summarize(
            vec![row("blobs", 1, Mode::WithoutTraining), row("blobs", 1, Mode::WithTraining)],
            vec![],
            0,
            "h",
        );
        let csv = report.to_csv();
        assert!(csv.starts_with(REPORT_HEADER));
        assert!(csv.contains("blobs,3,1,without_training,10,0.5000,0.0100,0.250"));
        let back = parse_report_csv(&csv).unwrap();
        assert_eq!(back, report.rows);
        let table = render_table(&back);
        assert!(table.contains("50.00%"));
        assert!(parse_report_csv("nope\n").is_err());
    }

    #[test]
    fn confusion_blocks() {
        let mut r = row("blobs", 1, Mode::WithoutTraining);
        r.confusion = Some(ConfusionMatrix::from_rows(&[vec![2, 1], vec![0, 3]]).unwrap());
        let report = summarize(vec![r], vec!["Healthy".into(), "TB".into()], 0, "h");
        let text = report.confusion_csv();
        assert_eq!(
            text,
            "# backbone=blobs n_way=3 k_shot=1 mode=without_training\nactual\\predicted,Healthy,TB\nHealthy,2,1\nTB,0,3\n"
        );
    }

    #[test]
    fn ci_of_constant_is_zero() {
        assert_eq!(ci95(&[0.5; 10]), 0.0);
        assert_eq!(ci95(&[0.2]), 0.0);
        assert!(ci95(&[0.0, 1.0]) > 0.0);
    }
}
