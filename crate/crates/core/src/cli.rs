//! Experiment configuration and the runner behind the `protonet` binary.
//!
//! Configs are INI files with `[dataset]`, `[embedding]`, `[episodes]`,
//! `[train]`, `[eval]` and `[experiment]` sections. Every key has a default
//! except `[dataset] source` and `[experiment] seed` (the seed may instead come
//! from `--seed`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::data::{
    append_nuisance, generate_blobs, load_embeddings, load_image_dataset, random_means,
    save_embeddings, split_train_val, BlobSpec, LabeledDataset,
};
use crate::embed::{Architecture, EmbeddingNetwork};
use crate::episodes::EpisodeConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, summarize, EvalReport, Mode, ReportRow};
use crate::rng::labeled_seed;
use crate::train::{meta_train, OptimizerKind, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub class_names: Vec<String>,
    pub counts: Vec<usize>,
    pub dim: usize,
    pub separation: f64,
    pub sigma: f64,
    pub nuisance_dims: usize,
    pub nuisance_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            class_names: vec!["Healthy".into(), "Sick".into(), "TB".into()],
            counts: vec![600, 300, 150],
            dim: 16,
            separation: 1.0,
            sigma: 1.0,
            nuisance_dims: 0,
            nuisance_sigma: 0.0,
        }
    }
}

impl SyntheticSpec {
    /// Class means and noise both come from `seed`.
    pub fn generate(&self, seed: u64) -> Result<LabeledDataset> {
        let means = random_means(
            self.class_names.len(),
            self.dim,
            self.separation,
            labeled_seed(seed, "means"),
        );
        let blobs = generate_blobs(
            &BlobSpec {
                class_names: self.class_names.clone(),
                counts: self.counts.clone(),
                means,
                sigma: self.sigma,
            },
            labeled_seed(seed, "blobs"),
        )?;
        if self.nuisance_dims == 0 {
            return Ok(blobs);
        }
        Ok(append_nuisance(
            &blobs,
            self.nuisance_dims,
            self.nuisance_sigma,
            labeled_seed(seed, "nuisance"),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Pfeb(PathBuf),
    Pgm { root: PathBuf, image_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UntrainedHead {
    /// Raw frozen features.
    Identity,
    /// A freshly initialized copy of the trainable head.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub architecture: Architecture,
    pub hidden: usize,
    pub out_dim: usize,
    pub untrained: UntrainedHead,
}

impl Default for HeadSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::Linear,
            hidden: 128,
            out_dim: 64,
            untrained: UntrainedHead::Identity,
        }
    }
}

impl HeadSpec {
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        match self.architecture {
            Architecture::Identity => vec![input_dim, input_dim],
            Architecture::Linear => vec![input_dim, self.out_dim],
            Architecture::Mlp => vec![input_dim, self.hidden, self.out_dim],
        }
    }

    pub fn init(&self, input_dim: usize, seed: u64) -> Result<EmbeddingNetwork> {
        EmbeddingNetwork::init(self.architecture, &self.layer_dims(input_dim), seed)
    }

    fn untrained(&self, input_dim: usize, seed: u64) -> Result<EmbeddingNetwork> {
        match self.untrained {
            UntrainedHead::Identity => EmbeddingNetwork::identity(input_dim),
            UntrainedHead::Random => self.init(input_dim, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Backbone label written in reports.
    pub label: String,
    pub split_ratio: f64,
    pub head: HeadSpec,
    pub episodes: Vec<EpisodeConfig>,
    pub modes: Vec<Mode>,
    pub train: TrainConfig,
    pub eval_episodes: usize,
    pub threads: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "dataset",
        &[
            "source",
            "path",
            "label",
            "image_size",
            "classes",
            "counts",
            "dim",
            "separation",
            "sigma",
            "nuisance_dims",
            "nuisance_sigma",
            "split",
        ],
    ),
    ("embedding", &["head", "hidden", "out_dim", "untrained"]),
    ("episodes", &["n_way", "shots", "q_query"]),
    (
        "train",
        &[
            "episodes",
            "optimizer",
            "learning_rate",
            "beta1",
            "beta2",
            "epsilon",
            "val_every",
            "val_episodes",
        ],
    ),
    ("eval", &["episodes", "threads"]),
    ("experiment", &["seed", "modes", "out"]),
];

struct Fields<'a> {
    ini: &'a Ini,
}

impl<'a> Fields<'a> {
    fn raw(&self, section: &str, key: &str) -> Option<&'a str> {
        self.ini
            .section(Some(section))
            .and_then(|s| s.get(key))
            .map(str::trim)
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| field_error(section, key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|e| field_error(section, key, format!("cannot parse {s:?}: {e}")))
                })
                .collect(),
        }
    }
}

fn field_error(section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("[{section}] {key}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>, seed_override: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, seed_override)
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    /// Relative dataset paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("syntax: {e}")))?;
        let mut seen = Vec::new();
        for (section, props) in ini.iter() {
            if let Some(name) = section {
                if seen.contains(&name) {
                    return Err(Error::Config(format!("section [{name}] appears twice")));
                }
                seen.push(name);
            }
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(Error::Config(format!("key {key:?} outside any section")));
                }
                continue;
            };
            let Some((_, known)) = KEYS.iter().find(|(s, _)| *s == section) else {
                return Err(Error::Config(format!("unknown section [{section}]")));
            };
            for (key, _) in props.iter() {
                if !known.contains(&key) {
                    return Err(field_error(section, key, "unknown key"));
                }
            }
        }
        let f = Fields { ini: &ini };

        let source = f
            .raw("dataset", "source")
            .ok_or_else(|| field_error("dataset", "source", "required"))?;
        let resolve = |key: &str| -> Result<PathBuf> {
            let p = f
                .raw("dataset", key)
                .ok_or_else(|| field_error("dataset", key, "required for this source"))?;
            Ok(base_dir.join(p))
        };
        let dataset = match source {
            "synthetic" => {
                let d = SyntheticSpec::default();
                let spec = SyntheticSpec {
                    class_names: f.list("dataset", "classes", d.class_names)?,
                    counts: f.list("dataset", "counts", d.counts)?,
                    dim: f.parse("dataset", "dim", d.dim)?,
                    separation: f.parse("dataset", "separation", d.separation)?,
                    sigma: f.parse("dataset", "sigma", d.sigma)?,
                    nuisance_dims: f.parse("dataset", "nuisance_dims", d.nuisance_dims)?,
                    nuisance_sigma: f.parse("dataset", "nuisance_sigma", d.nuisance_sigma)?,
                };
                if spec.class_names.len() != spec.counts.len() {
                    return Err(field_error(
                        "dataset",
                        "counts",
                        format!("{} counts for {} classes", spec.counts.len(), spec.class_names.len()),
                    ));
                }
                if spec.dim == 0 {
                    return Err(field_error("dataset", "dim", "must be positive"));
                }
                if !(spec.sigma >= 0.0) || !(spec.nuisance_sigma >= 0.0) {
                    return Err(field_error("dataset", "sigma", "must be nonnegative"));
                }
                DatasetSource::Synthetic(spec)
            }
            "pfeb" => DatasetSource::Pfeb(resolve("path")?),
            "pgm" => {
                let image_size = f.parse("dataset", "image_size", 224usize)?;
                if image_size == 0 {
                    return Err(field_error("dataset", "image_size", "must be positive"));
                }
                DatasetSource::Pgm {
                    root: resolve("path")?,
                    image_size,
                }
            }
            other => {
                return Err(field_error(
                    "dataset",
                    "source",
                    format!("{other:?} is not one of synthetic, pfeb, pgm"),
                ))
            }
        };
        let label = f.parse("dataset", "label", source.to_string())?;
        if label.contains(',') || label.is_empty() {
            return Err(field_error("dataset", "label", "must be nonempty and contain no commas"));
        }
        let split_ratio = f.parse("dataset", "split", 0.8)?;
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(field_error("dataset", "split", "must lie in (0, 1)"));
        }

        let dh = HeadSpec::default();
        let head = HeadSpec {
            architecture: f.parse("embedding", "head", dh.architecture)?,
            hidden: f.parse("embedding", "hidden", dh.hidden)?,
            out_dim: f.parse("embedding", "out_dim", dh.out_dim)?,
            untrained: match f.raw("embedding", "untrained").unwrap_or("identity") {
                "identity" => UntrainedHead::Identity,
                "random" => UntrainedHead::Random,
                other => {
                    return Err(field_error(
                        "embedding",
                        "untrained",
                        format!("{other:?} is not identity or random"),
                    ))
                }
            },
        };
        if head.hidden == 0 || head.out_dim == 0 {
            return Err(field_error("embedding", "out_dim", "layer widths must be positive"));
        }

        let n_way = f.parse("episodes", "n_way", 3usize)?;
        let q_query = f.parse("episodes", "q_query", 10usize)?;
        let shots: Vec<usize> = f.list("episodes", "shots", vec![1, 5, 10, 20])?;
        if shots.is_empty() {
            return Err(field_error("episodes", "shots", "at least one episode config is required"));
        }
        let episodes = shots
            .iter()
            .map(|&k| EpisodeConfig::new(n_way, k, q_query))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| field_error("episodes", "shots", e))?;

        let dt = TrainConfig::default();
        let seed = match seed_override {
            Some(s) => s,
            None => f
                .raw("experiment", "seed")
                .ok_or_else(|| field_error("experiment", "seed", "required (or pass --seed)"))?
                .parse()
                .map_err(|e| field_error("experiment", "seed", e))?,
        };
        let train = TrainConfig {
            episodes_total: f.parse("train", "episodes", dt.episodes_total)?,
            optimizer: f.parse::<OptimizerKind>("train", "optimizer", dt.optimizer)?,
            learning_rate: f.parse("train", "learning_rate", dt.learning_rate)?,
            beta1: f.parse("train", "beta1", dt.beta1)?,
            beta2: f.parse("train", "beta2", dt.beta2)?,
            epsilon: f.parse("train", "epsilon", dt.epsilon)?,
            val_every: f.parse("train", "val_every", dt.val_every)?,
            val_episodes: f.parse("train", "val_episodes", dt.val_episodes)?,
            seed,
        };
        train
            .validate()
            .map_err(|e| Error::Config(format!("[train] {e}")))?;

        let eval_episodes = f.parse("eval", "episodes", 1000usize)?;
        if eval_episodes == 0 {
            return Err(field_error("eval", "episodes", "must be at least 1"));
        }
        let threads = f.parse("eval", "threads", 1usize)?.max(1);

        let modes: Vec<Mode> = match f.raw("experiment", "modes") {
            None => vec![Mode::WithoutTraining, Mode::WithTraining],
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| field_error("experiment", "modes", e)))
                .collect::<Result<_>>()?,
        };
        if modes.is_empty() {
            return Err(field_error("experiment", "modes", "at least one mode is required"));
        }
        let out_dir = PathBuf::from(f.raw("experiment", "out").unwrap_or("results"));

        Ok(Self {
            dataset,
            label,
            split_ratio,
            head,
            episodes,
            modes,
            train,
            eval_episodes,
            threads,
            seed,
            out_dir,
        })
    }

    /// Every setting that influences results, one `key=value` per line. Output
    /// location and thread count are left out.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        match &self.dataset {
            DatasetSource::Synthetic(d) => {
                writeln!(s, "dataset.source=synthetic").unwrap();
                writeln!(s, "dataset.classes={}", d.class_names.join(",")).unwrap();
                writeln!(s, "dataset.counts={:?}", d.counts).unwrap();
                writeln!(s, "dataset.dim={}", d.dim).unwrap();
                writeln!(s, "dataset.separation={:?}", d.separation).unwrap();
                writeln!(s, "dataset.sigma={:?}", d.sigma).unwrap();
                writeln!(s, "dataset.nuisance_dims={}", d.nuisance_dims).unwrap();
                writeln!(s, "dataset.nuisance_sigma={:?}", d.nuisance_sigma).unwrap();
            }
            DatasetSource::Pfeb(p) => writeln!(s, "dataset.source=pfeb:{}", p.display()).unwrap(),
            DatasetSource::Pgm { root, image_size } => {
                writeln!(s, "dataset.source=pgm:{}:{image_size}", root.display()).unwrap()
            }
        }
        writeln!(s, "dataset.label={}", self.label).unwrap();
        writeln!(s, "dataset.split={:?}", self.split_ratio).unwrap();
        writeln!(
            s,
            "embedding={}:{}:{}:{:?}",
            self.head.architecture.name(),
            self.head.hidden,
            self.head.out_dim,
            self.head.untrained
        )
        .unwrap();
        for e in &self.episodes {
            writeln!(s, "episodes={}:{}:{}", e.n_way, e.k_shot, e.q_query).unwrap();
        }
        let modes: Vec<&str> = self.modes.iter().map(|m| m.as_str()).collect();
        writeln!(s, "modes={}", modes.join(",")).unwrap();
        let t = &self.train;
        writeln!(
            s,
            "train={}:{:?}:{:?}:{:?}:{:?}:{:?}:{}:{}",
            t.episodes_total,
            t.optimizer,
            t.learning_rate,
            t.beta1,
            t.beta2,
            t.epsilon,
            t.val_every,
            t.val_episodes
        )
        .unwrap();
        writeln!(s, "eval.episodes={}", self.eval_episodes).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        s
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => spec.generate(labeled_seed(self.seed, "data")),
            DatasetSource::Pfeb(path) => load_embeddings(path),
            DatasetSource::Pgm { root, image_size } => {
                load_image_dataset(root)?.to_features(*image_size, *image_size)
            }
        }
    }

    fn cell_seed(&self, what: &str, cfg: &EpisodeConfig) -> u64 {
        labeled_seed(
            self.seed,
            &format!("{what}/{}-{}-{}", cfg.n_way, cfg.k_shot, cfg.q_query),
        )
    }

    fn train_config(&self, cfg: &EpisodeConfig) -> TrainConfig {
        TrainConfig {
            seed: self.cell_seed("train", cfg),
            ..self.train.clone()
        }
    }

    fn cell_name(&self, cfg: &EpisodeConfig) -> String {
        format!("{}_{}way_{}shot", self.label, cfg.n_way, cfg.k_shot)
    }
}

/// Maps an error to the process exit code reported by the binary.
pub fn exit_code(err: &Error) -> i32 {
    use Error::*;
    match err {
        Config(_) | InvalidTrainConfig(_) => 2,
        BadMagic { .. }
        | UnsupportedVersion(_)
        | TruncatedFile { .. }
        | ClassIndexOutOfRange { .. }
        | InvalidClassName(_)
        | MalformedPgm { .. }
        | EmptyDataset(_)
        | ClassTooSmall { .. } => 3,
        InvalidEpisodeConfig(_) | InsufficientClasses { .. } | InsufficientSamples { .. } => 4,
        EmptyClass { .. }
        | DimensionMismatch { .. }
        | NonFiniteInput { .. }
        | EmptyQuerySet
        | LabelOutOfRange { .. }
        | InvalidArchitecture(_)
        | ZeroTargetSize
        | ShapeMismatch { .. }
        | EmptyMatrix => 5,
        Io { .. } => 6,
    }
}

/// Everything a run produced, with the paths written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvalReport,
    pub histories: Vec<(EpisodeConfig, TrainHistory)>,
    pub files: Vec<PathBuf>,
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn manifest(config: &ExperimentConfig, dataset: &LabeledDataset, command: &str) -> String {
    let mut m = String::new();
    writeln!(m, "command={command}").unwrap();
    writeln!(m, "config_hash={}", config.hash()).unwrap();
    writeln!(m, "seed={}", config.seed).unwrap();
    writeln!(m, "version={} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(m, "checkpoint_format=PFNW v{}", crate::embed::CHECKPOINT_VERSION).unwrap();
    writeln!(m, "embedding_format=PFEB v{}", crate::data::pfeb::VERSION).unwrap();
    writeln!(m, "dataset_examples={}", dataset.len()).unwrap();
    writeln!(m, "dataset_dim={}", dataset.dim()).unwrap();
    writeln!(m, "dataset_classes={}", dataset.class_names.join(",")).unwrap();
    m.push_str("\n# effective configuration\n");
    m.push_str(&config.canonical());
    m
}

/// Meta-trains one head for `cfg` and writes its checkpoint and history.
fn train_cell(
    config: &ExperimentConfig,
    cfg: &EpisodeConfig,
    train: &LabeledDataset,
    val: &LabeledDataset,
    files: &mut Vec<PathBuf>,
) -> Result<(EmbeddingNetwork, TrainHistory)> {
    let initial = config.head.init(train.dim(), config.cell_seed("init", cfg))?;
    let (net, history) = meta_train(train, val, cfg, &config.train_config(cfg), &initial)?;
    let name = config.cell_name(cfg);
    write(config.out_dir.join(format!("checkpoint_{name}.pfnw")), net.to_bytes(), files)?;
    write(config.out_dir.join(format!("history_{name}.csv")), history.to_csv(), files)?;
    Ok((net, history))
}

fn write_report(config: &ExperimentConfig, report: &EvalReport, files: &mut Vec<PathBuf>) -> Result<()> {
    write(config.out_dir.join("report.csv"), report.to_csv(), files)?;
    write(config.out_dir.join("confusion.csv"), report.confusion_csv(), files)
}

/// The full grid: every episode config under every mode. With-training cells
/// meta-train on the training split; every cell is evaluated on the held-out
/// split with the same evaluation seed for both modes.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let dataset = config.load_dataset()?;
    let (train, val) = split_train_val(&dataset, config.split_ratio, labeled_seed(config.seed, "split"))?;
    ensure_dir(&config.out_dir)?;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut histories = Vec::new();

    for cfg in &config.episodes {
        let eval_seed = config.cell_seed("eval", cfg);
        for &mode in &config.modes {
            let net = match mode {
                Mode::WithoutTraining => config
                    .head
                    .untrained(dataset.dim(), config.cell_seed("init", cfg))?,
                Mode::WithTraining => {
                    let (net, history) = train_cell(config, cfg, &train, &val, &mut files)?;
                    histories.push((*cfg, history));
                    net
                }
            };
            let eval = evaluate(&val, &net, cfg, config.eval_episodes, eval_seed, config.threads)?;
            rows.push(ReportRow::from_evaluation(&config.label, cfg, mode, &eval));
        }
    }

    let report = summarize(rows, dataset.class_names.clone(), config.seed, config.hash());
    write_report(config, &report, &mut files)?;
    write(config.out_dir.join("manifest.txt"), manifest(config, &dataset, "run"), &mut files)?;
    Ok(RunOutput {
        report,
        histories,
        files,
    })
}

/// Meta-training only: one checkpoint and history per episode config.
pub fn run_training(config: &ExperimentConfig) -> Result<RunOutput> {
    let dataset = config.load_dataset()?;
    let (train, val) = split_train_val(&dataset, config.split_ratio, labeled_seed(config.seed, "split"))?;
    ensure_dir(&config.out_dir)?;
    let mut files = Vec::new();
    let mut histories = Vec::new();
    for cfg in &config.episodes {
        let (_, history) = train_cell(config, cfg, &train, &val, &mut files)?;
        histories.push((*cfg, history));
    }
    write(config.out_dir.join("manifest.txt"), manifest(config, &dataset, "train"), &mut files)?;
    Ok(RunOutput {
        report: summarize(Vec::new(), dataset.class_names.clone(), config.seed, config.hash()),
        histories,
        files,
    })
}

/// Evaluation only, on the held-out split. With a checkpoint the rows are
/// labelled `with_training`; otherwise the untrained head is used.
pub fn run_evaluation(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<RunOutput> {
    let dataset = config.load_dataset()?;
    let (_, val) = split_train_val(&dataset, config.split_ratio, labeled_seed(config.seed, "split"))?;
    ensure_dir(&config.out_dir)?;
    let loaded = checkpoint.map(EmbeddingNetwork::load).transpose()?;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for cfg in &config.episodes {
        let (net, mode) = match &loaded {
            Some(net) => (net.clone(), Mode::WithTraining),
            None => (
                config.head.untrained(dataset.dim(), config.cell_seed("init", cfg))?,
                Mode::WithoutTraining,
            ),
        };
        let eval = evaluate(&val, &net, cfg, config.eval_episodes, config.cell_seed("eval", cfg), config.threads)?;
        rows.push(ReportRow::from_evaluation(&config.label, cfg, mode, &eval));
    }
    let report = summarize(rows, dataset.class_names.clone(), config.seed, config.hash());
    write_report(config, &report, &mut files)?;
    write(config.out_dir.join("manifest.txt"), manifest(config, &dataset, "eval"), &mut files)?;
    Ok(RunOutput {
        report,
        histories: Vec::new(),
        files,
    })
}

/// Writes the configured dataset as a PFEB file.
pub fn gen_synthetic(config: &ExperimentConfig, out: &Path) -> Result<LabeledDataset> {
    if !matches!(config.dataset, DatasetSource::Synthetic(_)) {
        return Err(Error::Config("[dataset] source: gen-synthetic needs source = synthetic".into()));
    }
    let dataset = config.load_dataset()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_embeddings(&dataset, out)?;
    Ok(dataset)
}
