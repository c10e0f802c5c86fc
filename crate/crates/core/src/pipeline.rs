//! End-to-end experiments: configuration, training runs, ablations, the
//! λ₁/λ₂ sweep and evaluation of saved checkpoints. Every entry point is
//! deterministic for a fixed seed and writes schema-stable CSV files.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::datasets::{load_csv, load_idx, subsample_per_class, synthesize_subspaces, DataSet};
use crate::error::{Error, Result};
use crate::metrics::ClusterReport;
use crate::model::{forward, Hyperparams, ModelState, StructureVariant};
use crate::numerics::Matrix;
use crate::spectral::{cluster, postprocess_affinity};
use crate::trainer::{finetune, load_checkpoint, pretrain, save_checkpoint, FinetuneRecord, TrainConfig};

/// Which coefficient graph is clustered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// Attention-weighted `C_F`.
    #[default]
    Adaptive,
    /// `0.5·C_A + 0.5·C_S`.
    Equal,
    /// `C_A` alone, trained without the structure terms.
    AttributeOnly,
    /// `C_S` alone.
    StructureOnly,
}

impl FusionMode {
    /// Ablation order.
    pub const ALL: [FusionMode; 4] = [
        FusionMode::AttributeOnly,
        FusionMode::StructureOnly,
        FusionMode::Equal,
        FusionMode::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Adaptive => "adaptive",
            FusionMode::Equal => "equal",
            FusionMode::AttributeOnly => "attribute_only",
            FusionMode::StructureOnly => "structure_only",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("fusion", format!("unknown mode `{s}`")))
    }
}

/// Parameters of a generated union-of-subspaces dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub k: usize,
    pub sub_dim: usize,
    pub ambient: usize,
    pub per_cluster: usize,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            k: 4,
            sub_dim: 3,
            ambient: 20,
            per_cluster: 40,
            noise: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Keep only the first `m` samples of every class.
        per_class: Option<usize>,
    },
    Csv {
        path: PathBuf,
        labels_column: Option<usize>,
    },
    /// Generated from the run seed.
    Synthetic(SyntheticSpec),
}

/// Default λ grid of the sweep.
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: DatasetSource,
    /// Global min-max scaling of the features to `[0, 1]`.
    pub normalize: bool,
    /// Number of clusters; defaults to the number of label classes.
    pub clusters: Option<usize>,
    /// Encoder widths after the input layer; the last is the latent size.
    pub layers: Vec<usize>,
    pub train: TrainConfig,
    pub fusion: FusionMode,
    pub topk: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub sweep_lambda1: Vec<f64>,
    pub sweep_lambda2: Vec<f64>,
    /// Input checkpoint for `finetune` and `eval`.
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    /// Four 3-dimensional subspaces in `R^20`, 40 points each.
    pub fn synthetic_default() -> Self {
        Self {
            source: DatasetSource::Synthetic(SyntheticSpec::default()),
            normalize: false,
            clusters: None,
            layers: vec![32, 16],
            train: TrainConfig::default(),
            fusion: FusionMode::Adaptive,
            topk: None,
            out: None,
            workers: 1,
            sweep_lambda1: DEFAULT_LAMBDA_GRID.to_vec(),
            sweep_lambda2: DEFAULT_LAMBDA_GRID.to_vec(),
            checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.layers.is_empty() || self.layers.contains(&0) {
            return Err(Error::config("layers", "need at least one positive width"));
        }
        if self.clusters == Some(0) {
            return Err(Error::config("clusters", "must be >= 1"));
        }
        if self.topk == Some(0) {
            return Err(Error::config("topk", "must be >= 1 or `none`"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be >= 1"));
        }
        if let DatasetSource::Synthetic(s) = &self.source {
            if s.k == 0 || s.sub_dim == 0 || s.per_cluster == 0 || s.sub_dim > s.ambient {
                return Err(Error::config("synth", format!("invalid synthetic parameters {s:?}")));
            }
            if !(s.noise >= 0.0) {
                return Err(Error::config("synth_noise", "must be >= 0"));
            }
        }
        for (field, grid) in [
            ("sweep_lambda1", &self.sweep_lambda1),
            ("sweep_lambda2", &self.sweep_lambda2),
        ] {
            if grid.is_empty() || grid.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::config(field, "need a non-empty list of finite values >= 0"));
            }
        }
        Ok(())
    }

    /// Builds a configuration from `key = value` pairs; later pairs win.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut cfg = Self::synthetic_default();
        let mut dataset: Option<String> = None;
        let mut synth = SyntheticSpec::default();
        let (mut images, mut labels, mut per_class) = (None, None, None);
        let (mut csv_path, mut labels_column) = (None, None);
        let mut seen_source_keys: Vec<(&'static str, String)> = Vec::new();

        for (k, v) in pairs {
            let (key, value) = (k.as_ref().trim(), v.as_ref().trim());
            let hp = &mut cfg.train.hyperparams;
            let source_kind = |s: &'static str| (s, key.to_string());
            match key {
                "dataset" => dataset = Some(value.to_string()),
                "idx_images" => {
                    images = Some(PathBuf::from(value));
                    seen_source_keys.push(source_kind("idx"));
                }
                "idx_labels" => {
                    labels = Some(PathBuf::from(value));
                    seen_source_keys.push(source_kind("idx"));
                }
                "per_class" => {
                    per_class = parse_optional(key, value)?;
                    seen_source_keys.push(source_kind("idx"));
                }
                "csv_path" => {
                    csv_path = Some(PathBuf::from(value));
                    seen_source_keys.push(source_kind("csv"));
                }
                "csv_labels_column" => {
                    labels_column = parse_optional(key, value)?;
                    seen_source_keys.push(source_kind("csv"));
                }
                "synth_k" | "synth_sub_dim" | "synth_ambient" | "synth_per_cluster" | "synth_noise" => {
                    match key {
                        "synth_k" => synth.k = parse(key, value)?,
                        "synth_sub_dim" => synth.sub_dim = parse(key, value)?,
                        "synth_ambient" => synth.ambient = parse(key, value)?,
                        "synth_per_cluster" => synth.per_cluster = parse(key, value)?,
                        _ => synth.noise = parse(key, value)?,
                    }
                    seen_source_keys.push(source_kind("synthetic"));
                }
                "normalize" => cfg.normalize = parse(key, value)?,
                "clusters" => cfg.clusters = parse_optional(key, value)?,
                "layers" => cfg.layers = parse_list(key, value)?,
                "pretrain_epochs" => cfg.train.pretrain_epochs = parse(key, value)?,
                "finetune_epochs" => cfg.train.finetune_epochs = parse(key, value)?,
                "lr" => cfg.train.lr = parse(key, value)?,
                "beta1" => cfg.train.beta1 = parse(key, value)?,
                "beta2" => cfg.train.beta2 = parse(key, value)?,
                "eps" => cfg.train.eps = parse(key, value)?,
                "seed" => cfg.train.seed = parse(key, value)?,
                "log_every" => cfg.train.log_every = parse(key, value)?,
                "gamma" => hp.gamma = parse(key, value)?,
                "lambda1" => hp.lambda1 = parse(key, value)?,
                "lambda2" => hp.lambda2 = parse(key, value)?,
                "structure_variant" => hp.structure_variant = parse(key, value)?,
                "structure_gradient" => hp.structure_gradient = parse(key, value)?,
                "fusion_in_loss" => hp.fusion_in_loss = parse(key, value)?,
                "fusion" => cfg.fusion = parse(key, value)?,
                "topk" => cfg.topk = parse_optional(key, value)?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                "workers" => cfg.workers = parse(key, value)?,
                "sweep_lambda1" => cfg.sweep_lambda1 = parse_list(key, value)?,
                "sweep_lambda2" => cfg.sweep_lambda2 = parse_list(key, value)?,
                "checkpoint" => cfg.checkpoint = Some(PathBuf::from(value)),
                _ => return Err(Error::config(key, "unknown key")),
            }
        }

        let kind = dataset.unwrap_or_else(|| "synthetic".into());
        if let Some((_, key)) = seen_source_keys.iter().find(|(k, _)| *k != kind) {
            return Err(Error::config(
                key.as_str(),
                format!("does not apply to dataset `{kind}`"),
            ));
        }
        cfg.source = match kind.as_str() {
            "synthetic" => DatasetSource::Synthetic(synth),
            "idx" => DatasetSource::Idx {
                images: images.ok_or_else(|| Error::config("idx_images", "required for dataset `idx`"))?,
                labels: labels.ok_or_else(|| Error::config("idx_labels", "required for dataset `idx`"))?,
                per_class,
            },
            "csv" => DatasetSource::Csv {
                path: csv_path.ok_or_else(|| Error::config("csv_path", "required for dataset `csv`"))?,
                labels_column,
            },
            other => return Err(Error::config("dataset", format!("unknown source `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.train.hyperparams
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            col: 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value.eq_ignore_ascii_case("none") || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

/// Loads (or generates) the dataset described by `cfg`.
pub fn load_dataset(cfg: &RunConfig) -> Result<DataSet> {
    let data = match &cfg.source {
        DatasetSource::Idx {
            images,
            labels,
            per_class,
        } => {
            let d = load_idx(images, labels)?;
            match per_class {
                Some(m) => subsample_per_class(&d, *m)?,
                None => d,
            }
        }
        DatasetSource::Csv { path, labels_column } => load_csv(path, *labels_column)?,
        DatasetSource::Synthetic(s) => {
            synthesize_subspaces(s.k, s.sub_dim, s.ambient, s.per_cluster, s.noise, cfg.train.seed)?
        }
    };
    Ok(if cfg.normalize { data.normalize() } else { data })
}

fn cluster_count(cfg: &RunConfig, data: &DataSet) -> Result<usize> {
    match (cfg.clusters, data.labels.is_some()) {
        (Some(k), _) => Ok(k),
        (None, true) => Ok(data.k),
        (None, false) => Err(Error::config("clusters", "required for unlabeled data")),
    }
}

/// Hyperparameters used for training under `mode`: attribute-only runs
/// switch the structure branch off.
pub fn training_hyperparams(hp: &Hyperparams, mode: FusionMode) -> Hyperparams {
    match mode {
        FusionMode::AttributeOnly => Hyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            fusion_in_loss: false,
            ..*hp
        },
        _ => *hp,
    }
}

/// The coefficient matrix handed to spectral clustering under `mode`.
pub fn coefficient_graph(state: &ModelState, x: &Matrix, hp: &Hyperparams, mode: FusionMode) -> Result<Matrix> {
    let c_a = &state.c_a.coeff;
    let c_s = &state.c_s.coeff;
    match mode {
        FusionMode::AttributeOnly => Ok(c_a.clone()),
        FusionMode::StructureOnly => Ok(c_s.clone()),
        FusionMode::Equal => Ok(Matrix::from_fn(c_a.rows(), c_a.cols(), |i, j| {
            0.5 * c_a.get(i, j) + 0.5 * c_s.get(i, j)
        })),
        FusionMode::Adaptive => forward(state, x, hp).map(|c| c.c_f),
    }
}

/// Clustering of a trained state.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub graph: Matrix,
    pub labels: Vec<usize>,
    /// Present when the data carries ground truth.
    pub report: Option<ClusterReport>,
}

pub fn evaluate_state(state: &ModelState, data: &DataSet, cfg: &RunConfig, mode: FusionMode) -> Result<Evaluation> {
    let k = cluster_count(cfg, data)?;
    let hp = training_hyperparams(cfg.hyperparams(), mode);
    let graph = coefficient_graph(state, &data.features, &hp, mode)?;
    let affinity = postprocess_affinity(&graph, cfg.topk)?;
    let labels = cluster(&affinity, k, cfg.train.seed)?;
    let report = match &data.labels {
        Some(y) => Some(ClusterReport::evaluate(y, labels.clone())?),
        None => None,
    };
    Ok(Evaluation { graph, labels, report })
}

/// Clusters the raw features with the cosine affinity, through the same
/// post-processing and spectral step.
pub fn cosine_baseline(data: &DataSet, cfg: &RunConfig) -> Result<Evaluation> {
    let k = cluster_count(cfg, data)?;
    let graph = crate::spectral::cosine_affinity(&data.features)?;
    let labels = cluster(&postprocess_affinity(&graph, cfg.topk)?, k, cfg.train.seed)?;
    let report = match &data.labels {
        Some(y) => Some(ClusterReport::evaluate(y, labels.clone())?),
        None => None,
    };
    Ok(Evaluation { graph, labels, report })
}

/// Seeded initial state sized for `data`.
pub fn init_state(cfg: &RunConfig, data: &DataSet) -> Result<ModelState> {
    let mut dims = vec![data.dim()];
    dims.extend_from_slice(&cfg.layers);
    ModelState::init(&dims, data.n(), cfg.train.seed)
}

fn train_config(cfg: &RunConfig, hp: Hyperparams) -> TrainConfig {
    TrainConfig {
        hyperparams: hp,
        ..cfg.train.clone()
    }
}

/// Result of a full training run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub state: ModelState,
    pub pretrain_history: Vec<f64>,
    pub finetune_history: Vec<FinetuneRecord>,
    pub evaluation: Evaluation,
}

impl RunOutput {
    /// Panics when the data had no labels.
    pub fn report(&self) -> &ClusterReport {
        self.evaluation.report.as_ref().expect("labeled data")
    }
}

/// Pretrain, finetune, fuse, cluster and score; writes the artifacts when
/// `cfg.out` is set.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let mut state = init_state(cfg, &data)?;
    let pretrain_history = pretrain(&mut state, &data, &cfg.train)?;
    let out = finetune_and_evaluate(cfg, &data, state, pretrain_history, *cfg.hyperparams(), cfg.fusion)?;
    if let Some(dir) = &cfg.out {
        write_run_artifacts(dir, &out)?;
    }
    Ok(out)
}

fn finetune_and_evaluate(
    cfg: &RunConfig,
    data: &DataSet,
    mut state: ModelState,
    pretrain_history: Vec<f64>,
    hp: Hyperparams,
    mode: FusionMode,
) -> Result<RunOutput> {
    let train = train_config(cfg, training_hyperparams(&hp, mode));
    let finetune_history = finetune(&mut state, data, &train)?;
    let mut eval_cfg = cfg.clone();
    eval_cfg.train.hyperparams = hp;
    let evaluation = evaluate_state(&state, data, &eval_cfg, mode)?;
    Ok(RunOutput {
        state,
        pretrain_history,
        finetune_history,
        evaluation,
    })
}

/// Trains only the auto-encoder; writes `checkpoint.bin` and
/// `loss_history.csv` when `cfg.out` is set.
pub fn run_pretrain(cfg: &RunConfig) -> Result<(ModelState, Vec<f64>)> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let mut state = init_state(cfg, &data)?;
    let history = pretrain(&mut state, &data, &cfg.train)?;
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        save_checkpoint(&state, dir.join("checkpoint.bin"))?;
        fs::write(dir.join("loss_history.csv"), loss_history_csv(&history, &[]))?;
    }
    Ok((state, history))
}

/// Fine-tunes the state in `cfg.checkpoint` and evaluates it.
pub fn run_finetune(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let state = load_compatible(cfg, &data)?;
    let out = finetune_and_evaluate(cfg, &data, state, Vec::new(), *cfg.hyperparams(), cfg.fusion)?;
    if let Some(dir) = &cfg.out {
        write_run_artifacts(dir, &out)?;
    }
    Ok(out)
}

fn load_compatible(cfg: &RunConfig, data: &DataSet) -> Result<ModelState> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::config("checkpoint", "required"))?;
    let state = load_checkpoint(path)?;
    let expect = (state.ae.input_dim(), state.n());
    let found = (data.dim(), data.n());
    if expect != found {
        return Err(Error::config(
            "checkpoint",
            format!(
                "model expects {}x{} input (dims x samples), dataset is {}x{}",
                expect.0, expect.1, found.0, found.1
            ),
        ));
    }
    Ok(state)
}

/// Clusters a saved checkpoint without training.
pub fn run_eval(cfg: &RunConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let state = load_compatible(cfg, &data)?;
    let evaluation = evaluate_state(&state, &data, cfg, cfg.fusion)?;
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        write_evaluation(dir, &evaluation)?;
    }
    Ok(evaluation)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    /// `fusion` or `structure`.
    pub group: &'static str,
    pub case: String,
    pub report: ClusterReport,
}

/// Four fusion modes under the configured structure variant, then the four
/// structure variants under adaptive fusion. One shared pretraining.
pub fn ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    if data.labels.is_none() {
        return Err(Error::config("dataset", "ablation needs ground-truth labels"));
    }
    let mut pretrained = init_state(cfg, &data)?;
    pretrain(&mut pretrained, &data, &cfg.train)?;
    let hp = *cfg.hyperparams();

    let mut rows = Vec::new();
    let attribute = finetune_and_evaluate(
        cfg,
        &data,
        pretrained.clone(),
        Vec::new(),
        hp,
        FusionMode::AttributeOnly,
    )?;
    rows.push(AblationRow {
        group: "fusion",
        case: FusionMode::AttributeOnly.name().into(),
        report: attribute.report().clone(),
    });
    // one joint fine-tuning serves the remaining three fusion rows
    let joint = finetune_and_evaluate(cfg, &data, pretrained.clone(), Vec::new(), hp, FusionMode::Adaptive)?;
    for mode in [FusionMode::StructureOnly, FusionMode::Equal, FusionMode::Adaptive] {
        let ev = evaluate_state(&joint.state, &data, cfg, mode)?;
        rows.push(AblationRow {
            group: "fusion",
            case: mode.name().into(),
            report: ev.report.expect("labeled data"),
        });
    }
    for variant in StructureVariant::ALL {
        let report = if variant == hp.structure_variant {
            joint.report().clone()
        } else {
            let vhp = Hyperparams {
                structure_variant: variant,
                ..hp
            };
            let out = finetune_and_evaluate(cfg, &data, pretrained.clone(), Vec::new(), vhp, FusionMode::Adaptive)?;
            out.report().clone()
        };
        rows.push(AblationRow {
            group: "structure",
            case: variant.name().into(),
            report,
        });
    }
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("group,case,acc,nmi,pur\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                r.group, r.case, r.report.acc, r.report.nmi, r.report.pur
            );
        }
        fs::write(dir.join("ablation.csv"), csv)?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub report: ClusterReport,
}

/// One fine-tuning per `(λ₁, λ₂)` cell from a shared pretrained state,
/// on up to `cfg.workers` threads. Rows come back in grid order
/// (λ₁ outer, λ₂ inner) whatever the completion order.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    if data.labels.is_none() {
        return Err(Error::config("dataset", "sweep needs ground-truth labels"));
    }
    let mut pretrained = init_state(cfg, &data)?;
    pretrain(&mut pretrained, &data, &cfg.train)?;

    let cells: Vec<(f64, f64)> = cfg
        .sweep_lambda1
        .iter()
        .flat_map(|&l1| cfg.sweep_lambda2.iter().map(move |&l2| (l1, l2)))
        .collect();
    let results: Mutex<Vec<Option<Result<ClusterReport>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.min(cells.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(lambda1, lambda2)) = cells.get(i) else {
                    break;
                };
                let hp = Hyperparams {
                    lambda1,
                    lambda2,
                    ..*cfg.hyperparams()
                };
                let r = finetune_and_evaluate(cfg, &data, pretrained.clone(), Vec::new(), hp, cfg.fusion)
                    .map(|o| o.report().clone());
                log::info!("sweep cell λ1={lambda1} λ2={lambda2} done");
                results.lock().expect("sweep results")[i] = Some(r);
            });
        }
    });

    let mut rows = Vec::with_capacity(cells.len());
    for ((lambda1, lambda2), r) in cells.into_iter().zip(results.into_inner().expect("sweep results")) {
        let report = r.expect("every cell ran")?;
        rows.push(SweepRow {
            lambda1,
            lambda2,
            report,
        });
    }
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("lambda1,lambda2,acc,nmi,pur\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                r.lambda1, r.lambda2, r.report.acc, r.report.nmi, r.report.pur
            );
        }
        fs::write(dir.join("sweep.csv"), csv)?;
    }
    Ok(rows)
}

/// `loss_history.csv` body. Pretraining rows leave the joint terms empty.
pub fn loss_history_csv(pretrain: &[f64], finetune: &[FinetuneRecord]) -> String {
    let mut s = String::from("stage,epoch,total,ae,reg_a,se_a,reg_s,se_s,fusion,c_s_grad_norm\n");
    for (e, l) in pretrain.iter().enumerate() {
        let _ = writeln!(s, "pretrain,{e},{l},{l},,,,,,");
    }
    for (e, r) in finetune.iter().enumerate() {
        let t = &r.terms;
        let _ = writeln!(
            s,
            "finetune,{e},{},{},{},{},{},{},{},{}",
            r.total, t.ae, t.reg_a, t.se_a, t.reg_s, t.se_s, t.fusion, r.c_s_grad_norm
        );
    }
    s
}

/// Matrix as CSV rounded to 9 significant digits, with a `c0,c1,…` header.
pub fn matrix_csv(m: &Matrix) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 16);
    let header: Vec<String> = (0..m.cols()).map(|j| format!("c{j}")).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:.8e}");
        }
        s.push('\n');
    }
    s
}

fn write_evaluation(dir: &Path, ev: &Evaluation) -> Result<()> {
    fs::write(dir.join("affinity.csv"), matrix_csv(&ev.graph))?;
    let mut labels = String::from("sample,cluster\n");
    for (i, l) in ev.labels.iter().enumerate() {
        let _ = writeln!(labels, "{i},{l}");
    }
    fs::write(dir.join("labels.csv"), labels)?;
    if let Some(r) = &ev.report {
        fs::write(
            dir.join("report.csv"),
            format!("acc,nmi,pur\n{},{},{}\n", r.acc, r.nmi, r.pur),
        )?;
        let k = r.confusion.len();
        let mut conf = String::from("class");
        for j in 0..k {
            let _ = write!(conf, ",cluster{j}");
        }
        conf.push('\n');
        for (t, row) in r.confusion.iter().enumerate() {
            let _ = write!(conf, "{t}");
            for c in row {
                let _ = write!(conf, ",{c}");
            }
            conf.push('\n');
        }
        fs::write(dir.join("confusion.csv"), conf)?;
    }
    Ok(())
}

/// Writes `report.csv`, `confusion.csv`, `labels.csv`, `affinity.csv`,
/// `loss_history.csv` and `checkpoint.bin` into `dir`.
pub fn write_run_artifacts(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_evaluation(dir, &out.evaluation)?;
    fs::write(
        dir.join("loss_history.csv"),
        loss_history_csv(&out.pretrain_history, &out.finetune_history),
    )?;
    save_checkpoint(&out.state, dir.join("checkpoint.bin"))
}
