//! The `qnbm` experiment runner.
//!
//! Commands read a JSON [`ExperimentConfig`], run to completion in memory and
//! only then write their artifacts, so a failed run leaves no partial output.
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
//! assertion failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::{bars_and_stripes, cardinality, discrete_gaussian, DiscreteDistribution, GaussianSpec};
use crate::error::{Error, Result};
use crate::linearized::{bayes_forward_exact, build_bayes_net, forward_linear_exact};
use crate::network::{NetworkTopology, Parameters};
use crate::rng;
use crate::training::{self, LossMode, TrainConfig, TrainRecord, TrialStats};

/// Environment variable naming the directory under which runs without an
/// explicit output directory are written.
pub const OUTPUT_ROOT_ENV: &str = "QNBM_OUTPUT_ROOT";
/// Output root used when neither the config nor the environment names one.
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
/// Maximum elementwise deviation accepted by `bayes-check`.
pub const BAYES_CHECK_TOL: f64 = 1e-9;
pub const DEFAULT_NUM_TRIALS: usize = 5;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Target distribution, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    Bas {
        rows: usize,
        cols: usize,
    },
    Cardinality {
        num_bits: usize,
        c: usize,
    },
    Gaussian {
        num_bits: usize,
        /// Defaults to the centre `(2^n - 1) / 2`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
        std: f64,
    },
}

impl TargetSpec {
    pub fn build(&self) -> Result<DiscreteDistribution> {
        match *self {
            TargetSpec::Bas { rows, cols } => bars_and_stripes(rows, cols),
            TargetSpec::Cardinality { num_bits, c } => cardinality(num_bits, c),
            TargetSpec::Gaussian { num_bits, mean, std } => {
                let mut spec = GaussianSpec::centered(num_bits, std);
                if let Some(m) = mean {
                    spec.mean = m;
                }
                discrete_gaussian(&spec)
            }
        }
    }

    fn materialized(&self) -> Self {
        match *self {
            TargetSpec::Gaussian { num_bits, mean: None, std } => TargetSpec::Gaussian {
                num_bits,
                mean: Some(GaussianSpec::centered(num_bits, std).mean),
                std,
            },
            ref other => other.clone(),
        }
    }
}

/// On-disk experiment description. Omitted hyperparameters take the library
/// defaults; `fd_step` defaults according to `loss_mode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: NetworkTopology,
    pub target: TargetSpec,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_shots")]
    pub shots_per_iteration: u64,
    #[serde(default = "default_loss_mode")]
    pub loss_mode: LossMode,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub clamp_params: bool,
    #[serde(default = "default_init_half_width")]
    pub init_half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_trials: Option<usize>,
}

fn default_iterations() -> usize {
    training::DEFAULT_ITERATIONS
}
fn default_shots() -> u64 {
    training::DEFAULT_SHOTS_PER_ITERATION
}
fn default_loss_mode() -> LossMode {
    LossMode::Exact
}
fn default_learning_rate() -> f64 {
    training::DEFAULT_LEARNING_RATE
}
fn default_epsilon() -> f64 {
    training::DEFAULT_EPSILON
}
fn default_true() -> bool {
    true
}
fn default_init_half_width() -> f64 {
    training::INIT_HALF_WIDTH
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Copy with every default written out, as recorded in run manifests.
    pub fn materialized(&self) -> Self {
        let mut c = self.clone();
        c.fd_step = Some(self.fd_step.unwrap_or_else(|| self.loss_mode.default_fd_step()));
        c.target = self.target.materialized();
        c
    }

    /// Validated training configuration.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            topology: self.topology.clone(),
            target: self.target.build()?,
            iterations: self.iterations,
            shots_per_iteration: self.shots_per_iteration,
            loss_mode: self.loss_mode,
            learning_rate: self.learning_rate,
            fd_step: self.fd_step.unwrap_or_else(|| self.loss_mode.default_fd_step()),
            epsilon: self.epsilon,
            seed: self.seed,
            clamp_params: self.clamp_params,
            init_half_width: self.init_half_width,
        };
        config.validate()?;
        Ok(config)
    }

    /// SHA-256 of the compact JSON of the materialized config, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(&self.materialized())?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

/// Reproduction record written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

impl Manifest {
    fn new(command: &str, config: &ExperimentConfig, seeds: Vec<u64>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: config.hash()?,
            seeds,
            config: config.materialized(),
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "qnbm", version, about = "Quantum neuron Born machine experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train once from a config file.
    Train {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Independent trainings with seeds seed, seed+1, .. and their statistics.
    Trials {
        config: PathBuf,
        /// Number of trials; defaults to the config's `num_trials`, then 5.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare the Bayesian network against the linearized QNBM on random
    /// instances.
    BayesCheck {
        /// Layer sizes, e.g. `3,2` or `2,2,2`.
        #[arg(long, value_delimiter = ',', required = true)]
        topology: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Swap one CPT row per instance before comparing.
        #[arg(long, hide = true)]
        corrupt_cpt: bool,
    },
    /// Write a benchmark distribution as `bitstring,probability` CSV.
    Dist {
        #[arg(long, value_enum)]
        kind: DistKind,
        /// bas: ROWS COLS; cardinality: BITS C; gaussian: BITS [MEAN] STD.
        #[arg(required = true, num_args = 1..=3, allow_negative_numbers = true)]
        params: Vec<f64>,
        /// CSV path; a `.meta.json` sidecar is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistKind {
    Bas,
    Cardinality,
    Gaussian,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ImpossiblePostSelection { .. }
            | Error::TangentPole(_)
            | Error::NoAcceptedShots { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    match command {
        Command::Train { config, out_dir } => cmd_train(&config, out_dir, out),
        Command::Trials { config, trials, out_dir } => cmd_trials(&config, trials, out_dir, out),
        Command::BayesCheck { topology, seed, instances, corrupt_cpt } => {
            cmd_bayes_check(topology, seed, instances, corrupt_cpt, out)
        }
        Command::Dist { kind, params, out: path } => cmd_dist(kind, &params, path, out),
    }
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

fn resolve_out_dir(
    cli_dir: Option<PathBuf>,
    config: &ExperimentConfig,
    command: &str,
) -> Result<PathBuf> {
    if let Some(d) = cli_dir.or_else(|| config.output_dir.clone()) {
        return Ok(d);
    }
    let hash = config.hash()?;
    Ok(output_root().join(format!("{command}-{}-seed{}", &hash[..12], config.seed)))
}

fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn record_files(record: &TrainRecord, prefix: &str) -> Result<Vec<(String, Vec<u8>)>> {
    Ok(vec![
        (format!("{prefix}train_record.json"), json_bytes(record)?),
        (format!("{prefix}kl_history.csv"), record.kl_history_csv().into_bytes()),
    ])
}

pub fn cmd_train(
    config_path: &Path,
    out_dir: Option<PathBuf>,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let config = ExperimentConfig::load(config_path)?;
    let train_config = config.train_config()?;
    let dir = resolve_out_dir(out_dir, &config, "train")?;

    let record = training::train(&train_config)?;
    if !record.final_kl.is_finite() {
        return Err(Failure::numerical(format!("final KL is {}", record.final_kl)));
    }

    let mut files = record_files(&record, "")?;
    let manifest = Manifest::new("train", &config, vec![config.seed])?;
    files.push(("manifest.json".into(), json_bytes(&manifest)?));
    write_all(&dir, &files)?;

    let _ = writeln!(out, "final_kl {}", record.final_kl);
    let _ = writeln!(out, "output {}", dir.display());
    Ok(())
}

pub fn cmd_trials(
    config_path: &Path,
    trials: Option<usize>,
    out_dir: Option<PathBuf>,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let mut config = ExperimentConfig::load(config_path)?;
    let n = trials.or(config.num_trials).unwrap_or(DEFAULT_NUM_TRIALS);
    if n < 2 {
        return Err(Failure::usage(format!("trial statistics need at least 2 trials, got {n}")));
    }
    config.num_trials = Some(n);
    let train_config = config.train_config()?;
    let dir = resolve_out_dir(out_dir, &config, "trials")?;

    let result = training::run_trials(&train_config, n)?;
    if let Some(bad) = result.records.iter().find(|r| !r.final_kl.is_finite()) {
        return Err(Failure::numerical(format!("seed {} ended with KL {}", bad.seed, bad.final_kl)));
    }

    let mut files = Vec::new();
    for (k, record) in result.records.iter().enumerate() {
        files.extend(record_files(record, &format!("trial_{k:02}_"))?);
    }
    files.push(("trial_stats.json".into(), json_bytes(&result.stats)?));
    let manifest = Manifest::new("trials", &config, result.stats.seeds.clone())?;
    files.push(("manifest.json".into(), json_bytes(&manifest)?));
    write_all(&dir, &files)?;

    print_stats(&result.stats, out);
    let _ = writeln!(out, "output {}", dir.display());
    Ok(())
}

fn print_stats(stats: &TrialStats, out: &mut dyn Write) {
    let _ = writeln!(out, "min_kl {}", stats.min_kl);
    let _ = writeln!(out, "max_kl {}", stats.max_kl);
    let _ = writeln!(out, "mean_kl {}", stats.mean_kl);
    let _ = writeln!(out, "std_kl {}", stats.std_kl);
}

/// Largest elementwise deviation between the Bayesian network and the
/// linearized model over `instances` random parameter draws.
pub fn bayes_check(
    topology: &NetworkTopology,
    seed: u64,
    instances: usize,
    corrupt_cpt: bool,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..instances {
        let mut r = rng::stream(seed, k as u64);
        let params = Parameters::random(topology, 1.0, &mut r)?;
        let mut net = build_bayes_net(topology, &params)?;
        if corrupt_cpt {
            net.flip_row(0, 0, 0)?;
        }
        let bayes = bayes_forward_exact(&net)?;
        let linear = forward_linear_exact(topology, &params)?;
        worst = worst.max(bayes.max_abs_diff(&linear)?);
    }
    Ok(worst)
}

pub fn cmd_bayes_check(
    layer_sizes: Vec<usize>,
    seed: u64,
    instances: usize,
    corrupt_cpt: bool,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    if instances == 0 {
        return Err(Failure::usage("--instances must be at least 1"));
    }
    let topology = NetworkTopology::new(layer_sizes)?;
    let worst = bayes_check(&topology, seed, instances, corrupt_cpt)?;
    let _ = writeln!(out, "topology {topology} instances {instances} max_deviation {worst:e}");
    if worst <= BAYES_CHECK_TOL {
        Ok(())
    } else {
        Err(Failure::numerical(format!(
            "max deviation {worst:e} exceeds {BAYES_CHECK_TOL:e}"
        )))
    }
}

#[derive(Debug, Serialize)]
struct DistMeta {
    target: TargetSpec,
    num_bits: usize,
    support_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn as_count(v: f64, name: &str) -> std::result::Result<usize, Failure> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Failure::usage(format!("{name} must be a non-negative integer, got {v}")))
    }
}

fn dist_target(kind: DistKind, p: &[f64]) -> std::result::Result<TargetSpec, Failure> {
    let arity = |expected: &str| {
        Failure::usage(format!("{kind:?} takes {expected}, got {} values", p.len()).to_lowercase())
    };
    Ok(match (kind, p) {
        (DistKind::Bas, [r, c]) => TargetSpec::Bas {
            rows: as_count(*r, "rows")?,
            cols: as_count(*c, "cols")?,
        },
        (DistKind::Bas, _) => return Err(arity("ROWS COLS")),
        (DistKind::Cardinality, [n, c]) => TargetSpec::Cardinality {
            num_bits: as_count(*n, "bits")?,
            c: as_count(*c, "c")?,
        },
        (DistKind::Cardinality, _) => return Err(arity("BITS C")),
        (DistKind::Gaussian, [n, s]) => TargetSpec::Gaussian {
            num_bits: as_count(*n, "bits")?,
            mean: None,
            std: *s,
        },
        (DistKind::Gaussian, [n, m, s]) => TargetSpec::Gaussian {
            num_bits: as_count(*n, "bits")?,
            mean: Some(*m),
            std: *s,
        },
        (DistKind::Gaussian, _) => return Err(arity("BITS [MEAN] STD")),
    })
}

fn bas_note(rows: usize, cols: usize, support: usize) -> Option<String> {
    (rows * cols == 6).then(|| {
        format!(
            "{rows}x{cols} bars and stripes has {support} patterns (2^rows + 2^cols - 2); \
             a count of 20 is sometimes quoted for this grid"
        )
    })
}

pub fn cmd_dist(
    kind: DistKind,
    params: &[f64],
    path: Option<PathBuf>,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let target = dist_target(kind, params)?.materialized();
    let dist = target.build()?;
    let support = dist.support_size();
    let note = match target {
        TargetSpec::Bas { rows, cols } => bas_note(rows, cols, support),
        _ => None,
    };

    let path = path.unwrap_or_else(|| {
        let stem = params.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_");
        output_root().join(format!("{}_{stem}.csv", format!("{kind:?}").to_lowercase()))
    });
    let meta = DistMeta {
        num_bits: dist.num_bits(),
        support_size: support,
        note: note.clone(),
        target,
    };
    let meta_path = path.with_extension("meta.json");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, dist.to_csv()).map_err(|e| Error::io(&path, e))?;
    fs::write(&meta_path, json_bytes(&meta)?).map_err(|e| Error::io(&meta_path, e))?;

    let _ = writeln!(out, "support_size {support}");
    if let Some(n) = note {
        let _ = writeln!(out, "note {n}");
    }
    let _ = writeln!(out, "output {}", path.display());
    Ok(())
}
