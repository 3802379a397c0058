//! KL-divergence training with finite-difference gradient descent, and
//! multi-seed trial statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::network::{forward_exact, forward_sampled, NetworkTopology, Parameters};
use crate::rng;

pub const DEFAULT_ITERATIONS: usize = 2000;
pub const DEFAULT_SHOTS_PER_ITERATION: u64 = 10_000;
pub const DEFAULT_LEARNING_RATE: f64 = 0.02;
pub const DEFAULT_FD_STEP_EXACT: f64 = 1e-3;
pub const DEFAULT_FD_STEP_SAMPLED: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 1e-16;
/// Initial parameters are drawn from `(-INIT_HALF_WIDTH, INIT_HALF_WIDTH)`.
pub const INIT_HALF_WIDTH: f64 = 0.1;
/// Clamped parameters stay within `[-1 + CLAMP_MARGIN, 1 - CLAMP_MARGIN]`.
pub const CLAMP_MARGIN: f64 = 1e-6;

// substream of the trial seed reserved for parameter initialization
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// KL against the exact post-selected output distribution.
    Exact,
    /// KL against the accepted-shot histogram of a shot-based forward pass.
    Sampled,
}

impl LossMode {
    pub fn default_fd_step(self) -> f64 {
        match self {
            LossMode::Exact => DEFAULT_FD_STEP_EXACT,
            LossMode::Sampled => DEFAULT_FD_STEP_SAMPLED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub topology: NetworkTopology,
    pub target: DiscreteDistribution,
    pub iterations: usize,
    /// Shots before post-selection, per loss evaluation in sampled mode.
    pub shots_per_iteration: u64,
    pub loss_mode: LossMode,
    pub learning_rate: f64,
    pub fd_step: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub clamp_params: bool,
    pub init_half_width: f64,
}

impl TrainConfig {
    /// Default hyperparameters with exact-mode loss.
    pub fn new(topology: NetworkTopology, target: DiscreteDistribution) -> Self {
        Self {
            topology,
            target,
            iterations: DEFAULT_ITERATIONS,
            shots_per_iteration: DEFAULT_SHOTS_PER_ITERATION,
            loss_mode: LossMode::Exact,
            learning_rate: DEFAULT_LEARNING_RATE,
            fd_step: DEFAULT_FD_STEP_EXACT,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            clamp_params: true,
            init_half_width: INIT_HALF_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad(format!("fd_step must be positive, got {}", self.fd_step));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            ));
        }
        if self.loss_mode == LossMode::Sampled && self.shots_per_iteration == 0 {
            return bad("shots_per_iteration must be at least 1".into());
        }
        if !(self.init_half_width > 0.0 && self.init_half_width <= 1.0) {
            return bad(format!(
                "init_half_width must lie in (0, 1], got {}",
                self.init_half_width
            ));
        }
        if self.target.num_bits() != self.topology.num_outputs() {
            return bad(format!(
                "target has {} bits but the network has {} outputs",
                self.target.num_bits(),
                self.topology.num_outputs()
            ));
        }
        Ok(())
    }
}

/// `sum_x P_t(x) log(P_t(x) / max(P_m(x), epsilon))`, natural log; outcomes
/// with zero target mass contribute nothing.
pub fn kl_divergence(
    target: &DiscreteDistribution,
    model: &DiscreteDistribution,
    epsilon: f64,
) -> Result<f64> {
    if target.num_bits() != model.num_bits() {
        return Err(Error::DimensionMismatch(target.num_bits(), model.num_bits()));
    }
    Ok(target
        .probabilities()
        .iter()
        .zip(model.probabilities())
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, m)| t * (t / m.max(epsilon)).ln())
        .sum())
}

/// Training loss at `params`; sampled mode draws its shots from `shot_seed`.
pub fn loss_at(params: &Parameters, config: &TrainConfig, shot_seed: u64) -> Result<f64> {
    let model = match config.loss_mode {
        LossMode::Exact => forward_exact(&config.topology, params)?.output_distribution,
        LossMode::Sampled => forward_sampled(
            &config.topology,
            params,
            config.shots_per_iteration,
            shot_seed,
        )?
        .counts
        .empirical()?,
    };
    kl_divergence(&config.target, &model, config.epsilon)
}

/// [`loss_at`] with the config's own seed.
pub fn loss(params: &Parameters, config: &TrainConfig) -> Result<f64> {
    loss_at(params, config, config.seed)
}

/// Exact-mode KL regardless of the configured loss mode.
pub fn exact_kl(params: &Parameters, config: &TrainConfig) -> Result<f64> {
    let model = forward_exact(&config.topology, params)?.output_distribution;
    kl_divergence(&config.target, &model, config.epsilon)
}

/// Central-difference gradient over the flat parameter vector, one parameter
/// perturbed at a time by `+-fd_step`. Perturbed points are not clamped. In
/// sampled mode every probe uses the same `shot_seed` (common random numbers).
pub fn fd_gradient_at(params: &Parameters, config: &TrainConfig, shot_seed: u64) -> Result<Vec<f64>> {
    let flat = params.to_flat();
    let h = config.fd_step;
    (0..flat.len())
        .into_par_iter()
        .map(|k| {
            let probe = |delta: f64| {
                let mut shifted = flat.clone();
                shifted[k] += delta;
                let p = Parameters::from_flat_unbounded(&config.topology, &shifted)?;
                loss_at(&p, config, shot_seed)
            };
            Ok((probe(h)? - probe(-h)?) / (2.0 * h))
        })
        .collect()
}

pub fn fd_gradient(params: &Parameters, config: &TrainConfig) -> Result<Vec<f64>> {
    fd_gradient_at(params, config, config.seed)
}

fn clamp(v: f64) -> f64 {
    v.clamp(-1.0 + CLAMP_MARGIN, 1.0 - CLAMP_MARGIN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    /// Training loss at the start of each iteration, before its update.
    pub kl_history: Vec<f64>,
    /// Exact KL of the final parameters.
    pub final_kl: f64,
    pub final_params: Parameters,
}

impl TrainRecord {
    /// `iteration,kl` CSV with a header row.
    pub fn kl_history_csv(&self) -> String {
        let mut out = String::from("iteration,kl\n");
        for (i, kl) in self.kl_history.iter().enumerate() {
            out.push_str(&format!("{i},{kl}\n"));
        }
        out
    }
}

/// Gradient descent from small random parameters. Deterministic in
/// `config.seed`.
pub fn train(config: &TrainConfig) -> Result<TrainRecord> {
    train_observed(config, |_, _| {})
}

/// [`train`], calling `observe(iteration, loss)` once per iteration.
pub fn train_observed<F>(config: &TrainConfig, mut observe: F) -> Result<TrainRecord>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    let topology = &config.topology;
    let mut init_rng = rng::stream(config.seed, INIT_STREAM);
    let mut params = Parameters::random(topology, config.init_half_width, &mut init_rng)?;
    let mut history = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let shot_seed = rng::derive_seed(config.seed, it as u64);
        let current = loss_at(&params, config, shot_seed)?;
        history.push(current);
        observe(it, current);

        let grad = fd_gradient_at(&params, config, shot_seed)?;
        let updated: Vec<f64> = params
            .to_flat()
            .into_iter()
            .zip(&grad)
            .map(|(p, g)| {
                let v = p - config.learning_rate * g;
                if config.clamp_params {
                    clamp(v)
                } else {
                    v
                }
            })
            .collect();
        params = Parameters::from_flat_unbounded(topology, &updated)?;
    }

    Ok(TrainRecord {
        seed: config.seed,
        final_kl: exact_kl(&params, config)?,
        kl_history: history,
        final_params: params,
    })
}

/// Aggregate of final KLs across trials. `std_kl` is the population standard
/// deviation (divides by the number of trials).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub min_kl: f64,
    pub max_kl: f64,
    pub mean_kl: f64,
    pub std_kl: f64,
    pub final_kls: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl TrialStats {
    pub fn from_records(records: &[TrainRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidParameter("no trial records".into()));
        }
        let finals: Vec<f64> = records.iter().map(|r| r.final_kl).collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            min_kl: finals.iter().copied().fold(f64::INFINITY, f64::min),
            max_kl: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_kl: mean,
            std_kl: var.sqrt(),
            final_kls: finals,
            seeds: records.iter().map(|r| r.seed).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trials {
    pub records: Vec<TrainRecord>,
    pub stats: TrialStats,
}

/// Independent trainings with seeds `config.seed, config.seed + 1, ..`.
pub fn run_trials(config: &TrainConfig, num_trials: usize) -> Result<Trials> {
    if num_trials < 2 {
        return Err(Error::InvalidConfig(format!(
            "trial statistics need at least 2 trials, got {num_trials}"
        )));
    }
    let seeds: Vec<u64> = (0..num_trials as u64).map(|k| config.seed.wrapping_add(k)).collect();
    run_trials_with_seeds(config, &seeds)
}

/// One training per listed seed, run in parallel.
pub fn run_trials_with_seeds(config: &TrainConfig, seeds: &[u64]) -> Result<Trials> {
    config.validate()?;
    let records = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            train(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = TrialStats::from_records(&records)?;
    Ok(Trials { records, stats })
}
