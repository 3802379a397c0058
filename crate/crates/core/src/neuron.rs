//! Quantum neuron: the repeat-until-success (RUS) subroutine that writes a
//! non-linear function of a weighted sum of source qubits onto an output
//! qubit, mediated by one ancilla.
//!
//! For a source branch `x` with pre-activation `theta = w.x + b`, the
//! pre-measurement map sends the `(output, ancilla)` pair from `|00>` to
//!
//! ```text
//! cos^2(theta)|00> + sin(theta)cos(theta)|01> + sin(theta)cos(theta)|11> + sin^2(theta)|10>
//! ```
//!
//! (kets written `|output ancilla>`). Reading the ancilla as 0 leaves the
//! output in `cos^2|0> + sin^2|1>`, i.e. rotated by the activation
//! `q(theta) = arctan(tan^2 theta)`, with branch weight `cos^4 + sin^4`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::statevector::{QubitSet, StateVector, POSTSELECT_MIN_PROB, SUPPORT_TOL};

/// Angles closer than this to an odd multiple of pi/2 are rejected by
/// [`activation_q`].
pub const POLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronSpec {
    sources: QubitSet,
    weights: Vec<f64>,
    bias: f64,
    output: usize,
    ancilla: usize,
}

fn in_open_unit(x: f64) -> bool {
    x > -1.0 && x < 1.0
}

impl NeuronSpec {
    /// Builds a neuron; weights and bias must lie strictly inside (-1, 1).
    pub fn new(
        sources: QubitSet,
        weights: Vec<f64>,
        bias: f64,
        output: usize,
        ancilla: usize,
    ) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !in_open_unit(**w)) {
            return Err(Error::InvalidParameter(format!("weight {w} outside (-1, 1)")));
        }
        if !in_open_unit(bias) {
            return Err(Error::InvalidParameter(format!("bias {bias} outside (-1, 1)")));
        }
        Self::new_unbounded(sources, weights, bias, output, ancilla)
    }

    /// Same wiring checks as [`NeuronSpec::new`] but accepts any finite
    /// weights. Finite-difference probes step slightly past the clamp.
    pub(crate) fn new_unbounded(
        sources: QubitSet,
        weights: Vec<f64>,
        bias: f64,
        output: usize,
        ancilla: usize,
    ) -> Result<Self> {
        if weights.len() != sources.len() {
            return Err(Error::LengthMismatch {
                expected: sources.len(),
                actual: weights.len(),
            });
        }
        if !weights.iter().chain([&bias]).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite weight or bias".into()));
        }
        if output == ancilla {
            return Err(Error::InvalidQubits(format!(
                "output and ancilla share qubit {output}"
            )));
        }
        if sources.contains(output) || sources.contains(ancilla) {
            return Err(Error::InvalidQubits(
                "output/ancilla qubit overlaps the source register".into(),
            ));
        }
        Ok(Self {
            sources,
            weights,
            bias,
            output,
            ancilla,
        })
    }

    pub fn sources(&self) -> &QubitSet {
        &self.sources
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn ancilla(&self) -> usize {
        self.ancilla
    }

    /// Pre-activation for source pattern `pattern` (bit `n` = source `n`).
    pub fn theta_for_pattern(&self, pattern: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(n, _)| (pattern >> n) & 1 == 1)
            .map(|(_, w)| w)
            .sum::<f64>()
            + self.bias
    }

    /// Pre-activation of every source pattern, indexed by pattern.
    pub fn branch_thetas(&self) -> Vec<f64> {
        (0..1usize << self.sources.len())
            .map(|p| self.theta_for_pattern(p))
            .collect()
    }

    fn check_fits(&self, state: &StateVector) -> Result<()> {
        let n = state.num_qubits();
        if self.output >= n || self.ancilla >= n || self.sources.as_slice().iter().any(|&q| q >= n) {
            return Err(Error::InvalidQubits(format!(
                "neuron wiring does not fit a {n}-qubit state"
            )));
        }
        Ok(())
    }

    fn check_fresh(&self, state: &StateVector) -> Result<()> {
        self.check_fits(state)?;
        let stray = state.weight_outside_zero((1 << self.output) | (1 << self.ancilla));
        if stray > SUPPORT_TOL {
            return Err(Error::Precondition(format!(
                "output/ancilla not in |0> (stray weight {stray:e})"
            )));
        }
        Ok(())
    }
}

/// `theta = sum_n w_n x_n + b` for explicit input bits.
pub fn preactivation_theta(input_bits: &[u8], spec: &NeuronSpec) -> Result<f64> {
    if input_bits.len() != spec.weights.len() {
        return Err(Error::LengthMismatch {
            expected: spec.weights.len(),
            actual: input_bits.len(),
        });
    }
    Ok(input_bits
        .iter()
        .zip(&spec.weights)
        .map(|(&x, w)| f64::from(x) * w)
        .sum::<f64>()
        + spec.bias)
}

/// The activation `q(theta) = arctan(tan^2 theta)`, in `[0, pi/2)`.
pub fn activation_q(theta: f64) -> Result<f64> {
    let r = (theta - FRAC_PI_2).rem_euclid(PI);
    if !theta.is_finite() || r.min(PI - r) < POLE_TOL {
        return Err(Error::TangentPole(theta));
    }
    Ok(theta.tan().powi(2).atan())
}

/// Probability that a single branch at `theta` reads the ancilla as 0:
/// `cos^4 + sin^4`, always in `[1/2, 1]`.
pub fn success_probability(theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c.powi(4) + s.powi(4)
}

/// Per-pattern `(cos theta, sin theta)` lookup.
fn trig_table(spec: &NeuronSpec) -> Vec<(f64, f64)> {
    spec.branch_thetas()
        .into_iter()
        .map(|t| {
            let (s, c) = t.sin_cos();
            (c, s)
        })
        .collect()
}

/// Applies the pre-measurement RUS map on every branch. Requires output and
/// ancilla in `|0>`.
pub fn apply_neuron_premeasure(state: &mut StateVector, spec: &NeuronSpec) -> Result<()> {
    spec.check_fresh(state)?;
    let table = trig_table(spec);
    let out = 1usize << spec.output;
    let anc = 1usize << spec.ancilla;
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & (out | anc) != 0 {
            continue;
        }
        let a = amps[i];
        let (c, s) = table[spec.sources.extract(i)];
        amps[i] = a * (c * c);
        amps[i | anc] = a * (s * c);
        amps[i | out | anc] = a * (s * c);
        amps[i | out] = a * (s * s);
    }
    Ok(())
}

/// Pre-measurement map followed by projection of the ancilla onto 0, fused
/// into one pass. Returns the success probability
/// `sum_i |alpha_i|^2 (cos^4 theta_i + sin^4 theta_i)`.
pub fn apply_neuron_postselect(state: &mut StateVector, spec: &NeuronSpec) -> Result<f64> {
    spec.check_fresh(state)?;
    let table = trig_table(spec);
    let out = 1usize << spec.output;
    let anc = 1usize << spec.ancilla;
    let amps = state.amplitudes_mut();
    let mut p = 0.0;
    for i in 0..amps.len() {
        if i & (out | anc) != 0 {
            continue;
        }
        let a = amps[i];
        let (c, s) = table[spec.sources.extract(i)];
        let (c2, s2) = (c * c, s * s);
        amps[i] = a * c2;
        amps[i | out] = a * s2;
        amps[i | anc] = Complex64::new(0.0, 0.0);
        amps[i | out | anc] = Complex64::new(0.0, 0.0);
        p += a.norm_sqr() * (c2 * c2 + s2 * s2);
    }
    debug_assert!(p >= 0.5 - 1e-12, "per-branch success is at least 1/2");
    if p < POSTSELECT_MIN_PROB {
        return Err(Error::ImpossiblePostSelection {
            qubit: spec.ancilla,
            outcome: 0,
            probability: p,
        });
    }
    let scale = 1.0 / p.sqrt();
    for a in amps.iter_mut() {
        *a *= scale;
    }
    Ok(p)
}

/// Trajectory record of one stochastic RUS run.
#[derive(Debug, Clone, PartialEq)]
pub struct RusOutcome {
    pub succeeded: bool,
    pub rounds_used: usize,
    /// Probability of reading the ancilla as 0, evaluated before each round's
    /// measurement.
    pub success_probability_per_round: Vec<f64>,
}

/// Simulates the physical RUS loop: apply the map, measure the ancilla, and
/// on a 1 outcome recover (X on the ancilla, `R_Y(-pi/2)` on the output)
/// and try again, for at most `max_rounds` rounds.
///
/// On failure the recovered state is returned, so the ancilla and output are
/// back in `|0>` either way. Recovery restores each branch's sub-state only up
/// to the factor `sin(theta_i)cos(theta_i)`; superposed inputs therefore come
/// back deformed.
pub fn apply_neuron_sampled<R: Rng + ?Sized>(
    state: &mut StateVector,
    spec: &NeuronSpec,
    rng: &mut R,
    max_rounds: usize,
) -> Result<RusOutcome> {
    if max_rounds == 0 {
        return Err(Error::InvalidParameter("max_rounds must be at least 1".into()));
    }
    let mut per_round = Vec::new();
    for round in 1..=max_rounds {
        apply_neuron_premeasure(state, spec)?;
        let (outcome, p) = state.measure_qubit(spec.ancilla, rng)?;
        per_round.push(if outcome == 0 { p } else { 1.0 - p });
        if outcome == 0 {
            return Ok(RusOutcome {
                succeeded: true,
                rounds_used: round,
                success_probability_per_round: per_round,
            });
        }
        state.apply_x(spec.ancilla)?;
        state.apply_ry(spec.output, -FRAC_PI_2)?;
    }
    Ok(RusOutcome {
        succeeded: false,
        rounds_used: max_rounds,
        success_probability_per_round: per_round,
    })
}
