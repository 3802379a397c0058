//! The linearized QNBM, where every RUS neuron is replaced by a plain
//! controlled `Y` rotation, and the layered Bayesian network that reproduces
//! its output statistics classically.
//!
//! With rotations only, a neuron on parent branch `i` ends in
//! `cos(theta_i)|0> + sin(theta_i)|1>`, so its marginal is a linear mixture
//! of the parent-layer probabilities with conditional rows
//! `P(0|i) = cos^2 theta_i`, `P(1|i) = sin^2 theta_i`. Neurons of one layer
//! act on distinct qubits under the same control, so they are conditionally
//! independent given the parent layer.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Counts, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::network::{neuron_specs, prepared_input, NetworkTopology, Parameters};
use crate::neuron::NeuronSpec;
use crate::rng;
use crate::statevector::{StateVector, SUPPORT_TOL};

/// Rotates the output qubit of `spec` by the branch angle on every source
/// branch: `|0> -> cos(theta)|0> + sin(theta)|1>`. No ancilla is involved.
pub fn apply_linear_neuron(state: &mut StateVector, spec: &NeuronSpec) -> Result<()> {
    let out = 1usize << spec.output();
    if spec.output() >= state.num_qubits() {
        return Err(Error::InvalidQubits(format!(
            "output qubit {} out of range",
            spec.output()
        )));
    }
    let stray = state.weight_outside_zero(out);
    if stray > SUPPORT_TOL {
        return Err(Error::Precondition(format!(
            "output qubit not in |0> (stray weight {stray:e})"
        )));
    }
    let table: Vec<(f64, f64)> = spec
        .branch_thetas()
        .into_iter()
        .map(|t| {
            let (s, c) = t.sin_cos();
            (c, s)
        })
        .collect();
    let sources = spec.sources();
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & out != 0 {
            continue;
        }
        let a = amps[i];
        let (c, s) = table[sources.extract(i)];
        amps[i] = a * c;
        amps[i | out] = a * s;
    }
    Ok(())
}

/// Final statevector of the linearized network; the ancilla qubit of the
/// shared layout stays idle in `|0>`.
pub fn linear_final_state(topology: &NetworkTopology, params: &Parameters) -> Result<StateVector> {
    let mut state = prepared_input(topology)?;
    for spec in neuron_specs(topology, params)? {
        apply_linear_neuron(&mut state, &spec)?;
    }
    Ok(state)
}

/// Output-layer distribution of the linearized network.
pub fn forward_linear_exact(
    topology: &NetworkTopology,
    params: &Parameters,
) -> Result<DiscreteDistribution> {
    let state = linear_final_state(topology, params)?;
    state.marginal_distribution(topology.qubit_layout().output())
}

/// Conditional probability tables of one layer. `rows[k][i]` is
/// `[P(0|i), P(1|i)]` for neuron `k` given parent-layer pattern `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCpt {
    pub parent_bits: usize,
    pub rows: Vec<Vec<[f64; 2]>>,
}

impl LayerCpt {
    fn p_one(&self, neuron: usize, parent: usize) -> f64 {
        self.rows[neuron][parent][1]
    }

    /// Joint probability of child pattern `child` given `parent`.
    fn joint(&self, parent: usize, child: usize) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| r[parent][(child >> k) & 1])
            .product()
    }
}

/// Layered Bayesian network with a uniform prior on the input layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BayesNetRaw")]
pub struct BayesNet {
    topology: NetworkTopology,
    layers: Vec<LayerCpt>,
}

#[derive(Deserialize)]
struct BayesNetRaw {
    topology: NetworkTopology,
    layers: Vec<LayerCpt>,
}

impl TryFrom<BayesNetRaw> for BayesNet {
    type Error = Error;

    fn try_from(raw: BayesNetRaw) -> Result<Self> {
        Self::new(raw.topology, raw.layers)
    }
}

/// Tolerance on `P(0|i) + P(1|i) = 1`.
pub const ROW_TOL: f64 = 1e-12;

impl BayesNet {
    pub fn new(topology: NetworkTopology, layers: Vec<LayerCpt>) -> Result<Self> {
        let active = topology.active_layers();
        if layers.len() != active.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} CPT layers for topology {topology}",
                layers.len()
            )));
        }
        for (k, (cpt, w)) in layers.iter().zip(active.windows(2)).enumerate() {
            if cpt.parent_bits != w[0]
                || cpt.rows.len() != w[1]
                || cpt.rows.iter().any(|r| r.len() != 1 << w[0])
            {
                return Err(Error::ShapeMismatch(format!("CPT layer {k} has the wrong shape")));
            }
            for row in cpt.rows.iter().flatten() {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row[0] + row[1] - 1.0).abs() > ROW_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "CPT layer {k} row {row:?} is not a distribution"
                    )));
                }
            }
        }
        Ok(Self { topology, layers })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn layers(&self) -> &[LayerCpt] {
        &self.layers
    }

    /// Swaps `P(0|i)` and `P(1|i)` in one row. Keeps every row normalized;
    /// useful as a negative control for equivalence checks.
    pub fn flip_row(&mut self, layer: usize, neuron: usize, parent: usize) -> Result<()> {
        let row = self
            .layers
            .get_mut(layer)
            .and_then(|l| l.rows.get_mut(neuron))
            .and_then(|r| r.get_mut(parent))
            .ok_or_else(|| Error::InvalidParameter(format!(
                "no CPT row at layer {layer}, neuron {neuron}, parent {parent}"
            )))?;
        row.swap(0, 1);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Bayesian network whose rows come from `row(theta_i)` for every neuron and
/// parent pattern.
pub fn build_bayes_net_with<F>(topology: &NetworkTopology, params: &Parameters, row: F) -> Result<BayesNet>
where
    F: Fn(f64) -> [f64; 2],
{
    let specs = neuron_specs(topology, params)?;
    let mut specs = specs.iter();
    let layers = topology
        .active_layers()
        .windows(2)
        .map(|w| LayerCpt {
            parent_bits: w[0],
            rows: specs
                .by_ref()
                .take(w[1])
                .map(|spec| spec.branch_thetas().into_iter().map(&row).collect())
                .collect(),
        })
        .collect();
    BayesNet::new(topology.clone(), layers)
}

/// The Bayesian network equivalent to the linearized QNBM:
/// `P(0|i) = cos^2 theta_i`, `P(1|i) = sin^2 theta_i`.
pub fn build_bayes_net(topology: &NetworkTopology, params: &Parameters) -> Result<BayesNet> {
    build_bayes_net_with(topology, params, |t| {
        let (s, c) = t.sin_cos();
        [c * c, s * s]
    })
}

/// Same construction with the single-branch post-selected rows
/// `cos^4 / (cos^4 + sin^4)`. This does not reproduce the non-linear model,
/// whose post-selection reweights the parent branches.
pub fn build_postselected_surrogate(topology: &NetworkTopology, params: &Parameters) -> Result<BayesNet> {
    build_bayes_net_with(topology, params, |t| {
        let (s, c) = t.sin_cos();
        let (c4, s4) = (c.powi(4), s.powi(4));
        [c4 / (c4 + s4), s4 / (c4 + s4)]
    })
}

/// Exact output distribution by propagating the full layer distribution
/// through each CPT.
pub fn bayes_forward_exact(net: &BayesNet) -> Result<DiscreteDistribution> {
    let n_in = net.topology.num_inputs();
    let mut dist = vec![1.0 / (1u64 << n_in) as f64; 1 << n_in];
    for cpt in &net.layers {
        let mut next = vec![0.0; 1 << cpt.rows.len()];
        for (parent, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (child, slot) in next.iter_mut().enumerate() {
                *slot += p * cpt.joint(parent, child);
            }
        }
        dist = next;
    }
    DiscreteDistribution::from_weights(net.topology.num_outputs(), dist)
}

const SHOT_CHUNK: u64 = 8192;

fn ancestral_draw<R: Rng + ?Sized>(net: &BayesNet, rng: &mut R) -> usize {
    let mut pattern = rng.random_range(0..1usize << net.topology.num_inputs());
    for cpt in &net.layers {
        let parent = pattern;
        pattern = (0..cpt.rows.len()).fold(0, |acc, k| {
            acc | (usize::from(rng.random::<f64>() < cpt.p_one(k, parent)) << k)
        });
    }
    pattern
}

/// Ancestral sampling: draw the input layer from its uniform prior, then each
/// neuron from its CPT row given the sampled parent layer. `O(E)` work per
/// shot; deterministic in `seed`.
pub fn bayes_ancestral_sample(net: &BayesNet, shots: u64, seed: u64) -> Result<Counts> {
    if shots == 0 {
        return Err(Error::Precondition("shots must be at least 1".into()));
    }
    let chunks = shots.div_ceil(SHOT_CHUNK);
    let partial: Vec<Counts> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut r = rng::stream(seed, chunk);
            let n = SHOT_CHUNK.min(shots - chunk * SHOT_CHUNK);
            let mut counts = Counts::new(net.topology.num_outputs());
            for _ in 0..n {
                counts.record(ancestral_draw(net, &mut r));
            }
            counts
        })
        .collect();
    let mut counts = Counts::new(net.topology.num_outputs());
    for c in &partial {
        counts.merge(c);
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::forward_exact;
    use std::f64::consts::FRAC_PI_4;

    fn topo(sizes: &[usize]) -> NetworkTopology {
        NetworkTopology::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn zero_bias_only_single_neuron() {
        let t = topo(&[1, 1]);
        let b: f64 = 0.37;
        let p = Parameters::from_flat(&t, &[0.0, b]).unwrap();
        let d = forward_linear_exact(&t, &p).unwrap();
        assert!((d.prob(1) - b.sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn single_neuron_closed_form() {
        let t = topo(&[1, 1]);
        let p = Parameters::from_flat(&t, &[0.8, -0.3]).unwrap();
        let d = forward_linear_exact(&t, &p).unwrap();
        let expect = ((-0.3f64).sin().powi(2) + 0.5f64.sin().powi(2)) / 2.0;
        assert!((d.prob(1) - expect).abs() < 1e-15);
        let net = build_bayes_net(&t, &p).unwrap();
        assert!((bayes_forward_exact(&net).unwrap().prob(1) - expect).abs() < 1e-15);
    }

    #[test]
    fn cpt_examples() {
        let t = topo(&[2, 1]);
        let net = build_bayes_net(&t, &Parameters::zeros(&t)).unwrap();
        assert!(net.layers()[0].rows[0].iter().all(|r| r == &[1.0, 0.0]));

        let p = Parameters::from_flat(&t, &[0.0, 0.0, FRAC_PI_4]).unwrap();
        let net = build_bayes_net(&t, &p).unwrap();
        for r in &net.layers()[0].rows[0] {
            assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
        }

        let p = Parameters::from_flat(&t, &[0.3, -0.2, 0.1]).unwrap();
        let net = build_bayes_net(&t, &p).unwrap();
        // pattern bit 0 = first source
        let thetas: [f64; 4] = [0.1, 0.4, -0.1, 0.2];
        for (i, th) in thetas.iter().enumerate() {
            assert!((net.layers()[0].rows[0][i][1] - th.sin().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_cpts_give_deterministic_function() {
        // theta in {0, pi/2} is unreachable with |w| < 1; build rows directly
        let t = topo(&[1, 1]);
        let net = BayesNet::new(
            t,
            vec![LayerCpt {
                parent_bits: 1,
                rows: vec![vec![[0.0, 1.0], [1.0, 0.0]]],
            }],
        )
        .unwrap();
        // output = NOT input, uniform input
        let d = bayes_forward_exact(&net).unwrap();
        assert_eq!(d.probabilities(), &[0.5, 0.5]);

        let t = topo(&[2, 1]);
        let net = BayesNet::new(
            t,
            vec![LayerCpt {
                parent_bits: 2,
                rows: vec![vec![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]],
            }],
        )
        .unwrap();
        let counts = bayes_ancestral_sample(&net, 1000, 1).unwrap();
        assert_eq!(counts.get(0), 1000);
    }

    #[test]
    fn rejects_bad_rows() {
        let t = topo(&[1, 1]);
        let bad = vec![LayerCpt {
            parent_bits: 1,
            rows: vec![vec![[0.6, 0.6], [1.0, 0.0]]],
        }];
        assert!(BayesNet::new(t.clone(), bad).is_err());
        let short = vec![LayerCpt {
            parent_bits: 1,
            rows: vec![vec![[1.0, 0.0]]],
        }];
        assert!(BayesNet::new(t, short).is_err());
    }

    #[test]
    fn equivalence_on_random_instances() {
        for (s, sizes) in [[2usize, 1, 0], [3, 2, 0], [2, 2, 2], [3, 2, 2]].iter().enumerate() {
            let sizes: Vec<usize> = sizes.iter().copied().filter(|&n| n > 0).collect();
            let t = topo(&sizes);
            for k in 0..10 {
                let p = Parameters::random(&t, 0.999, &mut rng::stream(s as u64, k)).unwrap();
                let lin = forward_linear_exact(&t, &p).unwrap();
                let bayes = bayes_forward_exact(&build_bayes_net(&t, &p).unwrap()).unwrap();
                assert!(lin.max_abs_diff(&bayes).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn hidden_layers_with_zero_width() {
        let t = topo(&[2, 0, 2]);
        let p = Parameters::random(&t, 0.9, &mut rng::stream(3, 3)).unwrap();
        let lin = forward_linear_exact(&t, &p).unwrap();
        let bayes = bayes_forward_exact(&build_bayes_net(&t, &p).unwrap()).unwrap();
        assert!(lin.max_abs_diff(&bayes).unwrap() < 1e-12);
    }

    #[test]
    fn ancestral_sampler_is_consistent_and_reproducible() {
        let t = topo(&[3, 2, 2]);
        let p = Parameters::random(&t, 0.999, &mut rng::stream(12, 0)).unwrap();
        let net = build_bayes_net(&t, &p).unwrap();
        let a = bayes_ancestral_sample(&net, 100_000, 42).unwrap();
        let b = bayes_ancestral_sample(&net, 100_000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total(), 100_000);
        let tv = a
            .empirical()
            .unwrap()
            .total_variation(&bayes_forward_exact(&net).unwrap())
            .unwrap();
        assert!(tv <= 0.02, "tv {tv}");
        assert!(bayes_ancestral_sample(&net, 0, 1).is_err());
    }

    #[test]
    fn nonlinear_model_is_not_the_linear_one() {
        let t = topo(&[3, 2]);
        let p = Parameters::random(&t, 0.999, &mut rng::stream(5, 0)).unwrap();
        let lin = forward_linear_exact(&t, &p).unwrap();
        let nonlin = forward_exact(&t, &p).unwrap().output_distribution;
        assert!(lin.total_variation(&nonlin).unwrap() >= 1e-3);
    }

    #[test]
    fn postselected_surrogate_misses_the_nonlinear_model() {
        let t = topo(&[3, 2]);
        let worst = (0..20)
            .map(|k| {
                let p = Parameters::random(&t, 0.999, &mut rng::stream(6, k)).unwrap();
                let surrogate = bayes_forward_exact(&build_postselected_surrogate(&t, &p).unwrap()).unwrap();
                let nonlin = forward_exact(&t, &p).unwrap().output_distribution;
                surrogate.total_variation(&nonlin).unwrap()
            })
            .fold(0.0, f64::max);
        assert!(worst >= 1e-4, "worst {worst}");
    }

    #[test]
    fn flipped_row_breaks_equivalence() {
        let t = topo(&[3, 2]);
        let p = Parameters::random(&t, 0.999, &mut rng::stream(8, 0)).unwrap();
        let mut net = build_bayes_net(&t, &p).unwrap();
        net.flip_row(0, 0, 0).unwrap();
        let lin = forward_linear_exact(&t, &p).unwrap();
        assert!(lin.max_abs_diff(&bayes_forward_exact(&net).unwrap()).unwrap() > 1e-9);
        assert!(net.flip_row(3, 0, 0).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let t = topo(&[2, 1]);
        let p = Parameters::from_flat(&t, &[0.3, -0.2, 0.1]).unwrap();
        let net = build_bayes_net(&t, &p).unwrap();
        let json = net.to_json().unwrap();
        assert_eq!(BayesNet::from_json(&json).unwrap(), net);
        let broken = json.replacen("\"parent_bits\": 2", "\"parent_bits\": 3", 1);
        assert!(BayesNet::from_json(&broken).is_err());
    }
}
