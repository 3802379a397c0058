//! Quantum neuron Born machine assembly: topology, parameters, and forward
//! evolution (exact post-selection and shot-based sampling).
//!
//! Qubit layout is input layer first, then hidden layers, then the output
//! layer, with one shared ancilla on the last qubit. Neurons are processed
//! layer by layer in ascending index order, each post-selected on the shared
//! ancilla before the next neuron runs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Counts, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::neuron::{apply_neuron_postselect, apply_neuron_sampled, NeuronSpec};
use crate::rng;
use crate::statevector::{QubitSet, StateVector, MAX_QUBITS};

/// Layer sizes `(N_in, N_hid.., N_out)`. Hidden entries may be zero, meaning
/// the layer is absent: `(5, 0, 6)` connects 5 inputs straight to 6 outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct NetworkTopology {
    layer_sizes: Vec<usize>,
}

impl TryFrom<Vec<usize>> for NetworkTopology {
    type Error = Error;

    fn try_from(layer_sizes: Vec<usize>) -> Result<Self> {
        Self::new(layer_sizes)
    }
}

impl From<NetworkTopology> for Vec<usize> {
    fn from(t: NetworkTopology) -> Self {
        t.layer_sizes
    }
}

impl std::fmt::Display for NetworkTopology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl NetworkTopology {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidTopology(
                "need at least an input and an output layer".into(),
            ));
        }
        if layer_sizes[0] == 0 || *layer_sizes.last().unwrap() == 0 {
            return Err(Error::InvalidTopology(
                "input and output layers must be non-empty".into(),
            ));
        }
        let qubits = layer_sizes.iter().sum::<usize>() + 1;
        if qubits > MAX_QUBITS {
            return Err(Error::InvalidTopology(format!(
                "{qubits} qubits exceeds the dense limit of {MAX_QUBITS}"
            )));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Sizes of the layers actually present (zero-width hidden layers dropped).
    pub fn active_layers(&self) -> Vec<usize> {
        self.layer_sizes.iter().copied().filter(|&n| n > 0).collect()
    }

    pub fn num_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Neurons that receive a connection, i.e. all but the input layer.
    pub fn num_neurons(&self) -> usize {
        self.layer_sizes[1..].iter().sum()
    }

    /// Every layer plus the shared ancilla.
    pub fn num_qubits(&self) -> usize {
        self.layer_sizes.iter().sum::<usize>() + 1
    }

    /// Weights `sum_k N_k N_{k+1}` over adjacent active layers, plus one bias
    /// per non-input neuron.
    pub fn num_parameters(&self) -> usize {
        self.active_layers()
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    pub fn qubit_layout(&self) -> QubitLayout {
        let mut layers = Vec::new();
        let mut next = 0;
        for n in self.active_layers() {
            layers.push(QubitSet::range(next, n));
            next += n;
        }
        QubitLayout {
            layers,
            ancilla: next,
            num_qubits: next + 1,
        }
    }
}

/// Assignment of neurons to qubit indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitLayout {
    /// One register per active layer, input first.
    pub layers: Vec<QubitSet>,
    pub ancilla: usize,
    pub num_qubits: usize,
}

impl QubitLayout {
    pub fn input(&self) -> &QubitSet {
        &self.layers[0]
    }

    pub fn output(&self) -> &QubitSet {
        self.layers.last().unwrap()
    }
}

/// Weights and biases feeding one layer. `weights[j][i]` connects source
/// neuron `i` to target neuron `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Network parameters, one [`LayerParams`] per pair of adjacent active layers.
///
/// The flat form used by optimizers lists each target neuron in order as its
/// incoming weights followed by its bias.
///
/// Constructors require every value in (-1, 1). Training with
/// `clamp_params` off can leave that range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    layers: Vec<LayerParams>,
}

impl Parameters {
    /// Checks shapes against `topology` and that every value lies in (-1, 1).
    pub fn new(topology: &NetworkTopology, layers: Vec<LayerParams>) -> Result<Self> {
        let params = Self { layers };
        params.check_shape(topology)?;
        params.check_range()?;
        Ok(params)
    }

    pub fn zeros(topology: &NetworkTopology) -> Self {
        Self::from_flat_unbounded(topology, &vec![0.0; topology.num_parameters()])
            .expect("zero vector has the right length")
    }

    /// Every weight set to `weight` and every bias to `bias`.
    pub fn filled(topology: &NetworkTopology, weight: f64, bias: f64) -> Result<Self> {
        let layers = topology
            .active_layers()
            .windows(2)
            .map(|w| LayerParams {
                weights: vec![vec![weight; w[0]]; w[1]],
                biases: vec![bias; w[1]],
            })
            .collect();
        Self::new(topology, layers)
    }

    /// Each value drawn uniformly from `(-half_width, half_width)`.
    pub fn random<R: Rng + ?Sized>(
        topology: &NetworkTopology,
        half_width: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(half_width > 0.0 && half_width <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "initialization half-width {half_width} must lie in (0, 1]"
            )));
        }
        let flat: Vec<f64> = (0..topology.num_parameters())
            .map(|_| loop {
                let v = rng.random_range(-half_width..half_width);
                if v > -1.0 {
                    break v;
                }
            })
            .collect();
        Self::from_flat(topology, &flat)
    }

    pub fn from_flat(topology: &NetworkTopology, flat: &[f64]) -> Result<Self> {
        let params = Self::from_flat_unbounded(topology, flat)?;
        params.check_range()?;
        Ok(params)
    }

    /// Shape-checked only; used for finite-difference probes that may step
    /// past the (-1, 1) box.
    pub(crate) fn from_flat_unbounded(topology: &NetworkTopology, flat: &[f64]) -> Result<Self> {
        let expected = topology.num_parameters();
        if flat.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        let layers = topology
            .active_layers()
            .windows(2)
            .map(|w| {
                let mut weights = Vec::with_capacity(w[1]);
                let mut biases = Vec::with_capacity(w[1]);
                for _ in 0..w[1] {
                    weights.push(it.by_ref().take(w[0]).collect());
                    biases.push(it.next().unwrap());
                }
                LayerParams { weights, biases }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| {
                l.weights
                    .iter()
                    .zip(&l.biases)
                    .flat_map(|(row, b)| row.iter().copied().chain(std::iter::once(*b)))
            })
            .collect()
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn check_shape(&self, topology: &NetworkTopology) -> Result<()> {
        let active = topology.active_layers();
        if self.layers.len() != active.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter layers for topology {topology}",
                self.layers.len()
            )));
        }
        for (k, (layer, w)) in self.layers.iter().zip(active.windows(2)).enumerate() {
            if layer.biases.len() != w[1]
                || layer.weights.len() != w[1]
                || layer.weights.iter().any(|row| row.len() != w[0])
            {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} must be {} x {} weights with {} biases",
                    w[1], w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    fn check_range(&self) -> Result<()> {
        match self.to_flat().into_iter().find(|v| !(*v > -1.0 && *v < 1.0)) {
            Some(v) => Err(Error::InvalidParameter(format!(
                "parameter {v} outside (-1, 1)"
            ))),
            None => Ok(()),
        }
    }
}

/// Neuron wiring in processing order: layer by layer, ascending index.
pub fn neuron_specs(topology: &NetworkTopology, params: &Parameters) -> Result<Vec<NeuronSpec>> {
    params.check_shape(topology)?;
    let layout = topology.qubit_layout();
    let mut specs = Vec::with_capacity(topology.num_neurons());
    for (k, layer) in params.layers.iter().enumerate() {
        let sources = &layout.layers[k];
        let targets = &layout.layers[k + 1];
        for (j, (row, &bias)) in layer.weights.iter().zip(&layer.biases).enumerate() {
            specs.push(NeuronSpec::new_unbounded(
                sources.clone(),
                row.clone(),
                bias,
                targets.as_slice()[j],
                layout.ancilla,
            )?);
        }
    }
    Ok(specs)
}

/// All qubits in `|0>`, then the input layer in uniform superposition.
pub fn prepared_input(topology: &NetworkTopology) -> Result<StateVector> {
    let layout = topology.qubit_layout();
    let mut state = StateVector::new_basis(layout.num_qubits, 0)?;
    state.apply_uniform_superposition(layout.input())?;
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// Born distribution of the output layer, indexed by output bitstring.
    pub output_distribution: DiscreteDistribution,
    /// Probability that every ancilla reads 0.
    pub postselect_probability: f64,
    /// Success probability of each neuron given that all earlier ones passed.
    pub neuron_success_probabilities: Vec<f64>,
    pub final_state: StateVector,
}

/// Exact post-selected evolution of the network.
pub fn forward_exact(topology: &NetworkTopology, params: &Parameters) -> Result<ForwardResult> {
    let order: Vec<usize> = (0..topology.num_neurons()).collect();
    forward_exact_ordered(topology, params, &order)
}

/// [`forward_exact`] with a custom neuron processing order. `order` must be a
/// permutation of neuron indices that never runs a neuron before one from an
/// earlier layer.
pub fn forward_exact_ordered(
    topology: &NetworkTopology,
    params: &Parameters,
    order: &[usize],
) -> Result<ForwardResult> {
    let specs = neuron_specs(topology, params)?;
    let layer_of: Vec<usize> = topology.active_layers()[1..]
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
        .collect();
    let mut seen = vec![false; specs.len()];
    for (pos, &n) in order.iter().enumerate() {
        if n >= specs.len() || std::mem::replace(&mut seen[n], true) {
            return Err(Error::InvalidParameter(format!(
                "neuron order {order:?} is not a permutation"
            )));
        }
        if pos > 0 && layer_of[order[pos - 1]] > layer_of[n] {
            return Err(Error::InvalidParameter(format!(
                "neuron order {order:?} runs a later layer first"
            )));
        }
    }
    if order.len() != specs.len() {
        return Err(Error::InvalidParameter(format!(
            "neuron order {order:?} is not a permutation"
        )));
    }

    let layout = topology.qubit_layout();
    let mut state = prepared_input(topology)?;
    let mut probs = Vec::with_capacity(specs.len());
    for &n in order {
        probs.push(apply_neuron_postselect(&mut state, &specs[n])?);
    }
    Ok(ForwardResult {
        output_distribution: state.marginal_distribution(layout.output())?,
        postselect_probability: probs.iter().product(),
        neuron_success_probabilities: probs,
        final_state: state,
    })
}

#[derive(Debug, Clone)]
pub struct SampledForward {
    /// Output bitstrings of the accepted shots.
    pub counts: Counts,
    pub shots: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
}

const SHOT_CHUNK: u64 = 4096;

/// Shot-based forward pass with single-round RUS: a shot is discarded as soon
/// as any neuron's ancilla reads 1, and surviving shots measure the output
/// layer. `shots` counts attempts before post-selection.
///
/// Given that every earlier ancilla read 0, the state entering each neuron is
/// fixed, so the conditional ancilla statistics and the accepted-output
/// distribution are computed once and each shot replays its trajectory against
/// them. Chunks of shots draw from independent substreams of `seed`.
pub fn forward_sampled(
    topology: &NetworkTopology,
    params: &Parameters,
    shots: u64,
    seed: u64,
) -> Result<SampledForward> {
    if shots == 0 {
        return Err(Error::Precondition("shots must be at least 1".into()));
    }
    let exact = forward_exact(topology, params)?;
    let success = exact.neuron_success_probabilities;
    let sampler = exact.output_distribution.sampler();
    let outcomes = exact.output_distribution.len();

    let chunks = shots.div_ceil(SHOT_CHUNK);
    let tallies: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut r = rng::stream(seed, chunk);
            let n = SHOT_CHUNK.min(shots - chunk * SHOT_CHUNK);
            let mut tally = vec![0u64; outcomes];
            for _ in 0..n {
                if success.iter().all(|&p| r.random::<f64>() < p) {
                    tally[rand::distr::Distribution::sample(&sampler, &mut r)] += 1;
                }
            }
            tally
        })
        .collect();

    let mut counts = Counts::new(topology.num_outputs());
    for tally in tallies {
        for (i, n) in tally.into_iter().enumerate() {
            counts.add(i, n);
        }
    }
    let accepted = counts.total();
    if accepted == 0 {
        return Err(Error::NoAcceptedShots { shots });
    }
    Ok(SampledForward {
        counts,
        shots,
        accepted,
        acceptance_rate: accepted as f64 / shots as f64,
    })
}

/// One physical trajectory: every neuron runs the stochastic RUS loop on the
/// full statevector with up to `max_rounds` rounds. Returns the measured
/// output bitstring, or `None` if some neuron never succeeded.
pub fn sample_trajectory<R: Rng + ?Sized>(
    topology: &NetworkTopology,
    params: &Parameters,
    max_rounds: usize,
    rng: &mut R,
) -> Result<Option<usize>> {
    let specs = neuron_specs(topology, params)?;
    let layout = topology.qubit_layout();
    let mut state = prepared_input(topology)?;
    for spec in &specs {
        if !apply_neuron_sampled(&mut state, spec, rng, max_rounds)?.succeeded {
            return Ok(None);
        }
    }
    let dist = state.marginal_distribution(layout.output())?;
    Ok(Some(rand::distr::Distribution::sample(&dist.sampler(), rng)))
}

/// Shot-based forward pass that simulates each trajectory gate by gate with
/// [`sample_trajectory`]. Much slower than [`forward_sampled`]; supports
/// multi-round RUS.
pub fn forward_sampled_trajectories(
    topology: &NetworkTopology,
    params: &Parameters,
    shots: u64,
    seed: u64,
    max_rounds: usize,
) -> Result<SampledForward> {
    if shots == 0 {
        return Err(Error::Precondition("shots must be at least 1".into()));
    }
    let chunks = shots.div_ceil(SHOT_CHUNK);
    let partial: Vec<Counts> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut r = rng::stream(seed, chunk);
            let n = SHOT_CHUNK.min(shots - chunk * SHOT_CHUNK);
            let mut counts = Counts::new(topology.num_outputs());
            for _ in 0..n {
                if let Some(out) = sample_trajectory(topology, params, max_rounds, &mut r)? {
                    counts.record(out);
                }
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let mut counts = Counts::new(topology.num_outputs());
    for c in &partial {
        counts.merge(c);
    }
    let accepted = counts.total();
    if accepted == 0 {
        return Err(Error::NoAcceptedShots { shots });
    }
    Ok(SampledForward {
        counts,
        shots,
        accepted,
        acceptance_rate: accepted as f64 / shots as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::success_probability;

    fn topo(sizes: &[usize]) -> NetworkTopology {
        NetworkTopology::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn topology_validation() {
        assert!(NetworkTopology::new(vec![3]).is_err());
        assert!(NetworkTopology::new(vec![0, 2]).is_err());
        assert!(NetworkTopology::new(vec![2, 0]).is_err());
        assert!(NetworkTopology::new(vec![12, 12]).is_err());
        assert_eq!(topo(&[5, 0, 6]).active_layers(), vec![5, 6]);
        assert_eq!(topo(&[5, 0, 6]).to_string(), "(5,0,6)");
    }

    #[test]
    fn layout_sizes() {
        let l = topo(&[5, 0, 6]).qubit_layout();
        assert_eq!(l.num_qubits, 12);
        assert_eq!(l.input(), &QubitSet::range(0, 5));
        assert_eq!(l.output(), &QubitSet::range(5, 6));
        assert_eq!(l.ancilla, 11);
        assert_eq!(topo(&[2, 2]).qubit_layout().num_qubits, 5);
        let l = topo(&[1, 1, 1]).qubit_layout();
        assert_eq!(l.num_qubits, 4);
        assert_eq!(l.layers[1], QubitSet::range(1, 1));
        assert_eq!(l.ancilla, 3);
    }

    #[test]
    fn parameter_count() {
        assert_eq!(topo(&[5, 0, 6]).num_parameters(), 36);
        assert_eq!(topo(&[2, 1]).num_parameters(), 3);
        assert_eq!(topo(&[3, 2, 2]).num_parameters(), 8 + 6);
    }

    #[test]
    fn flat_round_trip_and_order() {
        let t = topo(&[2, 2]);
        let flat = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let p = Parameters::from_flat(&t, &flat).unwrap();
        assert_eq!(p.layers()[0].weights, vec![vec![0.1, 0.2], vec![0.4, 0.5]]);
        assert_eq!(p.layers()[0].biases, vec![0.3, 0.6]);
        assert_eq!(p.to_flat(), flat);
        assert!(Parameters::from_flat(&t, &flat[..5]).is_err());
        assert!(Parameters::from_flat(&t, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = Parameters::zeros(&topo(&[2, 2]));
        assert!(matches!(
            forward_exact(&topo(&[3, 2]), &p),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn parameters_json_round_trip() {
        let t = topo(&[2, 1]);
        let p = Parameters::from_flat(&t, &[0.25, -0.5, 0.125]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: Parameters = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let t2: NetworkTopology = serde_json::from_str("[5,0,6]").unwrap();
        assert_eq!(t2, topo(&[5, 0, 6]));
        assert!(serde_json::from_str::<NetworkTopology>("[5]").is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let t = topo(&[1, 1]);
        let r = forward_exact(&t, &Parameters::zeros(&t)).unwrap();
        assert_eq!(r.output_distribution.probabilities(), &[1.0, 0.0]);
        assert!((r.postselect_probability - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_neuron_matches_closed_form() {
        let t = topo(&[1, 1]);
        let p = Parameters::from_flat(&t, &[0.8, -0.3]).unwrap();
        let r = forward_exact(&t, &p).unwrap();
        let (a, b): (f64, f64) = (-0.3, 0.5);
        let expect = (a.sin().powi(4) + b.sin().powi(4))
            / (success_probability(a) + success_probability(b));
        assert!((r.output_distribution.prob(1) - expect).abs() < 1e-15);
        let p_ok = 0.5 * (success_probability(a) + success_probability(b));
        assert!((r.postselect_probability - p_ok).abs() < 1e-15);
    }

    #[test]
    fn two_input_network_matches_enumeration() {
        let t = topo(&[2, 1]);
        let p = Parameters::filled(&t, 0.25, 0.25).unwrap();
        let r = forward_exact(&t, &p).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for x in 0..4u32 {
            let theta = 0.25 * x.count_ones() as f64 + 0.25;
            num += theta.sin().powi(4);
            den += theta.cos().powi(4) + theta.sin().powi(4);
        }
        assert!((r.output_distribution.prob(1) - num / den).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic() {
        let t = topo(&[3, 2, 2]);
        let p = Parameters::random(&t, 0.9, &mut rng::stream(4, 0)).unwrap();
        let a = forward_exact(&t, &p).unwrap();
        let b = forward_exact(&t, &p).unwrap();
        assert_eq!(a.output_distribution, b.output_distribution);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn postselect_probability_lower_bound() {
        for seed in 0..20 {
            let t = topo(&[3, 2, 3]);
            let p = Parameters::random(&t, 0.999, &mut rng::stream(seed, 0)).unwrap();
            let r = forward_exact(&t, &p).unwrap();
            let floor = 0.5f64.powi(t.num_neurons() as i32);
            assert!(r.postselect_probability <= 1.0);
            assert!(r.postselect_probability >= floor - 1e-15);
            assert!(r.neuron_success_probabilities.iter().all(|&q| q >= 0.5 - 1e-12));
        }
    }

    #[test]
    fn output_order_independence() {
        let t = topo(&[3, 2]);
        for seed in 0..25 {
            let p = Parameters::random(&t, 0.99, &mut rng::stream(seed, 1)).unwrap();
            let a = forward_exact_ordered(&t, &p, &[0, 1]).unwrap();
            let b = forward_exact_ordered(&t, &p, &[1, 0]).unwrap();
            assert!(
                a.output_distribution
                    .max_abs_diff(&b.output_distribution)
                    .unwrap()
                    < 1e-10
            );
        }
    }

    #[test]
    fn ordering_is_validated() {
        let t = topo(&[1, 1, 1]);
        let p = Parameters::zeros(&t);
        assert!(forward_exact_ordered(&t, &p, &[1, 0]).is_err());
        assert!(forward_exact_ordered(&t, &p, &[0, 0]).is_err());
        assert!(forward_exact_ordered(&t, &p, &[0]).is_err());
    }

    #[test]
    fn sampled_zero_network_accepts_everything() {
        let t = topo(&[1, 1]);
        let s = forward_sampled(&t, &Parameters::zeros(&t), 1000, 1).unwrap();
        assert_eq!(s.acceptance_rate, 1.0);
        assert_eq!(s.counts.get(0), 1000);
    }

    #[test]
    fn sampled_acceptance_at_quarter_pi() {
        // both input branches at theta = pi/4: w = 0, b = pi/4
        let t = topo(&[1, 1]);
        let p = Parameters::from_flat(&t, &[0.0, std::f64::consts::FRAC_PI_4]).unwrap();
        let s = forward_sampled(&t, &p, 100_000, 8).unwrap();
        assert!((s.acceptance_rate - 0.5).abs() < 0.01);
    }

    #[test]
    fn sampled_is_seed_deterministic() {
        let t = topo(&[2, 2]);
        let p = Parameters::random(&t, 0.9, &mut rng::stream(1, 0)).unwrap();
        let a = forward_sampled(&t, &p, 10_000, 5).unwrap();
        let b = forward_sampled(&t, &p, 10_000, 5).unwrap();
        let c = forward_sampled(&t, &p, 10_000, 6).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_ne!(a.counts, c.counts);
        assert!(forward_sampled(&t, &p, 0, 5).is_err());
    }

    #[test]
    fn replayed_and_simulated_trajectories_agree() {
        let t = topo(&[2, 2]);
        let p = Parameters::from_flat(&t, &[0.9, -0.8, 0.7, 0.95, 0.6, -0.9]).unwrap();
        let fast = forward_sampled(&t, &p, 40_000, 3).unwrap();
        let slow = forward_sampled_trajectories(&t, &p, 40_000, 4, 1).unwrap();
        let tv = fast
            .counts
            .empirical()
            .unwrap()
            .total_variation(&slow.counts.empirical().unwrap())
            .unwrap();
        assert!(tv < 0.02, "tv {tv}");
        assert!((fast.acceptance_rate - slow.acceptance_rate).abs() < 0.015);
        let exact = forward_exact(&t, &p).unwrap().postselect_probability;
        assert!((slow.acceptance_rate - exact).abs() < 0.01);
    }

    #[test]
    fn multi_round_trajectories_accept_more() {
        let t = topo(&[1, 1]);
        let p = Parameters::from_flat(&t, &[0.0, std::f64::consts::FRAC_PI_4]).unwrap();
        let one = forward_sampled_trajectories(&t, &p, 4000, 1, 1).unwrap();
        let three = forward_sampled_trajectories(&t, &p, 4000, 1, 3).unwrap();
        assert!(three.acceptance_rate > one.acceptance_rate);
        // single branch value: 1 - (1/2)^3
        assert!((three.acceptance_rate - 0.875).abs() < 0.03);
    }
}
