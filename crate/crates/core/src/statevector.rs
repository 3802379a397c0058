//! Dense statevector over an ordered qubit register.
//!
//! Qubit 0 is the least-significant bit of the amplitude index. Operations
//! mutate the state in place through `&mut self`; every public mutator leaves
//! the state normalized.

use num_complex::Complex64;
use rand::Rng;

use crate::distributions::{Counts, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::rng;

/// Largest register the dense engine accepts.
pub const MAX_QUBITS: usize = 24;

/// Outcomes with Born probability below this are treated as impossible.
pub const POSTSELECT_MIN_PROB: f64 = 1e-14;

/// Squared weight on a branch that a precondition requires to be empty, above
/// which the branch counts as occupied.
pub const SUPPORT_TOL: f64 = 1e-20;

/// Tolerance on `|psi|^2 = 1`.
pub const NORM_TOL: f64 = 1e-12;

/// Ordered list of distinct qubit indices. Bit `j` of an extracted pattern is
/// qubit `qubits[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitSet {
    qubits: Vec<usize>,
    // start of the run when the qubits are consecutive and ascending
    contiguous_from: Option<usize>,
}

impl QubitSet {
    pub fn new(qubits: Vec<usize>, num_qubits: usize) -> Result<Self> {
        for (k, &q) in qubits.iter().enumerate() {
            if q >= num_qubits {
                return Err(Error::InvalidQubits(format!(
                    "qubit {q} out of range for {num_qubits} qubits"
                )));
            }
            if qubits[..k].contains(&q) {
                return Err(Error::InvalidQubits(format!("qubit {q} listed twice")));
            }
        }
        let contiguous_from = match qubits.first() {
            Some(&first) if qubits.iter().enumerate().all(|(k, &q)| q == first + k) => Some(first),
            None => Some(0),
            _ => None,
        };
        Ok(Self {
            qubits,
            contiguous_from,
        })
    }

    /// Consecutive qubits `start..start + len`.
    pub fn range(start: usize, len: usize) -> Self {
        Self {
            qubits: (start..start + len).collect(),
            contiguous_from: Some(start),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.qubits
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn contains(&self, qubit: usize) -> bool {
        self.qubits.contains(&qubit)
    }

    /// Restriction of basis index `index` to this set, as a pattern index.
    #[inline]
    pub fn extract(&self, index: usize) -> usize {
        match self.contiguous_from {
            Some(start) => (index >> start) & ((1usize << self.qubits.len()) - 1),
            None => self
                .qubits
                .iter()
                .enumerate()
                .fold(0, |acc, (j, &q)| acc | (((index >> q) & 1) << j)),
        }
    }

    fn check_fits(&self, num_qubits: usize) -> Result<()> {
        match self.qubits.iter().find(|&&q| q >= num_qubits) {
            Some(q) => Err(Error::InvalidQubits(format!(
                "qubit {q} out of range for {num_qubits} qubits"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Computational basis state `|basis_index>`.
    pub fn new_basis(num_qubits: usize, basis_index: usize) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::InvalidQubits(format!(
                "{num_qubits} qubits exceeds the dense limit of {MAX_QUBITS}"
            )));
        }
        let dim = 1usize << num_qubits;
        if basis_index >= dim {
            return Err(Error::BasisIndexOutOfRange {
                index: basis_index,
                num_qubits,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[basis_index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps an amplitude vector, which must already be normalized.
    pub fn from_amplitudes(num_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::InvalidQubits(format!(
                "{num_qubits} qubits exceeds the dense limit of {MAX_QUBITS}"
            )));
        }
        if amplitudes.len() != 1usize << num_qubits {
            return Err(Error::LengthMismatch {
                expected: 1usize << num_qubits,
                actual: amplitudes.len(),
            });
        }
        let state = Self {
            num_qubits,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Precondition(format!(
                "amplitudes have squared norm {norm}"
            )));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Elementwise `|amplitude|^2`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub(crate) fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::InvalidQubits(format!(
                "qubit {qubit} out of range for {} qubits",
                self.num_qubits
            )));
        }
        Ok(())
    }

    /// Squared weight outside the sector where every qubit in `mask` is 0.
    pub(crate) fn weight_outside_zero(&self, mask: usize) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Puts each listed qubit, currently `|0>`, into `(|0> + |1>)/sqrt 2`.
    pub fn apply_uniform_superposition(&mut self, qubits: &QubitSet) -> Result<()> {
        qubits.check_fits(self.num_qubits)?;
        let mask = qubits.as_slice().iter().fold(0usize, |m, &q| m | (1 << q));
        let stray = self.weight_outside_zero(mask);
        if stray > SUPPORT_TOL {
            return Err(Error::Precondition(format!(
                "superposition target qubits carry weight {stray:e} on their 1-branches"
            )));
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for &q in qubits.as_slice() {
            let bit = 1usize << q;
            for i in (0..self.dim()).filter(|i| i & bit == 0) {
                let a = self.amplitudes[i] * h;
                self.amplitudes[i] = a;
                self.amplitudes[i | bit] = a;
            }
        }
        Ok(())
    }

    /// Pauli-X on `qubit`.
    pub fn apply_x(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        for i in (0..self.dim()).filter(|i| i & bit == 0) {
            self.amplitudes.swap(i, i | bit);
        }
        Ok(())
    }

    /// `R_Y(angle) = exp(-i angle Y / 2)` on `qubit`.
    pub fn apply_ry(&mut self, qubit: usize, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (angle / 2.0).sin_cos();
        let bit = 1usize << qubit;
        for i in (0..self.dim()).filter(|i| i & bit == 0) {
            let a0 = self.amplitudes[i];
            let a1 = self.amplitudes[i | bit];
            self.amplitudes[i] = a0 * c - a1 * s;
            self.amplitudes[i | bit] = a0 * s + a1 * c;
        }
        Ok(())
    }

    /// Born probability of reading `outcome` on `qubit`.
    pub fn outcome_probability(&self, qubit: usize, outcome: u8) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let want = if outcome == 0 { 0 } else { bit };
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projects `qubit` onto `outcome` and renormalizes, returning the Born
    /// probability of that outcome. The state is left untouched when the
    /// outcome is impossible.
    pub fn project_qubit(&mut self, qubit: usize, outcome: u8) -> Result<f64> {
        if outcome > 1 {
            return Err(Error::InvalidParameter(format!("outcome {outcome} is not a bit")));
        }
        let p = self.outcome_probability(qubit, outcome)?;
        if p < POSTSELECT_MIN_PROB {
            return Err(Error::ImpossiblePostSelection {
                qubit,
                outcome,
                probability: p,
            });
        }
        let bit = 1usize << qubit;
        let keep = if outcome == 0 { 0 } else { bit };
        let scale = 1.0 / p.sqrt();
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & bit == keep {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(p)
    }

    /// Samples a computational-basis measurement of `qubit`, collapsing the
    /// state. Returns the outcome and its probability.
    pub fn measure_qubit<R: Rng + ?Sized>(&mut self, qubit: usize, rng: &mut R) -> Result<(u8, f64)> {
        let p0 = self.outcome_probability(qubit, 0)?;
        let outcome = if rng.random::<f64>() < p0 { 0 } else { 1 };
        let p = self.project_qubit(qubit, outcome)?;
        Ok((outcome, p))
    }

    /// Distribution of the restriction of a Born-rule measurement to `qubits`;
    /// all other qubits are traced out.
    pub fn marginal_distribution(&self, qubits: &QubitSet) -> Result<DiscreteDistribution> {
        qubits.check_fits(self.num_qubits)?;
        let mut weights = vec![0.0; 1usize << qubits.len()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            weights[qubits.extract(i)] += a.norm_sqr();
        }
        DiscreteDistribution::from_weights(qubits.len(), weights)
    }

    /// `shots` independent Born-rule samples of `qubits`, deterministic in
    /// `seed`.
    pub fn sample_bitstrings(&self, qubits: &QubitSet, shots: u64, seed: u64) -> Result<Counts> {
        if shots == 0 {
            return Err(Error::Precondition("shots must be at least 1".into()));
        }
        let dist = self.marginal_distribution(qubits)?;
        Ok(dist.sample(shots, &mut rng::stream(seed, 0)))
    }
}
