//! Probability distributions over fixed-length bitstrings and the benchmark
//! target generators (bars and stripes, cardinality, discrete Gaussian).
//!
//! Index convention: bit `j` of an outcome index belongs to the `j`-th
//! qubit/neuron of the register the distribution describes. Text output
//! always renders bitstrings most-significant bit first, so character `k`
//! of a rendered string is bit `num_bits - 1 - k`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a normalized distribution.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest bit width the generators will enumerate.
pub const MAX_BITS: usize = 24;

/// Renders `index` as a `num_bits`-wide bitstring, most-significant bit first.
pub fn bitstring(index: usize, num_bits: usize) -> String {
    if num_bits == 0 {
        return String::new();
    }
    format!("{index:0num_bits$b}")
}

/// Parses an MSB-first bitstring back into an outcome index.
pub fn parse_bitstring(s: &str) -> Result<usize> {
    if s.is_empty() || s.len() > usize::BITS as usize || !s.bytes().all(|b| b == b'0' || b == b'1') {
        return Err(Error::InvalidParameter(format!("not a bitstring: {s:?}")));
    }
    usize::from_str_radix(s, 2).map_err(|e| Error::InvalidParameter(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    num_bits: usize,
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    /// Wraps a probability vector, checking length, sign and total mass.
    pub fn new(num_bits: usize, probabilities: Vec<f64>) -> Result<Self> {
        if num_bits > MAX_BITS {
            return Err(Error::InvalidParameter(format!(
                "{num_bits} bits exceeds the supported maximum of {MAX_BITS}"
            )));
        }
        let expected = 1usize << num_bits;
        if probabilities.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: probabilities.len(),
            });
        }
        if let Some(p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidParameter(format!("invalid probability {p}")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            num_bits,
            probabilities,
        })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(num_bits: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weights must have positive finite total, got {total}"
            )));
        }
        let probabilities = weights.into_iter().map(|w| w / total).collect();
        Self::new(num_bits, probabilities)
    }

    /// Uniform distribution over the given outcome indices.
    pub fn uniform_over(num_bits: usize, support: &[usize]) -> Result<Self> {
        let mut weights = vec![0.0; 1usize << num_bits];
        for &i in support {
            let slot = weights.get_mut(i).ok_or(Error::BasisIndexOutOfRange {
                index: i,
                num_qubits: num_bits,
            })?;
            *slot = 1.0;
        }
        Self::from_weights(num_bits, weights)
    }

    pub fn point_mass(num_bits: usize, index: usize) -> Result<Self> {
        Self::uniform_over(num_bits, &[index])
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probabilities[index]
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Indices with strictly positive probability.
    pub fn support(&self) -> Vec<usize> {
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.probabilities.iter().filter(|p| **p > 0.0).count()
    }

    pub fn total_variation(&self, other: &DiscreteDistribution) -> Result<f64> {
        if self.num_bits != other.num_bits {
            return Err(Error::DimensionMismatch(self.num_bits, other.num_bits));
        }
        Ok(0.5
            * self
                .probabilities
                .iter()
                .zip(&other.probabilities)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    pub fn max_abs_diff(&self, other: &DiscreteDistribution) -> Result<f64> {
        if self.num_bits != other.num_bits {
            return Err(Error::DimensionMismatch(self.num_bits, other.num_bits));
        }
        Ok(self
            .probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `bitstring,probability` CSV with a header row, one line per outcome.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bitstring,probability\n");
        for (i, p) in self.probabilities.iter().enumerate() {
            let _ = writeln!(out, "{},{}", bitstring(i, self.num_bits), p);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Sampler over outcome indices, reusable across many draws.
    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probabilities).expect("normalized distribution has positive mass")
    }

    /// Multinomial draw of `shots` outcomes.
    pub fn sample<R: Rng + ?Sized>(&self, shots: u64, rng: &mut R) -> Counts {
        let sampler = self.sampler();
        let mut tally = vec![0u64; self.probabilities.len()];
        for _ in 0..shots {
            tally[sampler.sample(rng)] += 1;
        }
        let mut counts = Counts::new(self.num_bits);
        for (i, n) in tally.into_iter().enumerate() {
            counts.add(i, n);
        }
        counts
    }
}

/// Histogram of sampled outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    num_bits: usize,
    counts: BTreeMap<usize, u64>,
}

impl Counts {
    pub fn new(num_bits: usize) -> Self {
        Self {
            num_bits,
            counts: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, outcome: usize) {
        self.add(outcome, 1);
    }

    pub fn add(&mut self, outcome: usize, n: u64) {
        if n > 0 {
            *self.counts.entry(outcome).or_insert(0) += n;
        }
    }

    pub fn merge(&mut self, other: &Counts) {
        for (&k, &v) in &other.counts {
            self.add(k, v);
        }
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn get(&self, outcome: usize) -> u64 {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// Relative frequencies; errors when no shots were recorded.
    pub fn empirical(&self) -> Result<DiscreteDistribution> {
        let total = self.total();
        if total == 0 {
            return Err(Error::NoAcceptedShots { shots: 0 });
        }
        let mut weights = vec![0.0; 1usize << self.num_bits];
        for (k, v) in self.iter() {
            weights[k] = v as f64;
        }
        DiscreteDistribution::from_weights(self.num_bits, weights)
    }

    /// Counts keyed by MSB-first bitstring.
    pub fn to_bitstring_map(&self) -> BTreeMap<String, u64> {
        self.iter()
            .map(|(k, v)| (bitstring(k, self.num_bits), v))
            .collect()
    }
}

/// Bars-and-stripes pattern check for an MSB-first row-major grid: every row
/// constant, or every column constant.
pub fn is_bars_and_stripes(index: usize, rows: usize, cols: usize) -> bool {
    let n = rows * cols;
    let cell = |r: usize, c: usize| (index >> (n - 1 - (r * cols + c))) & 1;
    let rows_constant = (0..rows).all(|r| (0..cols).all(|c| cell(r, c) == cell(r, 0)));
    let cols_constant = (0..cols).all(|c| (0..rows).all(|r| cell(r, c) == cell(0, c)));
    rows_constant || cols_constant
}

/// Uniform distribution over all `rows x cols` bars-and-stripes patterns,
/// found by exhaustive enumeration.
pub fn bars_and_stripes(rows: usize, cols: usize) -> Result<DiscreteDistribution> {
    let n = rows * cols;
    if rows == 0 || cols == 0 || n > 20 {
        return Err(Error::InvalidParameter(format!(
            "bars and stripes grid {rows}x{cols} must be non-empty with at most 20 cells"
        )));
    }
    let support: Vec<usize> = (0..1usize << n)
        .filter(|&i| is_bars_and_stripes(i, rows, cols))
        .collect();
    DiscreteDistribution::uniform_over(n, &support)
}

/// Uniform distribution over bitstrings with exactly `c` ones.
pub fn cardinality(num_bits: usize, c: usize) -> Result<DiscreteDistribution> {
    if c > num_bits || num_bits == 0 || num_bits > MAX_BITS {
        return Err(Error::InvalidParameter(format!(
            "cardinality {c} invalid for {num_bits} bits"
        )));
    }
    let support: Vec<usize> = (0..1usize << num_bits)
        .filter(|i| i.count_ones() as usize == c)
        .collect();
    DiscreteDistribution::uniform_over(num_bits, &support)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub num_bits: usize,
    /// Centre, in units of the bitstring's integer value.
    pub mean: f64,
    pub std: f64,
}

impl GaussianSpec {
    /// Peak centred between the two middle bitstrings, `(2^n - 1) / 2`.
    pub fn centered(num_bits: usize, std: f64) -> Self {
        Self {
            num_bits,
            mean: ((1u64 << num_bits) - 1) as f64 / 2.0,
            std,
        }
    }
}

/// Normal density evaluated at every integer bitstring value, renormalized.
pub fn discrete_gaussian(spec: &GaussianSpec) -> Result<DiscreteDistribution> {
    if !(spec.std > 0.0 && spec.std.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gaussian std must be positive, got {}",
            spec.std
        )));
    }
    if !spec.mean.is_finite() || spec.num_bits == 0 || spec.num_bits > MAX_BITS {
        return Err(Error::InvalidParameter(format!(
            "invalid gaussian spec {spec:?}"
        )));
    }
    let norm = 1.0 / (spec.std * (2.0 * std::f64::consts::PI).sqrt());
    let weights = (0..1usize << spec.num_bits)
        .map(|x| {
            let z = (x as f64 - spec.mean) / spec.std;
            norm * (-0.5 * z * z).exp()
        })
        .collect();
    DiscreteDistribution::from_weights(spec.num_bits, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn bitstring_rendering_is_msb_first() {
        assert_eq!(bitstring(1, 3), "001");
        assert_eq!(bitstring(6, 3), "110");
        assert_eq!(parse_bitstring("110").unwrap(), 6);
        assert!(parse_bitstring("12").is_err());
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(DiscreteDistribution::new(1, vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(1, vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(1, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn bas_small_grids() {
        let d = bars_and_stripes(1, 1).unwrap();
        assert_eq!(d.support_size(), 2);
        assert_eq!(d.probabilities(), &[0.5, 0.5]);

        let d = bars_and_stripes(2, 2).unwrap();
        assert_eq!(d.support_size(), 6);
        for i in d.support() {
            assert!((d.prob(i) - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bas_support_matches_closed_form() {
        // bars 2^rows + stripes 2^cols, minus the two blank/full grids counted twice
        for rows in 1..=4 {
            for cols in 1..=4 {
                let d = bars_and_stripes(rows, cols).unwrap();
                let expected = if rows == 1 || cols == 1 {
                    1 << (rows * cols)
                } else {
                    (1 << rows) + (1 << cols) - 2
                };
                assert_eq!(d.support_size(), expected, "{rows}x{cols}");
            }
        }
        assert_eq!(bars_and_stripes(2, 3).unwrap().support_size(), 10);
    }

    #[test]
    fn bas_transpose_invariance() {
        let a = bars_and_stripes(2, 3).unwrap();
        let b = bars_and_stripes(3, 2).unwrap();
        assert_eq!(a.support_size(), b.support_size());
        let transpose = |i: usize| {
            let mut j = 0;
            for r in 0..2 {
                for c in 0..3 {
                    let bit = (i >> (5 - (r * 3 + c))) & 1;
                    j |= bit << (5 - (c * 2 + r));
                }
            }
            j
        };
        for i in a.support() {
            assert!(b.prob(transpose(i)) > 0.0);
        }
    }

    #[test]
    fn bas_rejects_large_grid() {
        assert!(bars_and_stripes(5, 5).is_err());
        assert!(bars_and_stripes(0, 3).is_err());
    }

    #[test]
    fn cardinality_examples() {
        let d = cardinality(6, 3).unwrap();
        assert_eq!(d.support_size(), 20);
        for i in d.support() {
            assert!((d.prob(i) - 0.05).abs() < 1e-15);
        }
        let d = cardinality(4, 0).unwrap();
        assert_eq!(d.prob(0), 1.0);
        let d = cardinality(4, 2).unwrap();
        assert_eq!(d.support_size(), 6);
        assert!(cardinality(3, 4).is_err());
    }

    #[test]
    fn cardinality_support_is_binomial() {
        for n in 1..=10u64 {
            for c in 0..=n {
                let d = cardinality(n as usize, c as usize).unwrap();
                assert_eq!(d.support_size() as u64, binomial(n, c));
            }
        }
    }

    #[test]
    fn cardinality_is_permutation_invariant() {
        let d = cardinality(5, 2).unwrap();
        // reverse the bit order
        let rev = |i: usize| (0..5).fold(0, |acc, b| acc | (((i >> b) & 1) << (4 - b)));
        for i in 0..32 {
            assert_eq!(d.prob(i), d.prob(rev(i)));
        }
    }

    #[test]
    fn gaussian_centered_is_symmetric_and_unimodal() {
        let d = discrete_gaussian(&GaussianSpec::centered(6, 7.0)).unwrap();
        assert_eq!(d.len(), 64);
        let total: f64 = d.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((d.prob(31) - d.prob(32)).abs() < 1e-15);
        for x in 0..32 {
            assert!((d.prob(x) - d.prob(63 - x)).abs() < 1e-15);
        }
        for x in 0..31 {
            assert!(d.prob(x) < d.prob(x + 1));
        }
    }

    #[test]
    fn gaussian_two_bits() {
        let d = discrete_gaussian(&GaussianSpec {
            num_bits: 2,
            mean: 1.5,
            std: 1.0,
        })
        .unwrap();
        let f = |x: f64| (-0.5 * (x - 1.5f64).powi(2)).exp();
        let z: f64 = (0..4).map(|x| f(x as f64)).sum();
        for x in 0..4 {
            assert!((d.prob(x) - f(x as f64) / z).abs() < 1e-15);
        }
        assert!(d.prob(1) > d.prob(0));
        assert_eq!(d.prob(1), d.prob(2));
        assert_eq!(d.prob(0), d.prob(3));
    }

    #[test]
    fn gaussian_wide_limit_is_uniform() {
        let d = discrete_gaussian(&GaussianSpec::centered(6, 1e6)).unwrap();
        let u = DiscreteDistribution::from_weights(6, vec![1.0; 64]).unwrap();
        assert!(d.total_variation(&u).unwrap() <= 0.01);
    }

    #[test]
    fn gaussian_rejects_bad_std() {
        assert!(discrete_gaussian(&GaussianSpec::centered(3, 0.0)).is_err());
        assert!(discrete_gaussian(&GaussianSpec::centered(3, -1.0)).is_err());
    }

    #[test]
    fn csv_layout() {
        let d = cardinality(2, 1).unwrap();
        assert_eq!(
            d.to_csv(),
            "bitstring,probability\n00,0\n01,0.5\n10,0.5\n11,0\n"
        );
    }

    #[test]
    fn counts_to_empirical() {
        let mut c = Counts::new(2);
        c.add(1, 3);
        c.record(2);
        assert_eq!(c.total(), 4);
        let e = c.empirical().unwrap();
        assert_eq!(e.probabilities(), &[0.0, 0.75, 0.25, 0.0]);
        assert!(Counts::new(2).empirical().is_err());
        assert_eq!(c.to_bitstring_map()["01"], 3);
    }
}
