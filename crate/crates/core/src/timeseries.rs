//! Synthetic SDE data, differencing, SAX discretisation and k-step transition
//! estimation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// `m` real series of equal length sampled every `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSeries {
    /// `values[d][t]`
    pub values: Vec<Vec<f64>>,
    pub dt: f64,
}

impl ContinuousSeries {
    pub fn new(values: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let s = Self { values, dt };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.values.first() else {
            return Err(Error::Shape("series has no dimensions".into()));
        };
        let n = first.len();
        if self.values.iter().any(|v| v.len() != n) {
            return Err(Error::Shape("series dimensions differ in length".into()));
        }
        if n < 2 {
            return Err(Error::Shape(format!("series needs at least 2 points, has {n}")));
        }
        if self.values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("series contains non-finite values".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `dX = μ dt + σ dW` with a seeded Euler–Maruyama integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSpec {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub seed: u64,
    pub length: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Starting point; zeros when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    1.0
}

impl SdeSpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.mu.len();
        if m == 0 {
            return Err(Error::InvalidParams("sde needs at least one dimension".into()));
        }
        if self.sigma.len() != m || self.sigma.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidParams(format!("sigma must be {m}x{m}")));
        }
        if self.mu.iter().chain(self.sigma.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("sde coefficients must be finite".into()));
        }
        if self.length < 2 {
            return Err(Error::InvalidParams("sde length must be at least 2".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams("sde dt must be positive".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != m {
                return Err(Error::InvalidParams(format!("x0 must have {m} entries")));
            }
        }
        Ok(())
    }
}

/// Euler–Maruyama path `X_{t+1} = X_t + μ·dt + σ·z·√dt`, `z` i.i.d. standard
/// normal, drawn dimension by dimension at each step.
pub fn simulate_sde(spec: &SdeSpec) -> Result<ContinuousSeries> {
    spec.validate()?;
    let m = spec.mu.len();
    let mut rng = SeededRng::new(spec.seed);
    let mut values = vec![Vec::with_capacity(spec.length); m];
    let mut x = spec.x0.clone().unwrap_or_else(|| vec![0.0; m]);
    let sqrt_dt = spec.dt.sqrt();
    for (d, v) in values.iter_mut().enumerate() {
        v.push(x[d]);
    }
    let mut z = vec![0.0; m];
    for _ in 1..spec.length {
        z.iter_mut().for_each(|zi| *zi = rng.normal());
        for d in 0..m {
            let noise: f64 = spec.sigma[d].iter().zip(&z).map(|(s, zi)| s * zi).sum();
            x[d] += spec.mu[d] * spec.dt + noise * sqrt_dt;
            values[d].push(x[d]);
        }
    }
    ContinuousSeries::new(values, spec.dt)
}

/// `X_{t+1} − X_t`, one point shorter than the input.
pub fn first_difference(series: &ContinuousSeries) -> Result<ContinuousSeries> {
    series.validate()?;
    let values = series
        .values
        .iter()
        .map(|v| v.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    Ok(ContinuousSeries {
        values,
        dt: series.dt,
    })
}

/// Symbol stream plus what is needed to map symbols back to values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub bits: Vec<usize>,
    /// Breakpoints per dimension in original units, strictly increasing.
    pub bin_edges: Vec<Vec<f64>>,
    /// Representative value per symbol in original units.
    pub bin_reps: Vec<Vec<f64>>,
}

impl Discretization {
    /// Symbols stand for themselves: representative value of symbol `s` is `s`.
    /// Used for models trained on planted transition matrices.
    pub fn identity(bits: &[usize]) -> Self {
        Self {
            bits: bits.to_vec(),
            bin_edges: bits
                .iter()
                .map(|&b| (1..1usize << b).map(|e| e as f64 - 0.5).collect())
                .collect(),
            bin_reps: bits
                .iter()
                .map(|&b| (0..1usize << b).map(|s| s as f64).collect())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.bits.len();
        if self.bin_edges.len() != m || self.bin_reps.len() != m {
            return Err(Error::Shape("discretization field lengths differ".into()));
        }
        for d in 0..m {
            let states = 1usize << self.bits[d];
            if self.bin_reps[d].len() != states || self.bin_edges[d].len() != states - 1 {
                return Err(Error::Shape(format!(
                    "dimension {d}: {} bits need {} reps and {} edges",
                    self.bits[d],
                    states,
                    states - 1
                )));
            }
            if self.bin_edges[d].windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParams(format!(
                    "dimension {d}: bin edges not strictly increasing"
                )));
            }
        }
        Ok(())
    }

    /// Representative value of `symbol` in dimension `d`.
    pub fn value(&self, d: usize, symbol: usize) -> f64 {
        self.bin_reps[d][symbol]
    }

    /// Symbol of a raw value, using the stored breakpoints.
    pub fn symbol_of(&self, d: usize, x: f64) -> usize {
        self.bin_edges[d].iter().filter(|&&e| x > e).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSeries {
    /// `symbols[d][t]`, each below `2^{bits[d]}`.
    pub symbols: Vec<Vec<usize>>,
    pub discretization: Discretization,
}

impl DiscreteSeries {
    pub fn dims(&self) -> usize {
        self.symbols.len()
    }

    pub fn len(&self) -> usize {
        self.symbols.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Equiprobable standard-normal breakpoints for `2^bits` bins.
pub fn gaussian_breakpoints(bits: usize) -> Vec<f64> {
    let normal = Normal::standard();
    let bins = 1usize << bits;
    (1..bins)
        .map(|i| normal.inverse_cdf(i as f64 / bins as f64))
        .collect()
}

/// `E[Z | lo < Z ≤ hi]` for standard normal `Z`.
fn truncated_normal_mean(lo: f64, hi: f64) -> f64 {
    let normal = Normal::standard();
    let pdf = |x: f64| {
        if x.is_infinite() {
            0.0
        } else {
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        }
    };
    let mass = normal.cdf(hi) - normal.cdf(lo);
    (pdf(lo) - pdf(hi)) / mass
}

/// Pointwise SAX: z-normalise each dimension (population standard deviation),
/// cut at the equiprobable Gaussian quantiles, and record the empirical mean of
/// each bin as its representative value. A bin no training value falls in gets
/// the conditional mean of the fitted Gaussian over that bin.
pub fn sax_discretize(series: &ContinuousSeries, bits_per_dim: &[usize]) -> Result<DiscreteSeries> {
    series.validate()?;
    if bits_per_dim.len() != series.dims() {
        return Err(Error::Shape(format!(
            "{} bit counts for {} dimensions",
            bits_per_dim.len(),
            series.dims()
        )));
    }
    if let Some(&b) = bits_per_dim.iter().find(|&&b| b == 0 || b > 8) {
        return Err(Error::InvalidParams(format!("bits per dimension must be 1..=8, got {b}")));
    }
    let mut symbols = Vec::with_capacity(series.dims());
    let mut bin_edges = Vec::with_capacity(series.dims());
    let mut bin_reps = Vec::with_capacity(series.dims());
    for (d, (values, &bits)) in series.values.iter().zip(bits_per_dim).enumerate() {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::Degenerate(format!("dimension {d} has zero variance")));
        }
        let z_edges = gaussian_breakpoints(bits);
        let bins = 1usize << bits;
        let syms: Vec<usize> = values
            .iter()
            .map(|&x| {
                let z = (x - mean) / sd;
                z_edges.iter().filter(|&&e| z > e).count()
            })
            .collect();
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for (&s, &x) in syms.iter().zip(values) {
            sums[s] += x;
            counts[s] += 1;
        }
        let reps = (0..bins)
            .map(|b| {
                if counts[b] > 0 {
                    sums[b] / counts[b] as f64
                } else {
                    let lo = if b == 0 { f64::NEG_INFINITY } else { z_edges[b - 1] };
                    let hi = if b == bins - 1 { f64::INFINITY } else { z_edges[b] };
                    mean + sd * truncated_normal_mean(lo, hi)
                }
            })
            .collect();
        bin_edges.push(z_edges.iter().map(|z| mean + sd * z).collect());
        bin_reps.push(reps);
        symbols.push(syms);
    }
    Ok(DiscreteSeries {
        symbols,
        discretization: Discretization {
            bits: bits_per_dim.to_vec(),
            bin_edges,
            bin_reps,
        },
    })
}

/// One empirical k-step transition matrix with its pair counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub states: usize,
    /// Row-major `T[i][j]`; unvisited rows are uniform.
    pub probs: Vec<f64>,
    /// Row-major count of `(s_t = i, s_{t+k} = j)` pairs.
    pub counts: Vec<u64>,
}

impl TransitionMatrix {
    pub fn from_counts(states: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), states * states);
        let mut probs = vec![0.0; states * states];
        for i in 0..states {
            let row = &counts[i * states..(i + 1) * states];
            let total: u64 = row.iter().sum();
            for j in 0..states {
                probs[i * states + j] = if total == 0 {
                    1.0 / states as f64
                } else {
                    row[j] as f64 / total as f64
                };
            }
        }
        Self {
            states,
            probs,
            counts,
        }
    }

    /// Planted probabilities; rows with `visited[i] == false` are masked.
    pub fn from_probs(states: usize, probs: Vec<f64>, visited: &[bool]) -> Result<Self> {
        if probs.len() != states * states || visited.len() != states {
            return Err(Error::Shape("transition matrix shape".into()));
        }
        for i in 0..states {
            let row = &probs[i * states..(i + 1) * states];
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidParams(format!("row {i} has entries outside [0,1]")));
            }
            if visited[i] && (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!("row {i} does not sum to 1")));
            }
        }
        let counts = (0..states * states)
            .map(|idx| u64::from(visited[idx / states]))
            .collect();
        Ok(Self {
            states,
            probs,
            counts,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.states..(i + 1) * self.states]
    }

    pub fn visits(&self, i: usize) -> u64 {
        self.counts[i * self.states..(i + 1) * self.states].iter().sum()
    }

    pub fn is_visited(&self, i: usize) -> bool {
        self.visits(i) > 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.states + j]
    }
}

/// `{T^d(k)}` for every dimension `d` and lag `k` in a sorted lag list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSet {
    pub lags: Vec<usize>,
    /// `matrices[d][lag_index]`
    pub matrices: Vec<Vec<TransitionMatrix>>,
}

impl TransitionSet {
    pub fn new(lags: Vec<usize>, matrices: Vec<Vec<TransitionMatrix>>) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::InvalidParams("lag list is empty".into()));
        }
        if lags.windows(2).any(|w| w[0] >= w[1]) || lags[0] == 0 {
            return Err(Error::InvalidParams("lags must be positive and strictly increasing".into()));
        }
        if matrices.iter().any(|per_dim| per_dim.len() != lags.len()) {
            return Err(Error::Shape("one matrix per lag required".into()));
        }
        Ok(Self { lags, matrices })
    }

    pub fn dims(&self) -> usize {
        self.matrices.len()
    }

    pub fn get(&self, d: usize, lag_index: usize) -> &TransitionMatrix {
        &self.matrices[d][lag_index]
    }

    pub fn lag_index(&self, k: usize) -> Option<usize> {
        self.lags.iter().position(|&l| l == k)
    }

    /// Number of states per dimension.
    pub fn states(&self, d: usize) -> usize {
        self.matrices[d][0].states
    }

    /// The matrices for a subset of the lags.
    pub fn subset(&self, lags: &[usize]) -> Result<Self> {
        let lags = normalize_lags(lags)?;
        let idx: Vec<usize> = lags
            .iter()
            .map(|&k| {
                self.lag_index(k)
                    .ok_or_else(|| Error::OutOfRange(format!("lag {k} not in transition set")))
            })
            .collect::<Result<_>>()?;
        let matrices = self
            .matrices
            .iter()
            .map(|per_dim| idx.iter().map(|&i| per_dim[i].clone()).collect())
            .collect();
        Self::new(lags, matrices)
    }

    /// Single-dimension view.
    pub fn dimension(&self, d: usize) -> Result<Self> {
        if d >= self.dims() {
            return Err(Error::OutOfRange(format!("dimension {d} of {}", self.dims())));
        }
        Self::new(self.lags.clone(), vec![self.matrices[d].clone()])
    }
}

/// Normalise a lag list: sorted, deduplicated, all positive.
pub fn normalize_lags(lags: &[usize]) -> Result<Vec<usize>> {
    if lags.is_empty() {
        return Err(Error::InvalidParams("lag list is empty".into()));
    }
    let mut k = lags.to_vec();
    k.sort_unstable();
    k.dedup();
    if k[0] == 0 {
        return Err(Error::InvalidParams("lag 0 is not a transition".into()));
    }
    Ok(k)
}

/// Raw series to training targets: first differences, SAX with `bits` per
/// dimension, then transition matrices at `lags`.
pub fn transitions_from_series(
    series: &ContinuousSeries,
    bits: &[usize],
    lags: &[usize],
) -> Result<(TransitionSet, Discretization)> {
    let diff = first_difference(series)?;
    let ds = sax_discretize(&diff, bits)?;
    let ts = estimate_transitions(&ds, lags)?;
    Ok((ts, ds.discretization))
}

/// Count every overlapping pair `(s_t, s_{t+k})` and row-normalise. Rows never
/// visited are filled uniformly and carry zero counts.
pub fn estimate_transitions(ds: &DiscreteSeries, lags: &[usize]) -> Result<TransitionSet> {
    let lags = normalize_lags(lags)?;
    let len = ds.len();
    let max_lag = *lags.last().expect("nonempty");
    if max_lag >= len {
        return Err(Error::InvalidParams(format!(
            "largest lag {max_lag} needs a series longer than {len}"
        )));
    }
    let matrices = ds
        .symbols
        .iter()
        .zip(&ds.discretization.bits)
        .map(|(syms, &bits)| {
            let states = 1usize << bits;
            lags.iter()
                .map(|&k| {
                    let mut counts = vec![0u64; states * states];
                    for t in 0..len - k {
                        counts[syms[t] * states + syms[t + k]] += 1;
                    }
                    TransitionMatrix::from_counts(states, counts)
                })
                .collect()
        })
        .collect();
    TransitionSet::new(lags, matrices)
}

/// Read `t,dim1,dim2,…` CSV. The `t` column is used only to infer `dt`.
pub fn read_series_csv<R: Read>(reader: R) -> Result<ContinuousSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || headers.get(0).map(str::trim) != Some("t") {
        return Err(Error::Corrupt("series CSV header must be `t,dim1,…`".into()));
    }
    let m = headers.len() - 1;
    let mut times = Vec::new();
    let mut values = vec![Vec::new(); m];
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != m + 1 {
            return Err(Error::Corrupt(format!("row {} has {} fields", line + 2, record.len())));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Corrupt(format!("row {}: {e}: {s:?}", line + 2)))
        };
        times.push(parse(&record[0])?);
        for d in 0..m {
            values[d].push(parse(&record[d + 1])?);
        }
    }
    let dt = if times.len() >= 2 { times[1] - times[0] } else { 1.0 };
    ContinuousSeries::new(values, if dt > 0.0 { dt } else { 1.0 })
}

/// Write `t,dim1,dim2,…` CSV with `t = index·dt`.
pub fn write_series_csv<W: Write>(series: &ContinuousSeries, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=series.dims()).map(|d| format!("dim{d}")));
    w.write_record(&header)?;
    for t in 0..series.len() {
        let mut row = vec![format!("{}", t as f64 * series.dt)];
        row.extend(series.values.iter().map(|v| format!("{}", v[t])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discrete(symbols: Vec<Vec<usize>>, bits: Vec<usize>) -> DiscreteSeries {
        DiscreteSeries {
            symbols,
            discretization: Discretization {
                bin_edges: bits.iter().map(|&b| gaussian_breakpoints(b)).collect(),
                bin_reps: bits.iter().map(|&b| vec![0.0; 1 << b]).collect(),
                bits,
            },
        }
    }

    #[test]
    fn noiseless_drift_is_linear() {
        let spec = SdeSpec {
            mu: vec![-1.0, -2.0],
            sigma: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            seed: 1,
            length: 50,
            dt: 1.0,
            x0: None,
        };
        let s = simulate_sde(&spec).unwrap();
        for t in 0..50 {
            assert_eq!(s.values[0][t], -(t as f64));
            assert_eq!(s.values[1][t], -2.0 * t as f64);
        }
    }

    #[test]
    fn sde_is_deterministic_per_seed() {
        let spec = SdeSpec {
            mu: vec![0.1],
            sigma: vec![vec![1.0]],
            seed: 99,
            length: 100,
            dt: 0.5,
            x0: Some(vec![3.0]),
        };
        assert_eq!(simulate_sde(&spec).unwrap(), simulate_sde(&spec).unwrap());
        assert_eq!(simulate_sde(&spec).unwrap().values[0][0], 3.0);
    }

    #[test]
    fn sde_rejects_bad_sigma() {
        let spec = SdeSpec {
            mu: vec![0.0, 0.0],
            sigma: vec![vec![1.0]],
            seed: 0,
            length: 10,
            dt: 1.0,
            x0: None,
        };
        assert!(simulate_sde(&spec).is_err());
    }

    #[test]
    fn differencing_cases() {
        let c = ContinuousSeries::new(vec![vec![2.0; 5]], 1.0).unwrap();
        assert!(first_difference(&c).unwrap().values[0].iter().all(|&x| x == 0.0));
        let ramp: Vec<f64> = (0..6).map(|t| 0.5 * t as f64 + 1.0).collect();
        let r = ContinuousSeries::new(vec![ramp.clone()], 1.0).unwrap();
        let d = first_difference(&r).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.values[0].iter().all(|&x| x == 0.5));
        // cumulative sum + X0 reconstructs the input
        let mut acc = ramp[0];
        for (t, &dx) in d.values[0].iter().enumerate() {
            acc += dx;
            assert!((acc - ramp[t + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn one_bit_sax_splits_at_the_mean() {
        let values = vec![1.0, 3.0, 2.0, 5.0, -1.0, 2.0];
        let mean = values.iter().sum::<f64>() / 6.0;
        let s = ContinuousSeries::new(vec![values.clone()], 1.0).unwrap();
        let ds = sax_discretize(&s, &[1]).unwrap();
        for (x, &sym) in values.iter().zip(&ds.symbols[0]) {
            assert_eq!(sym, usize::from(*x > mean));
        }
        assert!((ds.discretization.bin_edges[0][0] - mean).abs() < 1e-12);
        // reps are the bin means
        let lo: Vec<f64> = values.iter().copied().filter(|&x| x <= mean).collect();
        assert!((ds.discretization.bin_reps[0][0] - lo.iter().sum::<f64>() / lo.len() as f64).abs() < 1e-12);
    }

    // Inverse-CDF oracle by bisection on the standard normal CDF.
    fn bisect_quantile(p: f64) -> f64 {
        let n = Normal::standard();
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if n.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn two_bit_breakpoints() {
        let b = gaussian_breakpoints(2);
        assert_eq!(b.len(), 3);
        for (got, p) in b.iter().zip([0.25, 0.5, 0.75]) {
            assert!((got - bisect_quantile(p)).abs() < 1e-9);
        }
        assert!((b[0] + 0.6745).abs() < 1e-3);
        assert!(b[1].abs() < 1e-12);
        assert!((b[2] - 0.6745).abs() < 1e-3);
    }

    #[test]
    fn symmetric_data_balances_one_bit_counts() {
        let values: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin()).collect();
        let mut sym = values.clone();
        sym.extend(values.iter().map(|x| -x));
        let s = ContinuousSeries::new(vec![sym], 1.0).unwrap();
        let ds = sax_discretize(&s, &[1]).unwrap();
        let ones = ds.symbols[0].iter().filter(|&&x| x == 1).count();
        assert!((ones as i64 - 1000).abs() <= 2, "ones = {ones}");
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let s = ContinuousSeries::new(vec![vec![1.0; 10]], 1.0).unwrap();
        assert!(matches!(sax_discretize(&s, &[1]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn empty_bins_get_gaussian_reps() {
        // 2 bits on two-valued data leaves interior bins empty
        let values: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let s = ContinuousSeries::new(vec![values], 1.0).unwrap();
        let ds = sax_discretize(&s, &[2]).unwrap();
        let reps = &ds.discretization.bin_reps[0];
        assert!(reps.windows(2).all(|w| w[0] < w[1]), "{reps:?}");
        assert!(reps.iter().all(|r| r.is_finite()));
        ds.discretization.validate().unwrap();
    }

    #[test]
    fn alternating_series_transitions() {
        let syms: Vec<usize> = (0..20).map(|t| t % 2).collect();
        let ts = estimate_transitions(&discrete(vec![syms], vec![1]), &[1, 2]).unwrap();
        let t1 = ts.get(0, 0);
        assert_eq!(t1.probs, vec![0.0, 1.0, 1.0, 0.0]);
        let t2 = ts.get(0, 1);
        assert_eq!(t2.probs, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_series_masks_unvisited_row() {
        let ts = estimate_transitions(&discrete(vec![vec![0; 10]], vec![1]), &[1]).unwrap();
        let t = ts.get(0, 0);
        assert_eq!(t.row(0), &[1.0, 0.0]);
        assert_eq!(t.row(1), &[0.5, 0.5]);
        assert!(t.is_visited(0));
        assert!(!t.is_visited(1));
    }

    #[test]
    fn transition_errors() {
        let ds = discrete(vec![vec![0, 1, 0]], vec![1]);
        assert!(estimate_transitions(&ds, &[]).is_err());
        assert!(estimate_transitions(&ds, &[3]).is_err());
        assert!(estimate_transitions(&ds, &[0]).is_err());
        let ts = estimate_transitions(&ds, &[2, 1, 2]).unwrap();
        assert_eq!(ts.lags, vec![1, 2]);
    }

    #[test]
    fn csv_round_trip() {
        let s = ContinuousSeries::new(vec![vec![0.1, -2.5, 3.0], vec![1e-17, 4.0, 5.5]], 0.5).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,dim1,dim2\n0,0.1,0.00000000000000001\n"));
        let back = read_series_csv(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(read_series_csv("x,a\n0,1\n1,2\n".as_bytes()).is_err());
        assert!(read_series_csv("t,a\n0,1\n1,abc\n".as_bytes()).is_err());
    }
}
