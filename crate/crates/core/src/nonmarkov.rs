//! Trace-distance (BLP) non-Markovianity of the reduced dynamics of one system
//! dimension.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::Propagator;
use crate::error::{Error, Result};
use crate::learner::TrainedModel;
use crate::qcore::{trace_distance, ComplexMatrix, DensityMatrix, SubspaceLayout, C64, ZERO};
use crate::rng::SeededRng;

/// Reduced map `X ↦ Tr_rest[U (X ⊗ |0…0⟩⟨0…0|) U†]` on subspace `keep`. Linear
/// in `X`, so it also accepts non-density inputs (matrix units for the Choi
/// matrix).
pub fn reduced_map(
    u: &ComplexMatrix,
    layout: &SubspaceLayout,
    keep: usize,
    x: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    layout.check_dim(keep)?;
    let sd = layout.symbols(keep);
    if x.rows() != sd || !x.is_square() {
        return Err(Error::Shape(format!(
            "{}x{} input for a {sd}-state subspace",
            x.rows(),
            x.cols()
        )));
    }
    if u.rows() != layout.full_dim() || !u.is_square() {
        return Err(Error::Shape(format!(
            "{}x{} unitary for a {}-qubit layout",
            u.rows(),
            u.cols(),
            layout.total_qubits()
        )));
    }
    let n = layout.total_qubits();
    let (start, len) = layout.qubit_range(keep);
    let low = n - start - len;
    let rest_dim = 1usize << (n - len);
    let low_mask = (1usize << low) - 1;

    // column of U for each embedded input symbol, reshaped to [keep × rest]
    let blocks: Vec<Vec<C64>> = (0..sd)
        .map(|a| {
            let col = layout.embed_single(keep, a).expect("symbol in range");
            let mut m = vec![ZERO; sd * rest_dim];
            for idx in 0..u.rows() {
                let p = (idx >> low) & (sd - 1);
                let rest = ((idx >> (low + len)) << low) | (idx & low_mask);
                m[p * rest_dim + rest] = u[(idx, col)];
            }
            m
        })
        .collect();

    let mut out = ComplexMatrix::zeros(sd, sd);
    for a in 0..sd {
        for b in 0..sd {
            let xab = x[(a, b)];
            if xab == ZERO {
                continue;
            }
            let (ma, mb) = (&blocks[a], &blocks[b]);
            for p in 0..sd {
                for q in 0..sd {
                    let s: C64 = (0..rest_dim)
                        .map(|r| ma[p * rest_dim + r] * mb[q * rest_dim + r].conj())
                        .sum();
                    out[(p, q)] += xab * s;
                }
            }
        }
    }
    Ok(out)
}

/// `Φ(t, 0)` for one system dimension of a model.
#[derive(Debug, Clone)]
pub struct ReducedChannel<'a> {
    layout: &'a SubspaceLayout,
    keep: usize,
    prop: Propagator,
}

impl<'a> ReducedChannel<'a> {
    pub fn new(model: &'a TrainedModel, keep: usize) -> Result<Self> {
        model.validate()?;
        model.layout.check_dim(keep)?;
        Ok(Self {
            layout: &model.layout,
            keep,
            prop: Propagator::new(&model.params),
        })
    }

    pub fn subspace_qubits(&self) -> usize {
        self.layout.dims[self.keep]
    }

    pub fn apply(&self, x: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        reduced_map(&self.prop.unitary(t), self.layout, self.keep, x)
    }

    pub fn evolve(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        DensityMatrix::new_unchecked(self.apply(rho.matrix(), t)?)
    }

    /// Trace distance of a pair evolved for each time in `times`.
    pub fn distance_curve(&self, pair: &StatePair, times: &[f64]) -> Result<Vec<f64>> {
        times
            .iter()
            .map(|&t| {
                let u = self.prop.unitary(t);
                let r1 = reduced_map(&u, self.layout, self.keep, pair.rho1.matrix())?;
                let r2 = reduced_map(&u, self.layout, self.keep, pair.rho2.matrix())?;
                trace_distance(&DensityMatrix::new_unchecked(r1)?, &DensityMatrix::new_unchecked(r2)?)
            })
            .collect()
    }
}

/// `Tr_rest[V(t) (ρ₀ ⊗ |0…0⟩⟨0…0|) V(t)†]` restricted to dimension `keep`.
pub fn evolve_reduced(
    model: &TrainedModel,
    keep: usize,
    rho0_sys: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    ReducedChannel::new(model, keep)?.evolve(rho0_sys, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub label: String,
    pub rho1: DensityMatrix,
    pub rho2: DensityMatrix,
}

fn pure(amps: &[C64]) -> DensityMatrix {
    DensityMatrix::new_unchecked(ComplexMatrix::outer(amps, amps)).expect("pure state")
}

/// Antipodal pure states `(I ± n·σ)/2`.
pub fn bloch_pair(n: [f64; 3], label: String) -> StatePair {
    let [x, y, z] = n;
    let half = |s: f64| {
        DensityMatrix::new_unchecked(ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(0.5 * (1.0 + s * z), 0.0),
                C64::new(0.5 * s * x, -0.5 * s * y),
                C64::new(0.5 * s * x, 0.5 * s * y),
                C64::new(0.5 * (1.0 - s * z), 0.0),
            ],
        )
        .expect("2x2"))
        .expect("bloch state")
    };
    StatePair {
        label,
        rho1: half(1.0),
        rho2: half(-1.0),
    }
}

/// `count` roughly uniform unit vectors (Fibonacci lattice).
pub fn fibonacci_sphere(count: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Candidate initial pairs for a subspace of `qubits` qubits.
///
/// One qubit: `count` antipodal pairs on a Fibonacci grid plus `(|0⟩, |1⟩)`.
/// Larger subspaces have no Bloch sphere; they get the computational pairs
/// `(|0⟩, |j⟩)` and `count` random orthogonal pure pairs from `seed`.
pub fn default_pairs(qubits: usize, count: usize, seed: u64) -> Vec<StatePair> {
    let dim = 1usize << qubits;
    let basis = |j: usize| {
        let mut v = vec![ZERO; dim];
        v[j] = C64::new(1.0, 0.0);
        v
    };
    let mut pairs = Vec::new();
    if qubits == 1 {
        for (i, n) in fibonacci_sphere(count).into_iter().enumerate() {
            pairs.push(bloch_pair(n, format!("bloch-{i}")));
        }
        pairs.push(StatePair {
            label: "computational".into(),
            rho1: pure(&basis(0)),
            rho2: pure(&basis(1)),
        });
        return pairs;
    }
    for j in 1..dim {
        pairs.push(StatePair {
            label: format!("computational-0-{j}"),
            rho1: pure(&basis(0)),
            rho2: pure(&basis(j)),
        });
    }
    let mut rng = SeededRng::new(seed);
    for i in 0..count {
        let u = crate::qcore::random_unitary(dim, &mut rng);
        pairs.push(StatePair {
            label: format!("random-{i}"),
            rho1: pure(&u.column(0)),
            rho2: pure(&u.column(1)),
        });
    }
    pairs
}

/// `0, dt, 2dt, …, t_max`.
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParams(format!("time grid 0..{t_max} step {dt}")));
    }
    let steps = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|i| i as f64 * dt).collect())
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidParams("time grid needs at least two points".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `dD/dt` by central differences, one-sided at the ends.
pub fn sigma_curve(distances: &[f64], times: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            (distances[b] - distances[a]) / (times[b] - times[a])
        })
        .collect()
}

/// `σ` at a single time: central difference with step `dt_grid`, forward
/// difference when `t − dt_grid` would be negative.
pub fn sigma(
    model: &TrainedModel,
    keep: usize,
    pair: &StatePair,
    t: f64,
    dt_grid: f64,
) -> Result<f64> {
    if !(dt_grid > 0.0) {
        return Err(Error::InvalidParams("dt_grid must be positive".into()));
    }
    let ch = ReducedChannel::new(model, keep)?;
    let (lo, hi) = if t - dt_grid < 0.0 { (t, t + dt_grid) } else { (t - dt_grid, t + dt_grid) };
    let d = ch.distance_curve(pair, &[lo, hi])?;
    Ok((d[1] - d[0]) / (hi - lo))
}

/// Running trapezoid integral of `max(σ, 0)`.
pub fn cumulative_positive(sigmas: &[f64], times: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(sigmas.windows(2).zip(times.windows(2)).map(|(s, t)| {
            acc += 0.5 * (s[0].max(0.0) + s[1].max(0.0)) * (t[1] - t[0]);
            acc
        }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCurve {
    pub label: String,
    pub distance: Vec<f64>,
    pub sigma: Vec<f64>,
    pub cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovReport {
    pub times: Vec<f64>,
    pub pairs: Vec<PairCurve>,
    /// Max over pairs of the cumulative measure at each time.
    pub n_of_t: Vec<f64>,
}

impl NonMarkovReport {
    pub fn total(&self) -> f64 {
        self.n_of_t.last().copied().unwrap_or(0.0)
    }

    pub fn max_sigma(&self) -> f64 {
        self.pairs
            .iter()
            .flat_map(|p| p.sigma.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn n_measure(
    model: &TrainedModel,
    keep: usize,
    pairs: &[StatePair],
    times: &[f64],
) -> Result<NonMarkovReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidParams("no initial state pairs".into()));
    }
    check_grid(times)?;
    let ch = ReducedChannel::new(model, keep)?;
    let sd = model.layout.symbols(keep);
    if let Some(p) = pairs.iter().find(|p| p.rho1.dim() != sd || p.rho2.dim() != sd) {
        return Err(Error::Shape(format!("pair {} does not match subspace {keep}", p.label)));
    }
    let curves: Vec<PairCurve> = pairs
        .par_iter()
        .map(|pair| {
            let distance = ch.distance_curve(pair, times)?;
            let sigma = sigma_curve(&distance, times);
            let cumulative = cumulative_positive(&sigma, times);
            Ok(PairCurve {
                label: pair.label.clone(),
                distance,
                sigma,
                cumulative,
            })
        })
        .collect::<Result<_>>()?;
    let n_of_t = (0..times.len())
        .map(|t| curves.iter().map(|c| c.cumulative[t]).fold(0.0, f64::max))
        .collect();
    Ok(NonMarkovReport {
        times: times.to_vec(),
        pairs: curves,
        n_of_t,
    })
}

fn lf_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// `pair_id,t,D,sigma`
pub fn write_pairs_csv<W: Write>(report: &NonMarkovReport, writer: W) -> Result<()> {
    let mut w = lf_writer(writer);
    w.write_record(["pair_id", "t", "D", "sigma"])?;
    for (id, c) in report.pairs.iter().enumerate() {
        for (i, t) in report.times.iter().enumerate() {
            w.write_record([
                id.to_string(),
                t.to_string(),
                c.distance[i].to_string(),
                c.sigma[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,N`
pub fn write_measure_csv<W: Write>(report: &NonMarkovReport, writer: W) -> Result<()> {
    let mut w = lf_writer(writer);
    w.write_record(["t", "N"])?;
    for (t, n) in report.times.iter().zip(&report.n_of_t) {
        w.write_record([t.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::AnsatzParams;
    use crate::learner::{forward_prob, TrainedModel};
    use crate::qcore::{gates, partial_trace, random_density};
    use crate::timeseries::Discretization;

    fn model(params: AnsatzParams, dims: Vec<usize>, env: usize) -> TrainedModel {
        let disc = Discretization::identity(&dims);
        TrainedModel::from_params(SubspaceLayout::new(dims, env).unwrap(), params, disc, vec![1]).unwrap()
    }

    #[test]
    fn reduced_map_matches_full_density_pipeline() {
        let mut rng = SeededRng::new(2);
        let layout = SubspaceLayout::new(vec![1, 2], 1).unwrap();
        let u = crate::qcore::random_unitary(16, &mut rng);
        for keep in 0..2 {
            let q = layout.dims[keep];
            let rho = random_density(q, &mut rng);
            let got = reduced_map(&u, &layout, keep, rho.matrix()).unwrap();
            // brute force: assemble the full product state in layout order
            let zero = |n: usize| DensityMatrix::basis_projector(n, 0).unwrap();
            let full = match keep {
                0 => rho.tensor(&zero(2)).tensor(&zero(1)),
                _ => zero(1).tensor(&rho).tensor(&zero(1)),
            };
            let evolved = full.conjugate(&u).unwrap();
            let want = partial_trace(&evolved, &layout, keep).unwrap();
            assert!(got.max_abs_diff(want.matrix()) < 1e-12);
        }
    }

    #[test]
    fn zero_time_and_identity_are_identity_channels() {
        let mut rng = SeededRng::new(6);
        let m = model(AnsatzParams::random(3, 2, 2, 1.0, &mut rng), vec![1], 2);
        let rho = random_density(1, &mut rng);
        let out = evolve_reduced(&m, 0, &rho, 0.0).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-12);

        let id = model(AnsatzParams::zeros(3, 2, 2), vec![1], 2);
        for t in [0.5, 3.0, 17.25] {
            let out = evolve_reduced(&id, 0, &rho, t).unwrap();
            assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-12);
        }
        let times = time_grid(5.0, 0.25).unwrap();
        let report = n_measure(&id, 0, &default_pairs(1, 8, 0), &times).unwrap();
        assert!(report.n_of_t.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn cnot_hadamard_maximally_mixes() {
        let layout = SubspaceLayout::new(vec![1], 1).unwrap();
        let h = crate::qcore::kron(&gates::hadamard(), &ComplexMatrix::identity(2));
        let u = &gates::cnot(0, 1) * &h;
        let rho0 = DensityMatrix::basis_projector(1, 0).unwrap();
        let out = reduced_map(&u, &layout, 0, rho0.matrix()).unwrap();
        let half = ComplexMatrix::identity(2).scale(C64::new(0.5, 0.0));
        assert!(out.max_abs_diff(&half) < 1e-12);
    }

    #[test]
    fn outputs_are_density_matrices_and_match_forward_model() {
        let mut rng = SeededRng::new(13);
        for _ in 0..10 {
            let m = model(AnsatzParams::random(4, 2, 2, 2.0, &mut rng), vec![1, 1], 2);
            for keep in 0..2 {
                let rho = random_density(1, &mut rng);
                let out = evolve_reduced(&m, keep, &rho, 2.5).unwrap();
                out.validate().unwrap();
                for i in 0..2 {
                    let basis = DensityMatrix::basis_projector(1, i).unwrap();
                    let out = evolve_reduced(&m, keep, &basis, 2.5).unwrap();
                    let a = forward_prob(&m.params, &m.layout, keep, i, 2.5).unwrap();
                    for (j, &p) in a.iter().enumerate() {
                        assert!((out.matrix()[(j, j)].re - p).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn closed_single_dimension_has_no_backflow() {
        let mut rng = SeededRng::new(4);
        let m = model(AnsatzParams::random(2, 2, 2, 1.0, &mut rng), vec![2], 0);
        let times = time_grid(10.0, 0.25).unwrap();
        let report = n_measure(&m, 0, &default_pairs(2, 4, 1), &times).unwrap();
        for c in &report.pairs {
            assert!(c.sigma.iter().all(|s| s.abs() < 1e-9), "{}", c.label);
        }
        assert!(report.total() < 1e-9);
    }

    #[test]
    fn measure_is_non_decreasing() {
        let mut rng = SeededRng::new(11);
        let m = model(AnsatzParams::random(3, 2, 2, 1.0, &mut rng), vec![1], 2);
        let times = time_grid(20.0, 0.25).unwrap();
        let report = n_measure(&m, 0, &default_pairs(1, 16, 0), &times).unwrap();
        assert!(report.n_of_t.windows(2).all(|w| w[1] >= w[0]));
        for c in &report.pairs {
            assert!(c.distance.iter().all(|d| (0.0..=1.0).contains(d)));
        }
        // the single-time routine agrees with the curve at interior points
        let s = sigma(&m, 0, &default_pairs(1, 16, 0)[3], 5.0, 0.25).unwrap();
        assert!((s - report.pairs[3].sigma[20]).abs() < 1e-12);
        assert!(n_measure(&m, 0, &[], &times).is_err());
    }

    #[test]
    fn fibonacci_points_are_unit_and_pairs_start_orthogonal() {
        for p in fibonacci_sphere(32) {
            assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for pair in default_pairs(1, 32, 0).iter().chain(&default_pairs(2, 3, 0)) {
            assert!((trace_distance(&pair.rho1, &pair.rho2).unwrap() - 1.0).abs() < 1e-9);
        }
        assert_eq!(default_pairs(1, 32, 0).len(), 33);
    }

    #[test]
    fn trapezoid_of_positive_part() {
        let times = [0.0, 1.0, 2.0, 3.0];
        let c = cumulative_positive(&[1.0, -1.0, 2.0, 2.0], &times);
        assert_eq!(c, vec![0.0, 0.5, 1.5, 3.5]);
        let s = sigma_curve(&[0.0, 1.0, 4.0, 9.0], &times);
        assert_eq!(s, vec![1.0, 2.0, 4.0, 5.0]);
    }
}
