//! Certificates for structural claims about learned and candidate processes:
//! stochasticity classes, complete positivity, closed and open model residuals,
//! and stabilisation of the learned spectrum as lags are added.

use serde::{Deserialize, Serialize};

use crate::ansatz::{build_v, hamiltonian_eigenvalues, AnsatzParams};
use crate::error::{Error, Result};
use crate::learner::{
    stochastic_descent, train, AnsatzShape, ForwardModel, TrainConfig, TrainedModel,
};
use crate::nonmarkov::{reduced_map, ReducedChannel};
use crate::optim::{minimize, LocalOptions, OptimizerKind};
use crate::qcore::{eigh, eigvalsh, kron, ComplexMatrix, SubspaceLayout, C64, ONE, ZERO};
use crate::rng::SeededRng;
use crate::timeseries::{Discretization, TransitionSet};

const STOCHASTIC_TOL: f64 = 1e-9;
const UNISTOCHASTIC_TOL: f64 = 1e-8;
const CPTP_TOL: f64 = 1e-9;

/// Budget for the unitary local searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub restarts: usize,
    pub evals_per_restart: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            evals_per_restart: 4000,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn budget(&self) -> usize {
        self.restarts * self.evals_per_restart
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StochasticClass {
    NotStochastic,
    Stochastic,
    DoublyStochastic,
    Unistochastic { witness: ComplexMatrix },
    UnistochasticUnknown { residual: f64 },
}

impl StochasticClass {
    pub fn is_doubly_stochastic(&self) -> bool {
        matches!(
            self,
            Self::DoublyStochastic | Self::Unistochastic { .. } | Self::UnistochasticUnknown { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::NotStochastic => "not-stochastic",
            Self::Stochastic => "stochastic",
            Self::DoublyStochastic => "doubly-stochastic",
            Self::Unistochastic { .. } => "unistochastic",
            Self::UnistochasticUnknown { .. } => "unistochastic-unknown",
        }
    }
}

/// `U = exp(iH)` with `H` Hermitian built from `dim²` reals: the diagonal, then
/// the real and imaginary parts of the strict upper triangle.
pub fn unitary_from_params(x: &[f64], dim: usize) -> ComplexMatrix {
    hermitian_from_params(x, dim).and_then(|h| crate::qcore::expm_i_hermitian(&h, 1.0)).expect("Hermitian generator")
}

fn hermitian_from_params(x: &[f64], dim: usize) -> Result<ComplexMatrix> {
    if x.len() != dim * dim {
        return Err(Error::Shape(format!("{} generator parameters for dimension {dim}", x.len())));
    }
    let mut h = ComplexMatrix::zeros(dim, dim);
    let mut it = x.iter().copied();
    for i in 0..dim {
        h[(i, i)] = C64::new(it.next().expect("len"), 0.0);
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let re = it.next().expect("len");
            let im = it.next().expect("len");
            h[(i, j)] = C64::new(re, im);
            h[(j, i)] = C64::new(re, -im);
        }
    }
    Ok(h)
}

/// `exp(ikH)` for each requested power, from one eigendecomposition.
fn unitary_powers(x: &[f64], dim: usize, powers: &[usize]) -> Vec<ComplexMatrix> {
    let h = hermitian_from_params(x, dim).expect("length checked by caller");
    let e = eigh(&h).expect("Jacobi on a small Hermitian matrix");
    powers
        .iter()
        .map(|&k| {
            let mut scaled = e.vectors.clone();
            for c in 0..dim {
                let ph = C64::from_polar(1.0, k as f64 * e.values[c]);
                for r in 0..dim {
                    scaled[(r, c)] *= ph;
                }
            }
            &scaled * &e.vectors.dagger()
        })
        .collect()
}

/// Restarted local search over `dim×dim` unitaries. `x0` seeds the first
/// restart; later restarts start uniformly in `[−π, π)`. Stops early once the
/// objective falls below `target`.
fn search_unitary(
    dim: usize,
    cfg: &SearchConfig,
    target: f64,
    f: &dyn Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let n = dim * dim;
    let mut rng = SeededRng::new(cfg.seed);
    let opts = LocalOptions {
        max_evals: cfg.evals_per_restart,
        initial_step: 0.5,
        xtol: 1e-14,
        ftol: 0.0,
    };
    let mut best = (vec![0.0; n], f(&vec![0.0; n]));
    for r in 0..cfg.restarts {
        if best.1 <= target {
            break;
        }
        let x0: Vec<f64> = if r == 0 {
            vec![0.0; n]
        } else {
            (0..n).map(|_| rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI)).collect()
        };
        let mut g = |x: &[f64]| f(x);
        let res = minimize(OptimizerKind::Simplex, &mut g, &x0, &opts);
        if res.fx < best.1 {
            best = (res.x, res.fx);
        }
    }
    best
}

fn check_square(t: &[Vec<f64>]) -> Result<usize> {
    let n = t.len();
    if n == 0 || t.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("stochastic classification needs a square matrix".into()));
    }
    Ok(n)
}

/// Classify a real matrix by row sums, column sums, then unistochasticity.
/// 2×2 bistochastic matrices always get an explicit orthogonal witness; larger
/// ones a bounded search over unitaries.
pub fn classify_stochastic(t: &[Vec<f64>], search: &SearchConfig) -> Result<StochasticClass> {
    let n = check_square(t)?;
    let in_range = t.iter().flatten().all(|&x| (-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&x));
    let rows_ok = t.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL);
    if !in_range || !rows_ok {
        return Ok(StochasticClass::NotStochastic);
    }
    let cols_ok = (0..n).all(|j| (t.iter().map(|r| r[j]).sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL);
    if !cols_ok {
        return Ok(StochasticClass::Stochastic);
    }
    if n == 1 {
        return Ok(StochasticClass::Unistochastic {
            witness: ComplexMatrix::identity(1),
        });
    }
    if n == 2 {
        let p = t[0][0].clamp(0.0, 1.0).sqrt();
        let q = t[0][1].clamp(0.0, 1.0).sqrt();
        let witness = ComplexMatrix::from_real_rows(&[vec![p, q], vec![q, -p]]);
        return Ok(StochasticClass::Unistochastic { witness });
    }
    let objective = |x: &[f64]| -> f64 {
        let u = unitary_from_params(x, n);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (u[(i, j)].norm_sqr() - t[i][j]).powi(2);
            }
        }
        s
    };
    let (x, _) = search_unitary(n, search, UNISTOCHASTIC_TOL * UNISTOCHASTIC_TOL, &objective);
    let u = unitary_from_params(&x, n);
    let residual = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (u[(i, j)].norm_sqr() - t[i][j]).abs())
        .fold(0.0, f64::max);
    Ok(if residual < UNISTOCHASTIC_TOL {
        StochasticClass::Unistochastic { witness: u }
    } else {
        StochasticClass::UnistochasticUnknown { residual }
    })
}

/// `|U_ij|²` as nested rows.
pub fn moduli_squared(u: &ComplexMatrix) -> Vec<Vec<f64>> {
    (0..u.rows())
        .map(|i| (0..u.cols()).map(|j| u[(i, j)].norm_sqr()).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptpReport {
    pub is_cptp: bool,
    pub min_choi_eig: f64,
    pub trace_dev: f64,
}

/// Choi test of an arbitrary linear map on `dim_in × dim_in` matrices.
pub fn check_choi(
    dim_in: usize,
    map: &dyn Fn(&ComplexMatrix) -> Result<ComplexMatrix>,
) -> Result<CptpReport> {
    let mut blocks = Vec::with_capacity(dim_in * dim_in);
    let mut trace_dev = 0.0f64;
    for a in 0..dim_in {
        for b in 0..dim_in {
            let mut e = ComplexMatrix::zeros(dim_in, dim_in);
            e[(a, b)] = ONE;
            let out = map(&e)?;
            let want = if a == b { ONE } else { ZERO };
            trace_dev = trace_dev.max((out.trace() - want).norm());
            blocks.push(out);
        }
    }
    let dim_out = blocks[0].rows();
    if blocks.iter().any(|m| m.rows() != dim_out || !m.is_square()) {
        return Err(Error::Shape("map outputs differ in shape".into()));
    }
    // Σ |a⟩⟨b| ⊗ Φ(|a⟩⟨b|)
    let mut choi = ComplexMatrix::zeros(dim_in * dim_out, dim_in * dim_out);
    for a in 0..dim_in {
        for b in 0..dim_in {
            let blk = &blocks[a * dim_in + b];
            for p in 0..dim_out {
                for q in 0..dim_out {
                    choi[(a * dim_out + p, b * dim_out + q)] = blk[(p, q)];
                }
            }
        }
    }
    let min_choi_eig = eigvalsh(&choi)?[0];
    Ok(CptpReport {
        is_cptp: min_choi_eig >= -CPTP_TOL && trace_dev <= CPTP_TOL,
        min_choi_eig,
        trace_dev,
    })
}

/// CPTP check of `ρ ↦ Tr_rest[U (ρ ⊗ |0…0⟩⟨0…0|) U†]` on subspace `keep`.
pub fn check_cptp_unitary(u: &ComplexMatrix, layout: &SubspaceLayout, keep: usize) -> Result<CptpReport> {
    layout.check_dim(keep)?;
    check_choi(layout.symbols(keep), &|x| reduced_map(u, layout, keep, x))
}

/// CPTP check of the map a model induces on dimension `keep` at lag `k`.
pub fn check_cptp(model: &TrainedModel, keep: usize, k: usize) -> Result<CptpReport> {
    let ch = ReducedChannel::new(model, keep)?;
    check_choi(1 << ch.subspace_qubits(), &|x| ch.apply(x, k as f64))
}

/// `‖V V† − I‖_max` of the literal matrix `[[½,½],[½,½]]`, which moduli-squared
/// and amplitude readings of an all-½ transition matrix both lead to.
pub fn half_matrix_unitarity_defect() -> f64 {
    let v = ComplexMatrix::from_real_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
    (&v * &v.dagger()).max_abs_diff(&ComplexMatrix::identity(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedResidual {
    /// `max_{k,i,j} | |(U^k)_{ji}|² − T_ij(k) |` at the best unitary found.
    pub residual: f64,
    pub best_unitary: ComplexMatrix,
    pub lags: Vec<usize>,
    pub budget: usize,
    pub seed: u64,
}

fn closed_deviations<'a>(
    u_pows: &'a [ComplexMatrix],
    transitions: &'a TransitionSet,
) -> impl Iterator<Item = f64> + 'a {
    let m = &transitions.matrices[0];
    u_pows.iter().zip(m).flat_map(|(u, t)| {
        let s = t.states;
        (0..s)
            .filter(|&i| t.is_visited(i))
            .flat_map(move |i| (0..s).map(move |j| u[(j, i)].norm_sqr() - t.get(i, j)))
    })
}

/// Best closed (environment-free) model for a single-dimension transition set.
/// Searches `U = exp(iH)` by restarted simplex on the squared deviations and
/// reports the max-absolute deviation at the optimum. Masked rows are skipped.
pub fn closed_model_residual(transitions: &TransitionSet, search: &SearchConfig) -> Result<ClosedResidual> {
    if transitions.dims() != 1 {
        return Err(Error::Shape(format!(
            "closed-model residual takes one dimension, got {}",
            transitions.dims()
        )));
    }
    let dim = transitions.states(0);
    let lags = transitions.lags.clone();
    let objective = |x: &[f64]| -> f64 {
        closed_deviations(&unitary_powers(x, dim, &lags), transitions)
            .map(|d| d * d)
            .sum()
    };
    let minimax = |x: &[f64]| -> f64 {
        closed_deviations(&unitary_powers(x, dim, &lags), transitions)
            .map(f64::abs)
            .fold(0.0, f64::max)
    };
    let (mut x, _) = search_unitary(dim, search, 1e-16, &objective);
    let mut residual = minimax(&x);
    if residual > 1e-9 {
        // the least-squares optimum need not be the minimax one; refine on the max
        let opts = LocalOptions {
            max_evals: search.evals_per_restart,
            initial_step: 0.1,
            xtol: 1e-14,
            ftol: 0.0,
        };
        let mut g = |y: &[f64]| minimax(y);
        let refined = minimize(OptimizerKind::Simplex, &mut g, &x, &opts);
        if refined.fx < residual {
            x = refined.x;
            residual = refined.fx;
        }
    }
    Ok(ClosedResidual {
        residual,
        best_unitary: unitary_from_params(&x, dim),
        lags,
        budget: search.budget(),
        seed: search.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceResidual {
    /// Max over lags, unmasked rows and targets of `|T_ij(k) − a_ij(k)|`.
    pub epsilon: f64,
    pub params: AnsatzParams,
    /// `V(α, 1)` at the witnessing parameters.
    pub best_unitary: ComplexMatrix,
    pub lags: Vec<usize>,
    pub budget: usize,
    pub seed: u64,
}

/// Dense-search limit for [`coherence_residual`].
pub const COHERENCE_MAX_QUBITS: usize = 4;

/// `(ε, K)` residual: the training loop with a max-absolute-deviation
/// objective instead of KL. Running out of budget is not an error; the best
/// parameters seen are reported.
pub fn coherence_residual(
    transitions: &TransitionSet,
    layout: &SubspaceLayout,
    shape: AnsatzShape,
    cfg: &TrainConfig,
) -> Result<CoherenceResidual> {
    cfg.validate()?;
    layout.validate()?;
    if layout.total_qubits() > COHERENCE_MAX_QUBITS {
        return Err(Error::InvalidParams(format!(
            "coherence search is limited to {COHERENCE_MAX_QUBITS} qubits, layout has {}",
            layout.total_qubits()
        )));
    }
    let terms = crate::learner::unmasked_terms(transitions);
    if terms.is_empty() {
        return Err(Error::Untrainable("every transition row is masked".into()));
    }
    // validate shapes and lags once, through the KL path
    let mut init_rng = SeededRng::with_stream(cfg.seed, 0);
    let template = AnsatzParams::random(
        layout.total_qubits(),
        shape.layers,
        shape.locality,
        cfg.init_scale,
        &mut init_rng,
    );
    crate::learner::batch_cost(&template, layout, transitions, &terms)?;

    let lag_idx: Vec<usize> = terms
        .iter()
        .map(|t| transitions.lag_index(t.k).expect("validated"))
        .collect();
    let objective = |x: &[f64], batch: &[usize]| -> f64 {
        let params = template.with_flat(x);
        let fwd = ForwardModel::new(&params, layout).expect("shape validated");
        batch
            .iter()
            .map(|&b| {
                let t = terms[b];
                let a = fwd.marginal(t.d, t.i, t.k as f64).expect("validated");
                let row = transitions.get(t.d, lag_idx[b]).row(t.i);
                a.iter().zip(row).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let result = stochastic_descent(template.to_flat(), terms.len(), cfg, &objective);
    let params = template.with_flat(&result.best);
    let epsilon = result.log.last().expect("non-empty log").best_cost;
    Ok(CoherenceResidual {
        epsilon,
        best_unitary: build_v(&params, 1.0),
        params,
        lags: transitions.lags.clone(),
        budget: cfg.max_iters * cfg.inner_evals,
        seed: cfg.seed,
    })
}

/// `{1} ∪ {2, 4, …, 2t}` for `t = 1..=steps`.
pub fn default_schedule(steps: usize) -> Vec<Vec<usize>> {
    (1..=steps)
        .map(|t| std::iter::once(1).chain((1..=t).map(|s| 2 * s)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRun {
    pub lags: Vec<usize>,
    /// Sorted `φ(b)` of the trained model.
    pub spectrum: Vec<f64>,
    pub final_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub runs: Vec<ConvergenceRun>,
    /// [`spectrum_distance`] between consecutive runs.
    pub distances: Vec<f64>,
}

impl ConvergenceReport {
    /// Each distance is at most the previous one plus `tolerance`.
    pub fn settles(&self, tolerance: f64) -> bool {
        self.distances.windows(2).all(|w| w[1] <= w[0] + tolerance)
    }
}

fn wrap(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    x - tau * (x / tau).round()
}

/// Distance between two learned spectra as seen by integer-lag data.
///
/// Only `e^{iφ}` is observable, up to a global phase and up to complex
/// conjugation of `V` (basis-state statistics cannot tell `V` from `V̄`). The
/// distance is the RMS circular difference after the best matching, global
/// shift and sign. Matching is brute force, so spectra are limited to 8 values.
pub fn spectrum_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len();
    if n != b.len() || n == 0 {
        return Err(Error::Shape("spectra differ in length".into()));
    }
    if n > 8 {
        return Err(Error::InvalidParams("spectrum matching is limited to 8 eigenvalues".into()));
    }
    let mut best = f64::INFINITY;
    for sign in [1.0, -1.0] {
        let mut perm: Vec<usize> = (0..n).collect();
        permutations(&mut perm, n, &mut |p| {
            let deltas: Vec<f64> = (0..n).map(|i| wrap(sign * b[p[i]] - a[i])).collect();
            // circular mean of the differences as the shift
            let (s, c) = deltas.iter().fold((0.0, 0.0), |(s, c), d| (s + d.sin(), c + d.cos()));
            let shift = s.atan2(c);
            let rms = (deltas.iter().map(|d| wrap(d - shift).powi(2)).sum::<f64>() / n as f64).sqrt();
            best = best.min(rms);
        });
    }
    Ok(best)
}

// Heap's algorithm
fn permutations(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k <= 1 {
        visit(p);
        return;
    }
    for i in 0..k {
        permutations(p, k - 1, visit);
        let j = if k.is_multiple_of(2) { i } else { 0 };
        p.swap(j, k - 1);
    }
}

/// Train one model per lag set, all from the same initialisation seed, and
/// compare consecutive learned spectra.
pub fn canonical_convergence(
    transitions: &TransitionSet,
    layout: &SubspaceLayout,
    shape: AnsatzShape,
    schedule: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<ConvergenceReport> {
    if schedule.is_empty() {
        return Err(Error::InvalidParams("empty lag schedule".into()));
    }
    for w in schedule.windows(2) {
        if !w[0].iter().all(|k| w[1].contains(k)) {
            return Err(Error::InvalidParams("lag schedule must be nested".into()));
        }
    }
    let runs = schedule
        .iter()
        .map(|lags| {
            let sub = transitions.subset(lags)?;
            let disc = Discretization::identity(&layout.dims);
            let model = train(&sub, layout, shape, cfg, disc)?;
            let mut spectrum = hamiltonian_eigenvalues(&model.params);
            spectrum.sort_by(f64::total_cmp);
            Ok(ConvergenceRun {
                lags: sub.lags.clone(),
                spectrum,
                final_cost: model.final_cost().unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let distances = runs
        .windows(2)
        .map(|w| spectrum_distance(&w[0].spectrum, &w[1].spectrum))
        .collect::<Result<_>>()?;
    Ok(ConvergenceReport { runs, distances })
}

/// Serialised certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub claim: String,
    pub verdict: bool,
    pub residual: f64,
    pub budget: usize,
    pub seed: u64,
}

pub fn certificates_json(certs: &[Certificate]) -> Result<String> {
    crate::json::to_string(certs).map_err(|e| Error::Numerical(format!("serialising certificates: {e}")))
}

/// `CNOT (H ⊗ I)` on system qubit 0 and environment qubit 1, with the CNOT
/// controlled by the environment:
/// `(1/√2)·[[1,0,1,0],[0,1,0,−1],[1,0,−1,0],[0,1,0,1]]`.
pub fn cnot_hadamard() -> ComplexMatrix {
    use crate::qcore::gates;
    &gates::cnot(1, 0) * &kron(&gates::hadamard(), &ComplexMatrix::identity(2))
}
