//! Forward model, KL training objective and mini-batched derivative-free training.
//!
//! For a term `(d, i, k)` the register starts in the basis state holding symbol
//! `i` in subspace `d` and zeros everywhere else (environment included), evolves
//! under `V(α, k)`, and the marginal distribution of subspace `d` is compared to
//! row `i` of the empirical matrix `T^d(k)` with a floored KL divergence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzParams, Propagator};
use crate::error::{Error, Result};
use crate::optim::{minimize, LocalOptions, OptimizerKind};
use crate::qcore::{ComplexMatrix, SubspaceLayout, C64};
use crate::rng::SeededRng;
use crate::timeseries::{Discretization, TransitionMatrix, TransitionSet};

/// Floor applied to both distributions inside the KL ratio.
pub const KL_FLOOR: f64 = 1e-10;

pub const MODEL_SCHEMA_VERSION: u64 = 1;

/// One summand of the objective: initial symbol `i` of dimension `d` evolved
/// for lag `k`, compared over all target symbols `j` at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LossTerm {
    pub d: usize,
    pub k: usize,
    pub i: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzShape {
    pub layers: usize,
    pub locality: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub init_scale: f64,
    /// Stop once the full-set cost changes by less than this between outer
    /// iterations, `patience` times in a row.
    pub tolerance: f64,
    pub patience: usize,
    /// Objective evaluations allowed per mini-batch.
    pub inner_evals: usize,
    /// Initial simplex edge / trust radius of the inner optimiser.
    pub initial_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 30,
            max_iters: 200,
            seed: 0,
            optimizer: OptimizerKind::Simplex,
            init_scale: 0.1,
            tolerance: 1e-10,
            patience: 10,
            inner_evals: 200,
            initial_step: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch_size must be at least 1".into()));
        }
        if self.inner_evals == 0 {
            return Err(Error::InvalidParams("inner_evals must be at least 1".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidParams("init_scale must be finite and ≥ 0".into()));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(Error::InvalidParams("initial_step must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidParams("tolerance must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// One outer iteration. Iteration 0 records the initial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecord {
    pub iteration: usize,
    pub batch_cost: f64,
    pub full_cost: f64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub schema_version: u64,
    pub layout: SubspaceLayout,
    pub params: AnsatzParams,
    pub discretization: Discretization,
    pub lags: Vec<usize>,
    pub training_log: Vec<TrainRecord>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl TrainedModel {
    /// Untrained model wrapping explicit parameters.
    pub fn from_params(
        layout: SubspaceLayout,
        params: AnsatzParams,
        discretization: Discretization,
        lags: Vec<usize>,
    ) -> Result<Self> {
        let model = Self {
            schema_version: MODEL_SCHEMA_VERSION,
            layout,
            params,
            discretization,
            lags,
            training_log: Vec::new(),
            seed: 0,
            optimizer: OptimizerKind::Simplex,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.params.validate()?;
        self.discretization.validate()?;
        if self.params.num_qubits != self.layout.total_qubits() {
            return Err(Error::Shape(format!(
                "{}-qubit ansatz for a {}-qubit layout",
                self.params.num_qubits,
                self.layout.total_qubits()
            )));
        }
        if self.discretization.bits != self.layout.dims {
            return Err(Error::Shape("discretization bits differ from layout dims".into()));
        }
        Ok(())
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.training_log.last().map(|r| r.best_cost)
    }

    pub fn initial_cost(&self) -> Option<f64> {
        self.training_log.first().map(|r| r.full_cost)
    }
}

/// Marginal of subspace `d` from full-register amplitudes.
pub fn subspace_marginal(amps: &[C64], layout: &SubspaceLayout, d: usize) -> Vec<f64> {
    let (start, len) = layout.qubit_range(d);
    let shift = layout.total_qubits() - start - len;
    let mask = (1usize << len) - 1;
    let mut probs = vec![0.0; 1 << len];
    for (idx, a) in amps.iter().enumerate() {
        probs[(idx >> shift) & mask] += a.norm_sqr();
    }
    probs
}

/// Joint distribution over all system subspaces (environment summed out),
/// indexed by the system part of the basis index.
pub fn system_joint(amps: &[C64], layout: &SubspaceLayout) -> Vec<f64> {
    let mut probs = vec![0.0; 1 << layout.system_qubits()];
    for (idx, a) in amps.iter().enumerate() {
        probs[idx >> layout.env_qubits] += a.norm_sqr();
    }
    probs
}

/// `V(α, ·)` prepared once for a layout.
#[derive(Debug, Clone)]
pub struct ForwardModel<'a> {
    layout: &'a SubspaceLayout,
    prop: Propagator,
}

impl<'a> ForwardModel<'a> {
    pub fn new(params: &AnsatzParams, layout: &'a SubspaceLayout) -> Result<Self> {
        params.validate()?;
        if params.num_qubits != layout.total_qubits() {
            return Err(Error::Shape(format!(
                "{}-qubit ansatz for a {}-qubit layout",
                params.num_qubits,
                layout.total_qubits()
            )));
        }
        Ok(Self::new_unchecked(params, layout))
    }

    fn new_unchecked(params: &AnsatzParams, layout: &'a SubspaceLayout) -> Self {
        Self {
            layout,
            prop: Propagator::new(params),
        }
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    /// `a_{i·kd}`: distribution over target symbols of dimension `d`.
    pub fn marginal(&self, d: usize, i: usize, t: f64) -> Result<Vec<f64>> {
        let start = self.layout.embed_single(d, i)?;
        Ok(subspace_marginal(&self.prop.evolve_basis(start, t), self.layout, d))
    }

    /// Joint system distribution after evolving the basis state with the given
    /// per-dimension symbols.
    pub fn joint(&self, symbols: &[usize], t: f64) -> Result<Vec<f64>> {
        let start = self.layout.embed(symbols)?;
        Ok(system_joint(&self.prop.evolve_basis(start, t), self.layout))
    }
}

/// Probability vector over symbols `j` of dimension `d` after evolving symbol
/// `i` for time `t`.
pub fn forward_prob(
    params: &AnsatzParams,
    layout: &SubspaceLayout,
    d: usize,
    i: usize,
    t: f64,
) -> Result<Vec<f64>> {
    ForwardModel::new(params, layout)?.marginal(d, i, t)
}

/// Same quantity for an explicit full-register unitary.
pub fn forward_prob_unitary(
    u: &ComplexMatrix,
    layout: &SubspaceLayout,
    d: usize,
    i: usize,
) -> Result<Vec<f64>> {
    if u.rows() != layout.full_dim() || !u.is_square() {
        return Err(Error::Shape(format!(
            "{}x{} unitary for a {}-qubit layout",
            u.rows(),
            u.cols(),
            layout.total_qubits()
        )));
    }
    let start = layout.embed_single(d, i)?;
    Ok(subspace_marginal(&u.column(start), layout, d))
}

/// `Σ_j a_j · log(max(a_j, ε) / max(t_j, ε))` with `ε = 1e−10`.
pub fn kl_term(a: &[f64], t_row: &[f64]) -> Result<f64> {
    if a.len() != t_row.len() {
        return Err(Error::Shape(format!(
            "KL between vectors of length {} and {}",
            a.len(),
            t_row.len()
        )));
    }
    for (name, v) in [("model", a), ("target", t_row)] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParams(format!("{name} distribution sums to {s}")));
        }
    }
    Ok(kl_unchecked(a, t_row))
}

fn kl_unchecked(a: &[f64], t_row: &[f64]) -> f64 {
    a.iter()
        .zip(t_row)
        .map(|(&p, &q)| {
            if p == 0.0 {
                0.0
            } else {
                p * (p.max(KL_FLOOR) / q.max(KL_FLOOR)).ln()
            }
        })
        .sum()
}

/// Every unmasked term, in `(d, k, i)` order.
pub fn unmasked_terms(transitions: &TransitionSet) -> Vec<LossTerm> {
    let mut terms = Vec::new();
    for d in 0..transitions.dims() {
        for (li, &k) in transitions.lags.iter().enumerate() {
            let m = transitions.get(d, li);
            for i in 0..m.states {
                if m.is_visited(i) {
                    terms.push(LossTerm { d, k, i });
                }
            }
        }
    }
    terms
}

// Resolved term: lag index looked up once.
#[derive(Debug, Clone, Copy)]
struct ResolvedTerm {
    d: usize,
    k: usize,
    lag_index: usize,
    i: usize,
}

fn resolve(
    transitions: &TransitionSet,
    layout: &SubspaceLayout,
    batch: &[LossTerm],
) -> Result<Vec<ResolvedTerm>> {
    if transitions.dims() != layout.num_dims() {
        return Err(Error::Shape(format!(
            "{} transition dimensions for a {}-dimensional layout",
            transitions.dims(),
            layout.num_dims()
        )));
    }
    for d in 0..layout.num_dims() {
        if transitions.states(d) != layout.symbols(d) {
            return Err(Error::Shape(format!(
                "dimension {d}: {} states in transitions, {} in layout",
                transitions.states(d),
                layout.symbols(d)
            )));
        }
    }
    let mut sorted = batch.to_vec();
    sorted.sort_unstable();
    sorted
        .into_iter()
        .map(|t| {
            let lag_index = transitions
                .lag_index(t.k)
                .ok_or_else(|| Error::OutOfRange(format!("lag {} not in transition set", t.k)))?;
            if t.d >= transitions.dims() || t.i >= transitions.states(t.d) {
                return Err(Error::OutOfRange(format!("term {t:?}")));
            }
            if !transitions.get(t.d, lag_index).is_visited(t.i) {
                return Err(Error::InvalidParams(format!("term {t:?} is masked")));
            }
            Ok(ResolvedTerm {
                d: t.d,
                k: t.k,
                lag_index,
                i: t.i,
            })
        })
        .collect()
}

fn cost_resolved(fwd: &ForwardModel, transitions: &TransitionSet, terms: &[ResolvedTerm]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let a = fwd.marginal(t.d, t.i, t.k as f64).expect("resolved term");
            kl_unchecked(&a, transitions.get(t.d, t.lag_index).row(t.i))
        })
        .sum()
}

/// Sum of KL terms over the batch, accumulated in sorted `(d, k, i)` order.
pub fn batch_cost(
    params: &AnsatzParams,
    layout: &SubspaceLayout,
    transitions: &TransitionSet,
    batch: &[LossTerm],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidParams("empty batch".into()));
    }
    let terms = resolve(transitions, layout, batch)?;
    let fwd = ForwardModel::new(params, layout)?;
    Ok(cost_resolved(&fwd, transitions, &terms))
}

/// Outcome of [`stochastic_descent`].
#[derive(Debug, Clone)]
pub(crate) struct DescentResult {
    pub best: Vec<f64>,
    pub log: Vec<TrainRecord>,
}

/// The mini-batched outer loop shared by KL training and the residual searches.
/// `objective(x, batch)` evaluates the cost of flat parameters `x` on the terms
/// with the given indices; `num_terms` is the size of the full term set.
pub(crate) fn stochastic_descent(
    init: Vec<f64>,
    num_terms: usize,
    cfg: &TrainConfig,
    objective: &dyn Fn(&[f64], &[usize]) -> f64,
) -> DescentResult {
    let all: Vec<usize> = (0..num_terms).collect();
    let mut batch_rng = SeededRng::with_stream(cfg.seed, 1);
    let opts = LocalOptions {
        max_evals: cfg.inner_evals,
        initial_step: cfg.initial_step,
        ..LocalOptions::default()
    };

    let mut current = init;
    let mut full = objective(&current, &all);
    let mut best = current.clone();
    let mut best_cost = full;
    let mut log = vec![TrainRecord {
        iteration: 0,
        batch_cost: full,
        full_cost: full,
        best_cost,
    }];

    let mut flat = 0;
    for iteration in 1..=cfg.max_iters {
        let mut batch = batch_rng.sample_indices(num_terms, cfg.batch_size);
        batch.sort_unstable();
        let mut f = |x: &[f64]| objective(x, &batch);
        let result = minimize(cfg.optimizer, &mut f, &current, &opts);
        current = result.x;
        let previous = full;
        full = objective(&current, &all);
        if full < best_cost {
            best_cost = full;
            best.clone_from(&current);
        }
        log.push(TrainRecord {
            iteration,
            batch_cost: result.fx,
            full_cost: full,
            best_cost,
        });
        // a batch with no improving step leaves the cost unchanged, so one
        // flat iteration is not convergence
        if (previous - full).abs() < cfg.tolerance {
            flat += 1;
            if flat >= cfg.patience.max(1) {
                break;
            }
        } else {
            flat = 0;
        }
    }
    DescentResult { best, log }
}

/// Learn `α*` for the given transitions.
///
/// Parameters start uniform in `±init_scale`. Each outer iteration draws
/// `batch_size` unmasked terms without replacement and runs the configured local
/// optimiser on their summed cost; training stops after `max_iters` iterations or
/// once the full cost settles. The best full-cost parameters seen are returned.
pub fn train(
    transitions: &TransitionSet,
    layout: &SubspaceLayout,
    shape: AnsatzShape,
    cfg: &TrainConfig,
    discretization: Discretization,
) -> Result<TrainedModel> {
    cfg.validate()?;
    layout.validate()?;
    let terms = unmasked_terms(transitions);
    if terms.is_empty() {
        return Err(Error::Untrainable("every transition row is masked".into()));
    }
    let resolved = resolve(transitions, layout, &terms)?;

    let mut init_rng = SeededRng::with_stream(cfg.seed, 0);
    let template = AnsatzParams::random(
        layout.total_qubits(),
        shape.layers,
        shape.locality,
        cfg.init_scale,
        &mut init_rng,
    );
    let objective = |x: &[f64], batch: &[usize]| -> f64 {
        let params = template.with_flat(x);
        let fwd = ForwardModel::new_unchecked(&params, layout);
        let picked: Vec<ResolvedTerm> = batch.iter().map(|&b| resolved[b]).collect();
        cost_resolved(&fwd, transitions, &picked)
    };
    let result = stochastic_descent(template.to_flat(), resolved.len(), cfg, &objective);

    let model = TrainedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        layout: layout.clone(),
        params: template.with_flat(&result.best),
        discretization,
        lags: transitions.lags.clone(),
        training_log: result.log,
        seed: cfg.seed,
        optimizer: cfg.optimizer,
    };
    model.validate()?;
    Ok(model)
}

/// Full-set cost of a model against a transition set.
pub fn full_cost(model: &TrainedModel, transitions: &TransitionSet) -> Result<f64> {
    batch_cost(&model.params, &model.layout, transitions, &unmasked_terms(transitions))
}

/// Exact transition matrices induced by `params` at each lag, every row
/// marked visited. Used to plant targets with a known solution.
pub fn planted_transitions(
    params: &AnsatzParams,
    layout: &SubspaceLayout,
    lags: &[usize],
) -> Result<TransitionSet> {
    let lags = crate::timeseries::normalize_lags(lags)?;
    let fwd = ForwardModel::new(params, layout)?;
    let matrices = (0..layout.num_dims())
        .map(|d| {
            let s = layout.symbols(d);
            lags.iter()
                .map(|&k| {
                    let mut probs = Vec::with_capacity(s * s);
                    for i in 0..s {
                        probs.extend(fwd.marginal(d, i, k as f64)?.into_iter().map(|p| p.clamp(0.0, 1.0)));
                    }
                    TransitionMatrix::from_probs(s, probs, &vec![true; s])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    TransitionSet::new(lags, matrices)
}

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    crate::json::to_string(model).map_err(|e| Error::Numerical(format!("serialising model: {e}")))
}

pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Corrupt(format!("model file: {e}")))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Corrupt("model file has no schema_version".into()))?;
    if version != MODEL_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let model: TrainedModel =
        serde_json::from_value(value).map_err(|e| Error::Corrupt(format!("model file: {e}")))?;
    model
        .validate()
        .map_err(|e| Error::Corrupt(format!("model file: {e}")))?;
    Ok(model)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

/// `iteration,batch_cost,full_cost,best_cost`
pub fn write_training_log<W: std::io::Write>(log: &[TrainRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["iteration", "batch_cost", "full_cost", "best_cost"])?;
    for r in log {
        w.write_record([
            r.iteration.to_string(),
            r.batch_cost.to_string(),
            r.full_cost.to_string(),
            r.best_cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
