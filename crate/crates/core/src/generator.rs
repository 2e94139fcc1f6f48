//! Sampling trajectories from a trained model and the ensemble statistics
//! computed from them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{ForwardModel, TrainedModel};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerateMode {
    /// Every step `k` is sampled independently from `V(k)|0…0⟩`.
    #[default]
    FromOrigin,
    /// The previous draw is re-embedded as the basis state for a unit step.
    Chained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `symbols[d][t]` for `t = 1..=horizon` (stored at index `t − 1`).
    pub symbols: Vec<Vec<usize>>,
    /// `reconstructed[d][t]` for `t = 0..=horizon`; index 0 is the start value.
    pub reconstructed: Vec<Vec<f64>>,
    pub seed: u64,
    pub stream: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.symbols.first().map_or(0, Vec::len)
    }
}

/// Draws joint symbol tuples from a model. Caches the from-origin
/// distributions, which do not depend on the trajectory.
pub struct Sampler<'a> {
    model: &'a TrainedModel,
    fwd: ForwardModel<'a>,
    origin: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a TrainedModel) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model,
            fwd: ForwardModel::new(&model.params, &model.layout)?,
            origin: Vec::new(),
        })
    }

    /// Precompute the from-origin joints for `k = 1..=horizon`.
    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        let zeros = vec![0; self.model.layout.num_dims()];
        self.origin = (1..=horizon)
            .map(|k| self.fwd.joint(&zeros, k as f64))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// Joint system distribution after evolving `from` for time `k`.
    pub fn joint(&self, from: &[usize], k: usize) -> Result<Vec<f64>> {
        if k >= 1 && k <= self.origin.len() && from.iter().all(|&s| s == 0) {
            return Ok(self.origin[k - 1].clone());
        }
        self.fwd.joint(from, k as f64)
    }

    fn draw(&self, from: &[usize], k: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
        let idx = if k >= 1 && k <= self.origin.len() && from.iter().all(|&s| s == 0) {
            rng.categorical(&self.origin[k - 1])
        } else {
            rng.categorical(&self.fwd.joint(from, k as f64)?)
        };
        Ok(self.model.layout.split_system_index(idx))
    }

    /// One single-shot readout of `V(k)|0…0⟩`.
    pub fn sample_step(&self, k: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
        let zeros = vec![0; self.model.layout.num_dims()];
        self.draw(&zeros, k, rng)
    }

    pub fn generate(
        &self,
        horizon: usize,
        mode: GenerateMode,
        start: &[f64],
        rng: &mut SeededRng,
    ) -> Result<Trajectory> {
        let layout = &self.model.layout;
        let m = layout.num_dims();
        if horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        if start.len() != m {
            return Err(Error::Shape(format!("{} start values for {m} dimensions", start.len())));
        }
        let mut symbols = vec![Vec::with_capacity(horizon); m];
        let mut previous = vec![0; m];
        for k in 1..=horizon {
            let tuple = match mode {
                GenerateMode::FromOrigin => self.sample_step(k, rng)?,
                GenerateMode::Chained => self.draw(&previous, 1, rng)?,
            };
            for (d, &s) in tuple.iter().enumerate() {
                symbols[d].push(s);
            }
            previous = tuple;
        }
        let disc = &self.model.discretization;
        let reconstructed = symbols
            .iter()
            .enumerate()
            .map(|(d, syms)| {
                let mut acc = start[d];
                std::iter::once(acc)
                    .chain(syms.iter().map(|&s| {
                        acc += disc.value(d, s);
                        acc
                    }))
                    .collect()
            })
            .collect();
        Ok(Trajectory {
            symbols,
            reconstructed,
            seed: rng.seed(),
            stream: rng.stream(),
        })
    }
}

/// Convenience wrapper around [`Sampler::sample_step`].
pub fn sample_step(model: &TrainedModel, k: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    Sampler::new(model)?.sample_step(k, rng)
}

pub fn generate(
    model: &TrainedModel,
    horizon: usize,
    mode: GenerateMode,
    start: &[f64],
    rng: &mut SeededRng,
) -> Result<Trajectory> {
    Sampler::new(model)?
        .with_horizon(horizon)?
        .generate(horizon, mode, start, rng)
}

/// `n_traj` trajectories in parallel; trajectory `r` uses stream `r` of `seed`.
pub fn generate_ensemble(
    model: &TrainedModel,
    horizon: usize,
    n_traj: usize,
    mode: GenerateMode,
    start: &[f64],
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let sampler = Sampler::new(model)?.with_horizon(horizon)?;
    (0..n_traj as u64)
        .into_par_iter()
        .map(|r| sampler.generate(horizon, mode, start, &mut SeededRng::with_stream(seed, r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// `mean[d][t]`, `t = 0..=horizon`.
    pub mean: Vec<Vec<f64>>,
    /// Unbiased, `variance[d][t]`.
    pub variance: Vec<Vec<f64>>,
    /// Pearson correlation of pooled first differences; `None` where a
    /// dimension's differences have zero variance.
    pub diff_corr: Vec<Vec<Option<f64>>>,
    pub num_trajectories: usize,
}

pub fn stats_from_trajectories(trajs: &[Trajectory]) -> Result<EnsembleStats> {
    let n = trajs.len();
    if n < 2 {
        return Err(Error::InvalidParams("ensemble statistics need at least 2 trajectories".into()));
    }
    let m = trajs[0].reconstructed.len();
    let len = trajs[0].reconstructed[0].len();
    if trajs.iter().any(|t| t.reconstructed.len() != m || t.reconstructed.iter().any(|r| r.len() != len)) {
        return Err(Error::Shape("trajectories differ in shape".into()));
    }
    let mut mean = vec![vec![0.0; len]; m];
    let mut variance = vec![vec![0.0; len]; m];
    for d in 0..m {
        for t in 0..len {
            let mu = trajs.iter().map(|tr| tr.reconstructed[d][t]).sum::<f64>() / n as f64;
            let ss: f64 = trajs.iter().map(|tr| (tr.reconstructed[d][t] - mu).powi(2)).sum();
            mean[d][t] = mu;
            variance[d][t] = ss / (n - 1) as f64;
        }
    }

    let diffs: Vec<Vec<f64>> = (0..m)
        .map(|d| {
            trajs
                .iter()
                .flat_map(|tr| tr.reconstructed[d].windows(2).map(|w| w[1] - w[0]))
                .collect()
        })
        .collect();
    let diff_corr = (0..m)
        .map(|a| (0..m).map(|b| pearson(&diffs[a], &diffs[b])).collect())
        .collect();

    Ok(EnsembleStats {
        mean,
        variance,
        diff_corr,
        num_trajectories: n,
    })
}

pub fn ensemble_stats(
    model: &TrainedModel,
    horizon: usize,
    n_traj: usize,
    mode: GenerateMode,
    start: &[f64],
    seed: u64,
) -> Result<EnsembleStats> {
    if n_traj < 2 {
        return Err(Error::InvalidParams("ensemble statistics need at least 2 trajectories".into()));
    }
    stats_from_trajectories(&generate_ensemble(model, horizon, n_traj, mode, start, seed)?)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    // relative guard: constant series leave only rounding noise
    let scale = x.iter().chain(y).fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let floor = (1e-12 * scale).powi(2) * n;
    if sxx <= floor || syy <= floor {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn lf_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// `traj_id,t,dim,symbol,value` for `t = 1..=horizon`.
pub fn write_trajectories_csv<W: Write>(trajs: &[Trajectory], writer: W) -> Result<()> {
    let mut w = lf_writer(writer);
    w.write_record(["traj_id", "t", "dim", "symbol", "value"])?;
    for (id, tr) in trajs.iter().enumerate() {
        for t in 1..=tr.horizon() {
            for d in 0..tr.symbols.len() {
                w.write_record([
                    id.to_string(),
                    t.to_string(),
                    d.to_string(),
                    tr.symbols[d][t - 1].to_string(),
                    tr.reconstructed[d][t].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,dim,mean,variance` for `t = 0..=horizon`.
pub fn write_stats_csv<W: Write>(stats: &EnsembleStats, writer: W) -> Result<()> {
    let mut w = lf_writer(writer);
    w.write_record(["t", "dim", "mean", "variance"])?;
    let len = stats.mean.first().map_or(0, Vec::len);
    for t in 0..len {
        for d in 0..stats.mean.len() {
            w.write_record([
                t.to_string(),
                d.to_string(),
                stats.mean[d][t].to_string(),
                stats.variance[d][t].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CorrelationDoc<'a> {
    num_trajectories: usize,
    diff_corr: &'a [Vec<Option<f64>>],
}

/// Correlation matrix as JSON; masked entries are `null`.
pub fn correlation_json(stats: &EnsembleStats) -> Result<String> {
    crate::json::to_string(&CorrelationDoc {
        num_trajectories: stats.num_trajectories,
        diff_corr: &stats.diff_corr,
    })
    .map_err(|e| Error::Numerical(format!("serialising correlations: {e}")))
}
