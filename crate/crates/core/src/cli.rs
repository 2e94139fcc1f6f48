//! `hamlearn <command> --config <path> [--out <dir>]`
//!
//! Exit codes: 0 success, 2 configuration error, 3 input error, 4 numerical
//! failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::ansatz::{build_v, AnsatzParams};
use crate::config::{require, RunConfig, WORKDIR_ENV};
use crate::error::{Error, Result};
use crate::generator;
use crate::learner::{self, TrainedModel};
use crate::nonmarkov;
use crate::qcore::ComplexMatrix;
use crate::rng::SeededRng;
use crate::timeseries::{self, Discretization, TransitionSet};
use crate::verify::{self, Certificate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hamlearn", version, about = "Hamiltonian learning for discretised time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate the configured SDE and write series.csv
    Synth(Args),
    /// Difference, discretise and fit; writes model.json and training_log.csv
    Train(Args),
    /// Sample trajectories; writes trajectories.csv
    Generate(Args),
    /// Ensemble mean, variance and difference correlation
    Analyze(Args),
    /// Trace-distance non-Markovianity curves
    Nonmarkov(Args),
    /// CPTP, unitarity and closed-model certificates
    Verify(Args),
    /// Spectrum stabilisation over a growing lag schedule
    Converge(Args),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn args(&self) -> &Args {
        match self {
            Self::Synth(a)
            | Self::Train(a)
            | Self::Generate(a)
            | Self::Analyze(a)
            | Self::Nonmarkov(a)
            | Self::Verify(a)
            | Self::Converge(a) => a,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

/// Parse `argv`, run, report errors on stderr; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let env = std::env::var_os(WORKDIR_ENV).map(PathBuf::from);
    match run(&cli.command, env.as_deref()) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("hamlearn: {e}");
            exit_code(&e)
        }
    }
}

/// Run one command. `env_workdir` stands in for `HAMLEARN_WORKDIR`.
pub fn run(command: &Command, env_workdir: Option<&Path>) -> Result<String> {
    let args = command.args();
    let cfg = RunConfig::load(&args.config)?;
    let out = cfg.output_dir(args.out.as_deref(), env_workdir);
    std::fs::create_dir_all(&out)?;
    match command {
        Command::Synth(_) => synth(&cfg, &out),
        Command::Train(_) => train(&cfg, &out),
        Command::Generate(_) => generate(&cfg, &out),
        Command::Analyze(_) => analyze(&cfg, &out),
        Command::Nonmarkov(_) => nonmarkov_cmd(&cfg, &out),
        Command::Verify(_) => verify_cmd(&cfg, &out),
        Command::Converge(_) => converge(&cfg, &out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn input_path(configured: &Option<PathBuf>, out: &Path, default: &str) -> PathBuf {
    configured.clone().unwrap_or_else(|| out.join(default))
}

fn load_model(cfg: &RunConfig, out: &Path) -> Result<TrainedModel> {
    let path = input_path(&cfg.paths.model, out, "model.json");
    learner::load_model(&path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<String> {
    let spec = require(&cfg.sde, "sde")?;
    spec.validate().map_err(config_err)?;
    let series = timeseries::simulate_sde(spec)?;
    let path = out.join("series.csv");
    let mut w = create(&path)?;
    timeseries::write_series_csv(&series, &mut w)?;
    w.flush()?;
    Ok(format!("wrote {} ({} points, {} dims)", path.display(), series.len(), series.dims()))
}

/// Training targets from config: planted from a reference model, or the
/// configured series run through differencing, SAX and pair counting.
fn training_targets(cfg: &RunConfig, out: &Path) -> Result<(TransitionSet, Discretization)> {
    let layout = cfg.layout()?;
    let lags = cfg.lags()?;
    if let Some(planted) = &cfg.planted {
        let shape = require(&cfg.ansatz, "ansatz")?;
        let mut rng = SeededRng::new(planted.seed);
        let truth = AnsatzParams::random(layout.total_qubits(), shape.layers, shape.locality, planted.scale, &mut rng);
        let ts = learner::planted_transitions(&truth, &layout, &lags).map_err(config_err)?;
        return Ok((ts, Discretization::identity(&layout.dims)));
    }
    let bits = &require(&cfg.discretize, "discretize")?.bits;
    if *bits != layout.dims {
        return Err(Error::Config(format!(
            "discretize.bits {bits:?} must equal layout.dims {:?}",
            layout.dims
        )));
    }
    let path = input_path(&cfg.paths.series, out, "series.csv");
    let file = File::open(&path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let series = timeseries::read_series_csv(file)?;
    timeseries::transitions_from_series(&series, bits, &lags)
}

fn train(cfg: &RunConfig, out: &Path) -> Result<String> {
    let layout = cfg.layout()?;
    let shape = *require(&cfg.ansatz, "ansatz")?;
    let tcfg = require(&cfg.train, "train")?;
    tcfg.validate().map_err(config_err)?;
    let (ts, disc) = training_targets(cfg, out)?;
    let model = learner::train(&ts, &layout, shape, tcfg, disc)?;
    learner::save_model(&model, out.join("model.json"))?;
    let mut w = create(&out.join("training_log.csv"))?;
    learner::write_training_log(&model.training_log, &mut w)?;
    w.flush()?;
    Ok(format!(
        "final_cost={} iterations={}",
        model.final_cost().unwrap_or(f64::NAN),
        model.training_log.len() - 1
    ))
}

fn start_values(section: &crate::config::GenerateSection, dims: usize) -> Result<Vec<f64>> {
    match &section.start {
        Some(s) if s.len() != dims => Err(Error::Config(format!(
            "generate.start has {} values for {dims} dimensions",
            s.len()
        ))),
        Some(s) => Ok(s.clone()),
        None => Ok(vec![0.0; dims]),
    }
}

fn generate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let g = require(&cfg.generate, "generate")?;
    let model = load_model(cfg, out)?;
    let start = start_values(g, model.layout.num_dims())?;
    let trajs = generator::generate_ensemble(&model, g.horizon, g.n_traj, g.mode, &start, g.seed)
        .map_err(config_err_if_params)?;
    let mut w = create(&out.join("trajectories.csv"))?;
    generator::write_trajectories_csv(&trajs, &mut w)?;
    w.flush()?;
    Ok(format!("wrote {} trajectories of horizon {}", trajs.len(), g.horizon))
}

fn config_err_if_params(e: Error) -> Error {
    match e {
        Error::InvalidParams(_) => Error::Config(e.to_string()),
        other => other,
    }
}

#[derive(Serialize)]
struct AnalyzeSummary<'a> {
    num_trajectories: usize,
    diff_corr: &'a [Vec<Option<f64>>],
    mean_change: Vec<f64>,
}

fn analyze(cfg: &RunConfig, out: &Path) -> Result<String> {
    let g = require(&cfg.generate, "generate")?;
    let model = load_model(cfg, out)?;
    let start = start_values(g, model.layout.num_dims())?;
    let stats = generator::ensemble_stats(&model, g.horizon, g.n_traj, g.mode, &start, g.seed)
        .map_err(config_err_if_params)?;
    let mut w = create(&out.join("stats.csv"))?;
    generator::write_stats_csv(&stats, &mut w)?;
    w.flush()?;
    write_text(&out.join("correlation.json"), &generator::correlation_json(&stats)?)?;
    let summary = AnalyzeSummary {
        num_trajectories: stats.num_trajectories,
        diff_corr: &stats.diff_corr,
        mean_change: stats
            .mean
            .iter()
            .map(|m| m.last().copied().unwrap_or(0.0) - m[0])
            .collect(),
    };
    serde_json::to_string(&summary).map_err(|e| Error::Numerical(e.to_string()))
}

fn nonmarkov_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let section = cfg.nonmarkov.clone().unwrap_or_default();
    let model = load_model(cfg, out)?;
    model.layout.check_dim(section.keep).map_err(config_err)?;
    let times = nonmarkov::time_grid(section.t_max, section.dt).map_err(config_err)?;
    let pairs = nonmarkov::default_pairs(model.layout.dims[section.keep], section.pairs, section.seed);
    let report = nonmarkov::n_measure(&model, section.keep, &pairs, &times)?;
    let mut w = create(&out.join("nonmarkov_pairs.csv"))?;
    nonmarkov::write_pairs_csv(&report, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("nonmarkov_measure.csv"))?;
    nonmarkov::write_measure_csv(&report, &mut w)?;
    w.flush()?;
    Ok(format!("N={} max_sigma={}", report.total(), report.max_sigma()))
}

fn bistochastic_defect(t: &[Vec<f64>]) -> f64 {
    let n = t.len();
    let rows = t.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs());
    let cols = (0..n).map(|j| (t.iter().map(|r| r[j]).sum::<f64>() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Certificates for a model: CPTP per dimension and lag, unitarity and
/// bistochastic moduli of `V(1)`, closed-model residual of each small
/// dimension's own transition matrices, and the literal all-½ matrix check.
pub fn model_certificates(model: &TrainedModel, search: &verify::SearchConfig) -> Result<Vec<Certificate>> {
    let mut certs = Vec::new();
    for d in 0..model.layout.num_dims() {
        for &k in &model.lags {
            let r = verify::check_cptp(model, d, k)?;
            certs.push(Certificate {
                claim: format!("reduced map on dimension {d} at lag {k} is CPTP"),
                verdict: r.is_cptp,
                residual: r.trace_dev.max(-r.min_choi_eig).max(0.0),
                budget: 0,
                seed: 0,
            });
        }
    }
    let v = build_v(&model.params, 1.0);
    let defect = (&v * &v.dagger()).max_abs_diff(&ComplexMatrix::identity(v.rows()));
    certs.push(Certificate {
        claim: "V(1) is unitary".into(),
        verdict: defect <= 1e-10,
        residual: defect,
        budget: 0,
        seed: 0,
    });
    let defect = bistochastic_defect(&verify::moduli_squared(&v));
    certs.push(Certificate {
        claim: "moduli squared of V(1) are doubly stochastic".into(),
        verdict: defect <= 1e-9,
        residual: defect,
        budget: 0,
        seed: 0,
    });
    let own = learner::planted_transitions(&model.params, &model.layout, &model.lags)?;
    for d in 0..model.layout.num_dims() {
        if model.layout.symbols(d) > 4 {
            continue;
        }
        let r = verify::closed_model_residual(&own.dimension(d)?, search)?;
        certs.push(Certificate {
            claim: format!("dimension {d} of the learned process admits a closed model on lags {:?}", model.lags),
            verdict: r.residual < 1e-6,
            residual: r.residual,
            budget: r.budget,
            seed: r.seed,
        });
    }
    let defect = verify::half_matrix_unitarity_defect();
    certs.push(Certificate {
        claim: "[[1/2,1/2],[1/2,1/2]] is not unitary".into(),
        verdict: defect > 1e-12,
        residual: defect,
        budget: 0,
        seed: 0,
    });
    Ok(certs)
}

fn verify_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let search = cfg.verify.clone().unwrap_or_default().search;
    let model = load_model(cfg, out)?;
    let certs = model_certificates(&model, &search)?;
    write_text(&out.join("certificates.json"), &verify::certificates_json(&certs)?)?;
    let cptp = certs.iter().filter(|c| c.claim.ends_with("is CPTP")).all(|c| c.verdict);
    Ok(format!("certificates={} cptp={cptp}", certs.len()))
}

#[derive(Serialize)]
struct ConvergeDoc<'a> {
    report: &'a verify::ConvergenceReport,
    plateau_tolerance: f64,
    settles: bool,
}

fn converge(cfg: &RunConfig, out: &Path) -> Result<String> {
    let layout = cfg.layout()?;
    let shape = *require(&cfg.ansatz, "ansatz")?;
    let tcfg = require(&cfg.train, "train")?;
    let planted = require(&cfg.planted, "planted")?;
    let section = cfg.converge.clone().unwrap_or_default();
    if section.steps == 0 {
        return Err(Error::Config("converge.steps must be at least 1".into()));
    }
    let schedule = verify::default_schedule(section.steps);
    let mut rng = SeededRng::new(planted.seed);
    let truth = AnsatzParams::random(layout.total_qubits(), shape.layers, shape.locality, planted.scale, &mut rng);
    let all_lags = schedule.last().expect("steps ≥ 1").clone();
    let ts = learner::planted_transitions(&truth, &layout, &all_lags).map_err(config_err)?;
    let report = verify::canonical_convergence(&ts, &layout, shape, &schedule, tcfg)?;
    let settles = report.settles(section.plateau_tolerance);
    let doc = ConvergeDoc {
        report: &report,
        plateau_tolerance: section.plateau_tolerance,
        settles,
    };
    let text = crate::json::to_string(&doc).map_err(|e| Error::Numerical(e.to_string()))?;
    write_text(&out.join("convergence.json"), &text)?;
    Ok(format!("distances={:?} settles={settles}", report.distances))
}
