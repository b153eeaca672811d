//! Experiment drivers behind the CLI subcommands. Each returns a report and
//! writes its tables into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NetworkModeName, RareMode};
use crate::coarse::{restrict_with_layout, CoarseTimestepper, DegreeLayout, EnsembleSpec, NetworkMode, Parameter};
use crate::continuation::{
    classify_stability, detect_bifurcations, newton_fixed_param, refine_transcritical, stochastic_newton_tol,
    trace_branch_with, Bifurcation, BifurcationKind, Branch, Control, Settings,
};
use crate::error::Error;
use crate::graph::{degree_histogram, generate_er, giant_component_size, mean_clustering, mean_path_length, Network};
use crate::meanfield::{mf_bifurcation_diagram, mf_map, MfDiagram, MfParams};
use crate::micro::{run, total_density, DensityRecorder, MicroState, SimParams};
use crate::rare::{
    estimate_drift_diffusion, first_passage, free_energy, mean_escape_time, noise_gaussianity, EscapeEstimate,
    FokkerPlanckProfile, GaussianityReport, NetworkBurst, OuSurrogate, ReactionFrame,
};
use crate::rng::{self, NoiseStream};

/// Failure of a subcommand, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical { .. } => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn at(stage: &'static str) -> impl FnOnce(Error) -> CliError {
    move |source| CliError::Numerical { stage, source }
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(|e| at("output")(e.into()))?;
    let f = File::create(dir.join(name)).map_err(|e| at("output")(e.into()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| at("output")(Error::InvalidArgument(e.to_string())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| at("output")(e.into()))
}

fn write_with(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> crate::Result<()>) -> CliResult<()> {
    let mut w = create(dir, name)?;
    f(&mut w).map_err(at("output"))?;
    w.flush().map_err(|e| at("output")(e.into()))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn build_network(cfg: &ExperimentConfig, p: f64) -> CliResult<Network> {
    generate_er(cfg.network.n, p, cfg.network.seed).map_err(at("network"))
}

/// Largest connection probability an experiment visits.
fn p_ceiling(cfg: &ExperimentConfig) -> f64 {
    let c = &cfg.continuation;
    let mut p = cfg.network.p;
    if c.param_name == Parameter::P {
        if let Some([a, b]) = c.seed_params {
            p = p.max(a).max(b);
        }
        if let Some(m) = c.param_max {
            p = p.max(m);
        }
    }
    cfg.ensemble.coupling_ref.unwrap_or(p).max(p)
}

/// The coarse timestepper described by the config. `net` is the shared
/// network in fixed mode.
pub fn build_stepper(cfg: &ExperimentConfig, net: &Arc<Network>, eps: f64) -> CliResult<CoarseTimestepper> {
    let e = &cfg.ensemble;
    let parameter = cfg.continuation.param_name;
    match e.network_mode {
        NetworkModeName::Fixed => {
            let layout = Arc::new(DegreeLayout::from_network(net));
            let spec = EnsembleSpec {
                n_copies: e.n_copies,
                horizon: e.horizon,
                master_seed: e.master_seed,
                network_mode: NetworkMode::Fixed(net.clone()),
            };
            CoarseTimestepper::new(layout, spec, eps, parameter).map_err(at("timestepper"))
        }
        NetworkModeName::Regenerate => {
            let p_ref = p_ceiling(cfg);
            let layout = Arc::new(
                DegreeLayout::pooled_poisson(cfg.network.n, p_ref, net.connection_probability(), 0.9999)
                    .map_err(at("timestepper"))?,
            );
            let spec = EnsembleSpec {
                n_copies: e.n_copies,
                horizon: e.horizon,
                master_seed: e.master_seed,
                network_mode: NetworkMode::Regenerate {
                    n: cfg.network.n,
                    p: net.connection_probability(),
                    coupling_ref: p_ref,
                },
            };
            CoarseTimestepper::new(layout, spec, eps, parameter).map_err(at("timestepper"))
        }
    }
}

/// Restricted end state of a temporal simulation, used as a Newton guess.
fn temporal_guess(net: &Network, layout: &Arc<DegreeLayout>, eps: f64, rho0: f64, steps: usize, seed: u64) -> CliResult<Vec<f64>> {
    let params = SimParams::new(eps).map_err(at("temporal simulation"))?;
    let start = MicroState::random(net.num_nodes(), rho0, rng::derive_seed(seed, rng::tag::INITIAL, 0));
    let mut noise = NoiseStream::new(rng::derive_seed(seed, rng::tag::DYNAMICS, 0), net.num_nodes());
    let end = run(net, &start, params, steps, &mut noise, &mut |_: usize, _: &Network, _: &MicroState| {})
        .map_err(at("temporal simulation"))?;
    Ok(restrict_with_layout(layout.clone(), &[end], &[net])
        .map_err(at("restriction"))?
        .densities)
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub initial_density: f64,
    pub final_rho: f64,
    /// Mean ρ over the second half of the run.
    pub plateau_rho: f64,
    pub min_rho: f64,
    pub max_rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    pub steps: usize,
    pub trajectories: Vec<TrajectorySummary>,
}

/// Temporal simulations, one `trajectory_<i>.csv` per initial density.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> CliResult<SimulateReport> {
    let net = build_network(cfg, cfg.network.p)?;
    let d = &cfg.dynamics;
    let params = SimParams::new(d.eps).map_err(at("simulate"))?;
    let degrees: Vec<usize> = net.degree_classes().keys().copied().collect();
    let mut trajectories = Vec::new();
    for (i, &rho0) in d.initial_densities.iter().enumerate() {
        let start = MicroState::random(net.num_nodes(), rho0, rng::derive_seed(d.initial_seed, rng::tag::INITIAL, i as u64));
        let mut noise = NoiseStream::new(rng::derive_seed(d.noise_seed, rng::tag::DYNAMICS, i as u64), net.num_nodes());
        let mut rec = if d.per_degree {
            DensityRecorder::with_degrees(degrees.clone())
        } else {
            DensityRecorder::new()
        };
        let end = run(&net, &start, params, d.steps, &mut noise, &mut rec).map_err(at("simulate"))?;
        let rho: Vec<f64> = rec.rows.iter().map(|r| r.rho).collect();
        let half = &rho[rho.len() / 2..];
        trajectories.push(TrajectorySummary {
            initial_density: rho0,
            final_rho: total_density(&end),
            plateau_rho: half.iter().sum::<f64>() / half.len() as f64,
            min_rho: rho.iter().cloned().fold(f64::INFINITY, f64::min),
            max_rho: rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        });
        if cfg.output.csv() {
            write_with(out, &format!("trajectory_{i}.csv"), |w| rec.write_csv(w))?;
        }
    }
    let report = SimulateReport {
        n: cfg.network.n,
        p: cfg.network.p,
        eps: d.eps,
        steps: d.steps,
        trajectories,
    };
    if cfg.output.json() {
        write_json(out, "simulate.json", &report)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- continue

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinueReport {
    pub settings: Settings,
    pub branch: Branch,
    pub bifurcations: Vec<Bifurcation>,
    pub zero_branch: Option<Branch>,
    /// Transcritical points on the zero branch, refined by bisection.
    pub transcritical: Vec<Bifurcation>,
}

impl ContinueReport {
    pub fn folds(&self) -> Vec<&Bifurcation> {
        self.bifurcations.iter().filter(|b| b.kind == BifurcationKind::Fold).collect()
    }
}

fn continuation_settings(cfg: &ExperimentConfig, noise_floor: f64) -> Settings {
    let c = &cfg.continuation;
    Settings {
        newton_tol: c.newton_tol.unwrap_or_else(|| stochastic_newton_tol(noise_floor)),
        gmres_tol: c.gmres_tol,
        fd_eps: c.fd_eps,
        max_newton: c.max_newton,
        ds_min: c.ds_min,
        ds_max: c.ds_max,
        arnoldi_m: c.arnoldi_m,
        n_eigs: c.n_eigs,
        param_scale: cfg.param_scale(),
        eig_seed: cfg.ensemble.master_seed,
        ..Settings::deterministic()
    }
}

/// Points kept after the first detected turn, when `stop_after_fold` is set.
struct FoldWatch {
    last: Vec<f64>,
    after: Option<usize>,
}

impl FoldWatch {
    fn push(&mut self, param: f64) {
        if let Some(n) = self.after.as_mut() {
            *n += 1;
        }
        self.last.push(param);
        let k = self.last.len();
        if self.after.is_none() && k >= 3 && (self.last[k - 2] - self.last[k - 3]) * (self.last[k - 1] - self.last[k - 2]) < 0.0 {
            // the turn happened at point k − 2, so one point is already past it
            self.after = Some(1);
        }
    }
}

/// Branch of equilibria through a temporal-simulation seed, plus an optional
/// scan of the all-off branch for the eigenvalue crossing +1.
pub fn cmd_continue(cfg: &ExperimentConfig, out: &Path) -> CliResult<ContinueReport> {
    let c = &cfg.continuation;
    let base = match c.param_name {
        Parameter::Eps => cfg.dynamics.eps,
        Parameter::P => cfg.network.p,
    };
    let [p0, p1] = c.seed_params.unwrap_or([base, base + 0.01 * cfg.param_scale()]);
    let (eps, p_net) = match c.param_name {
        Parameter::Eps => (p0, cfg.network.p),
        Parameter::P => (cfg.dynamics.eps, p0),
    };
    let net = Arc::new(build_network(cfg, p_net)?);
    let stepper = build_stepper(cfg, &net, eps)?;
    let guess = temporal_guess(&net, stepper.layout(), eps, c.seed_density, c.seed_steps, cfg.ensemble.master_seed)?;
    let settings = continuation_settings(cfg, stepper.noise_floor(&guess));
    log::info!("newton tolerance {:.3e}", settings.newton_tol);
    let mut watch = FoldWatch { last: Vec::new(), after: None };
    let branch = trace_branch_with(
        &stepper,
        match c.param_name {
            Parameter::Eps => "eps",
            Parameter::P => "p",
        },
        (&guess, p0),
        (&guess, p1),
        c.ds0,
        c.n_points,
        &settings,
        |pt| {
            if c.stability {
                *pt = classify_stability(&stepper, pt, settings.arnoldi_m, settings.n_eigs, &settings)?;
            }
            watch.push(pt.param);
            let outside = c.param_min.is_some_and(|m| pt.param < m) || c.param_max.is_some_and(|m| pt.param > m);
            let done = c.stop_after_fold.is_some_and(|n| watch.after.is_some_and(|a| a >= n));
            Ok(if pt.d_norm() < c.stop_norm || outside || done {
                Control::Stop
            } else {
                Control::Continue
            })
        },
    )
    .map_err(at("continuation"))?;
    let bifurcations = detect_bifurcations(&branch);
    let (zero_branch, transcritical) = match &c.zero_branch {
        Some(z) => {
            let (zb, tc) = zero_branch_scan(&stepper, cfg, &settings, z.from, z.to, z.points, z.bisection_tol)?;
            (Some(zb), tc)
        }
        None => (None, Vec::new()),
    };
    let report = ContinueReport {
        settings,
        branch,
        bifurcations,
        zero_branch,
        transcritical,
    };
    if cfg.output.csv() {
        write_with(out, "branch.csv", |w| report.branch.write_csv(w))?;
        if let Some(zb) = &report.zero_branch {
            write_with(out, "zero_branch.csv", |w| zb.write_csv(w))?;
        }
    }
    if cfg.output.json() {
        write_json(out, "branch.json", &report.branch)?;
        write_json(out, "continue.json", &report)?;
    }
    Ok(report)
}

/// Uniform steps along u = 0 with Arnoldi at every point; eigenvalue
/// crossings of +1 are bisected to `tol`.
pub fn zero_branch_scan(
    stepper: &CoarseTimestepper,
    cfg: &ExperimentConfig,
    settings: &Settings,
    from: f64,
    to: f64,
    points: usize,
    tol: f64,
) -> CliResult<(Branch, Vec<Bifurcation>)> {
    let dim = stepper.layout().len();
    let zero = vec![0.0; dim];
    let dp = (to - from) / (points - 1) as f64;
    let ds = dp / settings.param_scale;
    let s = Settings {
        ds_min: ds,
        ds_max: ds,
        ..settings.clone()
    };
    let branch = trace_branch_with(
        stepper,
        match cfg.continuation.param_name {
            Parameter::Eps => "eps",
            Parameter::P => "p",
        },
        (&zero, from),
        (&zero, from + dp),
        ds,
        points,
        &s,
        |pt| {
            *pt = classify_stability(stepper, pt, s.arnoldi_m, s.n_eigs, &s)?;
            log::info!(
                "zero branch at {:.5}: leading real eigenvalue {:?}",
                pt.param,
                pt.leading_real_eig()
            );
            Ok(Control::Continue)
        },
    )
    .map_err(at("zero branch"))?;
    let mut refined = Vec::new();
    for b in detect_bifurcations(&branch) {
        if b.kind == BifurcationKind::TranscriticalCandidate {
            let param = refine_transcritical(stepper, &branch, &b, &s, tol).map_err(at("transcritical refinement"))?;
            refined.push(Bifurcation { param, ..b });
        }
    }
    Ok((branch, refined))
}

// ---------------------------------------------------------------- rare

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstPassage {
    pub psi_target: f64,
    pub max_steps: usize,
    pub times: Vec<Option<usize>>,
    /// Mean over runs that crossed.
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RareReport {
    pub mode: RareMode,
    pub eps: f64,
    pub p: f64,
    pub tau: usize,
    pub n_real: usize,
    pub node_norm: Option<f64>,
    pub saddle_norm: Option<f64>,
    pub psi_saddle: Option<f64>,
    pub frame: Option<ReactionFrame>,
    pub profile: Option<FokkerPlanckProfile>,
    pub escape: Option<EscapeEstimate>,
    /// Reported only when the estimate passes its validity checks.
    pub tau_escape: Option<f64>,
    pub valid: bool,
    pub notes: Vec<String>,
    /// Closed-form Kramers time of the OU self-test.
    pub analytic_tau: Option<f64>,
    pub first_passage: Option<FirstPassage>,
    pub plateau: Option<GaussianityReport>,
}

/// Saddle on the branch through `node`: trace up from the node until the
/// branch has turned and crossed `eps` again, then correct at `eps`.
fn find_saddle(stepper: &CoarseTimestepper, node: &[f64], eps: f64, settings: &Settings, max_points: usize) -> CliResult<Option<Vec<f64>>> {
    let below = eps - 0.005;
    // short steps so the bracket around the second crossing is tight
    let settings = &Settings {
        ds_max: settings.ds_max.min(0.005),
        ..settings.clone()
    };
    let mut turned = false;
    let mut last: Option<f64> = None;
    let branch = trace_branch_with(stepper, "eps", (node, below), (node, eps), 0.01, max_points, settings, |pt| {
        if let Some(prev) = last {
            if pt.param < prev {
                turned = true;
            }
        }
        last = Some(pt.param);
        Ok(if turned && pt.param < eps { Control::Stop } else { Control::Continue })
    });
    let branch = match branch {
        Ok(b) => b,
        Err(e) => {
            log::warn!("saddle search failed: {e}");
            return Ok(None);
        }
    };
    let pts = &branch.points;
    let Some(j) = (1..pts.len()).rev().find(|&j| pts[j - 1].param >= eps && pts[j].param < eps) else {
        return Ok(None);
    };
    if !pts[..=j].windows(2).any(|w| w[1].param < w[0].param) {
        return Ok(None);
    }
    let (a, b) = (&pts[j - 1], &pts[j]);
    let t = (a.param - eps) / (a.param - b.param);
    let guess: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x + t * (y - x)).collect();
    match newton_fixed_param(stepper, &guess, eps, settings) {
        Ok((u, _, _)) => Ok(Some(u)),
        Err(e) => {
            log::warn!("saddle correction failed: {e}");
            Ok(None)
        }
    }
}

/// Closed-form Kramers time for an OU process over a barrier ΔG.
pub fn ou_kramers_time(a: f64, barrier: f64) -> f64 {
    (std::f64::consts::PI / barrier).sqrt() * barrier.exp() / a
}

/// Fokker–Planck profile along the node–saddle coordinate, Kramers escape
/// time, and optional direct long-run checks.
pub fn cmd_rare(cfg: &ExperimentConfig, out: &Path) -> CliResult<RareReport> {
    let r = &cfg.rare;
    let eps = cfg.dynamics.eps;
    let mut report = RareReport {
        mode: r.mode,
        eps,
        p: cfg.network.p,
        tau: r.tau,
        n_real: r.n_real,
        node_norm: None,
        saddle_norm: None,
        psi_saddle: None,
        frame: None,
        profile: None,
        escape: None,
        tau_escape: None,
        valid: false,
        notes: Vec::new(),
        analytic_tau: None,
        first_passage: None,
        plateau: None,
    };
    match r.mode {
        RareMode::Ou => rare_ou(cfg, &mut report)?,
        RareMode::Network => rare_network(cfg, &mut report)?,
    }
    if cfg.output.csv() {
        if let Some(p) = &report.profile {
            write_with(out, "profile.csv", |w| p.write_csv(w))?;
        }
    }
    if cfg.output.json() {
        write_json(out, "escape.json", &report)?;
    }
    Ok(report)
}

fn rare_ou(cfg: &ExperimentConfig, report: &mut RareReport) -> CliResult<()> {
    let r = &cfg.rare;
    let ou = OuSurrogate {
        a: r.ou_a,
        diffusion: r.ou_diffusion,
    };
    let psi_u = (2.0 * r.ou_barrier * r.ou_diffusion / r.ou_a).sqrt();
    let grid = linspace(-1.6 * psi_u, 1.2 * psi_u, r.psi_grid_n);
    let prof = estimate_drift_diffusion(&ou, &grid, r.tau, r.n_real, r.seed).map_err(at("drift/diffusion"))?;
    let prof = free_energy(&prof).map_err(at("free energy"))?;
    let est = mean_escape_time(&prof, 0.0, psi_u).map_err(at("escape time"))?;
    report.valid = est.is_valid();
    report.tau_escape = report.valid.then_some(est.tau_escape);
    report.analytic_tau = Some(ou_kramers_time(r.ou_a, r.ou_barrier));
    report.psi_saddle = Some(psi_u);
    report.escape = Some(est);
    report.profile = Some(prof);
    Ok(())
}

fn rare_network(cfg: &ExperimentConfig, report: &mut RareReport) -> CliResult<()> {
    let r = &cfg.rare;
    let c = &cfg.continuation;
    let eps = cfg.dynamics.eps;
    let net = Arc::new(build_network(cfg, cfg.network.p)?);
    let mut cfg_eps = cfg.clone();
    cfg_eps.continuation.param_name = Parameter::Eps;
    let stepper = build_stepper(&cfg_eps, &net, eps)?;
    let guess = temporal_guess(&net, stepper.layout(), eps, c.seed_density, c.seed_steps, cfg.ensemble.master_seed)?;
    let settings = Settings {
        param_scale: 1.0,
        ..continuation_settings(&cfg_eps, stepper.noise_floor(&guess))
    };
    let (node, _, _) = newton_fixed_param(&stepper, &guess, eps, &settings).map_err(at("node"))?;
    report.node_norm = Some(node.iter().sum());
    if r.plateau_steps > 0 {
        report.plateau = Some(plateau_statistics(&net, eps, r.burn_in, r.plateau_steps, r.seed)?);
    }
    let Some(saddle) = find_saddle(&stepper, &node, eps, &settings, r.saddle_search_points)? else {
        report.notes.push("no saddle found on the branch through the node: single attractor, no escape time".into());
        return Ok(());
    };
    report.saddle_norm = Some(saddle.iter().sum());
    let frame = match ReactionFrame::new(node.clone(), saddle) {
        Ok(f) => f,
        Err(_) => {
            report.notes.push("saddle coincides with the node".into());
            return Ok(());
        }
    };
    report.psi_saddle = Some(frame.psi_saddle());
    let burst = NetworkBurst {
        stepper: &stepper,
        frame: &frame,
    };
    let grid = frame.grid(r.psi_grid_n, r.beyond_saddle, r.beyond_node);
    let prof = estimate_drift_diffusion(&burst, &grid, r.tau, r.n_real, r.seed).map_err(at("drift/diffusion"))?;
    let prof = free_energy(&prof).map_err(at("free energy"))?;
    let zeros = prof.drift_zeros();
    let psi_stable = zeros
        .iter()
        .filter(|z| z.1)
        .map(|z| z.0)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()));
    let psi_unstable = zeros
        .iter()
        .filter(|z| !z.1)
        .map(|z| z.0)
        .min_by(|a, b| (a - frame.psi_saddle()).abs().total_cmp(&(b - frame.psi_saddle()).abs()));
    let (psi_s, psi_u) = match (psi_stable, psi_unstable) {
        (Some(s), Some(u)) => (s, u),
        _ => {
            report.notes.push(format!(
                "drift zeros {zeros:?} do not bracket a barrier; using continuation node and saddle"
            ));
            (0.0, frame.psi_saddle())
        }
    };
    let est = mean_escape_time(&prof, psi_s, psi_u).map_err(at("escape time"))?;
    if est.low_barrier {
        report.notes.push(format!("barrier {:.3} below 1", est.barrier));
    }
    if est.truncated_well {
        report.notes.push(format!("well not interior to grid (boundary ratio {:.2e})", est.boundary_ratio));
    }
    report.valid = est.is_valid();
    report.tau_escape = report.valid.then_some(est.tau_escape);
    if r.first_passage_seeds > 0 {
        let layout = stepper.layout();
        let start = MicroState::all_on(net.num_nodes());
        let times = (0..r.first_passage_seeds)
            .map(|i| {
                first_passage(
                    &net,
                    layout,
                    &frame,
                    eps,
                    &start,
                    psi_u,
                    r.max_passage_steps,
                    rng::derive_seed(r.seed, rng::tag::PATHS, 1_000_000 + i as u64),
                )
            })
            .collect::<crate::Result<Vec<_>>>()
            .map_err(at("first passage"))?;
        let hit: Vec<f64> = times.iter().flatten().map(|&t| t as f64).collect();
        report.first_passage = Some(FirstPassage {
            psi_target: psi_u,
            max_steps: r.max_passage_steps,
            mean: (!hit.is_empty()).then(|| hit.iter().sum::<f64>() / hit.len() as f64),
            times,
        });
    }
    report.frame = Some(frame);
    report.escape = Some(est);
    report.profile = Some(prof);
    Ok(())
}

/// ρ(t) statistics of a long run started all-on, after `burn_in` steps.
pub fn plateau_statistics(net: &Network, eps: f64, burn_in: usize, steps: usize, seed: u64) -> CliResult<GaussianityReport> {
    let params = SimParams::new(eps).map_err(at("plateau"))?;
    let mut noise = NoiseStream::new(rng::derive_seed(seed, rng::tag::DYNAMICS, 0), net.num_nodes());
    let mut rho = Vec::with_capacity(steps);
    run(
        net,
        &MicroState::all_on(net.num_nodes()),
        params,
        burn_in + steps,
        &mut noise,
        &mut |t: usize, _: &Network, s: &MicroState| {
            if t > burn_in {
                rho.push(total_density(s));
            }
        },
    )
    .map_err(at("plateau"))?;
    noise_gaussianity(&rho).map_err(at("plateau"))
}

// ---------------------------------------------------------------- meanfield

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanfieldReport {
    pub kbar: usize,
    pub folds: Vec<f64>,
    /// Smallest and largest sampled ε with three fixed points.
    pub bistable_range: Option<(f64, f64)>,
    /// f(0) at the configured ε; nonzero, unlike the absorbing all-off
    /// state of the network model.
    pub f_at_zero: f64,
    pub notes: Vec<String>,
    pub ef_folds: Vec<f64>,
    /// Mean-field fold minus the network fold.
    pub fold_deviation: Option<f64>,
}

/// Even mean degree nearest to p (n − 1).
pub fn default_kbar(cfg: &ExperimentConfig) -> usize {
    let k = cfg.network.p * (cfg.network.n as f64 - 1.0);
    ((k / 2.0).round() as usize * 2).clamp(2, 64)
}

pub fn cmd_meanfield(cfg: &ExperimentConfig, out: &Path) -> CliResult<(MfDiagram, MeanfieldReport)> {
    let m = &cfg.meanfield;
    let kbar = m.kbar.unwrap_or_else(|| default_kbar(cfg));
    let eps = linspace(m.eps_min, m.eps_max, m.eps_points);
    let diagram = mf_bifurcation_diagram(&eps, kbar, m.grid_n).map_err(at("meanfield"))?;
    let bistable: Vec<f64> = eps
        .iter()
        .copied()
        .filter(|&e| diagram.fixed_points_at(e).count() == 3)
        .collect();
    let params = MfParams::new(cfg.dynamics.eps, kbar).map_err(at("meanfield"))?;
    let mut notes = vec![format!(
        "mean-field f(0) = {} > 0: the closure has no absorbing all-off state, so its low branch never reaches zero",
        mf_map(0.0, &params)
    )];
    let ef_folds = match &m.compare_branch {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("meanfield.compare_branch: {}: {e}", path.display())))?;
            let branch: Branch =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("meanfield.compare_branch: {e}")))?;
            detect_bifurcations(&branch)
                .into_iter()
                .filter(|b| b.kind == BifurcationKind::Fold)
                .map(|b| b.param)
                .collect()
        }
        None => Vec::new(),
    };
    let fold_deviation = match (diagram.folds.last(), ef_folds.iter().cloned().reduce(f64::max)) {
        (Some(mf), Some(ef)) => {
            notes.push(format!("high-branch fold: mean field {mf:.4}, network {ef:.4}"));
            Some(mf - ef)
        }
        _ => None,
    };
    let report = MeanfieldReport {
        kbar,
        folds: diagram.folds.clone(),
        bistable_range: bistable.first().zip(bistable.last()).map(|(a, b)| (*a, *b)),
        f_at_zero: mf_map(0.0, &params),
        notes,
        ef_folds,
        fold_deviation,
    };
    if cfg.output.csv() {
        write_with(out, "meanfield.csv", |w| diagram.write_csv(w))?;
    }
    if cfg.output.json() {
        write_json(out, "meanfield_report.json", &report)?;
    }
    Ok((diagram, report))
}

// ---------------------------------------------------------------- net-stats

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetStats {
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub num_edges: usize,
    pub mean_degree: f64,
    pub expected_mean_degree: f64,
    pub max_degree: usize,
    pub mean_clustering: f64,
    pub clustering_nodes: usize,
    pub giant_component: usize,
    pub mean_path_length: Option<f64>,
}

/// Poisson pmf at k for mean λ, via logs.
fn poisson_pmf(lambda: f64, k: usize) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    (k as f64 * lambda.ln() - lambda - ln_fact).exp()
}

/// Degree histogram (`degree, count, expected`), clustering, giant
/// component and mean path length of the configured network.
pub fn cmd_net_stats(cfg: &ExperimentConfig, out: &Path) -> CliResult<NetStats> {
    let net = build_network(cfg, cfg.network.p)?;
    let hist = degree_histogram(&net);
    let (c, nodes) = mean_clustering(&net);
    let path = if cfg.network.path_samples > 0 {
        match mean_path_length(&net, cfg.network.path_samples, cfg.network.seed) {
            Ok(l) => Some(l),
            Err(Error::NoConnectedPair { .. }) => None,
            Err(e) => return Err(at("path length")(e)),
        }
    } else {
        None
    };
    let lambda = cfg.network.p * (cfg.network.n as f64 - 1.0);
    let stats = NetStats {
        n: net.num_nodes(),
        p: cfg.network.p,
        seed: cfg.network.seed,
        num_edges: net.num_edges(),
        mean_degree: net.mean_degree(),
        expected_mean_degree: lambda,
        max_degree: net.max_degree(),
        mean_clustering: c,
        clustering_nodes: nodes,
        giant_component: giant_component_size(&net),
        mean_path_length: path,
    };
    if cfg.output.csv() {
        write_with(out, "degree_histogram.csv", |w| {
            writeln!(w, "degree,count,expected")?;
            for (&k, &count) in &hist {
                writeln!(w, "{k},{count},{}", net.num_nodes() as f64 * poisson_pmf(lambda, k))?;
            }
            Ok(())
        })?;
    }
    if cfg.output.json() {
        write_json(out, "net_stats.json", &stats)?;
    }
    Ok(stats)
}
