//! One-dimensional Fokker–Planck reduction along a node-to-saddle reaction
//! coordinate: drift and diffusion from short bursts, effective free energy,
//! Kramers escape times, and checks on the plateau noise.

use std::io::Write;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::coarse::{CoarseState, CoarseTimestepper, DegreeLayout};
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::linalg::{dot, norm2, sub};
use crate::micro::{evolve_in_place, MicroState, SimParams, Thresholds};
use crate::rng::{self, NoiseStream};

/// Straight segment from a stable coarse node towards a coarse saddle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionFrame {
    pub d_node: Vec<f64>,
    pub d_saddle: Vec<f64>,
    pub unit: Vec<f64>,
}

impl ReactionFrame {
    pub fn new(d_node: Vec<f64>, d_saddle: Vec<f64>) -> Result<Self> {
        if d_node.len() != d_saddle.len() {
            return Err(Error::DimensionMismatch {
                expected: d_node.len(),
                got: d_saddle.len(),
            });
        }
        let diff = sub(&d_saddle, &d_node);
        let len = norm2(&diff);
        if len == 0.0 {
            return Err(Error::InvalidArgument("node and saddle coincide".into()));
        }
        let unit = diff.iter().map(|v| v / len).collect();
        Ok(Self { d_node, d_saddle, unit })
    }

    pub fn from_states(node: &CoarseState, saddle: &CoarseState) -> Result<Self> {
        if node.layout != saddle.layout {
            return Err(Error::LayoutMismatch("node and saddle use different layouts".into()));
        }
        Self::new(node.densities.clone(), saddle.densities.clone())
    }

    pub fn dim(&self) -> usize {
        self.unit.len()
    }

    /// ‖d_saddle − d_node‖.
    pub fn length(&self) -> f64 {
        norm2(&sub(&self.d_saddle, &self.d_node))
    }

    /// ψ of the saddle, which is negative: −‖d_saddle − d_node‖.
    pub fn psi_saddle(&self) -> f64 {
        -self.length()
    }

    /// ψ = (d_node − d)·unit.
    pub fn psi(&self, d: &[f64]) -> Result<f64> {
        if d.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d.len(),
            });
        }
        Ok(dot(&sub(&self.d_node, d), &self.unit))
    }

    /// d = d_node − ψ·unit, not clipped.
    pub fn embed(&self, psi: f64) -> Vec<f64> {
        self.d_node.iter().zip(&self.unit).map(|(n, e)| n - psi * e).collect()
    }

    /// [`Self::embed`] clipped to `[0, upper]`.
    pub fn embed_clipped(&self, psi: f64, upper: &[f64]) -> Vec<f64> {
        self.embed(psi)
            .iter()
            .zip(upper)
            .map(|(d, u)| d.clamp(0.0, *u))
            .collect()
    }

    /// `n` uniform points from `beyond_saddle` segment lengths past the
    /// saddle to `beyond_node` lengths past the node, ascending.
    pub fn grid(&self, n: usize, beyond_saddle: f64, beyond_node: f64) -> Vec<f64> {
        let len = self.length();
        let lo = -(1.0 + beyond_saddle) * len;
        let hi = beyond_node * len;
        linspace(lo, hi, n)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// ψ of a coarse state.
pub fn reaction_coordinate(d: &CoarseState, frame: &ReactionFrame) -> Result<f64> {
    frame.psi(&d.densities)
}

/// The coarse state at coordinate ψ on the segment, clipped to the box.
pub fn embed(psi: f64, frame: &ReactionFrame, layout: Arc<DegreeLayout>) -> Result<CoarseState> {
    layout.check_dim(frame.dim())?;
    let d = frame.embed_clipped(psi, layout.class_fraction());
    CoarseState::new(d, layout)
}

/// Something that produces the end coordinates of independent short runs
/// started at ψ.
pub trait BurstSource: Sync {
    /// Returns `(ψ_start, ψ_end values)`. `ψ_start` may differ from `psi`
    /// when the start state had to be clipped.
    fn burst(&self, psi: f64, tau: usize, n_real: usize, seed: u64) -> Result<(f64, Vec<f64>)>;
}

/// Bursts of the network model: lift `embed(ψ)`, evolve, restrict each
/// realization and project.
pub struct NetworkBurst<'a> {
    pub stepper: &'a CoarseTimestepper,
    pub frame: &'a ReactionFrame,
}

impl BurstSource for NetworkBurst<'_> {
    fn burst(&self, psi: f64, tau: usize, n_real: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
        let layout = self.stepper.layout();
        let d0 = self.frame.embed_clipped(psi, layout.class_fraction());
        let psi0 = self.frame.psi(&d0)?;
        let ends = self
            .stepper
            .with_seed(seed)
            .realizations(&d0, self.stepper.parameter_value(), tau, n_real)?;
        let psis = ends.iter().map(|d| self.frame.psi(d)).collect::<Result<Vec<_>>>()?;
        Ok((psi0, psis))
    }
}

/// Euler–Maruyama Ornstein–Uhlenbeck stand-in,
/// `Δψ = −a ψ τ + sqrt(2 D τ) ξ`.
#[derive(Clone, Copy, Debug)]
pub struct OuSurrogate {
    pub a: f64,
    pub diffusion: f64,
}

impl BurstSource for OuSurrogate {
    fn burst(&self, psi: f64, tau: usize, n_real: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
        let mut g = rng::chacha(seed, rng::tag::SURROGATE, 0);
        let t = tau as f64;
        let sd = (2.0 * self.diffusion * t).sqrt();
        let out = (0..n_real)
            .map(|_| {
                let xi: f64 = StandardNormal.sample(&mut g);
                psi - self.a * psi * t + sd * xi
            })
            .collect();
        Ok((psi, out))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FokkerPlanckProfile {
    pub psi_grid: Vec<f64>,
    pub drift: Vec<f64>,
    /// Standard error of each drift estimate.
    pub drift_stderr: Vec<f64>,
    pub diffusion: Vec<f64>,
    /// βG, empty until [`free_energy`] is applied.
    pub free_energy: Vec<f64>,
    pub n_realizations: usize,
    pub tau: usize,
}

impl FokkerPlanckProfile {
    /// `psi, drift, diffusion, betaG`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "psi,drift,diffusion,betaG")?;
        for i in 0..self.psi_grid.len() {
            let g = self.free_energy.get(i).map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{g}", self.psi_grid[i], self.drift[i], self.diffusion[i])?;
        }
        Ok(())
    }

    /// Zeros of the drift by linear interpolation, tagged stable when the
    /// drift decreases through zero.
    pub fn drift_zeros(&self) -> Vec<(f64, bool)> {
        let (x, u) = (&self.psi_grid, &self.drift);
        let mut out = Vec::new();
        for i in 0..x.len().saturating_sub(1) {
            if u[i] == 0.0 {
                let stable = i > 0 && u[i - 1] > 0.0;
                out.push((x[i], stable));
            } else if u[i] * u[i + 1] < 0.0 {
                let t = u[i] / (u[i] - u[i + 1]);
                out.push((x[i] + t * (x[i + 1] - x[i]), u[i] > 0.0));
            }
        }
        out
    }
}

/// Drift `mean(Δψ)/τ` and diffusion `var(Δψ)/(2τ)` at every grid point from
/// `n_real` bursts of length `tau`. Grid points run concurrently, each with
/// its own seed derived from `master_seed`.
pub fn estimate_drift_diffusion<S: BurstSource + ?Sized>(
    source: &S,
    psi_grid: &[f64],
    tau: usize,
    n_real: usize,
    master_seed: u64,
) -> Result<FokkerPlanckProfile> {
    if tau < 1 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    if n_real < 100 {
        return Err(Error::TooFewSamples { needed: 100, got: n_real });
    }
    if psi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("psi grid must be strictly ascending".into()));
    }
    let t = tau as f64;
    let stats = psi_grid
        .par_iter()
        .enumerate()
        .map(|(j, &psi)| {
            let seed = rng::derive_seed(master_seed, rng::tag::PATHS, j as u64);
            let (psi0, ends) = source.burst(psi, tau, n_real, seed)?;
            let n = ends.len() as f64;
            let mean = ends.iter().map(|e| e - psi0).sum::<f64>() / n;
            let var = ends.iter().map(|e| (e - psi0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let diffusion = var / (2.0 * t);
            if diffusion.is_nan() || diffusion <= 0.0 {
                return Err(Error::NonPositiveDiffusion { psi, value: diffusion });
            }
            Ok((mean / t, (var / n).sqrt() / t, diffusion))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FokkerPlanckProfile {
        psi_grid: psi_grid.to_vec(),
        drift: stats.iter().map(|s| s.0).collect(),
        drift_stderr: stats.iter().map(|s| s.1).collect(),
        diffusion: stats.iter().map(|s| s.2).collect(),
        free_energy: Vec::new(),
        n_realizations: n_real,
        tau,
    })
}

/// βG(ψ) = −∫ u/D dψ′ + ln D(ψ), trapezoidal from the first grid point and
/// shifted so that its minimum is 0.
pub fn free_energy(profile: &FokkerPlanckProfile) -> Result<FokkerPlanckProfile> {
    let n = profile.psi_grid.len();
    if n == 0 || profile.drift.len() != n || profile.diffusion.len() != n {
        return Err(Error::InvalidArgument("profile arrays are empty or ragged".into()));
    }
    if let Some((i, &d)) = profile.diffusion.iter().enumerate().find(|(_, &d)| d.is_nan() || d <= 0.0) {
        return Err(Error::NonPositiveDiffusion {
            psi: profile.psi_grid[i],
            value: d,
        });
    }
    let ratio: Vec<f64> = profile.drift.iter().zip(&profile.diffusion).map(|(u, d)| u / d).collect();
    let mut g = Vec::with_capacity(n);
    let mut integral = 0.0;
    for i in 0..n {
        if i > 0 {
            integral += 0.5 * (ratio[i] + ratio[i - 1]) * (profile.psi_grid[i] - profile.psi_grid[i - 1]);
        }
        g.push(-integral + profile.diffusion[i].ln());
    }
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    g.iter_mut().for_each(|v| *v -= min);
    let mut out = profile.clone();
    out.free_energy = g;
    Ok(out)
}

/// Linear interpolation of `y(x)` at `at` (clamped to the grid).
fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    if at >= x[x.len() - 1] {
        return y[y.len() - 1];
    }
    let i = x.partition_point(|&v| v <= at) - 1;
    let t = (at - x[i]) / (x[i + 1] - x[i]);
    y[i] + t * (y[i + 1] - y[i])
}

/// Trapezoid of the piecewise-linear interpolant of `y` over `[a, b]`.
fn trapz_between(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let mut pts = vec![(a, interp(x, y, a))];
    pts.extend(x.iter().zip(y).filter(|(&xi, _)| xi > a && xi < b).map(|(&xi, &yi)| (xi, yi)));
    pts.push((b, interp(x, y, b)));
    pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub psi_stable: f64,
    pub psi_unstable: f64,
    /// ∫ e^{βG} between the well and the barrier top.
    pub barrier_integral: f64,
    /// ∫ e^{−βG}/D from the far grid end to the barrier top.
    pub well_integral: f64,
    /// Product of the two integrals, in time steps.
    pub tau_escape: f64,
    pub barrier: f64,
    /// Boundary value of e^{−βG}/D relative to its peak on the well side.
    pub boundary_ratio: f64,
    /// Barrier below 1, outside the regime where the formula applies.
    pub low_barrier: bool,
    /// The well is not interior to the grid (boundary ratio ≥ 1e-3).
    pub truncated_well: bool,
}

impl EscapeEstimate {
    pub fn is_valid(&self) -> bool {
        !self.low_barrier && !self.truncated_well
    }
}

/// Kramers mean escape time from `psi_stable` over `psi_unstable`.
///
/// The outer integral starts at the grid end on the far side of the well
/// from the barrier, so either orientation of ψ gives the same result.
pub fn mean_escape_time(profile: &FokkerPlanckProfile, psi_stable: f64, psi_unstable: f64) -> Result<EscapeEstimate> {
    if profile.free_energy.len() != profile.psi_grid.len() {
        return Err(Error::InvalidArgument("free energy not computed".into()));
    }
    let lo = profile.psi_grid[0];
    let hi = profile.psi_grid[profile.psi_grid.len() - 1];
    for v in [psi_stable, psi_unstable] {
        if !(lo..=hi).contains(&v) {
            return Err(Error::InvalidArgument(format!("psi {v} outside grid [{lo}, {hi}]")));
        }
    }
    if psi_stable == psi_unstable {
        return Err(Error::InvalidArgument("stable and unstable coordinates coincide".into()));
    }
    // orient so the barrier lies to the right of the well
    let flip = psi_unstable < psi_stable;
    let s = if flip { -1.0 } else { 1.0 };
    let mut x: Vec<f64> = profile.psi_grid.iter().map(|v| s * v).collect();
    let mut g = profile.free_energy.clone();
    let mut d = profile.diffusion.clone();
    if flip {
        x.reverse();
        g.reverse();
        d.reverse();
    }
    let (a, b) = (s * psi_stable, s * psi_unstable);
    let up: Vec<f64> = g.iter().map(|v| v.exp()).collect();
    let down: Vec<f64> = g.iter().zip(&d).map(|(v, dd)| (-v).exp() / dd).collect();
    let barrier_integral = trapz_between(&x, &up, a, b);
    let well_integral = trapz_between(&x, &down, x[0], b);
    let barrier = interp(&x, &g, b) - interp(&x, &g, a);
    let peak = x
        .iter()
        .zip(&down)
        .filter(|(&xi, _)| xi <= b)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    let boundary_ratio = down[0] / peak;
    let low_barrier = barrier < 1.0;
    if low_barrier {
        log::warn!("barrier {barrier:.3} below 1; Kramers estimate unreliable");
    }
    Ok(EscapeEstimate {
        psi_stable,
        psi_unstable,
        barrier_integral,
        well_integral,
        tau_escape: barrier_integral * well_integral,
        barrier,
        boundary_ratio,
        low_barrier,
        truncated_well: boundary_ratio >= 1e-3,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub chi_square: f64,
    pub bins: usize,
    pub p_value: f64,
    /// Zero spread, so no Gaussian fit exists.
    pub degenerate: bool,
}

impl GaussianityReport {
    /// Passes the chi-square test at level `alpha`.
    pub fn is_gaussian(&self, alpha: f64) -> bool {
        !self.degenerate && self.p_value > alpha
    }
}

/// Sample moments and a chi-square goodness-of-fit test against the fitted
/// Gaussian on equal-probability bins.
pub fn noise_gaussianity(series: &[f64]) -> Result<GaussianityReport> {
    let n = series.len();
    if n < 1000 {
        return Err(Error::TooFewSamples { needed: 1000, got: n });
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let m2 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m3 = series.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / nf;
    let m4 = series.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let std = (m2 * nf / (nf - 1.0)).sqrt();
    let bins = (n / 200).clamp(10, 50);
    if m2.is_nan() || m2.sqrt() <= 1e-12 * mean.abs().max(1.0) {
        return Ok(GaussianityReport {
            n,
            mean,
            std: 0.0,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            chi_square: f64::INFINITY,
            bins,
            p_value: 0.0,
            degenerate: true,
        });
    }
    let normal = Normal::new(mean, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let edges: Vec<f64> = (1..bins).map(|i| normal.inverse_cdf(i as f64 / bins as f64)).collect();
    let mut counts = vec![0usize; bins];
    for &x in series {
        counts[edges.partition_point(|&e| e <= x)] += 1;
    }
    let expected = nf / bins as f64;
    let chi_square: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = (bins - 3) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(GaussianityReport {
        n,
        mean,
        std,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        chi_square,
        bins,
        p_value: 1.0 - chi.cdf(chi_square),
        degenerate: false,
    })
}

/// Per-node bin index on a layout, `usize::MAX` for nodes outside it.
fn node_bins(layout: &DegreeLayout, net: &Network) -> Result<Vec<usize>> {
    let mut out = vec![usize::MAX; net.num_nodes()];
    for (b, nodes) in layout.members(net)?.iter().enumerate() {
        for &i in nodes {
            out[i as usize] = b;
        }
    }
    Ok(out)
}

/// Observes ψ(t) of a long microscopic run.
pub struct PsiTracker {
    bins: Vec<usize>,
    counts: Vec<u64>,
    scale: f64,
}

impl PsiTracker {
    pub fn new(layout: &DegreeLayout, net: &Network) -> Result<Self> {
        Ok(Self {
            bins: node_bins(layout, net)?,
            counts: vec![0; layout.len()],
            scale: 1.0 / layout.num_nodes() as f64,
        })
    }

    /// Restriction of one state onto the layout.
    pub fn densities(&mut self, state: &[u8]) -> Vec<f64> {
        self.counts.fill(0);
        for (&a, &b) in state.iter().zip(&self.bins) {
            if a != 0 && b != usize::MAX {
                self.counts[b] += 1;
            }
        }
        self.counts.iter().map(|&c| c as f64 * self.scale).collect()
    }
}

/// Number of microscopic steps until ψ first passes `psi_target` (moving
/// away from the node), or `None` within `max_steps`.
#[allow(clippy::too_many_arguments)]
pub fn first_passage(
    net: &Network,
    layout: &DegreeLayout,
    frame: &ReactionFrame,
    eps: f64,
    start: &MicroState,
    psi_target: f64,
    max_steps: usize,
    noise_key: u64,
) -> Result<Option<usize>> {
    if start.len() != net.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: net.num_nodes(),
            got: start.len(),
        });
    }
    let th = Thresholds::new(SimParams::new(eps)?);
    let mut tracker = PsiTracker::new(layout, net)?;
    let mut state = start.activation().to_vec();
    let mut scratch = vec![0u8; state.len()];
    let mut noise = NoiseStream::new(noise_key, net.num_nodes());
    let passed = |psi: f64| if psi_target < 0.0 { psi <= psi_target } else { psi >= psi_target };
    for t in 1..=max_steps {
        evolve_in_place(net, &mut state, &mut scratch, th, &mut noise, 1);
        if passed(frame.psi(&tracker.densities(&state))?) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}
