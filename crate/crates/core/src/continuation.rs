//! Pseudo-arclength continuation of coarse equilibria with a matrix-free
//! Newton–GMRES corrector, plus stability assessment and bifurcation
//! detection along traced branches.
//!
//! Everything here only needs `u ↦ Φ(u, param)` evaluations. The parameter
//! enters the arclength metric in scaled units `θ = param / param_scale`, so
//! that a parameter like the connection probability (~1e-3) is weighted
//! comparably to the state.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{gmres, leading_eigenvalues, FnOperator, DEFAULT_NUM_EIGS, DEFAULT_SUBSPACE};
use crate::linalg::{axpy, dot, norm2, sub};

/// A black-box map `Φ(u, param)`, such as the coarse timestepper.
pub trait ParametrizedMap: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, u: &[f64], param: f64) -> Result<Vec<f64>>;

    /// Upper corners of the admissible box `[0, ub]`, if the map has one.
    /// Finite-difference probes are kept inside it whenever possible.
    fn upper_bounds(&self) -> Option<Vec<f64>> {
        None
    }
}

impl<M: ParametrizedMap + ?Sized> ParametrizedMap for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, u: &[f64], param: f64) -> Result<Vec<f64>> {
        (**self).apply(u, param)
    }

    fn upper_bounds(&self) -> Option<Vec<f64>> {
        (**self).upper_bounds()
    }
}

/// Solver knobs shared by the corrector, the step controller and the
/// eigenvalue estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub newton_tol: f64,
    pub gmres_tol: f64,
    pub fd_eps: f64,
    pub max_newton: usize,
    pub ds_min: f64,
    pub ds_max: f64,
    /// Step growth factor after an easy correction.
    pub growth: f64,
    /// Corrections needing at most this many Newton steps grow the step.
    pub fast_newton: usize,
    pub arnoldi_m: usize,
    pub n_eigs: usize,
    pub param_scale: f64,
    pub eig_seed: u64,
}

impl Settings {
    /// Tight tolerances for deterministic maps.
    pub fn deterministic() -> Self {
        Self {
            newton_tol: 1e-10,
            gmres_tol: 1e-6,
            fd_eps: 1e-7,
            max_newton: 20,
            ds_min: 1e-6,
            ds_max: 0.1,
            growth: 1.3,
            fast_newton: 3,
            arnoldi_m: DEFAULT_SUBSPACE,
            n_eigs: DEFAULT_NUM_EIGS,
            param_scale: 1.0,
            eig_seed: 0,
        }
    }

    /// Tolerances for a stochastic timestepper whose evaluations carry
    /// sampling noise of 2-norm `noise_floor`.
    pub fn stochastic(noise_floor: f64) -> Self {
        Self {
            newton_tol: stochastic_newton_tol(noise_floor),
            gmres_tol: 1e-3,
            fd_eps: 1e-2,
            max_newton: 8,
            ds_min: 1e-3,
            ds_max: 0.05,
            ..Self::deterministic()
        }
    }
}

/// max(5e-4, 3 × noise floor).
pub fn stochastic_newton_tol(noise_floor: f64) -> f64 {
    (3.0 * noise_floor).max(5e-4)
}

/// Unit direction `(a, β)` in `(u, θ)` space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tangent {
    pub a: Vec<f64>,
    pub beta: f64,
}

impl Tangent {
    /// Normalized secant from `(u0, θ0)` to `(u1, θ1)`.
    pub fn secant(u0: &[f64], theta0: f64, u1: &[f64], theta1: f64) -> Result<Self> {
        let mut a = sub(u1, u0);
        let mut beta = theta1 - theta0;
        let len = (dot(&a, &a) + beta * beta).sqrt();
        if len == 0.0 {
            return Err(Error::InvalidArgument("seed points coincide".into()));
        }
        a.iter_mut().for_each(|v| *v /= len);
        beta /= len;
        Ok(Self { a, beta })
    }

    /// N(u, θ) = a·(u − u_prev) + β(θ − θ_prev) − ds.
    pub fn arclength_residual(&self, u: &[f64], theta: f64, u_prev: &[f64], theta_prev: f64, ds: f64) -> f64 {
        let du = sub(u, u_prev);
        dot(&self.a, &du) + self.beta * (theta - theta_prev) - ds
    }
}

/// Linearization of Φ at `(u, param)` via finite differences.
///
/// Probes use the same map (and therefore the same seed) as the base
/// evaluation. When a forward probe would leave the admissible box in some
/// component and the backward one stays inside, that component is
/// differenced backwards: `DΦ·q ≈ [Φ(u + h q_A) − Φ(u − h q_B)] / h` with
/// `q = q_A + q_B`.
pub struct Linearization<'a, M: ParametrizedMap + ?Sized> {
    map: &'a M,
    u: Vec<f64>,
    param: f64,
    param_scale: f64,
    base: Vec<f64>,
    h: f64,
    upper: Option<Vec<f64>>,
}

impl<'a, M: ParametrizedMap + ?Sized> Linearization<'a, M> {
    pub fn new(map: &'a M, u: &[f64], param: f64, fd_eps: f64, param_scale: f64) -> Result<Self> {
        if u.len() != map.dim() {
            return Err(Error::DimensionMismatch {
                expected: map.dim(),
                got: u.len(),
            });
        }
        if fd_eps.is_nan() || fd_eps <= 0.0 {
            return Err(Error::InvalidArgument(format!("fd_eps = {fd_eps} must be positive")));
        }
        let base = map.apply(u, param)?;
        Ok(Self {
            map,
            u: u.to_vec(),
            param,
            param_scale,
            base,
            h: fd_eps,
            upper: map.upper_bounds(),
        })
    }

    /// Φ(u, param).
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// u − Φ(u, param).
    pub fn fixed_point_residual(&self) -> Vec<f64> {
        sub(&self.u, &self.base)
    }

    /// DΦ·(du, dθ), with dθ in scaled parameter units.
    pub fn apply(&self, du: &[f64], dtheta: f64) -> Result<Vec<f64>> {
        let norm = (dot(du, du) + dtheta * dtheta).sqrt();
        if norm == 0.0 {
            return Ok(vec![0.0; du.len()]);
        }
        let h = self.h;
        let step = h / norm;
        let p_fwd = self.param + step * dtheta * self.param_scale;
        let mut fwd = self.u.clone();
        let mut bwd = self.u.clone();
        let mut any_backward = false;
        match &self.upper {
            None => axpy(step, du, &mut fwd),
            Some(ub) => {
                for k in 0..du.len() {
                    let f = self.u[k] + step * du[k];
                    let b = self.u[k] - step * du[k];
                    let inside = |x: f64| x >= 0.0 && x <= ub[k];
                    if !inside(f) && inside(b) {
                        bwd[k] = b;
                        any_backward = true;
                    } else {
                        fwd[k] = f;
                    }
                }
            }
        }
        let hi = self.map.apply(&fwd, p_fwd)?;
        let lo = if any_backward {
            self.map.apply(&bwd, self.param)?
        } else {
            self.base.clone()
        };
        Ok(hi.iter().zip(&lo).map(|(a, b)| (a - b) / step).collect())
    }
}

/// (Φ(u + h q) − Φ(u)) / h, evaluated with common random numbers through
/// the map's fixed seed.
pub fn fd_jacobian_vector<M: ParametrizedMap + ?Sized>(phi: &M, u: &[f64], param: f64, q: &[f64], fd_eps: f64) -> Result<Vec<f64>> {
    Linearization::new(phi, u, param, fd_eps, 1.0)?.apply(q, 0.0)
}

fn complex_ser<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

fn complex_de<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Complex64>, D::Error> {
    let raw: Vec<[f64; 2]> = Vec::deserialize(d)?;
    Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
}

/// A converged equilibrium on a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub u: Vec<f64>,
    pub param: f64,
    /// Secant direction used to reach this point (scaled units).
    pub tangent: Tangent,
    pub ds: f64,
    /// ‖u − Φ(u)‖ at the last evaluation.
    pub residual_norm: f64,
    pub newton_iterations: usize,
    #[serde(serialize_with = "complex_ser", deserialize_with = "complex_de", default)]
    pub leading_eigs: Vec<Complex64>,
    pub stable: Option<bool>,
}

impl BranchPoint {
    pub fn d_norm(&self) -> f64 {
        self.u.iter().sum()
    }

    pub fn max_abs_eig(&self) -> Option<f64> {
        self.leading_eigs.iter().map(|z| z.norm()).max_by(f64::total_cmp)
    }

    /// Largest real part among (numerically) real eigenvalues.
    pub fn leading_real_eig(&self) -> Option<f64> {
        leading_real(&self.leading_eigs)
    }
}

pub(crate) fn leading_real(eigs: &[Complex64]) -> Option<f64> {
    eigs.iter()
        .filter(|z| z.im.abs() <= 1e-3 * z.norm() + 1e-12)
        .map(|z| z.re)
        .max_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    StepUnderflow { ds: f64 },
    Stopped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub parameter: String,
    pub param_scale: f64,
    pub points: Vec<BranchPoint>,
    pub ds_history: Vec<f64>,
    pub termination: Termination,
}

impl Branch {
    pub fn params(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param).collect()
    }

    /// `index, param, d_norm, residual, max_abs_eig, stable, ds`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,param,d_norm,residual,max_abs_eig,stable,ds")?;
        for (i, p) in self.points.iter().enumerate() {
            let eig = p.max_abs_eig().map_or(String::new(), |v| v.to_string());
            let stable = p.stable.map_or(String::new(), |s| s.to_string());
            writeln!(w, "{i},{},{},{},{eig},{stable},{}", p.param, p.d_norm(), p.residual_norm, p.ds)?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Newton on the fixed-point equation at frozen parameter. Returns the
/// converged state, its residual ‖u − Φ(u)‖ and the number of corrections.
pub fn newton_fixed_param<M: ParametrizedMap + ?Sized>(phi: &M, u0: &[f64], param: f64, settings: &Settings) -> Result<(Vec<f64>, f64, usize)> {
    let n = phi.dim();
    let mut u = u0.to_vec();
    for iter in 0..=settings.max_newton {
        let lin = Linearization::new(phi, &u, param, settings.fd_eps, settings.param_scale)?;
        let r1 = lin.fixed_point_residual();
        let res = norm2(&r1);
        log::debug!("fixed-param newton {iter}: residual {res:.3e}");
        if res <= settings.newton_tol {
            return Ok((u, res, iter));
        }
        if iter == settings.max_newton {
            return Err(Error::NewtonNoConvergence {
                iterations: iter,
                residual: res,
                last_u: u,
                last_param: param,
            });
        }
        let op = FnOperator::new(n, |x: &[f64]| {
            let jv = lin.apply(x, 0.0)?;
            Ok(x.iter().zip(&jv).map(|(a, b)| a - b).collect())
        });
        let rhs: Vec<f64> = r1.iter().map(|v| -v).collect();
        let sol = gmres(&op, &rhs, &vec![0.0; n], settings.gmres_tol, n)?;
        axpy(1.0, &sol.solution, &mut u);
    }
    unreachable!()
}

/// Outcome of a successful arclength correction.
#[derive(Clone, Debug)]
pub struct Correction {
    pub point: BranchPoint,
    pub iterations: usize,
}

/// Pseudo-arclength Newton–GMRES corrector.
///
/// Solves `u − Φ(u, p) = 0`, `a·(u − u_prev) + β(θ − θ_prev) = ds` from the
/// guess `(guess_u, guess_param)`, with the bordered Jacobian applied
/// matrix-free. After every update the (linear) arclength condition is
/// restored exactly by a shift along the tangent.
#[allow(clippy::too_many_arguments)]
pub fn newton_corrector<M: ParametrizedMap + ?Sized>(
    phi: &M,
    guess_u: &[f64],
    guess_param: f64,
    prev: (&[f64], f64),
    tangent: &Tangent,
    ds: f64,
    settings: &Settings,
) -> Result<Correction> {
    let n = phi.dim();
    let scale = settings.param_scale;
    let (u_prev, p_prev) = prev;
    let theta_prev = p_prev / scale;
    let mut u = guess_u.to_vec();
    let mut theta = guess_param / scale;
    let restore = |u: &mut Vec<f64>, theta: &mut f64| {
        let c = -tangent.arclength_residual(u, *theta, u_prev, theta_prev, ds);
        axpy(c, &tangent.a, u);
        *theta += c * tangent.beta;
    };
    restore(&mut u, &mut theta);
    for iter in 0..=settings.max_newton {
        let lin = Linearization::new(phi, &u, theta * scale, settings.fd_eps, scale)?;
        let r1 = lin.fixed_point_residual();
        let r2 = tangent.arclength_residual(&u, theta, u_prev, theta_prev, ds);
        let r1n = norm2(&r1);
        let res = r1n.hypot(r2);
        log::debug!("arclength newton {iter}: residual {res:.3e} at param {:.6}", theta * scale);
        if res <= settings.newton_tol {
            return Ok(Correction {
                point: BranchPoint {
                    u,
                    param: theta * scale,
                    tangent: tangent.clone(),
                    ds,
                    residual_norm: r1n,
                    newton_iterations: iter,
                    leading_eigs: Vec::new(),
                    stable: None,
                },
                iterations: iter,
            });
        }
        if iter == settings.max_newton {
            return Err(Error::NewtonNoConvergence {
                iterations: iter,
                residual: res,
                last_u: u,
                last_param: theta * scale,
            });
        }
        let op = FnOperator::new(n + 1, |x: &[f64]| {
            let (du, dtheta) = (&x[..n], x[n]);
            let jv = lin.apply(du, dtheta)?;
            let mut out: Vec<f64> = du.iter().zip(&jv).map(|(a, b)| a - b).collect();
            out.push(dot(&tangent.a, du) + tangent.beta * dtheta);
            Ok(out)
        });
        let mut rhs: Vec<f64> = r1.iter().map(|v| -v).collect();
        rhs.push(-r2);
        let sol = gmres(&op, &rhs, &vec![0.0; n + 1], settings.gmres_tol, n + 1)?;
        axpy(1.0, &sol.solution[..n], &mut u);
        theta += sol.solution[n];
        restore(&mut u, &mut theta);
    }
    unreachable!()
}

/// What [`trace_branch_with`] does after a point is accepted.
pub enum Control {
    Continue,
    Stop,
}

/// Traces a branch from two known equilibria, see [`trace_branch_with`].
#[allow(clippy::too_many_arguments)]
pub fn trace_branch<M: ParametrizedMap + ?Sized>(
    phi: &M,
    parameter: &str,
    seed0: (&[f64], f64),
    seed1: (&[f64], f64),
    ds0: f64,
    n_points: usize,
    settings: &Settings,
) -> Result<Branch> {
    trace_branch_with(phi, parameter, seed0, seed1, ds0, n_points, settings, |_| Ok(Control::Continue))
}

/// Secant predictor / arclength corrector continuation producing up to
/// `n_points` points (the two corrected seeds included).
///
/// The step is halved on a failed correction and grown by `growth` after an
/// easy one, always clamped to `[ds_min, ds_max]`. Turning points are passed
/// without assuming any monotonicity in the parameter. A step that would
/// have to drop below `ds_min` ends the trace with
/// [`Termination::StepUnderflow`], keeping the points found so far.
/// `on_point` may annotate accepted points and stop the trace.
#[allow(clippy::too_many_arguments)]
pub fn trace_branch_with<M, F>(
    phi: &M,
    parameter: &str,
    seed0: (&[f64], f64),
    seed1: (&[f64], f64),
    ds0: f64,
    n_points: usize,
    settings: &Settings,
    mut on_point: F,
) -> Result<Branch>
where
    M: ParametrizedMap + ?Sized,
    F: FnMut(&mut BranchPoint) -> Result<Control>,
{
    let scale = settings.param_scale;
    let mut points = Vec::with_capacity(n_points);
    for (u, p) in [seed0, seed1] {
        let (u, res, iters) = newton_fixed_param(phi, u, p, settings)?;
        points.push(BranchPoint {
            u,
            param: p,
            tangent: Tangent::default(),
            ds: 0.0,
            residual_norm: res,
            newton_iterations: iters,
            leading_eigs: Vec::new(),
            stable: None,
        });
    }
    let t01 = Tangent::secant(&points[0].u, points[0].param / scale, &points[1].u, points[1].param / scale)?;
    let seed_gap = (norm2(&sub(&points[1].u, &points[0].u)).powi(2) + ((points[1].param - points[0].param) / scale).powi(2)).sqrt();
    for p in points.iter_mut() {
        p.tangent = t01.clone();
        p.ds = seed_gap;
    }
    let mut branch = Branch {
        parameter: parameter.to_string(),
        param_scale: scale,
        points: Vec::new(),
        ds_history: Vec::new(),
        termination: Termination::Completed,
    };
    for mut p in points {
        if let Control::Stop = on_point(&mut p)? {
            branch.points.push(p);
            branch.termination = Termination::Stopped;
            return Ok(branch);
        }
        branch.points.push(p);
    }
    let mut ds = ds0.clamp(settings.ds_min, settings.ds_max);
    while branch.points.len() < n_points {
        let len = branch.points.len();
        let (p0, p1) = (&branch.points[len - 2], &branch.points[len - 1]);
        let tangent = Tangent::secant(&p0.u, p0.param / scale, &p1.u, p1.param / scale)?;
        let (u_prev, p_prev) = (p1.u.clone(), p1.param);
        loop {
            let mut guess = u_prev.clone();
            axpy(ds, &tangent.a, &mut guess);
            let guess_param = p_prev + ds * tangent.beta * scale;
            match newton_corrector(phi, &guess, guess_param, (&u_prev, p_prev), &tangent, ds, settings) {
                Ok(Correction { mut point, iterations }) => {
                    log::info!(
                        "{parameter} branch point {}: param {:.6}, |d|_1 {:.5}, ds {:.4e}, {} newton",
                        branch.points.len(),
                        point.param,
                        point.d_norm(),
                        ds,
                        iterations
                    );
                    branch.ds_history.push(ds);
                    if iterations <= settings.fast_newton {
                        ds = (ds * settings.growth).min(settings.ds_max);
                    }
                    let control = on_point(&mut point)?;
                    branch.points.push(point);
                    if let Control::Stop = control {
                        branch.termination = Termination::Stopped;
                        return Ok(branch);
                    }
                    break;
                }
                Err(e) => {
                    log::info!("correction failed at ds {ds:.4e}: {e}");
                    ds *= 0.5;
                    if ds < settings.ds_min {
                        branch.termination = Termination::StepUnderflow { ds };
                        return Ok(branch);
                    }
                }
            }
        }
    }
    Ok(branch)
}

/// Leading eigenvalues of ∂Φ/∂u at a converged point via Arnoldi on the
/// finite-difference Jacobian action. Fills `leading_eigs` and `stable`
/// (max |λ| < 1).
pub fn classify_stability<M: ParametrizedMap + ?Sized>(phi: &M, point: &BranchPoint, m: usize, n_want: usize, settings: &Settings) -> Result<BranchPoint> {
    let n = phi.dim();
    let m = m.min(n);
    let n_want = n_want.min(m);
    let lin = Linearization::new(phi, &point.u, point.param, settings.fd_eps, settings.param_scale)?;
    let op = FnOperator::new(n, |q: &[f64]| lin.apply(q, 0.0));
    let eigs = leading_eigenvalues(&op, m, n_want, settings.eig_seed)?;
    let mut out = point.clone();
    out.stable = Some(eigs.iter().all(|z| z.norm() < 1.0));
    out.leading_eigs = eigs;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationKind {
    Fold,
    TranscriticalCandidate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bifurcation {
    pub kind: BifurcationKind,
    /// Indices of the branch points bracketing the event.
    pub bracket: (usize, usize),
    pub param: f64,
}

/// Vertex of the parabola through three points, or `None` when they are
/// collinear.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2]);
    if d == 0.0 {
        return None;
    }
    let a = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / d;
    let b = (x[2] * x[2] * (y[0] - y[1]) + x[1] * x[1] * (y[2] - y[0]) + x[0] * x[0] * (y[1] - y[2])) / d;
    let c = (x[1] * x[2] * (x[1] - x[2]) * y[0] + x[2] * x[0] * (x[2] - x[0]) * y[1] + x[0] * x[1] * (x[0] - x[1]) * y[2]) / d;
    if a.abs() < 1e-300 {
        return None;
    }
    let xv = -b / (2.0 * a);
    Some((xv, c - b * b / (4.0 * a)))
}

/// Folds (sign change of the parameter increment, refined by a parabola in
/// the chord coordinate across the turn) and transcritical candidates (the
/// leading real eigenvalue crossing +1 away from any fold).
pub fn detect_bifurcations(branch: &Branch) -> Vec<Bifurcation> {
    let pts = &branch.points;
    let mut out = Vec::new();
    if pts.len() < 3 {
        return out;
    }
    let mut fold_at = Vec::new();
    for i in 1..pts.len() - 1 {
        let d_prev = pts[i].param - pts[i - 1].param;
        let d_next = pts[i + 1].param - pts[i].param;
        if d_prev * d_next < 0.0 {
            let chord = sub(&pts[i + 1].u, &pts[i - 1].u);
            let len = norm2(&chord);
            let refined = if len > 0.0 {
                let xi = |k: usize| dot(&sub(&pts[k].u, &pts[i - 1].u), &chord) / len;
                parabola_vertex([xi(i - 1), xi(i), xi(i + 1)], [pts[i - 1].param, pts[i].param, pts[i + 1].param])
                    .map(|(_, v)| v)
                    .unwrap_or(pts[i].param)
            } else {
                pts[i].param
            };
            fold_at.push(i);
            out.push(Bifurcation {
                kind: BifurcationKind::Fold,
                bracket: (i - 1, i + 1),
                param: refined,
            });
        }
    }
    for i in 0..pts.len() - 1 {
        let (Some(l0), Some(l1)) = (pts[i].leading_real_eig(), pts[i + 1].leading_real_eig()) else {
            continue;
        };
        if (l0 - 1.0) * (l1 - 1.0) < 0.0 && !fold_at.iter().any(|&f| f == i || f == i + 1) {
            let t = (1.0 - l0) / (l1 - l0);
            out.push(Bifurcation {
                kind: BifurcationKind::TranscriticalCandidate,
                bracket: (i, i + 1),
                param: pts[i].param + t * (pts[i + 1].param - pts[i].param),
            });
        }
    }
    out
}

/// Bisects in the parameter between the bracketing points of a
/// transcritical candidate until the leading real eigenvalue crossing +1 is
/// located to `param_tol`. Intermediate states are interpolated along the
/// bracket and corrected at fixed parameter.
pub fn refine_transcritical<M: ParametrizedMap + ?Sized>(phi: &M, branch: &Branch, event: &Bifurcation, settings: &Settings, param_tol: f64) -> Result<f64> {
    let (i, j) = event.bracket;
    let (a, b) = (&branch.points[i], &branch.points[j]);
    let (Some(la), Some(_)) = (a.leading_real_eig(), b.leading_real_eig()) else {
        return Err(Error::InvalidArgument("bracket points carry no eigenvalues".into()));
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let lo_above = la > 1.0;
    let param_at = |t: f64| a.param + t * (b.param - a.param);
    while (param_at(hi) - param_at(lo)).abs() > param_tol {
        let t = 0.5 * (lo + hi);
        let p = param_at(t);
        let guess: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x + t * (y - x)).collect();
        let (u, res, iters) = newton_fixed_param(phi, &guess, p, settings)?;
        let probe = BranchPoint {
            u,
            param: p,
            tangent: Tangent::default(),
            ds: 0.0,
            residual_norm: res,
            newton_iterations: iters,
            leading_eigs: Vec::new(),
            stable: None,
        };
        let probe = classify_stability(phi, &probe, settings.arnoldi_m, settings.n_eigs, settings)?;
        let l = probe.leading_real_eig().unwrap_or(0.0);
        log::info!("transcritical bisection: param {p:.6}, leading real eigenvalue {l:.5}");
        if (l > 1.0) == lo_above {
            lo = t;
        } else {
            hi = t;
        }
    }
    Ok(param_at(0.5 * (lo + hi)))
}
