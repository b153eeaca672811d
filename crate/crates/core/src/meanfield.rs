//! Scalar mean-field closure of the majority rule: every neuron sees `k̄`
//! independently active neighbours, giving `ρ_{t+1} = f(ρ_t)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_KBAR: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfParams {
    eps: f64,
    kbar: usize,
}

impl MfParams {
    /// `kbar` must be even, positive and at most [`MAX_KBAR`].
    pub fn new(eps: f64, kbar: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, 0.5)")));
        }
        if kbar == 0 || !kbar.is_multiple_of(2) || kbar > MAX_KBAR {
            return Err(Error::InvalidArgument(format!(
                "kbar = {kbar} must be a positive even integer <= {MAX_KBAR}"
            )));
        }
        Ok(Self { eps, kbar })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn kbar(&self) -> usize {
        self.kbar
    }
}

/// Row `k` of Pascal's triangle, exact in integers.
fn binomial_row(k: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(k + 1);
    let mut c: u128 = 1;
    for i in 0..=k {
        row.push(c as f64);
        c = c * (k - i) as u128 / (i + 1) as u128;
    }
    row
}

/// f(ρ) = (1−ε) Σ_{i<k̄/2} C(k̄,i) ρ^{k̄−i}(1−ρ)^i + ε Σ_{i≥k̄/2} C(k̄,i) ρ^{k̄−i}(1−ρ)^i.
pub fn mf_map(rho: f64, params: &MfParams) -> f64 {
    let k = params.kbar;
    let binom = binomial_row(k);
    let half = k / 2;
    let (mut follow, mut defy) = (0.0, 0.0);
    for (i, c) in binom.iter().enumerate() {
        let term = c * rho.powi((k - i) as i32) * (1.0 - rho).powi(i as i32);
        if i < half {
            follow += term;
        } else {
            defy += term;
        }
    }
    (1.0 - params.eps) * follow + params.eps * defy
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfFixedPoint {
    pub rho_star: f64,
    pub stable: bool,
    /// f′(ρ*) by central difference.
    pub slope: f64,
}

fn slope(rho: f64, params: &MfParams) -> f64 {
    let h = 1e-6;
    (mf_map(rho + h, params) - mf_map(rho - h, params)) / (2.0 * h)
}

/// Roots of ρ − f(ρ) in [0, 1]: sign changes on a uniform grid of `grid_n`
/// intervals, each bisected to 1e-10.
pub fn mf_fixed_points(params: &MfParams, grid_n: usize) -> Result<Vec<MfFixedPoint>> {
    if grid_n < 100 {
        return Err(Error::InvalidArgument(format!("grid_n = {grid_n} must be at least 100")));
    }
    let g = |x: f64| x - mf_map(x, params);
    let mut roots = Vec::new();
    let xs: Vec<f64> = (0..=grid_n).map(|j| j as f64 / grid_n as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    for j in 0..=grid_n {
        if gs[j] == 0.0 {
            roots.push(xs[j]);
            continue;
        }
        if j < grid_n && gs[j + 1] != 0.0 && gs[j].signum() != gs[j + 1].signum() {
            let (mut lo, mut hi) = (xs[j], xs[j + 1]);
            let lo_sign = gs[j].signum();
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if g(mid).signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    Ok(roots
        .into_iter()
        .map(|rho_star| {
            let s = slope(rho_star, params);
            MfFixedPoint {
                rho_star,
                stable: s.abs() < 1.0,
                slope: s,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfRow {
    pub eps: f64,
    pub rho_star: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfDiagram {
    pub kbar: usize,
    pub rows: Vec<MfRow>,
    /// Midpoints of consecutive ε samples where the number of fixed points
    /// drops.
    pub folds: Vec<f64>,
}

impl MfDiagram {
    /// `eps, rho_star, stable`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,rho_star,stable")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.eps, r.rho_star, r.stable)?;
        }
        Ok(())
    }

    pub fn fixed_points_at(&self, eps: f64) -> impl Iterator<Item = &MfRow> {
        self.rows.iter().filter(move |r| r.eps == eps)
    }
}

/// Sweeps [`mf_fixed_points`] over `eps_values` (ascending).
pub fn mf_bifurcation_diagram(eps_values: &[f64], kbar: usize, grid_n: usize) -> Result<MfDiagram> {
    let mut rows = Vec::new();
    let mut folds = Vec::new();
    let mut prev: Option<(f64, usize)> = None;
    for &eps in eps_values {
        let params = MfParams::new(eps, kbar)?;
        let fps = mf_fixed_points(&params, grid_n)?;
        if let Some((pe, count)) = prev {
            if fps.len() < count {
                folds.push(0.5 * (pe + eps));
            }
        }
        prev = Some((eps, fps.len()));
        rows.extend(fps.into_iter().map(|fp| MfRow {
            eps,
            rho_star: fp.rho_star,
            stable: fp.stable,
        }));
    }
    Ok(MfDiagram { kbar, rows, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let p = MfParams::new(0.1, 8).unwrap();
        assert!((mf_map(0.0, &p) - 0.1).abs() < 1e-15);
        assert!((mf_map(1.0, &p) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(MfParams::new(0.1, 7).is_err());
        assert!(MfParams::new(0.1, 0).is_err());
        assert!(MfParams::new(0.1, 66).is_err());
        assert!(MfParams::new(0.5, 8).is_err());
        assert!(MfParams::new(0.0, 8).is_err());
        assert!(MfParams::new(0.1, 64).is_ok());
    }

    #[test]
    fn binomials_are_exact() {
        let row = binomial_row(64);
        assert_eq!(row[32], 1832624140942590534u64 as f64);
        assert_eq!(binomial_row(8), vec![1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0]);
    }

    #[test]
    fn three_roots_at_low_noise() {
        let fps = mf_fixed_points(&MfParams::new(0.1, 8).unwrap(), 1000).unwrap();
        assert_eq!(fps.len(), 3);
        assert!(fps[0].stable && !fps[1].stable && fps[2].stable);
        assert!(fps[0].rho_star < fps[1].rho_star && fps[1].rho_star < fps[2].rho_star);
    }

    #[test]
    fn single_root_at_high_noise() {
        let fps = mf_fixed_points(&MfParams::new(0.45, 8).unwrap(), 1000).unwrap();
        assert_eq!(fps.len(), 1);
        assert!((fps[0].rho_star - 0.5).abs() < 0.05);
        assert!(fps[0].stable);
    }

    #[test]
    fn diagram_has_a_fold() {
        let eps: Vec<f64> = (1..50).map(|i| i as f64 * 0.01).collect();
        let d = mf_bifurcation_diagram(&eps, 8, 1000).unwrap();
        assert_eq!(d.folds.len(), 1, "{:?}", d.folds);
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("eps,rho_star,stable\n0.01,"));
    }
}
