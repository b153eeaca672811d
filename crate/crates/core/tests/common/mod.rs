//! Independent oracles shared by the property suites and the acceptance
//! harness. Nothing here calls the library routine it is checking.

#![allow(dead_code, clippy::needless_range_loop)]

use efnet::graph::{degree_histogram, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Gaussian elimination with partial pivoting.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| m[col][k] * x[k]).sum();
        x[col] = (x[col] - s) / m[col][col];
    }
    x
}

pub fn random_dominant(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += n as f64;
    }
    a
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect()
}

/// Random orthogonal matrix by classical Gram–Schmidt on random columns.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
            }
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-3 {
            cols.push(v.iter().map(|x| x / len).collect());
        }
    }
    transpose(&cols)
}

/// `Q T Qᵀ` for a quasi-triangular `T` whose spectrum is known: real
/// diagonal entries and 2×2 blocks `[[a, b], [−b, a]]` with eigenvalues
/// `a ± ib`. Returns the matrix and its eigenvalues as (re, im).
pub fn known_spectrum(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = vec![vec![0.0; n]; n];
    let mut eigs = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && rng.gen_bool(0.4) {
            let a = rng.gen_range(-2.0..2.0);
            let b = rng.gen_range(0.3..2.0);
            t[i][i] = a;
            t[i + 1][i + 1] = a;
            t[i][i + 1] = b;
            t[i + 1][i] = -b;
            eigs.push((a, b));
            eigs.push((a, -b));
            i += 2;
        } else {
            let a = rng.gen_range(-3.0..3.0);
            t[i][i] = a;
            eigs.push((a, 0.0));
            i += 1;
        }
    }
    for r in 0..n {
        for c in r + 1..n {
            if t[r][c] == 0.0 && !(c == r + 1 && t[c][r] != 0.0) {
                t[r][c] = rng.gen_range(-0.5..0.5);
            }
        }
    }
    let q = random_orthogonal(n, &mut rng);
    (matmul(&matmul(&q, &t), &transpose(&q)), eigs)
}

/// Greedy matching distance between two spectra.
pub fn spectrum_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for &(x, y) in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, &(u, v))| (j, ((x - u).powi(2) + (y - v).powi(2)).sqrt()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Mean-field map by summing over every configuration of k neighbours.
pub fn mf_enumerated(rho: f64, eps: f64, k: usize) -> f64 {
    let mut total = 0.0;
    for mask in 0u32..(1u32 << k) {
        let active = mask.count_ones() as usize;
        let weight = rho.powi(active as i32) * (1.0 - rho).powi((k - active) as i32);
        let prob = if 2 * active > k { 1.0 - eps } else { eps };
        total += weight * prob;
    }
    total
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Chi-square p-value of the degree histogram against Poisson(p (n − 1)),
/// pooling bins until every expected count is at least 5.
pub fn degree_chi_square_p(net: &Network, p: f64) -> f64 {
    let n = net.num_nodes() as f64;
    let lambda = p * (n - 1.0);
    let hist = degree_histogram(net);
    let kmax = *hist.keys().last().unwrap();
    let pmf = |k: usize| (k as f64 * lambda.ln() - lambda - ln_factorial(k)).exp();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    let mut cdf = 0.0;
    for k in 0..=kmax {
        obs += *hist.get(&k).unwrap_or(&0) as f64;
        exp += n * pmf(k);
        cdf += pmf(k);
        if exp >= 5.0 && n * (1.0 - cdf) >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    // upper tail
    bins.push((obs, exp + n * (1.0 - cdf).max(0.0)));
    let chi: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(chi)
}

/// One line of acceptance output.
pub fn report(id: &str, ok: bool, detail: &str) -> bool {
    println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}
