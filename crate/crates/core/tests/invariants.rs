#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use efnet::coarse::{CoarseTimestepper, DegreeLayout};
use efnet::continuation::{newton_fixed_param, trace_branch, ParametrizedMap, Settings};
use efnet::graph::{generate_er, random_permutation, relabel, Network};
use efnet::krylov::{arnoldi, gmres, FnOperator};
use efnet::linalg::DenseMatrix;
use efnet::meanfield::{mf_map, MfParams};
use efnet::micro::{activation_probability, step_with_variates, MicroState, SimParams};
use efnet::rng::{draw_at, probability_threshold};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_structure(net: &Network) {
    let n = net.num_nodes();
    let mut seen = BTreeSet::new();
    for i in 0..n {
        let nb = net.neighbors(i);
        assert_eq!(net.degree(i), nb.len());
        assert!(nb.windows(2).all(|w| w[0] < w[1]), "unsorted or duplicate neighbours");
        for &j in nb {
            assert_ne!(j as usize, i, "self loop");
            assert!(net.neighbors(j as usize).binary_search(&(i as u32)).is_ok(), "asymmetric edge");
        }
    }
    for (&k, nodes) in net.degree_classes() {
        for &v in nodes {
            assert_eq!(net.degree(v as usize), k);
            assert!(seen.insert(v), "node {v} in two classes");
        }
    }
    assert_eq!(seen.len(), n);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_networks_are_well_formed(n in 1usize..300, p in 0.0f64..=1.0, seed in 0u64..1000) {
        let net = generate_er(n, p, seed).unwrap();
        check_structure(&net);
        prop_assert_eq!(net.edges(), generate_er(n, p, seed).unwrap().edges());
    }

    #[test]
    fn activations_stay_binary(seed in 0u64..1000, eps in 0.01f64..0.49) {
        let net = generate_er(200, 0.03, seed).unwrap();
        let mut state = MicroState::random(200, 0.5, seed);
        for t in 0..100u64 {
            let u: Vec<u32> = (0..200).map(|i| draw_at(seed, t * 200 + i)).collect();
            state = step_with_variates(&net, &state, SimParams::new(eps).unwrap(), &u).unwrap();
            prop_assert!(state.activation().iter().all(|&a| a <= 1));
        }
    }

    #[test]
    fn updates_commute_with_relabelling(seed in 0u64..1000, eps in 0.01f64..0.49) {
        let n = 300;
        let net = generate_er(n, 0.02, seed).unwrap();
        let perm = random_permutation(n, seed);
        let renamed = relabel(&net, &perm).unwrap();
        let state = MicroState::random(n, 0.6, seed + 1);
        let u: Vec<u32> = (0..n as u64).map(|i| draw_at(seed ^ 0x55, i)).collect();
        let mut state_r = vec![0u8; n];
        let mut u_r = vec![0u32; n];
        for i in 0..n {
            state_r[perm[i] as usize] = state.activation()[i];
            u_r[perm[i] as usize] = u[i];
        }
        let params = SimParams::new(eps).unwrap();
        let next = step_with_variates(&net, &state, params, &u).unwrap();
        let next_r = step_with_variates(&renamed, &MicroState::from_activation(state_r).unwrap(), params, &u_r).unwrap();
        for i in 0..n {
            prop_assert_eq!(next.activation()[i], next_r.activation()[perm[i] as usize]);
        }
    }
}

#[test]
fn all_off_survives_a_thousand_steps() {
    let net = generate_er(500, 0.01, 1).unwrap();
    let mut state = MicroState::all_off(500);
    for t in 0..1000u64 {
        let u: Vec<u32> = (0..500).map(|i| draw_at(3, t * 500 + i)).collect();
        state = step_with_variates(&net, &state, SimParams::new(0.4).unwrap(), &u).unwrap();
    }
    assert!(state.is_all_off());
}

#[test]
fn edge_count_is_binomial() {
    let (n, p) = (300usize, 0.02);
    let pairs = (n * (n - 1) / 2) as f64;
    let seeds = 200;
    let total: f64 = (0..seeds).map(|s| generate_er(n, p, s).unwrap().num_edges() as f64).sum();
    let mean = total / seeds as f64;
    let sd_of_mean = (pairs * p * (1.0 - p) / seeds as f64).sqrt();
    assert!((mean - pairs * p).abs() < 4.0 * sd_of_mean, "mean edges {mean} expected {}", pairs * p);
}

#[test]
fn transition_frequencies_follow_the_rule_table() {
    // node 0 with k = 4 neighbours 1..=4
    let edges: Vec<(u32, u32)> = (1..=4).map(|j| (0, j)).collect();
    let net = Network::from_edges(5, &edges, 1.0, 0).unwrap();
    let eps = 0.2;
    let params = SimParams::new(eps).unwrap();
    let trials = 100_000u64;
    for sigma in 0..=4usize {
        for self_state in [0u8, 1] {
            let mut act = vec![0u8; 5];
            act[0] = self_state;
            for a in act.iter_mut().skip(1).take(sigma) {
                *a = 1;
            }
            let state = MicroState::from_activation(act).unwrap();
            let mut hits = 0u64;
            for t in 0..trials {
                let u: Vec<u32> = (0..5).map(|i| draw_at(7 + sigma as u64, t * 5 + i)).collect();
                hits += step_with_variates(&net, &state, params, &u).unwrap().activation()[0] as u64;
            }
            let expect = activation_probability(4, sigma, self_state == 1, eps);
            let rule = if 2 * sigma > 4 {
                1.0 - eps
            } else if sigma >= 1 || self_state == 1 {
                eps
            } else {
                0.0
            };
            assert_eq!(expect, rule);
            let freq = hits as f64 / trials as f64;
            let se = (rule * (1.0 - rule) / trials as f64).sqrt();
            assert!((freq - rule).abs() <= 4.0 * se, "sigma {sigma} self {self_state}: {freq} vs {rule}");
        }
    }
    assert_eq!(probability_threshold(0.0), 0);
}

fn stepper(copies: usize) -> CoarseTimestepper {
    let net = Arc::new(generate_er(1000, 0.008, 11).unwrap());
    CoarseTimestepper::fixed(net, 0.15, copies, 5, 21).unwrap()
}

#[test]
fn coarse_variance_scales_inversely_with_copies() {
    let d: Vec<f64> = stepper(1).layout().class_fraction().iter().map(|f| 0.7 * f).collect();
    let var_at = |copies: usize| {
        let outs: Vec<f64> = (0..60u64)
            .map(|s| stepper(copies).with_seed(s).advance(&d, 0.15).unwrap().iter().sum())
            .collect();
        let m = outs.iter().sum::<f64>() / outs.len() as f64;
        outs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (outs.len() - 1) as f64
    };
    let ratio = var_at(100) / var_at(400);
    assert!((4.0 / 1.5..4.0 * 1.5).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn timestepper_is_independent_of_thread_count() {
    let s = stepper(64);
    let d: Vec<f64> = s.layout().class_fraction().iter().map(|f| 0.8 * f).collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| s.advance(&d, 0.15).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn high_density_start_stays_in_high_basin() {
    let net = Arc::new(generate_er(10_000, 0.0008, 1).unwrap());
    let s = CoarseTimestepper::fixed(net, 0.1, 200, 5, 1).unwrap();
    let d: Vec<f64> = s.layout().class_fraction().iter().map(|f| 0.9 * f).collect();
    let out: f64 = s.advance(&d, 0.1).unwrap().iter().sum();
    assert!(out > 0.5, "{out}");
}

#[test]
fn gmres_residuals_decrease_and_terminate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=12 {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| rng.gen_range(-1.0..1.0) + if i == j { 0.5 } else { 0.0 }).collect())
            .collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let res = gmres(&a, &b, &vec![0.0; n], 1e-10, n).unwrap();
        assert!(res.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(res.iterations <= n);
        let x = common::lu_solve(&rows, &b);
        let scale = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for (p, q) in res.solution.iter().zip(&x) {
            assert!((p - q).abs() < 1e-7 * scale, "n {n}: {p} vs {q}");
        }
    }
}

#[test]
fn arnoldi_relation_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 15;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let a = DenseMatrix::from_rows(&rows).unwrap();
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = 8;
    let f = arnoldi(&a, &start, m).unwrap();
    let h = &f.hessenberg;
    let hnorm = h.frobenius();
    for j in 0..m {
        let av = a.mul_vec(&f.basis[j]);
        let mut err = 0.0f64;
        for r in 0..n {
            let mut vh: f64 = (0..m).map(|i| f.basis[i][r] * h[(i, j)]).sum();
            if j == m - 1 {
                vh += f.residual_norm * f.basis[m][r];
            }
            err += (av[r] - vh).powi(2);
        }
        assert!(err.sqrt() <= 1e-8 * hnorm, "column {j}: {}", err.sqrt());
    }
}

#[test]
fn symmetric_ritz_values_are_real() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 12;
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    let a = DenseMatrix::from_rows(&rows).unwrap();
    let op = FnOperator::new(n, |x: &[f64]| Ok(a.mul_vec(x)));
    let f = arnoldi(&op, &vec![1.0; n], 8).unwrap();
    for z in f.ritz_values().unwrap() {
        assert!(z.im.abs() < 1e-10, "{z}");
    }
}

#[test]
fn branch_points_are_equilibria_under_fresh_seeds() {
    let net = Arc::new(generate_er(2000, 0.004, 6).unwrap());
    let s = CoarseTimestepper::fixed(net, 0.12, 1000, 5, 3).unwrap();
    let start: Vec<f64> = s.layout().class_fraction().iter().map(|f| 0.9 * f).collect();
    let mut settings = Settings::stochastic(s.noise_floor(&start));
    settings.ds_max = 0.02;
    let (u0, _, _) = newton_fixed_param(&s, &start, 0.12, &settings).unwrap();
    let (u1, _, _) = newton_fixed_param(&s, &u0, 0.125, &settings).unwrap();
    let branch = trace_branch(&s, "eps", (&u0, 0.12), (&u1, 0.125), 0.01, 4, &settings).unwrap();
    for pt in &branch.points {
        assert!(pt.residual_norm <= settings.newton_tol);
        let fresh = s.with_seed(12345).apply(&pt.u, pt.param).unwrap();
        let r = fresh.iter().zip(&pt.u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(r <= 2.0 * settings.newton_tol, "param {}: fresh residual {r}", pt.param);
    }
}

#[test]
fn mean_field_is_a_probability_on_a_dense_grid() {
    for k in [2usize, 4, 8, 16, 32, 64] {
        for e in 1..100 {
            let p = MfParams::new(e as f64 * 0.005, k).unwrap();
            for r in 0..=1000 {
                let f = mf_map(r as f64 / 1000.0, &p);
                assert!(f > 0.0 && f < 1.0, "k {k} eps {} rho {r}: {f}", p.eps());
            }
        }
    }
}

#[test]
fn pooled_layout_partitions_every_node() {
    let net = generate_er(3000, 0.003, 2).unwrap();
    let layout = DegreeLayout::pooled_poisson(3000, 0.003, 0.003, 0.9999).unwrap();
    let members = layout.members(&net).unwrap();
    let mut all: Vec<u32> = members.concat();
    all.sort_unstable();
    assert_eq!(all, (0..3000).collect::<Vec<u32>>());
}
