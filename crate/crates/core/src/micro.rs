//! Synchronous stochastic majority-rule dynamics of binary neurons.
//!
//! At each tick every neuron `i` with degree `k_i` and `σ_i` active neighbors
//! is active next with probability
//!
//! | condition                  | P(active next) |
//! |----------------------------|----------------|
//! | `σ_i > k_i / 2`            | `1 − ε`        |
//! | `1 ≤ σ_i ≤ k_i / 2`        | `ε`            |
//! | `σ_i = 0`, currently off   | `0`            |
//! | `σ_i = 0`, currently on    | `ε`            |
//!
//! independently of its current state except for the `σ_i = 0` row.

use std::io::Write;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::rng::{self, probability_threshold, NoiseStream};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MicroState {
    activation: Vec<u8>,
}

impl MicroState {
    pub fn all_off(n: usize) -> Self {
        Self {
            activation: vec![0; n],
        }
    }

    pub fn all_on(n: usize) -> Self {
        Self {
            activation: vec![1; n],
        }
    }

    pub fn from_activation(activation: Vec<u8>) -> Result<Self> {
        if let Some(pos) = activation.iter().position(|&a| a > 1) {
            return Err(Error::InvalidArgument(format!(
                "activation[{pos}] = {} is not binary",
                activation[pos]
            )));
        }
        Ok(Self { activation })
    }

    /// Exactly `round(rho * n)` active neurons placed uniformly at random.
    pub fn random(n: usize, rho: f64, seed: u64) -> Self {
        let m = ((rho.clamp(0.0, 1.0)) * n as f64).round() as usize;
        let mut activation = vec![0u8; n];
        let mut rng = rng::chacha(seed, rng::tag::INITIAL, 0);
        for i in sample(&mut rng, n, m.min(n)) {
            activation[i] = 1;
        }
        Self { activation }
    }

    pub fn len(&self) -> usize {
        self.activation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activation.is_empty()
    }

    pub fn activation(&self) -> &[u8] {
        &self.activation
    }


    pub fn active_count(&self) -> usize {
        self.activation.iter().map(|&a| a as usize).sum()
    }

    pub fn is_all_off(&self) -> bool {
        self.activation.iter().all(|&a| a == 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    eps: f64,
}

impl SimParams {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "activation noise eps = {eps} must lie in (0, 0.5)"
            )));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// Precomputed comparison thresholds for one value of ε.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Thresholds {
    follow: u64,
    defy: u64,
}

impl Thresholds {
    pub(crate) fn new(params: SimParams) -> Self {
        Self {
            follow: probability_threshold(1.0 - params.eps),
            defy: probability_threshold(params.eps),
        }
    }
}

/// σ_i, the number of active neighbors of `i`.
#[inline]
pub fn active_neighbor_count(net: &Network, state: &MicroState, i: usize) -> usize {
    net.neighbors(i)
        .iter()
        .map(|&j| state.activation[j as usize] as usize)
        .sum()
}

/// Probability that neuron `i` is active after one tick.
pub fn activation_probability(degree: usize, sigma: usize, active: bool, eps: f64) -> f64 {
    if 2 * sigma > degree {
        1.0 - eps
    } else if sigma >= 1 || active {
        eps
    } else {
        0.0
    }
}

#[inline]
fn next_value(degree: usize, sigma: u32, active: u8, u: u32, th: Thresholds) -> u8 {
    let t = if 2 * sigma as usize > degree {
        th.follow
    } else if sigma >= 1 || active == 1 {
        th.defy
    } else {
        0
    };
    ((u as u64) < t) as u8
}

/// One synchronous update written into `next`, drawing node `i`'s uniform
/// variate from `uniform(i)`.
pub(crate) fn step_with<F: Fn(usize) -> u32>(
    net: &Network,
    current: &[u8],
    th: Thresholds,
    uniform: F,
    next: &mut [u8],
) {
    for (i, out) in next.iter_mut().enumerate() {
        let nbrs = net.neighbors(i);
        let mut sigma = 0u32;
        for &j in nbrs {
            sigma += current[j as usize] as u32;
        }
        *out = next_value(nbrs.len(), sigma, current[i], uniform(i), th);
    }
}

/// Advances `state` by one synchronous tick, consuming one tick of `noise`.
pub fn step(net: &Network, state: &MicroState, params: SimParams, noise: &mut NoiseStream) -> MicroState {
    let mut next = vec![0u8; state.len()];
    step_with(net, &state.activation, Thresholds::new(params), |i| noise.draw(i), &mut next);
    noise.advance();
    MicroState { activation: next }
}

/// One synchronous tick using `uniforms[i]` as node `i`'s variate
/// (compared against `probability_threshold`).
pub fn step_with_variates(net: &Network, state: &MicroState, params: SimParams, uniforms: &[u32]) -> Result<MicroState> {
    for len in [state.len(), uniforms.len()] {
        if len != net.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: net.num_nodes(),
                got: len,
            });
        }
    }
    let mut next = vec![0u8; state.len()];
    step_with(net, &state.activation, Thresholds::new(params), |i| uniforms[i], &mut next);
    Ok(MicroState { activation: next })
}

/// Advances `state` in place by `num_steps` ticks, reusing `scratch`.
pub(crate) fn evolve_in_place(
    net: &Network,
    state: &mut Vec<u8>,
    scratch: &mut Vec<u8>,
    th: Thresholds,
    noise: &mut NoiseStream,
    num_steps: usize,
) {
    scratch.resize(state.len(), 0);
    for _ in 0..num_steps {
        step_with(net, state, th, |i| noise.draw(i), scratch);
        std::mem::swap(state, scratch);
        noise.advance();
        // all-off is absorbing
        if state.iter().all(|&a| a == 0) {
            break;
        }
    }
}

/// Per-tick observer for [`run`].
pub trait Recorder {
    fn record(&mut self, t: usize, net: &Network, state: &MicroState);
}

impl<F: FnMut(usize, &Network, &MicroState)> Recorder for F {
    fn record(&mut self, t: usize, net: &Network, state: &MicroState) {
        self(t, net, state)
    }
}

/// Applies [`step`] `num_steps` times, calling `recorder` on the initial state
/// and after every tick. Returns the final state.
pub fn run<R: Recorder + ?Sized>(
    net: &Network,
    state0: &MicroState,
    params: SimParams,
    num_steps: usize,
    noise: &mut NoiseStream,
    recorder: &mut R,
) -> Result<MicroState> {
    if state0.len() != net.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: net.num_nodes(),
            got: state0.len(),
        });
    }
    let th = Thresholds::new(params);
    let mut state = state0.clone();
    let mut scratch = vec![0u8; state.len()];
    recorder.record(0, net, &state);
    for t in 1..=num_steps {
        step_with(net, &state.activation, th, |i| noise.draw(i), &mut scratch);
        std::mem::swap(&mut state.activation, &mut scratch);
        noise.advance();
        recorder.record(t, net, &state);
    }
    Ok(state)
}

/// ρ, the fraction of active neurons.
pub fn total_density(state: &MicroState) -> f64 {
    if state.is_empty() {
        return 0.0;
    }
    state.active_count() as f64 / state.len() as f64
}

/// Records `t, rho, d_norm` and optionally the per-degree densities d_k
/// (fraction of all neurons that are active and of degree k).
#[derive(Clone, Debug, Default)]
pub struct DensityRecorder {
    per_degree: Option<Vec<usize>>,
    pub rows: Vec<DensityRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityRow {
    pub t: usize,
    pub rho: f64,
    pub d_norm: f64,
    pub d: Vec<f64>,
}

impl DensityRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also records d_k for every degree `k` in `degrees`.
    pub fn with_degrees(degrees: Vec<usize>) -> Self {
        Self {
            per_degree: Some(degrees),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t,rho,d_norm")?;
        if let Some(ks) = &self.per_degree {
            for k in ks {
                write!(w, ",d_{k}")?;
            }
        }
        writeln!(w)?;
        for row in &self.rows {
            write!(w, "{},{},{}", row.t, row.rho, row.d_norm)?;
            for v in &row.d {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl Recorder for DensityRecorder {
    fn record(&mut self, t: usize, net: &Network, state: &MicroState) {
        let n = net.num_nodes() as f64;
        let mut d_norm = 0.0;
        for nodes in net.degree_classes().values() {
            let active: usize = nodes.iter().map(|&i| state.activation[i as usize] as usize).sum();
            d_norm += active as f64 / n;
        }
        let d = match &self.per_degree {
            Some(ks) => ks
                .iter()
                .map(|k| {
                    net.degree_classes().get(k).map_or(0.0, |nodes| {
                        nodes.iter().map(|&i| state.activation[i as usize] as f64).sum::<f64>() / n
                    })
                })
                .collect(),
            None => Vec::new(),
        };
        self.rows.push(DensityRow {
            t,
            rho: total_density(state),
            d_norm,
            d,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;

    fn complete(n: usize) -> Network {
        generate_er(n, 1.0, 0).unwrap()
    }

    #[test]
    fn params_range() {
        assert!(SimParams::new(0.0).is_err());
        assert!(SimParams::new(0.5).is_err());
        assert!(SimParams::new(0.2).is_ok());
    }

    #[test]
    fn neighbor_counts() {
        let net = complete(4);
        let off = MicroState::all_off(4);
        assert_eq!(active_neighbor_count(&net, &off, 2), 0);
        let one = MicroState::from_activation(vec![0, 1, 0, 0]).unwrap();
        assert_eq!(active_neighbor_count(&net, &one, 1), 0);
        for i in [0, 2, 3] {
            assert_eq!(active_neighbor_count(&net, &one, i), 1);
        }
    }

    #[test]
    fn rule_table_configurations() {
        // node 0 with nine neighbors, six of them active
        let edges: Vec<_> = (1..=9).map(|j| (0, j)).collect();
        let net = Network::from_edges(10, &edges, 0.0, 0).unwrap();
        let mut a = vec![0u8; 10];
        a[1..=6].fill(1);
        let s = MicroState::from_activation(a).unwrap();
        assert_eq!(active_neighbor_count(&net, &s, 0), 6);
        assert_eq!(activation_probability(9, 6, false, 0.1), 0.9);
        // active neuron of degree five with one active neighbor: P(off) = 1 - eps
        assert!((1.0 - activation_probability(5, 1, true, 0.1) - 0.9).abs() < 1e-15);
        // ties fall in the minority branch
        assert_eq!(activation_probability(4, 2, false, 0.1), 0.1);
        assert_eq!(activation_probability(0, 0, true, 0.2), 0.2);
        assert_eq!(activation_probability(3, 0, false, 0.2), 0.0);
    }

    #[test]
    fn binary_validation() {
        assert!(MicroState::from_activation(vec![0, 2]).is_err());
    }

    #[test]
    fn all_off_is_absorbing() {
        let net = generate_er(300, 0.03, 5).unwrap();
        let params = SimParams::new(0.3).unwrap();
        let mut noise = NoiseStream::new(9, 300);
        let mut s = MicroState::all_off(300);
        for _ in 0..1000 {
            s = step(&net, &s, params, &mut noise);
        }
        assert!(s.is_all_off());
    }

    #[test]
    fn isolated_active_node_decays() {
        // single isolated node: stays on with probability eps per tick, off is absorbing
        let net = generate_er(1, 0.0, 0).unwrap();
        let params = SimParams::new(0.25).unwrap();
        let trials = 200_000;
        let mut survived = 0;
        let mut survived_two = 0;
        for trial in 0..trials {
            let mut noise = NoiseStream::new(trial as u64, 1);
            let s1 = step(&net, &MicroState::all_on(1), params, &mut noise);
            if !s1.is_all_off() {
                survived += 1;
            }
            let s2 = step(&net, &s1, params, &mut noise);
            if !s2.is_all_off() {
                survived_two += 1;
            }
        }
        let p1 = survived as f64 / trials as f64;
        let p2 = survived_two as f64 / trials as f64;
        let se = (0.25f64 * 0.75 / trials as f64).sqrt();
        assert!((p1 - 0.25).abs() < 4.0 * se, "{p1}");
        assert!((p2 - 0.0625).abs() < 4.0 * (0.0625f64 * 0.9375 / trials as f64).sqrt(), "{p2}");
    }

    #[test]
    fn run_with_zero_steps() {
        let net = generate_er(50, 0.1, 1).unwrap();
        let s0 = MicroState::random(50, 0.4, 3);
        let mut rec = DensityRecorder::new();
        let out = run(&net, &s0, SimParams::new(0.1).unwrap(), 0, &mut NoiseStream::new(1, 50), &mut rec).unwrap();
        assert_eq!(out, s0);
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.rows[0].t, 0);
        assert!((rec.rows[0].rho - 0.4).abs() < 1e-12);
        assert!((rec.rows[0].d_norm - rec.rows[0].rho).abs() < 1e-12);
    }

    #[test]
    fn densities() {
        assert_eq!(total_density(&MicroState::all_on(7)), 1.0);
        assert_eq!(total_density(&MicroState::all_off(7)), 0.0);
        let s = MicroState::from_activation(vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        assert!((total_density(&s) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let net = complete(3);
        let mut rec = DensityRecorder::with_degrees(vec![2]);
        rec.record(0, &net, &MicroState::all_on(3));
        let mut out = Vec::new();
        rec.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,rho,d_norm,d_2\n0,1,1,1\n");
    }
}
