//! Restriction and lifting between microscopic states and degree-resolved
//! densities, and the ensemble coarse timestepper Φ_T built from them.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::continuation::ParametrizedMap;
use crate::error::{Error, Result};
use crate::graph::{generate_er_coupled, Network};
use crate::micro::{evolve_in_place, MicroState, SimParams, Thresholds};
use crate::rng::{self, NoiseStream};

/// Default number of microscopic ticks per coarse step.
pub const DEFAULT_HORIZON: usize = 5;

/// Index range of the coarse unknowns.
///
/// An exact layout has one bin per degree present in a network. A pooled
/// layout covers a contiguous degree range and assigns degrees outside it to
/// the boundary bins, so that networks drawn at different connection
/// probabilities share one unknown vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeLayout {
    degrees: Vec<usize>,
    class_fraction: Vec<f64>,
    num_nodes: usize,
    pooled: bool,
}

impl DegreeLayout {
    /// One bin per non-empty degree class of `net`.
    pub fn from_network(net: &Network) -> Self {
        let n = net.num_nodes() as f64;
        let (degrees, class_fraction) = net
            .degree_classes()
            .iter()
            .map(|(&k, nodes)| (k, nodes.len() as f64 / n))
            .unzip();
        Self {
            degrees,
            class_fraction,
            num_nodes: net.num_nodes(),
            pooled: false,
        }
    }

    /// Pooled layout spanning the central Poisson(p_max (n − 1)) range that
    /// holds at least `mass` of the probability, with the tails folded into
    /// the end bins. Class fractions are the expected pooled masses at `p`.
    pub fn pooled_poisson(n: usize, p_max: f64, p: f64, mass: f64) -> Result<Self> {
        if !(p_max > 0.0 && p_max <= 1.0) || !(0.0..=p_max).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "pooled layout needs 0 <= p <= p_max <= 1, got p = {p}, p_max = {p_max}"
            )));
        }
        if !(0.0 < mass && mass < 1.0) {
            return Err(Error::InvalidArgument(format!("mass {mass} outside (0, 1)")));
        }
        let lambda = p_max * (n as f64 - 1.0);
        let tail = (1.0 - mass) / 2.0;
        let pmf = poisson_pmf_table(lambda, n);
        let mut cdf = 0.0;
        let mut k_lo = 0;
        for (k, &pk) in pmf.iter().enumerate() {
            if cdf + pk > tail {
                k_lo = k;
                break;
            }
            cdf += pk;
        }
        let mut upper = 0.0;
        let mut k_hi = pmf.len() - 1;
        for k in (0..pmf.len()).rev() {
            if upper + pmf[k] > tail {
                k_hi = k;
                break;
            }
            upper += pmf[k];
        }
        let k_hi = k_hi.max(k_lo);
        let degrees: Vec<usize> = (k_lo..=k_hi).collect();
        let mut layout = Self {
            class_fraction: vec![0.0; degrees.len()],
            degrees,
            num_nodes: n,
            pooled: true,
        };
        let at_p = poisson_pmf_table(p * (n as f64 - 1.0), n);
        for (k, &pk) in at_p.iter().enumerate() {
            let b = layout.bin_of(k).unwrap();
            layout.class_fraction[b] += pk;
        }
        Ok(layout)
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// |V(k)| / N for each bin.
    pub fn class_fraction(&self) -> &[f64] {
        &self.class_fraction
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn is_pooled(&self) -> bool {
        self.pooled
    }

    pub fn bin_of(&self, degree: usize) -> Option<usize> {
        if self.pooled {
            let lo = *self.degrees.first()?;
            let hi = *self.degrees.last()?;
            Some(degree.clamp(lo, hi) - lo)
        } else {
            self.degrees.binary_search(&degree).ok()
        }
    }

    /// Node ids of `net` grouped by bin of this layout.
    pub fn members(&self, net: &Network) -> Result<Vec<Vec<u32>>> {
        if net.num_nodes() != self.num_nodes {
            return Err(Error::LayoutMismatch(format!(
                "layout built for {} nodes, network has {}",
                self.num_nodes,
                net.num_nodes()
            )));
        }
        let mut members = vec![Vec::new(); self.len()];
        for (&k, nodes) in net.degree_classes() {
            let b = self.bin_of(k).ok_or_else(|| {
                Error::LayoutMismatch(format!("degree {k} is not part of the layout"))
            })?;
            members[b].extend_from_slice(nodes);
        }
        Ok(members)
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: len,
            });
        }
        Ok(())
    }
}

fn poisson_pmf_table(lambda: f64, n: usize) -> Vec<f64> {
    // enough terms to exhaust the mass but never more than the n − 1 possible neighbors
    let kmax = ((lambda + 12.0 * lambda.sqrt() + 20.0) as usize).min(n.saturating_sub(1));
    let mut out = Vec::with_capacity(kmax + 1);
    let mut log_pk = -lambda;
    for k in 0..=kmax {
        if k > 0 {
            log_pk += lambda.ln() - (k as f64).ln();
        }
        out.push(if lambda == 0.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            log_pk.exp()
        });
    }
    out
}

/// Degree-resolved densities d_k: the fraction of all neurons that are active
/// and belong to bin k.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseState {
    pub densities: Vec<f64>,
    pub layout: Arc<DegreeLayout>,
}

impl CoarseState {
    pub fn new(densities: Vec<f64>, layout: Arc<DegreeLayout>) -> Result<Self> {
        layout.check_dim(densities.len())?;
        Ok(Self { densities, layout })
    }

    pub fn zeros(layout: Arc<DegreeLayout>) -> Self {
        Self {
            densities: vec![0.0; layout.len()],
            layout,
        }
    }

    /// Every class active in the same proportion `rho`.
    pub fn uniform(layout: Arc<DegreeLayout>, rho: f64) -> Self {
        Self {
            densities: layout.class_fraction().iter().map(|f| f * rho).collect(),
            layout,
        }
    }

    /// ‖d‖₁, which equals the total density ρ.
    pub fn norm1(&self) -> f64 {
        self.densities.iter().map(|d| d.abs()).sum()
    }

    pub fn is_admissible(&self) -> bool {
        self.densities
            .iter()
            .zip(self.layout.class_fraction())
            .all(|(&d, &f)| (0.0..=f).contains(&d))
    }
}

fn class_counts(members: &[Vec<u32>], state: &[u8], counts: &mut [u64]) {
    for (c, nodes) in counts.iter_mut().zip(members) {
        *c += nodes.iter().map(|&i| state[i as usize] as u64).sum::<u64>();
    }
}

/// Restriction: per-realization d_k averaged over realizations, on the exact
/// layout of the first network.
pub fn restrict(states: &[MicroState], nets: &[&Network]) -> Result<CoarseState> {
    let first = nets
        .first()
        .ok_or_else(|| Error::InvalidArgument("restriction of an empty ensemble".into()))?;
    restrict_with_layout(Arc::new(DegreeLayout::from_network(first)), states, nets)
}

/// Restriction onto a given layout.
pub fn restrict_with_layout(
    layout: Arc<DegreeLayout>,
    states: &[MicroState],
    nets: &[&Network],
) -> Result<CoarseState> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("restriction of an empty ensemble".into()));
    }
    if states.len() != nets.len() {
        return Err(Error::DimensionMismatch {
            expected: nets.len(),
            got: states.len(),
        });
    }
    let mut counts = vec![0u64; layout.len()];
    for (state, net) in states.iter().zip(nets) {
        if state.len() != net.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: net.num_nodes(),
                got: state.len(),
            });
        }
        let members = layout.members(net)?;
        class_counts(&members, state.activation(), &mut counts);
    }
    let scale = 1.0 / (layout.num_nodes() as f64 * states.len() as f64);
    Ok(CoarseState {
        densities: counts.iter().map(|&c| c as f64 * scale).collect(),
        layout,
    })
}

/// Writes a lifted state into `out`, shuffling `members` in place.
///
/// The random stream consumed depends only on the class sizes, never on the
/// target densities, so two lifts of nearby targets from equal generator
/// states activate nested neuron sets.
fn lift_into(members: &mut [Vec<u32>], target: &[f64], n: usize, rng: &mut ChaCha8Rng, out: &mut [u8]) {
    out.fill(0);
    let nf = n as f64;
    for (nodes, &d) in members.iter_mut().zip(target) {
        let size = nodes.len();
        let x = (d.max(0.0) * nf).min(size as f64);
        let base = x.floor();
        let extra = rng.gen::<f64>() < x - base;
        let m = (base as usize + extra as usize).min(size);
        nodes.shuffle(rng);
        for &i in &nodes[..m] {
            out[i as usize] = 1;
        }
    }
}

/// Lifting: a microscopic state on `net` whose expected restriction is `target`.
///
/// In each bin `floor(d_k N)` neurons plus a Bernoulli(frac(d_k N)) extra
/// one are activated, chosen uniformly without replacement. Densities
/// outside the admissible box are clipped.
pub fn lift(target: &CoarseState, net: &Network, rng: &mut ChaCha8Rng) -> Result<MicroState> {
    let mut members = target.layout.members(net)?;
    let mut out = vec![0u8; net.num_nodes()];
    lift_into(&mut members, &target.densities, net.num_nodes(), rng, &mut out);
    MicroState::from_activation(out)
}

/// How each realization's network is obtained.
#[derive(Clone, Debug)]
pub enum NetworkMode {
    /// All realizations share one network.
    Fixed(Arc<Network>),
    /// Every realization draws its own G(n, p). Networks are thinned from
    /// G(n, `coupling_ref`) so that nearby values of p share most edges.
    Regenerate { n: usize, p: f64, coupling_ref: f64 },
}

#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub n_copies: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub network_mode: NetworkMode,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_copies == 0 {
            return Err(Error::InvalidArgument("n_copies must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if let NetworkMode::Regenerate { n, p, coupling_ref } = self.network_mode {
            if n == 0 || !(0.0..=1.0).contains(&p) || !(p <= coupling_ref && coupling_ref <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "regenerate mode needs n >= 1 and 0 <= p <= coupling_ref <= 1 (n = {n}, p = {p}, ref = {coupling_ref})"
                )));
            }
        }
        Ok(())
    }
}

/// Which model parameter the timestepper exposes to continuation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Eps,
    P,
}

/// The coarse timestepper Φ_T: lift into `n_copies` realizations, evolve each
/// `horizon` ticks, restrict by ensemble average. A pure function of its
/// inputs and `master_seed`.
#[derive(Clone, Debug)]
pub struct CoarseTimestepper {
    layout: Arc<DegreeLayout>,
    spec: EnsembleSpec,
    eps: f64,
    parameter: Parameter,
    fixed_members: Option<Arc<Vec<Vec<u32>>>>,
}

struct Scratch {
    members: Vec<Vec<u32>>,
    state: Vec<u8>,
    next: Vec<u8>,
}

impl CoarseTimestepper {
    /// Timestepper on a shared network, using the exact degree layout.
    pub fn fixed(net: Arc<Network>, eps: f64, n_copies: usize, horizon: usize, master_seed: u64) -> Result<Self> {
        let layout = Arc::new(DegreeLayout::from_network(&net));
        Self::new(
            layout,
            EnsembleSpec {
                n_copies,
                horizon,
                master_seed,
                network_mode: NetworkMode::Fixed(net),
            },
            eps,
            Parameter::Eps,
        )
    }

    pub fn new(layout: Arc<DegreeLayout>, spec: EnsembleSpec, eps: f64, parameter: Parameter) -> Result<Self> {
        spec.validate()?;
        SimParams::new(eps)?;
        let fixed_members = match &spec.network_mode {
            NetworkMode::Fixed(net) => Some(Arc::new(layout.members(net)?)),
            NetworkMode::Regenerate { n, .. } => {
                if !layout.is_pooled() {
                    return Err(Error::LayoutMismatch(
                        "regenerated networks need a pooled layout".into(),
                    ));
                }
                if layout.num_nodes() != *n {
                    return Err(Error::LayoutMismatch(format!(
                        "layout built for {} nodes, ensemble uses {n}",
                        layout.num_nodes()
                    )));
                }
                None
            }
        };
        Ok(Self {
            layout,
            spec,
            eps,
            parameter,
            fixed_members,
        })
    }

    pub fn layout(&self) -> &Arc<DegreeLayout> {
        &self.layout
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn parameter(&self) -> Parameter {
        self.parameter
    }

    /// Current value of the exposed parameter.
    pub fn parameter_value(&self) -> f64 {
        match self.parameter {
            Parameter::Eps => self.eps,
            Parameter::P => match self.spec.network_mode {
                NetworkMode::Fixed(ref net) => net.connection_probability(),
                NetworkMode::Regenerate { p, .. } => p,
            },
        }
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        let mut out = self.clone();
        out.spec.master_seed = master_seed;
        out
    }

    pub fn with_copies(&self, n_copies: usize) -> Result<Self> {
        let mut out = self.clone();
        out.spec.n_copies = n_copies;
        out.spec.validate()?;
        Ok(out)
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        let mut out = self.clone();
        out.spec.horizon = horizon;
        out.spec.validate()?;
        Ok(out)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        SimParams::new(eps)?;
        let mut out = self.clone();
        out.eps = eps;
        Ok(out)
    }

    fn resolve(&self, param: f64) -> Result<(f64, f64)> {
        match self.parameter {
            Parameter::Eps => {
                SimParams::new(param)?;
                Ok((param, self.parameter_value_p()))
            }
            Parameter::P => {
                if !(0.0..=1.0).contains(&param) {
                    return Err(Error::InvalidArgument(format!("p = {param} outside [0, 1]")));
                }
                Ok((self.eps, param))
            }
        }
    }

    fn parameter_value_p(&self) -> f64 {
        match self.spec.network_mode {
            NetworkMode::Fixed(ref net) => net.connection_probability(),
            NetworkMode::Regenerate { p, .. } => p,
        }
    }

    fn realization_network(&self, copy: usize, p: f64) -> Result<Option<Network>> {
        match self.spec.network_mode {
            NetworkMode::Fixed(_) => Ok(None),
            NetworkMode::Regenerate { n, coupling_ref, .. } => {
                let seed = rng::derive_seed(self.spec.master_seed, rng::tag::NETWORK, copy as u64);
                let p_ref = coupling_ref.max(p);
                Ok(Some(generate_er_coupled(n, p, p_ref, seed)?))
            }
        }
    }

    /// Lifts, evolves and restricts one realization, returning its active
    /// counts per bin.
    fn run_copy(&self, copy: usize, target: &[f64], eps: f64, p: f64, horizon: usize, scratch: &mut Scratch) -> Result<Vec<u64>> {
        let own;
        let net: &Network = match (&self.spec.network_mode, self.realization_network(copy, p)?) {
            (NetworkMode::Fixed(net), _) => net,
            (_, Some(net)) => {
                own = net;
                &own
            }
            _ => unreachable!(),
        };
        match &self.fixed_members {
            Some(m) => {
                scratch.members.clone_from(m);
            }
            None => scratch.members = self.layout.members(net)?,
        }
        let n = net.num_nodes();
        scratch.state.resize(n, 0);
        let mut lift_rng = rng::chacha(self.spec.master_seed, rng::tag::LIFT, copy as u64);
        lift_into(&mut scratch.members, target, n, &mut lift_rng, &mut scratch.state);
        let mut noise = NoiseStream::new(
            rng::derive_seed(self.spec.master_seed, rng::tag::DYNAMICS, copy as u64),
            n,
        );
        let th = Thresholds::new(SimParams::new(eps)?);
        evolve_in_place(net, &mut scratch.state, &mut scratch.next, th, &mut noise, horizon);
        let mut counts = vec![0u64; self.layout.len()];
        class_counts(&scratch.members, &scratch.state, &mut counts);
        Ok(counts)
    }

    fn all_counts(&self, target: &[f64], param: f64, horizon: usize, copies: usize) -> Result<Vec<Vec<u64>>> {
        self.layout.check_dim(target.len())?;
        let (eps, p) = self.resolve(param)?;
        (0..copies)
            .into_par_iter()
            .map_init(
                || Scratch {
                    members: Vec::new(),
                    state: Vec::new(),
                    next: Vec::new(),
                },
                |scratch, c| self.run_copy(c, target, eps, p, horizon, scratch),
            )
            .collect()
    }

    /// Φ_T(d) at parameter value `param`.
    pub fn advance(&self, d: &[f64], param: f64) -> Result<Vec<f64>> {
        let per_copy = self.all_counts(d, param, self.spec.horizon, self.spec.n_copies)?;
        let mut total = vec![0u64; self.layout.len()];
        for counts in &per_copy {
            for (t, c) in total.iter_mut().zip(counts) {
                *t += c;
            }
        }
        let scale = 1.0 / (self.layout.num_nodes() as f64 * self.spec.n_copies as f64);
        Ok(total.iter().map(|&c| c as f64 * scale).collect())
    }

    /// Φ_T at the configured parameter value.
    pub fn coarse_state(&self, d: &CoarseState) -> Result<CoarseState> {
        let out = self.advance(&d.densities, self.parameter_value())?;
        CoarseState::new(out, self.layout.clone())
    }

    /// Individually restricted realizations after `horizon` ticks, in
    /// realization order.
    pub fn realizations(&self, d: &[f64], param: f64, horizon: usize, copies: usize) -> Result<Vec<Vec<f64>>> {
        let scale = 1.0 / self.layout.num_nodes() as f64;
        Ok(self
            .all_counts(d, param, horizon, copies)?
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f64 * scale).collect())
            .collect())
    }

    /// Estimated 2-norm of the sampling noise of Φ_T near `d`.
    pub fn noise_floor(&self, d: &[f64]) -> f64 {
        noise_floor(d, self.layout.num_nodes(), self.spec.n_copies)
    }
}

/// sqrt(Σ_k d_k (1 − d_k) / (N · N_copies)).
pub fn noise_floor(d: &[f64], n: usize, n_copies: usize) -> f64 {
    let s: f64 = d.iter().map(|&x| x.clamp(0.0, 1.0) * (1.0 - x.clamp(0.0, 1.0))).sum();
    (s / (n as f64 * n_copies as f64)).sqrt()
}

/// Φ_T(d) for the configured ε and ensemble.
pub fn coarse_timestepper(d: &CoarseState, eps: f64, spec: &EnsembleSpec) -> Result<CoarseState> {
    let stepper = match &spec.network_mode {
        NetworkMode::Fixed(net) => {
            if *d.layout != DegreeLayout::from_network(net) {
                return Err(Error::LayoutMismatch(
                    "state layout does not match the network's degree classes".into(),
                ));
            }
            CoarseTimestepper::new(d.layout.clone(), spec.clone(), eps, Parameter::Eps)?
        }
        NetworkMode::Regenerate { .. } => {
            CoarseTimestepper::new(d.layout.clone(), spec.clone(), eps, Parameter::Eps)?
        }
    };
    let out = stepper.advance(&d.densities, eps)?;
    CoarseState::new(out, d.layout.clone())
}

impl ParametrizedMap for CoarseTimestepper {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn apply(&self, u: &[f64], param: f64) -> Result<Vec<f64>> {
        self.advance(u, param)
    }

    fn upper_bounds(&self) -> Option<Vec<f64>> {
        Some(self.layout.class_fraction().to_vec())
    }
}
