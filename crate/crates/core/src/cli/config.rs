//! TOML experiment configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coarse::Parameter;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub rare: RareConfig,
    #[serde(default)]
    pub meanfield: MeanfieldConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    /// Sampled node pairs for the mean path length in `net-stats`.
    #[serde(default = "default_path_samples")]
    pub path_samples: usize,
}

fn default_path_samples() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub eps: f64,
    pub steps: usize,
    /// One trajectory per initial density.
    pub initial_densities: Vec<f64>,
    pub initial_seed: u64,
    pub noise_seed: u64,
    pub per_degree: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            steps: 2000,
            initial_densities: vec![1.0],
            initial_seed: 1,
            noise_seed: 2,
            per_degree: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkModeName {
    Fixed,
    Regenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_copies: usize,
    #[serde(rename = "horizon_T")]
    pub horizon: usize,
    pub master_seed: u64,
    pub network_mode: NetworkModeName,
    /// Reference probability the regenerated networks are thinned from.
    pub coupling_ref: Option<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_copies: 2000,
            horizon: 5,
            master_seed: 1,
            network_mode: NetworkModeName::Fixed,
            coupling_ref: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroBranchConfig {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub bisection_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    pub param_name: Parameter,
    /// Parameter values of the two seed equilibria.
    pub seed_params: Option<[f64; 2]>,
    /// Temporal simulation producing the seed guess.
    pub seed_density: f64,
    pub seed_steps: usize,
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub n_points: usize,
    /// Defaults to max(5e-4, 3 × noise floor) at the first seed.
    pub newton_tol: Option<f64>,
    pub max_newton: usize,
    pub gmres_tol: f64,
    pub fd_eps: f64,
    pub arnoldi_m: usize,
    pub n_eigs: usize,
    /// Defaults to 1 for ε and 1e-3 for p.
    pub param_scale: Option<f64>,
    pub param_min: Option<f64>,
    pub param_max: Option<f64>,
    /// Stop once ‖d‖₁ falls below this.
    pub stop_norm: f64,
    /// Stop this many points after the first turning point.
    pub stop_after_fold: Option<usize>,
    pub stability: bool,
    pub zero_branch: Option<ZeroBranchConfig>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            param_name: Parameter::Eps,
            seed_params: None,
            seed_density: 1.0,
            seed_steps: 500,
            ds0: 0.01,
            ds_min: 1e-3,
            ds_max: 0.03,
            n_points: 40,
            newton_tol: None,
            max_newton: 8,
            gmres_tol: 1e-3,
            fd_eps: 1e-2,
            arnoldi_m: 10,
            n_eigs: 6,
            param_scale: None,
            param_min: None,
            param_max: None,
            stop_norm: 0.02,
            stop_after_fold: None,
            stability: true,
            zero_branch: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RareMode {
    Network,
    Ou,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RareConfig {
    pub mode: RareMode,
    pub psi_grid_n: usize,
    pub tau: usize,
    pub n_real: usize,
    pub seed: u64,
    /// Grid extent past the saddle, in node–saddle lengths.
    pub beyond_saddle: f64,
    /// Grid extent past the node on the far side, in node–saddle lengths.
    pub beyond_node: f64,
    /// Continuation points allowed while searching for the saddle.
    pub saddle_search_points: usize,
    pub first_passage_seeds: usize,
    pub max_passage_steps: usize,
    pub plateau_steps: usize,
    pub burn_in: usize,
    pub ou_a: f64,
    pub ou_diffusion: f64,
    /// Barrier height that places the OU target point.
    pub ou_barrier: f64,
}

impl Default for RareConfig {
    fn default() -> Self {
        Self {
            mode: RareMode::Network,
            psi_grid_n: 41,
            tau: 7,
            n_real: 4000,
            seed: 11,
            beyond_saddle: 0.2,
            beyond_node: 0.6,
            saddle_search_points: 30,
            first_passage_seeds: 0,
            max_passage_steps: 2_000_000,
            plateau_steps: 0,
            burn_in: 1000,
            ou_a: 0.05,
            ou_diffusion: 1e-3,
            ou_barrier: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanfieldConfig {
    /// Defaults to the even integer nearest to p (n − 1).
    pub kbar: Option<usize>,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_points: usize,
    pub grid_n: usize,
    /// Branch JSON written by `continue`, for the comparison report.
    pub compare_branch: Option<PathBuf>,
}

impl Default for MeanfieldConfig {
    fn default() -> Self {
        Self {
            kbar: None,
            eps_min: 0.005,
            eps_max: 0.495,
            eps_points: 99,
            grid_n: 2000,
            compare_branch: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

impl OutputConfig {
    pub fn csv(&self) -> bool {
        self.formats.iter().any(|f| f == "csv")
    }

    pub fn json(&self) -> bool {
        self.formats.iter().any(|f| f == "json")
    }
}

fn check(ok: bool, key: &str, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(format!("{key}: {msg}"))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Range checks; messages name the offending key.
    pub fn validate(&self) -> Result<(), String> {
        let n = &self.network;
        check(n.n >= 2, "network.n", format!("{} must be at least 2", n.n))?;
        check((0.0..=1.0).contains(&n.p), "network.p", format!("{} outside [0, 1]", n.p))?;
        let d = &self.dynamics;
        check(d.eps > 0.0 && d.eps < 0.5, "dynamics.eps", format!("{} outside (0, 0.5)", d.eps))?;
        for &r in &d.initial_densities {
            check((0.0..=1.0).contains(&r), "dynamics.initial_densities", format!("{r} outside [0, 1]"))?;
        }
        let e = &self.ensemble;
        check(e.n_copies >= 1, "ensemble.n_copies", "must be at least 1".into())?;
        check(e.horizon >= 1, "ensemble.horizon_T", "must be at least 1".into())?;
        if let Some(r) = e.coupling_ref {
            check(r >= n.p && r <= 1.0, "ensemble.coupling_ref", format!("{r} outside [network.p, 1]"))?;
        }
        let c = &self.continuation;
        check(c.ds_min > 0.0 && c.ds_min <= c.ds_max, "continuation.ds_min", "need 0 < ds_min <= ds_max".into())?;
        check(c.ds0 > 0.0, "continuation.ds0", "must be positive".into())?;
        check(c.n_points >= 3, "continuation.n_points", "must be at least 3".into())?;
        check(c.fd_eps > 0.0, "continuation.fd_eps", "must be positive".into())?;
        check(c.gmres_tol > 0.0, "continuation.gmres_tol", "must be positive".into())?;
        check(c.arnoldi_m >= 1 && c.n_eigs >= 1, "continuation.arnoldi_m", "arnoldi_m and n_eigs must be positive".into())?;
        check((0.0..=1.0).contains(&c.seed_density), "continuation.seed_density", "outside [0, 1]".into())?;
        if let Some(t) = c.newton_tol {
            check(t > 0.0, "continuation.newton_tol", "must be positive".into())?;
        }
        if let Some(s) = c.param_scale {
            check(s > 0.0, "continuation.param_scale", "must be positive".into())?;
        }
        if let Some([a, b]) = c.seed_params {
            check(a != b, "continuation.seed_params", "seed parameters coincide".into())?;
            if c.param_name == Parameter::Eps {
                for v in [a, b] {
                    check(v > 0.0 && v < 0.5, "continuation.seed_params", format!("eps {v} outside (0, 0.5)"))?;
                }
            } else {
                for v in [a, b] {
                    check(v > 0.0 && v <= 1.0, "continuation.seed_params", format!("p {v} outside (0, 1]"))?;
                }
            }
        }
        if c.param_name == Parameter::P {
            check(
                e.network_mode == NetworkModeName::Regenerate,
                "ensemble.network_mode",
                "continuation in p needs network_mode = \"regenerate\"".into(),
            )?;
        }
        if let Some(z) = &c.zero_branch {
            check(z.from < z.to, "continuation.zero_branch", "need from < to".into())?;
            check(z.points >= 3, "continuation.zero_branch.points", "must be at least 3".into())?;
            check(z.bisection_tol > 0.0, "continuation.zero_branch.bisection_tol", "must be positive".into())?;
        }
        let r = &self.rare;
        check(r.tau >= 1, "rare.tau", "must be at least 1".into())?;
        check(r.n_real >= 100, "rare.n_real", "must be at least 100".into())?;
        check(r.psi_grid_n >= 5, "rare.psi_grid_n", "must be at least 5".into())?;
        check(r.beyond_saddle >= 0.0 && r.beyond_node >= 0.0, "rare.beyond_saddle", "grid margins must be non-negative".into())?;
        check(r.ou_a > 0.0 && r.ou_diffusion > 0.0 && r.ou_barrier > 0.0, "rare.ou_a", "OU parameters must be positive".into())?;
        let m = &self.meanfield;
        check(
            m.eps_min > 0.0 && m.eps_min < m.eps_max && m.eps_max < 0.5,
            "meanfield.eps_min",
            "need 0 < eps_min < eps_max < 0.5".into(),
        )?;
        check(m.eps_points >= 2, "meanfield.eps_points", "must be at least 2".into())?;
        check(m.grid_n >= 100, "meanfield.grid_n", "must be at least 100".into())?;
        if let Some(k) = m.kbar {
            check(k > 0 && k % 2 == 0 && k <= 64, "meanfield.kbar", format!("{k} must be even in 2..=64"))?;
        }
        for f in &self.output.formats {
            check(f == "csv" || f == "json", "output.formats", format!("unknown format {f:?}"))?;
        }
        Ok(())
    }

    pub fn param_scale(&self) -> f64 {
        self.continuation.param_scale.unwrap_or(match self.continuation.param_name {
            Parameter::Eps => 1.0,
            Parameter::P => 1e-3,
        })
    }
}
