//! Experiment configuration: a flat TOML document with optional `[measure]`,
//! `[stopping]`, and `[lattice]` tables. Unknown keys are rejected and all
//! numeric fields are range-checked before an experiment starts.

use hmlab_core::corona::StoppingConfig;
use hmlab_core::generate;
use hmlab_core::measure::PointMeasure;
use serde::Deserialize;

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
            ConfigError::Invalid(e) => write!(f, "invalid config: {e}"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// segment | square-boundary | circle | two-cluster | sphere-shell |
    /// segment-plus-cluster | csv | json
    pub kind: String,
    pub atoms: Option<usize>,
    pub path: Option<String>,
    /// segment endpoints (defaults [0,0] -> [1,0]) and total mass
    pub from: Option<[f64; 2]>,
    pub to: Option<[f64; 2]>,
    pub total_mass: Option<f64>,
    /// two-cluster / segment-plus-cluster parameters
    pub cluster_width: Option<f64>,
    pub separation: Option<f64>,
    pub cluster_center: Option<f64>,
    pub cluster_mass: Option<f64>,
    pub cluster_atoms: Option<usize>,
    /// circle / sphere radius
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingToml {
    pub a: Option<f64>,
    pub eps: Option<f64>,
    pub eps_prime: Option<f64>,
    pub eta: Option<f64>,
    pub tau: Option<f64>,
    pub lambda0: Option<f64>,
    pub delta0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeToml {
    pub c0: Option<f64>,
    pub a0: Option<f64>,
    pub k0: Option<i64>,
    pub k_max: Option<i64>,
    /// Parameters of the lattice built on the harmonic-measure sample; the
    /// sample's dynamic range is narrow, so it defaults to a finer ladder
    /// than the mu lattice.
    pub omega_c0: Option<f64>,
    pub omega_a0: Option<f64>,
    pub omega_k_max: Option<i64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    pub walks: Option<u64>,
    pub shell_eps: Option<f64>,
    pub output_dir: Option<String>,
    pub domain: Option<String>,
    pub pole: Option<Vec<f64>>,
    pub boundary_point: Option<Vec<f64>>,
    pub inner_radius: Option<f64>,
    pub pieces: Option<usize>,
    pub n_poles: Option<usize>,
    pub eps_grid: Option<Vec<f64>>,
    pub norm_sizes: Option<Vec<usize>>,
    pub measure: Option<MeasureConfig>,
    pub stopping: Option<StoppingToml>,
    pub lattice: Option<LatticeToml>,
}

#[derive(Debug, Clone, Copy)]
pub struct LatticeParams {
    pub c0: f64,
    pub a0: f64,
    pub k0: i64,
    pub k_max: i64,
}

impl ExperimentConfig {
    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates a config from an in-memory TOML string.
    pub fn from_str_validated(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Some(w) = self.walks {
            if w == 0 || w > 100_000_000 {
                return bad(format!("walks = {w} outside [1, 1e8]"));
            }
        }
        if let Some(e) = self.shell_eps {
            if !(e > 0.0 && e < 0.1) {
                return bad(format!("shell_eps = {e} outside (0, 0.1)"));
            }
        }
        if let Some(r) = self.inner_radius {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("inner_radius = {r} outside (0, 1)"));
            }
        }
        if let Some(p) = self.pieces {
            if p == 0 || p > 4096 {
                return bad(format!("pieces = {p} outside [1, 4096]"));
            }
        }
        if let Some(g) = &self.eps_grid {
            if g.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
                return bad("eps_grid entries must lie in [0, 1]".into());
            }
        }
        // stopping parameters are validated by the core config
        self.stopping_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for lat in [self.lattice_params(), self.omega_lattice_params()] {
            if !(lat.c0 > 1.0) || !(lat.a0 > 1.0) {
                return bad("lattice C0 and A0 must exceed 1".into());
            }
            if lat.k_max < lat.k0 || lat.k_max - lat.k0 > 24 {
                return bad("lattice generation range must satisfy k0 <= k_max <= k0 + 24".into());
            }
        }
        if let Some(m) = &self.measure {
            match m.kind.as_str() {
                "segment" | "square-boundary" | "circle" | "two-cluster" | "sphere-shell"
                | "segment-plus-cluster" => {
                    if m.atoms == Some(0) {
                        return bad("measure.atoms must be positive".into());
                    }
                }
                "csv" | "json" => {
                    if m.path.is_none() {
                        return bad(format!("measure.kind = {} needs measure.path", m.kind));
                    }
                }
                other => return bad(format!("unknown measure.kind `{other}`")),
            }
        }
        Ok(())
    }

    pub fn walks(&self) -> u64 {
        self.walks.unwrap_or(100_000)
    }

    pub fn shell_eps(&self) -> f64 {
        self.shell_eps.unwrap_or(1e-4)
    }

    pub fn stopping_config(&self) -> StoppingConfig {
        let d = StoppingConfig::default();
        match &self.stopping {
            None => d,
            Some(s) => StoppingConfig {
                a: s.a.unwrap_or(d.a),
                eps: s.eps.unwrap_or(d.eps),
                eps_prime: s.eps_prime.unwrap_or(d.eps_prime),
                eta: s.eta.unwrap_or(d.eta),
                tau: s.tau.unwrap_or(d.tau),
                lambda0: s.lambda0.unwrap_or(d.lambda0),
                delta0: s.delta0.unwrap_or(d.delta0),
                c1: s.c1.unwrap_or(d.c1),
                c2: s.c2.unwrap_or(d.c2),
            },
        }
    }

    pub fn lattice_params(&self) -> LatticeParams {
        let l = self.lattice.as_ref();
        LatticeParams {
            c0: l.and_then(|l| l.c0).unwrap_or(128.0),
            a0: l.and_then(|l| l.a0).unwrap_or(256.0),
            k0: l.and_then(|l| l.k0).unwrap_or(0),
            k_max: l.and_then(|l| l.k_max).unwrap_or(6),
        }
    }

    /// Lattice defaults for corona trees: the stopping scales need a dense
    /// generation ladder, so A0 defaults to 8 instead of 256.
    pub fn corona_lattice_params(&self) -> LatticeParams {
        let l = self.lattice.as_ref();
        LatticeParams {
            c0: l.and_then(|l| l.c0).unwrap_or(128.0),
            a0: l.and_then(|l| l.a0).unwrap_or(8.0),
            k0: l.and_then(|l| l.k0).unwrap_or(0),
            k_max: l.and_then(|l| l.k_max).unwrap_or(8),
        }
    }

    pub fn omega_lattice_params(&self) -> LatticeParams {
        let l = self.lattice.as_ref();
        LatticeParams {
            c0: l.and_then(|l| l.omega_c0).unwrap_or(2.0),
            a0: l.and_then(|l| l.omega_a0).unwrap_or(8.0),
            k0: l.and_then(|l| l.k0).unwrap_or(0),
            k_max: l.and_then(|l| l.omega_k_max).unwrap_or(8),
        }
    }

    /// Instantiates the configured measure (or the given default kind).
    pub fn build_measure(&self, default_kind: &str) -> Result<PointMeasure, ConfigError> {
        let fallback = MeasureConfig {
            kind: default_kind.to_string(),
            atoms: None,
            path: None,
            from: None,
            to: None,
            total_mass: None,
            cluster_width: None,
            separation: None,
            cluster_center: None,
            cluster_mass: None,
            cluster_atoms: None,
            radius: None,
        };
        let m = self.measure.as_ref().unwrap_or(&fallback);
        let atoms = m.atoms.unwrap_or(1000);
        let mu = match m.kind.as_str() {
            "segment" => {
                let a = m.from.unwrap_or([0.0, 0.0]);
                let b = m.to.unwrap_or([1.0, 0.0]);
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                generate::segment_between(atoms, a, b, m.total_mass.unwrap_or(len))
            }
            "square-boundary" => {
                generate::square_boundary_measure(atoms / 4, m.radius.unwrap_or(1.0))
            }
            "circle" => generate::circle_boundary_measure(atoms, m.radius.unwrap_or(1.0)),
            "two-cluster" => generate::two_cluster_measure(
                atoms / 2,
                m.cluster_width.unwrap_or(0.01),
                m.separation.unwrap_or(1.0),
            ),
            "sphere-shell" => generate::sphere_shell_measure(atoms, m.radius.unwrap_or(1.0)),
            "segment-plus-cluster" => generate::segment_plus_cluster_measure(
                atoms,
                m.cluster_atoms.unwrap_or(atoms / 5),
                m.cluster_center.unwrap_or(0.3),
                m.cluster_width.unwrap_or(1e-4),
                m.cluster_mass.unwrap_or(0.5),
            ),
            "csv" => {
                let text = std::fs::read_to_string(m.path.as_ref().unwrap())
                    .map_err(ConfigError::Io)?;
                PointMeasure::from_csv(1, &text)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            "json" => {
                let text = std::fs::read_to_string(m.path.as_ref().unwrap())
                    .map_err(ConfigError::Io)?;
                PointMeasure::from_json(&text)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            other => return Err(ConfigError::Invalid(format!("unknown measure kind {other}"))),
        };
        Ok(mu)
    }
}
