//! The experiment registry. Each experiment consumes a validated config and
//! produces a report bundle; all stochastic quantities carry their seed,
//! sample size, and standard error.

mod corona_ops;
mod measure_ops;
mod validate;

use crate::config::ExperimentConfig;
use crate::report::ReportBundle;
use hmlab_core::corona::{
    attach_mu, classify_bad, make_b0, BadCubeReport, CoronaError, StoppingConfig,
};
use hmlab_core::harmonic::{
    builtin_domain, corkscrew_point, sample_exits, Domain, HarmonicError,
};
use hmlab_core::lattice::{build_lattice, DMLattice, LatticeError};
use hmlab_core::measure::{thin_ball_window, Ball, MeasureError, PointMeasure};
use hmlab_core::rng::splitmix64;

#[derive(Debug)]
pub enum ExperimentError {
    /// A checked hypothesis failed; exit code 2.
    Precondition(String),
    /// Any other runtime failure; exit code 1.
    Failed(String),
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::Precondition(m) => write!(f, "precondition failed: {m}"),
            ExperimentError::Failed(m) => write!(f, "experiment failed: {m}"),
        }
    }
}

impl From<CoronaError> for ExperimentError {
    fn from(e: CoronaError) -> Self {
        match e {
            CoronaError::PreconditionFailed { .. }
            | CoronaError::EmptyG0
            | CoronaError::BadConfig(_) => ExperimentError::Precondition(e.to_string()),
            CoronaError::Measure(MeasureError::NoThinBall { .. }) => {
                ExperimentError::Precondition(e.to_string())
            }
            other => ExperimentError::Failed(other.to_string()),
        }
    }
}

impl From<HarmonicError> for ExperimentError {
    fn from(e: HarmonicError) -> Self {
        match e {
            HarmonicError::PoleTooClose { .. }
            | HarmonicError::OutsideDomain
            | HarmonicError::NoInteriorPoint => ExperimentError::Precondition(e.to_string()),
            other => ExperimentError::Failed(other.to_string()),
        }
    }
}

impl From<MeasureError> for ExperimentError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::NoThinBall { .. } => ExperimentError::Precondition(e.to_string()),
            other => ExperimentError::Failed(other.to_string()),
        }
    }
}

impl From<LatticeError> for ExperimentError {
    fn from(e: LatticeError) -> Self {
        ExperimentError::Failed(e.to_string())
    }
}

/// Names and one-line descriptions of every registered experiment.
pub fn registry() -> Vec<(&'static str, &'static str)> {
    vec![
        ("lattice-audit", "build a lattice on the configured measure and audit every structural invariant"),
        ("wos-validate", "walk-on-spheres exit law against uniformity and the analytic Poisson kernel"),
        ("green-check", "Green function estimates against the analytic disk formula, exterior zero, symmetry, and the depth scan"),
        ("pole-swap", "normalized harmonic-measure ratios under a change of pole, with the slit-disk negative control"),
        ("bourgain", "lower bound on omega(B) against mu(delta B)/(delta r)^n across sampled poles and scales"),
        ("bharnack", "boundary Harnack oscillation of u/v on probe points, with the slit-disk negative control"),
        ("ainfty", "worst-case eps' of the A-infinity comparison via the fractional knapsack scan"),
        ("bad-cubes", "good/bad cube classification of the exit sample against the boundary measure"),
        ("key-lemma", "normalized truncated transform on the good probe family, with a walk-doubling stability check"),
        ("corona", "nice/ugly corona tree over the configured measure with packing and transform checks"),
        ("packing", "corona packing ratio drift when the lattice deepens one generation"),
        ("riesz-norm", "L2 operator norm sweep of the truncated transform on equispaced atoms"),
        ("full-pipeline", "lattice audit, bad cubes, growth, key lemma, T1, corona, packing, and norms in one run"),
    ]
}

pub fn run(cfg: &ExperimentConfig) -> Result<ReportBundle, ExperimentError> {
    match cfg.experiment.as_str() {
        "lattice-audit" => measure_ops::lattice_audit(cfg),
        "wos-validate" => validate::wos_validate(cfg),
        "green-check" => validate::green_check(cfg),
        "pole-swap" => validate::pole_swap(cfg),
        "bourgain" => validate::bourgain(cfg),
        "bharnack" => validate::bharnack(cfg),
        "ainfty" => measure_ops::ainfty(cfg),
        "bad-cubes" => corona_ops::bad_cubes(cfg),
        "key-lemma" => corona_ops::key_lemma(cfg),
        "corona" => corona_ops::corona(cfg),
        "packing" => corona_ops::packing(cfg),
        "riesz-norm" => measure_ops::riesz_norm(cfg),
        "full-pipeline" => corona_ops::full_pipeline(cfg),
        other => Err(ExperimentError::Failed(format!(
            "unknown experiment `{other}`; see `hmlab list`"
        ))),
    }
}

// ---------------------------------------------------------------------------
// shared helpers

/// JSON value for a float; non-finite values become strings so serialization
/// never fails and reports stay diffable.
pub fn jnum(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v.is_nan() {
        serde_json::json!("nan")
    } else if v > 0.0 {
        serde_json::json!("inf")
    } else {
        serde_json::json!("-inf")
    }
}

pub fn stochastic(value: f64, std_err: f64, n: u64, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "value": jnum(value),
        "std_err": jnum(std_err),
        "n": n,
        "seed": seed,
    })
}

pub fn domain_of(cfg: &ExperimentConfig, default: &str) -> Result<Domain, ExperimentError> {
    let name = cfg.domain.as_deref().unwrap_or(default);
    Ok(builtin_domain(name)?)
}

/// Default interior pole per builtin shape.
pub fn default_pole(dom: &Domain) -> Vec<f64> {
    match dom.name.as_str() {
        s if s.starts_with("lipschitz_graph") => vec![0.0, 0.6],
        "half_disk" => vec![0.0, 0.5],
        "slit_disk" => vec![-0.5, 0.0],
        "annulus_sector" => vec![0.65, 0.0],
        "ball" => vec![0.0, 0.0, 0.0],
        _ => vec![0.0, 0.0],
    }
}

/// Default boundary anchor per builtin shape.
pub fn default_boundary_point(dom: &Domain) -> Vec<f64> {
    match dom.name.as_str() {
        "square" => vec![0.0, -1.0],
        "half_disk" => vec![0.0, 1.0],
        "ball" => vec![1.0, 0.0, 0.0],
        _ => vec![1.0, 0.0],
    }
}

/// Everything the corona-side experiments share: the thin-boundary ball B,
/// its B0, a corkscrew pole, the exit sample, the omega-lattice on the
/// sample near B0, the attached mu masses, and the bad-cube report.
pub struct PipelineFront {
    pub domain: Domain,
    pub mu: PointMeasure,
    pub ball_b: Ball,
    pub b0: Ball,
    pub x_b: Vec<f64>,
    pub corkscrew_c: f64,
    pub omega_full: PointMeasure,
    pub discard_fraction: f64,
    pub lat_omega: DMLattice,
    pub attached_mu: Vec<f64>,
    pub bad: BadCubeReport,
    pub scfg: StoppingConfig,
    pub walks: u64,
}

pub fn pipeline_front(
    cfg: &ExperimentConfig,
    walks: u64,
    default_domain: &str,
    default_measure: &str,
) -> Result<PipelineFront, ExperimentError> {
    let domain = domain_of(cfg, default_domain)?;
    let mu = cfg
        .build_measure(default_measure)
        .map_err(|e| ExperimentError::Failed(e.to_string()))?;
    let scfg = cfg.stopping_config();
    let lp = cfg.omega_lattice_params();
    let shell = cfg.shell_eps();

    let xi = cfg
        .boundary_point
        .clone()
        .unwrap_or_else(|| default_boundary_point(&domain));
    let inner = Ball::new(xi.clone(), cfg.inner_radius.unwrap_or(0.02));
    let (lo, hi) = thin_ball_window(&inner, scfg.delta0);
    let ball_b = mu.find_thin_boundary_ball(&inner, lo, hi, scfg.c1)?;

    // fail fast on the mass precondition before sampling walks
    let pre = make_b0(&mu, &ball_b, None, &scfg)?;
    let b0 = pre.b0.clone();

    let kappa = scfg.delta0 / 2.0;
    let cork = corkscrew_point(&domain, &ball_b.center, kappa * ball_b.radius, 8192)?;
    let x_b = cork.point.clone();

    let sample = sample_exits(&domain, &x_b, walks, shell, splitmix64(cfg.seed ^ 0xF1407))?;
    let discard_fraction = sample.discard_fraction();
    let omega_full = sample.to_measure_aggregated(shell);
    let sigma = omega_full.restricted(&b0.scaled(10.0));

    // joint resolution floor: below a few mu spacings neither discretization
    // resolves the mass comparison, so the omega lattice stops there too
    let min_extent = 4.0 * mu.resolution_scale();
    let mut k_max = lp.k0;
    while k_max < lp.k_max && 56.0 * lp.a0.powi(-(k_max as i32 + 1)) >= min_extent {
        k_max += 1;
    }
    let lat_omega = build_lattice(&sigma, lp.c0, lp.a0, lp.k0, k_max)?;
    let attached_mu = attach_mu(&lat_omega, &mu);
    let bad = classify_bad(&lat_omega, &attached_mu, &b0, &scfg, min_extent)?;

    Ok(PipelineFront {
        domain,
        mu,
        ball_b,
        b0,
        x_b,
        corkscrew_c: cork.c_achieved,
        omega_full,
        discard_fraction,
        lat_omega,
        attached_mu,
        bad,
        scfg,
        walks,
    })
}

impl PipelineFront {
    pub fn summary_fragment(&self, seed: u64) -> serde_json::Value {
        serde_json::json!({
            "domain": self.domain.name,
            "mu_atoms": self.mu.len(),
            "ball_b": { "center": self.ball_b.center, "radius": self.ball_b.radius },
            "b0_radius": self.b0.radius,
            "x_b": self.x_b,
            "corkscrew_c": jnum(self.corkscrew_c),
            "walks": self.walks,
            "seed": seed,
            "discard_fraction": jnum(self.discard_fraction),
            "sigma_atoms": self.lat_omega.base().len(),
            "bad1_cells": self.bad.bad1.len(),
            "bad2_cells": self.bad.bad2.len(),
            "omega_b0": jnum(self.bad.omega_b0),
            "mu_b0": jnum(self.bad.mu_b0),
            "eps1_prime": jnum(self.bad.eps1_prime),
            "eps2_prime": jnum(self.bad.eps2_prime),
            "bad1_packing_constant": jnum(self.bad.bad1_packing_constant),
            "bad2_packing_constant": jnum(self.bad.bad2_packing_constant),
            "poisson_range": [jnum(self.bad.poisson_lower), jnum(self.bad.poisson_upper)],
            "poisson_skipped_cells": self.bad.poisson_skipped_cells,
        })
    }
}
