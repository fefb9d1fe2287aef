//! Walk-on-spheres harmonic measure, Green function estimation, and the
//! pole-comparison checks built on them.
//!
//! Harmonic measure is realized as the exit law of walk-on-spheres driven by
//! a signed-distance oracle: from an interior point, jump to a uniform point
//! on the sphere of radius `-sdf`, stop once within `shell_eps` of the
//! boundary, project to the nearest boundary point. Every walk draws from an
//! independent substream derived from `(seed, walk index)`, so batches
//! reproduce bit-exactly and are independent of scheduling.

pub mod domain;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub use domain::{builtin_domain, Domain, DomainShape, SlitSide};

use crate::geom::{dist, halton, to3};
use crate::measure::{Ball, PointMeasure};
use crate::riesz::{fundamental_solution_at_distance, RieszConfig};
use crate::rng::{splitmix64, substream, substream_for_point};
use crate::stats::{binomial_std_err, RunningStats};

#[derive(Debug, Error)]
pub enum HarmonicError {
    #[error("unknown builtin domain `{0}`")]
    UnknownDomain(String),
    #[error("no interior point found in the search ball")]
    NoInteriorPoint,
    #[error("walk exceeded the step budget")]
    MaxStepsExceeded,
    #[error("green function evaluated at a singular pair (|x - y| below resolution)")]
    SingularPair,
    #[error("start point is not inside the domain")]
    OutsideDomain,
    #[error("pole at distance {dist} from the boundary ball; needs >= {required}")]
    PoleTooClose { dist: f64, required: f64 },
}

pub const DEFAULT_MAX_STEPS: u32 = 1_000_000;

// ---------------------------------------------------------------------------
// Walks

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Exit {
    pub pos: [f64; 3],
    pub side: Option<SlitSide>,
    pub steps: u32,
}

/// One walk from `start` (interior) to the boundary shell.
pub fn wos_exit(
    dom: &Domain,
    start: &[f64],
    shell_eps: f64,
    max_steps: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Exit, HarmonicError> {
    let dim = dom.dim();
    if dom.sdf(start) >= 0.0 {
        return Err(HarmonicError::OutsideDomain);
    }
    let mut y = to3(start);
    let mut steps = 0u32;
    loop {
        let d = -dom.sdf(&y[..dim]);
        if d < shell_eps {
            let (pos, side) = dom.boundary_project(&y[..dim]);
            return Ok(Exit { pos, side, steps });
        }
        if steps >= max_steps {
            return Err(HarmonicError::MaxStepsExceeded);
        }
        let dir = sphere_direction(dim, rng);
        y[0] += d * dir[0];
        y[1] += d * dir[1];
        y[2] += d * dir[2];
        steps += 1;
    }
}

fn sphere_direction(dim: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
    if dim == 2 {
        let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        [theta.cos(), theta.sin(), 0.0]
    } else {
        let z = 2.0 * rng.gen::<f64>() - 1.0;
        let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        let rho = (1.0 - z * z).sqrt();
        [rho * phi.cos(), rho * phi.sin(), z]
    }
}

/// Monte Carlo sample of the harmonic measure with pole `pole`.
#[derive(Debug, Clone, Serialize)]
pub struct ExitDistribution {
    pub pole: Vec<f64>,
    pub dim: usize,
    pub exits: Vec<Exit>,
    pub requested: u64,
    pub discards: u64,
    pub shell_eps: f64,
    pub seed: u64,
}

impl ExitDistribution {
    pub fn completed(&self) -> u64 {
        self.exits.len() as u64
    }

    pub fn discard_fraction(&self) -> f64 {
        if self.requested == 0 {
            0.0
        } else {
            self.discards as f64 / self.requested as f64
        }
    }

    /// Empirical measure: one atom of weight `1/completed` per exit.
    pub fn to_measure(&self) -> PointMeasure {
        let w = 1.0 / self.completed() as f64;
        let pts: Vec<Vec<f64>> =
            self.exits.iter().map(|e| e.pos[..self.dim].to_vec()).collect();
        PointMeasure::from_points(self.dim - 1, &pts, vec![w; self.exits.len()]).unwrap()
    }

    /// Empirical measure with exits aggregated on a grid of the given cell
    /// size. Positions carry O(shell_eps) projection bias already, so
    /// aggregation at or below that scale changes nothing downstream while
    /// bounding the atom count. Atom position = mass-weighted mean of the
    /// cell's exits.
    pub fn to_measure_aggregated(&self, cell: f64) -> PointMeasure {
        assert!(cell > 0.0);
        let mut buckets: std::collections::BTreeMap<[i64; 3], (f64, [f64; 3])> =
            std::collections::BTreeMap::new();
        let w = 1.0 / self.completed() as f64;
        for e in &self.exits {
            let key = [
                (e.pos[0] / cell).floor() as i64,
                (e.pos[1] / cell).floor() as i64,
                (e.pos[2] / cell).floor() as i64,
            ];
            let entry = buckets.entry(key).or_insert((0.0, [0.0; 3]));
            entry.0 += w;
            entry.1[0] += w * e.pos[0];
            entry.1[1] += w * e.pos[1];
            entry.1[2] += w * e.pos[2];
        }
        let mut pts = Vec::with_capacity(buckets.len());
        let mut ws = Vec::with_capacity(buckets.len());
        for (_, (mass, sum)) in buckets {
            let mean = [sum[0] / mass, sum[1] / mass, sum[2] / mass];
            pts.push(mean[..self.dim].to_vec());
            ws.push(mass);
        }
        PointMeasure::from_points(self.dim - 1, &pts, ws).unwrap()
    }
}

/// Runs `n_walks` independent walks from `pole`; failed walks are discarded
/// and counted.
pub fn sample_exits(
    dom: &Domain,
    pole: &[f64],
    n_walks: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<ExitDistribution, HarmonicError> {
    if dom.sdf(pole) >= 0.0 {
        return Err(HarmonicError::OutsideDomain);
    }
    let mut exits = Vec::with_capacity(n_walks as usize);
    let mut discards = 0u64;
    for i in 0..n_walks {
        let mut rng = substream(seed, i);
        match wos_exit(dom, pole, shell_eps, DEFAULT_MAX_STEPS, &mut rng) {
            Ok(e) => exits.push(e),
            Err(HarmonicError::MaxStepsExceeded) => discards += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ExitDistribution {
        pole: pole.to_vec(),
        dim: dom.dim(),
        exits,
        requested: n_walks,
        discards,
        shell_eps,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Boundary partitions and harmonic measure

#[derive(Debug, Clone, Serialize)]
pub enum BoundaryPiece {
    /// Angular arc `[start, start + width)` of the outer circle; matches
    /// side-free exits only.
    Arc { start: f64, width: f64 },
    /// Trace of a closed ball on the boundary; matches any exit.
    BallTrace { center: Vec<f64>, radius: f64 },
    /// Piece of a slit with a side tag and an x-range.
    SlitPiece { side: SlitSide, x_min: f64, x_max: f64 },
}

impl BoundaryPiece {
    pub fn matches(&self, exit: &Exit) -> bool {
        match self {
            BoundaryPiece::Arc { start, width } => {
                if exit.side.is_some() {
                    return false;
                }
                let theta = exit.pos[1].atan2(exit.pos[0]);
                (theta - start).rem_euclid(2.0 * std::f64::consts::PI) < *width
            }
            BoundaryPiece::BallTrace { center, radius } => {
                dist(center, &exit.pos[..center.len()]) <= *radius
            }
            BoundaryPiece::SlitPiece { side, x_min, x_max } => {
                exit.side == Some(*side) && exit.pos[0] >= *x_min && exit.pos[0] <= *x_max
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryPartition {
    pub pieces: Vec<BoundaryPiece>,
    /// Declared by the caller: the pieces cover the whole boundary.
    pub covers_boundary: bool,
}

impl BoundaryPartition {
    /// `k` equal angular arcs covering a circle boundary.
    pub fn equal_arcs(k: usize) -> Self {
        let width = 2.0 * std::f64::consts::PI / k as f64;
        BoundaryPartition {
            pieces: (0..k)
                .map(|i| BoundaryPiece::Arc { start: i as f64 * width, width })
                .collect(),
            covers_boundary: true,
        }
    }

    /// First matching piece.
    pub fn classify(&self, exit: &Exit) -> Option<usize> {
        self.pieces.iter().position(|p| p.matches(exit))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicMeasureReport {
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub unassigned: u64,
    pub completed: u64,
    pub requested: u64,
    pub discards: u64,
    pub covers_boundary: bool,
    pub seed: u64,
    pub shell_eps: f64,
}

/// Empirical frequencies of projected exits per target piece, with binomial
/// standard errors; deterministic given `(seed, n_walks)`.
pub fn harmonic_measure(
    dom: &Domain,
    pole: &[f64],
    targets: &BoundaryPartition,
    n_walks: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<HarmonicMeasureReport, HarmonicError> {
    let sample = sample_exits(dom, pole, n_walks, shell_eps, seed)?;
    Ok(tabulate(&sample, targets))
}

/// Tabulates an existing exit sample against a partition.
pub fn tabulate(sample: &ExitDistribution, targets: &BoundaryPartition) -> HarmonicMeasureReport {
    let mut counts = vec![0u64; targets.pieces.len()];
    let mut unassigned = 0u64;
    for e in &sample.exits {
        match targets.classify(e) {
            Some(i) => counts[i] += 1,
            None => unassigned += 1,
        }
    }
    let completed = sample.completed();
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / completed as f64).collect();
    let std_errs: Vec<f64> =
        counts.iter().map(|&c| binomial_std_err(c, completed)).collect();
    HarmonicMeasureReport {
        counts,
        probs,
        std_errs,
        unassigned,
        completed,
        requested: sample.requested,
        discards: sample.discards,
        covers_boundary: targets.covers_boundary,
        seed: sample.seed,
        shell_eps: sample.shell_eps,
    }
}

/// CSV export of an exit sample: walk index, exit coordinates, slit side,
/// step count, and the matched target piece (empty when unassigned).
pub fn exit_distribution_csv(sample: &ExitDistribution, targets: &BoundaryPartition) -> String {
    let mut out = String::from("walk_index,exit_x,exit_y,exit_z,side,steps,target_id\n");
    for (i, e) in sample.exits.iter().enumerate() {
        let side = match e.side {
            Some(SlitSide::Above) => "above",
            Some(SlitSide::Below) => "below",
            None => "",
        };
        let target = targets
            .classify(e)
            .map(|t| t.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{i},{},{},{},{side},{},{target}\n",
            e.pos[0], e.pos[1], e.pos[2], e.steps
        ));
    }
    out
}

/// Exit angles mapped to [0, 1) for uniformity tests on circular boundaries.
pub fn exit_angles_unit(sample: &ExitDistribution) -> Vec<f64> {
    sample
        .exits
        .iter()
        .map(|e| {
            let t = e.pos[1].atan2(e.pos[0]);
            t.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Corkscrew points

#[derive(Debug, Clone, Serialize)]
pub struct Corkscrew {
    pub point: Vec<f64>,
    /// Achieved corkscrew constant: `min(depth, r - |x - xi|) / r`.
    pub c_achieved: f64,
}

/// Quasi-random search of `B(xi, r) cap Omega` maximizing
/// `min(-sdf(x), r - |x - xi|)`.
pub fn corkscrew_point(
    dom: &Domain,
    xi: &[f64],
    r: f64,
    samples: usize,
) -> Result<Corkscrew, HarmonicError> {
    let dim = dom.dim();
    let bases = [2u64, 3, 5];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut accepted = 0usize;
    let mut index = 1u64;
    while accepted < samples && index < 64 * samples as u64 {
        let mut p = vec![0.0; dim];
        for (j, q) in p.iter_mut().enumerate() {
            *q = xi[j] + r * (2.0 * halton(index, bases[j]) - 1.0);
        }
        index += 1;
        let off = dist(&p, xi);
        if off > r {
            continue;
        }
        accepted += 1;
        let depth = -dom.sdf(&p);
        let obj = depth.min(r - off);
        if obj > 0.0 && best.as_ref().map_or(true, |(b, _)| obj > *b) {
            best = Some((obj, p));
        }
    }
    match best {
        Some((obj, p)) => Ok(Corkscrew { point: p, c_achieved: obj / r }),
        None => Err(HarmonicError::NoInteriorPoint),
    }
}

// ---------------------------------------------------------------------------
// Green function

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GreenEstimate {
    pub value: f64,
    pub std_err: f64,
    pub completed: u64,
    pub discards: u64,
}

/// `G(x, y) = E(x - y) - mean_i E(x - z_i)` over exits `z_i` of walks from
/// the interior point `y`; `x` may be anywhere (outside the closure the true
/// value is 0).
pub fn green_estimate(
    dom: &Domain,
    cfg: &RieszConfig,
    x: &[f64],
    y: &[f64],
    n_walks: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<GreenEstimate, HarmonicError> {
    let scale = dom.scale();
    let sep = dist(x, y);
    if sep < 1e-9 * scale {
        return Err(HarmonicError::SingularPair);
    }
    if dom.sdf(y) >= 0.0 {
        return Err(HarmonicError::OutsideDomain);
    }
    let sample = sample_exits(dom, y, n_walks, shell_eps, seed)?;
    let mut stats = RunningStats::default();
    for e in &sample.exits {
        let d = dist(x, &e.pos[..dom.dim()]);
        stats.push(fundamental_solution_at_distance(cfg, d));
    }
    Ok(GreenEstimate {
        value: fundamental_solution_at_distance(cfg, sep) - stats.mean(),
        std_err: stats.std_err(),
        completed: sample.completed(),
        discards: sample.discards,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub std_err: f64,
    /// d(x0) = dist(x0, boundary).
    pub depth: f64,
    pub sphere_samples: usize,
}

/// `rho(x0)`: average of `G(x0, y)` over quasi-uniform `y` on the sphere of
/// radius `d(x0)/4` about `x0`.
pub fn rho(
    dom: &Domain,
    cfg: &RieszConfig,
    x0: &[f64],
    sphere_samples: usize,
    walks_per_sample: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<RhoEstimate, HarmonicError> {
    let depth = -dom.sdf(x0);
    if depth <= 0.0 {
        return Err(HarmonicError::OutsideDomain);
    }
    let r = depth / 4.0;
    let dim = dom.dim();
    let offset = splitmix64(seed) as f64 / u64::MAX as f64;
    let mut acc = RunningStats::default();
    let mut var_sum = 0.0;
    for j in 0..sphere_samples {
        let y: Vec<f64> = if dim == 2 {
            let th =
                2.0 * std::f64::consts::PI * ((j as f64 + offset) / sphere_samples as f64);
            vec![x0[0] + r * th.cos(), x0[1] + r * th.sin()]
        } else {
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            let z = 1.0 - 2.0 * (j as f64 + 0.5) / sphere_samples as f64;
            let th = 2.0 * std::f64::consts::PI * ((j as f64 / golden + offset).fract());
            let rho_xy = (1.0 - z * z).sqrt();
            vec![
                x0[0] + r * rho_xy * th.cos(),
                x0[1] + r * rho_xy * th.sin(),
                x0[2] + r * z,
            ]
        };
        let g = green_estimate(
            dom,
            cfg,
            x0,
            &y,
            walks_per_sample,
            shell_eps,
            splitmix64(seed ^ (j as u64 + 1)),
        )?;
        acc.push(g.value);
        var_sum += g.std_err * g.std_err;
    }
    Ok(RhoEstimate {
        value: acc.mean(),
        std_err: var_sum.sqrt() / sphere_samples as f64,
        depth,
        sphere_samples,
    })
}

// ---------------------------------------------------------------------------
// Bourgain-type lower bound

#[derive(Debug, Clone, Serialize)]
pub struct BourgainPole {
    pub pole: Vec<f64>,
    pub omega_b: f64,
    pub omega_std_err: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BourgainReport {
    pub worst_ratio: f64,
    pub vacuous: bool,
    pub mu_delta_b: f64,
    pub growth_constant: f64,
    pub poles: Vec<BourgainPole>,
}

/// Min over sampled poles in `delta B cap Omega` of
/// `omega^x(B) (delta r)^n / mu(delta B)`.
#[allow(clippy::too_many_arguments)]
pub fn bourgain_check(
    dom: &Domain,
    mu: &PointMeasure,
    xi: &[f64],
    r: f64,
    delta: f64,
    n_poles: usize,
    n_walks: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<BourgainReport, HarmonicError> {
    let growth = mu.growth_constant_default().constant;
    let b = Ball::new(xi.to_vec(), r);
    let delta_b = b.scaled(delta);
    let mu_delta_b = mu.mass(&delta_b);
    if mu_delta_b == 0.0 {
        return Ok(BourgainReport {
            worst_ratio: f64::INFINITY,
            vacuous: true,
            mu_delta_b,
            growth_constant: growth,
            poles: Vec::new(),
        });
    }
    let dim = dom.dim();
    let n = mu.n() as i32;
    let bases = [2u64, 3, 5];
    let mut poles = Vec::new();
    let mut index = 1u64;
    while poles.len() < n_poles && index < 10_000 * n_poles as u64 {
        let mut p = vec![0.0; dim];
        for (j, q) in p.iter_mut().enumerate() {
            *q = xi[j] + delta * r * (2.0 * halton(index, bases[j]) - 1.0);
        }
        index += 1;
        if dist(&p, xi) <= delta * r && dom.sdf(&p) < -2.0 * shell_eps {
            poles.push(p);
        }
    }
    if poles.is_empty() {
        return Err(HarmonicError::NoInteriorPoint);
    }
    let mut rows = Vec::new();
    let mut worst = f64::INFINITY;
    for (i, p) in poles.iter().enumerate() {
        let sample =
            sample_exits(dom, p, n_walks, shell_eps, splitmix64(seed ^ (0x10_000 + i as u64)))?;
        let hits = sample
            .exits
            .iter()
            .filter(|e| dist(&b.center, &e.pos[..dim]) <= r)
            .count() as u64;
        let omega = hits as f64 / sample.completed() as f64;
        let se = binomial_std_err(hits, sample.completed());
        let scale = (delta * r).powi(n) / mu_delta_b;
        let ratio = omega * scale;
        worst = worst.min(ratio);
        rows.push(BourgainPole { pole: p.clone(), omega_b: omega, omega_std_err: se, ratio });
    }
    Ok(BourgainReport {
        worst_ratio: worst,
        vacuous: false,
        mu_delta_b,
        growth_constant: growth,
        poles: rows,
    })
}

// ---------------------------------------------------------------------------
// Green / harmonic-measure comparison on a boundary ball

#[derive(Debug, Clone, Serialize)]
pub struct RelationPoint {
    pub x: Vec<f64>,
    pub omega_x_b: f64,
    pub green: f64,
    pub ratio: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenOmegaReport {
    pub omega_xb_b: f64,
    pub rho_xb: f64,
    pub points: Vec<RelationPoint>,
}

/// Per test point `x`, the two-sided comparison ratio
/// `omega^x(B) / (omega^{x_B}(B) rho(x_B)^{-1} G(x, x_B))`.
#[allow(clippy::too_many_arguments)]
pub fn green_omega_relation(
    dom: &Domain,
    cfg: &RieszConfig,
    b: &Ball,
    x_b: &[f64],
    test_points: &[Vec<f64>],
    n_walks: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<GreenOmegaReport, HarmonicError> {
    let dim = dom.dim();
    let base = sample_exits(dom, x_b, n_walks, shell_eps, splitmix64(seed ^ 0xB0))?;
    let hits_b = base
        .exits
        .iter()
        .filter(|e| dist(&b.center, &e.pos[..dim]) <= b.radius)
        .count() as u64;
    let omega_xb_b = hits_b as f64 / base.completed() as f64;
    let se_xb = binomial_std_err(hits_b, base.completed());
    let rho_est = rho(dom, cfg, x_b, 16, (n_walks / 16).max(64), shell_eps, splitmix64(seed ^ 0xB1))?;

    let mut points = Vec::new();
    for (i, x) in test_points.iter().enumerate() {
        let sx =
            sample_exits(dom, x, n_walks, shell_eps, splitmix64(seed ^ (0xB2 + i as u64)))?;
        let hits = sx
            .exits
            .iter()
            .filter(|e| dist(&b.center, &e.pos[..dim]) <= b.radius)
            .count() as u64;
        let omega_x = hits as f64 / sx.completed() as f64;
        let se_x = binomial_std_err(hits, sx.completed());
        // G(x, x_B) reuses the x_B exit batch
        let mut g_stats = RunningStats::default();
        for e in &base.exits {
            g_stats.push(fundamental_solution_at_distance(cfg, dist(x, &e.pos[..dim])));
        }
        let green = fundamental_solution_at_distance(cfg, dist(x, x_b)) - g_stats.mean();
        let denom = omega_xb_b / rho_est.value * green;
        let ratio = omega_x / denom;
        let rel = [
            se_x / omega_x.max(1e-300),
            se_xb / omega_xb_b.max(1e-300),
            rho_est.std_err / rho_est.value.abs().max(1e-300),
            g_stats.std_err() / green.abs().max(1e-300),
        ]
        .iter()
        .map(|e| e * e)
        .sum::<f64>()
        .sqrt();
        points.push(RelationPoint { x: x.clone(), omega_x_b: omega_x, green, ratio, rel_err: rel });
    }
    Ok(GreenOmegaReport { omega_xb_b, rho_xb: rho_est.value, points })
}

// ---------------------------------------------------------------------------
// Change of pole

#[derive(Debug, Clone, Serialize)]
pub struct PoleSwapGroup {
    /// Indices of the partition pieces merged into this group.
    pub pieces: Vec<usize>,
    pub f1: f64,
    pub f2: f64,
    pub quotient: f64,
    pub std_err_quotient: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChangeOfPoleReport {
    pub max_quotient: f64,
    pub groups: Vec<PoleSwapGroup>,
    /// Pieces were merged because their combined exit count fell below 30.
    pub merged_any: bool,
    pub omega1_b: f64,
    pub omega2_b: f64,
}

/// Normalized harmonic-measure ratios `omega^{p_i}(E) / omega^{p_i}(B)` for
/// the two poles and the max over pieces of the larger/smaller quotient.
/// Pole substreams are keyed by the pole coordinates, so `p1 == p2` returns
/// quotient exactly 1.
#[allow(clippy::too_many_arguments)]
pub fn change_of_pole(
    dom: &Domain,
    b: &Ball,
    pieces: &BoundaryPartition,
    p1: &[f64],
    p2: &[f64],
    c0: f64,
    n_walks: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<ChangeOfPoleReport, HarmonicError> {
    let dim = dom.dim();
    // dist(p, B cap dOmega) >= max(dist(p, dOmega), dist(p, B)): conservative
    // admissibility check on that lower bound.
    for p in [p1, p2] {
        let d_boundary = -dom.sdf(p);
        if d_boundary <= 0.0 {
            return Err(HarmonicError::OutsideDomain);
        }
        let d_ball = (dist(p, &b.center) - b.radius).max(0.0);
        let lower = d_boundary.max(d_ball);
        if lower < b.radius / c0 {
            return Err(HarmonicError::PoleTooClose {
                dist: lower,
                required: b.radius / c0,
            });
        }
    }

    let mut batches = Vec::new();
    for p in [p1, p2] {
        let mut key_rng = substream_for_point(seed, 0xC0DE, p);
        let derived: u64 = key_rng.gen();
        batches.push(sample_exits(dom, p, n_walks, shell_eps, derived)?);
    }
    let in_b = |e: &Exit| dist(&b.center, &e.pos[..dim]) <= b.radius;
    let count_b: Vec<u64> = batches
        .iter()
        .map(|s| s.exits.iter().filter(|e| in_b(e)).count() as u64)
        .collect();
    let mut counts: Vec<[u64; 2]> = vec![[0, 0]; pieces.pieces.len()];
    for (bi, s) in batches.iter().enumerate() {
        for e in &s.exits {
            if let Some(i) = pieces.classify(e) {
                counts[i][bi] += 1;
            }
        }
    }

    // Merge adjacent pieces until every group has >= 30 combined exits.
    let mut groups: Vec<(Vec<usize>, [u64; 2])> =
        counts.iter().enumerate().map(|(i, c)| (vec![i], *c)).collect();
    let mut merged_any = false;
    while groups.len() > 1 {
        match groups.iter().position(|(_, c)| c[0] + c[1] < 30) {
            None => break,
            Some(i) => {
                merged_any = true;
                let (idx, c) = groups.remove(i);
                let target = if i < groups.len() { i } else { i - 1 };
                groups[target].0.extend(idx);
                groups[target].1[0] += c[0];
                groups[target].1[1] += c[1];
            }
        }
    }

    let mut out_groups = Vec::new();
    let mut max_q = 0.0f64;
    for (idx, c) in groups {
        let f1 = c[0] as f64 / count_b[0].max(1) as f64;
        let f2 = c[1] as f64 / count_b[1].max(1) as f64;
        let quotient = if f1 == f2 {
            1.0
        } else if f1 == 0.0 || f2 == 0.0 {
            f64::INFINITY
        } else {
            (f1 / f2).max(f2 / f1)
        };
        let rel = (binomial_std_err(c[0], batches[0].completed()) / f1.max(1e-300))
            .hypot(binomial_std_err(c[1], batches[1].completed()) / f2.max(1e-300));
        max_q = max_q.max(quotient);
        out_groups.push(PoleSwapGroup {
            pieces: idx,
            f1,
            f2,
            quotient,
            std_err_quotient: if quotient.is_finite() { quotient * rel } else { f64::INFINITY },
        });
    }
    Ok(ChangeOfPoleReport {
        max_quotient: max_q,
        groups: out_groups,
        merged_any,
        omega1_b: count_b[0] as f64 / batches[0].completed() as f64,
        omega2_b: count_b[1] as f64 / batches[1].completed() as f64,
    })
}

// ---------------------------------------------------------------------------
// Boundary Harnack

/// A positive harmonic function given by one of the two stochastic recipes.
#[derive(Debug, Clone, Serialize)]
pub enum HarmonicFnSpec {
    /// `x -> omega^x(B*)` for a fixed boundary ball.
    MeasureOfBall(Ball),
    /// `x -> G(p, x)` for a fixed interior pole.
    GreenWithPole(Vec<f64>),
}

impl HarmonicFnSpec {
    fn stream_label(&self) -> u64 {
        match self {
            HarmonicFnSpec::MeasureOfBall(b) => {
                let mut h = 0x5157u64;
                for c in &b.center {
                    h = splitmix64(h ^ c.to_bits());
                }
                splitmix64(h ^ b.radius.to_bits())
            }
            HarmonicFnSpec::GreenWithPole(p) => {
                let mut h = 0x47EEu64;
                for c in p {
                    h = splitmix64(h ^ c.to_bits());
                }
                splitmix64(h)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackProbe {
    pub x: Vec<f64>,
    pub u: f64,
    pub v: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryHarnackReport {
    pub oscillation: f64,
    pub probes: Vec<HarnackProbe>,
}

/// Oscillation (max/min) of `u/v` over probe points. Identical specs share
/// substreams, so `u = v` gives oscillation exactly 1.
pub fn boundary_harnack_check(
    dom: &Domain,
    cfg: &RieszConfig,
    u_spec: &HarmonicFnSpec,
    v_spec: &HarmonicFnSpec,
    probes: &[Vec<f64>],
    n_walks: u64,
    shell_eps: f64,
    seed: u64,
) -> Result<BoundaryHarnackReport, HarmonicError> {
    let dim = dom.dim();
    let eval = |spec: &HarmonicFnSpec, x: &Vec<f64>| -> Result<f64, HarmonicError> {
        let mut key_rng = substream_for_point(seed ^ spec.stream_label(), 0x11AC, x);
        let walk_seed: u64 = key_rng.gen();
        match spec {
            HarmonicFnSpec::MeasureOfBall(b) => {
                let s = sample_exits(dom, x, n_walks, shell_eps, walk_seed)?;
                let hits = s
                    .exits
                    .iter()
                    .filter(|e| dist(&b.center, &e.pos[..dim]) <= b.radius)
                    .count() as u64;
                Ok(hits as f64 / s.completed() as f64)
            }
            HarmonicFnSpec::GreenWithPole(p) => {
                let g = green_estimate(dom, cfg, p, x, n_walks, shell_eps, walk_seed)?;
                Ok(g.value)
            }
        }
    };
    let mut rows = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for x in probes {
        let u = eval(u_spec, x)?;
        let v = eval(v_spec, x)?;
        let ratio = u / v;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        rows.push(HarnackProbe { x: x.clone(), u, v, ratio });
    }
    Ok(BoundaryHarnackReport { oscillation: hi / lo, probes: rows })
}

// ---------------------------------------------------------------------------
// A-infinity knapsack scan

#[derive(Debug, Clone, Serialize)]
pub struct AinftyScan {
    pub eps_prime: f64,
    /// Some selected atom has zero mu-mass but positive omega-mass: the
    /// A-infinity comparison fails outright.
    pub zero_mu_mass_selected: bool,
}

/// Worst-case `eps'` for "mu(E) <= eps mu(B) implies omega(E) <= eps'
/// omega(B)" over a common finite partition: a fractional knapsack filled by
/// decreasing omega/mu ratio. Exact for the fractional relaxation and an
/// upper bound for the set version.
pub fn ainfty_scan(mu_cells: &[f64], omega_cells: &[f64], eps: f64) -> AinftyScan {
    assert_eq!(mu_cells.len(), omega_cells.len());
    assert!((0.0..=1.0).contains(&eps));
    let mu_total: f64 = mu_cells.iter().sum();
    let omega_total: f64 = omega_cells.iter().sum();
    if omega_total == 0.0 {
        return AinftyScan { eps_prime: 0.0, zero_mu_mass_selected: false };
    }
    let ratio = |i: usize| -> f64 {
        if mu_cells[i] == 0.0 {
            if omega_cells[i] > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            omega_cells[i] / mu_cells[i]
        }
    };
    let mut order: Vec<usize> = (0..mu_cells.len()).collect();
    order.sort_by(|&a, &b| ratio(b).partial_cmp(&ratio(a)).unwrap().then(a.cmp(&b)));

    let budget = eps * mu_total;
    let mut used = 0.0;
    let mut omega_sel = 0.0;
    let mut zero_mu = false;
    for &i in &order {
        if mu_cells[i] == 0.0 {
            if omega_cells[i] > 0.0 {
                omega_sel += omega_cells[i];
                zero_mu = true;
            }
            continue;
        }
        if used + mu_cells[i] <= budget {
            used += mu_cells[i];
            omega_sel += omega_cells[i];
        } else {
            let frac = ((budget - used) / mu_cells[i]).max(0.0);
            omega_sel += frac * omega_cells[i];
            break;
        }
    }
    AinftyScan { eps_prime: omega_sel / omega_total, zero_mu_mass_selected: zero_mu }
}

// ---------------------------------------------------------------------------
// Analytic disk references

/// Closed-form references on the unit disk used as oracles for the Monte
/// Carlo machinery.
pub mod disk {
    /// Harmonic measure of the arc `[a0, a1]` of the unit circle from an
    /// interior pole, via the Poisson-kernel antiderivative
    /// `F(psi) = (1/pi) atan(((1+r)/(1-r)) tan(psi/2))`.
    pub fn poisson_arc_mass(pole: [f64; 2], a0: f64, a1: f64) -> f64 {
        assert!(a1 >= a0 && a1 - a0 <= 2.0 * std::f64::consts::PI + 1e-12);
        let r = (pole[0] * pole[0] + pole[1] * pole[1]).sqrt();
        assert!(r < 1.0, "pole must be interior");
        let phi = pole[1].atan2(pole[0]);
        let k = (1.0 + r) / (1.0 - r);
        let f = |psi: f64| -> f64 {
            if psi >= std::f64::consts::PI {
                0.5
            } else if psi <= -std::f64::consts::PI {
                -0.5
            } else {
                (k * (psi / 2.0).tan()).atan() / std::f64::consts::PI
            }
        };
        let two_pi = 2.0 * std::f64::consts::PI;
        let psi0 = (a0 - phi + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
        let psi1 = psi0 + (a1 - a0);
        if psi1 <= std::f64::consts::PI {
            f(psi1) - f(psi0)
        } else {
            (0.5 - f(psi0)) + (f(psi1 - two_pi) + 0.5)
        }
    }

    /// Green function of the unit disk with the `1/(2 pi)` normalization:
    /// `G(x, y) = (1/2pi) ln(|1 - x conj(y)| / |x - y|)`.
    pub fn green(x: [f64; 2], y: [f64; 2]) -> f64 {
        let num = {
            let re = 1.0 - (x[0] * y[0] + x[1] * y[1]);
            let im = -(x[1] * y[0] - x[0] * y[1]);
            (re * re + im * im).sqrt()
        };
        let den = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        (num / den).ln() / (2.0 * std::f64::consts::PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical, ks_statistic_uniform};

    fn disk_domain() -> Domain {
        builtin_domain("disk").unwrap()
    }

    #[test]
    fn walks_reproduce_bit_exactly() {
        let dom = disk_domain();
        let a = sample_exits(&dom, &[0.3, 0.1], 200, 1e-4, 99).unwrap();
        let b = sample_exits(&dom, &[0.3, 0.1], 200, 1e-4, 99).unwrap();
        assert_eq!(a.exits.len(), b.exits.len());
        for (ea, eb) in a.exits.iter().zip(&b.exits) {
            assert_eq!(ea.pos[0].to_bits(), eb.pos[0].to_bits());
            assert_eq!(ea.pos[1].to_bits(), eb.pos[1].to_bits());
        }
    }

    #[test]
    fn pole_in_shell_exits_immediately() {
        let dom = disk_domain();
        let start = [1.0 - 5e-5, 0.0];
        let mut rng = substream(1, 0);
        let e = wos_exit(&dom, &start, 1e-4, 100, &mut rng).unwrap();
        assert_eq!(e.steps, 0);
        assert!((e.pos[0] - 1.0).abs() < 1e-12 && e.pos[1].abs() < 1e-12);
    }

    #[test]
    fn disk_center_exit_law_is_uniform() {
        let dom = disk_domain();
        let sample = sample_exits(&dom, &[0.0, 0.0], 20_000, 1e-4, 7).unwrap();
        assert_eq!(sample.discards, 0);
        let d = ks_statistic_uniform(exit_angles_unit(&sample));
        let crit = ks_critical(0.01, sample.completed() as usize);
        assert!(d < crit, "KS {d} >= critical {crit}");
    }

    #[test]
    fn rotation_equivariance_with_matched_seeds() {
        // rotating the pole and comparing rotated exit angles: same law;
        // matched seeds give KS far below the 5% critical value
        let dom = disk_domain();
        let a = sample_exits(&dom, &[0.4, 0.0], 10_000, 1e-4, 77).unwrap();
        let rot = std::f64::consts::FRAC_PI_3;
        let pole_b = [0.4 * rot.cos(), 0.4 * rot.sin()];
        let b = sample_exits(&dom, &pole_b, 10_000, 1e-4, 77).unwrap();
        let ang_a = exit_angles_unit(&a);
        let ang_b: Vec<f64> = exit_angles_unit(&b)
            .into_iter()
            .map(|u| (u - rot / (2.0 * std::f64::consts::PI)).rem_euclid(1.0))
            .collect();
        // two-sample KS via the pooled empirical difference
        let mut xs: Vec<(f64, i32)> = ang_a.iter().map(|&u| (u, 0)).collect();
        xs.extend(ang_b.iter().map(|&u| (u, 1)));
        xs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let (n1, n2) = (ang_a.len() as f64, ang_b.len() as f64);
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        let mut d = 0.0f64;
        for (_, which) in xs {
            if which == 0 {
                c1 += 1.0;
            } else {
                c2 += 1.0;
            }
            d = d.max((c1 / n1 - c2 / n2).abs());
        }
        let crit = 1.358 * ((n1 + n2) / (n1 * n2)).sqrt();
        assert!(d < crit, "two-sample KS {d} >= {crit}");
    }

    #[test]
    fn poisson_arc_mass_matches_quadrature() {
        // Simpson quadrature of the Poisson kernel as the independent route.
        let pole = [0.5, 0.2];
        let r2 = pole[0] * pole[0] + pole[1] * pole[1];
        let quad = |a: f64, b: f64| -> f64 {
            let m = 20_000;
            let h = (b - a) / m as f64;
            let kernel = |t: f64| {
                let d2 = (t.cos() - pole[0]).powi(2) + (t.sin() - pole[1]).powi(2);
                (1.0 - r2) / (2.0 * std::f64::consts::PI * d2)
            };
            let mut s = kernel(a) + kernel(b);
            for i in 1..m {
                s += kernel(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        for (a, b) in [
            (0.0, 0.7),
            (2.0, 5.5),
            (-1.0, 1.0),
            (3.0, 3.0 + 2.0 * std::f64::consts::PI),
        ] {
            let exact = disk::poisson_arc_mass(pole, a, b);
            let numeric = quad(a, b);
            assert!(
                (exact - numeric).abs() < 1e-9,
                "arc [{a}, {b}]: {exact} vs {numeric}"
            );
        }
        let full = disk::poisson_arc_mass([0.3, -0.4], 0.0, 2.0 * std::f64::consts::PI);
        assert!((full - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disk_offcenter_matches_poisson_kernel() {
        let dom = disk_domain();
        let pole = [0.5, 0.0];
        let parts = BoundaryPartition::equal_arcs(16);
        let rep = harmonic_measure(&dom, &pole, &parts, 30_000, 1e-4, 11).unwrap();
        let width = 2.0 * std::f64::consts::PI / 16.0;
        for i in 0..16 {
            let want = disk::poisson_arc_mass(pole, i as f64 * width, (i + 1) as f64 * width);
            let got = rep.probs[i];
            let tol = 4.0 * rep.std_errs[i] + 1e-3;
            assert!((got - want).abs() < tol, "arc {i}: {got} vs {want} (tol {tol})");
        }
    }

    #[test]
    fn green_matches_analytic_disk() {
        let dom = disk_domain();
        let cfg = RieszConfig::standard(1);
        let x = [0.3, 0.0];
        let y = [-0.2, 0.1];
        let est = green_estimate(&dom, &cfg, &x, &y, 50_000, 1e-4, 13).unwrap();
        let want = disk::green(x, y);
        let rel = (est.value - want).abs() / want;
        assert!(rel < 0.05, "relative error {rel}: {} vs {want}", est.value);

        // exterior evaluation point: estimate consistent with 0
        let out = green_estimate(&dom, &cfg, &[1.5, 0.3], &y, 50_000, 1e-4, 17).unwrap();
        assert!(out.value.abs() < 3.0 * out.std_err + 1e-4, "exterior {}", out.value);

        // symmetry within combined Monte Carlo error
        let ab = green_estimate(&dom, &cfg, &x, &y, 50_000, 1e-4, 19).unwrap();
        let ba = green_estimate(&dom, &cfg, &y, &x, 50_000, 1e-4, 23).unwrap();
        let tol = 3.0 * (ab.std_err + ba.std_err) + 1e-4;
        assert!((ab.value - ba.value).abs() < tol);

        assert!(matches!(
            green_estimate(&dom, &cfg, &y, &y, 10, 1e-4, 1),
            Err(HarmonicError::SingularPair)
        ));
    }

    #[test]
    fn green_nonnegative_inside_within_error() {
        let dom = disk_domain();
        let cfg = RieszConfig::standard(1);
        for (i, x) in [[0.7, 0.1], [-0.3, 0.6], [0.0, -0.9]].iter().enumerate() {
            let g = green_estimate(&dom, &cfg, x, &[0.1, 0.2], 5_000, 1e-4, 100 + i as u64)
                .unwrap();
            assert!(g.value > -3.0 * g.std_err, "G at {x:?} = {}", g.value);
        }
    }

    #[test]
    fn rho_disk_center_matches_analytic() {
        // From the center, G(0, y) = (1/2pi) ln(1/|y|) is constant on the
        // radius-1/4 circle, so rho = ln(4)/(2 pi).
        let dom = disk_domain();
        let cfg = RieszConfig::standard(1);
        let est = rho(&dom, &cfg, &[0.0, 0.0], 16, 4000, 1e-4, 29).unwrap();
        let want = 4.0f64.ln() / (2.0 * std::f64::consts::PI);
        assert!(
            (est.value - want).abs() < 0.01 * want + 5.0 * est.std_err,
            "rho {} vs {want}",
            est.value
        );
        assert!(est.value > 0.0);
    }

    #[test]
    fn corkscrew_constants() {
        let square = builtin_domain("square").unwrap();
        let c = corkscrew_point(&square, &[0.0, -1.0], 0.5, 4096).unwrap();
        assert!(c.c_achieved >= 0.45, "square edge corkscrew {}", c.c_achieved);

        let dom = disk_domain();
        let c2 = corkscrew_point(&dom, &[1.0, 0.0], 0.1, 4096).unwrap();
        assert!(c2.c_achieved >= 0.42, "disk corkscrew {}", c2.c_achieved);

        // where the slit meets the circle, access is pinched into two
        // wedges and the constant drops below the plain disk's
        let slit = builtin_domain("slit_disk").unwrap();
        let c3 = corkscrew_point(&slit, &[1.0, 0.0], 0.1, 4096).unwrap();
        assert!(
            c3.c_achieved < c2.c_achieved - 0.02,
            "slit {} vs disk {}",
            c3.c_achieved,
            c2.c_achieved
        );

        // sampled search agrees with a dense grid at the slit tip
        let tip = corkscrew_point(&slit, &[0.0, 0.0], 0.1, 4096).unwrap();
        let mut grid_best = 0.0f64;
        for i in 0..400 {
            for j in 0..400 {
                let p = [
                    -0.1 + 0.2 * (i as f64 + 0.5) / 400.0,
                    -0.1 + 0.2 * (j as f64 + 0.5) / 400.0,
                ];
                let off = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if off <= 0.1 {
                    grid_best = grid_best.max((-slit.sdf(&p)).min(0.1 - off));
                }
            }
        }
        assert!(tip.c_achieved >= grid_best / 0.1 - 0.02);
    }

    #[test]
    fn bourgain_square_boundary() {
        let dom = builtin_domain("square").unwrap();
        let mu = crate::generate::square_boundary_measure(200, 1.0);
        let rep =
            bourgain_check(&dom, &mu, &[1.0, 0.0], 0.5, 0.25, 6, 4_000, 1e-4, 71).unwrap();
        assert!(!rep.vacuous);
        assert!(rep.worst_ratio > 0.0, "worst ratio {}", rep.worst_ratio);

        // vacuous case: boundary ball with no mass
        let rep2 =
            bourgain_check(&dom, &mu, &[0.0, 0.0], 0.2, 0.5, 4, 100, 1e-4, 73).unwrap();
        assert!(rep2.vacuous);
        assert!(rep2.worst_ratio.is_infinite());
    }

    #[test]
    fn change_of_pole_identical_poles_is_exactly_one() {
        let dom = disk_domain();
        let b = Ball::new(vec![1.0, 0.0], 0.6);
        let parts = BoundaryPartition::equal_arcs(8);
        let rep = change_of_pole(
            &dom,
            &b,
            &parts,
            &[0.0, 0.0],
            &[0.0, 0.0],
            10.0,
            2000,
            1e-4,
            31,
        )
        .unwrap();
        assert_eq!(rep.max_quotient, 1.0);
    }

    #[test]
    fn change_of_pole_disk_is_mild() {
        let dom = disk_domain();
        let b = Ball::new(vec![1.0, 0.0], 0.6);
        // pieces: 8 sub-arcs of the arc cut by B
        let half = 2.0 * (0.3f64).asin();
        let parts = BoundaryPartition {
            pieces: (0..8)
                .map(|i| BoundaryPiece::Arc {
                    start: -half + i as f64 * half / 4.0,
                    width: half / 4.0,
                })
                .collect(),
            covers_boundary: false,
        };
        let rep = change_of_pole(
            &dom,
            &b,
            &parts,
            &[0.0, 0.0],
            &[-0.5, 0.0],
            10.0,
            20_000,
            1e-4,
            37,
        )
        .unwrap();
        assert!(rep.max_quotient < 1.5, "disk quotient {}", rep.max_quotient);
    }

    #[test]
    fn pole_too_close_is_rejected() {
        let dom = disk_domain();
        let b = Ball::new(vec![1.0, 0.0], 0.4);
        let parts = BoundaryPartition::equal_arcs(4);
        let err = change_of_pole(
            &dom,
            &b,
            &parts,
            &[0.93, 0.0],
            &[0.0, 0.0],
            2.0,
            100,
            1e-4,
            1,
        );
        assert!(matches!(err, Err(HarmonicError::PoleTooClose { .. })));
    }

    #[test]
    fn boundary_harnack_identical_functions() {
        let dom = disk_domain();
        let cfg = RieszConfig::standard(1);
        let spec = HarmonicFnSpec::MeasureOfBall(Ball::new(vec![-1.0, 0.0], 0.5));
        let probes = vec![vec![0.5, 0.1], vec![0.6, -0.1], vec![0.55, 0.0]];
        let rep =
            boundary_harnack_check(&dom, &cfg, &spec, &spec, &probes, 2000, 1e-4, 41).unwrap();
        assert_eq!(rep.oscillation, 1.0);
    }

    #[test]
    fn boundary_harnack_disk_bounded() {
        let dom = disk_domain();
        let cfg = RieszConfig::standard(1);
        // u = harmonic measure of the far arc-ball, v = Green with far pole;
        // both vanish on the boundary near (1, 0); probes at depth >= r/4.
        let u = HarmonicFnSpec::MeasureOfBall(Ball::new(vec![-1.0, 0.0], 0.6));
        let v = HarmonicFnSpec::GreenWithPole(vec![-0.5, 0.0]);
        let probes = vec![
            vec![0.85, 0.05],
            vec![0.85, -0.05],
            vec![0.8, 0.1],
            vec![0.75, 0.0],
            vec![0.8, -0.1],
        ];
        let rep =
            boundary_harnack_check(&dom, &cfg, &u, &v, &probes, 20_000, 1e-4, 43).unwrap();
        assert!(rep.oscillation <= 4.0, "oscillation {}", rep.oscillation);
    }

    #[test]
    fn green_omega_relation_on_the_disk() {
        // two-sided comparability on the analytic-oracle-checkable domain,
        // plus equal ratios for test points mirrored across B's axis
        let dom = disk_domain();
        let cfg = RieszConfig::standard(1);
        let b = Ball::new(vec![1.0, 0.0], 0.2);
        let cork = corkscrew_point(&dom, &[1.0, 0.0], 0.2, 2048).unwrap();
        let pts = vec![
            vec![-0.9, 0.0],
            vec![-0.4, 0.5],
            vec![-0.4, -0.5],
        ];
        let rep =
            green_omega_relation(&dom, &cfg, &b, &cork.point, &pts, 30_000, 1e-4, 83).unwrap();
        for p in &rep.points {
            assert!(
                p.ratio > 1.0 / 5.0 && p.ratio < 5.0,
                "ratio at {:?} = {}",
                p.x,
                p.ratio
            );
        }
        // mirror symmetry across the x-axis (B's axis)
        let (a, c) = (&rep.points[1], &rep.points[2]);
        let tol = 3.0 * (a.rel_err + c.rel_err) * a.ratio.max(c.ratio) + 0.05;
        assert!(
            (a.ratio - c.ratio).abs() < tol,
            "mirrored ratios {} vs {} (tol {tol})",
            a.ratio,
            c.ratio
        );
        assert!(rep.rho_xb > 0.0 && rep.omega_xb_b > 0.0);
    }

    #[test]
    fn exit_csv_has_one_row_per_walk() {
        let dom = disk_domain();
        let s = sample_exits(&dom, &[0.1, 0.0], 500, 1e-4, 3).unwrap();
        let csv = exit_distribution_csv(&s, &BoundaryPartition::equal_arcs(4));
        assert_eq!(csv.lines().count(), 501);
        assert!(csv.starts_with("walk_index,exit_x"));
        // full-circle partition sums to 1: every completed walk is assigned
        let rep = tabulate(&s, &BoundaryPartition::equal_arcs(4));
        assert_eq!(rep.unassigned, 0);
        assert_eq!(rep.counts.iter().sum::<u64>(), rep.completed);
    }

    #[test]
    fn ainfty_identical_measures() {
        let mu = vec![0.1, 0.4, 0.2, 0.3];
        for eps in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let r = ainfty_scan(&mu, &mu, eps);
            assert!((r.eps_prime - eps).abs() < 1e-12, "eps {eps} -> {}", r.eps_prime);
        }
    }

    #[test]
    fn ainfty_two_atoms() {
        let r = ainfty_scan(&[0.5, 0.5], &[0.9, 0.1], 0.5);
        assert!((r.eps_prime - 0.9).abs() < 1e-12);
        assert!(!r.zero_mu_mass_selected);
    }

    #[test]
    fn ainfty_zero_mu_atom_flags_failure() {
        let r = ainfty_scan(&[0.0, 1.0], &[0.3, 0.7], 0.0);
        assert!(r.zero_mu_mass_selected);
        assert!((r.eps_prime - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ainfty_dominates_brute_force_sets() {
        use rand::Rng;
        // exhaustive 2^12 oracle
        let mut rng = substream(53, 0);
        let mu: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
        let om: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
        let mu_total: f64 = mu.iter().sum();
        let om_total: f64 = om.iter().sum();
        for eps in [0.1, 0.3, 0.6] {
            let frac = ainfty_scan(&mu, &om, eps).eps_prime;
            let budget = eps * mu_total;
            let mut best = 0.0f64;
            for mask in 0u32..(1 << 12) {
                let mut mu_s = 0.0;
                let mut om_s = 0.0;
                for (i, (m, o)) in mu.iter().zip(&om).enumerate() {
                    if mask & (1 << i) != 0 {
                        mu_s += m;
                        om_s += o;
                    }
                }
                if mu_s <= budget {
                    best = best.max(om_s / om_total);
                }
            }
            assert!(frac >= best - 1e-12, "fractional {frac} < set best {best}");
        }
    }

    #[test]
    fn ainfty_monotone_in_eps() {
        use rand::Rng;
        let mut rng = substream(59, 1);
        let mu: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
        let om: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
        let mut prev = -1.0;
        for k in 0..=40 {
            let eps = k as f64 / 40.0;
            let v = ainfty_scan(&mu, &om, eps).eps_prime;
            assert!(v >= prev - 1e-15, "not monotone at eps {eps}");
            prev = v;
        }
    }

    #[test]
    fn slit_exits_carry_sides() {
        let dom = builtin_domain("slit_disk").unwrap();
        let s = sample_exits(&dom, &[0.5, 0.3], 2000, 1e-4, 61).unwrap();
        let above = s.exits.iter().filter(|e| e.side == Some(SlitSide::Above)).count();
        let below = s.exits.iter().filter(|e| e.side == Some(SlitSide::Below)).count();
        // the pole sits above the slit: far more exits on the upper side
        assert!(above > 10 * below.max(1), "above {above}, below {below}");
    }

    #[test]
    fn exit_measure_aggregation_preserves_mass() {
        let dom = disk_domain();
        let s = sample_exits(&dom, &[0.2, 0.1], 5000, 1e-4, 67).unwrap();
        let full = s.to_measure();
        let agg = s.to_measure_aggregated(1e-3);
        assert!(agg.len() < full.len());
        assert!((agg.total_mass() - 1.0).abs() < 1e-9);
        assert!((full.total_mass() - 1.0).abs() < 1e-9);
    }
}
