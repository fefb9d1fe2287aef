//! Stopping-time machinery tying the lattice, measure, and transform layers
//! together: the doubling ball B0 and its checks, good/bad cube
//! classification against a harmonic-measure sample, growth and truncated
//! transform bounds on the good set, T1-hypothesis measurements, nice/ugly
//! classification of doubling cells, the Top/Next/Stop corona tree with its
//! packing ratio, and the L1 norm of the maximal transform on the tree's
//! good set.
//!
//! Two measures appear throughout: mu lives on its own atoms, while the
//! omega sample lives on exit points. Whenever a cell of an omega-lattice
//! needs a mu-mass, mu is pushed forward onto the omega support by
//! nearest-point attachment, which keeps all cell masses exactly additive
//! across the hierarchy.

use serde::Serialize;
use thiserror::Error;

use crate::geom::{dist, GridIndex};
use crate::lattice::{covering_by_doubling, CellId, DMLattice, LatticeError};
use crate::measure::{Ball, MeasureError, PointMeasure};
use crate::riesz::{maximal_riesz, operator_norm_l2, truncated_riesz, Atoms, OperatorNorm, RieszConfig};

#[derive(Debug, Error)]
pub enum CoronaError {
    #[error("precondition failed: {hypothesis} (lhs {lhs}, rhs {rhs})")]
    PreconditionFailed { hypothesis: String, lhs: f64, rhs: f64 },
    #[error("all mass of B0 is bad: A too small or omega/mu grossly mismatched")]
    EmptyG0,
    #[error("invalid stopping configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Stopping-time parameters. `lambda = 1 - eps/(2 C1 C2)` and
/// `alpha = 1/lambda` are derived.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StoppingConfig {
    /// Comparability threshold A for the bad-cube conditions.
    pub a: f64,
    pub eps: f64,
    pub eps_prime: f64,
    pub eta: f64,
    pub tau: f64,
    pub lambda0: f64,
    pub delta0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig {
            a: 50.0,
            eps: 0.1,
            eps_prime: 0.5,
            eta: 0.02,
            tau: 0.1,
            lambda0: 0.05,
            delta0: 0.125,
            c1: 10.0,
            c2: 40.0,
        }
    }
}

impl StoppingConfig {
    pub fn lambda(&self) -> f64 {
        1.0 - self.eps / (2.0 * self.c1 * self.c2)
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.lambda()
    }

    pub fn validate(&self) -> Result<(), CoronaError> {
        let bad = |msg: &str| Err(CoronaError::BadConfig(msg.to_string()));
        if !(self.a > 1.0) {
            return bad("A must exceed 1");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) || !(self.eps_prime > 0.0 && self.eps_prime < 1.0) {
            return bad("eps and eps_prime must lie in (0, 1)");
        }
        if !(self.eta > 0.0 && self.eta < 0.1) {
            return bad("eta must lie in (0, 1/10)");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.lambda0 > 0.0 && self.lambda0 < 1.0) {
            return bad("lambda0 must lie in (0, 1)");
        }
        if !(self.delta0 > 0.0 && self.delta0 < 1.0) {
            return bad("delta0 must lie in (0, 1)");
        }
        if !(self.c1 >= 1.0 && self.c2 >= 1.0) {
            return bad("C1 and C2 must be >= 1");
        }
        let l = self.lambda();
        if !(l > 0.5 && l < 1.0) {
            return bad("lambda = 1 - eps/(2 C1 C2) must lie in (1/2, 1)");
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// The ball B0

#[derive(Debug, Clone, Serialize)]
pub struct B0Report {
    pub b0: Ball,
    pub lambda: f64,
    /// mu(2 B0) <= 2 C2 mu(B0).
    pub mu_doubling_ok: bool,
    pub mu_2b0: f64,
    pub mu_b0: f64,
    /// mu(B) <= C2 mu(B0).
    pub mu_b_vs_b0_ok: bool,
    /// omega(lambda^{-1} B0) <= (1 - eps')^{-1} omega(B0), when an omega
    /// estimate is supplied.
    pub omega_doubling_ok: Option<bool>,
}

/// Builds `B0 = lambda B` and checks its doubling conclusions numerically on
/// the discrete measures. Preconditions (thin boundary, mass comparison with
/// the delta0/2 core) are verified first.
pub fn make_b0(
    mu: &PointMeasure,
    b: &Ball,
    omega: Option<&PointMeasure>,
    cfg: &StoppingConfig,
) -> Result<B0Report, CoronaError> {
    cfg.validate()?;
    let worst = mu.thin_boundary_worst(b);
    if worst > cfg.c1 {
        return Err(CoronaError::PreconditionFailed {
            hypothesis: "B has C1-thin boundary".into(),
            lhs: worst,
            rhs: cfg.c1,
        });
    }
    let mass_2b = mu.mass(&b.scaled(2.0));
    let mass_core = mu.mass(&b.scaled(cfg.delta0 / 2.0));
    if mass_2b > cfg.c2 * mass_core {
        return Err(CoronaError::PreconditionFailed {
            hypothesis: "mu(2B) <= C2 mu(delta0/2 B)".into(),
            lhs: mass_2b,
            rhs: cfg.c2 * mass_core,
        });
    }
    let lambda = cfg.lambda();
    let b0 = b.scaled(lambda);
    let mu_b0 = mu.mass(&b0);
    let mu_2b0 = mu.mass(&b0.scaled(2.0));
    let omega_doubling_ok = omega.map(|om| {
        let om_b0 = om.mass(&b0);
        let om_back = om.mass(&b0.scaled(1.0 / lambda));
        om_back <= om_b0 / (1.0 - cfg.eps_prime)
    });
    Ok(B0Report {
        mu_doubling_ok: mu_2b0 <= 2.0 * cfg.c2 * mu_b0,
        mu_2b0,
        mu_b0,
        mu_b_vs_b0_ok: mu.mass(b) <= cfg.c2 * mu_b0,
        omega_doubling_ok,
        b0,
        lambda,
    })
}

// ---------------------------------------------------------------------------
// mu attachment onto the omega support

/// Pushforward of `mu` onto the support of the lattice's base measure by
/// nearest-point attachment: entry i = attached mu-mass of support point i.
pub fn attach_mu(lat: &DMLattice, mu: &PointMeasure) -> Vec<f64> {
    let sigma = lat.base();
    let dim = sigma.dim();
    let mut attached = vec![0.0; sigma.len()];
    let spacing = {
        // starting search radius: a generous lattice scale
        let diam = sigma.support_diameter();
        (diam / (sigma.len() as f64)).max(1e-12)
    };
    let grid = GridIndex::build(sigma.coords(), dim, spacing.max(1e-12));
    for i in 0..mu.len() {
        let p = mu.point(i);
        let mut radius = spacing;
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..64 {
            for &j in &grid.candidates(p, radius) {
                let d = dist(p, sigma.point(j as usize));
                if best.map_or(true, |(bd, bj)| d < bd || (d == bd && (j as usize) < bj)) {
                    best = Some((d, j as usize));
                }
            }
            // the grid superset guarantees correctness once the best
            // candidate is within the scanned radius
            if let Some((d, _)) = best {
                if d <= radius {
                    break;
                }
            }
            radius *= 4.0;
        }
        let (_, j) = best.expect("nonempty sigma support");
        attached[j] += mu.weight(i);
    }
    attached
}

/// Per-cell masses of a point-level weighting (sum over cell members).
pub fn cell_masses(lat: &DMLattice, point_mass: &[f64]) -> Vec<Vec<f64>> {
    lat.generations
        .iter()
        .map(|cells| {
            cells
                .iter()
                .map(|c| c.members.iter().map(|&m| point_mass[m as usize]).sum())
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Bad cubes

#[derive(Debug, Clone, Serialize)]
pub struct BadCubeReport {
    pub bad1: Vec<CellId>,
    pub bad2: Vec<CellId>,
    pub omega_b0: f64,
    pub mu_b0: f64,
    pub omega_bad1: f64,
    pub mu_bad1: f64,
    pub omega_bad2: f64,
    pub mu_bad2: f64,
    pub omega_g0: f64,
    pub mu_g0: f64,
    /// Achieved mu(G0)/mu(B0) and omega(G0)/omega(B0).
    pub eps1_prime: f64,
    pub eps2_prime: f64,
    /// Achieved constants in the packing bounds:
    /// omega(Bad1) A / omega(B0) and mu(Bad2) A / mu(B0).
    pub bad1_packing_constant: f64,
    pub bad2_packing_constant: f64,
    /// Range of the normalized Poisson kernel
    /// (omega(Q)/omega(B0)) / (mu(Q)/mu(B0)) over good leaf cells in B0.
    pub poisson_lower: f64,
    pub poisson_upper: f64,
    /// Good leaf cells inside B0 with zero attached mu mass (outside the
    /// tested region); excluded from the kernel range.
    pub poisson_skipped_cells: usize,
    /// sigma-point indices of G0 = B0 minus the bad cubes.
    pub g0_points: Vec<u32>,
    /// Per sigma-point flag: belongs to some bad cube.
    pub point_is_bad: Vec<bool>,
}

/// Top-down scan for the maximal cells of the omega-lattice inside
/// `alpha B0` where one of the two mass-comparison conditions fails, plus
/// the G0 mass bounds and the empirical Poisson-kernel range.
///
/// `min_extent` is the resolution floor: cells whose extent `56 r(Q)` falls
/// below it are not tested (both discretizations stop being faithful there);
/// pass 0 to test every built cell.
pub fn classify_bad(
    lat_omega: &DMLattice,
    attached_mu: &[f64],
    b0: &Ball,
    cfg: &StoppingConfig,
    min_extent: f64,
) -> Result<BadCubeReport, CoronaError> {
    cfg.validate()?;
    let sigma = lat_omega.base();
    let alpha = cfg.alpha();
    let alpha_b0 = b0.scaled(alpha);

    let in_b0: Vec<bool> = (0..sigma.len()).map(|i| b0.contains(sigma.point(i))).collect();
    let omega_b0: f64 = (0..sigma.len())
        .filter(|&i| in_b0[i])
        .map(|i| sigma.weight(i))
        .sum();
    let mu_b0: f64 = (0..sigma.len()).filter(|&i| in_b0[i]).map(|i| attached_mu[i]).sum();
    if omega_b0 <= 0.0 || mu_b0 <= 0.0 {
        return Err(CoronaError::PreconditionFailed {
            hypothesis: "B0 carries both omega and mu mass".into(),
            lhs: omega_b0.min(mu_b0),
            rhs: 0.0,
        });
    }

    let omega_cells = cell_masses(lat_omega, sigma.weights());
    let mu_cells = cell_masses(lat_omega, attached_mu);

    // hm-stop: omega(Q) mu(B0) <= A^{-1} mu(Q) omega(B0)
    // mu-stop: mu(Q) omega(B0) <= A^{-1} omega(Q) mu(B0)
    let mut bad1 = Vec::new();
    let mut bad2 = Vec::new();
    let mut point_is_bad = vec![false; sigma.len()];
    let mut stack: Vec<CellId> = (0..lat_omega.generations[0].len()).map(|i| (0, i)).collect();
    stack.reverse();
    while let Some(id) = stack.pop() {
        let cell = lat_omega.cell(id);
        if 56.0 * lat_omega.nominal_radius(id.0) < min_extent {
            continue; // below the resolution floor: untested, stays good
        }
        let contained = cell
            .members
            .iter()
            .all(|&m| alpha_b0.contains(sigma.point(m as usize)));
        if contained {
            let om = omega_cells[id.0][id.1];
            let mm = mu_cells[id.0][id.1];
            let hm_stop = om * mu_b0 <= mm * omega_b0 / cfg.a;
            let mu_stop = mm * omega_b0 <= om * mu_b0 / cfg.a;
            if hm_stop || mu_stop {
                if hm_stop {
                    bad1.push(id);
                } else {
                    bad2.push(id);
                }
                for &m in &cell.members {
                    point_is_bad[m as usize] = true;
                }
                continue;
            }
        }
        if id.0 + 1 < lat_omega.num_generations() {
            let mut kids = lat_omega.children_of(id);
            kids.sort();
            for k in kids.into_iter().rev() {
                stack.push(k);
            }
        }
    }

    let sum_over = |pred: &dyn Fn(usize) -> bool, mass: &dyn Fn(usize) -> f64| -> f64 {
        (0..sigma.len()).filter(|&i| pred(i)).map(mass).sum()
    };
    let omega_of_cells = |ids: &[CellId]| -> f64 {
        ids.iter().map(|&id| omega_cells[id.0][id.1]).sum()
    };
    let mu_of_cells =
        |ids: &[CellId]| -> f64 { ids.iter().map(|&id| mu_cells[id.0][id.1]).sum() };

    let omega_bad1 = omega_of_cells(&bad1);
    let omega_bad2 = omega_of_cells(&bad2);
    let mu_bad1 = mu_of_cells(&bad1);
    let mu_bad2 = mu_of_cells(&bad2);

    let g0_points: Vec<u32> = (0..sigma.len())
        .filter(|&i| in_b0[i] && !point_is_bad[i])
        .map(|i| i as u32)
        .collect();
    let omega_g0 = sum_over(&|i| in_b0[i] && !point_is_bad[i], &|i| sigma.weight(i));
    let mu_g0 = sum_over(&|i| in_b0[i] && !point_is_bad[i], &|i| attached_mu[i]);
    if omega_g0 <= 0.0 {
        return Err(CoronaError::EmptyG0);
    }

    // Poisson-kernel range over the good cells of the deepest generation
    // still above the resolution floor.
    let deep = (0..lat_omega.num_generations())
        .rev()
        .find(|&g| 56.0 * lat_omega.nominal_radius(g) >= min_extent)
        .unwrap_or(0);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut skipped = 0usize;
    for (ci, cell) in lat_omega.generations[deep].iter().enumerate() {
        let all_good_in_b0 = cell
            .members
            .iter()
            .all(|&m| in_b0[m as usize] && !point_is_bad[m as usize]);
        if !all_good_in_b0 {
            continue;
        }
        let mm = mu_cells[deep][ci];
        if mm == 0.0 {
            skipped += 1;
            continue;
        }
        let k = (omega_cells[deep][ci] / omega_b0) / (mm / mu_b0);
        lo = lo.min(k);
        hi = hi.max(k);
    }

    Ok(BadCubeReport {
        bad1,
        bad2,
        omega_b0,
        mu_b0,
        omega_bad1,
        mu_bad1,
        omega_bad2,
        mu_bad2,
        omega_g0,
        mu_g0,
        eps1_prime: mu_g0 / mu_b0,
        eps2_prime: omega_g0 / omega_b0,
        bad1_packing_constant: omega_bad1 * cfg.a / omega_b0,
        bad2_packing_constant: mu_bad2 * cfg.a / mu_b0,
        poisson_lower: lo,
        poisson_upper: hi,
        poisson_skipped_cells: skipped,
        g0_points,
        point_is_bad,
    })
}

/// Good flags per cell: a cell is good when neither it nor any ancestor is a
/// bad cube.
pub fn good_cell_flags(lat: &DMLattice, report: &BadCubeReport) -> Vec<Vec<bool>> {
    let mut bad_set: std::collections::BTreeSet<CellId> = std::collections::BTreeSet::new();
    for &id in report.bad1.iter().chain(&report.bad2) {
        bad_set.insert(id);
    }
    let mut flags: Vec<Vec<bool>> = Vec::with_capacity(lat.num_generations());
    for g in 0..lat.num_generations() {
        let row: Vec<bool> = lat.generations[g]
            .iter()
            .enumerate()
            .map(|(ci, cell)| {
                if bad_set.contains(&(g, ci)) {
                    return false;
                }
                match cell.parent {
                    None => true,
                    Some(p) => flags[g - 1][p],
                }
            })
            .collect();
        flags.push(row);
    }
    flags
}

// ---------------------------------------------------------------------------
// Growth of omega on good cells

#[derive(Debug, Clone, Serialize)]
pub struct GrowthCheck {
    /// Max over admissible good cells of
    /// omega(100B(Q)) mu(B0) / (omega(B0) l(Q)^n).
    pub worst_cell_constant: f64,
    pub cells_checked: usize,
    /// Max over sampled G0 points of
    /// sup_{r >= l(Q_x)} omega(B(x, r)) mu(B0) / (omega(B0) r^n).
    pub worst_ball_constant: f64,
    pub points_checked: usize,
}

/// Deterministic evenly-spaced subsample of `0..len` with at most `cap`
/// entries.
pub fn stride_sample(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    (0..cap).map(|i| i * len / cap).collect()
}

/// sup over r >= lo of `mass(closed B(x, r)) / r^n` on a point weighting,
/// exact via breakpoint radii.
fn sup_density_from(
    sigma: &PointMeasure,
    weights: &[f64],
    x: &[f64],
    lo: f64,
    n: i32,
) -> f64 {
    let mut dists: Vec<(f64, f64)> = (0..sigma.len())
        .map(|i| (dist(x, sigma.point(i)), weights[i]))
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut prefix = 0.0;
    let mut at_lo = 0.0;
    let mut best = 0.0f64;
    for &(d, w) in &dists {
        prefix += w;
        if d <= lo {
            at_lo = prefix;
            continue;
        }
        best = best.max(prefix / d.powi(n));
    }
    best.max(at_lo / lo.powi(n))
}

pub fn growth_check(
    lat_omega: &DMLattice,
    report: &BadCubeReport,
    b0: &Ball,
    cfg: &StoppingConfig,
    ball_sample_cap: usize,
) -> GrowthCheck {
    let sigma = lat_omega.base();
    let n = sigma.n() as i32;
    let alpha = cfg.alpha();
    let good = good_cell_flags(lat_omega, report);
    let norm = report.mu_b0 / report.omega_b0;

    let mut worst_cell = 0.0f64;
    let mut checked = 0usize;
    for g in 0..lat_omega.num_generations() {
        for ci in 0..lat_omega.generations[g].len() {
            if !good[g][ci] {
                continue;
            }
            let id = (g, ci);
            let cell = lat_omega.cell(id);
            let z = sigma.point(cell.center);
            // 100 B(Q) inside alpha B0, and Q meets B0
            if dist(z, &b0.center) + 100.0 * cell.radius > alpha * b0.radius {
                continue;
            }
            if !cell.members.iter().any(|&m| b0.contains(sigma.point(m as usize))) {
                continue;
            }
            let om_100 = lat_omega.scaled_ball_mass(id, 100.0);
            let ell = lat_omega.side_length(id);
            worst_cell = worst_cell.max(om_100 * norm / ell.powi(n));
            checked += 1;
        }
    }

    // ball version over G0 points: r ranges over [l(Q_x), infinity) with
    // Q_x the smallest good cell containing x
    let mut worst_ball = 0.0f64;
    let sample = stride_sample(report.g0_points.len(), ball_sample_cap);
    for &si in &sample {
        let p = report.g0_points[si] as usize;
        let mut lo = lat_omega.side_length((lat_omega.leaf_generation(), 0));
        for g in (0..lat_omega.num_generations()).rev() {
            let id = lat_omega.cell_of_point(g, p);
            if good[g][id.1] {
                lo = lat_omega.side_length(id);
                break;
            }
        }
        let sup = sup_density_from(sigma, sigma.weights(), sigma.point(p), lo, n);
        worst_ball = worst_ball.max(sup * norm);
    }

    GrowthCheck {
        worst_cell_constant: worst_cell,
        cells_checked: checked,
        worst_ball_constant: worst_ball,
        points_checked: sample.len(),
    }
}

// ---------------------------------------------------------------------------
// Key-lemma transform bound on the probe family

#[derive(Debug, Clone, Serialize)]
pub struct KeyLemmaCheck {
    /// Max over probe cells Q and member points z of
    /// |R_{l(Q)} omega(z)| mu(B0) / omega(B0).
    pub worst_truncated: f64,
    pub probe_cells: usize,
    pub eval_points: usize,
    /// Max over sampled G0 \ B(x_B, eta r(B)) points of the maximal
    /// transform, same normalization.
    pub worst_maximal: f64,
    pub maximal_points: usize,
    /// No cell satisfied the probe side conditions.
    pub vacuous: bool,
}

/// Side conditions verbatim: Q good, Q meets `B0 \ B(x_B, eta r(B))`,
/// `100B(Q) subset B`, `delta0 r(B_Q) <= eta r(B)` (with `B_Q = 28 B(Q)`),
/// and Q avoiding `B(x_B, eta r(B) / 2)`.
#[allow(clippy::too_many_arguments)]
pub fn key_lemma_check(
    lat_omega: &DMLattice,
    omega_full: &PointMeasure,
    report: &BadCubeReport,
    b0: &Ball,
    b: &Ball,
    x_b: &[f64],
    cfg: &StoppingConfig,
    per_cell_cap: usize,
    maximal_cap: usize,
) -> KeyLemmaCheck {
    let sigma = lat_omega.base();
    let rcfg = RieszConfig::standard(sigma.n());
    let good = good_cell_flags(lat_omega, report);
    let norm = report.mu_b0 / report.omega_b0;
    let eta_r = cfg.eta * b.radius;
    let atoms = Atoms::from_measure(omega_full);

    let mut worst = 0.0f64;
    let mut probe_cells = 0usize;
    let mut eval_points = 0usize;
    for g in 0..lat_omega.num_generations() {
        for ci in 0..lat_omega.generations[g].len() {
            if !good[g][ci] {
                continue;
            }
            let id = (g, ci);
            let cell = lat_omega.cell(id);
            let z = sigma.point(cell.center);
            if dist(z, &b.center) + 100.0 * cell.radius > b.radius {
                continue;
            }
            if cfg.delta0 * 28.0 * cell.radius > eta_r {
                continue;
            }
            let meets = cell.members.iter().any(|&m| {
                let p = sigma.point(m as usize);
                b0.contains(p) && dist(p, x_b) > eta_r
            });
            if !meets {
                continue;
            }
            let avoids_half = cell
                .members
                .iter()
                .all(|&m| dist(sigma.point(m as usize), x_b) > eta_r / 2.0);
            if !avoids_half {
                continue;
            }
            probe_cells += 1;
            let ell = lat_omega.side_length(id);
            for &mi in stride_sample(cell.members.len(), per_cell_cap)
                .iter()
                .map(|&k| &cell.members[k])
            {
                let zp = sigma.point(mi as usize);
                let v = truncated_riesz(&rcfg, atoms, None, zp, ell);
                worst = worst.max(crate::geom::norm3(v) * norm);
                eval_points += 1;
            }
        }
    }

    // maximal version on G0 \ B(x_B, eta r(B))
    let tilde: Vec<u32> = report
        .g0_points
        .iter()
        .copied()
        .filter(|&p| dist(sigma.point(p as usize), x_b) > eta_r)
        .collect();
    let mut worst_max = 0.0f64;
    let msample = stride_sample(tilde.len(), maximal_cap);
    for &si in &msample {
        let p = tilde[si] as usize;
        let v = maximal_riesz(&rcfg, atoms, None, sigma.point(p), 0.0);
        worst_max = worst_max.max(v * norm);
    }

    KeyLemmaCheck {
        worst_truncated: worst,
        probe_cells,
        eval_points,
        worst_maximal: worst_max,
        maximal_points: msample.len(),
        vacuous: probe_cells == 0,
    }
}

// ---------------------------------------------------------------------------
// T1 hypotheses on nu

#[derive(Debug, Clone, Serialize)]
pub struct T1Check {
    /// Achieved growth constant: max over sampled G1 centers of
    /// sup_{r > nn(x)} nu(B(x,r))/r^n.
    pub c4: f64,
    /// Achieved mean of the maximal transform over nu restricted to G1,
    /// divided by |nu|.
    pub c5: f64,
    /// nu(H)/|nu| with H = alpha B0 minus G1.
    pub delta1: f64,
    pub nu_total: f64,
    pub nu_g1: f64,
    pub g1_points: usize,
    /// |nu| vs mu(B0): the ratio and whether it is within (1-eps')^{-1}.
    pub nu_vs_mu_b0_ratio: f64,
    pub nu_vs_mu_b0_ok: bool,
    /// G1 carries at least eps2'/3 of omega(B0).
    pub g1_mass_ok: bool,
    /// Direct operator norm of the truncated transform on (a subsample of)
    /// G1 under nu.
    pub operator_norm: OperatorNorm,
    pub operator_norm_points: usize,
    pub operator_norm_eps: f64,
}

/// Measures the three hypotheses of the T1 theorem on
/// `nu = (mu(B0)/omega(B0)) omega|_{alpha B0}` with `H = alpha B0 \ G1`,
/// `G1 = G0 \ B(x_B, eta r(B))`, and measures the operator norm on G1
/// directly instead of asserting the theorem's conclusion.
#[allow(clippy::too_many_arguments)]
pub fn t1_hypotheses(
    lat_omega: &DMLattice,
    report: &BadCubeReport,
    b0: &Ball,
    b: &Ball,
    x_b: &[f64],
    cfg: &StoppingConfig,
    sample_cap: usize,
    norm_cap: usize,
    norm_eps: f64,
) -> T1Check {
    let sigma = lat_omega.base();
    let n = sigma.n() as i32;
    let rcfg = RieszConfig::standard(sigma.n());
    let alpha_b0 = b0.scaled(cfg.alpha());
    let scale = report.mu_b0 / report.omega_b0;

    // nu atoms: sigma points inside alpha B0 with scaled weights
    let idx: Vec<usize> =
        (0..sigma.len()).filter(|&i| alpha_b0.contains(sigma.point(i))).collect();
    let nu_points: Vec<Vec<f64>> = idx.iter().map(|&i| sigma.point(i).to_vec()).collect();
    let nu_weights: Vec<f64> = idx.iter().map(|&i| sigma.weight(i) * scale).collect();
    let nu = PointMeasure::from_points(sigma.n(), &nu_points, nu_weights).unwrap();
    let nu_total = nu.total_mass();

    let eta_r = cfg.eta * b.radius;
    let in_g1: Vec<bool> = idx
        .iter()
        .map(|&i| {
            b0.contains(sigma.point(i))
                && !report.point_is_bad[i]
                && dist(sigma.point(i), x_b) > eta_r
        })
        .collect();
    let g1: Vec<usize> = (0..idx.len()).filter(|&k| in_g1[k]).collect();
    let nu_g1: f64 = g1.iter().map(|&k| nu.weight(k)).sum();
    let omega_g1: f64 = g1.iter().map(|&k| sigma.weight(idx[k])).sum();

    // C4 over sampled G1 centers, with the per-center resolution floor at
    // the nearest-neighbor distance
    let mut c4 = 0.0f64;
    let sample = stride_sample(g1.len(), sample_cap);
    for &si in &sample {
        let k = g1[si];
        let x = nu.point(k);
        let mut nn = f64::INFINITY;
        for j in 0..nu.len() {
            if j != k {
                let d = dist(x, nu.point(j));
                if d > 0.0 {
                    nn = nn.min(d);
                }
            }
        }
        if !nn.is_finite() {
            continue;
        }
        let md = crate::riesz::maximal_density(&rcfg, Atoms::from_measure(&nu), x, nn);
        c4 = c4.max(md.value);
    }

    // C5: ratio-estimated integral of the maximal transform over G1
    let mut c5_sum = 0.0;
    let mut c5_weight = 0.0;
    for &si in &sample {
        let k = g1[si];
        let v = maximal_riesz(&rcfg, Atoms::from_measure(&nu), None, nu.point(k), 0.0);
        c5_sum += v * nu.weight(k);
        c5_weight += nu.weight(k);
    }
    let c5 = if c5_weight > 0.0 { c5_sum / c5_weight * nu_g1 / nu_total } else { 0.0 };

    let delta1 = 1.0 - nu_g1 / nu_total;
    let ratio = nu_total / report.mu_b0;
    let g1_mass_ok = omega_g1 >= report.eps2_prime / 3.0 * report.omega_b0;

    // direct norm measurement on (a subsample of) G1
    let norm_subset: Vec<usize> = stride_sample(g1.len(), norm_cap)
        .iter()
        .map(|&si| g1[si])
        .collect();
    let operator_norm = if norm_subset.is_empty() {
        OperatorNorm { norm: 0.0, iterations: 0, converged: true }
    } else {
        operator_norm_l2(&rcfg, &nu, &norm_subset, norm_eps)
    };

    let _ = n;
    T1Check {
        c4,
        c5,
        delta1,
        nu_total,
        nu_g1,
        g1_points: g1.len(),
        nu_vs_mu_b0_ratio: ratio,
        nu_vs_mu_b0_ok: ratio <= 1.0 / (1.0 - cfg.eps_prime) + 1e-12,
        g1_mass_ok,
        operator_norm,
        operator_norm_points: norm_subset.len(),
        operator_norm_eps: norm_eps,
    }
}

// ---------------------------------------------------------------------------
// Nice / ugly classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellLabel {
    Nice,
    Ugly,
}

#[derive(Debug, Clone, Serialize)]
pub struct NiceUgly {
    pub label: CellLabel,
    pub ball_b_prime: Ball,
    pub ball_b: Ball,
    pub x_b: Vec<f64>,
    /// No domain was attached; x_B is the densest-core proxy point.
    pub x_b_is_proxy: bool,
    /// lambda0 after the halving loop that guarantees
    /// mu(Q_{lambda0}) >= mu(Q)/2.
    pub lambda0_used: f64,
    pub core_mass: f64,
    pub cell_mass: f64,
    /// mu(B(x_B, eta r(B))) against tau mu(B).
    pub witness_mass: f64,
    pub tau_threshold: f64,
    /// 2B cap supp mu inside Q (the containment behind the construction).
    pub two_b_inside_cell: bool,
    /// For nice cells: mu-atom indices of the candidate good set
    /// G_Q = atoms in lambda B minus B(x_B, eta r(B)).
    pub good_set: Vec<u32>,
    pub separation: f64,
    pub separation_ok: bool,
}

/// Labels a doubling cell nice or ugly via the directly testable mass
/// alternative: ugly iff `mu(B(x_B, eta r(B))) >= tau mu(B)`.
pub fn classify_nice_ugly(
    lat_mu: &DMLattice,
    id: CellId,
    domain: Option<&crate::harmonic::Domain>,
    cfg: &StoppingConfig,
    corkscrew_samples: usize,
) -> Result<NiceUgly, CoronaError> {
    cfg.validate()?;
    let mu = lat_mu.base();
    let cell = lat_mu.cell(id);
    if !cell.doubling {
        return Err(CoronaError::PreconditionFailed {
            hypothesis: "cell is doubling".into(),
            lhs: 0.0,
            rhs: 1.0,
        });
    }
    // Cell extent: members live in 28 B(Q), so diam(Q) <= 56 r(Q). The
    // nominal side length 56 C0 A0^-k overestimates this by C0 here because
    // the construction pins r(Q) at the lower end of its range; the ball
    // construction must track the true extent.
    let ell = 56.0 * cell.radius;
    let members = &cell.members;
    let in_cell: std::collections::BTreeSet<u32> = members.iter().copied().collect();

    // distance from each member to supp mu \ Q
    let dist_out: Vec<f64> = members
        .iter()
        .map(|&m| {
            let p = mu.point(m as usize);
            let mut d = f64::INFINITY;
            for j in 0..mu.len() {
                if !in_cell.contains(&(j as u32)) {
                    d = d.min(dist(p, mu.point(j)));
                }
            }
            d
        })
        .collect();

    // shrink lambda0 until the core keeps half the mass
    let mut lambda0 = cfg.lambda0;
    let cell_mass = cell.mass;
    let mut core_idx: Vec<usize>;
    let mut core_mass: f64;
    loop {
        core_idx = (0..members.len())
            .filter(|&k| dist_out[k] >= lambda0 * ell)
            .collect();
        core_mass = core_idx.iter().map(|&k| mu.weight(members[k] as usize)).sum();
        if core_mass >= cell_mass / 2.0 || lambda0 < 1e-12 {
            break;
        }
        lambda0 /= 2.0;
    }
    if core_mass < cell_mass / 2.0 {
        return Err(CoronaError::PreconditionFailed {
            hypothesis: "mu(Q_lambda0) >= mu(Q)/2".into(),
            lhs: core_mass,
            rhs: cell_mass / 2.0,
        });
    }

    // B': max-mass ball with center in the core
    let r_prime = cfg.delta0 * lambda0 / 10.0 * ell;
    let mut best: Option<(f64, usize)> = None;
    for &k in &core_idx {
        let c = mu.point(members[k] as usize);
        let m = mu.mass(&Ball::new(c.to_vec(), r_prime));
        if best.map_or(true, |(bm, _)| m > bm) {
            best = Some((m, k));
        }
    }
    let (_, best_k) = best.expect("core is nonempty");
    let b_prime = Ball::new(mu.point(members[best_k] as usize).to_vec(), r_prime);

    // thin-boundary companion ball
    let (lo, hi) = crate::measure::thin_ball_window(&b_prime, cfg.delta0);
    let ball_b = mu.find_thin_boundary_ball(&b_prime, lo, hi, cfg.c1)?;

    // pole: corkscrew in kappa B with kappa = delta0/2 when a domain is
    // attached; otherwise the densest proxy in kappa B at the eta r(B)
    // scale, which makes the ugly test a concentration measurement
    let kappa = cfg.delta0 / 2.0;
    let densest_proxy = || -> Vec<f64> {
        let kappa_b = ball_b.scaled(kappa);
        let mut best: Option<(f64, usize)> = None;
        for &m in members.iter() {
            let p = mu.point(m as usize);
            if !kappa_b.contains(p) {
                continue;
            }
            let mass = mu.mass(&Ball::new(p.to_vec(), cfg.eta * ball_b.radius));
            if best.map_or(true, |(bm, _)| mass > bm) {
                best = Some((mass, m as usize));
            }
        }
        match best {
            Some((_, m)) => mu.point(m).to_vec(),
            None => b_prime.center.clone(),
        }
    };
    let (x_b, proxy) = match domain {
        Some(dom) => match crate::harmonic::corkscrew_point(
            dom,
            &ball_b.center,
            kappa * ball_b.radius,
            corkscrew_samples,
        ) {
            Ok(c) => (c.point, false),
            Err(_) => (densest_proxy(), true),
        },
        None => (densest_proxy(), true),
    };

    let witness = mu.mass(&Ball::new(x_b.clone(), cfg.eta * ball_b.radius));
    let mass_b = mu.mass(&ball_b);
    let threshold = cfg.tau * mass_b;
    let label = if witness >= threshold { CellLabel::Ugly } else { CellLabel::Nice };

    let two_b = ball_b.scaled(2.0);
    let two_b_inside_cell = (0..mu.len())
        .filter(|&j| two_b.contains(mu.point(j)))
        .all(|j| in_cell.contains(&(j as u32)));

    let mut good_set = Vec::new();
    let mut separation = f64::INFINITY;
    if label == CellLabel::Nice {
        let lambda_b = ball_b.scaled(cfg.lambda());
        let eta_ball = Ball::new(x_b.clone(), cfg.eta * ball_b.radius);
        for &m in members.iter() {
            let p = mu.point(m as usize);
            if lambda_b.contains(p) && !eta_ball.contains(p) {
                good_set.push(m);
            }
        }
        for &m in &good_set {
            let p = mu.point(m as usize);
            for j in 0..mu.len() {
                if !in_cell.contains(&(j as u32)) {
                    separation = separation.min(dist(p, mu.point(j)));
                }
            }
        }
    }
    let separation_ok = good_set.is_empty() || separation >= ball_b.radius;

    Ok(NiceUgly {
        label,
        ball_b_prime: b_prime,
        ball_b,
        x_b,
        x_b_is_proxy: proxy,
        lambda0_used: lambda0,
        core_mass,
        cell_mass,
        witness_mass: witness,
        tau_threshold: threshold,
        two_b_inside_cell,
        good_set,
        separation: if separation.is_finite() { separation } else { 0.0 },
        separation_ok,
    })
}

// ---------------------------------------------------------------------------
// Corona tree

#[derive(Debug, Clone, Serialize)]
pub struct CoronaNode {
    pub cell: CellId,
    pub level: usize,
    pub info: NiceUgly,
    pub stop: Vec<CellId>,
    pub next: Vec<CellId>,
    /// Mass of stop cells with no doubling descendant in the built
    /// generations (drops out of the tree).
    pub next_uncovered_mass: f64,
    pub density_gain_lhs: f64,
    pub density_gain_rhs: f64,
    pub density_gain_ok: bool,
    pub depth_exhausted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoronaTree {
    pub root: CellId,
    pub nodes: Vec<CoronaNode>,
    /// Node indices per Top level.
    pub levels: Vec<Vec<usize>>,
    /// Sum over Top of Theta(Q) mu(Q) divided by mu(root).
    pub packing_ratio: f64,
    /// Per-level partial sums of Theta(Q) mu(Q).
    pub level_sums: Vec<f64>,
}

/// Builds the Top/Next/Stop corona tree from a doubling root: nice cells are
/// leaves; an ugly cell stops at the generation of `P_Q`, the smallest
/// doubling ancestor of the densest cell at scale `eta r(B)` near the pole,
/// and recurses into the maximal doubling descendants of its stop cells.
pub fn build_corona(
    lat_mu: &DMLattice,
    root: CellId,
    domain: Option<&crate::harmonic::Domain>,
    cfg: &StoppingConfig,
    corkscrew_samples: usize,
) -> Result<CoronaTree, CoronaError> {
    cfg.validate()?;
    let mu = lat_mu.base();
    if !lat_mu.cell(root).doubling {
        return Err(CoronaError::PreconditionFailed {
            hypothesis: "corona root is doubling".into(),
            lhs: 0.0,
            rhs: 1.0,
        });
    }

    let mut nodes: Vec<CoronaNode> = Vec::new();
    let mut levels: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<CellId> = vec![root];
    let mut level = 0usize;
    while !current.is_empty() {
        let mut next_level: Vec<CellId> = Vec::new();
        let mut level_nodes = Vec::new();
        for &q in &current {
            let info = classify_nice_ugly(lat_mu, q, domain, cfg, corkscrew_samples)?;
            // singleton cells cannot be subdivided further: an ugly
            // singleton is a forced leaf, like hitting the lattice bottom
            let deepest =
                q.0 == lat_mu.leaf_generation() || lat_mu.cell(q).members.len() == 1;
            let mut stop = Vec::new();
            let mut next = Vec::new();
            let mut uncovered = 0.0;
            let mut density_gain_lhs = 0.0;
            let density_gain_rhs = 2.0 * lat_mu.cell_density(q) * lat_mu.cell(q).mass;
            let mut depth_exhausted = false;

            if info.label == CellLabel::Ugly {
                if deepest {
                    depth_exhausted = true;
                } else {
                    // densest cell at extent ~ eta r(B) near the pole
                    let target = cfg.eta * info.ball_b.radius;
                    let mut k_star = q.0 + 1;
                    let mut best_gap = f64::INFINITY;
                    for g in (q.0 + 1)..lat_mu.num_generations() {
                        let extent = 56.0 * lat_mu.nominal_radius(g);
                        let gap = (extent / target).ln().abs();
                        if gap < best_gap {
                            best_gap = gap;
                            k_star = g;
                        }
                    }
                    let eta_ball = Ball::new(info.x_b.clone(), target);
                    let mut best: Option<(f64, CellId)> = None;
                    for ci in 0..lat_mu.generations[k_star].len() {
                        let id = (k_star, ci);
                        if !lat_mu.contains(q, id) {
                            continue;
                        }
                        let meets = lat_mu
                            .cell(id)
                            .members
                            .iter()
                            .any(|&m| eta_ball.contains(mu.point(m as usize)));
                        if !meets {
                            continue;
                        }
                        let m = lat_mu.cell(id).mass;
                        if best.as_ref().map_or(true, |(bm, _)| m > *bm) {
                            best = Some((m, id));
                        }
                    }
                    // the ugly witness mass guarantees some cell meets the
                    // ball; fall back to the pole's own chain if not
                    let p_tilde = match best {
                        Some((_, id)) => id,
                        None => {
                            let mut nearest = (f64::INFINITY, 0usize);
                            for &m in &lat_mu.cell(q).members {
                                let d = dist(mu.point(m as usize), &info.x_b);
                                if d < nearest.0 {
                                    nearest = (d, m as usize);
                                }
                            }
                            lat_mu.cell_of_point(k_star, nearest.1)
                        }
                    };
                    // smallest doubling ancestor within Q, at least one
                    // generation below Q so the recursion always descends
                    let mut p_q = p_tilde;
                    while p_q.0 > q.0 + 1 && !lat_mu.cell(p_q).doubling {
                        p_q = lat_mu.parent_of(p_q).unwrap();
                    }
                    let stop_gen = p_q.0.max(q.0 + 1);
                    for ci in 0..lat_mu.generations[stop_gen].len() {
                        let id = (stop_gen, ci);
                        if lat_mu.contains(q, id) {
                            stop.push(id);
                        }
                    }
                    for &p in &stop {
                        let (family, unc) = covering_by_doubling(lat_mu, p);
                        uncovered += unc;
                        for f in family {
                            density_gain_lhs += lat_mu.cell_density(f) * lat_mu.cell(f).mass;
                            next.push(f);
                        }
                    }
                    next_level.extend(next.iter().copied());
                }
            }

            // the density-gain check is only meaningful for ugly nodes that actually stopped
            let node = CoronaNode {
                cell: q,
                level,
                density_gain_ok: info.label == CellLabel::Nice
                    || depth_exhausted
                    || density_gain_lhs >= density_gain_rhs,
                info,
                stop,
                next,
                next_uncovered_mass: uncovered,
                density_gain_lhs,
                density_gain_rhs,
                depth_exhausted,
            };
            level_nodes.push(nodes.len());
            nodes.push(node);
        }
        levels.push(level_nodes);
        current = next_level;
        level += 1;
    }

    let mut level_sums = Vec::with_capacity(levels.len());
    let mut total = 0.0;
    for lvl in &levels {
        let s: f64 = lvl
            .iter()
            .map(|&ni| {
                let c = nodes[ni].cell;
                lat_mu.cell_density(c) * lat_mu.cell(c).mass
            })
            .sum();
        level_sums.push(s);
        total += s;
    }
    let packing_ratio = total / lat_mu.cell(root).mass;

    Ok(CoronaTree { root, nodes, levels, packing_ratio, level_sums })
}

/// `sum_{Q in Top} Theta(Q) mu(Q) / mu(root)`.
pub fn packing_check(tree: &CoronaTree) -> f64 {
    tree.packing_ratio
}

/// JSON export of the corona tree.
pub fn corona_to_json(tree: &CoronaTree, lat: &DMLattice) -> String {
    #[derive(Serialize)]
    struct NodeDoc {
        cell: CellId,
        level: usize,
        label: CellLabel,
        stop: Vec<CellId>,
        next: Vec<CellId>,
        theta_mu: f64,
        density_gain_lhs: f64,
        density_gain_rhs: f64,
        density_gain_ok: bool,
        depth_exhausted: bool,
    }
    #[derive(Serialize)]
    struct Doc {
        root: CellId,
        packing_ratio: f64,
        level_sums: Vec<f64>,
        nodes: Vec<NodeDoc>,
    }
    let nodes = tree
        .nodes
        .iter()
        .map(|n| NodeDoc {
            cell: n.cell,
            level: n.level,
            label: n.info.label,
            stop: n.stop.clone(),
            next: n.next.clone(),
            theta_mu: lat.cell_density(n.cell) * lat.cell(n.cell).mass,
            density_gain_lhs: n.density_gain_lhs,
            density_gain_rhs: n.density_gain_rhs,
            density_gain_ok: n.density_gain_ok,
            depth_exhausted: n.depth_exhausted,
        })
        .collect();
    serde_json::to_string_pretty(&Doc {
        root: tree.root,
        packing_ratio: tree.packing_ratio,
        level_sums: tree.level_sums.clone(),
        nodes,
    })
    .expect("corona serialization cannot fail")
}

// ---------------------------------------------------------------------------
// L1 norm of the maximal transform on the tree's good set

#[derive(Debug, Clone, Serialize)]
pub struct RStarCheck {
    /// ||R_* nu||_{L^1(nu)} / nu(R) with nu = mu restricted to the good set.
    pub normalized_l1: f64,
    pub nu_atoms: usize,
    pub nu_mass: f64,
    /// Mass of ugly leaves at the lattice bottom: unresolved at this depth
    /// and excluded from nu (in the continuum limit it shrinks to the
    /// measure-zero intersection of infinite ugly chains).
    pub unresolved_mass: f64,
    /// L1 contributions of the scale decomposition: the tail beyond r(B(R)),
    /// the ugly-level double truncations, and the nice-level local parts.
    pub tail_l1: f64,
    pub ugly_l1: f64,
    pub nice_l1: f64,
}

/// Assembles `nu = mu|_{G_R}` from the tree's nice good sets, computes the
/// maximal transform at every nu atom exactly, and reports the normalized
/// L1 norm together with the per-scale decomposition.
pub fn r_star_l1_check(tree: &CoronaTree, lat_mu: &DMLattice, atom_cap: usize) -> RStarCheck {
    let mu = lat_mu.base();
    let rcfg = RieszConfig::standard(mu.n());

    // G_R = (R \ union of nice cells) cup (union of nice good sets), minus
    // the depth-exhausted ugly leaves (unresolved mass)
    let mut keep: std::collections::BTreeSet<u32> =
        lat_mu.cell(tree.root).members.iter().copied().collect();
    let mut unresolved_mass = 0.0;
    for node in &tree.nodes {
        if node.info.label == CellLabel::Nice {
            for &m in &lat_mu.cell(node.cell).members {
                keep.remove(&m);
            }
        } else if node.depth_exhausted {
            for &m in &lat_mu.cell(node.cell).members {
                if keep.remove(&m) {
                    unresolved_mass += mu.weight(m as usize);
                }
            }
        }
    }
    for node in &tree.nodes {
        if node.info.label == CellLabel::Nice {
            for &m in &node.info.good_set {
                keep.insert(m);
            }
        }
    }
    let idx: Vec<u32> = keep.into_iter().collect();
    let pts: Vec<Vec<f64>> = idx.iter().map(|&m| mu.point(m as usize).to_vec()).collect();
    let ws: Vec<f64> = idx.iter().map(|&m| mu.weight(m as usize)).collect();
    if pts.is_empty() {
        return RStarCheck {
            normalized_l1: 0.0,
            nu_atoms: 0,
            nu_mass: 0.0,
            unresolved_mass,
            tail_l1: 0.0,
            ugly_l1: 0.0,
            nice_l1: 0.0,
        };
    }
    let nu = PointMeasure::from_points(mu.n(), &pts, ws).unwrap();
    let nu_mass = nu.total_mass();
    let atoms = Atoms::from_measure(&nu);

    // per-node precomputation: membership sets against nu indices, plus the
    // restricted local measures for nice nodes
    struct NodeCtx {
        label: CellLabel,
        in_cell: Vec<bool>,
        r_q: f64,
        next_radius_of: std::collections::BTreeMap<u32, f64>,
        local: Option<PointMeasure>,
    }
    let mut contexts: Vec<NodeCtx> = Vec::with_capacity(tree.nodes.len());
    for node in &tree.nodes {
        let cell = lat_mu.cell(node.cell);
        let in_cell: Vec<bool> = idx
            .iter()
            .map(|m| cell.members.binary_search(m).is_ok())
            .collect();
        let mut next_radius_of = std::collections::BTreeMap::new();
        for &p in &node.next {
            let pc = lat_mu.cell(p);
            for &m in &pc.members {
                next_radius_of.insert(m, pc.radius);
            }
        }
        let local = if node.info.label == CellLabel::Nice {
            let ball = Ball::new(
                mu.point(cell.center).to_vec(),
                100.0 * cell.radius,
            );
            let l = nu.restricted(&ball);
            if l.is_empty() {
                None
            } else {
                Some(l)
            }
        } else {
            None
        };
        contexts.push(NodeCtx {
            label: node.info.label,
            in_cell,
            r_q: cell.radius,
            next_radius_of,
            local,
        });
    }

    let r_root = lat_mu.cell(tree.root).radius;
    let sample = stride_sample(nu.len(), atom_cap);
    let mut l1 = 0.0;
    let mut tail_l1 = 0.0;
    let mut ugly_l1 = 0.0;
    let mut nice_l1 = 0.0;
    let mut sampled_mass = 0.0;
    for &k in &sample {
        let x = nu.point(k);
        let w = nu.weight(k);
        sampled_mass += w;
        l1 += maximal_riesz(&rcfg, atoms, None, x, 0.0) * w;
        // tail beyond the root ball radius
        tail_l1 += maximal_riesz(&rcfg, atoms, None, x, r_root) * w;
        // per-node contributions along the Top chain containing x
        let mu_index = idx[k];
        for ctx in &contexts {
            if !ctx.in_cell[k] {
                continue;
            }
            match ctx.label {
                CellLabel::Ugly => {
                    // sup over (r(x, Q), r(B(Q))] of the double truncation
                    let r_inner = ctx.next_radius_of.get(&mu_index).copied().unwrap_or(0.0);
                    ugly_l1 += sup_double_truncation(&rcfg, atoms, x, r_inner, ctx.r_q) * w;
                }
                CellLabel::Nice => {
                    if let Some(local) = &ctx.local {
                        nice_l1 +=
                            maximal_riesz(&rcfg, Atoms::from_measure(local), None, x, 0.0) * w;
                    }
                }
            }
        }
    }
    // scale partial sums up to the full mass when subsampled
    let boost = if sampled_mass > 0.0 { nu_mass / sampled_mass } else { 1.0 };

    RStarCheck {
        normalized_l1: l1 * boost / nu_mass,
        nu_atoms: nu.len(),
        nu_mass,
        unresolved_mass,
        tail_l1: tail_l1 * boost / nu_mass,
        ugly_l1: ugly_l1 * boost / nu_mass,
        nice_l1: nice_l1 * boost / nu_mass,
    }
}

/// sup over eps in (lo, hi] of |R_eps nu(x) - R_hi nu(x)|, exact over the
/// distance breakpoints in the annulus.
fn sup_double_truncation(cfg: &RieszConfig, nu: Atoms<'_>, x: &[f64], lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    let base = truncated_riesz(cfg, nu, None, x, hi);
    // candidate eps: lo itself plus every distance in (lo, hi)
    let mut cands: Vec<f64> = (0..nu.len())
        .map(|i| dist(x, nu.point(i)))
        .filter(|&d| d > lo && d < hi)
        .collect();
    cands.push(lo);
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let mut best = 0.0f64;
    for &eps in &cands {
        let v = truncated_riesz(cfg, nu, None, x, eps.max(lo).max(1e-300));
        let diff = crate::geom::sub3(v, base);
        best = best.max(crate::geom::norm3(diff));
    }
    best
}
