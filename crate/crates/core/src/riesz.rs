//! The n-dimensional Riesz kernel `K(x) = x / |x|^{n+1}`, the fundamental
//! solution of the Laplacian, truncated and maximal transforms on atomic
//! (possibly signed) measures, and discrete L² operator norms.
//!
//! All truncations use the strict cutoff `|x - y| > eps`. For an atomic
//! measure the map `eps -> R_eps` is piecewise constant with breakpoints at
//! the atom distances, so suprema over eps are computed exactly by visiting
//! the breakpoints; no grids are involved.

use serde::Serialize;
use thiserror::Error;

use crate::geom::{dist, pairwise_sum_vec, sub3, to3};
use crate::measure::PointMeasure;

#[derive(Debug, Error)]
pub enum RieszError {
    #[error("kernel evaluated at the singular point x = 0")]
    SingularPoint,
    #[error("bad truncation order: eps1 = {eps1} > eps2 = {eps2}")]
    BadTruncationOrder { eps1: f64, eps2: f64 },
}

/// Kernel dimension and fundamental-solution normalizations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RieszConfig {
    pub n: usize,
    /// Normalization of `E(x) = -c1 log|x|` in the planar case n = 1.
    pub c1: f64,
    /// Normalization of `E(x) = cn |x|^{1-n}` for n >= 2.
    pub cn: f64,
}

impl RieszConfig {
    /// Standard Newtonian normalization: `c1 = 1/(2 pi)` and
    /// `cn = 1/((n-1) omega_n)` with `omega_n` the area of the unit n-sphere
    /// in `R^{n+1}`.
    pub fn standard(n: usize) -> Self {
        assert!(n >= 1);
        let c1 = 1.0 / (2.0 * std::f64::consts::PI);
        let cn = if n >= 2 {
            1.0 / ((n as f64 - 1.0) * unit_sphere_area(n))
        } else {
            c1
        };
        RieszConfig { n, c1, cn }
    }

    pub fn ambient_dim(&self) -> usize {
        self.n + 1
    }
}

/// Surface area of the unit n-sphere embedded in `R^{n+1}`.
pub fn unit_sphere_area(n: usize) -> f64 {
    let d = n + 1; // ambient dimension
    let half = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(d)
}

/// Gamma(d/2) for integer d >= 1.
fn gamma_half_integer(d: usize) -> f64 {
    if d % 2 == 0 {
        // Gamma(k) = (k-1)!
        let k = d / 2;
        (1..k).map(|i| i as f64).product::<f64>().max(1.0)
    } else {
        // Gamma(k + 1/2) = (2k)! / (4^k k!) sqrt(pi)
        let k = d / 2;
        let mut v = std::f64::consts::PI.sqrt();
        for i in 0..k {
            v *= i as f64 + 0.5;
        }
        v
    }
}

/// `E(x)`: `-c1 log|x|` for n = 1, `cn |x|^{1-n}` for n >= 2.
pub fn fundamental_solution(cfg: &RieszConfig, x: &[f64]) -> Result<f64, RieszError> {
    let r = crate::geom::norm(x);
    if r == 0.0 {
        return Err(RieszError::SingularPoint);
    }
    Ok(fundamental_solution_at_distance(cfg, r))
}

#[inline]
pub fn fundamental_solution_at_distance(cfg: &RieszConfig, r: f64) -> f64 {
    if cfg.n == 1 {
        -cfg.c1 * r.ln()
    } else {
        cfg.cn * r.powi(1 - cfg.n as i32)
    }
}

/// `K(x) = x / |x|^{n+1}`, padded to three components.
pub fn riesz_kernel(cfg: &RieszConfig, x: &[f64]) -> Result<[f64; 3], RieszError> {
    let r = crate::geom::norm(x);
    if r == 0.0 {
        return Err(RieszError::SingularPoint);
    }
    let scale = r.powi(-(cfg.n as i32) - 1);
    let mut out = [0.0; 3];
    for (o, &c) in out.iter_mut().zip(x) {
        *o = c * scale;
    }
    Ok(out)
}

/// Atom cloud with (possibly signed) charges: `charge_i = f_i * w_i`.
/// Wraps borrowed coordinate/weight slices so callers can pass either a
/// `PointMeasure` or raw arrays.
#[derive(Clone, Copy)]
pub struct Atoms<'a> {
    pub dim: usize,
    pub coords: &'a [f64],
    pub weights: &'a [f64],
}

impl<'a> Atoms<'a> {
    pub fn from_measure(mu: &'a PointMeasure) -> Self {
        Atoms { dim: mu.dim(), coords: mu.coords(), weights: mu.weights() }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// `R_eps(f nu)(x)`: exact sum of `K(x - y_i) f_i w_i` over `|x - y_i| > eps`,
/// with the fixed-tree reduction over atom index order. `f = None` means
/// `f == 1`.
pub fn truncated_riesz(
    cfg: &RieszConfig,
    nu: Atoms<'_>,
    f: Option<&[f64]>,
    x: &[f64],
    eps: f64,
) -> [f64; 3] {
    assert!(eps > 0.0, "truncation radius must be positive");
    let x3 = to3(x);
    pairwise_sum_vec(0, nu.len(), |i| {
        let y = to3(nu.point(i));
        let d = dist(x, nu.point(i));
        if d > eps {
            let k = riesz_kernel(cfg, &sub3(x3, y)[..nu.dim]).expect("d > eps > 0");
            let c = nu.weights[i] * f.map_or(1.0, |f| f[i]);
            [k[0] * c, k[1] * c, k[2] * c]
        } else {
            [0.0; 3]
        }
    })
}

/// Double truncation `R_{eps1, eps2} = R_{eps1} - R_{eps2}`, the transform
/// restricted to the annulus `eps1 < |x - y| <= eps2`. Computed literally as
/// the difference of the two truncated sums so the defining identity holds
/// bit-exactly.
pub fn double_truncation(
    cfg: &RieszConfig,
    nu: Atoms<'_>,
    f: Option<&[f64]>,
    x: &[f64],
    eps1: f64,
    eps2: f64,
) -> Result<[f64; 3], RieszError> {
    if eps1 > eps2 {
        return Err(RieszError::BadTruncationOrder { eps1, eps2 });
    }
    let a = truncated_riesz(cfg, nu, f, x, eps1);
    let b = truncated_riesz(cfg, nu, f, x, eps2);
    Ok(sub3(a, b))
}

/// `R_{*,delta} nu(x) = sup_{eps > delta} |R_eps nu(x)|`, computed exactly at
/// the distance breakpoints via a suffix accumulation over atoms sorted by
/// decreasing distance.
pub fn maximal_riesz(
    cfg: &RieszConfig,
    nu: Atoms<'_>,
    f: Option<&[f64]>,
    x: &[f64],
    delta: f64,
) -> f64 {
    let x3 = to3(x);
    // (distance, contribution) for atoms strictly beyond delta; atoms at
    // distance <= delta can never enter any R_eps with eps > delta.
    let mut items: Vec<(f64, [f64; 3])> = Vec::with_capacity(nu.len());
    for i in 0..nu.len() {
        let d = dist(x, nu.point(i));
        if d > delta && d > 0.0 {
            let k = riesz_kernel(cfg, &sub3(x3, to3(nu.point(i)))[..nu.dim]).unwrap();
            let c = nu.weights[i] * f.map_or(1.0, |f| f[i]);
            items.push((d, [k[0] * c, k[1] * c, k[2] * c]));
        }
    }
    // Sort by distance descending, index order within ties (stable sort on
    // the negated key keeps the original order for equal distances).
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut sup = 0.0f64; // eps beyond the farthest atom: empty sum
    let mut acc = [0.0f64; 3];
    let mut i = 0;
    while i < items.len() {
        // All atoms at this distance enter together as eps drops below it.
        let d = items[i].0;
        while i < items.len() && items[i].0 == d {
            acc = crate::geom::add3(acc, items[i].1);
            i += 1;
        }
        // This is R_eps for eps in [max(delta, next smaller distance), d).
        sup = sup.max(crate::geom::norm3(acc));
    }
    sup
}

/// Result of the maximal density scan `M^n_delta`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MaximalDensity {
    pub value: f64,
    /// The supremum is a limit as `r` decreases to `delta` and is not
    /// attained by any ball.
    pub open_endpoint: bool,
}

/// `M^n_delta nu(x) = sup_{r > delta} |nu|(B(x,r)) / r^n` for the atomic
/// total variation `|nu|`; exact over breakpoint radii (closed balls).
pub fn maximal_density(cfg: &RieszConfig, nu: Atoms<'_>, x: &[f64], delta: f64) -> MaximalDensity {
    let mut dists: Vec<(f64, f64)> = (0..nu.len())
        .map(|i| (dist(x, nu.point(i)), nu.weights[i].abs()))
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let n = cfg.n as i32;
    let mut mass_at_delta = 0.0; // |nu|({y : |x - y| <= delta})
    let mut value: f64 = 0.0;
    let mut open = false;

    let mut prefix = 0.0;
    for &(d, w) in &dists {
        if d <= delta {
            prefix += w;
            mass_at_delta = prefix;
            continue;
        }
        prefix += w;
        let ratio = prefix / d.powi(n);
        if ratio > value {
            value = ratio;
            open = false;
        }
    }
    // The r -> delta+ limit carries the atoms within the closed delta-ball.
    if mass_at_delta > 0.0 {
        if delta == 0.0 {
            return MaximalDensity { value: f64::INFINITY, open_endpoint: true };
        }
        let limit = mass_at_delta / delta.powi(n);
        if limit > value {
            value = limit;
            open = true;
        }
    }
    MaximalDensity { value, open_endpoint: open }
}

/// Power-iteration estimate of the `L^2(mu) -> L^2(mu; R^d)` norm of the
/// eps-truncated Riesz transform on a subset of atoms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OperatorNorm {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of `D^{1/2} K D^{1/2}` (`D` = diagonal of subset
/// weights, `K` the vector-valued truncated kernel matrix), via power
/// iteration on the normal matrix with tolerance `1e-8` and at most `10^4`
/// iterations. Matrix-free: rows are regenerated on the fly.
pub fn operator_norm_l2(
    cfg: &RieszConfig,
    mu: &PointMeasure,
    subset: &[usize],
    eps: f64,
) -> OperatorNorm {
    assert!(!subset.is_empty(), "subset must be nonempty");
    assert!(eps > 0.0);
    let m = subset.len();
    let dim = mu.dim();
    let pts: Vec<[f64; 3]> = subset.iter().map(|&i| to3(mu.point(i))).collect();
    let sw: Vec<f64> = subset.iter().map(|&i| mu.weight(i).sqrt()).collect();

    // u = A v (block of dim-vectors), then w = A^T u.
    let apply = |v: &[f64], u: &mut Vec<[f64; 3]>, w: &mut [f64]| {
        u.clear();
        for i in 0..m {
            let mut acc = [0.0f64; 3];
            for j in 0..m {
                if i == j {
                    continue;
                }
                let diff = sub3(pts[i], pts[j]);
                let d = crate::geom::norm3(diff);
                if d > eps {
                    let k = riesz_kernel(cfg, &diff[..dim]).unwrap();
                    let c = sw[i] * sw[j] * v[j];
                    acc = crate::geom::add3(acc, [k[0] * c, k[1] * c, k[2] * c]);
                }
            }
            u.push(acc);
        }
        for j in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                if i == j {
                    continue;
                }
                let diff = sub3(pts[i], pts[j]);
                let d = crate::geom::norm3(diff);
                if d > eps {
                    let k = riesz_kernel(cfg, &diff[..dim]).unwrap();
                    acc += sw[i] * sw[j] * (k[0] * u[i][0] + k[1] * u[i][1] + k[2] * u[i][2]);
                }
            }
            w[j] = acc;
        }
    };

    // Deterministic ramp start; breaks symmetric configurations.
    let mut v: Vec<f64> = (0..m).map(|i| 1.0 + 0.5 * i as f64 / m as f64).collect();
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm0);

    let mut u: Vec<[f64; 3]> = Vec::with_capacity(m);
    let mut w = vec![0.0; m];
    let mut sigma_prev = f64::NAN;
    const MAX_ITERS: usize = 10_000;
    const TOL: f64 = 1e-8;

    for it in 1..=MAX_ITERS {
        apply(&v, &mut u, &mut w);
        let sigma = u
            .iter()
            .map(|b| b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
            .sum::<f64>()
            .sqrt();
        if sigma == 0.0 {
            return OperatorNorm { norm: 0.0, iterations: it, converged: true };
        }
        if !sigma_prev.is_nan() && (sigma - sigma_prev).abs() <= TOL * sigma.max(1.0) {
            return OperatorNorm { norm: sigma, iterations: it, converged: true };
        }
        sigma_prev = sigma;
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wn == 0.0 {
            return OperatorNorm { norm: sigma, iterations: it, converged: true };
        }
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / wn;
        }
    }
    OperatorNorm { norm: sigma_prev, iterations: MAX_ITERS, converged: false }
}
