//! Finite Radon measures as weighted point clouds, together with the ball
//! diagnostics used throughout: mass, n-dimensional density, growth constant,
//! (a,b)-doubling, thin-boundary profiles, and AD-regularity scans.
//!
//! Conventions: balls are closed (ties on the sphere count as inside), and
//! every diagnostic that probes small radii takes a resolution scale below
//! which atomic measures stop resembling the continuum they discretize.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{dist, pairwise_sum_by};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("no radius in [{lo}, {hi}] has a {c1}-thin boundary (worst ratio {worst})")]
    NoThinBall { lo: f64, hi: f64, c1: f64, worst: f64 },
    #[error("malformed measure file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed ball `{x : |x - center| <= radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Ball { center, radius }
    }

    /// Concentric ball with radius scaled by `a`.
    pub fn scaled(&self, a: f64) -> Ball {
        Ball::new(self.center.clone(), self.radius * a)
    }

    #[inline]
    pub fn contains(&self, p: &[f64]) -> bool {
        dist(&self.center, p) <= self.radius
    }
}

/// A finite Radon measure in `ambient_dim = n + 1` coordinates, stored as a
/// flat coordinate array plus nonnegative weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointMeasure {
    dim: usize,
    n: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl PointMeasure {
    pub fn new(dim: usize, n: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        assert!(n >= 1 && dim == n + 1, "ambient dimension must equal n + 1");
        if coords.len() != weights.len() * dim {
            return Err(MeasureError::DimensionMismatch {
                expected: weights.len() * dim,
                got: coords.len(),
            });
        }
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            return Err(MeasureError::NegativeWeight { index: i, weight: w });
        }
        Ok(PointMeasure { dim, n, coords, weights })
    }

    pub fn from_points(n: usize, points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self, MeasureError> {
        let dim = n + 1;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(MeasureError::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        PointMeasure::new(dim, n, coords, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The codimension-one index n (kernel exponent, density exponent).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum_by(0, self.weights.len(), |i| self.weights[i])
    }

    /// Measure with the same support and all weights multiplied by `c`.
    pub fn scaled_weights(&self, c: f64) -> PointMeasure {
        PointMeasure {
            dim: self.dim,
            n: self.n,
            coords: self.coords.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Restriction to the atoms inside `ball` (closed membership).
    pub fn restricted(&self, ball: &Ball) -> PointMeasure {
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for i in 0..self.len() {
            if ball.contains(self.point(i)) {
                coords.extend_from_slice(self.point(i));
                weights.push(self.weights[i]);
            }
        }
        PointMeasure { dim: self.dim, n: self.n, coords, weights }
    }

    pub fn support_diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d = d.max(dist(self.point(i), self.point(j)));
            }
        }
        d
    }

    /// Minimum distance between distinct support points; the scale below
    /// which this atomic discretization stops being faithful.
    pub fn resolution_scale(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d = dist(self.point(i), self.point(j));
                if d > 0.0 {
                    best = best.min(d);
                }
            }
        }
        best
    }

    /// Mass inside a closed ball.
    pub fn mass(&self, ball: &Ball) -> f64 {
        pairwise_sum_by(0, self.len(), |i| {
            if ball.contains(self.point(i)) {
                self.weights[i]
            } else {
                0.0
            }
        })
    }

    /// Mass of the atoms selected by an indicator over atom indices.
    pub fn mass_where<F: Fn(usize) -> bool>(&self, pred: F) -> f64 {
        pairwise_sum_by(0, self.len(), |i| if pred(i) { self.weights[i] } else { 0.0 })
    }

    /// n-dimensional density `mass(B) / diam(B)^n = mass(B) / (2 r)^n`.
    pub fn density(&self, ball: &Ball) -> f64 {
        self.mass(ball) / (2.0 * ball.radius).powi(self.n as i32)
    }

    /// `mass(aB) <= b * mass(B)`. A zero-mass ball is doubling iff `aB` also
    /// has zero mass.
    pub fn is_doubling_ball(&self, ball: &Ball, a: f64, b: f64) -> bool {
        let inner = self.mass(ball);
        let outer = self.mass(&ball.scaled(a));
        if inner == 0.0 {
            outer == 0.0
        } else {
            outer <= b * inner
        }
    }
}

/// One probe ball for the growth and AD-regularity scans.
#[derive(Debug, Clone)]
pub struct Probe {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Result of a growth-constant scan: the supremum of `mu(B(x,r)) / r^n` over
/// the probe set.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub constant: f64,
    /// Some probed radius fell below the measure's resolution scale, so the
    /// constant reflects atomic granularity rather than the continuum.
    pub below_resolution: bool,
    pub resolution_scale: f64,
    pub probes: usize,
}

impl PointMeasure {
    /// Default growth probes: balls centered at every support point with
    /// radii equal to the distances to all other support points, clipped to
    /// the resolution scale. For an atomic measure these are exactly the
    /// radii where `mass(B)/r^n` can jump, so the scan equals the true
    /// supremum over centered balls with radius >= the resolution scale.
    /// Prefix sums over sorted distances keep the scan at O(N^2 log N).
    pub fn growth_constant_default(&self) -> GrowthReport {
        let res = self.resolution_scale();
        let mut sup: f64 = 0.0;
        let mut count = 0usize;
        for i in 0..self.len() {
            let mut dists: Vec<(f64, f64)> = (0..self.len())
                .map(|j| (dist(self.point(i), self.point(j)), self.weights[j]))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            // closed balls: all atoms at equal distance enter together
            let mut prefix = 0.0;
            let mut j = 0;
            while j < dists.len() {
                let d = dists[j].0;
                while j < dists.len() && dists[j].0 == d {
                    prefix += dists[j].1;
                    j += 1;
                }
                if d >= res {
                    sup = sup.max(prefix / d.powi(self.n as i32));
                    count += 1;
                }
            }
        }
        GrowthReport {
            constant: sup,
            below_resolution: false,
            resolution_scale: res,
            probes: count,
        }
    }

    /// Growth constant over an explicit probe set. Probes with nonpositive
    /// radius yield the infinite marker immediately.
    pub fn growth_constant(&self, probes: &[Probe]) -> GrowthReport {
        let res = self.resolution_scale();
        let mut sup: f64 = 0.0;
        let mut below = false;
        for p in probes {
            if p.radius <= 0.0 {
                return GrowthReport {
                    constant: f64::INFINITY,
                    below_resolution: true,
                    resolution_scale: res,
                    probes: probes.len(),
                };
            }
            if p.radius < res {
                below = true;
            }
            let b = Ball::new(p.center.clone(), p.radius);
            sup = sup.max(self.mass(&b) / p.radius.powi(self.n as i32));
        }
        GrowthReport {
            constant: sup,
            below_resolution: below,
            resolution_scale: res,
            probes: probes.len(),
        }
    }

    /// For each `t` in the grid, the ratio
    /// `mu({x in 2B : |dist(x, dB)| <= t r(B)}) / (t mu(2B))`.
    /// The ball has `C1`-thin boundary iff every ratio is <= `C1`.
    /// Returns an empty profile when `mu(2B) = 0`.
    pub fn thin_boundary_profile(&self, ball: &Ball, t_grid: &[f64]) -> Vec<(f64, f64)> {
        let two_b = ball.scaled(2.0);
        let mass_2b = self.mass(&two_b);
        if mass_2b == 0.0 {
            return Vec::new();
        }
        let r = ball.radius;
        t_grid
            .iter()
            .map(|&t| {
                let shell = self.mass_where(|i| {
                    let d = dist(&ball.center, self.point(i));
                    d <= 2.0 * r && (d - r).abs() <= t * r
                });
                (t, shell / (t * mass_2b))
            })
            .collect()
    }

    /// Worst thin-boundary ratio over the default dyadic t-grid
    /// `{2^-1, ..., 2^-10}`; zero when `mu(2B) = 0`.
    pub fn thin_boundary_worst(&self, ball: &Ball) -> f64 {
        self.thin_boundary_profile(ball, &default_t_grid())
            .iter()
            .fold(0.0, |acc, &(_, r)| acc.max(r))
    }

    /// Searches a uniform grid of 64 radii in `[lo, hi]` for a ball
    /// concentric with `inner.center` whose thin-boundary profile stays
    /// within `c1`; picks the smallest worst-ratio radius, breaking ties
    /// toward the window midpoint.
    pub fn find_thin_boundary_ball(
        &self,
        inner: &Ball,
        lo: f64,
        hi: f64,
        c1: f64,
    ) -> Result<Ball, MeasureError> {
        assert!(lo < hi, "scale window must satisfy lo < hi");
        const GRID: usize = 64;
        let mid = 0.5 * (lo + hi);
        let mut best: Option<(f64, f64)> = None; // (worst ratio, radius)
        let mut global_worst = f64::INFINITY;
        for k in 0..GRID {
            let r = lo + (hi - lo) * k as f64 / (GRID - 1) as f64;
            let worst = self.thin_boundary_worst(&Ball::new(inner.center.clone(), r));
            global_worst = global_worst.min(worst);
            if worst <= c1 {
                let better = match best {
                    None => true,
                    Some((bw, br)) => {
                        worst < bw || (worst == bw && (r - mid).abs() < (br - mid).abs())
                    }
                };
                if better {
                    best = Some((worst, r));
                }
            }
        }
        match best {
            Some((_, r)) => Ok(Ball::new(inner.center.clone(), r)),
            None => Err(MeasureError::NoThinBall { lo, hi, c1, worst: global_worst }),
        }
    }
}

/// Default window `[2/delta0, 2.2/delta0] * r(inner)` for the thin-boundary
/// ball search.
pub fn thin_ball_window(inner: &Ball, delta0: f64) -> (f64, f64) {
    (2.0 / delta0 * inner.radius, 2.2 / delta0 * inner.radius)
}

pub fn default_t_grid() -> Vec<f64> {
    (1..=10).map(|k| 0.5f64.powi(k)).collect()
}

/// Infimum and supremum of `mu(B)/r^n` over a probe family.
#[derive(Debug, Clone, Serialize)]
pub struct AdRegularityReport {
    pub c_lower: f64,
    pub c_upper: f64,
    /// Set when the probe family was empty (e.g. a single atom whose
    /// admissible radius range is degenerate).
    pub degenerate: bool,
}

impl PointMeasure {
    pub fn ad_regularity(&self, probes: &[Probe]) -> AdRegularityReport {
        if probes.is_empty() {
            return AdRegularityReport { c_lower: 0.0, c_upper: 0.0, degenerate: true };
        }
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for p in probes {
            let b = Ball::new(p.center.clone(), p.radius);
            let ratio = self.mass(&b) / p.radius.powi(self.n as i32);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        AdRegularityReport { c_lower: lo, c_upper: hi, degenerate: false }
    }

    /// Default AD-regularity probes: a geometric grid of `steps` radii in
    /// `[resolution_scale, diam]` at every support point.
    pub fn ad_regularity_default_probes(&self, steps: usize) -> Vec<Probe> {
        let lo = self.resolution_scale();
        let hi = self.support_diameter();
        if !(lo.is_finite()) || hi <= lo {
            return Vec::new();
        }
        let mut probes = Vec::new();
        for i in 0..self.len() {
            for k in 0..steps {
                let r = lo * (hi / lo).powf(k as f64 / (steps - 1).max(1) as f64);
                probes.push(Probe { center: self.point(i).to_vec(), radius: r });
            }
        }
        probes
    }
}

// ---------------------------------------------------------------------------
// File formats: CSV (x1..xd,weight with header) and JSON.

impl PointMeasure {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            out.push_str(&format!("x{},", j + 1));
        }
        out.push_str("weight\n");
        for i in 0..self.len() {
            for c in self.point(i) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{}\n", self.weights[i]));
        }
        out
    }

    pub fn from_csv(n: usize, text: &str) -> Result<Self, MeasureError> {
        let dim = n + 1;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| MeasureError::Parse("empty file".into()))?;
        let cols = header.split(',').count();
        if cols != dim + 1 {
            return Err(MeasureError::Parse(format!(
                "expected {} columns for n = {n}, header has {cols}",
                dim + 1
            )));
        }
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(MeasureError::Parse(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 1,
                    fields.len()
                )));
            }
            for f in &fields[..dim] {
                coords.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| MeasureError::Parse(format!("line {}: {e}", lineno + 2)))?,
                );
            }
            weights.push(
                fields[dim]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| MeasureError::Parse(format!("line {}: {e}", lineno + 2)))?,
            );
        }
        PointMeasure::new(dim, n, coords, weights)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            dim: usize,
            n: usize,
            points: Vec<&'a [f64]>,
            weights: &'a [f64],
        }
        let doc = Doc {
            dim: self.dim,
            n: self.n,
            points: (0..self.len()).map(|i| self.point(i)).collect(),
            weights: &self.weights,
        };
        serde_json::to_string_pretty(&doc).expect("measure serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, MeasureError> {
        #[derive(Deserialize)]
        struct Doc {
            dim: usize,
            n: usize,
            points: Vec<Vec<f64>>,
            weights: Vec<f64>,
        }
        let doc: Doc =
            serde_json::from_str(text).map_err(|e| MeasureError::Parse(e.to_string()))?;
        if doc.dim != doc.n + 1 {
            return Err(MeasureError::Parse("dim must equal n + 1".into()));
        }
        PointMeasure::from_points(doc.n, &doc.points, doc.weights)
    }
}
