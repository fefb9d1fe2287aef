//! Built-in domains given by exact signed-distance oracles with nearest-point
//! boundary projection.
//!
//! The sdf is negative inside, zero on the boundary, positive outside, and
//! 1-Lipschitz. For intersections (half disk, graph domains, sectors) the
//! inside value is the exact distance to the boundary while the outside value
//! may underestimate it near corners; walk-on-spheres only needs the inside
//! value to never exceed the true distance, so the max-combination is safe.
//!
//! The slit disk is the designated non-uniform negative control: its sdf sees
//! the slit as boundary, and exits onto the slit carry an above/below side
//! tag taken from the walker's last position, since harmonic measure on a
//! slit distinguishes sides.

use serde::Serialize;

use super::HarmonicError;
use crate::geom::to3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlitSide {
    Above,
    Below,
}

#[derive(Debug, Clone, Serialize)]
pub enum DomainShape {
    /// Disk of the given radius centered at the origin (2-d).
    Disk { radius: f64 },
    /// Square `[-h, h]^2` (2-d).
    Square { half_side: f64 },
    /// Upper half of the unit-type disk: `{|p| < radius, y > 0}`.
    HalfDisk { radius: f64 },
    /// `{y > slope |x|}` intersected with the unit disk.
    LipschitzGraph { slope: f64 },
    /// Unit-type disk minus the slit `[0, radius) x {0}`.
    SlitDisk { radius: f64 },
    /// `{inner < |p| < 1, |angle| < half_angle}`.
    AnnulusSector { inner: f64, half_angle: f64 },
    /// Ball of the given radius in three dimensions.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Domain {
    pub shape: DomainShape,
    pub name: String,
}

/// Parses a builtin domain name: `disk`, `square`, `half_disk`,
/// `lipschitz_graph(A)`, `slit_disk`, `annulus_sector`, `ball`.
pub fn builtin_domain(name: &str) -> Result<Domain, HarmonicError> {
    let trimmed = name.trim();
    let shape = match trimmed {
        "disk" => DomainShape::Disk { radius: 1.0 },
        "square" => DomainShape::Square { half_side: 1.0 },
        "half_disk" => DomainShape::HalfDisk { radius: 1.0 },
        "slit_disk" => DomainShape::SlitDisk { radius: 1.0 },
        "annulus_sector" => DomainShape::AnnulusSector {
            inner: 0.3,
            half_angle: std::f64::consts::FRAC_PI_3,
        },
        "ball" => DomainShape::Ball { radius: 1.0 },
        _ => {
            if let Some(arg) = trimmed
                .strip_prefix("lipschitz_graph(")
                .and_then(|s| s.strip_suffix(')'))
            {
                let slope: f64 = arg
                    .parse()
                    .map_err(|_| HarmonicError::UnknownDomain(name.to_string()))?;
                if !(slope > 0.0) {
                    return Err(HarmonicError::UnknownDomain(name.to_string()));
                }
                DomainShape::LipschitzGraph { slope }
            } else {
                return Err(HarmonicError::UnknownDomain(name.to_string()));
            }
        }
    };
    Ok(Domain { shape, name: trimmed.to_string() })
}

fn point_segment_project(p: &[f64], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let denom = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if denom > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

fn dist2d(p: &[f64], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Nearest point on the circular arc of the given radius spanning angles
/// `[a0, a1]` (radians, a0 < a1).
fn project_to_arc(p: &[f64], radius: f64, a0: f64, a1: f64) -> [f64; 2] {
    let theta = p[1].atan2(p[0]);
    // angular clamp: pick the nearest representative within [a0, a1]
    let clamped = if theta >= a0 && theta <= a1 {
        theta
    } else {
        // compare angular distances to endpoints, modulo 2 pi
        let wrap = |d: f64| {
            let two_pi = 2.0 * std::f64::consts::PI;
            let m = d.rem_euclid(two_pi);
            m.min(two_pi - m)
        };
        if wrap(theta - a0) <= wrap(theta - a1) {
            a0
        } else {
            a1
        }
    };
    [radius * clamped.cos(), radius * clamped.sin()]
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self.shape {
            DomainShape::Ball { .. } => 3,
            _ => 2,
        }
    }

    /// Codimension-one index of the boundary: n = dim - 1.
    pub fn n(&self) -> usize {
        self.dim() - 1
    }

    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        match self.shape {
            DomainShape::Disk { radius } | DomainShape::SlitDisk { radius } => {
                ([-radius, -radius, 0.0], [radius, radius, 0.0])
            }
            DomainShape::Square { half_side } => {
                ([-half_side, -half_side, 0.0], [half_side, half_side, 0.0])
            }
            DomainShape::HalfDisk { radius } => ([-radius, 0.0, 0.0], [radius, radius, 0.0]),
            DomainShape::LipschitzGraph { .. } => ([-1.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
            DomainShape::AnnulusSector { .. } => ([-1.0, -1.0, 0.0], [1.0, 1.0, 0.0]),
            DomainShape::Ball { radius } => {
                ([-radius, -radius, -radius], [radius, radius, radius])
            }
        }
    }

    /// Diagonal of the bounding box; the length scale for shell tolerances.
    pub fn scale(&self) -> f64 {
        let (lo, hi) = self.bbox();
        crate::geom::norm3([hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]])
    }

    pub fn sdf(&self, p: &[f64]) -> f64 {
        match self.shape {
            DomainShape::Disk { radius } => dist2d(p, [0.0, 0.0]) - radius,
            DomainShape::Square { half_side } => {
                let qx = p[0].abs() - half_side;
                let qy = p[1].abs() - half_side;
                let ox = qx.max(0.0);
                let oy = qy.max(0.0);
                (ox * ox + oy * oy).sqrt() + qx.max(qy).min(0.0)
            }
            DomainShape::HalfDisk { radius } => {
                (dist2d(p, [0.0, 0.0]) - radius).max(-p[1])
            }
            DomainShape::LipschitzGraph { slope } => {
                let s = (1.0 + slope * slope).sqrt();
                let circle = dist2d(p, [0.0, 0.0]) - 1.0;
                let left = (slope * p[0] - p[1]) / s;
                let right = (-slope * p[0] - p[1]) / s;
                circle.max(left).max(right)
            }
            DomainShape::SlitDisk { radius } => {
                let circle = dist2d(p, [0.0, 0.0]) - radius;
                let on_slit = point_segment_project(p, [0.0, 0.0], [radius, 0.0]);
                circle.max(-dist2d(p, on_slit))
            }
            DomainShape::AnnulusSector { inner, half_angle } => {
                let r = dist2d(p, [0.0, 0.0]);
                let (sin_t, cos_t) = half_angle.sin_cos();
                let upper = p[1] * cos_t - p[0] * sin_t;
                let lower = -(p[1] * cos_t + p[0] * sin_t);
                (r - 1.0).max(inner - r).max(upper).max(lower)
            }
            DomainShape::Ball { radius } => crate::geom::norm3(to3(p)) - radius,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.sdf(p) < 0.0
    }

    /// Nearest boundary point, with a side tag when the nearest feature is
    /// the slit of a slit disk.
    pub fn boundary_project(&self, p: &[f64]) -> ([f64; 3], Option<SlitSide>) {
        let best2 = |cands: &[[f64; 2]]| -> [f64; 2] {
            let mut best = cands[0];
            let mut bd = dist2d(p, best);
            for &c in &cands[1..] {
                let d = dist2d(p, c);
                if d < bd {
                    bd = d;
                    best = c;
                }
            }
            best
        };
        match self.shape {
            DomainShape::Disk { radius } => {
                let r = dist2d(p, [0.0, 0.0]);
                let q = if r > 0.0 {
                    [p[0] / r * radius, p[1] / r * radius]
                } else {
                    [radius, 0.0]
                };
                (to3(&q), None)
            }
            DomainShape::Square { half_side } => {
                let h = half_side;
                let inside = p[0].abs() < h && p[1].abs() < h;
                let q = if inside {
                    if h - p[0].abs() <= h - p[1].abs() {
                        [h * sign_or_one(p[0]), p[1]]
                    } else {
                        [p[0], h * sign_or_one(p[1])]
                    }
                } else {
                    [p[0].clamp(-h, h), p[1].clamp(-h, h)]
                };
                (to3(&q), None)
            }
            DomainShape::HalfDisk { radius } => {
                let arc = project_to_arc(p, radius, 0.0, std::f64::consts::PI);
                let seg = point_segment_project(p, [-radius, 0.0], [radius, 0.0]);
                (to3(&best2(&[arc, seg])), None)
            }
            DomainShape::LipschitzGraph { slope } => {
                let alpha = slope.atan();
                let tip = [alpha.cos(), alpha.sin()];
                let arc = project_to_arc(p, 1.0, alpha, std::f64::consts::PI - alpha);
                let s_right = point_segment_project(p, [0.0, 0.0], tip);
                let s_left = point_segment_project(p, [0.0, 0.0], [-tip[0], tip[1]]);
                (to3(&best2(&[arc, s_right, s_left])), None)
            }
            DomainShape::SlitDisk { radius } => {
                let r = dist2d(p, [0.0, 0.0]);
                let circle = if r > 0.0 {
                    [p[0] / r * radius, p[1] / r * radius]
                } else {
                    [radius, 0.0]
                };
                let slit = point_segment_project(p, [0.0, 0.0], [radius, 0.0]);
                if dist2d(p, slit) < dist2d(p, circle) {
                    let side = if p[1] >= 0.0 { SlitSide::Above } else { SlitSide::Below };
                    (to3(&slit), Some(side))
                } else {
                    (to3(&circle), None)
                }
            }
            DomainShape::AnnulusSector { inner, half_angle } => {
                let (sin_t, cos_t) = half_angle.sin_cos();
                let outer_arc = project_to_arc(p, 1.0, -half_angle, half_angle);
                let inner_arc = project_to_arc(p, inner, -half_angle, half_angle);
                let up =
                    point_segment_project(p, [inner * cos_t, inner * sin_t], [cos_t, sin_t]);
                let dn =
                    point_segment_project(p, [inner * cos_t, -inner * sin_t], [cos_t, -sin_t]);
                (to3(&best2(&[outer_arc, inner_arc, up, dn])), None)
            }
            DomainShape::Ball { radius } => {
                let q3 = to3(p);
                let r = crate::geom::norm3(q3);
                if r > 0.0 {
                    ([q3[0] / r * radius, q3[1] / r * radius, q3[2] / r * radius], None)
                } else {
                    ([radius, 0.0, 0.0], None)
                }
            }
        }
    }
}

fn sign_or_one(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn builtin(name: &str) -> Domain {
        builtin_domain(name).unwrap()
    }

    #[test]
    fn sdf_spot_values() {
        let disk = builtin("disk");
        assert_eq!(disk.sdf(&[0.0, 0.0]), -1.0);
        let square = builtin("square");
        assert_eq!(square.sdf(&[2.0, 0.0]), 1.0);
        assert_eq!(square.sdf(&[0.0, 0.0]), -1.0);
        // slit disk: distance to the slit from just above it
        let slit = builtin("slit_disk");
        let v = slit.sdf(&[0.5, 1e-3]);
        assert!((v + 1e-3).abs() < 1e-15, "sdf {v}");
        assert!(matches!(
            builtin_domain("dodecahedron"),
            Err(HarmonicError::UnknownDomain(_))
        ));
    }

    #[test]
    fn lipschitz_graph_parses_with_slope() {
        let d = builtin("lipschitz_graph(0.5)");
        // on the graph y = 0.5 |x|
        assert!(d.sdf(&[0.4, 0.2]).abs() < 1e-15);
        assert!(d.sdf(&[0.4, 0.5]) < 0.0);
        assert!(d.sdf(&[0.4, 0.1]) > 0.0);
    }

    #[test]
    fn sdf_is_lipschitz_on_sampled_pairs() {
        let mut rng = substream(41, 0);
        for name in [
            "disk",
            "square",
            "half_disk",
            "lipschitz_graph(2.0)",
            "slit_disk",
            "annulus_sector",
        ] {
            let dom = builtin(name);
            for _ in 0..500 {
                let a = [rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
                let b = [rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
                let lhs = (dom.sdf(&a) - dom.sdf(&b)).abs();
                let rhs = crate::geom::dist(&a, &b);
                assert!(lhs <= rhs + 1e-12, "{name}: |sdf diff| {lhs} > dist {rhs}");
            }
        }
    }

    #[test]
    fn projection_lands_on_boundary() {
        let mut rng = substream(43, 1);
        for name in [
            "disk",
            "square",
            "half_disk",
            "lipschitz_graph(1.0)",
            "slit_disk",
            "annulus_sector",
            "ball",
        ] {
            let dom = builtin(name);
            for _ in 0..400 {
                let p = [
                    rng.gen::<f64>() * 3.0 - 1.5,
                    rng.gen::<f64>() * 3.0 - 1.5,
                    rng.gen::<f64>() * 3.0 - 1.5,
                ];
                let (q, _) = dom.boundary_project(&p[..dom.dim()]);
                let v = dom.sdf(&q[..dom.dim()]).abs();
                assert!(v <= 1e-12 * dom.scale(), "{name}: |sdf(proj)| = {v}");
            }
        }
    }

    #[test]
    fn projection_is_nearest_among_dense_boundary_sample() {
        // brute-force check on the square: projection distance matches the
        // minimum over a dense boundary sampling
        let dom = builtin("square");
        let mut rng = substream(47, 2);
        for _ in 0..50 {
            let p = [rng.gen::<f64>() * 3.0 - 1.5, rng.gen::<f64>() * 3.0 - 1.5];
            let (q, _) = dom.boundary_project(&p);
            let dq = crate::geom::dist(&p, &q[..2]);
            let mut best = f64::INFINITY;
            for i in 0..4000 {
                let t = -1.0 + 2.0 * i as f64 / 3999.0;
                for cand in [[t, -1.0], [t, 1.0], [-1.0, t], [1.0, t]] {
                    best = best.min(crate::geom::dist(&p, &cand));
                }
            }
            assert!(dq <= best + 1e-3, "proj {dq} vs brute {best}");
        }
    }

    #[test]
    fn slit_projection_tags_sides() {
        let dom = builtin("slit_disk");
        let (_, side_up) = dom.boundary_project(&[0.5, 1e-4]);
        assert_eq!(side_up, Some(SlitSide::Above));
        let (_, side_dn) = dom.boundary_project(&[0.5, -1e-4]);
        assert_eq!(side_dn, Some(SlitSide::Below));
        // near the circle the tag disappears
        let (_, none) = dom.boundary_project(&[0.0, 0.95]);
        assert_eq!(none, None);
    }
}
