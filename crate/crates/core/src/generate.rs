//! Builtin measure generators for experiments: segments, square boundaries,
//! clusters, circles, and sphere shells. All are deterministic.

use crate::measure::PointMeasure;

/// `count` equal atoms discretizing arclength on the segment
/// `[0,1] x {0}`, total mass 1, atoms at midpoints `(i + 1/2)/count`.
pub fn segment_measure(count: usize) -> PointMeasure {
    segment_between(count, [0.0, 0.0], [1.0, 0.0], 1.0)
}

/// Equal atoms on the segment from `a` to `b` with the given total mass.
pub fn segment_between(count: usize, a: [f64; 2], b: [f64; 2], total_mass: f64) -> PointMeasure {
    let pts: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            let t = (i as f64 + 0.5) / count as f64;
            vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect();
    PointMeasure::from_points(1, &pts, vec![total_mass / count as f64; count]).unwrap()
}

/// Arclength atoms on the boundary of the square `[-h, h]^2`, `count` atoms
/// per side, total mass = perimeter `8h`.
pub fn square_boundary_measure(count_per_side: usize, h: f64) -> PointMeasure {
    let m = count_per_side;
    let w = 2.0 * h / m as f64; // arclength per atom
    let mut pts = Vec::with_capacity(4 * m);
    for i in 0..m {
        let t = -h + (i as f64 + 0.5) * 2.0 * h / m as f64;
        pts.push(vec![t, -h]);
        pts.push(vec![h, t]);
        pts.push(vec![-t, h]);
        pts.push(vec![-h, -t]);
    }
    PointMeasure::from_points(1, &pts, vec![w; 4 * m]).unwrap()
}

/// Arclength atoms on the circle of given radius, total mass = circumference.
pub fn circle_boundary_measure(count: usize, radius: f64) -> PointMeasure {
    let pts: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / count as f64;
            vec![radius * th.cos(), radius * th.sin()]
        })
        .collect();
    let w = 2.0 * std::f64::consts::PI * radius / count as f64;
    PointMeasure::from_points(1, &pts, vec![w; count]).unwrap()
}

/// Two equal-size clusters of atoms, each spread over `cluster_width`,
/// centers separated by `separation` along the x-axis. Total mass 1.
pub fn two_cluster_measure(count_per_cluster: usize, cluster_width: f64, separation: f64) -> PointMeasure {
    let m = count_per_cluster;
    let mut pts = Vec::with_capacity(2 * m);
    for c in 0..2 {
        let cx = c as f64 * separation;
        for i in 0..m {
            let t = (i as f64 + 0.5) / m as f64 - 0.5;
            pts.push(vec![cx + t * cluster_width, 0.0]);
        }
    }
    PointMeasure::from_points(1, &pts, vec![0.5 / m as f64; 2 * m]).unwrap()
}

/// A unit segment carrying most of the mass plus a tight cluster riding on
/// it; the sharp density spike drives the ugly branch of the corona tree.
pub fn segment_plus_cluster_measure(
    segment_count: usize,
    cluster_count: usize,
    cluster_center: f64,
    cluster_width: f64,
    cluster_mass: f64,
) -> PointMeasure {
    let mut pts: Vec<Vec<f64>> = (0..segment_count)
        .map(|i| vec![(i as f64 + 0.5) / segment_count as f64, 0.0])
        .collect();
    let mut w = vec![(1.0 - cluster_mass) / segment_count as f64; segment_count];
    for i in 0..cluster_count {
        let t = (i as f64 + 0.5) / cluster_count as f64 - 0.5;
        pts.push(vec![cluster_center + t * cluster_width, 0.0]);
        w.push(cluster_mass / cluster_count as f64);
    }
    PointMeasure::from_points(1, &pts, w).unwrap()
}

/// Fibonacci-lattice atoms on the 2-sphere of given radius (ambient dim 3,
/// n = 2), total mass = surface area.
pub fn sphere_shell_measure(count: usize, radius: f64) -> PointMeasure {
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    let pts: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let th = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            let rho = (1.0 - z * z).sqrt();
            vec![radius * rho * th.cos(), radius * rho * th.sin(), radius * z]
        })
        .collect();
    let area = 4.0 * std::f64::consts::PI * radius * radius;
    PointMeasure::from_points(2, &pts, vec![area / count as f64; count]).unwrap()
}
