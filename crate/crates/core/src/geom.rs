//! Small geometric helpers shared across the crate: distances, deterministic
//! pairwise summation, and a uniform-grid bucket index for neighbor queries.

/// Euclidean distance between two points given as coordinate slices.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Squared Euclidean distance.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Deterministic pairwise (fixed-tree) sum. The reduction tree depends only
/// on the slice length, so results are bit-reproducible for a fixed input
/// order regardless of chunking elsewhere.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Pairwise sum of `f(i)` over `0..len` without materializing the values.
/// Same tree shape as [`pairwise_sum`] on a slice of length `len`.
pub fn pairwise_sum_by<F: Fn(usize) -> f64 + Copy>(start: usize, len: usize, f: F) -> f64 {
    match len {
        0 => 0.0,
        1 => f(start),
        2 => f(start) + f(start + 1),
        n => {
            let mid = n / 2;
            pairwise_sum_by(start, mid, f) + pairwise_sum_by(start + mid, n - mid, f)
        }
    }
}

/// Componentwise pairwise sum of small vectors (dimension <= 3).
pub fn pairwise_sum_vec<F: Fn(usize) -> [f64; 3] + Copy>(
    start: usize,
    len: usize,
    f: F,
) -> [f64; 3] {
    match len {
        0 => [0.0; 3],
        1 => f(start),
        2 => add3(f(start), f(start + 1)),
        n => {
            let mid = n / 2;
            add3(
                pairwise_sum_vec(start, mid, f),
                pairwise_sum_vec(start + mid, n - mid, f),
            )
        }
    }
}

#[inline]
pub fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Copies a coordinate slice (dim <= 3) into a fixed array padded with zeros.
#[inline]
pub fn to3(p: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..p.len()].copy_from_slice(p);
    out
}

/// Uniform-grid spatial index over a flat coordinate array. Queries return
/// candidate indices sorted ascending so downstream arithmetic stays
/// deterministic.
pub struct GridIndex {
    cell: f64,
    dim: usize,
    buckets: std::collections::HashMap<[i64; 3], Vec<u32>>,
}

impl GridIndex {
    pub fn build(coords: &[f64], dim: usize, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut buckets: std::collections::HashMap<[i64; 3], Vec<u32>> =
            std::collections::HashMap::new();
        let n = coords.len() / dim;
        for i in 0..n {
            let p = &coords[i * dim..(i + 1) * dim];
            buckets.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        GridIndex { cell, dim, buckets }
    }

    fn key(p: &[f64], cell: f64) -> [i64; 3] {
        let mut k = [0i64; 3];
        for (j, &c) in p.iter().enumerate() {
            k[j] = (c / cell).floor() as i64;
        }
        k
    }

    /// Indices of all points within `radius` buckets of `center`; a superset
    /// of the points within `radius`, sorted ascending.
    pub fn candidates(&self, center: &[f64], radius: f64) -> Vec<u32> {
        let reach = (radius / self.cell).ceil() as i64 + 1;
        let k0 = Self::key(center, self.cell);
        let mut out = Vec::new();
        let ranges: Vec<std::ops::RangeInclusive<i64>> = (0..3)
            .map(|j| {
                if j < self.dim {
                    (k0[j] - reach)..=(k0[j] + reach)
                } else {
                    0..=0
                }
            })
            .collect();
        for a in ranges[0].clone() {
            for b in ranges[1].clone() {
                for c in ranges[2].clone() {
                    if let Some(v) = self.buckets.get(&[a, b, c]) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Halton low-discrepancy sequence value: element `index` in the given base.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}
