//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Plain Euclidean distance, written out independently of the library.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

/// O(n^3) peeling: every round rescans all remaining pairs for the
/// farthest one, keeping the first (i, j) in lexicographic order on ties.
/// Returns (members, distance) per border; an odd leftover has distance 0.
pub fn brute_force_borders(columns: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
    let n = columns.len();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    while alive.len() >= 2 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..alive.len() {
            for b in (a + 1)..alive.len() {
                let (i, j) = (alive[a], alive[b]);
                let d = distance(&columns[i], &columns[j]);
                if best.is_none_or(|(_, _, bd)| d > bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let (i, j, d) = best.unwrap();
        alive.retain(|&k| k != i && k != j);
        out.push((vec![i, j], d));
    }
    if let Some(&last) = alive.first() {
        out.push((vec![last], 0.0));
    }
    out
}

/// Tukey's hinges: medians of the lower and upper halves, each half
/// including the overall median when n is odd.
pub fn hinges(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let half = n.div_ceil(2);
    let med = |s: &[f64]| {
        let k = s.len();
        if k % 2 == 1 {
            s[k / 2]
        } else {
            (s[k / 2 - 1] + s[k / 2]) / 2.0
        }
    };
    (med(&v[..half]), med(&v[n - half..]))
}

/// Is `target` a convex combination of `points` (each of dimension d)?
/// Enumerates supports of size at most d + 1 (Caratheodory), solving the
/// affine system by least squares and accepting non-negative weights that
/// reproduce the target within `tol`.
pub fn in_convex_hull(points: &[Vec<f64>], target: &[f64], tol: f64) -> bool {
    let d = target.len();
    let n = points.len();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
        if support.len() > d + 1 {
            continue;
        }
        // rows: d coordinates plus the sum-to-one constraint
        let a = DMatrix::from_fn(d + 1, support.len(), |r, c| {
            if r < d {
                points[support[c]][r]
            } else {
                1.0
            }
        });
        let b = DVector::from_fn(d + 1, |r, _| if r < d { target[r] } else { 1.0 });
        let svd = a.clone().svd(true, true);
        let Ok(lambda) = svd.solve(&b, 1e-12) else {
            continue;
        };
        let residual = (&a * &lambda - &b).norm();
        if residual <= tol && lambda.iter().all(|&l| l >= -tol) {
            return true;
        }
    }
    false
}

/// Small deterministic LCG so the oracle-driven loops do not share the
/// library's generator.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 11
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        self.next_u64() as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        lo + (self.next_u64() % (hi_inclusive - lo + 1) as u64) as usize
    }
}
