//! Uniform point clouds and the exact quadratic Wasserstein distance.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest cloud accepted by the exact multi-dimensional solver.
pub const EXACT_W2_CAP: usize = 512;

/// Uniformly weighted point cloud in `R^m`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(invalid(format!(
                "{} coordinates do not form a non-empty cloud in dimension {dim}",
                points.len()
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::new(x.len(), x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.len() as f64; self.len()]
    }

    pub fn mean(&self) -> Vec<f64> {
        mean_of(&self.points, self.dim)
    }

    /// Per-coordinate (population) variance.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut var = vec![0.0; self.dim];
        for p in self.points.chunks_exact(self.dim) {
            for c in 0..self.dim {
                var[c] += (p[c] - mean[c]).powi(2);
            }
        }
        var.iter().map(|v| v / self.len() as f64).collect()
    }

    /// `int |x|^2 dmu`.
    pub fn second_moment(&self) -> f64 {
        self.points.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    /// Pushes every point through `f`.
    pub fn map(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.points.chunks_exact(self.dim).map(f).collect()
    }
}

/// Mean of row-major points, summed in fixed blocks so the result does not
/// depend on thread count. Deviations from the first point are summed, so
/// identical points give their common value exactly.
pub(crate) fn mean_of(points: &[f64], dim: usize) -> Vec<f64> {
    const BLOCK: usize = 4096;
    let n = points.len() / dim;
    let shift = &points[..dim];
    let mut total = vec![0.0; dim];
    let mut part = vec![0.0; dim];
    for block in points.chunks(BLOCK * dim) {
        part.fill(0.0);
        for p in block.chunks_exact(dim) {
            for c in 0..dim {
                part[c] += p[c] - shift[c];
            }
        }
        for c in 0..dim {
            total[c] += part[c];
        }
    }
    total.iter().zip(shift).map(|(v, s)| s + v / n as f64).collect()
}

/// Exact `W2` between two uniform clouds.
///
/// One-dimensional clouds of any sizes use the quantile coupling. In higher
/// dimension both clouds must have at most [`EXACT_W2_CAP`] points; unequal
/// sizes are replicated to their least common multiple, which must also
/// respect the cap. The optimal coupling is found by the Hungarian method.
pub fn wasserstein2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim != b.dim {
        return Err(invalid(format!("dimension mismatch: {} vs {}", a.dim, b.dim)));
    }
    // fixed argument order keeps the floating-point result symmetric
    let (a, b) = match a.len().cmp(&b.len()).then_with(|| cmp_points(&a.points, &b.points)) {
        std::cmp::Ordering::Greater => (b, a),
        _ => (a, b),
    };
    if a.dim == 1 {
        return Ok(quantile_w2(&a.points, &b.points));
    }
    let (na, nb) = (a.len(), b.len());
    if na > EXACT_W2_CAP || nb > EXACT_W2_CAP {
        return Err(invalid(format!(
            "exact W2 in dimension {} is limited to {EXACT_W2_CAP} points per cloud (got {na} and {nb}); subsample the clouds first",
            a.dim
        )));
    }
    let l = lcm(na, nb);
    if l > EXACT_W2_CAP {
        return Err(invalid(format!(
            "clouds of sizes {na} and {nb} need {l} replicated points, above the cap {EXACT_W2_CAP}; subsample to equal sizes"
        )));
    }
    let (ra, rb) = (l / na, l / nb);
    let cost: Vec<f64> = (0..l)
        .flat_map(|i| {
            let p = a.point(i / ra);
            (0..l).map(move |j| {
                let q = b.point(j / rb);
                p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum::<f64>()
            })
        })
        .collect();
    let total = hungarian(&cost, l);
    Ok((total / l as f64).max(0.0).sqrt())
}

fn cmp_points(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn quantile_w2(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    if na == nb {
        let s: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum();
        return (s / na as f64).sqrt();
    }
    // Walk the merged quantile breakpoints i/na and j/nb.
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut s = 0.0;
    while i < na && j < nb {
        let (ea, eb) = ((i + 1) * nb, (j + 1) * na);
        let next = ea.min(eb) as f64 / (na * nb) as f64;
        s += (next - u) * (a[i] - b[j]).powi(2);
        u = next;
        if ea <= eb {
            i += 1;
        }
        if eb <= ea {
            j += 1;
        }
    }
    s.max(0.0).sqrt()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Minimum-cost perfect assignment on a dense `n x n` cost matrix
/// (shortest augmenting paths with potentials, O(n^3)).
pub(crate) fn hungarian(cost: &[f64], n: usize) -> f64 {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[(p[j] - 1) * n + (j - 1)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(dim: usize, pts: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(dim, pts.to_vec()).unwrap()
    }

    #[test]
    fn moments_of_small_clouds() {
        let d = cloud(1, &[3.0]);
        assert_eq!(d.mean(), vec![3.0]);
        assert_eq!(d.variance(), vec![0.0]);
        let two = cloud(1, &[0.0, 2.0]);
        assert_eq!(two.mean(), vec![1.0]);
        assert_eq!(two.variance(), vec![1.0]);
        assert!((two.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w2_examples() {
        let a = cloud(1, &[0.0, 1.0]);
        assert_eq!(wasserstein2(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein2(&cloud(1, &[0.0]), &cloud(1, &[2.0])).unwrap(), 2.0);
        assert!((wasserstein2(&a, &cloud(1, &[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
        // same example embedded in the plane goes through the assignment solver
        let a2 = cloud(2, &[0.0, 0.0, 1.0, 0.0]);
        let b2 = cloud(2, &[1.0, 0.0, 2.0, 0.0]);
        assert!((wasserstein2(&a2, &b2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_sizes_in_one_dimension() {
        // uniform{0,1} vs uniform{0,1,2}: quantile coupling by hand
        let a = cloud(1, &[0.0, 1.0]);
        let b = cloud(1, &[0.0, 1.0, 2.0]);
        let want = ((1.0 / 6.0) * 1.0 + (1.0 / 3.0) * 1.0f64).sqrt();
        assert!((wasserstein2(&a, &b).unwrap() - want).abs() < 1e-14);
        // and the replicated assignment solver agrees
        let a2 = cloud(2, &[0.0, 5.0, 1.0, 5.0]);
        let b2 = cloud(2, &[0.0, 5.0, 1.0, 5.0, 2.0, 5.0]);
        assert!((wasserstein2(&a2, &b2).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn multi_d_cap_is_enforced() {
        let big = cloud(2, &vec![0.0; 2 * 513]);
        let err = wasserstein2(&big, &big).unwrap_err();
        assert!(err.to_string().contains("subsample"));
        assert!(wasserstein2(&cloud(1, &[0.0]), &cloud(2, &[0.0, 0.0])).is_err());
    }

    #[test]
    fn hungarian_matches_permutation_search() {
        let n = 6;
        let cost: Vec<f64> = (0..n * n).map(|k| ((k * 37 + 11) % 17) as f64 + 0.1 * (k % 5) as f64).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            best = best.min(c);
        });
        assert!((hungarian(&cost, n) - best).abs() < 1e-12);
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }
}
