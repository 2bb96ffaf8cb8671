//! Tensor grids: uniform `t`, `z`, `x2` axes and a clustered `x1` axis.

use crate::error::{invalid, Result};

/// Default clustering strength for [`build_adaptive_x1`].
pub const DEFAULT_CLUSTER_STRENGTH: f64 = 5.0;

/// `n_intervals + 1` equally spaced nodes from `a` to `b`, endpoints exact.
pub fn uniform_axis(a: f64, b: f64, n_intervals: usize) -> Result<Vec<f64>> {
    if !(a < b) || n_intervals < 2 {
        return invalid(format!(
            "uniform axis needs a < b and at least 3 nodes, got [{a}, {b}] with {n_intervals} intervals"
        ));
    }
    let h = (b - a) / n_intervals as f64;
    let mut axis: Vec<f64> = (0..=n_intervals).map(|k| a + k as f64 * h).collect();
    axis[n_intervals] = b;
    Ok(axis)
}

/// Number of intervals of width close to `step` covering `length`.
pub fn intervals_for(length: f64, step: f64) -> usize {
    ((length / step).round() as usize).max(1)
}

/// Nodes `x(xi) = c + a sinh(c2 xi + c1 (1 - xi))` on a uniform `xi` mesh,
/// densest at `cluster_center`. `cluster_strength = 0` gives a uniform axis.
pub fn build_adaptive_x1(
    x_min: f64,
    x_max: f64,
    n_nodes: usize,
    cluster_center: f64,
    cluster_strength: f64,
) -> Result<Vec<f64>> {
    if !(x_min < cluster_center && cluster_center < x_max) {
        return invalid(format!(
            "cluster center {cluster_center} must lie strictly inside [{x_min}, {x_max}]"
        ));
    }
    if n_nodes < 3 {
        return invalid(format!("x1 axis needs at least 3 nodes, got {n_nodes}"));
    }
    if !(cluster_strength >= 0.0 && cluster_strength.is_finite()) {
        return invalid(format!("cluster strength must be nonnegative, got {cluster_strength}"));
    }
    if cluster_strength == 0.0 {
        return uniform_axis(x_min, x_max, n_nodes - 1);
    }
    let a = (x_max - x_min) / cluster_strength;
    let c1 = ((x_min - cluster_center) / a).asinh();
    let c2 = ((x_max - cluster_center) / a).asinh();
    let last = n_nodes - 1;
    let mut axis: Vec<f64> = (0..n_nodes)
        .map(|k| {
            let xi = k as f64 / last as f64;
            cluster_center + a * (c2 * xi + c1 * (1.0 - xi)).sinh()
        })
        .collect();
    axis[0] = x_min;
    axis[last] = x_max;
    Ok(axis)
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.len() < 3 {
        return invalid(format!("{name} axis needs at least 3 nodes"));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid(format!("{name} axis must be strictly increasing"));
    }
    Ok(())
}

/// Solver grid. `x2` is present only for two-factor problems.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Option<Vec<f64>>,
}

impl Grid {
    pub fn new(t: Vec<f64>, z: Vec<f64>, x1: Vec<f64>, x2: Option<Vec<f64>>) -> Result<Self> {
        check_axis("t", &t)?;
        check_axis("z", &z)?;
        check_axis("x1", &x1)?;
        if let Some(x2) = &x2 {
            check_axis("x2", x2)?;
        }
        Ok(Self { t, z, x1, x2 })
    }

    pub fn nz(&self) -> usize {
        self.z.len()
    }

    pub fn nx1(&self) -> usize {
        self.x1.len()
    }

    /// Number of `x2` nodes, 1 for single-factor grids.
    pub fn nx2(&self) -> usize {
        self.x2.as_ref().map_or(1, Vec::len)
    }

    /// Nodes per time slice.
    pub fn slice_len(&self) -> usize {
        self.nz() * self.nx2() * self.nx1()
    }

    /// Flat index of `(iz, ix2, ix1)` with `x1` contiguous.
    #[inline]
    pub fn index(&self, iz: usize, ix2: usize, ix1: usize) -> usize {
        (iz * self.nx2() + ix2) * self.nx1() + ix1
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn dz(&self) -> f64 {
        self.z[1] - self.z[0]
    }

    pub fn dx2(&self) -> Option<f64> {
        self.x2.as_ref().map(|x| x[1] - x[0])
    }
}

/// Index of the node closest to `x`.
pub fn nearest_index(axis: &[f64], x: f64) -> usize {
    let k = axis.partition_point(|&v| v < x);
    if k == 0 {
        0
    } else if k == axis.len() {
        axis.len() - 1
    } else if (axis[k] - x).abs() < (x - axis[k - 1]).abs() {
        k
    } else {
        k - 1
    }
}

/// Cell `k` with `axis[k] <= x <= axis[k+1]` and the weight of `axis[k+1]`,
/// clamped to the axis range.
pub fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if x <= axis[0] {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let k = axis.partition_point(|&v| v <= x) - 1;
    let w = (x - axis[k]) / (axis[k + 1] - axis[k]);
    (k, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_strength_is_uniform() {
        let x = build_adaptive_x1(18.7, 61.3, 11, 40.0, 0.0).unwrap();
        for (k, v) in x.iter().enumerate() {
            assert!((v - (18.7 + 4.26 * k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn example_one_axis_clusters_at_level() {
        let x = build_adaptive_x1(18.7, 61.3, 671, 40.0, DEFAULT_CLUSTER_STRENGTH).unwrap();
        assert_eq!(x.len(), 671);
        assert_eq!(x[0], 18.7);
        assert_eq!(x[670], 61.3);
        let spacing: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let (kmin, _) = spacing
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        // the smallest cell touches the node nearest 40
        let near = nearest_index(&x, 40.0);
        assert!(kmin == near || kmin + 1 == near, "{kmin} {near}");
        let widest = spacing.iter().cloned().fold(0.0, f64::max);
        assert!(widest == spacing[0] || widest == spacing[669]);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(build_adaptive_x1(10.0, 5.0, 10, 7.0, 1.0).is_err());
        assert!(build_adaptive_x1(0.0, 5.0, 10, 7.0, 1.0).is_err());
        assert!(build_adaptive_x1(0.0, 5.0, 2, 2.0, 1.0).is_err());
    }

    #[test]
    fn locate_and_nearest() {
        let a = [0.0, 1.0, 3.0, 4.0];
        assert_eq!(locate(&a, 2.0), (1, 0.5));
        assert_eq!(locate(&a, -1.0), (0, 0.0));
        assert_eq!(locate(&a, 9.0), (2, 1.0));
        assert_eq!(nearest_index(&a, 2.1), 2);
        assert_eq!(nearest_index(&a, 1.9), 1);
    }

    proptest! {
        #[test]
        fn adaptive_axis_is_monotone_with_exact_ends(
            lo in -50.0..50.0f64,
            width in 0.5..100.0f64,
            frac in 0.05..0.95f64,
            n in 3usize..400,
            strength in 0.0..12.0f64,
        ) {
            let hi = lo + width;
            let c = lo + frac * width;
            let x = build_adaptive_x1(lo, hi, n, c, strength).unwrap();
            prop_assert_eq!(x.len(), n);
            prop_assert_eq!(x[0], lo);
            prop_assert_eq!(x[n - 1], hi);
            prop_assert!(x.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
