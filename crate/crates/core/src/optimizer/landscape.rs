//! Two-parameter slices of a fitted surrogate around an optimum.

use super::acquisition::Surrogate;
use super::OptimizerError;

const FD_STEP: f64 = 1e-3;

/// Finite-difference second derivative of the posterior mean along each
/// unit-cube axis. The stencil is shifted inward at the box faces.
pub fn curvatures<S: Surrogate + ?Sized>(s: &S, center: &[f64]) -> Vec<f64> {
    let h = FD_STEP;
    (0..center.len())
        .map(|k| {
            let c = center[k].clamp(h, 1.0 - h);
            let mut p = center.to_vec();
            p[k] = c - h;
            let fm = s.cost_mean(&p);
            p[k] = c;
            let f0 = s.cost_mean(&p);
            p[k] = c + h;
            let fp = s.cost_mean(&p);
            (fp - 2.0 * f0 + fm) / (h * h)
        })
        .collect()
}

/// The two axes with the largest curvature, most sensitive first. Ties go to
/// the lower index.
pub fn most_sensitive_axes<S: Surrogate + ?Sized>(
    s: &S,
    center: &[f64],
) -> Result<(usize, usize), OptimizerError> {
    if center.len() < 2 {
        return Err(OptimizerError::Dimension {
            expected: 2,
            got: center.len(),
        });
    }
    let c = curvatures(s, center);
    let mut idx: Vec<usize> = (0..c.len()).collect();
    // stable sort keeps lower indices first among equal curvatures
    idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]));
    Ok((idx[0], idx[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSlice {
    pub axes: (usize, usize),
    /// Grid coordinates along each axis, unit-cube values.
    pub coords: Vec<f64>,
    /// `values[i][j]` at `(coords[i], coords[j])`, minus the value at the centre.
    pub values: Vec<Vec<f64>>,
    pub curvatures: Vec<f64>,
}

/// Posterior mean over an `n × n` grid spanning the full range of the two
/// most sensitive axes, other coordinates held at `center`.
pub fn landscape_slice<S: Surrogate + ?Sized>(
    s: &S,
    center: &[f64],
    n: usize,
) -> Result<LandscapeSlice, OptimizerError> {
    if center.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(OptimizerError::OutOfBounds);
    }
    let axes = most_sensitive_axes(s, center)?;
    let n = n.max(2);
    let coords: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let base = s.cost_mean(center);
    let mut p = center.to_vec();
    let values = coords
        .iter()
        .map(|&u| {
            coords
                .iter()
                .map(|&v| {
                    p[axes.0] = u;
                    p[axes.1] = v;
                    s.cost_mean(&p) - base
                })
                .collect()
        })
        .collect();
    Ok(LandscapeSlice {
        axes,
        coords,
        values,
        curvatures: curvatures(s, center),
    })
}

/// Ratio of the largest curvatures of two landscapes.
pub fn curvature_ratio(sharp: &[f64], broad: &[f64]) -> f64 {
    let max = |c: &[f64]| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max(sharp) / max(broad)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic(Vec<f64>);

    impl Surrogate for Quadratic {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn mean(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.0).map(|(v, h)| 0.5 * h * (v - 0.5).powi(2)).sum()
        }
        fn mean_std(&self, x: &[f64]) -> (f64, f64) {
            (self.mean(x), 0.0)
        }
    }

    #[test]
    fn picks_largest_curvatures() {
        let q = Quadratic(vec![4.0, 1.0, 9.0]);
        assert_eq!(most_sensitive_axes(&q, &[0.5; 3]).unwrap(), (2, 0));
        let c = curvatures(&q, &[0.5; 3]);
        assert!((c[0] - 4.0).abs() < 1e-6 && (c[2] - 9.0).abs() < 1e-6);
    }

    #[test]
    fn isotropic_ties_to_lowest_index() {
        let q = Quadratic(vec![2.0; 4]);
        assert_eq!(most_sensitive_axes(&q, &[0.5; 4]).unwrap(), (0, 1));
    }

    #[test]
    fn slice_subtracts_centre() {
        let q = Quadratic(vec![4.0, 1.0, 9.0]);
        let s = landscape_slice(&q, &[0.5; 3], 5).unwrap();
        assert_eq!(s.values[2][2], 0.0);
        assert!(s.values.iter().flatten().all(|v| *v >= 0.0));
        assert!((s.values[0][2] - 0.5 * 9.0 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let q = Quadratic(vec![1.0]);
        assert!(landscape_slice(&q, &[0.5], 3).is_err());
        let q = Quadratic(vec![1.0, 1.0]);
        assert!(landscape_slice(&q, &[0.5, 1.5], 3).is_err());
    }

    #[test]
    fn ratio() {
        assert_eq!(curvature_ratio(&[3.0, 3500.0], &[1.0, 0.5]), 3500.0);
    }
}
