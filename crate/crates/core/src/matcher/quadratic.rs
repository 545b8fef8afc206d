use super::SsrField;
use crate::error::{Error, Result};

/// `ε(x, y) ≈ a + b·x + c·y + d·x² + e·x·y + f·y²` in coordinates relative to
/// the center pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticSurface {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    /// Sum of squared residuals of the fit over the nine samples.
    pub residual: f64,
}

impl QuadraticSurface {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a + self.b * x + self.c * y + self.d * x * x + self.e * x * y + self.f * y * y
    }

    /// Trace of the Hessian, `2d + 2f`.
    pub fn curvature(&self) -> f64 {
        2.0 * self.d + 2.0 * self.f
    }

    /// Whether `[[2d, e], [e, 2f]]` is positive definite.
    pub fn hessian_pd(&self) -> bool {
        2.0 * self.d > 0.0 && 4.0 * self.d * self.f - self.e * self.e > 0.0
    }
}

/// Least-squares fit to `z[dy + 1][dx + 1]` for `dx, dy ∈ {-1, 0, 1}`.
///
/// The 3×3 design matrix is fixed, and with the basis
/// `1, x, y, x² − 2/3, xy, y² − 2/3` its columns are orthogonal, so each
/// coefficient is a constant stencil. The stencils are evaluated as sums of
/// differences, which makes constant samples fit exactly.
pub fn fit_quadratic_samples(z: [[f64; 3]; 3]) -> QuadraticSurface {
    let center = z[1][1];
    let col = |c: usize| z[0][c] + z[1][c] + z[2][c];
    let row = |r: usize| z[r][0] + z[r][1] + z[r][2];
    let b = (col(2) - col(0)) / 6.0;
    let c = (row(2) - row(0)) / 6.0;
    let d = (0..3)
        .map(|r| (z[r][0] - z[r][1]) + (z[r][2] - z[r][1]))
        .sum::<f64>()
        / 6.0;
    let f = (0..3)
        .map(|k| (z[0][k] - z[1][k]) + (z[2][k] - z[1][k]))
        .sum::<f64>()
        / 6.0;
    let e = ((z[2][2] - z[2][0]) - (z[0][2] - z[0][0])) / 4.0;
    // center weight 5/9, edges 2/9, corners −1/9
    let edges = (z[0][1] - center) + (z[1][0] - center) + (z[1][2] - center) + (z[2][1] - center);
    let corners = (z[0][0] - center) + (z[0][2] - center) + (z[2][0] - center) + (z[2][2] - center);
    let a = center + (2.0 * edges - corners) / 9.0;
    let mut s = QuadraticSurface {
        a,
        b,
        c,
        d,
        e,
        f,
        residual: 0.0,
    };
    s.residual = z
        .iter()
        .enumerate()
        .flat_map(|(row, zs)| {
            zs.iter()
                .enumerate()
                .map(move |(col, &v)| (col as f64 - 1.0, row as f64 - 1.0, v))
        })
        .map(|(x, y, v)| (v - s.eval(x, y)).powi(2))
        .sum();
    s
}

/// Fits the 3×3 neighbourhood of `(i, j)`; every neighbour must be valid.
pub fn fit_quadratic_3x3(field: &SsrField, (i, j): (usize, usize)) -> Result<QuadraticSurface> {
    if i == 0 || j == 0 {
        return Err(Error::NoNeighborhood { i, j });
    }
    let mut z = [[0.0; 3]; 3];
    for (dy, row) in z.iter_mut().enumerate() {
        for (dx, v) in row.iter_mut().enumerate() {
            *v = field
                .get(i + dx - 1, j + dy - 1)
                .ok_or(Error::NoNeighborhood { i, j })?;
        }
    }
    Ok(fit_quadratic_samples(z))
}

/// Outcome of solving for the stationary point of a fitted surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Refinement {
    /// Offset from the center pixel, each component in `(-1, 1)`.
    Refined { dx: f64, dy: f64 },
    /// Hessian not positive definite.
    NotMinimum,
    /// The stationary point lies outside the unit cell.
    OutsideCell { dx: f64, dy: f64 },
}

/// Solves `[[2d, e], [e, 2f]]·[x, y] = [-b, -c]`.
pub fn subpixel_refine(s: &QuadraticSurface) -> Refinement {
    if !s.hessian_pd() {
        return Refinement::NotMinimum;
    }
    let det = 4.0 * s.d * s.f - s.e * s.e;
    let dx = (-2.0 * s.b * s.f + s.c * s.e) / det;
    let dy = (-2.0 * s.c * s.d + s.b * s.e) / det;
    if dx.abs() < 1.0 && dy.abs() < 1.0 {
        Refinement::Refined { dx, dy }
    } else {
        Refinement::OutsideCell { dx, dy }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn sample(g: impl Fn(f64, f64) -> f64) -> [[f64; 3]; 3] {
        let mut z = [[0.0; 3]; 3];
        for (r, row) in z.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = g(c as f64 - 1.0, r as f64 - 1.0);
            }
        }
        z
    }

    fn lstsq(z: [[f64; 3]; 3]) -> Vec<f64> {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (r, zr) in z.iter().enumerate() {
            for (c, &v) in zr.iter().enumerate() {
                let (x, y) = (c as f64 - 1.0, r as f64 - 1.0);
                rows.extend_from_slice(&[1.0, x, y, x * x, x * y, y * y]);
                rhs.push(v);
            }
        }
        let a = DMatrix::from_row_slice(9, 6, &rows);
        let svd = a.svd(true, true);
        svd.solve(&DVector::from_vec(rhs), 1e-12).unwrap().iter().copied().collect()
    }

    #[test]
    fn reproduces_exact_quadratic() {
        let s = fit_quadratic_samples(sample(|x, y| (x - 0.3).powi(2) + (y - 0.2).powi(2)));
        for (got, want) in [(s.b, -0.6), (s.c, -0.4), (s.d, 1.0), (s.e, 0.0), (s.f, 1.0), (s.a, 0.13)] {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
        assert!(s.residual < 1e-24);
        match subpixel_refine(&s) {
            Refinement::Refined { dx, dy } => {
                assert_abs_diff_eq!(dx, 0.3, epsilon = 1e-12);
                assert_abs_diff_eq!(dy, 0.2, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_and_cross_term() {
        let s = fit_quadratic_samples(sample(|_, _| 4.5));
        assert_eq!([s.b, s.c, s.d, s.e, s.f], [0.0; 5]);
        assert_eq!(s.a, 4.5);
        let s = fit_quadratic_samples(sample(|x, y| x * y));
        assert_abs_diff_eq!(s.e, 1.0, epsilon = 1e-15);
        for v in [s.a, s.b, s.c, s.d, s.f] {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn saddle_is_rejected() {
        let s = fit_quadratic_samples(sample(|x, y| x * x - y * y));
        assert_eq!(subpixel_refine(&s), Refinement::NotMinimum);
    }

    #[test]
    fn lopsided_fit_falls_outside_cell() {
        // minimum of (x − 1.4)² + y² lies 1.4 px away
        let s = fit_quadratic_samples(sample(|x, y| (x - 1.4).powi(2) + y * y));
        // brute-force the fitted surface on a fine grid
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in -300..=300 {
            for b in -300..=300 {
                let (x, y) = (a as f64 / 100.0, b as f64 / 100.0);
                let v = s.eval(x, y);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        assert_abs_diff_eq!(best.1, 1.4, epsilon = 1e-9);
        assert!(matches!(subpixel_refine(&s), Refinement::OutsideCell { dx, .. } if (dx - 1.4).abs() < 1e-9));
    }

    proptest! {
        #[test]
        fn stencil_matches_least_squares(z in prop::array::uniform3(prop::array::uniform3(-10.0f64..10.0))) {
            let s = fit_quadratic_samples(z);
            let want = lstsq(z);
            for (got, w) in [s.a, s.b, s.c, s.d, s.e, s.f].iter().zip(&want) {
                prop_assert!((got - w).abs() < 1e-9, "{got} vs {w}");
            }
        }

        #[test]
        fn refined_point_is_not_above_center(z in prop::array::uniform3(prop::array::uniform3(0.0f64..10.0))) {
            let s = fit_quadratic_samples(z);
            if let Refinement::Refined { dx, dy } = subpixel_refine(&s) {
                prop_assert!(dx.abs() < 1.0 && dy.abs() < 1.0);
                prop_assert!(s.eval(dx, dy) <= s.eval(0.0, 0.0) + 1e-12);
            }
        }
    }
}
