use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub residual_ss: f64,
    pub rank: usize,
}

/// Minimum-norm solution of `min ||y - X b||²`.
///
/// Singular values below `max(m, n) * eps * s_max` are treated as zero, so
/// rank-deficient designs get the pseudo-inverse solution.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> LeastSquares {
    let (m, n) = x.shape();
    assert_eq!(m, y.len(), "design rows must match target length");
    if n == 0 {
        return LeastSquares {
            coef: DVector::zeros(0),
            residual_ss: y.norm_squared(),
            rank: 0,
        };
    }
    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = (m.max(n) as f64) * f64::EPSILON * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let coef = if s_max > 0.0 {
        svd.solve(y, tol).expect("u and v were computed")
    } else {
        DVector::zeros(n)
    };
    let residual_ss = (y - x * &coef).norm_squared();
    LeastSquares {
        coef,
        residual_ss,
        rank,
    }
}
