//! Small weighted linear least squares used by the sweep regressions.

use nalgebra::{DMatrix, DVector};

/// Solution of `min Σ wᵢ (yᵢ − xᵢ·β)²`.
#[derive(Debug, Clone)]
pub(crate) struct LinearFit {
    pub beta: DVector<f64>,
    /// `(XᵀWX)⁻¹`, not yet scaled by the reduced χ².
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: usize,
    /// Condition number of the weighted design with unit-norm columns.
    pub condition: f64,
}

impl LinearFit {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    /// Covariance inflated by the reduced χ² when the scatter exceeds the
    /// stated uncertainties; never deflated.
    pub fn scaled_covariance(&self) -> DMatrix<f64> {
        let s = self.reduced_chi2();
        if s.is_finite() && s > 1.0 {
            &self.covariance * s
        } else {
            self.covariance.clone()
        }
    }
}

/// Weighted least squares through the SVD of the column-equilibrated
/// design. Returns `None` when a column is identically zero.
pub(crate) fn weighted_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Option<LinearFit> {
    let (m, n) = x.shape();
    debug_assert_eq!(m, y.len());
    debug_assert_eq!(m, w.len());
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut a = DMatrix::from_fn(m, n, |i, j| x[(i, j)] * sw[i]);
    let b = DVector::from_fn(m, |i, _| y[i] * sw[i]);
    let mut scale = vec![0.0; n];
    for (j, s) in scale.iter_mut().enumerate() {
        *s = a.column(j).norm();
        if !(*s > 0.0 && s.is_finite()) {
            return None;
        }
        a.column_mut(j).scale_mut(1.0 / *s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() {
        return Some(LinearFit {
            beta: DVector::zeros(n),
            covariance: DMatrix::from_element(n, n, f64::INFINITY),
            chi2: f64::INFINITY,
            dof: m.saturating_sub(n),
            condition,
        });
    }
    let z = svd.solve(&b, 0.0).ok()?;
    let resid = &b - &a * &z;
    let ata_inv = (a.transpose() * &a).try_inverse()?;
    let beta = DVector::from_fn(n, |j, _| z[j] / scale[j]);
    let covariance = DMatrix::from_fn(n, n, |i, j| ata_inv[(i, j)] / (scale[i] * scale[j]));
    Some(LinearFit {
        beta,
        covariance,
        chi2: resid.norm_squared(),
        dof: m.saturating_sub(n),
        condition,
    })
}
