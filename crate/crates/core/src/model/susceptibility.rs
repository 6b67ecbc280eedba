//! Optical and mechanical susceptibilities in the frame rotating at the mean
//! of the two drive tones, and the radiation-pressure-dressed mechanical
//! response from the full linearized two-tone solution.

use num_complex::Complex64;

use super::{DriveConfig, SystemParams};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A susceptibility evaluation. Lossless resonances (zero damping evaluated
/// exactly on resonance) come back as [`Response::Divergent`] instead of an
/// infinity so callers have to deal with them explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Response {
    Finite(Complex64),
    Divergent,
}

impl Response {
    fn from_inverse(inv: Complex64) -> Self {
        if inv.re == 0.0 && inv.im == 0.0 {
            return Self::Divergent;
        }
        let v = inv.inv();
        if v.re.is_finite() && v.im.is_finite() {
            Self::Finite(v)
        } else {
            Self::Divergent
        }
    }

    pub fn value(self) -> Option<Complex64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Divergent => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }
}

/// `χ_c⁻¹(ω) = κ/2 − i(ω + Δ)`.
pub fn chi_c_inverse(params: &SystemParams, drive: &DriveConfig, omega: f64) -> Complex64 {
    Complex64::new(0.5 * params.kappa, -(omega + drive.delta_mean))
}

/// `χ_m⁻¹(ω) = Γ_m/2 − i(ω + δ)`.
pub fn chi_m_inverse(params: &SystemParams, drive: &DriveConfig, omega: f64) -> Complex64 {
    Complex64::new(0.5 * params.gamma_m, -(omega + drive.delta))
}

/// Optical susceptibility `χ_c(ω) = 1 / (κ/2 − i(ω + Δ))`.
pub fn chi_c(params: &SystemParams, drive: &DriveConfig, omega: f64) -> Response {
    Response::from_inverse(chi_c_inverse(params, drive, omega))
}

/// Bare mechanical susceptibility `χ_m(ω) = 1 / (Γ_m/2 − i(ω + δ))`.
pub fn chi_m(params: &SystemParams, drive: &DriveConfig, omega: f64) -> Response {
    Response::from_inverse(chi_m_inverse(params, drive, omega))
}

/// All intermediate objects of the Fourier-domain solution at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactResponse {
    pub chi_meff: Response,
    /// Optical drive matrix `M(ω)`, row-major.
    pub m: [[Complex64; 2]; 2],
    pub n: Complex64,
    pub pi: Complex64,
    pub sigma: Complex64,
    /// `G² = g_c² − g_b²`.
    pub g2: f64,
}

/// Conjugate of `f(−ω)`, the form in which every counter-rotating quantity
/// enters the solution.
fn conj_neg<F: Fn(f64) -> Complex64>(f: F, omega: f64) -> Complex64 {
    f(-omega).conj()
}

/// Radiation-pressure-modified mechanical susceptibility from the full
/// linearized solution,
/// `χ_meff(ω) = (χ_m*⁻¹(−ω) − iΣ*(−ω)) / N(ω)`, with `M`, `N`, `Π`, `Σ`, `G²`
/// exposed for inspection.
///
/// Optical susceptibilities enter as values and mechanical ones as inverses,
/// so a lossless mechanical mode is handled without special cases. A cavity
/// with `κ = 0` driven exactly on resonance has no finite solution and yields
/// a divergent `χ_meff`.
pub fn exact_effective_susceptibility(params: &SystemParams, drive: &DriveConfig, omega: f64) -> ExactResponse {
    let g_c = drive.g_c(params);
    let g_b = drive.g_b(params);
    let gc2 = g_c * g_c;
    let gb2 = g_b * g_b;
    let g2 = gc2 - gb2;

    let cc = chi_c_inverse(params, drive, omega).inv();
    let cc_neg = conj_neg(|w| chi_c_inverse(params, drive, w).inv(), omega);
    let cm_inv = chi_m_inverse(params, drive, omega);
    let cm_inv_neg = conj_neg(|w| chi_m_inverse(params, drive, w), omega);

    let sigma_at = |w: f64| -> Complex64 {
        let c = chi_c_inverse(params, drive, w).inv();
        let c_neg = chi_c_inverse(params, drive, -w).inv().conj();
        -I * (gc2 * c - gb2 * c_neg)
    };
    let sigma = sigma_at(omega);
    let sigma_neg = conj_neg(sigma_at, omega);
    let pi = -I * g_c * g_b * (cc - cc_neg);

    let m = [
        [
            cc * g_c * (cm_inv_neg + g2 * cc_neg),
            cc_neg * g_b * (cm_inv_neg + g2 * cc),
        ],
        [cc * g_b * (cm_inv + g2 * cc_neg), cc_neg * g_c * (cm_inv + g2 * cc)],
    ];
    let n = cm_inv * cm_inv_neg + I * cm_inv_neg * sigma - I * cm_inv * sigma_neg + g2 * g2 * cc * cc_neg;

    let numerator = cm_inv_neg - I * sigma_neg;
    let finite = [cc, cc_neg, n, numerator]
        .iter()
        .all(|z| z.re.is_finite() && z.im.is_finite());
    let chi_meff = if !finite || n.norm() == 0.0 {
        Response::Divergent
    } else {
        let v = numerator / n;
        if v.re.is_finite() && v.im.is_finite() {
            Response::Finite(v)
        } else {
            Response::Divergent
        }
    };

    ExactResponse {
        chi_meff,
        m,
        n,
        pi,
        sigma,
        g2,
    }
}

/// Lorentzian approximation `1 / (Γ_eff/2 − i(ω + δ − δΩ_m))` of the dressed
/// mechanical response, valid at weak coupling.
pub fn lorentzian_effective_susceptibility(params: &SystemParams, drive: &DriveConfig, omega: f64) -> Response {
    let rates = super::scattering_rates(params, drive);
    let gamma_eff = params.gamma_m + (rates.gamma_c - rates.gamma_b);
    let shift = super::spring_shift(params, drive);
    Response::from_inverse(Complex64::new(0.5 * gamma_eff, -(omega + drive.delta - shift)))
}
