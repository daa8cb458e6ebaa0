//! Standard-normal pdf/cdf and the stable ratios the EP updates need.
//!
//! The core is a port of the classic rational-approximation evaluation of
//! erf/erfc/erfcx (three regions, ~1e-16 relative error). Everything is
//! computed in `f64` and converted at the boundary: the scaled complement
//! erfcx is what keeps tail quantities like `hazard` and `log_cdf` finite
//! far beyond where `cdf` itself underflows.

use crate::scalar::Scalar;

const FRAC_1_SQRT_PI: f64 = 0.5641895835477562869;
const SQRT_2_OVER_PI: f64 = 0.7978845608028653559;
const LN_SQRT_2PI: f64 = 0.9189385332046727418;
const FRAC_1_SQRT_2PI: f64 = 0.3989422804014326779;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

const THRESH: f64 = 0.46875;
const X_SMALL: f64 = 1.11e-16;
// erfc underflows past here.
const X_BIG: f64 = 26.543;
// Above this, erfcx(x) = 1/(x sqrt(pi)) to full precision.
const X_HUGE: f64 = 6.71e7;
// Above this, even 1/(x sqrt(pi)) underflows.
const X_MAX: f64 = 2.53e307;
// Below this, erfcx(x) ~ 2 exp(x^2) overflows.
const X_NEG: f64 = -26.628;

const A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

/// erf on `|x| <= 0.46875`.
fn erf_small(x: f64) -> f64 {
    let y = x.abs();
    let ysq = if y > X_SMALL { y * y } else { 0.0 };
    let mut num = A[4] * ysq;
    let mut den = ysq;
    for i in 0..3 {
        num = (num + A[i]) * ysq;
        den = (den + B[i]) * ysq;
    }
    x * (num + A[3]) / (den + B[3])
}

/// erfcx on `0.46875 < y <= 4`.
fn erfcx_mid(y: f64) -> f64 {
    let mut num = C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + C[i]) * y;
        den = (den + D[i]) * y;
    }
    (num + C[7]) / (den + D[7])
}

/// erfcx on `y > 4`.
fn erfcx_large(y: f64) -> f64 {
    if y >= X_HUGE {
        if y >= X_MAX {
            return 0.0;
        }
        return FRAC_1_SQRT_PI / y;
    }
    let ysq = 1.0 / (y * y);
    let mut num = P[5] * ysq;
    let mut den = ysq;
    for i in 0..4 {
        num = (num + P[i]) * ysq;
        den = (den + Q[i]) * ysq;
    }
    let r = ysq * (num + P[4]) / (den + Q[4]);
    (FRAC_1_SQRT_PI - r) / y
}

/// exp(-y^2) with the argument split at a multiple of 1/16 so the squared
/// high part is exact; avoids cancellation error for large y.
fn exp_neg_square(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let del = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-del).exp()
}

/// Scaled complementary error function `exp(x^2) erfc(x)`, all real x.
pub fn erfcx_f64(x: f64) -> f64 {
    let y = x.abs();
    let r = if y <= THRESH {
        // erfcx = exp(y^2) (1 - erf(y)); y^2 <= 0.22 so this is stable.
        (y * y).exp() * (1.0 - erf_small(y))
    } else if y <= 4.0 {
        erfcx_mid(y)
    } else {
        erfcx_large(y)
    };
    if x < 0.0 {
        if x < X_NEG {
            return f64::INFINITY;
        }
        let hi = (x * 16.0).trunc() / 16.0;
        let del = (x - hi) * (x + hi);
        let e = (hi * hi).exp() * del.exp();
        (e + e) - r
    } else {
        r
    }
}

/// Complementary error function.
pub fn erfc_f64(x: f64) -> f64 {
    let y = x.abs();
    if y <= THRESH {
        1.0 - erf_small(x)
    } else if y <= X_BIG {
        let scaled = if y <= 4.0 { erfcx_mid(y) } else { erfcx_large(y) };
        let r = exp_neg_square(y) * scaled;
        if x < 0.0 {
            2.0 - r
        } else {
            r
        }
    } else if x < 0.0 {
        2.0
    } else {
        0.0
    }
}

/// Error function.
pub fn erf_f64(x: f64) -> f64 {
    if x.abs() <= THRESH {
        erf_small(x)
    } else {
        let r = 1.0 - erfc_f64(x.abs());
        if x < 0.0 {
            -r
        } else {
            r
        }
    }
}

/// Standard normal density.
pub fn pdf_f64(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Log of the standard normal density.
pub fn log_pdf_f64(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn cdf_f64(x: f64) -> f64 {
    0.5 * erfc_f64(-x * FRAC_1_SQRT_2)
}

/// log(cdf(x)), stable deep into the lower tail where `cdf` underflows:
/// `Phi(x) = 0.5 erfcx(-x/sqrt(2)) exp(-x^2/2)` for x < 0.
pub fn log_cdf_f64(x: f64) -> f64 {
    if x >= -5.0 {
        cdf_f64(x).ln()
    } else {
        0.5f64.ln() + erfcx_f64(-x * FRAC_1_SQRT_2).ln() - 0.5 * x * x
    }
}

/// Inverse Mills ratio `pdf(x)/cdf(x)`, stable for very negative x where
/// both numerator and denominator underflow: the exp factors cancel,
/// leaving `sqrt(2/pi)/erfcx(-x/sqrt(2))`.
pub fn hazard_f64(x: f64) -> f64 {
    if x > 5.0 {
        // cdf is within 3e-7 of one; the direct ratio is exact enough.
        pdf_f64(x)
    } else {
        SQRT_2_OVER_PI / erfcx_f64(-x * FRAC_1_SQRT_2)
    }
}

pub fn pdf<S: Scalar>(x: S) -> S {
    S::c(pdf_f64(x.f64()))
}

pub fn log_pdf<S: Scalar>(x: S) -> S {
    S::c(log_pdf_f64(x.f64()))
}

pub fn cdf<S: Scalar>(x: S) -> S {
    S::c(cdf_f64(x.f64()))
}

pub fn log_cdf<S: Scalar>(x: S) -> S {
    S::c(log_cdf_f64(x.f64()))
}

pub fn hazard<S: Scalar>(x: S) -> S {
    S::c(hazard_f64(x.f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values computed with 30-digit arithmetic and frozen here.
    const ERF_REF: [(f64, f64); 5] = [
        (0.1, 0.1124629160182848984),
        (0.5, 0.52049987781304653768),
        (1.0, 0.84270079294971486934),
        (2.0, 0.99532226501895273416),
        (3.5, 0.99999925690162765859),
    ];
    const ERFC_REF: [(f64, f64); 6] = [
        (0.5, 0.47950012218695346232),
        (2.0, 4.6777349810472658379e-3),
        (4.5, 1.9661604415428874763e-10),
        (6.0, 2.1519736712498913117e-17),
        (10.0, 2.088487583762544757e-45),
        (26.0, 5.6631924088561428465e-296),
    ];
    const ERFCX_REF: [(f64, f64); 6] = [
        (0.3, 0.73459933456765514992),
        (1.0, 0.42758357615580700441),
        (2.5, 0.21080636406114358065),
        (5.0, 0.11070463773306862637),
        (30.0, 0.018795888861416751497),
        (1e4, 5.6418958072680841152e-5),
    ];
    const CDF_REF: [(f64, f64); 6] = [
        (-8.0, 6.2209605742717841235e-16),
        (-5.0, 2.8665157187919391167e-7),
        (-3.0, 1.3498980316300945267e-3),
        (-1.0, 0.15865525393145705141),
        (1.0, 0.84134474606854294859),
        (2.0, 0.9772498680518207928),
    ];
    const LOG_CDF_REF: [(f64, f64); 6] = [
        (-40.0, -804.60844201375378817),
        (-20.0, -203.91715537109726394),
        (-10.0, -53.231285150512470578),
        (-6.0, -20.736768949974705655),
        (-2.0, -3.7831843336820319488),
        (3.0, -1.3508099647481937988e-3),
    ];
    const HAZARD_REF: [(f64, f64); 8] = [
        (-40.0, 40.024968847207263723),
        (-10.0, 10.098093233962511963),
        (-6.0, 6.1584826045445989173),
        (-1.0, 1.5251352761609812091),
        (0.0, 0.79788456080286535588),
        (1.0, 0.28759997093917836123),
        (6.0, 6.0758828558176764452e-9),
        (10.0, 7.6945986267064193463e-23),
    ];

    #[test]
    fn erf_matches_reference() {
        for &(x, want) in &ERF_REF {
            assert_relative_eq!(erf_f64(x), want, max_relative = 1e-15);
            assert_relative_eq!(erf_f64(-x), -want, max_relative = 1e-15);
        }
        assert_eq!(erf_f64(0.0), 0.0);
    }

    #[test]
    fn erfc_matches_reference() {
        for &(x, want) in &ERFC_REF {
            assert_relative_eq!(erfc_f64(x), want, max_relative = 1e-13);
            assert_relative_eq!(erfc_f64(-x), 2.0 - want, max_relative = 1e-15);
        }
        assert_eq!(erfc_f64(27.0), 0.0);
        assert_eq!(erfc_f64(-27.0), 2.0);
    }

    #[test]
    fn erfcx_matches_reference() {
        for &(x, want) in &ERFCX_REF {
            assert_relative_eq!(erfcx_f64(x), want, max_relative = 1e-13);
        }
        // Negative side: erfcx(-1) = 2 exp(1) - erfcx(1).
        let want = 2.0 * 1f64.exp() - 0.42758357615580700441;
        assert_relative_eq!(erfcx_f64(-1.0), want, max_relative = 1e-13);
        assert_eq!(erfcx_f64(-27.0), f64::INFINITY);
    }

    #[test]
    fn cdf_matches_reference() {
        for &(x, want) in &CDF_REF {
            assert_relative_eq!(cdf_f64(x), want, max_relative = 1e-13);
        }
        assert_relative_eq!(cdf_f64(0.0), 0.5, max_relative = 1e-15);
        // Complementarity.
        for &(x, _) in &CDF_REF {
            assert_relative_eq!(cdf_f64(x) + cdf_f64(-x), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn log_cdf_matches_reference_and_is_continuous_at_switch() {
        for &(x, want) in &LOG_CDF_REF {
            assert_relative_eq!(log_cdf_f64(x), want, max_relative = 1e-12);
        }
        let lo = log_cdf_f64(-5.0 - 1e-9);
        let hi = log_cdf_f64(-5.0 + 1e-9);
        assert!((lo - hi).abs() < 1e-7, "branch mismatch: {lo} vs {hi}");
    }

    #[test]
    fn hazard_matches_reference() {
        for &(x, want) in &HAZARD_REF {
            assert_relative_eq!(hazard_f64(x), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn pdf_at_zero() {
        assert_relative_eq!(pdf_f64(0.0), FRAC_1_SQRT_2PI, max_relative = 1e-15);
        assert_relative_eq!(log_pdf_f64(1.5), pdf_f64(1.5).ln(), max_relative = 1e-14);
    }

    #[test]
    fn generic_wrappers_agree_between_widths() {
        let x = 0.73_f64;
        assert_relative_eq!(cdf::<f32>(x as f32) as f64, cdf::<f64>(x), epsilon = 1e-6);
        assert_relative_eq!(hazard::<f32>(-2.0f32) as f64, hazard::<f64>(-2.0), epsilon = 1e-6);
    }
}
