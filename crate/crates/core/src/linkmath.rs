//! Scalar link functions: logit/expit, the standard normal CDF and its
//! inverse, analytic derivatives of the inverse links, and the index
//! transform `g` that maps an exposure benefit to an NNT-type index.

use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::scalar::Scalar;

/// Link shared by the structural and the association model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Logit,
    Probit,
}

impl LinkKind {
    pub fn name(self) -> &'static str {
        match self {
            LinkKind::Logit => "logit",
            LinkKind::Probit => "probit",
        }
    }

    /// Link-scale transform of a probability (`logit` or `Φ⁻¹`).
    #[inline]
    pub fn forward<T: Scalar>(self, p: T) -> Result<T, DomainError> {
        match self {
            LinkKind::Logit => logit(p),
            LinkKind::Probit => norm_quantile(p),
        }
    }

    /// Inverse link (`expit` or `Φ`). Total on finite inputs.
    #[inline]
    pub fn inverse<T: Scalar>(self, x: T) -> T {
        match self {
            LinkKind::Logit => expit(x),
            LinkKind::Probit => norm_cdf(x),
        }
    }

    /// Derivative of the inverse link.
    #[inline]
    pub fn inverse_derivative<T: Scalar>(self, x: T) -> T {
        match self {
            LinkKind::Logit => {
                let p = expit(x);
                p * (T::one() - p)
            }
            LinkKind::Probit => norm_pdf(x),
        }
    }
}

impl std::str::FromStr for LinkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkKind::Logit),
            "probit" => Ok(LinkKind::Probit),
            other => Err(format!("unknown link '{other}' (expected logit or probit)")),
        }
    }
}

impl std::fmt::Display for LinkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkDirection {
    Forward,
    Inverse,
    InverseDerivative,
}

/// Dispatch over link and direction.
pub fn link_eval<T: Scalar>(kind: LinkKind, direction: LinkDirection, x: T) -> Result<T, DomainError> {
    match direction {
        LinkDirection::Forward => kind.forward(x),
        LinkDirection::Inverse => Ok(kind.inverse(x)),
        LinkDirection::InverseDerivative => Ok(kind.inverse_derivative(x)),
    }
}

/// Logistic function `1 / (1 + exp(-x))`.
///
/// Evaluated in two branches so that `exp` never overflows. (Some printed
/// sources write `(1 - exp(-x))^-1`; that form is not the inverse of
/// `logit` and is not used.)
#[inline]
pub fn expit<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn logit<T: Scalar>(p: T) -> Result<T, DomainError> {
    if !(p > T::zero() && p < T::one()) {
        return Err(DomainError::new("logit", p.as_f64()));
    }
    Ok((p / (T::one() - p)).ln())
}

#[inline]
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(x * x) / T::lit(2.0)).exp()
}

/// Standard normal CDF via `erfc`, accurate in both tails.
#[inline]
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (-x / T::lit(std::f64::consts::SQRT_2)).erfc()
}

// Acklam's rational approximation of the normal quantile.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn horner<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Inverse of the standard normal CDF.
///
/// Rational approximation (relative error about 1e-9) followed by one
/// Halley step against `norm_cdf`, which brings it to near machine precision.
pub fn norm_quantile<T: Scalar>(p: T) -> Result<T, DomainError> {
    if !(p > T::zero() && p < T::one()) {
        return Err(DomainError::new("norm_quantile", p.as_f64()));
    }
    let p_low = T::lit(0.02425);
    let p_high = T::one() - p_low;
    let x = if p < p_low {
        let q = (T::lit(-2.0) * p.ln()).sqrt();
        horner(&ACKLAM_C, q) / (horner(&ACKLAM_D, q) * q + T::one())
    } else if p <= p_high {
        let q = p - T::lit(0.5);
        let r = q * q;
        horner(&ACKLAM_A, r) * q / (horner(&ACKLAM_B, r) * r + T::one())
    } else {
        let q = (T::lit(-2.0) * (T::one() - p).ln()).sqrt();
        -horner(&ACKLAM_C, q) / (horner(&ACKLAM_D, q) * q + T::one())
    };

    let err = norm_cdf(x) - p;
    let u = err * T::lit((2.0 * std::f64::consts::PI).sqrt()) * (x * x / T::lit(2.0)).exp();
    let refined = x - u / (T::one() + x * u / T::lit(2.0));
    Ok(if refined.is_finite() { refined } else { x })
}

/// Index transform: `1/p` for a positive benefit, `+∞` otherwise.
#[inline]
pub fn g_transform<T: Scalar>(pb: T) -> T {
    if pb > T::zero() {
        T::one() / pb
    } else {
        T::infinity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Maclaurin series for erf, summed until terms vanish. Independent of libm.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let contrib = term / (2.0 * n + 1.0);
            sum += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn phi_oracle(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn expit_examples() {
        assert_eq!(expit(0.0_f64), 0.5);
        assert_relative_eq!(expit(logit(0.3_f64).unwrap()), 0.3, epsilon = 1e-15);
        assert!((expit(40.0_f64) - 1.0).abs() < 1e-15);
        assert!(expit(-800.0_f64) >= 0.0);
        assert!(expit(800.0_f64) <= 1.0);
    }

    #[test]
    fn expit_logit_round_trip() {
        for k in 0..=1000 {
            let t = k as f64 / 1000.0;
            let p = 1e-10 + t * (1.0 - 2e-10);
            let back = expit(logit(p).unwrap());
            assert!((back - p).abs() < 1e-12, "p={p} back={back}");
        }
    }

    #[test]
    fn logit_examples() {
        assert_eq!(logit(0.5_f64).unwrap(), 0.0);
        assert_relative_eq!(logit(0.75_f64).unwrap(), 3.0_f64.ln(), epsilon = 1e-15);
        assert!(logit(1.0_f64).is_err());
        assert!(logit(0.0_f64).is_err());
        assert!(logit(f64::NAN).is_err());
    }

    #[test]
    fn norm_cdf_against_series() {
        assert_eq!(norm_cdf(0.0_f64), 0.5);
        let oracle = phi_oracle(1.0);
        assert!((oracle - 0.841_344_746_1).abs() < 1e-10);
        assert!((norm_cdf(1.0_f64) - oracle).abs() < 1e-15);
        for k in -30..=30 {
            let x = k as f64 / 10.0;
            assert!((norm_cdf(x) - phi_oracle(x)).abs() < 1e-14, "x={x}");
            assert!((norm_cdf(-x) - (1.0 - norm_cdf(x))).abs() < 1e-14);
        }
    }

    #[test]
    fn norm_quantile_examples() {
        assert!(norm_quantile(0.5_f64).unwrap().abs() < 1e-15);
        assert!((norm_quantile(0.841_344_746_1_f64).unwrap() - 1.0).abs() < 1e-8);
        assert!(norm_quantile(0.0_f64).is_err());
        assert!(norm_quantile(1.0_f64).is_err());
        assert!((norm_quantile(0.975_f64).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn norm_quantile_round_trip_wide() {
        let lo = 1e-8_f64.ln();
        for k in 0..=2000 {
            let t = k as f64 / 2000.0;
            // log-spaced into the lower tail, mirrored for the upper tail
            let p = (lo * (1.0 - t)).exp().min(0.5);
            for q in [p, 1.0 - p] {
                if q <= 0.0 || q >= 1.0 {
                    continue;
                }
                let back = norm_cdf(norm_quantile(q).unwrap());
                assert!((back - q).abs() < 1e-9, "q={q} back={back}");
            }
        }
    }

    #[test]
    fn link_round_trip_both_links() {
        for kind in [LinkKind::Logit, LinkKind::Probit] {
            for k in 0..1000 {
                let p = 1e-6 + (k as f64 + 0.5) / 1000.0 * (1.0 - 2e-6);
                let back = kind.inverse(kind.forward(p).unwrap());
                assert!((back - p).abs() < 1e-9, "{kind} p={p}");
            }
        }
    }

    #[test]
    fn inverse_derivative_matches_central_difference() {
        for kind in [LinkKind::Logit, LinkKind::Probit] {
            for k in -160..=160 {
                let x = k as f64 / 20.0;
                let h = 1e-5;
                // both inverse links satisfy F(-x) = 1 - F(x); difference the
                // complement on the right half to avoid cancellation near 1
                let fd = if x > 0.0 {
                    (kind.inverse(-x + h) - kind.inverse(-x - h)) / (2.0 * h)
                } else {
                    (kind.inverse(x + h) - kind.inverse(x - h)) / (2.0 * h)
                };
                let an = kind.inverse_derivative(x);
                assert!(((fd - an) / an).abs() < 1e-6, "{kind} x={x} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn link_eval_examples() {
        assert_eq!(link_eval(LinkKind::Logit, LinkDirection::Inverse, 0.0_f64).unwrap(), 0.5);
        assert!(link_eval(LinkKind::Probit, LinkDirection::Forward, 0.5_f64).unwrap().abs() < 1e-15);
        assert_eq!(
            link_eval(LinkKind::Logit, LinkDirection::InverseDerivative, 0.0_f64).unwrap(),
            0.25
        );
        assert!(link_eval(LinkKind::Logit, LinkDirection::Forward, 1.5_f64).is_err());
    }

    #[test]
    fn g_transform_examples() {
        assert_eq!(g_transform(0.5_f64), 2.0);
        assert_eq!(g_transform(-0.1_f64), f64::INFINITY);
        assert_eq!(g_transform(0.0_f64), f64::INFINITY);
        assert!((g_transform(0.215_f64) - 4.6512).abs() < 1e-4);
    }

    #[test]
    fn f32_instantiation() {
        let p: f32 = 0.3;
        assert!((expit(logit(p).unwrap()) - p).abs() < 1e-6);
        assert!((norm_cdf(norm_quantile(p).unwrap()) - p).abs() < 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn g_is_non_increasing(a in -1.0_f64..1.0, b in -1.0_f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(g_transform(lo) >= g_transform(hi));
            if hi <= 0.0 {
                proptest::prop_assert_eq!(g_transform(hi), f64::INFINITY);
            }
        }
    }
}
