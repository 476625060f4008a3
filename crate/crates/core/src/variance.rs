//! Sandwich covariance of the stacked estimator and Wald intervals.
//!
//! Components that are unavailable in a fit (no root for a causal parameter,
//! or an infinite index) are dropped together with their estimating-function
//! rows. The stacked system is block triangular, so the remaining rows only
//! involve remaining parameters and the reduced sandwich is the same as the
//! corresponding sub-block of the full one.

use nalgebra::{DMatrix, RealField};
use num_traits::Float;

use crate::domain::{
    Diagnostics, EstimateReport, Index, Interval, ModelSpec, ObservationSet, PerIndex, PsiStatus, ThetaVector,
    EXCLUSION_CONDITION_NUMBER, THETA_DIM,
};
use crate::error::{EstimationError, VarianceError};
use crate::estimator::{g_estimate, instrument_wald, mean_q, q_components, WEAK_INSTRUMENT_WALD};
use crate::linkmath::norm_quantile;
use crate::scalar::Scalar;

/// Scalars usable with the dense linear algebra here.
pub trait LinalgScalar: Scalar + RealField {}
impl<T: Scalar + RealField> LinalgScalar for T {}

/// Central-difference step for coordinate value `x`: `max(h, h·|x|)` with
/// `h = 1e-6` in double precision and `ε^(1/3)` for coarser types.
pub fn fd_step<T: Scalar>(x: T) -> T {
    let h = if T::epsilon() < T::lit(1e-10) { T::lit(1e-6) } else { Float::cbrt(T::epsilon()) };
    Float::max(h, h * Float::abs(x))
}

fn require_finite<T: Scalar>(theta: &ThetaVector<T>) -> Result<(), VarianceError> {
    match theta.to_array().iter().position(|v| !v.is_finite()) {
        Some(k) => Err(VarianceError::NonFiniteTheta(k)),
        None => Ok(()),
    }
}

fn all_components() -> Vec<usize> {
    (0..THETA_DIM).collect()
}

/// Bread `-(1/n) Σ ∂Q/∂θᵀ` restricted to the components `idx`.
fn bread_on<T: LinalgScalar>(
    data: &ObservationSet,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
    idx: &[usize],
) -> Result<DMatrix<T>, VarianceError> {
    let m = idx.len();
    let base = theta.to_array();
    let mut a = DMatrix::zeros(m, m);
    for (j, &k) in idx.iter().enumerate() {
        let h = fd_step(base[k]);
        let (mut up, mut down) = (base, base);
        up[k] += h;
        down[k] -= h;
        let width = up[k] - down[k];
        let q_up = mean_q(data.counts(), &ThetaVector::from_array(&up), spec.link);
        let q_down = mean_q(data.counts(), &ThetaVector::from_array(&down), spec.link);
        for (i, &r) in idx.iter().enumerate() {
            let d = (q_up[r] - q_down[r]) / width;
            if !d.is_finite() {
                return Err(VarianceError::NonFiniteEntry(r));
            }
            a[(i, j)] = -d;
        }
    }
    Ok(a)
}

/// Meat `(1/n) Σ Q Qᵀ` restricted to the components `idx`.
fn meat_on<T: LinalgScalar>(
    data: &ObservationSet,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
    idx: &[usize],
) -> Result<DMatrix<T>, VarianceError> {
    let m = idx.len();
    let mut b = DMatrix::zeros(m, m);
    for (rec, c) in data.counts().distinct() {
        let q = q_components(&rec, theta, spec.link);
        let w = T::from_u64(c).expect("count representable");
        for (i, &r) in idx.iter().enumerate() {
            if !q[r].is_finite() {
                return Err(VarianceError::NonFiniteEntry(r));
            }
            for (j, &s) in idx.iter().enumerate().skip(i) {
                b[(i, j)] += w * q[r] * q[s];
            }
        }
    }
    let n = T::from_usize(data.n()).expect("n representable");
    for i in 0..m {
        for j in i..m {
            let v = b[(i, j)] / n;
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    Ok(b)
}

/// Full 13x13 bread matrix by central finite differences.
pub fn bread_matrix<T: LinalgScalar>(
    data: &ObservationSet,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
) -> Result<DMatrix<T>, VarianceError> {
    require_finite(theta)?;
    bread_on(data, theta, spec, &all_components())
}

/// Full 13x13 meat matrix.
pub fn meat_matrix<T: LinalgScalar>(
    data: &ObservationSet,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
) -> Result<DMatrix<T>, VarianceError> {
    require_finite(theta)?;
    meat_on(data, theta, spec, &all_components())
}

/// Ratio of the largest to the smallest singular value.
pub fn condition_number<T: LinalgScalar>(a: &DMatrix<T>) -> T {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(T::zero(), Float::max);
    let min = sv.iter().copied().fold(<T as Float>::infinity(), Float::min);
    if min == T::zero() {
        <T as Float>::infinity()
    } else {
        max / min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichResult<T: LinalgScalar> {
    /// 13x13; rows and columns of inactive components are NaN.
    pub covariance: DMatrix<T>,
    pub bread_condition_number: T,
    pub se: [T; THETA_DIM],
    /// Wald intervals `θ̂ ± z·se`; NaN bounds for inactive components.
    pub ci: [Interval<T>; THETA_DIM],
    pub level: T,
    pub active: [bool; THETA_DIM],
}

impl<T: LinalgScalar> SandwichResult<T> {
    pub fn index_ci(&self, idx: Index) -> Option<Interval<T>> {
        let k = idx.param().index();
        self.active[k].then_some(self.ci[k])
    }
}

/// Sandwich covariance `n⁻¹ A⁻¹ B A⁻ᵀ` for a fully resolved, finite `θ̂`.
pub fn sandwich<T: LinalgScalar>(
    data: &ObservationSet,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
    level: T,
) -> Result<SandwichResult<T>, VarianceError> {
    require_finite(theta)?;
    sandwich_on(data, theta, spec, level, [true; THETA_DIM])
}

/// Sandwich over the finite components of `θ̂` only.
pub fn sandwich_available<T: LinalgScalar>(
    data: &ObservationSet,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
    level: T,
) -> Result<SandwichResult<T>, VarianceError> {
    sandwich_on(data, theta, spec, level, theta.to_array().map(|v| v.is_finite()))
}

fn sandwich_on<T: LinalgScalar>(
    data: &ObservationSet,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
    level: T,
    active: [bool; THETA_DIM],
) -> Result<SandwichResult<T>, VarianceError> {
    let idx: Vec<usize> = (0..THETA_DIM).filter(|&k| active[k]).collect();
    let a = bread_on(data, theta, spec, &idx)?;
    let b = meat_on(data, theta, spec, &idx)?;
    let cond = condition_number(&a);
    if cond.is_nan() || cond >= T::lit(EXCLUSION_CONDITION_NUMBER) {
        return Err(VarianceError::Excluded(cond.as_f64()));
    }
    let a_inv = a
        .lu()
        .try_inverse()
        .ok_or(VarianceError::Excluded(f64::INFINITY))?;
    let n = T::from_usize(data.n()).expect("n representable");
    let reduced = &a_inv * b * a_inv.transpose() / n;

    let nan = <T as Float>::nan();
    let mut covariance = DMatrix::from_element(THETA_DIM, THETA_DIM, nan);
    for (i, &r) in idx.iter().enumerate() {
        for (j, &s) in idx.iter().enumerate() {
            // average with the transpose to remove rounding asymmetry
            covariance[(r, s)] = (reduced[(i, j)] + reduced[(j, i)]) * T::lit(0.5);
        }
    }
    let z = norm_quantile((T::one() + level) * T::lit(0.5)).expect("level in (0,1)");
    let est = theta.to_array();
    let se: [T; THETA_DIM] = std::array::from_fn(|k| Float::sqrt(covariance[(k, k)]));
    let ci = std::array::from_fn(|k| {
        if active[k] {
            Interval { lower: est[k] - z * se[k], upper: est[k] + z * se[k] }
        } else {
            Interval { lower: nan, upper: nan }
        }
    });
    Ok(SandwichResult { covariance, bread_condition_number: cond, se, ci, level, active })
}

/// Point estimates, sandwich covariance, index intervals and diagnostics.
///
/// Only a separation error in the association fit is fatal. Unavailable
/// causal parameters, infinite indices and ill-conditioned breads are
/// reported through the diagnostics.
pub fn estimate_report<T: LinalgScalar>(
    data: &ObservationSet,
    spec: ModelSpec,
    level: T,
) -> Result<EstimateReport<T>, EstimationError> {
    let fit = g_estimate::<T>(data, spec)?;
    let theta = fit.theta_hat;
    let wald = instrument_wald::<T>(data).unwrap_or(<T as Float>::nan());
    let nan = <T as Float>::nan();

    let (sw, excluded, cond) = match sandwich_available(data, &theta, spec, level) {
        Ok(sw) => {
            let c = sw.bread_condition_number;
            (Some(sw), false, c)
        }
        Err(VarianceError::Excluded(c)) => (None, true, T::lit(c)),
        Err(_) => (None, true, nan),
    };
    let covariance = match &sw {
        Some(sw) => sw.covariance.transpose().iter().copied().collect(),
        None => vec![nan; THETA_DIM * THETA_DIM],
    };
    let se = sw.as_ref().map_or([nan; THETA_DIM], |sw| sw.se);
    let ci = PerIndex::from_fn(|idx| sw.as_ref().and_then(|sw| sw.index_ci(idx)));
    let noninformative_ci = PerIndex::from_fn(|idx| {
        theta.index(idx) == <T as Float>::infinity() || ci.get(idx).is_some_and(|c| c.is_noninformative())
    });

    Ok(EstimateReport {
        link: spec.link,
        n: data.n(),
        theta_hat: theta,
        covariance,
        se,
        ci_level: level,
        ci,
        diagnostics: Diagnostics {
            bread_condition_number: cond,
            instrument_wald: wald,
            weak_instrument: wald.is_nan() || Float::abs(wald) < T::lit(WEAK_INSTRUMENT_WALD),
            psi0_status: fit.psi0_status,
            psi1_status: fit.psi1_status,
            psi0_multiple_roots: fit.psi0_status == PsiStatus::Solved && fit.psi0_roots.len() > 1,
            psi1_multiple_roots: fit.psi1_status == PsiStatus::Solved && fit.psi1_roots.len() > 1,
            excluded,
            noninformative_ci,
        },
    })
}
