//! G-estimation of the causal parameters and the efficacy indices.
//!
//! The pipeline is sequential: saturated association model, instrument
//! marginal, one scalar root-finding problem per exposure group, plug-in
//! benefits, then the index transform. The stacked estimating function is
//! still assembled in full (`evaluate_q`) because the sandwich variance needs
//! it.

use serde::{Deserialize, Serialize};

use crate::domain::{
    CellCounts, Index, ObservationRecord, ObservationSet, PerIndex, ModelSpec, PsiStatus,
    ThetaVector, THETA_DIM,
};
use crate::error::EstimationError;
use crate::linkmath::{g_transform, LinkKind};
use crate::scalar::Scalar;

/// Search interval for the causal parameters, on the link scale.
pub const PSI_BRACKET: (f64, f64) = (-20.0, 20.0);
/// Number of sub-intervals in the sign-change scan.
pub const PSI_SCAN_POINTS: usize = 4000;
const PSI_X_TOL: f64 = 1e-12;

/// Exposure group whose causal parameter is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Unexposed,
    Exposed,
}

impl Group {
    pub const fn a(self) -> u8 {
        match self {
            Group::Unexposed => 0,
            Group::Exposed => 1,
        }
    }
}

#[inline]
fn u<T: Scalar>(x: u8) -> T {
    if x == 0 {
        T::zero()
    } else {
        T::one()
    }
}

#[inline]
fn count<T: Scalar>(c: u64) -> T {
    T::from_u64(c).expect("count representable")
}

/// `β₀ + β₁a + β₂z + β₃az`.
#[inline]
pub fn linear_predictor<T: Scalar>(beta: &[T; 4], z: T, a: T) -> T {
    beta[0] + beta[1] * a + beta[2] * z + beta[3] * a * z
}

/// Fitted saturated association model and instrument marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association<T> {
    pub beta: [T; 4],
    pub pi_z: T,
}

/// Closed-form solution of the association score equations.
///
/// The model has one coefficient per `(z, a)` cell, so the scores are zero
/// exactly when each fitted cell probability equals the empirical cell mean.
pub fn fit_association<T: Scalar>(
    data: &ObservationSet,
    spec: ModelSpec,
) -> Result<Association<T>, EstimationError> {
    let c = data.counts();
    let mut eta = [[T::zero(); 2]; 2];
    for z in 0..2u8 {
        for a in 0..2u8 {
            let n = c.cell(z, a);
            let k = c.cell_events(z, a);
            let mean = if n == 0 { f64::NAN } else { k as f64 / n as f64 };
            if k == 0 || k == n {
                return Err(EstimationError::Separation { z, a, mean });
            }
            let p = count::<T>(k) / count::<T>(n);
            eta[z as usize][a as usize] = spec
                .link
                .forward(p)
                .map_err(|_| EstimationError::Separation { z, a, mean })?;
        }
    }
    let beta = [
        eta[0][0],
        eta[0][1] - eta[0][0],
        eta[1][0] - eta[0][0],
        eta[1][1] - eta[1][0] - eta[0][1] + eta[0][0],
    ];
    let pi_z = count::<T>(c.instrument_group(1)) / count::<T>(c.n());
    Ok(Association { beta, pi_z })
}

/// Counterfactual mean predictor `h(a; z, a_obs)`.
///
/// For `group = Exposed` and an exposed subject this predicts `E[I₀ | z, A=1]`
/// by removing `ψ₁` on the link scale; for `group = Unexposed` and an
/// unexposed subject it predicts `E[I₁ | z, A=0]` by adding `ψ₀`. In every
/// other combination it returns the fitted association mean.
#[inline]
pub fn counterfactual_mean<T: Scalar>(
    group: Group,
    z: u8,
    a_obs: u8,
    beta: &[T; 4],
    psi: &[T; 2],
    link: LinkKind,
) -> T {
    let eta = linear_predictor(beta, u(z), u(a_obs));
    let shift = match group {
        Group::Exposed => -psi[1] * u(a_obs),
        Group::Unexposed => psi[0] * (T::one() - u(a_obs)),
    };
    link.inverse(eta + shift)
}

/// Conditional benefit in group `a` at instrument value `z`.
#[inline]
pub fn conditional_group_benefit<T: Scalar>(
    group: Group,
    z: u8,
    beta: &[T; 4],
    psi: &[T; 2],
    link: LinkKind,
) -> T {
    let z = u::<T>(z);
    match group {
        Group::Unexposed => {
            let eta = beta[0] + beta[2] * z;
            link.inverse(eta + psi[0]) - link.inverse(eta)
        }
        Group::Exposed => {
            let eta = beta[0] + beta[1] + (beta[2] + beta[3]) * z;
            link.inverse(eta) - link.inverse(eta - psi[1])
        }
    }
}

/// Conditional benefit for a subject with observed `(z, a)`.
#[inline]
pub fn conditional_benefit<T: Scalar>(z: u8, a: u8, beta: &[T; 4], psi: &[T; 2], link: LinkKind) -> T {
    let eta = linear_predictor(beta, u(z), u(a));
    link.inverse(eta + psi[0] * (T::one() - u(a))) - link.inverse(eta - psi[1] * u(a))
}

/// Sample mean of `(Z - π_Z)·h(a; Z, A)` as a function of `ψ_a`.
pub fn psi_estimating_mean<T: Scalar>(
    group: Group,
    counts: &CellCounts,
    beta: &[T; 4],
    pi_z: T,
    psi_a: T,
    link: LinkKind,
) -> T {
    let psi = match group {
        Group::Unexposed => [psi_a, T::zero()],
        Group::Exposed => [T::zero(), psi_a],
    };
    let mut total = T::zero();
    for z in 0..2u8 {
        for a in 0..2u8 {
            let n = counts.cell(z, a);
            if n == 0 {
                continue;
            }
            let h = counterfactual_mean(group, z, a, beta, &psi, link);
            total = total + count::<T>(n) * (u::<T>(z) - pi_z) * h;
        }
    }
    total / count::<T>(counts.n())
}

/// Root of a causal-parameter estimating equation.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSolution<T> {
    /// Selected root: the smallest in absolute value.
    pub value: T,
    /// Every root found on the bracket, ascending.
    pub roots: Vec<T>,
    pub residual: T,
}

impl<T> PsiSolution<T> {
    pub fn multiple_roots(&self) -> bool {
        self.roots.len() > 1
    }
}

/// Every root of `f` on `[lower, upper]` that shows up as a sign change on a
/// uniform grid of `intervals` cells, each refined to `x_tol`.
pub fn bracketed_roots<T: Scalar>(
    f: impl Fn(T) -> T,
    lower: T,
    upper: T,
    intervals: usize,
    x_tol: T,
) -> Vec<T> {
    let step = (upper - lower) / count::<T>(intervals as u64);
    let grid = |k: usize| if k == intervals { upper } else { lower + step * count::<T>(k as u64) };
    let mut roots = Vec::new();
    let mut x0 = grid(0);
    let mut f0 = f(x0);
    if f0 == T::zero() {
        roots.push(x0);
    }
    for k in 1..=intervals {
        let x1 = grid(k);
        let f1 = f(x1);
        if f1 == T::zero() {
            roots.push(x1);
        } else if f0 != T::zero() && f0.is_finite() && f1.is_finite() && (f0 < T::zero()) != (f1 < T::zero()) {
            roots.push(refine_root(&f, x0, x1, f0, f1, x_tol));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// Bisection safeguarded secant (Illinois) on a sign-changing bracket.
fn refine_root<T: Scalar>(f: &impl Fn(T) -> T, mut a: T, mut b: T, mut fa: T, mut fb: T, x_tol: T) -> T {
    let half = T::lit(0.5);
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= x_tol {
            break;
        }
        let secant = (a * fb - b * fa) / (fb - fa);
        let mid = (a + b) * half;
        let x = if secant.is_finite() && secant > a.min(b) && secant < a.max(b) { secant } else { mid };
        let fx = f(x);
        if fx == T::zero() {
            return x;
        }
        if (fx < T::zero()) == (fb < T::zero()) {
            b = x;
            fb = fx;
            if side == -1 {
                fa = fa * half;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb = fb * half;
            }
            side = 1;
        }
        // fall back to a pure bisection step if the secant stalls
        let m = (a + b) * half;
        let fm = f(m);
        if fm == T::zero() {
            return m;
        }
        if (fm < T::zero()) == (fa < T::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

/// G-estimate `ψ_a` by sign-change scanning on the bracket and refinement.
pub fn solve_psi<T: Scalar>(
    group: Group,
    data: &ObservationSet,
    beta: &[T; 4],
    pi_z: T,
    spec: ModelSpec,
) -> Result<PsiSolution<T>, EstimationError> {
    let counts = *data.counts();
    let f = |psi: T| psi_estimating_mean(group, &counts, beta, pi_z, psi, spec.link);
    let (lo, hi) = (T::lit(PSI_BRACKET.0), T::lit(PSI_BRACKET.1));
    let roots = bracketed_roots(f, lo, hi, PSI_SCAN_POINTS, T::lit(PSI_X_TOL));
    let value = roots
        .iter()
        .copied()
        .min_by(|x, y| x.abs().partial_cmp(&y.abs()).expect("finite roots"))
        .ok_or(EstimationError::NoSolution {
            group: group.a(),
            lower: PSI_BRACKET.0,
            upper: PSI_BRACKET.1,
        })?;
    Ok(PsiSolution { value, residual: f(value), roots })
}

/// Average conditional benefit over the subjects of one exposure group.
pub fn group_benefit<T: Scalar>(
    group: Group,
    counts: &CellCounts,
    beta: &[T; 4],
    psi: &[T; 2],
    link: LinkKind,
) -> T {
    let a = group.a();
    let mut total = T::zero();
    for z in 0..2u8 {
        let n = counts.cell(z, a);
        if n > 0 {
            total = total + count::<T>(n) * conditional_group_benefit(group, z, beta, psi, link);
        }
    }
    total / count::<T>(counts.exposure_group(a))
}

/// Average conditional benefit over all subjects.
pub fn population_benefit<T: Scalar>(counts: &CellCounts, beta: &[T; 4], psi: &[T; 2], link: LinkKind) -> T {
    let mut total = T::zero();
    for z in 0..2u8 {
        for a in 0..2u8 {
            let n = counts.cell(z, a);
            if n > 0 {
                total = total + count::<T>(n) * conditional_benefit(z, a, beta, psi, link);
            }
        }
    }
    total / count::<T>(counts.n())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Benefits<T> {
    pub pb0: T,
    pub pb1: T,
    pub pb: T,
}

/// Plug-in estimates of the unexposed, exposed and marginal benefits.
pub fn plugin_benefits<T: Scalar>(
    data: &ObservationSet,
    beta: &[T; 4],
    psi: &[T; 2],
    spec: ModelSpec,
) -> Result<Benefits<T>, EstimationError> {
    let c = data.counts();
    for a in 0..2u8 {
        if c.exposure_group(a) == 0 {
            return Err(EstimationError::GroupEmpty(a));
        }
    }
    Ok(Benefits {
        pb0: group_benefit(Group::Unexposed, c, beta, psi, spec.link),
        pb1: group_benefit(Group::Exposed, c, beta, psi, spec.link),
        pb: population_benefit(c, beta, psi, spec.link),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GEstimationResult<T> {
    /// Unavailable components are NaN.
    pub theta_hat: ThetaVector<T>,
    pub psi0_status: PsiStatus,
    pub psi1_status: PsiStatus,
    pub psi0_roots: Vec<T>,
    pub psi1_roots: Vec<T>,
    /// Euclidean norm of the mean estimating function over available components.
    pub q_residual_norm: T,
    pub psi_bracket: (T, T),
}

impl<T: Scalar> GEstimationResult<T> {
    pub fn all_solved(&self) -> bool {
        self.psi0_status == PsiStatus::Solved && self.psi1_status == PsiStatus::Solved
    }

    /// Components whose estimate exists and is finite.
    pub fn available(&self) -> [bool; THETA_DIM] {
        self.theta_hat.to_array().map(|v| v.is_finite())
    }
}

/// Full sequential G-estimation. A causal parameter without a root leaves
/// the quantities that depend on it unavailable; the rest is still reported.
pub fn g_estimate<T: Scalar>(
    data: &ObservationSet,
    spec: ModelSpec,
) -> Result<GEstimationResult<T>, EstimationError> {
    let assoc = fit_association::<T>(data, spec)?;
    let counts = data.counts();
    let mut theta = ThetaVector::nan();
    theta.beta = assoc.beta;
    theta.pi_z = assoc.pi_z;

    let solve = |group| match solve_psi(group, data, &assoc.beta, assoc.pi_z, spec) {
        Ok(sol) => (PsiStatus::Solved, Some(sol)),
        Err(EstimationError::NoSolution { .. }) => (PsiStatus::NoSolution, None),
        Err(other) => unreachable!("solve_psi only reports NoSolution: {other}"),
    };
    let (psi0_status, psi0) = solve(Group::Unexposed);
    let (psi1_status, psi1) = solve(Group::Exposed);
    if let Some(s) = &psi0 {
        theta.psi[0] = s.value;
        theta.pb0 = group_benefit(Group::Unexposed, counts, &theta.beta, &theta.psi, spec.link);
        theta.nne = g_transform(theta.pb0);
    }
    if let Some(s) = &psi1 {
        theta.psi[1] = s.value;
        theta.pb1 = group_benefit(Group::Exposed, counts, &theta.beta, &theta.psi, spec.link);
        theta.ein = g_transform(theta.pb1);
    }
    if psi0.is_some() && psi1.is_some() {
        theta.pb = population_benefit(counts, &theta.beta, &theta.psi, spec.link);
        theta.nnt = g_transform(theta.pb);
    }

    let q = mean_q(counts, &theta, spec.link);
    let q_residual_norm = q
        .iter()
        .filter(|v| v.is_finite())
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt();

    Ok(GEstimationResult {
        theta_hat: theta,
        psi0_status,
        psi1_status,
        psi0_roots: psi0.map(|s| s.roots).unwrap_or_default(),
        psi1_roots: psi1.map(|s| s.roots).unwrap_or_default(),
        q_residual_norm,
        psi_bracket: (T::lit(PSI_BRACKET.0), T::lit(PSI_BRACKET.1)),
    })
}

/// Stacked estimating function without checks; non-finite parameters
/// propagate into the affected components.
pub(crate) fn q_components<T: Scalar>(
    record: &ObservationRecord,
    theta: &ThetaVector<T>,
    link: LinkKind,
) -> [T; THETA_DIM] {
    let (z, a, i) = (record.z(), record.a(), record.i());
    let (zf, af, ifl) = (u::<T>(z), u::<T>(a), u::<T>(i));
    let beta = &theta.beta;
    let psi = &theta.psi;
    let eta = linear_predictor(beta, zf, af);
    let resid = ifl - link.inverse(eta);
    let zc = zf - theta.pi_z;
    let h0 = counterfactual_mean(Group::Unexposed, z, a, beta, psi, link);
    let h1 = counterfactual_mean(Group::Exposed, z, a, beta, psi, link);
    let p0 = conditional_group_benefit(Group::Unexposed, z, beta, psi, link);
    let p1 = conditional_group_benefit(Group::Exposed, z, beta, psi, link);
    let p = conditional_benefit(z, a, beta, psi, link);
    [
        resid,
        resid * af,
        resid * zf,
        resid * af * zf,
        zc,
        zc * h0,
        zc * h1,
        (p0 - theta.pb0) * (T::one() - af),
        (p1 - theta.pb1) * af,
        p - theta.pb,
        g_transform(theta.pb0) - theta.nne,
        g_transform(theta.pb1) - theta.ein,
        g_transform(theta.pb) - theta.nnt,
    ]
}

/// Per-record stacked estimating function in canonical parameter order.
pub fn evaluate_q<T: Scalar>(
    record: &ObservationRecord,
    theta: &ThetaVector<T>,
    spec: ModelSpec,
) -> Result<[T; THETA_DIM], EstimationError> {
    for idx in Index::ALL {
        let k = idx.param().index();
        if !theta.to_array()[k].is_finite() {
            return Err(EstimationError::NonFiniteTheta(k));
        }
    }
    Ok(q_components(record, theta, spec.link))
}

/// Sample mean of the stacked estimating function, summed in slot order.
pub(crate) fn mean_q<T: Scalar>(counts: &CellCounts, theta: &ThetaVector<T>, link: LinkKind) -> [T; THETA_DIM] {
    let mut acc = [T::zero(); THETA_DIM];
    for (rec, c) in counts.distinct() {
        let q = q_components(&rec, theta, link);
        let w = count::<T>(c);
        for k in 0..THETA_DIM {
            acc[k] = acc[k] + w * q[k];
        }
    }
    let n = count::<T>(counts.n());
    acc.map(|v| v / n)
}

/// Wald statistics below this flag a weak instrument (first-stage F of 10).
pub const WEAK_INSTRUMENT_WALD: f64 = 3.1622776601683795;

/// Wald statistic `γ̂₁ / se(γ̂₁)` of the instrument coefficient in the
/// saturated logistic exposure model `logit P(A=1|Z) = γ₀ + γ₁Z`.
pub fn instrument_wald<T: Scalar>(data: &ObservationSet) -> Result<T, EstimationError> {
    let c = data.counts();
    let mut logit_p = [T::zero(); 2];
    let mut var = T::zero();
    for z in 0..2u8 {
        let n = c.instrument_group(z);
        let exposed = c.cell(z, 1);
        if exposed == 0 || exposed == n {
            return Err(EstimationError::ExposureSeparation { z, mean: exposed as f64 / n as f64 });
        }
        let p = count::<T>(exposed) / count::<T>(n);
        logit_p[z as usize] = (p / (T::one() - p)).ln();
        var = var + T::one() / (count::<T>(n) * p * (T::one() - p));
    }
    Ok((logit_p[1] - logit_p[0]) / var.sqrt())
}

/// How the unadjusted comparison estimators treat the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// One difference of outcome means between exposure groups.
    Crude,
    /// Standardizes the exposed-minus-unexposed difference over Z, as if Z
    /// were a sufficient measured confounder.
    #[default]
    AdjustForInstrument,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveEstimates<T> {
    pub benefit: PerIndex<T>,
    pub index: PerIndex<T>,
}

/// Unadjusted (for unmeasured confounding) estimators of the three indices.
pub fn naive_estimates<T: Scalar>(
    data: &ObservationSet,
    mode: BaselineMode,
) -> Result<NaiveEstimates<T>, EstimationError> {
    let c = data.counts();
    for a in 0..2u8 {
        if c.exposure_group(a) == 0 {
            return Err(EstimationError::GroupEmpty(a));
        }
    }
    let benefit = match mode {
        BaselineMode::Crude => {
            let mean = |a: u8| {
                count::<T>(c.cell_events(0, a) + c.cell_events(1, a)) / count::<T>(c.exposure_group(a))
            };
            let d = mean(1) - mean(0);
            PerIndex { ein: d, nne: d, nnt: d }
        }
        BaselineMode::AdjustForInstrument => {
            let mut diff = [T::zero(); 2];
            for z in 0..2u8 {
                for a in 0..2u8 {
                    if c.cell(z, a) == 0 {
                        return Err(EstimationError::GroupEmpty(a));
                    }
                }
                let m = |a: u8| count::<T>(c.cell_events(z, a)) / count::<T>(c.cell(z, a));
                diff[z as usize] = m(1) - m(0);
            }
            let standardize = |w0: u64, w1: u64| {
                (count::<T>(w0) * diff[0] + count::<T>(w1) * diff[1]) / count::<T>(w0 + w1)
            };
            PerIndex {
                ein: standardize(c.cell(0, 1), c.cell(1, 1)),
                nne: standardize(c.cell(0, 0), c.cell(1, 0)),
                nnt: standardize(c.instrument_group(0), c.instrument_group(1)),
            }
        }
    };
    Ok(NaiveEstimates { index: PerIndex::from_fn(|idx| g_transform(*benefit.get(idx))), benefit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate;
    use crate::linkmath::{logit, norm_quantile};
    use proptest::prelude::*;

    /// Dataset with the given per-(z,a) cell sizes and event counts.
    fn cells(spec: [((u8, u8), u64, u64); 4]) -> ObservationSet {
        let mut raw = Vec::new();
        for ((z, a), n, k) in spec {
            for j in 0..n {
                raw.push([z as i64, a as i64, (j < k) as i64]);
            }
        }
        validate(raw).unwrap()
    }

    fn example_set() -> ObservationSet {
        // cell means 0.2, 0.4, 0.3, 0.6 over (0,0), (0,1), (1,0), (1,1)
        cells([((0, 0), 50, 10), ((0, 1), 50, 20), ((1, 0), 50, 15), ((1, 1), 50, 30)])
    }

    #[test]
    fn fit_association_logit_closed_form() {
        let fit = fit_association::<f64>(&example_set(), ModelSpec::LOGIT).unwrap();
        let l = |p: f64| logit(p).unwrap();
        let expected = [l(0.2), l(0.4) - l(0.2), l(0.3) - l(0.2), l(0.6) - l(0.3) - l(0.4) + l(0.2)];
        for k in 0..4 {
            assert!((fit.beta[k] - expected[k]).abs() < 1e-12);
        }
        assert_eq!(fit.pi_z, 0.5);
    }

    #[test]
    fn fit_association_probit_closed_form() {
        let fit = fit_association::<f64>(&example_set(), ModelSpec::PROBIT).unwrap();
        let q = |p: f64| norm_quantile(p).unwrap();
        let expected = [q(0.2), q(0.4) - q(0.2), q(0.3) - q(0.2), q(0.6) - q(0.3) - q(0.4) + q(0.2)];
        for k in 0..4 {
            assert!((fit.beta[k] - expected[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_association_scores_vanish() {
        for spec in [ModelSpec::LOGIT, ModelSpec::PROBIT] {
            let data = example_set();
            let fit = fit_association::<f64>(&data, spec).unwrap();
            let mut theta = ThetaVector::<f64>::nan();
            theta.beta = fit.beta;
            theta.pi_z = fit.pi_z;
            let q = mean_q(data.counts(), &theta, spec.link);
            for k in 0..5 {
                assert!(q[k].abs() < 1e-10, "component {k}: {}", q[k]);
            }
        }
    }

    #[test]
    fn separation_is_reported() {
        let data = cells([((0, 0), 10, 10), ((0, 1), 10, 3), ((1, 0), 10, 4), ((1, 1), 10, 5)]);
        let err = fit_association::<f64>(&data, ModelSpec::LOGIT).unwrap_err();
        assert_eq!(err, EstimationError::Separation { z: 0, a: 0, mean: 1.0 });
    }

    #[test]
    fn counterfactual_mean_examples() {
        let beta = [-0.4, 0.8, 0.3, -0.2];
        for link in [LinkKind::Logit, LinkKind::Probit] {
            for group in [Group::Unexposed, Group::Exposed] {
                for z in 0..2 {
                    for a in 0..2 {
                        let h = counterfactual_mean(group, z, a, &beta, &[0.0, 0.0], link);
                        let fitted = link.inverse(linear_predictor(&beta, z as f64, a as f64));
                        assert_eq!(h, fitted);
                    }
                }
            }
        }
        let b = [-1.0, 0.7, 0.0, 0.0];
        let h = counterfactual_mean(Group::Exposed, 0, 1, &b, &[0.0, 1.5], LinkKind::Logit);
        assert!((h - crate::linkmath::expit(-1.0f64 + 0.7 - 1.5)).abs() < 1e-15);
        let b = [-1.0, 0.7, 0.4, 0.2];
        let h = counterfactual_mean(Group::Unexposed, 1, 0, &b, &[1.0, 1.5], LinkKind::Probit);
        assert!((h - crate::linkmath::norm_cdf(-1.0f64 + 0.4 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_effect_gives_zero_benefits() {
        let data = example_set();
        for spec in [ModelSpec::LOGIT, ModelSpec::PROBIT] {
            let fit = fit_association::<f64>(&data, spec).unwrap();
            let b = plugin_benefits(&data, &fit.beta, &[0.0, 0.0], spec).unwrap();
            assert_eq!((b.pb0, b.pb1, b.pb), (0.0, 0.0, 0.0));
            assert_eq!(g_transform(b.pb), f64::INFINITY);
        }
    }

    #[test]
    fn crude_baseline_example() {
        // mean(I|A=1) = 0.5, mean(I|A=0) = 0.3
        let data = cells([((0, 0), 50, 15), ((0, 1), 50, 25), ((1, 0), 50, 15), ((1, 1), 50, 25)]);
        let est = naive_estimates::<f64>(&data, BaselineMode::Crude).unwrap();
        for idx in Index::ALL {
            assert!((est.index.get(idx) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adjusted_baseline_collapses_without_instrument_exposure_link() {
        // equal exposure share in both instrument arms: standardization weights coincide
        let data = cells([((0, 0), 40, 8), ((0, 1), 60, 30), ((1, 0), 40, 12), ((1, 1), 60, 36)]);
        let crude = naive_estimates::<f64>(&data, BaselineMode::Crude).unwrap();
        let adj = naive_estimates::<f64>(&data, BaselineMode::AdjustForInstrument).unwrap();
        for idx in Index::ALL {
            assert!((crude.benefit.get(idx) - adj.benefit.get(idx)).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_q_rejects_infinite_index() {
        let mut theta = ThetaVector::<f64>::from_array(&[0.1; 13]);
        theta.nnt = f64::INFINITY;
        let rec = ObservationRecord::new(true, false, true);
        assert_eq!(evaluate_q(&rec, &theta, ModelSpec::LOGIT), Err(EstimationError::NonFiniteTheta(12)));
    }

    #[test]
    fn g_estimate_zeroes_mean_estimating_function() {
        // strong instrument, confounded outcome
        let data = cells([((0, 0), 300, 40), ((0, 1), 120, 50), ((1, 0), 60, 20), ((1, 1), 520, 230)]);
        for spec in [ModelSpec::LOGIT, ModelSpec::PROBIT] {
            let fit = g_estimate::<f64>(&data, spec).unwrap();
            assert!(fit.all_solved());
            let q = mean_q(data.counts(), &fit.theta_hat, spec.link);
            for (k, v) in q.iter().enumerate() {
                assert!(v.abs() < 1e-8, "{spec:?} component {k}: {v}");
            }
            assert!(fit.q_residual_norm <= 1e-8 * data.n() as f64);
            assert!(fit.theta_hat.is_resolved());
        }
    }

    #[test]
    fn psi_scan_finds_every_sign_change() {
        // f has roots at -3, 0.5 and 7
        let f = |x: f64| (x + 3.0) * (x - 0.5) * (x - 7.0);
        let roots = bracketed_roots(f, -20.0, 20.0, 4000, 1e-12);
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip([-3.0, 0.5, 7.0]) {
            assert!((r - e).abs() < 1e-10);
        }
    }

    #[test]
    fn no_sign_change_is_no_solution() {
        // Balanced design where Z raises the outcome in both exposure arms.
        // The psi0 equation is then C + c(F(η10+ψ) - F(η00+ψ)) with C, c > 0
        // and η10 > η00, which is positive for every ψ.
        let data = cells([((0, 0), 100, 20), ((0, 1), 100, 30), ((1, 0), 100, 40), ((1, 1), 100, 60)]);
        for spec in [ModelSpec::LOGIT, ModelSpec::PROBIT] {
            let fit = fit_association::<f64>(&data, spec).unwrap();
            let r = solve_psi(Group::Unexposed, &data, &fit.beta, fit.pi_z, spec);
            assert_eq!(r, Err(EstimationError::NoSolution { group: 0, lower: -20.0, upper: 20.0 }));
            let full = g_estimate::<f64>(&data, spec).unwrap();
            assert_eq!(full.psi0_status, PsiStatus::NoSolution);
            assert!(full.theta_hat.nne.is_nan() && full.theta_hat.nnt.is_nan());
            assert!(full.theta_hat.beta.iter().all(|b| b.is_finite()));
        }
    }

    #[test]
    fn instrument_wald_hand_computed() {
        // P(A=1|Z=0) = 0.3 over 200, P(A=1|Z=1) = 0.8 over 200
        let data = cells([((0, 0), 140, 20), ((0, 1), 60, 20), ((1, 0), 40, 10), ((1, 1), 160, 60)]);
        let w: f64 = instrument_wald(&data).unwrap();
        let gamma1 = (0.8f64 / 0.2).ln() - (0.3f64 / 0.7).ln();
        let se = (1.0f64 / (200.0 * 0.8 * 0.2) + 1.0 / (200.0 * 0.3 * 0.7)).sqrt();
        assert!((w - gamma1 / se).abs() < 1e-12);

        // identical exposure rates in both arms
        let flat = cells([((0, 0), 50, 10), ((0, 1), 50, 20), ((1, 0), 50, 15), ((1, 1), 50, 30)]);
        assert_eq!(instrument_wald::<f64>(&flat).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// The selected root is the smallest in magnitude and every reported
        /// root zeroes the equation; a dense independent scan finds no
        /// additional sign changes.
        #[test]
        fn solve_psi_reports_all_roots(
            n in proptest::array::uniform4(20u64..400),
            frac in proptest::array::uniform4(0.05f64..0.95),
            probit in any::<bool>(),
            exposed in any::<bool>(),
        ) {
            let cell = |k: usize| (n[k], ((n[k] as f64 * frac[k]).round() as u64).clamp(1, n[k] - 1));
            let data = cells([
                ((0, 0), cell(0).0, cell(0).1),
                ((0, 1), cell(1).0, cell(1).1),
                ((1, 0), cell(2).0, cell(2).1),
                ((1, 1), cell(3).0, cell(3).1),
            ]);
            let spec = if probit { ModelSpec::PROBIT } else { ModelSpec::LOGIT };
            let group = if exposed { Group::Exposed } else { Group::Unexposed };
            let fit = fit_association::<f64>(&data, spec).unwrap();
            let counts = *data.counts();
            let f = |p: f64| psi_estimating_mean(group, &counts, &fit.beta, fit.pi_z, p, spec.link);
            let dense = (0..40_000).filter(|&k| {
                let x0 = -20.0 + k as f64 * 0.001;
                (f(x0) < 0.0) != (f(x0 + 0.001) < 0.0)
            }).count();
            match solve_psi(group, &data, &fit.beta, fit.pi_z, spec) {
                Ok(sol) => {
                    prop_assert_eq!(sol.roots.len(), dense);
                    for r in &sol.roots {
                        prop_assert!(f(*r).abs() < 1e-10);
                        prop_assert!(sol.value.abs() <= r.abs());
                    }
                }
                Err(EstimationError::NoSolution { .. }) => prop_assert_eq!(dense, 0),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn population_benefit_is_share_weighted_group_mean(
            n in proptest::array::uniform4(5u64..200),
            beta in proptest::array::uniform4(-2.0f64..2.0),
            psi in proptest::array::uniform2(-3.0f64..3.0),
        ) {
            let data = cells([((0, 0), n[0], 1), ((0, 1), n[1], 1), ((1, 0), n[2], 1), ((1, 1), n[3], 1)]);
            let c = data.counts();
            for link in [LinkKind::Logit, LinkKind::Probit] {
                let pb0 = group_benefit(Group::Unexposed, c, &beta, &psi, link);
                let pb1 = group_benefit(Group::Exposed, c, &beta, &psi, link);
                let pb = population_benefit(c, &beta, &psi, link);
                let n0 = c.exposure_group(0) as f64;
                let n1 = c.exposure_group(1) as f64;
                prop_assert!((pb - (n0 * pb0 + n1 * pb1) / (n0 + n1)).abs() < 1e-12);
            }
        }
    }
}
