//! Simulation truths and synthetic data.
//!
//! Given the causal parameters, the instrument and exposure models, and two
//! marginal targets, the association coefficients are pinned down by four
//! equations: the two valid-instrument conditions `E[I_a | Z=1] = E[I_a | Z=0]`,
//! the marginal outcome probability, and the marginal benefit.
//!
//! Writing the system in terms of cell probabilities `q[z][a]` makes its
//! structure visible. With `m0 = E[I₀]` and `m1 = m0 + p_b` fixed, each
//! instrument arm contributes two equations in its own two unknowns, so the
//! feasible set is a curve indexed by `m0`, and the outcome target picks
//! points on it. The solver traces that curve, which finds roots far from the
//! origin that a local search started on a small grid misses.
//!
//! Some target combinations are not attainable at all: the outcome
//! probability is bounded below along the curve. With `relax_outcome` set,
//! the solver then returns the attainable point nearest to the outcome target
//! and keeps the other three constraints exact.

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ModelSpec, ObservationRecord, ObservationSet, ThetaVector};
use crate::error::{DgpError, ValidationError};
use crate::estimator::{conditional_benefit, conditional_group_benefit, linear_predictor, Group};
use crate::linkmath::{expit, g_transform, LinkKind};

/// Residual bound every returned solution meets on its exact constraints.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Roots closer than this in max-norm are the same root.
pub const DISTINCT_ROOT_SEPARATION: f64 = 1e-6;

const CURVE_POINTS: usize = 600;
const ARM_SCAN_POINTS: usize = 48;
/// Cell probabilities of constructed truths stay this far from 0 and 1.
pub const CELL_PROB_FLOOR: f64 = 1e-6;

/// What to do when the constraint system has several exact roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSelection {
    /// Report every root as an error.
    #[default]
    RequireUnique,
    /// Keep the root with the smallest Euclidean norm.
    SmallestNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub spec: ModelSpec,
    pub psi: [f64; 2],
    pub pi_z: f64,
    /// Exposure model `P(A=1 | Z) = expit(γ₀ + γ₁Z)`.
    pub gamma: [f64; 2],
    pub target_exposure: f64,
    pub target_outcome: f64,
    pub target_pb: f64,
    #[serde(default = "default_relax")]
    pub relax_outcome: bool,
    #[serde(default)]
    pub root_selection: RootSelection,
    /// Only accept coefficients under which the exposed and the unexposed
    /// differ in untreated risk in the same direction in both instrument arms.
    #[serde(default)]
    pub concordant_confounding: bool,
}

fn default_relax() -> bool {
    true
}

impl DgpConfig {
    /// Config with `γ₀` derived from `γ₁` and the exposure target.
    pub fn new(
        spec: ModelSpec,
        psi: [f64; 2],
        pi_z: f64,
        gamma1: f64,
        target_exposure: f64,
        target_outcome: f64,
        target_pb: f64,
    ) -> Result<Self, DgpError> {
        let gamma0 = derive_gamma0(gamma1, pi_z, target_exposure)?;
        let config = Self {
            spec,
            psi,
            pi_z,
            gamma: [gamma0, gamma1],
            target_exposure,
            target_outcome,
            target_pb,
            relax_outcome: true,
            root_selection: RootSelection::RequireUnique,
            concordant_confounding: false,
        };
        config.validate()?;
        Ok(config)
    }

    /// Balanced instrument, `γ₁ = 3`, `P(A=1) = 0.6`, `P(I=1) = 0.3`,
    /// concordant confounding, and the smallest-norm root.
    pub fn standard(link: LinkKind, psi: [f64; 2], target_pb: f64) -> Result<Self, DgpError> {
        let mut c = Self::new(ModelSpec::new(link), psi, 0.5, 3.0, 0.6, 0.3, target_pb)?;
        c.root_selection = RootSelection::SmallestNorm;
        c.concordant_confounding = true;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DgpError> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(DgpError::InvalidConfig(format!("{name} = {v} is not in (0, 1)")))
            }
        };
        open_unit("pi_z", self.pi_z)?;
        open_unit("target_exposure", self.target_exposure)?;
        open_unit("target_outcome", self.target_outcome)?;
        if !(self.target_pb > -1.0 && self.target_pb < 1.0) {
            return Err(DgpError::InvalidConfig(format!("target_pb = {} is not in (-1, 1)", self.target_pb)));
        }
        if !self.psi.iter().chain(&self.gamma).all(|v| v.is_finite()) {
            return Err(DgpError::InvalidConfig("psi and gamma must be finite".into()));
        }
        let implied = self.marginal_exposure();
        if (implied - self.target_exposure).abs() > 1e-6 {
            return Err(DgpError::InvalidConfig(format!(
                "gamma implies P(A=1) = {implied:.8}, target is {}",
                self.target_exposure
            )));
        }
        Ok(())
    }

    /// `P(A=1 | Z=z)`.
    pub fn exposure_prob(&self, z: u8) -> f64 {
        expit(self.gamma[0] + self.gamma[1] * f64::from(z))
    }

    pub fn instrument_prob(&self, z: u8) -> f64 {
        if z == 1 {
            self.pi_z
        } else {
            1.0 - self.pi_z
        }
    }

    pub fn marginal_exposure(&self) -> f64 {
        (0..2).map(|z| self.instrument_prob(z) * self.exposure_prob(z)).sum()
    }

    /// `P(Z=z | A=a)` for `z = 0, 1`.
    pub fn bayes_weights(&self, a: u8) -> [f64; 2] {
        let joint = |z: u8| {
            let e = self.exposure_prob(z);
            self.instrument_prob(z) * if a == 1 { e } else { 1.0 - e }
        };
        let (j0, j1) = (joint(0), joint(1));
        let w1 = j1 / (j0 + j1);
        [1.0 - w1, w1]
    }

    fn link(&self) -> LinkKind {
        self.spec.link
    }
}

/// Intercept of the exposure model that hits the marginal exposure target.
pub fn derive_gamma0(gamma1: f64, pi_z: f64, target_exposure: f64) -> Result<f64, DgpError> {
    let f = |g0: f64| pi_z * expit(g0 + gamma1) + (1.0 - pi_z) * expit(g0) - target_exposure;
    let (mut lo, mut hi) = (-50.0 - gamma1.abs(), 50.0 + gamma1.abs());
    if !(f(lo) < 0.0 && f(hi) > 0.0) {
        return Err(DgpError::NoSolution(format!(
            "P(A=1) = {target_exposure} is not attainable with gamma1 = {gamma1}"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How the returned coefficients relate to the targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    /// All four constraints hold.
    Exact,
    /// The outcome target is unattainable; the nearest attainable outcome
    /// probability is used and the other three constraints hold.
    OutcomeRelaxed,
    /// No causal effect: the instrument conditions coincide and the
    /// coefficients are fixed at the no-association solution.
    NullEffect,
    /// Coefficients supplied by the caller.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub beta: [f64; 4],
    pub pb0_true: f64,
    pub pb1_true: f64,
    pub pb_true: f64,
    pub nne_true: f64,
    pub ein_true: f64,
    pub nnt_true: f64,
    /// Distinct exact roots found; 0 when the outcome target was relaxed.
    pub root_multiplicity: usize,
    pub solution: SolutionKind,
    /// `P(I=1)` implied by `beta`.
    pub achieved_outcome: f64,
    /// Valid-IV for `I₀`, valid-IV for `I₁`, outcome, benefit.
    pub residuals: [f64; 4],
}

/// Residuals of the four defining equations at `beta`.
pub fn constraint_residuals(config: &DgpConfig, beta: &[f64; 4]) -> [f64; 4] {
    let link = config.link();
    let psi = &config.psi;
    let cell = |z: u8, a: u8| link.inverse(linear_predictor(beta, f64::from(z), f64::from(a)));
    let mean_i0 = |z: u8| {
        let e = config.exposure_prob(z);
        (1.0 - e) * cell(z, 0) + e * link.inverse(linear_predictor(beta, f64::from(z), 1.0) - psi[1])
    };
    let mean_i1 = |z: u8| {
        let e = config.exposure_prob(z);
        (1.0 - e) * link.inverse(linear_predictor(beta, f64::from(z), 0.0) + psi[0]) + e * cell(z, 1)
    };
    let mut outcome = 0.0;
    let mut benefit = 0.0;
    for z in 0..2u8 {
        let e = config.exposure_prob(z);
        let pz = config.instrument_prob(z);
        outcome += pz * ((1.0 - e) * cell(z, 0) + e * cell(z, 1));
        benefit += pz
            * ((1.0 - e) * conditional_benefit(z, 0, beta, psi, link)
                + e * conditional_benefit(z, 1, beta, psi, link));
    }
    [
        mean_i0(1) - mean_i0(0),
        mean_i1(1) - mean_i1(0),
        outcome - config.target_outcome,
        benefit - config.target_pb,
    ]
}

fn max_abs(r: &[f64; 4]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// True benefits and indices at a caller-chosen `beta`.
pub fn truth_from_beta(config: &DgpConfig, beta: [f64; 4]) -> DgpTruth {
    build_truth(config, beta, SolutionKind::Given, 1)
}

fn build_truth(config: &DgpConfig, beta: [f64; 4], solution: SolutionKind, root_multiplicity: usize) -> DgpTruth {
    let link = config.link();
    let psi = &config.psi;
    let group = |g: Group| -> f64 {
        let w = config.bayes_weights(g.a());
        (0..2u8).map(|z| w[z as usize] * conditional_group_benefit(g, z, &beta, psi, link)).sum()
    };
    let pb0 = group(Group::Unexposed);
    let pb1 = group(Group::Exposed);
    let pa = config.marginal_exposure();
    let pb = pa * pb1 + (1.0 - pa) * pb0;
    let residuals = constraint_residuals(config, &beta);
    DgpTruth {
        beta,
        pb0_true: pb0,
        pb1_true: pb1,
        pb_true: pb,
        nne_true: g_transform(pb0),
        ein_true: g_transform(pb1),
        nnt_true: g_transform(pb),
        root_multiplicity,
        solution,
        achieved_outcome: residuals[2] + config.target_outcome,
        residuals,
    }
}

/// Solve for the association coefficients and the implied truths.
pub fn solve_beta(config: &DgpConfig) -> Result<DgpTruth, DgpError> {
    config.validate()?;
    if config.psi == [0.0, 0.0] {
        if config.target_pb != 0.0 {
            return Err(DgpError::NoSolution("a zero causal effect implies a zero benefit".into()));
        }
        let b0 = config.link().forward(config.target_outcome).expect("validated probability");
        return Ok(build_truth(config, [b0, 0.0, 0.0, 0.0], SolutionKind::NullEffect, 1));
    }

    let curve = FeasibleCurve::new(config);
    let sweep = curve.sweep();
    let roots = roots_on(config, &curve, &sweep);
    if roots.is_empty() {
        if !config.relax_outcome {
            return Err(DgpError::NoSolution(format!(
                "no coefficients reach P(I=1) = {} with the other constraints",
                config.target_outcome
            )));
        }
        let beta = nearest_attainable(config, &curve, &sweep).ok_or_else(|| {
            DgpError::NoSolution("the instrument and benefit constraints have no common solution".into())
        })?;
        return Ok(build_truth(config, beta, SolutionKind::OutcomeRelaxed, 0));
    }
    let beta = match (roots.len(), config.root_selection) {
        (1, _) => roots[0],
        (_, RootSelection::RequireUnique) => return Err(DgpError::MultipleSolutions(roots)),
        (_, RootSelection::SmallestNorm) => *roots
            .iter()
            .min_by(|a, b| norm(a).total_cmp(&norm(b)))
            .expect("non-empty"),
    };
    Ok(build_truth(config, beta, SolutionKind::Exact, roots.len()))
}

fn norm(b: &[f64; 4]) -> f64 {
    b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Untreated-risk gap between unexposed and exposed subjects in each
/// instrument arm, `E[I₀ | Z=z, A=0] - E[I₀ | Z=z, A=1]`.
pub fn confounding_gaps(config: &DgpConfig, beta: &[f64; 4]) -> [f64; 2] {
    let link = config.link();
    [0u8, 1].map(|z| {
        let zf = f64::from(z);
        link.inverse(linear_predictor(beta, zf, 0.0)) - link.inverse(linear_predictor(beta, zf, 1.0) - config.psi[1])
    })
}

fn admissible(config: &DgpConfig, beta: &[f64; 4]) -> bool {
    let gaps = confounding_gaps(config, beta);
    !config.concordant_confounding || gaps[0] * gaps[1] >= 0.0
}

/// Every distinct admissible exact root, from curve tracing and a multi-start
/// Newton search.
pub fn exact_roots(config: &DgpConfig) -> Vec<[f64; 4]> {
    let curve = FeasibleCurve::new(config);
    roots_on(config, &curve, &curve.sweep())
}

fn roots_on(config: &DgpConfig, curve: &FeasibleCurve<'_>, sweep: &[Vec<CurvePoint>]) -> Vec<[f64; 4]> {
    let mut candidates: Vec<[f64; 4]> = Vec::new();
    candidates.extend(curve.outcome_roots(sweep).into_iter().map(|p| curve.beta(&p)));

    let grid = [-2.0, 0.0, 2.0];
    for &b0 in &grid {
        for &b1 in &grid {
            for &b2 in &grid {
                for &b3 in &grid {
                    if let Some(root) = newton(config, [b0, b1, b2, b3]) {
                        candidates.push(root);
                    }
                }
            }
        }
    }

    let mut roots: Vec<[f64; 4]> = Vec::new();
    for c in candidates {
        let polished = newton(config, c).unwrap_or(c);
        if max_abs(&constraint_residuals(config, &polished)) > CONSTRAINT_TOL || !admissible(config, &polished) {
            continue;
        }
        let distinct = roots.iter().all(|r| {
            r.iter().zip(&polished).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) > DISTINCT_ROOT_SEPARATION
        });
        if distinct {
            roots.push(polished);
        }
    }
    roots.sort_by(|a, b| norm(a).total_cmp(&norm(b)));
    roots
}

/// Damped Newton on the four constraints with a central-difference Jacobian.
fn newton(config: &DgpConfig, start: [f64; 4]) -> Option<[f64; 4]> {
    let f = |b: &[f64; 4]| Vector4::from(constraint_residuals(config, b));
    let mut x = start;
    let mut fx = f(&x);
    for _ in 0..100 {
        if !fx.iter().all(|v| v.is_finite()) {
            return None;
        }
        if fx.amax() <= 1e-13 {
            break;
        }
        let mut jac = Matrix4::zeros();
        for k in 0..4 {
            let h = 1e-6 * x[k].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            jac.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        let step = jac.lu().solve(&fx)?;
        let mut t = 1.0;
        let current = fx.norm();
        loop {
            let cand = [x[0] - t * step[0], x[1] - t * step[1], x[2] - t * step[2], x[3] - t * step[3]];
            let fc = f(&cand);
            if fc.iter().all(|v| v.is_finite()) && fc.norm() < current {
                x = cand;
                fx = fc;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return (fx.amax() <= CONSTRAINT_TOL).then_some(x);
            }
        }
        if x.iter().any(|v| v.abs() > 50.0) {
            return None;
        }
    }
    (fx.amax() <= CONSTRAINT_TOL).then_some(x)
}

/// Cell probabilities satisfying both instrument conditions and the benefit
/// constraint, at `m0 = E[I₀]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CurvePoint {
    m0: f64,
    /// Unexposed-cell probability per arm; identifies the branch.
    u: [f64; 2],
    /// `q[z][a] = P(I=1 | Z=z, A=a)`.
    q: [[f64; 2]; 2],
}

/// One-parameter family of solutions to everything except the outcome target.
///
/// In arm `z`, write `u` for the unexposed cell probability and `v` for the
/// counterfactual untreated risk of the exposed. The `I₀` condition is linear,
/// `(1-e)u + ev = m0`, and the `I₁` condition reads
/// `(1-e)G(u; ψ₀) + eG(v; ψ₁) = m1` with `G(p; ψ) = ξ⁻¹(ξ(p) + ψ)`. Along the
/// line, the left side is concave when both effects are positive, so each arm
/// has at most two solutions, found by bracketing the extrema first.
struct FeasibleCurve<'a> {
    config: &'a DgpConfig,
}

impl<'a> FeasibleCurve<'a> {
    fn new(config: &'a DgpConfig) -> Self {
        Self { config }
    }

    fn m0_range(&self) -> (f64, f64) {
        let pb = self.config.target_pb;
        (pb.min(0.0).abs(), 1.0 - pb.max(0.0))
    }

    fn shift(&self, p: f64, psi: f64) -> f64 {
        let link = self.config.link();
        link.inverse(link.forward(p).expect("probability in (0,1)") + psi)
    }

    /// Range of `u` keeping both `u` and `v` inside the probability floor.
    fn u_range(&self, z: u8, m0: f64) -> Option<(f64, f64)> {
        let e = self.config.exposure_prob(z);
        let lo = CELL_PROB_FLOOR.max((m0 - e * (1.0 - CELL_PROB_FLOOR)) / (1.0 - e));
        let hi = (1.0 - CELL_PROB_FLOOR).min((m0 - e * CELL_PROB_FLOOR) / (1.0 - e));
        (lo < hi).then_some((lo, hi))
    }

    fn v_of(&self, z: u8, m0: f64, u: f64) -> f64 {
        let e = self.config.exposure_prob(z);
        (m0 - (1.0 - e) * u) / e
    }

    /// `I₁` condition residual in arm `z`.
    fn arm_residual(&self, z: u8, m0: f64, u: f64) -> f64 {
        let e = self.config.exposure_prob(z);
        let v = self.v_of(z, m0, u);
        (1.0 - e) * self.shift(u, self.config.psi[0]) + e * self.shift(v, self.config.psi[1])
            - (m0 + self.config.target_pb)
    }

    /// Every `u` solving arm `z` at `m0`, ascending.
    fn arm_solutions(&self, z: u8, m0: f64) -> Vec<f64> {
        let Some((lo, hi)) = self.u_range(z, m0) else { return Vec::new() };
        let f = |u: f64| self.arm_residual(z, m0, u);
        let xs: Vec<f64> = (0..=ARM_SCAN_POINTS)
            .map(|k| if k == ARM_SCAN_POINTS { hi } else { lo + (hi - lo) * k as f64 / ARM_SCAN_POINTS as f64 })
            .collect();
        let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let mut knots = vec![(xs[0], fs[0])];
        for k in 1..ARM_SCAN_POINTS {
            let (d0, d1) = (fs[k] - fs[k - 1], fs[k + 1] - fs[k]);
            if d0 * d1 < 0.0 {
                let sign = if d0 > 0.0 { -1.0 } else { 1.0 };
                let x = golden_min(|x| sign * f(x), xs[k - 1], xs[k + 1]);
                knots.push((x, f(x)));
            }
        }
        knots.push((xs[ARM_SCAN_POINTS], fs[ARM_SCAN_POINTS]));
        let mut out = Vec::new();
        for w in knots.windows(2) {
            let ((a, fa), (b, fb)) = (w[0], w[1]);
            if fa == 0.0 {
                out.push(a);
            } else if (fa < 0.0) != (fb < 0.0) && fb != 0.0 {
                out.push(bisect(&f, a, b, fa));
            }
        }
        if knots.last().is_some_and(|k| k.1 == 0.0) {
            out.push(hi);
        }
        out
    }

    fn point(&self, m0: f64, u: [f64; 2]) -> CurvePoint {
        let q = [0u8, 1].map(|z| {
            let uz = u[z as usize];
            [uz, self.shift(self.v_of(z, m0, uz), self.config.psi[1])]
        });
        CurvePoint { m0, u, q }
    }

    fn admissible(&self, p: &CurvePoint) -> bool {
        if !self.config.concordant_confounding {
            return true;
        }
        let gap = |z: u8| p.u[z as usize] - self.v_of(z, p.m0, p.u[z as usize]);
        gap(0) * gap(1) >= 0.0
    }

    /// Admissible points at `m0`, one per combination of arm solutions.
    fn points_at(&self, m0: f64) -> Vec<CurvePoint> {
        let s0 = self.arm_solutions(0, m0);
        let s1 = self.arm_solutions(1, m0);
        let mut out = Vec::with_capacity(s0.len() * s1.len());
        for &u0 in &s0 {
            for &u1 in &s1 {
                let p = self.point(m0, [u0, u1]);
                if self.admissible(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Point at `m0` on the branch closest to `near`.
    fn follow(&self, m0: f64, near: &CurvePoint) -> Option<CurvePoint> {
        let pick = |z: u8| {
            let target = near.u[z as usize];
            self.arm_solutions(z, m0).into_iter().min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        };
        Some(self.point(m0, [pick(0)?, pick(1)?])).filter(|p| self.admissible(p))
    }

    fn outcome(&self, p: &CurvePoint) -> f64 {
        (0..2u8)
            .map(|z| {
                let e = self.config.exposure_prob(z);
                self.config.instrument_prob(z) * ((1.0 - e) * p.q[z as usize][0] + e * p.q[z as usize][1])
            })
            .sum()
    }

    fn beta(&self, p: &CurvePoint) -> [f64; 4] {
        let l = |v: f64| self.config.link().forward(v).expect("cell probability in (0,1)");
        let (f00, f01, f10, f11) = (l(p.q[0][0]), l(p.q[0][1]), l(p.q[1][0]), l(p.q[1][1]));
        [f00, f01 - f00, f10 - f00, f11 - f10 - f01 + f00]
    }

    fn sweep(&self) -> Vec<Vec<CurvePoint>> {
        let (lo, hi) = self.m0_range();
        let step = (hi - lo) / (CURVE_POINTS + 1) as f64;
        (1..=CURVE_POINTS).map(|k| self.points_at(lo + step * k as f64)).collect()
    }

    /// Points where the outcome probability crosses its target.
    fn outcome_roots(&self, sweep: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
        let target = self.config.target_outcome;
        let mut roots = Vec::new();
        for pair in sweep.windows(2) {
            let Some(next) = pair[1].first() else { continue };
            for left in &pair[0] {
                let Some(right) = self.follow(next.m0, left) else { continue };
                let (gl, gr) = (self.outcome(left) - target, self.outcome(&right) - target);
                if (gl < 0.0) == (gr < 0.0) {
                    continue;
                }
                let (mut a, mut b, mut ga) = (*left, right, gl);
                for _ in 0..80 {
                    let mid = 0.5 * (a.m0 + b.m0);
                    if mid <= a.m0 || mid >= b.m0 {
                        break;
                    }
                    let Some(pm) = self.follow(mid, &a) else { break };
                    let gm = self.outcome(&pm) - target;
                    if (gm < 0.0) == (ga < 0.0) {
                        a = pm;
                        ga = gm;
                    } else {
                        b = pm;
                    }
                }
                roots.push(if ga.abs() <= (self.outcome(&b) - target).abs() { a } else { b });
            }
        }
        roots
    }

    /// Point minimizing the distance between outcome probability and target.
    fn nearest(&self, sweep: &[Vec<CurvePoint>]) -> Option<CurvePoint> {
        let target = self.config.target_outcome;
        let dist = |p: &CurvePoint| (self.outcome(p) - target).abs();
        let (k, best) = sweep
            .iter()
            .enumerate()
            .flat_map(|(k, pts)| pts.iter().map(move |p| (k, *p)))
            .min_by(|a, b| dist(&a.1).total_cmp(&dist(&b.1)))?;
        let (lo, hi) = self.m0_range();
        let step = (hi - lo) / (CURVE_POINTS + 1) as f64;
        let (a, b) = (best.m0 - step * if k > 0 { 1.0 } else { 0.5 }, best.m0 + step);
        let eval = |m0: f64| self.follow(m0, &best).map_or(f64::INFINITY, |p| dist(&p));
        let m0 = golden_min(eval, a, b);
        let refined = self.follow(m0, &best).filter(|p| dist(p) < dist(&best));
        Some(refined.unwrap_or(best))
    }
}

/// Minimizer of a unimodal function on `[a, b]`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.is_nan() || (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn nearest_attainable(config: &DgpConfig, curve: &FeasibleCurve<'_>, sweep: &[Vec<CurvePoint>]) -> Option<[f64; 4]> {
    let p = curve.nearest(sweep)?;
    let beta = curve.beta(&p);
    let r = constraint_residuals(config, &beta);
    (r[0].abs().max(r[1].abs()).max(r[3].abs()) <= CONSTRAINT_TOL).then_some(beta)
}

/// Canonical parameter vector at the truth.
pub fn true_theta(truth: &DgpTruth, config: &DgpConfig) -> ThetaVector<f64> {
    ThetaVector {
        beta: truth.beta,
        pi_z: config.pi_z,
        psi: config.psi,
        pb0: truth.pb0_true,
        pb1: truth.pb1_true,
        pb: truth.pb_true,
        nne: truth.nne_true,
        ein: truth.ein_true,
        nnt: truth.nnt_true,
    }
}

/// Independent draws of `(Z, A, I)` from the instrument, exposure and
/// association models.
pub fn generate_with<R: Rng + ?Sized>(
    truth: &DgpTruth,
    config: &DgpConfig,
    n: usize,
    rng: &mut R,
) -> Result<ObservationSet, ValidationError> {
    let link = config.link();
    let e = [config.exposure_prob(0), config.exposure_prob(1)];
    let mut q = [[0.0; 2]; 2];
    for z in 0..2u8 {
        for a in 0..2u8 {
            q[z as usize][a as usize] = link.inverse(linear_predictor(&truth.beta, f64::from(z), f64::from(a)));
        }
    }
    let records = (0..n)
        .map(|_| {
            let z = rng.gen::<f64>() < config.pi_z;
            let a = rng.gen::<f64>() < e[z as usize];
            let i = rng.gen::<f64>() < q[z as usize][a as usize];
            ObservationRecord::new(z, a, i)
        })
        .collect();
    ObservationSet::from_records(records)
}

/// Dataset for a 64-bit seed. Fails only if a `(z, a)` cell comes out empty.
pub fn generate(
    truth: &DgpTruth,
    config: &DgpConfig,
    n: usize,
    seed: u64,
) -> Result<ObservationSet, ValidationError> {
    generate_with(truth, config, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn several_exact_roots_are_reported() {
        // the outcome target is crossed on both halves of the feasible arc
        let mut c = DgpConfig::standard(LinkKind::Logit, [1.0, 1.5], 1.0 / 4.65).unwrap();
        c.target_outcome = 0.31;
        c.concordant_confounding = false;
        c.root_selection = RootSelection::RequireUnique;
        let Err(DgpError::MultipleSolutions(roots)) = solve_beta(&c) else { panic!("expected several roots") };
        assert!(roots.len() >= 2);
        for r in &roots {
            assert!(max_abs(&constraint_residuals(&c, r)) <= CONSTRAINT_TOL);
        }

        c.root_selection = RootSelection::SmallestNorm;
        let t = solve_beta(&c).unwrap();
        assert_eq!(t.solution, SolutionKind::Exact);
        assert_eq!(t.root_multiplicity, roots.len());
        assert_eq!(t.beta, roots[0]);
    }

    #[test]
    fn concordance_restricts_roots() {
        let mut c = DgpConfig::standard(LinkKind::Logit, [1.0, 1.5], 1.0 / 4.65).unwrap();
        c.target_outcome = 0.31;
        let roots = exact_roots(&c);
        assert!(!roots.is_empty());
        for r in &roots {
            let g = confounding_gaps(&c, r);
            assert!(g[0] * g[1] >= 0.0);
        }
    }

    #[test]
    fn relaxed_solution_keeps_other_constraints() {
        let c = DgpConfig::standard(LinkKind::Logit, [1.0, 1.5], 1.0 / 4.65).unwrap();
        let t = solve_beta(&c).unwrap();
        assert_eq!(t.solution, SolutionKind::OutcomeRelaxed);
        for k in [0, 1, 3] {
            assert!(t.residuals[k].abs() <= CONSTRAINT_TOL);
        }
        assert!(t.achieved_outcome > c.target_outcome);
        let mut strict = c;
        strict.relax_outcome = false;
        assert!(matches!(solve_beta(&strict), Err(DgpError::NoSolution(_))));
    }

    #[test]
    fn derive_gamma0_examples() {
        let g0 = derive_gamma0(3.0, 0.5, 0.6).unwrap();
        assert!((g0 + 0.83).abs() < 0.01);
        let implied = 0.5 * expit(g0 + 3.0) + 0.5 * expit(g0);
        assert!((implied - 0.6).abs() < 1e-12);

        let g0 = derive_gamma0(0.0, 0.5, 0.35).unwrap();
        assert!((g0 - crate::linkmath::logit(0.35).unwrap()).abs() < 1e-11);

        assert!(derive_gamma0(3.0, 0.5, 0.999).is_ok());
        assert!(matches!(derive_gamma0(3.0, 0.5, 1.0), Err(DgpError::NoSolution(_))));
    }

    #[test]
    fn inconsistent_gamma_is_rejected() {
        let mut c = DgpConfig::standard(LinkKind::Logit, [1.0, 1.5], 1.0 / 4.65).unwrap();
        c.gamma[0] = -0.83;
        assert!(matches!(c.validate(), Err(DgpError::InvalidConfig(_))));
    }

    #[test]
    fn bayes_weights_sum_to_one() {
        let c = DgpConfig::standard(LinkKind::Probit, [1.0, 1.5], 1.0 / 3.02).unwrap();
        for a in 0..2 {
            let w = c.bayes_weights(a);
            assert!((w[0] + w[1] - 1.0).abs() < 1e-14);
        }
        // exposed subjects are mostly in the Z=1 arm
        assert!(c.bayes_weights(1)[1] > 0.7);
    }

    #[test]
    fn null_effect_truth() {
        let c = DgpConfig::standard(LinkKind::Logit, [0.0, 0.0], 0.0).unwrap();
        let t = solve_beta(&c).unwrap();
        assert_eq!(t.solution, SolutionKind::NullEffect);
        let theta = true_theta(&t, &c);
        assert_eq!((theta.pb0, theta.pb1, theta.pb), (0.0, 0.0, 0.0));
        assert!(theta.nne.is_infinite() && theta.ein.is_infinite() && theta.nnt.is_infinite());
        assert!(max_abs(&t.residuals) < 1e-15);
    }

    #[test]
    fn unconfounded_coefficients_satisfy_instrument_conditions() {
        let mut c = DgpConfig::standard(LinkKind::Logit, [0.7, 0.7], 0.1).unwrap();
        c.target_pb = 0.0;
        let r = constraint_residuals(&c, &[-1.0, 0.7, 0.0, 0.0]);
        assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15);
    }

    #[test]
    fn total_expectation_identity() {
        let c = DgpConfig::standard(LinkKind::Probit, [1.0, 1.5], 1.0 / 3.02).unwrap();
        let t = truth_from_beta(&c, [-1.1, 0.4, 0.9, -0.3]);
        let pa = c.marginal_exposure();
        assert!((t.pb_true - (pa * t.pb1_true + (1.0 - pa) * t.pb0_true)).abs() < 1e-10);
        // the benefit residual is computed independently from the cell mixture
        assert!((t.residuals[3] + c.target_pb - t.pb_true).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let c = DgpConfig::standard(LinkKind::Logit, [1.0, 1.5], 1.0 / 4.65).unwrap();
        let t = truth_from_beta(&c, [-1.0, 0.5, 0.3, 0.1]);
        let a = generate(&t, &c, 500, 42).unwrap();
        let b = generate(&t, &c, 500, 42).unwrap();
        let d = generate(&t, &c, 500, 43).unwrap();
        assert_eq!(a.records(), b.records());
        assert_ne!(a.records(), d.records());
    }
}
