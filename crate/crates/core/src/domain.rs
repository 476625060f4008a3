//! Observation data, the canonical parameter layout, and result containers
//! shared by the estimator, the variance code, and the simulation harness.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::error::{LengthMismatch, ValidationError, ValidationIssue};
use crate::linkmath::LinkKind;
use crate::scalar::Scalar;

/// One subject: instrument `z`, exposure `a`, outcome `i`, each 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObservationRecord {
    z: bool,
    a: bool,
    i: bool,
}

impl ObservationRecord {
    pub const fn new(z: bool, a: bool, i: bool) -> Self {
        Self { z, a, i }
    }

    #[inline]
    pub fn z(&self) -> u8 {
        self.z as u8
    }

    #[inline]
    pub fn a(&self) -> u8 {
        self.a as u8
    }

    #[inline]
    pub fn i(&self) -> u8 {
        self.i as u8
    }

    #[inline]
    pub(crate) fn slot(&self) -> usize {
        ((self.z as usize) << 2) | ((self.a as usize) << 1) | self.i as usize
    }

    pub fn to_raw(&self) -> [i64; 3] {
        [self.z() as i64, self.a() as i64, self.i() as i64]
    }
}

/// Counts of the eight distinct `(z, a, i)` records.
///
/// Every estimating function in this crate depends on a record only through
/// its `(z, a, i)` triple, so sums over subjects reduce to weighted sums over
/// these eight slots. Slot order is fixed, which fixes the summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    slots: [u64; 8],
}

impl CellCounts {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ObservationRecord>) -> Self {
        let mut slots = [0u64; 8];
        for r in records {
            slots[r.slot()] += 1;
        }
        Self { slots }
    }

    pub fn n(&self) -> u64 {
        self.slots.iter().sum()
    }

    pub fn count(&self, z: u8, a: u8, i: u8) -> u64 {
        self.slots[((z as usize) << 2) | ((a as usize) << 1) | i as usize]
    }

    /// Subjects in cell `(z, a)`.
    pub fn cell(&self, z: u8, a: u8) -> u64 {
        self.count(z, a, 0) + self.count(z, a, 1)
    }

    /// Subjects in cell `(z, a)` with outcome 1.
    pub fn cell_events(&self, z: u8, a: u8) -> u64 {
        self.count(z, a, 1)
    }

    pub fn exposure_group(&self, a: u8) -> u64 {
        self.cell(0, a) + self.cell(1, a)
    }

    pub fn instrument_group(&self, z: u8) -> u64 {
        self.cell(z, 0) + self.cell(z, 1)
    }

    /// Non-empty slots with their multiplicities, in fixed slot order.
    pub fn distinct(&self) -> impl Iterator<Item = (ObservationRecord, u64)> + '_ {
        self.slots.iter().enumerate().filter(|(_, &c)| c > 0).map(|(slot, &c)| {
            (
                ObservationRecord::new(slot & 4 != 0, slot & 2 != 0, slot & 1 != 0),
                c,
            )
        })
    }
}

/// A validated dataset: at least one record and every `(z, a)` cell occupied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSet {
    records: Vec<ObservationRecord>,
    counts: CellCounts,
}

impl ObservationSet {
    /// Validates already-typed records (the binary invariant holds by construction).
    pub fn from_records(records: Vec<ObservationRecord>) -> Result<Self, ValidationError> {
        let counts = CellCounts::from_records(&records);
        let issues = cell_issues(&records, &counts);
        if issues.is_empty() {
            Ok(Self { records, counts })
        } else {
            Err(ValidationError { issues })
        }
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn counts(&self) -> &CellCounts {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn to_raw(&self) -> Vec<[i64; 3]> {
        self.records.iter().map(ObservationRecord::to_raw).collect()
    }
}

fn cell_issues(records: &[ObservationRecord], counts: &CellCounts) -> Vec<ValidationIssue> {
    if records.is_empty() {
        return vec![ValidationIssue::EmptyDataset];
    }
    let mut issues = Vec::new();
    for z in 0..2u8 {
        for a in 0..2u8 {
            if counts.cell(z, a) == 0 {
                issues.push(ValidationIssue::EmptyCell { z, a });
            }
        }
    }
    issues
}

/// Validates raw `(z, a, i)` triples, reporting every bad row and every empty cell.
pub fn validate<R>(raw: R) -> Result<ObservationSet, ValidationError>
where
    R: IntoIterator,
    R::Item: Borrow<[i64; 3]>,
{
    const COLUMNS: [&str; 3] = ["z", "a", "i"];
    let mut issues = Vec::new();
    let mut records = Vec::new();
    for (row, triple) in raw.into_iter().enumerate() {
        let triple: &[i64; 3] = triple.borrow();
        let mut ok = true;
        for (k, &v) in triple.iter().enumerate() {
            if v != 0 && v != 1 {
                issues.push(ValidationIssue::NonBinaryValue { row, column: COLUMNS[k], value: v });
                ok = false;
            }
        }
        if ok {
            records.push(ObservationRecord::new(triple[0] == 1, triple[1] == 1, triple[2] == 1));
        }
    }
    if records.is_empty() && issues.is_empty() {
        issues.push(ValidationIssue::EmptyDataset);
    } else if !records.is_empty() {
        let counts = CellCounts::from_records(&records);
        issues.extend(cell_issues(&records, &counts));
    }
    if !issues.is_empty() {
        return Err(ValidationError { issues });
    }
    ObservationSet::from_records(records)
}

/// Components of the stacked parameter vector, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Beta0,
    Beta1,
    Beta2,
    Beta3,
    PiZ,
    Psi0,
    Psi1,
    Pb0,
    Pb1,
    Pb,
    Nne,
    Ein,
    Nnt,
}

pub const THETA_DIM: usize = 13;

impl Param {
    pub const ALL: [Param; THETA_DIM] = [
        Param::Beta0,
        Param::Beta1,
        Param::Beta2,
        Param::Beta3,
        Param::PiZ,
        Param::Psi0,
        Param::Psi1,
        Param::Pb0,
        Param::Pb1,
        Param::Pb,
        Param::Nne,
        Param::Ein,
        Param::Nnt,
    ];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Param::Beta0 => "beta0",
            Param::Beta1 => "beta1",
            Param::Beta2 => "beta2",
            Param::Beta3 => "beta3",
            Param::PiZ => "pi_z",
            Param::Psi0 => "psi0",
            Param::Psi1 => "psi1",
            Param::Pb0 => "pb0",
            Param::Pb1 => "pb1",
            Param::Pb => "pb",
            Param::Nne => "nne",
            Param::Ein => "ein",
            Param::Nnt => "nnt",
        }
    }
}

/// The three efficacy indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Index {
    Ein,
    Nne,
    Nnt,
}

impl Index {
    pub const ALL: [Index; 3] = [Index::Ein, Index::Nne, Index::Nnt];

    pub const fn name(self) -> &'static str {
        match self {
            Index::Ein => "EIN",
            Index::Nne => "NNE",
            Index::Nnt => "NNT",
        }
    }

    /// Position of the index in the parameter vector.
    pub const fn param(self) -> Param {
        match self {
            Index::Ein => Param::Ein,
            Index::Nne => Param::Nne,
            Index::Nnt => Param::Nnt,
        }
    }

    /// Position of the benefit the index is derived from.
    pub const fn benefit(self) -> Param {
        match self {
            Index::Ein => Param::Pb1,
            Index::Nne => Param::Pb0,
            Index::Nnt => Param::Pb,
        }
    }
}

impl std::fmt::Display for Index {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Association coefficients, instrument marginal, causal parameters,
/// benefits and indices. Entries that could not be estimated are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThetaVector<T> {
    pub beta: [T; 4],
    pub pi_z: T,
    pub psi: [T; 2],
    pub pb0: T,
    pub pb1: T,
    pub pb: T,
    pub nne: T,
    pub ein: T,
    pub nnt: T,
}

impl<T: Scalar> ThetaVector<T> {
    pub fn nan() -> Self {
        let nan = T::nan();
        Self {
            beta: [nan; 4],
            pi_z: nan,
            psi: [nan; 2],
            pb0: nan,
            pb1: nan,
            pb: nan,
            nne: nan,
            ein: nan,
            nnt: nan,
        }
    }

    pub fn to_array(&self) -> [T; THETA_DIM] {
        [
            self.beta[0],
            self.beta[1],
            self.beta[2],
            self.beta[3],
            self.pi_z,
            self.psi[0],
            self.psi[1],
            self.pb0,
            self.pb1,
            self.pb,
            self.nne,
            self.ein,
            self.nnt,
        ]
    }

    pub fn from_array(v: &[T; THETA_DIM]) -> Self {
        Self {
            beta: [v[0], v[1], v[2], v[3]],
            pi_z: v[4],
            psi: [v[5], v[6]],
            pb0: v[7],
            pb1: v[8],
            pb: v[9],
            nne: v[10],
            ein: v[11],
            nnt: v[12],
        }
    }

    pub fn from_slice(v: &[T]) -> Result<Self, LengthMismatch> {
        let arr: &[T; THETA_DIM] = v
            .try_into()
            .map_err(|_| LengthMismatch { expected: THETA_DIM, actual: v.len() })?;
        Ok(Self::from_array(arr))
    }

    pub fn get(&self, p: Param) -> T {
        self.to_array()[p.index()]
    }

    pub fn index(&self, idx: Index) -> T {
        self.get(idx.param())
    }

    pub fn benefit(&self, idx: Index) -> T {
        self.get(idx.benefit())
    }

    /// `true` when each index equals `g` of its benefit (NaN-free).
    pub fn is_resolved(&self) -> bool {
        Index::ALL.iter().all(|&idx| {
            let pb = self.benefit(idx);
            let v = self.index(idx);
            !pb.is_nan() && v == crate::linkmath::g_transform(pb)
        })
    }

    pub fn cast<U: Scalar>(&self) -> ThetaVector<U> {
        let v = self.to_array().map(|x| U::from_f64(x.as_f64()).unwrap_or_else(U::nan));
        ThetaVector::from_array(&v)
    }
}

/// Both the structural and the association model use this link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub link: LinkKind,
}

impl ModelSpec {
    pub const fn new(link: LinkKind) -> Self {
        Self { link }
    }

    pub const LOGIT: ModelSpec = ModelSpec::new(LinkKind::Logit);
    pub const PROBIT: ModelSpec = ModelSpec::new(LinkKind::Probit);
}

/// Outcome of solving one causal-parameter equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PsiStatus {
    Solved,
    NoSolution,
    NotAttempted,
}

/// Condition-number threshold at or above which a fit is excluded.
pub const EXCLUSION_CONDITION_NUMBER: f64 = 1e12;

/// CI upper limit above which an interval is flagged as non-informative.
pub const NONINFORMATIVE_UPPER: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn is_noninformative(&self) -> bool {
        self.upper > T::lit(NONINFORMATIVE_UPPER)
    }
}

/// Per-index values, in `Index::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerIndex<V> {
    pub ein: V,
    pub nne: V,
    pub nnt: V,
}

impl<V> PerIndex<V> {
    pub fn get(&self, idx: Index) -> &V {
        match idx {
            Index::Ein => &self.ein,
            Index::Nne => &self.nne,
            Index::Nnt => &self.nnt,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Index) -> V) -> Self {
        Self { ein: f(Index::Ein), nne: f(Index::Nne), nnt: f(Index::Nnt) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics<T> {
    pub bread_condition_number: T,
    pub instrument_wald: T,
    /// `|instrument_wald|` below the weak-instrument threshold, or not computable.
    pub weak_instrument: bool,
    pub psi0_status: PsiStatus,
    pub psi1_status: PsiStatus,
    /// More than one root was found; the smallest in magnitude was kept.
    pub psi0_multiple_roots: bool,
    pub psi1_multiple_roots: bool,
    pub excluded: bool,
    pub noninformative_ci: PerIndex<bool>,
}

/// Point estimates, sandwich covariance, and index confidence intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport<T> {
    pub link: LinkKind,
    pub n: usize,
    pub theta_hat: ThetaVector<T>,
    /// Row-major 13x13; rows and columns of unavailable components are NaN.
    pub covariance: Vec<T>,
    pub se: [T; THETA_DIM],
    pub ci_level: T,
    /// `None` when the index is unavailable (no solution, infinite, or excluded).
    pub ci: PerIndex<Option<Interval<T>>>,
    pub diagnostics: Diagnostics<T>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full_cells() -> Vec<[i64; 3]> {
        vec![[0, 0, 1], [0, 1, 0], [1, 0, 0], [1, 1, 1]]
    }

    #[test]
    fn validate_examples() {
        let set = validate(full_cells()).unwrap();
        assert_eq!(set.n(), 4);

        let mut rows = full_cells();
        rows.push([0, 2, 1]);
        let err = validate(rows).unwrap_err();
        assert_eq!(
            err.issues,
            vec![ValidationIssue::NonBinaryValue { row: 4, column: "a", value: 2 }]
        );

        let rows: Vec<[i64; 3]> = (0..100).map(|k| [(k % 2) as i64, if k % 2 == 1 { 1 } else { k as i64 % 3 % 2 }, 0]).collect();
        let err = validate(rows).unwrap_err();
        assert_eq!(err.issues, vec![ValidationIssue::EmptyCell { z: 1, a: 0 }]);

        let err = validate(Vec::<[i64; 3]>::new()).unwrap_err();
        assert_eq!(err.issues, vec![ValidationIssue::EmptyDataset]);
    }

    #[test]
    fn validate_reports_every_issue() {
        let rows = vec![[0, 0, 3], [5, 0, 0], [0, 0, 1]];
        let err = validate(rows).unwrap_err();
        assert!(err.issues.contains(&ValidationIssue::NonBinaryValue { row: 0, column: "i", value: 3 }));
        assert!(err.issues.contains(&ValidationIssue::NonBinaryValue { row: 1, column: "z", value: 5 }));
        assert!(err.issues.contains(&ValidationIssue::EmptyCell { z: 1, a: 1 }));
    }

    #[test]
    fn theta_layout() {
        let v: Vec<f64> = (0..13).map(|k| k as f64).collect();
        let t = ThetaVector::from_slice(&v).unwrap();
        assert_eq!(t.psi[0], 5.0);
        assert_eq!(t.pb, 9.0);
        assert_eq!(t.get(Param::Psi0), 5.0);
        assert_eq!(t.get(Param::Nnt), 12.0);
        assert_eq!(
            ThetaVector::<f64>::from_slice(&v[..12]).unwrap_err(),
            LengthMismatch { expected: 13, actual: 12 }
        );
        for (k, p) in Param::ALL.iter().enumerate() {
            assert_eq!(p.index(), k);
        }
    }

    #[test]
    fn distinct_slots_round_trip() {
        let set = validate(vec![[1, 0, 1], [1, 0, 1], [0, 1, 0], [0, 0, 0], [1, 1, 1]]).unwrap();
        let total: u64 = set.counts().distinct().map(|(_, c)| c).sum();
        assert_eq!(total, 5);
        let (rec, c) = set.counts().distinct().find(|(r, _)| r.z() == 1 && r.a() == 0).unwrap();
        assert_eq!((rec.i(), c), (1, 2));
    }

    proptest! {
        #[test]
        fn theta_pack_unpack_bijection(v in proptest::collection::vec(-1e6_f64..1e6, 13)) {
            let t = ThetaVector::from_slice(&v).unwrap();
            prop_assert_eq!(t.to_array().to_vec(), v);
        }

        #[test]
        fn validation_is_idempotent(rows in proptest::collection::vec((0i64..2, 0i64..2, 0i64..2), 4..60)) {
            let mut raw: Vec<[i64; 3]> = full_cells();
            raw.extend(rows.into_iter().map(|(z, a, i)| [z, a, i]));
            let once = validate(&raw).unwrap();
            let twice = validate(once.to_raw()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
