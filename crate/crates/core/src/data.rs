//! Respondent records, list-design validation and per-cell summaries.
//!
//! A cell is indexed by `(z, y)`: the list treatment indicator and the answer
//! to the direct question. All estimators and placebo tests work from a
//! [`CellSummary`], never from raw records.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Probability;

pub const DEFAULT_QUESTION: &str = "q1";

/// One row as loaded from disk, before validation. Missing cells are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawRecord {
    pub respondent_id: Option<String>,
    pub question_id: Option<String>,
    pub study: Option<String>,
    pub y_direct: Option<i64>,
    pub z_treat: Option<i64>,
    pub v_count: Option<i64>,
    /// Respondent failed an attention or quality check.
    pub attention_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub y_direct: u8,
    pub z_treat: u8,
    pub v_count: u32,
    pub study: Option<String>,
}

impl Respondent {
    pub fn observation(&self) -> Observation {
        Observation {
            y: self.y_direct,
            z: self.z_treat,
            v: self.v_count,
        }
    }
}

/// The observable triple `(Y, Z, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub y: u8,
    pub z: u8,
    pub v: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListDesign {
    j_items: u32,
    alpha: Probability,
}

impl ListDesign {
    pub const DEFAULT_ALPHA: f64 = 0.05;

    pub fn new(j_items: u32, alpha: f64) -> Result<Self> {
        if j_items == 0 {
            return Err(Error::DesignInvalid("list needs at least one item".into()));
        }
        let alpha = Probability::new(alpha)
            .ok()
            .filter(|a| a.is_interior())
            .ok_or_else(|| Error::DesignInvalid(format!("alpha must be in (0, 1), got {alpha}")))?;
        Ok(ListDesign { j_items, alpha })
    }

    pub fn with_items(j_items: u32) -> Result<Self> {
        Self::new(j_items, Self::DEFAULT_ALPHA)
    }

    pub fn j_items(&self) -> u32 {
        self.j_items
    }

    pub fn alpha(&self) -> Probability {
        self.alpha
    }

    /// Largest admissible item count for a respondent in arm `z`.
    pub fn max_count(&self, z: u8) -> u32 {
        self.j_items + u32::from(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingField,
    FailedAttentionCheck,
    InvalidIndicator,
    CountExceedsListLength,
    NegativeCount,
    DuplicateId,
}

impl ExclusionReason {
    pub fn describe(self) -> &'static str {
        match self {
            ExclusionReason::MissingField => "missing field",
            ExclusionReason::FailedAttentionCheck => "failed attention check",
            ExclusionReason::InvalidIndicator => "indicator not in {0,1}",
            ExclusionReason::CountExceedsListLength => "count exceeds list length",
            ExclusionReason::NegativeCount => "negative count",
            ExclusionReason::DuplicateId => "duplicate id",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub total: usize,
    pub retained: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
}

impl ExclusionReport {
    pub fn excluded_total(&self) -> usize {
        self.excluded.values().sum()
    }

    pub fn count(&self, reason: ExclusionReason) -> usize {
        self.excluded.get(&reason).copied().unwrap_or(0)
    }
}

/// Validated respondent records for a single question.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Respondent>,
    design: ListDesign,
    question_id: String,
    exclusions: ExclusionReport,
}

impl Dataset {
    /// Builds a dataset from records already known to satisfy the design,
    /// e.g. simulator output. Still checks every invariant.
    pub fn from_respondents(
        records: Vec<Respondent>,
        design: ListDesign,
        question_id: impl Into<String>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.y_direct > 1 || r.z_treat > 1 {
                return Err(Error::InvalidParams(format!("record {} has a non-binary indicator", r.id)));
            }
            if r.v_count > design.max_count(r.z_treat) {
                return Err(Error::InvalidParams(format!(
                    "record {} count {} exceeds list length",
                    r.id, r.v_count
                )));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidParams(format!("duplicate id {}", r.id)));
            }
        }
        let n = records.len();
        Ok(Dataset {
            records,
            design,
            question_id: question_id.into(),
            exclusions: ExclusionReport {
                total: n,
                retained: n,
                excluded: BTreeMap::new(),
            },
        })
    }

    pub fn records(&self) -> &[Respondent] {
        &self.records
    }

    pub fn design(&self) -> &ListDesign {
        &self.design
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn exclusions(&self) -> &ExclusionReport {
        &self.exclusions
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = Observation> + '_ {
        self.records.iter().map(Respondent::observation)
    }
}

fn binary(v: i64) -> Option<u8> {
    match v {
        0 => Some(0),
        1 => Some(1),
        _ => None,
    }
}

/// Listwise deletion with per-reason accounting. Impossible counts are
/// excluded, never clamped. The first occurrence of a repeated id is kept.
pub fn validate(records: &[RawRecord], design: &ListDesign) -> Result<Dataset> {
    let mut retained = Vec::with_capacity(records.len());
    let mut excluded: BTreeMap<ExclusionReason, usize> = BTreeMap::new();
    let mut seen: HashSet<String> = HashSet::with_capacity(records.len());
    let mut question_id: Option<String> = None;

    for (row, raw) in records.iter().enumerate() {
        let reason = (|| {
            if raw.attention_failed {
                return Err(ExclusionReason::FailedAttentionCheck);
            }
            let (y, z, v) = match (raw.y_direct, raw.z_treat, raw.v_count) {
                (Some(y), Some(z), Some(v)) => (y, z, v),
                _ => return Err(ExclusionReason::MissingField),
            };
            let (y, z) = match (binary(y), binary(z)) {
                (Some(y), Some(z)) => (y, z),
                _ => return Err(ExclusionReason::InvalidIndicator),
            };
            if v < 0 {
                return Err(ExclusionReason::NegativeCount);
            }
            if v > i64::from(design.max_count(z)) {
                return Err(ExclusionReason::CountExceedsListLength);
            }
            let id = raw
                .respondent_id
                .clone()
                .unwrap_or_else(|| format!("row{}", row + 1));
            if seen.contains(&id) {
                return Err(ExclusionReason::DuplicateId);
            }
            Ok(Respondent {
                id,
                y_direct: y,
                z_treat: z,
                v_count: v as u32,
                study: raw.study.clone(),
            })
        })();
        match reason {
            Ok(r) => {
                seen.insert(r.id.clone());
                if question_id.is_none() {
                    question_id = raw.question_id.clone();
                }
                retained.push(r);
            }
            Err(why) => *excluded.entry(why).or_default() += 1,
        }
    }

    if retained.is_empty() {
        return Err(Error::AllRecordsExcluded {
            total: records.len(),
        });
    }
    let exclusions = ExclusionReport {
        total: records.len(),
        retained: retained.len(),
        excluded,
    };
    Ok(Dataset {
        records: retained,
        design: *design,
        question_id: question_id.unwrap_or_else(|| DEFAULT_QUESTION.to_string()),
        exclusions,
    })
}

/// Count, mean and unbiased variance of a stream of values, accumulated with
/// Welford's update. `variance` is `None` below two observations and `mean`
/// is `None` for an empty stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    #[serde(skip)]
    sum: f64,
    #[serde(skip)]
    m2: f64,
    #[serde(skip)]
    running_mean: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        let delta = x - self.running_mean;
        self.running_mean += delta / self.count as f64;
        self.m2 += delta * (x - self.running_mean);
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Moments::default();
        values.into_iter().for_each(|x| m.push(x));
        m
    }

    /// Arithmetic mean (sum / count), so integer data give exactly the same
    /// value regardless of how the sum was grouped.
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn variance(&self) -> Option<f64> {
        (self.count > 1).then(|| (self.m2 / (self.count - 1) as f64).max(0.0))
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

impl CellStats {
    fn from_moments(m: &Moments) -> Self {
        CellStats {
            count: m.count,
            mean: m.mean(),
            variance: m.variance(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn variance_undefined(&self) -> bool {
        self.count < 2
    }
}

/// Per-`(z, y)` summaries of the item count plus the arm-level moments used
/// by the difference-in-means estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    /// Indexed `[z][y]`.
    cells: [[CellStats; 2]; 2],
    /// Item count by arm, pooled over the direct answer.
    arm_counts: [CellStats; 2],
    /// Direct answer by arm.
    arm_direct: [CellStats; 2],
    pub n: usize,
    pub m: usize,
    pub y_bar: f64,
    pub gamma_hat: f64,
}

impl CellSummary {
    pub fn from_observations(obs: impl IntoIterator<Item = Observation>) -> Self {
        let mut cells = [[Moments::default(); 2]; 2];
        let mut arm_v = [Moments::default(); 2];
        let mut arm_y = [Moments::default(); 2];
        let mut yes = 0usize;
        for o in obs {
            let (z, y) = (usize::from(o.z), usize::from(o.y));
            let v = f64::from(o.v);
            cells[z][y].push(v);
            arm_v[z].push(v);
            arm_y[z].push(f64::from(o.y));
            yes += y;
        }
        let n = arm_v[0].count + arm_v[1].count;
        let m = arm_v[1].count;
        let ratio = |a: usize| if n == 0 { f64::NAN } else { a as f64 / n as f64 };
        CellSummary {
            cells: cells.map(|row| row.map(|c| CellStats::from_moments(&c))),
            arm_counts: arm_v.map(|c| CellStats::from_moments(&c)),
            arm_direct: arm_y.map(|c| CellStats::from_moments(&c)),
            n,
            m,
            y_bar: ratio(yes),
            gamma_hat: ratio(m),
        }
    }

    pub fn cell(&self, z: u8, y: u8) -> &CellStats {
        &self.cells[usize::from(z)][usize::from(y)]
    }

    pub fn arm(&self, z: u8) -> &CellStats {
        &self.arm_counts[usize::from(z)]
    }

    pub fn arm_direct(&self, z: u8) -> &CellStats {
        &self.arm_direct[usize::from(z)]
    }

    /// Cells with no records, as `(z, y)` pairs.
    pub fn empty_cells(&self) -> Vec<(u8, u8)> {
        self.indexed().filter(|(_, _, c)| c.is_empty()).map(|(z, y, _)| (z, y)).collect()
    }

    /// Cells with fewer than two records.
    pub fn variance_undefined_cells(&self) -> Vec<(u8, u8)> {
        self.indexed()
            .filter(|(_, _, c)| c.variance_undefined())
            .map(|(z, y, _)| (z, y))
            .collect()
    }

    fn indexed(&self) -> impl Iterator<Item = (u8, u8, &CellStats)> {
        (0..2u8).flat_map(move |z| (0..2u8).map(move |y| (z, y, self.cell(z, y))))
    }
}

pub fn summarize_cells(dataset: &Dataset) -> CellSummary {
    CellSummary::from_observations(dataset.observations())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(id: &str, y: Option<i64>, z: Option<i64>, v: Option<i64>) -> RawRecord {
        RawRecord {
            respondent_id: Some(id.into()),
            y_direct: y,
            z_treat: z,
            v_count: v,
            ..RawRecord::default()
        }
    }

    fn design4() -> ListDesign {
        ListDesign::with_items(4).unwrap()
    }

    #[test]
    fn design_rejects_bad_values() {
        assert!(ListDesign::new(0, 0.05).is_err());
        assert!(ListDesign::new(4, 0.0).is_err());
        assert!(ListDesign::new(4, 1.0).is_err());
        assert!(ListDesign::new(4, f64::NAN).is_err());
    }

    #[test]
    fn complete_records_are_retained() {
        let recs = vec![
            raw("a", Some(0), Some(0), Some(4)),
            raw("b", Some(1), Some(1), Some(5)),
            raw("c", Some(0), Some(1), Some(0)),
        ];
        let ds = validate(&recs, &design4()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.exclusions().excluded_total(), 0);
    }

    #[test]
    fn control_count_above_list_length_is_excluded() {
        let recs = vec![raw("a", Some(0), Some(0), Some(5)), raw("b", Some(0), Some(0), Some(1))];
        let ds = validate(&recs, &design4()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.exclusions().count(ExclusionReason::CountExceedsListLength), 1);
        assert_eq!(ExclusionReason::CountExceedsListLength.describe(), "count exceeds list length");
    }

    #[test]
    fn attention_and_missing_exclusions() {
        // 1,023 recruited, 2 failed the attention check, 7 left a question blank.
        let mut recs: Vec<RawRecord> = (0..1023)
            .map(|i| raw(&format!("r{i}"), Some(i % 2), Some((i / 2) % 2), Some(i % 4)))
            .collect();
        recs[10].attention_failed = true;
        recs[500].attention_failed = true;
        for i in [3, 77, 200, 301, 650, 900, 1022] {
            match i % 3 {
                0 => recs[i].y_direct = None,
                1 => recs[i].v_count = None,
                _ => recs[i].z_treat = None,
            }
        }
        let ds = validate(&recs, &design4()).unwrap();
        assert_eq!(ds.len(), 1014);
        assert_eq!(ds.exclusions().count(ExclusionReason::FailedAttentionCheck), 2);
        assert_eq!(ds.exclusions().count(ExclusionReason::MissingField), 7);
    }

    #[test]
    fn duplicates_and_bad_indicators() {
        let recs = vec![
            raw("a", Some(0), Some(0), Some(1)),
            raw("a", Some(1), Some(0), Some(1)),
            raw("b", Some(2), Some(0), Some(1)),
            raw("c", Some(0), Some(0), Some(-1)),
        ];
        let ds = validate(&recs, &design4()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.exclusions().count(ExclusionReason::DuplicateId), 1);
        assert_eq!(ds.exclusions().count(ExclusionReason::InvalidIndicator), 1);
        assert_eq!(ds.exclusions().count(ExclusionReason::NegativeCount), 1);
    }

    #[test]
    fn all_excluded_is_an_error() {
        let recs = vec![raw("a", None, Some(0), Some(1))];
        assert_eq!(validate(&recs, &design4()), Err(Error::AllRecordsExcluded { total: 1 }));
    }

    #[test]
    fn singleton_cells_are_flagged() {
        let obs = [
            Observation { y: 0, z: 0, v: 1 },
            Observation { y: 0, z: 1, v: 2 },
        ];
        let s = CellSummary::from_observations(obs);
        assert_eq!(s.cell(0, 0).count, 1);
        assert_eq!(s.cell(0, 0).mean, Some(1.0));
        assert_eq!(s.cell(1, 0).mean, Some(2.0));
        assert!(s.cell(0, 0).variance.is_none());
        assert!(s.cell(1, 0).variance.is_none());
        assert_eq!(s.empty_cells(), vec![(0, 1), (1, 1)]);
        assert_eq!(s.variance_undefined_cells().len(), 4);
    }

    #[test]
    fn constant_cell_has_zero_variance() {
        let obs = (0..5).map(|_| Observation { y: 1, z: 1, v: 3 });
        let s = CellSummary::from_observations(obs);
        assert_eq!(s.cell(1, 1).variance, Some(0.0));
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant(
            obs in prop::collection::vec((0u8..2, 0u8..2, 0u32..6), 1..60),
            seed in any::<u64>(),
        ) {
            let obs: Vec<Observation> = obs.into_iter().map(|(y, z, v)| Observation { y, z, v }).collect();
            let mut shuffled = obs.clone();
            // Deterministic Fisher-Yates with a tiny LCG.
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let a = CellSummary::from_observations(obs.iter().copied());
            let b = CellSummary::from_observations(shuffled.iter().copied());
            prop_assert_eq!(a.n, b.n);
            prop_assert_eq!(a.m, b.m);
            prop_assert_eq!(a.y_bar, b.y_bar);
            for z in 0..2u8 {
                for y in 0..2u8 {
                    let (ca, cb) = (a.cell(z, y), b.cell(z, y));
                    prop_assert_eq!(ca.count, cb.count);
                    prop_assert_eq!(ca.mean, cb.mean);
                    match (ca.variance, cb.variance) {
                        (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs())),
                        (x, y) => prop_assert_eq!(x, y),
                    }
                }
            }
        }
    }
}
