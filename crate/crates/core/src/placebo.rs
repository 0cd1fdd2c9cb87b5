//! Placebo tests of the identifying assumptions.
//!
//! * Test I: among respondents who answer "Yes" directly, the treated-minus-
//!   control difference in item counts should equal 1.
//! * Test II: the direct answer should not depend on the list treatment.
//!
//! Plus Fisher's method for combining per-question p-values and two-sample
//! differences between independent studies.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{CellSummary, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{Diagnostic, EstimateReport, Method};
use crate::numeric::{chi_square_sf, std_normal_cdf, Probability};
use crate::simulation::SeedStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceboTest {
    #[serde(rename = "test_i")]
    TestI,
    #[serde(rename = "test_ii")]
    TestII,
    CrossStudy,
}

impl PlaceboTest {
    pub fn label(self) -> &'static str {
        match self {
            PlaceboTest::TestI => "Placebo Test I",
            PlaceboTest::TestII => "Placebo Test II",
            PlaceboTest::CrossStudy => "Study difference",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlaceboTest::TestI => "test_i",
            PlaceboTest::TestII => "test_ii",
            PlaceboTest::CrossStudy => "cross_study",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboReport {
    pub test: PlaceboTest,
    /// Estimated beta, delta, or study difference.
    pub statistic: f64,
    pub std_error: f64,
    pub p_value: Probability,
    pub n_used: usize,
    pub null_value: f64,
    /// Sizes of the two compared groups (treated / control, or study A / B).
    pub group_sizes: [usize; 2],
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

impl PlaceboReport {
    pub fn with_question(mut self, question: impl Into<String>) -> Self {
        self.question = Some(question.into());
        self
    }

    pub fn rejects(&self, alpha: Probability) -> bool {
        self.p_value.get() < alpha.get()
    }
}

/// Two-sided normal p-value `2 * Phi(-|statistic - null| / se)`.
///
/// Exactly 1 at the null; never exactly 0 (floored at the smallest normal
/// double, with the returned flag set).
pub fn two_sided_p(statistic: f64, null_value: f64, std_error: f64) -> (Probability, bool) {
    let gap = (statistic - null_value).abs();
    if gap == 0.0 {
        return (Probability::ONE, false);
    }
    let raw = if std_error > 0.0 {
        2.0 * std_normal_cdf(-gap / std_error)
    } else {
        0.0
    };
    if raw < f64::MIN_POSITIVE {
        (Probability::saturating(f64::MIN_POSITIVE), true)
    } else {
        (Probability::saturating(raw), false)
    }
}

fn report(
    test: PlaceboTest,
    statistic: f64,
    std_error: f64,
    null_value: f64,
    n_used: usize,
    group_sizes: [usize; 2],
) -> PlaceboReport {
    let (p_value, floored) = two_sided_p(statistic, null_value, std_error);
    PlaceboReport {
        test,
        statistic,
        std_error,
        p_value,
        n_used,
        null_value,
        group_sizes,
        diagnostics: if floored { vec![Diagnostic::PValueFloored] } else { Vec::new() },
        method: None,
        question: None,
    }
}

/// Placebo Test I: `beta_hat = V_bar[1,1] - V_bar[0,1]` against 1.
pub fn placebo_test_one(cells: &CellSummary) -> Result<PlaceboReport> {
    let (c1, c0) = (cells.cell(1, 1), cells.cell(0, 1));
    for (z, c) in [(1u8, c1), (0u8, c0)] {
        if c.count < 2 {
            return Err(Error::InsufficientConfessors { z, count: c.count });
        }
    }
    let (m1, v1, m0, v0) = (
        c1.mean.unwrap_or_default(),
        c1.variance.unwrap_or_default(),
        c0.mean.unwrap_or_default(),
        c0.variance.unwrap_or_default(),
    );
    let beta = m1 - m0;
    let se = (v1 / c1.count as f64 + v0 / c0.count as f64).sqrt();
    Ok(report(PlaceboTest::TestI, beta, se, 1.0, c1.count + c0.count, [c1.count, c0.count]))
}

/// Placebo Test II: `delta_hat = Y_bar|Z=1 - Y_bar|Z=0` against 0.
pub fn placebo_test_two(cells: &CellSummary) -> Result<PlaceboReport> {
    let (a1, a0) = (cells.arm_direct(1), cells.arm_direct(0));
    if a1.count < 2 || a0.count < 2 {
        return Err(Error::DegenerateCells(format!(
            "both arms need at least 2 records, have {} treated and {} control",
            a1.count, a0.count
        )));
    }
    let delta = a1.mean.unwrap_or_default() - a0.mean.unwrap_or_default();
    let se = (a1.variance.unwrap_or_default() / a1.count as f64 + a0.variance.unwrap_or_default() / a0.count as f64)
        .sqrt();
    Ok(report(PlaceboTest::TestII, delta, se, 0.0, cells.n, [a1.count, a0.count]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: Probability,
}

/// Fisher's method: `-2 sum ln p_i` against chi-square with `2k` df.
pub fn fisher_combine(p_values: &[f64]) -> Result<FisherResult> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut statistic = 0.0;
    for (i, &p) in p_values.iter().enumerate() {
        if p == 0.0 {
            return Err(Error::ZeroPValue(i));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::OutOfDomain(format!("p-value {p} at position {i} is outside (0, 1]")));
        }
        statistic -= 2.0 * p.ln();
    }
    let df = 2 * p_values.len() as u32;
    Ok(FisherResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df)?,
    })
}

/// Fisher combination across questions; questions whose test could not be
/// computed are dropped and listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSummary {
    pub combined: Option<FisherResult>,
    pub used: Vec<String>,
    pub dropped: Vec<String>,
}

pub fn fisher_across<'a>(results: impl IntoIterator<Item = (&'a str, &'a Result<PlaceboReport>)>) -> Result<FisherSummary> {
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    let mut ps = Vec::new();
    for (question, r) in results {
        match r {
            Ok(r) => {
                used.push(question.to_string());
                ps.push(r.p_value.get());
            }
            Err(_) => dropped.push(question.to_string()),
        }
    }
    let combined = if ps.is_empty() { None } else { Some(fisher_combine(&ps)?) };
    Ok(FisherSummary { combined, used, dropped })
}

/// Difference between two independent studies' estimates of the same
/// quantity by the same method.
pub fn cross_study_difference(a: &EstimateReport, b: &EstimateReport) -> Result<PlaceboReport> {
    if a.method != b.method {
        return Err(Error::MethodMismatch(format!(
            "{} vs {}",
            a.method.label(),
            b.method.label()
        )));
    }
    if let (Some(qa), Some(qb)) = (&a.question, &b.question) {
        if qa != qb {
            return Err(Error::MethodMismatch(format!("question {qa} vs {qb}")));
        }
    }
    let diff = a.estimate - b.estimate;
    let se = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
    let mut r = report(PlaceboTest::CrossStudy, diff, se, 0.0, a.n_used + b.n_used, [a.n_used, b.n_used]);
    r.method = Some(a.method);
    r.question = a.question.clone().or_else(|| b.question.clone());
    Ok(r)
}

/// Distributional variant of Test I: two-sample Kolmogorov-Smirnov distance
/// between control-arm confessor counts and treated-arm confessor counts
/// shifted down by one, with a label-permutation p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedKsReport {
    pub statistic: f64,
    pub p_value: Probability,
    pub permutations: u32,
    pub seed: u64,
    pub group_sizes: [usize; 2],
}

fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn shifted_ks_test(dataset: &Dataset, permutations: u32, seed: u64) -> Result<ShiftedKsReport> {
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for r in dataset.records().iter().filter(|r| r.y_direct == 1) {
        let v = f64::from(r.v_count);
        if r.z_treat == 1 {
            treated.push(v - 1.0);
        } else {
            control.push(v);
        }
    }
    for (z, c) in [(1u8, treated.len()), (0u8, control.len())] {
        if c < 2 {
            return Err(Error::InsufficientConfessors { z, count: c });
        }
    }
    if permutations == 0 {
        return Err(Error::InvalidParams("need at least one permutation".into()));
    }
    let observed = ks_distance(&treated, &control);
    let mut pooled: Vec<f64> = treated.iter().chain(&control).copied().collect();
    let split = treated.len();
    let mut rng = SeedStreams::new(seed).rng(0, 0);
    let mut at_least = 0u32;
    for _ in 0..permutations {
        pooled.shuffle(&mut rng);
        if ks_distance(&pooled[..split], &pooled[split..]) >= observed - 1e-12 {
            at_least += 1;
        }
    }
    Ok(ShiftedKsReport {
        statistic: observed,
        p_value: Probability::saturating(f64::from(at_least + 1) / f64::from(permutations + 1)),
        permutations,
        seed,
        group_sizes: [treated.len(), control.len()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ListDesign, Observation, Respondent};
    use proptest::prelude::*;

    fn obs(y: u8, z: u8, v: u32) -> Observation {
        Observation { y, z, v }
    }

    #[test]
    fn beta_equal_one_has_unit_p() {
        let cells = CellSummary::from_observations([obs(1, 1, 3), obs(1, 1, 2), obs(1, 0, 2), obs(1, 0, 1)]);
        let r = placebo_test_one(&cells).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert_eq!(r.p_value.get(), 1.0);
        assert_eq!(r.group_sizes, [2, 2]);
    }

    #[test]
    fn printed_placebo_one_rows() {
        // (beta_hat, SE, printed p)
        for (beta, se, printed) in [(1.054, 0.095, 0.568), (0.790, 0.091, 0.021)] {
            let (p, _) = two_sided_p(beta, 1.0, se);
            assert!((p.get() - printed).abs() < 0.005, "{beta}/{se}: {}", p.get());
        }
        let (p, _) = two_sided_p(1.054, 1.0, 0.095);
        assert!((p.get() - 0.570).abs() < 1e-3);
    }

    #[test]
    fn printed_placebo_two_rows() {
        let (p, _) = two_sided_p(0.132, 0.0, 0.044);
        assert!((p.get() - 0.0027).abs() < 1e-4);
        assert!(p.get() < 0.05);
        let (p, _) = two_sided_p(-0.086, 0.0, 0.043);
        assert!((p.get() - 0.0455).abs() < 1e-3);
    }

    #[test]
    fn test_one_needs_two_confessors_per_arm() {
        let cells = CellSummary::from_observations([obs(1, 1, 3), obs(1, 0, 2), obs(1, 0, 1)]);
        assert_eq!(
            placebo_test_one(&cells),
            Err(Error::InsufficientConfessors { z: 1, count: 1 })
        );
    }

    #[test]
    fn test_two_identical_arms() {
        let o: Vec<_> = [(0, 0), (1, 0), (0, 1), (1, 1)].iter().cycle().take(12).map(|&(y, z)| obs(y, z, 0)).collect();
        let r = placebo_test_two(&CellSummary::from_observations(o)).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value.get(), 1.0);
        assert!(placebo_test_two(&CellSummary::from_observations([obs(0, 0, 0), obs(1, 0, 0), obs(1, 1, 0)])).is_err());
    }

    #[test]
    fn zero_se_p_value_is_floored() {
        let (p, floored) = two_sided_p(1.0, 0.0, 0.0);
        assert!(floored);
        assert!(p.get() > 0.0);
        let (p, floored) = two_sided_p(50.0, 0.0, 1.0);
        assert!(floored && p.get() > 0.0);
    }

    #[test]
    fn fisher_examples() {
        let r = fisher_combine(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value.get(), 1.0);
        for &p in &[0.5, 0.05, 0.001, 0.9] {
            assert!((fisher_combine(&[p]).unwrap().p_value.get() - p).abs() < 1e-9);
        }
        // Frozen from scipy.stats.chi2.sf and mpmath (df = 10).
        let r = fisher_combine(&[0.018, 0.034, 0.008, 0.987, 0.087]).unwrap();
        assert!((r.statistic - 29.364_048_825_260_91).abs() < 1e-9);
        assert!((r.p_value.get() - 0.001_087_639_867_228_244).abs() < 1e-10);
        assert_eq!(r.df, 10);
        assert_eq!(fisher_combine(&[0.5, 0.0]), Err(Error::ZeroPValue(1)));
        assert_eq!(fisher_combine(&[]), Err(Error::EmptyInput));
        assert!(fisher_combine(&[1.5]).is_err());
    }

    #[test]
    fn fisher_across_drops_failed_questions() {
        let ok = Ok(report(PlaceboTest::TestI, 0.9, 0.1, 1.0, 10, [5, 5]));
        let bad = Err(Error::InsufficientConfessors { z: 0, count: 1 });
        let s = fisher_across([("a", &ok), ("b", &bad)]).unwrap();
        assert_eq!(s.used, vec!["a"]);
        assert_eq!(s.dropped, vec!["b"]);
        assert!(s.combined.is_some());
    }

    fn est(method: Method, estimate: f64, se: f64) -> EstimateReport {
        EstimateReport {
            method,
            estimate,
            std_error: se,
            ci_low: estimate,
            ci_high: estimate,
            alpha: 0.05,
            n_used: 500,
            diagnostics: vec![],
            question: Some("nuclear".into()),
            study: None,
        }
    }

    #[test]
    fn cross_study_examples() {
        let a = est(Method::Direct, 0.656, 0.021);
        let r = cross_study_difference(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value.get(), 1.0);

        let r = cross_study_difference(&a, &est(Method::Direct, 0.603, 0.022)).unwrap();
        assert_eq!(format!("{:.3}", r.statistic), "0.053");
        assert_eq!(format!("{:.3}", r.std_error), "0.030");

        let r = cross_study_difference(
            &est(Method::StandardList, 0.338, 0.105),
            &est(Method::StandardList, 0.645, 0.101),
        )
        .unwrap();
        assert_eq!(format!("{:.3}", r.statistic), "-0.307");
        assert_eq!(format!("{:.3}", r.std_error), "0.146");

        assert!(matches!(
            cross_study_difference(&a, &est(Method::CombinedList, 0.6, 0.05)),
            Err(Error::MethodMismatch(_))
        ));
    }

    #[test]
    fn ks_distance_basics() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_distance(&[0.0, 0.0], &[5.0, 5.0]), 1.0);
    }

    #[test]
    fn shifted_ks_accepts_exact_shift_and_rejects_no_shift() {
        let mut recs = Vec::new();
        for i in 0..60u32 {
            let base = i % 4;
            recs.push(Respondent { id: format!("t{i}"), y_direct: 1, z_treat: 1, v_count: base + 1, study: None });
            recs.push(Respondent { id: format!("c{i}"), y_direct: 1, z_treat: 0, v_count: base, study: None });
        }
        let ds = Dataset::from_respondents(recs.clone(), ListDesign::with_items(4).unwrap(), "q").unwrap();
        let r = shifted_ks_test(&ds, 199, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value.get(), 1.0);

        for r in recs.iter_mut().filter(|r| r.z_treat == 1) {
            r.v_count -= 1;
        }
        let ds = Dataset::from_respondents(recs, ListDesign::with_items(4).unwrap(), "q").unwrap();
        let r = shifted_ks_test(&ds, 199, 1).unwrap();
        assert!(r.p_value.get() < 0.05);
    }

    proptest! {
        #[test]
        fn placebo_one_p_symmetric(eps in 0.0f64..3.0, se in 0.001f64..2.0) {
            let (a, _) = two_sided_p(1.0 + eps, 1.0, se);
            let (b, _) = two_sided_p(1.0 - eps, 1.0, se);
            prop_assert!((a.get() - b.get()).abs() < 1e-12);
        }

        #[test]
        fn fisher_order_invariant(ps in prop::collection::vec(0.0001f64..1.0, 1..8), rot in 0usize..8) {
            let mut q = ps.clone();
            q.reverse();
            let len = q.len();
            q.rotate_left(rot % len);
            let a = fisher_combine(&ps).unwrap();
            let b = fisher_combine(&q).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() < 1e-9);
            prop_assert!((a.p_value.get() - b.p_value.get()).abs() < 1e-9);
        }
    }
}
