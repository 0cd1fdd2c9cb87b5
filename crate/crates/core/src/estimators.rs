//! Prevalence estimators: the direct-question mean, the standard
//! difference-in-means list estimator, and the combined estimator
//!
//! ```text
//! mu_hat = Y_bar + (1 - Y_bar) * (V_bar[1,0] - V_bar[0,0])
//! ```
//!
//! which uses the list experiment only among respondents who answered "No"
//! to the direct question.
//!
//! Standard errors are on the finite-sample scale: the combined variance
//! estimator is the plug-in asymptotic variance divided by `n`, so the Wald
//! interval `mu_hat +/- z * se` is dimensionally correct. Wherever the plug-in
//! needs `mu * p` (the share of truthful confessors) we use `Y_bar`, which is
//! what the estimator's own logic implies and avoids dividing by `mu_hat`.
//!
//! Estimates are never truncated to `[0, 1]`; out-of-range values and
//! intervals are reported through [`Diagnostic`] flags.

use serde::{Deserialize, Serialize};

use crate::data::CellSummary;
use crate::error::{Error, Result};
use crate::numeric::{two_sided_critical, Probability};
use crate::simulation::{moments::PopulationMoments, DgpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    StandardList,
    CombinedList,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::StandardList, Method::CombinedList];

    /// Machine-readable name, as used in JSON and CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::StandardList => "standard_list",
            Method::CombinedList => "combined_list",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Direct => "Direct",
            Method::StandardList => "Standard List",
            Method::CombinedList => "Combined List",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    /// Point estimate lies outside `[0, 1]`.
    EstimateOutsideUnitInterval,
    /// At least one confidence bound lies outside `[0, 1]`.
    CiOutsideUnitInterval,
    /// A cell needed by the estimator is empty or too small; the reported
    /// value is a boundary convention rather than a sample estimate.
    DegenerateCell,
    /// The direct-question mean is exactly 0 or 1.
    DirectAtBoundary,
    /// A p-value underflowed and was floored at the smallest normal double.
    PValueFloored,
    /// Fewer observations than the asymptotic approximations assume.
    SmallSample,
}

/// Which denominators the combined variance estimator uses for the two
/// `Y = 0` cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceForm {
    /// `(1 - Y_bar) * [s2_10 / gamma_hat + s2_00 / (1 - gamma_hat)] / n`.
    #[default]
    GammaHat,
    /// `(1 - Y_bar)^2 * [s2_10 / n_10 + s2_00 / n_00]`.
    CellCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub n_used: usize,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
}

impl EstimateReport {
    fn build(
        method: Method,
        estimate: f64,
        std_error: f64,
        alpha: Probability,
        n_used: usize,
        mut diagnostics: Vec<Diagnostic>,
    ) -> Result<Self> {
        let (ci_low, ci_high) = wald_ci(estimate, std_error, alpha)?;
        if !(0.0..=1.0).contains(&estimate) {
            diagnostics.push(Diagnostic::EstimateOutsideUnitInterval);
        }
        if ci_low < 0.0 || ci_high > 1.0 {
            diagnostics.push(Diagnostic::CiOutsideUnitInterval);
        }
        diagnostics.sort();
        diagnostics.dedup();
        Ok(EstimateReport {
            method,
            estimate,
            std_error,
            ci_low,
            ci_high,
            alpha: alpha.get(),
            n_used,
            diagnostics,
            question: None,
            study: None,
        })
    }

    pub fn with_labels(mut self, question: Option<String>, study: Option<String>) -> Self {
        self.question = question;
        self.study = study;
        self
    }

    pub fn has(&self, d: Diagnostic) -> bool {
        self.diagnostics.contains(&d)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Symmetric Wald interval `estimate +/- z_{1 - alpha/2} * std_error`.
pub fn wald_ci(estimate: f64, std_error: f64, alpha: Probability) -> Result<(f64, f64)> {
    if std_error.is_nan() || std_error < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "standard error must be non-negative, got {std_error}"
        )));
    }
    let half = two_sided_critical(alpha)? * std_error;
    Ok((estimate - half, estimate + half))
}

pub fn direct_estimate(cells: &CellSummary, alpha: Probability) -> Result<EstimateReport> {
    if cells.n < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: cells.n,
        });
    }
    let y = cells.y_bar;
    let se = (y * (1.0 - y) / cells.n as f64).sqrt();
    let mut diags = Vec::new();
    if y == 0.0 || y == 1.0 {
        diags.push(Diagnostic::DirectAtBoundary);
    }
    EstimateReport::build(Method::Direct, y, se, alpha, cells.n, diags)
}

fn arm_moments(cells: &CellSummary, z: u8) -> Result<(f64, f64, usize)> {
    let arm = cells.arm(z);
    match (arm.mean, arm.variance) {
        (Some(mean), Some(var)) => Ok((mean, var, arm.count)),
        _ => Err(Error::DegenerateCells(format!(
            "treatment arm z={z} has {} records, need at least 2",
            arm.count
        ))),
    }
}

/// Difference in mean item counts between the treatment and control lists.
pub fn standard_list_estimate(cells: &CellSummary, alpha: Probability) -> Result<EstimateReport> {
    let (mean1, var1, m) = arm_moments(cells, 1)?;
    let (mean0, var0, n0) = arm_moments(cells, 0)?;
    let estimate = mean1 - mean0;
    let se = (var1 / m as f64 + var0 / n0 as f64).sqrt();
    EstimateReport::build(Method::StandardList, estimate, se, alpha, cells.n, Vec::new())
}

struct NonConfessorCells {
    mean1: f64,
    var1: f64,
    n1: usize,
    mean0: f64,
    var0: f64,
    n0: usize,
}

fn non_confessor_cells(cells: &CellSummary) -> Result<NonConfessorCells> {
    let (c1, c0) = (cells.cell(1, 0), cells.cell(0, 0));
    match (c1.mean, c1.variance, c0.mean, c0.variance) {
        (Some(mean1), Some(var1), Some(mean0), Some(var0)) => Ok(NonConfessorCells {
            mean1,
            var1,
            n1: c1.count,
            mean0,
            var0,
            n0: c0.count,
        }),
        _ => Err(Error::DegenerateCells(format!(
            "cells (z=1, y=0) and (z=0, y=0) need at least 2 records each, have {} and {}",
            c1.count, c0.count
        ))),
    }
}

fn combined_point(cells: &CellSummary, nc: &NonConfessorCells) -> f64 {
    cells.y_bar + (1.0 - cells.y_bar) * (nc.mean1 - nc.mean0)
}

/// Plug-in variance of the combined estimator (finite-sample scale).
pub fn combined_variance(cells: &CellSummary, form: VarianceForm) -> Result<f64> {
    let nc = non_confessor_cells(cells)?;
    let mu_hat = combined_point(cells, &nc);
    let y = cells.y_bar;
    let n = cells.n as f64;
    let confessor_term = (1.0 - mu_hat).powi(2) * y / (1.0 - y) / n;
    let list_term = match form {
        // gamma_hat * n = m exactly, so dividing by m and n - m is the same
        // quantity as the gamma_hat form scaled by 1/n.
        VarianceForm::GammaHat => {
            let m = cells.m as f64;
            (1.0 - y) * (nc.var1 / m + nc.var0 / (n - m))
        }
        VarianceForm::CellCounts => {
            (1.0 - y).powi(2) * (nc.var1 / nc.n1 as f64 + nc.var0 / nc.n0 as f64)
        }
    };
    Ok(confessor_term + list_term)
}

pub fn combined_estimate(cells: &CellSummary, alpha: Probability) -> Result<EstimateReport> {
    combined_estimate_with(cells, alpha, VarianceForm::default())
}

pub fn combined_estimate_with(
    cells: &CellSummary,
    alpha: Probability,
    form: VarianceForm,
) -> Result<EstimateReport> {
    if cells.n > 0 && cells.y_bar == 1.0 {
        // Everyone confessed: both Y = 0 cells are empty.
        return EstimateReport::build(
            Method::CombinedList,
            1.0,
            0.0,
            alpha,
            cells.n,
            vec![Diagnostic::DegenerateCell, Diagnostic::DirectAtBoundary],
        );
    }
    let nc = non_confessor_cells(cells)?;
    let estimate = combined_point(cells, &nc);
    let se = combined_variance(cells, form)?.sqrt();
    let mut diags = Vec::new();
    if cells.y_bar == 0.0 {
        diags.push(Diagnostic::DirectAtBoundary);
    }
    EstimateReport::build(Method::CombinedList, estimate, se, alpha, cells.n, diags)
}

/// `1 - se_combined^2 / se_standard^2`: the share of sampling variance removed
/// by the combined estimator.
pub fn variance_reduction(se_standard: f64, se_combined: f64) -> Result<f64> {
    if !(se_standard > 0.0) {
        return Err(Error::DivisionByZero("standard-list standard error is zero"));
    }
    Ok(1.0 - (se_combined * se_combined) / (se_standard * se_standard))
}

/// The three estimates for one question plus the variance reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionEstimates {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
    pub n: usize,
    pub direct: Option<EstimateReport>,
    pub standard: Option<EstimateReport>,
    pub combined: Option<EstimateReport>,
    pub variance_reduction: Option<f64>,
    /// Messages for estimators that could not be computed.
    pub errors: Vec<String>,
}

pub fn estimate_all(
    cells: &CellSummary,
    alpha: Probability,
    form: VarianceForm,
    question: &str,
    study: Option<&str>,
) -> QuestionEstimates {
    let label = |r: EstimateReport| r.with_labels(Some(question.to_string()), study.map(str::to_string));
    let mut errors = Vec::new();
    let mut keep = |method: Method, r: Result<EstimateReport>| match r {
        Ok(r) => Some(label(r)),
        Err(e) => {
            errors.push(format!("{}: {e}", method.label()));
            None
        }
    };
    let direct = keep(Method::Direct, direct_estimate(cells, alpha));
    let standard = keep(Method::StandardList, standard_list_estimate(cells, alpha));
    let combined = keep(Method::CombinedList, combined_estimate_with(cells, alpha, form));
    let variance_reduction = match (&standard, &combined) {
        (Some(s), Some(c)) => variance_reduction(s.std_error, c.std_error).ok(),
        _ => None,
    };
    QuestionEstimates {
        question: question.to_string(),
        study: study.map(str::to_string),
        n: cells.n,
        direct,
        standard,
        combined,
        variance_reduction,
        errors,
    }
}

/// Asymptotic variance `plim n Var[mu_hat]` from exact population moments.
///
/// `(1 - mu*)^2 * E[Y] / (1 - E[Y]) + (1 - E[Y]) * [Var(V|1,0)/gamma + Var(V|0,0)/(1-gamma)]`
/// where `mu*` is the combined estimand; under the identifying assumptions
/// `mu* = mu` and `E[Y] = mu * p`.
pub fn asymptotic_variance_combined(params: &DgpParams) -> Result<f64> {
    let pm = PopulationMoments::enumerate(params)?;
    let g = params.gamma.get();
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::DegenerateParams("treatment share must lie in (0, 1)".into()));
    }
    let ey = pm.prob_yes();
    if ey >= 1.0 {
        return Err(Error::DegenerateParams("nobody answers \"No\" to the direct question".into()));
    }
    let (v10, v00) = (pm.cell(1, 0).variance, pm.cell(0, 0).variance);
    if !(v10 > 0.0 && v00 > 0.0) {
        return Err(Error::DegenerateParams(
            "item count variance among non-confessors must be positive".into(),
        ));
    }
    let estimand = pm.combined_estimand();
    Ok((1.0 - estimand).powi(2) * ey / (1.0 - ey) + (1.0 - ey) * (v10 / g + v00 / (1.0 - g)))
}

/// Asymptotic variance `plim n Var[mu_hat_S]` of the difference-in-means
/// estimator, as the sum of within-cell variances and the between-cell
/// mean-shift terms in each arm.
pub fn asymptotic_variance_standard(params: &DgpParams) -> Result<f64> {
    let pm = PopulationMoments::enumerate(params)?;
    let g = params.gamma.get();
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::DegenerateParams("treatment share must lie in (0, 1)".into()));
    }
    let ey = pm.prob_yes();
    let mut total = 0.0;
    for (z, share) in [(1u8, g), (0u8, 1.0 - g)] {
        let arm_mean = pm.arm_mean(z);
        let mut arm_var = 0.0;
        for (y, weight) in [(0u8, 1.0 - ey), (1u8, ey)] {
            if weight == 0.0 {
                continue;
            }
            let c = pm.cell(z, y);
            arm_var += weight * (c.variance + (c.mean - arm_mean).powi(2));
        }
        if !(arm_var > 0.0) {
            return Err(Error::DegenerateParams(format!("item count variance in arm z={z} is zero")));
        }
        total += arm_var / share;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use proptest::prelude::*;

    fn alpha05() -> Probability {
        Probability::new(0.05).unwrap()
    }

    fn obs(y: u8, z: u8, v: u32) -> Observation {
        Observation { y, z, v }
    }

    /// Cells with n = 500 and Y_bar = k / 500.
    fn direct_only(yes: usize, n: usize) -> CellSummary {
        CellSummary::from_observations((0..n).map(|i| obs(u8::from(i < yes), (i % 2) as u8, 1)))
    }

    #[test]
    fn direct_examples() {
        let r = direct_estimate(&direct_only(328, 500), alpha05()).unwrap();
        assert!((r.estimate - 0.656).abs() < 1e-12);
        assert!((r.std_error - 0.0212).abs() < 5e-5);
        assert!((r.std_error - 0.021).abs() < 5e-4);

        let r = direct_estimate(&direct_only(0, 500), alpha05()).unwrap();
        assert_eq!(r.std_error, 0.0);
        assert_eq!((r.ci_low, r.ci_high), (0.0, 0.0));
        assert!(r.has(Diagnostic::DirectAtBoundary));

        // 53 / 514 = 0.1031
        let r = direct_estimate(&direct_only(53, 514), alpha05()).unwrap();
        assert!((r.estimate - 0.103).abs() < 5e-4);
        assert!((r.std_error - 0.0134).abs() < 5e-5);

        assert!(direct_estimate(&direct_only(1, 1), alpha05()).is_err());
    }

    #[test]
    fn standard_examples() {
        let cells = CellSummary::from_observations([
            obs(0, 1, 2),
            obs(1, 1, 3),
            obs(0, 0, 1),
            obs(1, 0, 2),
        ]);
        let r = standard_list_estimate(&cells, alpha05()).unwrap();
        assert_eq!(r.estimate, 1.0);
        // Arms are not constant here; make them constant for the SE = 0 case.
        let cells = CellSummary::from_observations([
            obs(0, 1, 2),
            obs(0, 1, 2),
            obs(0, 0, 1),
            obs(0, 0, 1),
        ]);
        let r = standard_list_estimate(&cells, alpha05()).unwrap();
        assert_eq!((r.estimate, r.std_error), (1.0, 0.0));

        let same: Vec<_> = (0..20).flat_map(|v| [obs(0, 0, v % 5), obs(0, 1, v % 5)]).collect();
        let r = standard_list_estimate(&CellSummary::from_observations(same), alpha05()).unwrap();
        assert_eq!(r.estimate, 0.0);

        let cells = CellSummary::from_observations([obs(0, 1, 2), obs(0, 0, 1), obs(0, 0, 1)]);
        assert!(matches!(
            standard_list_estimate(&cells, alpha05()),
            Err(Error::DegenerateCells(_))
        ));
    }

    #[test]
    fn combined_hand_arithmetic() {
        // Y_bar = 0.5, V[1,0] = 2.0, V[0,0] = 1.6.
        let mut o = vec![];
        for v in [1, 3, 2, 2] {
            o.push(obs(0, 1, v));
        }
        for v in [1, 2, 2, 1, 2] {
            o.push(obs(0, 0, v));
        }
        for _ in 0..9 {
            o.push(obs(1, 1, 3));
        }
        let cells = CellSummary::from_observations(o);
        assert_eq!(cells.y_bar, 0.5);
        let r = combined_estimate(&cells, alpha05()).unwrap();
        assert!((r.estimate - 0.7).abs() < 1e-12);

        // Variance by hand: mu_hat = 0.7, n = 18, m = 13.
        let s10 = 2.0 / 3.0;
        let s00 = 0.3;
        let expected = 0.09 * 0.5 / 0.5 / 18.0 + 0.5 * (s10 / 13.0 + s00 / 5.0);
        let v = combined_variance(&cells, VarianceForm::GammaHat).unwrap();
        assert!((v - expected).abs() < 1e-12);
        let v_cells = combined_variance(&cells, VarianceForm::CellCounts).unwrap();
        let expected_cells = 0.09 * 0.5 / 0.5 / 18.0 + 0.25 * (s10 / 4.0 + s00 / 5.0);
        assert!((v_cells - expected_cells).abs() < 1e-12);
    }

    #[test]
    fn combined_all_confess() {
        let cells = CellSummary::from_observations((0..10).map(|i| obs(1, (i % 2) as u8, 2)));
        let r = combined_estimate(&cells, alpha05()).unwrap();
        assert_eq!((r.estimate, r.std_error), (1.0, 0.0));
        assert!(r.has(Diagnostic::DegenerateCell));
    }

    #[test]
    fn combined_requires_non_confessor_cells() {
        let cells = CellSummary::from_observations([obs(0, 1, 1), obs(0, 0, 1), obs(0, 0, 2), obs(1, 1, 2)]);
        assert!(matches!(combined_estimate(&cells, alpha05()), Err(Error::DegenerateCells(_))));
    }

    #[test]
    fn combined_variance_zero_for_constant_cells() {
        let cells = CellSummary::from_observations(
            (0..6).map(|_| obs(0, 1, 3)).chain((0..6).map(|_| obs(0, 0, 2))),
        );
        assert_eq!(combined_variance(&cells, VarianceForm::GammaHat).unwrap(), 0.0);
    }

    #[test]
    fn wald_examples() {
        assert_eq!(wald_ci(0.5, 0.0, alpha05()).unwrap(), (0.5, 0.5));
        let (lo, hi) = wald_ci(0.666, 0.049, alpha05()).unwrap();
        assert!((lo - 0.570).abs() < 5e-4 && (hi - 0.762).abs() < 5e-4);
        assert!(wald_ci(0.5, -1.0, alpha05()).is_err());
    }

    #[test]
    fn ci_crossing_zero_is_flagged_not_truncated() {
        let r = EstimateReport::build(Method::CombinedList, 0.042, 0.074, alpha05(), 500, vec![]).unwrap();
        assert!(r.ci_low < 0.0);
        assert!(r.has(Diagnostic::CiOutsideUnitInterval));
        assert!(!r.has(Diagnostic::EstimateOutsideUnitInterval));
    }

    #[test]
    fn variance_reduction_examples() {
        assert_eq!(variance_reduction(0.05, 0.05).unwrap(), 0.0);
        assert!((variance_reduction(0.084, 0.049).unwrap() - 0.660).abs() < 1e-3);
        assert!((variance_reduction(0.073, 0.049).unwrap() - 0.549).abs() < 1e-3);
        assert!(matches!(variance_reduction(0.0, 0.1), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn estimate_all_collects_errors() {
        let cells = CellSummary::from_observations([obs(0, 1, 1), obs(0, 0, 1), obs(1, 0, 1)]);
        let q = estimate_all(&cells, alpha05(), VarianceForm::GammaHat, "q1", None);
        assert!(q.direct.is_some());
        assert!(q.standard.is_none());
        assert!(q.combined.is_none());
        assert_eq!(q.errors.len(), 2);
        assert!(q.variance_reduction.is_none());
    }

    proptest! {
        #[test]
        fn no_confessors_reduces_to_standard(
            treated in prop::collection::vec(0u32..6, 2..40),
            control in prop::collection::vec(0u32..5, 2..40),
            interleave in any::<u64>(),
        ) {
            let mut o: Vec<Observation> = treated.iter().map(|&v| obs(0, 1, v))
                .chain(control.iter().map(|&v| obs(0, 0, v))).collect();
            let shift = (interleave % o.len() as u64) as usize;
            o.rotate_left(shift);
            let cells = CellSummary::from_observations(o);
            let s = standard_list_estimate(&cells, alpha05()).unwrap();
            for form in [VarianceForm::GammaHat, VarianceForm::CellCounts] {
                let c = combined_estimate_with(&cells, alpha05(), form).unwrap();
                prop_assert_eq!(c.estimate, s.estimate);
                prop_assert_eq!(c.std_error, s.std_error);
            }
        }

        #[test]
        fn ci_contains_estimate(est in -2.0f64..2.0, se in 0.0f64..3.0, a in 0.001f64..0.999) {
            let (lo, hi) = wald_ci(est, se, Probability::new(a).unwrap()).unwrap();
            prop_assert!(lo <= est && est <= hi);
            prop_assert!(((hi - est) - (est - lo)).abs() < 1e-12);
        }
    }
}
