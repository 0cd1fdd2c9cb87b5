//! End-to-end statistical checks of the estimators, placebo tests and
//! simulator. The acceptance test suite runs them at [`Scale::Full`]; the
//! `selftest` subcommand runs them at [`Scale::Reduced`], where replicate
//! counts shrink by roughly a factor of four to five and Monte Carlo
//! tolerances widen to keep the false-failure rate comparable.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{CellSummary, Observation};
use crate::error::Result;
use crate::estimators::{
    asymptotic_variance_combined, asymptotic_variance_standard, combined_estimate, combined_estimate_with,
    combined_variance, standard_list_estimate, variance_reduction, EstimateReport, Method, VarianceForm,
};
use crate::numeric::{two_prop_power, PowerOptions, Probability};
use crate::placebo::{cross_study_difference, two_sided_p};
use crate::simulation::experiments::run_replicates;
use crate::simulation::{
    coverage_experiment, efficiency_experiment, generate_dataset, identification_oracle, power_test_one_grid,
    power_test_two, DgpParams, GridAxis, GridSpec, PowerMode, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Reduced,
}

impl Scale {
    fn pick<T>(self, full: T, reduced: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Reduced => reduced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_secs: f64,
}

impl CriterionOutcome {
    /// `[PASS] 7 power at the 80% design point: ...`
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed_secs
        )
    }
}

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "identification"),
    (2, "consistency"),
    (3, "coverage"),
    (4, "variance formula"),
    (5, "efficiency"),
    (6, "placebo test I null calibration"),
    (7, "placebo test I power at 20% false confessors"),
    (8, "control-list variability lowers power"),
    (9, "placebo test II analytic vs simulated power"),
    (10, "printed-table arithmetic"),
    (11, "false-confessor bias"),
    (12, "reduction identity"),
];

fn alpha05() -> Probability {
    Probability::saturating(0.05)
}

fn base_params(n: usize) -> Result<DgpParams> {
    DgpParams::new(0.3, 0.5, n)
}

/// Runs one criterion and times it. `budget` is the runtime limit at full
/// scale; exceeding it fails the criterion.
pub fn run_criterion(id: u8, scale: Scale, seed: u64) -> CriterionOutcome {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map_or("unknown criterion", |(_, n)| n);
    let start = Instant::now();
    let (result, budget) = match id {
        1 => (identification(), Some(1.0)),
        2 => (consistency(scale, seed), Some(30.0)),
        3 => (coverage(scale, seed), Some(60.0)),
        4 => (variance_formula(scale, seed), Some(60.0)),
        5 => (efficiency(scale, seed), Some(90.0)),
        6 => (null_calibration(scale, seed), Some(60.0)),
        7 => (power_point(scale, seed), Some(30.0)),
        8 => (variability_effect(scale, seed), None),
        9 => (test_two_power(scale, seed), None),
        10 => (printed_arithmetic(), None),
        11 => (false_confessor_bias(seed), None),
        12 => (reduction_identity(seed), None),
        _ => (Err(crate::Error::InvalidParams(format!("no criterion {id}"))), None),
    };
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match result {
        Ok(c) => c,
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(limit) = budget {
        if elapsed > Duration::from_secs_f64(limit) {
            passed = false;
            detail.push_str(&format!("; exceeded {limit} s budget"));
        }
    }
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed_secs: elapsed.as_secs_f64(),
    }
}

pub fn run_all(scale: Scale, seed: u64) -> Vec<CriterionOutcome> {
    CRITERIA.iter().map(|(id, _)| run_criterion(*id, scale, seed)).collect()
}

type Check = Result<(bool, String)>;

fn identification() -> Check {
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for &mu in &grid {
        for &p in &grid {
            for &w in &[0.1, 0.4, 0.7] {
                let params = DgpParams::new(mu, p, 1)?.with_list(4, w)?;
                worst = worst.max((identification_oracle(&params)? - mu).abs());
                points += 1;
            }
        }
    }
    Ok((worst <= 1e-12, format!("{points} points, max |oracle - mu| = {worst:.2e}")))
}

fn consistency(scale: Scale, seed: u64) -> Check {
    let reps = scale.pick(500, 100);
    let needed = scale.pick(0.99, 0.98);
    let n = 10_000;
    let params = base_params(n)?;
    let se = (asymptotic_variance_combined(&params)? / n as f64).sqrt();
    let mu = params.mu.get();
    let hits = run_replicates(&params, reps, seed, 2, |cells| {
        combined_estimate(cells, alpha05()).is_ok_and(|r| (r.estimate - mu).abs() <= 3.0 * se)
    })?;
    let share = hits.iter().filter(|h| **h).count() as f64 / f64::from(reps);
    Ok((share >= needed, format!("{:.1}% of {reps} within 3 SE (need {:.0}%)", 100.0 * share, 100.0 * needed)))
}

fn coverage(scale: Scale, seed: u64) -> Check {
    let reps = scale.pick(2_000, 500);
    let (lo, hi) = scale.pick((0.93, 0.97), (0.92, 0.98));
    let out = coverage_experiment(&base_params(2_000)?, reps, alpha05(), seed)?;
    let c = out.coverage.get();
    Ok((
        (lo..=hi).contains(&c),
        format!("coverage {c:.4} over {reps} replicates (band [{lo}, {hi}])"),
    ))
}

fn variance_formula(scale: Scale, seed: u64) -> Check {
    let reps = scale.pick(1_000, 250);
    let n = 10_000;
    let params = base_params(n)?;
    let target = asymptotic_variance_combined(&params)?;
    let scaled = run_replicates(&params, reps, seed, 4, |cells| {
        combined_variance(cells, VarianceForm::GammaHat).ok().map(|v| v * n as f64)
    })?;
    let ok: Vec<f64> = scaled.into_iter().flatten().collect();
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    let rel = (mean - target).abs() / target;
    Ok((
        rel <= 0.05 && ok.len() == reps as usize,
        format!("mean n*Var = {mean:.4} vs asymptotic {target:.4} ({:.2}% off)", 100.0 * rel),
    ))
}

fn efficiency(scale: Scale, seed: u64) -> Check {
    let mut violations = 0;
    for i in 0..10 {
        for k in 0..10 {
            let mu = 0.05 + 0.1 * f64::from(i);
            let p = 0.1 + 0.1 * f64::from(k);
            let params = DgpParams::new(mu, p, 1)?;
            if !(asymptotic_variance_standard(&params)? > asymptotic_variance_combined(&params)?) {
                violations += 1;
            }
        }
    }
    let reps = scale.pick(2_000, 500);
    let tol = scale.pick(0.10, 0.20);
    let out = efficiency_experiment(&DgpParams::new(0.5, 0.9, 10_000)?, reps, seed)?;
    let rel = (out.empirical_ratio - out.analytic_ratio).abs() / out.analytic_ratio;
    Ok((
        violations == 0 && rel <= tol,
        format!(
            "{violations} ordering violations on 100 points; empirical ratio {:.4} vs analytic {:.4} ({:.1}% off)",
            out.empirical_ratio,
            out.analytic_ratio,
            100.0 * rel
        ),
    ))
}

fn share_cell(n_yes: usize, kind: Violation, share: f64, w_success: f64) -> GridSpec {
    GridSpec::single(
        n_yes,
        GridAxis::ViolationShare {
            kind,
            shares: vec![share],
            w_success,
        },
    )
}

fn null_calibration(scale: Scale, seed: u64) -> Check {
    let reps = scale.pick(5_000, 1_000);
    let tol = scale.pick(0.02, 0.03);
    let grid = share_cell(400, Violation::FalseConfessor, 0.0, 0.4);
    let rate = power_test_one_grid(&grid, reps, alpha05(), seed)?[0].power.get();
    Ok((
        (rate - 0.05).abs() <= tol,
        format!("rejection rate {rate:.4} over {reps} replicates (target 0.05 +/- {tol})"),
    ))
}

fn power_point(scale: Scale, seed: u64) -> Check {
    let reps = scale.pick(1_000, 250);
    let tol = scale.pick(0.05, 0.08);
    let grid = share_cell(800, Violation::FalseConfessor, 0.20, 0.4);
    let power = power_test_one_grid(&grid, reps, alpha05(), seed)?[0].power.get();
    Ok((
        (power - 0.80).abs() <= tol,
        format!("power {power:.4} over {reps} replicates (target 0.80 +/- {tol})"),
    ))
}

fn variability_effect(scale: Scale, seed: u64) -> Check {
    let reps = scale.pick(1_000, 250);
    let grid = GridSpec::single(
        800,
        GridAxis::WSuccess {
            values: vec![0.1, 0.5],
            false_confessor_share: 0.20,
        },
    );
    let cells = power_test_one_grid(&grid, reps, alpha05(), seed)?;
    let (low, high) = (cells[0].power.get(), cells[1].power.get());
    Ok((
        low - high >= 0.05,
        format!("power {low:.4} at w = 0.1 vs {high:.4} at w = 0.5"),
    ))
}

fn test_two_power(scale: Scale, seed: u64) -> Check {
    let reps = scale.pick(10_000, 2_000);
    let tol = scale.pick(0.03, 0.04);
    let (p1, p0) = (Probability::saturating(0.6), Probability::saturating(0.5));
    let analytic = two_prop_power(p1, p0, 500, 500, alpha05())?.get();
    let simulated = power_test_two(
        p1,
        p0,
        500,
        500,
        alpha05(),
        PowerMode::Simulated { replicates: reps, seed },
        PowerOptions::default(),
    )?
    .get();
    Ok((
        (analytic - simulated).abs() <= tol,
        format!("analytic {analytic:.4} vs simulated {simulated:.4} over {reps} replicates"),
    ))
}

/// Published placebo rows: (beta, SE, printed p).
const PRINTED_PLACEBO: [(f64, f64, f64); 5] = [
    (1.054, 0.095, 0.568),
    (0.790, 0.091, 0.021),
    (0.848, 0.279, 0.585),
    (1.008, 0.237, 0.973),
    (0.696, 0.143, 0.034),
];

/// Published standard and combined SEs with the printed % reduction.
const PRINTED_REDUCTIONS: [(f64, f64, f64); 5] = [
    (0.084, 0.049, 66.8),
    (0.072, 0.049, 54.0),
    (0.079, 0.074, 14.0),
    (0.081, 0.074, 15.4),
    (0.105, 0.070, 55.3),
];

fn printed_report(method: Method, estimate: f64, se: f64) -> EstimateReport {
    EstimateReport {
        method,
        estimate,
        std_error: se,
        ci_low: estimate,
        ci_high: estimate,
        alpha: 0.05,
        n_used: 0,
        diagnostics: Vec::new(),
        question: None,
        study: None,
    }
}

fn printed_arithmetic() -> Check {
    let worst_p = PRINTED_PLACEBO
        .iter()
        .map(|&(b, se, printed)| (two_sided_p(b, 1.0, se).0.get() - printed).abs())
        .fold(0.0, f64::max);
    let mut worst_red: f64 = 0.0;
    for &(s, c, printed) in &PRINTED_REDUCTIONS {
        worst_red = worst_red.max((100.0 * variance_reduction(s, c)? - printed).abs());
    }
    let diff = cross_study_difference(
        &printed_report(Method::Direct, 0.656, 0.021),
        &printed_report(Method::Direct, 0.603, 0.022),
    )?;
    let (d, se) = (format!("{:.3}", diff.statistic), format!("{:.3}", diff.std_error));
    let passed = worst_p <= 0.005 && worst_red <= 2.0 && d == "0.053" && se == "0.030";
    Ok((
        passed,
        format!("max p gap {worst_p:.4}; max reduction gap {worst_red:.2} pp; study difference {d} (SE {se})"),
    ))
}

fn false_confessor_bias(seed: u64) -> Check {
    let params = base_params(200_000)?.with_violation(Violation::FalseConfessor, 0.20)?;
    let inflated = identification_oracle(&params)?;
    let ds = generate_dataset(&params, seed)?;
    let r = combined_estimate(&CellSummary::from_observations(ds.observations()), alpha05())?;
    let mu = params.mu.get();
    let above = (r.estimate - mu) / r.std_error;
    let off = (r.estimate - inflated).abs() / r.std_error;
    Ok((
        above >= 3.0 && off <= 3.0,
        format!(
            "estimate {:.4} (SE {:.4}): {above:.1} SE above mu = {mu}, {off:.2} SE from oracle {inflated:.4}",
            r.estimate, r.std_error
        ),
    ))
}

/// Datasets with nobody answering "Yes", 4 to 40 respondents, at least two
/// per arm.
pub fn random_no_confessor_cells(rng: &mut impl Rng) -> CellSummary {
    let j = rng.random_range(1..=6u32);
    let n = rng.random_range(4..=40usize);
    let obs = (0..n).map(|i| {
        // The first four rows guarantee two per arm.
        let z = if i < 4 { (i % 2) as u8 } else { u8::from(rng.random_bool(0.5)) };
        Observation {
            y: 0,
            z,
            v: rng.random_range(0..=j + u32::from(z)),
        }
    });
    CellSummary::from_observations(obs.collect::<Vec<_>>())
}

fn reduction_identity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..100 {
        let cells = random_no_confessor_cells(&mut rng);
        let s = standard_list_estimate(&cells, alpha05())?;
        for form in [VarianceForm::GammaHat, VarianceForm::CellCounts] {
            let c = combined_estimate_with(&cells, alpha05(), form)?;
            if c.estimate != s.estimate || c.std_error != s.std_error {
                mismatches += 1;
            }
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches over 100 datasets and both variance forms")))
}
