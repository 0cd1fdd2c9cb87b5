//! Replicated estimator experiments: CI coverage and relative efficiency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CeilingEffect, DgpParams, SeedStreams, UnitSampler};
use crate::data::CellSummary;
use crate::error::{Error, Result};
use crate::estimators::{
    asymptotic_variance_combined, asymptotic_variance_standard, combined_estimate, standard_list_estimate,
};
use crate::numeric::Probability;

/// Below this sample size coverage is reported without any target.
pub const SMALL_SAMPLE_N: usize = 200;

/// Runs `f` on the cell summary of each replicate dataset, in replicate order.
/// Replicate `r` uses stream `(cell, r)` of `seed`.
pub fn run_replicates<T, F>(params: &DgpParams, replicates: u32, seed: u64, cell: u32, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&CellSummary) -> T + Sync,
{
    let sampler = UnitSampler::new(params, &CeilingEffect)?;
    let streams = SeedStreams::new(seed);
    Ok((0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = streams.rng(cell, rep);
            f(&sampler.cells(&mut rng))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOutcome {
    pub coverage: Probability,
    pub mean_ci_width: f64,
    pub replicates: u32,
    /// Replicates where the combined estimator could not be computed; they
    /// count as non-covering.
    pub failed_replicates: u32,
    pub small_sample: bool,
}

pub fn coverage_experiment(params: &DgpParams, replicates: u32, alpha: Probability, seed: u64) -> Result<CoverageOutcome> {
    if params.has_violations() {
        return Err(Error::InvalidParams("coverage is defined only without violations".into()));
    }
    if replicates == 0 {
        return Err(Error::InvalidParams("need at least one replicate".into()));
    }
    let mu = params.mu.get();
    let results = run_replicates(params, replicates, seed, 0, |cells| {
        combined_estimate(cells, alpha).ok().map(|r| (r.covers(mu), r.ci_high - r.ci_low))
    })?;
    let ok: Vec<(bool, f64)> = results.iter().flatten().copied().collect();
    let covered = ok.iter().filter(|(c, _)| *c).count();
    let mean_ci_width = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().map(|(_, w)| w).sum::<f64>() / ok.len() as f64
    };
    Ok(CoverageOutcome {
        coverage: Probability::saturating(covered as f64 / f64::from(replicates)),
        mean_ci_width,
        replicates,
        failed_replicates: replicates - ok.len() as u32,
        small_sample: params.n < SMALL_SAMPLE_N,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyOutcome {
    pub empirical_var_combined: f64,
    pub empirical_var_standard: f64,
    /// `empirical_var_combined / empirical_var_standard`.
    pub empirical_ratio: f64,
    /// Ratio of the two asymptotic variances.
    pub analytic_ratio: f64,
    pub replicates: u32,
    pub failed_replicates: u32,
}

impl EfficiencyOutcome {
    /// Share of the standard estimator's variance removed by the combined one.
    pub fn empirical_reduction(&self) -> f64 {
        1.0 - self.empirical_ratio
    }
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn efficiency_experiment(params: &DgpParams, replicates: u32, seed: u64) -> Result<EfficiencyOutcome> {
    if params.has_violations() {
        return Err(Error::InvalidParams("efficiency comparison needs a compliant population".into()));
    }
    if replicates < 2 {
        return Err(Error::InvalidParams("need at least two replicates".into()));
    }
    let g = params.gamma.get();
    let w = params.w_success.get();
    if !(g > 0.0 && g < 1.0 && w > 0.0 && w < 1.0) {
        return Err(Error::InvalidParams(
            "treatment share and control-list success probability must lie in (0, 1)".into(),
        ));
    }
    let analytic_ratio = asymptotic_variance_combined(params)? / asymptotic_variance_standard(params)?;
    let alpha = Probability::saturating(0.05);
    let results = run_replicates(params, replicates, seed, 0, |cells| {
        match (combined_estimate(cells, alpha), standard_list_estimate(cells, alpha)) {
            (Ok(c), Ok(s)) => Some((c.estimate, s.estimate)),
            _ => None,
        }
    })?;
    let (combined, standard): (Vec<f64>, Vec<f64>) = results.iter().flatten().copied().unzip();
    if combined.len() < 2 {
        return Err(Error::InvalidParams("fewer than two usable replicates".into()));
    }
    let (vc, vs) = (variance(&combined), variance(&standard));
    Ok(EfficiencyOutcome {
        empirical_var_combined: vc,
        empirical_var_standard: vs,
        empirical_ratio: vc / vs,
        analytic_ratio,
        replicates,
        failed_replicates: replicates - combined.len() as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::Violation;

    #[test]
    fn coverage_flags_small_samples() {
        let params = DgpParams::new(0.3, 0.5, 50).unwrap();
        let out = coverage_experiment(&params, 200, Probability::new(0.05).unwrap(), 1).unwrap();
        assert!(out.small_sample);
        assert_eq!(out.replicates, 200);
    }

    #[test]
    fn coverage_at_half_alpha() {
        let params = DgpParams::new(0.3, 0.5, 2_000).unwrap();
        let out = coverage_experiment(&params, 1_000, Probability::new(0.5).unwrap(), 4).unwrap();
        assert!((out.coverage.get() - 0.5).abs() < 0.05, "{}", out.coverage.get());
        assert!(!out.small_sample);
    }

    #[test]
    fn experiments_reject_violations() {
        let params = DgpParams::new(0.3, 0.5, 100).unwrap().with_violation(Violation::Liar, 0.1).unwrap();
        assert!(coverage_experiment(&params, 10, Probability::new(0.05).unwrap(), 1).is_err());
        assert!(efficiency_experiment(&params, 10, 1).is_err());
    }

    #[test]
    fn no_confessions_gives_unit_ratio() {
        let params = DgpParams::new(0.4, 0.0, 1_000).unwrap();
        let out = efficiency_experiment(&params, 200, 8).unwrap();
        assert_eq!(out.empirical_ratio, 1.0);
        assert!((out.analytic_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn run_replicates_is_thread_independent() {
        let params = DgpParams::new(0.3, 0.5, 300).unwrap();
        let a = run_replicates(&params, 20, 9, 0, |c| c.y_bar).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_replicates(&params, 20, 9, 0, |c| c.y_bar).unwrap());
        assert_eq!(a, b);
    }
}
