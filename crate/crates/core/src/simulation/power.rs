//! Power of the two placebo tests.
//!
//! Test I power is simulated on a grid of "Yes"-stratum sizes against either
//! a violation share (one violation type active) or the control-list success
//! probability with a fixed share of false confessors. Only the "Yes" stratum
//! enters Test I, so each replicate generates exactly `n_yes` confessors.
//!
//! Test II power is the power of a two-sample difference in proportions,
//! either by normal approximation or by simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CeilingEffect, DgpParams, SamplingMode, SeedStreams, UnitSampler, Violation};
use crate::data::{CellSummary, Observation};
use crate::error::{Error, Result};
use crate::numeric::{two_prop_power_with, PowerOptions, Probability};
use crate::placebo::{placebo_test_one, placebo_test_two};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridAxis {
    /// Share of the "Yes" stratum violating one assumption.
    ViolationShare { kind: Violation, shares: Vec<f64>, w_success: f64 },
    /// Control-list success probability with a fixed false-confessor share.
    WSuccess { values: Vec<f64>, false_confessor_share: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_yes: Vec<usize>,
    pub axis: GridAxis,
    pub gamma: f64,
    pub j_items: u32,
}

fn steps(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| ((start + step * i as f64) * 1e9).round() / 1e9).collect()
}

impl GridSpec {
    /// `n_yes` from 100 to 1000 in steps of 50.
    pub fn default_n_yes() -> Vec<usize> {
        (100..=1000).step_by(50).collect()
    }

    /// One violation type, shares 0 to 1 in steps of `step`, `W ~ Binomial(4, 0.4)`.
    pub fn violation_panel(kind: Violation, step: f64) -> Self {
        GridSpec {
            n_yes: Self::default_n_yes(),
            axis: GridAxis::ViolationShare {
                kind,
                shares: steps(0.0, 1.0, step),
                w_success: 0.4,
            },
            gamma: 0.5,
            j_items: 4,
        }
    }

    /// Success probability 0 to 1 in steps of `step` with 20% false confessors.
    pub fn w_success_panel(step: f64) -> Self {
        GridSpec {
            n_yes: Self::default_n_yes(),
            axis: GridAxis::WSuccess {
                values: steps(0.0, 1.0, step),
                false_confessor_share: 0.20,
            },
            gamma: 0.5,
            j_items: 4,
        }
    }

    pub fn single(n_yes: usize, axis: GridAxis) -> Self {
        GridSpec {
            n_yes: vec![n_yes],
            axis,
            gamma: 0.5,
            j_items: 4,
        }
    }

    fn axis_values(&self) -> &[f64] {
        match &self.axis {
            GridAxis::ViolationShare { shares, .. } => shares,
            GridAxis::WSuccess { values, .. } => values,
        }
    }

    pub fn axis_label(&self) -> &'static str {
        match &self.axis {
            GridAxis::ViolationShare { kind, .. } => kind.as_str(),
            GridAxis::WSuccess { .. } => "w_success",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_yes.is_empty() || self.axis_values().is_empty() {
            return Err(Error::InvalidGrid("grid axes must be non-empty".into()));
        }
        if self.n_yes.contains(&0) {
            return Err(Error::InvalidGrid("n_yes values must be positive".into()));
        }
        if self.axis_values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidGrid("axis values must lie in [0, 1]".into()));
        }
        let fixed = match &self.axis {
            GridAxis::ViolationShare { w_success, .. } => *w_success,
            GridAxis::WSuccess { false_confessor_share, .. } => *false_confessor_share,
        };
        if !(0.0..=1.0).contains(&fixed) || !(0.0..=1.0).contains(&self.gamma) || self.j_items == 0 {
            return Err(Error::InvalidGrid("fixed grid parameters out of range".into()));
        }
        if self.cell_count() > u32::MAX as usize {
            return Err(Error::InvalidGrid("too many cells".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.n_yes.len() * self.axis_values().len()
    }

    /// Row-major cells: `n_yes` outer, axis inner.
    fn cells(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.n_yes
            .iter()
            .flat_map(move |&n| self.axis_values().iter().map(move |&v| (n, v)))
    }

    fn params_for(&self, n_yes: usize, value: f64) -> Result<DgpParams> {
        // Only the "Yes" stratum is generated, so mu = p = 1 and n = n_yes.
        let base = DgpParams::new(1.0, 1.0, n_yes)?
            .with_gamma(self.gamma)?
            .with_sampling(SamplingMode::FixedYesCount(n_yes))?;
        match &self.axis {
            GridAxis::ViolationShare { kind, w_success, .. } => {
                base.with_list(self.j_items, *w_success)?.with_violation(*kind, value)
            }
            GridAxis::WSuccess { false_confessor_share, .. } => base
                .with_list(self.j_items, value)?
                .with_violation(Violation::FalseConfessor, *false_confessor_share),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub n_yes: usize,
    pub violation_type: String,
    pub share_or_wsuccess: f64,
    pub replicates: u32,
    pub power: Probability,
    pub seed: u64,
}

/// Rejection frequency of Placebo Test I at level `alpha` for every grid cell.
///
/// Replicate `r` of cell `c` (row-major order) uses stream `(c, r)` of the
/// master seed, so the surface does not depend on the number of threads.
pub fn power_test_one_grid(grid: &GridSpec, replicates: u32, alpha: Probability, seed: u64) -> Result<Vec<PowerCell>> {
    grid.validate()?;
    if replicates == 0 {
        return Err(Error::InvalidGrid("need at least one replicate".into()));
    }
    let streams = SeedStreams::new(seed);
    let cells: Vec<(usize, f64, DgpParams)> = grid
        .cells()
        .map(|(n, v)| grid.params_for(n, v).map(|p| (n, v, p)))
        .collect::<Result<_>>()?;

    cells
        .par_iter()
        .enumerate()
        .map(|(index, (n_yes, value, params))| {
            let sampler = UnitSampler::new(params, &CeilingEffect)?;
            let rejections: u32 = (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = streams.rng(index as u32, rep);
                    let cells = sampler.cells(&mut rng);
                    u32::from(placebo_test_one(&cells).is_ok_and(|r| r.rejects(alpha)))
                })
                .sum();
            Ok(PowerCell {
                n_yes: *n_yes,
                violation_type: grid.axis_label().to_string(),
                share_or_wsuccess: *value,
                replicates,
                power: Probability::saturating(f64::from(rejections) / f64::from(replicates)),
                seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerMode {
    Analytic,
    Simulated { replicates: u32, seed: u64 },
}

/// Power of Placebo Test II when the treated arm answers "Yes" with
/// probability `p1` and the control arm with `p0`.
pub fn power_test_two(
    p1: Probability,
    p0: Probability,
    n1: u64,
    n0: u64,
    alpha: Probability,
    mode: PowerMode,
    options: PowerOptions,
) -> Result<Probability> {
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidParams("both arms need at least one respondent".into()));
    }
    match mode {
        PowerMode::Analytic => two_prop_power_with(p1, p0, n1, n0, alpha, options),
        PowerMode::Simulated { replicates, seed } => {
            if replicates == 0 {
                return Err(Error::InvalidParams("need at least one replicate".into()));
            }
            let streams = SeedStreams::new(seed);
            let rejections: u32 = (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    use rand::Rng;
                    let mut rng = streams.rng(0, rep);
                    let mut obs = Vec::with_capacity((n1 + n0) as usize);
                    for (z, p, n) in [(1u8, p1.get(), n1), (0u8, p0.get(), n0)] {
                        for _ in 0..n {
                            obs.push(Observation {
                                y: u8::from(rng.random_bool(p)),
                                z,
                                v: 0,
                            });
                        }
                    }
                    let cells = CellSummary::from_observations(obs);
                    u32::from(placebo_test_two(&cells).is_ok_and(|r| r.rejects(alpha)))
                })
                .sum();
            Ok(Probability::saturating(f64::from(rejections) / f64::from(replicates)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha05() -> Probability {
        Probability::new(0.05).unwrap()
    }

    fn share_grid(n_yes: Vec<usize>, kind: Violation, shares: Vec<f64>) -> GridSpec {
        GridSpec {
            n_yes,
            axis: GridAxis::ViolationShare {
                kind,
                shares,
                w_success: 0.4,
            },
            gamma: 0.5,
            j_items: 4,
        }
    }

    #[test]
    fn default_grids_have_expected_shape() {
        let g = GridSpec::violation_panel(Violation::Liar, 0.01);
        assert_eq!(g.n_yes.len(), 19);
        assert_eq!(g.cell_count(), 19 * 101);
        assert_eq!(GridSpec::w_success_panel(0.1).cell_count(), 19 * 11);
    }

    #[test]
    fn invalid_grids_rejected() {
        let mut g = share_grid(vec![], Violation::Liar, vec![0.1]);
        assert!(matches!(power_test_one_grid(&g, 10, alpha05(), 1), Err(Error::InvalidGrid(_))));
        g.n_yes = vec![100];
        g.axis = GridAxis::ViolationShare {
            kind: Violation::Liar,
            shares: vec![1.5],
            w_success: 0.4,
        };
        assert!(power_test_one_grid(&g, 10, alpha05(), 1).is_err());
        let g = share_grid(vec![100], Violation::Liar, vec![0.1]);
        assert!(power_test_one_grid(&g, 0, alpha05(), 1).is_err());
    }

    #[test]
    fn null_share_is_calibrated() {
        let g = share_grid(vec![400], Violation::FalseConfessor, vec![0.0]);
        let cells = power_test_one_grid(&g, 1_000, alpha05(), 17).unwrap();
        assert!((cells[0].power.get() - 0.05).abs() < 0.02, "{}", cells[0].power.get());
    }

    #[test]
    fn surface_is_deterministic_and_thread_independent() {
        let g = share_grid(vec![100, 200], Violation::Liar, vec![0.0, 0.3]);
        let a = power_test_one_grid(&g, 50, alpha05(), 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| power_test_one_grid(&g, 50, alpha05(), 5).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a[2].n_yes, 200);
        assert_eq!(a[3].share_or_wsuccess, 0.3);
    }

    #[test]
    fn test_two_power_modes() {
        let p = |x| Probability::new(x).unwrap();
        let a = power_test_two(p(0.4), p(0.4), 300, 300, alpha05(), PowerMode::Analytic, PowerOptions::default()).unwrap();
        assert!((a.get() - 0.05).abs() < 1e-9);
        let s = power_test_two(
            p(0.4),
            p(0.4),
            300,
            300,
            alpha05(),
            PowerMode::Simulated { replicates: 2_000, seed: 3 },
            PowerOptions::default(),
        )
        .unwrap();
        assert!((s.get() - 0.05).abs() < 0.02);
        let s = power_test_two(
            p(1.0),
            p(0.0),
            100,
            100,
            alpha05(),
            PowerMode::Simulated { replicates: 200, seed: 3 },
            PowerOptions::default(),
        )
        .unwrap();
        assert_eq!(s.get(), 1.0);
        assert!(power_test_two(p(0.5), p(0.5), 0, 10, alpha05(), PowerMode::Analytic, PowerOptions::default()).is_err());
    }
}
