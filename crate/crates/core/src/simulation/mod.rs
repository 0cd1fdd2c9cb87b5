//! Data-generating process for list experiments paired with a direct
//! question, with controllable violations of the identifying assumptions, and
//! the Monte Carlo experiments built on it.
//!
//! Respondents fall into six kinds:
//!
//! | kind              | X | Y | treated count        |
//! |-------------------|---|---|----------------------|
//! | non-user          | 0 | 0 | W                    |
//! | withholder        | 1 | 0 | W + 1                |
//! | confessor         | 1 | 1 | W + 1                |
//! | false confessor   | 0 | 1 | W                    |
//! | liar              | 1 | 1 | W                    |
//! | design-affected   | 1 | 1 | design effect of W   |
//!
//! Control-arm counts are always `W`. Violation shares are fractions of the
//! "Yes" stratum. `E[Y] = mu * p` and `Pr[X = 1] = mu` hold for any shares:
//! false confessors displace truthful confessors from the "Yes" stratum, and
//! the displaced users withhold instead.

pub mod experiments;
pub mod moments;
pub mod power;
pub mod rng;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::{CellSummary, Dataset, ListDesign, Observation, Respondent};
use crate::error::{Error, Result};
use crate::numeric::Probability;

pub use experiments::{coverage_experiment, efficiency_experiment, CoverageOutcome, EfficiencyOutcome};
pub use moments::{identification_oracle, PopulationMoments};
pub use power::{power_test_one_grid, power_test_two, GridAxis, GridSpec, PowerCell, PowerMode};
pub use rng::{SeedStreams, SimRng};

/// How a design-affected respondent's treated-list count depends on the
/// baseline count `W`.
pub trait DesignEffect: Send + Sync {
    fn treated_count(&self, baseline: u32, j_items: u32) -> u32;
}

/// Respondents at the top of the control list cannot move up: `min(W + 1, J)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CeilingEffect;

impl DesignEffect for CeilingEffect {
    fn treated_count(&self, baseline: u32, j_items: u32) -> u32 {
        (baseline + 1).min(j_items)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    FalseConfessor,
    Liar,
    DesignAffected,
}

impl Violation {
    pub const ALL: [Violation; 3] = [Violation::FalseConfessor, Violation::Liar, Violation::DesignAffected];

    pub fn as_str(self) -> &'static str {
        match self {
            Violation::FalseConfessor => "false_confessor",
            Violation::Liar => "liar",
            Violation::DesignAffected => "design_affected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    NonUser,
    Withholder,
    Confessor,
    FalseConfessor,
    Liar,
    DesignAffected,
}

impl UnitKind {
    pub const ALL: [UnitKind; 6] = [
        UnitKind::NonUser,
        UnitKind::Withholder,
        UnitKind::Confessor,
        UnitKind::FalseConfessor,
        UnitKind::Liar,
        UnitKind::DesignAffected,
    ];

    /// True behavior.
    pub fn x(self) -> u8 {
        match self {
            UnitKind::NonUser | UnitKind::FalseConfessor => 0,
            _ => 1,
        }
    }

    /// Direct answer.
    pub fn y(self) -> u8 {
        match self {
            UnitKind::NonUser | UnitKind::Withholder => 0,
            _ => 1,
        }
    }

    pub fn item_count(self, baseline: u32, z: u8, j_items: u32, effect: &dyn DesignEffect) -> u32 {
        if z == 0 {
            return baseline;
        }
        match self {
            UnitKind::NonUser | UnitKind::FalseConfessor | UnitKind::Liar => baseline,
            UnitKind::Withholder | UnitKind::Confessor => baseline + 1,
            UnitKind::DesignAffected => effect.treated_count(baseline, j_items),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Every respondent's kind is drawn independently.
    #[default]
    Unconditional,
    /// Exactly this many respondents answer "Yes"; violator counts within
    /// that stratum are `round(share * count)`.
    FixedYesCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    /// Prevalence `Pr[X = 1]`.
    pub mu: Probability,
    /// `Pr[Y = 1 | X = 1]` absent violations.
    pub p_truthful: Probability,
    /// Treatment share.
    pub gamma: Probability,
    pub j_items: u32,
    /// Control list law: `W ~ Binomial(J, w_success)`.
    pub w_success: Probability,
    pub share_false_confessors: Probability,
    pub share_liars: Probability,
    pub share_design_affected: Probability,
    pub n: usize,
    pub sampling: SamplingMode,
    /// Added to `w_success` for units with `X = 1` (clamped to `[0, 1]`).
    /// Zero keeps `W` independent of behavior.
    pub w_shift_for_users: f64,
}

impl DgpParams {
    /// Compliant population with `gamma = 0.5`, `J = 4`, `W ~ Binomial(4, 0.4)`.
    pub fn new(mu: f64, p_truthful: f64, n: usize) -> Result<Self> {
        let prob = |name: &str, v: f64| {
            Probability::new(v).map_err(|_| Error::InvalidParams(format!("{name} must lie in [0, 1], got {v}")))
        };
        let params = DgpParams {
            mu: prob("mu", mu)?,
            p_truthful: prob("p", p_truthful)?,
            gamma: Probability::saturating(0.5),
            j_items: 4,
            w_success: Probability::saturating(0.4),
            share_false_confessors: Probability::ZERO,
            share_liars: Probability::ZERO,
            share_design_affected: Probability::ZERO,
            n,
            sampling: SamplingMode::Unconditional,
            w_shift_for_users: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = Probability::new(gamma).map_err(|_| Error::InvalidParams(format!("gamma = {gamma}")))?;
        self.validate()?;
        Ok(self)
    }

    pub fn with_list(mut self, j_items: u32, w_success: f64) -> Result<Self> {
        self.j_items = j_items;
        self.w_success =
            Probability::new(w_success).map_err(|_| Error::InvalidParams(format!("w_success = {w_success}")))?;
        self.validate()?;
        Ok(self)
    }

    pub fn with_violation(mut self, kind: Violation, share: f64) -> Result<Self> {
        let share = Probability::new(share).map_err(|_| Error::InvalidParams(format!("share = {share}")))?;
        match kind {
            Violation::FalseConfessor => self.share_false_confessors = share,
            Violation::Liar => self.share_liars = share,
            Violation::DesignAffected => self.share_design_affected = share,
        }
        self.validate()?;
        Ok(self)
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_sampling(mut self, sampling: SamplingMode) -> Result<Self> {
        self.sampling = sampling;
        self.validate()?;
        Ok(self)
    }

    pub fn with_w_shift(mut self, shift: f64) -> Result<Self> {
        self.w_shift_for_users = shift;
        self.validate()?;
        Ok(self)
    }

    pub fn has_violations(&self) -> bool {
        self.share_false_confessors.get() > 0.0 || self.share_liars.get() > 0.0 || self.share_design_affected.get() > 0.0
    }

    pub fn w_success_for(&self, x: u8) -> f64 {
        if x == 1 {
            (self.w_success.get() + self.w_shift_for_users).clamp(0.0, 1.0)
        } else {
            self.w_success.get()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_items == 0 {
            return Err(Error::InvalidParams("list needs at least one item".into()));
        }
        if !self.w_shift_for_users.is_finite() {
            return Err(Error::InvalidParams("w shift must be finite".into()));
        }
        let shares = self.share_false_confessors.get() + self.share_liars.get() + self.share_design_affected.get();
        if shares > 1.0 + 1e-12 {
            return Err(Error::InvalidParams(format!(
                "violation shares sum to {shares}, must not exceed 1"
            )));
        }
        match self.sampling {
            SamplingMode::Unconditional => self.check_population(),
            SamplingMode::FixedYesCount(k) if k > self.n => {
                Err(Error::InvalidParams(format!("yes count {k} exceeds n = {}", self.n)))
            }
            SamplingMode::FixedYesCount(_) => Ok(()),
        }
    }

    /// False confessors are drawn from non-users, so their population mass
    /// `mu * p * share` cannot exceed `1 - mu`. Only binding when kinds are
    /// drawn from the population rather than fixed by count.
    pub fn check_population(&self) -> Result<()> {
        let (mu, p) = (self.mu.get(), self.p_truthful.get());
        let false_mass = mu * p * self.share_false_confessors.get();
        if false_mass > 1.0 - mu + 1e-12 {
            return Err(Error::InvalidParams(format!(
                "false-confessor share {} needs {false_mass:.4} of the population but only {:.4} are non-users",
                self.share_false_confessors.get(),
                1.0 - mu
            )));
        }
        Ok(())
    }

    /// Population share of each respondent kind.
    pub fn kind_masses(&self) -> [(UnitKind, f64); 6] {
        let (mu, p) = (self.mu.get(), self.p_truthful.get());
        let yes = mu * p;
        let (f_false, f_liar, f_design) = (
            self.share_false_confessors.get(),
            self.share_liars.get(),
            self.share_design_affected.get(),
        );
        let false_mass = yes * f_false;
        [
            (UnitKind::NonUser, (1.0 - mu - false_mass).max(0.0)),
            (UnitKind::Withholder, (mu - yes + false_mass).max(0.0)),
            (UnitKind::Confessor, (yes * (1.0 - f_false - f_liar - f_design)).max(0.0)),
            (UnitKind::FalseConfessor, false_mass),
            (UnitKind::Liar, yes * f_liar),
            (UnitKind::DesignAffected, yes * f_design),
        ]
    }

    pub fn design(&self) -> Result<ListDesign> {
        ListDesign::with_items(self.j_items)
    }
}

/// A generated respondent with its latent behavior and baseline count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulatedUnit {
    pub kind: UnitKind,
    pub x: u8,
    pub y: u8,
    pub z: u8,
    pub w: u32,
    pub v: u32,
}

impl SimulatedUnit {
    pub fn observation(&self) -> Observation {
        Observation {
            y: self.y,
            z: self.z,
            v: self.v,
        }
    }
}

pub(crate) fn binomial_pmf(trials: u32, success: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; trials as usize + 1];
    let mut coeff = 1.0f64;
    for k in 0..=trials {
        if k > 0 {
            coeff *= f64::from(trials - k + 1) / f64::from(k);
        }
        pmf[k as usize] = coeff * success.powi(k as i32) * (1.0 - success).powi((trials - k) as i32);
    }
    pmf
}

/// Draws respondents from a validated parameter set.
pub struct UnitSampler<'a> {
    params: DgpParams,
    cumulative: [(UnitKind, f64); 6],
    no_stratum: [(UnitKind, f64); 2],
    baseline: [Binomial; 2],
    effect: &'a dyn DesignEffect,
}

impl<'a> UnitSampler<'a> {
    pub fn new(params: &DgpParams, effect: &'a dyn DesignEffect) -> Result<Self> {
        params.validate()?;
        let masses = params.kind_masses();
        let mut cumulative = masses;
        let mut acc = 0.0;
        for entry in cumulative.iter_mut() {
            acc += entry.1;
            entry.1 = acc;
        }
        let (non_user, withholder) = (masses[0].1, masses[1].1);
        let no_total = non_user + withholder;
        let share_withholder = if no_total > 0.0 { withholder / no_total } else { 0.0 };
        let binomial = |x: u8| {
            Binomial::new(u64::from(params.j_items), params.w_success_for(x))
                .map_err(|e| Error::InvalidParams(format!("baseline law: {e}")))
        };
        Ok(UnitSampler {
            params: *params,
            cumulative,
            no_stratum: [(UnitKind::Withholder, share_withholder), (UnitKind::NonUser, 1.0)],
            baseline: [binomial(0)?, binomial(1)?],
            effect,
        })
    }

    fn draw_kind(&self, rng: &mut SimRng) -> UnitKind {
        let total = self.cumulative[5].1;
        let u: f64 = rng.random::<f64>() * total;
        self.cumulative
            .iter()
            .find(|(_, c)| u < *c)
            .map(|(k, _)| *k)
            .unwrap_or(self.cumulative[5].0)
    }

    fn draw_no_kind(&self, rng: &mut SimRng) -> UnitKind {
        if rng.random::<f64>() < self.no_stratum[0].1 {
            UnitKind::Withholder
        } else {
            UnitKind::NonUser
        }
    }

    /// Draws treatment and counts for a unit of known kind.
    pub fn draw_unit(&self, kind: UnitKind, rng: &mut SimRng) -> SimulatedUnit {
        let z = u8::from(rng.random_bool(self.params.gamma.get()));
        let w = self.baseline[usize::from(kind.x())].sample(rng) as u32;
        let v = kind.item_count(w, z, self.params.j_items, self.effect);
        SimulatedUnit {
            kind,
            x: kind.x(),
            y: kind.y(),
            z,
            w,
            v,
        }
    }

    /// Kinds of the "Yes" stratum with violator counts fixed by share.
    fn yes_stratum_kinds(&self, yes: usize) -> impl Iterator<Item = UnitKind> {
        let count = |share: Probability| (share.get() * yes as f64).round() as usize;
        let n_false = count(self.params.share_false_confessors).min(yes);
        let n_liar = count(self.params.share_liars).min(yes - n_false);
        let n_design = count(self.params.share_design_affected).min(yes - n_false - n_liar);
        (0..yes).map(move |i| {
            if i < n_false {
                UnitKind::FalseConfessor
            } else if i < n_false + n_liar {
                UnitKind::Liar
            } else if i < n_false + n_liar + n_design {
                UnitKind::DesignAffected
            } else {
                UnitKind::Confessor
            }
        })
    }

    /// Draws `params.n` respondents according to the sampling mode.
    pub fn units<'s>(&'s self, rng: &'s mut SimRng) -> Box<dyn Iterator<Item = SimulatedUnit> + 's> {
        let n = self.params.n;
        match self.params.sampling {
            SamplingMode::Unconditional => Box::new((0..n).map(move |_| {
                let kind = self.draw_kind(rng);
                self.draw_unit(kind, rng)
            })),
            SamplingMode::FixedYesCount(yes) => {
                let kinds: Vec<UnitKind> = self.yes_stratum_kinds(yes).collect();
                Box::new((0..n).map(move |i| {
                    let kind = if i < yes { kinds[i] } else { self.draw_no_kind(rng) };
                    self.draw_unit(kind, rng)
                }))
            }
        }
    }

    pub fn cells(&self, rng: &mut SimRng) -> CellSummary {
        CellSummary::from_observations(self.units(rng).map(|u| u.observation()))
    }
}

/// Generates `params.n` respondents with their latent values.
pub fn generate_units(params: &DgpParams, seed: u64) -> Result<Vec<SimulatedUnit>> {
    generate_units_with(params, seed, &CeilingEffect)
}

pub fn generate_units_with(params: &DgpParams, seed: u64, effect: &dyn DesignEffect) -> Result<Vec<SimulatedUnit>> {
    let sampler = UnitSampler::new(params, effect)?;
    let mut rng = SeedStreams::new(seed).rng(0, 0);
    Ok(sampler.units(&mut rng).collect())
}

/// Generates an observable dataset; identical `(params, seed)` give identical output.
pub fn generate_dataset(params: &DgpParams, seed: u64) -> Result<Dataset> {
    let units = generate_units(params, seed)?;
    let width = params.n.max(1).to_string().len();
    let records = units
        .iter()
        .enumerate()
        .map(|(i, u)| Respondent {
            id: format!("s{:0width$}", i + 1),
            y_direct: u.y,
            z_treat: u.z,
            v_count: u.v,
            study: None,
        })
        .collect();
    Dataset::from_respondents(records, params.design()?, "sim")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::summarize_cells;

    #[test]
    fn zero_prevalence_means_no_behavior() {
        let params = DgpParams::new(0.0, 0.7, 2_000).unwrap();
        let units = generate_units(&params, 1).unwrap();
        assert!(units.iter().all(|u| u.x == 0 && u.y == 0 && u.v == u.w));
    }

    #[test]
    fn everyone_confesses() {
        let params = DgpParams::new(1.0, 1.0, 2_000).unwrap();
        let units = generate_units(&params, 2).unwrap();
        assert!(units.iter().all(|u| u.y == 1));
        assert!(units.iter().filter(|u| u.z == 1).all(|u| u.v == u.w + 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let params = DgpParams::new(0.3, 0.5, 500).unwrap();
        assert_eq!(generate_units(&params, 11).unwrap(), generate_units(&params, 11).unwrap());
        assert_ne!(generate_units(&params, 11).unwrap(), generate_units(&params, 12).unwrap());
        assert_eq!(generate_dataset(&params, 11).unwrap(), generate_dataset(&params, 11).unwrap());
    }

    #[test]
    fn violators_follow_their_rules() {
        let params = DgpParams::new(0.5, 0.8, 4_000)
            .unwrap()
            .with_violation(Violation::FalseConfessor, 0.2)
            .unwrap()
            .with_violation(Violation::Liar, 0.2)
            .unwrap()
            .with_violation(Violation::DesignAffected, 0.2)
            .unwrap();
        let units = generate_units(&params, 3).unwrap();
        for u in &units {
            match u.kind {
                UnitKind::FalseConfessor => assert_eq!((u.x, u.y, u.v), (0, 1, u.w)),
                UnitKind::Liar => assert_eq!(u.v, u.w),
                UnitKind::DesignAffected => assert_eq!(u.v, if u.z == 1 { (u.w + 1).min(4) } else { u.w }),
                _ => assert_eq!(u.v, u.w + u32::from(u.x * u.z)),
            }
            assert!(u.v <= 4 + u32::from(u.z));
        }
        assert!(units.iter().any(|u| u.kind == UnitKind::FalseConfessor));
    }

    #[test]
    fn fixed_yes_count_mode() {
        let params = DgpParams::new(0.3, 0.5, 1_000)
            .unwrap()
            .with_violation(Violation::FalseConfessor, 0.25)
            .unwrap()
            .with_sampling(SamplingMode::FixedYesCount(200))
            .unwrap();
        let units = generate_units(&params, 5).unwrap();
        assert_eq!(units.iter().filter(|u| u.y == 1).count(), 200);
        assert_eq!(units.iter().filter(|u| u.kind == UnitKind::FalseConfessor).count(), 50);
        assert!(DgpParams::new(0.3, 0.5, 10).unwrap().with_sampling(SamplingMode::FixedYesCount(11)).is_err());
    }

    #[test]
    fn infeasible_false_confessor_share_rejected() {
        // mu p f = 0.9 * 1.0 * 1.0 > 1 - mu = 0.1
        let r = DgpParams::new(0.9, 1.0, 10).unwrap().with_violation(Violation::FalseConfessor, 1.0);
        assert!(matches!(r, Err(Error::InvalidParams(_))));
        assert!(DgpParams::new(1.2, 0.5, 10).is_err());
    }

    #[test]
    fn cell_shares_match_multinomial_oracle() {
        let params = DgpParams::new(0.3, 0.5, 10_000).unwrap();
        let ds = generate_dataset(&params, 99).unwrap();
        let s = summarize_cells(&ds);
        let yes = 0.3 * 0.5;
        let g = 0.5;
        for (z, y, p) in [
            (0u8, 0u8, (1.0 - yes) * (1.0 - g)),
            (1, 0, (1.0 - yes) * g),
            (0, 1, yes * (1.0 - g)),
            (1, 1, yes * g),
        ] {
            let n: f64 = 10_000.0;
            let sd = (n * p * (1.0 - p)).sqrt();
            let got = s.cell(z, y).count as f64;
            assert!((got - n * p).abs() < 3.0 * sd, "cell ({z},{y}): {got} vs {}", n * p);
        }
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        let pmf = binomial_pmf(4, 0.4);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((pmf[4] - 0.4f64.powi(4)).abs() < 1e-15);
        assert_eq!(binomial_pmf(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
    }
}
