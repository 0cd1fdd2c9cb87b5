//! Exact population moments of the data-generating process by enumeration of
//! its finite outcome space: respondent kind x baseline count W x arm Z.

use super::{binomial_pmf, CeilingEffect, DesignEffect, DgpParams};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoment {
    /// `Pr[Y = y]` (identical in both arms under independent assignment).
    pub prob: f64,
    /// `E[V | Z = z, Y = y]`; zero when `prob` is zero.
    pub mean: f64,
    /// `Var[V | Z = z, Y = y]`; zero when `prob` is zero.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMoments {
    cells: [[CellMoment; 2]; 2],
    prob_yes: f64,
}

impl PopulationMoments {
    pub fn enumerate(params: &DgpParams) -> Result<Self> {
        Self::enumerate_with(params, &CeilingEffect)
    }

    pub fn enumerate_with(params: &DgpParams, effect: &dyn DesignEffect) -> Result<Self> {
        params.validate()?;
        params.check_population()?;
        let masses = params.kind_masses();
        let j = params.j_items;
        let mut acc = [[[0.0f64; 3]; 2]; 2];
        for (kind, mass) in masses {
            if mass == 0.0 {
                continue;
            }
            let pmf = binomial_pmf(j, params.w_success_for(kind.x()));
            for z in 0..2u8 {
                for (w, pw) in pmf.iter().enumerate() {
                    let v = f64::from(kind.item_count(w as u32, z, j, effect));
                    let prob = mass * pw;
                    let cell = &mut acc[usize::from(z)][usize::from(kind.y())];
                    cell[0] += prob;
                    cell[1] += prob * v;
                    cell[2] += prob * v * v;
                }
            }
        }
        let cells = acc.map(|row| {
            row.map(|[p, s1, s2]| {
                if p > 0.0 {
                    let mean = s1 / p;
                    CellMoment {
                        prob: p,
                        mean,
                        variance: (s2 / p - mean * mean).max(0.0),
                    }
                } else {
                    CellMoment {
                        prob: 0.0,
                        mean: 0.0,
                        variance: 0.0,
                    }
                }
            })
        });
        let prob_yes = cells[0][1].prob;
        Ok(PopulationMoments { cells, prob_yes })
    }

    pub fn cell(&self, z: u8, y: u8) -> &CellMoment {
        &self.cells[usize::from(z)][usize::from(y)]
    }

    /// `E[Y]`.
    pub fn prob_yes(&self) -> f64 {
        self.prob_yes
    }

    pub fn arm_mean(&self, z: u8) -> f64 {
        (0..2u8).map(|y| self.cell(z, y).prob * self.cell(z, y).mean).sum()
    }

    pub fn arm_variance(&self, z: u8) -> f64 {
        let second: f64 = (0..2u8)
            .map(|y| {
                let c = self.cell(z, y);
                c.prob * (c.variance + c.mean * c.mean)
            })
            .sum();
        (second - self.arm_mean(z).powi(2)).max(0.0)
    }

    /// `E[Y] + E[1 - Y] * (E[V|1,0] - E[V|0,0])`.
    pub fn combined_estimand(&self) -> f64 {
        let ey = self.prob_yes;
        if ey >= 1.0 {
            return 1.0;
        }
        ey + (1.0 - ey) * (self.cell(1, 0).mean - self.cell(0, 0).mean)
    }

    /// `E[V|Z=1] - E[V|Z=0]`.
    pub fn standard_estimand(&self) -> f64 {
        self.arm_mean(1) - self.arm_mean(0)
    }

    /// `E[V|1,1] - E[V|0,1]`, the confessor difference tested by Placebo Test I.
    pub fn confessor_difference(&self) -> f64 {
        self.cell(1, 1).mean - self.cell(0, 1).mean
    }
}

/// The combined-estimator estimand evaluated exactly from the population.
/// Equals `mu` when no violations are active; exceeds it with false confessors.
pub fn identification_oracle(params: &DgpParams) -> Result<f64> {
    Ok(PopulationMoments::enumerate(params)?.combined_estimand())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::Violation;

    #[test]
    fn no_violations_identifies_mu() {
        for &mu in &[0.0, 0.1, 0.3, 0.7, 1.0] {
            for &p in &[0.0, 0.4, 1.0] {
                let params = DgpParams::new(mu, p, 100).unwrap();
                let id = identification_oracle(&params).unwrap();
                assert!((id - mu).abs() < 1e-12, "mu={mu} p={p}: {id}");
            }
        }
    }

    #[test]
    fn false_confessors_inflate_estimand() {
        let params = DgpParams::new(0.3, 0.5, 100)
            .unwrap()
            .with_violation(Violation::FalseConfessor, 0.2)
            .unwrap();
        let id = identification_oracle(&params).unwrap();
        // Frozen from an independent Python enumeration: 0.33 (= mu + mu p f).
        assert!((id - 0.33).abs() < 1e-12);

        let all_false = DgpParams::new(0.4, 0.5, 100)
            .unwrap()
            .with_violation(Violation::FalseConfessor, 1.0)
            .unwrap();
        assert!(identification_oracle(&all_false).unwrap() > 0.4);
    }

    #[test]
    fn cell_moments_match_closed_form() {
        let params = DgpParams::new(0.3, 0.5, 100).unwrap();
        let pm = PopulationMoments::enumerate(&params).unwrap();
        assert!((pm.prob_yes() - 0.15).abs() < 1e-15);
        let var_w = 4.0 * 0.4 * 0.6;
        assert!((pm.cell(0, 0).variance - var_w).abs() < 1e-12);
        assert!((pm.cell(0, 1).variance - var_w).abs() < 1e-12);
        assert!((pm.cell(1, 1).variance - var_w).abs() < 1e-12);
        let q = 0.15 / 0.85;
        assert!((pm.cell(1, 0).variance - (var_w + q * (1.0 - q))).abs() < 1e-12);
        assert!((pm.confessor_difference() - 1.0).abs() < 1e-12);
        assert!((pm.standard_estimand() - 0.3).abs() < 1e-12);
        assert!((pm.arm_variance(1) - (var_w + 0.21)).abs() < 1e-12);
    }
}
