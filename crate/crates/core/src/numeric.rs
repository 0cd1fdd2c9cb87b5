//! Scalar statistical kernels: moments, the standard normal distribution,
//! the chi-square tail and normal-approximation power of the two-sample
//! proportion test.
//!
//! Everything here is pure and allocation free, so it can be called from any
//! number of worker threads.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidProbability(value));
        }
        Ok(Probability(value))
    }

    /// Clamps a computed value into `[0, 1]`. NaN maps to zero.
    pub(crate) fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Probability(0.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// True when the value lies strictly inside `(0, 1)`.
    pub fn is_interior(self) -> bool {
        self.0 > 0.0 && self.0 < 1.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

fn check_finite(xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::OutOfDomain(format!("non-finite value at index {i}"))),
        None => Ok(()),
    }
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(xs)?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Unbiased (n - 1 denominator) sample variance.
pub fn sample_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (xs.len() - 1) as f64).max(0.0))
}

/// Lower tail `Phi(-|x|)` for `x`, using Hart's double precision rational
/// approximation (as popularised by West, 2005).
fn normal_lower_tail(x_abs: f64) -> f64 {
    if x_abs > 37.0 {
        return 0.0;
    }
    let e = (-x_abs * x_abs / 2.0).exp();
    if x_abs < 7.071_067_811_865_47 {
        let mut num = 3.526_249_659_989_11e-2 * x_abs + 0.700_383_064_443_688;
        num = num * x_abs + 6.373_962_203_531_65;
        num = num * x_abs + 33.912_866_078_383;
        num = num * x_abs + 112.079_291_497_871;
        num = num * x_abs + 221.213_596_169_931;
        num = num * x_abs + 220.206_867_912_376;
        let mut den = 8.838_834_764_831_84e-2 * x_abs + 1.755_667_163_182_64;
        den = den * x_abs + 16.064_177_579_207;
        den = den * x_abs + 86.780_732_202_946_1;
        den = den * x_abs + 296.564_248_779_674;
        den = den * x_abs + 637.333_633_378_831;
        den = den * x_abs + 793.826_512_519_948;
        den = den * x_abs + 440.413_735_824_752;
        e * num / den
    } else {
        let mut b = x_abs + 0.65;
        b = x_abs + 4.0 / b;
        b = x_abs + 3.0 / b;
        b = x_abs + 2.0 / b;
        b = x_abs + 1.0 / b;
        e / b / 2.506_628_274_631
    }
}

/// Standard normal CDF.
///
/// The lower tail is computed directly and the upper half by reflection, so
/// `cdf(x) + cdf(-x) == 1` up to a single rounding.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let tail = normal_lower_tail(x.abs());
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

// Acklam's rational approximation to the normal quantile.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn acklam_lower(q: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if q < P_LOW {
        let r = (-2.0 * q.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5])
            / ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0)
    } else {
        let r = q - 0.5;
        let s = r * r;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * r
            / (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0)
    }
}

/// Inverse of [`std_normal_cdf`] on `(0, 1)`.
///
/// Acklam's approximation followed by one Newton step against the CDF above.
/// Only the lower half is evaluated; `q > 0.5` is reflected, which is exact
/// because `1 - q` is representable for `q` in `[0.5, 1)`.
pub fn std_normal_quantile(q: Probability) -> Result<f64> {
    let q = q.get();
    if q <= 0.0 || q >= 1.0 {
        return Err(Error::OutOfDomain(format!(
            "normal quantile requires 0 < q < 1, got {q}"
        )));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    let (lower, sign) = if q > 0.5 { (1.0 - q, -1.0) } else { (q, 1.0) };
    let mut x = acklam_lower(lower);
    let density = std_normal_pdf(x);
    if density > 0.0 {
        x -= (std_normal_cdf(x) - lower) / density;
    }
    Ok(sign * x)
}

/// Two-sided critical value `z_{1 - alpha/2}`.
pub fn two_sided_critical(alpha: Probability) -> Result<f64> {
    if !alpha.is_interior() {
        return Err(Error::OutOfDomain(format!(
            "alpha must lie in (0, 1), got {}",
            alpha.get()
        )));
    }
    std_normal_quantile(Probability::saturating(1.0 - alpha.get() / 2.0))
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + LANCZOS_G + 0.5;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized upper incomplete gamma function `Q(a, x)`.
pub fn regularized_upper_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::OutOfDomain(format!("shape must be positive, got {a}")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::OutOfDomain(format!("x must be non-negative, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // Series for the lower function P(a, x).
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        Ok((1.0 - sum * log_prefactor.exp()).clamp(0.0, 1.0))
    } else {
        // Modified Lentz continued fraction for Q(a, x).
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        Ok((log_prefactor.exp() * h).clamp(0.0, 1.0))
    }
}

/// Upper-tail probability of a chi-square variable with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: u32) -> Result<Probability> {
    if df == 0 {
        return Err(Error::OutOfDomain("chi-square needs df >= 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "chi-square statistic must be non-negative, got {x}"
        )));
    }
    regularized_upper_gamma(df as f64 / 2.0, x / 2.0).map(Probability::saturating)
}

/// Options for [`two_prop_power_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PowerOptions {
    /// Subtract `(1/n1 + 1/n0) / 2` from the absolute difference.
    pub continuity_correction: bool,
}

/// Normal-approximation power of the two-sided two-sample proportion test,
/// unpooled variance, no continuity correction.
pub fn two_prop_power(
    p1: Probability,
    p0: Probability,
    n1: u64,
    n0: u64,
    alpha: Probability,
) -> Result<Probability> {
    two_prop_power_with(p1, p0, n1, n0, alpha, PowerOptions::default())
}

pub fn two_prop_power_with(
    p1: Probability,
    p0: Probability,
    n1: u64,
    n0: u64,
    alpha: Probability,
    options: PowerOptions,
) -> Result<Probability> {
    if n1 == 0 || n0 == 0 {
        return Err(Error::InsufficientData {
            needed: 1,
            got: n1.min(n0) as usize,
        });
    }
    let z = two_sided_critical(alpha)?;
    let (a, b) = (p1.get(), p0.get());
    let mut diff = (a - b).abs();
    if options.continuity_correction {
        diff = (diff - 0.5 * (1.0 / n1 as f64 + 1.0 / n0 as f64)).max(0.0);
    }
    let se = (a * (1.0 - a) / n1 as f64 + b * (1.0 - b) / n0 as f64).sqrt();
    if se == 0.0 {
        // Both arms deterministic: the test statistic is either 0/0 or infinite.
        return Ok(if diff > 0.0 { Probability::ONE } else { alpha });
    }
    let shift = diff / se;
    let power = std_normal_cdf(shift - z) + std_normal_cdf(-shift - z);
    Ok(Probability::saturating(power))
}
