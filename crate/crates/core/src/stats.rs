//! Correlation between the two stage accuracies: Pearson coefficient, a
//! one-tailed t-test for positive correlation, and a Fisher-z confidence
//! interval.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Paired percent accuracies (backbone, head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPairs {
    pairs: Vec<(f64, f64)>,
}

impl AccuracyPairs {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.len() < 3 {
            return Err(Error::Contract(format!("need at least 3 pairs, got {}", pairs.len())));
        }
        if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Contract("accuracy pairs must be finite".into()));
        }
        Ok(AccuracyPairs { pairs })
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

/// Published (ST-GCN, CNN) accuracy pairs of the 30 subset experiments, in
/// experiment order.
pub const TABLE5_PAIRS: [(f64, f64); 30] = [
    (70.0, 63.0),
    (31.0, 28.0),
    (74.0, 72.0),
    (78.0, 68.0),
    (80.0, 58.0),
    (85.0, 74.0),
    (34.0, 28.0),
    (82.0, 77.0),
    (74.0, 55.0),
    (57.0, 55.0),
    (82.0, 80.0),
    (69.0, 67.0),
    (61.0, 50.0),
    (69.0, 70.0),
    (60.0, 53.0),
    (58.0, 58.0),
    (70.0, 55.0),
    (33.0, 39.0),
    (73.0, 55.0),
    (28.0, 20.0),
    (56.0, 51.0),
    (66.0, 61.0),
    (68.0, 56.0),
    (41.0, 39.0),
    (56.0, 46.0),
    (58.0, 55.0),
    (76.0, 62.0),
    (55.0, 46.0),
    (65.0, 46.0),
    (82.0, 79.0),
];

pub fn table5_fixture() -> AccuracyPairs {
    AccuracyPairs::new(TABLE5_PAIRS.to_vec()).expect("fixture is valid")
}

/// Product-moment correlation coefficient.
pub fn pearson(pairs: &AccuracyPairs) -> Result<f64> {
    let n = pairs.n() as f64;
    let (mx, my) = pairs.pairs.iter().fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs.pairs {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance in one coordinate".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_statistic: f64,
    pub p_one_tailed: f64,
    /// Set when |rho| = 1; the statistic is infinite.
    pub exact_fit: bool,
}

/// Upper-tail test of H0: no positive linear correlation.
pub fn one_tailed_p(rho: f64, n: usize) -> Result<TTest> {
    if n < 3 {
        return Err(Error::Contract(format!("t-test needs n >= 3, got {n}")));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Contract(format!("rho {rho} outside [-1, 1]")));
    }
    if rho.abs() == 1.0 {
        return Ok(TTest {
            t_statistic: rho * f64::INFINITY,
            p_one_tailed: if rho > 0.0 { 0.0 } else { 1.0 },
            exact_fit: true,
        });
    }
    let df = (n - 2) as f64;
    let t = rho * df.sqrt() / (1.0 - rho * rho).sqrt();
    Ok(TTest {
        t_statistic: t,
        p_one_tailed: student_t_sf(t, df),
        exact_fit: false,
    })
}

/// Two-sided critical value of the standard normal for a confidence level.
fn normal_critical(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Contract(format!("confidence level {level} outside (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Fisher-z confidence interval for a correlation coefficient.
pub fn fisher_ci(rho: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 4 {
        return Err(Error::Contract(format!("Fisher interval needs n >= 4, got {n}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::Contract(format!("Fisher interval needs |rho| < 1, got {rho}")));
    }
    let z = rho.atanh();
    let half = normal_critical(level)? / ((n - 3) as f64).sqrt();
    Ok(((z - half).tanh(), (z + half).tanh()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectH0,
    FailToReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    pub t_statistic: f64,
    pub p_one_tailed: f64,
    pub ci95: (f64, f64),
    pub n: usize,
    pub alpha: f64,
    pub exact_fit: bool,
    pub decision: Decision,
}

pub fn hypothesis_report(pairs: &AccuracyPairs, alpha: f64) -> Result<CorrelationReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha {alpha} outside (0, 1)")));
    }
    let rho = pearson(pairs)?;
    let n = pairs.n();
    let test = one_tailed_p(rho, n)?;
    let ci95 = if test.exact_fit {
        (rho, rho)
    } else {
        let (lo, hi) = fisher_ci(rho, n, 0.95)?;
        // tanh rounding can nudge a bound past the estimate for |rho| near 1
        (lo.min(rho), hi.max(rho))
    };
    let decision = if test.p_one_tailed < alpha {
        Decision::RejectH0
    } else {
        Decision::FailToReject
    };
    Ok(CorrelationReport {
        rho,
        t_statistic: test.t_statistic,
        p_one_tailed: test.p_one_tailed,
        ci95,
        n,
        alpha,
        exact_fit: test.exact_fit,
        decision,
    })
}

impl fmt::Display for CorrelationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n            {}", self.n)?;
        writeln!(f, "rho          {:.2} ({:.6})", self.rho, self.rho)?;
        writeln!(
            f,
            "t            {:.4} (df = {})",
            self.t_statistic,
            self.n.saturating_sub(2)
        )?;
        writeln!(f, "p (one-tail) {:.3e}", self.p_one_tailed)?;
        writeln!(f, "95% CI       [{:.2}, {:.2}]", self.ci95.0, self.ci95.1)?;
        let verdict = match self.decision {
            Decision::RejectH0 => "reject H0: positive linear correlation",
            Decision::FailToReject => "fail to reject H0",
        };
        write!(f, "alpha {}     {verdict}", self.alpha)
    }
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let t2 = t * t;
    // x = df / (df + t²); 1 - x computed directly to keep precision near t = 0
    let x = df / (df + t2);
    let one_minus_x = t2 / (df + t2);
    let half_tail = 0.5 * regularized_beta(0.5 * df, 0.5, x, one_minus_x);
    if t >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)`; `one_minus_x` must equal `1 - x`.
///
/// Uses the continued fraction
/// `I_x(a,b) = x^a (1-x)^b / (a B(a,b)) · 1/(1+ d1/(1+ d2/(1+ ...)))` with
/// `d_{2m+1} = -(a+m)(a+b+m) x / ((a+2m)(a+2m+1))`,
/// `d_{2m} = m(b-m) x / ((a+2m-1)(a+2m))`, evaluated by the modified Lentz
/// method. For `x > (a+1)/(a+b+2)` the symmetry `I_x(a,b) = 1 - I_{1-x}(b,a)`
/// keeps the fraction in its fast-converging region.
pub fn regularized_beta(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * one_minus_x.ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_fraction(b, a, one_minus_x) / b
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pairs(v: Vec<(f64, f64)>) -> AccuracyPairs {
        AccuracyPairs::new(v).unwrap()
    }

    #[test]
    fn fixture_rows() {
        let f = table5_fixture();
        assert_eq!(f.n(), 30);
        assert_eq!(f.pairs()[10], (82.0, 80.0));
        assert_eq!(f.pairs()[19], (28.0, 20.0));
        assert_eq!(f.pairs()[0], (70.0, 63.0));
        assert_eq!(f.pairs()[29], (82.0, 79.0));
    }

    #[test]
    fn fixture_statistics() {
        let f = table5_fixture();
        let rho = pearson(&f).unwrap();
        assert!((rho - 0.91).abs() <= 0.005, "rho = {rho}");
        let t = one_tailed_p(rho, 30).unwrap();
        assert!((t.t_statistic - 11.7).abs() < 0.1, "t = {}", t.t_statistic);
        assert!(t.p_one_tailed < 2e-6);
        // regression value from an independent 40-digit evaluation
        assert!(
            (t.p_one_tailed / 1.430_248_336_963_171_4e-12 - 1.0).abs() < 1e-6,
            "p = {}",
            t.p_one_tailed
        );
        let (lo, hi) = fisher_ci(rho, 30, 0.95).unwrap();
        assert_eq!(
            ((lo * 100.0).round() / 100.0, (hi * 100.0).round() / 100.0),
            (0.82, 0.96)
        );
        let report = hypothesis_report(&f, 0.05).unwrap();
        assert_eq!(report.decision, Decision::RejectH0);
        assert_eq!(report.rho, rho);
    }

    #[test]
    fn perfect_fits() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
        assert_eq!(pearson(&pairs(line)).unwrap(), 1.0);
        let anti: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, -2.0 * i as f64 + 7.0)).collect();
        assert_eq!(pearson(&pairs(anti.clone())).unwrap(), -1.0);
        let t = one_tailed_p(1.0, 10).unwrap();
        assert!(t.exact_fit);
        assert_eq!(t.p_one_tailed, 0.0);
        let r = hypothesis_report(&pairs(anti), 0.05).unwrap();
        assert_eq!(r.decision, Decision::FailToReject);
    }

    #[test]
    fn zero_variance_is_undefined() {
        let flat = pairs(vec![(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]);
        assert!(matches!(pearson(&flat), Err(Error::UndefinedCorrelation(_))));
        assert!(AccuracyPairs::new(vec![(1.0, 2.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn null_correlation_has_half_p() {
        for n in [3, 10, 30, 1000] {
            assert_eq!(one_tailed_p(0.0, n).unwrap().p_one_tailed, 0.5);
        }
        let p10 = one_tailed_p(0.4, 10).unwrap().p_one_tailed;
        let p40 = one_tailed_p(0.4, 40).unwrap().p_one_tailed;
        assert!(p40 < p10);
    }

    #[test]
    fn fisher_interval_properties() {
        let (lo, hi) = fisher_ci(0.0, 30, 0.95).unwrap();
        assert!((lo + hi).abs() < 1e-15);
        let w = |n| {
            let (lo, hi) = fisher_ci(0.5, n, 0.95).unwrap();
            hi - lo
        };
        assert!(w(50) < w(20) && w(200) < w(50));
        assert!(fisher_ci(0.5, 30, 1.0).is_err());
        assert!(fisher_ci(0.5, 30, 0.0).is_err());
        assert!(fisher_ci(0.5, 3, 0.95).is_err());
        let z = normal_critical(0.95).unwrap();
        assert!((z - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn affine_invariance() {
        let f = table5_fixture();
        let base = pearson(&f).unwrap();
        let scaled: Vec<(f64, f64)> = f.pairs().iter().map(|(x, y)| (3.5 * x - 20.0, *y)).collect();
        assert!((pearson(&pairs(scaled)).unwrap() - base).abs() < 1e-12);
        let scaled: Vec<(f64, f64)> = f.pairs().iter().map(|(x, y)| (*x, 0.01 * y + 4.0)).collect();
        assert!((pearson(&pairs(scaled)).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn ci_contains_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v: Vec<(f64, f64)> = (0..12)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (x, 0.7 * x + e)
                })
                .collect();
            let r = hypothesis_report(&pairs(v), 0.05).unwrap();
            assert!(r.ci95.0 <= r.rho && r.rho <= r.ci95.1);
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-15);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(50.0) - 144.565_743_946_344_9).abs() < 1e-11);
    }

    #[test]
    fn regularized_beta_symmetric_case() {
        // I_{1/2}(a, a) = 1/2
        for a in [0.5, 1.0, 2.5, 14.0, 50.0] {
            let v = regularized_beta(a, a, 0.5, 0.5);
            assert!((v - 0.5).abs() < 1e-13, "a = {a}: {:e}", v - 0.5);
        }
        // I_x(1, 1) = x
        assert!((regularized_beta(1.0, 1.0, 0.3, 0.7) - 0.3).abs() < 1e-15);
    }
}
