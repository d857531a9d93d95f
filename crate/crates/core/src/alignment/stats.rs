//! Correlation and Student-t kernels.

use serde::{Deserialize, Serialize};

use crate::error::{DegenerateSide, Error, Result};

pub const DEFAULT_FISHER_EPSILON: f64 = 1e-6;

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len().to_string(),
            actual: b.len().to_string(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: a.len(),
        });
    }
    if is_constant(a) {
        return Err(Error::DegenerateCorrelation(DegenerateSide::First));
    }
    if is_constant(b) {
        return Err(Error::DegenerateCorrelation(DegenerateSide::Second));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; ties share the average of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// `arctanh(r)` after clamping `r` into `[-1 + epsilon, 1 - epsilon]`.
pub fn fisher(r: f64, epsilon: f64) -> Result<f64> {
    if !(r.abs() <= 1.0) {
        return Err(Error::Domain(r));
    }
    Ok(r.clamp(-1.0 + epsilon, 1.0 - epsilon).atanh())
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
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
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
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
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    if df == 1.0 {
        // Cauchy
        return 0.5 - t.atan() / std::f64::consts::PI;
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    if t >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if df == 1.0 {
        return 0.5 + t.atan() / std::f64::consts::PI;
    }
    1.0 - student_t_sf(t, df)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// H1: mean difference > 0.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

impl TTest {
    fn from_t(t: f64, df: usize) -> Self {
        let p_one_sided = student_t_sf(t, df as f64);
        let p_two_sided = (2.0 * student_t_sf(t.abs(), df as f64)).min(1.0);
        Self {
            t,
            df,
            p_one_sided,
            p_two_sided,
        }
    }
}

/// One-sample t-test of `mean(diffs) > 0`, i.e. the paired test of the two
/// series the differences came from.
pub fn paired_t_test(diffs: &[f64]) -> Result<TTest> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if is_constant(diffs) {
        return Err(Error::DegenerateVariance);
    }
    let m = mean(diffs);
    let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1) as f64;
    let t = m / (var.sqrt() / (n as f64).sqrt());
    Ok(TTest::from_t(t, n - 1))
}

/// Significance of a correlation coefficient from `n` pairs via
/// `t = r * sqrt((n - 2) / (1 - r^2))`, `df = n - 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTest {
    pub r: f64,
    pub n: usize,
    pub df: usize,
    /// `None` when `|r| = 1` (t is unbounded).
    pub t: Option<f64>,
    pub p_two_sided: Option<f64>,
}

pub fn correlation_test(r: f64, n: usize) -> Result<CorrelationTest> {
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let df = n - 2;
    if r.abs() >= 1.0 {
        return Ok(CorrelationTest {
            r,
            n,
            df,
            t: None,
            p_two_sided: None,
        });
    }
    let t = r * (df as f64 / (1.0 - r * r)).sqrt();
    Ok(CorrelationTest {
        r,
        n,
        df,
        t: Some(t),
        p_two_sided: Some(TTest::from_t(t, df).p_two_sided),
    })
}
