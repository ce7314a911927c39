//! Small numeric helpers shared by the diagnosis and analysis modules.

use std::cell::RefCell;

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 95% normal quantile used throughout reports.
pub const Z_95: f64 = 1.959964;

/// Two-sided normal quantile for a confidence level in (0, 1).
///
/// Returns [`Z_95`] exactly at 0.95 so every 95% figure uses the same constant.
pub fn z_for_confidence(conf: f64) -> f64 {
    if (conf - 0.95).abs() < 1e-12 {
        return Z_95;
    }
    let normal = Normal::standard();
    normal.inverse_cdf(1.0 - (1.0 - conf) / 2.0)
}

/// Two-sided p-value of a standard-normal test statistic.
pub fn two_sided_normal_p(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

thread_local! {
    static LN_FACT: RefCell<Vec<f64>> = RefCell::new(vec![0.0]);
}

/// `ln(n!)`, from a per-thread table that grows on demand.
pub fn ln_factorial(n: usize) -> f64 {
    LN_FACT.with(|cell| {
        let mut table = cell.borrow_mut();
        while table.len() <= n {
            let k = table.len();
            let next = table[k - 1] + (k as f64).ln();
            table.push(next);
        }
        table[n]
    })
}

/// Two-sided Fisher exact test on the 2x2 table
///
/// ```text
///            success  failure
///   group 1     a        b
///   group 2     c        d
/// ```
///
/// The p-value sums the hypergeometric probabilities of every table with the
/// observed margins that is no more likely than the observed one, with the
/// usual `1 + 1e-7` relative tolerance on ties.
pub fn fisher_exact_two_sided(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let row1 = (a + b) as usize;
    let row2 = (c + d) as usize;
    let col1 = (a + c) as usize;
    let total = row1 + row2;
    if row1 == 0 || row2 == 0 || col1 == 0 || col1 == total {
        return 1.0;
    }
    let lo = col1.saturating_sub(row2);
    let hi = col1.min(row1);
    let ln_denominator = ln_factorial(total) - ln_factorial(col1) - ln_factorial(total - col1);
    let ln_p = |x: usize| -> f64 {
        ln_factorial(row1) - ln_factorial(x) - ln_factorial(row1 - x) + ln_factorial(row2)
            - ln_factorial(col1 - x)
            - ln_factorial(row2 - (col1 - x))
            - ln_denominator
    };
    let observed = ln_p(a as usize);
    let threshold = observed + (1.0f64 + 1e-7).ln();
    let mut p = 0.0;
    for x in lo..=hi {
        let lp = ln_p(x);
        if lp <= threshold {
            p += lp.exp();
        }
    }
    p.min(1.0)
}

/// Binomial probability mass, computed in log space.
pub fn binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let (k, n) = (k as usize, n as usize);
    let ln = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
        + k as f64 * p.ln()
        + (n - k) as f64 * (1.0 - p).ln();
    ln.exp()
}
