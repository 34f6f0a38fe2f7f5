//! Paired Student t-test, with the t distribution evaluated through the
//! regularized incomplete beta function.

use alloc::format;

use crate::math::{abs, exp, log, pairwise_sum, sqrt};
use crate::{Error, Result};

const CF_MAX_ITER: usize = 300;
const CF_EPS: f64 = 1e-15;
const FPMIN: f64 = 1e-300;

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if abs(d) < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if abs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if abs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if abs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if abs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if abs(del - 1.0) < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * log(x) + b * log(1.0 - x);
    let front = exp(ln_front);
    // Use the symmetry relation where the continued fraction converges fast.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-tailed tail probability `P(|T| ≥ |t|)` for Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Student's t CDF.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_tailed(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_diff: f64,
    /// Sample standard deviation of the differences (n - 1 denominator).
    pub std_diff: f64,
    pub t: f64,
    pub df: f64,
    /// Two-tailed.
    pub p: f64,
    pub significant: bool,
    /// Differences had zero variance with nonzero mean; `t` is infinite
    /// and `p` is reported as 0.
    pub degenerate: bool,
}

/// Paired t-test on `d = a - b`, pairing by index.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("paired t-test needs n >= 2, got {n}")));
    }
    let d: alloc::vec::Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = pairwise_sum(&d) / nf;
    let sq: alloc::vec::Vec<f64> = d.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (nf - 1.0);
    let std = sqrt(var);
    let df = nf - 1.0;
    let (t, p, degenerate) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0, false)
        } else {
            (if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }, 0.0, true)
        }
    } else {
        let t = mean / (std / sqrt(nf));
        (t, student_t_two_tailed(t, df), false)
    };
    Ok(PairedTTest {
        n,
        mean_diff: mean,
        std_diff: std,
        t,
        df,
        p,
        significant: p < SIGNIFICANCE_LEVEL,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn closed_form_example() {
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_t_test(&d, &[0.0; 5]).unwrap();
        // mean 3, std sqrt(2.5), t = 3 / (sqrt(2.5) / sqrt(5)) = 3 * sqrt(2)
        assert!((r.t - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((r.t - 4.2426).abs() < 1e-3);
        assert!((r.p - 0.0132).abs() < 1e-3, "p = {}", r.p);
        assert!(r.significant);
        // Independent oracle for the distribution function.
        let oracle = 2.0 * StudentsT::new(0.0, 1.0, 4.0).unwrap().sf(r.t);
        assert!((r.p - oracle).abs() < 1e-10);
    }

    #[test]
    fn identical_samples() {
        let a = [0.3, 1.2, 5.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p, r.significant, r.degenerate), (0.0, 1.0, false, false));
    }

    #[test]
    fn symmetric_differences_give_zero_t() {
        let r = paired_t_test(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.mean_diff, 0.0);
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_nonzero_difference_is_degenerate() {
        let r = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 0.0);
        assert!(r.t.is_infinite() && r.t > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn tabulated_critical_values() {
        // Two-tailed 5% critical values of Student's t.
        for (df, crit) in [(1.0, 12.706), (4.0, 2.776), (10.0, 2.228), (19.0, 2.093), (30.0, 2.042)] {
            let p = student_t_two_tailed(crit, df);
            assert!((p - 0.05).abs() < 2e-4, "df {df}: p {p}");
        }
        // One-tailed 1%: df 19 -> 2.539.
        assert!((student_t_cdf(2.539, 19.0) - 0.99).abs() < 1e-4);
        assert!((student_t_cdf(-2.539, 19.0) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn incomplete_beta_against_statrs() {
        for &(a, b) in &[(0.5, 0.5), (2.0, 0.5), (9.5, 0.5), (3.0, 7.0), (20.0, 1.5)] {
            for i in 1..20 {
                let x = i as f64 / 20.0;
                let ours = reg_inc_beta(a, b, x);
                let theirs = statrs::function::beta::beta_reg(a, b, x);
                assert!((ours - theirs).abs() < 1e-8, "I_{x}({a},{b}): {ours} vs {theirs}");
            }
        }
        assert_eq!(reg_inc_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(reg_inc_beta(2.0, 3.0, 1.0), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn permutation_and_negation(d in proptest::collection::vec(-10.0f64..10.0, 3..25), rot in 0usize..25) {
                let zeros = vec![0.0; d.len()];
                let base = paired_t_test(&d, &zeros).unwrap();
                let mut perm: Vec<f64> = d.clone();
                let len = perm.len();
                perm.rotate_left(rot % len);
                perm.reverse();
                let r = paired_t_test(&perm, &zeros).unwrap();
                prop_assert!((r.t - base.t).abs() <= 1e-9 * (1.0 + base.t.abs()));
                prop_assert!((r.p - base.p).abs() <= 1e-9);
                let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                let n = paired_t_test(&neg, &zeros).unwrap();
                prop_assert!((n.t + base.t).abs() <= 1e-9 * (1.0 + base.t.abs()));
                prop_assert!((n.p - base.p).abs() <= 1e-12);
            }
        }
    }
}
