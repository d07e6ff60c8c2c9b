//! Small descriptive and inferential statistics helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Pearson correlation. Returns 0 when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Upper-tail probability `P(T > t)` of Student's t with `dof` degrees of freedom.
pub fn student_t_sf(t: f64, dof: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid t distribution");
    dist.sf(t)
}

/// Summary statistics serialized into reports. Undefined values (mean of
/// nothing, sd of one value) are NaN in memory and `null` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub sd: f64,
}

pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            n: xs.len(),
            mean: mean(xs),
            sd: sample_sd(xs),
        }
    }
}

/// Result of a one-sided test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    /// One-sided p-value for the alternative `mean > 0`.
    pub p_greater: f64,
}

/// One-sample t-test of `xs` against zero, one-sided towards positive mean.
pub fn one_sample_t_greater(xs: &[f64]) -> TTest {
    let n = xs.len() as f64;
    let m = mean(xs);
    let se = sample_sd(xs) / n.sqrt();
    let t = if se > 0.0 {
        m / se
    } else if m > 0.0 {
        f64::INFINITY
    } else if m < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let dof = n - 1.0;
    let p_greater = if t == f64::INFINITY {
        0.0
    } else if t == f64::NEG_INFINITY {
        1.0
    } else {
        student_t_sf(t, dof)
    };
    TTest { t, dof, p_greater }
}

/// Paired t-test, one-sided for `mean(a − b) > 0`.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> TTest {
    assert_eq!(a.len(), b.len(), "paired test needs equal lengths");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    one_sample_t_greater(&diffs)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(pearson(&a, &a), 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -2.0 * x + 1.0).collect();
        assert_abs_diff_eq!(pearson(&a, &neg), -1.0, epsilon = 1e-15);
        assert_eq!(pearson(&a, &[3.0; 4]), 0.0);
    }

    #[test]
    fn t_tail_matches_tables() {
        // t_{0.05, 6} = 1.943, t_{0.025, 10} = 2.228
        assert_abs_diff_eq!(student_t_sf(1.943, 6.0), 0.05, epsilon = 5e-4);
        assert_abs_diff_eq!(student_t_sf(2.228, 10.0), 0.025, epsilon = 5e-4);
    }

    #[test]
    fn paired_test_direction() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.5, 1.6, 2.4, 3.7, 4.2];
        let r = paired_t_greater(&a, &b);
        assert!(r.t > 0.0 && r.p_greater < 0.01);
        let r = paired_t_greater(&b, &a);
        assert!(r.p_greater > 0.99);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }
}
