//! Paired significance testing over per-user metric vectors.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy)]
pub struct PairedTTest {
    pub t: f64,
    /// One-sided p-value for H1: mean(a - b) > 0.
    pub p: f64,
    pub dof: usize,
    pub mean_diff: f64,
}

/// Paired one-sided t-test of `a` over `b` (H1: mean difference > 0),
/// n-1 degrees of freedom. Zero sample variance is an error unless a
/// `variance_floor` is supplied, in which case the variance is clamped
/// from below (an exact constant shift then gives p -> 0 or 1).
pub fn paired_t_test(a: &[f64], b: &[f64], variance_floor: Option<f64>) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(CoreError::Shape(format!(
            "paired vectors of different lengths: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(CoreError::Config("paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let mut var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    match variance_floor {
        Some(floor) => var = var.max(floor),
        None => {
            if var == 0.0 {
                return Err(CoreError::DegenerateVariance);
            }
        }
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| CoreError::Config(format!("t distribution: {e}")))?;
    Ok(PairedTTest { t, p: 1.0 - dist.cdf(t), dof: n - 1, mean_diff: mean })
}
