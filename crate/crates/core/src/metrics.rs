//! Abundance and reconstruction error metrics, and the paired signed-rank test
//! used to compare two unmixing methods over repeated runs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use crate::unmixing::EndmemberMatrix;

/// Sample sizes up to this use the exact null distribution.
pub const EXACT_MAX_N: usize = 12;

/// Minimum number of nonzero paired differences for the signed-rank test.
pub const MIN_EFFECTIVE_N: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Abundance SRE in dB; `+∞` when the estimate is exact.
    pub sre_db: f64,
    pub rmse: f64,
    pub per_endmember_sre: Vec<f64>,
}

impl MetricReport {
    pub fn compute(truth: &Tensor3, est: &Tensor3, cube: &Tensor3, m: &EndmemberMatrix) -> Result<Self> {
        Ok(MetricReport {
            sre_db: sre(truth, est)?,
            rmse: reconstruction_rmse(cube, m, est)?,
            per_endmember_sre: per_endmember_sre(truth, est)?,
        })
    }
}

/// Signal-to-reconstruction error `10·log₁₀(‖A‖²_F / ‖A − Â‖²_F)` in dB.
///
/// Returns `f64::INFINITY` when `est` equals `truth` exactly.
pub fn sre(truth: &Tensor3, est: &Tensor3) -> Result<f64> {
    let err = truth.squared_distance(est)?;
    let signal = truth.squared_norm();
    if signal == 0.0 {
        return Err(Error::UndefinedMetric("SRE of an all-zero reference".into()));
    }
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// SRE of each abundance map (mode-3 slice) separately.
pub fn per_endmember_sre(truth: &Tensor3, est: &Tensor3) -> Result<Vec<f64>> {
    truth.check_same_dims(est)?;
    let r = truth.dims().2;
    let mut signal = vec![0.0; r];
    let mut err = vec![0.0; r];
    for (t, e) in truth.fibers().zip(est.fibers()) {
        for k in 0..r {
            signal[k] += t[k] * t[k];
            err[k] += (t[k] - e[k]) * (t[k] - e[k]);
        }
    }
    Ok(signal
        .iter()
        .zip(&err)
        .map(|(&s, &e)| match (s, e) {
            (0.0, _) => f64::NAN,
            (_, 0.0) => f64::INFINITY,
            (s, e) => 10.0 * (s / e).log10(),
        })
        .collect())
}

/// Root-mean-square of `R − M·A` over all cube entries.
pub fn reconstruction_rmse(cube: &Tensor3, m: &EndmemberMatrix, a: &Tensor3) -> Result<f64> {
    let (n1, n2, l) = cube.dims();
    if l != m.bands() || a.dims() != (n1, n2, m.count()) {
        return Err(Error::Dimension(format!(
            "cube {:?}, abundances {:?} and {}x{} endmembers are not conformable",
            cube.dims(),
            a.dims(),
            m.bands(),
            m.count()
        )));
    }
    if cube.is_empty() {
        return Ok(0.0);
    }
    let model = m.forward(a)?;
    Ok((cube.squared_distance(&model)? / cube.len() as f64).sqrt())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences `x − y` (W⁺).
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub reject_at_alpha: bool,
    /// Whether the p-value comes from the exact null distribution.
    pub exact: bool,
}

/// Left-tailed paired Wilcoxon signed-rank test of `median(x) < median(y)`.
///
/// Differences are `x − y`; zero differences are dropped and tied absolute
/// differences get average ranks. The p-value is `P(W⁺ ≤ w)` under the null,
/// exact for up to [`EXACT_MAX_N`] nonzero differences and from the normal
/// approximation with continuity and tie corrections above that.
pub fn wilcoxon_signed_rank_one_tailed(x: &[f64], y: &[f64], alpha: f64) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("paired samples differ in length: {} vs {}", x.len(), y.len())));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("signed-rank test needs finite samples".into()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n < MIN_EFFECTIVE_N {
        return Err(Error::InsufficientData(format!(
            "{n} nonzero paired differences, at least {MIN_EFFECTIVE_N} required"
        )));
    }

    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let statistic: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    let (p_value, exact) = if n <= EXACT_MAX_N {
        (exact_left_tail(&ranks, statistic), true)
    } else {
        (normal_left_tail(&ranks, statistic), false)
    };
    Ok(WilcoxonResult { statistic, p_value, n_effective: n, reject_at_alpha: p_value <= alpha, exact })
}

/// 1-based ranks with ties replaced by their average.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end share ranks start+1 ..= end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// `P(W⁺ ≤ w)` by counting sign assignments. Ranks are multiples of ½, so the
/// distribution is tracked over doubled rank sums, which are integers.
fn exact_left_tail(ranks: &[f64], statistic: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &d in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + d] += counts[s];
            }
        }
        reach += d;
    }
    let limit = (2.0 * statistic).round() as usize;
    let hits: u64 = counts[..=limit.min(total)].iter().sum();
    hits as f64 / (1u64 << ranks.len()) as f64
}

fn normal_left_tail(ranks: &[f64], statistic: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = (statistic + 0.5 - mean) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.cdf(z).clamp(0.0, 1.0)
}
