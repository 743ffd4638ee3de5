//! Chain output analysis: autocorrelation time, rejection rates, and the
//! scalar series the benchmarks track.

use crate::error::{Error, Result};
use crate::samplers::GroupRecord;

/// Where the mean used for centering came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanSource {
    Known,
    Sample,
}

impl std::fmt::Display for MeanSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeanSource::Known => "known",
            MeanSource::Sample => "sample",
        })
    }
}

/// Estimated autocorrelation time of a scalar series.
#[derive(Clone, Copy, Debug)]
pub struct ActEstimate {
    pub tau: f64,
    pub max_lag: usize,
    pub mean_used: f64,
    pub mean_source: MeanSource,
}

/// Autocorrelation time `tau = 1 + 2 sum_{k=1..max_lag} rho_k`, with
/// autocovariances `gamma_k = (1/N) sum_{t} (y_t - m)(y_{t+k} - m)`
/// (divisor `N` at every lag, which biases long lags slightly toward zero
/// instead of inflating them).
///
/// Centering uses `known_mean` when the true mean is available; otherwise
/// the sample mean. The truncation at `max_lag` is the caller's choice and
/// is reported back in the estimate. Values below 1 are possible and
/// meaningful: they indicate anticorrelation at short lags.
pub fn act(values: &[f64], max_lag: usize, known_mean: Option<f64>) -> Result<ActEstimate> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if max_lag == 0 {
        return Err(Error::BadParam {
            name: "max_lag",
            why: "must be at least 1".into(),
        });
    }
    if values.len() <= max_lag {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            max_lag,
        });
    }
    if values.len() <= 10 * max_lag {
        eprintln!(
            "warning: series of length {} is short for max_lag {}; the tail \
             autocovariances are poorly determined",
            values.len(),
            max_lag
        );
    }
    let n = values.len();
    let (mean, mean_source) = match known_mean {
        Some(m) => (m, MeanSource::Known),
        None => (values.iter().sum::<f64>() / n as f64, MeanSource::Sample),
    };
    let centered: Vec<f64> = values.iter().map(|y| y - mean).collect();
    let gamma0 = centered.iter().map(|c| c * c).sum::<f64>() / n as f64;
    if gamma0 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut tau = 1.0;
    for k in 1..=max_lag {
        let mut acc = 0.0;
        for t in 0..n - k {
            acc += centered[t] * centered[t + k];
        }
        tau += 2.0 * (acc / n as f64) / gamma0;
    }
    Ok(ActEstimate {
        tau,
        max_lag,
        mean_used: mean,
        mean_source,
    })
}

/// Number of batches used for the standard error of `tau`.
const ACT_BATCHES: usize = 20;

/// [`act`] plus a batch-means standard error: the series is cut into 20
/// contiguous batches, `tau` is re-estimated on each batch around the
/// full-series mean, and the spread of those estimates gives the error.
/// The standard error is NaN when the batches are too short to estimate.
pub fn act_with_stderr(
    values: &[f64],
    max_lag: usize,
    known_mean: Option<f64>,
) -> Result<(ActEstimate, f64)> {
    let full = act(values, max_lag, known_mean)?;
    let batch_len = values.len() / ACT_BATCHES;
    if batch_len <= max_lag {
        return Ok((full, f64::NAN));
    }
    let mut taus = Vec::with_capacity(ACT_BATCHES);
    for b in 0..ACT_BATCHES {
        let batch = &values[b * batch_len..(b + 1) * batch_len];
        match act(batch, max_lag, Some(full.mean_used)) {
            Ok(est) => taus.push(est.tau),
            Err(Error::ZeroVariance) => return Ok((full, f64::NAN)),
            Err(e) => return Err(e),
        }
    }
    let m = taus.iter().sum::<f64>() / taus.len() as f64;
    let var = taus.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / (taus.len() - 1) as f64;
    let stderr = (var / taus.len() as f64).sqrt();
    Ok((full, stderr))
}

/// Fraction of rejected decisions over all records. NaN when the schedule
/// made no accept/reject decisions at all.
pub fn rejection_rate(records: &[GroupRecord]) -> f64 {
    let rejections: u64 = records.iter().map(|r| u64::from(r.rejections)).sum();
    let decisions: u64 = records.iter().map(|r| u64::from(r.decisions)).sum();
    rejections as f64 / decisions as f64
}

/// Scalar tracked per group record.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarKind {
    /// One position coordinate.
    Coordinate(usize),
    /// Potential energy at the group end.
    Energy,
    /// 1 when `lo < x[coord] < hi` (open interval), else 0.
    Indicator { coord: usize, lo: f64, hi: f64 },
}

impl std::fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarKind::Coordinate(i) => write!(f, "coord{i}"),
            ScalarKind::Energy => f.write_str("energy"),
            ScalarKind::Indicator { .. } => f.write_str("indicator"),
        }
    }
}

/// Extract the series of one scalar from group records.
pub fn derive_scalar(records: &[GroupRecord], kind: &ScalarKind) -> Result<Vec<f64>> {
    let need = match kind {
        ScalarKind::Coordinate(i) => Some(*i),
        ScalarKind::Indicator { coord, .. } => Some(*coord),
        ScalarKind::Energy => None,
    };
    if let (Some(i), Some(first)) = (need, records.first()) {
        if i >= first.x.len() {
            return Err(Error::BadParam {
                name: "coordinate",
                why: format!("index {i} out of range for dimension {}", first.x.len()),
            });
        }
    }
    Ok(records.iter().map(|r| derive_scalar_value(r, kind)).collect())
}

/// Value of one scalar for a single record. The coordinate index must be
/// in range; callers that stream records validate it once up front.
pub fn derive_scalar_value(record: &GroupRecord, kind: &ScalarKind) -> f64 {
    match kind {
        ScalarKind::Coordinate(i) => record.x[*i],
        ScalarKind::Energy => record.energy,
        ScalarKind::Indicator { coord, lo, hi } => {
            let x = record.x[*coord];
            f64::from(x > *lo && x < *hi)
        }
    }
}
