use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::canon::{Feature, NUM_FEATURES};
use super::recording::{RawRecording, SessionKind};

/// Fewer observations than this skip the percentile filter.
pub const MIN_FILTER_OBSERVATIONS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineFlagKind {
    /// No observations; μ=0, σ=1 substituted.
    Fallback,
    /// Too few observations for percentile filtering; all values used.
    Unfiltered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineFlag {
    pub feature: Feature,
    pub kind: BaselineFlagKind,
    pub observations: usize,
}

/// Per-feature resting-state location and scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
    pub flags: Vec<BaselineFlag>,
}

impl BaselineStats {
    /// μ=0, σ=1 everywhere.
    pub fn identity() -> Self {
        BaselineStats {
            mean: [0.0; NUM_FEATURES],
            std: [1.0; NUM_FEATURES],
            flags: Vec::new(),
        }
    }

    pub fn mean_of(&self, f: Feature) -> f64 {
        self.mean[f.index()]
    }

    pub fn std_of(&self, f: Feature) -> f64 {
        self.std[f.index()]
    }
}

/// Quantile `q` of sorted data by linear interpolation between order
/// statistics at position `q·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.5)
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Robust location and scale of one continuous channel: keep values within
/// [Q10, Q90], then take their median and standard deviation.
pub fn robust_stats(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kept: Vec<f64> = if sorted.len() >= MIN_FILTER_OBSERVATIONS {
        let lo = quantile_sorted(&sorted, 0.1);
        let hi = quantile_sorted(&sorted, 0.9);
        sorted.iter().copied().filter(|v| (lo..=hi).contains(v)).collect()
    } else {
        sorted
    };
    (median_sorted(&kept), population_std(&kept))
}

/// Baseline statistics from a resting-state session. Indicator channels are
/// fixed at μ=0, σ=1.
pub fn baseline_stats(rec: &RawRecording) -> Result<BaselineStats> {
    if rec.session_kind != SessionKind::Baseline {
        return Err(Error::Contract(format!(
            "baseline statistics need a baseline session, got {:?} for {}",
            rec.session_kind, rec.participant_id
        )));
    }
    let mut per: Vec<Vec<f64>> = vec![Vec::new(); NUM_FEATURES];
    for s in &rec.samples {
        per[s.feature.index()].push(s.value);
    }
    let mut stats = BaselineStats::identity();
    for f in Feature::ALL {
        if f.is_indicator() {
            continue;
        }
        let values = &per[f.index()];
        if values.is_empty() {
            stats.flags.push(BaselineFlag {
                feature: f,
                kind: BaselineFlagKind::Fallback,
                observations: 0,
            });
            log::warn!(
                "{}: no baseline observations for {f}, using mean 0 and std 1",
                rec.participant_id
            );
            continue;
        }
        if values.len() < MIN_FILTER_OBSERVATIONS {
            stats.flags.push(BaselineFlag {
                feature: f,
                kind: BaselineFlagKind::Unfiltered,
                observations: values.len(),
            });
        }
        let (mu, sigma) = robust_stats(values);
        stats.mean[f.index()] = mu;
        stats.std[f.index()] = sigma;
    }
    Ok(stats)
}
