use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BaselineStats, Feature, RawRecording, NUM_FEATURES};

/// Slack when assigning a timestamp to a grid interval, in grid steps.
const CELL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// An arrival counts only if its value differs from the previous
    /// observation of that channel.
    #[default]
    Change,
    /// Every arrival counts.
    Arrival,
}

/// Resampled values before imputation. `values[t * F + f]` is `None` until
/// the channel has been observed.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGrid {
    pub start_time: f64,
    pub sample_rate: f64,
    pub steps: usize,
    pub values: Vec<Option<f64>>,
}

/// Uniform-rate values, masks and deltas for one session.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSeries {
    pub participant_id: String,
    pub start_time: f64,
    pub sample_rate: f64,
    pub steps: usize,
    /// `steps × F`, row-major.
    pub values: Vec<f64>,
    pub masks: Vec<u8>,
    /// Seconds since the last observation.
    pub deltas: Vec<f64>,
}

impl GridSeries {
    pub fn log_deltas(&self) -> Vec<f64> {
        self.deltas.iter().map(|d| d.ln_1p()).collect()
    }

    /// Checks that a cell is observed exactly when its delta is zero, that
    /// deltas follow `δ_t = δ_{t−1} + 1/rate` (`δ_0 = 1/rate`) while
    /// unobserved, and that unobserved cells repeat the previous value.
    /// Returns the number of cells checked.
    pub fn check_invariants(&self) -> Result<usize> {
        let f = NUM_FEATURES;
        let n = self.steps * f;
        if self.values.len() != n || self.masks.len() != n || self.deltas.len() != n {
            return Err(Error::Contract(format!(
                "grid of {} steps has {}/{}/{} values/masks/deltas",
                self.steps,
                self.values.len(),
                self.masks.len(),
                self.deltas.len()
            )));
        }
        let dt = 1.0 / self.sample_rate;
        for i in 0..n {
            let (t, c) = (i / f, i % f);
            let fail = |what: &str| {
                Err(Error::Contract(format!(
                    "grid {} step {t} feature {c}: {what}",
                    self.participant_id
                )))
            };
            let (m, d) = (self.masks[i], self.deltas[i]);
            if m > 1 {
                return fail("mask not binary");
            }
            if (m == 1) != (d == 0.0) {
                return fail("mask and zero delta disagree");
            }
            if m == 0 {
                let expected = if t == 0 { dt } else { self.deltas[i - f] + dt };
                if (d - expected).abs() > 1e-9 * (1.0 + expected) {
                    return fail("delta recurrence broken");
                }
                if t > 0 && self.values[i].to_bits() != self.values[i - f].to_bits() {
                    return fail("imputed value differs from the previous step");
                }
            }
        }
        Ok(n)
    }
}

/// Index of the grid interval `((k−1)/rate, k/rate]` containing `t`.
pub fn grid_cell(t: f64, start: f64, rate: f64) -> usize {
    let s = (t - start) * rate;
    (s - CELL_TOLERANCE).ceil().max(0.0) as usize
}

/// Number of grid points from the first to the last sample inclusive.
pub fn grid_steps(rec: &RawRecording, rate: f64) -> usize {
    match rec.span() {
        None => 0,
        Some((lo, hi)) => ((hi - lo) * rate + CELL_TOLERANCE).floor() as usize + 1,
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sample rate must be positive, got {rate}")))
    }
}

/// Forward-fill resampling onto `k/rate` from the first sample. Each cell
/// holds the latest observation at or before its grid time.
pub fn resample_to_grid(rec: &RawRecording, rate: f64) -> Result<RawGrid> {
    check_rate(rate)?;
    let steps = grid_steps(rec, rate);
    let start = rec.span().map_or(0.0, |s| s.0);
    let mut latest: Vec<Option<f64>> = vec![None; steps * NUM_FEATURES];
    let mut latest_t = vec![f64::NEG_INFINITY; steps * NUM_FEATURES];
    for s in &rec.samples {
        let k = grid_cell(s.t, start, rate).min(steps - 1);
        let i = k * NUM_FEATURES + s.feature.index();
        if s.t >= latest_t[i] {
            latest_t[i] = s.t;
            latest[i] = Some(s.value);
        }
    }
    for k in 1..steps {
        for f in 0..NUM_FEATURES {
            let i = k * NUM_FEATURES + f;
            if latest[i].is_none() {
                latest[i] = latest[i - NUM_FEATURES];
            }
        }
    }
    Ok(RawGrid {
        start_time: start,
        sample_rate: rate,
        steps,
        values: latest,
    })
}

/// Observation masks from the source timestamps. Under [`MaskMode::Change`]
/// the first observation of a channel always counts and later ones count
/// only when the value changes.
pub fn compute_masks(rec: &RawRecording, grid: &RawGrid, mode: MaskMode) -> Vec<u8> {
    let mut masks = vec![0u8; grid.steps * NUM_FEATURES];
    let mut order: Vec<usize> = (0..rec.samples.len()).collect();
    order.sort_by(|&a, &b| rec.samples[a].t.total_cmp(&rec.samples[b].t));
    let mut previous: [Option<f64>; NUM_FEATURES] = [None; NUM_FEATURES];
    for i in order {
        let s = rec.samples[i];
        let f = s.feature.index();
        let counts = match mode {
            MaskMode::Arrival => true,
            MaskMode::Change => previous[f] != Some(s.value),
        };
        previous[f] = Some(s.value);
        if counts {
            let k = grid_cell(s.t, grid.start_time, grid.sample_rate).min(grid.steps - 1);
            masks[k * NUM_FEATURES + f] = 1;
        }
    }
    masks
}

/// Elapsed time since the last observation, per channel. An unobserved first
/// step counts as one grid step.
pub fn compute_deltas(masks: &[u8], features: usize, rate: f64) -> Vec<f64> {
    let dt = 1.0 / rate;
    let mut deltas = vec![0.0; masks.len()];
    for (i, &m) in masks.iter().enumerate() {
        deltas[i] = if m == 1 {
            0.0
        } else if i < features {
            dt
        } else {
            deltas[i - features] + dt
        };
    }
    deltas
}

/// Forward-fill imputation: observed cells keep their value, unobserved
/// cells repeat the previous imputed value, and cells before any
/// observation take the baseline mean.
pub fn impute_values(grid: &RawGrid, masks: &[u8], base: &BaselineStats) -> Result<Vec<f64>> {
    if masks.len() != grid.values.len() {
        return Err(Error::Contract(format!(
            "mask length {} differs from grid length {}",
            masks.len(),
            grid.values.len()
        )));
    }
    let mut out = vec![0.0; grid.values.len()];
    for i in 0..out.len() {
        let f = i % NUM_FEATURES;
        out[i] = if masks[i] == 1 {
            grid.values[i].ok_or_else(|| Error::Contract(format!("observed cell {i} has no resampled value")))?
        } else if i >= NUM_FEATURES {
            out[i - NUM_FEATURES]
        } else {
            base.mean[f]
        };
    }
    Ok(out)
}

/// In-place `(x − μ_f) / (σ_f + eps)` on a `steps × F` buffer.
pub fn normalize(values: &mut [f64], base: &BaselineStats, eps: f64) {
    for (i, v) in values.iter_mut().enumerate() {
        let f = i % NUM_FEATURES;
        *v = (*v - base.mean[f]) / (base.std[f] + eps);
    }
}

/// Runs resampling, masking, deltas, imputation and normalization for one
/// coalesced session.
pub fn build_grid_series(
    rec: &RawRecording,
    base: &BaselineStats,
    rate: f64,
    mode: MaskMode,
    eps: f64,
) -> Result<GridSeries> {
    let grid = resample_to_grid(rec, rate)?;
    let masks = compute_masks(rec, &grid, mode);
    let deltas = compute_deltas(&masks, NUM_FEATURES, rate);
    let mut values = impute_values(&grid, &masks, base)?;
    normalize(&mut values, base, eps);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            stage: format!(
                "normalize {} feature {}",
                rec.participant_id,
                Feature::from_index(i % NUM_FEATURES).unwrap()
            ),
        });
    }
    Ok(GridSeries {
        participant_id: rec.participant_id.clone(),
        start_time: grid.start_time,
        sample_rate: rate,
        steps: grid.steps,
        values,
        masks,
        deltas,
    })
}
