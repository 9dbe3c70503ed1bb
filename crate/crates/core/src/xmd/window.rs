use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::NUM_FEATURES;

use super::grid::GridSeries;
use super::labels::LabelTrack;

/// Width of an encoded window: values, masks and log-deltas side by side.
pub const XMD_WIDTH: usize = 3 * NUM_FEATURES;

/// One fixed-length training example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XmdWindow {
    pub participant_id: String,
    #[serde(default)]
    pub session: String,
    pub window_index: usize,
    /// Seconds from the session start.
    pub start_time: f64,
    pub label: u8,
    pub steps: usize,
    pub width: usize,
    /// `steps × width`, row-major.
    #[serde(skip)]
    pub z: Vec<f32>,
}

impl XmdWindow {
    pub fn feature_count(&self) -> usize {
        self.width / 3
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.z[t * self.width..(t + 1) * self.width]
    }
}

/// Concatenates three `T × F` blocks row by row into `T × 3F`.
pub fn encode_xmd(values: &[f64], masks: &[u8], log_deltas: &[f64], features: usize) -> Result<Vec<f32>> {
    if features == 0 || !values.len().is_multiple_of(features) {
        return Err(Error::Contract(format!(
            "value block of length {} is not a multiple of {features}",
            values.len()
        )));
    }
    if masks.len() != values.len() || log_deltas.len() != values.len() {
        return Err(Error::Contract(format!(
            "block lengths differ: values {}, masks {}, log-deltas {}",
            values.len(),
            masks.len(),
            log_deltas.len()
        )));
    }
    let steps = values.len() / features;
    let mut z = Vec::with_capacity(steps * 3 * features);
    for t in 0..steps {
        let r = t * features..(t + 1) * features;
        z.extend(values[r.clone()].iter().map(|&v| v as f32));
        z.extend(masks[r.clone()].iter().map(|&m| f32::from(m)));
        z.extend(log_deltas[r].iter().map(|&d| d as f32));
    }
    Ok(z)
}

/// Outcome of cutting one session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Windowing {
    pub windows: Vec<XmdWindow>,
    /// Windows whose midpoint lies beyond the label track.
    pub dropped: usize,
}

/// Cuts non-overlapping windows of `round(window_seconds · rate)` steps from
/// the session start and labels each by the interval containing its
/// midpoint. A trailing partial window is discarded.
pub fn window_and_label(
    grid: &GridSeries,
    labels: &LabelTrack,
    window_seconds: f64,
    session: &str,
) -> Result<Windowing> {
    let steps = (window_seconds * grid.sample_rate).round() as usize;
    if steps == 0 {
        return Err(Error::Config(format!(
            "window of {window_seconds}s at {} Hz has no steps",
            grid.sample_rate
        )));
    }
    let n = grid.steps / steps;
    let mut out = Windowing::default();
    if labels.is_empty() {
        log::warn!(
            "{} session {session}: empty label track, {n} windows dropped",
            grid.participant_id
        );
        out.dropped = n;
        return Ok(out);
    }
    let log_deltas = grid.log_deltas();
    for k in 0..n {
        let t_k = k as f64 * window_seconds;
        let Some(label) = labels.binary(labels.midpoint_index(t_k, window_seconds)) else {
            out.dropped += 1;
            continue;
        };
        let r = k * steps * NUM_FEATURES..(k + 1) * steps * NUM_FEATURES;
        let z = encode_xmd(
            &grid.values[r.clone()],
            &grid.masks[r.clone()],
            &log_deltas[r],
            NUM_FEATURES,
        )?;
        out.windows.push(XmdWindow {
            participant_id: grid.participant_id.clone(),
            session: session.to_string(),
            window_index: k,
            start_time: t_k,
            label,
            steps,
            width: XMD_WIDTH,
            z,
        });
    }
    if out.dropped > 0 {
        log::warn!(
            "{} session {session}: {} windows past the label track dropped",
            grid.participant_id,
            out.dropped
        );
    }
    Ok(out)
}

/// Checks an encoded window: masks are binary, log-deltas are
/// nonnegative, a step is observed exactly when its delta is zero, an
/// unobserved step after the first adds one grid step to the delta and
/// repeats the previous value. Returns the number of cells checked.
pub fn check_window_invariants(w: &XmdWindow, sample_rate: f64) -> Result<usize> {
    let f = w.feature_count();
    if w.z.len() != w.steps * w.width || w.width != 3 * f {
        return Err(Error::Contract(format!(
            "window {}#{} has {} values for {}×{}",
            w.participant_id,
            w.window_index,
            w.z.len(),
            w.steps,
            w.width
        )));
    }
    let dt = 1.0 / sample_rate;
    let fail = |t: usize, c: usize, what: &str| {
        Err(Error::Contract(format!(
            "window {}#{} step {t} feature {c}: {what}",
            w.participant_id, w.window_index
        )))
    };
    for t in 0..w.steps {
        let row = w.row(t);
        for c in 0..f {
            let m = row[f + c];
            let ld = f64::from(row[2 * f + c]);
            if m != 0.0 && m != 1.0 {
                return fail(t, c, "mask not binary");
            }
            if !(ld >= 0.0) {
                return fail(t, c, "negative log-delta");
            }
            let delta = ld.exp_m1();
            if (m == 1.0) != (delta == 0.0) {
                return fail(t, c, "mask and zero delta disagree");
            }
            if m == 0.0 && t > 0 {
                let prev_row = w.row(t - 1);
                let prev = f64::from(prev_row[2 * f + c]).exp_m1();
                // f32 storage bounds how exactly the recurrence replays.
                let tol = 1e-9 + 4.0 * f64::from(f32::EPSILON) * (1.0 + delta) * (1.0 + ld);
                if ((delta - prev) - dt).abs() > tol {
                    return fail(t, c, "delta recurrence broken");
                }
                if row[c].to_bits() != prev_row[c].to_bits() {
                    return fail(t, c, "imputed value differs from the previous step");
                }
            }
        }
    }
    Ok(w.steps * f)
}
