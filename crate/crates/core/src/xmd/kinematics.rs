use crate::ingest::{Feature, RawRecording, Sample};

/// Fills in gaze velocity and acceleration from gaze position when the
/// recording carries no such channel. Velocity is the speed between
/// consecutive timestamps with both coordinates present; acceleration is
/// the difference of consecutive speeds over time. Returns the channels
/// that were derived.
///
/// Expects a coalesced recording.
pub fn derive_gaze_kinematics(rec: &mut RawRecording) -> Vec<Feature> {
    let need_v = !rec.has_channel(Feature::GazeVelocity);
    let need_a = !rec.has_channel(Feature::GazeAcceleration);
    if !need_v && !need_a {
        return Vec::new();
    }

    let mut points: Vec<(f64, Option<f64>, Option<f64>)> = Vec::new();
    for s in &rec.samples {
        if !matches!(s.feature, Feature::GazeX | Feature::GazeY) {
            continue;
        }
        if points.last().is_none_or(|p| p.0 != s.t) {
            points.push((s.t, None, None));
        }
        let p = points.last_mut().unwrap();
        if s.feature == Feature::GazeX {
            p.1 = Some(s.value);
        } else {
            p.2 = Some(s.value);
        }
    }
    let xy: Vec<(f64, f64, f64)> = points.into_iter().filter_map(|(t, x, y)| Some((t, x?, y?))).collect();

    let mut speeds: Vec<(f64, f64)> = Vec::new();
    for w in xy.windows(2) {
        let (t0, x0, y0) = w[0];
        let (t1, x1, y1) = w[1];
        let dt = t1 - t0;
        if dt > 0.0 {
            speeds.push((t1, (x1 - x0).hypot(y1 - y0) / dt));
        }
    }
    let mut added = Vec::new();
    let mut extra = Vec::new();
    if need_v && !speeds.is_empty() {
        extra.extend(speeds.iter().map(|&(t, v)| Sample {
            t,
            feature: Feature::GazeVelocity,
            value: v,
        }));
        added.push(Feature::GazeVelocity);
    }
    if need_a && speeds.len() > 1 {
        extra.extend(speeds.windows(2).map(|w| Sample {
            t: w[1].0,
            feature: Feature::GazeAcceleration,
            value: (w[1].1 - w[0].1) / (w[1].0 - w[0].0),
        }));
        added.push(Feature::GazeAcceleration);
    }
    if !extra.is_empty() {
        rec.samples.extend(extra);
        rec.samples
            .sort_by(|a, b| a.t.total_cmp(&b.t).then(a.feature.cmp(&b.feature)));
    }
    added
}
