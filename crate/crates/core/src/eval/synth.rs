use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Feature, NUM_FEATURES};
use crate::xmd::{compute_deltas, encode_xmd, DatasetMeta, PipelineConfig, WindowSet, XmdWindow};

/// Parameters of the synthetic XMD dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub participants: usize,
    pub windows_per_participant: usize,
    /// Steps per window.
    pub steps: usize,
    pub sample_rate: f64,
    /// Pupil mean difference between classes in units of the pupil noise
    /// standard deviation.
    pub separation: f64,
    /// Missingness bursts per second for low- and high-load windows.
    pub burst_rate_low: f64,
    pub burst_rate_high: f64,
    /// Burst length range in steps, inclusive.
    pub burst_min_steps: usize,
    pub burst_max_steps: usize,
    /// Standard deviation of per-participant pupil offsets.
    pub participant_offset_sd: f64,
    /// AR(1) coefficient of the continuous channels.
    pub ar_coefficient: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            participants: 6,
            windows_per_participant: 40,
            steps: 100,
            sample_rate: 50.0,
            separation: 1.5,
            burst_rate_low: 0.3,
            burst_rate_high: 0.6,
            burst_min_steps: 3,
            burst_max_steps: 15,
            participant_offset_sd: 0.2,
            ar_coefficient: 0.8,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// No label signal in either values or missingness.
    pub fn is_null(&self) -> bool {
        self.separation == 0.0 && self.burst_rate_low == self.burst_rate_high
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.participants >= 1
            && self.windows_per_participant >= 1
            && self.steps >= 1
            && self.sample_rate > 0.0
            && self.separation >= 0.0
            && self.burst_rate_low >= 0.0
            && self.burst_rate_high >= 0.0
            && self.burst_min_steps >= 1
            && self.burst_min_steps <= self.burst_max_steps
            && self.participant_offset_sd >= 0.0
            && (0.0..1.0).contains(&self.ar_coefficient);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic spec: {self:?}")))
        }
    }
}

struct Ar1 {
    rho: f64,
    innov: f64,
    state: f64,
}

impl Ar1 {
    fn new<R: Rng>(rho: f64, rng: &mut R, n: &Normal<f64>) -> Self {
        Ar1 {
            rho,
            innov: (1.0 - rho * rho).sqrt(),
            state: n.sample(rng),
        }
    }

    fn next<R: Rng>(&mut self, rng: &mut R, n: &Normal<f64>) -> f64 {
        self.state = self.rho * self.state + self.innov * n.sample(rng);
        self.state
    }
}

/// Generates baseline-normalized XMD windows directly. Labels are drawn
/// 50/50; pupil channels carry a class-dependent mean shift and every
/// window has missingness bursts (all eye channels unobserved, blink flag
/// raised) at a class-dependent rate.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<WindowSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let offset = Normal::new(0.0, spec.participant_offset_sd.max(f64::MIN_POSITIVE)).expect("offset sd");
    let width = spec.participant_offset_sd > 0.0;
    let dt = 1.0 / spec.sample_rate;
    let window_seconds = spec.steps as f64 * dt;
    let mut windows = Vec::new();

    for p in 0..spec.participants {
        let pid = format!("s{:02}", p + 1);
        let p_offset = if width { offset.sample(&mut rng) } else { 0.0 };
        for k in 0..spec.windows_per_participant {
            let label: u8 = u8::from(rng.random_bool(0.5));
            let shift = p_offset + spec.separation * (f64::from(label) - 0.5);
            let rate = if label == 1 {
                spec.burst_rate_high
            } else {
                spec.burst_rate_low
            };
            let missing = draw_bursts(spec, rate, &mut rng);
            let (values, masks) = synth_channels(spec, shift, &missing, &mut rng, &std_normal);
            let log_deltas: Vec<f64> = compute_deltas(&masks, NUM_FEATURES, spec.sample_rate)
                .into_iter()
                .map(f64::ln_1p)
                .collect();
            let z = encode_xmd(&values, &masks, &log_deltas, NUM_FEATURES)?;
            windows.push(XmdWindow {
                participant_id: pid.clone(),
                session: "synthetic".into(),
                window_index: k,
                start_time: k as f64 * window_seconds,
                label,
                steps: spec.steps,
                width: 3 * NUM_FEATURES,
                z,
            });
        }
    }

    let mut synthetic = serde_json::to_value(spec)?;
    synthetic["null_dataset"] = serde_json::Value::Bool(spec.is_null());
    Ok(WindowSet {
        meta: DatasetMeta {
            schema_profile: "synthetic".into(),
            pipeline: PipelineConfig {
                sample_rate: spec.sample_rate,
                window_seconds,
                ..PipelineConfig::default()
            },
            dropped_windows: 0,
            provenance: Vec::new(),
            synthetic: Some(synthetic),
        },
        windows,
    })
}

/// Per-step flag: inside a missingness burst.
fn draw_bursts<R: Rng>(spec: &SynthSpec, rate_per_second: f64, rng: &mut R) -> Vec<bool> {
    let mut missing = vec![false; spec.steps];
    let p_start = (rate_per_second / spec.sample_rate).min(1.0);
    let mut t = 0;
    while t < spec.steps {
        if rng.random_bool(p_start) {
            let len = rng.random_range(spec.burst_min_steps..=spec.burst_max_steps);
            for m in missing.iter_mut().skip(t).take(len) {
                *m = true;
            }
            t += len;
        } else {
            t += 1;
        }
    }
    missing
}

fn synth_channels<R: Rng>(
    spec: &SynthSpec,
    pupil_shift: f64,
    missing: &[bool],
    rng: &mut R,
    n: &Normal<f64>,
) -> (Vec<f64>, Vec<u8>) {
    let steps = spec.steps;
    let rho = spec.ar_coefficient;
    let mut values = vec![0.0; steps * NUM_FEATURES];
    let mut masks = vec![0u8; steps * NUM_FEATURES];
    let mut pupil_common = Ar1::new(rho, rng, n);
    let mut pupil_l = Ar1::new(rho, rng, n);
    let mut pupil_r = Ar1::new(rho, rng, n);
    let mut gx = Ar1::new(rho, rng, n);
    let mut gy = Ar1::new(rho, rng, n);
    let mut distance = n.sample(rng) * 0.5;
    let mut fixation = 1.0;
    let mut prev: [Option<f64>; NUM_FEATURES] = [None; NUM_FEATURES];
    let mut last_xy = (0.0, 0.0);
    let mut last_v = 0.0;
    let eye = [
        Feature::PupilLeft,
        Feature::PupilRight,
        Feature::GazeX,
        Feature::GazeY,
        Feature::GazeVelocity,
        Feature::GazeAcceleration,
    ];

    for t in 0..steps {
        let common = pupil_common.next(rng, n);
        let pl = pupil_shift + 0.8 * common + 0.6 * pupil_l.next(rng, n);
        let pr = pupil_shift + 0.8 * common + 0.6 * pupil_r.next(rng, n);
        let (x, y) = (gx.next(rng, n), gy.next(rng, n));
        let v = (x - last_xy.0).hypot(y - last_xy.1);
        let a = v - last_v;
        last_xy = (x, y);
        last_v = v;
        if rng.random_bool(0.05) {
            fixation = 1.0 - fixation;
        }
        let saccade = if rng.random_bool(0.03) { 1.0 } else { 0.0 };
        if t % 5 == 0 {
            distance += 0.05 * n.sample(rng);
        }
        let blink = if missing[t] { 1.0 } else { 0.0 };

        let mut observed: [Option<f64>; NUM_FEATURES] = [None; NUM_FEATURES];
        if !missing[t] {
            for (f, val) in eye.iter().zip([pl, pr, x, y, v, a]) {
                observed[f.index()] = Some(val);
            }
            observed[Feature::FixationFlag.index()] = Some(fixation);
            observed[Feature::SaccadeFlag.index()] = Some(saccade);
        }
        observed[Feature::BlinkFlag.index()] = Some(blink);
        if t % 5 == 0 {
            observed[Feature::Distance.index()] = Some(distance);
        }

        for f in 0..NUM_FEATURES {
            let i = t * NUM_FEATURES + f;
            match observed[f] {
                // Change detection: a repeated value is not a new observation.
                Some(val) if prev[f] != Some(val) => {
                    masks[i] = 1;
                    values[i] = val;
                    prev[f] = Some(val);
                }
                _ => {
                    values[i] = if t > 0 { values[i - NUM_FEATURES] } else { 0.0 };
                }
            }
        }
    }
    (values, masks)
}
