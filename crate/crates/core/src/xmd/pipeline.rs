use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    baseline_stats, coalesce_timestamps, discover_participants, parse_recording, BaselineFlagKind, SchemaProfile,
    SessionKind,
};

use super::grid::{build_grid_series, MaskMode};
use super::io::{DatasetMeta, ProvenanceNote, WindowSet};
use super::kinematics::derive_gaze_kinematics;
use super::labels::{LabelTrack, DEFAULT_RATING_THRESHOLD};
use super::window::window_and_label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Grid rate in Hz.
    pub sample_rate: f64,
    pub window_seconds: f64,
    pub label_interval_seconds: f64,
    pub rating_threshold: u8,
    pub mask_mode: MaskMode,
    pub normalize_eps: f64,
    /// Derive gaze velocity/acceleration from position when a recording
    /// lacks them.
    pub derive_kinematics: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sample_rate: 50.0,
            window_seconds: 10.0,
            label_interval_seconds: 10.0,
            rating_threshold: DEFAULT_RATING_THRESHOLD,
            mask_mode: MaskMode::Change,
            normalize_eps: 1e-8,
            derive_kinematics: true,
        }
    }
}

impl PipelineConfig {
    pub fn window_steps(&self) -> usize {
        (self.window_seconds * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("sample_rate", self.sample_rate)?;
        positive("window_seconds", self.window_seconds)?;
        positive("label_interval_seconds", self.label_interval_seconds)?;
        positive("normalize_eps", self.normalize_eps)?;
        if self.window_steps() == 0 {
            return Err(Error::Config("window has zero grid steps".into()));
        }
        if !(1..=9).contains(&self.rating_threshold) {
            return Err(Error::Config(format!(
                "rating_threshold {} outside 1..=9",
                self.rating_threshold
            )));
        }
        Ok(())
    }
}

/// Turns a raw directory (see [`discover_participants`]) into labeled
/// windows. Participants are processed in id order; each experiment session
/// is windowed on its own.
pub fn preprocess_dataset(raw_dir: &Path, profile: &SchemaProfile, cfg: &PipelineConfig) -> Result<WindowSet> {
    cfg.validate()?;
    let participants = discover_participants(raw_dir)?;
    if participants.is_empty() {
        return Err(Error::Schema(format!(
            "{} contains no participant directories",
            raw_dir.display()
        )));
    }
    let mut windows = Vec::new();
    let mut provenance = Vec::new();
    let mut dropped = 0;
    let note = |pid: &str, kind: &str, detail: String| ProvenanceNote {
        participant_id: pid.to_string(),
        kind: kind.to_string(),
        detail,
    };

    for p in &participants {
        let pid = p.participant_id.as_str();
        let raw = parse_recording(&p.baseline, profile, SessionKind::Baseline, pid)?;
        let mut base_rec = coalesce_timestamps(&raw);
        if cfg.derive_kinematics {
            for f in derive_gaze_kinematics(&mut base_rec) {
                provenance.push(note(pid, "derived_channel", format!("baseline {f} from gaze position")));
            }
        }
        let base = baseline_stats(&base_rec)?;
        for flag in &base.flags {
            let kind = match flag.kind {
                BaselineFlagKind::Fallback => "baseline_fallback",
                BaselineFlagKind::Unfiltered => "baseline_unfiltered",
            };
            provenance.push(note(
                pid,
                kind,
                format!("{} ({} observations)", flag.feature, flag.observations),
            ));
        }

        for s in &p.sessions {
            let raw = parse_recording(&s.experiment, profile, SessionKind::Experiment, pid)?;
            let mut rec = coalesce_timestamps(&raw);
            if cfg.derive_kinematics {
                for f in derive_gaze_kinematics(&mut rec) {
                    provenance.push(note(
                        pid,
                        "derived_channel",
                        format!("session {} {f} from gaze position", s.name),
                    ));
                }
            }
            let labels = LabelTrack::from_csv(
                &s.labels,
                &profile.labels,
                cfg.label_interval_seconds,
                cfg.rating_threshold,
            )?;
            let grid = build_grid_series(&rec, &base, cfg.sample_rate, cfg.mask_mode, cfg.normalize_eps)?;
            let cut = window_and_label(&grid, &labels, cfg.window_seconds, &s.name)?;
            if cut.dropped > 0 {
                provenance.push(note(
                    pid,
                    "dropped_windows",
                    format!("session {}: {} past the label track", s.name, cut.dropped),
                ));
            }
            dropped += cut.dropped;
            windows.extend(cut.windows);
        }
    }
    Ok(WindowSet {
        meta: DatasetMeta {
            schema_profile: profile.name.clone(),
            pipeline: cfg.clone(),
            dropped_windows: dropped,
            provenance,
            synthetic: None,
        },
        windows,
    })
}
