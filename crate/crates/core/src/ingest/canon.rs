use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The ten canonical eye-tracking features. The declaration order is the
/// column order of every grid and window tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    PupilLeft,
    PupilRight,
    GazeX,
    GazeY,
    GazeVelocity,
    GazeAcceleration,
    FixationFlag,
    SaccadeFlag,
    BlinkFlag,
    Distance,
}

/// Number of canonical features.
pub const NUM_FEATURES: usize = 10;

impl Feature {
    pub const ALL: [Feature; NUM_FEATURES] = [
        Feature::PupilLeft,
        Feature::PupilRight,
        Feature::GazeX,
        Feature::GazeY,
        Feature::GazeVelocity,
        Feature::GazeAcceleration,
        Feature::FixationFlag,
        Feature::SaccadeFlag,
        Feature::BlinkFlag,
        Feature::Distance,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Feature> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::PupilLeft => "pupil_left",
            Feature::PupilRight => "pupil_right",
            Feature::GazeX => "gaze_x",
            Feature::GazeY => "gaze_y",
            Feature::GazeVelocity => "gaze_velocity",
            Feature::GazeAcceleration => "gaze_acceleration",
            Feature::FixationFlag => "fixation_flag",
            Feature::SaccadeFlag => "saccade_flag",
            Feature::BlinkFlag => "blink_flag",
            Feature::Distance => "distance",
        }
    }

    /// Binary event indicators (fixation, saccade, blink).
    pub fn is_indicator(self) -> bool {
        matches!(self, Feature::FixationFlag | Feature::SaccadeFlag | Feature::BlinkFlag)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown canonical feature `{s}`")))
    }
}
