use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::xmd::XmdWindow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationKind {
    /// Whole participants held out.
    Participant,
    /// Windows held out per class.
    Window,
}

/// Indices (into the training windows) of the inner train and validation
/// parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSplit {
    pub kind: ValidationKind,
    pub participants: Vec<String>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

fn has_both(windows: &[&XmdWindow], idx: &[usize]) -> bool {
    let pos = idx.iter().filter(|&&i| windows[i].label == 1).count();
    pos > 0 && pos < idx.len()
}

/// Holds out `round(fraction · participants)` whole participants when that
/// is at least one, leaves at least one for training, and keeps both
/// classes in the training part. Otherwise holds out
/// `max(1, round(fraction · n_c))` windows of each class `c` that has at
/// least two windows.
pub fn split_validation<R: Rng>(windows: &[&XmdWindow], fraction: f64, rng: &mut R) -> ValidationSplit {
    let mut participants: Vec<&str> = windows.iter().map(|w| w.participant_id.as_str()).collect();
    participants.sort_unstable();
    participants.dedup();
    let n_val = (fraction * participants.len() as f64).round() as usize;
    if n_val >= 1 && n_val < participants.len() {
        let mut shuffled = participants.clone();
        shuffled.shuffle(rng);
        let mut held: Vec<String> = shuffled[..n_val].iter().map(|s| s.to_string()).collect();
        held.sort();
        let (val, train): (Vec<usize>, Vec<usize>) =
            (0..windows.len()).partition(|&i| held.contains(&windows[i].participant_id));
        if has_both(windows, &train) && !val.is_empty() {
            return ValidationSplit {
                kind: ValidationKind::Participant,
                participants: held,
                train,
                val,
            };
        }
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..windows.len()).filter(|&i| windows[i].label == class).collect();
        idx.shuffle(rng);
        let take = if idx.len() >= 2 {
            ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    ValidationSplit {
        kind: ValidationKind::Window,
        participants: Vec::new(),
        train,
        val,
    }
}
