use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LabelColumns;

/// Ratings at or above this are high load.
pub const DEFAULT_RATING_THRESHOLD: u8 = 5;

/// Subjective ratings (1–9) on consecutive fixed-length intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub interval_seconds: f64,
    pub ratings: Vec<u8>,
    pub threshold: u8,
}

impl LabelTrack {
    pub fn new(interval_seconds: f64, ratings: Vec<u8>, threshold: u8) -> Result<Self> {
        if !(interval_seconds.is_finite() && interval_seconds > 0.0) {
            return Err(Error::Config(format!(
                "label interval must be positive, got {interval_seconds}"
            )));
        }
        if let Some(r) = ratings.iter().find(|r| !(1..=9).contains(*r)) {
            return Err(Error::Schema(format!("rating {r} outside 1..=9")));
        }
        Ok(LabelTrack {
            interval_seconds,
            ratings,
            threshold,
        })
    }

    /// Reads `interval,rating` rows; intervals must be exactly `0..n` in
    /// any order.
    pub fn from_csv(path: &Path, columns: &LabelColumns, interval_seconds: f64, threshold: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
        };
        let ii = find(&columns.interval_column)?;
        let ri = find(&columns.rating_column)?;
        let mut pairs = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let parse = |i: usize| -> Result<i64> {
                let cell = row.get(i).unwrap_or("");
                cell.parse::<i64>()
                    .map_err(|_| Error::Schema(format!("{}: unparseable label cell `{cell}`", path.display())))
            };
            pairs.push((parse(ii)?, parse(ri)?));
        }
        pairs.sort_unstable();
        let mut ratings = Vec::with_capacity(pairs.len());
        for (expect, (idx, rating)) in pairs.into_iter().enumerate() {
            if idx != expect as i64 {
                return Err(Error::Schema(format!(
                    "{}: label intervals must be 0..n without gaps or repeats (found {idx} at position {expect})",
                    path.display()
                )));
            }
            let r = u8::try_from(rating).map_err(|_| Error::Schema(format!("rating {rating} outside 1..=9")))?;
            ratings.push(r);
        }
        LabelTrack::new(interval_seconds, ratings, threshold)
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Binary label of interval `i`, or `None` past the end of the track.
    pub fn binary(&self, i: usize) -> Option<u8> {
        self.ratings.get(i).map(|&r| u8::from(r >= self.threshold))
    }

    /// Interval index of a window `[t_k, t_k + w)` by its midpoint.
    pub fn midpoint_index(&self, t_k: f64, window_seconds: f64) -> usize {
        ((t_k + window_seconds / 2.0) / self.interval_seconds).floor() as usize
    }
}
