use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::canon::{Feature, NUM_FEATURES};
use super::schema::SchemaProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKind {
    Experiment,
    Baseline,
}

/// One observed value of one canonical channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds.
    pub t: f64,
    pub feature: Feature,
    pub value: f64,
}

/// Asynchronous samples of one participant session, before gridding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecording {
    pub participant_id: String,
    pub session_kind: SessionKind,
    pub samples: Vec<Sample>,
}

impl RawRecording {
    pub fn new(participant_id: impl Into<String>, session_kind: SessionKind) -> Self {
        RawRecording {
            participant_id: participant_id.into(),
            session_kind,
            samples: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Earliest and latest timestamps.
    pub fn span(&self) -> Option<(f64, f64)> {
        let mut it = self.samples.iter().map(|s| s.t);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    /// Values of one channel in sample order.
    pub fn channel_values(&self, f: Feature) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.feature == f)
            .map(|s| s.value)
            .collect()
    }

    pub fn has_channel(&self, f: Feature) -> bool {
        self.samples.iter().any(|s| s.feature == f)
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let v: f64 = cell.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads one session CSV and maps its columns to canonical channels.
///
/// Cells that are empty, `NaN` or otherwise unparseable produce no sample.
/// Rows with an unusable timestamp are skipped entirely. Samples come back
/// sorted by time, ties kept in file order.
pub fn parse_recording(
    path: &Path,
    profile: &SchemaProfile,
    session_kind: SessionKind,
    participant_id: &str,
) -> Result<RawRecording> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    parse_reader(file, path, profile, session_kind, participant_id)
}

/// [`parse_recording`] over any reader; `path` is only used in messages.
pub fn parse_reader<R: std::io::Read>(
    reader: R,
    path: &Path,
    profile: &SchemaProfile,
    session_kind: SessionKind,
    participant_id: &str,
) -> Result<RawRecording> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    for col in profile
        .required
        .iter()
        .chain(std::iter::once(&profile.timestamp.column))
    {
        if !position.contains_key(col.as_str()) {
            return Err(Error::MissingColumn {
                path: path.to_path_buf(),
                column: col.clone(),
            });
        }
    }
    let ts_idx = position[profile.timestamp.column.as_str()];
    let mapped: Vec<(usize, Feature, _)> = profile
        .columns
        .iter()
        .filter_map(|m| position.get(m.column.as_str()).map(|&i| (i, m.feature, m.transform)))
        .collect();

    let mut rec = RawRecording::new(participant_id, session_kind);
    let mut rows = 0usize;
    let mut skipped = 0usize;
    for row in rdr.records() {
        let row = row?;
        rows += 1;
        let Some(t) = row.get(ts_idx).and_then(parse_cell) else {
            skipped += 1;
            continue;
        };
        let t = t * profile.timestamp.scale;
        for &(i, feature, transform) in &mapped {
            if let Some(v) = row.get(i).and_then(parse_cell) {
                rec.samples.push(Sample {
                    t,
                    feature,
                    value: transform.apply(v),
                });
            }
        }
    }
    if rows == 0 {
        return Err(Error::EmptyRecording(path.to_path_buf()));
    }
    if skipped > 0 {
        log::warn!(
            "{}: skipped {skipped} of {rows} rows with unusable timestamps",
            path.display()
        );
    }
    rec.samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(rec)
}

/// Keeps one sample per (timestamp, channel): the last one in input order.
/// Channels are resolved independently. Output is sorted by time, then by
/// canonical feature order.
pub fn coalesce_timestamps(rec: &RawRecording) -> RawRecording {
    let mut last: HashMap<(u64, Feature), usize> = HashMap::with_capacity(rec.samples.len());
    for (i, s) in rec.samples.iter().enumerate() {
        last.insert((s.t.to_bits(), s.feature), i);
    }
    let mut keep: Vec<usize> = last.into_values().collect();
    keep.sort_unstable();
    let mut samples: Vec<Sample> = keep.into_iter().map(|i| rec.samples[i]).collect();
    samples.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.feature.cmp(&b.feature)));
    RawRecording {
        participant_id: rec.participant_id.clone(),
        session_kind: rec.session_kind,
        samples,
    }
}

/// Writes a recording in the `generic` profile layout. Samples sharing a
/// timestamp share a row unless the channel repeats, so any sample multiset
/// survives a parse round-trip.
pub fn write_generic_csv<W: Write>(rec: &RawRecording, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp"];
    header.extend(Feature::ALL.iter().map(|f| f.name()));
    w.write_record(&header)?;

    let mut sorted = rec.samples.clone();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].t;
        let mut cells: [Option<f64>; NUM_FEATURES] = [None; NUM_FEATURES];
        let mut pending = Vec::new();
        while i < sorted.len() && sorted[i].t.to_bits() == t.to_bits() {
            let s = sorted[i];
            let slot = &mut cells[s.feature.index()];
            if slot.is_none() {
                *slot = Some(s.value);
            } else {
                pending.push(s);
            }
            i += 1;
        }
        write_row(&mut w, t, &cells)?;
        // Repeated channels at the same instant spill into extra rows.
        while !pending.is_empty() {
            let mut cells: [Option<f64>; NUM_FEATURES] = [None; NUM_FEATURES];
            pending.retain(|s| {
                let slot = &mut cells[s.feature.index()];
                if slot.is_none() {
                    *slot = Some(s.value);
                    false
                } else {
                    true
                }
            });
            write_row(&mut w, t, &cells)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, t: f64, cells: &[Option<f64>; NUM_FEATURES]) -> Result<()> {
    let mut rec = Vec::with_capacity(NUM_FEATURES + 1);
    rec.push(format!("{t:?}"));
    rec.extend(cells.iter().map(|c| c.map_or_else(String::new, |v| format!("{v:?}"))));
    w.write_record(&rec)?;
    Ok(())
}
