use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One experiment session and its rating file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionFiles {
    pub name: String,
    pub experiment: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticipantFiles {
    pub participant_id: String,
    pub baseline: PathBuf,
    pub sessions: Vec<SessionFiles>,
}

/// Scans `<root>/<participant>/` directories for `baseline.csv` plus one or
/// more `experiment[_<name>].csv` / `labels[_<name>].csv` pairs.
/// Participants come back sorted by id, sessions by name.
pub fn discover_participants(root: &Path) -> Result<Vec<ParticipantFiles>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();

    let mut out = Vec::new();
    for dir in dirs {
        let id = dir
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Schema(format!("non-UTF-8 directory {}", dir.display())))?
            .to_string();
        let baseline = dir.join("baseline.csv");
        if !baseline.is_file() {
            return Err(Error::MissingBaseline(id));
        }
        let mut sessions = Vec::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(stem) = path
                .file_name()
                .and_then(|s| s.to_str())
                .and_then(|s| s.strip_suffix(".csv"))
            else {
                continue;
            };
            let Some(rest) = stem.strip_prefix("experiment") else {
                continue;
            };
            let name = match rest.strip_prefix('_') {
                Some(n) if !n.is_empty() => n.to_string(),
                _ if rest.is_empty() => "main".to_string(),
                _ => continue,
            };
            let labels = dir.join(format!("labels{rest}.csv"));
            if !labels.is_file() {
                return Err(Error::Schema(format!(
                    "{} has no matching {}",
                    path.display(),
                    labels.display()
                )));
            }
            sessions.push(SessionFiles {
                name,
                experiment: path,
                labels,
            });
        }
        if sessions.is_empty() {
            log::warn!("participant {id} has no experiment sessions");
        }
        sessions.sort_by(|a, b| a.name.cmp(&b.name));
        out.push(ParticipantFiles {
            participant_id: id,
            baseline,
            sessions,
        });
    }
    Ok(out)
}
