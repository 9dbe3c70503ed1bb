use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[default]
    Loso,
    Kfold,
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loso" => Ok(ProtocolKind::Loso),
            "kfold" => Ok(ProtocolKind::Kfold),
            other => Err(Error::Config(format!(
                "unknown protocol `{other}` (expected loso or kfold)"
            ))),
        }
    }
}

/// Participant-level train/test assignment of one fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub protocol: ProtocolKind,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn distinct_sorted(participants: &[String]) -> Vec<String> {
    let mut p = participants.to_vec();
    p.sort();
    p.dedup();
    p
}

/// One fold per participant, testing that participant alone.
pub fn make_loso_splits(participants: &[String]) -> Result<Vec<FoldSplit>> {
    let p = distinct_sorted(participants);
    if p.len() < 2 {
        return Err(Error::Protocol(format!(
            "LOSO needs at least 2 participants, got {}",
            p.len()
        )));
    }
    Ok(p.iter()
        .enumerate()
        .map(|(i, held)| FoldSplit {
            fold_id: i,
            protocol: ProtocolKind::Loso,
            train: p.iter().filter(|q| *q != held).cloned().collect(),
            test: vec![held.clone()],
        })
        .collect())
}

/// Shuffles participants with `seed` and cuts them into `k` contiguous
/// groups whose sizes differ by at most one; group `i` is fold `i`'s test
/// set.
pub fn make_kfold_splits(participants: &[String], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let mut p = distinct_sorted(participants);
    if k < 2 || k > p.len() {
        return Err(Error::Protocol(format!(
            "K-fold needs 2 ≤ k ≤ participants, got k={k} with {} participants",
            p.len()
        )));
    }
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (p.len() / k, p.len() % k);
    let mut start = 0;
    let mut folds = Vec::with_capacity(k);
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut test = p[start..start + size].to_vec();
        test.sort();
        let mut train: Vec<String> = p[..start].iter().chain(&p[start + size..]).cloned().collect();
        train.sort();
        folds.push(FoldSplit {
            fold_id: i,
            protocol: ProtocolKind::Kfold,
            train,
            test,
        });
        start += size;
    }
    Ok(folds)
}

/// Checks that each fold's train and test sets are disjoint and that the
/// test sets partition `participants`.
pub fn validate_splits(splits: &[FoldSplit], participants: &[String]) -> Result<()> {
    let all = distinct_sorted(participants);
    let mut tested: Vec<String> = Vec::new();
    for s in splits {
        if let Some(p) = s.test.iter().find(|p| s.train.contains(p)) {
            return Err(Error::Protocol(format!(
                "fold {}: {p} is in both train and test",
                s.fold_id
            )));
        }
        if let Some(p) = s.test.iter().chain(&s.train).find(|p| !all.contains(p)) {
            return Err(Error::Protocol(format!("fold {}: unknown participant {p}", s.fold_id)));
        }
        tested.extend(s.test.iter().cloned());
    }
    tested.sort();
    if tested != all {
        return Err(Error::Protocol(
            "test sets do not cover every participant exactly once".into(),
        ));
    }
    Ok(())
}
