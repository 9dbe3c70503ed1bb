//! Raw CLARE-style recordings to labeled XMD windows, with the invariants
//! of every window checked.
//!
//! Usage: `cargo run --example preprocess_fixture [raw_dir]`; defaults to
//! the bundled two-participant fixture.

use std::path::PathBuf;

use cogload::ingest::SchemaProfile;
use cogload::xmd::{check_window_invariants, preprocess_dataset, PipelineConfig};

fn main() -> cogload::Result<()> {
    let raw = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/clare_mini"));
    let cfg = PipelineConfig::default();
    let set = preprocess_dataset(&raw, &SchemaProfile::builtin("clare")?, &cfg)?;
    let dist = set.label_distribution();
    println!(
        "{} windows of {} steps, labels {:?}",
        set.windows.len(),
        cfg.window_steps(),
        dist
    );
    for note in &set.meta.provenance {
        println!("  {} {}: {}", note.participant_id, note.kind, note.detail);
    }
    let mut cells = 0;
    for w in &set.windows {
        cells += check_window_invariants(w, cfg.sample_rate)?;
    }
    println!("invariants hold over {cells} cells");
    if let Some(w) = set.windows.first() {
        let f = w.feature_count();
        let observed = (0..w.steps).filter(|&t| w.row(t)[f] == 1.0).count();
        println!(
            "{}#{}: label {}, left pupil observed on {observed}/{} steps",
            w.participant_id, w.window_index, w.label, w.steps
        );
    }
    Ok(())
}
