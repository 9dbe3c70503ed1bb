//! Synthetic XMD windows: class-shifted pupil signals with label-dependent
//! missingness bursts, written to disk and read back.

use cogload::eval::{generate_synthetic, SynthSpec};
use cogload::ingest::{Feature, NUM_FEATURES};
use cogload::xmd::{load_windows, serialize_windows};

fn main() -> cogload::Result<()> {
    let spec = SynthSpec::default();
    let set = generate_synthetic(&spec)?;
    println!(
        "{} participants x {} windows x {} steps: {:?}",
        spec.participants,
        spec.windows_per_participant,
        spec.steps,
        set.label_distribution()
    );
    for label in [0u8, 1] {
        let ws: Vec<_> = set.windows.iter().filter(|w| w.label == label).collect();
        let pupil = Feature::PupilLeft.index();
        let mean = |col: usize| {
            ws.iter()
                .map(|w| (0..w.steps).map(|t| f64::from(w.row(t)[col])).sum::<f64>() / w.steps as f64)
                .sum::<f64>()
                / ws.len() as f64
        };
        println!(
            "label {label}: mean left pupil {:+.3}, observed fraction {:.3}",
            mean(pupil),
            mean(NUM_FEATURES + pupil)
        );
    }

    let dir = tempfile::tempdir().map_err(|source| cogload::Error::Io {
        context: "creating a temp dir".into(),
        source,
    })?;
    let manifest = serialize_windows(&set, dir.path())?;
    let back = load_windows(&manifest)?;
    println!(
        "round trip through {} preserved windows: {}",
        manifest.display(),
        back.windows == set.windows
    );
    Ok(())
}
