use proptest::prelude::*;

use super::*;
use crate::ingest::{BaselineStats, Feature, RawRecording, Sample, SessionKind, NUM_FEATURES};

const F: usize = NUM_FEATURES;

fn rec(samples: &[(f64, Feature, f64)]) -> RawRecording {
    let mut r = RawRecording::new("p01", SessionKind::Experiment);
    r.samples = samples
        .iter()
        .map(|&(t, feature, value)| Sample { t, feature, value })
        .collect();
    r
}

fn column<T: Copy>(buf: &[T], f: Feature) -> Vec<T> {
    buf.iter().skip(f.index()).step_by(F).copied().collect()
}

const PL: Feature = Feature::PupilLeft;
const GX: Feature = Feature::GazeX;

#[test]
fn resample_forward_fills() {
    let r = rec(&[(0.00, PL, 1.0), (0.03, PL, 2.0), (0.04, GX, 7.0)]);
    let g = resample_to_grid(&r, 50.0).unwrap();
    assert_eq!(g.steps, 3);
    assert_eq!(column(&g.values, PL), vec![Some(1.0), Some(1.0), Some(2.0)]);
    // Before the first gaze sample the channel is absent.
    assert_eq!(column(&g.values, GX), vec![None, None, Some(7.0)]);
}

#[test]
fn on_grid_observation_is_verbatim() {
    let r = rec(&[(0.0, PL, 1.0), (0.02, PL, 4.25), (0.06, PL, 5.0)]);
    let g = resample_to_grid(&r, 50.0).unwrap();
    assert_eq!(column(&g.values, PL)[1], Some(4.25));
    assert_eq!(column(&g.values, PL)[2], Some(4.25));
}

#[test]
fn empty_recording_gives_empty_grid() {
    let g = resample_to_grid(&rec(&[]), 50.0).unwrap();
    assert_eq!(g.steps, 0);
    assert!(g.values.is_empty());
    assert!(resample_to_grid(&rec(&[]), 0.0).is_err());
}

#[test]
fn masks_all_ones_when_every_interval_changes() {
    let r = rec(&[(0.0, PL, 1.0), (0.02, PL, 2.0), (0.04, PL, 3.0), (0.06, PL, 4.0)]);
    let g = resample_to_grid(&r, 50.0).unwrap();
    assert_eq!(column(&compute_masks(&r, &g, MaskMode::Change), PL), vec![1, 1, 1, 1]);
}

#[test]
fn masks_follow_interval_assignment() {
    // Interval k is ((k-1)/rate, k/rate]: 0.05 s at 50 Hz is in (0.04, 0.06].
    let r = rec(&[(0.00, PL, 1.0), (0.05, PL, 2.0), (0.08, GX, 0.0)]);
    let g = resample_to_grid(&r, 50.0).unwrap();
    let m = compute_masks(&r, &g, MaskMode::Change);
    assert_eq!(column(&m, PL), vec![1, 0, 0, 1, 0]);
    // Forward-filled value changes in the same cell the mask fires.
    assert_eq!(column(&g.values, PL)[3], Some(2.0));
}

#[test]
fn repeated_value_is_not_a_change() {
    let r = rec(&[(0.0, PL, 3.0), (0.02, PL, 3.0), (0.04, PL, 3.5)]);
    let g = resample_to_grid(&r, 50.0).unwrap();
    assert_eq!(column(&compute_masks(&r, &g, MaskMode::Change), PL), vec![1, 0, 1]);
    assert_eq!(column(&compute_masks(&r, &g, MaskMode::Arrival), PL), vec![1, 1, 1]);
}

#[test]
fn deltas_unroll_the_recurrence() {
    let masks = [1u8, 0, 0, 1];
    let d = compute_deltas(&masks, 1, 50.0);
    let expect = [0.0, 0.02, 0.04, 0.0];
    for (a, b) in d.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{d:?}");
    }
    let ld: Vec<f64> = d.iter().map(|x| x.ln_1p()).collect();
    let closed = [0.0, 1.02f64.ln(), 1.04f64.ln(), 0.0];
    for (a, b) in ld.iter().zip(closed) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((ld[1] - 0.0198).abs() < 1e-4 && (ld[2] - 0.0392).abs() < 1e-4);
    assert!(compute_deltas(&[1, 1, 1], 1, 50.0).iter().all(|&x| x == 0.0));
}

#[test]
fn unobserved_first_step_starts_at_one_grid_step() {
    let d = compute_deltas(&[0, 0, 1], 1, 50.0);
    assert!((d[0] - 0.02).abs() < 1e-15 && (d[1] - 0.04).abs() < 1e-12 && d[2] == 0.0);
}

fn base_with(f: Feature, mu: f64, sigma: f64) -> BaselineStats {
    let mut b = BaselineStats::identity();
    b.mean[f.index()] = mu;
    b.std[f.index()] = sigma;
    b
}

#[test]
fn imputation_cases() {
    let r = rec(&[(0.0, GX, 0.0), (0.06, PL, 4.0), (0.08, PL, 5.0), (0.14, PL, 6.0)]);
    let g = resample_to_grid(&r, 50.0).unwrap();
    let m = compute_masks(&r, &g, MaskMode::Change);
    let base = base_with(PL, 3.3, 1.0);
    let x = impute_values(&g, &m, &base).unwrap();
    // Leading gap of three cells, then a held gap of two.
    assert_eq!(column(&x, PL), vec![3.3, 3.3, 3.3, 4.0, 5.0, 5.0, 5.0, 6.0]);

    let full = rec(&[(0.0, PL, 1.0), (0.02, PL, 2.0), (0.04, PL, 3.0)]);
    let g = resample_to_grid(&full, 50.0).unwrap();
    let m = compute_masks(&full, &g, MaskMode::Arrival);
    assert_eq!(column(&impute_values(&g, &m, &base).unwrap(), PL), vec![1.0, 2.0, 3.0]);
}

#[test]
fn normalize_cases() {
    let base = base_with(PL, 2.0, 0.5);
    let mut v = vec![0.0; 2 * F];
    v[PL.index()] = 2.0;
    v[F + PL.index()] = 2.5;
    normalize(&mut v, &base, 0.0);
    assert_eq!(v[PL.index()], 0.0);
    assert_eq!(v[F + PL.index()], 1.0);

    let flat = base_with(PL, 1.0, 0.0);
    let mut v = vec![0.0; F];
    v[PL.index()] = 1.5;
    normalize(&mut v, &flat, 1e-8);
    assert!(v[PL.index()].is_finite());
    assert!((v[PL.index()] - 0.5e8).abs() < 1e-3);
}

fn track(ratings: &[u8]) -> LabelTrack {
    LabelTrack::new(10.0, ratings.to_vec(), 5).unwrap()
}

#[test]
fn midpoint_rule() {
    let t = track(&[1, 5, 9]);
    assert_eq!(t.midpoint_index(0.0, 10.0), 0);
    assert_eq!(t.midpoint_index(10.0, 10.0), 1);
    assert_eq!(t.midpoint_index(5.0, 10.0), 1);
    assert_eq!(t.binary(0), Some(0));
    assert_eq!(t.binary(1), Some(1));
    assert_eq!(t.binary(3), None);
    assert!(LabelTrack::new(10.0, vec![0], 5).is_err());
    assert!(LabelTrack::new(10.0, vec![10], 5).is_err());
}

/// Dense synthetic session: every channel sampled each grid step.
fn dense_session(seconds: f64, rate: f64) -> RawRecording {
    let n = (seconds * rate).round() as usize;
    let mut samples = Vec::new();
    for k in 0..n {
        let t = k as f64 / rate;
        for f in Feature::ALL {
            samples.push((t, f, (k as f64 * 0.37 + f.index() as f64).sin()));
        }
    }
    rec(&samples)
}

#[test]
fn window_count_and_labels() {
    let r = dense_session(35.0, 10.0);
    let grid = build_grid_series(&r, &BaselineStats::identity(), 10.0, MaskMode::Arrival, 1e-8).unwrap();
    assert_eq!(grid.steps, 350);
    let cut = window_and_label(&grid, &track(&[2, 7]), 10.0, "main").unwrap();
    // floor(350 / 100) = 3 windows, the third past a two-interval track.
    assert_eq!(cut.windows.len() + cut.dropped, 3);
    assert_eq!(cut.dropped, 1);
    assert_eq!(cut.windows[0].label, 0);
    assert_eq!(cut.windows[1].label, 1);
    assert_eq!(cut.windows[1].start_time, 10.0);
    let w = &cut.windows[0];
    assert_eq!((w.steps, w.width), (100, 30));
    // Fully observed: masks all one, deltas all zero.
    for t in 0..w.steps {
        assert!(w.row(t)[F..2 * F].iter().all(|&m| m == 1.0));
        assert!(w.row(t)[2 * F..].iter().all(|&d| d == 0.0));
    }
    let empty = window_and_label(&grid, &LabelTrack::new(10.0, vec![], 5).unwrap(), 10.0, "main").unwrap();
    assert!(empty.windows.is_empty());
    assert_eq!(empty.dropped, 3);
}

#[test]
fn encode_layout_and_errors() {
    let values = [1.0, 2.0, 3.0, 4.0];
    let masks = [1u8, 0, 0, 1];
    let ld = [0.0, 0.5, 0.25, 0.0];
    let z = encode_xmd(&values, &masks, &ld, 2).unwrap();
    assert_eq!(z, vec![1.0, 2.0, 1.0, 0.0, 0.0, 0.5, 3.0, 4.0, 0.0, 1.0, 0.25, 0.0]);
    assert!(encode_xmd(&values, &masks[..2], &ld, 2).is_err());
    let z10 = encode_xmd(&[0.0; 10], &[1; 10], &[0.0; 10], 10).unwrap();
    assert_eq!(z10.len(), 30);
}

proptest! {
    #[test]
    fn encode_commutes_with_column_permutation(
        data in prop::collection::vec((-5.0f64..5.0, 0u8..2, 0.0f64..3.0), 12),
        perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let (f, t) = (4, 3);
        let v: Vec<f64> = data.iter().map(|d| d.0).collect();
        let m: Vec<u8> = data.iter().map(|d| d.1).collect();
        let l: Vec<f64> = data.iter().map(|d| d.2).collect();
        let permute = |x: &[f64]| -> Vec<f64> {
            (0..t).flat_map(|r| perm.iter().map(move |&c| x[r * f + c])).collect()
        };
        let mp: Vec<u8> = (0..t).flat_map(|r| perm.iter().map(|&c| m[r * f + c]).collect::<Vec<_>>()).collect();
        let z = encode_xmd(&v, &m, &l, f).unwrap();
        let zp = encode_xmd(&permute(&v), &mp, &permute(&l), f).unwrap();
        for r in 0..t {
            for (j, &c) in perm.iter().enumerate() {
                for b in 0..3 {
                    prop_assert_eq!(zp[r * 3 * f + b * f + j], z[r * 3 * f + b * f + c]);
                }
            }
        }
    }

    #[test]
    fn grid_invariants_hold(
        raw in prop::collection::vec((0u16..400, 0usize..F, prop::sample::select(vec![0.0, 1.0, 2.5, -3.0])), 1..120),
        arrival in any::<bool>(),
    ) {
        let samples: Vec<_> = raw
            .iter()
            .map(|&(ms, f, v)| (f64::from(ms) * 1e-3, Feature::from_index(f).unwrap(), v))
            .collect();
        let r = crate::ingest::coalesce_timestamps(&rec(&samples));
        let mode = if arrival { MaskMode::Arrival } else { MaskMode::Change };
        let base = base_with(PL, 0.75, 1.0);
        let g = resample_to_grid(&r, 50.0).unwrap();
        let m = compute_masks(&r, &g, mode);
        let d = compute_deltas(&m, F, 50.0);
        let x = impute_values(&g, &m, &base).unwrap();
        for i in 0..m.len() {
            if m[i] == 1 {
                prop_assert_eq!(d[i], 0.0);
                prop_assert_eq!(Some(x[i]), g.values[i]);
            } else if i >= F {
                prop_assert!((d[i] - d[i - F] - 0.02).abs() < 1e-9);
                prop_assert_eq!(x[i], x[i - F]);
            } else {
                prop_assert_eq!(x[i], base.mean[i]);
            }
            // Imputation never disagrees with forward-filled values once a
            // channel has been seen.
            if let Some(v) = g.values[i] {
                prop_assert_eq!(x[i], v);
            }
        }
    }
}

#[test]
fn produced_windows_satisfy_invariants() {
    let mut r = dense_session(20.0, 50.0);
    // Thin out pupil and drop gaze for a while to create gaps.
    r.samples.retain(|s| {
        let k = (s.t * 50.0).round() as usize;
        !(s.feature == PL && !k.is_multiple_of(7)) && !(s.feature == GX && (100..300).contains(&k))
    });
    let grid = build_grid_series(&r, &BaselineStats::identity(), 50.0, MaskMode::Change, 1e-8).unwrap();
    assert_eq!(grid.check_invariants().unwrap(), grid.steps * F);
    let cut = window_and_label(&grid, &track(&[3, 6]), 10.0, "main").unwrap();
    assert_eq!(cut.windows.len(), 2);
    for w in &cut.windows {
        assert_eq!(check_window_invariants(w, 50.0).unwrap(), w.steps * F);
    }
    let mut bad = cut.windows[0].clone();
    bad.z[F] = 0.5;
    assert!(check_window_invariants(&bad, 50.0).is_err());

    // An unobserved cell whose value changed breaks the replay.
    let w = &cut.windows[0];
    let (t, c) = (1..w.steps)
        .flat_map(|t| (0..F).map(move |c| (t, c)))
        .find(|&(t, c)| w.row(t)[F + c] == 0.0)
        .unwrap();
    let mut bad = w.clone();
    bad.z[t * 3 * F + c] += 1.0;
    assert!(check_window_invariants(&bad, 50.0).is_err());

    let mut bad_grid = grid.clone();
    let i = bad_grid.masks.iter().position(|&m| m == 1).unwrap();
    bad_grid.deltas[i] = 0.02;
    assert!(bad_grid.check_invariants().is_err());
    let mut bad_grid = grid.clone();
    let i = (F..bad_grid.masks.len()).find(|&i| bad_grid.masks[i] == 0).unwrap();
    bad_grid.values[i] += 1.0;
    assert!(bad_grid.check_invariants().is_err());
}

fn small_set() -> WindowSet {
    let grid = build_grid_series(
        &dense_session(20.0, 5.0),
        &BaselineStats::identity(),
        5.0,
        MaskMode::Change,
        1e-8,
    )
    .unwrap();
    let cut = window_and_label(&grid, &track(&[3, 6]), 10.0, "main").unwrap();
    WindowSet {
        meta: DatasetMeta {
            schema_profile: "generic".into(),
            pipeline: PipelineConfig {
                sample_rate: 5.0,
                ..PipelineConfig::default()
            },
            dropped_windows: cut.dropped,
            provenance: vec![],
            synthetic: None,
        },
        windows: cut.windows,
    }
}

#[test]
fn windows_round_trip_bit_exact() {
    let set = small_set();
    let dir = tempfile::tempdir().unwrap();
    let manifest = serialize_windows(&set, dir.path()).unwrap();
    let back = load_windows(&manifest).unwrap();
    assert_eq!(back, set);
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m.n_windows, 2);
    assert_eq!(m.label_distribution, LabelDistribution { low: 1, high: 1 });
    let bin = std::fs::metadata(dir.path().join(BINARY_FILE)).unwrap().len();
    assert_eq!(bin as usize, m.n_windows * m.steps * m.width * 4);

    // Deterministic bytes.
    let dir2 = tempfile::tempdir().unwrap();
    serialize_windows(&set, dir2.path()).unwrap();
    for f in [MANIFEST_FILE, BINARY_FILE] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(dir2.path().join(f)).unwrap()
        );
    }
}

#[test]
fn tampered_binary_is_corruption() {
    let set = small_set();
    let dir = tempfile::tempdir().unwrap();
    let manifest = serialize_windows(&set, dir.path()).unwrap();
    let bin = dir.path().join(BINARY_FILE);
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&bin, bytes).unwrap();
    assert!(matches!(load_windows(&manifest), Err(crate::Error::Corruption(_))));
}

#[test]
fn kinematics_from_positions() {
    let mut r = rec(&[
        (0.0, GX, 0.0),
        (0.0, Feature::GazeY, 0.0),
        (0.1, GX, 3.0),
        (0.1, Feature::GazeY, 4.0),
        (0.2, GX, 3.0),
        (0.2, Feature::GazeY, 4.0),
    ]);
    let added = derive_gaze_kinematics(&mut r);
    assert_eq!(added, vec![Feature::GazeVelocity, Feature::GazeAcceleration]);
    let v = r.channel_values(Feature::GazeVelocity);
    assert!((v[0] - 50.0).abs() < 1e-9 && v[1] == 0.0);
    let a = r.channel_values(Feature::GazeAcceleration);
    assert!((a[0] + 500.0).abs() < 1e-6);
    // A recording that already has the channels is left alone.
    assert!(derive_gaze_kinematics(&mut r).is_empty());
}

#[test]
fn preprocess_directory_end_to_end() {
    use std::fmt::Write as _;
    let dir = tempfile::tempdir().unwrap();
    for (pi, p) in ["p01", "p02"].iter().enumerate() {
        let d = dir.path().join(p);
        std::fs::create_dir(&d).unwrap();
        let mut base = String::from("timestamp,pupil_left,pupil_right,gaze_x,gaze_y\n");
        for k in 0..200 {
            writeln!(
                base,
                "{},{},{},{},{}",
                k as f64 * 0.02,
                3.0 + 0.01 * (k % 5) as f64,
                3.1,
                0.5,
                0.5
            )
            .unwrap();
        }
        std::fs::write(d.join("baseline.csv"), base).unwrap();
        let mut exp = String::from("timestamp,pupil_left,pupil_right,gaze_x,gaze_y\n");
        for k in 0..1250 {
            let t = 100.0 + k as f64 * 0.02;
            writeln!(
                exp,
                "{t},{},3.2,{},0.4",
                3.0 + 0.1 * ((k / 50) % 3) as f64,
                0.3 + 0.001 * k as f64
            )
            .unwrap();
        }
        std::fs::write(d.join("experiment.csv"), exp).unwrap();
        std::fs::write(d.join("labels.csv"), format!("interval,rating\n0,{}\n1,8\n", 2 + pi)).unwrap();
    }
    let profile = crate::ingest::SchemaProfile::builtin("generic").unwrap();
    let set = preprocess_dataset(dir.path(), &profile, &PipelineConfig::default()).unwrap();
    // 1250 samples span 24.98 s → 1250 grid steps → 2 windows each.
    assert_eq!(set.windows.len(), 4);
    assert_eq!(set.participants(), vec!["p01", "p02"]);
    assert!(set.meta.provenance.iter().any(|n| n.kind == "derived_channel"));
    for w in &set.windows {
        check_window_invariants(w, 50.0).unwrap();
    }
    let labels: Vec<u8> = set.windows.iter().map(|w| w.label).collect();
    assert_eq!(labels, vec![0, 1, 0, 1]);
}
