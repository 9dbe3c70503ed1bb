//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (bypassing output capture) and then asserts. Tests share a lock
//! so the timing criteria never compete with training runs for the CPU.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use cogload::bench::{benchmark_inference, BenchConfig, NullPowerSampler};
use cogload::eval::{
    auc, auc_trapezoid, compute_metrics, generate_synthetic, make_kfold_splits, make_loso_splits, run_protocol,
    validate_splits, Confusion, FoldSplit, ProtocolConfig, ProtocolKind, ProtocolReport, SynthSpec,
};
use cogload::ingest::{
    baseline_stats, coalesce_timestamps, discover_participants, parse_recording, Feature, SchemaProfile, SessionKind,
};
use cogload::model::{attn_pool, branch_forward, input_projection, BiMambaClassifier, Direction, ModelConfig};
use cogload::numerics::{grad_check, Bound, ParamId, ParamStore, Tape, Tensor, Unary, Var, LAYER_NORM_EPS};
use cogload::ssm::{block_forward, discretize_zoh, selective_scan, BlockConfig, BlockParams};
use cogload::train::{
    compute_pos_weight, optimize_threshold, weighted_bce, weighted_bce_value, TrainConfig, WeightingMode,
};
use cogload::xmd::{
    build_grid_series, check_window_invariants, derive_gaze_kinematics, preprocess_dataset, MaskMode, PipelineConfig,
    XmdWindow,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {status} ({detail})");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

// ---------------------------------------------------------------- 1

/// Contracts `y` with a fixed random weight so every output element
/// contributes a distinct amount to the scalar loss.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> cogload::Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(rand_tensor(&shape, -1.0, 1.0, seed));
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn store(tensors: Vec<(&str, Tensor<f64>)>) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (n, t) in tensors {
        s.add(n, t);
    }
    s
}

type Check = (&'static str, f64);
type OpLoss<'a> = &'a dyn Fn(&mut Tape<f64>, &Bound, &[Var]) -> cogload::Result<Var>;

fn op_checks() -> Vec<Check> {
    const H: f64 = 1e-5;
    let mut out: Vec<Check> = Vec::new();
    let mut run = |name: &'static str, mut p: ParamStore<f64>, f: OpLoss<'_>| {
        let ids: Vec<ParamId> = p.ids().collect();
        let r = grad_check(&mut p, H, |t, b| {
            let vars: Vec<Var> = ids.iter().map(|&i| b[i]).collect();
            f(t, b, &vars)
        })
        .expect(name);
        out.push((name, r.max_rel_error));
    };

    let x45 = || rand_tensor(&[4, 5], -1.0, 1.0, 1);
    run(
        "matmul",
        store(vec![
            ("a", rand_tensor(&[4, 3], -1.0, 1.0, 2)),
            ("b", rand_tensor(&[3, 5], -1.0, 1.0, 3)),
        ]),
        &|t, _, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y, 90)
        },
    );
    run(
        "linear",
        store(vec![
            ("w", rand_tensor(&[3, 5], -1.0, 1.0, 4)),
            ("b", rand_tensor(&[3], -1.0, 1.0, 5)),
        ]),
        &|t, _, v| {
            let x = t.constant(x45());
            let y = t.linear(x, v[0], Some(v[1]))?;
            weighted_sum(t, y, 91)
        },
    );
    run(
        "add",
        store(vec![("x", x45()), ("y", rand_tensor(&[4, 5], -1.0, 1.0, 6))]),
        &|t, _, v| {
            let y = t.add(v[0], v[1])?;
            weighted_sum(t, y, 92)
        },
    );
    run(
        "mul",
        store(vec![("x", x45()), ("y", rand_tensor(&[4, 5], -1.0, 1.0, 7))]),
        &|t, _, v| {
            let y = t.mul(v[0], v[1])?;
            weighted_sum(t, y, 93)
        },
    );
    run(
        "add_row",
        store(vec![("x", x45()), ("r", rand_tensor(&[5], -1.0, 1.0, 8))]),
        &|t, _, v| {
            let y = t.add_row(v[0], v[1])?;
            weighted_sum(t, y, 94)
        },
    );
    run("scale", store(vec![("x", x45())]), &|t, _, v| {
        let y = t.scale(v[0], -1.7)?;
        weighted_sum(t, y, 95)
    });
    let unaries: [(&'static str, Unary); 6] = [
        ("tanh", Unary::Tanh),
        ("sigmoid", Unary::Sigmoid),
        ("softplus", Unary::Softplus),
        ("silu", Unary::Silu),
        ("exp", Unary::Exp),
        ("log1p", Unary::Log1p),
    ];
    for (name, op) in unaries {
        // log1p needs inputs above −1.
        let lo = if matches!(op, Unary::Log1p) { -0.5 } else { -2.0 };
        run(
            name,
            store(vec![("x", rand_tensor(&[4, 5], lo, 2.0, 9))]),
            &move |t, _, v| {
                let y = t.unary(v[0], op)?;
                weighted_sum(t, y, 96)
            },
        );
    }
    run(
        "softmax_axis0",
        store(vec![("x", rand_tensor(&[4, 5], -2.0, 2.0, 10))]),
        &|t, _, v| {
            let y = t.softmax(v[0], 0)?;
            weighted_sum(t, y, 97)
        },
    );
    run(
        "softmax_axis1",
        store(vec![("x", rand_tensor(&[4, 5], -2.0, 2.0, 11))]),
        &|t, _, v| {
            let y = t.softmax(v[0], 1)?;
            weighted_sum(t, y, 98)
        },
    );
    run(
        "layer_norm",
        store(vec![
            ("x", rand_tensor(&[4, 5], -2.0, 2.0, 12)),
            ("g", rand_tensor(&[5], 0.5, 1.5, 13)),
            ("b", rand_tensor(&[5], -0.5, 0.5, 14)),
        ]),
        &|t, _, v| {
            let y = t.layer_norm(v[0], v[1], v[2], LAYER_NORM_EPS)?;
            weighted_sum(t, y, 99)
        },
    );
    run(
        "depthwise_conv1d",
        store(vec![
            ("x", rand_tensor(&[6, 5], -1.0, 1.0, 15)),
            ("k", rand_tensor(&[3, 5], -1.0, 1.0, 16)),
        ]),
        &|t, _, v| {
            let y = t.depthwise_conv1d(v[0], v[1])?;
            weighted_sum(t, y, 100)
        },
    );
    run("transpose", store(vec![("x", x45())]), &|t, _, v| {
        let y = t.transpose(v[0])?;
        weighted_sum(t, y, 101)
    });
    run("flip_rows", store(vec![("x", x45())]), &|t, _, v| {
        let y = t.flip_rows(v[0])?;
        weighted_sum(t, y, 102)
    });
    run("slice_cols", store(vec![("x", x45())]), &|t, _, v| {
        let y = t.slice_cols(v[0], 1, 3)?;
        weighted_sum(t, y, 103)
    });
    run(
        "concat_cols",
        store(vec![("x", x45()), ("y", rand_tensor(&[4, 2], -1.0, 1.0, 17))]),
        &|t, _, v| {
            let y = t.concat_cols(v[0], v[1])?;
            weighted_sum(t, y, 104)
        },
    );
    run("sum", store(vec![("x", x45())]), &|t, _, v| {
        let y = t.tanh(v[0])?;
        t.sum(y)
    });
    run("mean", store(vec![("x", x45())]), &|t, _, v| {
        let y = t.tanh(v[0])?;
        t.mean(y)
    });
    run(
        "bce_with_logits",
        store(vec![("z", rand_tensor(&[6, 1], -3.0, 3.0, 18))]),
        &|t, _, v| t.bce_with_logits(v[0], &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0], 2.5),
    );
    run("dropout", store(vec![("x", x45())]), &|t, _, v| {
        let mut r = rng(19);
        let y = t.dropout(v[0], 0.3, &mut r)?;
        weighted_sum(t, y, 105)
    });
    run(
        "selective_scan",
        store(vec![
            ("u", rand_tensor(&[7, 3], -1.0, 1.0, 20)),
            ("delta", rand_tensor(&[7, 3], 0.05, 0.9, 21)),
            ("a_log", rand_tensor(&[3, 4], -0.5, 1.5, 22)),
            ("b", rand_tensor(&[7, 4], -1.0, 1.0, 23)),
            ("c", rand_tensor(&[7, 4], -1.0, 1.0, 24)),
            ("d", rand_tensor(&[3], -1.0, 1.0, 25)),
        ]),
        &|t, _, v| {
            let y = selective_scan(t, v[0], v[1], v[2], v[3], v[4], v[5])?;
            weighted_sum(t, y, 106)
        },
    );
    let mut bstore = ParamStore::new();
    let cfg = BlockConfig {
        d_model: 4,
        d_state: 3,
        d_conv: 3,
        expand: 2,
    };
    let blk = BlockParams::init(&mut bstore, "blk", cfg, &mut rng(26)).expect("block init");
    run("block_forward", bstore, &move |t, b, _| {
        let x = t.constant(rand_tensor(&[6, 4], -1.0, 1.0, 27));
        let y = block_forward(t, b, &blk, x, None)?;
        weighted_sum(t, y, 107)
    });
    out
}

fn tiny_model_config(layers: usize) -> ModelConfig {
    ModelConfig {
        input_dim: 6,
        d_model: 8,
        d_state: 4,
        d_conv: 3,
        expand: 2,
        layers_per_direction: layers,
        dropout: 0.0,
        seed: 3,
    }
}

#[test]
fn criterion_01_gradient_suite() {
    let _g = serial();
    let start = Instant::now();
    let mut checks = op_checks();
    let mut m = BiMambaClassifier::<f64>::init(&tiny_model_config(1)).unwrap();
    let z = rand_tensor(&[8, 6], -1.0, 1.0, 30);
    let ids = m.ids.clone();
    let r = grad_check(&mut m.params, 1e-5, |tape, bound| {
        let zv = tape.constant(z.clone());
        let out = cogload::model::predict_window(tape, bound, &ids, zv, None)?;
        tape.bce_with_logits(out.logit, &[1.0], 2.0)
    })
    .unwrap();
    checks.push(("end_to_end_tiny_model", r.max_rel_error));
    let elapsed = start.elapsed();
    let (worst, err) = checks
        .iter()
        .copied()
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let pass = checks.iter().all(|c| c.1 < 1e-4) && elapsed < Duration::from_secs(60);
    verdict(
        1,
        pass,
        &format!(
            "{} checks, worst {worst} rel err {err:.2e} < 1e-4, {:.1}s < 60s",
            checks.len(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_zoh_closed_forms() {
    let _g = serial();
    let mut r = rng(40);
    let mut worst = 0.0f64;
    let mut limit_cases = 0;
    for i in 0..1000 {
        let (a, delta) = if i % 5 == 0 {
            // |Δa| < 1e-8.
            let a = -10f64.powf(r.random_range(-15.0..-9.0));
            (a, 10f64.powf(r.random_range(-3.0..0.0)))
        } else {
            (-r.random_range(-5.0f64..3.0).exp(), r.random_range(-7.0f64..1.0).exp())
        };
        let b = r.random_range(-2.0..2.0);
        if (delta * a).abs() < 1e-8 {
            limit_cases += 1;
        }
        let (abar, bbar) = discretize_zoh(a, delta, b).unwrap();
        let abar_ref = (delta * a).exp();
        let bbar_ref = (delta * a).exp_m1() / a * b;
        for (got, want) in [(abar, abar_ref), (bbar, bbar_ref)] {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    let pass = worst <= 1e-12 && limit_cases >= 200;
    verdict(
        2,
        pass,
        &format!("1000 triples, {limit_cases} in the limit branch, worst scaled err {worst:.2e} <= 1e-12"),
    );
}

// ---------------------------------------------------------------- 3

/// Direct recurrence `h ← exp(Δa)h + (exp(Δa) − 1)/a · B u`,
/// `y = C·h + D u`, one (channel, state) pair at a time.
#[allow(clippy::too_many_arguments)]
fn naive_scan(
    u: &[f64],
    delta: &[f64],
    a_log: &[f64],
    b: &[f64],
    c: &[f64],
    d: &[f64],
    inner: usize,
    state: usize,
) -> Vec<f64> {
    let steps = u.len() / inner;
    let mut y = vec![0.0; steps * inner];
    for ch in 0..inner {
        for n in 0..state {
            let a = -a_log[ch * state + n].exp();
            let mut h = 0.0;
            for t in 0..steps {
                let dt = delta[t * inner + ch];
                let decay = (dt * a).exp();
                h = decay * h + (decay - 1.0) / a * b[t * state + n] * u[t * inner + ch];
                y[t * inner + ch] += c[t * state + n] * h;
            }
        }
        for t in 0..steps {
            y[t * inner + ch] += d[ch] * u[t * inner + ch];
        }
    }
    y
}

#[test]
fn criterion_03_scan_oracle() {
    let _g = serial();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (case, steps) in [1usize, 2, 9, 33, 64].into_iter().enumerate() {
        let (inner, state) = (5, 4);
        let s = 200 + 10 * case as u64;
        let u = rand_tensor(&[steps, inner], -1.0, 1.0, s);
        let delta = rand_tensor(&[steps, inner], 0.01, 1.0, s + 1);
        let a_log = rand_tensor(&[inner, state], -1.0, 1.5, s + 2);
        let b = rand_tensor(&[steps, state], -1.0, 1.0, s + 3);
        let c = rand_tensor(&[steps, state], -1.0, 1.0, s + 4);
        let d = rand_tensor(&[inner], -1.0, 1.0, s + 5);
        let mut tape = Tape::new();
        let v = [&u, &delta, &a_log, &b, &c, &d].map(|t| tape.constant(t.clone()));
        let y = selective_scan(&mut tape, v[0], v[1], v[2], v[3], v[4], v[5]).unwrap();
        let want = naive_scan(
            u.data(),
            delta.data(),
            a_log.data(),
            b.data(),
            c.data(),
            d.data(),
            inner,
            state,
        );
        for (g, w) in tape.value(y).data().iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        cases += 1;
    }
    verdict(
        3,
        worst <= 1e-10,
        &format!("{cases} random cases up to T=64, max abs err {worst:.2e} <= 1e-10"),
    );
}

// ---------------------------------------------------------------- 4

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn time_scan(steps: usize, reps: usize) -> f64 {
    let (inner, state) = (32, 16);
    let inputs = [
        rand_tensor(&[steps, inner], -1.0, 1.0, 1),
        rand_tensor(&[steps, inner], 0.01, 1.0, 2),
        rand_tensor(&[inner, state], -1.0, 1.5, 3),
        rand_tensor(&[steps, state], -1.0, 1.0, 4),
        rand_tensor(&[steps, state], -1.0, 1.0, 5),
        rand_tensor(&[inner], -1.0, 1.0, 6),
    ];
    let mut times = Vec::new();
    for _ in 0..reps {
        let mut tape = Tape::inference();
        let v = inputs.clone().map(|t| tape.constant(t));
        let start = Instant::now();
        let y = selective_scan(&mut tape, v[0], v[1], v[2], v[3], v[4], v[5]).unwrap();
        std::hint::black_box(tape.value(y));
        times.push(start.elapsed().as_secs_f64());
    }
    median(times)
}

#[test]
fn criterion_04_linear_time() {
    let _g = serial();
    time_scan(256, 2);
    let scan_ratio = time_scan(4096, 7) / time_scan(1024, 7);

    let model = BiMambaClassifier::<f32>::init(&ModelConfig::default()).unwrap();
    let bench = |steps| {
        let cfg = BenchConfig {
            steps,
            iterations: 5,
            warmup_iterations: 2,
            ..BenchConfig::default()
        };
        benchmark_inference(&model, &cfg, Box::new(NullPowerSampler))
            .unwrap()
            .latency
            .median_ms
    };
    let (short, long) = (bench(500), bench(1000));
    let latency_ratio = long / short;
    let pass = (3.0..=6.0).contains(&scan_ratio) && (1.6..=2.6).contains(&latency_ratio);
    verdict(
        4,
        pass,
        &format!(
            "scan T=4096/T=1024 ratio {scan_ratio:.2} in [3,6]; latency T=1000/T=500 ratio {latency_ratio:.2} \
             ({long:.1}ms/{short:.1}ms) in [1.6,2.6]"
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_xmd_invariants() {
    let _g = serial();
    let raw = fixture_dir().join("clare_mini");
    let profile = SchemaProfile::builtin("clare").unwrap();
    let cfg = PipelineConfig::default();
    let mut cells = 0usize;
    let mut violations = Vec::new();

    for p in discover_participants(&raw).unwrap() {
        let pid = p.participant_id.as_str();
        let mut base =
            coalesce_timestamps(&parse_recording(&p.baseline, &profile, SessionKind::Baseline, pid).unwrap());
        derive_gaze_kinematics(&mut base);
        let stats = baseline_stats(&base).unwrap();
        for s in &p.sessions {
            let mut rec =
                coalesce_timestamps(&parse_recording(&s.experiment, &profile, SessionKind::Experiment, pid).unwrap());
            derive_gaze_kinematics(&mut rec);
            let grid = build_grid_series(&rec, &stats, cfg.sample_rate, MaskMode::Change, cfg.normalize_eps).unwrap();
            match grid.check_invariants() {
                Ok(n) => cells += n,
                Err(e) => violations.push(e.to_string()),
            }
        }
    }

    let fixture = preprocess_dataset(&raw, &profile, &cfg).unwrap();
    let synthetic = generate_synthetic(&SynthSpec::default()).unwrap();
    let windows: Vec<(&XmdWindow, f64)> = fixture
        .windows
        .iter()
        .map(|w| (w, cfg.sample_rate))
        .chain(synthetic.windows.iter().map(|w| (w, SynthSpec::default().sample_rate)))
        .collect();
    for (w, rate) in windows {
        match check_window_invariants(w, rate) {
            Ok(n) => cells += n,
            Err(e) => violations.push(e.to_string()),
        }
    }
    let pass = violations.is_empty() && cells >= 100_000 && !fixture.windows.is_empty();
    verdict(
        5,
        pass,
        &format!(
            "{} violations over {cells} cells (>= 1e5) in fixture grids, {} fixture and {} synthetic windows{}",
            violations.len(),
            fixture.windows.len(),
            synthetic.windows.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    );
}

// ---------------------------------------------------------------- 6

fn branches(m: &BiMambaClassifier<f64>, z: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>) {
    let mut tape = Tape::inference();
    let bound = m.params.bind(&mut tape);
    let zv = tape.constant(z.clone());
    let h0 = input_projection(&mut tape, &bound, &m.ids, zv).unwrap();
    let f = branch_forward(&mut tape, &bound, &m.ids, h0, Direction::Forward, None).unwrap();
    let b = branch_forward(&mut tape, &bound, &m.ids, h0, Direction::Backward, None).unwrap();
    // flip ∘ stack ∘ flip assembled by hand from the backward blocks.
    let mut h = tape.flip_rows(h0).unwrap();
    for blk in &m.ids.backward {
        h = block_forward(&mut tape, &bound, blk, h, None).unwrap();
    }
    let manual = tape.flip_rows(h).unwrap();
    (tape.value(f).clone(), tape.value(b).clone(), tape.value(manual).clone())
}

#[test]
fn criterion_06_causality_and_bidirectionality() {
    let _g = serial();
    let (steps, width, t0) = (16, 6, 9);
    let mut m = BiMambaClassifier::<f64>::init(&tiny_model_config(2)).unwrap();
    let z = rand_tensor(&[steps, width], -1.0, 1.0, 60);
    let mut z2 = z.clone();
    for c in 0..width {
        z2.data_mut()[t0 * width + c] += 0.5;
    }
    let (f1, b1, manual) = branches(&m, &z);
    let (f2, b2, _) = branches(&m, &z2);
    let d = m.cfg.d_model;
    let row = |t: &Tensor<f64>, i: usize| t.data()[i * d..(i + 1) * d].to_vec();
    let forward_causal = (0..t0).all(|i| row(&f1, i) == row(&f2, i)) && row(&f1, t0) != row(&f2, t0);
    let backward_anticausal = (t0 + 1..steps).all(|i| row(&b1, i) == row(&b2, i)) && row(&b1, t0) != row(&b2, t0);
    let structural = b1 == manual;

    // Tie the backward stack and pool to the forward ones.
    let pairs: Vec<(ParamId, ParamId)> = m
        .ids
        .forward
        .iter()
        .zip(&m.ids.backward)
        .flat_map(|(f, b)| f.ids().into_iter().zip(b.ids()))
        .collect();
    for (fi, bi) in pairs {
        let v = m.params.get(fi).data().to_vec();
        m.params.get_mut(bi).data_mut().copy_from_slice(&v);
    }
    let half = rand_tensor(&[steps / 2, width], -1.0, 1.0, 61);
    let pal = Tensor::from_fn([steps, width], |i| {
        let (t, c) = (i / width, i % width);
        let src = if t < steps / 2 { t } else { steps - 1 - t };
        half.data()[src * width + c]
    });
    let (hf, hb, _) = branches(&m, &pal);
    let mut mirror_err = 0.0f64;
    for t in 0..steps {
        for (a, b) in row(&hb, t).iter().zip(row(&hf, steps - 1 - t)) {
            mirror_err = mirror_err.max((a - b).abs());
        }
    }
    let alphas = {
        let mut tape = Tape::inference();
        let bound = m.params.bind(&mut tape);
        let fv = tape.constant(hf.clone());
        let bv = tape.constant(hb.clone());
        let (_, af) = attn_pool(&mut tape, &bound, &m.ids.pool_forward, fv).unwrap();
        let (_, ab) = attn_pool(&mut tape, &bound, &m.ids.pool_forward, bv).unwrap();
        (tape.value(af).data().to_vec(), tape.value(ab).data().to_vec())
    };
    for t in 0..steps {
        mirror_err = mirror_err.max((alphas.0[t] - alphas.1[steps - 1 - t]).abs());
    }
    let pass = forward_causal && backward_anticausal && structural && mirror_err <= 1e-6;
    verdict(
        6,
        pass,
        &format!(
            "forward causal {forward_causal}, backward anti-causal {backward_anticausal}, \
             backward == flip.stack.flip {structural}, palindrome mirror err {mirror_err:.2e} <= 1e-6"
        ),
    );
}

// ---------------------------------------------------------------- 7

fn small_model() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        d_state: 8,
        d_conv: 4,
        expand: 2,
        layers_per_direction: 1,
        dropout: 0.1,
        ..ModelConfig::default()
    }
}

fn small_train(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 0.003,
        batch_size: 16,
        max_epochs,
        patience: 15,
        val_fraction: 0.2,
        ..TrainConfig::default()
    }
}

fn loso(windows: &[XmdWindow], train: &TrainConfig, model: &ModelConfig) -> ProtocolReport {
    let mut participants: Vec<String> = windows.iter().map(|w| w.participant_id.clone()).collect();
    participants.sort();
    participants.dedup();
    let splits = make_loso_splits(&participants).unwrap();
    run_protocol::<f32>(windows, &splits, &ProtocolConfig::default(), train, model, None).unwrap()
}

/// One-feature logistic regression on the per-window left pupil mean,
/// scored leave-one-participant-out.
fn pupil_mean_oracle(windows: &[XmdWindow]) -> f64 {
    let pupil_mean = |w: &XmdWindow| {
        let f = Feature::PupilLeft.index();
        (0..w.steps).map(|t| f64::from(w.row(t)[f])).sum::<f64>() / w.steps as f64
    };
    let mut participants: Vec<&str> = windows.iter().map(|w| w.participant_id.as_str()).collect();
    participants.sort_unstable();
    participants.dedup();
    let mut accs = Vec::new();
    for held in &participants {
        let (test, train): (Vec<&XmdWindow>, Vec<&XmdWindow>) = windows.iter().partition(|w| w.participant_id == *held);
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..2000 {
            let (mut ga, mut gb) = (0.0, 0.0);
            for w in &train {
                let x = pupil_mean(w);
                let e = 1.0 / (1.0 + (-(a * x + b)).exp()) - f64::from(w.label);
                ga += e * x;
                gb += e;
            }
            a -= 0.5 * ga / train.len() as f64;
            b -= 0.5 * gb / train.len() as f64;
        }
        let correct = test
            .iter()
            .filter(|w| u8::from(a * pupil_mean(w) + b >= 0.0) == w.label)
            .count();
        accs.push(correct as f64 / test.len() as f64);
    }
    accs.iter().sum::<f64>() / accs.len() as f64
}

#[test]
fn criterion_07_learning_smoke() {
    let _g = serial();
    let spec = SynthSpec::default();
    let set = generate_synthetic(&spec).unwrap();
    let oracle = pupil_mean_oracle(&set.windows);
    let start = Instant::now();
    let report = loso(&set.windows, &small_train(50), &small_model());
    let elapsed = start.elapsed();
    let min_train = report
        .folds
        .iter()
        .map(|f| f.training.train_accuracy)
        .fold(f64::INFINITY, f64::min);
    let mean_acc = report.aggregate.accuracy.map_or(0.0, |m| m.mean);
    let pass = set.windows.len() == 240
        && report.folds.len() == 6
        && min_train >= 0.95
        && mean_acc >= 0.80
        && oracle >= 0.85
        && elapsed < Duration::from_secs(600);
    verdict(
        7,
        pass,
        &format!(
            "{} folds, min train acc {min_train:.3} >= 0.95, LOSO mean acc {mean_acc:.3} >= 0.80, \
             oracle {oracle:.3} >= 0.85, {:.0}s < 600s",
            report.folds.len(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_null_check() {
    let _g = serial();
    let spec = SynthSpec {
        separation: 0.0,
        burst_rate_high: SynthSpec::default().burst_rate_low,
        ..SynthSpec::default()
    };
    let set = generate_synthetic(&spec).unwrap();
    let report = loso(&set.windows, &small_train(20), &small_model());
    let auc = report.aggregate.auc.map_or(f64::NAN, |m| m.mean);
    verdict(
        8,
        (0.4..=0.6).contains(&auc),
        &format!("null LOSO mean AUC {auc:.3} in [0.4, 0.6]"),
    );
}

// ---------------------------------------------------------------- 9

fn quick_windows(seed: u64) -> Vec<XmdWindow> {
    generate_synthetic(&SynthSpec {
        participants: 4,
        windows_per_participant: 12,
        steps: 40,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
    .windows
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_epochs: 3,
        val_fraction: 0.25,
        ..small_train(3)
    }
}

fn quick_model() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        d_state: 4,
        ..small_model()
    }
}

#[test]
fn criterion_09_imbalance_machinery() {
    let _g = serial();
    // Structural guarantee on fold validation sets.
    let report = loso(&quick_windows(90), &quick_train(), &quick_model());
    let folds_ok = report
        .folds
        .iter()
        .all(|f| f.training.val_accuracy_at_threshold >= f.training.val_accuracy_at_half);
    // And on random score vectors.
    let mut r = rng(91);
    let mut random_ok = true;
    for _ in 0..500 {
        let n = r.random_range(1..40);
        let probs: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        let acc = |th: f64| {
            probs
                .iter()
                .zip(&labels)
                .filter(|(p, y)| u8::from(**p >= th) == **y)
                .count() as f64
                / n as f64
        };
        random_ok &= acc(optimize_threshold(&probs, &labels)) >= acc(0.5);
    }
    let pw = compute_pos_weight(100, 300, WeightingMode::InverseFrequency).unwrap();
    // Closed forms: z=0 gives ln 2 per sample; w+=3 triples the positive term.
    let ln2 = std::f64::consts::LN_2;
    let cases: [(&[f64], &[u8], f64, f64); 3] = [
        (&[0.0, 0.0], &[1, 0], 1.0, ln2),
        (&[0.0, 0.0], &[1, 0], 3.0, 2.0 * ln2),
        (
            &[2.0, -1.0],
            &[1, 0],
            3.0,
            (3.0 * (1.0 + (-2.0f64).exp()).ln() + (1.0 + (-1.0f64).exp()).ln()) / 2.0,
        ),
    ];
    let mut bce_err = 0.0f64;
    for (z, y, w, want) in cases {
        bce_err = bce_err.max((weighted_bce_value(z, y, w) - want).abs());
        let mut tape = Tape::<f64>::new();
        let zv = tape.constant(Tensor::new([z.len(), 1], z.to_vec()).unwrap());
        let yv: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let loss = weighted_bce(&mut tape, zv, &yv, w).unwrap();
        bce_err = bce_err.max((tape.value(loss).data()[0] - want).abs());
    }
    let pass = folds_ok && !report.folds.is_empty() && random_ok && pw == 3.0 && bce_err <= 1e-9;
    verdict(
        9,
        pass,
        &format!(
            "threshold >= 0.5 accuracy on {} folds {folds_ok} and 500 random sets {random_ok}; \
             pos_weight(100, 300) = {pw}; BCE closed-form err {bce_err:.1e} <= 1e-9",
            report.folds.len()
        ),
    );
}

// ---------------------------------------------------------------- 10

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

#[test]
fn criterion_10_metric_oracles() {
    let _g = serial();
    let mut r = rng(100);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = r.random_range(2..80);
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Every third vector is coarsely quantized to force ties.
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = r.random_range(0.0..1.0);
                if i % 3 == 0 {
                    (s * 5.0).round() / 5.0
                } else {
                    s
                }
            })
            .collect();
        let p = pairwise_auc(&scores, &labels);
        let a = auc(&scores, &labels).unwrap();
        let t = auc_trapezoid(&scores, &labels).unwrap();
        worst = worst.max((a - t).abs()).max((a - p).abs());
    }
    let m1 = compute_metrics(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0], 0.5, false).unwrap();
    let m2 = compute_metrics(&[0.9, 0.8, 0.7, 0.6], &[1, 1, 0, 0], 0.5, false).unwrap();
    let m3 = compute_metrics(&[0.9, 0.7, 0.3, 0.2, 0.1], &[1, 0, 1, 0, 0], 0.5, false).unwrap();
    // Flipping maps p to 1 − p before the threshold: tp=0 fp=2 tn=0 fn=2.
    let m4 = compute_metrics(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0], 0.5, true).unwrap();
    let fixtures_ok = m1.confusion
        == Confusion {
            tp: 2,
            tn: 2,
            fp: 0,
            fn_: 0,
        }
        && m1.accuracy == 1.0
        && m1.f1_macro == 1.0
        && m1.auc == Some(1.0)
        && m2.confusion
            == Confusion {
                tp: 2,
                tn: 0,
                fp: 2,
                fn_: 0,
            }
        && m2.accuracy == 0.5
        && m2.f1_positive == 4.0 / 6.0
        && m2.f1_negative == 0.0
        && m3.confusion
            == Confusion {
                tp: 1,
                tn: 2,
                fp: 1,
                fn_: 1,
            }
        && m3.accuracy == 3.0 / 5.0
        && m3.f1_positive == 0.5
        && m3.f1_negative == 4.0 / 6.0
        && (m3.f1_macro - 7.0 / 12.0).abs() <= 1e-15
        && m4.confusion
            == Confusion {
                tp: 0,
                tn: 0,
                fp: 2,
                fn_: 2,
            }
        && m4.auc == Some(0.0);
    let pass = worst <= 1e-9 && fixtures_ok;
    verdict(
        10,
        pass,
        &format!("pairwise vs trapezoid AUC over 1000 vectors, max diff {worst:.1e} <= 1e-9; confusion fixtures exact {fixtures_ok}"),
    );
}

// ---------------------------------------------------------------- 11

fn partition_ok(splits: &[FoldSplit], participants: &[String]) -> bool {
    let mut tested: Vec<&String> = splits.iter().flat_map(|s| &s.test).collect();
    tested.sort();
    let disjoint = splits.iter().all(|s| {
        !s.test.is_empty()
            && s.test.iter().all(|p| !s.train.contains(p))
            && s.train.len() + s.test.len() == participants.len()
    });
    tested.len() == participants.len() && tested.into_iter().eq(participants.iter()) && disjoint
}

fn run_json(windows: &[XmdWindow], splits: &[FoldSplit], kind: ProtocolKind) -> String {
    let protocol = ProtocolConfig {
        protocol: kind,
        ..ProtocolConfig::default()
    };
    let report = run_protocol::<f32>(windows, splits, &protocol, &quick_train(), &quick_model(), None).unwrap();
    serde_json::to_string(&report).unwrap()
}

#[test]
fn criterion_11_protocol_integrity() {
    let _g = serial();
    let mut splits_ok = true;
    for n in 2..12 {
        let participants: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
        let loso = make_loso_splits(&participants).unwrap();
        splits_ok &=
            loso.len() == n && partition_ok(&loso, &participants) && validate_splits(&loso, &participants).is_ok();
        for k in 2..=n {
            for seed in 0..3 {
                let kf = make_kfold_splits(&participants, k, seed).unwrap();
                splits_ok &=
                    kf.len() == k && partition_ok(&kf, &participants) && validate_splits(&kf, &participants).is_ok();
            }
        }
    }
    let windows = quick_windows(110);
    let participants: Vec<String> = (1..=4).map(|i| format!("s{i:02}")).collect();
    let loso = make_loso_splits(&participants).unwrap();
    let kfold = make_kfold_splits(&participants, 2, 7).unwrap();
    let loso_same = run_json(&windows, &loso, ProtocolKind::Loso) == run_json(&windows, &loso, ProtocolKind::Loso);
    let kfold_same = run_json(&windows, &kfold, ProtocolKind::Kfold) == run_json(&windows, &kfold, ProtocolKind::Kfold);
    let pass = splits_ok && loso_same && kfold_same;
    verdict(
        11,
        pass,
        &format!("partition and no-leakage over LOSO/K-fold grids {splits_ok}; reports byte-identical on rerun: LOSO {loso_same}, K-fold {kfold_same}"),
    );
}

// ---------------------------------------------------------------- 12

#[test]
fn criterion_12_benchmark_harness() {
    let _g = serial();
    let cfg = BenchConfig::default();
    let model = BiMambaClassifier::<f32>::init(&ModelConfig::default()).unwrap();
    let report = benchmark_inference(&model, &cfg, Box::new(NullPowerSampler)).unwrap();
    let audit = report.warmup_iterations_run == cfg.warmup_iterations
        && report.measured_iterations == cfg.iterations
        && report.latencies_ms.len() == cfg.iterations;
    let mean = report.latencies_ms.iter().sum::<f64>() / report.latencies_ms.len() as f64;
    let fps_ref = 1000.0 * cfg.batch_size as f64 / mean;
    let fps_err = (report.fps - fps_ref).abs() / fps_ref;
    let null_ok = report.power_sampler == "null" && report.power_failures == 0 && report.power.is_none();
    let json_ok = serde_json::to_value(&report).is_ok_and(|v| v.get("latency").is_some() && v.get("host").is_some());
    let pass = audit && fps_err <= 0.005 && null_ok && json_ok;
    verdict(
        12,
        pass,
        &format!(
            "{} warmup excluded, {} measured; fps {:.2} vs 1000/mean {fps_ref:.2} rel err {fps_err:.1e} <= 5e-3; \
             null sampler ok {null_ok}; report serializes {json_ok}",
            report.warmup_iterations_run, report.measured_iterations, report.fps
        ),
    );
}

// ---------------------------------------------------------------- 13

fn cogload(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cogload"))
        .args(args)
        .output()
        .expect("cogload binary runs")
}

#[test]
fn criterion_13_end_to_end_smoke() {
    let _g = serial();
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture_dir().join("smoke.toml");
    let raw = fixture_dir().join("clare_mini");
    let p = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    let (config, raw) = (
        config.to_string_lossy().into_owned(),
        raw.to_string_lossy().into_owned(),
    );
    let (windows, run, evaluation) = (p("windows"), p("run"), p("evaluation"));

    let steps = [
        cogload(&["--config", &config, "--out", &windows, "preprocess", "--raw", &raw]),
        cogload(&["--config", &config, "--out", &run, "train", "--windows", &windows]),
        cogload(&[
            "--config",
            &config,
            "--out",
            &evaluation,
            "evaluate",
            "--windows",
            &windows,
            "--artifacts",
            &run,
        ]),
    ];
    let codes: Vec<Option<i32>> = steps.iter().map(|o| o.status.code()).collect();
    let report = ProtocolReport::read_json(&Path::new(&evaluation).join("report.json"));
    let well_formed = report.as_ref().is_ok_and(|r| {
        r.folds.len() + r.degenerate.len() == 2
            && r.aggregate.n_folds == r.folds.len()
            && r.aggregate.n_degenerate == r.degenerate.len()
            && r.aggregate.accuracy.is_some()
            && r.folds.iter().all(|f| f.n_test > 0 && f.predictions.len() == f.n_test)
    });
    let pass = codes.iter().all(|&c| c == Some(0)) && well_formed;
    if !pass {
        for o in &steps {
            let _ = writeln!(std::io::stderr(), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    verdict(
        13,
        pass,
        &format!("exit codes {codes:?}, aggregate report well-formed {well_formed}"),
    );
}
