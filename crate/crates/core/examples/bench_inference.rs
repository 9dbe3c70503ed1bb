//! Batch-1 latency benchmark of a reduced model with the null power
//! sampler. Pass a sysfs power file (microwatts) as the first argument to
//! sample real power instead.

use cogload::bench::{benchmark_inference, BenchConfig, FilePowerSampler, NullPowerSampler, PowerSampler};
use cogload::model::{BiMambaClassifier, ModelConfig};

fn main() -> cogload::Result<()> {
    let model = BiMambaClassifier::<f32>::init(&ModelConfig {
        d_model: 32,
        layers_per_direction: 2,
        ..ModelConfig::default()
    })?;
    let cfg = BenchConfig {
        steps: 200,
        warmup_iterations: 5,
        iterations: 20,
        ..BenchConfig::default()
    };
    let sampler: Box<dyn PowerSampler> = match std::env::args().nth(1) {
        Some(path) => Box::new(FilePowerSampler::new(path, 1e-6)),
        None => Box::new(NullPowerSampler),
    };
    let report = benchmark_inference(&model, &cfg, sampler)?;
    let l = &report.latency;
    println!(
        "{} warmup + {} measured: mean {:.2} ms, median {:.2} ms, p95 {:.2} ms, {:.1} windows/s",
        report.warmup_iterations_run, report.measured_iterations, l.mean_ms, l.median_ms, l.p95_ms, report.fps
    );
    println!(
        "power via {}: {:?} ({} failures)",
        report.power_sampler, report.power, report.power_failures
    );
    println!("host: {:?}", report.host);
    Ok(())
}
