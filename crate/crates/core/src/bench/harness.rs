use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{median_sorted, quantile_sorted};
use crate::model::{BiMambaClassifier, ModelConfig};
use crate::numerics::{Precision, Real, Tensor};

use super::host::HostInfo;
use super::power::{PowerMonitor, PowerSampler, PowerTrace};

pub const BENCH_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Windows per timed iteration, run one after another.
    pub batch_size: usize,
    pub warmup_iterations: usize,
    pub iterations: usize,
    pub power_interval_ms: u64,
    pub steps: usize,
    pub width: usize,
    pub precision: Precision,
    /// Seed of the random input windows.
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch_size: 1,
            warmup_iterations: 20,
            iterations: 100,
            power_interval_ms: 50,
            steps: 500,
            width: 30,
            precision: Precision::F32,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.steps == 0 || self.power_interval_ms == 0 {
            return Err(Error::Config(
                "iterations, batch_size, steps and power_interval_ms must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub std_ms: f64,
}

impl LatencyStats {
    /// Summary of a non-empty sample; percentiles interpolate linearly.
    pub fn from_samples(ms: &[f64]) -> Option<LatencyStats> {
        if ms.is_empty() {
            return None;
        }
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = ms.len() as f64;
        let mean = ms.iter().sum::<f64>() / n;
        Some(LatencyStats {
            mean_ms: mean,
            median_ms: median_sorted(&sorted),
            p95_ms: quantile_sorted(&sorted, 0.95),
            min_ms: sorted[0],
            max_ms: sorted[sorted.len() - 1],
            std_ms: (ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub mean_watts: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format_version: u32,
    pub config: BenchConfig,
    pub model: ModelConfig,
    pub num_params: usize,
    pub warmup_iterations_run: usize,
    pub measured_iterations: usize,
    pub latency: LatencyStats,
    /// Windows per second, `1000 · batch_size / mean_ms`.
    pub fps: f64,
    /// Absent when the sampler produced no readings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerSummary>,
    pub power_sampler: String,
    pub power_failures: usize,
    pub host: HostInfo,
    /// Seconds since the Unix epoch at the start of the run.
    pub started_at: u64,
    pub latencies_ms: Vec<f64>,
}

fn random_inputs<T: Real>(cfg: &BenchConfig) -> Vec<Tensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.batch_size)
        .map(|_| {
            Tensor::from_fn([cfg.steps, cfg.width], |_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                T::lit(x)
            })
        })
        .collect()
}

fn run_batch<T: Real>(model: &BiMambaClassifier<T>, inputs: &[Tensor<T>], phase: &str, iteration: usize) -> Result<()> {
    for (b, z) in inputs.iter().enumerate() {
        let p = model.predict(z.clone())?;
        if !p.logit.is_finite() {
            return Err(Error::NonFinite {
                stage: format!(
                    "benchmark {phase} iteration {iteration}, window {b} (logit {})",
                    p.logit
                ),
            });
        }
    }
    Ok(())
}

fn timed<T: Real>(
    model: &BiMambaClassifier<T>,
    cfg: &BenchConfig,
    power: Box<dyn PowerSampler>,
) -> Result<(usize, Vec<f64>, PowerTrace)> {
    let inputs = random_inputs::<T>(cfg);
    let mut warmups = 0;
    for i in 0..cfg.warmup_iterations {
        run_batch(model, &inputs, "warmup", i)?;
        warmups += 1;
    }
    let monitor = PowerMonitor::start(power, Duration::from_millis(cfg.power_interval_ms));
    let mut latencies = Vec::with_capacity(cfg.iterations);
    let mut result = Ok(());
    for i in 0..cfg.iterations {
        let start = Instant::now();
        // The clone is outside the model forward but inside the timed
        // region; it is negligible next to the scan.
        if let Err(e) = run_batch(model, &inputs, "measured", i) {
            result = Err(e);
            break;
        }
        latencies.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let trace = monitor.stop();
    result.map(|()| (warmups, latencies, trace))
}

/// Times batch inference on seeded random windows: unmeasured warmup, then
/// `iterations` timed forward passes while a side thread polls `power`.
/// Latency covers the model forward only.
pub fn benchmark_inference(
    model: &BiMambaClassifier<f32>,
    cfg: &BenchConfig,
    power: Box<dyn PowerSampler>,
) -> Result<BenchReport> {
    cfg.validate()?;
    if cfg.width != model.cfg.input_dim {
        return Err(Error::Config(format!(
            "benchmark width {} does not match model input_dim {}",
            cfg.width, model.cfg.input_dim
        )));
    }
    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let (warmups, latencies, trace) = match cfg.precision {
        Precision::F32 => timed(model, cfg, power)?,
        Precision::F64 => timed(&model.cast::<f64>(), cfg, power)?,
    };
    if latencies.len() != cfg.iterations {
        return Err(Error::Contract(format!(
            "{} latencies recorded for {} iterations",
            latencies.len(),
            cfg.iterations
        )));
    }
    let latency = LatencyStats::from_samples(&latencies).expect("at least one iteration");
    if let Some(e) = &trace.first_error {
        log::warn!("power sampler failed {} times; first error: {e}", trace.failures);
    }
    Ok(BenchReport {
        format_version: BENCH_FORMAT_VERSION,
        config: cfg.clone(),
        model: model.cfg.clone(),
        num_params: model.num_params(),
        warmup_iterations_run: warmups,
        measured_iterations: latencies.len(),
        fps: 1000.0 * cfg.batch_size as f64 / latency.mean_ms,
        latency,
        power: trace.mean_watts().map(|mean_watts| PowerSummary {
            mean_watts,
            samples: trace.samples.len(),
        }),
        power_sampler: trace.sampler.clone(),
        power_failures: trace.failures,
        host: HostInfo::detect(),
        started_at,
        latencies_ms: latencies,
    })
}
