use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Source of instantaneous power readings in watts.
///
/// `Ok(None)` means the source has nothing to report; errors are counted
/// by the monitor and never stop a benchmark.
pub trait PowerSampler: Send {
    fn name(&self) -> String;

    fn sample(&mut self) -> Result<Option<f64>, String>;
}

/// Reports nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullPowerSampler;

impl PowerSampler for NullPowerSampler {
    fn name(&self) -> String {
        "null".into()
    }

    fn sample(&mut self) -> Result<Option<f64>, String> {
        Ok(None)
    }
}

/// Reads a number from a sensor file on every sample and multiplies it by
/// `scale` (for example `1e-6` for a file in microwatts).
#[derive(Clone, Debug)]
pub struct FilePowerSampler {
    pub path: PathBuf,
    pub scale: f64,
}

impl FilePowerSampler {
    pub fn new(path: impl Into<PathBuf>, scale: f64) -> Self {
        FilePowerSampler {
            path: path.into(),
            scale,
        }
    }
}

impl PowerSampler for FilePowerSampler {
    fn name(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn sample(&mut self) -> Result<Option<f64>, String> {
        let text = std::fs::read_to_string(&self.path).map_err(|e| format!("{}: {e}", self.path.display()))?;
        let raw: f64 = text
            .trim()
            .parse()
            .map_err(|e| format!("{}: `{}`: {e}", self.path.display(), text.trim()))?;
        let watts = raw * self.scale;
        if watts.is_finite() {
            Ok(Some(watts))
        } else {
            Err(format!("{}: non-finite reading", self.path.display()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    /// Seconds since the monitor started.
    pub t: f64,
    pub watts: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub sampler: String,
    pub samples: Vec<PowerSample>,
    pub failures: usize,
    /// First failure message, if any.
    pub first_error: Option<String>,
}

impl PowerTrace {
    pub fn mean_watts(&self) -> Option<f64> {
        (!self.samples.is_empty())
            .then(|| self.samples.iter().map(|s| s.watts).sum::<f64>() / self.samples.len() as f64)
    }
}

/// Polls a [`PowerSampler`] on its own thread every `interval` until
/// stopped, starting immediately.
pub struct PowerMonitor {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<PowerTrace>,
}

impl PowerMonitor {
    pub fn start(mut sampler: Box<dyn PowerSampler>, interval: Duration) -> PowerMonitor {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            let mut trace = PowerTrace {
                sampler: sampler.name(),
                ..PowerTrace::default()
            };
            let start = Instant::now();
            let mut next = start;
            // At least one reading, even when stopped immediately.
            loop {
                match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| sampler.sample())) {
                    Ok(Ok(Some(watts))) => trace.samples.push(PowerSample {
                        t: start.elapsed().as_secs_f64(),
                        watts,
                    }),
                    Ok(Ok(None)) => {}
                    Ok(Err(e)) => {
                        trace.failures += 1;
                        trace.first_error.get_or_insert(e);
                    }
                    Err(_) => {
                        trace.failures += 1;
                        trace.first_error.get_or_insert_with(|| "sampler panicked".into());
                    }
                }
                if flag.load(Ordering::Acquire) {
                    break;
                }
                next += interval;
                let now = Instant::now();
                if next > now {
                    std::thread::park_timeout(next - now);
                } else {
                    next = now;
                }
            }
            trace
        });
        PowerMonitor { stop, handle }
    }

    pub fn stop(self) -> PowerTrace {
        self.stop.store(true, Ordering::Release);
        self.handle.thread().unpark();
        self.handle.join().unwrap_or_else(|_| PowerTrace {
            sampler: "unknown".into(),
            failures: 1,
            first_error: Some("power monitor thread panicked".into()),
            ..PowerTrace::default()
        })
    }
}
