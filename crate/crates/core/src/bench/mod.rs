//! Batch-1 inference latency and throughput benchmark with an optional
//! power sampler polled on a side thread.

mod harness;
mod host;
mod power;

pub use harness::{benchmark_inference, BenchConfig, BenchReport, LatencyStats, PowerSummary, BENCH_FORMAT_VERSION};
pub use host::HostInfo;
pub use power::{FilePowerSampler, NullPowerSampler, PowerMonitor, PowerSample, PowerSampler, PowerTrace};
