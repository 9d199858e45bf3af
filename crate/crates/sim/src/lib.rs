//! Discrete-event scalability simulator.
//!
//! Models M consumers each decrypting K PADs against N load-balanced key
//! delegators on a virtual clock. A delegator serves one request at a
//! time; a consumer's first served request pays attestation plus key
//! fetch, every later request pays fetch only, and each consumer issues
//! its requests sequentially. No sockets are involved — the latency
//! model is replayed over the event loop, which is what makes sweeps to
//! thousands of nodes cheap and exactly reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::{BinaryHeap, VecDeque};

/// Attestation and key-fetch latencies in milliseconds. Sampling is
/// truncated normal (negative draws are resampled); a zero standard
/// deviation makes the model deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub attest_mean_ms: f64,
    #[serde(default)]
    pub attest_std_ms: f64,
    pub fetch_mean_ms: f64,
    #[serde(default)]
    pub fetch_std_ms: f64,
}

/// Measured means from the single-node overhead benchmark.
pub const DEFAULT_ATTEST_MS: f64 = 135.089;
pub const DEFAULT_FETCH_MS: f64 = 0.177;

impl LatencyModel {
    pub fn deterministic() -> Self {
        LatencyModel {
            attest_mean_ms: DEFAULT_ATTEST_MS,
            attest_std_ms: 0.0,
            fetch_mean_ms: DEFAULT_FETCH_MS,
            fetch_std_ms: 0.0,
        }
    }

    pub fn stochastic(attest_std_ms: f64, fetch_std_ms: f64) -> Self {
        LatencyModel {
            attest_std_ms,
            fetch_std_ms,
            ..LatencyModel::deterministic()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.attest_mean_ms <= 0.0 || self.fetch_mean_ms <= 0.0 {
            return Err(ConfigError::NonPositive("latency means"));
        }
        if self.attest_std_ms < 0.0 || self.fetch_std_ms < 0.0 {
            return Err(ConfigError::NonPositive("latency standard deviations"));
        }
        Ok(())
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::deterministic()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_delegators: usize,
    pub num_consumers: usize,
    pub pads_per_consumer: usize,
    pub seed: u64,
    #[serde(default)]
    pub latency: LatencyModel,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_delegators == 0 {
            return Err(ConfigError::NonPositive("num_delegators"));
        }
        if self.num_consumers == 0 {
            return Err(ConfigError::NonPositive("num_consumers"));
        }
        if self.pads_per_consumer == 0 {
            return Err(ConfigError::NonPositive("pads_per_consumer"));
        }
        self.latency.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Per consumer: completion time divided by PAD count, in ms.
    pub per_pad_latency_ms: Vec<f64>,
    pub makespan_ms: f64,
    pub attestations_performed: u64,
    pub fetches_performed: u64,
}

impl SimResult {
    pub fn mean_per_pad_ms(&self) -> f64 {
        self.per_pad_latency_ms.iter().sum::<f64>() / self.per_pad_latency_ms.len() as f64
    }

    pub fn max_per_pad_ms(&self) -> f64 {
        self.per_pad_latency_ms
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One served request, for event-log assertions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceRecord {
    pub consumer: usize,
    pub delegator: usize,
    pub queued_at_ms: f64,
    pub start_ms: f64,
    pub end_ms: f64,
    pub attested: bool,
}

/// Completion events ordered by (time, insertion sequence) so ties break
/// deterministically.
#[derive(Debug, PartialEq)]
struct Completion {
    time: f64,
    seq: u64,
    delegator: usize,
    consumer: usize,
}

impl Eq for Completion {}

impl Ord for Completion {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest first.
        other
            .time
            .partial_cmp(&self.time)
            .expect("virtual times are finite")
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Truncated-normal draw: resample until non-negative. σ = 0 short-
    /// circuits to the mean and consumes no randomness.
    fn draw(&mut self, mean: f64, std: f64) -> f64 {
        if std == 0.0 {
            return mean;
        }
        let dist = Normal::new(mean, std).expect("validated parameters");
        loop {
            let v = dist.sample(&mut self.rng);
            if v >= 0.0 {
                return v;
            }
        }
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimResult, ConfigError> {
    simulate_with_log(config).map(|(result, _)| result)
}

/// Run the event loop and also return the full service log.
pub fn simulate_with_log(
    config: &SimConfig,
) -> Result<(SimResult, Vec<ServiceRecord>), ConfigError> {
    config.validate()?;
    let n = config.num_delegators;
    let m = config.num_consumers;
    let k = config.pads_per_consumer;
    let mut sampler = Sampler::new(config.seed);

    // All consumers enqueue their first request at t = 0, in index order.
    let mut queue: VecDeque<(usize, f64)> = (0..m).map(|c| (c, 0.0)).collect();
    let mut idle: Vec<usize> = (0..n).rev().collect(); // pop() yields lowest index
    let mut completions: BinaryHeap<Completion> = BinaryHeap::new();
    let mut seq = 0u64;

    let mut served = vec![0usize; m]; // requests completed per consumer
    let mut finish = vec![0.0f64; m];
    let mut attestations = 0u64;
    let mut fetches = 0u64;
    let mut log = Vec::with_capacity(m * k);
    let mut now = 0.0f64;

    loop {
        // Work-conserving dispatch: pair queued requests with idle
        // delegators until one side runs dry.
        while !queue.is_empty() && !idle.is_empty() {
            let (consumer, queued_at) = queue.pop_front().expect("non-empty");
            let delegator = idle.pop().expect("non-empty");
            let first_request = served[consumer] == 0;
            let mut cost = sampler.draw(config.latency.fetch_mean_ms, config.latency.fetch_std_ms);
            if first_request {
                cost += sampler.draw(config.latency.attest_mean_ms, config.latency.attest_std_ms);
                attestations += 1;
            }
            fetches += 1;
            let end = now + cost;
            log.push(ServiceRecord {
                consumer,
                delegator,
                queued_at_ms: queued_at,
                start_ms: now,
                end_ms: end,
                attested: first_request,
            });
            completions.push(Completion {
                time: end,
                seq,
                delegator,
                consumer,
            });
            seq += 1;
        }
        let Some(done) = completions.pop() else {
            break;
        };
        now = done.time;
        idle.push(done.delegator);
        idle.sort_unstable_by(|a, b| b.cmp(a)); // keep lowest index on top
        served[done.consumer] += 1;
        if served[done.consumer] < k {
            // Sequential per consumer: next request only after this one.
            queue.push_back((done.consumer, now));
        } else {
            finish[done.consumer] = now;
        }
    }

    let per_pad = finish.iter().map(|t| t / k as f64).collect::<Vec<_>>();
    let makespan = finish.iter().copied().fold(0.0f64, f64::max);
    Ok((
        SimResult {
            per_pad_latency_ms: per_pad,
            makespan_ms: makespan,
            attestations_performed: attestations,
            fetches_performed: fetches,
        },
        log,
    ))
}

/// Run every config; cell order is preserved. Each cell is independent,
/// so failures (invalid configs) surface per cell.
pub fn sweep(configs: &[SimConfig]) -> Result<Vec<SimResult>, ConfigError> {
    configs.iter().map(simulate).collect()
}

/// Representative grid: N ∈ {4,16,64}, M ∈ {8,64,512}, K doubling up to
/// 1024. Cell seeds derive from the base seed plus cell index so cells
/// are independent but the whole sweep is reproducible.
pub fn default_grid(base_seed: u64, latency: LatencyModel) -> Vec<SimConfig> {
    let mut grid = Vec::new();
    let mut index = 0u64;
    for &n in &[4usize, 16, 64] {
        for &m in &[8usize, 64, 512] {
            let mut k = 1usize;
            while k <= 1024 {
                grid.push(SimConfig {
                    num_delegators: n,
                    num_consumers: m,
                    pads_per_consumer: k,
                    seed: base_seed.wrapping_add(index),
                    latency,
                });
                index += 1;
                k *= 4;
            }
        }
    }
    grid
}

/// CSV with one row per sweep cell.
pub fn results_csv(configs: &[SimConfig], results: &[SimResult]) -> String {
    let mut out = String::from("N,M,K,seed,mean_per_pad_ms,max_per_pad_ms,makespan_ms\n");
    for (cfg, res) in configs.iter().zip(results) {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6}\n",
            cfg.num_delegators,
            cfg.num_consumers,
            cfg.pads_per_consumer,
            cfg.seed,
            res.mean_per_pad_ms(),
            res.max_per_pad_ms(),
            res.makespan_ms,
        ));
    }
    out
}
