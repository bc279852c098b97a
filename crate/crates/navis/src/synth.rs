//! Synthetic benchmark generator: a shared latent factor drives per-pair
//! interaction propensities, and events are sampled from the induced
//! per-source destination distributions.
//!
//! Time alternates between calm regimes, where each source's destination
//! distribution is its static profile plus noise, and active regimes,
//! where a large latent-driven deviation shifts every distribution in a
//! correlated way across the whole graph. Sources are only intermittently
//! active, so a node's own last label can be several periods stale while
//! the rest of the graph has already revealed the current regime — exactly
//! the information a shared global signal can exploit and purely per-node
//! smoothers cannot.

use crate::ctdg::{
    build_candidate_index, CandidateMode, CtdgError, Dataset, DatasetManifest, EventStream,
    InteractionEvent, NodeId,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config: {0}")]
    Config(String),
    #[error("io error writing {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ctdg(#[from] CtdgError),
}

/// How the calm/active regime changes over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeSchedule {
    /// Alternate calm/active every `dwell` periods.
    Alternating { dwell: usize },
    /// Switch with probability `p` at each period.
    Markov { p: f64 },
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub nodes: usize,
    pub periods: usize,
    /// Period length in time units; event times are spread inside each
    /// period.
    pub period: f64,
    /// Mean number of events per active source per period.
    pub events_per_node: f64,
    /// Probability that a source is active (emits any events) in a given
    /// period. Inactive sources get no label for that period, so their
    /// last observed affinity vector goes stale.
    pub activity: f64,
    /// Standard deviation of the per-pair propensity noise.
    pub noise: f64,
    /// Damping of the latent oscillator (must be below 1).
    pub damping: f64,
    /// Oscillation frequencies, in cycles per period, for the two regimes.
    pub freq_slow: f64,
    pub freq_fast: f64,
    pub schedule: RegimeSchedule,
    /// Scale of per-pair coupling to the latent factor.
    pub coupling: f64,
    /// Scale of the per-destination propensity shift applied during
    /// active regimes, making the current regime visible in the labels.
    pub regime_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 30,
            periods: 120,
            period: 1.0,
            events_per_node: 120.0,
            activity: 0.5,
            noise: 0.05,
            damping: 0.95,
            freq_slow: 0.03,
            freq_fast: 0.25,
            schedule: RegimeSchedule::Alternating { dwell: 12 },
            coupling: 1.5,
            regime_shift: 0.6,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.nodes < 3 {
            return Err(SynthError::Config("need at least 3 nodes".into()));
        }
        if self.periods < 5 {
            return Err(SynthError::Config("need at least 5 periods".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(SynthError::Config(format!(
                "damping must be in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.events_per_node > 0.0) {
            return Err(SynthError::Config("events_per_node must be positive".into()));
        }
        if !(self.activity > 0.0 && self.activity <= 1.0) {
            return Err(SynthError::Config(format!(
                "activity must be in (0, 1], got {}",
                self.activity
            )));
        }
        Ok(())
    }
}

/// Samples the latent factor series alone; see [`gen_latent_and_regimes`].
pub fn gen_global_latent(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    gen_latent_and_regimes(config, rng).0
}

/// Samples the latent factor series plus the per-period regime flags
/// (`true` = fast). Each regime runs
/// `x_t = a1 x_{t-1} + a2 x_{t-2} + e_t` with `a1 = 2 r cos(2 pi f)`,
/// `a2 = -r^2`, which is stable for `r < 1`. The series is standardized to
/// zero mean and unit variance so label magnitudes do not depend on the
/// regime mix.
pub fn gen_latent_and_regimes(
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<bool>) {
    let r = config.damping;
    let a2 = -r * r;
    let mut fast = false;
    let mut series = Vec::with_capacity(config.periods);
    let mut regimes = Vec::with_capacity(config.periods);
    let (mut x1, mut x2) = (0.0f64, 0.0f64);
    for t in 0..config.periods {
        match config.schedule {
            RegimeSchedule::Alternating { dwell } => {
                let dwell = dwell.max(1);
                fast = (t / dwell) % 2 == 1;
            }
            RegimeSchedule::Markov { p } => {
                if rng.gen::<f64>() < p {
                    fast = !fast;
                }
            }
        }
        let f = if fast { config.freq_fast } else { config.freq_slow };
        let a1 = 2.0 * r * (std::f64::consts::TAU * f).cos();
        let e: f64 = sample_gaussian(rng);
        let x = a1 * x1 + a2 * x2 + e;
        series.push(x);
        regimes.push(fast);
        x2 = x1;
        x1 = x;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / series.len() as f64;
    let sd = var.sqrt().max(1e-12);
    for x in &mut series {
        *x = (*x - mean) / sd;
    }
    (series, regimes)
}

/// Box-Muller standard normal draw.
fn sample_gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Per-pair coupling to the latent factor: amplitude, phase, and offset.
struct PairProfile {
    beta: f64,
    phi: f64,
    gamma: f64,
}

fn gen_profiles(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<PairProfile>> {
    (0..config.nodes)
        .map(|_| {
            (0..config.nodes)
                .map(|_| PairProfile {
                    beta: config.coupling * rng.gen_range(0.5..1.5),
                    phi: rng.gen_range(0.0..std::f64::consts::TAU),
                    gamma: rng.gen_range(-0.5..0.5),
                })
                .collect()
        })
        .collect()
}

/// Per-destination propensity shift applied during the fast regime,
/// shared by every source.
fn gen_regime_offsets(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..config.nodes)
        .map(|_| config.regime_shift * rng.gen_range(-1.0..1.0))
        .collect()
}

/// Destination distribution for source `u`: softmax over all destinations
/// except `u` itself. In calm periods the logits are the static pair
/// profiles plus noise; while the active regime runs, a large
/// slowly-drifting latent deviation `beta cos(phi) g + beta sin(phi)
/// (g^2 - 1)` plus the shared per-destination shift is added, so the
/// regime is visible in every label and the drift is trackable only while
/// it lasts.
fn destination_distribution(
    config: &SynthConfig,
    profiles: &[Vec<PairProfile>],
    offsets: &[f64],
    u: usize,
    g: f64,
    active: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut logits: Vec<f64> = (0..config.nodes)
        .map(|v| {
            if v == u {
                f64::NEG_INFINITY
            } else {
                let p = &profiles[u][v];
                let deviation = if active {
                    p.beta * p.phi.cos() * g + p.beta * p.phi.sin() * (g * g - 1.0) + offsets[v]
                } else {
                    0.0
                };
                p.gamma + deviation + config.noise * sample_gaussian(rng)
            }
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in &mut logits {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in &mut logits {
        *l /= sum;
    }
    logits
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Generates the full event stream. Node ids are `0..nodes`; every node
/// emits a Poisson-distributed number of events each period, destinations
/// drawn from its latent-driven distribution.
pub fn gen_events(config: &SynthConfig) -> Result<EventStream, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (latent, regimes) = gen_latent_and_regimes(config, &mut rng);
    let profiles = gen_profiles(config, &mut rng);
    let offsets = gen_regime_offsets(config, &mut rng);
    let poisson = Poisson::new(config.events_per_node)
        .map_err(|e| SynthError::Config(format!("poisson rate: {e}")))?;

    let mut events = Vec::new();
    for (t, &g) in latent.iter().enumerate() {
        let start = t as f64 * config.period;
        let fast = regimes[t];
        let mut period_events = Vec::new();
        for u in 0..config.nodes {
            let active = config.activity >= 1.0 || rng.gen::<f64>() < config.activity;
            let probs =
                destination_distribution(config, &profiles, &offsets, u, g, fast, &mut rng);
            if !active {
                continue;
            }
            let n = poisson.sample(&mut rng) as usize;
            for _ in 0..n {
                let v = sample_index(&probs, &mut rng);
                let time = start + rng.gen::<f64>() * config.period;
                period_events.push(InteractionEvent {
                    source: u as NodeId,
                    dest: v as NodeId,
                    time,
                    weight: 1.0,
                });
            }
        }
        period_events.sort_by(|a, b| a.time.total_cmp(&b.time));
        events.extend(period_events);
    }

    // first-appearance node registry, matching the CSV loader's behaviour
    let mut nodes = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for ev in &events {
        for id in [ev.source, ev.dest] {
            if seen.insert(id) {
                nodes.push(id);
            }
        }
    }
    Ok(EventStream { events, nodes })
}

/// Generates events and assembles an in-memory dataset (all-nodes
/// candidate set, the configured period).
pub fn gen_dataset(config: &SynthConfig) -> Result<Dataset, SynthError> {
    let stream = gen_events(config)?;
    let index = build_candidate_index(&stream, CandidateMode::AllNodes)?;
    let sequence = crate::ctdg::convert_links_to_affinity(&stream, config.period, &index)?;
    Ok(Dataset {
        stream,
        index,
        sequence,
    })
}

/// Writes the event CSV and a manifest next to it; returns the manifest
/// path.
pub fn write_dataset(
    config: &SynthConfig,
    dir: &Path,
) -> Result<std::path::PathBuf, SynthError> {
    let stream = gen_events(config)?;
    let csv_path = dir.join("events.csv");
    let mut out = std::fs::File::create(&csv_path).map_err(|source| SynthError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let mut text = String::from("source,dest,time,weight\n");
    for ev in &stream.events {
        text.push_str(&format!("{},{},{},{}\n", ev.source, ev.dest, ev.time, ev.weight));
    }
    out.write_all(text.as_bytes()).map_err(|source| SynthError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let manifest = DatasetManifest {
        events: "events.csv".into(),
        candidate_mode: CandidateMode::AllNodes,
        period: config.period,
        node_count: Some(stream.nodes.len()),
    };
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}
