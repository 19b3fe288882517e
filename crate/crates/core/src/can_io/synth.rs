//! Seeded synthetic baseline traffic and attack injectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{CanFrame, FrameLabel, HIGH_PRIORITY_ID};

/// A source transmitting at a fixed nominal period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicId {
    pub can_id: u32,
    /// Nominal period in seconds.
    pub period: f64,
    pub dlc: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Periodic data-frame broadcasters.
    pub data_ids: Vec<PeriodicId>,
    /// Ids polled with remote requests; each request is answered by a data
    /// frame carrying the same id.
    pub remote_ids: Vec<PeriodicId>,
    /// Relative period jitter: each gap is `period * (1 + U(-jitter, jitter))`.
    pub jitter: f64,
    /// Response delay range in seconds.
    pub response_delay: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        let data = [
            (0x153, 0.001, 8),
            (0x164, 0.002, 8),
            (0x1f1, 0.003, 8),
            (0x220, 0.005, 8),
            (0x2a0, 0.008, 6),
            (0x316, 0.010, 8),
            (0x329, 0.012, 8),
            (0x350, 0.015, 4),
            (0x43f, 0.018, 8),
            (0x545, 0.020, 8),
        ];
        let remote = [(0x260, 0.005, 8), (0x2b0, 0.005, 8), (0x4f0, 0.005, 8)];
        let to_periodic = |&(can_id, period, dlc): &(u32, f64, u8)| PeriodicId {
            can_id,
            period,
            dlc,
        };
        SynthConfig {
            data_ids: data.iter().map(to_periodic).collect(),
            remote_ids: remote.iter().map(to_periodic).collect(),
            jitter: 0.05,
            response_delay: (0.000_05, 0.000_3),
        }
    }
}

/// Generates `duration` seconds of normal traffic starting at t = 0.
///
/// Output is time-sorted, every frame is labelled Normal and id 0x000 never
/// appears.
pub fn synth_baseline(duration: f64, seed: u64, cfg: &SynthConfig) -> Vec<CanFrame> {
    assert!(duration > 0.0, "duration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();

    for src in &cfg.data_ids {
        let mut t = rng.random_range(0.0..src.period);
        let mut counter: u8 = 0;
        let mut signal: Vec<u8> = (0..src.dlc).map(|_| rng.random()).collect();
        while t < duration {
            if let Some(first) = signal.first_mut() {
                *first = counter;
            }
            // slow random walk on the remaining signal bytes
            for b in signal.iter_mut().skip(1) {
                *b = b.wrapping_add(rng.random_range(0..3u8)).wrapping_sub(1);
            }
            frames.push(CanFrame::data(t, src.can_id, signal.clone(), FrameLabel::Normal));
            counter = counter.wrapping_add(1);
            t += jittered(&mut rng, src.period, cfg.jitter);
        }
    }

    let (dmin, dmax) = cfg.response_delay;
    for src in &cfg.remote_ids {
        let mut t = rng.random_range(0.0..src.period);
        while t < duration {
            frames.push(CanFrame::remote(t, src.can_id, 0, FrameLabel::Normal));
            let delay = if dmax > dmin {
                rng.random_range(dmin..dmax)
            } else {
                dmin
            };
            let reply: Vec<u8> = (0..src.dlc).map(|_| rng.random()).collect();
            frames.push(CanFrame::data(t + delay, src.can_id, reply, FrameLabel::Normal));
            t += jittered(&mut rng, src.period, cfg.jitter);
        }
    }

    debug_assert!(frames.iter().all(|f| f.can_id != HIGH_PRIORITY_ID));
    frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    frames
}

fn jittered(rng: &mut ChaCha8Rng, period: f64, jitter: f64) -> f64 {
    if jitter > 0.0 {
        period * (1.0 + rng.random_range(-jitter..jitter))
    } else {
        period
    }
}

/// Inclusive range of arbitration ids used by the fuzzy injector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdSpace {
    pub lo: u32,
    pub hi: u32,
}

impl IdSpace {
    /// Standard 11-bit identifiers.
    pub const STANDARD: IdSpace = IdSpace { lo: 0, hi: 0x7ff };

    pub fn contains(&self, id: u32) -> bool {
        (self.lo..=self.hi).contains(&id)
    }
}

/// Poisson arrival times over the span of `frames`.
fn poisson_times(frames: &[CanFrame], rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(rate > 0.0, "injection rate must be positive");
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
        return Vec::new();
    };
    let exp = Exp::new(rate).expect("positive rate");
    let mut times = Vec::new();
    let mut t = first.timestamp + exp.sample(rng);
    while t <= last.timestamp {
        times.push(t);
        t += exp.sample(rng);
    }
    times
}

/// Stable merge: at equal timestamps pre-existing frames come first.
fn merge(frames: &[CanFrame], injected: Vec<CanFrame>) -> Vec<CanFrame> {
    let mut out = Vec::with_capacity(frames.len() + injected.len());
    let mut inj = injected.into_iter().peekable();
    for f in frames {
        while inj.peek().is_some_and(|i| i.timestamp < f.timestamp) {
            out.push(inj.next().unwrap());
        }
        out.push(f.clone());
    }
    out.extend(inj);
    out
}

/// Floods the capture with zero-payload id 0x000 data frames at Poisson times.
pub fn inject_dos(frames: &[CanFrame], rate: f64, seed: u64) -> Vec<CanFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let injected = poisson_times(frames, rate, &mut rng)
        .into_iter()
        .map(|t| CanFrame::data(t, HIGH_PRIORITY_ID, vec![0; 8], FrameLabel::Injected))
        .collect();
    merge(frames, injected)
}

/// Injects frames with ids drawn uniformly from `id_space` and random payloads.
pub fn inject_fuzzy(frames: &[CanFrame], rate: f64, id_space: IdSpace, seed: u64) -> Vec<CanFrame> {
    assert!(id_space.lo <= id_space.hi, "empty id space");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = poisson_times(frames, rate, &mut rng);
    let injected = times
        .into_iter()
        .map(|t| {
            let id = rng.random_range(id_space.lo..=id_space.hi);
            let payload: Vec<u8> = (0..8).map(|_| rng.random()).collect();
            CanFrame::data(t, id, payload, FrameLabel::Injected)
        })
        .collect();
    merge(frames, injected)
}
