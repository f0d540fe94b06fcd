//! Per-bit software bias from memory-write traces.
//!
//! Replaying a trace yields, for every memory bit, the fraction of time it
//! held 1 between its first write and the end of the trace. That bias and its
//! strength `2|B - 1/2|` decide which cells the software ages in a known
//! direction, and hence which cells an auditor can form expectations about:
//! the expected aged power-on value is the inverse of the dominant written
//! value.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One store to a contiguous bit range. `value` holds `width_bits` bits
/// packed LSB-first: bit `j` of the range is `value[j / 64] >> (j % 64) & 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriteEvent {
    pub timestamp: f64,
    pub first_bit: usize,
    pub width_bits: usize,
    pub value: Vec<u64>,
}

impl WriteEvent {
    pub fn single(timestamp: f64, bit_index: usize, value: bool) -> WriteEvent {
        WriteEvent {
            timestamp,
            first_bit: bit_index,
            width_bits: 1,
            value: vec![value as u64],
        }
    }

    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        (self.value[j / 64] >> (j % 64)) & 1 == 1
    }
}

/// An ordered record of every store the software performed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriteTrace {
    pub memory_bits: usize,
    pub total_duration: f64,
    /// Memory contents at t = 0; bits without an image stay unwritten until
    /// their first store.
    pub initial_image: Option<Vec<u64>>,
    pub events: Vec<WriteEvent>,
}

fn packed_len(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Pack bools LSB-first into words, the event/image layout.
pub fn pack_bits(bits: &[bool]) -> Vec<u64> {
    let mut words = vec![0u64; packed_len(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

fn stray_bits_set(words: &[u64], n_bits: usize) -> bool {
    let tail = n_bits % 64;
    if tail == 0 {
        return false;
    }
    words[n_bits / 64] >> tail != 0
}

impl WriteTrace {
    pub fn validate(&self) -> Result<()> {
        if self.memory_bits == 0 {
            return Err(Error::invalid("memory_bits", "must be at least 1"));
        }
        if !self.total_duration.is_finite() || self.total_duration < 0.0 {
            return Err(Error::invalid("total_duration", "must be finite and >= 0"));
        }
        if let Some(image) = &self.initial_image {
            if image.len() != packed_len(self.memory_bits) {
                return Err(Error::MalformedTrace {
                    event: None,
                    reason: format!(
                        "initial image has {} words, expected {}",
                        image.len(),
                        packed_len(self.memory_bits)
                    ),
                });
            }
            if stray_bits_set(image, self.memory_bits) {
                return Err(Error::MalformedTrace {
                    event: None,
                    reason: "initial image has bits set beyond memory_bits".to_string(),
                });
            }
        }
        let mut prev = 0.0f64;
        for (idx, ev) in self.events.iter().enumerate() {
            let fail = |reason: String| Error::MalformedTrace {
                event: Some(idx),
                reason,
            };
            if ev.width_bits == 0 {
                return Err(fail("event writes zero bits".to_string()));
            }
            if ev.first_bit + ev.width_bits > self.memory_bits {
                return Err(fail(format!(
                    "range [{}, {}) exceeds memory_bits {}",
                    ev.first_bit,
                    ev.first_bit + ev.width_bits,
                    self.memory_bits
                )));
            }
            if !ev.timestamp.is_finite() || ev.timestamp < 0.0 {
                return Err(fail(format!("bad timestamp {}", ev.timestamp)));
            }
            if ev.timestamp < prev {
                return Err(fail(format!(
                    "timestamp {} decreases below {}",
                    ev.timestamp, prev
                )));
            }
            if ev.timestamp > self.total_duration {
                return Err(fail(format!(
                    "timestamp {} beyond total_duration {}",
                    ev.timestamp, self.total_duration
                )));
            }
            if ev.value.len() != packed_len(ev.width_bits) {
                return Err(fail(format!(
                    "value has {} words for {} bits",
                    ev.value.len(),
                    ev.width_bits
                )));
            }
            if stray_bits_set(&ev.value, ev.width_bits) {
                return Err(fail("value has bits set beyond width_bits".to_string()));
            }
            prev = ev.timestamp;
        }
        Ok(())
    }

    /// The trace followed by itself: duration doubled, every event repeated
    /// one duration later.
    pub fn concat_self(&self) -> WriteTrace {
        let mut events = self.events.clone();
        events.extend(self.events.iter().map(|ev| WriteEvent {
            timestamp: ev.timestamp + self.total_duration,
            ..ev.clone()
        }));
        WriteTrace {
            memory_bits: self.memory_bits,
            total_duration: 2.0 * self.total_duration,
            initial_image: self.initial_image.clone(),
            events,
        }
    }
}

/// Time-weighted value bias of every memory bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftwareBiasProfile {
    pub memory_bits: usize,
    /// Fraction of post-first-write time the bit held 1. Meaningless where
    /// `written` is false.
    pub bias: Vec<f64>,
    pub written: Vec<bool>,
}

impl SoftwareBiasProfile {
    /// How far from ambivalent the bit is: `2 |bias - 1/2|`.
    #[inline]
    pub fn strength(&self, bit: usize) -> f64 {
        2.0 * (self.bias[bit] - 0.5).abs()
    }

    pub fn written_count(&self) -> usize {
        self.written.iter().filter(|&&w| w).count()
    }
}

/// Means over written bits plus the fraction of memory the software touches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub mean_bias: f64,
    pub mean_strength: f64,
    pub sram_use: f64,
}

/// Replay a trace and integrate per-bit dwell time.
///
/// Time before a bit's first write is excluded from its denominator: the
/// memory holds power-on noise there, not software data. A bit first written
/// exactly at the end of the trace has an empty dwell window and takes its
/// written value as bias.
pub fn compute_bias_profile(t: &WriteTrace) -> Result<SoftwareBiasProfile> {
    t.validate()?;
    let n = t.memory_bits;
    let mut written = vec![false; n];
    let mut current = vec![false; n];
    let mut first_write = vec![0.0f64; n];
    let mut last_time = vec![0.0f64; n];
    let mut one_dwell = vec![0.0f64; n];
    if let Some(image) = &t.initial_image {
        for i in 0..n {
            written[i] = true;
            current[i] = (image[i / 64] >> (i % 64)) & 1 == 1;
        }
    }
    for ev in &t.events {
        for j in 0..ev.width_bits {
            let i = ev.first_bit + j;
            if written[i] {
                if current[i] {
                    one_dwell[i] += ev.timestamp - last_time[i];
                }
            } else {
                written[i] = true;
                first_write[i] = ev.timestamp;
            }
            current[i] = ev.bit(j);
            last_time[i] = ev.timestamp;
        }
    }
    let mut bias = vec![0.0f64; n];
    for i in 0..n {
        if !written[i] {
            continue;
        }
        if current[i] {
            one_dwell[i] += t.total_duration - last_time[i];
        }
        let window = t.total_duration - first_write[i];
        bias[i] = if window > 0.0 {
            (one_dwell[i] / window).clamp(0.0, 1.0)
        } else {
            current[i] as u8 as f64
        };
    }
    Ok(SoftwareBiasProfile {
        memory_bits: n,
        bias,
        written,
    })
}

pub fn profile_summary(p: &SoftwareBiasProfile) -> Result<ProfileSummary> {
    let written = p.written_count();
    if written == 0 {
        return Err(Error::Degenerate(
            "profile has no written bits".to_string(),
        ));
    }
    let mut bias_sum = 0.0;
    let mut strength_sum = 0.0;
    for i in 0..p.memory_bits {
        if p.written[i] {
            bias_sum += p.bias[i];
            strength_sum += p.strength(i);
        }
    }
    Ok(ProfileSummary {
        mean_bias: bias_sum / written as f64,
        mean_strength: strength_sum / written as f64,
        sram_use: written as f64 / p.memory_bits as f64,
    })
}

/// What an auditor expects each aged cell to power on as.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitExpectation {
    Expect0,
    Expect1,
    Unusable,
    Unwritten,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedStateMap {
    pub expected: Vec<BitExpectation>,
}

impl ExpectedStateMap {
    /// Structure-only auditing: every cell expected to age toward 1, the
    /// direction 0-heavy embedded software pushes.
    pub fn uniform_expect1(n_bits: usize) -> ExpectedStateMap {
        ExpectedStateMap {
            expected: vec![BitExpectation::Expect1; n_bits],
        }
    }

    pub fn len(&self) -> usize {
        self.expected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expected.is_empty()
    }

    /// Fraction of all bits carrying a usable expectation.
    pub fn usable_fraction(&self) -> f64 {
        let usable = self
            .expected
            .iter()
            .filter(|e| matches!(e, BitExpectation::Expect0 | BitExpectation::Expect1))
            .count();
        usable as f64 / self.expected.len().max(1) as f64
    }
}

/// Bin bits by bias strength. Bits at or above the threshold expect the
/// inverse of their dominant written value; a bit holding 0 ages its cell
/// toward powering on as 1. Bias exactly 1/2 has no direction and is never
/// usable.
pub fn select_usable_bits(
    p: &SoftwareBiasProfile,
    strength_threshold: f64,
) -> ExpectedStateMap {
    let expected = (0..p.memory_bits)
        .map(|i| {
            if !p.written[i] {
                BitExpectation::Unwritten
            } else if p.bias[i] == 0.5 || !(p.strength(i) >= strength_threshold) {
                BitExpectation::Unusable
            } else if p.bias[i] > 0.5 {
                BitExpectation::Expect0
            } else {
                BitExpectation::Expect1
            }
        })
        .collect();
    ExpectedStateMap { expected }
}

/// Every bit holds `bias` as its time-weighted value: written 1 at t = 0 and
/// flipped to 0 at `bias * duration` (degenerate biases write once).
pub fn uniform_trace(memory_bits: usize, bias: f64, duration: f64) -> WriteTrace {
    let all = |value: bool| WriteEvent {
        timestamp: 0.0,
        first_bit: 0,
        width_bits: memory_bits,
        value: pack_bits(&vec![value; memory_bits]),
    };
    let events = if bias <= 0.0 {
        vec![all(false)]
    } else if bias >= 1.0 {
        vec![all(true)]
    } else {
        let mut flip = all(false);
        flip.timestamp = bias * duration;
        vec![all(true), flip]
    };
    WriteTrace {
        memory_bits,
        total_duration: duration,
        initial_image: None,
        events,
    }
}

/// Bias groups of the synthetic benchmark-like workload: fractions of
/// written bits at each bias value. Mean bias over written bits comes to
/// about 0.227 and mean strength to about 0.670, matching the published
/// workload suite averages; roughly 91% of memory is written.
const BENCHMARK_GROUPS: [(f64, f64); 4] =
    [(0.395, 0.0), (0.011, 1.0), (0.4659, 0.2716), (0.1281, 0.70)];
const BENCHMARK_WRITTEN_FRACTION: f64 = 0.909;

/// A workload trace with the bias mix of a typical embedded benchmark,
/// spatially shuffled by seed.
pub fn benchmark_like_trace(memory_bits: usize, seed_value: u64) -> WriteTrace {
    let duration = 1.0;
    let n_written = (BENCHMARK_WRITTEN_FRACTION * memory_bits as f64).round() as usize;
    let mut biases = Vec::with_capacity(n_written);
    let mut cum = 0.0;
    let mut assigned = 0usize;
    for (frac, bias) in BENCHMARK_GROUPS {
        cum += frac;
        let upto = (cum * n_written as f64).round() as usize;
        for _ in assigned..upto.min(n_written) {
            biases.push(bias);
        }
        assigned = upto.min(n_written);
    }
    while biases.len() < n_written {
        biases.push(BENCHMARK_GROUPS[3].1);
    }
    let mut positions: Vec<usize> = (0..memory_bits).collect();
    positions.shuffle(&mut seed::rng(seed_value));
    let mut events = Vec::with_capacity(2 * n_written);
    for (slot, &bit) in positions.iter().take(n_written).enumerate() {
        let b = biases[slot];
        if b <= 0.0 {
            events.push(WriteEvent::single(0.0, bit, false));
        } else if b >= 1.0 {
            events.push(WriteEvent::single(0.0, bit, true));
        } else {
            events.push(WriteEvent::single(0.0, bit, true));
            events.push(WriteEvent::single(b * duration, bit, false));
        }
    }
    events.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then(a.first_bit.cmp(&b.first_bit))
    });
    WriteTrace {
        memory_bits,
        total_duration: duration,
        initial_image: None,
        events,
    }
}
