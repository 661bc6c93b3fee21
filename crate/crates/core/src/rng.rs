//! The accelerator's random source: a 16-bit LFSR followed by modulo
//! reduction into `[0, degree)`, plus a cycle model of the 8-lane modulo
//! pipeline that lets one reduced value retire per clock.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Seed used by the command-line tools when none is given.
pub const DEFAULT_SEED: u16 = 0xACE1;

/// Fibonacci LFSR over x^16 + x^14 + x^13 + x^11 + 1.
///
/// The state shifts right by one each step and the XOR of taps 16, 14, 13, 11
/// (bits 0, 2, 3, 5 of the state) is fed back into bit 15. The state is never
/// zero and visits all 65535 nonzero values before repeating.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lfsr16 {
    state: u16,
}

impl Lfsr16 {
    pub const PERIOD: u32 = 65535;

    pub fn new(seed: u16) -> Result<Self> {
        if seed == 0 {
            return Err(Error::InvalidArgument("LFSR seed must be nonzero".into()));
        }
        Ok(Lfsr16 { state: seed })
    }

    pub fn state(&self) -> u16 {
        self.state
    }

    /// Advances one step and returns the new state as the raw random value.
    #[inline]
    pub fn next_value(&mut self) -> u16 {
        let s = self.state;
        let bit = (s ^ (s >> 2) ^ (s >> 3) ^ (s >> 5)) & 1;
        self.state = (s >> 1) | (bit << 15);
        self.state
    }
}

impl Iterator for Lfsr16 {
    type Item = u16;

    fn next(&mut self) -> Option<u16> {
        Some(self.next_value())
    }
}

/// Reduces a raw LFSR value into an offset below `d` by plain modulo.
#[inline]
pub fn bounded(r: u16, d: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "cannot reduce into an empty range (degree 0)".into(),
        ));
    }
    Ok(r as usize % d)
}

/// Seed of the LFSR owned by parallel segment `k`: `base + k` wrapped to
/// 16 bits, with 0 remapped to 0xFFFF.
pub fn segment_seed(base: u16, k: usize) -> u16 {
    match base.wrapping_add(k as u16) {
        0 => 0xFFFF,
        s => s,
    }
}

/// Parses a 16-bit seed written in hex, with or without a `0x` prefix.
pub fn parse_seed(text: &str) -> Result<u16> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    let seed = u16::from_str_radix(digits, 16)
        .map_err(|e| Error::InvalidArgument(format!("bad seed {text:?}: {e}")))?;
    if seed == 0 {
        return Err(Error::InvalidArgument("seed 0 is not allowed".into()));
    }
    Ok(seed)
}

/// Number of values in one full LFSR period (`1..=65535`) that are congruent
/// to each residue modulo `d`. Every entry is `floor(65535/d)` or
/// `ceil(65535/d)`.
pub fn residue_counts(d: usize) -> Vec<u64> {
    assert!(d >= 1);
    let period = Lfsr16::PERIOD as u64;
    let d64 = d as u64;
    (0..d64)
        .map(|c| {
            // Count of r in 1..=period with r % d == c.
            let upto = |x: u64| if x < c { 0 } else { (x - c) / d64 + 1 };
            upto(period) - if c == 0 { 1 } else { 0 }
        })
        .collect()
}

/// Expected proportion of each offset when a full LFSR period is reduced
/// modulo `d`.
pub fn residue_proportions(d: usize) -> Vec<f64> {
    residue_counts(d)
        .into_iter()
        .map(|c| c as f64 / Lfsr16::PERIOD as f64)
        .collect()
}

/// One clock of the modulo pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelineStep {
    /// Reduction retiring on this clock.
    pub output: Option<usize>,
    /// False when a feed was offered while every lane was busy. The caller
    /// must hold the value and offer it again.
    pub accepted: bool,
}

/// Round-robin bank of modulo units.
///
/// Each unit takes `latency` cycles per reduction. A value fed on cycle `c`
/// retires on cycle `c + latency`. With `latency <= lanes` and a continuous
/// feed, one value retires every cycle after warm-up.
#[derive(Clone, Debug)]
pub struct ModuloPipeline {
    lanes: usize,
    latency: u64,
    cycle: u64,
    in_flight: VecDeque<(u64, usize)>,
}

impl ModuloPipeline {
    pub const LANES: usize = 8;

    pub fn new(latency: u64) -> Result<Self> {
        Self::with_lanes(Self::LANES, latency)
    }

    pub fn with_lanes(lanes: usize, latency: u64) -> Result<Self> {
        if lanes == 0 || latency == 0 {
            return Err(Error::InvalidArgument(
                "modulo pipeline needs at least one lane and latency >= 1".into(),
            ));
        }
        Ok(ModuloPipeline {
            lanes,
            latency,
            cycle: 0,
            in_flight: VecDeque::with_capacity(lanes),
        })
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    /// Cycles stepped so far.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Lanes currently holding a reduction.
    pub fn occupancy(&self) -> usize {
        self.in_flight.len()
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_empty()
    }

    /// Models one clock: retires the oldest finished reduction, then accepts
    /// `feed` if a lane is free.
    pub fn step(&mut self, feed: Option<(u16, usize)>) -> Result<PipelineStep> {
        let now = self.cycle;
        let output = match self.in_flight.front() {
            Some(&(done_at, _)) if done_at <= now => self.in_flight.pop_front().map(|(_, v)| v),
            _ => None,
        };

        let accepted = match feed {
            None => true,
            Some((r, d)) => {
                let offset = bounded(r, d)?;
                if self.in_flight.len() < self.lanes {
                    self.in_flight.push_back((now + self.latency, offset));
                    true
                } else {
                    false
                }
            }
        };

        self.cycle += 1;
        Ok(PipelineStep { output, accepted })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_step_from_one() {
        let mut l = Lfsr16::new(0x0001).unwrap();
        assert_eq!(l.next_value(), 0x8000);
    }

    #[test]
    fn zero_seed_rejected() {
        assert!(Lfsr16::new(0).is_err());
        assert!(parse_seed("0").is_err());
        assert!(parse_seed("0x0000").is_err());
        assert_eq!(parse_seed("0xACE1").unwrap(), 0xACE1);
        assert_eq!(parse_seed("ace1").unwrap(), 0xACE1);
        assert!(parse_seed("0x1ffff").is_err());
    }

    #[test]
    fn full_period_without_repeats() {
        let mut seen = vec![false; 1 << 16];
        let mut l = Lfsr16::new(0x0001).unwrap();
        for step in 1..=Lfsr16::PERIOD {
            let s = l.next_value();
            assert_ne!(s, 0);
            if step < Lfsr16::PERIOD {
                assert!(!seen[s as usize], "state {s:#06x} repeated at step {step}");
            }
            seen[s as usize] = true;
        }
        assert_eq!(l.state(), 0x0001);
        assert_eq!(seen.iter().filter(|&&b| b).count(), 65535);
    }

    #[test]
    fn bounded_examples() {
        assert_eq!(bounded(12345, 1).unwrap(), 0);
        assert_eq!(bounded(65535, 56).unwrap(), 15);
        assert_eq!(bounded(7, 10).unwrap(), 7);
        assert!(bounded(7, 0).is_err());
    }

    #[test]
    fn residue_counts_match_enumeration() {
        for d in [1usize, 2, 3, 7, 8, 56, 100, 65535] {
            let mut brute = vec![0u64; d];
            for r in 1..=65535usize {
                brute[r % d] += 1;
            }
            assert_eq!(residue_counts(d), brute, "d = {d}");
            let lo = 65535 / d as u64;
            assert!(brute.iter().all(|&c| c == lo || c == lo + 1));
        }
    }

    #[test]
    fn segment_seeds() {
        assert_eq!(segment_seed(0xACE1, 0), 0xACE1);
        assert_eq!(segment_seed(0xACE1, 3), 0xACE4);
        assert_eq!(segment_seed(0xFFFF, 1), 0xFFFF);
        assert_eq!(segment_seed(0xFFFE, 3), 0x0001);
    }

    // Reference queue simulation: item i fed at cycle i retires at i + latency.
    #[test]
    fn continuous_feed_retires_in_order() {
        let mut p = ModuloPipeline::new(8).unwrap();
        let feeds: Vec<(u16, usize)> = (0..100u16).map(|i| (i * 37 + 5, 13)).collect();
        let mut next = 0;
        let mut outputs = Vec::new();
        while outputs.len() < feeds.len() {
            let cycle = p.cycle();
            let step = p.step(feeds.get(next).copied()).unwrap();
            if next < feeds.len() {
                assert!(step.accepted, "stall at cycle {cycle}");
                next += 1;
            }
            if let Some(o) = step.output {
                outputs.push((cycle, o));
            }
        }
        let cycles: Vec<u64> = outputs.iter().map(|&(c, _)| c).collect();
        assert_eq!(cycles, (8..108).collect::<Vec<u64>>());
        let values: Vec<usize> = outputs.iter().map(|&(_, v)| v).collect();
        let expected: Vec<usize> = feeds.iter().map(|&(r, d)| r as usize % d).collect();
        assert_eq!(values, expected);
    }

    #[test]
    fn idle_and_single_feed() {
        let mut p = ModuloPipeline::new(8).unwrap();
        for _ in 0..5 {
            assert_eq!(p.step(None).unwrap().output, None);
        }

        let mut p = ModuloPipeline::new(8).unwrap();
        let mut out = Vec::new();
        for c in 0..20u64 {
            let feed = (c == 0).then_some((100u16, 7usize));
            if let Some(o) = p.step(feed).unwrap().output {
                out.push((c, o));
            }
        }
        assert_eq!(out, vec![(8, 2)]);
    }

    #[test]
    fn slow_units_apply_back_pressure() {
        let mut p = ModuloPipeline::new(10).unwrap();
        let mut stalls = 0;
        let mut pending = (0..20u16).map(|i| (i, 5usize)).peekable();
        let mut out = Vec::new();
        while out.len() < 20 {
            let step = p.step(pending.peek().copied()).unwrap();
            if pending.peek().is_some() {
                if step.accepted {
                    pending.next();
                } else {
                    stalls += 1;
                }
            }
            out.extend(step.output);
            assert!(p.occupancy() <= ModuloPipeline::LANES);
        }
        assert!(stalls > 0);
        assert_eq!(out, (0..20).map(|i| i % 5).collect::<Vec<usize>>());
    }

    #[test]
    fn degree_zero_feed_is_an_error() {
        let mut p = ModuloPipeline::new(8).unwrap();
        assert!(p.step(Some((1, 0))).is_err());
        assert!(ModuloPipeline::new(0).is_err());
    }

    proptest! {
        #[test]
        fn never_zero_and_deterministic(seed in 1u16.., steps in 1usize..2000) {
            let a: Vec<u16> = Lfsr16::new(seed).unwrap().take(steps).collect();
            let b: Vec<u16> = Lfsr16::new(seed).unwrap().take(steps).collect();
            prop_assert!(a.iter().all(|&s| s != 0));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn bounded_stays_in_range(r in any::<u16>(), d in 1usize..100_000) {
            prop_assert!(bounded(r, d).unwrap() < d);
        }
    }
}
