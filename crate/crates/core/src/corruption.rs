//! Data-corruption models.
//!
//! Natural corruption flips one uniformly chosen bit in a broadcast element
//! with a fixed probability, independently per element and per delivered copy.
//! Floating-point elements are IEEE-754 binary64; the path-length estimate is
//! a 32-bit two's-complement integer.
//!
//! Malevolent corruption puts one agent through a periodic normal/down
//! schedule. While down, every locally computed block has Gaussian offsets with
//! positive mean added to it, and the corrupted block replaces the agent's own
//! state.

use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, StreamRng};
use crate::runtime::UpdateMessage;
use crate::{Error, Result};

/// Width of the integer path-length estimate on the wire.
pub const INTEGER_BITS: u32 = 32;

/// Which bits of a binary64 value a flip may hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BitRange {
    #[default]
    All,
    LowerMantissa,
    UpperMantissa,
    Exponent,
    Sign,
}

impl BitRange {
    pub const ALL_RANGES: [BitRange; 5] = [
        BitRange::All,
        BitRange::LowerMantissa,
        BitRange::UpperMantissa,
        BitRange::Exponent,
        BitRange::Sign,
    ];

    pub fn bits(self) -> RangeInclusive<u32> {
        match self {
            BitRange::All => 0..=63,
            BitRange::LowerMantissa => 0..=25,
            BitRange::UpperMantissa => 26..=51,
            BitRange::Exponent => 52..=62,
            BitRange::Sign => 63..=63,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BitRange::All => "all",
            BitRange::LowerMantissa => "lower-mantissa",
            BitRange::UpperMantissa => "upper-mantissa",
            BitRange::Exponent => "exponent",
            BitRange::Sign => "sign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitFlipPolicy {
    pub probability: f64,
    #[serde(default)]
    pub bit_range: BitRange,
    #[serde(default)]
    pub seed: u64,
}

impl BitFlipPolicy {
    pub fn new(probability: f64, bit_range: BitRange, seed: u64) -> Result<Self> {
        let p = Self {
            probability,
            bit_range,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.probability) {
            return Err(Error::InvalidPolicy(format!(
                "bit flip probability must lie in [0, 1), got {}",
                self.probability
            )));
        }
        Ok(())
    }
}

/// Returns `value` with bit `bit` (0 = least significant) inverted.
pub fn flip_bit_f64(value: f64, bit: u32) -> f64 {
    assert!(bit < 64, "bit index {bit} out of range for f64");
    f64::from_bits(value.to_bits() ^ (1u64 << bit))
}

pub fn flip_bit_i32(value: i32, bit: u32) -> i32 {
    assert!(bit < INTEGER_BITS, "bit index {bit} out of range for i32");
    value ^ (1i32 << bit)
}

/// Counts of what a corruption pass actually touched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlipCounts {
    pub elements: u64,
    pub elements_flipped: u64,
    pub s_tilde_flipped: u64,
}

impl std::ops::AddAssign for FlipCounts {
    fn add_assign(&mut self, other: Self) {
        self.elements += other.elements;
        self.elements_flipped += other.elements_flipped;
        self.s_tilde_flipped += other.s_tilde_flipped;
    }
}

/// Corrupts one delivered copy of a broadcast. Only the solution elements and
/// the path-length estimate can change.
pub fn corrupt_broadcast(
    payload: &UpdateMessage,
    policy: &BitFlipPolicy,
    rng: &mut impl Rng,
) -> (UpdateMessage, FlipCounts) {
    let mut out = payload.clone();
    let mut counts = FlipCounts {
        elements: payload.block.len() as u64,
        ..FlipCounts::default()
    };
    if policy.probability == 0.0 {
        return (out, counts);
    }
    let bits = policy.bit_range.bits();
    for v in out.block.iter_mut() {
        if rng.random_bool(policy.probability) {
            *v = flip_bit_f64(*v, rng.random_range(bits.clone()));
            counts.elements_flipped += 1;
        }
    }
    if rng.random_bool(policy.probability) {
        out.s_tilde = flip_bit_i32(out.s_tilde, rng.random_range(0..INTEGER_BITS));
        counts.s_tilde_flipped += 1;
    }
    (out, counts)
}

/// Bit-flip injector owned by one directed link.
#[derive(Debug, Clone)]
pub struct BitFlipInjector {
    policy: BitFlipPolicy,
    rng: StreamRng,
    counts: FlipCounts,
}

impl BitFlipInjector {
    pub fn for_link(policy: BitFlipPolicy, from: usize, to: usize) -> Self {
        Self {
            rng: rng::stream(
                policy.seed,
                &[rng::tag::LINK_CORRUPTION, from as u64, to as u64],
            ),
            policy,
            counts: FlipCounts::default(),
        }
    }

    pub fn corrupt(&mut self, msg: &UpdateMessage) -> UpdateMessage {
        let (out, c) = corrupt_broadcast(msg, &self.policy, &mut self.rng);
        self.counts += c;
        out
    }

    pub fn counts(&self) -> FlipCounts {
        self.counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalevolentPolicy {
    /// Seconds spent in the normal state at the start of each period.
    pub omega_f: f64,
    /// Seconds spent in the down state at the end of each period.
    pub omega_r: f64,
    /// Mean of the Gaussian offset; its standard deviation is `delta / 2`.
    pub delta: f64,
    pub target_agent: usize,
    #[serde(default)]
    pub seed: u64,
}

impl MalevolentPolicy {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidPolicy(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("omega_f", self.omega_f)?;
        positive("omega_r", self.omega_r)?;
        positive("delta", self.delta)
    }

    pub fn period(&self) -> f64 {
        self.omega_f + self.omega_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MalevolentState {
    Normal,
    Down,
}

/// Normal on `[kT, kT + ω_f)`, down on `[kT + ω_f, (k+1)T)` with `T = ω_f + ω_r`.
pub fn malevolent_state(policy: &MalevolentPolicy, elapsed: f64) -> MalevolentState {
    let phase = elapsed.max(0.0) % policy.period();
    if phase < policy.omega_f {
        MalevolentState::Normal
    } else {
        MalevolentState::Down
    }
}

pub fn apply_malevolent_offsets(
    block: &[f64],
    policy: &MalevolentPolicy,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let offset = Normal::new(policy.delta, 0.5 * policy.delta).expect("validated delta");
    block.iter().map(|v| v + offset.sample(rng)).collect()
}

/// Malevolent injector owned by the targeted agent.
#[derive(Debug, Clone)]
pub struct MalevolentInjector {
    policy: MalevolentPolicy,
    rng: StreamRng,
    applications: u64,
}

impl MalevolentInjector {
    pub fn new(policy: MalevolentPolicy) -> Self {
        Self {
            rng: rng::stream(
                policy.seed,
                &[rng::tag::MALEVOLENT, policy.target_agent as u64],
            ),
            policy,
            applications: 0,
        }
    }

    pub fn policy(&self) -> &MalevolentPolicy {
        &self.policy
    }

    pub fn state(&self, elapsed: f64) -> MalevolentState {
        malevolent_state(&self.policy, elapsed)
    }

    /// Overwrites `block` with an offset copy if the schedule is down at
    /// `elapsed`. Returns whether it did.
    pub fn maybe_apply(&mut self, block: &mut Vec<f64>, elapsed: f64) -> bool {
        if self.state(elapsed) == MalevolentState::Normal {
            return false;
        }
        *block = apply_malevolent_offsets(block, &self.policy, &mut self.rng);
        self.applications += 1;
        true
    }

    pub fn applications(&self) -> u64 {
        self.applications
    }
}
