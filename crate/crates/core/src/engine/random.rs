//! Per-slot randomness: seeded streams, scripted values, and exhaustive
//! enumeration over a choice tape.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::topology::AgentId;

/// Default cap on the number of enumerated executions.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// How the draws of one slot are produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotMode {
    /// Every value of every draw is visited by the enumerator.
    Enumerate,
    /// Values come from a ChaCha stream keyed by (seed, slot).
    Seeded,
    /// The listed values are returned first (reduced modulo the domain);
    /// later draws fall back to the seeded stream.
    Script(Vec<u64>),
    /// Every draw returns the same value (reduced modulo the domain).
    Constant(u64),
    /// The listed values first, then `value` for every later draw.
    Biased { prefix: Vec<u64>, value: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomnessSource {
    pub seed: u64,
    pub default_mode: SlotMode,
    #[serde(default)]
    pub slots: BTreeMap<AgentId, SlotMode>,
}

impl RandomnessSource {
    pub fn seeded(seed: u64) -> Self {
        RandomnessSource {
            seed,
            default_mode: SlotMode::Seeded,
            slots: BTreeMap::new(),
        }
    }

    pub fn enumerated() -> Self {
        RandomnessSource {
            seed: 0,
            default_mode: SlotMode::Enumerate,
            slots: BTreeMap::new(),
        }
    }

    pub fn with_slot(mut self, slot: AgentId, mode: SlotMode) -> Self {
        self.slots.insert(slot, mode);
        self
    }

    pub fn mode(&self, slot: AgentId) -> &SlotMode {
        self.slots.get(&slot).unwrap_or(&self.default_mode)
    }

    /// True when no slot enumerates, so a single run covers everything.
    pub fn is_deterministic(&self) -> bool {
        self.default_mode != SlotMode::Enumerate
            && self.slots.values().all(|m| *m != SlotMode::Enumerate)
    }
}

/// Seed of the stream owned by `slot`.
pub fn slot_seed(seed: u64, slot: AgentId) -> u64 {
    splitmix(seed ^ splitmix(slot.0.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Seed of Monte Carlo sample `index`.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed).wrapping_add(index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub round: u32,
    pub slot: AgentId,
    pub domain: u64,
    pub value: u64,
}

/// Live randomness for one execution.
pub struct Randomness<'s> {
    src: &'s RandomnessSource,
    streams: HashMap<AgentId, ChaCha8Rng>,
    script_pos: HashMap<AgentId, usize>,
    prefix: Vec<u64>,
    tape: Vec<(u64, u64)>,
    log: Option<Vec<DrawRecord>>,
}

impl<'s> Randomness<'s> {
    pub fn new(src: &'s RandomnessSource) -> Self {
        Self::with_prefix(src, Vec::new())
    }

    fn with_prefix(src: &'s RandomnessSource, prefix: Vec<u64>) -> Self {
        Randomness {
            src,
            streams: HashMap::new(),
            script_pos: HashMap::new(),
            prefix,
            tape: Vec::new(),
            log: None,
        }
    }

    pub(crate) fn set_logging(&mut self, on: bool) {
        self.log = on.then(Vec::new);
    }

    pub(crate) fn take_log(&mut self) -> Vec<DrawRecord> {
        self.log.take().unwrap_or_default()
    }

    /// Probability denominator of the enumerated choices made so far.
    pub fn denominator(&self) -> u128 {
        self.tape.iter().map(|&(d, _)| d as u128).product()
    }

    fn seeded(&mut self, slot: AgentId, domain: u64) -> u64 {
        let seed = self.src.seed;
        self.streams
            .entry(slot)
            .or_insert_with(|| ChaCha8Rng::seed_from_u64(slot_seed(seed, slot)))
            .gen_range(0..domain)
    }

    /// Uniform draw from `0..domain` on behalf of `slot`.
    pub fn draw(&mut self, slot: AgentId, round: u32, domain: u64) -> u64 {
        assert!(domain > 0, "draw over an empty domain");
        let value = match self.src.mode(slot) {
            SlotMode::Enumerate => {
                if domain == 1 {
                    0
                } else {
                    let pos = self.tape.len();
                    let v = self.prefix.get(pos).copied().unwrap_or(0);
                    self.tape.push((domain, v));
                    v
                }
            }
            SlotMode::Seeded => self.seeded(slot, domain),
            SlotMode::Script(values) => {
                let pos = self.script_pos.entry(slot).or_insert(0);
                let v = values.get(*pos).copied();
                *pos += 1;
                match v {
                    Some(v) => v % domain,
                    None => self.seeded(slot, domain),
                }
            }
            SlotMode::Constant(c) => c % domain,
            SlotMode::Biased { prefix, value } => {
                let pos = self.script_pos.entry(slot).or_insert(0);
                let v = prefix.get(*pos).copied().unwrap_or(*value);
                *pos += 1;
                v % domain
            }
        };
        if let Some(log) = &mut self.log {
            log.push(DrawRecord {
                round,
                slot,
                domain,
                value,
            });
        }
        value
    }

    /// Next prefix in odometer order, or `None` once every leaf is visited.
    fn next_prefix(&self) -> Option<Vec<u64>> {
        let i = self.tape.iter().rposition(|&(d, v)| v + 1 < d)?;
        let mut next: Vec<u64> = self.tape[..i].iter().map(|&(_, v)| v).collect();
        next.push(self.tape[i].1 + 1);
        Some(next)
    }
}

/// Visits every joint assignment of the enumerated draws exactly once.
///
/// `run` performs one execution against the provided randomness and `visit`
/// receives its result together with the probability denominator `D` (the
/// leaf has probability `1/D`).
pub fn for_each_leaf<T, R, V>(
    src: &RandomnessSource,
    cap: u64,
    mut run: R,
    mut visit: V,
) -> Result<u64, EngineError>
where
    R: FnMut(&mut Randomness<'_>) -> Result<T, EngineError>,
    V: FnMut(u128, T),
{
    let mut prefix = Vec::new();
    let mut count = 0u64;
    loop {
        if count >= cap {
            return Err(EngineError::ExplosionCap { cap });
        }
        let mut rand = Randomness::with_prefix(src, prefix);
        let out = run(&mut rand)?;
        count += 1;
        visit(rand.denominator(), out);
        match rand.next_prefix() {
            Some(p) => prefix = p,
            None => return Ok(count),
        }
    }
}

/// Exact accumulator for sums of `weight / D` terms.
#[derive(Clone, Debug, Default)]
pub struct ProbSum {
    by_den: BTreeMap<u128, u128>,
}

impl ProbSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `weight / den`.
    pub fn add(&mut self, den: u128, weight: u128) {
        if weight > 0 {
            *self.by_den.entry(den).or_insert(0) += weight;
        }
    }

    pub fn merge(&mut self, other: &ProbSum) {
        for (&d, &w) in &other.by_den {
            self.add(d, w);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.by_den.is_empty()
    }

    pub fn value(&self) -> BigRational {
        let mut total = BigRational::zero();
        for (&d, &w) in &self.by_den {
            total += BigRational::new(BigInt::from(w), BigInt::from(d));
        }
        total
    }
}

/// `a / b` as an exact rational; `b` must be non-zero.
pub fn ratio(a: &BigRational, b: &BigRational) -> BigRational {
    if b.is_zero() {
        BigRational::zero()
    } else {
        a / b
    }
}

pub fn one() -> BigRational {
    BigRational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(v: u64) -> AgentId {
        AgentId(v)
    }

    #[test]
    fn one_bit_gives_two_halves() {
        let src = RandomnessSource::enumerated();
        let mut seen = Vec::new();
        let n = for_each_leaf(
            &src,
            100,
            |r| Ok(r.draw(a(1), 0, 2)),
            |den, v| seen.push((den, v)),
        )
        .unwrap();
        assert_eq!(n, 2);
        assert_eq!(seen, vec![(2, 0), (2, 1)]);
    }

    #[test]
    fn product_rule_and_normalization() {
        let src = RandomnessSource::enumerated();
        let mut sum = ProbSum::new();
        let n = for_each_leaf(
            &src,
            100,
            |r| {
                for s in 1..=4 {
                    r.draw(a(s), 0, 2);
                }
                Ok(())
            },
            |den, ()| sum.add(den, 1),
        )
        .unwrap();
        assert_eq!(n, 16);
        assert_eq!(sum.value(), one());
    }

    #[test]
    fn data_dependent_domains_are_normalized() {
        // The second domain depends on the first value.
        let src = RandomnessSource::enumerated();
        let mut sum = ProbSum::new();
        let n = for_each_leaf(
            &src,
            100,
            |r| {
                let x = r.draw(a(1), 0, 3);
                r.draw(a(1), 0, x + 1);
                Ok(())
            },
            |den, ()| sum.add(den, 1),
        )
        .unwrap();
        assert_eq!(n, 6);
        assert_eq!(sum.value(), one());
    }

    #[test]
    fn cap_is_enforced() {
        let src = RandomnessSource::enumerated();
        let err = for_each_leaf(&src, 3, |r| Ok(r.draw(a(1), 0, 4)), |_, _| {});
        assert_eq!(err, Err(EngineError::ExplosionCap { cap: 3 }));
    }

    #[test]
    fn seeded_is_reproducible_and_mixed_skips_seeded_slots() {
        let src = RandomnessSource::enumerated().with_slot(a(2), SlotMode::Seeded);
        let mut vals = Vec::new();
        let n = for_each_leaf(
            &src,
            100,
            |r| Ok((r.draw(a(1), 0, 2), r.draw(a(2), 0, 1000))),
            |_, v| vals.push(v),
        )
        .unwrap();
        assert_eq!(n, 2);
        assert_eq!(vals[0].1, vals[1].1);
    }

    #[test]
    fn script_then_stream() {
        let src = RandomnessSource::seeded(7).with_slot(a(1), SlotMode::Script(vec![5, 9]));
        let mut r = Randomness::new(&src);
        assert_eq!(r.draw(a(1), 0, 8), 5);
        assert_eq!(r.draw(a(1), 0, 8), 1);
        let mut r2 = Randomness::new(&src);
        r2.draw(a(1), 0, 8);
        r2.draw(a(1), 0, 8);
        let mut r3 = Randomness::new(&src);
        r3.draw(a(1), 0, 8);
        r3.draw(a(1), 0, 8);
        assert_eq!(r2.draw(a(1), 0, 1 << 20), r3.draw(a(1), 0, 1 << 20));
    }

    #[test]
    fn biased_prefix_then_constant() {
        let mode = SlotMode::Biased {
            prefix: vec![3],
            value: 6,
        };
        let src = RandomnessSource::seeded(0).with_slot(a(1), mode);
        let mut r = Randomness::new(&src);
        assert_eq!(r.draw(a(1), 0, 4), 3);
        assert_eq!(r.draw(a(1), 0, 4), 2);
        assert_eq!(r.draw(a(1), 0, 8), 6);
    }
}
