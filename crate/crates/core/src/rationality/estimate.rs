//! Exact and sampled expected utilities, group views, and knowledge rounds.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{preference, utility, DeviationStrategy, Game, Outcome, Prepared, RationalityError};
use crate::engine::random::{for_each_leaf, ratio, sample_seed, ProbSum};
use crate::engine::{
    EngineError, ExecutionTrace, Payload, PieceKind, Randomness, RandomnessSource, TraceLevel,
};
use crate::topology::AgentId;

fn engine_err(e: RationalityError) -> EngineError {
    match e {
        RationalityError::Engine(e) => e,
        other => EngineError::Setup(other.to_string()),
    }
}

/// Enumerates every execution of `p` and hands each outcome to `visit`
/// with its probability denominator. Returns the number of executions.
pub fn enumerate_outcomes(
    game: &Game,
    p: &Prepared,
    class: Option<u64>,
    level: TraceLevel,
    visit: impl FnMut(u128, Outcome),
) -> Result<u64, RationalityError> {
    let mut base = RandomnessSource::enumerated();
    base.seed = p.strategy.seed;
    let src = game.randomness(p, &base, class);
    Ok(for_each_leaf(
        &src,
        game.cap,
        |r| game.run(p, r, level).map_err(engine_err),
        visit,
    )?)
}

/// Exact expected utility of the cheater at round 0, given its own input
/// class.
pub fn expected_utility_exact(
    game: &Game,
    s: &DeviationStrategy,
    class: Option<u64>,
) -> Result<BigRational, RationalityError> {
    let p = game.prepare(s)?;
    let mut sum = ProbSum::new();
    enumerate_outcomes(game, &p, class, TraceLevel::Outputs, |den, o| {
        sum.add(den, o.utility as u128)
    })?;
    Ok(sum.value())
}

/// Sample mean with a 95% normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub samples: u64,
}

impl McEstimate {
    fn from_values(sum: f64, sum_sq: f64, samples: u64) -> Self {
        let n = samples as f64;
        let mean = sum / n;
        let var = if samples > 1 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            half_width: 1.96 * (var / n).sqrt(),
            samples,
        }
    }

    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }
}

fn sample(
    game: &Game,
    p: &Prepared,
    seed: u64,
    i: u64,
    class: Option<u64>,
) -> Result<u8, RationalityError> {
    let base = RandomnessSource::seeded(sample_seed(seed, i));
    let src = game.randomness(p, &base, class);
    Ok(game
        .run(p, &mut Randomness::new(&src), TraceLevel::Outputs)?
        .utility)
}

/// Monte Carlo expected utility over `samples` independent seeded runs.
pub fn expected_utility_mc(
    game: &Game,
    s: &DeviationStrategy,
    samples: u64,
    seed: u64,
    class: Option<u64>,
) -> Result<McEstimate, RationalityError> {
    if samples == 0 {
        return Err(RationalityError::Invalid(
            "at least one sample is needed".into(),
        ));
    }
    let p = game.prepare(s)?;
    let ones = (0..samples)
        .into_par_iter()
        .map(|i| sample(game, &p, seed, i, class).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(McEstimate::from_values(ones as f64, ones as f64, samples))
}

/// Paired Monte Carlo estimate of `E[u | b] − E[u | a]`: both strategies
/// see the same seed per sample.
pub fn utility_gain_mc(
    game: &Game,
    a: &DeviationStrategy,
    b: &DeviationStrategy,
    samples: u64,
    seed: u64,
    class: Option<u64>,
) -> Result<McEstimate, RationalityError> {
    if samples == 0 {
        return Err(RationalityError::Invalid(
            "at least one sample is needed".into(),
        ));
    }
    let pa = game.prepare(a)?;
    let pb = game.prepare(b)?;
    let (sum, sum_sq) = (0..samples)
        .into_par_iter()
        .map(|i| {
            let d = sample(game, &pb, seed, i, class)? as i64
                - sample(game, &pa, seed, i, class)? as i64;
            Ok::<_, RationalityError>((d, d * d))
        })
        .try_reduce(|| (0, 0), |x, y| Ok((x.0 + y.0, x.1 + y.1)))?;
    Ok(McEstimate::from_values(sum as f64, sum_sq as f64, samples))
}

/// What `group` (slots of the execution graph) has observed by the end of
/// `round`: its draws so far and every message delivered to it. Requires a
/// trace recorded at [`TraceLevel::Messages`] or above.
pub fn view_key(trace: &ExecutionTrace, group: &BTreeSet<AgentId>, round: u32) -> String {
    let draws: Vec<_> = trace
        .draws
        .iter()
        .filter(|d| group.contains(&d.slot) && d.round <= round)
        .collect();
    let msgs: Vec<_> = trace
        .messages()
        .filter(|m| group.contains(&m.dst) && m.round < round)
        .collect();
    serde_json::to_string(&(draws, msgs)).expect("serializable view")
}

/// Probability of one view of a group and the target's expected utility
/// given that view.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupView {
    pub probability: BigRational,
    pub utility: BigRational,
}

/// Group expected utility of `target` (an original agent) for every view
/// `group` can hold at the end of `round`.
pub fn group_expected_utility(
    game: &Game,
    s: &DeviationStrategy,
    group: &BTreeSet<AgentId>,
    target: AgentId,
    round: u32,
    class: Option<u64>,
) -> Result<BTreeMap<String, GroupView>, RationalityError> {
    let p = game.prepare(s)?;
    let pref = preference(&game.spec, &game.topology, target);
    let problem = game.spec.problem();
    let mut acc: BTreeMap<String, (ProbSum, ProbSum)> = BTreeMap::new();
    enumerate_outcomes(game, &p, class, TraceLevel::Messages, |den, o| {
        let u = utility(&game.topology, &o.outputs, &pref, &problem);
        let e = acc.entry(view_key(&o.trace, group, round)).or_default();
        e.0.add(den, 1);
        e.1.add(den, u as u128);
    })?;
    Ok(acc
        .into_iter()
        .map(|(k, (prob, util))| {
            let probability = prob.value();
            let utility = ratio(&util.value(), &probability);
            (
                k,
                GroupView {
                    probability,
                    utility,
                },
            )
        })
        .collect())
}

/// For every agent of the execution graph, the first round by whose end
/// `group` has its input: as a member, by receiving it openly, or by having
/// seen both pieces of one of its secret transmissions.
pub fn knowledge_rounds(
    trace: &ExecutionTrace,
    group: &BTreeSet<AgentId>,
) -> BTreeMap<AgentId, Option<u32>> {
    let mut first: BTreeMap<AgentId, Option<u32>> =
        trace.topology.nodes().map(|a| (a, None)).collect();
    let mut pieces: BTreeMap<(AgentId, AgentId), [Option<u32>; 2]> = BTreeMap::new();
    fn learn(first: &mut BTreeMap<AgentId, Option<u32>>, a: AgentId, r: u32) {
        let e = first.entry(a).or_insert(None);
        if e.is_none_or(|x| r < x) {
            *e = Some(r);
        }
    }
    for &a in group {
        learn(&mut first, a, 0);
    }
    for m in trace.messages() {
        if !group.contains(&m.dst) {
            continue;
        }
        let at = m.round + 1;
        match m.payload {
            Payload::Input { origin, .. } => learn(&mut first, origin, at),
            Payload::Piece {
                origin,
                target,
                kind,
                ..
            } => {
                let e = pieces.entry((origin, target)).or_default();
                let i = (kind == PieceKind::X) as usize;
                if e[i].is_none_or(|x| at < x) {
                    e[i] = Some(at);
                }
            }
            _ => {}
        }
    }
    for ((origin, _), pair) in pieces {
        if let [Some(r), Some(x)] = pair {
            learn(&mut first, origin, r.max(x));
        }
    }
    first
}

/// First round by whose end `group` knows every input, if ever.
pub fn first_computable_round(trace: &ExecutionTrace, group: &BTreeSet<AgentId>) -> Option<u32> {
    knowledge_rounds(trace, group)
        .into_values()
        .try_fold(0, |acc, r| r.map(|r| acc.max(r)))
}
