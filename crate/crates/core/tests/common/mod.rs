#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use ratdup::engine::random::{for_each_leaf, DEFAULT_ENUMERATION_CAP};
use ratdup::engine::{ExecutionTrace, Payload, RandomnessSource, TraceLevel};
use ratdup::protocols::{run_honest, ProtocolSpec};
use ratdup::topology::{build_ring, AgentId, Topology};

pub fn ring(n: usize) -> Arc<Topology> {
    let ids: Vec<AgentId> = (1..=n as u64).map(|i| AgentId(i * 10 + 3)).collect();
    Arc::new(build_ring(n, &ids).unwrap())
}

pub fn graph(nodes: &[u64], edges: &[(u64, u64)]) -> Arc<Topology> {
    Arc::new(
        Topology::new(
            nodes.iter().map(|&n| AgentId(n)),
            edges.iter().map(|&(a, b)| (AgentId(a), AgentId(b))),
        )
        .unwrap(),
    )
}

pub fn frac(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

/// Every honest execution under `src`, with its probability denominator.
pub fn honest_leaves(
    t: &Arc<Topology>,
    spec: &ProtocolSpec,
    src: &RandomnessSource,
    level: TraceLevel,
    visit: impl FnMut(u128, ExecutionTrace),
) -> u64 {
    for_each_leaf(
        src,
        DEFAULT_ENUMERATION_CAP,
        |r| run_honest(t, spec, r, level),
        visit,
    )
    .unwrap()
}

/// Round at which wake-up hands over to the ring phase: one before the
/// first piece is sent.
pub fn ring_phase_start(trace: &ExecutionTrace) -> u32 {
    trace
        .messages()
        .filter(|m| matches!(m.payload, Payload::Piece { .. }))
        .map(|m| m.round)
        .min()
        .expect("pieces were sent")
        - 1
}

/// Preference maps keyed by position in the topology's node order.
pub fn prefs(t: &Topology, values: &[u64]) -> BTreeMap<AgentId, u64> {
    t.nodes().zip(values.iter().copied().cycle()).collect()
}
