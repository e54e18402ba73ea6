//! The problem protocols and their registry.

pub mod color_ring;
pub mod coloring;
pub mod ks;
pub mod leader;
pub mod orientation;
pub mod partition;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{LocalInfo, SizeBound};
use crate::engine::{
    run_execution, EngineError, ExecutionTrace, HonestProcess, Node, ProblemKind, ProblemSpec,
    Process, Randomness, RandomnessSource, RunOptions, TraceLevel,
};
use crate::topology::{AgentId, Topology};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("{0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProtocolName {
    #[serde(rename = "ks")]
    Ks,
    #[serde(rename = "ks2")]
    Ks2,
    #[serde(rename = "color-renaming")]
    ColorRenaming,
    #[serde(rename = "color-orient")]
    ColorOrient,
    #[serde(rename = "color-ring")]
    ColorRing,
    #[serde(rename = "partition")]
    Partition,
    #[serde(rename = "orientation")]
    Orientation,
    #[serde(rename = "leader")]
    Leader,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 8] = [
        ProtocolName::Ks,
        ProtocolName::Ks2,
        ProtocolName::ColorRenaming,
        ProtocolName::ColorOrient,
        ProtocolName::ColorRing,
        ProtocolName::Partition,
        ProtocolName::Orientation,
        ProtocolName::Leader,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::Ks => "ks",
            ProtocolName::Ks2 => "ks2",
            ProtocolName::ColorRenaming => "color-renaming",
            ProtocolName::ColorOrient => "color-orient",
            ProtocolName::ColorRing => "color-ring",
            ProtocolName::Partition => "partition",
            ProtocolName::Orientation => "orientation",
            ProtocolName::Leader => "leader",
        }
    }

    pub fn problem(self) -> ProblemKind {
        match self {
            ProtocolName::Ks => ProblemKind::KnowledgeSharing,
            ProtocolName::Ks2 => ProblemKind::TwoKnowledgeSharing,
            ProtocolName::ColorRenaming | ProtocolName::ColorOrient | ProtocolName::ColorRing => {
                ProblemKind::Coloring
            }
            ProtocolName::Partition => ProblemKind::RingPartition,
            ProtocolName::Orientation => ProblemKind::Orientation,
            ProtocolName::Leader => ProblemKind::LeaderElection,
        }
    }

    /// Whether agents start out knowing the clockwise direction.
    pub fn oriented(self) -> bool {
        matches!(
            self,
            ProtocolName::Ks | ProtocolName::Ks2 | ProtocolName::ColorRing
        )
    }

    pub fn requires_ring(self) -> bool {
        matches!(
            self,
            ProtocolName::Ks
                | ProtocolName::Ks2
                | ProtocolName::ColorRing
                | ProtocolName::Partition
        )
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolName {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ProtocolError::UnknownProtocol(s.to_string()))
    }
}

/// Field size and output range of the sharing protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KsParams {
    /// Inputs and pieces live in `[0, field)`; a power of two.
    pub field: u64,
    /// Outputs are `Σ inputs mod k`.
    pub k: u64,
}

/// A protocol together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: ProtocolName,
    pub k: u64,
    pub field: u64,
    /// Preferred output values: colors, group bits, or sharing outputs.
    #[serde(default)]
    pub prefs: BTreeMap<AgentId, u64>,
    /// Fixed private inputs for the sharing protocols; drawn when absent.
    #[serde(default)]
    pub inputs: BTreeMap<AgentId, u64>,
    #[serde(default)]
    pub bound: Option<SizeBound>,
    /// Ring coloring: elect a leader to fix the direction first.
    #[serde(default)]
    pub elect: bool,
}

impl ProtocolSpec {
    pub fn new(name: ProtocolName) -> Self {
        let (k, field) = match name {
            ProtocolName::Ks => (4, 4),
            ProtocolName::Ks2 => (2, 2),
            _ => (0, 2),
        };
        ProtocolSpec {
            name,
            k,
            field,
            prefs: BTreeMap::new(),
            inputs: BTreeMap::new(),
            bound: None,
            elect: false,
        }
    }

    pub fn with_ks(mut self, k: u64, field: u64) -> Self {
        self.k = k;
        self.field = field;
        self
    }

    pub fn with_prefs(mut self, prefs: BTreeMap<AgentId, u64>) -> Self {
        self.prefs = prefs;
        self
    }

    pub fn with_bound(mut self, bound: SizeBound) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn problem(&self) -> ProblemSpec {
        let k = match self.name {
            ProtocolName::Ks2 => 2,
            _ => self.k,
        };
        ProblemSpec::new(self.name.problem(), k)
    }

    pub fn ks_params(&self) -> KsParams {
        match self.name {
            ProtocolName::Ks2 => KsParams { field: 2, k: 2 },
            _ => KsParams {
                field: self.field,
                k: self.k,
            },
        }
    }

    pub fn validate(&self, t: &Topology) -> Result<(), ProtocolError> {
        let bad = |s: String| Err(ProtocolError::InvalidParameter(s));
        if matches!(self.name, ProtocolName::Ks | ProtocolName::Ks2) {
            let p = self.ks_params();
            if p.k < 2 {
                return bad(format!("k = {} is below 2", p.k));
            }
            if !p.field.is_power_of_two() || p.field < 2 {
                return bad(format!("field size {} is not a power of two", p.field));
            }
            if t.node_count() < 4 {
                return bad("the sharing ring needs at least 4 agents".into());
            }
        }
        if self.name.requires_ring() && !t.is_ring() {
            return bad(format!("{} runs on rings only", self.name));
        }
        if let Some(b) = self.bound {
            if b.alpha < 3 || b.beta < b.alpha {
                return bad(format!("bad size bound [{}, {}]", b.alpha, b.beta));
            }
        }
        Ok(())
    }

    /// Preference of `a`, zero by default.
    pub fn pref(&self, a: AgentId) -> u64 {
        self.prefs.get(&a).copied().unwrap_or(0)
    }

    /// Honest node for slot `id` of the execution topology `t`.
    pub fn node(&self, t: &Topology, id: AgentId) -> Box<dyn Node> {
        self.node_with(t, id, self.pref(id), self.inputs.get(&id).copied())
    }

    /// Honest node with an explicit preference and input.
    pub fn node_with(
        &self,
        t: &Topology,
        id: AgentId,
        pref: u64,
        input: Option<u64>,
    ) -> Box<dyn Node> {
        let mut local = LocalInfo::from_topology(t, id);
        if !self.name.oriented() {
            local.cw = None;
        }
        match self.name {
            ProtocolName::Ks | ProtocolName::Ks2 => {
                Box::new(ks::KsNode::new(local, self.bound, self.ks_params(), input))
            }
            ProtocolName::ColorRenaming => Box::new(coloring::ColorRenamingNode::new(local, pref)),
            ProtocolName::ColorOrient => Box::new(coloring::ColorOrientNode::new(local, pref)),
            ProtocolName::ColorRing => {
                Box::new(color_ring::ColorRingNode::new(local, pref, self.elect))
            }
            ProtocolName::Partition => Box::new(partition::PartitionNode::new(local)),
            ProtocolName::Orientation => Box::new(orientation::OrientationNode::new(local)),
            ProtocolName::Leader => Box::new(leader::LeaderNode::new(local, self.bound)),
        }
    }

    pub fn honest_processes(&self, t: &Topology) -> Vec<Box<dyn Process>> {
        t.nodes()
            .map(|id| Box::new(HonestProcess::new(self.node(t, id))) as Box<dyn Process>)
            .collect()
    }

    /// Generous upper bound on the rounds an honest run takes on `t`.
    pub fn round_limit(&self, t: &Topology) -> u32 {
        let n = t.node_count() as u32;
        64 + 8 * n * n
    }
}

/// One honest execution.
pub fn run_honest(
    t: &Arc<Topology>,
    spec: &ProtocolSpec,
    rand: &mut Randomness<'_>,
    level: TraceLevel,
) -> Result<ExecutionTrace, EngineError> {
    spec.validate(t)
        .map_err(|e| EngineError::Setup(e.to_string()))?;
    let opts = RunOptions {
        round_limit: spec.round_limit(t),
        level,
    };
    run_execution(t, spec.honest_processes(t), rand, opts)
}

/// One honest execution from a seed or script.
pub fn run_honest_seeded(
    t: &Arc<Topology>,
    spec: &ProtocolSpec,
    src: &RandomnessSource,
    level: TraceLevel,
) -> Result<ExecutionTrace, EngineError> {
    run_honest(t, spec, &mut Randomness::new(src), level)
}

/// Whether `q` over `m` inputs from `[0, field)` has the full knowledge
/// property: with any one input unknown, every output in the range of `q`
/// is equally likely. Constant functions are rejected.
pub fn verify_full_knowledge(q: &dyn Fn(&[u64]) -> u64, field: u64, m: usize) -> bool {
    if m == 0 || field == 0 {
        return false;
    }
    let total = field
        .checked_pow(m as u32)
        .expect("domain too large to enumerate");
    let decode = |mut idx: u64| -> Vec<u64> {
        (0..m)
            .map(|_| {
                let v = idx % field;
                idx /= field;
                v
            })
            .collect()
    };
    let mut range = std::collections::BTreeSet::new();
    for idx in 0..total {
        range.insert(q(&decode(idx)));
    }
    if range.len() < 2 {
        return false;
    }
    for j in 0..m {
        let others = total / field;
        for rest in 0..others {
            let mut base = decode(rest);
            base.insert(j, 0);
            base.truncate(m);
            let mut counts: BTreeMap<u64, u64> = range.iter().map(|&y| (y, 0)).collect();
            for x in 0..field {
                base[j] = x;
                *counts.get_mut(&q(&base)).expect("value in range") += 1;
            }
            let first = counts.values().next().copied();
            if !counts.values().all(|&c| Some(c) == first) {
                return false;
            }
        }
    }
    true
}

/// `Σ inputs mod k`.
pub fn sum_mod(k: u64) -> impl Fn(&[u64]) -> u64 {
    move |xs: &[u64]| xs.iter().sum::<u64>() % k
}
