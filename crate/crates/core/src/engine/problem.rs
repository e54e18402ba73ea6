//! Output values, problem specifications, and legality.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::topology::{AgentId, Topology};

/// Direction of an edge as seen from the reporting agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDir {
    /// Directed from the reporting agent toward the neighbor.
    Out,
    /// Directed from the neighbor toward the reporting agent.
    In,
}

impl EdgeDir {
    pub fn flip(self) -> Self {
        match self {
            EdgeDir::Out => EdgeDir::In,
            EdgeDir::In => EdgeDir::Out,
        }
    }
}

/// One agent's final output.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Value(u64),
    Agent(AgentId),
    Edges(Vec<(AgentId, EdgeDir)>),
    Bottom,
}

impl Output {
    pub fn is_bottom(&self) -> bool {
        matches!(self, Output::Bottom)
    }

    pub fn value(&self) -> Option<u64> {
        match self {
            Output::Value(v) => Some(*v),
            _ => None,
        }
    }
}

impl std::fmt::Display for Output {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Output::Value(v) => write!(f, "{v}"),
            Output::Agent(a) => write!(f, "agent {a}"),
            Output::Edges(es) => {
                let parts: Vec<String> = es
                    .iter()
                    .map(|(n, d)| match d {
                        EdgeDir::Out => format!("->{n}"),
                        EdgeDir::In => format!("<-{n}"),
                    })
                    .collect();
                write!(f, "[{}]", parts.join(" "))
            }
            Output::Bottom => write!(f, "⊥"),
        }
    }
}

/// Outputs keyed by original agent id.
pub type OutputVector = BTreeMap<AgentId, Output>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    KnowledgeSharing,
    TwoKnowledgeSharing,
    Coloring,
    LeaderElection,
    RingPartition,
    Orientation,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::LeaderElection,
        ProblemKind::KnowledgeSharing,
        ProblemKind::Coloring,
        ProblemKind::TwoKnowledgeSharing,
        ProblemKind::RingPartition,
        ProblemKind::Orientation,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            ProblemKind::KnowledgeSharing => "Knowledge Sharing",
            ProblemKind::TwoKnowledgeSharing => "2-Knowledge Sharing",
            ProblemKind::Coloring => "Coloring",
            ProblemKind::LeaderElection => "Leader Election",
            ProblemKind::RingPartition => "Partition",
            ProblemKind::Orientation => "Orientation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Size of the output range for the sharing problems.
    pub k: u64,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, k: u64) -> Self {
        ProblemSpec { kind, k }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Legal,
    Erroneous,
}

/// Legality of `o` on the original graph `t`. Any ⊥ or missing entry is
/// erroneous.
pub fn classify_output(t: &Topology, o: &OutputVector, p: &ProblemSpec) -> Verdict {
    let complete = t.nodes().all(|n| o.get(&n).is_some_and(|x| !x.is_bottom()));
    if !complete || o.len() != t.node_count() {
        return Verdict::Erroneous;
    }
    let legal = match p.kind {
        ProblemKind::KnowledgeSharing | ProblemKind::TwoKnowledgeSharing => {
            let k = if p.kind == ProblemKind::TwoKnowledgeSharing {
                2
            } else {
                p.k
            };
            let mut vals = o.values().map(Output::value);
            match vals.next().flatten() {
                Some(first) => first < k && vals.all(|v| v == Some(first)),
                None => false,
            }
        }
        ProblemKind::Coloring => {
            o.values().all(|x| x.value().is_some()) && t.edges().all(|(a, b)| o[&a] != o[&b])
        }
        ProblemKind::LeaderElection => {
            let mut vals = o.values();
            match vals.next() {
                Some(Output::Agent(l)) if t.contains(*l) => vals.all(|v| *v == Output::Agent(*l)),
                _ => false,
            }
        }
        ProblemKind::RingPartition => {
            let n = t.node_count();
            let zeros = o.values().filter(|x| **x == Output::Value(0)).count();
            let ones = o.values().filter(|x| **x == Output::Value(1)).count();
            n.is_multiple_of(2) && zeros == n / 2 && ones == n / 2
        }
        ProblemKind::Orientation => orientation_consistent(t, o),
    };
    if legal {
        Verdict::Legal
    } else {
        Verdict::Erroneous
    }
}

fn orientation_consistent(t: &Topology, o: &OutputVector) -> bool {
    let mut dirs: BTreeMap<(AgentId, AgentId), EdgeDir> = BTreeMap::new();
    for (&a, out) in o {
        let Output::Edges(list) = out else {
            return false;
        };
        let listed: Vec<AgentId> = list.iter().map(|(n, _)| *n).collect();
        let mut sorted = listed.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != listed.len() || sorted != t.neighbors(a) {
            return false;
        }
        for &(nb, d) in list {
            dirs.insert((a, nb), d);
        }
    }
    t.edges()
        .all(|(a, b)| dirs.get(&(a, b)).map(|d| d.flip()) == dirs.get(&(b, a)).copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_ring;

    fn ring3() -> Topology {
        build_ring(3, &[AgentId(1), AgentId(2), AgentId(3)]).unwrap()
    }

    fn vals(v: &[u64]) -> OutputVector {
        v.iter()
            .enumerate()
            .map(|(i, &x)| (AgentId(i as u64 + 1), Output::Value(x)))
            .collect()
    }

    #[test]
    fn ks_agreement() {
        let p = ProblemSpec::new(ProblemKind::KnowledgeSharing, 4);
        assert_eq!(
            classify_output(&ring3(), &vals(&[3, 3, 3]), &p),
            Verdict::Legal
        );
        assert_eq!(
            classify_output(&ring3(), &vals(&[3, 3, 5]), &p),
            Verdict::Erroneous
        );
    }

    #[test]
    fn adjacent_equal_colors_are_erroneous() {
        let p = ProblemSpec::new(ProblemKind::Coloring, 0);
        assert_eq!(
            classify_output(&ring3(), &vals(&[0, 1, 0]), &p),
            Verdict::Erroneous
        );
        assert_eq!(
            classify_output(&ring3(), &vals(&[0, 1, 2]), &p),
            Verdict::Legal
        );
    }

    #[test]
    fn bottom_is_erroneous() {
        let p = ProblemSpec::new(ProblemKind::KnowledgeSharing, 4);
        let mut o = vals(&[1, 1, 1]);
        o.insert(AgentId(2), Output::Bottom);
        assert_eq!(classify_output(&ring3(), &o, &p), Verdict::Erroneous);
    }

    #[test]
    fn orientation_needs_matching_endpoints() {
        let t = ring3();
        let (a, b, c) = (AgentId(1), AgentId(2), AgentId(3));
        let mut o = OutputVector::new();
        o.insert(a, Output::Edges(vec![(b, EdgeDir::Out), (c, EdgeDir::In)]));
        o.insert(b, Output::Edges(vec![(a, EdgeDir::In), (c, EdgeDir::Out)]));
        o.insert(c, Output::Edges(vec![(a, EdgeDir::Out), (b, EdgeDir::In)]));
        let p = ProblemSpec::new(ProblemKind::Orientation, 0);
        assert_eq!(classify_output(&t, &o, &p), Verdict::Legal);
        o.insert(c, Output::Edges(vec![(a, EdgeDir::In), (b, EdgeDir::In)]));
        assert_eq!(classify_output(&t, &o, &p), Verdict::Erroneous);
    }
}
