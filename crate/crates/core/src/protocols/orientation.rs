//! Edge orientation by one simultaneous coin exchange per edge.
//!
//! At round 1 every agent sends an independent bit over each of its edges.
//! An edge whose two bits differ points toward its higher-id endpoint, and
//! toward its lower-id endpoint otherwise.

use std::any::Any;
use std::collections::BTreeMap;

use crate::blocks::LocalInfo;
use crate::engine::{EdgeDir, Io, Message, Node, Output, Payload};
use crate::topology::AgentId;

/// Direction of edge `(me, other)` from `me`'s side given both bits.
pub fn edge_direction(me: AgentId, other: AgentId, mine: u8, theirs: u8) -> EdgeDir {
    let toward_higher = (mine ^ theirs) == 1;
    let toward_me = toward_higher == (me > other);
    if toward_me {
        EdgeDir::In
    } else {
        EdgeDir::Out
    }
}

pub struct OrientationNode {
    local: LocalInfo,
    bits: BTreeMap<AgentId, u8>,
    /// Bit sent on every edge instead of a random one (deviation hook).
    pub forced_bit: Option<u8>,
}

impl OrientationNode {
    pub fn new(local: LocalInfo) -> Self {
        OrientationNode {
            local,
            bits: BTreeMap::new(),
            forced_bit: None,
        }
    }
}

impl Node for OrientationNode {
    fn id(&self) -> AgentId {
        self.local.id
    }

    fn init(&mut self, io: &mut Io<'_, '_>) {
        for &nb in &self.local.neighbors {
            self.bits.insert(nb, io.draw(2) as u8);
        }
    }

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.local.id;
        match round {
            1 => {
                if !inbox.is_empty() {
                    io.abort("message before the exchange");
                    return;
                }
                for (&nb, &b) in &self.bits {
                    let value = self.forced_bit.unwrap_or(b);
                    io.send(nb, Payload::Bit { value });
                }
            }
            2 => {
                let mut theirs: BTreeMap<AgentId, u8> = BTreeMap::new();
                for m in inbox {
                    let Payload::Bit { value } = m.payload else {
                        io.abort(format!("unexpected {:?} during orientation", m.payload));
                        return;
                    };
                    if value > 1 || theirs.insert(m.src, value).is_some() {
                        io.abort("malformed edge bit");
                        return;
                    }
                }
                if !theirs.keys().eq(self.local.neighbors.iter()) {
                    io.abort("edge bits do not match the neighborhood");
                    return;
                }
                let edges = self
                    .local
                    .neighbors
                    .iter()
                    .map(|&nb| {
                        let mine = self.forced_bit.unwrap_or(self.bits[&nb]);
                        (nb, edge_direction(me, nb, mine, theirs[&nb]))
                    })
                    .collect();
                io.output(Output::Edges(edges));
            }
            _ => {
                if !inbox.is_empty() {
                    io.abort("traffic after the exchange");
                }
            }
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "bits": self.bits.iter().map(|(a, b)| (a.to_string(), *b)).collect::<BTreeMap<_, _>>(),
        })
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
