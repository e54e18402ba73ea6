//! Witnessed joint draws, run one owner at a time.
//!
//! Slot layout relative to its first round `σ`:
//! * `σ`: the owner sends the available set to its witness (minimal-id
//!   neighbor);
//! * `σ+1`: owner and witness draw `r ∈ [1, |X|]` and exchange them;
//! * `σ+2`: both compute `S`, the `((r_a + r_w) mod |X|) + 1`-th largest
//!   element of `X`; the owner publishes it;
//! * later rounds: the publication spreads (to the whole graph for renaming,
//!   to the owner's neighbors otherwise) and the witness checks it against its
//!   own computation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::wakeup::Learned;
use crate::engine::{Io, Message, Payload};
use crate::topology::AgentId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DrawError {
    #[error("no values left to choose from")]
    EmptyChoiceSet,
    #[error("draw {0} outside [1, {1}]")]
    OutOfRange(u64, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub owner: AgentId,
    pub witness: AgentId,
    pub r_own: u64,
    pub r_witness: u64,
    pub s: u64,
}

/// Selects from `available` (any order, distinct) given both draws in
/// `[1, |X|]`.
pub fn select(available: &[u64], r_own: u64, r_witness: u64) -> Result<u64, DrawError> {
    let size = available.len();
    if size == 0 {
        return Err(DrawError::EmptyChoiceSet);
    }
    for r in [r_own, r_witness] {
        if r == 0 || r > size as u64 {
            return Err(DrawError::OutOfRange(r, size));
        }
    }
    let q = (r_own + r_witness) % size as u64;
    let mut desc = available.to_vec();
    desc.sort_unstable_by(|a, b| b.cmp(a));
    Ok(desc[(q % size as u64) as usize])
}

/// Full draw between `owner` and `witness` over `{1..n} \ taken`.
pub fn joint_draw(
    owner: AgentId,
    witness: AgentId,
    n: u64,
    taken: &[u64],
    r_own: u64,
    r_witness: u64,
) -> Result<DrawRecord, DrawError> {
    let available: Vec<u64> = (1..=n).filter(|v| !taken.contains(v)).collect();
    let s = select(&available, r_own, r_witness)?;
    Ok(DrawRecord {
        owner,
        witness,
        r_own,
        r_witness,
        s,
    })
}

/// Minimal-id neighbor of `a`.
pub fn witness_of(learned: &Learned, a: AgentId) -> AgentId {
    learned.topology.neighbors(a)[0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// Values are distinct across the whole graph; publications are flooded.
    Global,
    /// Values are distinct among neighbors; publications go to neighbors.
    Neighbors,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    AscendingId,
    DescendingId,
}

/// One joint draw per agent, in id order.
pub struct SequentialDraws {
    me: AgentId,
    learned: Arc<Learned>,
    scope: Scope,
    start: u32,
    slot_len: u32,
    order: Vec<AgentId>,
    /// Values known to this agent.
    pub values: BTreeMap<AgentId, u64>,
    /// Values this agent computed as witness.
    pub witnessed: BTreeMap<AgentId, u64>,
    my_available: Vec<u64>,
    my_r: u64,
    wit_available: Vec<u64>,
    wit_r: u64,
    /// Overrides the owner's published value (deviation hook).
    pub forced_publish: Option<u64>,
}

impl SequentialDraws {
    pub fn new(me: AgentId, learned: Arc<Learned>, scope: Scope, order: Order, start: u32) -> Self {
        let mut ids: Vec<AgentId> = learned.topology.nodes().collect();
        if order == Order::DescendingId {
            ids.reverse();
        }
        let slot_len = match scope {
            Scope::Global => learned.diameter as u32 + 4,
            Scope::Neighbors => 4,
        };
        SequentialDraws {
            me,
            learned,
            scope,
            start,
            slot_len,
            order: ids,
            values: BTreeMap::new(),
            witnessed: BTreeMap::new(),
            my_available: Vec::new(),
            my_r: 0,
            wit_available: Vec::new(),
            wit_r: 0,
            forced_publish: None,
        }
    }

    /// Last round of the phase.
    pub fn end_round(&self) -> u32 {
        self.start + self.slot_len * self.order.len() as u32 - 1
    }

    fn available_for(&self, owner: AgentId) -> Vec<u64> {
        let n = self.learned.n as u64;
        let taken: Vec<u64> = match self.scope {
            Scope::Global => self.values.values().copied().collect(),
            Scope::Neighbors => self
                .learned
                .topology
                .neighbors(owner)
                .iter()
                .filter_map(|v| self.values.get(v).copied())
                .collect(),
        };
        (1..=n).filter(|v| !taken.contains(v)).collect()
    }

    /// Advances one round; returns true once the phase is complete.
    pub fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) -> bool {
        if round < self.start {
            return false;
        }
        let rel = round - self.start;
        let j = (rel / self.slot_len) as usize;
        let r = rel % self.slot_len;
        let Some(&owner) = self.order.get(j) else {
            return true;
        };
        let witness = witness_of(&self.learned, owner);
        let me = self.me;

        if r == 0 {
            self.my_r = 0;
            self.wit_r = 0;
            self.wit_available.clear();
        }
        let mut publishes = Vec::new();
        for m in inbox {
            match (&m.payload, r) {
                (Payload::WitnessRequest { available }, 1) if me == witness && m.src == owner => {
                    self.wit_available = available.to_vec();
                }
                (Payload::Share { value }, 2)
                    if (me == owner && m.src == witness) || (me == witness && m.src == owner) =>
                {
                    if me == owner {
                        self.wit_r = *value;
                    } else {
                        self.my_r = *value;
                    }
                }
                (Payload::Publish { owner: o, value }, _) if *o == owner && r >= 3 => {
                    publishes.push((m.src, *value));
                }
                _ => {
                    io.abort(format!("unexpected {:?} during draw of {owner}", m.payload));
                    return false;
                }
            }
        }

        match r {
            0 => {
                if me == owner {
                    let available = self.available_for(owner);
                    if available.is_empty() {
                        io.abort("empty choice set");
                        return false;
                    }
                    io.send(
                        witness,
                        Payload::WitnessRequest {
                            available: available.clone().into(),
                        },
                    );
                    self.my_available = available;
                }
            }
            1 => {
                if me == witness {
                    let ok = match self.scope {
                        Scope::Global => self.wit_available == self.available_for(owner),
                        Scope::Neighbors => {
                            let mut sorted = self.wit_available.clone();
                            sorted.sort_unstable();
                            sorted.dedup();
                            !sorted.is_empty()
                                && sorted == self.wit_available
                                && sorted.iter().all(|&v| v >= 1 && v <= self.learned.n as u64)
                                && self.values.get(&me).is_none_or(|s| !sorted.contains(s))
                        }
                    };
                    if !ok {
                        io.abort(format!("bad witness request from {owner}"));
                        return false;
                    }
                    let size = self.wit_available.len() as u64;
                    let r_w = io.draw(size) + 1;
                    self.wit_r = r_w;
                    io.send(owner, Payload::Share { value: r_w });
                }
                if me == owner {
                    let size = self.my_available.len() as u64;
                    let r_a = io.draw(size) + 1;
                    self.my_r = r_a;
                    io.send(witness, Payload::Share { value: r_a });
                }
            }
            2 if me == owner || me == witness => {
                let avail = if me == owner {
                    &self.my_available
                } else {
                    &self.wit_available
                };
                let (ra, rw) = (self.my_r, self.wit_r);
                let s = match select(avail, ra, rw) {
                    Ok(s) => s,
                    Err(e) => {
                        io.abort(format!("draw of {owner} failed: {e}"));
                        return false;
                    }
                };
                if me == owner {
                    let published = self.forced_publish.unwrap_or(s);
                    self.values.insert(owner, published);
                    for &nb in self.learned.topology.neighbors(me) {
                        io.send(
                            nb,
                            Payload::Publish {
                                owner,
                                value: published,
                            },
                        );
                    }
                } else {
                    self.witnessed.insert(owner, s);
                }
            }
            _ => {}
        }

        if !publishes.is_empty() {
            if self.scope == Scope::Neighbors && !self.learned.topology.has_edge(me, owner) {
                io.abort("publication from a non-neighbor");
                return false;
            }
            let newly = !self.values.contains_key(&owner);
            for &(src, value) in &publishes {
                if self.scope == Scope::Neighbors && src != owner {
                    io.abort("relayed publication");
                    return false;
                }
                if me == witness && src == owner && self.witnessed.get(&owner) != Some(&value) {
                    io.abort(format!(
                        "{owner} published a value its witness did not draw"
                    ));
                    return false;
                }
                match self.values.get(&owner) {
                    Some(&v) if v != value => {
                        io.abort(format!("conflicting publications of {owner}"));
                        return false;
                    }
                    Some(_) => {}
                    None => {
                        self.values.insert(owner, value);
                    }
                }
            }
            if self.scope == Scope::Global && newly {
                let value = self.values[&owner];
                for &nb in self.learned.topology.neighbors(me) {
                    if !publishes.iter().any(|(s, _)| *s == nb) {
                        io.send(nb, Payload::Publish { owner, value });
                    }
                }
            }
        }

        if r == self.slot_len - 1 {
            let need = match self.scope {
                Scope::Global => true,
                Scope::Neighbors => owner == me || self.learned.topology.has_edge(me, owner),
            };
            if need && !self.values.contains_key(&owner) {
                io.abort(format!("missing publication of {owner}"));
                return false;
            }
            if me == witness && self.values.get(&owner) != self.witnessed.get(&owner) {
                io.abort(format!(
                    "{owner} published a value its witness did not draw"
                ));
                return false;
            }
            if j + 1 == self.order.len() {
                return true;
            }
        }
        false
    }
}
