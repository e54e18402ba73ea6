//! Two-path verification of published draw values.
//!
//! Every agent prompts all neighbors at once. A prompted owner answers each
//! asker directly and, through its witness, along the shortest path from the
//! witness to the asker that avoids the owner. The asker accepts only if both
//! copies agree with the value it saw published; the witness additionally
//! checks the relayed value against the draw it took part in. Where the
//! graph offers no second route (a cut vertex), only the direct copy is
//! compared.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::draw::witness_of;
use super::wakeup::Learned;
use crate::engine::{Io, Message, Payload};
use crate::topology::AgentId;

/// Relay route for `owner`'s answer to `asker`: owner, witness, then the
/// witness's shortest path to the asker avoiding the owner.
pub fn relay_path(learned: &Learned, owner: AgentId, asker: AgentId) -> Option<Vec<AgentId>> {
    let w = witness_of(learned, owner);
    if w == asker {
        return None;
    }
    let tail = learned
        .topology
        .shortest_path_avoiding(w, asker, Some(owner))?;
    let mut path = vec![owner];
    path.extend(tail);
    Some(path)
}

pub struct Prompt {
    me: AgentId,
    learned: Arc<Learned>,
    start: u32,
    /// Published values, as recorded during the draws.
    values: BTreeMap<AgentId, u64>,
    /// Values this agent co-drew as witness.
    witnessed: BTreeMap<AgentId, u64>,
    direct: BTreeMap<AgentId, u64>,
    relayed: BTreeMap<AgentId, u64>,
    /// Flips the low bit of every relayed value this agent forwards
    /// (deviation hook).
    pub tamper_relay: bool,
}

impl Prompt {
    pub fn new(
        me: AgentId,
        learned: Arc<Learned>,
        start: u32,
        values: BTreeMap<AgentId, u64>,
        witnessed: BTreeMap<AgentId, u64>,
    ) -> Self {
        Prompt {
            me,
            learned,
            start,
            values,
            witnessed,
            direct: BTreeMap::new(),
            relayed: BTreeMap::new(),
            tamper_relay: false,
        }
    }

    pub fn end_round(&self) -> u32 {
        self.start + self.learned.n as u32 + 1
    }

    /// Advances one round; returns true once verification has passed.
    pub fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) -> bool {
        if round < self.start {
            return false;
        }
        let me = self.me;
        let rel = round - self.start;
        let neighbors = self.learned.topology.neighbors(me).to_vec();
        let mut prompted = Vec::new();

        for m in inbox {
            match (&m.payload, rel) {
                (Payload::Prompt, 1) => prompted.push(m.src),
                (Payload::Direct { value }, 2) => {
                    if self.direct.insert(m.src, *value).is_some() {
                        io.abort("duplicate direct answer");
                        return false;
                    }
                }
                (
                    Payload::Relay {
                        owner,
                        asker,
                        value,
                    },
                    r,
                ) if r >= 2 => {
                    if !self.on_relay(m.src, *owner, *asker, *value, rel, io) {
                        return false;
                    }
                }
                _ => {
                    io.abort(format!("unexpected {:?} during prompt", m.payload));
                    return false;
                }
            }
        }

        match rel {
            0 => {
                for &nb in &neighbors {
                    io.send(nb, Payload::Prompt);
                }
            }
            1 => {
                prompted.sort_unstable();
                if prompted != neighbors {
                    io.abort("prompt set does not match the neighborhood");
                    return false;
                }
                let Some(&mine) = self.values.get(&me) else {
                    io.abort("no published value to answer with");
                    return false;
                };
                let w = witness_of(&self.learned, me);
                for &nb in &neighbors {
                    io.send(nb, Payload::Direct { value: mine });
                    if nb != w && relay_path(&self.learned, me, nb).is_some() {
                        io.send(
                            w,
                            Payload::Relay {
                                owner: me,
                                asker: nb,
                                value: mine,
                            },
                        );
                    }
                }
            }
            _ => {}
        }

        if round == self.end_round() {
            for &u in &neighbors {
                let published = self.values.get(&u);
                let direct = self.direct.get(&u);
                if published.is_none() || direct != published {
                    io.abort(format!("direct answer of {u} differs from its publication"));
                    return false;
                }
                if witness_of(&self.learned, u) == me {
                    if self.witnessed.get(&u) != direct {
                        io.abort(format!(
                            "{u} answered with a value its witness did not draw"
                        ));
                        return false;
                    }
                } else if relay_path(&self.learned, u, me).is_some()
                    && self.relayed.get(&u) != published
                {
                    io.abort(format!(
                        "relayed answer of {u} differs from its publication"
                    ));
                    return false;
                }
            }
            return true;
        }
        false
    }

    fn on_relay(
        &mut self,
        src: AgentId,
        owner: AgentId,
        asker: AgentId,
        value: u64,
        rel: u32,
        io: &mut Io<'_, '_>,
    ) -> bool {
        let me = self.me;
        let Some(path) = relay_path(&self.learned, owner, asker) else {
            io.abort("relay without a route");
            return false;
        };
        let Some(i) = path.iter().position(|&x| x == me).filter(|&i| i > 0) else {
            io.abort("relay off its route");
            return false;
        };
        if path[i - 1] != src || rel != 1 + i as u32 {
            io.abort("relay from the wrong hop or at the wrong round");
            return false;
        }
        if i == 1 && self.witnessed.get(&owner) != Some(&value) {
            io.abort(format!("{owner} relayed a value its witness did not draw"));
            return false;
        }
        if me == asker {
            if self.relayed.insert(owner, value).is_some() {
                io.abort("duplicate relayed answer");
                return false;
            }
        } else {
            let value = if self.tamper_relay { value ^ 1 } else { value };
            io.send(
                path[i + 1],
                Payload::Relay {
                    owner,
                    asker,
                    value,
                },
            );
        }
        true
    }
}
