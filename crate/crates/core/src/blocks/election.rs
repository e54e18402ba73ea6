//! Renaming and leader election with ring orientation.
//!
//! Renaming is a run of witnessed draws over the whole graph, in ascending id
//! order, so names form a permutation of `1..=n`. Election then floods one lot
//! per agent, all drawn before any lot is seen; the leader is the agent named
//! `(Σ lots mod n) + 1`.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::draw::{Order, Scope, SequentialDraws};
use super::wakeup::Learned;
use crate::engine::{Io, Message, Payload};
use crate::topology::{AgentId, Direction};

pub fn renaming(me: AgentId, learned: Arc<Learned>, start: u32) -> SequentialDraws {
    SequentialDraws::new(me, learned, Scope::Global, Order::AscendingId, start)
}

/// Joint draw of one value in `[0, n)` by flooding one lot per agent.
pub struct LotFlood {
    me: AgentId,
    learned: Arc<Learned>,
    start: u32,
    dist: BTreeMap<AgentId, usize>,
    pub lots: BTreeMap<AgentId, u64>,
    /// Replaces this agent's own lot (deviation hook).
    pub forced_lot: Option<u64>,
}

impl LotFlood {
    pub fn new(me: AgentId, learned: Arc<Learned>, start: u32) -> Self {
        let dist = learned.topology.distances_from(me);
        LotFlood {
            me,
            learned,
            start,
            dist,
            lots: BTreeMap::new(),
            forced_lot: None,
        }
    }

    pub fn end_round(&self) -> u32 {
        self.start + self.learned.diameter as u32 + 1
    }

    pub fn sum_mod_n(&self) -> u64 {
        self.lots.values().sum::<u64>() % self.learned.n as u64
    }

    /// Advances one round; returns true once every lot is known.
    pub fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) -> bool {
        if round < self.start {
            return false;
        }
        let me = self.me;
        let rel = round - self.start;
        let mut fresh: Vec<(AgentId, Vec<AgentId>)> = Vec::new();
        for m in inbox {
            let Payload::Lot { origin, value } = m.payload else {
                io.abort(format!("unexpected {:?} during election", m.payload));
                return false;
            };
            if value >= self.learned.n as u64 {
                io.abort("lot out of range");
                return false;
            }
            match self.lots.get(&origin) {
                Some(&v) if v != value => {
                    io.abort(format!("conflicting lots for {origin}"));
                    return false;
                }
                Some(_) => {
                    if let Some(f) = fresh.iter_mut().find(|(o, _)| *o == origin) {
                        f.1.push(m.src);
                    }
                }
                None => {
                    if self.dist.get(&origin).copied() != Some(rel as usize) {
                        io.abort(format!("lot of {origin} arrived at the wrong round"));
                        return false;
                    }
                    self.lots.insert(origin, value);
                    fresh.push((origin, vec![m.src]));
                }
            }
        }

        if rel == 0 {
            let n = self.learned.n as u64;
            let drawn = io.draw(n);
            let lot = self.forced_lot.map_or(drawn, |v| v % n);
            self.lots.insert(me, lot);
            for &nb in self.learned.topology.neighbors(me) {
                io.send(
                    nb,
                    Payload::Lot {
                        origin: me,
                        value: lot,
                    },
                );
            }
        }
        for (origin, from) in fresh {
            let value = self.lots[&origin];
            for &nb in self.learned.topology.neighbors(me) {
                if !from.contains(&nb) {
                    io.send(nb, Payload::Lot { origin, value });
                }
            }
        }

        if round == self.end_round() {
            if self.lots.len() != self.learned.n {
                io.abort("missing lots");
                return false;
            }
            return true;
        }
        false
    }
}

/// Leader and ring direction derived from names and the joint draw.
pub fn elect_orientation(
    learned: &Learned,
    names: &BTreeMap<AgentId, u64>,
    draw: u64,
) -> Option<(AgentId, Direction)> {
    let target = draw % learned.n as u64 + 1;
    let leader = names.iter().find(|(_, &v)| v == target).map(|(&a, _)| a)?;
    let direction = match learned.layout() {
        Some(_) => {
            let cw = learned.walk(leader, 1);
            let ccw = learned.walk(leader, -1);
            if names.get(&cw) < names.get(&ccw) {
                Direction::Clockwise
            } else {
                Direction::Counterclockwise
            }
        }
        None => Direction::Clockwise,
    };
    Some((leader, direction))
}
