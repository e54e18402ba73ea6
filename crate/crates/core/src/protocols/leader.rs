//! Fair leader election: wake-up, renaming, then one flooded joint draw.

use std::any::Any;
use std::collections::BTreeMap;

use crate::blocks::{
    elect_orientation, renaming, LocalInfo, LotFlood, SequentialDraws, SizeBound, WakeUp,
};
use crate::engine::{Io, Message, Node, Output};
use crate::topology::AgentId;

enum Phase {
    Wake,
    Rename(SequentialDraws),
    Elect(LotFlood, BTreeMap<AgentId, u64>),
    Done,
}

pub struct LeaderNode {
    local: LocalInfo,
    wake: WakeUp,
    phase: Phase,
    /// Lot used instead of a random one (deviation hook).
    pub forced_lot: Option<u64>,
}

impl LeaderNode {
    pub fn new(local: LocalInfo, bound: Option<SizeBound>) -> Self {
        LeaderNode {
            wake: WakeUp::new(local.clone(), bound),
            local,
            phase: Phase::Wake,
            forced_lot: None,
        }
    }
}

impl Node for LeaderNode {
    fn id(&self) -> AgentId {
        self.local.id
    }

    fn init(&mut self, _io: &mut Io<'_, '_>) {}

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.local.id;
        match &mut self.phase {
            Phase::Wake => {
                if let Some(learned) = self.wake.step(round, inbox, io) {
                    self.phase = Phase::Rename(renaming(me, learned, round + 1));
                }
            }
            Phase::Rename(d) => {
                if d.step(round, inbox, io) {
                    let names = d.values.clone();
                    let learned = self.wake.learned().expect("wake-up done").clone();
                    let mut lots = LotFlood::new(me, learned, round + 1);
                    lots.forced_lot = self.forced_lot;
                    self.phase = Phase::Elect(lots, names);
                }
            }
            Phase::Elect(lots, names) => {
                if lots.step(round, inbox, io) {
                    let learned = self.wake.learned().expect("wake-up done");
                    match elect_orientation(learned, names, lots.sum_mod_n()) {
                        Some((leader, _)) => io.output(Output::Agent(leader)),
                        None => io.abort("election failed"),
                    }
                    self.phase = Phase::Done;
                }
            }
            Phase::Done => {
                if !inbox.is_empty() {
                    io.abort("traffic after the election");
                }
            }
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        let phase = match &self.phase {
            Phase::Wake => "wake-up",
            Phase::Rename(_) => "renaming",
            Phase::Elect(..) => "election",
            Phase::Done => "done",
        };
        serde_json::json!({ "phase": phase })
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
