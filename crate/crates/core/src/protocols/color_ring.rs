//! Ring coloring from one shared random bit.
//!
//! After wake-up the agents share a bit `b` with the two-valued ring
//! protocol, then flood their preferred colors in both directions. Within
//! each maximal run of equal preferences, counted from its counter-clockwise
//! end, the positions of parity `b` keep their preference; agents without an
//! equal-preference neighbor always do. Everyone else takes the smallest
//! color not used by an already-decided neighbor, in clockwise order from the
//! smallest id.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::coloring::min_free;
use super::ks::KsCore;
use super::KsParams;
use crate::blocks::{
    elect_orientation, renaming, Learned, LocalInfo, LotFlood, SequentialDraws, WakeUp,
};
use crate::engine::{Io, Message, Node, Output, Payload};
use crate::topology::{AgentId, Direction};

/// Colors for a ring given in clockwise order with preferences `prefs`
/// (parallel to `order`) and shared bit `b`.
pub fn ring_colors(order: &[AgentId], prefs: &[u64], b: u64) -> Vec<u64> {
    let n = order.len();
    assert_eq!(n, prefs.len());
    let winners = winners(order, prefs, b);
    let mut color: Vec<Option<u64>> = (0..n).map(|i| winners[i].then_some(prefs[i])).collect();
    let start = (0..n).min_by_key(|&i| order[i]).expect("non-empty ring");
    for step in 0..n {
        let i = (start + step) % n;
        if color[i].is_none() {
            let taken: BTreeSet<u64> = [(i + n - 1) % n, (i + 1) % n]
                .into_iter()
                .filter_map(|j| color[j])
                .collect();
            color[i] = Some(min_free(&taken));
        }
    }
    color
        .into_iter()
        .map(|c| c.expect("all assigned"))
        .collect()
}

/// Which positions keep their preference.
pub fn winners(order: &[AgentId], prefs: &[u64], b: u64) -> Vec<bool> {
    let n = order.len();
    let mut win = vec![false; n];
    if prefs.iter().all(|&p| p == prefs[0]) {
        let anchor = (0..n).min_by_key(|&i| order[i]).expect("non-empty ring");
        for off in 0..n {
            let last_clash = off == n - 1 && n % 2 == 1;
            if off as u64 % 2 == b && !last_clash {
                win[(anchor + off) % n] = true;
            }
        }
        return win;
    }
    // A run starts where the counter-clockwise neighbor prefers differently.
    for s in 0..n {
        if prefs[(s + n - 1) % n] == prefs[s] {
            continue;
        }
        let mut len = 1;
        while prefs[(s + len) % n] == prefs[s] {
            len += 1;
        }
        for off in 0..len {
            if len == 1 || off as u64 % 2 == b {
                win[(s + off) % n] = true;
            }
        }
    }
    win
}

enum Phase {
    Wake,
    Rename(SequentialDraws),
    Elect(LotFlood, BTreeMap<AgentId, u64>),
    Bit(KsCore),
    Flood(Flood),
    Done,
}

struct Flood {
    start: u32,
    order: Vec<AgentId>,
    prefs: BTreeMap<AgentId, u64>,
    bit: u64,
}

pub struct ColorRingNode {
    local: LocalInfo,
    pref: u64,
    elect: bool,
    input: u64,
    r: [u64; 2],
    wake: WakeUp,
    phase: Phase,
    direction: Direction,
}

impl ColorRingNode {
    pub fn new(local: LocalInfo, pref: u64, elect: bool) -> Self {
        ColorRingNode {
            wake: WakeUp::new(local.clone(), None),
            local,
            pref,
            elect,
            input: 0,
            r: [0; 2],
            phase: Phase::Wake,
            direction: Direction::Clockwise,
        }
    }

    pub(crate) fn bit_core_mut(&mut self) -> Option<&mut KsCore> {
        match &mut self.phase {
            Phase::Bit(c) => Some(c),
            _ => None,
        }
    }

    fn learned(&self) -> Arc<Learned> {
        self.wake.learned().expect("wake-up done").clone()
    }

    fn start_bit(&mut self, round: u32, io: &mut Io<'_, '_>) -> Phase {
        let params = KsParams { field: 2, k: 2 };
        match KsCore::new(
            self.local.id,
            self.learned(),
            params,
            self.input,
            self.r,
            round,
        ) {
            Ok(c) => Phase::Bit(c),
            Err(e) => {
                io.abort(e);
                Phase::Done
            }
        }
    }

    fn flood(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.local.id;
        let learned = self.learned();
        let Phase::Flood(f) = &mut self.phase else {
            return;
        };
        let rel = round - f.start;
        let n = learned.n as u32;
        let cw = learned.walk(me, 1);
        let ccw = learned.walk(me, -1);
        if rel == 1 {
            f.prefs.insert(me, self.pref);
            for nb in [cw, ccw] {
                io.send(
                    nb,
                    Payload::Pref {
                        origin: me,
                        value: self.pref,
                    },
                );
            }
        }
        let mut from_ccw = 0;
        let mut from_cw = 0;
        for m in inbox {
            let Payload::Pref { origin, value } = m.payload else {
                io.abort(format!(
                    "unexpected {:?} during preference flood",
                    m.payload
                ));
                return;
            };
            let hops = rel as i64 - 1;
            let (expected, next) = if m.src == ccw {
                from_ccw += 1;
                (learned.walk(me, -hops), cw)
            } else {
                from_cw += 1;
                (learned.walk(me, hops), ccw)
            };
            if origin != expected || rel < 2 {
                io.abort("preference from the wrong place");
                return;
            }
            match f.prefs.get(&origin) {
                Some(&v) if v != value => {
                    io.abort(format!("conflicting preferences for {origin}"));
                    return;
                }
                _ => {
                    f.prefs.insert(origin, value);
                }
            }
            if rel < n {
                io.send(next, Payload::Pref { origin, value });
            }
        }
        let expect_one = (2..=n).contains(&rel) as u32;
        if from_ccw != expect_one || from_cw != expect_one {
            io.abort("preference flood off schedule");
            return;
        }
        if rel == n {
            let prefs: Vec<u64> = f.order.iter().map(|a| f.prefs[a]).collect();
            let colors = ring_colors(&f.order, &prefs, f.bit);
            let i = f.order.iter().position(|&a| a == me).expect("on ring");
            io.output(Output::Value(colors[i]));
            self.phase = Phase::Done;
        }
    }
}

impl Node for ColorRingNode {
    fn id(&self) -> AgentId {
        self.local.id
    }

    fn init(&mut self, io: &mut Io<'_, '_>) {
        self.input = io.draw(2);
        self.r = [io.draw(2), io.draw(2)];
    }

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.local.id;
        match &mut self.phase {
            Phase::Wake => {
                if let Some(learned) = self.wake.step(round, inbox, io) {
                    self.phase = if self.elect {
                        Phase::Rename(renaming(me, learned, round + 1))
                    } else {
                        self.start_bit(round, io)
                    };
                }
            }
            Phase::Rename(d) => {
                if d.step(round, inbox, io) {
                    let names = d.values.clone();
                    self.phase = Phase::Elect(LotFlood::new(me, self.learned(), round + 1), names);
                }
            }
            Phase::Elect(lots, names) => {
                if lots.step(round, inbox, io) {
                    let draw = lots.sum_mod_n();
                    let names = names.clone();
                    match elect_orientation(&self.learned(), &names, draw) {
                        Some((_, dir)) => {
                            self.direction = dir;
                            self.phase = self.start_bit(round, io);
                        }
                        None => {
                            io.abort("election failed");
                            self.phase = Phase::Done;
                        }
                    }
                }
            }
            Phase::Bit(core) => {
                if let Some(bit) = core.step(round, inbox, io) {
                    let learned = self.learned();
                    let mut order = learned.layout().expect("oriented ring").to_vec();
                    if self.direction == Direction::Counterclockwise {
                        order.reverse();
                    }
                    self.phase = Phase::Flood(Flood {
                        start: round,
                        order,
                        prefs: BTreeMap::new(),
                        bit,
                    });
                }
            }
            Phase::Flood(_) => self.flood(round, inbox, io),
            Phase::Done => {
                if !inbox.is_empty() {
                    io.abort("traffic after the protocol ended");
                }
            }
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        let phase = match &self.phase {
            Phase::Wake => "wake-up",
            Phase::Rename(_) => "renaming",
            Phase::Elect(..) => "election",
            Phase::Bit(_) => "bit",
            Phase::Flood(_) => "preferences",
            Phase::Done => "done",
        };
        serde_json::json!({ "phase": phase, "pref": self.pref })
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
