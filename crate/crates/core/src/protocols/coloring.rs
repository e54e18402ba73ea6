//! Greedy coloring in a publicly known turn order.
//!
//! Two orderings are provided: names from renaming (a total order), and
//! witnessed ranks that only differ between neighbors, verified over two
//! disjoint paths before any color is chosen. At its turn an agent takes its
//! preferred color unless a neighbor already announced it, and the smallest
//! unannounced color otherwise.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::blocks::{renaming, Learned, LocalInfo, Order, Prompt, Scope, SequentialDraws, WakeUp};
use crate::engine::{Io, Message, Node, Output, Payload};
use crate::topology::AgentId;

/// Smallest color not in `taken`.
pub fn min_free(taken: &BTreeSet<u64>) -> u64 {
    (0..).find(|c| !taken.contains(c)).expect("finite set")
}

/// Preferred color when free, else the smallest free one.
pub fn choose_color(pref: u64, taken: &BTreeSet<u64>) -> u64 {
    if taken.contains(&pref) {
        min_free(taken)
    } else {
        pref
    }
}

/// The color-announcement phase. `turns` gives the round in which each agent
/// speaks.
pub struct Turns {
    me: AgentId,
    learned: Arc<Learned>,
    pref: u64,
    turns: BTreeMap<AgentId, u32>,
    taken: BTreeSet<u64>,
    heard: BTreeSet<AgentId>,
    pub color: Option<u64>,
    /// Color announced instead of the greedy choice (deviation hook).
    pub forced_color: Option<u64>,
}

impl Turns {
    pub fn new(
        me: AgentId,
        learned: Arc<Learned>,
        pref: u64,
        turns: BTreeMap<AgentId, u32>,
    ) -> Self {
        Turns {
            me,
            learned,
            pref,
            turns,
            taken: BTreeSet::new(),
            heard: BTreeSet::new(),
            color: None,
            forced_color: None,
        }
    }

    pub fn end_round(&self) -> u32 {
        self.turns.values().copied().max().unwrap_or(0) + 1
    }

    pub fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.me;
        for m in inbox {
            let Payload::Color { value } = m.payload else {
                io.abort(format!("unexpected {:?} during coloring", m.payload));
                return;
            };
            let on_time = self.turns.get(&m.src).is_some_and(|&t| t + 1 == round);
            if !on_time || !self.heard.insert(m.src) {
                io.abort(format!("{} spoke out of turn", m.src));
                return;
            }
            if self.color == Some(value) {
                io.abort(format!("{} announced a color already taken", m.src));
                return;
            }
            self.taken.insert(value);
        }
        if self.turns.get(&me) == Some(&round) {
            let c = self
                .forced_color
                .unwrap_or_else(|| choose_color(self.pref, &self.taken));
            self.color = Some(c);
            for &nb in self.learned.topology.neighbors(me) {
                io.send(nb, Payload::Color { value: c });
            }
            io.output(Output::Value(c));
        }
    }
}

/// Coloring in name order after renaming.
pub struct ColorRenamingNode {
    local: LocalInfo,
    pref: u64,
    wake: WakeUp,
    pub(crate) names: Option<SequentialDraws>,
    turns: Option<Turns>,
    /// Name published instead of the drawn one (deviation hook).
    pub forced_publish: Option<u64>,
}

impl ColorRenamingNode {
    pub fn new(local: LocalInfo, pref: u64) -> Self {
        ColorRenamingNode {
            wake: WakeUp::new(local.clone(), None),
            local,
            pref,
            names: None,
            turns: None,
            forced_publish: None,
        }
    }

    pub fn names(&self) -> Option<&BTreeMap<AgentId, u64>> {
        self.names.as_ref().map(|n| &n.values)
    }
}

impl Node for ColorRenamingNode {
    fn id(&self) -> AgentId {
        self.local.id
    }

    fn init(&mut self, _io: &mut Io<'_, '_>) {}

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.local.id;
        if let Some(t) = &mut self.turns {
            t.step(round, inbox, io);
            return;
        }
        if let Some(names) = &mut self.names {
            if names.step(round, inbox, io) {
                let end = names.end_round();
                let turns = names
                    .values
                    .iter()
                    .map(|(&a, &v)| (a, end + v as u32))
                    .collect();
                let learned = self.wake.learned().expect("wake-up done").clone();
                self.turns = Some(Turns::new(me, learned, self.pref, turns));
            }
            return;
        }
        if let Some(learned) = self.wake.step(round, inbox, io) {
            let mut names = renaming(me, learned, round + 1);
            names.forced_publish = self.forced_publish;
            self.names = Some(names);
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "pref": self.pref,
            "name": self.names.as_ref().and_then(|n| n.values.get(&self.local.id)),
            "color": self.turns.as_ref().and_then(|t| t.color),
        })
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

enum OrientPhase {
    Wake,
    Draws(SequentialDraws),
    Prompt(Prompt),
    Turns(Turns),
}

/// Coloring in the order of witnessed ranks, distinct among neighbors.
pub struct ColorOrientNode {
    local: LocalInfo,
    pref: u64,
    wake: WakeUp,
    phase: OrientPhase,
    ranks: BTreeMap<AgentId, u64>,
    /// Rank published instead of the drawn one (deviation hook).
    pub forced_publish: Option<u64>,
    /// Corrupts relayed prompt answers (deviation hook).
    pub tamper_relay: bool,
}

impl ColorOrientNode {
    pub fn new(local: LocalInfo, pref: u64) -> Self {
        ColorOrientNode {
            wake: WakeUp::new(local.clone(), None),
            local,
            pref,
            phase: OrientPhase::Wake,
            ranks: BTreeMap::new(),
            forced_publish: None,
            tamper_relay: false,
        }
    }

    pub fn ranks(&self) -> &BTreeMap<AgentId, u64> {
        &self.ranks
    }
}

impl Node for ColorOrientNode {
    fn id(&self) -> AgentId {
        self.local.id
    }

    fn init(&mut self, _io: &mut Io<'_, '_>) {}

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.local.id;
        let next = match &mut self.phase {
            OrientPhase::Wake => self.wake.step(round, inbox, io).map(|learned| {
                let mut d = SequentialDraws::new(
                    me,
                    learned,
                    Scope::Neighbors,
                    Order::DescendingId,
                    round + 1,
                );
                d.forced_publish = self.forced_publish;
                OrientPhase::Draws(d)
            }),
            OrientPhase::Draws(d) => d.step(round, inbox, io).then(|| {
                self.ranks = d.values.clone();
                let learned = self.wake.learned().expect("wake-up done").clone();
                let mut p = Prompt::new(
                    me,
                    learned,
                    round + 1,
                    d.values.clone(),
                    d.witnessed.clone(),
                );
                p.tamper_relay = self.tamper_relay;
                OrientPhase::Prompt(p)
            }),
            OrientPhase::Prompt(p) => p.step(round, inbox, io).then(|| {
                let learned = self.wake.learned().expect("wake-up done").clone();
                let first = round + 1;
                let mut turns = BTreeMap::new();
                for (&a, &s) in &self.ranks {
                    turns.insert(a, first + s as u32 - 1);
                }
                OrientPhase::Turns(Turns::new(me, learned, self.pref, turns))
            }),
            OrientPhase::Turns(t) => {
                t.step(round, inbox, io);
                None
            }
        };
        if let Some(p) = next {
            self.phase = p;
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        let phase = match &self.phase {
            OrientPhase::Wake => "wake-up",
            OrientPhase::Draws(_) => "draws",
            OrientPhase::Prompt(_) => "prompt",
            OrientPhase::Turns(_) => "colors",
        };
        serde_json::json!({
            "phase": phase,
            "pref": self.pref,
            "rank": self.ranks.get(&self.local.id),
        })
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
