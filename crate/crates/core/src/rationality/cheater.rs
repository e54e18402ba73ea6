//! The process of an agent that runs a segment of virtual agents.

use std::collections::{BTreeMap, BTreeSet};

use super::{map_output, Game, Override, Prepared};
use crate::engine::{Io, Message, Node, Output, Payload, PieceKind, Process};
use crate::protocols::color_ring::ColorRingNode;
use crate::protocols::coloring::{ColorOrientNode, ColorRenamingNode};
use crate::protocols::ks::{piece_path, targets, KsCore, KsNode};
use crate::protocols::leader::LeaderNode;
use crate::protocols::orientation::OrientationNode;
use crate::protocols::partition::PartitionNode;
use crate::topology::{AgentId, DuplicationScheme};

pub struct CheaterProcess {
    owner: AgentId,
    slots: Vec<AgentId>,
    nodes: BTreeMap<AgentId, Box<dyn Node>>,
    scheme: DuplicationScheme,
    program: Override,
    pref: Output,
    field: u64,
    k: u64,
    outputs: BTreeMap<AgentId, Output>,
    done: bool,
    delayed: Vec<(AgentId, AgentId, Payload)>,
    swung: bool,
    /// Colors announced by real neighbors.
    blocked: BTreeSet<u64>,
}

impl CheaterProcess {
    pub fn new(game: &Game, p: &Prepared) -> Self {
        let spec = &game.spec;
        let cheater = p.strategy.cheater;
        let pref_value = spec.pref(cheater);
        let mut nodes = BTreeMap::new();
        for &v in &p.scheme.virtual_ids {
            let input = if v == cheater {
                spec.inputs.get(&cheater).copied()
            } else {
                None
            };
            let mut node = spec.node_with(&p.exec, v, pref_value, input);
            match p.strategy.program {
                Override::Forced { value } => force(node.as_mut(), value),
                Override::TamperRelay => {
                    if let Some(n) = node.as_any_mut().downcast_mut::<ColorOrientNode>() {
                        n.tamper_relay = true;
                    }
                }
                _ => {}
            }
            nodes.insert(v, node);
        }
        let mut slots = p.scheme.virtual_ids.clone();
        slots.sort_unstable();
        let ks = spec.ks_params();
        CheaterProcess {
            owner: cheater,
            slots,
            nodes,
            scheme: p.scheme.clone(),
            program: p.strategy.program.clone(),
            pref: p.pref.value.clone(),
            field: ks.field,
            k: ks.k,
            outputs: BTreeMap::new(),
            done: false,
            delayed: Vec::new(),
            swung: false,
            blocked: BTreeSet::new(),
        }
    }

    fn is_slot(&self, a: AgentId) -> bool {
        self.slots.binary_search(&a).is_ok()
    }

    fn merge(&self) -> Output {
        let primary = self.outputs[&self.owner].clone();
        match &primary {
            Output::Edges(_) => {
                let mut edges = Vec::new();
                for o in self.outputs.values() {
                    if let Output::Edges(es) = o {
                        edges.extend(es.iter().copied().filter(|(nb, _)| !self.is_slot(*nb)));
                    }
                }
                edges.sort();
                Output::Edges(edges)
            }
            Output::Value(_) => match self.pref {
                Output::Value(p)
                    if !self.blocked.contains(&p)
                        && self.outputs.values().any(|o| *o == Output::Value(p)) =>
                {
                    Output::Value(p)
                }
                _ => primary,
            },
            _ => map_output(&primary, &self.scheme),
        }
    }

    /// Re-targets the input of a virtual agent whose two secret transmissions
    /// each have one piece that never leaves the segment, once every real
    /// input is known. Pieces still held or in flight inside the segment are
    /// XOR-ed so the targets reconstruct the new input.
    fn swing(&mut self, round: u32, inbox: &mut [Message]) {
        let owner = self.owner;
        let slot_set: BTreeSet<AgentId> = self.slots.iter().copied().collect();
        let mut cores: BTreeMap<AgentId, &mut KsCore> = self
            .nodes
            .iter_mut()
            .filter_map(|(&id, n)| ks_core_mut(n.as_mut()).map(|c| (id, c)))
            .collect();
        if cores.len() != slot_set.len() {
            return;
        }
        let learned = cores[&owner].learned.clone();
        let n = learned.n as u32;
        let start = cores[&owner].start();
        if round != start + n - 1 {
            return;
        }
        self.swung = true;
        let Output::Value(p) = self.pref else {
            return;
        };
        let inside = |path: &[AgentId]| path.iter().all(|a| slot_set.contains(a));

        let mut swing = None;
        for &s in &self.slots {
            let ts = targets(&learned, s);
            if !ts.iter().all(|t| slot_set.contains(t)) {
                continue;
            }
            let kinds: Vec<(AgentId, PieceKind)> = ts
                .iter()
                .filter_map(|&t| {
                    [PieceKind::R, PieceKind::X]
                        .into_iter()
                        .find(|&k| inside(&piece_path(&learned, s, t, k)))
                        .map(|k| (t, k))
                })
                .collect();
            if kinds.len() == 2 {
                swing = Some((s, kinds));
                break;
            }
        }
        let Some((s, kinds)) = swing else {
            return;
        };

        let mut pieces: BTreeMap<(AgentId, AgentId, PieceKind), u64> = BTreeMap::new();
        for c in cores.values() {
            pieces.extend(c.seen.iter().map(|(k, v)| (*k, *v)));
            pieces.extend(c.held.iter().map(|(k, v)| (*k, *v)));
        }
        for m in inbox.iter() {
            if let Payload::Piece {
                origin,
                target,
                kind,
                value,
                ..
            } = m.payload
            {
                pieces.insert((origin, target, kind), value);
            }
        }
        let layout = learned.layout().expect("oriented ring").to_vec();
        let mut others = 0u64;
        for &o in &layout {
            if slot_set.contains(&o) {
                if o != s {
                    others += cores[&o].input();
                }
                continue;
            }
            let known = targets(&learned, o).into_iter().find_map(|t| {
                let r = pieces.get(&(o, t, PieceKind::R))?;
                let x = pieces.get(&(o, t, PieceKind::X))?;
                Some(r ^ x)
            });
            match known {
                Some(v) => others += v,
                None => return,
            }
        }
        let Some(new_input) = (0..self.field).find(|&x| (others + x) % self.k == p) else {
            return;
        };
        let delta = cores[&s].input() ^ new_input;
        if delta == 0 {
            return;
        }
        for &(t, kind) in &kinds {
            for c in cores.values_mut() {
                if let Some(v) = c.held.get_mut(&(s, t, kind)) {
                    *v ^= delta;
                }
            }
            for m in inbox.iter_mut() {
                if let Payload::Piece {
                    origin,
                    target,
                    kind: mk,
                    ref mut value,
                    ..
                } = m.payload
                {
                    if origin == s && target == t && mk == kind && slot_set.contains(&m.dst) {
                        *value ^= delta;
                    }
                }
            }
        }
        if let Some(c) = cores.get_mut(&s) {
            c.set_input(new_input);
        }
    }
}

/// The secret-sharing core inside a node, if it has one running.
pub(crate) fn ks_core_mut(node: &mut dyn Node) -> Option<&mut KsCore> {
    let any = node.as_any_mut();
    if any.is::<KsNode>() {
        return any.downcast_mut::<KsNode>().and_then(KsNode::core_mut);
    }
    any.downcast_mut::<ColorRingNode>()
        .and_then(ColorRingNode::bit_core_mut)
}

fn force(node: &mut dyn Node, value: u64) {
    let any = node.as_any_mut();
    if let Some(n) = any.downcast_mut::<ColorOrientNode>() {
        n.forced_publish = Some(value);
    } else if let Some(n) = any.downcast_mut::<ColorRenamingNode>() {
        n.forced_publish = Some(value);
    } else if let Some(n) = any.downcast_mut::<LeaderNode>() {
        n.forced_lot = Some(value);
    } else if let Some(n) = any.downcast_mut::<PartitionNode>() {
        n.forced_mark = Some(value as u8);
    } else if let Some(n) = any.downcast_mut::<OrientationNode>() {
        n.forced_bit = Some(value as u8);
    }
}

impl Process for CheaterProcess {
    fn owner(&self) -> AgentId {
        self.owner
    }

    fn slots(&self) -> &[AgentId] {
        &self.slots
    }

    fn init(&mut self, io: &mut Io<'_, '_>) {
        for &s in &self.slots {
            io.set_slot(s);
            self.nodes.get_mut(&s).expect("slot node").init(io);
        }
        io.set_slot(self.owner);
    }

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        for m in inbox {
            if let Payload::Color { value } = m.payload {
                if !self.is_slot(m.src) {
                    self.blocked.insert(value);
                }
            }
        }
        let mut inbox = inbox.to_vec();
        match self.program {
            Override::LieAboutInput { round: r } if r == round => {
                let node = self.nodes.get_mut(&self.owner).expect("primary node");
                if let Some(i) = node.input() {
                    node.set_input(i + 1);
                }
            }
            Override::SybilSwing if !self.swung => self.swing(round, &mut inbox),
            _ => {}
        }

        let emitted_before = io.outbox_mut().len();
        for &s in &self.slots {
            let lo = inbox.partition_point(|m| m.dst < s);
            let hi = inbox.partition_point(|m| m.dst <= s);
            io.set_slot(s);
            self.nodes
                .get_mut(&s)
                .expect("slot node")
                .step(round, &inbox[lo..hi], io);
            if let Some(o) = io.take_output() {
                self.outputs.entry(s).or_insert(o);
            }
            if io.aborted() {
                io.set_slot(self.owner);
                return;
            }
        }
        io.set_slot(self.owner);

        let slots = self.slots.clone();
        let external = |dst: &AgentId| slots.binary_search(dst).is_err();
        let outbox = io.outbox_mut();
        let fresh = outbox.split_off(emitted_before);
        let (mut keep, ext): (Vec<_>, Vec<_>) =
            fresh.into_iter().partition(|(_, dst, _)| !external(dst));
        match self.program {
            Override::Withhold { round: r } if r == round => {}
            Override::DelayByOne { round: r } if r == round => self.delayed = ext,
            _ => keep.extend(ext),
        }
        if let Override::DelayByOne { round: r } = self.program {
            if r + 1 == round {
                keep.append(&mut self.delayed);
            }
        }
        outbox.extend(keep);

        if !self.done && self.outputs.len() == self.slots.len() {
            self.done = true;
            let o = match self.program {
                Override::OutputOverride => self.pref.clone(),
                _ => self.merge(),
            };
            io.output(o);
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "program": self.program.to_string(),
            "virtual": self
                .nodes
                .iter()
                .map(|(a, n)| (a.to_string(), n.snapshot()))
                .collect::<BTreeMap<_, _>>(),
        })
    }
}
