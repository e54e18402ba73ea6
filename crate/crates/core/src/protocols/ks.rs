//! Knowledge sharing on an oriented ring.
//!
//! Rounds are counted from the end of wake-up (`ρ = round − W`). Each agent
//! splits its input into two XOR pieces twice and sends them around the ring
//! toward two targets: its clockwise neighbor and the agent `⌊n′/2⌋` steps
//! counter-clockwise. Piece `R` travels clockwise and `X` counter-clockwise,
//! each stopping at a neighbor of the target; both holders hand their piece
//! over at `ρ = n′ − 1`. From `ρ = n′ + 1` inputs circulate openly and every
//! receiver that holds a secret copy compares it. Everyone outputs at
//! `ρ = 2n′`.

use std::any::Any;
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use super::KsParams;
use crate::blocks::{Learned, LocalInfo, SizeBound, WakeUp};
use crate::engine::{Io, Message, Node, Output, Payload, PieceKind};
use crate::topology::AgentId;

/// Splits `input` into `(R, X)` with `X = R ⊕ input`.
pub fn split(input: u64, r: u64) -> (u64, u64) {
    (r, r ^ input)
}

/// The two targets of `a`: clockwise neighbor, then the agent `⌊n′/2⌋`
/// counter-clockwise.
pub fn targets(learned: &Learned, a: AgentId) -> [AgentId; 2] {
    let n = learned.n as i64;
    [learned.walk(a, 1), learned.walk(a, -(n / 2))]
}

/// Path of one piece: the nodes it visits, starting at the origin and ending
/// at the neighbor of the target that hands it over.
pub fn piece_path(
    learned: &Learned,
    origin: AgentId,
    target: AgentId,
    kind: PieceKind,
) -> Vec<AgentId> {
    let (step, stop) = match kind {
        PieceKind::R => (1, learned.walk(target, -1)),
        PieceKind::X => (-1, learned.walk(target, 1)),
    };
    let mut path = vec![origin];
    let mut cur = origin;
    while cur != stop {
        cur = learned.walk(cur, step);
        path.push(cur);
    }
    path
}

/// One scheduled piece transfer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hop {
    pub rel: u32,
    pub from: AgentId,
    pub to: AgentId,
    pub origin: AgentId,
    pub target: AgentId,
    pub kind: PieceKind,
    pub countdown: u32,
}

/// Every piece transfer of one execution, with its send round relative to
/// the end of wake-up. The hand-over to the target happens at `deliver − 1`.
pub fn schedule(learned: &Learned, deliver: u32) -> Vec<Hop> {
    let mut hops = Vec::new();
    let layout = learned.layout().expect("oriented ring");
    for &origin in layout {
        for target in targets(learned, origin) {
            for kind in [PieceKind::R, PieceKind::X] {
                let path = piece_path(learned, origin, target, kind);
                let mut push = |rel: u32, from, to| {
                    hops.push(Hop {
                        rel,
                        from,
                        to,
                        origin,
                        target,
                        kind,
                        countdown: deliver - rel - 1,
                    })
                };
                for (j, w) in path.windows(2).enumerate() {
                    push(1 + j as u32, w[0], w[1]);
                }
                push(deliver - 1, *path.last().expect("non-empty path"), target);
            }
        }
    }
    hops.sort();
    hops
}

type PieceKey = (AgentId, AgentId, PieceKind);
type HopTable = BTreeMap<u32, Vec<Hop>>;
type HopCache = HashMap<(Vec<AgentId>, AgentId), (Arc<HopTable>, Arc<HopTable>)>;

thread_local! {
    static HOPS: RefCell<HopCache> = RefCell::new(HashMap::new());
}

/// Hops received (keyed by arrival round) and sent (keyed by send round)
/// by `me`. Memoized per thread since enumeration rebuilds them constantly.
fn own_hops(learned: &Learned, me: AgentId) -> (Arc<HopTable>, Arc<HopTable>) {
    let key = (learned.layout().expect("oriented ring").to_vec(), me);
    if let Some(v) = HOPS.with(|c| c.borrow().get(&key).cloned()) {
        return v;
    }
    let mut incoming = HopTable::new();
    let mut outgoing = HopTable::new();
    for h in schedule(learned, learned.n as u32) {
        if h.to == me {
            incoming.entry(h.rel + 1).or_default().push(h);
        }
        if h.from == me {
            outgoing.entry(h.rel).or_default().push(h);
        }
    }
    let v = (Arc::new(incoming), Arc::new(outgoing));
    HOPS.with(|c| {
        let mut c = c.borrow_mut();
        if c.len() > 4096 {
            c.clear();
        }
        c.insert(key, v.clone());
    });
    v
}

/// The ring phase after wake-up; reusable by protocols that need a shared
/// random value.
pub struct KsCore {
    pub(crate) me: AgentId,
    pub(crate) learned: Arc<Learned>,
    pub(crate) params: KsParams,
    pub(crate) input: u64,
    r: [u64; 2],
    start: u32,
    incoming: Arc<HopTable>,
    outgoing: Arc<HopTable>,
    /// Piece values currently held, keyed by (origin, target, kind).
    pub(crate) held: BTreeMap<PieceKey, u64>,
    /// Every piece value that passed through this agent.
    pub(crate) seen: BTreeMap<PieceKey, u64>,
    /// Inputs reconstructed as a target.
    pub(crate) secrets: BTreeMap<AgentId, u64>,
    /// Inputs received in the open phase.
    pub(crate) inputs: BTreeMap<AgentId, u64>,
}

impl KsCore {
    /// `start` is the last round of wake-up.
    pub fn new(
        me: AgentId,
        learned: Arc<Learned>,
        params: KsParams,
        input: u64,
        r: [u64; 2],
        start: u32,
    ) -> Result<Self, String> {
        if learned.n < 4 {
            return Err(format!("ring of {} agents is too small", learned.n));
        }
        if learned.layout().is_none() {
            return Err("ring orientation unknown".into());
        }
        let (incoming, outgoing) = own_hops(&learned, me);
        Ok(KsCore {
            me,
            learned,
            params,
            input,
            r,
            start,
            incoming,
            outgoing,
            held: BTreeMap::new(),
            seen: BTreeMap::new(),
            secrets: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }

    pub fn n(&self) -> u32 {
        self.learned.n as u32
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn end_round(&self) -> u32 {
        self.start + 2 * self.n()
    }

    pub fn input(&self) -> u64 {
        self.input
    }

    pub fn set_input(&mut self, v: u64) {
        self.input = v % self.params.field;
    }

    /// Advances one round. Returns `q(I)` at the final round.
    pub fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) -> Option<u64> {
        if round <= self.start {
            return None;
        }
        let rel = round - self.start;
        let n = self.n();
        let me = self.me;

        if rel == 1 {
            let t = targets(&self.learned, me);
            for (i, &target) in t.iter().enumerate() {
                let (r, x) = split(self.input, self.r[i]);
                self.held.insert((me, target, PieceKind::R), r);
                self.held.insert((me, target, PieceKind::X), x);
            }
        }

        if rel <= n {
            if !self.receive_pieces(rel, inbox, io) {
                return None;
            }
        } else if !self.receive_inputs(rel, inbox, io) {
            return None;
        }

        if rel == n {
            let mut by_origin: BTreeMap<AgentId, [Option<u64>; 2]> = BTreeMap::new();
            for (&(origin, target, kind), &v) in &self.held {
                if target == me {
                    let e = by_origin.entry(origin).or_default();
                    e[(kind == PieceKind::X) as usize] = Some(v);
                }
            }
            for (origin, pair) in by_origin {
                if let [Some(r), Some(x)] = pair {
                    self.secrets.insert(origin, r ^ x);
                }
            }
        }

        let outgoing = self.outgoing.clone();
        if let Some(hops) = outgoing.get(&rel) {
            for h in hops.iter() {
                let key = (h.origin, h.target, h.kind);
                let Some(value) = self.held.remove(&key) else {
                    io.abort("piece missing at forwarding time");
                    return None;
                };
                io.send(
                    h.to,
                    Payload::Piece {
                        origin: h.origin,
                        target: h.target,
                        kind: h.kind,
                        countdown: h.countdown,
                        value,
                    },
                );
            }
        }

        if rel == n + 1 {
            self.inputs.insert(me, self.input);
            io.send(
                self.learned.walk(me, 1),
                Payload::Input {
                    origin: me,
                    value: self.input,
                },
            );
        }

        if rel == 2 * n {
            if self.inputs.len() != n as usize {
                io.abort("missing inputs at output time");
                return None;
            }
            let sum: u64 = self.inputs.values().sum();
            return Some(sum % self.params.k);
        }
        None
    }

    fn receive_pieces(&mut self, rel: u32, inbox: &[Message], io: &mut Io<'_, '_>) -> bool {
        let expected: BTreeSet<(AgentId, AgentId, AgentId, PieceKind, u32)> = self
            .incoming
            .get(&rel)
            .map(|hs| {
                hs.iter()
                    .map(|h| (h.from, h.origin, h.target, h.kind, h.countdown))
                    .collect()
            })
            .unwrap_or_default();
        let mut got = BTreeSet::new();
        for m in inbox {
            let Payload::Piece {
                origin,
                target,
                kind,
                countdown,
                value,
            } = m.payload
            else {
                io.abort(format!("unexpected {:?} while pieces travel", m.payload));
                return false;
            };
            if value >= self.params.field {
                io.abort("piece outside the field");
                return false;
            }
            if !got.insert((m.src, origin, target, kind, countdown)) {
                io.abort("duplicate piece");
                return false;
            }
            self.held.insert((origin, target, kind), value);
            self.seen.insert((origin, target, kind), value);
        }
        if got != expected {
            io.abort("piece arrived off schedule");
            return false;
        }
        true
    }

    fn receive_inputs(&mut self, rel: u32, inbox: &[Message], io: &mut Io<'_, '_>) -> bool {
        let n = self.n();
        let me = self.me;
        let ccw = self.learned.walk(me, -1);
        let expected_origin =
            (rel >= n + 2).then(|| self.learned.walk(me, -((rel - n - 1) as i64)));
        if inbox.len() != expected_origin.is_some() as usize {
            io.abort("open inputs off schedule");
            return false;
        }
        for m in inbox {
            let Payload::Input { origin, value } = m.payload else {
                io.abort(format!("unexpected {:?} while inputs circulate", m.payload));
                return false;
            };
            if m.src != ccw || Some(origin) != expected_origin || value >= self.params.field {
                io.abort("open input from the wrong place");
                return false;
            }
            if let Some(&s) = self.secrets.get(&origin) {
                if s != value {
                    io.abort(format!(
                        "{origin} circulated an input that differs from its secret"
                    ));
                    return false;
                }
            }
            self.inputs.insert(origin, value);
            if self.learned.walk(me, 1) != origin {
                io.send(self.learned.walk(me, 1), Payload::Input { origin, value });
            }
        }
        true
    }
}

/// Honest participant of the ring protocol.
pub struct KsNode {
    local: LocalInfo,
    params: KsParams,
    fixed_input: Option<u64>,
    input: u64,
    r: [u64; 2],
    wake: WakeUp,
    pub(crate) core: Option<KsCore>,
}

impl KsNode {
    pub fn new(
        local: LocalInfo,
        bound: Option<SizeBound>,
        params: KsParams,
        fixed_input: Option<u64>,
    ) -> Self {
        KsNode {
            wake: WakeUp::new(local.clone(), bound),
            local,
            params,
            fixed_input,
            input: 0,
            r: [0; 2],
            core: None,
        }
    }

    pub fn core(&self) -> Option<&KsCore> {
        self.core.as_ref()
    }

    pub fn input(&self) -> u64 {
        self.core.as_ref().map_or(self.input, |c| c.input)
    }

    pub(crate) fn core_mut(&mut self) -> Option<&mut KsCore> {
        self.core.as_mut()
    }
}

impl Node for KsNode {
    fn id(&self) -> AgentId {
        self.local.id
    }

    fn init(&mut self, io: &mut Io<'_, '_>) {
        let f = self.params.field;
        self.input = match self.fixed_input {
            Some(v) => v % f,
            None => io.draw(f),
        };
        self.r = [io.draw(f), io.draw(f)];
    }

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        if let Some(core) = &mut self.core {
            if let Some(q) = core.step(round, inbox, io) {
                io.output(Output::Value(q));
            }
            return;
        }
        if let Some(learned) = self.wake.step(round, inbox, io) {
            match KsCore::new(
                self.local.id,
                learned,
                self.params,
                self.input,
                self.r,
                round,
            ) {
                Ok(c) => self.core = Some(c),
                Err(e) => io.abort(e),
            }
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        match &self.core {
            None => serde_json::json!({ "phase": "wake-up", "input": self.input }),
            Some(c) => serde_json::json!({
                "phase": "ring",
                "input": c.input,
                "secrets": c.secrets.iter().map(|(a, v)| (a.to_string(), *v)).collect::<BTreeMap<_, _>>(),
                "inputs": c.inputs.len(),
            }),
        }
    }

    fn set_input(&mut self, value: u64) -> bool {
        let v = value % self.params.field;
        self.input = v;
        if let Some(c) = &mut self.core {
            c.set_input(v);
        }
        true
    }

    fn input(&self) -> Option<u64> {
        Some(KsNode::input(self))
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
