//! Lock-step synchronous execution with abort-on-detection.
//!
//! Round 0 is initialization: agents draw their private randomness and send
//! nothing. From round 1 on, every process sees the messages sent to its
//! slots in the previous round, computes, and emits messages that are
//! delivered in the next round. The run ends once every process has an
//! output, or as soon as any agent aborts.

pub mod export;
pub mod problem;
pub mod random;

use std::any::Any;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{AgentId, Topology};
pub use problem::{
    classify_output, EdgeDir, Output, OutputVector, ProblemKind, ProblemSpec, Verdict,
};
pub use random::{DrawRecord, Randomness, RandomnessSource, SlotMode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("protocol did not terminate within {limit} rounds")]
    RoundLimitExceeded { limit: u32 },
    #[error("enumeration exceeds the cap of {cap} executions")]
    ExplosionCap { cap: u64 },
    #[error("no strategy for agent {0}")]
    MissingStrategy(AgentId),
    #[error("{0}")]
    Setup(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    R,
    X,
}

/// Protocol message contents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Announce {
        origin: AgentId,
        neighbors: Arc<[AgentId]>,
        cw: Option<AgentId>,
    },
    Piece {
        origin: AgentId,
        target: AgentId,
        kind: PieceKind,
        countdown: u32,
        value: u64,
    },
    Input {
        origin: AgentId,
        value: u64,
    },
    WitnessRequest {
        available: Arc<[u64]>,
    },
    Share {
        value: u64,
    },
    Publish {
        owner: AgentId,
        value: u64,
    },
    Prompt,
    Direct {
        value: u64,
    },
    Relay {
        owner: AgentId,
        asker: AgentId,
        value: u64,
    },
    Color {
        value: u64,
    },
    Pref {
        origin: AgentId,
        value: u64,
    },
    Token {
        mark: u8,
    },
    Bit {
        value: u8,
    },
    Lot {
        origin: AgentId,
        value: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub src: AgentId,
    pub dst: AgentId,
    /// Round in which the message was sent; it is read at `round + 1`.
    pub round: u32,
    pub payload: Payload,
}

/// Per-step interface handed to processes and nodes.
pub struct Io<'r, 's> {
    slot: AgentId,
    round: u32,
    rand: &'r mut Randomness<'s>,
    outbox: &'r mut Vec<(AgentId, AgentId, Payload)>,
    output: Option<Output>,
    abort: Option<(AgentId, String)>,
}

impl<'r, 's> Io<'r, 's> {
    pub fn slot(&self) -> AgentId {
        self.slot
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// Switches the acting slot (used by processes that control several).
    pub fn set_slot(&mut self, slot: AgentId) {
        self.slot = slot;
    }

    pub fn send(&mut self, dst: AgentId, payload: Payload) {
        self.outbox.push((self.slot, dst, payload));
    }

    pub fn draw(&mut self, domain: u64) -> u64 {
        self.rand.draw(self.slot, self.round, domain)
    }

    pub fn output(&mut self, o: Output) {
        if self.output.is_none() {
            self.output = Some(o);
        }
    }

    pub fn abort(&mut self, reason: impl Into<String>) {
        if self.abort.is_none() {
            self.abort = Some((self.slot, reason.into()));
        }
    }

    pub fn take_output(&mut self) -> Option<Output> {
        self.output.take()
    }

    pub fn take_abort(&mut self) -> Option<(AgentId, String)> {
        self.abort.take()
    }

    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    /// Messages emitted so far in this step.
    pub fn outbox_mut(&mut self) -> &mut Vec<(AgentId, AgentId, Payload)> {
        self.outbox
    }
}

/// One honest protocol participant.
pub trait Node: Send {
    fn id(&self) -> AgentId;
    fn init(&mut self, io: &mut Io<'_, '_>);
    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>);
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    /// Replaces the agent's private input after initialization. Returns
    /// false when the protocol has no such notion.
    fn set_input(&mut self, _value: u64) -> bool {
        false
    }
    fn input(&self) -> Option<u64> {
        None
    }
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// The unit the engine schedules: one original agent, controlling one or
/// more slots of the execution topology.
pub trait Process: Send {
    fn owner(&self) -> AgentId;
    fn slots(&self) -> &[AgentId];
    fn init(&mut self, io: &mut Io<'_, '_>);
    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>);
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

pub struct HonestProcess {
    slots: [AgentId; 1],
    node: Box<dyn Node>,
}

impl HonestProcess {
    pub fn new(node: Box<dyn Node>) -> Self {
        HonestProcess {
            slots: [node.id()],
            node,
        }
    }
}

impl Process for HonestProcess {
    fn owner(&self) -> AgentId {
        self.slots[0]
    }
    fn slots(&self) -> &[AgentId] {
        &self.slots
    }
    fn init(&mut self, io: &mut Io<'_, '_>) {
        self.node.init(io);
    }
    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        self.node.step(round, inbox, io);
    }
    fn snapshot(&self) -> serde_json::Value {
        self.node.snapshot()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceLevel {
    /// Outputs, abort information and counters only.
    #[default]
    Outputs,
    /// Adds every message and every draw.
    Messages,
    /// Adds per-round state snapshots.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<std::collections::BTreeMap<AgentId, serde_json::Value>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub round: u32,
    pub detector: AgentId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub topology: Arc<Topology>,
    pub rounds: Vec<RoundRecord>,
    pub draws: Vec<DrawRecord>,
    pub outputs: OutputVector,
    pub aborted: Option<AbortInfo>,
    pub final_round: u32,
    pub message_count: u64,
}

impl ExecutionTrace {
    /// Every message, in send order.
    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.rounds.iter().flat_map(|r| r.messages.iter())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub round_limit: u32,
    pub level: TraceLevel,
}

/// Runs one execution on `topology` (the graph the processes actually
/// communicate over). Processes are scheduled in owner-id order.
pub fn run_execution(
    topology: &Arc<Topology>,
    mut processes: Vec<Box<dyn Process>>,
    rand: &mut Randomness<'_>,
    opts: RunOptions,
) -> Result<ExecutionTrace, EngineError> {
    processes.sort_by_key(|p| p.owner());
    let mut slot_owner: HashMap<AgentId, usize> = HashMap::new();
    for (i, p) in processes.iter().enumerate() {
        for &s in p.slots() {
            if !topology.contains(s) {
                return Err(EngineError::Setup(format!("slot {s} is not a node")));
            }
            if slot_owner.insert(s, i).is_some() {
                return Err(EngineError::Setup(format!("slot {s} has two owners")));
            }
        }
    }
    if let Some(n) = topology.nodes().find(|n| !slot_owner.contains_key(n)) {
        return Err(EngineError::MissingStrategy(n));
    }

    let record = opts.level >= TraceLevel::Messages;
    rand.set_logging(record);
    let mut trace = ExecutionTrace {
        topology: topology.clone(),
        rounds: Vec::new(),
        draws: Vec::new(),
        outputs: OutputVector::new(),
        aborted: None,
        final_round: 0,
        message_count: 0,
    };
    let mut outputs: Vec<Option<Output>> = vec![None; processes.len()];
    let mut outbox: Vec<(AgentId, AgentId, Payload)> = Vec::new();
    let mut buckets: Vec<Vec<Message>> = vec![Vec::new(); processes.len()];
    let mut sent: Vec<Message> = Vec::new();
    let mut abort: Option<AbortInfo> = None;

    let mut round = 0u32;
    'rounds: loop {
        if round > opts.round_limit {
            return Err(EngineError::RoundLimitExceeded {
                limit: opts.round_limit,
            });
        }
        for b in buckets.iter_mut() {
            b.clear();
        }
        for m in sent.drain(..) {
            buckets[slot_owner[&m.dst]].push(m);
        }
        for (i, p) in processes.iter_mut().enumerate() {
            outbox.clear();
            let mut io = Io {
                slot: p.owner(),
                round,
                rand,
                outbox: &mut outbox,
                output: None,
                abort: None,
            };
            if round == 0 {
                p.init(&mut io);
            } else {
                buckets[i].sort_by_key(|m| (m.dst, m.src));
                p.step(round, &buckets[i], &mut io);
            }
            let out = io.output.take();
            let ab = io.abort.take();
            if let Some(o) = out {
                if outputs[i].is_none() {
                    outputs[i] = Some(o);
                }
            }
            if let Some((detector, reason)) = ab {
                abort = Some(AbortInfo {
                    round,
                    detector,
                    reason,
                });
                outputs[i] = Some(Output::Bottom);
                break 'rounds;
            }
            for (src, dst, payload) in outbox.drain(..) {
                let violation = if round == 0 {
                    Some("send during initialization")
                } else if !p.slots().contains(&src) {
                    Some("message with forged source")
                } else if !topology.has_edge(src, dst) {
                    Some("message on a non-edge")
                } else {
                    None
                };
                if let Some(reason) = violation {
                    let detector = if topology.contains(dst) { dst } else { src };
                    abort = Some(AbortInfo {
                        round,
                        detector,
                        reason: reason.to_string(),
                    });
                    if let Some(&j) = slot_owner.get(&detector) {
                        outputs[j] = Some(Output::Bottom);
                    }
                    break 'rounds;
                }
                trace.message_count += 1;
                sent.push(Message {
                    src,
                    dst,
                    round,
                    payload,
                });
            }
        }
        if record && !sent.is_empty() {
            let snapshots = (opts.level == TraceLevel::Full).then(|| {
                processes
                    .iter()
                    .map(|p| (p.owner(), p.snapshot()))
                    .collect()
            });
            trace.rounds.push(RoundRecord {
                round,
                messages: sent.clone(),
                snapshots,
            });
        } else if opts.level == TraceLevel::Full {
            trace.rounds.push(RoundRecord {
                round,
                messages: Vec::new(),
                snapshots: Some(
                    processes
                        .iter()
                        .map(|p| (p.owner(), p.snapshot()))
                        .collect(),
                ),
            });
        }
        if outputs.iter().all(Option::is_some) {
            break;
        }
        round += 1;
    }

    trace.final_round = round;
    trace.aborted = abort;
    trace.draws = rand.take_log();
    for (i, p) in processes.iter().enumerate() {
        trace
            .outputs
            .insert(p.owner(), outputs[i].clone().unwrap_or(Output::Bottom));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_ring;

    /// Draws one bit at init, sends it clockwise at round 1 and outputs the
    /// XOR with what it receives at round 2.
    struct Xor {
        id: AgentId,
        next: AgentId,
        bit: u64,
        send_to: Option<AgentId>,
    }

    impl Node for Xor {
        fn id(&self) -> AgentId {
            self.id
        }
        fn init(&mut self, io: &mut Io<'_, '_>) {
            self.bit = io.draw(2);
        }
        fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
            match round {
                1 => io.send(
                    self.send_to.unwrap_or(self.next),
                    Payload::Bit {
                        value: self.bit as u8,
                    },
                ),
                2 => {
                    let Some(Payload::Bit { value }) = inbox.first().map(|m| &m.payload) else {
                        io.abort("missing bit");
                        return;
                    };
                    io.output(Output::Value(self.bit ^ *value as u64));
                }
                _ => {}
            }
        }
        fn as_any_mut(&mut self) -> &mut dyn Any {
            self
        }
    }

    fn setup(bad: bool) -> (Arc<Topology>, Vec<Box<dyn Process>>) {
        let ids: Vec<AgentId> = (1..=4).map(AgentId).collect();
        let t = Arc::new(build_ring(4, &ids).unwrap());
        let procs = ids
            .iter()
            .map(|&id| {
                let next = t
                    .ring_step(id, crate::topology::Direction::Clockwise)
                    .unwrap();
                let send_to = (bad && id == AgentId(1)).then_some(AgentId(3));
                Box::new(HonestProcess::new(Box::new(Xor {
                    id,
                    next,
                    bit: 0,
                    send_to,
                }))) as Box<dyn Process>
            })
            .collect();
        (t, procs)
    }

    const OPTS: RunOptions = RunOptions {
        round_limit: 10,
        level: TraceLevel::Messages,
    };

    #[test]
    fn same_seed_same_trace() {
        let src = RandomnessSource::seeded(42);
        let (t, p) = setup(false);
        let a = run_execution(&t, p, &mut Randomness::new(&src), OPTS).unwrap();
        let (t, p) = setup(false);
        let b = run_execution(&t, p, &mut Randomness::new(&src), OPTS).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.final_round, 2);
        assert!(a.aborted.is_none());
    }

    #[test]
    fn non_edge_send_aborts() {
        let src = RandomnessSource::seeded(1);
        let (t, p) = setup(true);
        let tr = run_execution(&t, p, &mut Randomness::new(&src), OPTS).unwrap();
        let ab = tr.aborted.unwrap();
        assert_eq!(ab.round, 1);
        assert_eq!(ab.detector, AgentId(3));
        assert!(tr.outputs.values().any(Output::is_bottom));
    }

    #[test]
    fn missing_process_is_a_precondition_error() {
        let src = RandomnessSource::seeded(1);
        let (t, mut p) = setup(false);
        p.pop();
        let err = run_execution(&t, p, &mut Randomness::new(&src), OPTS).unwrap_err();
        assert_eq!(err, EngineError::MissingStrategy(AgentId(4)));
    }

    #[test]
    fn messages_are_read_one_round_later() {
        let src = RandomnessSource::seeded(9);
        let (t, p) = setup(false);
        let tr = run_execution(&t, p, &mut Randomness::new(&src), OPTS).unwrap();
        for m in tr.messages() {
            assert_eq!(m.round, 1);
        }
        assert_eq!(tr.draws.len(), 4);
    }
}
