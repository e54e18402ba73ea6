//! Splitting an even ring into two equal groups.
//!
//! After wake-up the smallest id starts a token toward its smaller-id
//! neighbor; the token alternately marks agents 0 and 1 and fixes the
//! direction. An agent marked 0 exchanges a random bit with its predecessor,
//! an agent marked 1 with its successor, both in the same round. Each agent
//! outputs the sum of the two bits and its mark, modulo 2. When the token
//! returns, the initiator expects the opposite of the mark it first sent.

use std::any::Any;

use crate::blocks::{Learned, LocalInfo, WakeUp};
use crate::engine::{Io, Message, Node, Output, Payload};
use crate::topology::AgentId;

/// Output rule for a pair.
pub fn partition_output(own_bit: u64, partner_bit: u64, mark: u64) -> u64 {
    (own_bit + partner_bit + mark) % 2
}

struct Plan {
    /// Round the initiator sends the token.
    s: u32,
    /// Token order starting at the initiator.
    order: Vec<AgentId>,
    index: usize,
}

impl Plan {
    fn new(learned: &Learned, s: u32, me: AgentId) -> Option<Self> {
        let t = &learned.topology;
        let init = t.nodes().next()?;
        let first = *t.neighbors(init).first()?;
        let order = t.infer_ring_layout(init, first)?;
        let index = order.iter().position(|&a| a == me)?;
        Some(Plan { s, order, index })
    }

    fn n(&self) -> usize {
        self.order.len()
    }

    fn mark(&self) -> u64 {
        if self.index == 0 {
            1
        } else {
            (self.index as u64 + 1) % 2
        }
    }

    fn pred(&self) -> AgentId {
        self.order[(self.index + self.n() - 1) % self.n()]
    }

    fn succ(&self) -> AgentId {
        self.order[(self.index + 1) % self.n()]
    }

    fn token_arrival(&self) -> u32 {
        self.s + self.index as u32
    }

    fn partner(&self) -> AgentId {
        if self.mark() == 0 {
            self.pred()
        } else {
            self.succ()
        }
    }

    /// Round in which this agent sends its bit.
    fn exchange_round(&self) -> u32 {
        if self.index == 0 {
            self.s + 1
        } else if self.mark() == 0 {
            self.token_arrival()
        } else {
            self.token_arrival() + 1
        }
    }
}

pub struct PartitionNode {
    local: LocalInfo,
    wake: WakeUp,
    bit: u64,
    plan: Option<Plan>,
    partner_bit: Option<u64>,
    /// Mark forwarded instead of the honest one (deviation hook).
    pub forced_mark: Option<u8>,
}

impl PartitionNode {
    pub fn new(local: LocalInfo) -> Self {
        PartitionNode {
            wake: WakeUp::new(local.clone(), None),
            local,
            bit: 0,
            plan: None,
            partner_bit: None,
            forced_mark: None,
        }
    }
}

impl Node for PartitionNode {
    fn id(&self) -> AgentId {
        self.local.id
    }

    fn init(&mut self, io: &mut Io<'_, '_>) {
        self.bit = io.draw(2);
    }

    fn step(&mut self, round: u32, inbox: &[Message], io: &mut Io<'_, '_>) {
        let me = self.local.id;
        let Some(plan) = &self.plan else {
            if let Some(learned) = self.wake.step(round, inbox, io) {
                match Plan::new(&learned, round + 1, me) {
                    Some(p) => self.plan = Some(p),
                    None => io.abort("topology is not a ring"),
                }
            }
            return;
        };
        let n = plan.n() as u32;

        for m in inbox {
            match m.payload {
                Payload::Token { mark } => {
                    let expected_round = if plan.index == 0 {
                        plan.s + n
                    } else {
                        plan.token_arrival()
                    };
                    if m.src != plan.pred() || round != expected_round {
                        io.abort("token off schedule");
                        return;
                    }
                    let expected_mark = if plan.index == 0 {
                        1
                    } else {
                        plan.mark() as u8
                    };
                    if mark != expected_mark {
                        let why = if plan.index == 0 {
                            "token parity check failed"
                        } else {
                            "token mark out of sync"
                        };
                        io.abort(why);
                        return;
                    }
                    if plan.index != 0 {
                        let next = self.forced_mark.unwrap_or(1 - mark);
                        io.send(plan.succ(), Payload::Token { mark: next });
                    }
                }
                Payload::Bit { value } => {
                    if m.src != plan.partner()
                        || round != plan.exchange_round() + 1
                        || self.partner_bit.is_some()
                        || value > 1
                    {
                        io.abort("pair randomization out of sync");
                        return;
                    }
                    self.partner_bit = Some(value as u64);
                }
                _ => {
                    io.abort(format!("unexpected {:?} during partition", m.payload));
                    return;
                }
            }
        }

        if plan.index == 0 && round == plan.s {
            let mark = self.forced_mark.unwrap_or(0);
            io.send(plan.succ(), Payload::Token { mark });
        }
        if round == plan.exchange_round() {
            io.send(
                plan.partner(),
                Payload::Bit {
                    value: self.bit as u8,
                },
            );
        }
        if round == plan.exchange_round() + 1 {
            match self.partner_bit {
                Some(pb) => io.output(Output::Value(partition_output(self.bit, pb, plan.mark()))),
                None => io.abort("partner bit missing"),
            }
        }
        let last = if plan.index == 0 {
            plan.s + n
        } else {
            plan.exchange_round() + 1
        };
        if round > last && !inbox.is_empty() {
            io.abort("traffic after the partition ended");
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "bit": self.bit,
            "mark": self.plan.as_ref().map(|p| p.mark()),
            "partner_bit": self.partner_bit,
        })
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
