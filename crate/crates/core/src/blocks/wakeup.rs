//! Topology discovery by announcement flooding.
//!
//! Every agent announces its neighbor list (and, on an oriented ring, its
//! clockwise neighbor) at round 1. Announcements are relayed once, on first
//! receipt. An agent closes when every referenced id has announced, checks
//! that each announcement arrived exactly `1 + distance` rounds in, and
//! finishes at round `W = diameter + 2`, after which no wake-up traffic may
//! arrive.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::engine::{Io, Message, Payload};
use crate::topology::{AgentId, Topology};

/// What an agent knows about itself before any communication.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalInfo {
    pub id: AgentId,
    pub neighbors: Vec<AgentId>,
    /// Clockwise neighbor, when the ring orientation is given.
    pub cw: Option<AgentId>,
}

impl LocalInfo {
    pub fn from_topology(t: &Topology, id: AgentId) -> Self {
        let cw = t
            .layout()
            .and_then(|_| t.ring_step(id, crate::topology::Direction::Clockwise).ok());
        LocalInfo {
            id,
            neighbors: t.neighbors(id).to_vec(),
            cw,
        }
    }
}

/// Inclusive range of network sizes every agent considers possible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SizeBound {
    pub alpha: usize,
    pub beta: usize,
}

/// The topology an agent believes in after wake-up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Learned {
    pub topology: Topology,
    pub n: usize,
    pub diameter: usize,
    /// Last round of the wake-up phase.
    pub end_round: u32,
}

impl Learned {
    /// Clockwise ring order, when the learned graph is an oriented ring.
    pub fn layout(&self) -> Option<&[AgentId]> {
        self.topology.layout()
    }

    pub fn position(&self, id: AgentId) -> usize {
        self.layout()
            .and_then(|l| l.iter().position(|&x| x == id))
            .expect("id on learned ring")
    }

    /// Agent `hops` steps clockwise (negative: counter-clockwise) of `id`.
    pub fn walk(&self, id: AgentId, hops: i64) -> AgentId {
        let l = self.layout().expect("learned ring");
        let n = l.len() as i64;
        let p = self.position(id) as i64;
        l[(p + hops).rem_euclid(n) as usize]
    }
}

type Entry = (Arc<[AgentId]>, Option<AgentId>);
type CloseKey = (AgentId, Option<SizeBound>, Vec<(AgentId, Entry, u32)>);

thread_local! {
    static CLOSED: RefCell<HashMap<CloseKey, Result<Arc<Learned>, String>>> = RefCell::new(HashMap::new());
}

pub struct WakeUp {
    local: LocalInfo,
    bound: Option<SizeBound>,
    known: BTreeMap<AgentId, Entry>,
    arrival: BTreeMap<AgentId, u32>,
    learned: Option<Arc<Learned>>,
}

impl WakeUp {
    pub fn new(local: LocalInfo, bound: Option<SizeBound>) -> Self {
        WakeUp {
            local,
            bound,
            known: BTreeMap::new(),
            arrival: BTreeMap::new(),
            learned: None,
        }
    }

    pub fn learned(&self) -> Option<&Arc<Learned>> {
        self.learned.as_ref()
    }

    fn own_entry(&self) -> Entry {
        (Arc::from(self.local.neighbors.as_slice()), self.local.cw)
    }

    /// Advances one round. Returns the learned topology at the final round.
    pub fn step(
        &mut self,
        round: u32,
        inbox: &[Message],
        io: &mut Io<'_, '_>,
    ) -> Option<Arc<Learned>> {
        let me = self.local.id;
        if round == 1 {
            if !inbox.is_empty() {
                io.abort("message before wake-up");
                return None;
            }
            let (neighbors, cw) = self.own_entry();
            self.known.insert(me, (neighbors.clone(), cw));
            self.arrival.insert(me, 1);
            for &nb in &self.local.neighbors {
                io.send(
                    nb,
                    Payload::Announce {
                        origin: me,
                        neighbors: neighbors.clone(),
                        cw,
                    },
                );
            }
            return None;
        }

        let mut fresh: Vec<(AgentId, Vec<AgentId>)> = Vec::new();
        for m in inbox {
            let Payload::Announce {
                origin,
                neighbors,
                cw,
            } = &m.payload
            else {
                io.abort("unexpected message during wake-up");
                return None;
            };
            let entry = (neighbors.clone(), *cw);
            match self.known.get(origin) {
                Some(prev) => {
                    if *prev != entry {
                        io.abort(format!("conflicting announcements for {origin}"));
                        return None;
                    }
                    if let Some(f) = fresh.iter_mut().find(|(o, _)| o == origin) {
                        f.1.push(m.src);
                    }
                }
                None => {
                    if self.learned.is_some() {
                        io.abort(format!("announcement from unknown agent {origin}"));
                        return None;
                    }
                    self.known.insert(*origin, entry);
                    self.arrival.insert(*origin, round);
                    fresh.push((*origin, vec![m.src]));
                }
            }
        }

        if round == 2 {
            let mut direct: Vec<AgentId> = inbox
                .iter()
                .filter_map(|m| match &m.payload {
                    Payload::Announce {
                        origin, neighbors, ..
                    } if *origin == m.src && neighbors.contains(&me) => Some(m.src),
                    _ => None,
                })
                .collect();
            direct.sort_unstable();
            direct.dedup();
            if direct != self.local.neighbors {
                io.abort("neighborhood announcements do not match local edges");
                return None;
            }
        }

        for (origin, from) in &fresh {
            let (neighbors, cw) = self.known[origin].clone();
            for &nb in &self.local.neighbors {
                if !from.contains(&nb) {
                    io.send(
                        nb,
                        Payload::Announce {
                            origin: *origin,
                            neighbors: neighbors.clone(),
                            cw,
                        },
                    );
                }
            }
        }

        if self.learned.is_none() {
            let closed = self
                .known
                .values()
                .all(|(nbs, _)| nbs.iter().all(|x| self.known.contains_key(x)));
            if closed {
                match self.close_cached() {
                    Ok(l) => self.learned = Some(l),
                    Err(reason) => {
                        io.abort(reason);
                        return None;
                    }
                }
            } else if fresh.is_empty() {
                io.abort("wake-up stalled");
                return None;
            }
        }

        match &self.learned {
            Some(l) if round == l.end_round => Some(l.clone()),
            Some(l) if round > l.end_round => {
                io.abort("wake-up traffic after the phase ended");
                None
            }
            _ => None,
        }
    }

    /// `close` is a pure function of what was received; enumeration hits the
    /// same inputs over and over.
    fn close_cached(&self) -> Result<Arc<Learned>, String> {
        let key: CloseKey = (
            self.local.id,
            self.bound,
            self.known
                .iter()
                .map(|(&a, e)| (a, e.clone(), self.arrival[&a]))
                .collect(),
        );
        if let Some(v) = CLOSED.with(|c| c.borrow().get(&key).cloned()) {
            return v;
        }
        let v = self.close().map(Arc::new);
        CLOSED.with(|c| {
            let mut c = c.borrow_mut();
            if c.len() > 4096 {
                c.clear();
            }
            c.insert(key, v.clone());
        });
        v
    }

    fn close(&self) -> Result<Learned, String> {
        let me = self.local.id;
        for (&u, (nbs, _)) in &self.known {
            for v in nbs.iter() {
                if *v == u || !self.known[v].0.contains(&u) {
                    return Err(format!("asymmetric adjacency between {u} and {v}"));
                }
            }
        }
        let edges = self
            .known
            .iter()
            .flat_map(|(&u, (nbs, _))| nbs.iter().map(move |&v| (u, v)));
        let mut topology =
            Topology::new(self.known.keys().copied(), edges).map_err(|e| e.to_string())?;
        let dist = topology.distances_from(me);
        if dist.len() != self.known.len() {
            return Err("learned graph is disconnected".into());
        }
        for (v, &arr) in &self.arrival {
            if arr as usize != 1 + dist[v] {
                return Err(format!("announcement of {v} arrived at the wrong round"));
            }
        }
        let diameter = topology.diameter().ok_or("learned graph is disconnected")?;
        if self.known.values().all(|(_, cw)| cw.is_some()) {
            let layout = self.ring_layout()?;
            topology = topology.with_layout(layout).map_err(|e| e.to_string())?;
        } else if self.known.values().any(|(_, cw)| cw.is_some()) {
            return Err("partial orientation information".into());
        }
        let n = self.known.len();
        if let Some(b) = self.bound {
            if n < b.alpha || n > b.beta {
                return Err(format!(
                    "learned size {n} outside [{}, {}]",
                    b.alpha, b.beta
                ));
            }
        }
        Ok(Learned {
            topology,
            n,
            diameter,
            end_round: diameter as u32 + 2,
        })
    }

    fn ring_layout(&self) -> Result<Vec<AgentId>, String> {
        let bad = || "inconsistent ring orientation".to_string();
        for (&u, (nbs, cw)) in &self.known {
            let cw = cw.ok_or_else(bad)?;
            if nbs.len() != 2 || !nbs.contains(&cw) {
                return Err(bad());
            }
            let ccw = if nbs[0] == cw { nbs[1] } else { nbs[0] };
            if self.known[&ccw].1 != Some(u) {
                return Err(bad());
            }
        }
        let start = *self.known.keys().next().ok_or_else(bad)?;
        let mut layout = vec![start];
        let mut cur = self.known[&start].1.ok_or_else(bad)?;
        while cur != start {
            if layout.len() >= self.known.len() {
                return Err(bad());
            }
            layout.push(cur);
            cur = self.known[&cur].1.ok_or_else(bad)?;
        }
        if layout.len() != self.known.len() {
            return Err(bad());
        }
        Ok(layout)
    }
}
