//! Agent graphs, rings, and the duplication transform.
//!
//! A [`Topology`] is an undirected simple graph over [`AgentId`]s with an
//! optional clockwise ring layout. [`apply_duplication`] turns a graph `G`
//! and a [`DuplicationScheme`] into the graph `G'` that honest agents
//! observe when one agent emulates a segment of virtual agents.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default size of the space ids are drawn from.
pub const DEFAULT_ID_SPACE: u64 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for AgentId {
    fn from(v: u64) -> Self {
        AgentId(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Clockwise,
    Counterclockwise,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Clockwise => Direction::Counterclockwise,
            Direction::Counterclockwise => Direction::Clockwise,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("ring needs at least 3 agents, got {0}")]
    SizeTooSmall(usize),
    #[error("expected {expected} ids, got {got}")]
    IdCountMismatch { expected: usize, got: usize },
    #[error("duplicate agent id {0}")]
    DuplicateId(AgentId),
    #[error("agent id 0 is reserved")]
    ZeroId,
    #[error("self-loop on {0}")]
    SelfLoop(AgentId),
    #[error("edge endpoint {0} is not a node")]
    UnknownNode(AgentId),
    #[error("topology has no ring layout")]
    NoLayout,
    #[error("ring layout does not match the edge set")]
    LayoutMismatch,
    #[error("cheater {0} is not a node")]
    CheaterNotFound(AgentId),
    #[error("a duplication segment needs at least one virtual agent")]
    EmptySegment,
    #[error("virtual id {0} collides with an existing id")]
    IdCollision(AgentId),
    #[error("invalid wiring: {0}")]
    InvalidWiring(String),
    #[error("cannot parse topology: {0}")]
    Parse(String),
}

/// Undirected simple graph with an optional clockwise ring order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    nodes: BTreeSet<AgentId>,
    edges: BTreeSet<(AgentId, AgentId)>,
    layout: Option<Vec<AgentId>>,
    adjacency: BTreeMap<AgentId, Vec<AgentId>>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    nodes: Vec<AgentId>,
    edges: Vec<(AgentId, AgentId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<Vec<AgentId>>,
}

impl TryFrom<TopologyRepr> for Topology {
    type Error = TopologyError;
    fn try_from(r: TopologyRepr) -> Result<Self, Self::Error> {
        match r.layout {
            Some(layout) => {
                let t = Topology::new(r.nodes, r.edges)?;
                t.with_layout(layout)
            }
            None => Topology::new(r.nodes, r.edges),
        }
    }
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr {
            nodes: t.nodes.into_iter().collect(),
            edges: t.edges.into_iter().collect(),
            layout: t.layout,
        }
    }
}

fn norm(a: AgentId, b: AgentId) -> (AgentId, AgentId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    /// Builds a graph; duplicate edges are merged.
    pub fn new(
        nodes: impl IntoIterator<Item = AgentId>,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
    ) -> Result<Self, TopologyError> {
        let mut node_set = BTreeSet::new();
        for n in nodes {
            if n.0 == 0 {
                return Err(TopologyError::ZeroId);
            }
            if !node_set.insert(n) {
                return Err(TopologyError::DuplicateId(n));
            }
        }
        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            for x in [a, b] {
                if !node_set.contains(&x) {
                    return Err(TopologyError::UnknownNode(x));
                }
            }
            edge_set.insert(norm(a, b));
        }
        let mut adjacency: BTreeMap<AgentId, Vec<AgentId>> =
            node_set.iter().map(|&n| (n, Vec::new())).collect();
        for &(a, b) in &edge_set {
            adjacency.get_mut(&a).unwrap().push(b);
            adjacency.get_mut(&b).unwrap().push(a);
        }
        for list in adjacency.values_mut() {
            list.sort_unstable();
        }
        Ok(Topology {
            nodes: node_set,
            edges: edge_set,
            layout: None,
            adjacency,
        })
    }

    /// Attaches a clockwise layout; the edges must be exactly the ring pairs.
    pub fn with_layout(mut self, layout: Vec<AgentId>) -> Result<Self, TopologyError> {
        if layout.len() < 3 {
            return Err(TopologyError::SizeTooSmall(layout.len()));
        }
        if layout.len() != self.nodes.len() {
            return Err(TopologyError::LayoutMismatch);
        }
        let ring_edges: BTreeSet<_> = (0..layout.len())
            .map(|i| norm(layout[i], layout[(i + 1) % layout.len()]))
            .collect();
        if ring_edges != self.edges || layout.iter().collect::<BTreeSet<_>>().len() != layout.len()
        {
            return Err(TopologyError::LayoutMismatch);
        }
        self.layout = Some(layout);
        Ok(self)
    }

    pub fn nodes(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.nodes.contains(&id)
    }

    pub fn has_edge(&self, a: AgentId, b: AgentId) -> bool {
        self.edges.contains(&norm(a, b))
    }

    /// Sorted neighbor list; empty for unknown ids.
    pub fn neighbors(&self, id: AgentId) -> &[AgentId] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn degree(&self, id: AgentId) -> usize {
        self.neighbors(id).len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn layout(&self) -> Option<&[AgentId]> {
        self.layout.as_deref()
    }

    pub fn is_ring(&self) -> bool {
        self.layout.is_some()
    }

    /// Position of `id` in the ring layout.
    pub fn ring_position(&self, id: AgentId) -> Result<usize, TopologyError> {
        let layout = self.layout.as_ref().ok_or(TopologyError::NoLayout)?;
        layout
            .iter()
            .position(|&x| x == id)
            .ok_or(TopologyError::UnknownNode(id))
    }

    /// Neighbor of `id` one hop in `dir`.
    pub fn ring_step(&self, id: AgentId, dir: Direction) -> Result<AgentId, TopologyError> {
        self.ring_walk(id, dir, 1)
    }

    /// Agent `hops` steps from `id` in `dir`.
    pub fn ring_walk(
        &self,
        id: AgentId,
        dir: Direction,
        hops: usize,
    ) -> Result<AgentId, TopologyError> {
        let layout = self.layout.as_ref().ok_or(TopologyError::NoLayout)?;
        let n = layout.len();
        let p = self.ring_position(id)?;
        let q = match dir {
            Direction::Clockwise => (p + hops) % n,
            Direction::Counterclockwise => (p + n - hops % n) % n,
        };
        Ok(layout[q])
    }

    /// Induces the ring layout of a connected 2-regular graph, starting at the
    /// smallest id and walking toward `first_step` (must be a neighbor).
    pub fn infer_ring_layout(&self, start: AgentId, first_step: AgentId) -> Option<Vec<AgentId>> {
        if self.nodes.len() < 3 || self.adjacency.values().any(|v| v.len() != 2) {
            return None;
        }
        if !self.has_edge(start, first_step) {
            return None;
        }
        let mut order = vec![start];
        let (mut prev, mut cur) = (start, first_step);
        while cur != start {
            order.push(cur);
            let nb = self.neighbors(cur);
            let next = if nb[0] == prev { nb[1] } else { nb[0] };
            prev = cur;
            cur = next;
            if order.len() > self.nodes.len() {
                return None;
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn is_connected(&self) -> bool {
        self.is_connected_without(None)
    }

    fn is_connected_without(&self, removed: Option<AgentId>) -> bool {
        let Some(&start) = self.nodes.iter().find(|&&n| Some(n) != removed) else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if Some(v) != removed && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen.len() + usize::from(removed.is_some()) == self.nodes.len()
    }

    /// BFS hop distances from `src`.
    pub fn distances_from(&self, src: AgentId) -> BTreeMap<AgentId, usize> {
        let mut dist = BTreeMap::from([(src, 0usize)]);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for &v in self.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Largest eccentricity; `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for n in self.nodes() {
            let d = self.distances_from(n);
            if d.len() != self.nodes.len() {
                return None;
            }
            best = best.max(d.values().copied().max().unwrap_or(0));
        }
        Some(best)
    }

    /// Shortest path from `src` to `dst` that never visits `avoid`. Ties are
    /// broken toward smaller ids, so every agent computes the same path.
    pub fn shortest_path_avoiding(
        &self,
        src: AgentId,
        dst: AgentId,
        avoid: Option<AgentId>,
    ) -> Option<Vec<AgentId>> {
        if Some(src) == avoid || Some(dst) == avoid {
            return None;
        }
        let mut parent: BTreeMap<AgentId, AgentId> = BTreeMap::new();
        let mut seen = BTreeSet::from([src]);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            if u == dst {
                let mut path = vec![dst];
                let mut cur = dst;
                while cur != src {
                    cur = parent[&cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &v in self.neighbors(u) {
                if Some(v) != avoid && seen.insert(v) {
                    parent.insert(v, u);
                    queue.push_back(v);
                }
            }
        }
        None
    }
}

/// Renders as three lines: `nodes:`, `edges:`, and (for rings) `layout:`.
impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        writeln!(f, "nodes: {}", nodes.join(" "))?;
        write!(f, "edges: {}", edges.join(" "))?;
        if let Some(layout) = &self.layout {
            let l: Vec<String> = layout.iter().map(|n| n.to_string()).collect();
            write!(f, "\nlayout: {}", l.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for Topology {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut nodes = None;
        let mut edges = Vec::new();
        let mut layout = None;
        let parse_id = |tok: &str| {
            tok.parse::<u64>()
                .map(AgentId)
                .map_err(|_| TopologyError::Parse(format!("bad id `{tok}`")))
        };
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| TopologyError::Parse(format!("missing `:` in `{line}`")))?;
            match key.trim() {
                "nodes" => {
                    nodes = Some(
                        rest.split_whitespace()
                            .map(parse_id)
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "edges" => {
                    for tok in rest.split_whitespace() {
                        let (a, b) = tok
                            .split_once('-')
                            .ok_or_else(|| TopologyError::Parse(format!("bad edge `{tok}`")))?;
                        edges.push((parse_id(a)?, parse_id(b)?));
                    }
                }
                "layout" => {
                    layout = Some(
                        rest.split_whitespace()
                            .map(parse_id)
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                other => return Err(TopologyError::Parse(format!("unknown key `{other}`"))),
            }
        }
        let nodes = nodes.ok_or_else(|| TopologyError::Parse("missing `nodes:` line".into()))?;
        let t = Topology::new(nodes, edges)?;
        match layout {
            Some(l) => t.with_layout(l),
            None => Ok(t),
        }
    }
}

/// Ring over `ids` in clockwise order.
pub fn build_ring(n: usize, ids: &[AgentId]) -> Result<Topology, TopologyError> {
    if n < 3 {
        return Err(TopologyError::SizeTooSmall(n));
    }
    if ids.len() != n {
        return Err(TopologyError::IdCountMismatch {
            expected: n,
            got: ids.len(),
        });
    }
    let edges: Vec<_> = (0..n).map(|i| (ids[i], ids[(i + 1) % n])).collect();
    Topology::new(ids.iter().copied(), edges)?.with_layout(ids.to_vec())
}

/// `n` distinct ids drawn uniformly from `1..=space`.
pub fn random_ids<R: Rng + ?Sized>(n: usize, space: u64, rng: &mut R) -> Vec<AgentId> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let id = AgentId(rng.gen_range(1..=space));
        if seen.insert(id) {
            out.push(id);
        }
    }
    out
}

/// Fresh ids not present in `t`.
pub fn fresh_ids<R: Rng + ?Sized>(t: &Topology, d: usize, rng: &mut R) -> Vec<AgentId> {
    let mut out: Vec<AgentId> = Vec::with_capacity(d);
    while out.len() < d {
        let id = AgentId(rng.gen_range(1..=DEFAULT_ID_SPACE));
        if !t.contains(id) && !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

/// True iff the graph is connected and no single node is a cut vertex.
pub fn check_two_vertex_connected(t: &Topology) -> bool {
    if !t.is_connected() {
        return false;
    }
    if t.node_count() <= 2 {
        return true;
    }
    // Hopcroft-Tarjan articulation points, iterative.
    let index: BTreeMap<AgentId, usize> = t.nodes().enumerate().map(|(i, n)| (n, i)).collect();
    let ids: Vec<AgentId> = t.nodes().collect();
    let n = ids.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut time = 0;
    let root = 0usize;
    let mut root_children = 0;
    // (node, parent, next neighbor index)
    let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
    disc[root] = time;
    low[root] = time;
    time += 1;
    while let Some(&mut (u, parent, ref mut next)) = stack.last_mut() {
        let nbrs = t.neighbors(ids[u]);
        if *next < nbrs.len() {
            let v = index[&nbrs[*next]];
            *next += 1;
            if disc[v] == usize::MAX {
                disc[v] = time;
                low[v] = time;
                time += 1;
                if u == root {
                    root_children += 1;
                }
                stack.push((v, u, 0));
            } else if v != parent {
                low[u] = low[u].min(disc[v]);
            }
        } else {
            stack.pop();
            if parent != usize::MAX {
                low[parent] = low[parent].min(low[u]);
                if parent != root && low[u] >= disc[parent] {
                    return false;
                }
            }
        }
    }
    root_children <= 1
}

/// Hops from `a` to `b` walking in `direction`.
pub fn ring_distance(
    t: &Topology,
    a: AgentId,
    b: AgentId,
    direction: Direction,
) -> Result<usize, TopologyError> {
    let layout = t.layout().ok_or(TopologyError::NoLayout)?;
    let n = layout.len();
    let pa = t.ring_position(a)?;
    let pb = t.ring_position(b)?;
    Ok(match direction {
        Direction::Clockwise => (pb + n - pa) % n,
        Direction::Counterclockwise => (pa + n - pb) % n,
    })
}

/// How one agent splits itself into a segment of virtual agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicationScheme {
    pub cheater: AgentId,
    /// Virtual agents in segment order.
    pub virtual_ids: Vec<AgentId>,
    /// Each original neighbor of the cheater, mapped to the virtual agent
    /// that takes over that edge.
    pub wiring: BTreeMap<AgentId, AgentId>,
    /// Edges among the virtual agents; `None` means a simple path in
    /// `virtual_ids` order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_edges: Option<Vec<(AgentId, AgentId)>>,
}

impl DuplicationScheme {
    pub fn len(&self) -> usize {
        self.virtual_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.virtual_ids.is_empty()
    }

    /// Ring splice: the counter-clockwise neighbor attaches to the first
    /// virtual agent and the clockwise neighbor to the last.
    pub fn ring_segment(
        t: &Topology,
        cheater: AgentId,
        virtual_ids: Vec<AgentId>,
    ) -> Result<Self, TopologyError> {
        if !t.contains(cheater) {
            return Err(TopologyError::CheaterNotFound(cheater));
        }
        let (first, last) = match (virtual_ids.first(), virtual_ids.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Err(TopologyError::EmptySegment),
        };
        let ccw = t.ring_step(cheater, Direction::Counterclockwise)?;
        let cw = t.ring_step(cheater, Direction::Clockwise)?;
        let wiring = BTreeMap::from([(ccw, first), (cw, last)]);
        Ok(DuplicationScheme {
            cheater,
            virtual_ids,
            wiring,
            internal_edges: None,
        })
    }

    /// Ring splice of size `d` whose first virtual agent keeps the cheater's
    /// own id; the rest are fresh ids derived from `seed`.
    pub fn ring_segment_fresh(
        t: &Topology,
        cheater: AgentId,
        d: usize,
        seed: u64,
    ) -> Result<Self, TopologyError> {
        use rand::SeedableRng;
        if d == 0 {
            return Err(TopologyError::EmptySegment);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ cheater.0.rotate_left(17));
        let mut ids = vec![cheater];
        ids.extend(fresh_ids(t, d - 1, &mut rng));
        Self::ring_segment(t, cheater, ids)
    }

    /// Segment of size `d` on any graph. On a ring this is
    /// [`ring_segment_fresh`](Self::ring_segment_fresh); otherwise the
    /// cheater's neighbors, in id order, are split between the first virtual
    /// agent (the first half, rounded up) and the last.
    pub fn segment_fresh(
        t: &Topology,
        cheater: AgentId,
        d: usize,
        seed: u64,
    ) -> Result<Self, TopologyError> {
        if t.layout().is_some() {
            return Self::ring_segment_fresh(t, cheater, d, seed);
        }
        use rand::SeedableRng;
        if !t.contains(cheater) {
            return Err(TopologyError::CheaterNotFound(cheater));
        }
        if d == 0 {
            return Err(TopologyError::EmptySegment);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ cheater.0.rotate_left(17));
        let mut virtual_ids = vec![cheater];
        virtual_ids.extend(fresh_ids(t, d - 1, &mut rng));
        let nbs = t.neighbors(cheater);
        let half = nbs.len().div_ceil(2);
        let first = virtual_ids[0];
        let last = virtual_ids[d - 1];
        let wiring = nbs
            .iter()
            .enumerate()
            .map(|(i, &nb)| (nb, if i < half { first } else { last }))
            .collect();
        Ok(DuplicationScheme {
            cheater,
            virtual_ids,
            wiring,
            internal_edges: None,
        })
    }

    fn internal(&self) -> Vec<(AgentId, AgentId)> {
        match &self.internal_edges {
            Some(e) => e.clone(),
            None => self.virtual_ids.windows(2).map(|w| (w[0], w[1])).collect(),
        }
    }
}

/// Replaces the cheater by its virtual segment, producing `G'`.
pub fn apply_duplication(t: &Topology, s: &DuplicationScheme) -> Result<Topology, TopologyError> {
    if !t.contains(s.cheater) {
        return Err(TopologyError::CheaterNotFound(s.cheater));
    }
    if s.virtual_ids.is_empty() {
        return Err(TopologyError::EmptySegment);
    }
    let mut seen = BTreeSet::new();
    for &v in &s.virtual_ids {
        if (t.contains(v) && v != s.cheater) || !seen.insert(v) || v.0 == 0 {
            return Err(TopologyError::IdCollision(v));
        }
    }
    let original: BTreeSet<AgentId> = t.neighbors(s.cheater).iter().copied().collect();
    for nb in &original {
        match s.wiring.get(nb) {
            None => {
                return Err(TopologyError::InvalidWiring(format!(
                    "edge {}-{nb} is not assigned",
                    s.cheater
                )))
            }
            Some(v) if !seen.contains(v) => {
                return Err(TopologyError::InvalidWiring(format!(
                    "edge {}-{nb} assigned to unknown virtual agent {v}",
                    s.cheater
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = s.wiring.keys().find(|k| !original.contains(k)) {
        return Err(TopologyError::InvalidWiring(format!(
            "{extra} is not a neighbor of {}",
            s.cheater
        )));
    }
    let internal = s.internal();
    for &(a, b) in &internal {
        if !seen.contains(&a) || !seen.contains(&b) {
            return Err(TopologyError::InvalidWiring(format!(
                "internal edge {a}-{b} leaves the segment"
            )));
        }
    }

    let nodes = t
        .nodes()
        .filter(|&n| n != s.cheater)
        .chain(s.virtual_ids.iter().copied());
    let edges = t
        .edges()
        .filter(|&(a, b)| a != s.cheater && b != s.cheater)
        .chain(s.wiring.iter().map(|(&nb, &v)| (nb, v)))
        .chain(internal);
    let g = Topology::new(nodes, edges)?;

    match t.layout() {
        None => Ok(g),
        Some(layout) => {
            let pos = layout.iter().position(|&x| x == s.cheater).unwrap();
            let mut new_layout = Vec::with_capacity(layout.len() + s.len() - 1);
            new_layout.extend_from_slice(&layout[..pos]);
            new_layout.extend_from_slice(&s.virtual_ids);
            new_layout.extend_from_slice(&layout[pos + 1..]);
            g.with_layout(new_layout)
                .map_err(|_| TopologyError::InvalidWiring("wiring does not splice the ring".into()))
        }
    }
}
