use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::TsnError;

pub type NodeId = String;
pub type LinkId = String;
pub type FlowId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Switch,
    EndDevice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

fn up_default() -> bool {
    true
}

/// Full-duplex link with a constant per-hop latency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub latency_ns: u64,
    #[serde(default = "up_default")]
    pub up: bool,
}

impl Link {
    pub fn new(id: &str, a: &str, b: &str, latency_ns: u64) -> Self {
        Self {
            id: id.into(),
            a: a.into(),
            b: b.into(),
            latency_ns,
            up: true,
        }
    }

    /// The endpoint opposite `node`, if `node` is an endpoint.
    pub fn other(&self, node: &str) -> Option<&NodeId> {
        if self.a == node {
            Some(&self.b)
        } else if self.b == node {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(default)]
    pub qos: u8,
}

impl FlowSpec {
    pub fn new(id: &str, src: &str, dst: &str) -> Self {
        Self {
            id: id.into(),
            src: src.into(),
            dst: dst.into(),
            qos: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

impl Topology {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn link(&self, id: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn link_mut(&mut self, id: &str) -> Option<&mut Link> {
        self.links.iter_mut().find(|l| l.id == id)
    }

    pub fn validate(&self) -> Result<(), TsnError> {
        let mut ids = BTreeSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id.as_str()) {
                return Err(TsnError::DuplicateId(node.id.clone()));
            }
        }
        let mut link_ids = BTreeSet::new();
        for link in &self.links {
            if !link_ids.insert(link.id.as_str()) {
                return Err(TsnError::DuplicateId(link.id.clone()));
            }
            for end in [&link.a, &link.b] {
                if !ids.contains(end.as_str()) {
                    return Err(TsnError::UnknownNode(end.clone()));
                }
            }
            if link.a == link.b {
                return Err(TsnError::SelfLoop(link.id.clone()));
            }
            if link.latency_ns == 0 {
                return Err(TsnError::ZeroLatency(link.id.clone()));
            }
        }
        let mut flow_ids = BTreeSet::new();
        for flow in &self.flows {
            if !flow_ids.insert(flow.id.as_str()) {
                return Err(TsnError::DuplicateId(flow.id.clone()));
            }
            for end in [&flow.src, &flow.dst] {
                match self.node(end) {
                    None => return Err(TsnError::UnknownNode(end.clone())),
                    Some(n) if n.kind != NodeKind::EndDevice => {
                        return Err(TsnError::NotAnEndDevice(end.clone()))
                    }
                    Some(_) => {}
                }
            }
        }
        let devices: Vec<&Node> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::EndDevice)
            .collect();
        if let Some(first) = devices.first() {
            let reached = self.component_of(&first.id);
            if let Some(lost) = devices.iter().find(|d| !reached.contains(d.id.as_str())) {
                return Err(TsnError::Disconnected(lost.id.clone()));
            }
        }
        Ok(())
    }

    /// Nodes reachable from `start` with every link up.
    fn component_of<'a>(&'a self, start: &'a str) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for link in &self.links {
                if let Some(v) = link.other(u) {
                    if seen.insert(v.as_str()) {
                        queue.push_back(v.as_str());
                    }
                }
            }
        }
        seen
    }

    /// Fewest-hop path over up links whose intermediate nodes are switches;
    /// among those, the lexicographically smallest link-id sequence.
    pub fn shortest_path(&self, src: &str, dst: &str) -> Option<Vec<LinkId>> {
        if src == dst || self.node(src).is_none() || self.node(dst).is_none() {
            return None;
        }
        let forwards =
            |id: &str| id == dst || self.node(id).is_some_and(|n| n.kind == NodeKind::Switch);
        let mut adjacency: BTreeMap<&str, Vec<&Link>> = BTreeMap::new();
        for link in self.links.iter().filter(|l| l.up) {
            adjacency.entry(&link.a).or_default().push(link);
            adjacency.entry(&link.b).or_default().push(link);
        }
        // hop distances to dst, expanding only through forwarding nodes
        let mut dist: BTreeMap<&str, usize> = BTreeMap::from([(dst, 0)]);
        let mut queue = VecDeque::from([dst]);
        while let Some(u) = queue.pop_front() {
            if !forwards(u) {
                continue;
            }
            for link in adjacency.get(u).into_iter().flatten() {
                let v = link.other(u).expect("adjacent").as_str();
                if !dist.contains_key(v) {
                    dist.insert(v, dist[u] + 1);
                    queue.push_back(v);
                }
            }
        }
        let mut remaining = *dist.get(src)?;
        let mut path = Vec::with_capacity(remaining);
        let mut at = src;
        while remaining > 0 {
            let (link, next) = adjacency
                .get(at)
                .into_iter()
                .flatten()
                .map(|l| (l, l.other(at).expect("adjacent").as_str()))
                .filter(|(_, v)| dist.get(v) == Some(&(remaining - 1)) && forwards(v))
                .min_by(|x, y| x.0.id.cmp(&y.0.id))?;
            path.push(link.id.clone());
            at = next;
            remaining -= 1;
        }
        Some(path)
    }

    /// Sum of per-hop latencies along `path`.
    pub fn path_latency(&self, path: &[LinkId]) -> u64 {
        path.iter()
            .map(|id| self.link(id).map_or(0, |l| l.latency_ns))
            .sum()
    }
}
