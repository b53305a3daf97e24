//! DAGs with stochastic activity durations.
//!
//! [`transform`] turns a [`TwinGraph`] into a [`StochasticDag`]: one activity
//! per twin, one precedence per `Contains`/`DependsOn` edge (parent before
//! child). `ConnectsTo` edges describe adjacency and are dropped. The makespan
//! of one realization is the latest finish time over all activities, where an
//! activity starts once all of its predecessors have finished.
//!
//! Completion time is evaluated either exactly, by enumerating every joint
//! outcome of finite-discrete durations, or by seeded Monte Carlo.
//! Replication `i` draws from its own ChaCha stream, so results do not depend
//! on how replications are spread over threads.

mod dist;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dist::DurationDist;

use crate::simkit::replication_stream;
use crate::stats;
use crate::twin_graph::{Scalar, TwinGraph, Violation};

/// Upper bound on joint outcomes enumerated by [`StochasticDag::completion_exact`].
pub const MAX_JOINT_OUTCOMES: u64 = 1_000_000;

const MERGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DagError {
    #[error("DAG has no nodes")]
    Empty,
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("edge references unknown node {0:?}")]
    UnknownNode(String),
    #[error("precedence edges form a cycle")]
    Cycle,
    #[error("node {node:?}: {reason}")]
    InvalidDuration { node: String, reason: String },
    #[error("twin {0:?} has no duration and no default is configured")]
    MissingDuration(String),
    #[error("twin graph is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),
    #[error("node {0:?} has a non-discrete duration")]
    UnsupportedDist(String),
    #[error("{0} joint outcomes exceed the enumeration limit")]
    StateSpaceTooLarge(u64),
    #[error("malformed DAG descriptor: {0}")]
    Descriptor(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDescriptor {
    dist: DurationDist,
    id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    edges: Vec<(String, String)>,
    nodes: Vec<NodeDescriptor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticDag {
    nodes: BTreeMap<String, DurationDist>,
    /// `(before, after)` pairs.
    edges: BTreeSet<(String, String)>,
    // index form, in id order
    preds: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl StochasticDag {
    pub fn new(
        nodes: impl IntoIterator<Item = (String, DurationDist)>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, DagError> {
        let mut map = BTreeMap::new();
        for (id, dist) in nodes {
            dist.check().map_err(|reason| DagError::InvalidDuration {
                node: id.clone(),
                reason,
            })?;
            if map.insert(id.clone(), dist).is_some() {
                return Err(DagError::DuplicateNode(id));
            }
        }
        if map.is_empty() {
            return Err(DagError::Empty);
        }
        let edges: BTreeSet<(String, String)> = edges.into_iter().collect();
        let index: BTreeMap<&str, usize> = map
            .keys()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut preds = vec![Vec::new(); map.len()];
        let mut succs = vec![Vec::new(); map.len()];
        for (before, after) in &edges {
            let b = *index
                .get(before.as_str())
                .ok_or_else(|| DagError::UnknownNode(before.clone()))?;
            let a = *index
                .get(after.as_str())
                .ok_or_else(|| DagError::UnknownNode(after.clone()))?;
            preds[a].push(b);
            succs[b].push(a);
        }
        let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..map.len()).filter(|&i| indegree[i] == 0).collect();
        let mut topo = Vec::with_capacity(map.len());
        while let Some(i) = ready.pop_first() {
            topo.push(i);
            for &s in &succs[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        if topo.len() != map.len() {
            return Err(DagError::Cycle);
        }
        Ok(Self {
            nodes: map,
            edges,
            preds,
            topo,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&String, &DurationDist)> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(String, String)> {
        self.edges.iter()
    }

    pub fn duration(&self, id: &str) -> Option<&DurationDist> {
        self.nodes.get(id)
    }

    pub fn predecessors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.edges
            .iter()
            .filter(move |(_, a)| a == id)
            .map(|(b, _)| b)
    }

    pub fn sources(&self) -> Vec<&String> {
        self.nodes
            .keys()
            .filter(|id| self.predecessors(id).next().is_none())
            .collect()
    }

    pub fn sinks(&self) -> Vec<&String> {
        self.nodes
            .keys()
            .filter(|id| !self.edges.iter().any(|(b, _)| b == *id))
            .collect()
    }

    /// Makespan for durations given in node-id order.
    pub fn makespan(&self, durations: &[f64]) -> f64 {
        debug_assert_eq!(durations.len(), self.nodes.len());
        let mut finish = vec![0.0f64; durations.len()];
        let mut latest = 0.0f64;
        for &i in &self.topo {
            let start = self.preds[i].iter().map(|&p| finish[p]).fold(0.0, f64::max);
            finish[i] = start + durations[i];
            latest = latest.max(finish[i]);
        }
        latest
    }

    /// Exact makespan distribution by enumerating all joint outcomes.
    /// Deterministic durations count as one-point distributions.
    pub fn completion_exact(&self) -> Result<Vec<(f64, f64)>, DagError> {
        let supports: Vec<Vec<(f64, f64)>> = self
            .nodes
            .iter()
            .map(|(id, d)| {
                d.support()
                    .map(|s| s.into_iter().filter(|&(_, p)| p > 0.0).collect())
                    .ok_or_else(|| DagError::UnsupportedDist(id.clone()))
            })
            .collect::<Result<_, _>>()?;
        let size = supports
            .iter()
            .try_fold(1u64, |acc, s| acc.checked_mul(s.len() as u64))
            .unwrap_or(u64::MAX);
        if size > MAX_JOINT_OUTCOMES {
            return Err(DagError::StateSpaceTooLarge(size));
        }
        let mut digits = vec![0usize; supports.len()];
        let mut durations = vec![0.0; supports.len()];
        let mut outcomes = Vec::with_capacity(size as usize);
        loop {
            let mut prob = 1.0;
            for (i, s) in supports.iter().enumerate() {
                let (v, p) = s[digits[i]];
                durations[i] = v;
                prob *= p;
            }
            outcomes.push((self.makespan(&durations), prob));
            // mixed-radix increment
            let mut pos = 0;
            loop {
                if pos == digits.len() {
                    return Ok(merge_outcomes(outcomes));
                }
                digits[pos] += 1;
                if digits[pos] < supports[pos].len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Makespans of replications `range`, in replication order.
    pub fn completion_samples(&self, seed: u64, range: Range<u64>) -> Vec<f64> {
        let dists: Vec<&DurationDist> = self.nodes.values().collect();
        range
            .into_par_iter()
            .map_init(
                || vec![0.0; dists.len()],
                |durations, i| {
                    let mut rng = replication_stream(seed, i);
                    for (slot, d) in durations.iter_mut().zip(&dists) {
                        *slot = d.sample(&mut rng);
                    }
                    self.makespan(durations)
                },
            )
            .collect()
    }

    /// Monte Carlo completion statistics over `n >= 1` replications.
    pub fn completion_mc(&self, n: u64, seed: u64, deadline: Option<f64>) -> CompletionStats {
        assert!(n >= 1, "completion_mc needs at least one replication");
        CompletionStats::from_samples(&self.completion_samples(seed, 0..n), deadline)
    }

    /// Canonical JSON descriptor, newline-terminated.
    pub fn export(&self) -> String {
        let descriptor = Descriptor {
            edges: self.edges.iter().cloned().collect(),
            nodes: self
                .nodes
                .iter()
                .map(|(id, dist)| NodeDescriptor {
                    dist: dist.clone(),
                    id: id.clone(),
                })
                .collect(),
        };
        let value = serde_json::to_value(&descriptor).expect("descriptor serializes");
        let mut text = serde_json::to_string(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn parse(text: &str) -> Result<Self, DagError> {
        let descriptor: Descriptor =
            serde_json::from_str(text).map_err(|e| DagError::Descriptor(e.to_string()))?;
        Self::new(
            descriptor.nodes.into_iter().map(|n| (n.id, n.dist)),
            descriptor.edges,
        )
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= MERGE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Sorts `(value, prob)` pairs and merges values equal up to rounding.
fn merge_outcomes(mut outcomes: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    outcomes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (v, p) in outcomes {
        match merged.last_mut() {
            Some(last) if close(last.0, v) => last.1 += p,
            _ => merged.push((v, p)),
        }
    }
    merged
}

/// Empirical distribution of `samples` as ascending `(value, frequency)`.
pub fn empirical_distribution(samples: &[f64]) -> Vec<(f64, f64)> {
    let w = 1.0 / samples.len() as f64;
    merge_outcomes(samples.iter().map(|&v| (v, w)).collect())
}

/// Total-variation distance between two finite distributions; support points
/// equal up to rounding are identified.
pub fn total_variation(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut points: Vec<(f64, f64)> = a.to_vec();
    points.extend(b.iter().map(|&(v, p)| (v, -p)));
    0.5 * merge_outcomes(points)
        .iter()
        .map(|(_, d)| d.abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionStats {
    pub samples: u64,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
    /// Fraction of replications finishing at or before `deadline`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadline_prob: Option<f64>,
}

impl CompletionStats {
    pub fn from_samples(samples: &[f64], deadline: Option<f64>) -> Self {
        let sorted = stats::sorted(samples);
        let deadline_prob =
            deadline.map(|d| sorted.partition_point(|&x| x <= d) as f64 / sorted.len() as f64);
        Self {
            samples: samples.len() as u64,
            mean: stats::mean(samples),
            variance: stats::variance(samples),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            p50: stats::nearest_rank(&sorted, 0.50),
            p95: stats::nearest_rank(&sorted, 0.95),
            p99: stats::nearest_rank(&sorted, 0.99),
            deadline,
            deadline_prob,
        }
    }

    /// Canonical JSON with sorted keys.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("stats serialize");
        serde_json::to_string(&value).expect("value serializes")
    }
}

/// Where [`transform`] finds each twin's duration: an explicit per-twin entry,
/// then a numeric state value under the duration key (read as a
/// deterministic duration), then the default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DurationTable {
    pub by_twin: BTreeMap<String, DurationDist>,
    pub default: Option<DurationDist>,
}

/// One DAG node per twin; `Contains` and `DependsOn` edges become
/// `(parent, child)` precedences.
pub fn transform(
    graph: &TwinGraph,
    duration_key: &str,
    table: &DurationTable,
) -> Result<StochasticDag, DagError> {
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(DagError::InvalidGraph(violations));
    }
    let nodes = graph
        .twins()
        .map(|twin| {
            let dist = table
                .by_twin
                .get(&twin.id)
                .cloned()
                .or_else(|| match twin.state.get(duration_key) {
                    Some(Scalar::Int(v)) => Some(DurationDist::Deterministic { value: *v as f64 }),
                    Some(Scalar::Float(v)) => Some(DurationDist::Deterministic { value: *v }),
                    _ => None,
                })
                .or_else(|| table.default.clone())
                .ok_or_else(|| DagError::MissingDuration(twin.id.clone()))?;
            Ok((twin.id.clone(), dist))
        })
        .collect::<Result<Vec<_>, DagError>>()?;
    let edges = graph
        .edges()
        .filter(|e| e.relation.is_precedence())
        .map(|e| (e.parent.clone(), e.child.clone()));
    StochasticDag::new(nodes, edges)
}
