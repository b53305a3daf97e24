//! Hierarchical graph of digital twins.
//!
//! A [`TwinGraph`] registers [`Asset`]s, binds at most one [`DigitalTwin`] to
//! each, and relates twins through directed, typed edges. The graph is a DAG
//! in which a twin may have several parents. Tiers are derived from structure:
//! leaves sit at tier 0 and every parent sits one above its highest child.
//!
//! The same type models a twin of a network (twins of network elements only)
//! and a network of twins (network elements plus external assets).

mod document;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{DocumentError, TwinGraphDocument};

pub type AssetId = String;
pub type TwinId = String;

/// Attribute and state values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Int(v) => Some(*v as f64),
            Scalar::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float(v)
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_string())
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(v) => write!(f, "{v}"),
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Float(v) => write!(f, "{v}"),
            Scalar::Str(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssetKind {
    NetworkElement,
    EndDevice,
    IndustrialAsset,
    Service,
    /// Related to the network (e.g. point-to-point) but never part of a
    /// network path.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Asset {
    pub id: AssetId,
    pub kind: AssetKind,
    #[serde(default)]
    pub attributes: BTreeMap<String, Scalar>,
}

impl Asset {
    pub fn new(id: impl Into<String>, kind: AssetKind) -> Self {
        Self {
            id: id.into(),
            kind,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<Scalar>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }
}

/// Doppel twins replicate every asset attribute; Light twins expose a declared
/// subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TwinFidelity {
    Doppel,
    Light,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitalTwin {
    pub id: TwinId,
    pub asset_id: AssetId,
    pub fidelity: TwinFidelity,
    /// Attribute keys projected into `state` at bind time.
    pub exposed_keys: BTreeSet<String>,
    #[serde(default)]
    pub state: BTreeMap<String, Scalar>,
    #[serde(skip)]
    tier: u32,
}

impl DigitalTwin {
    pub fn tier(&self) -> u32 {
        self.tier
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    Contains,
    ConnectsTo,
    DependsOn,
}

impl Relation {
    /// Whether the relation orders activities, as opposed to describing
    /// adjacency.
    pub fn is_precedence(self) -> bool {
        !matches!(self, Relation::ConnectsTo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub parent: TwinId,
    pub child: TwinId,
    pub relation: Relation,
}

impl Edge {
    pub fn new(parent: impl Into<String>, child: impl Into<String>, relation: Relation) -> Self {
        Self {
            parent: parent.into(),
            child: child.into(),
            relation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregator {
    Sum,
    Max,
    Min,
    Mean,
    Count,
}

impl Aggregator {
    /// Folds child values. Integer inputs stay integral for `Sum`, `Max` and
    /// `Min`; `Mean` always yields a float.
    pub fn apply(self, values: &[Scalar]) -> Result<Scalar, SynthesisError> {
        if values.is_empty() {
            return Err(SynthesisError::EmptyChildSet);
        }
        if self == Aggregator::Count {
            return Ok(Scalar::Int(values.len() as i64));
        }
        let all_int = values.iter().all(|v| matches!(v, Scalar::Int(_)));
        if all_int && self != Aggregator::Mean {
            let ints = values.iter().map(|v| match v {
                Scalar::Int(i) => *i,
                _ => unreachable!(),
            });
            let out = match self {
                Aggregator::Sum => ints.sum(),
                Aggregator::Max => ints.max().expect("non-empty"),
                Aggregator::Min => ints.min().expect("non-empty"),
                Aggregator::Mean | Aggregator::Count => unreachable!(),
            };
            return Ok(Scalar::Int(out));
        }
        let floats: Vec<f64> = values
            .iter()
            .map(|v| v.as_f64().ok_or(SynthesisError::NonNumeric))
            .collect::<Result<_, _>>()?;
        let out = match self {
            Aggregator::Sum => floats.iter().sum(),
            Aggregator::Max => floats.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Min => floats.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregator::Mean => floats.iter().sum::<f64>() / floats.len() as f64,
            Aggregator::Count => unreachable!(),
        };
        Ok(Scalar::Float(out))
    }
}

/// Writes `aggregator(children[source_key])` into `parent[target_key]` for
/// every twin that has children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisRule {
    pub target_key: String,
    pub aggregator: Aggregator,
    pub source_key: String,
}

impl SynthesisRule {
    pub fn new(target_key: &str, aggregator: Aggregator, source_key: &str) -> Self {
        Self {
            target_key: target_key.to_string(),
            aggregator,
            source_key: source_key.to_string(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown asset {0:?}")]
    UnknownAsset(AssetId),
    #[error("asset {0:?} already has a twin")]
    AlreadyBound(AssetId),
    #[error("doppel twin of {asset:?} must expose every attribute; missing {missing:?}, unknown {unknown:?}")]
    DoppelProjection {
        asset: AssetId,
        missing: Vec<String>,
        unknown: Vec<String>,
    },
    #[error("light twin of {asset:?} exposes keys the asset does not have: {unknown:?}")]
    UnknownAttribute {
        asset: AssetId,
        unknown: Vec<String>,
    },
    #[error("unknown twin {0:?}")]
    UnknownTwin(TwinId),
    #[error("edge {parent:?} -> {child:?} would form a cycle")]
    CycleWouldForm { parent: TwinId, child: TwinId },
    #[error("twin {0:?} still has children")]
    HasChildren(TwinId),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("twin {twin:?} lacks source key {key:?}")]
    MissingSourceKey { twin: TwinId, key: String },
    #[error("aggregation over an empty child set")]
    EmptyChildSet,
    #[error("non-numeric value in numeric aggregation")]
    NonNumeric,
    #[error("key {key:?} on twin {twin:?} is not numeric")]
    NonNumericSource { twin: TwinId, key: String },
    #[error("graph is invalid: {0:?}")]
    InvalidGraph(Vec<Violation>),
}

/// A broken structural invariant, reported by [`TwinGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DanglingEdge { edge: Edge, missing: TwinId },
    CycleWouldForm { twins: Vec<TwinId> },
    UnknownAsset { twin: TwinId, asset: AssetId },
    DuplicateBinding { asset: AssetId, twins: Vec<TwinId> },
    FidelityMismatch { twin: TwinId, key: String },
}

impl Violation {
    pub fn name(&self) -> &'static str {
        match self {
            Violation::DanglingEdge { .. } => "DanglingEdge",
            Violation::CycleWouldForm { .. } => "CycleWouldForm",
            Violation::UnknownAsset { .. } => "UnknownAsset",
            Violation::DuplicateBinding { .. } => "DuplicateBinding",
            Violation::FidelityMismatch { .. } => "FidelityMismatch",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingEdge { edge, missing } => write!(
                f,
                "DanglingEdge: {} -> {} ({:?}) references missing twin {}",
                edge.parent, edge.child, edge.relation, missing
            ),
            Violation::CycleWouldForm { twins } => {
                write!(f, "CycleWouldForm: cycle through {}", twins.join(", "))
            }
            Violation::UnknownAsset { twin, asset } => {
                write!(
                    f,
                    "UnknownAsset: twin {twin} references missing asset {asset}"
                )
            }
            Violation::DuplicateBinding { asset, twins } => write!(
                f,
                "DuplicateBinding: asset {asset} is bound by {}",
                twins.join(", ")
            ),
            Violation::FidelityMismatch { twin, key } => {
                write!(f, "FidelityMismatch: twin {twin} does not expose {key}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TwinGraph {
    assets: BTreeMap<AssetId, Asset>,
    twins: BTreeMap<TwinId, DigitalTwin>,
    edges: BTreeSet<Edge>,
    rules: Vec<SynthesisRule>,
}

impl TwinGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assembles a graph without checking invariants; run
    /// [`validate`](Self::validate) on the result.
    pub fn from_parts(
        assets: impl IntoIterator<Item = Asset>,
        twins: impl IntoIterator<Item = DigitalTwin>,
        edges: impl IntoIterator<Item = Edge>,
        rules: Vec<SynthesisRule>,
    ) -> Result<Self, GraphError> {
        let mut graph = Self {
            rules,
            ..Self::default()
        };
        for asset in assets {
            if graph.assets.contains_key(&asset.id) {
                return Err(GraphError::DuplicateId(asset.id));
            }
            graph.assets.insert(asset.id.clone(), asset);
        }
        for twin in twins {
            if graph.twins.contains_key(&twin.id) {
                return Err(GraphError::DuplicateId(twin.id));
            }
            graph.twins.insert(twin.id.clone(), twin);
        }
        graph.edges = edges.into_iter().collect();
        graph.recompute_tiers();
        Ok(graph)
    }

    pub fn assets(&self) -> impl Iterator<Item = &Asset> {
        self.assets.values()
    }

    pub fn asset(&self, id: &str) -> Option<&Asset> {
        self.assets.get(id)
    }

    pub fn twins(&self) -> impl Iterator<Item = &DigitalTwin> {
        self.twins.values()
    }

    pub fn twin(&self, id: &str) -> Option<&DigitalTwin> {
        self.twins.get(id)
    }

    /// Direct access to a twin's state. Structure stays immutable through
    /// this handle.
    pub fn state_mut(&mut self, id: &str) -> Option<&mut BTreeMap<String, Scalar>> {
        self.twins.get_mut(id).map(|t| &mut t.state)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn rules(&self) -> &[SynthesisRule] {
        &self.rules
    }

    pub fn set_rules(&mut self, rules: Vec<SynthesisRule>) {
        self.rules = rules;
    }

    pub fn twin_count(&self) -> usize {
        self.twins.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn max_tier(&self) -> Option<u32> {
        self.twins.values().map(|t| t.tier).max()
    }

    pub fn parents_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a TwinId> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.child == id)
            .map(|e| &e.parent)
    }

    /// Children of `id` (deduplicated, in id order).
    pub fn children_of(&self, id: &str) -> BTreeSet<&TwinId> {
        self.edges
            .iter()
            .filter(|e| e.parent == id)
            .map(|e| &e.child)
            .collect()
    }

    pub fn add_asset(&mut self, asset: Asset) -> Result<(), GraphError> {
        if self.assets.contains_key(&asset.id) {
            return Err(GraphError::DuplicateId(asset.id));
        }
        self.assets.insert(asset.id.clone(), asset);
        Ok(())
    }

    /// Creates a tier-0 twin for `asset_id`, projecting attributes into state.
    /// The twin id equals the asset id.
    pub fn bind_twin(
        &mut self,
        asset_id: &str,
        fidelity: TwinFidelity,
        exposed_keys: &[&str],
    ) -> Result<&DigitalTwin, GraphError> {
        self.bind_twin_as(asset_id, asset_id, fidelity, exposed_keys)
    }

    pub fn bind_twin_as(
        &mut self,
        twin_id: &str,
        asset_id: &str,
        fidelity: TwinFidelity,
        exposed_keys: &[&str],
    ) -> Result<&DigitalTwin, GraphError> {
        let asset = self
            .assets
            .get(asset_id)
            .ok_or_else(|| GraphError::UnknownAsset(asset_id.to_string()))?;
        if self.twins.values().any(|t| t.asset_id == asset_id) {
            return Err(GraphError::AlreadyBound(asset_id.to_string()));
        }
        if self.twins.contains_key(twin_id) {
            return Err(GraphError::DuplicateId(twin_id.to_string()));
        }
        let requested: BTreeSet<String> = exposed_keys.iter().map(|k| k.to_string()).collect();
        let available: BTreeSet<String> = asset.attributes.keys().cloned().collect();
        let unknown: Vec<String> = requested.difference(&available).cloned().collect();
        let exposed = match fidelity {
            TwinFidelity::Doppel => {
                // an empty key list means "all attributes"
                if !requested.is_empty() && requested != available {
                    return Err(GraphError::DoppelProjection {
                        asset: asset_id.to_string(),
                        missing: available.difference(&requested).cloned().collect(),
                        unknown,
                    });
                }
                available
            }
            TwinFidelity::Light => {
                if !unknown.is_empty() {
                    return Err(GraphError::UnknownAttribute {
                        asset: asset_id.to_string(),
                        unknown,
                    });
                }
                requested
            }
        };
        let state = exposed
            .iter()
            .map(|k| (k.clone(), asset.attributes[k].clone()))
            .collect();
        let twin = DigitalTwin {
            id: twin_id.to_string(),
            asset_id: asset_id.to_string(),
            fidelity,
            exposed_keys: exposed,
            state,
            tier: 0,
        };
        self.twins.insert(twin_id.to_string(), twin);
        Ok(&self.twins[twin_id])
    }

    /// Adds `parent -> child`. Rejects edges that would close a cycle.
    pub fn link(
        &mut self,
        parent: &str,
        child: &str,
        relation: Relation,
    ) -> Result<(), GraphError> {
        for id in [parent, child] {
            if !self.twins.contains_key(id) {
                return Err(GraphError::UnknownTwin(id.to_string()));
            }
        }
        if parent == child || self.reaches(child, parent) {
            return Err(GraphError::CycleWouldForm {
                parent: parent.to_string(),
                child: child.to_string(),
            });
        }
        self.edges.insert(Edge::new(parent, child, relation));
        self.recompute_tiers();
        Ok(())
    }

    pub fn unlink(&mut self, parent: &str, child: &str, relation: Relation) -> bool {
        let removed = self.edges.remove(&Edge::new(parent, child, relation));
        if removed {
            self.recompute_tiers();
        }
        removed
    }

    /// Removes a childless twin and the edges pointing at it. The asset stays
    /// registered.
    pub fn remove_twin(&mut self, id: &str) -> Result<DigitalTwin, GraphError> {
        if !self.twins.contains_key(id) {
            return Err(GraphError::UnknownTwin(id.to_string()));
        }
        if self.edges.iter().any(|e| e.parent == id) {
            return Err(GraphError::HasChildren(id.to_string()));
        }
        self.edges.retain(|e| e.child != id);
        let twin = self.twins.remove(id).expect("checked above");
        self.recompute_tiers();
        Ok(twin)
    }

    fn reaches(&self, from: &str, to: &str) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(node) = stack.pop() {
            if node == to {
                return true;
            }
            if seen.insert(node) {
                stack.extend(
                    self.edges
                        .iter()
                        .filter(|e| e.parent == node)
                        .map(|e| e.child.as_str()),
                );
            }
        }
        false
    }

    /// Twins ordered children-before-parents, ties broken by id. Twins on or
    /// above a cycle are omitted.
    pub fn bottom_up_order(&self) -> Vec<TwinId> {
        let mut pending: BTreeMap<&str, usize> =
            self.twins.keys().map(|id| (id.as_str(), 0usize)).collect();
        let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for edge in &self.edges {
            let (Some(_), true) = (
                pending.get(edge.parent.as_str()),
                self.twins.contains_key(&edge.child),
            ) else {
                continue;
            };
            *pending.get_mut(edge.parent.as_str()).expect("present") += 1;
            parents
                .entry(edge.child.as_str())
                .or_default()
                .push(edge.parent.as_str());
        }
        let mut ready: BTreeSet<&str> = pending
            .iter()
            .filter(|(_, n)| **n == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.twins.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.to_string());
            for parent in parents.get(id).into_iter().flatten() {
                let n = pending.get_mut(parent).expect("present");
                *n -= 1;
                if *n == 0 {
                    ready.insert(parent);
                }
            }
        }
        order
    }

    fn recompute_tiers(&mut self) {
        let order = self.bottom_up_order();
        let mut tiers: BTreeMap<String, u32> = BTreeMap::new();
        for id in &order {
            let tier = self
                .edges
                .iter()
                .filter(|e| &e.parent == id)
                .filter_map(|e| tiers.get(&e.child))
                .map(|t| t + 1)
                .max()
                .unwrap_or(0);
            tiers.insert(id.clone(), tier);
        }
        for (id, twin) in self.twins.iter_mut() {
            twin.tier = tiers.get(id).copied().unwrap_or(0);
        }
    }

    /// Lists every broken invariant. Empty iff the graph is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for edge in &self.edges {
            for end in [&edge.parent, &edge.child] {
                if !self.twins.contains_key(end) {
                    out.push(Violation::DanglingEdge {
                        edge: edge.clone(),
                        missing: end.clone(),
                    });
                    break;
                }
            }
        }
        let ordered: BTreeSet<TwinId> = self.bottom_up_order().into_iter().collect();
        if ordered.len() < self.twins.len() {
            let stuck: Vec<TwinId> = self
                .twins
                .keys()
                .filter(|id| !ordered.contains(*id))
                .cloned()
                .collect();
            out.push(Violation::CycleWouldForm {
                twins: self.cycle_members(&stuck),
            });
        }
        let mut bindings: BTreeMap<&str, Vec<TwinId>> = BTreeMap::new();
        for twin in self.twins.values() {
            bindings
                .entry(&twin.asset_id)
                .or_default()
                .push(twin.id.clone());
            let Some(asset) = self.assets.get(&twin.asset_id) else {
                out.push(Violation::UnknownAsset {
                    twin: twin.id.clone(),
                    asset: twin.asset_id.clone(),
                });
                continue;
            };
            let required: Box<dyn Iterator<Item = &String>> = match twin.fidelity {
                TwinFidelity::Doppel => Box::new(asset.attributes.keys()),
                TwinFidelity::Light => Box::new(twin.exposed_keys.iter()),
            };
            for key in required {
                if !twin.state.contains_key(key) {
                    out.push(Violation::FidelityMismatch {
                        twin: twin.id.clone(),
                        key: key.clone(),
                    });
                }
            }
        }
        for (asset, twins) in bindings {
            if twins.len() > 1 {
                out.push(Violation::DuplicateBinding {
                    asset: asset.to_string(),
                    twins,
                });
            }
        }
        out
    }

    /// Twins lying on a cycle among `stuck` (the nodes Kahn's algorithm could
    /// not release).
    fn cycle_members(&self, stuck: &[TwinId]) -> Vec<TwinId> {
        stuck
            .iter()
            .filter(|id| {
                self.edges
                    .iter()
                    .filter(|e| &e.parent == *id)
                    .any(|e| self.reaches(&e.child, id))
            })
            .cloned()
            .collect()
    }

    /// Applies `rules` bottom-up. Leaves keep their state; every twin with
    /// children receives each rule's aggregate.
    pub fn synthesize(&mut self, rules: &[SynthesisRule]) -> Result<(), SynthesisError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(SynthesisError::InvalidGraph(violations));
        }
        let mut next = self.twins.clone();
        for id in self.bottom_up_order() {
            let children = self.children_of(&id);
            if children.is_empty() {
                continue;
            }
            for rule in rules {
                let values = children
                    .iter()
                    .map(|child| {
                        next[*child]
                            .state
                            .get(&rule.source_key)
                            .cloned()
                            .ok_or_else(|| SynthesisError::MissingSourceKey {
                                twin: (*child).clone(),
                                key: rule.source_key.clone(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let value = rule.aggregator.apply(&values).map_err(|e| match e {
                    SynthesisError::NonNumeric => {
                        let twin = children
                            .iter()
                            .find(|c| next[**c].state[&rule.source_key].as_f64().is_none())
                            .map(|c| (*c).clone())
                            .unwrap_or_default();
                        SynthesisError::NonNumericSource {
                            twin,
                            key: rule.source_key.clone(),
                        }
                    }
                    other => other,
                })?;
                next.get_mut(&id)
                    .expect("ordered ids exist")
                    .state
                    .insert(rule.target_key.clone(), value);
            }
        }
        self.twins = next;
        Ok(())
    }

    /// Synthesizes with the graph's own rule list.
    pub fn synthesize_own(&mut self) -> Result<(), SynthesisError> {
        let rules = self.rules.clone();
        self.synthesize(&rules)
    }

    /// Keeps twins with `tier >= tier_floor` and contracts paths that run
    /// through removed twins into direct edges. If no twin reaches the floor,
    /// the roots are kept instead. A contracted edge takes the relation of the
    /// first edge on its path.
    pub fn abstract_view(&self, tier_floor: u32) -> TwinGraph {
        let mut keep: BTreeSet<&str> = self
            .twins
            .values()
            .filter(|t| t.tier >= tier_floor)
            .map(|t| t.id.as_str())
            .collect();
        if keep.is_empty() {
            keep = self
                .twins
                .keys()
                .filter(|id| self.parents_of(id).next().is_none())
                .map(String::as_str)
                .collect();
        }
        let mut edges = BTreeSet::new();
        for &source in &keep {
            for first in self.edges.iter().filter(|e| e.parent == source) {
                // walk removed twins reachable from this edge
                let mut stack = vec![first.child.as_str()];
                let mut seen = BTreeSet::new();
                while let Some(node) = stack.pop() {
                    if keep.contains(node) {
                        edges.insert(Edge::new(source, node, first.relation));
                        continue;
                    }
                    if !seen.insert(node) {
                        continue;
                    }
                    stack.extend(
                        self.edges
                            .iter()
                            .filter(|e| e.parent == node)
                            .map(|e| e.child.as_str()),
                    );
                }
            }
        }
        let dropped_assets: BTreeSet<&str> = self
            .twins
            .values()
            .filter(|t| !keep.contains(t.id.as_str()))
            .map(|t| t.asset_id.as_str())
            .collect();
        let mut view = TwinGraph {
            assets: self
                .assets
                .iter()
                .filter(|(id, _)| !dropped_assets.contains(id.as_str()))
                .map(|(id, a)| (id.clone(), a.clone()))
                .collect(),
            twins: self
                .twins
                .iter()
                .filter(|(id, _)| keep.contains(id.as_str()))
                .map(|(id, t)| (id.clone(), t.clone()))
                .collect(),
            edges,
            rules: self.rules.clone(),
        };
        view.recompute_tiers();
        view
    }

    /// Canonical line-oriented JSON document.
    pub fn to_document(&self) -> String {
        document::write(self)
    }

    pub fn from_document(text: &str) -> Result<Self, DocumentError> {
        document::read(text)
    }
}
