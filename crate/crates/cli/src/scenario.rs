//! Scenario file: one JSON document whose sections feed the subcommands.

use std::collections::BTreeMap;

use gdtn_core::mixture::EmOptions;
use gdtn_core::stochastic_dag::{DurationDist, DurationTable};
use gdtn_core::tsn_mgmt::{MgmtConfig, Topology, TrafficSpec};
use gdtn_core::twin_graph::TwinGraphDocument;
use gdtn_core::workload_replica::{LoadProfile, ReplicaError, ServiceChain, ServiceSource, Stage};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub twin_graph: Option<TwinGraphDocument>,
    pub durations: Option<Durations>,
    pub topology: Option<Topology>,
    pub mgmt: Option<MgmtConfig>,
    pub traffic: Option<TrafficSpec>,
    pub chain: Option<Chain>,
    pub profile: Option<LoadProfile>,
    pub seeds: Option<Vec<u64>>,
}

fn default_duration_key() -> String {
    "duration".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Durations {
    /// State key read as a deterministic duration when a twin has no entry.
    #[serde(default = "default_duration_key")]
    pub key: String,
    #[serde(default)]
    pub by_twin: BTreeMap<String, DurationDist>,
    #[serde(default)]
    pub default: Option<DurationDist>,
}

impl Durations {
    pub fn table(&self) -> DurationTable {
        DurationTable {
            by_twin: self.by_twin.clone(),
            default: self.default.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainStage {
    pub service: String,
    pub replicas: u32,
    /// Ground-truth service times (ms).
    pub hidden: ServiceSource,
}

fn default_k() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chain {
    pub stages: Vec<ChainStage>,
    /// Mixture components fitted per stage and load.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub em: EmSection,
}

impl Chain {
    pub fn hidden_chain(&self) -> Result<ServiceChain, ReplicaError> {
        ServiceChain::new(
            self.stages
                .iter()
                .map(|s| Stage {
                    service: s.service.clone(),
                    replicas: s.replicas,
                    source: s.hidden.clone(),
                })
                .collect(),
        )
    }

    pub fn em_options(&self, seed: u64) -> EmOptions {
        EmOptions {
            k: self.k,
            seed,
            max_iter: self.em.max_iter,
            tol: self.em.tol,
            restarts: self.em.restarts,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmSection {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for EmSection {
    fn default() -> Self {
        let d = EmOptions::new(1, 0);
        Self {
            max_iter: d.max_iter,
            tol: d.tol,
            restarts: d.restarts,
        }
    }
}
