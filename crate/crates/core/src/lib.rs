//! Generalized digital twin networks: twin graphs, stochastic DAG evaluation,
//! response-time mixtures, a discrete-event kernel, a TSN failover model and a
//! microservice workload replica.

pub mod mixture;
pub mod simkit;
pub mod stats;
pub mod stochastic_dag;
pub mod tsn_mgmt;
pub mod twin_graph;
pub mod workload_replica;
