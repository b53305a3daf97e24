//! Centralized TSN management on the event kernel.
//!
//! The CNC computes paths and pushes switch configuration, the CUC pushes the
//! matching end-device configuration through each talker's agent, and a
//! registry holds the management plane's view of the network. A flow becomes
//! active once both configuration pushes have landed. Link failures reach the
//! CNC after a detection delay and trigger the same sequence for every flow
//! routed over the failed link.
//!
//! Packets travel hop by hop with constant per-link latency and are lost on a
//! link that is down when they enter it or that fails while they cross it.

mod topology;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::simkit::{
    priority, Engine, Event, EventHandle, EventLog, Payload, Scheduler, SimError, SimTime,
};

pub use topology::{FlowId, FlowSpec, Link, LinkId, Node, NodeId, NodeKind, Topology};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TsnError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("link {0:?} connects a node to itself")]
    SelfLoop(String),
    #[error("link {0:?} has zero latency")]
    ZeroLatency(String),
    #[error("{0:?} is not an end device")]
    NotAnEndDevice(String),
    #[error("end device {0:?} is disconnected from the others")]
    Disconnected(String),
    #[error("unknown link {0:?}")]
    UnknownLink(String),
    #[error("link {0:?} is already down")]
    LinkAlreadyDown(String),
    #[error("no path for flow {0:?}")]
    NoPath(FlowId),
    #[error("traffic period must be > 0")]
    ZeroPeriod,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Management-plane delays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgmtConfig {
    /// Failure to CNC notification.
    pub detect_delay_ns: u64,
    /// CNC path computation.
    pub compute_delay_ns: u64,
    /// CNC to switches.
    pub push_delay_net_ns: u64,
    /// CUC to end-device agents.
    pub push_delay_dev_ns: u64,
    /// Full registry resynchronization period; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_refresh_ns: Option<u64>,
}

impl MgmtConfig {
    /// Time from a failure to the replacement path becoming active.
    pub fn reconfiguration_ns(&self) -> u64 {
        self.detect_delay_ns
            + self.compute_delay_ns
            + self.push_delay_net_ns.max(self.push_delay_dev_ns)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub link: LinkId,
    pub at_ns: u64,
}

/// Periodic talker traffic. Talkers send while `t < duration_ns`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub period_ns: u64,
    pub duration_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowState {
    Configuring,
    Active,
    Reconfiguring,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub path: Vec<LinkId>,
    pub state: FlowState,
}

/// The management plane's copy of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtRegistry {
    pub topology: Topology,
    pub flows: BTreeMap<FlowId, FlowRecord>,
    pub updated_at: SimTime,
}

impl DtRegistry {
    /// Equal content, ignoring the update time.
    pub fn same_view(&self, other: &DtRegistry) -> bool {
        self.topology == other.topology && self.flows == other.flows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub sent_ns: u64,
    pub recv_ns: u64,
    pub latency_ns: u64,
    /// Index into [`FlowReport::routes`].
    pub route: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowReport {
    pub id: FlowId,
    /// Every activated path, in activation order.
    pub routes: Vec<Vec<LinkId>>,
    pub state: FlowState,
    pub deliveries: Vec<Delivery>,
    pub dropped: u64,
}

impl FlowReport {
    pub fn path_before(&self) -> &[LinkId] {
        self.routes.first().map_or(&[], Vec::as_slice)
    }

    /// Final path; empty once the flow is down.
    pub fn path_after(&self) -> &[LinkId] {
        if self.state == FlowState::Down {
            return &[];
        }
        self.routes.last().map_or(&[], Vec::as_slice)
    }

    /// Gap between the last delivery on the previous path and the first on
    /// the current one. Zero for a flow that was never rerouted, `None` when
    /// the flow went down or either side of the gap has no delivery.
    pub fn downtime_ns(&self) -> Option<u64> {
        if self.state == FlowState::Down {
            return None;
        }
        let n = self.routes.len();
        if n < 2 {
            return Some(0);
        }
        let last_old = self.deliveries.iter().rev().find(|d| d.route == n - 2)?;
        let first_new = self.deliveries.iter().find(|d| d.route == n - 1)?;
        Some(first_new.recv_ns - last_old.recv_ns)
    }
}

#[derive(Debug, Clone)]
pub struct FailoverReport {
    pub flows: Vec<FlowReport>,
    /// Registry at the end of the run.
    pub registry: DtRegistry,
    /// Live network state at the end of the run.
    pub live: DtRegistry,
    pub log: EventLog,
}

impl FailoverReport {
    pub fn flow(&self, id: &str) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.id == id)
    }

    /// `t_ns,flow_id,latency_ns`, ordered by receive time then flow id.
    pub fn latency_csv(&self) -> String {
        let mut rows: Vec<(u64, &str, u64)> = self
            .flows
            .iter()
            .flat_map(|f| {
                f.deliveries
                    .iter()
                    .map(move |d| (d.recv_ns, f.id.as_str(), d.latency_ns))
            })
            .collect();
        rows.sort();
        let mut out = String::from("t_ns,flow_id,latency_ns\n");
        for (t, id, latency) in rows {
            out.push_str(&format!("{t},{id},{latency}\n"));
        }
        out
    }

    /// Canonical JSON summary. The top-level fields describe the first flow.
    pub fn summary_json(&self) -> String {
        let flows: Vec<_> = self
            .flows
            .iter()
            .map(|f| {
                json!({
                    "id": f.id,
                    "state": f.state,
                    "delivered": f.deliveries.len(),
                    "dropped": f.dropped,
                    "downtime_ns": f.downtime_ns(),
                    "path_before": f.path_before(),
                    "path_after": f.path_after(),
                })
            })
            .collect();
        let first = self.flows.first();
        let value = json!({
            "downtime_ns": first.and_then(FlowReport::downtime_ns),
            "path_before": first.map(FlowReport::path_before),
            "path_after": first.map(FlowReport::path_after),
            "flows": flows,
        });
        let mut text = serde_json::to_string(&value).expect("summary serializes");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TsnEvent {
    ConfigRequest {
        flow: FlowId,
    },
    PathComputed {
        flow: FlowId,
        generation: u32,
        path: Option<Vec<LinkId>>,
    },
    NetConfigApplied {
        flow: FlowId,
        generation: u32,
    },
    DevConfigApplied {
        flow: FlowId,
        generation: u32,
    },
    Transmit {
        flow: FlowId,
    },
    HopDone {
        packet: u64,
        hop: usize,
    },
    LinkDown {
        link: LinkId,
    },
    FailureNotice {
        link: LinkId,
    },
    RegistryRefresh,
}

impl Payload for TsnEvent {
    fn kind(&self) -> &'static str {
        match self {
            TsnEvent::ConfigRequest { .. } => "config_request",
            TsnEvent::PathComputed { .. } => "path_computed",
            TsnEvent::NetConfigApplied { .. } => "net_config_applied",
            TsnEvent::DevConfigApplied { .. } => "dev_config_applied",
            TsnEvent::Transmit { .. } => "transmit",
            TsnEvent::HopDone { .. } => "hop_done",
            TsnEvent::LinkDown { .. } => "link_down",
            TsnEvent::FailureNotice { .. } => "failure_notice",
            TsnEvent::RegistryRefresh => "registry_refresh",
        }
    }

    fn detail(&self) -> String {
        match self {
            TsnEvent::ConfigRequest { flow } | TsnEvent::Transmit { flow } => {
                format!("flow={flow}")
            }
            TsnEvent::PathComputed {
                flow,
                generation,
                path,
            } => {
                let path = path.as_ref().map_or("none".to_string(), |p| p.join(">"));
                format!("flow={flow} gen={generation} path={path}")
            }
            TsnEvent::NetConfigApplied { flow, generation }
            | TsnEvent::DevConfigApplied { flow, generation } => {
                format!("flow={flow} gen={generation}")
            }
            TsnEvent::HopDone { packet, hop } => format!("packet={packet} hop={hop}"),
            TsnEvent::LinkDown { link } | TsnEvent::FailureNotice { link } => {
                format!("link={link}")
            }
            TsnEvent::RegistryRefresh => String::new(),
        }
    }
}

#[derive(Debug)]
struct FlowRuntime {
    spec: FlowSpec,
    path: Vec<LinkId>,
    state: FlowState,
    generation: u32,
    pending: Option<Vec<LinkId>>,
    acks: u8,
    talker: Option<EventHandle>,
    report: FlowReport,
}

impl FlowRuntime {
    fn record(&self) -> FlowRecord {
        FlowRecord {
            path: self.path.clone(),
            state: self.state,
        }
    }

    fn uses(&self, link: &str) -> bool {
        self.path
            .iter()
            .chain(self.pending.iter().flatten())
            .any(|l| l == link)
    }
}

#[derive(Debug)]
struct Packet {
    flow: FlowId,
    path: Vec<LinkId>,
    route: usize,
    sent: SimTime,
}

#[derive(Debug)]
struct Network {
    live: Topology,
    mgmt: MgmtConfig,
    traffic: TrafficSpec,
    flows: BTreeMap<FlowId, FlowRuntime>,
    registry: DtRegistry,
    down_since: BTreeMap<LinkId, SimTime>,
    packets: BTreeMap<u64, Packet>,
    next_packet: u64,
}

type Sched = Scheduler<TsnEvent>;

impl Network {
    fn snapshot(&self, at: SimTime) -> DtRegistry {
        DtRegistry {
            topology: self.live.clone(),
            flows: self
                .flows
                .iter()
                .map(|(id, f)| (id.clone(), f.record()))
                .collect(),
            updated_at: at,
        }
    }

    fn handle(&mut self, s: &mut Sched, event: Event<TsnEvent>) -> Result<(), SimError> {
        match event.kind {
            TsnEvent::ConfigRequest { flow } => self.compute_path(s, &flow),
            TsnEvent::PathComputed {
                flow,
                generation,
                path,
            } => self.path_computed(s, &flow, generation, path),
            TsnEvent::NetConfigApplied { flow, generation }
            | TsnEvent::DevConfigApplied { flow, generation } => {
                self.config_applied(s, &flow, generation)
            }
            TsnEvent::Transmit { flow } => self.transmit(s, &flow),
            TsnEvent::HopDone { packet, hop } => self.hop_done(s, packet, hop),
            TsnEvent::LinkDown { link } => {
                self.down_since.insert(link.clone(), s.now());
                if let Some(l) = self.live.link_mut(&link) {
                    l.up = false;
                }
                s.schedule_with_priority(
                    self.mgmt.detect_delay_ns,
                    priority::CONTROL,
                    format!("link:{link}"),
                    TsnEvent::FailureNotice { link },
                )?;
                Ok(())
            }
            TsnEvent::FailureNotice { link } => {
                if let Some(l) = self.registry.topology.link_mut(&link) {
                    l.up = false;
                }
                self.registry.updated_at = s.now();
                let affected: Vec<FlowId> = self
                    .flows
                    .values()
                    .filter(|f| f.state != FlowState::Down && f.uses(&link))
                    .map(|f| f.spec.id.clone())
                    .collect();
                for id in affected {
                    let flow = self.flows.get_mut(&id).expect("listed");
                    if flow.state == FlowState::Active {
                        flow.state = FlowState::Reconfiguring;
                    }
                    self.registry.flows.insert(id.clone(), flow.record());
                    self.compute_path(s, &id)?;
                }
                Ok(())
            }
            TsnEvent::RegistryRefresh => {
                self.registry = self.snapshot(s.now());
                if let Some(period) = self.mgmt.registry_refresh_ns {
                    if s.now().as_ns() + period < self.traffic.duration_ns {
                        s.schedule_with_priority(
                            period,
                            priority::CONTROL,
                            "registry",
                            TsnEvent::RegistryRefresh,
                        )?;
                    }
                }
                Ok(())
            }
        }
    }

    /// The CNC routes over its registry view; the result is ready after the
    /// computation delay.
    fn compute_path(&mut self, s: &mut Sched, id: &str) -> Result<(), SimError> {
        let flow = self.flows.get_mut(id).expect("known flow");
        flow.generation += 1;
        flow.pending = None;
        flow.acks = 0;
        let path = self
            .registry
            .topology
            .shortest_path(&flow.spec.src, &flow.spec.dst);
        s.schedule_with_priority(
            self.mgmt.compute_delay_ns,
            priority::CONTROL,
            "cnc",
            TsnEvent::PathComputed {
                flow: id.to_string(),
                generation: flow.generation,
                path,
            },
        )?;
        Ok(())
    }

    fn path_computed(
        &mut self,
        s: &mut Sched,
        id: &str,
        generation: u32,
        path: Option<Vec<LinkId>>,
    ) -> Result<(), SimError> {
        let flow = self.flows.get_mut(id).expect("known flow");
        if generation != flow.generation {
            return Ok(());
        }
        let Some(path) = path else {
            flow.state = FlowState::Down;
            flow.path.clear();
            if let Some(talker) = flow.talker.take() {
                s.cancel(talker);
            }
            self.registry.flows.insert(id.to_string(), flow.record());
            self.registry.updated_at = s.now();
            return Ok(());
        };
        flow.pending = Some(path);
        s.schedule_with_priority(
            self.mgmt.push_delay_net_ns,
            priority::CONTROL,
            "cnc",
            TsnEvent::NetConfigApplied {
                flow: id.to_string(),
                generation,
            },
        )?;
        s.schedule_with_priority(
            self.mgmt.push_delay_dev_ns,
            priority::CONTROL,
            "cuc",
            TsnEvent::DevConfigApplied {
                flow: id.to_string(),
                generation,
            },
        )?;
        Ok(())
    }

    fn config_applied(&mut self, s: &mut Sched, id: &str, generation: u32) -> Result<(), SimError> {
        let flow = self.flows.get_mut(id).expect("known flow");
        if generation != flow.generation {
            return Ok(());
        }
        flow.acks += 1;
        if flow.acks < 2 {
            return Ok(());
        }
        // both sides configured: activate and restart the talker on the new path
        flow.path = flow.pending.take().expect("path computed before pushes");
        flow.state = FlowState::Active;
        flow.report.routes.push(flow.path.clone());
        if let Some(talker) = flow.talker.take() {
            s.cancel(talker);
        }
        if s.now().as_ns() < self.traffic.duration_ns {
            let handle = s.schedule(
                0,
                format!("talker:{}", flow.spec.src),
                TsnEvent::Transmit {
                    flow: id.to_string(),
                },
            )?;
            flow.talker = Some(handle);
        }
        self.registry.flows.insert(id.to_string(), flow.record());
        self.registry.updated_at = s.now();
        Ok(())
    }

    fn transmit(&mut self, s: &mut Sched, id: &str) -> Result<(), SimError> {
        let flow = self.flows.get_mut(id).expect("known flow");
        flow.talker = None;
        if flow.state == FlowState::Down || flow.report.routes.is_empty() {
            return Ok(());
        }
        let packet = self.next_packet;
        self.next_packet += 1;
        self.packets.insert(
            packet,
            Packet {
                flow: id.to_string(),
                path: flow.path.clone(),
                route: flow.report.routes.len() - 1,
                sent: s.now(),
            },
        );
        let next = s.now().as_ns() + self.traffic.period_ns;
        if next < self.traffic.duration_ns {
            let handle = s.schedule(
                self.traffic.period_ns,
                format!("talker:{}", flow.spec.src),
                TsnEvent::Transmit {
                    flow: id.to_string(),
                },
            )?;
            flow.talker = Some(handle);
        }
        self.enter_hop(s, packet, 0)
    }

    fn enter_hop(&mut self, s: &mut Sched, packet: u64, hop: usize) -> Result<(), SimError> {
        let p = &self.packets[&packet];
        let link = self.live.link(&p.path[hop]).expect("path uses known links");
        if !link.up {
            return self.drop_packet(packet);
        }
        s.schedule(
            link.latency_ns,
            format!("link:{}", link.id),
            TsnEvent::HopDone { packet, hop },
        )?;
        Ok(())
    }

    fn hop_done(&mut self, s: &mut Sched, packet: u64, hop: usize) -> Result<(), SimError> {
        let p = &self.packets[&packet];
        // the link was up on entry, so any recorded failure happened in transit
        if self.down_since.contains_key(&p.path[hop]) {
            return self.drop_packet(packet);
        }
        if hop + 1 < p.path.len() {
            return self.enter_hop(s, packet, hop + 1);
        }
        let p = self.packets.remove(&packet).expect("in flight");
        let latency = s.now().as_ns() - p.sent.as_ns();
        self.flows
            .get_mut(&p.flow)
            .expect("known flow")
            .report
            .deliveries
            .push(Delivery {
                sent_ns: p.sent.as_ns(),
                recv_ns: s.now().as_ns(),
                latency_ns: latency,
                route: p.route,
            });
        Ok(())
    }

    fn drop_packet(&mut self, packet: u64) -> Result<(), SimError> {
        let p = self.packets.remove(&packet).expect("in flight");
        self.flows
            .get_mut(&p.flow)
            .expect("known flow")
            .report
            .dropped += 1;
        Ok(())
    }
}

/// A configured network ready to run.
#[derive(Debug)]
pub struct FailoverSim {
    engine: Engine<TsnEvent>,
    net: Network,
}

impl FailoverSim {
    /// Validates the topology, checks every flow can be routed and queues
    /// the initial configuration requests (and the failure in `traffic`, if
    /// any).
    pub fn new(
        topology: Topology,
        mgmt: MgmtConfig,
        traffic: TrafficSpec,
    ) -> Result<Self, TsnError> {
        topology.validate()?;
        if traffic.period_ns == 0 {
            return Err(TsnError::ZeroPeriod);
        }
        for spec in &topology.flows {
            if topology.shortest_path(&spec.src, &spec.dst).is_none() {
                return Err(TsnError::NoPath(spec.id.clone()));
            }
        }
        let flows: BTreeMap<FlowId, FlowRuntime> = topology
            .flows
            .iter()
            .map(|spec| {
                let runtime = FlowRuntime {
                    spec: spec.clone(),
                    path: Vec::new(),
                    state: FlowState::Configuring,
                    generation: 0,
                    pending: None,
                    acks: 0,
                    talker: None,
                    report: FlowReport {
                        id: spec.id.clone(),
                        routes: Vec::new(),
                        state: FlowState::Configuring,
                        deliveries: Vec::new(),
                        dropped: 0,
                    },
                };
                (spec.id.clone(), runtime)
            })
            .collect();
        let failure = traffic.failure.clone();
        let mut net = Network {
            live: topology,
            mgmt,
            traffic,
            flows,
            registry: DtRegistry {
                topology: Topology::default(),
                flows: BTreeMap::new(),
                updated_at: SimTime::ZERO,
            },
            down_since: BTreeMap::new(),
            packets: BTreeMap::new(),
            next_packet: 0,
        };
        net.registry = net.snapshot(SimTime::ZERO);

        let mut engine = Engine::new();
        for id in net.flows.keys() {
            engine.schedule_with_priority(
                0,
                priority::CONTROL,
                "cuc",
                TsnEvent::ConfigRequest { flow: id.clone() },
            )?;
        }
        if let Some(period) = net.mgmt.registry_refresh_ns.filter(|&p| p > 0) {
            engine.schedule_with_priority(
                period,
                priority::CONTROL,
                "registry",
                TsnEvent::RegistryRefresh,
            )?;
        }
        let mut sim = Self { engine, net };
        if let Some(f) = failure {
            sim.inject_link_failure(&f.link, SimTime::from_ns(f.at_ns))?;
        }
        Ok(sim)
    }

    /// Takes `link` down at `at`.
    pub fn inject_link_failure(
        &mut self,
        link: &str,
        at: SimTime,
    ) -> Result<EventHandle, TsnError> {
        let l = self
            .net
            .live
            .link(link)
            .ok_or_else(|| TsnError::UnknownLink(link.to_string()))?;
        if !l.up {
            return Err(TsnError::LinkAlreadyDown(link.to_string()));
        }
        let handle = self.engine.scheduler().schedule_at(
            at,
            priority::CONTROL,
            "fault",
            TsnEvent::LinkDown {
                link: link.to_string(),
            },
        )?;
        Ok(handle)
    }

    pub fn run(mut self) -> Result<FailoverReport, TsnError> {
        let mut error = None;
        let net = &mut self.net;
        self.engine.run(SimTime::MAX, |s, event| {
            if let Err(e) = net.handle(s, event) {
                error.get_or_insert(e);
                s.stop();
            }
        });
        if let Some(e) = error {
            return Err(e.into());
        }
        let end = self.engine.now();
        let live = self.net.snapshot(end);
        let flows = self
            .net
            .flows
            .into_values()
            .map(|f| FlowReport {
                state: f.state,
                ..f.report
            })
            .collect();
        Ok(FailoverReport {
            flows,
            registry: self.net.registry,
            live,
            log: self.engine.into_log(),
        })
    }
}

pub fn run_failover_scenario(
    topology: Topology,
    mgmt: MgmtConfig,
    traffic: TrafficSpec,
) -> Result<FailoverReport, TsnError> {
    FailoverSim::new(topology, mgmt, traffic)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOP_NS: u64 = 50_000;
    const PERIOD_NS: u64 = 10_000_000;

    fn node(id: &str, kind: NodeKind) -> Node {
        Node {
            id: id.into(),
            kind,
        }
    }

    /// Two disjoint routes between h1 and h2: two hops via s1, four via
    /// s2-s3-s4.
    fn fixture() -> Topology {
        let mut nodes = vec![
            node("h1", NodeKind::EndDevice),
            node("h2", NodeKind::EndDevice),
        ];
        nodes.extend(["s1", "s2", "s3", "s4"].map(|s| node(s, NodeKind::Switch)));
        let links = [
            ("l1", "h1", "s1"),
            ("l2", "s1", "h2"),
            ("l3", "h1", "s2"),
            ("l4", "s2", "s3"),
            ("l5", "s3", "s4"),
            ("l6", "s4", "h2"),
        ]
        .map(|(id, a, b)| Link::new(id, a, b, HOP_NS))
        .to_vec();
        Topology {
            nodes,
            links,
            flows: vec![FlowSpec::new("f1", "h1", "h2")],
        }
    }

    fn mgmt() -> MgmtConfig {
        MgmtConfig {
            detect_delay_ns: 50_000_000,
            compute_delay_ns: 40_000_000,
            push_delay_net_ns: 60_000_000,
            push_delay_dev_ns: 45_000_000,
            registry_refresh_ns: None,
        }
    }

    fn traffic(failure: Option<(&str, u64)>) -> TrafficSpec {
        TrafficSpec {
            period_ns: PERIOD_NS,
            duration_ns: 2_000_000_000,
            failure: failure.map(|(link, at_ns)| FailureSpec {
                link: link.into(),
                at_ns,
            }),
        }
    }

    #[test]
    fn initial_configuration_takes_compute_plus_slowest_push() {
        let report = run_failover_scenario(fixture(), mgmt(), traffic(None)).unwrap();
        let f = report.flow("f1").unwrap();
        assert_eq!(f.path_before(), ["l1", "l2"]);
        assert_eq!(f.deliveries[0].sent_ns, 100_000_000);
        assert_eq!(f.downtime_ns(), Some(0));
        assert!(f.deliveries.iter().all(|d| d.latency_ns == 2 * HOP_NS));
        assert_eq!(f.dropped, 0);
    }

    #[test]
    fn failover_downtime_and_plateaus() {
        let at = 1_000_200_000;
        let report = run_failover_scenario(fixture(), mgmt(), traffic(Some(("l2", at)))).unwrap();
        let f = report.flow("f1").unwrap();
        assert_eq!(f.path_after(), ["l3", "l4", "l5", "l6"]);
        // last old delivery: sent at 1000 ms; first new packet leaves at
        // activation, failure + 150 ms
        let last_old = 1_000_000_000 + 2 * HOP_NS;
        let first_new = at + mgmt().reconfiguration_ns() + 4 * HOP_NS;
        assert_eq!(f.downtime_ns(), Some(first_new - last_old));
        let (old, new): (Vec<&Delivery>, Vec<&Delivery>) =
            f.deliveries.iter().partition(|d| d.route == 0);
        assert!(old.iter().all(|d| d.latency_ns == 2 * HOP_NS));
        assert!(new.iter().all(|d| d.latency_ns == 4 * HOP_NS));
        assert!(f
            .deliveries
            .iter()
            .all(|d| d.recv_ns <= last_old || d.recv_ns >= first_new));
    }

    #[test]
    fn no_delivery_over_failed_link_after_failure() {
        // failure while a packet is in flight on l2
        let at = 1_000_070_000;
        let report = run_failover_scenario(fixture(), mgmt(), traffic(Some(("l2", at)))).unwrap();
        let f = report.flow("f1").unwrap();
        assert!(f
            .deliveries
            .iter()
            .filter(|d| d.route == 0)
            .all(|d| d.recv_ns < at));
        assert!(f.dropped >= 1);
    }

    #[test]
    fn failure_off_path_changes_nothing() {
        let baseline = run_failover_scenario(fixture(), mgmt(), traffic(None)).unwrap();
        let report =
            run_failover_scenario(fixture(), mgmt(), traffic(Some(("l5", 500_000_000)))).unwrap();
        assert_eq!(report.flows, baseline.flows);
        assert!(!report
            .log
            .entries()
            .iter()
            .any(|e| e.kind == "path_computed" && e.t_ns > 500_000_000));
    }

    #[test]
    fn reconfiguration_starts_after_detection() {
        let at = 700_000_000;
        let report = run_failover_scenario(fixture(), mgmt(), traffic(Some(("l1", at)))).unwrap();
        let notice = report
            .log
            .entries()
            .iter()
            .find(|e| e.kind == "failure_notice")
            .unwrap();
        assert_eq!(notice.t_ns, at + mgmt().detect_delay_ns);
    }

    #[test]
    fn registry_matches_live_after_reconfiguration() {
        let report =
            run_failover_scenario(fixture(), mgmt(), traffic(Some(("l2", 900_000_000)))).unwrap();
        assert!(report.registry.same_view(&report.live));
        assert!(!report.registry.topology.link("l2").unwrap().up);
    }

    #[test]
    fn flow_goes_down_without_alternative() {
        let mut t = fixture();
        t.links.retain(|l| l.id == "l1" || l.id == "l2");
        t.nodes
            .retain(|n| ["h1", "h2", "s1"].contains(&n.id.as_str()));
        let report = run_failover_scenario(t, mgmt(), traffic(Some(("l2", 900_000_000)))).unwrap();
        let f = report.flow("f1").unwrap();
        assert_eq!(f.state, FlowState::Down);
        assert_eq!(f.downtime_ns(), None);
        assert!(f.path_after().is_empty());
        assert!(f.deliveries.iter().all(|d| d.recv_ns < 900_000_000));
        assert!(report.registry.same_view(&report.live));
    }

    #[test]
    fn construction_errors() {
        let mut t = fixture();
        t.flows = vec![FlowSpec::new("loop", "h1", "h1")];
        assert_eq!(
            FailoverSim::new(t, mgmt(), traffic(None)).unwrap_err(),
            TsnError::NoPath("loop".into())
        );
        let mut t = fixture();
        t.links.iter_mut().for_each(|l| l.up = false);
        assert_eq!(
            FailoverSim::new(t, mgmt(), traffic(None)).unwrap_err(),
            TsnError::NoPath("f1".into())
        );
        assert_eq!(
            FailoverSim::new(fixture(), mgmt(), traffic(Some(("zz", 1)))).unwrap_err(),
            TsnError::UnknownLink("zz".into())
        );
        let mut t = fixture();
        t.link_mut("l5").unwrap().up = false;
        assert_eq!(
            FailoverSim::new(t, mgmt(), traffic(Some(("l5", 1)))).unwrap_err(),
            TsnError::LinkAlreadyDown("l5".into())
        );
    }

    #[test]
    fn periodic_registry_refresh_sees_failure_before_notice() {
        let mut m = mgmt();
        m.registry_refresh_ns = Some(5_000_000);
        let at = 1_000_200_000;
        let with_refresh = run_failover_scenario(fixture(), m, traffic(Some(("l2", at)))).unwrap();
        let plain = run_failover_scenario(fixture(), mgmt(), traffic(Some(("l2", at)))).unwrap();
        // refresh only changes the registry, never the data plane
        assert_eq!(with_refresh.flows, plain.flows);
        assert!(with_refresh
            .log
            .entries()
            .iter()
            .any(|e| e.kind == "registry_refresh"));
    }

    #[test]
    fn exports_are_canonical() {
        let report =
            run_failover_scenario(fixture(), mgmt(), traffic(Some(("l2", 1_000_200_000)))).unwrap();
        let csv = report.latency_csv();
        assert!(csv.starts_with("t_ns,flow_id,latency_ns\n100100000,f1,100000\n"));
        let summary: serde_json::Value = serde_json::from_str(&report.summary_json()).unwrap();
        assert_eq!(summary["downtime_ns"], 150_300_000);
        assert_eq!(summary["path_before"], json!(["l1", "l2"]));
        assert_eq!(summary["path_after"], json!(["l3", "l4", "l5", "l6"]));
        let again =
            run_failover_scenario(fixture(), mgmt(), traffic(Some(("l2", 1_000_200_000)))).unwrap();
        assert_eq!(report.log.to_jsonl(), again.log.to_jsonl());
        assert_eq!(report.summary_json(), again.summary_json());
    }
}
