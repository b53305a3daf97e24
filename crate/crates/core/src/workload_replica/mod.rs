//! Microservice chain replica.
//!
//! A [`ServiceChain`] is a tandem of FIFO multi-server stations, one per
//! microservice, with one server per replica. A request's response time is
//! its completion at the last stage minus its arrival at the first; every
//! stage adds its wait plus a service time drawn from that stage's mixture.
//!
//! The same mechanics produce the synthetic ground truth (stages backed by
//! hidden distributions) and the twin (stages backed by fitted models).

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixture::{
    fit_em, interpolate, EmOptions, FitReport, MixtureError, MixtureModel, Trace,
};
use crate::simkit::{entity_stream, Engine, Event, Payload, Scheduler, SimTime};
use crate::stats;

/// Loads closer than this are treated as the same load.
const LOAD_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplicaError {
    #[error("service chain has no stages")]
    NoStages,
    #[error("stage {0:?} has zero replicas")]
    NoReplicas(String),
    #[error("load profile is empty")]
    EmptyProfile,
    #[error("load {load}: {reason}")]
    InvalidLoad { load: f64, reason: String },
    #[error("stage {stage:?} has no model for load {load}")]
    MissingModelForLoad { stage: String, load: f64 },
    #[error("stage {stage:?}: {source}")]
    Model { stage: String, source: MixtureError },
    #[error("no samples at load {0}")]
    EmptySamples(f64),
    #[error("real and twin runs cover different loads")]
    LoadMismatch,
    #[error("fitting stage {stage:?} at load {load}: {source}")]
    Fit {
        stage: String,
        load: f64,
        source: MixtureError,
    },
}

/// Where a stage's service times come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceSource {
    /// One distribution at every load.
    Constant(MixtureModel),
    /// Models at specific loads; loads in between are interpolated.
    PerLoad(Vec<MixtureModel>),
}

impl ServiceSource {
    fn model_at(&self, stage: &str, load: f64) -> Result<MixtureModel, ReplicaError> {
        let models = match self {
            ServiceSource::Constant(model) => return Ok(model.clone()),
            ServiceSource::PerLoad(models) => models,
        };
        if let Some(exact) = models
            .iter()
            .find(|m| (m.load() - load).abs() <= LOAD_EPSILON)
        {
            return Ok(exact.clone());
        }
        interpolate(models, load).map_err(|e| match e {
            MixtureError::ExtrapolationRefused { .. } | MixtureError::NotEnoughModels => {
                ReplicaError::MissingModelForLoad {
                    stage: stage.to_string(),
                    load,
                }
            }
            source => ReplicaError::Model {
                stage: stage.to_string(),
                source,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub service: String,
    pub replicas: u32,
    pub source: ServiceSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceChain {
    stages: Vec<Stage>,
}

impl ServiceChain {
    pub fn new(stages: Vec<Stage>) -> Result<Self, ReplicaError> {
        if stages.is_empty() {
            return Err(ReplicaError::NoStages);
        }
        if let Some(s) = stages.iter().find(|s| s.replicas == 0) {
            return Err(ReplicaError::NoReplicas(s.service.clone()));
        }
        Ok(Self { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Same stages and replica counts, new service sources.
    pub fn with_sources(&self, sources: Vec<ServiceSource>) -> Self {
        assert_eq!(sources.len(), self.stages.len());
        let stages = self
            .stages
            .iter()
            .zip(sources)
            .map(|(s, source)| Stage {
                service: s.service.clone(),
                replicas: s.replicas,
                source,
            })
            .collect();
        Self { stages }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    Poisson,
    /// Evenly spaced at `1 / load`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadPoint {
    /// Requests per second.
    pub load: f64,
    pub duration_s: f64,
    /// Excluded from fitting; the twin interpolates at this load.
    #[serde(default)]
    pub held_out: bool,
}

impl LoadPoint {
    pub fn requests(&self) -> usize {
        (self.load * self.duration_s).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfile {
    pub arrival: Arrival,
    pub loads: Vec<LoadPoint>,
}

impl LoadProfile {
    pub fn validate(&self) -> Result<(), ReplicaError> {
        if self.loads.is_empty() {
            return Err(ReplicaError::EmptyProfile);
        }
        for p in &self.loads {
            let reason = if !(p.load > 0.0 && p.load.is_finite()) {
                Some("load must be > 0")
            } else if !(p.duration_s > 0.0 && p.duration_s.is_finite()) {
                Some("duration must be > 0")
            } else if p.requests() == 0 {
                Some("duration too short for a single request")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(ReplicaError::InvalidLoad {
                    load: p.load,
                    reason: reason.into(),
                });
            }
        }
        Ok(())
    }
}

/// Samples of one simulated load, all in ms and in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadRun {
    pub load: f64,
    pub responses_ms: Vec<f64>,
    /// Service time of every request, per stage.
    pub stage_service_ms: Vec<Vec<f64>>,
}

impl LoadRun {
    pub fn response_trace(&self) -> Trace {
        Trace::new(self.load, self.responses_ms.clone())
    }

    /// Sum of a request's service times over all stages.
    pub fn service_sum_ms(&self, request: usize) -> f64 {
        self.stage_service_ms.iter().map(|s| s[request]).sum()
    }
}

#[derive(Debug, Clone, Copy)]
enum WorkEvent {
    Arrive { request: usize },
    Finish { request: usize, stage: usize },
}

impl Payload for WorkEvent {
    fn kind(&self) -> &'static str {
        match self {
            WorkEvent::Arrive { .. } => "arrive",
            WorkEvent::Finish { .. } => "finish",
        }
    }

    fn detail(&self) -> String {
        match self {
            WorkEvent::Arrive { request } => format!("request={request}"),
            WorkEvent::Finish { request, stage } => format!("request={request} stage={stage}"),
        }
    }
}

fn ms_to_ns(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

struct Station {
    free: u32,
    queue: VecDeque<usize>,
}

struct Tandem<'a> {
    stations: Vec<Station>,
    service_ns: &'a [Vec<u64>],
    arrivals_ns: &'a [u64],
    done_ns: Vec<u64>,
}

impl Tandem<'_> {
    fn enter(&mut self, s: &mut Scheduler<WorkEvent>, request: usize, stage: usize) {
        let station = &mut self.stations[stage];
        if station.free > 0 {
            station.free -= 1;
            Self::serve(s, self.service_ns, request, stage);
        } else {
            station.queue.push_back(request);
        }
    }

    fn serve(s: &mut Scheduler<WorkEvent>, service_ns: &[Vec<u64>], request: usize, stage: usize) {
        s.schedule(
            service_ns[stage][request],
            "station",
            WorkEvent::Finish { request, stage },
        )
        .expect("service completion fits the clock");
    }

    fn handle(&mut self, s: &mut Scheduler<WorkEvent>, event: Event<WorkEvent>) {
        match event.kind {
            WorkEvent::Arrive { request } => {
                if let Some(&next) = self.arrivals_ns.get(request + 1) {
                    s.schedule_at(
                        SimTime::from_ns(next),
                        event.priority,
                        "source",
                        WorkEvent::Arrive {
                            request: request + 1,
                        },
                    )
                    .expect("arrival fits the clock");
                }
                self.enter(s, request, 0);
            }
            WorkEvent::Finish { request, stage } => {
                match self.stations[stage].queue.pop_front() {
                    Some(waiting) => Self::serve(s, self.service_ns, waiting, stage),
                    None => self.stations[stage].free += 1,
                }
                if stage + 1 < self.stations.len() {
                    self.enter(s, request, stage + 1);
                } else {
                    self.done_ns[request] = s.now().as_ns();
                }
            }
        }
    }
}

fn arrival_times_ns(point: &LoadPoint, arrival: Arrival, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let n = point.requests();
    let mean_gap_ns = 1e9 / point.load;
    match arrival {
        Arrival::Uniform => (0..n)
            .map(|i| (i as f64 * mean_gap_ns).round() as u64)
            .collect(),
        Arrival::Poisson => {
            let mut t = 0.0f64;
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    t += -(1.0 - u).ln() * mean_gap_ns;
                    t.round() as u64
                })
                .collect()
        }
    }
}

/// Runs one load of `chain` on its own engine.
fn run_load(
    chain: &ServiceChain,
    point: &LoadPoint,
    arrival: Arrival,
    seed: u64,
    purpose: &str,
) -> Result<LoadRun, ReplicaError> {
    let models: Vec<MixtureModel> = chain
        .stages
        .iter()
        .map(|s| s.source.model_at(&s.service, point.load))
        .collect::<Result<_, _>>()?;
    let label = |what: &str| format!("{purpose}/load={}/{what}", point.load);
    let arrivals_ns =
        arrival_times_ns(point, arrival, &mut entity_stream(seed, &label("arrivals")));
    let n = arrivals_ns.len();
    let stage_service_ms: Vec<Vec<f64>> = models
        .iter()
        .zip(&chain.stages)
        .map(|(model, stage)| {
            let mut rng = entity_stream(seed, &label(&format!("stage={}", stage.service)));
            (0..n).map(|_| model.draw(&mut rng)).collect()
        })
        .collect();
    let service_ns: Vec<Vec<u64>> = stage_service_ms
        .iter()
        .map(|s| s.iter().map(|&ms| ms_to_ns(ms)).collect())
        .collect();

    let mut tandem = Tandem {
        stations: chain
            .stages
            .iter()
            .map(|s| Station {
                free: s.replicas,
                queue: VecDeque::new(),
            })
            .collect(),
        service_ns: &service_ns,
        arrivals_ns: &arrivals_ns,
        done_ns: vec![0; n],
    };
    let mut engine = Engine::without_log();
    engine
        .scheduler()
        .schedule_at(
            SimTime::from_ns(arrivals_ns[0]),
            crate::simkit::priority::DATA,
            "source",
            WorkEvent::Arrive { request: 0 },
        )
        .expect("first arrival fits the clock");
    engine.run(SimTime::MAX, |s, e| tandem.handle(s, e));

    let responses_ms = tandem
        .done_ns
        .iter()
        .zip(&arrivals_ns)
        .map(|(done, arrived)| (done - arrived) as f64 / 1e6)
        .collect();
    Ok(LoadRun {
        load: point.load,
        responses_ms,
        stage_service_ms,
    })
}

fn simulate(
    chain: &ServiceChain,
    profile: &LoadProfile,
    seed: u64,
    purpose: &str,
) -> Result<Vec<LoadRun>, ReplicaError> {
    profile.validate()?;
    profile
        .loads
        .par_iter()
        .map(|point| run_load(chain, point, profile.arrival, seed, purpose))
        .collect()
}

/// Synthetic "real system" traces from a chain backed by hidden
/// distributions.
pub fn generate_ground_truth(
    chain: &ServiceChain,
    profile: &LoadProfile,
    seed: u64,
) -> Result<Vec<LoadRun>, ReplicaError> {
    simulate(chain, profile, seed, "ground_truth")
}

/// Twin runs from a chain backed by fitted models. Draws come from streams
/// independent of [`generate_ground_truth`] with the same seed.
pub fn replicate(
    chain: &ServiceChain,
    profile: &LoadProfile,
    seed: u64,
) -> Result<Vec<LoadRun>, ReplicaError> {
    simulate(chain, profile, seed, "twin")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub load: f64,
    pub mean_real: f64,
    pub p99_real: f64,
    pub mean_twin: f64,
    pub p99_twin: f64,
    pub err_mean: f64,
    pub err_p99: f64,
}

fn relative_error(twin: f64, real: f64) -> f64 {
    (twin - real).abs() / real
}

/// Per-load mean and nearest-rank p99 of both sides, with relative errors.
pub fn compare(real: &[Trace], twin: &[Trace]) -> Result<Vec<RunComparison>, ReplicaError> {
    if real.len() != twin.len() {
        return Err(ReplicaError::LoadMismatch);
    }
    real.iter()
        .zip(twin)
        .map(|(r, t)| {
            if (r.load - t.load).abs() > LOAD_EPSILON {
                return Err(ReplicaError::LoadMismatch);
            }
            if r.samples.is_empty() || t.samples.is_empty() {
                return Err(ReplicaError::EmptySamples(r.load));
            }
            let (mean_real, mean_twin) = (stats::mean(&r.samples), stats::mean(&t.samples));
            let p99_real = stats::nearest_rank(&stats::sorted(&r.samples), 0.99);
            let p99_twin = stats::nearest_rank(&stats::sorted(&t.samples), 0.99);
            Ok(RunComparison {
                load: r.load,
                mean_real,
                p99_real,
                mean_twin,
                p99_twin,
                err_mean: relative_error(mean_twin, mean_real),
                err_p99: relative_error(p99_twin, p99_real),
            })
        })
        .collect()
}

pub fn comparison_csv(rows: &[RunComparison]) -> String {
    let mut out = String::from(
        "load_rps,mean_real_ms,p99_real_ms,mean_twin_ms,p99_twin_ms,err_mean,err_p99\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.load, r.mean_real, r.p99_real, r.mean_twin, r.p99_twin, r.err_mean, r.err_p99
        ));
    }
    out
}

/// One fitted service-time model.
#[derive(Debug, Clone)]
pub struct StageFit {
    pub stage: String,
    pub model: MixtureModel,
    pub report: FitReport,
}

/// Fits every stage's service-time samples at every load that is not held
/// out, and returns the chain rebuilt on those models.
pub fn fit_chain(
    chain: &ServiceChain,
    profile: &LoadProfile,
    ground_truth: &[LoadRun],
    opts: &EmOptions,
) -> Result<(ServiceChain, Vec<StageFit>), ReplicaError> {
    let jobs: Vec<(usize, &LoadRun)> = (0..chain.stages.len())
        .flat_map(|stage| {
            profile
                .loads
                .iter()
                .zip(ground_truth)
                .filter(|(p, _)| !p.held_out)
                .map(move |(_, run)| (stage, run))
        })
        .collect();
    let fits: Vec<StageFit> = jobs
        .par_iter()
        .map(|&(stage, run)| {
            let name = &chain.stages[stage].service;
            let trace = Trace::new(run.load, run.stage_service_ms[stage].clone());
            fit_em(&trace, opts)
                .map(|(model, report)| StageFit {
                    stage: name.clone(),
                    model,
                    report,
                })
                .map_err(|source| ReplicaError::Fit {
                    stage: name.clone(),
                    load: run.load,
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    let sources = chain
        .stages
        .iter()
        .map(|s| {
            let models = fits
                .iter()
                .filter(|f| f.stage == s.service)
                .map(|f| f.model.clone())
                .collect();
            ServiceSource::PerLoad(models)
        })
        .collect();
    Ok((chain.with_sources(sources), fits))
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub comparisons: Vec<RunComparison>,
    pub fits: Vec<StageFit>,
    pub fitted_chain: ServiceChain,
}

/// Ground truth, fit, replicate and compare for one seed.
pub fn run_pipeline(
    hidden: &ServiceChain,
    profile: &LoadProfile,
    seed: u64,
    opts: &EmOptions,
) -> Result<PipelineOutcome, ReplicaError> {
    let real = generate_ground_truth(hidden, profile, seed)?;
    let opts = EmOptions {
        seed,
        ..opts.clone()
    };
    let (fitted_chain, fits) = fit_chain(hidden, profile, &real, &opts)?;
    let twin = replicate(&fitted_chain, profile, seed)?;
    let traces = |runs: &[LoadRun]| runs.iter().map(LoadRun::response_trace).collect::<Vec<_>>();
    let comparisons = compare(&traces(&real), &traces(&twin))?;
    Ok(PipelineOutcome {
        comparisons,
        fits,
        fitted_chain,
    })
}
