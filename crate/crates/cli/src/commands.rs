use std::path::{Path, PathBuf};

use gdtn_core::mixture::{fit_em, read_traces_csv, EmOptions};
use gdtn_core::stochastic_dag::{transform, StochasticDag};
use gdtn_core::tsn_mgmt::run_failover_scenario;
use gdtn_core::workload_replica::{comparison_csv, run_pipeline};
use serde_json::{json, Value};

use crate::scenario::Scenario;
use crate::{CliError, Format, Outcome};

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn canonical(value: &Value) -> String {
    let mut text = serde_json::to_string(value).expect("values serialize");
    text.push('\n');
    text
}

fn required<T>(section: Option<T>, name: &'static str) -> Result<T, CliError> {
    section.ok_or(CliError::MissingSection(name))
}

/// Lists every problem found in the scenario's sections, one per line.
pub fn validate(path: &Path, format: Format) -> Result<Outcome, CliError> {
    let scenario = load_scenario(path)?;
    let mut problems: Vec<String> = Vec::new();
    if let Some(doc) = scenario.twin_graph {
        match doc.into_graph() {
            Ok(graph) => problems.extend(graph.validate().iter().map(ToString::to_string)),
            Err(e) => problems.push(format!("twin_graph: {e}")),
        }
    }
    if let Some(topology) = &scenario.topology {
        if let Err(e) = topology.validate() {
            problems.push(format!("topology: {e}"));
        }
    }
    if let Some(chain) = &scenario.chain {
        if let Err(e) = chain.hidden_chain() {
            problems.push(format!("chain: {e}"));
        }
    }
    if let Some(profile) = &scenario.profile {
        if let Err(e) = profile.validate() {
            problems.push(format!("profile: {e}"));
        }
    }
    let stdout = match format {
        Format::Json => canonical(&json!({ "valid": problems.is_empty(), "violations": problems })),
        Format::Csv if problems.is_empty() => "valid\n".to_string(),
        Format::Csv => problems.iter().map(|p| format!("{p}\n")).collect(),
    };
    Ok(Outcome {
        stdout,
        files: Vec::new(),
        code: if problems.is_empty() { 0 } else { 1 },
    })
}

fn scenario_dag(scenario: Scenario) -> Result<StochasticDag, CliError> {
    let doc = required(scenario.twin_graph, "twin_graph")?;
    let durations = required(scenario.durations, "durations")?;
    let graph = doc.into_graph().map_err(CliError::domain)?;
    transform(&graph, &durations.key, &durations.table()).map_err(CliError::domain)
}

pub struct EvaluateArgs {
    pub n: u64,
    pub seed: u64,
    pub deadline: Option<f64>,
    pub exact: bool,
}

pub fn evaluate(path: &Path, args: &EvaluateArgs, format: Format) -> Result<Outcome, CliError> {
    let dag = scenario_dag(load_scenario(path)?)?;
    if args.exact {
        let dist = dag.completion_exact().map_err(CliError::domain)?;
        let stdout = match format {
            Format::Json => {
                let mean: f64 = dist.iter().map(|(v, p)| v * p).sum();
                let mut value = json!({ "distribution": dist, "mean": mean });
                if let Some(d) = args.deadline {
                    let prob: f64 = dist.iter().filter(|(v, _)| *v <= d).map(|(_, p)| p).sum();
                    value["deadline"] = json!(d);
                    value["deadline_prob"] = json!(prob);
                }
                canonical(&value)
            }
            Format::Csv => {
                let mut out = String::from("value,probability\n");
                for (v, p) in &dist {
                    out.push_str(&format!("{v:.6},{p:.6}\n"));
                }
                out
            }
        };
        return Ok(Outcome::print(stdout));
    }
    let stats = dag.completion_mc(args.n, args.seed, args.deadline);
    let stdout = match format {
        Format::Json => format!("{}\n", stats.to_json()),
        Format::Csv => {
            let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
            format!(
                "samples,mean,variance,min,max,p50,p95,p99,deadline,deadline_prob\n\
                 {},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                stats.samples,
                stats.mean,
                stats.variance,
                stats.min,
                stats.max,
                stats.p50,
                stats.p95,
                stats.p99,
                opt(stats.deadline),
                opt(stats.deadline_prob)
            )
        }
    };
    Ok(Outcome::print(stdout))
}

pub fn export_dag(path: &Path) -> Result<Outcome, CliError> {
    let text = scenario_dag(load_scenario(path)?)?.export();
    Ok(Outcome {
        stdout: text.clone(),
        files: vec![("dag.json".into(), text)],
        code: 0,
    })
}

pub fn failover(path: &Path, format: Format) -> Result<Outcome, CliError> {
    let scenario = load_scenario(path)?;
    let topology = required(scenario.topology, "topology")?;
    let mgmt = required(scenario.mgmt, "mgmt")?;
    let traffic = required(scenario.traffic, "traffic")?;
    let report = run_failover_scenario(topology, mgmt, traffic).map_err(CliError::domain)?;
    let summary = report.summary_json();
    let latency = report.latency_csv();
    let stdout = match format {
        Format::Json => summary.clone(),
        Format::Csv => latency.clone(),
    };
    Ok(Outcome {
        stdout,
        files: vec![
            ("latency.csv".into(), latency),
            ("summary.json".into(), summary),
            ("events.jsonl".into(), report.log.to_jsonl()),
        ],
        code: 0,
    })
}

/// Runs ground truth, fitting, replication and comparison for each seed.
/// `seed` overrides the scenario's seed list.
pub fn replicate(path: &Path, seed: Option<u64>, format: Format) -> Result<Outcome, CliError> {
    let scenario = load_scenario(path)?;
    let chain = required(scenario.chain, "chain")?;
    let profile = required(scenario.profile, "profile")?;
    let seeds = match seed {
        Some(s) => vec![s],
        None => required(scenario.seeds, "seeds")?,
    };
    let hidden = chain.hidden_chain().map_err(CliError::domain)?;

    let mut files = Vec::new();
    let mut per_seed = Vec::new();
    let mut csv = String::from(
        "seed,load_rps,mean_real_ms,p99_real_ms,mean_twin_ms,p99_twin_ms,err_mean,err_p99\n",
    );
    for &s in &seeds {
        let outcome =
            run_pipeline(&hidden, &profile, s, &chain.em_options(s)).map_err(CliError::domain)?;
        let dir = PathBuf::from(format!("seed-{s}"));
        let table = comparison_csv(&outcome.comparisons);
        for line in table.lines().skip(1) {
            csv.push_str(&format!("{s},{line}\n"));
        }
        files.push((dir.join("comparison.csv"), table));
        for fit in &outcome.fits {
            let name = format!("{}_load-{}.json", fit.stage, fit.model.load());
            files.push((
                dir.join("models").join(name),
                format!("{}\n", fit.model.to_json()),
            ));
        }
        let loads: Vec<Value> = outcome
            .comparisons
            .iter()
            .zip(&profile.loads)
            .map(|(row, point)| {
                let mut v = serde_json::to_value(row).expect("rows serialize");
                v["held_out"] = json!(point.held_out);
                v
            })
            .collect();
        per_seed.push(json!({ "seed": s, "loads": loads }));
    }
    let stdout = match format {
        Format::Json => canonical(&json!({ "seeds": per_seed })),
        Format::Csv => csv,
    };
    Ok(Outcome {
        stdout,
        files,
        code: 0,
    })
}

/// Fits one mixture per load of a `load_rps,response_ms` trace file.
pub fn fit(path: &Path, k: usize, seed: u64, format: Format) -> Result<Outcome, CliError> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let traces = read_traces_csv(file).map_err(|e| CliError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let opts = EmOptions::new(k, seed);
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut csv = String::from("load_rps,component,w,mu,sigma\n");
    for trace in &traces {
        let (model, report) = fit_em(trace, &opts)
            .map_err(|e| CliError::Domain(format!("load {}: {e}", trace.load)))?;
        files.push((
            PathBuf::from(format!("model_load-{}.json", trace.load)),
            format!("{}\n", model.to_json()),
        ));
        for (i, c) in model.components().iter().enumerate() {
            csv.push_str(&format!(
                "{:.6},{i},{:.6},{:.6},{:.6}\n",
                trace.load, c.w, c.mu, c.sigma
            ));
        }
        rows.push(json!({
            "model": serde_json::to_value(&model).expect("models serialize"),
            "iterations": report.iterations(),
            "converged": report.converged,
            "log_likelihood": report.final_log_likelihood(),
        }));
    }
    let stdout = match format {
        Format::Json => canonical(&json!({ "fits": rows })),
        Format::Csv => csv,
    };
    Ok(Outcome {
        stdout,
        files,
        code: 0,
    })
}
