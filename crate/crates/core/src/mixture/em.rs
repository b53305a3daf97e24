use rand::Rng;

use super::{Component, MixtureError, MixtureModel, Trace};
use crate::simkit::entity_stream;

/// Lower bound on fitted standard deviations (ms).
pub const STDDEV_FLOOR: f64 = 1e-3;

const LLOYD_ITERATIONS: usize = 10;
/// A component holding fewer effective samples than this while its variance
/// falls under the floor has collapsed onto a point.
const COLLAPSE_MASS: f64 = 2.0;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the log-likelihood improves by less than this.
    pub tol: f64,
    pub restarts: usize,
}

impl EmOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 500,
            tol: 1e-6,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Log-likelihood before each M-step of the winning restart; the last
    /// entry belongs to the returned parameters.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Index of the winning restart.
    pub restart: usize,
    /// Final log-likelihood of every restart, `None` for collapsed ones.
    pub restart_log_likelihoods: Vec<Option<f64>>,
}

impl FitReport {
    pub fn iterations(&self) -> usize {
        self.log_likelihood.len().saturating_sub(1)
    }

    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().expect("at least one evaluation")
    }
}

struct Run {
    components: Vec<Component>,
    trace: Vec<f64>,
    converged: bool,
}

/// Fits a `k`-component mixture to the trace by expectation-maximization.
///
/// Each restart seeds means from spread quantiles, refines them with a few
/// Lloyd (k-means) passes, then iterates EM until the log-likelihood gain
/// drops under `tol` or `max_iter` is reached. The restart with the highest
/// final log-likelihood wins.
pub fn fit_em(trace: &Trace, opts: &EmOptions) -> Result<(MixtureModel, FitReport), MixtureError> {
    if opts.k == 0 {
        return Err(MixtureError::ZeroComponents);
    }
    let needed = 10 * opts.k;
    if trace.samples.len() < needed {
        return Err(MixtureError::TooFewSamples {
            needed,
            got: trace.samples.len(),
        });
    }
    if let Some((index, &value)) = trace
        .samples
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && **x > 0.0))
    {
        return Err(MixtureError::InvalidSample { index, value });
    }
    let mut sorted = trace.samples.clone();
    sorted.sort_by(f64::total_cmp);

    let restarts = opts.restarts.max(1);
    let mut best: Option<(usize, Run)> = None;
    let mut finals = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let init = initial_components(&sorted, opts.k, r, opts.seed);
        match run_em(&trace.samples, init, opts) {
            Some(run) => {
                let ll = *run.trace.last().expect("evaluated");
                finals.push(Some(ll));
                let better = best
                    .as_ref()
                    .is_none_or(|(_, b)| ll > *b.trace.last().expect("evaluated"));
                if better {
                    best = Some((r, run));
                }
            }
            None => finals.push(None),
        }
    }
    let (restart, run) = best.ok_or(MixtureError::DegenerateComponent)?;
    let mut components = run.components;
    // guard against drift in the weight sum
    let total: f64 = components.iter().map(|c| c.w).sum();
    for c in &mut components {
        c.w /= total;
    }
    let model = MixtureModel::new(trace.load, components)?;
    Ok((
        model,
        FitReport {
            log_likelihood: run.trace,
            converged: run.converged,
            restart,
            restart_log_likelihoods: finals,
        },
    ))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

fn initial_components(sorted: &[f64], k: usize, restart: usize, seed: u64) -> Vec<Component> {
    let mut rng = entity_stream(seed, &format!("em-restart-{restart}"));
    let mut centers: Vec<f64> = (0..k)
        .map(|j| {
            let offset = if restart == 0 {
                0.5
            } else {
                rng.random::<f64>()
            };
            quantile(sorted, (j as f64 + offset) / k as f64)
        })
        .collect();

    // Lloyd passes over sorted data: clusters are contiguous index ranges
    let mut bounds = vec![0usize; k + 1];
    for _ in 0..LLOYD_ITERATIONS {
        centers.sort_by(f64::total_cmp);
        bounds[0] = 0;
        bounds[k] = sorted.len();
        for j in 1..k {
            let cut = 0.5 * (centers[j - 1] + centers[j]);
            bounds[j] = sorted.partition_point(|&x| x < cut).max(bounds[j - 1]);
        }
        for j in 0..k {
            let cluster = &sorted[bounds[j]..bounds[j + 1]];
            if !cluster.is_empty() {
                centers[j] = cluster.iter().sum::<f64>() / cluster.len() as f64;
            }
        }
    }

    let n = sorted.len() as f64;
    let global_sd = stddev(sorted).max(STDDEV_FLOOR);
    let mut components: Vec<Component> = (0..k)
        .map(|j| {
            let cluster = &sorted[bounds[j]..bounds[j + 1]];
            let (w, sigma) = if cluster.len() >= 2 {
                (cluster.len() as f64 / n, stddev(cluster).max(STDDEV_FLOOR))
            } else {
                (1.0 / k as f64, global_sd)
            };
            Component::new(w, centers[j], sigma)
        })
        .collect();
    let total: f64 = components.iter().map(|c| c.w).sum();
    for c in &mut components {
        c.w /= total;
    }
    components
}

fn stddev(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Neumaier-compensated running sum; keeps the log-likelihood of large traces
/// accurate enough to observe EM's monotonicity.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

struct Sufficient {
    mass: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
    shift: Vec<f64>,
}

/// E-step: log-likelihood of `components` and responsibility-weighted
/// moments, taken about each component's current mean.
fn expectation(xs: &[f64], components: &[Component]) -> (f64, Sufficient) {
    let k = components.len();
    let log_norm: Vec<f64> = components
        .iter()
        .map(|c| c.w.ln() - c.sigma.ln() - LN_SQRT_2PI)
        .collect();
    let inv_var: Vec<f64> = components
        .iter()
        .map(|c| 0.5 / (c.sigma * c.sigma))
        .collect();
    let mut stats = Sufficient {
        mass: vec![0.0; k],
        first: vec![0.0; k],
        second: vec![0.0; k],
        shift: components.iter().map(|c| c.mu).collect(),
    };
    let mut ll = CompensatedSum::default();
    let mut logp = vec![0.0; k];
    for &x in xs {
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            let d = x - components[j].mu;
            logp[j] = log_norm[j] - d * d * inv_var[j];
            max = max.max(logp[j]);
        }
        let mut denom = 0.0;
        for lp in logp.iter_mut() {
            *lp = (*lp - max).exp();
            denom += *lp;
        }
        ll.add(max + denom.ln());
        let inv = 1.0 / denom;
        for (j, p) in logp.iter().enumerate() {
            let r = p * inv;
            let d = x - stats.shift[j];
            stats.mass[j] += r;
            stats.first[j] += r * d;
            stats.second[j] += r * d * d;
        }
    }
    (ll.value(), stats)
}

/// M-step. Returns `None` when a component has collapsed.
fn maximization(n: usize, stats: &Sufficient) -> Option<Vec<Component>> {
    let n = n as f64;
    (0..stats.mass.len())
        .map(|j| {
            let mass = stats.mass[j];
            if mass.is_nan() || mass <= 0.0 {
                return None;
            }
            let offset = stats.first[j] / mass;
            let var = (stats.second[j] / mass - offset * offset).max(0.0);
            let sd = var.sqrt();
            if sd < STDDEV_FLOOR && mass < COLLAPSE_MASS {
                return None;
            }
            Some(Component::new(
                mass / n,
                stats.shift[j] + offset,
                sd.max(STDDEV_FLOOR),
            ))
        })
        .collect()
}

fn run_em(xs: &[f64], mut components: Vec<Component>, opts: &EmOptions) -> Option<Run> {
    let mut trace = Vec::new();
    let mut converged = false;
    for iter in 0..=opts.max_iter {
        let (ll, stats) = expectation(xs, &components);
        if !ll.is_finite() {
            return None;
        }
        let gain = trace.last().map(|prev| ll - prev);
        trace.push(ll);
        if gain.is_some_and(|g| g < opts.tol) {
            converged = true;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        components = maximization(xs.len(), &stats)?;
    }
    Some(Run {
        components,
        trace,
        converged,
    })
}
