//! Gaussian mixtures of response times.
//!
//! A [`MixtureModel`] is fitted per request load by EM ([`fit_em`]) and can be
//! sampled, queried for percentiles, and interpolated between fitted loads.
//! Values are milliseconds when the model describes response times.

mod em;
mod trace;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

pub use em::{fit_em, EmOptions, FitReport, STDDEV_FLOOR};
pub use trace::{read_traces_csv, write_traces_csv, Trace, TraceError};

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("mixture has no components")]
    Empty,
    #[error("component {index}: {reason}")]
    InvalidComponent { index: usize, reason: String },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} is {value}; samples must be finite and > 0")]
    InvalidSample { index: usize, value: f64 },
    #[error("component count must be at least 1")]
    ZeroComponents,
    #[error("every restart produced a collapsed component")]
    DegenerateComponent,
    #[error("interpolation needs at least two models")]
    NotEnoughModels,
    #[error("two models share load {0}")]
    DuplicateLoad(f64),
    #[error("load {load} outside fitted range [{min}, {max}]")]
    ExtrapolationRefused { load: f64, min: f64, max: f64 },
    #[error("bracketing models have {lower} and {upper} components")]
    ComponentCountMismatch { lower: usize, upper: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub w: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Component {
    pub fn new(w: f64, mu: f64, sigma: f64) -> Self {
        Self { w, mu, sigma }
    }

    fn cdf(&self, x: f64) -> f64 {
        if self.sigma == 0.0 {
            return if x >= self.mu { 1.0 } else { 0.0 };
        }
        0.5 * erfc(-(x - self.mu) / self.sigma * FRAC_1_SQRT_2)
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - 0.5 * (2.0 * PI).ln()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    load: f64,
    components: Vec<Component>,
}

/// Weighted Gaussian mixture, components kept in ascending order of mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MixtureModel {
    components: Vec<Component>,
    load: f64,
}

impl TryFrom<RawModel> for MixtureModel {
    type Error = MixtureError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        MixtureModel::new(raw.load, raw.components)
    }
}

impl MixtureModel {
    /// Weights must be positive and sum to one; means finite and positive;
    /// standard deviations finite and non-negative. A zero standard deviation
    /// is a point mass.
    pub fn new(load: f64, mut components: Vec<Component>) -> Result<Self, MixtureError> {
        if components.is_empty() {
            return Err(MixtureError::Empty);
        }
        for (index, c) in components.iter().enumerate() {
            let reason = if !(c.w > 0.0 && c.w.is_finite()) {
                Some(format!("weight {} must be > 0", c.w))
            } else if !(c.mu > 0.0 && c.mu.is_finite()) {
                Some(format!("mean {} must be finite and > 0", c.mu))
            } else if !(c.sigma >= 0.0 && c.sigma.is_finite()) {
                Some(format!("stddev {} must be finite and >= 0", c.sigma))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(MixtureError::InvalidComponent { index, reason });
            }
        }
        let total: f64 = components.iter().map(|c| c.w).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(MixtureError::WeightSum(total));
        }
        components.sort_by(|a, b| a.mu.total_cmp(&b.mu).then(a.sigma.total_cmp(&b.sigma)));
        Ok(Self { components, load })
    }

    /// Single point mass.
    pub fn deterministic(load: f64, value: f64) -> Result<Self, MixtureError> {
        Self::new(load, vec![Component::new(1.0, value, 0.0)])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn load(&self) -> f64 {
        self.load
    }

    pub fn with_load(mut self, load: f64) -> Self {
        self.load = load;
        self
    }

    /// Analytic mean `sum(w * mu)` of the untruncated mixture.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.w * c.mu).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.components
            .iter()
            .map(|c| c.w * (c.sigma * c.sigma + (c.mu - mean).powi(2)))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.w * c.cdf(x)).sum()
    }

    /// Log density; `-inf` where only point masses live elsewhere.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.sigma > 0.0)
            .map(|c| c.w.ln() + c.ln_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    /// One strictly positive draw: pick a component by weight, draw from its
    /// normal, redraw while the value is not positive.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let last = self.components.len() - 1;
        let component = self
            .components
            .iter()
            .enumerate()
            .find(|(i, c)| {
                acc += c.w;
                u < acc || *i == last
            })
            .map(|(_, c)| c)
            .expect("non-empty");
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = component.mu + component.sigma * z;
            if x > 0.0 {
                return x;
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Smallest `q` with `cdf(q) >= p`, by bisection on the analytic CDF.
    pub fn percentile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0, "percentile needs 0 < p < 1, got {p}");
        let mut lo = self
            .components
            .iter()
            .map(|c| c.mu - 40.0 * c.sigma)
            .fold(f64::INFINITY, f64::min)
            - 1.0;
        let mut hi = self
            .components
            .iter()
            .map(|c| c.mu + 40.0 * c.sigma)
            .fold(f64::NEG_INFINITY, f64::max)
            + 1.0;
        loop {
            let mid = lo + (hi - lo) / 2.0;
            if mid <= lo || mid >= hi {
                return hi;
            }
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    /// Canonical JSON `{"components":[{"mu":..,"sigma":..,"w":..}],"load":..}`.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("model serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Model at `load`, linearly interpolated between the two fitted loads that
/// bracket it. Components are paired in ascending order of mean and weights
/// renormalized. An exact load match returns that model unchanged.
pub fn interpolate(models: &[MixtureModel], load: f64) -> Result<MixtureModel, MixtureError> {
    if models.len() < 2 {
        return Err(MixtureError::NotEnoughModels);
    }
    let mut sorted: Vec<&MixtureModel> = models.iter().collect();
    sorted.sort_by(|a, b| a.load.total_cmp(&b.load));
    if let Some(pair) = sorted.windows(2).find(|w| w[0].load == w[1].load) {
        return Err(MixtureError::DuplicateLoad(pair[0].load));
    }
    let (min, max) = (sorted[0].load, sorted[sorted.len() - 1].load);
    if !(load >= min && load <= max) {
        return Err(MixtureError::ExtrapolationRefused { load, min, max });
    }
    if let Some(exact) = sorted.iter().find(|m| m.load == load) {
        return Ok((*exact).clone());
    }
    let upper_idx = sorted
        .iter()
        .position(|m| m.load > load)
        .expect("load < max");
    let (lower, upper) = (sorted[upper_idx - 1], sorted[upper_idx]);
    if lower.components.len() != upper.components.len() {
        return Err(MixtureError::ComponentCountMismatch {
            lower: lower.components.len(),
            upper: upper.components.len(),
        });
    }
    let t = (load - lower.load) / (upper.load - lower.load);
    let lerp = |a: f64, b: f64| a + t * (b - a);
    let mut components: Vec<Component> = lower
        .components
        .iter()
        .zip(&upper.components)
        .map(|(a, b)| Component::new(lerp(a.w, b.w), lerp(a.mu, b.mu), lerp(a.sigma, b.sigma)))
        .collect();
    let total: f64 = components.iter().map(|c| c.w).sum();
    for c in &mut components {
        c.w /= total;
    }
    MixtureModel::new(load, components)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_component() -> MixtureModel {
        MixtureModel::new(
            10.0,
            vec![
                Component::new(0.7, 40.0, 4.0),
                Component::new(0.3, 90.0, 10.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn construction_checks_invariants() {
        assert_eq!(MixtureModel::new(1.0, vec![]), Err(MixtureError::Empty));
        assert!(matches!(
            MixtureModel::new(1.0, vec![Component::new(0.5, 10.0, 1.0)]),
            Err(MixtureError::WeightSum(_))
        ));
        assert!(matches!(
            MixtureModel::new(1.0, vec![Component::new(1.0, 10.0, -1.0)]),
            Err(MixtureError::InvalidComponent { index: 0, .. })
        ));
        assert!(matches!(
            MixtureModel::new(1.0, vec![Component::new(1.0, -3.0, 1.0)]),
            Err(MixtureError::InvalidComponent { index: 0, .. })
        ));
        let m = MixtureModel::new(
            1.0,
            vec![
                Component::new(0.5, 20.0, 1.0),
                Component::new(0.5, 10.0, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(m.components()[0].mu, 10.0);
    }

    #[test]
    fn degenerate_component_samples_its_mean() {
        let m = MixtureModel::deterministic(1.0, 100.0).unwrap();
        assert!(m.sample(1000, 3).iter().all(|&x| x == 100.0));
        assert_eq!(m.percentile(0.99), 100.0);
        assert_eq!(m.percentile(0.01), 100.0);
    }

    #[test]
    fn sampling_is_seeded() {
        let m = two_component();
        assert_eq!(m.sample(100, 9), m.sample(100, 9));
        assert_ne!(m.sample(100, 9), m.sample(100, 10));
    }

    #[test]
    fn draws_are_strictly_positive() {
        // most of the mass of this component lies below zero
        let m = MixtureModel::new(1.0, vec![Component::new(1.0, 1.0, 5.0)]).unwrap();
        assert!(m.sample(10_000, 1).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn empirical_mean_matches_analytic_mean() {
        let m = two_component();
        let xs = m.sample(100_000, 5);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(
            (mean - m.mean()).abs() / m.mean() < 0.01,
            "{mean} vs {}",
            m.mean()
        );
    }

    #[test]
    fn median_of_symmetric_normal() {
        let m = MixtureModel::new(1.0, vec![Component::new(1.0, 100.0, 10.0)]).unwrap();
        assert!((m.percentile(0.5) - 100.0).abs() < 1e-9);
        // p97.5 of a normal sits 1.959964 sigma above the mean
        assert!((m.percentile(0.975) - 119.599_64).abs() < 1e-4);
    }

    #[test]
    fn percentile_hits_target_cdf() {
        let m = two_component();
        for p in [0.01, 0.25, 0.5, 0.9, 0.99, 0.999] {
            let q = m.percentile(p);
            assert!((m.cdf(q) - p).abs() <= 1e-6, "p={p} q={q} cdf={}", m.cdf(q));
        }
    }

    #[test]
    fn percentile_matches_sampling_oracle() {
        let m = two_component();
        let mut xs = m.sample(1_000_000, 77);
        xs.sort_by(f64::total_cmp);
        let empirical = xs[(0.99 * xs.len() as f64).ceil() as usize - 1];
        let analytic = m.percentile(0.99);
        assert!(
            (empirical - analytic).abs() / analytic < 0.005,
            "{empirical} vs {analytic}"
        );
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let m = two_component();
        let text = m.to_json();
        assert_eq!(
            text,
            "{\"components\":[{\"mu\":40.0,\"sigma\":4.0,\"w\":0.7},{\"mu\":90.0,\"sigma\":10.0,\"w\":0.3}],\"load\":10.0}"
        );
        let back = MixtureModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
        assert!(MixtureModel::from_json("{\"load\":1,\"components\":[]}").is_err());
    }

    fn single(load: f64, mu: f64, sigma: f64) -> MixtureModel {
        MixtureModel::new(load, vec![Component::new(1.0, mu, sigma)]).unwrap()
    }

    #[test]
    fn interpolation_endpoint_and_midpoint() {
        let models = [single(10.0, 100.0, 5.0), single(20.0, 200.0, 15.0)];
        assert_eq!(interpolate(&models, 10.0).unwrap(), models[0]);
        assert_eq!(interpolate(&models, 20.0).unwrap(), models[1]);
        let mid = interpolate(&models, 15.0).unwrap();
        assert_eq!(mid.components(), &[Component::new(1.0, 150.0, 10.0)]);
        assert_eq!(mid.load(), 15.0);
    }

    #[test]
    fn interpolation_pairs_components_by_mean() {
        let a = MixtureModel::new(
            0.0,
            vec![
                Component::new(0.4, 30.0, 2.0),
                Component::new(0.6, 10.0, 1.0),
            ],
        )
        .unwrap();
        let b = MixtureModel::new(
            4.0,
            vec![
                Component::new(0.2, 14.0, 3.0),
                Component::new(0.8, 50.0, 6.0),
            ],
        )
        .unwrap();
        let m = interpolate(&[b, a], 1.0).unwrap();
        let c = m.components();
        assert!((c[0].w - 0.5).abs() < 1e-12);
        assert!((c[0].mu - 11.0).abs() < 1e-12);
        assert!((c[1].mu - 35.0).abs() < 1e-12);
        assert!((c[1].sigma - 3.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_errors() {
        let models = [single(10.0, 100.0, 5.0), single(20.0, 200.0, 15.0)];
        assert!(matches!(
            interpolate(&models, 25.0),
            Err(MixtureError::ExtrapolationRefused { .. })
        ));
        assert_eq!(
            interpolate(&models[..1], 10.0),
            Err(MixtureError::NotEnoughModels)
        );
        assert_eq!(
            interpolate(&[single(10.0, 1.0, 1.0), single(10.0, 2.0, 1.0)], 10.0),
            Err(MixtureError::DuplicateLoad(10.0))
        );
        let two = MixtureModel::new(
            20.0,
            vec![
                Component::new(0.5, 10.0, 1.0),
                Component::new(0.5, 20.0, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(
            interpolate(&[single(10.0, 10.0, 1.0), two], 15.0),
            Err(MixtureError::ComponentCountMismatch { lower: 1, upper: 2 })
        );
    }
}
