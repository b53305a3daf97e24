use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mixture::MixtureModel;

const PROB_TOLERANCE: f64 = 1e-9;

/// Duration of a DAG activity, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DurationDist {
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Discrete { points: Vec<(f64, f64)> },
    Mixture { model: MixtureModel },
}

impl DurationDist {
    /// Reason the parameters are invalid, if they are.
    pub fn check(&self) -> Result<(), String> {
        let non_negative = |v: f64, what: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be finite and >= 0, got {v}"))
            }
        };
        match self {
            DurationDist::Deterministic { value } => non_negative(*value, "value"),
            DurationDist::Uniform { lo, hi } => {
                non_negative(*lo, "lo")?;
                non_negative(*hi, "hi")?;
                if lo > hi {
                    return Err(format!("lo {lo} exceeds hi {hi}"));
                }
                Ok(())
            }
            DurationDist::Exponential { rate } => {
                if rate.is_finite() && *rate > 0.0 {
                    Ok(())
                } else {
                    Err(format!("rate must be > 0, got {rate}"))
                }
            }
            DurationDist::Discrete { points } => {
                if points.is_empty() {
                    return Err("discrete distribution has no points".into());
                }
                for &(value, prob) in points {
                    non_negative(value, "value")?;
                    if !(0.0..=1.0).contains(&prob) {
                        return Err(format!("probability {prob} outside [0, 1]"));
                    }
                }
                let total: f64 = points.iter().map(|p| p.1).sum();
                if (total - 1.0).abs() > PROB_TOLERANCE {
                    return Err(format!("probabilities sum to {total}"));
                }
                Ok(())
            }
            // mixture draws are positive by construction
            DurationDist::Mixture { .. } => Ok(()),
        }
    }

    /// Support points when the distribution is finite-discrete.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            DurationDist::Deterministic { value } => Some(vec![(*value, 1.0)]),
            DurationDist::Discrete { points } => Some(points.clone()),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DurationDist::Deterministic { value } => *value,
            DurationDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            DurationDist::Exponential { rate } => 1.0 / rate,
            DurationDist::Discrete { points } => points.iter().map(|(v, p)| v * p).sum(),
            DurationDist::Mixture { model } => model.mean(),
        }
    }

    /// One draw; exponential by inverse CDF, mixtures component-then-normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DurationDist::Deterministic { value } => *value,
            DurationDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            DurationDist::Exponential { rate } => {
                let u: f64 = rng.random();
                -(1.0 - u).ln() / rate
            }
            DurationDist::Discrete { points } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(value, prob) in points {
                    acc += prob;
                    if u < acc {
                        return value;
                    }
                }
                points.last().expect("checked non-empty").0
            }
            DurationDist::Mixture { model } => model.draw(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_checks() {
        assert!(DurationDist::Uniform { lo: 2.0, hi: 1.0 }.check().is_err());
        assert!(DurationDist::Exponential { rate: 0.0 }.check().is_err());
        assert!(DurationDist::Deterministic { value: -1.0 }.check().is_err());
        assert!(DurationDist::Discrete {
            points: vec![(1.0, 0.5)]
        }
        .check()
        .is_err());
        assert!(DurationDist::Discrete {
            points: vec![(1.0, 0.5), (2.0, 0.5)]
        }
        .check()
        .is_ok());
    }

    #[test]
    fn exponential_mean_by_inverse_cdf() {
        let d = DurationDist::Exponential { rate: 4.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.25).abs() < 0.005, "{mean}");
    }

    #[test]
    fn uniform_stays_in_range() {
        let d = DurationDist::Uniform { lo: 1.0, hi: 3.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..10_000)
            .map(|_| d.sample(&mut rng))
            .all(|x| (1.0..3.0).contains(&x)));
    }

    #[test]
    fn json_shape() {
        let d = DurationDist::Discrete {
            points: vec![(1.0, 0.5), (3.0, 0.5)],
        };
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(
            text,
            "{\"kind\":\"discrete\",\"points\":[[1.0,0.5],[3.0,0.5]]}"
        );
        assert_eq!(serde_json::from_str::<DurationDist>(&text).unwrap(), d);
    }
}
