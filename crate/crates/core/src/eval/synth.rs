//! Synthetic response-time matrices shaped like WS-DREAM.
//!
//! `log rt = μ + a_u + b_s + ⟨p_u, q_s⟩ + ε`, capped at 20 s, with a fixed
//! fraction of entries missing at random.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::data::RawMatrix;
use crate::error::{PdsrError, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const MAX_RESPONSE_TIME: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthParams {
    pub users: usize,
    pub services: usize,
    /// Latent factor dimension.
    pub rank: usize,
    /// Probability that an entry is missing.
    pub missing: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            users: 339,
            services: 5825,
            rank: 4,
            missing: 0.06,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.services == 0 {
            return Err(PdsrError::invalid("synthetic data needs at least one user and one service"));
        }
        if !(0.0..1.0).contains(&self.missing) {
            return Err(PdsrError::invalid(format!("missing fraction must lie in [0, 1), got {}", self.missing)));
        }
        Ok(())
    }
}

pub fn generate(p: &SynthParams) -> Result<RawMatrix> {
    p.validate()?;
    let mut rng = rng_from_seed(derive_seed(p.seed, &[stream::SYNTHETIC]));
    let std = |s: f64| Normal::new(0.0, s).expect("positive deviation");
    let (user_bias, service_bias, noise) = (std(0.5), std(0.8), std(0.3));
    let factor = std(0.5 / (p.rank.max(1) as f64).sqrt());
    let a: Vec<f64> = (0..p.users).map(|_| user_bias.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..p.services).map(|_| service_bias.sample(&mut rng)).collect();
    let pu: Vec<f64> = (0..p.users * p.rank).map(|_| factor.sample(&mut rng)).collect();
    let qs: Vec<f64> = (0..p.services * p.rank).map(|_| factor.sample(&mut rng)).collect();
    let mut values = Vec::with_capacity(p.users * p.services);
    for u in 0..p.users {
        for s in 0..p.services {
            let dot: f64 = (0..p.rank).map(|k| pu[u * p.rank + k] * qs[s * p.rank + k]).sum();
            let rt = (-0.5 + a[u] + b[s] + dot + noise.sample(&mut rng)).exp().min(MAX_RESPONSE_TIME);
            values.push(if rng.random_bool(p.missing) { f64::NAN } else { rt });
        }
    }
    RawMatrix::new((0..p.users as u64).collect(), p.services, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_range_and_determinism() {
        let p = SynthParams {
            users: 20,
            services: 50,
            ..SynthParams::default()
        };
        let m = generate(&p).unwrap();
        assert_eq!((m.n_users(), m.n_items), (20, 50));
        assert!(m.observed().all(|v| v > 0.0 && v <= MAX_RESPONSE_TIME));
        let missing = m.values.iter().filter(|v| v.is_nan()).count();
        assert!(missing > 0 && missing < 200);
        let again = generate(&p).unwrap();
        assert_eq!(m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), again.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate(&SynthParams { missing: 1.0, ..SynthParams::default() }).is_err());
        assert!(generate(&SynthParams { users: 0, ..SynthParams::default() }).is_err());
    }
}
