//! Random-hyperplane (cosine) LSH.
//!
//! A family holds `H` normal vectors drawn i.i.d. from the standard Gaussian.
//! Each normal yields one bit per QoS vector: 1 when the vector lies in the
//! closed positive half-space, 0 otherwise. For two vectors at angle `θ` a
//! random normal agrees on both with probability `1 - |θ|/π`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{PdsrError, Result};
use crate::rng::rng_from_seed;

/// A platform's set of random hyperplanes.
#[derive(Debug, Clone, PartialEq)]
pub struct LshFamily {
    platform_id: u32,
    dim: usize,
    seed: u64,
    /// `h * dim` components, normal-major.
    normals: Vec<f64>,
}

impl LshFamily {
    /// Samples `h` Gaussian normals of dimension `dim` from `seed`.
    pub fn sample(platform_id: u32, dim: usize, h: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(PdsrError::invalid("LSH dimension must be at least 1"));
        }
        if h == 0 {
            return Err(PdsrError::invalid("LSH family needs at least one hyperplane"));
        }
        let mut rng = rng_from_seed(seed);
        let normals = (0..h * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(LshFamily {
            platform_id,
            dim,
            seed,
            normals,
        })
    }

    pub fn platform_id(&self) -> u32 {
        self.platform_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of hyperplanes `H`.
    pub fn len(&self) -> usize {
        self.normals.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn normal(&self, k: usize) -> &[f64] {
        &self.normals[k * self.dim..(k + 1) * self.dim]
    }

    pub fn normals(&self) -> impl Iterator<Item = &[f64]> {
        self.normals.chunks_exact(self.dim)
    }

    /// Signature of one service's QoS vector under every hyperplane, in family order.
    pub fn hash(&self, service_id: u64, qos: &[f64]) -> Result<ServiceSignature> {
        if qos.len() != self.dim {
            return Err(PdsrError::invalid(format!(
                "QoS vector has dimension {}, family expects {}",
                qos.len(),
                self.dim
            )));
        }
        let bits = self.normals().map(|n| dot(n, qos) >= 0.0).collect();
        Ok(ServiceSignature { service_id, bits })
    }
}

/// The `H`-bit LSH vector of one service on one platform.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServiceSignature {
    pub service_id: u64,
    pub bits: Vec<bool>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One hyperplane bit: `normal · qos >= 0`.
///
/// The zero vector therefore hashes to 1 under every normal.
pub fn hash_bit(normal: &[f64], qos: &[f64]) -> Result<bool> {
    if normal.len() != qos.len() {
        return Err(PdsrError::invalid(format!(
            "normal has dimension {}, QoS vector has {}",
            normal.len(),
            qos.len()
        )));
    }
    Ok(dot(normal, qos) >= 0.0)
}

/// Probability that one random hyperplane puts both vectors on the same side.
pub fn collision_probability(theta: f64) -> Result<f64> {
    check_angle(theta)?;
    Ok(1.0 - theta.abs() / PI)
}

fn check_angle(theta: f64) -> Result<()> {
    if !theta.is_finite() || theta.abs() > PI {
        return Err(PdsrError::invalid(format!("angle {theta} outside [-π, π]")));
    }
    Ok(())
}

/// Probability that two services end up adjacent after `t` indexing rounds,
/// given their per-platform angles and per-platform hyperplane counts.
///
/// `1 - (1 - Π_r (1 - |θ_r|/π)^{H_r})^t`
pub fn edge_probability(angles: &[f64], h_counts: &[usize], t: usize) -> Result<f64> {
    if angles.is_empty() || angles.len() != h_counts.len() {
        return Err(PdsrError::invalid(format!(
            "need one angle per platform: {} angles, {} hyperplane counts",
            angles.len(),
            h_counts.len()
        )));
    }
    let mut per_table = 1.0;
    for (&theta, &h) in angles.iter().zip(h_counts) {
        per_table *= collision_probability(theta)?.powi(h as i32);
    }
    Ok(1.0 - (1.0 - per_table).powi(t as i32))
}

/// Angle between two vectors, `arccos` of the clamped cosine.
///
/// Pairs involving a zero vector get angle 0: they always collide under the
/// `>= 0` rule of [`hash_bit`].
pub fn angle_between(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(PdsrError::invalid("angle between vectors of different dimension"));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0).acos())
}
