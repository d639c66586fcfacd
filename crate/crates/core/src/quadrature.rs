//! Sinc quadrature for the Kato representation of `A^{-α}`.
//!
//! With `ζ = 1/log(1/h)`, nodes `z_j = ζ j` for `-Z₋ ≤ j ≤ Z₊` and weights
//! `w_j = ζ sin(απ)/π · e^{(1-α) z_j}`,
//!
//! ```text
//! A^{-α} b ≈ Σ_j w_j (e^{z_j} + A)^{-1} b
//! Z₊ = ⌈π² / (4 α ζ²)⌉,   Z₋ = ⌈π² / (4 (1-α) ζ²)⌉
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent at which the training shift set is built.
pub const TRAINING_ALPHA: f64 = 0.5;

// Above this node value e^z is evaluated in log space.
const LOG_SPACE_NODE: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SincRule {
    alpha: f64,
    h: f64,
    zeta: f64,
    z_minus: usize,
    z_plus: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SincRule {
    pub fn build(alpha: f64, h: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fractional exponent must lie in (0, 1), got {alpha}"
            )));
        }
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mesh parameter must lie in (0, 1), got {h}"
            )));
        }
        let zeta = 1.0 / (1.0 / h).ln();
        let z2 = zeta * zeta;
        let z_plus = (PI * PI / (4.0 * alpha * z2)).ceil() as usize;
        let z_minus = (PI * PI / (4.0 * (1.0 - alpha) * z2)).ceil() as usize;
        let scale = zeta * (alpha * PI).sin() / PI;
        let nodes: Vec<f64> = (-(z_minus as i64)..=z_plus as i64)
            .map(|j| zeta * j as f64)
            .collect();
        let weights = nodes
            .iter()
            .map(|&z| scale * ((1.0 - alpha) * z).exp())
            .collect();
        Ok(Self {
            alpha,
            h,
            zeta,
            z_minus,
            z_plus,
            nodes,
            weights,
        })
    }

    /// Rule used to fix the training shifts, `build(0.5, h)`.
    pub fn training(h: f64) -> Result<Self> {
        Self::build(TRAINING_ALPHA, h)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn z_minus(&self) -> usize {
        self.z_minus
    }

    pub fn z_plus(&self) -> usize {
        self.z_plus
    }

    /// Number of nodes, `Z₋ + Z₊ + 1`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integer node indices `-Z₋..=Z₊`, aligned with [`nodes`](Self::nodes).
    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        -(self.z_minus as i64)..=self.z_plus as i64
    }

    /// Shifts `e^{z_j}` of the resolvents.
    pub fn shifts(&self) -> Vec<f64> {
        self.nodes.iter().map(|z| z.exp()).collect()
    }

    /// `Σ_j w_j / (λ + e^{z_j})`, the scalar image of `λ^{-α}`.
    pub fn scalar_fractional(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue must be positive and finite, got {lambda}"
            )));
        }
        Ok(self.fractional_factor(lambda))
    }

    /// Unchecked quadrature sum; callers guarantee `λ + e^{z_j} > 0`.
    pub fn fractional_factor(&self, lambda: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| self.term(z, w, lambda))
            .sum()
    }

    #[inline]
    fn term(&self, z: f64, w: f64, lambda: f64) -> f64 {
        if z < LOG_SPACE_NODE {
            w / (lambda + z.exp())
        } else {
            // w/(λ + e^z) = exp(log w - z - log(1 + λ e^{-z}))
            let log_w = (self.zeta * (self.alpha * PI).sin() / PI).ln() + (1.0 - self.alpha) * z;
            (log_w - z - (lambda * (-z).exp()).ln_1p()).exp()
        }
    }
}
