// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Double-gamma haemodynamic response, SPM convention by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrfParams {
    pub peak_shape: f64,
    pub undershoot_shape: f64,
    pub rate: f64,
    pub undershoot_ratio: f64,
    /// Kernel is zero from this time on.
    pub support_s: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self { peak_shape: 6.0, undershoot_shape: 16.0, rate: 1.0, undershoot_ratio: 1.0 / 6.0, support_s: 32.0 }
    }
}

/// Gamma density `b^a t^(a-1) e^(-bt) / Γ(a)`.
fn gamma_pdf(t: f64, a: f64, b: f64) -> f64 {
    if t <= 0.0 {
        return if t == 0.0 && a == 1.0 { b } else { 0.0 };
    }
    (a * b.ln() + (a - 1.0) * t.ln() - b * t - ln_gamma(a)).exp()
}

impl HrfParams {
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.support_s {
            return 0.0;
        }
        gamma_pdf(t, self.peak_shape, self.rate) - self.undershoot_ratio * gamma_pdf(t, self.undershoot_shape, self.rate)
    }

    /// Kernel sampled every `dt` seconds over its support.
    pub fn sample(&self, dt: f64) -> Vec<f64> {
        let n = (self.support_s / dt).ceil() as usize;
        (0..n).map(|i| self.eval(i as f64 * dt)).collect()
    }
}

/// Canonical response with default parameters.
pub fn hrf(t: f64) -> f64 {
    HrfParams::default().eval(t)
}
