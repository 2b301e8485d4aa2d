//! Manufactured one-parameter families of smooth fields and an additive,
//! parameter-independent model bias.

use crate::error::{PbdwError, Result};
use crate::hilbert::{DiscreteSpace, Field, Point};
use crate::reduction::SnapshotSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `sin(μπx₁)e^{x₂} + cos(μπx₂) + μ(2x₁² + e^{x₂})/10`.
    FourierMix,
    /// Two Gaussian bumps travelling on circles as `μ` varies.
    GaussianSourceMix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldSpec {
    pub family: Family,
    pub mu_range: (f64, f64),
    pub bias_amplitude: f64,
}

impl Default for ManifoldSpec {
    fn default() -> Self {
        Self {
            family: Family::FourierMix,
            mu_range: (1.0, 3.0),
            bias_amplitude: 0.0,
        }
    }
}

/// `0.5(e^{−x₁} + 1.3 cos(1.3πx₂))`.
pub fn bias(p: &Point) -> f64 {
    0.5 * ((-p[0]).exp() + 1.3 * (1.3 * std::f64::consts::PI * p[1]).cos())
}

fn fourier_mix(p: &Point, mu: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let (x, y) = (p[0], p[1]);
    (mu * pi * x).sin() * y.exp() + (mu * pi * y).cos() + mu * (2.0 * x * x + y.exp()) / 10.0
}

fn gaussian_source_mix(p: &Point, mu: f64) -> f64 {
    let bump = |c: Point, w: f64| {
        let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
        (-d2 / (2.0 * w * w)).exp()
    };
    bump([0.5 + 0.3 * mu.cos(), 0.5 + 0.3 * mu.sin()], 0.15)
        + 0.5 * bump([0.5 - 0.25 * (2.0 * mu).sin(), 0.5 + 0.25 * (2.0 * mu).cos()], 0.2)
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mu_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(PbdwError::Argument(format!("parameter range [{lo}, {hi}] is empty")));
        }
        if !(self.bias_amplitude >= 0.0) {
            return Err(PbdwError::Argument(format!(
                "bias amplitude must be >= 0, got {}",
                self.bias_amplitude
            )));
        }
        Ok(())
    }

    fn check_mu(&self, mu: f64) -> Result<()> {
        self.validate()?;
        let (lo, hi) = self.mu_range;
        if !(lo..=hi).contains(&mu) {
            return Err(PbdwError::Argument(format!("mu = {mu} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn bk_value(&self, p: &Point, mu: f64) -> f64 {
        match self.family {
            Family::FourierMix => fourier_mix(p, mu),
            Family::GaussianSourceMix => gaussian_source_mix(p, mu),
        }
    }

    /// A member of the model manifold.
    pub fn bk_field(&self, space: &DiscreteSpace, mu: f64) -> Result<Field> {
        self.check_mu(mu)?;
        Ok(space.sample(|p| self.bk_value(p, mu)))
    }

    /// `bk_field + bias_amplitude · bias`.
    pub fn true_field(&self, space: &DiscreteSpace, mu: f64) -> Result<Field> {
        self.check_mu(mu)?;
        let a = self.bias_amplitude;
        Ok(space.sample(|p| self.bk_value(p, mu) + a * bias(p)))
    }

    /// `n` equispaced parameters including both endpoints.
    pub fn training_parameters(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.mu_range;
        match n {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }

    /// `n` equispaced parameters at the midpoints of `n` equal cells.
    pub fn test_parameters(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.mu_range;
        (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect()
    }

    pub fn snapshots(&self, space: &DiscreteSpace, n: usize) -> Result<SnapshotSet> {
        let params = self.training_parameters(n);
        let fields = params.iter().map(|&mu| self.bk_field(space, mu)).collect::<Result<_>>()?;
        SnapshotSet::new(fields, params)
    }
}

/// Number of test parameters used for averaged errors.
pub const N_TEST: usize = 10;
