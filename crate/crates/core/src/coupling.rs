//! Active–passive exchange term `b(z) = r·B(z)` and its growth and
//! Lipschitz certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingVariant {
    /// `B(z) = tanh z`.
    Saturating,
    /// `B(z) = z / (1 + |z|)^{1−σ}`.
    PowerClamped,
}

/// Config fragment `{"variant": ..., "r": ..., "sigma": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    #[serde(default = "default_variant")]
    pub variant: CouplingVariant,
    pub r: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_variant() -> CouplingVariant {
    CouplingVariant::Saturating
}

fn default_sigma() -> f64 {
    0.5
}

/// Sampling used by the certificates: `z = ±z_k` on a log grid plus 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            z_min: 1e-8,
            z_max: 1e8,
            points: 20_001,
        }
    }
}

impl SampleSpec {
    fn validate(&self) -> Result<()> {
        if !(self.z_min > 0.0 && self.z_max > self.z_min && self.points >= 2) {
            return Err(Error::Validation(format!("invalid sample spec {self:?}")));
        }
        Ok(())
    }

    /// Positive samples in increasing order.
    pub fn positive(&self) -> impl Iterator<Item = f64> + '_ {
        let (l0, l1) = (self.z_min.ln(), self.z_max.ln());
        let n = self.points - 1;
        (0..=n).map(move |k| (l0 + (l1 - l0) * k as f64 / n as f64).exp())
    }

    /// Symmetric samples `−z_max … −z_min, 0, z_min … z_max`, increasing.
    pub fn symmetric(&self) -> Vec<f64> {
        let pos: Vec<f64> = self.positive().collect();
        let mut all: Vec<f64> = pos.iter().rev().map(|z| -z).collect();
        all.push(0.0);
        all.extend(pos);
        all
    }
}

/// Certified exchange function `b(z) = r·B(z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingFunction {
    variant: CouplingVariant,
    r: f64,
    sigma: f64,
    c_hat: f64,
    lipschitz: f64,
}

impl CouplingFunction {
    /// Builds the function and certifies its growth and Lipschitz constants on the default sampling.
    pub fn new(variant: CouplingVariant, r: f64, sigma: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Validation(format!(
                "coupling rate r must be positive and finite, got {r}"
            )));
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::Validation(format!(
                "coupling exponent sigma must lie in (0, 1), got {sigma}"
            )));
        }
        let mut cf = Self {
            variant,
            r,
            sigma,
            c_hat: f64::NAN,
            lipschitz: f64::NAN,
        };
        let spec = SampleSpec::default();
        cf.c_hat = cf.certify_growth(sigma, &spec)?;
        cf.lipschitz = cf.certify_lipschitz(&spec)?;
        Ok(cf)
    }

    pub fn from_spec(spec: &CouplingSpec) -> Result<Self> {
        Self::new(spec.variant, spec.r, spec.sigma)
    }

    pub fn spec(&self) -> CouplingSpec {
        CouplingSpec {
            variant: self.variant,
            r: self.r,
            sigma: self.sigma,
        }
    }

    pub fn variant(&self) -> CouplingVariant {
        self.variant
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn c_hat(&self) -> f64 {
        self.c_hat
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Same shape with another rate; certificates scale linearly in `r`.
    pub fn with_rate(&self, r: f64) -> Result<Self> {
        Self::new(self.variant, r, self.sigma)
    }

    fn shape(&self, z: f64) -> f64 {
        match self.variant {
            CouplingVariant::Saturating => z.tanh(),
            CouplingVariant::PowerClamped => z / (1.0 + z.abs()).powf(1.0 - self.sigma),
        }
    }

    fn shape_slope(&self, z: f64) -> f64 {
        match self.variant {
            CouplingVariant::Saturating => {
                let t = z.tanh();
                1.0 - t * t
            }
            CouplingVariant::PowerClamped => {
                let m = z.abs();
                (1.0 + m).powf(self.sigma - 2.0) * (1.0 + self.sigma * m)
            }
        }
    }

    pub fn eval_b(&self, z: f64) -> f64 {
        self.r * self.shape(z)
    }

    /// `b'(z) ≥ 0`; used as the frozen slope in the Picard linearization.
    pub fn eval_b_prime(&self, z: f64) -> f64 {
        self.r * self.shape_slope(z)
    }

    /// `sup |b(z)| / |z|^σ` over the samples and the analytic limits.
    pub fn certify_growth(&self, sigma: f64, spec: &SampleSpec) -> Result<f64> {
        spec.validate()?;
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::Validation(format!(
                "growth exponent must lie in (0, 1], got {sigma}"
            )));
        }
        // z → 0: |B(z)| ~ |z|, so the ratio → 0 for σ < 1 and → r for σ = 1.
        let at_zero = if sigma == 1.0 { self.r } else { 0.0 };
        // z → ∞: tanh saturates; the clamped power grows like |z|^{σ_b}.
        let at_infinity = match self.variant {
            CouplingVariant::Saturating => 0.0,
            CouplingVariant::PowerClamped => {
                if sigma > self.sigma {
                    0.0
                } else if sigma == self.sigma {
                    self.r
                } else {
                    f64::INFINITY
                }
            }
        };
        let mut sup = at_zero.max(at_infinity);
        for z in spec.positive() {
            // b is odd, so the positive half covers both signs.
            sup = sup.max(self.eval_b(z).abs() / z.powf(sigma));
        }
        if !sup.is_finite() {
            return Err(Error::Validation(format!(
                "growth ratio |b(z)|/|z|^{sigma} is unbounded for {:?} with sigma_b = {}",
                self.variant, self.sigma
            )));
        }
        Ok(sup)
    }

    /// `sup |b(z₁) − b(z₂)| / |z₁ − z₂|` over neighbouring sample pairs and
    /// the analytic slope at 0 (the maximum of `b'` for both variants).
    pub fn certify_lipschitz(&self, spec: &SampleSpec) -> Result<f64> {
        spec.validate()?;
        let zs = spec.symmetric();
        let mut sup = self.eval_b_prime(0.0);
        for w in zs.windows(2) {
            let q = (self.eval_b(w[1]) - self.eval_b(w[0])).abs() / (w[1] - w[0]);
            sup = sup.max(q);
        }
        Ok(sup)
    }
}
