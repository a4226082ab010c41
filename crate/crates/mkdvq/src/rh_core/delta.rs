//! The scalar conjugation factor `delta`.
//!
//! Similarity variant: `delta(k) = ((k-k0)/(k+k0))^{i nu} e^{chi(k)}` with
//! `chi = -(1/2 pi i) int psi(s)/(s-k) ds` and `psi` equal to
//! `ln(1-|r|^2)` outside `[-k0, k0]` and frozen at its value at `k0`
//! inside. The power uses the principal logarithm of the Möbius ratio, so
//! its cut is `[-k0, k0]`.
//!
//! Self-similar variant: `delta = e^{chi}` with `psi = ln(1-|r|^2)` on all
//! of the real line.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::asymptotics::pv_cauchy_with_breaks;
use crate::quad::integrate_with_breaks;
use crate::spectral::ReflectionData;
use crate::{C64, I};

use super::RhError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaVariant {
    Similarity { k0: f64 },
    SelfSimilar,
}

/// Evaluators for `delta` and `chi`.
#[derive(Clone)]
pub struct ConjugationDelta {
    pub variant: DeltaVariant,
    pub nu: f64,
    /// Cut-off beyond which `psi` is treated as zero.
    pub support: f64,
    pub quad_tol: f64,
    /// Branch convention for the Möbius power.
    pub branch: &'static str,
    psi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ConjugationDelta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConjugationDelta")
            .field("variant", &self.variant)
            .field("nu", &self.nu)
            .field("support", &self.support)
            .finish()
    }
}

pub fn build_delta(refl: &ReflectionData, variant: DeltaVariant, quad_tol: f64) -> Result<ConjugationDelta, RhError> {
    let support = refl.support.max(match variant {
        DeltaVariant::Similarity { k0 } => 2.0 * k0,
        DeltaVariant::SelfSimilar => 1.0,
    });
    let r = refl.clone();
    let (psi, nu): (Arc<dyn Fn(f64) -> f64 + Send + Sync>, f64) = match variant {
        DeltaVariant::Similarity { k0 } => {
            assert!(k0 > 0.0, "k0 must be positive");
            let psi0 = r.psi(k0);
            (Arc::new(move |s: f64| if s.abs() > k0 { r.psi(s) } else { psi0 }), -psi0 / (2.0 * PI))
        }
        DeltaVariant::SelfSimilar => (Arc::new(move |s: f64| r.psi(s)), 0.0),
    };
    Ok(ConjugationDelta {
        variant,
        nu,
        support,
        quad_tol,
        branch: "principal log of (k-k0)/(k+k0), cut on [-k0,k0]",
        psi,
    })
}

impl ConjugationDelta {
    pub fn psi(&self, s: f64) -> f64 {
        (self.psi)(s)
    }

    fn breaks(&self) -> Vec<f64> {
        let l = self.support;
        let mut b = vec![-l, l];
        if let DeltaVariant::Similarity { k0 } = self.variant {
            b.push(-k0);
            b.push(k0);
        }
        b
    }

    /// `chi(k)` for `k` off the real axis.
    pub fn chi(&self, k: C64) -> Result<C64, RhError> {
        assert!(k.im != 0.0, "chi is evaluated off the real axis");
        let l = self.support;
        let c = k.re.clamp(-l, l);
        let pc = self.psi(c);
        let mut b = self.breaks();
        b.push(c);
        let v = integrate_with_breaks(
            |s| C64::new(self.psi(s) - pc, 0.0) / (s - k),
            &b,
            self.quad_tol,
            self.quad_tol,
        )?;
        let log_term = (C64::new(l, 0.0) - k).ln() - (C64::new(-l, 0.0) - k).ln();
        Ok(-(v + log_term * pc) / (2.0 * PI * I))
    }

    /// Boundary value `chi_+` (`side = 1`) or `chi_-` (`side = -1`) on the
    /// real axis.
    pub fn chi_boundary(&self, x: f64, side: f64) -> Result<C64, RhError> {
        let l = self.support.max(2.0 * x.abs() + 1.0);
        let mut b = self.breaks();
        b.retain(|v| v.abs() < l);
        let pv = pv_cauchy_with_breaks(&|s| self.psi(s), x, l, self.quad_tol, &b)
            .map_err(|e| RhError::InvalidContour(e.to_string()))?;
        Ok(C64::new(-side * 0.5 * self.psi(x), 0.0) - C64::new(pv, 0.0) / (2.0 * PI * I))
    }

    fn mobius_power(&self, k: C64) -> C64 {
        match self.variant {
            DeltaVariant::Similarity { k0 } if self.nu != 0.0 => {
                let w = (k - k0) / (k + k0);
                (I * self.nu * w.ln()).exp()
            }
            _ => C64::new(1.0, 0.0),
        }
    }

    /// `delta(k)` for `k` off the real axis.
    pub fn delta(&self, k: C64) -> Result<C64, RhError> {
        Ok(self.mobius_power(k) * self.chi(k)?.exp())
    }

    /// Boundary values of `delta` on the real axis. For the similarity
    /// variant only `|x| > k0` or `|x| < k0` away from the endpoints is
    /// meaningful.
    pub fn delta_boundary(&self, x: f64, side: f64) -> Result<C64, RhError> {
        let chi = self.chi_boundary(x, side)?;
        let mp = match self.variant {
            DeltaVariant::Similarity { k0 } if self.nu != 0.0 => {
                // ratio is negative on (-k0, k0): arg is +pi from above, -pi from below
                let w = (x - k0) / (x + k0);
                let lg = if w > 0.0 {
                    C64::new(w.ln(), 0.0)
                } else {
                    C64::new((-w).ln(), side * PI)
                };
                (I * self.nu * lg).exp()
            }
            _ => C64::new(1.0, 0.0),
        };
        Ok(mp * chi.exp())
    }
}
