//! Probe-light protocols and their Gaussian quadrature statistics.
//!
//! Three protocols are modeled:
//!
//! * `Memsl` — M modes sharing one entangled squeezed resource: the scaled
//!   sum (1/sqrt(M)) sum_m b^(m) behaves as a single displaced squeezed mode,
//!   while each individual mode looks nearly classical.
//! * `IndependentSqueezed` — M independent displaced squeezed modes.
//! * `Coherent` — M independent displaced vacuum modes (no squeezing).
//!
//! Quadrature convention: a displaced squeezed mode has
//! mean(b_1) = sqrt(2) alpha, mean(b_2) = 0, Var(b_1) = e^{+2r}/4,
//! Var(b_2) = e^{-2r}/4; vacuum variance is 1/4 in both quadratures. Optical
//! loss is one lumped beam splitter: b -> sqrt(tau) b + sqrt(1-tau) d with d
//! vacuum.

use crate::err::{CoreError, Result};

/// Probe protocol tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Memsl,
    IndependentSqueezed,
    Coherent,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Memsl => "memsl",
            Protocol::IndependentSqueezed => "independent-squeezed",
            Protocol::Coherent => "coherent",
        }
    }
}

/// First and second moments of one mode's two quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureStats {
    pub mean1: f64,
    pub var1: f64,
    pub mean2: f64,
    pub var2: f64,
}

/// A probe-light configuration: protocol, mode count, displaced-squeezed
/// parameters of the source, and the transmission of the lumped loss channel.
///
/// `alpha` and `r` describe the *source* mode(s): the entangled input mode
/// for `Memsl`, each independent mode otherwise. Photon budgets are derived,
/// not stored — see [`ProbeSource::photons_on_sample`].
#[derive(Debug, Clone, Copy)]
pub struct ProbeSource {
    pub protocol: Protocol,
    pub modes: u32,
    pub alpha: f64,
    pub r: f64,
    pub tau: f64,
}

impl ProbeSource {
    pub fn new(protocol: Protocol, modes: u32, alpha: f64, r: f64, tau: f64) -> Result<Self> {
        if modes == 0 {
            return Err(CoreError::InvalidArgument { what: "mode count must be >= 1" });
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(CoreError::InvalidArgument { what: "alpha must be >= 0" });
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(CoreError::InvalidArgument { what: "squeezing r must be >= 0" });
        }
        if protocol == Protocol::Coherent && r != 0.0 {
            return Err(CoreError::InvalidArgument { what: "coherent protocol requires r = 0" });
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(CoreError::DomainError { what: "transmission tau must lie in (0, 1]" });
        }
        Ok(ProbeSource { protocol, modes, alpha, r, tau })
    }

    /// Average photon number reaching the sample, per mode:
    ///
    /// * Memsl: (tau / M)(alpha^2 + sinh^2 r) — the entangled resource is
    ///   shared across the M modes.
    /// * IndependentSqueezed: tau (alpha^2 + sinh^2 r).
    /// * Coherent: tau alpha^2.
    pub fn photons_on_sample(&self) -> f64 {
        let sinh_r = libm::sinh(self.r);
        match self.protocol {
            Protocol::Memsl => {
                self.tau / self.modes as f64 * (self.alpha * self.alpha + sinh_r * sinh_r)
            }
            Protocol::IndependentSqueezed => {
                self.tau * (self.alpha * self.alpha + sinh_r * sinh_r)
            }
            Protocol::Coherent => self.tau * self.alpha * self.alpha,
        }
    }

    /// Statistics of the source mode before loss: the entangled input mode
    /// for Memsl, each independent mode otherwise.
    pub fn source_quadratures(&self) -> QuadratureStats {
        QuadratureStats {
            mean1: libm::sqrt(2.0) * self.alpha,
            var1: libm::exp(2.0 * self.r) / 4.0,
            mean2: 0.0,
            var2: libm::exp(-2.0 * self.r) / 4.0,
        }
    }

    /// Statistics of the composite mode (1/sqrt(M)) sum_m b^(m) for the
    /// entangled protocol — identical to the single source mode by
    /// construction. Errors with `ProtocolMismatch` otherwise.
    pub fn effective_memsl_quadratures(&self) -> Result<QuadratureStats> {
        if self.protocol != Protocol::Memsl {
            return Err(CoreError::ProtocolMismatch {
                what: "effective composite quadratures are defined for the entangled protocol",
            });
        }
        Ok(self.source_quadratures())
    }

    /// Per-physical-mode statistics before loss.
    ///
    /// For the entangled protocol each mode is the sum of its 1/sqrt(M) share
    /// of the source mode and an independent internal fluctuation, so its
    /// variance interpolates between the squeezed and vacuum values:
    /// Var_q(b^(m)) = Var_q(source)/M + (1 - 1/M)/4.
    pub fn per_mode_quadratures(&self) -> QuadratureStats {
        let src = self.source_quadratures();
        match self.protocol {
            Protocol::Memsl => {
                let m = self.modes as f64;
                QuadratureStats {
                    mean1: src.mean1 / libm::sqrt(m),
                    var1: src.var1 / m + (1.0 - 1.0 / m) / 4.0,
                    mean2: 0.0,
                    var2: src.var2 / m + (1.0 - 1.0 / m) / 4.0,
                }
            }
            _ => src,
        }
    }
}

/// The lumped beam-splitter loss channel.
#[derive(Debug, Clone, Copy)]
pub struct LossChannel {
    pub tau: f64,
}

impl LossChannel {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(CoreError::DomainError { what: "transmission tau must lie in (0, 1]" });
        }
        Ok(LossChannel { tau })
    }

    /// Push quadrature statistics through the channel:
    /// mean -> sqrt(tau) mean, variance -> tau Var + (1 - tau)/4.
    pub fn apply(&self, stats: QuadratureStats) -> QuadratureStats {
        let root = libm::sqrt(self.tau);
        let mix = |v: f64| self.tau * v + (1.0 - self.tau) * 0.25;
        QuadratureStats {
            mean1: root * stats.mean1,
            var1: mix(stats.var1),
            mean2: root * stats.mean2,
            var2: mix(stats.var2),
        }
    }
}
