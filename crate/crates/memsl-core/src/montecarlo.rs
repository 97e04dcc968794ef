//! Seeded stochastic simulation of the measured image quadrature, phase
//! reconstruction from the noisy coefficients, and empirical error
//! estimation.
//!
//! Two sampling models are provided:
//!
//! * **coefficient-space** (default): per trial and per mode, Gaussian
//!   quadrature pairs (b_1, b_2) are drawn from the protocol statistics and
//!   folded into basis coefficients e_{j2} = b_2 T_j + b_1 U_j. One (b_1,
//!   b_2) pair is shared by every order j of a mode, so the synthesized field
//!   carries spatially *correlated* noise — the physical model.
//! * **pointwise**: each image-grid point draws an independent Gaussian with
//!   the analytic mean and variance. Cross-point correlations are
//!   deliberately absent; this is a figure-reproduction convenience, limited
//!   to lossless runs, and its output cannot be fed to [`reconstruct`].
//!
//! # Randomness
//!
//! All draws come from ChaCha12 keyed by the master seed. Word-stream ids
//! partition the draws: stream `trial << 20` serves trial-level draws (the
//! shared entangled pair; pointwise grid draws) and stream
//! `(trial << 20) | (mode + 1)` serves mode-level draws, so changing the
//! trial count or mode count never reshuffles earlier draws. Within a mode
//! stream the order is: intrinsic pair (v_1, v_2), then — only when tau < 1 —
//! the loss-vacuum pair (d_1, d_2). Gaussians come from a fixed-consumption
//! Box-Muller transform (two u64 per pair). With `zero_noise` set, no
//! generator is consumed at all and every draw is zero.

use alloc::vec;
use alloc::vec::Vec;
use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;

use crate::err::{CoreError, Result};
use crate::geometry::{default_image_grid, DomainTag, FieldSamples};
use crate::light::{ProbeSource, Protocol};
use crate::mathx::{gaussian_pair, linspace, simpson, uniform_spacing};
use crate::pswf::{sinc_kernel, SlepianBasis, NoiseKernelTable, DEFAULT_NOISE_TRUNCATION};

/// Amplitude of the bundled test object.
pub const STANDARD_OBJECT_AMPLITUDE: f64 = 0.02;
/// Lobe centers of the bundled test object.
pub const STANDARD_OBJECT_CENTERS: [f64; 3] = [-0.75, 0.10, 0.67];
/// Lobe widths (Gaussian sigma) of the bundled test object.
pub const STANDARD_OBJECT_WIDTHS: [f64; 3] = [0.17, 0.23, 0.12];
/// Relative lobe heights of the bundled test object.
pub const STANDARD_OBJECT_HEIGHTS: [f64; 3] = [1.0, 0.65, 0.60];

/// A phase object: φ(s') sampled on a uniform grid covering exactly [-1, 1].
///
/// The grid must be ascending, uniformly spaced, of odd length (so composite
/// Simpson quadrature applies directly), with endpoints at ±1.
#[derive(Debug, Clone)]
pub struct PhaseObject {
    pub grid: Vec<f64>,
    pub phase: Vec<f64>,
    pub max_abs: f64,
}

impl PhaseObject {
    pub fn new(grid: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        if grid.len() != phase.len() {
            return Err(CoreError::InvalidArgument { what: "grid and phase lengths differ" });
        }
        if grid.len() < 3 || grid.len() % 2 == 0 {
            return Err(CoreError::GridTooCoarse { points: grid.len(), needed: 3 });
        }
        uniform_spacing(&grid)?;
        let tol = 1e-12;
        if libm::fabs(grid[0] + 1.0) > tol || libm::fabs(grid[grid.len() - 1] - 1.0) > tol {
            return Err(CoreError::DomainError {
                what: "phase object grid must cover exactly [-1, 1]",
            });
        }
        let mut max_abs = 0.0_f64;
        for &p in phase.iter() {
            if !p.is_finite() {
                return Err(CoreError::InvalidArgument { what: "phase values must be finite" });
            }
            max_abs = max_abs.max(libm::fabs(p));
        }
        Ok(PhaseObject { grid, phase, max_abs })
    }

    /// Spacing of the (validated, uniform) grid.
    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Integral of the phase over [-1, 1] by composite Simpson quadrature.
    pub fn integral(&self) -> f64 {
        simpson(&self.phase, self.spacing()).unwrap_or(0.0)
    }
}

/// The bundled asymmetric three-lobe test object on a uniform grid of
/// `points` samples (odd, >= 3): a sum of three Gaussian lobes of unequal
/// heights, centers, and widths, scaled small enough to sit comfortably
/// inside the small-phase regime.
pub fn standard_test_object(points: usize) -> Result<PhaseObject> {
    let grid = linspace(-1.0, 1.0, points);
    let mut phase = Vec::with_capacity(points);
    for &s in grid.iter() {
        let mut v = 0.0;
        for k in 0..3 {
            let z = (s - STANDARD_OBJECT_CENTERS[k]) / STANDARD_OBJECT_WIDTHS[k];
            v += STANDARD_OBJECT_HEIGHTS[k] * libm::exp(-0.5 * z * z);
        }
        phase.push(STANDARD_OBJECT_AMPLITUDE * v);
    }
    PhaseObject::new(grid, phase)
}

/// Outcome of the small-phase regime check.
#[derive(Debug, Clone, Copy)]
pub struct SmallPhase {
    pub ok: bool,
    /// How many times the bound exceeds the phase integral (infinite for a
    /// zero integral).
    pub margin: f64,
    /// |∫ φ ds| over [-1, 1].
    pub phase_integral: f64,
    /// The bound e^{-r} / |∫ ψ_0 ds|.
    pub bound: f64,
}

/// Conservative sufficient condition for the linearized (small-phase)
/// treatment: |∫_{-1}^{1} φ ds| < e^{-r} / |∫_{-1}^{1} ψ_0 ds|.
///
/// Violations are reported, not fatal — callers are expected to warn and
/// proceed, since the approximation degrades gracefully.
pub fn check_small_phase(object: &PhaseObject, basis: &SlepianBasis, r: f64) -> Result<SmallPhase> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(CoreError::InvalidArgument { what: "squeezing r must be >= 0" });
    }
    // ∫ ψ_0 over [-1, 1] = sqrt(lambda_0) * ∫ φ_0 = sqrt(lambda_0) * T_0.
    let psi0_integral = libm::sqrt(basis.lambda(0)?) * basis.coupling_signed(0)?;
    let lhs = libm::fabs(object.integral());
    let bound = libm::exp(-r) / libm::fabs(psi0_integral);
    let margin = if lhs == 0.0 { f64::INFINITY } else { bound / lhs };
    Ok(SmallPhase { ok: lhs < bound, margin, phase_integral: lhs, bound })
}

/// Deterministic mean image field plus the small-phase gate outcome.
#[derive(Debug, Clone)]
pub struct MeanImage {
    pub field: FieldSamples,
    pub small_phase_ok: bool,
    pub margin: f64,
}

/// Mean-field amplitude multiplying φ(s') inside the imaging kernel:
/// sqrt(2 tau / M) alpha for the entangled protocol (the displacement is
/// shared), sqrt(2 tau) alpha per independent mode otherwise.
fn mean_scale(src: &ProbeSource) -> f64 {
    match src.protocol {
        Protocol::Memsl => libm::sqrt(2.0 * src.tau / src.modes as f64) * src.alpha,
        Protocol::IndependentSqueezed | Protocol::Coherent => {
            libm::sqrt(2.0 * src.tau) * src.alpha
        }
    }
}

/// Mean measured image quadrature ⟨e_2(s)⟩ on `image_grid`: the band-limiting
/// kernel applied to the phase profile, scaled by the protocol's displaced
/// amplitude. Small-phase status is returned alongside rather than aborting.
pub fn mean_image_quadrature(
    object: &PhaseObject,
    src: &ProbeSource,
    basis: &SlepianBasis,
    image_grid: &[f64],
) -> Result<MeanImage> {
    let gate = check_small_phase(object, basis, src.r)?;
    let scale = mean_scale(src);
    let c = basis.c();
    let h = object.spacing();
    let mut values = Vec::with_capacity(image_grid.len());
    let mut integrand = vec![0.0_f64; object.grid.len()];
    for &s in image_grid.iter() {
        for (i, &sp) in object.grid.iter().enumerate() {
            integrand[i] = sinc_kernel(c, s - sp) * object.phase[i];
        }
        values.push(scale * simpson(&integrand, h)?);
    }
    let field = FieldSamples::new(image_grid.to_vec(), values, DomainTag::ImagePlane)?;
    Ok(MeanImage { field, small_phase_ok: gate.ok, margin: gate.margin })
}

/// Analytic per-point variance of the averaged image quadrature for a single
/// shot, from the even-order noise kernel G:
///
/// * entangled at the optimal squeezing (e^{-2r} (1 + 2MN) = 1 within 1e-6):
///   G(s) / (4M (1 + 2MN));
/// * coherent: G(s) / (4M).
///
/// Defined only for lossless runs; the independent-squeezed protocol has no
/// pointwise law here (its line-integrated error is covered by the
/// optimizer module).
pub fn pointwise_variance(src: &ProbeSource, kernel: &NoiseKernelTable) -> Result<FieldSamples> {
    if src.tau != 1.0 {
        return Err(CoreError::InvalidArgument {
            what: "pointwise variance is defined only for a lossless run (tau = 1)",
        });
    }
    let m = src.modes as f64;
    let scale = match src.protocol {
        Protocol::Coherent => 1.0 / (4.0 * m),
        Protocol::Memsl => {
            let sinh_r = libm::sinh(src.r);
            let mn = src.alpha * src.alpha + sinh_r * sinh_r;
            let x = libm::exp(-2.0 * src.r);
            if libm::fabs(x * (1.0 + 2.0 * mn) - 1.0) > 1e-6 {
                return Err(CoreError::InvalidArgument {
                    what: "entangled pointwise variance assumes the optimal squeezing \
                           e^{-2r} = 1/(1 + 2MN)",
                });
            }
            1.0 / (4.0 * m * (1.0 + 2.0 * mn))
        }
        Protocol::IndependentSqueezed => {
            return Err(CoreError::ProtocolMismatch {
                what: "no pointwise variance law for independent squeezed light",
            });
        }
    };
    let values: Vec<f64> = kernel.values.iter().map(|g| g * scale).collect();
    FieldSamples::new(kernel.grid.clone(), values, DomainTag::ImagePlane)
}

/// Which sampling model a simulation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    CoefficientSpace,
    Pointwise,
}

/// Simulation options beyond the core (object, source, trials, seed) set.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub mode: SimMode,
    /// Force every Gaussian draw to zero: the output collapses to the exact
    /// mean path (used by consistency tests).
    pub zero_noise: bool,
    /// Highest basis order sampled in coefficient mode; defaults to the
    /// basis's trusted range.
    pub orders: Option<usize>,
    /// Image grid for pointwise mode; defaults to the standard image window.
    pub image_grid: Option<Vec<f64>>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            mode: SimMode::CoefficientSpace,
            zero_noise: false,
            orders: None,
            image_grid: None,
        }
    }
}

/// Accumulated statistics of a simulated measurement run.
///
/// Coefficient mode stores the trial mean and trial covariance of the
/// mode-summed coefficients S_j = sum_m e_{j2}^(m) (j = 0..=orders); field
/// statistics on any grid follow exactly from these by linearity, see
/// [`SimulatedMeasurement::synthesized_field_stats`]. Pointwise mode stores
/// per-grid-point mean and sample variance directly. No per-trial samples
/// are retained, so trial counts can be large.
#[derive(Debug, Clone)]
pub struct SimulatedMeasurement {
    pub source: ProbeSource,
    pub c: f64,
    pub seed: u64,
    pub trials: u64,
    pub mode: SimMode,
    /// Highest sampled order (coefficient mode).
    pub orders: usize,
    /// Trial mean of S_j, j = 0..=orders (coefficient mode).
    pub coef_mean: Vec<f64>,
    /// Sample covariance of S_j across trials, (orders+1)^2 row-major,
    /// per shot (coefficient mode; zero when trials < 2).
    pub coef_cov: Vec<f64>,
    /// Image grid (pointwise mode).
    pub grid: Vec<f64>,
    /// Trial mean of e_2(s) per grid point (pointwise mode).
    pub point_mean: Vec<f64>,
    /// Per-shot sample variance of e_2(s) per grid point (pointwise mode).
    pub point_var: Vec<f64>,
    /// Copy of the simulated object, for reconstruction comparisons.
    pub object_grid: Vec<f64>,
    pub object_phase: Vec<f64>,
}

/// Signed flat-pump couplings T_j and object couplings U_j = ∫ φ ψ_j ds for
/// j = 0..=orders.
fn coupling_tables(
    basis: &SlepianBasis,
    object: &PhaseObject,
    orders: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = object.spacing();
    let mut t = Vec::with_capacity(orders + 1);
    let mut u = Vec::with_capacity(orders + 1);
    let mut integrand = vec![0.0_f64; object.grid.len()];
    for j in 0..=orders {
        t.push(basis.coupling_signed(j)?);
        for (i, &s) in object.grid.iter().enumerate() {
            integrand[i] = object.phase[i] * basis.eval_inside(j, s)?;
        }
        u.push(simpson(&integrand, h)?);
    }
    Ok((t, u))
}

/// Mean of the summed first quadrature, ⟨sum_m b_1^(m)⟩ — the normalization
/// of the coefficient estimator: alpha sqrt(2 tau M) for the entangled
/// protocol, alpha M sqrt(2 tau) otherwise.
fn summed_b1_mean(src: &ProbeSource) -> f64 {
    let m = src.modes as f64;
    match src.protocol {
        Protocol::Memsl => src.alpha * libm::sqrt(2.0 * src.tau * m),
        Protocol::IndependentSqueezed | Protocol::Coherent => {
            src.alpha * m * libm::sqrt(2.0 * src.tau)
        }
    }
}

/// Variances of the summed quadratures (sum_m b_q^(m)) after loss — identical
/// in form for every protocol: Var(sum b_2) = (M/4)(tau e^{-2r} + 1 - tau)
/// and Var(sum b_1) = (M/4)(tau e^{+2r} + 1 - tau).
fn summed_quadrature_variances(src: &ProbeSource) -> (f64, f64) {
    let m = src.modes as f64;
    let v1 = m / 4.0 * (src.tau * libm::exp(2.0 * src.r) + 1.0 - src.tau);
    let v2 = m / 4.0 * (src.tau * libm::exp(-2.0 * src.r) + 1.0 - src.tau);
    (v1, v2)
}

fn psi_at(basis: &SlepianBasis, j: usize, s: f64) -> Result<f64> {
    if libm::fabs(s) <= 1.0 {
        basis.eval_inside(j, s)
    } else {
        basis.eval_outside(j, s)
    }
}

const MAX_MODES: u32 = (1 << 20) - 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run a seeded measurement simulation.
///
/// Coefficient mode draws the protocol's Gaussian quadratures per mode and
/// trial, forms S_j = sum_m (b_2^(m) T_j + b_1^(m) U_j), and accumulates the
/// running mean and covariance of the coefficient vector. Pointwise mode
/// draws each grid point independently from its analytic law. Identical
/// (seed, configuration) pairs give bit-identical results.
pub fn simulate_measurement(
    object: &PhaseObject,
    src: &ProbeSource,
    basis: &SlepianBasis,
    trials: u64,
    seed: u64,
    options: &SimOptions,
) -> Result<SimulatedMeasurement> {
    if trials == 0 {
        return Err(CoreError::InvalidArgument { what: "trial count must be >= 1" });
    }
    if src.modes > MAX_MODES {
        return Err(CoreError::InvalidArgument {
            what: "mode count exceeds the stream-id budget (must be < 2^20)",
        });
    }
    match options.mode {
        SimMode::CoefficientSpace => {
            simulate_coefficient_space(object, src, basis, trials, seed, options)
        }
        SimMode::Pointwise => simulate_pointwise(object, src, basis, trials, seed, options),
    }
}

fn simulate_coefficient_space(
    object: &PhaseObject,
    src: &ProbeSource,
    basis: &SlepianBasis,
    trials: u64,
    seed: u64,
    options: &SimOptions,
) -> Result<SimulatedMeasurement> {
    let orders = options.orders.unwrap_or_else(|| basis.j_max().min(basis.largest_trusted()));
    if orders > basis.j_max() {
        return Err(CoreError::OrderOutOfRange { j: orders, j_max: basis.j_max() });
    }
    if orders > basis.largest_trusted() {
        return Err(CoreError::EigenvalueUnderflow {
            order: orders,
            largest_trusted: basis.largest_trusted(),
        });
    }
    let (t_j, u_j) = coupling_tables(basis, object, orders)?;

    let m = src.modes as usize;
    let mf = m as f64;
    let root_m = libm::sqrt(mf);
    let root_tau = libm::sqrt(src.tau);
    let root_loss = libm::sqrt(1.0 - src.tau);
    let lossy = src.tau < 1.0;
    let ep = libm::exp(src.r) / 2.0;
    let en = libm::exp(-src.r) / 2.0;
    let disp = libm::sqrt(2.0) * src.alpha;

    let k = orders + 1;
    let mut mean = vec![0.0_f64; k];
    let mut m2 = vec![0.0_f64; k * k];
    let mut delta = vec![0.0_f64; k];
    let mut s_vec = vec![0.0_f64; k];
    let mut v1 = vec![0.0_f64; m];
    let mut v2 = vec![0.0_f64; m];
    let mut d1 = vec![0.0_f64; m];
    let mut d2 = vec![0.0_f64; m];

    for trial in 0..trials {
        let trial_base = trial << 20;
        // Summed quadratures over modes for this trial.
        let (b1_sum, b2_sum) = if options.zero_noise {
            match src.protocol {
                Protocol::Memsl => (root_tau * root_m * disp, 0.0),
                _ => (root_tau * mf * disp, 0.0),
            }
        } else {
            match src.protocol {
                Protocol::Memsl => {
                    let mut rng = stream_rng(seed, trial_base);
                    let (z1, z2) = gaussian_pair(&mut rng);
                    let be1 = disp + ep * z1;
                    let be2 = en * z2;
                    for mm in 0..m {
                        let mut rng = stream_rng(seed, trial_base | (mm as u64 + 1));
                        let (g1, g2) = gaussian_pair(&mut rng);
                        v1[mm] = 0.5 * g1;
                        v2[mm] = 0.5 * g2;
                        if lossy {
                            let (g3, g4) = gaussian_pair(&mut rng);
                            d1[mm] = 0.5 * g3;
                            d2[mm] = 0.5 * g4;
                        }
                    }
                    let vbar1: f64 = v1.iter().sum::<f64>() / mf;
                    let vbar2: f64 = v2.iter().sum::<f64>() / mf;
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for mm in 0..m {
                        let mut b1 = be1 / root_m + (v1[mm] - vbar1);
                        let mut b2 = be2 / root_m + (v2[mm] - vbar2);
                        if lossy {
                            b1 = root_tau * b1 + root_loss * d1[mm];
                            b2 = root_tau * b2 + root_loss * d2[mm];
                        }
                        s1 += b1;
                        s2 += b2;
                    }
                    (s1, s2)
                }
                Protocol::IndependentSqueezed | Protocol::Coherent => {
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for mm in 0..m {
                        let mut rng = stream_rng(seed, trial_base | (mm as u64 + 1));
                        let (g1, g2) = gaussian_pair(&mut rng);
                        let mut b1 = disp + ep * g1;
                        let mut b2 = en * g2;
                        if lossy {
                            let (g3, g4) = gaussian_pair(&mut rng);
                            b1 = root_tau * b1 + root_loss * 0.5 * g3;
                            b2 = root_tau * b2 + root_loss * 0.5 * g4;
                        }
                        s1 += b1;
                        s2 += b2;
                    }
                    (s1, s2)
                }
            }
        };

        for j in 0..k {
            s_vec[j] = b2_sum * t_j[j] + b1_sum * u_j[j];
        }
        // Online mean/covariance update.
        let n1 = (trial + 1) as f64;
        for j in 0..k {
            delta[j] = s_vec[j] - mean[j];
        }
        for j in 0..k {
            mean[j] += delta[j] / n1;
        }
        for a in 0..k {
            let da = s_vec[a] - mean[a];
            for b in 0..k {
                m2[a * k + b] += da * delta[b];
            }
        }
    }

    let mut cov = vec![0.0_f64; k * k];
    if trials > 1 {
        let norm = 1.0 / (trials - 1) as f64;
        for a in 0..k {
            for b in 0..k {
                cov[a * k + b] = 0.5 * (m2[a * k + b] + m2[b * k + a]) * norm;
            }
        }
    }

    Ok(SimulatedMeasurement {
        source: *src,
        c: basis.c(),
        seed,
        trials,
        mode: SimMode::CoefficientSpace,
        orders,
        coef_mean: mean,
        coef_cov: cov,
        grid: Vec::new(),
        point_mean: Vec::new(),
        point_var: Vec::new(),
        object_grid: object.grid.clone(),
        object_phase: object.phase.clone(),
    })
}

fn simulate_pointwise(
    object: &PhaseObject,
    src: &ProbeSource,
    basis: &SlepianBasis,
    trials: u64,
    seed: u64,
    options: &SimOptions,
) -> Result<SimulatedMeasurement> {
    let grid = match &options.image_grid {
        Some(g) => g.clone(),
        None => default_image_grid(),
    };
    let kernel = basis.noise_kernel(&grid, DEFAULT_NOISE_TRUNCATION)?;
    let variance = pointwise_variance(src, &kernel)?;
    let mean_field = mean_image_quadrature(object, src, basis, &grid)?;
    let std_dev: Vec<f64> = variance.values.iter().map(|&v| libm::sqrt(v)).collect();
    let mu = &mean_field.field.values;

    let np = grid.len();
    let mut mean = vec![0.0_f64; np];
    let mut m2 = vec![0.0_f64; np];
    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial << 20);
        let n1 = (trial + 1) as f64;
        for i in 0..np {
            let x = if options.zero_noise {
                mu[i]
            } else {
                let (g, _) = gaussian_pair(&mut rng);
                mu[i] + std_dev[i] * g
            };
            let d = x - mean[i];
            mean[i] += d / n1;
            m2[i] += d * (x - mean[i]);
        }
    }
    let point_var: Vec<f64> = if trials > 1 {
        let norm = 1.0 / (trials - 1) as f64;
        m2.iter().map(|&v| v * norm).collect()
    } else {
        vec![0.0; np]
    };

    Ok(SimulatedMeasurement {
        source: *src,
        c: basis.c(),
        seed,
        trials,
        mode: SimMode::Pointwise,
        orders: 0,
        coef_mean: Vec::new(),
        coef_cov: Vec::new(),
        grid,
        point_mean: mean,
        point_var,
        object_grid: object.grid.clone(),
        object_phase: object.phase.clone(),
    })
}

impl SimulatedMeasurement {
    /// Exact across-trial mean and per-shot variance of the synthesized field
    /// e_2(s) = (1/M) sum_j S_j psi_j(s) on `grid` (coefficient mode only).
    /// Linearity makes these identical to what per-trial synthesis would
    /// accumulate, without retaining samples.
    pub fn synthesized_field_stats(
        &self,
        basis: &SlepianBasis,
        grid: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.mode != SimMode::CoefficientSpace {
            return Err(CoreError::InvalidArgument {
                what: "field synthesis needs a coefficient-space measurement",
            });
        }
        if libm::fabs(self.c - basis.c()) > 1e-12 * self.c {
            return Err(CoreError::InvalidArgument {
                what: "measurement and basis disagree on the space-bandwidth parameter",
            });
        }
        let k = self.orders + 1;
        let mf = self.source.modes as f64;
        let mut mean = Vec::with_capacity(grid.len());
        let mut var = Vec::with_capacity(grid.len());
        let mut psi = vec![0.0_f64; k];
        for &s in grid.iter() {
            for j in 0..k {
                psi[j] = psi_at(basis, j, s)?;
            }
            let mut mu = 0.0;
            for j in 0..k {
                mu += self.coef_mean[j] * psi[j];
            }
            let mut v = 0.0;
            for a in 0..k {
                let mut row = 0.0;
                for b in 0..k {
                    row += self.coef_cov[a * k + b] * psi[b];
                }
                v += psi[a] * row;
            }
            mean.push(mu / mf);
            var.push(v / (mf * mf));
        }
        Ok((mean, var))
    }
}

/// Closed-form per-shot mean of the synthesized coefficient-mode field at a
/// single point: (⟨sum b_1⟩ / M) sum_j U_j psi_j(s) truncated at `orders`.
pub fn coefficient_point_mean(
    basis: &SlepianBasis,
    src: &ProbeSource,
    object: &PhaseObject,
    orders: usize,
    s: f64,
) -> Result<f64> {
    let (_, u_j) = coupling_tables(basis, object, orders)?;
    let mut acc = 0.0;
    for (j, &u) in u_j.iter().enumerate() {
        acc += u * psi_at(basis, j, s)?;
    }
    Ok(acc * summed_b1_mean(src) / src.modes as f64)
}

/// Closed-form per-shot variance of the synthesized coefficient-mode field at
/// a single point:
///
/// Var(sum b_2) (sum_j T_j psi_j(s))^2 / M^2
///   + Var(sum b_1) (sum_j U_j psi_j(s))^2 / M^2.
///
/// This is the correlated-noise model's own law — it intentionally differs
/// from the independent-point variance of [`pointwise_variance`].
pub fn coefficient_point_variance(
    basis: &SlepianBasis,
    src: &ProbeSource,
    object: &PhaseObject,
    orders: usize,
    s: f64,
) -> Result<f64> {
    let (t_j, u_j) = coupling_tables(basis, object, orders)?;
    let mut tsum = 0.0;
    let mut usum = 0.0;
    for j in 0..=orders {
        let p = psi_at(basis, j, s)?;
        tsum += t_j[j] * p;
        usum += u_j[j] * p;
    }
    let (v1, v2) = summed_quadrature_variances(src);
    let mf = src.modes as f64;
    Ok((v2 * tsum * tsum + v1 * usum * usum) / (mf * mf))
}

/// Output of [`reconstruct`].
///
/// The `sigma` fields quantify *single-shot statistical noise*: the
/// whole-line value sums the per-order estimator variances (Parseval over the
/// orthonormal line-normalized basis) and is the quantity the analytic error
/// law predicts; the interval value weighs each order by its interval energy
/// lambda_j. The `rms_vs_truth` fields instead compare the *averaged*
/// estimate against the ground-truth object (capturing truncation bias,
/// residual estimator noise after trial averaging, and — for the line
/// variant — the 1/lambda-amplified estimate energy outside [-1, 1]).
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub q: u32,
    pub grid: Vec<f64>,
    pub phi_true: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Estimated coefficients γ_j (mean over trials), j = 0..=Q.
    pub gamma_mean: Vec<f64>,
    /// Per-shot noise standard deviation of each coefficient.
    pub gamma_std: Vec<f64>,
    /// Analytic per-shot error law at the run's probe parameters.
    pub sigma_predicted: f64,
    /// Empirical per-shot error: sqrt(sum_j Var(γ_j)).
    pub sigma_empirical: f64,
    /// Interval-weighted variant: sqrt(sum_j lambda_j Var(γ_j)).
    pub sigma_empirical_interval: f64,
    pub rms_vs_truth_interval: f64,
    pub rms_vs_truth_line: f64,
    pub seed: u64,
    pub trials: u64,
}

/// Reconstruct the phase estimate from a coefficient-space measurement:
///
/// φ̃(s') = sum_{j<=Q} γ_j ψ_j(s'),  γ_j = mean(S_j) / (⟨sum b_1⟩ λ_j).
///
/// `src` must equal the probe configuration the measurement was simulated
/// with (it fixes the estimator normalization). Confidence bands come from
/// the sampled coefficient covariance; with fewer than two trials all
/// variance-derived fields are zero and the result is low-confidence.
pub fn reconstruct(
    measurement: &SimulatedMeasurement,
    basis: &SlepianBasis,
    q: u32,
    src: &ProbeSource,
) -> Result<ReconstructionResult> {
    if measurement.mode != SimMode::CoefficientSpace {
        return Err(CoreError::InvalidArgument {
            what: "reconstruction needs a coefficient-space measurement; the pointwise model \
                   carries no coefficient samples",
        });
    }
    if libm::fabs(measurement.c - basis.c()) > 1e-12 * measurement.c {
        return Err(CoreError::InvalidArgument {
            what: "measurement and basis disagree on the space-bandwidth parameter",
        });
    }
    let ms = &measurement.source;
    let close = |a: f64, b: f64| libm::fabs(a - b) <= 1e-12 * (1.0 + libm::fabs(b));
    if src.protocol != ms.protocol
        || src.modes != ms.modes
        || !close(src.alpha, ms.alpha)
        || !close(src.r, ms.r)
        || !close(src.tau, ms.tau)
    {
        return Err(CoreError::InvalidArgument {
            what: "probe source does not match the one used for the simulation",
        });
    }
    if !(src.alpha > 0.0) {
        return Err(CoreError::InvalidArgument {
            what: "reconstruction needs a displaced probe (alpha > 0)",
        });
    }
    let qi = q as usize;
    if qi > measurement.orders {
        return Err(CoreError::InvalidArgument {
            what: "measurement sampled fewer coefficient orders than the requested cutoff",
        });
    }
    if qi > basis.largest_trusted() {
        return Err(CoreError::EigenvalueUnderflow {
            order: qi,
            largest_trusted: basis.largest_trusted(),
        });
    }

    let denom = summed_b1_mean(src);
    let k = qi + 1;
    let korders = measurement.orders + 1;
    let n = measurement.trials;

    let mut lambda = Vec::with_capacity(k);
    for j in 0..k {
        lambda.push(basis.lambda(j)?);
    }
    let mut gamma_mean = Vec::with_capacity(k);
    let mut gamma_std = Vec::with_capacity(k);
    let mut sig2_line = 0.0_f64;
    let mut sig2_interval = 0.0_f64;
    for j in 0..k {
        let scale = denom * lambda[j];
        gamma_mean.push(measurement.coef_mean[j] / scale);
        let var_j = measurement.coef_cov[j * korders + j] / (scale * scale);
        gamma_std.push(libm::sqrt(var_j));
        sig2_line += var_j;
        sig2_interval += lambda[j] * var_j;
    }

    let grid = measurement.object_grid.clone();
    let phi_true = measurement.object_phase.clone();
    let np = grid.len();
    let mut phi_hat = Vec::with_capacity(np);
    let mut ci_low = Vec::with_capacity(np);
    let mut ci_high = Vec::with_capacity(np);
    let mut psi = vec![0.0_f64; k];
    let nf = n as f64;
    for &s in grid.iter() {
        for j in 0..k {
            psi[j] = basis.eval_inside(j, s)?;
        }
        let mut est = 0.0;
        for j in 0..k {
            est += gamma_mean[j] * psi[j];
        }
        // Variance of the trial-averaged estimate at this point.
        let mut var_mean = 0.0;
        if n > 1 {
            for a in 0..k {
                let wa = psi[a] / (denom * lambda[a]);
                let mut row = 0.0;
                for b in 0..k {
                    row += measurement.coef_cov[a * korders + b] * psi[b] / (denom * lambda[b]);
                }
                var_mean += wa * row;
            }
            var_mean /= nf;
            var_mean = var_mean.max(0.0);
        }
        let half = 1.959963984540054 * libm::sqrt(var_mean);
        phi_hat.push(est);
        ci_low.push(est - half);
        ci_high.push(est + half);
    }

    // Estimate-vs-truth diagnostics.
    let h = grid[1] - grid[0];
    let sq: Vec<f64> =
        phi_hat.iter().zip(phi_true.iter()).map(|(a, b)| (a - b) * (a - b)).collect();
    let interval_power = simpson(&sq, h)?.max(0.0);
    let mut outside_power = 0.0;
    for j in 0..k {
        outside_power += gamma_mean[j] * gamma_mean[j] * (1.0 - lambda[j]);
    }
    let rms_vs_truth_interval = libm::sqrt(interval_power);
    let rms_vs_truth_line = libm::sqrt(interval_power + outside_power);

    let sigma_predicted =
        crate::optimizer::sigma_explicit(src.protocol, basis, q, src.modes, src.r, src.alpha, src.tau)?;

    Ok(ReconstructionResult {
        q,
        grid,
        phi_true,
        phi_hat,
        ci_low,
        ci_high,
        gamma_mean,
        gamma_std,
        sigma_predicted,
        sigma_empirical: libm::sqrt(sig2_line),
        sigma_empirical_interval: libm::sqrt(sig2_interval),
        rms_vs_truth_interval,
        rms_vs_truth_line,
        seed: measurement.seed,
        trials: measurement.trials,
    })
}
