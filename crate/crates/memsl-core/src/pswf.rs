//! Band-limited (prolate spheroidal) basis for a space-bandwidth product `c`.
//!
//! The basis functions psi_j are the eigenfunctions of the band-limiting
//! integral operator on [-1, 1],
//!
//! ```text
//!   integral_{-1}^{1} sin(c (s' - s)) / (pi (s' - s)) * psi_j(s') ds'
//!     = lambda_j * psi_j(s),
//! ```
//!
//! normalized so that the whole-line norm is 1 and the interval norm is
//! lambda_j (so psi_j = sqrt(lambda_j) * phi_j with phi_j unit-normalized on
//! the interval). This convention is used consistently by every downstream
//! module; other references normalize differently, so compare with care.
//!
//! Algorithm: expand phi_j in normalized Legendre polynomials; the prolate
//! differential operator is symmetric tridiagonal in that basis (even and odd
//! degrees decouple), so a dense QL eigensolve of two small tridiagonal
//! blocks yields the coefficient vectors. The integral-operator eigenvalue is
//! then recovered through the finite Fourier transform relation: for the
//! modulus eigenvalue mu_j (lambda_j = (c / 2 pi) mu_j^2),
//!
//! ```text
//!   even j:  mu_j = sqrt(2)   |d_0| / |phi_j(0)|
//!   odd  j:  mu_j = c sqrt(2/3) |d_1| / |phi'_j(0)|
//! ```
//!
//! where d_k are the normalized-Legendre coefficients of phi_j. This route
//! keeps full relative accuracy down to mu ~ 1e-13 (the `trusted` floor);
//! beyond it the leading coefficient drowns in eigenvector roundoff and the
//! eigenvalues are reported but flagged untrusted.

use alloc::vec;
use alloc::vec::Vec;

use crate::err::{CoreError, Result};
use crate::mathx;

/// Even/odd symmetry of a basis order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Highest even order included in the default noise-kernel truncation.
pub const DEFAULT_NOISE_TRUNCATION: usize = 40;

/// Computed eigenvalues below this are not representable results at all.
const REPRESENTABLE_FLOOR: f64 = 1e-300;
/// Modulus eigenvalues below this carry no trustworthy digits in double
/// precision (leading Legendre coefficient ~ eigenvector roundoff).
const MU_TRUST_FLOOR: f64 = 1e-13;

/// Number of Gauss-Legendre nodes used for the fixed interval quadratures
/// (off-interval evaluation, inner products against sampled fields).
const GL_POINTS: usize = 256;

/// The band-limited basis: eigenvalues, evaluators, couplings, noise kernel.
#[derive(Debug, Clone)]
pub struct SlepianBasis {
    c: f64,
    j_max: usize,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    chi: Vec<f64>,
    trusted: Vec<bool>,
    parity: Vec<Parity>,
    /// Standard-Legendre coefficient arrays of the interval-unit functions
    /// phi_j (only every other entry is nonzero, by parity).
    coef: Vec<Vec<f64>>,
    /// Cached Gauss-Legendre rule for interval quadratures.
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
    /// phi_j at the Gauss-Legendre nodes (row per order).
    phi_at_gl: Vec<Vec<f64>>,
}

/// Pointwise noise-kernel table G(c, s) on a caller-supplied grid.
#[derive(Debug, Clone)]
pub struct NoiseKernelTable {
    pub c: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Highest even order actually accumulated (may be lower than requested
    /// if the basis is smaller or the trust floor cuts in first).
    pub truncation_order: usize,
    /// The truncation the caller asked for.
    pub requested_truncation: usize,
}

impl SlepianBasis {
    /// Space-bandwidth product.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Highest computed order.
    pub fn j_max(&self) -> usize {
        self.j_max
    }

    fn check_order(&self, j: usize) -> Result<()> {
        if j > self.j_max {
            Err(CoreError::OrderOutOfRange { j, j_max: self.j_max })
        } else {
            Ok(())
        }
    }

    /// Integral-operator eigenvalue lambda_j in (0, 1].
    pub fn lambda(&self, j: usize) -> Result<f64> {
        self.check_order(j)?;
        Ok(self.lambda[j])
    }

    /// Modulus eigenvalue of the finite Fourier transform
    /// (lambda_j = (c/2pi) mu_j^2); exposed for diagnostics and tests.
    pub fn mu(&self, j: usize) -> Result<f64> {
        self.check_order(j)?;
        Ok(self.mu[j])
    }

    /// Differential-operator eigenvalue (diagnostic; strictly increasing).
    pub fn chi(&self, j: usize) -> Result<f64> {
        self.check_order(j)?;
        Ok(self.chi[j])
    }

    /// Whether lambda_j carries full relative accuracy. Orders beyond the
    /// trust floor are reported but refuse to participate in operations that
    /// amplify by 1/lambda_j.
    pub fn is_trusted(&self, j: usize) -> Result<bool> {
        self.check_order(j)?;
        Ok(self.trusted[j])
    }

    /// Largest order whose eigenvalue is trusted (all orders up to it are).
    pub fn largest_trusted(&self) -> usize {
        let mut last = 0;
        for j in 0..=self.j_max {
            if self.trusted[j] {
                last = j;
            } else {
                break;
            }
        }
        last
    }

    /// Parity flag of order j.
    pub fn parity(&self, j: usize) -> Result<Parity> {
        self.check_order(j)?;
        Ok(self.parity[j])
    }

    /// The interval-unit-normalized eigenfunction phi_j(s) for |s| <= 1
    /// (psi_j = sqrt(lambda_j) phi_j). Exposed because object-side expansions
    /// are naturally taken against phi_j.
    pub fn eval_unit(&self, j: usize, s: f64) -> Result<f64> {
        self.check_order(j)?;
        // Tolerate endpoint roundoff from grid constructions.
        if libm::fabs(s) > 1.0 + 1e-12 {
            return Err(CoreError::DomainError { what: "eval inside requires |s| <= 1" });
        }
        let s = s.clamp(-1.0, 1.0);
        Ok(mathx::legendre_series(&self.coef[j], s))
    }

    /// psi_j(s) on [-1, 1] under the adopted normalization
    /// (interval norm lambda_j, whole-line norm 1).
    pub fn eval_inside(&self, j: usize, s: f64) -> Result<f64> {
        let phi = self.eval_unit(j, s)?;
        Ok(libm::sqrt(self.lambda[j]) * phi)
    }

    /// psi_j(s) for |s| > 1 via the defining integral relation
    /// psi_j(s) = (1/lambda_j) * integral_{-1}^{1} k_c(s, s') psi_j(s') ds'.
    ///
    /// The 1/lambda_j amplification limits this to trusted orders.
    pub fn eval_outside(&self, j: usize, s: f64) -> Result<f64> {
        self.check_order(j)?;
        if libm::fabs(s) <= 1.0 {
            return Err(CoreError::DomainError { what: "eval outside requires |s| > 1" });
        }
        if !self.trusted[j] {
            return Err(CoreError::EigenvalueUnderflow {
                order: j,
                largest_trusted: self.largest_trusted(),
            });
        }
        let mut acc = 0.0;
        for (i, (&y, &w)) in self.gl_nodes.iter().zip(&self.gl_weights).enumerate() {
            acc += w * sinc_kernel(self.c, s - y) * self.phi_at_gl[j][i];
        }
        // acc approximates integral k phi_j = lambda_j phi_j continued, so
        // psi_j(s) = sqrt(lambda_j) phi_j(s) = acc / sqrt(lambda_j).
        Ok(acc / libm::sqrt(self.lambda[j]))
    }

    /// Coupling constant A_j = sqrt(2 pi / c) * |psi_j(0)|; exactly zero for
    /// odd orders (enforced by parity, not by cancellation).
    ///
    /// Under this crate's conventions the whole-line integral of psi_j equals
    /// A_j / sqrt(lambda_j) in magnitude; the pointwise value at the origin is
    /// what enters every noise formula downstream.
    pub fn coupling(&self, j: usize) -> Result<f64> {
        Ok(libm::fabs(self.coupling_signed(j)?))
    }

    /// Signed version of `coupling`: sqrt(2 pi / c) * psi_j(0). The sign
    /// matters when synthesizing correlated coefficient noise.
    ///
    /// Identity worth knowing (and tested): this equals
    /// integral_{-1}^{1} phi_j(s) ds up to the parity sign of the finite
    /// Fourier relation, so it can be cross-checked by plain quadrature.
    pub fn coupling_signed(&self, j: usize) -> Result<f64> {
        self.check_order(j)?;
        if self.parity[j] == Parity::Odd {
            return Ok(0.0);
        }
        let psi0 = self.eval_inside(j, 0.0)?;
        Ok(libm::sqrt(2.0 * mathx::PI / self.c) * psi0)
    }

    /// Partial sum sum_{even j <= truncation} (2 pi / c) psi_j(0)^2.
    ///
    /// Converges to exactly 2 for every c (completeness of the basis in the
    /// band-limited space evaluated at the origin); used as a closed-form
    /// golden for kernel-truncation tests.
    pub fn coupling_energy(&self, truncation: usize) -> f64 {
        let mut acc = 0.0;
        let cap = truncation.min(self.j_max);
        for j in (0..=cap).step_by(2) {
            if !self.trusted[j] {
                break;
            }
            let t = self.coupling_signed(j).expect("order in range");
            acc += t * t;
        }
        acc
    }

    /// Pointwise noise kernel G(c, s) = sum over even j of
    /// (2 pi / c) psi_j(0)^2 psi_j(s)^2, truncated at `truncation`.
    ///
    /// Accumulation stops early at the trust floor; the omitted terms scale
    /// as lambda_j^2 and are far below double rounding by then. Default
    /// truncation: [`DEFAULT_NOISE_TRUNCATION`].
    pub fn noise_kernel(&self, grid: &[f64], truncation: usize) -> Result<NoiseKernelTable> {
        if grid.iter().any(|&s| libm::fabs(s) > 1.0 + 1e-12) {
            return Err(CoreError::DomainError { what: "noise kernel grid must lie in [-1, 1]" });
        }
        let mut values = vec![0.0f64; grid.len()];
        let cap = truncation.min(self.j_max);
        let mut highest = 0usize;
        for j in (0..=cap).step_by(2) {
            if !self.trusted[j] {
                break;
            }
            let t = self.coupling_signed(j)?;
            let t2 = t * t;
            if t2 == 0.0 {
                continue;
            }
            for (v, &s) in values.iter_mut().zip(grid) {
                let p = self.eval_inside(j, s)?;
                *v += t2 * p * p;
            }
            highest = j;
        }
        Ok(NoiseKernelTable {
            c: self.c,
            grid: grid.to_vec(),
            values,
            truncation_order: highest,
            requested_truncation: truncation,
        })
    }

    /// Inner product integral_{-1}^{1} f(s) phi_j(s) ds for a callable f,
    /// via the cached Gauss-Legendre rule. Building block for object
    /// decompositions and the small-phase gate.
    pub fn project_unit<F: Fn(f64) -> f64>(&self, j: usize, f: F) -> Result<f64> {
        self.check_order(j)?;
        let mut acc = 0.0;
        for (i, (&y, &w)) in self.gl_nodes.iter().zip(&self.gl_weights).enumerate() {
            acc += w * f(y) * self.phi_at_gl[j][i];
        }
        Ok(acc)
    }

    /// The cached Gauss-Legendre rule (nodes, weights) used for interval
    /// quadratures; exposed so downstream modules integrate consistently.
    pub fn quadrature(&self) -> (&[f64], &[f64]) {
        (&self.gl_nodes, &self.gl_weights)
    }

    /// phi_j at the cached quadrature nodes.
    pub fn unit_at_quadrature(&self, j: usize) -> Result<&[f64]> {
        self.check_order(j)?;
        Ok(&self.phi_at_gl[j])
    }
}

/// The band-limiting kernel sin(c u) / (pi u) with its removable singularity
/// filled by the series limit.
pub fn sinc_kernel(c: f64, u: f64) -> f64 {
    let cu = c * u;
    if libm::fabs(cu) < 1e-4 {
        c / mathx::PI * (1.0 - cu * cu / 6.0)
    } else {
        libm::sin(cu) / (mathx::PI * u)
    }
}

/// Build the basis for space-bandwidth product `c` with orders 0..=j_max.
///
/// Errors: `InvalidArgument` for non-positive c or absurd sizes;
/// `UnderflowOrder` if some requested eigenvalue is not representable
/// (the error names the largest safe order); `NonConvergence` if the
/// eigensolver stalls (not observed in practice).
pub fn build_basis(c: f64, j_max: usize) -> Result<SlepianBasis> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(CoreError::InvalidArgument { what: "c must be positive and finite" });
    }
    if j_max > 512 {
        return Err(CoreError::InvalidArgument { what: "j_max larger than 512 is unsupported" });
    }

    // Rows per parity block: enough Legendre orders that the coefficient
    // tails of every requested eigenfunction are far below roundoff.
    let rows = (j_max / 2 + 48).max(140) + (c as usize) / 2;

    struct Candidate {
        chi: f64,
        parity: Parity,
        dbar: Vec<f64>,
    }
    let mut cands: Vec<Candidate> = Vec::with_capacity(2 * rows);

    for parity in [Parity::Even, Parity::Odd] {
        let p = match parity {
            Parity::Even => 0usize,
            Parity::Odd => 1usize,
        };
        // Legendre degrees k = p, p+2, ..., p+2(rows-1).
        let mut diag = Vec::with_capacity(rows);
        let mut off = Vec::with_capacity(rows - 1);
        for i in 0..rows {
            let k = (p + 2 * i) as f64;
            diag.push(k * (k + 1.0) + c * c * (2.0 * k * (k + 1.0) - 1.0) / ((2.0 * k + 3.0) * (2.0 * k - 1.0)));
            if i + 1 < rows {
                off.push(
                    c * c * (k + 2.0) * (k + 1.0)
                        / ((2.0 * k + 3.0) * libm::sqrt((2.0 * k + 1.0) * (2.0 * k + 5.0))),
                );
            }
        }
        let eig = mathx::tridiag_eigen(&diag, &off)?;
        let need = if j_max >= p { (j_max - p) / 2 + 1 } else { 0 };
        for i in 0..need.min(eig.values.len()) {
            let mut d = eig.vectors[i].clone();
            // Sign convention: phi_j(1) > 0. phi_j(1) = sum dbar_k sqrt(k+1/2).
            let mut val1 = 0.0;
            for (t, dk) in d.iter().enumerate() {
                let k = (p + 2 * t) as f64;
                val1 += dk * libm::sqrt(k + 0.5);
            }
            if val1 < 0.0 {
                for dk in d.iter_mut() {
                    *dk = -*dk;
                }
            }
            cands.push(Candidate { chi: eig.values[i], parity, dbar: d });
        }
    }

    // The differential-operator eigenvalues are strictly increasing in order,
    // so merging the parity blocks by chi restores the true order index.
    cands.sort_by(|a, b| a.chi.partial_cmp(&b.chi).expect("finite spectrum"));
    cands.truncate(j_max + 1);
    if cands.len() != j_max + 1 {
        return Err(CoreError::NonConvergence { what: "parity blocks yielded too few orders" });
    }
    // Sanity: parity must alternate starting even.
    for (j, cand) in cands.iter().enumerate() {
        let expect = if j % 2 == 0 { Parity::Even } else { Parity::Odd };
        if cand.parity != expect {
            return Err(CoreError::NonConvergence { what: "parity interleaving broke" });
        }
    }

    let mut lambda = Vec::with_capacity(j_max + 1);
    let mut mu = Vec::with_capacity(j_max + 1);
    let mut chi = Vec::with_capacity(j_max + 1);
    let mut trusted = Vec::with_capacity(j_max + 1);
    let mut parity_flags = Vec::with_capacity(j_max + 1);
    let mut coef: Vec<Vec<f64>> = Vec::with_capacity(j_max + 1);

    for cand in &cands {
        let p = match cand.parity {
            Parity::Even => 0usize,
            Parity::Odd => 1usize,
        };
        // Modulus eigenvalue of the finite Fourier transform from the leading
        // normalized-Legendre coefficient.
        let m = if p == 0 {
            let mut phi0 = 0.0;
            for (t, dk) in cand.dbar.iter().enumerate() {
                let k = p + 2 * t;
                phi0 += dk * libm::sqrt(k as f64 + 0.5) * mathx::legendre_p_at_zero(k);
            }
            libm::sqrt(2.0) * libm::fabs(cand.dbar[0]) / libm::fabs(phi0)
        } else {
            let mut dphi0 = 0.0;
            for (t, dk) in cand.dbar.iter().enumerate() {
                let k = p + 2 * t;
                dphi0 += dk * libm::sqrt(k as f64 + 0.5) * mathx::legendre_dp_at_zero(k);
            }
            c * libm::sqrt(2.0 / 3.0) * libm::fabs(cand.dbar[0]) / libm::fabs(dphi0)
        };
        let mut lam = c / (2.0 * mathx::PI) * m * m;
        // Roundoff can push the leading eigenvalue a hair past 1 at large c;
        // snap it inside a tight window, treat anything further as failure.
        if lam > 1.0 {
            if lam < 1.0 + 1e-9 {
                lam = 1.0;
            } else {
                return Err(CoreError::NonConvergence { what: "eigenvalue exceeded 1" });
            }
        }
        mu.push(m);
        lambda.push(lam);
        chi.push(cand.chi);
        trusted.push(m >= MU_TRUST_FLOOR);
        parity_flags.push(cand.parity);

        // Standard-Legendre coefficients: coef[k] = dbar * sqrt(k + 1/2).
        let top = p + 2 * (cand.dbar.len() - 1);
        let mut cc = vec![0.0f64; top + 1];
        for (t, dk) in cand.dbar.iter().enumerate() {
            let k = p + 2 * t;
            cc[k] = dk * libm::sqrt(k as f64 + 0.5);
        }
        // Trim the roundoff tail to keep evaluation cheap.
        let mut hi = cc.len();
        while hi > p + 1 && libm::fabs(cc[hi - 1]) < 1e-300 {
            hi -= 1;
        }
        cc.truncate(hi);
        coef.push(cc);
    }

    // Representability floor: refuse to return garbage orders.
    if let Some(bad) = lambda.iter().position(|&l| !(l >= REPRESENTABLE_FLOOR)) {
        let largest_safe = bad.saturating_sub(1);
        return Err(CoreError::UnderflowOrder { requested: j_max, largest_safe });
    }

    let (gl_nodes, gl_weights) = mathx::gauss_legendre(GL_POINTS);
    let phi_at_gl: Vec<Vec<f64>> = coef
        .iter()
        .map(|cc| gl_nodes.iter().map(|&y| mathx::legendre_series(cc, y)).collect())
        .collect();

    Ok(SlepianBasis {
        c,
        j_max,
        lambda,
        mu,
        chi,
        trusted,
        parity: parity_flags,
        coef,
        gl_nodes,
        gl_weights,
        phi_at_gl,
    })
}
