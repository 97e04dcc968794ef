//! 4-f imaging geometry: physical parameters, derived dimensionless numbers,
//! and the object-to-image field transform with its coefficient maps.
//!
//! Normalized coordinates: the object occupies s' in [-1, 1] (half-width Y/2
//! in physical units); the image-plane coordinate s uses the same scale. The
//! imaging aperture band-limits the field, which in these coordinates is the
//! kernel sin(c(s - s')) / (pi (s - s')) with c the space-bandwidth product.

use alloc::vec;
use alloc::vec::Vec;

use crate::err::{CoreError, Result};
use crate::mathx;
use crate::pswf::{sinc_kernel, SlepianBasis};

/// Which plane a sampled field lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    ObjectPlane,
    ImagePlane,
}

/// A real field sampled on an ordered grid.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub domain: DomainTag,
}

impl FieldSamples {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, domain: DomainTag) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(CoreError::InvalidArgument { what: "grid/values length mismatch" });
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidArgument { what: "grid must be strictly increasing" });
        }
        Ok(FieldSamples { grid, values, domain })
    }
}

/// Physical 4-f system and its derived dimensionless quantities.
#[derive(Debug, Clone, Copy)]
pub struct ImagingSystem {
    /// Focal length, meters.
    pub focal_length: f64,
    /// Illumination wavelength, meters.
    pub wavelength: f64,
    /// Pupil diameter, meters.
    pub pupil: f64,
    /// Object size, meters.
    pub object_size: f64,
    /// Space-bandwidth product c = pi d Y / (2 lambda f).
    pub c: f64,
    /// Shannon number S = 2c/pi = d Y / (lambda f).
    pub shannon: f64,
    /// Rayleigh length R = lambda f / d, meters.
    pub rayleigh: f64,
}

/// Derive the dimensionless description from physical lengths (all meters).
pub fn derive_dimensionless(
    focal_length: f64,
    wavelength: f64,
    pupil: f64,
    object_size: f64,
) -> Result<ImagingSystem> {
    for (v, what) in [
        (focal_length, "focal length must be positive"),
        (wavelength, "wavelength must be positive"),
        (pupil, "pupil diameter must be positive"),
        (object_size, "object size must be positive"),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CoreError::InvalidArgument { what });
        }
    }
    let c = mathx::PI * pupil * object_size / (2.0 * wavelength * focal_length);
    let shannon = 2.0 * c / mathx::PI;
    let rayleigh = wavelength * focal_length / pupil;
    Ok(ImagingSystem {
        focal_length,
        wavelength,
        pupil,
        object_size,
        c,
        shannon,
        rayleigh,
    })
}

/// Default image-plane grid: 2049 points spanning [-4, 4].
///
/// Wide enough to show the leaked side structure of low orders; the odd point
/// count keeps the grid Simpson-compatible (one more point than the nominal
/// power of two).
pub fn default_image_grid() -> Vec<f64> {
    mathx::linspace(-4.0, 4.0, 2049)
}

/// Propagate an object-plane field through the band-limiting aperture:
///
/// ```text
///   out(s) = integral_{-1}^{1} sin(c(s - s')) / (pi (s - s')) * in(s') ds'
/// ```
///
/// evaluated on `image_grid` (which may extend beyond [-1, 1]). Object values
/// outside [-1, 1] are treated as zero. The object grid must be uniform,
/// Simpson-compatible (odd count), cover [-1, 1], and resolve the kernel
/// oscillation scale (spacing <= pi / (4 c)).
pub fn object_to_image(
    sys: &ImagingSystem,
    object: &FieldSamples,
    image_grid: &[f64],
) -> Result<FieldSamples> {
    let h = mathx::uniform_spacing(&object.grid)?;
    let n = object.grid.len();
    if n % 2 == 0 {
        return Err(CoreError::GridTooCoarse { points: n, needed: n + 1 });
    }
    if object.grid[0] > -1.0 + 1e-12 || object.grid[n - 1] < 1.0 - 1e-12 {
        return Err(CoreError::GridTooNarrow);
    }
    let max_h = mathx::PI / (4.0 * sys.c);
    if h > max_h {
        let needed = ((object.grid[n - 1] - object.grid[0]) / max_h) as usize + 2;
        return Err(CoreError::GridTooCoarse { points: n, needed });
    }
    // Mask the source to its supported interval.
    let masked: Vec<f64> = object
        .grid
        .iter()
        .zip(&object.values)
        .map(|(&s, &v)| if libm::fabs(s) <= 1.0 + 1e-12 { v } else { 0.0 })
        .collect();
    let mut out = Vec::with_capacity(image_grid.len());
    let mut integrand = vec![0.0f64; n];
    for &s in image_grid {
        for i in 0..n {
            integrand[i] = masked[i] * sinc_kernel(sys.c, s - object.grid[i]);
        }
        out.push(mathx::simpson(&integrand, h)?);
    }
    FieldSamples::new(image_grid.to_vec(), out, DomainTag::ImagePlane)
}

/// Expand an image-plane field in the band-limited basis.
///
/// Returns the whole-line coefficients e_j (so that e(s) = sum_j e_j psi_j(s)
/// for fields in the band-limited span), computed through the interval
/// projection e_j = (1/lambda_j) * integral_{-1}^{1} e(s) psi_j(s) ds — exact
/// for span members because the basis is orthogonal on the interval with
/// Gram value lambda_j. All quadrature happens on [-1, 1], so the image grid
/// only needs to cover that window; `GridTooNarrow` otherwise.
pub fn decompose_image(
    basis: &SlepianBasis,
    image: &FieldSamples,
    orders: usize,
) -> Result<Vec<f64>> {
    if orders > basis.j_max() {
        return Err(CoreError::OrderOutOfRange { j: orders, j_max: basis.j_max() });
    }
    let h = mathx::uniform_spacing(&image.grid)?;
    // Restrict to the sample window [-1, 1].
    let lo = image.grid.iter().position(|&s| s >= -1.0 - 1e-12).ok_or(CoreError::GridTooNarrow)?;
    let hi = image.grid.iter().rposition(|&s| s <= 1.0 + 1e-12).ok_or(CoreError::GridTooNarrow)?;
    if image.grid[lo] > -1.0 + 1e-9 || image.grid[hi] < 1.0 - 1e-9 {
        return Err(CoreError::GridTooNarrow);
    }
    let mut span = hi - lo + 1;
    if span < 129 {
        return Err(CoreError::GridTooCoarse { points: span, needed: 129 });
    }
    if span % 2 == 0 {
        span -= 1; // Simpson needs an odd count; drop the last point.
    }
    let mut coeffs = Vec::with_capacity(orders + 1);
    let mut integrand = vec![0.0f64; span];
    for j in 0..=orders {
        if !basis.is_trusted(j)? {
            return Err(CoreError::EigenvalueUnderflow {
                order: j,
                largest_trusted: basis.largest_trusted(),
            });
        }
        for (t, slot) in integrand.iter_mut().enumerate() {
            let s = image.grid[lo + t];
            *slot = image.values[lo + t] * basis.eval_inside(j, s)?;
        }
        let num = mathx::simpson(&integrand, h)?;
        coeffs.push(num / basis.lambda(j)?);
    }
    Ok(coeffs)
}

/// Invert the aperture attenuation on the retained orders:
/// estimate(s') = sum_{j <= q} (e_j / lambda_j) psi_j(s') on [-1, 1].
///
/// `coefficients` are whole-line coefficients as returned by
/// [`decompose_image`]. Refuses untrusted orders: the 1/lambda_j blow-up past
/// the trust floor would amplify pure noise.
pub fn reconstruct_object_estimate(
    basis: &SlepianBasis,
    coefficients: &[f64],
    q: usize,
    grid: &[f64],
) -> Result<FieldSamples> {
    if coefficients.len() <= q {
        return Err(CoreError::InvalidArgument { what: "fewer coefficients than requested cutoff" });
    }
    if q > basis.j_max() {
        return Err(CoreError::OrderOutOfRange { j: q, j_max: basis.j_max() });
    }
    for j in 0..=q {
        if !basis.is_trusted(j)? {
            return Err(CoreError::EigenvalueUnderflow {
                order: j,
                largest_trusted: basis.largest_trusted(),
            });
        }
    }
    let mut values = vec![0.0f64; grid.len()];
    for j in 0..=q {
        let scale = coefficients[j] / basis.lambda(j)?;
        for (v, &s) in values.iter_mut().zip(grid) {
            *v += scale * basis.eval_inside(j, s)?;
        }
    }
    FieldSamples::new(grid.to_vec(), values, DomainTag::ObjectPlane)
}
