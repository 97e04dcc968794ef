//! Cross-validation of the production eigenvalue path against an independent
//! discretization oracle (dense Nyström eigendecomposition, separate crate,
//! separate quadrature and eigensolver).

use memsl_core::pswf::build_basis;

#[test]
fn production_eigenvalues_match_the_discretization_oracle() {
    for &c in &[0.5, 1.0, 3.069061862601558, 6.0] {
        let basis = build_basis(c, 8).expect("basis builds");
        let oracle = nystrom_oracle::slepian_eigenvalues_with(c, 8, 500);
        for j in 0..=8usize {
            let ours = basis.lambda(j).unwrap();
            let theirs = oracle[j];
            if theirs < 1e-12 {
                // Below the comparison gate both routes only agree in order
                // of magnitude; the production trust flags handle use.
                continue;
            }
            let rel = (ours - theirs).abs() / theirs;
            assert!(
                rel < 1e-8,
                "c={c}, j={j}: production {ours:e} vs oracle {theirs:e} (rel {rel:e})"
            );
        }
    }
}

#[test]
fn eigenvalue_sum_approaches_the_kernel_trace_everywhere() {
    // trace K = integral of the diagonal = 2c/pi; the j <= 14 partial sum
    // reaches it once the post-Shannon plunge has run its course.
    for &c in &[1.0, 3.069061862601558] {
        let basis = build_basis(c, 14).expect("basis builds");
        let sum: f64 = (0..=14).map(|j| basis.lambda(j).unwrap()).sum();
        let trace = 2.0 * c / core::f64::consts::PI;
        assert!(
            (sum - trace).abs() < 1e-9 * trace,
            "c={c}: partial sum {sum} vs trace {trace}"
        );
    }
}
