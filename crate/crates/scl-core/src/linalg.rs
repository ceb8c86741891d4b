//! Small complex linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

/// Kronecker product; the left factor is the more significant tensor slot.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().cloned().fold(0.0, f64::max)
}

pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_unitary(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let d = m.adjoint() * m - eye(m.nrows());
    max_abs_entry(&d) <= tol
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let d = m.adjoint() - m;
    max_abs_entry(&d) <= tol
}

/// Closest unitary in Frobenius norm: A = U S V^dag -> U V^dag.
pub fn polar_unitary(a: &CMat) -> CMat {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Eigendecomposition of a Hermitian matrix: (eigenvalues, column eigenvectors).
pub fn hermitian_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let se = nalgebra::SymmetricEigen::new(m.clone());
    (se.eigenvalues.iter().cloned().collect(), se.eigenvectors)
}

/// min over phase of ||e^{i phi} a - b||_F, together with the optimal phase.
pub fn frobenius_phase_min(a: &CMat, b: &CMat) -> (f64, f64) {
    let tr: Complex64 = (b.adjoint() * a).trace();
    let phi = -tr.arg();
    let d = a.map(|z| z * Complex64::from_polar(1.0, phi)) - b;
    (frobenius(&d), phi)
}

/// Entrywise distance up to global phase (phase fixed on the largest entry of a).
pub fn max_entry_phase_min(a: &CMat, b: &CMat) -> f64 {
    let mut best = f64::INFINITY;
    // Phase aligning any single large entry is enough for near-equal inputs;
    // also try the Frobenius-optimal phase.
    let (_, phi) = frobenius_phase_min(a, b);
    let d = a.map(|z| z * Complex64::from_polar(1.0, phi)) - b;
    best = best.min(max_abs_entry(&d));
    best
}

/// Extend `cols` (orthonormal set of length-n columns) to an orthonormal basis
/// of C^n; returns only the added columns, `want` of them.
pub fn orthonormal_completion(cols: &[CVec], n: usize, want: usize) -> Vec<CVec> {
    let mut basis: Vec<CVec> = cols.to_vec();
    let mut added = Vec::new();
    let mut k = 0usize;
    while added.len() < want && k < 2 * n + want {
        let mut v = CVec::zeros(n);
        v[k % n] = cr(1.0);
        if k >= n {
            // Unlucky axis choices exhausted: perturb deterministically.
            for i in 0..n {
                v[i] += c(((i * 2654435761 + k) % 97) as f64 / 97.0, ((i * 40503 + 7 * k) % 89) as f64 / 89.0);
            }
        }
        k += 1;
        // Twice-repeated Gram-Schmidt for stability.
        for _ in 0..2 {
            for b in &basis {
                let ip: Complex64 = b.dotc(&v);
                v -= b * ip;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= cr(norm);
            basis.push(v.clone());
            added.push(v);
        }
    }
    assert_eq!(added.len(), want, "orthonormal completion failed");
    added
}

fn standard_normal(rng: &mut impl rand::Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Haar-random unitary via QR of a Ginibre matrix with phase-fixed R diagonal.
pub fn haar_unitary(n: usize, rng: &mut impl rand::Rng) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        c(standard_normal(rng), standard_normal(rng)) / cr(std::f64::consts::SQRT_2)
    });
    let mut q_cols: Vec<CVec> = Vec::with_capacity(n);
    for j in 0..n {
        let orig = g.column(j).into_owned();
        let mut v = orig.clone();
        for _ in 0..2 {
            for b in &q_cols {
                let ip: Complex64 = b.dotc(&v);
                v -= b * ip;
            }
        }
        let norm = v.norm();
        v /= cr(norm);
        // Fix the phase so the implied R diagonal is positive (makes the
        // distribution Haar rather than merely unitary-valued).
        let r_jj: Complex64 = v.dotc(&orig);
        let ph = if r_jj.norm() > 0.0 { r_jj / cr(r_jj.norm()) } else { cr(1.0) };
        v *= ph.conj();
        q_cols.push(v);
    }
    CMat::from_columns(&q_cols)
}
