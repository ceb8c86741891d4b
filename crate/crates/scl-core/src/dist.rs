//! Distances between unitaries: average-case gate distance, the spectral
//! diamond-norm proxy, and matrix-free phase-aligned spectral distance for
//! unitaries given only as appliers.

use num_complex::Complex64;

use crate::circuit::Circuit;
use crate::error::SclError;
use crate::linalg::{cr, spectral_norm, CMat, CVec};

/// D_ave(U1, U2) = (2^n / (2^n + 1)) (1 - |Tr(U1^dag U2)|^2 / 4^n).
pub fn average_gate_distance(u1: &CMat, u2: &CMat) -> Result<f64, SclError> {
    if u1.nrows() != u2.nrows() || u1.nrows() != u1.ncols() {
        return Err(SclError::Dimension("average_gate_distance operands".into()));
    }
    let d = u1.nrows() as f64;
    let tr: Complex64 = (u1.adjoint() * u2).trace();
    Ok((d / (d + 1.0)) * (1.0 - tr.norm_sqr() / (d * d)))
}

/// min over phase of ||e^{i phi} U1 - U2||_F^2 / 2^n = 2 (1 - |Tr(U1^dag U2)| / 2^n).
pub fn phase_min_frobenius_sq_normalized(u1: &CMat, u2: &CMat) -> f64 {
    let d = u1.nrows() as f64;
    let tr: Complex64 = (u2.adjoint() * u1).trace();
    2.0 * (1.0 - tr.norm() / d)
}

/// min over phase of ||e^{i phi} U1 - U2||_inf, via a 1024-point phase grid
/// refined by golden-section search to 1e-10; returns (m, 2m) where 2m upper
/// bounds the diamond distance between the two conjugation channels.
pub fn unitary_diamond_proxy(u1: &CMat, u2: &CMat) -> Result<(f64, f64), SclError> {
    if u1.shape() != u2.shape() || u1.nrows() != u1.ncols() {
        return Err(SclError::Dimension("unitary_diamond_proxy operands".into()));
    }
    let eval = |phi: f64| -> f64 {
        let d = u1.map(|z| z * Complex64::from_polar(1.0, phi)) - u2;
        spectral_norm(&d)
    };
    let grid = 1024usize;
    let tau = std::f64::consts::TAU;
    let mut best_k = 0usize;
    let mut best = f64::INFINITY;
    for k in 0..grid {
        let v = eval(k as f64 / grid as f64 * tau);
        if v < best {
            best = v;
            best_k = k;
        }
    }
    // Golden-section refinement on the bracketing interval.
    let mut a = (best_k as f64 - 1.0) / grid as f64 * tau;
    let mut b = (best_k as f64 + 1.0) / grid as f64 * tau;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c_ = b - inv_phi * (b - a);
    let mut d_ = a + inv_phi * (b - a);
    let mut fc = eval(c_);
    let mut fd = eval(d_);
    while (b - a).abs() > 1e-10 {
        if fc < fd {
            b = d_;
            d_ = c_;
            fd = fc;
            c_ = b - inv_phi * (b - a);
            fc = eval(c_);
        } else {
            a = c_;
            c_ = d_;
            fc = fd;
            d_ = a + inv_phi * (b - a);
            fd = eval(d_);
        }
    }
    let m = fc.min(fd).min(best);
    Ok((m, 2.0 * m))
}

/// A unitary presented as forward/adjoint matrix-vector products.
pub trait UnitaryApplier: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &CVec) -> CVec;
    fn apply_dagger(&self, v: &CVec) -> CVec;
}

impl UnitaryApplier for Circuit {
    fn dim(&self) -> usize {
        1 << self.num_qubits()
    }

    fn apply(&self, v: &CVec) -> CVec {
        apply_circuit_vec(self, v, false)
    }

    fn apply_dagger(&self, v: &CVec) -> CVec {
        apply_circuit_vec(self, v, true)
    }
}

fn apply_circuit_vec(circ: &Circuit, v: &CVec, dagger: bool) -> CVec {
    let n = circ.num_qubits();
    let mut amps: Vec<Complex64> = v.iter().cloned().collect();
    let mut sv = StateVectorRaw { n, amps: &mut amps };
    if dagger {
        for layer in circ.layers().iter().rev() {
            for g in layer {
                let (a, b) = g.qubits();
                sv.apply_two_qubit(&g.matrix().adjoint(), a, b);
            }
        }
    } else {
        for layer in circ.layers() {
            for g in layer {
                let (a, b) = g.qubits();
                sv.apply_two_qubit(g.matrix(), a, b);
            }
        }
    }
    CVec::from_column_slice(&amps)
}

// Minimal in-place kernel shared with StateVector (unnormalized vectors).
struct StateVectorRaw<'a> {
    n: usize,
    amps: &'a mut [Complex64],
}

impl StateVectorRaw<'_> {
    fn apply_two_qubit(&mut self, u: &CMat, a: usize, b: usize) {
        let sa = self.n - 1 - a;
        let sb = self.n - 1 - b;
        let ma = 1usize << sa;
        let mb = 1usize << sb;
        for idx in 0..self.amps.len() {
            if idx & ma == 0 && idx & mb == 0 {
                let ids = [idx, idx | mb, idx | ma, idx | ma | mb];
                let v = [self.amps[ids[0]], self.amps[ids[1]], self.amps[ids[2]], self.amps[ids[3]]];
                for r in 0..4 {
                    let mut acc = Complex64::default();
                    for c in 0..4 {
                        acc += u[(r, c)] * v[c];
                    }
                    self.amps[ids[r]] = acc;
                }
            }
        }
    }

    fn apply_on(&mut self, u: &CMat, qubits: &[usize]) {
        let k = qubits.len();
        let shifts: Vec<usize> = qubits.iter().map(|&q| self.n - 1 - q).collect();
        let mask: usize = shifts.iter().map(|&s| 1usize << s).sum();
        let sub = 1usize << k;
        let mut scratch = vec![Complex64::default(); sub];
        let dim = self.amps.len();
        let mut base = 0usize;
        loop {
            for r in 0..sub {
                let mut idx = base;
                for (j, &s) in shifts.iter().enumerate() {
                    if r & (1 << (k - 1 - j)) != 0 {
                        idx |= 1 << s;
                    }
                }
                scratch[r] = self.amps[idx];
            }
            for r in 0..sub {
                let mut acc = Complex64::default();
                for c in 0..sub {
                    acc += u[(r, c)] * scratch[c];
                }
                let mut idx = base;
                for (j, &s) in shifts.iter().enumerate() {
                    if r & (1 << (k - 1 - j)) != 0 {
                        idx |= 1 << s;
                    }
                }
                self.amps[idx] = acc;
            }
            let mut next = (base | mask) + 1;
            if next >= dim {
                break;
            }
            next &= !mask;
            base = next;
        }
    }
}

/// A unitary given as an ordered sequence of dense operators on qubit subsets.
pub struct DenseSeqApplier {
    n: usize,
    ops: Vec<(Vec<usize>, CMat)>,
}

impl DenseSeqApplier {
    pub fn new(n: usize, ops: Vec<(Vec<usize>, CMat)>) -> Self {
        Self { n, ops }
    }
}

impl UnitaryApplier for DenseSeqApplier {
    fn dim(&self) -> usize {
        1 << self.n
    }

    fn apply(&self, v: &CVec) -> CVec {
        let mut amps: Vec<Complex64> = v.iter().cloned().collect();
        let mut sv = StateVectorRaw { n: self.n, amps: &mut amps };
        for (qs, u) in &self.ops {
            sv.apply_on(u, qs);
        }
        CVec::from_column_slice(&amps)
    }

    fn apply_dagger(&self, v: &CVec) -> CVec {
        let mut amps: Vec<Complex64> = v.iter().cloned().collect();
        let mut sv = StateVectorRaw { n: self.n, amps: &mut amps };
        for (qs, u) in self.ops.iter().rev() {
            sv.apply_on(&u.adjoint(), qs);
        }
        CVec::from_column_slice(&amps)
    }
}

/// Exact min over phase of ||e^{i phi} A - B||_F / sqrt(dim); upper-bounds
/// the normalized spectral distance. Computed from an exact trace sweep.
pub fn phase_min_frobenius_appliers(a: &dyn UnitaryApplier, b: &dyn UnitaryApplier) -> f64 {
    let dim = a.dim();
    assert_eq!(dim, b.dim());
    let mut tr = Complex64::default();
    for j in 0..dim {
        let mut e = CVec::zeros(dim);
        e[j] = cr(1.0);
        let m = b.apply_dagger(&a.apply(&e));
        tr += m[j];
    }
    // ||e^{i phi} A - B||_F^2 = 2 dim - 2 Re(e^{i phi} Tr(B^dag A)); minimized
    // at e^{i phi} = conj(arg Tr).
    (2.0 * dim as f64 - 2.0 * tr.norm()).max(0.0).sqrt()
}

fn seeded_vector(dim: usize, seed: u64) -> CVec {
    // SplitMix64-driven deterministic start vector.
    let mut s = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = move || {
        s = s.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let mut v = CVec::zeros(dim);
    for j in 0..dim {
        let re = (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        let im = (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        v[j] = Complex64::new(re, im);
    }
    let norm = v.norm();
    v / cr(norm)
}

/// Lanczos with full reorthogonalization for a Hermitian operator given as a
/// closure; returns (lambda_min, lambda_max) estimates.
fn lanczos_extremes(op: &dyn Fn(&CVec) -> CVec, dim: usize, iters: usize) -> (f64, f64) {
    let iters = iters.min(dim);
    let mut basis: Vec<CVec> = Vec::with_capacity(iters);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut v = seeded_vector(dim, 0x5c1_f00d);
    basis.push(v.clone());
    for k in 0..iters {
        let mut w = op(&v);
        let alpha = basis[k].dotc(&w).re;
        alphas.push(alpha);
        // Full reorthogonalization, twice for stability.
        for _ in 0..2 {
            for b in &basis {
                let ip: Complex64 = b.dotc(&w);
                w -= b * ip;
            }
        }
        let beta = w.norm();
        if beta < 1e-14 || k + 1 == iters {
            break;
        }
        betas.push(beta);
        v = w / cr(beta);
        basis.push(v.clone());
    }
    let m = alphas.len();
    let mut t = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// min over phase of ||e^{i phi} A - B||_inf for unitary appliers, from the
/// extremal eigenphases of M = B^dag A (valid when the spectrum of M fits in
/// an arc of width < pi, which covers every use here; returns 2.0, the
/// trivial bound, otherwise).
pub fn phase_min_spectral_appliers(a: &dyn UnitaryApplier, b: &dyn UnitaryApplier) -> f64 {
    let dim = a.dim();
    assert_eq!(dim, b.dim());
    let apply_m = |v: &CVec| -> CVec { b.apply_dagger(&a.apply(v)) };
    let apply_m_dag = |v: &CVec| -> CVec { a.apply_dagger(&b.apply(v)) };

    // Rough arc center: v^dag M v lies in the convex hull of the eigenphases.
    let mut alpha = 0.0;
    {
        let mut acc = Complex64::default();
        for seed in 0..3u64 {
            let v = seeded_vector(dim, 0xa11ce + seed);
            acc += v.dotc(&apply_m(&v));
        }
        if acc.norm() > 1e-12 {
            alpha = acc.arg();
        }
    }
    for _ in 0..3 {
        let phase = Complex64::from_polar(1.0, -alpha);
        let herm = |v: &CVec| -> CVec {
            (apply_m(v) * phase + apply_m_dag(v) * phase.conj()) * cr(0.5)
        };
        let skew = |v: &CVec| -> CVec {
            (apply_m(v) * phase - apply_m_dag(v) * phase.conj()) * Complex64::new(0.0, -0.5)
        };
        let iters = 120.min(dim);
        let (h_lo, _) = lanczos_extremes(&herm, dim, iters);
        let (k_lo, k_hi) = lanczos_extremes(&skew, dim, iters);
        if h_lo <= 0.0 {
            // Spectrum spills beyond a half-circle around alpha: re-center
            // once, then give up with the trivial bound.
            let mid = ((k_hi.clamp(-1.0, 1.0)).asin() + (k_lo.clamp(-1.0, 1.0)).asin()) / 2.0;
            alpha += mid;
            if mid.abs() < 1e-12 {
                return 2.0;
            }
            continue;
        }
        let th_hi = k_hi.clamp(-1.0, 1.0).asin();
        let th_lo = k_lo.clamp(-1.0, 1.0).asin();
        let spread = th_hi - th_lo;
        if spread / 2.0 > 1.2 {
            // Near the validity edge; re-center on the arc midpoint.
            alpha += (th_hi + th_lo) / 2.0;
            continue;
        }
        return 2.0 * (spread / 4.0).sin();
    }
    2.0
}
