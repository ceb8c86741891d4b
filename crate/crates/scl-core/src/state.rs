//! Dense state vectors with qubit 0 as the most significant index bit.

use num_complex::Complex64;

use crate::error::SclError;
use crate::linalg::{cr, CMat, CVec};

fn eye2() -> CMat {
    crate::linalg::eye(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(n: usize, amps: Vec<Complex64>) -> Result<Self, SclError> {
        if amps.len() != 1usize << n {
            return Err(SclError::Dimension(format!(
                "state vector length {} for {} qubits",
                amps.len(),
                n
            )));
        }
        let norm_sqr: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sqr.sqrt() - 1.0).abs() > 1e-10 {
            return Err(SclError::invalid(format!("state norm {} != 1", norm_sqr.sqrt())));
        }
        Ok(Self { n, amps })
    }

    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::default(); 1 << n];
        amps[index] = cr(1.0);
        Self { n, amps }
    }

    pub fn zero(n: usize) -> Self {
        Self::basis(n, 0)
    }

    /// Product state from per-qubit 2-vectors (qubit 0 first).
    pub fn product(factors: &[[Complex64; 2]]) -> Self {
        let n = factors.len();
        let mut amps = vec![cr(1.0)];
        for f in factors {
            let mut next = Vec::with_capacity(amps.len() * 2);
            for a in &amps {
                next.push(a * f[0]);
                next.push(a * f[1]);
            }
            amps = next;
        }
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= cr(norm);
        }
        Self { n, amps }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn as_cvec(&self) -> CVec {
        CVec::from_column_slice(&self.amps)
    }

    /// Bit position of `qubit` inside an amplitude index.
    #[inline]
    fn shift(&self, qubit: usize) -> usize {
        self.n - 1 - qubit
    }

    /// Apply a 4x4 matrix to the ordered qubit pair (a, b), in place.
    pub fn apply_two_qubit(&mut self, u: &CMat, a: usize, b: usize) {
        debug_assert!(a != b && a < self.n && b < self.n);
        debug_assert_eq!(u.nrows(), 4);
        let sa = self.shift(a);
        let sb = self.shift(b);
        let ma = 1usize << sa;
        let mb = 1usize << sb;
        let dim = self.amps.len();
        let mut idx = 0usize;
        while idx < dim {
            if idx & ma == 0 && idx & mb == 0 {
                let i00 = idx;
                let i01 = idx | mb;
                let i10 = idx | ma;
                let i11 = idx | ma | mb;
                let v = [self.amps[i00], self.amps[i01], self.amps[i10], self.amps[i11]];
                for (r, &out_idx) in [i00, i01, i10, i11].iter().enumerate() {
                    let mut acc = Complex64::default();
                    for c in 0..4 {
                        acc += u[(r, c)] * v[c];
                    }
                    self.amps[out_idx] = acc;
                }
            }
            idx += 1;
        }
    }

    /// Apply a 2^k x 2^k matrix to the ordered qubit list, in place.
    pub fn apply_on(&mut self, u: &CMat, qubits: &[usize]) {
        let k = qubits.len();
        debug_assert_eq!(u.nrows(), 1 << k);
        let shifts: Vec<usize> = qubits.iter().map(|&q| self.shift(q)).collect();
        let mask: usize = shifts.iter().map(|&s| 1usize << s).sum();
        let dim = self.amps.len();
        let sub = 1usize << k;
        let mut scratch = vec![Complex64::default(); sub];
        let mut base = 0usize;
        loop {
            // Iterate over indices with all target bits clear.
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
            // Next base index with target bits clear.
            let mut next = (base | mask) + 1;
            if next >= dim {
                break;
            }
            next &= !mask;
            base = next;
        }
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Probability that `qubit` reads 0 in the computational basis.
    pub fn prob_zero(&self, qubit: usize) -> f64 {
        let m = 1usize << self.shift(qubit);
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m == 0)
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }

    /// Collapse `qubit` to the given outcome, renormalizing. Returns the
    /// pre-collapse probability of that outcome.
    pub fn collapse(&mut self, qubit: usize, outcome_one: bool) -> f64 {
        let m = 1usize << self.shift(qubit);
        let mut p = 0.0;
        for (i, z) in self.amps.iter().enumerate() {
            if (i & m != 0) == outcome_one {
                p += z.norm_sqr();
            }
        }
        let scale = cr(1.0 / p.sqrt());
        for (i, z) in self.amps.iter_mut().enumerate() {
            if (i & m != 0) == outcome_one {
                *z *= scale;
            } else {
                *z = Complex64::default();
            }
        }
        p
    }

    /// Apply a single-qubit operator in place (no unitarity assumed).
    pub fn apply_single_qubit(&mut self, m: &CMat, qubit: usize) {
        let mask = 1usize << self.shift(qubit);
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | mask];
                self.amps[i] = m[(0, 0)] * a0 + m[(0, 1)] * a1;
                self.amps[i | mask] = m[(1, 0)] * a0 + m[(1, 1)] * a1;
            }
        }
    }

    /// Probability of the -1 eigenvalue outcome when measuring `qubit`
    /// along the given Pauli axis.
    pub fn measurement_probability_one(&self, qubit: usize, axis: crate::pauli::PauliOp) -> f64 {
        let p = axis.matrix();
        let mask = 1usize << self.shift(qubit);
        // <psi| (I - P)/2 |psi> accumulated per amplitude pair.
        let mut prob = 0.0;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | mask];
                let b0 = (a0 - (p[(0, 0)] * a0 + p[(0, 1)] * a1)) * 0.5;
                let b1 = (a1 - (p[(1, 0)] * a0 + p[(1, 1)] * a1)) * 0.5;
                prob += (a0.conj() * b0 + a1.conj() * b1).re;
            }
        }
        prob.clamp(0.0, 1.0)
    }

    /// Project `qubit` onto the +/-1 eigenstate of the axis and renormalize.
    pub fn collapse_axis(&mut self, qubit: usize, axis: crate::pauli::PauliOp, outcome_one: bool) {
        let p = axis.matrix();
        let sign = if outcome_one { -1.0 } else { 1.0 };
        let proj = (eye2() + p.map(|z| z * sign)).map(|z| z * 0.5);
        self.apply_single_qubit(&proj, qubit);
        let norm: f64 = self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let scale = cr(1.0 / norm);
        for z in &mut self.amps {
            *z *= scale;
        }
    }

    /// Reduced density matrix on the ordered ascending qubit list.
    pub fn reduced_density(&self, keep: &[usize]) -> CMat {
        let k = keep.len();
        let shifts: Vec<usize> = keep.iter().map(|&q| self.shift(q)).collect();
        let dim = 1usize << k;
        let mut rho = CMat::zeros(dim, dim);
        let extract = |idx: usize| -> usize {
            let mut r = 0usize;
            for (j, &s) in shifts.iter().enumerate() {
                if idx & (1 << s) != 0 {
                    r |= 1 << (k - 1 - j);
                }
            }
            r
        };
        let mask: usize = shifts.iter().map(|&s| 1usize << s).sum();
        // Group amplitudes by the traced-out bits.
        let mut groups: std::collections::HashMap<usize, Vec<(usize, Complex64)>> =
            std::collections::HashMap::new();
        for (i, z) in self.amps.iter().enumerate() {
            if z.norm_sqr() == 0.0 {
                continue;
            }
            groups.entry(i & !mask).or_default().push((extract(i), *z));
        }
        for (_, entries) in groups {
            for &(r, zr) in &entries {
                for &(c, zc) in &entries {
                    rho[(r, c)] += zr * zc.conj();
                }
            }
        }
        rho
    }
}
