//! Reduced channels of a circuit, stored as normalized Choi states.
//!
//! The Choi index is (out_bits << k_in) | in_bits, with the usual
//! ascending-qubit, most-significant-first convention inside each block.

use num_complex::Complex64;

use crate::circuit::Circuit;
use crate::dense_cap;
use crate::error::SclError;
use crate::linalg::{dagger, hermitian_eig, is_hermitian, CMat};
use crate::state::StateVector;

const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SmallChannel {
    in_support: Vec<usize>,
    out_support: Vec<usize>,
    choi: CMat,
}

impl SmallChannel {
    pub fn new(in_support: Vec<usize>, out_support: Vec<usize>, choi: CMat) -> Result<Self, SclError> {
        let k_in = in_support.len();
        let k_out = out_support.len();
        let dim = 1usize << (k_in + k_out);
        if choi.nrows() != dim || choi.ncols() != dim {
            return Err(SclError::Dimension("choi matrix size".into()));
        }
        if !in_support.windows(2).all(|w| w[0] < w[1]) || !out_support.windows(2).all(|w| w[0] < w[1]) {
            return Err(SclError::invalid("supports must be strictly ascending"));
        }
        if !is_hermitian(&choi, PSD_TOL) {
            return Err(SclError::invalid("choi not hermitian"));
        }
        if (choi.trace().re - 1.0).abs() > PSD_TOL || choi.trace().im.abs() > PSD_TOL {
            return Err(SclError::invalid("choi trace must be 1"));
        }
        let (eigs, _) = hermitian_eig(&choi);
        if eigs.iter().cloned().fold(f64::INFINITY, f64::min) < -PSD_TOL {
            return Err(SclError::invalid("choi not positive semidefinite"));
        }
        let chan = Self { in_support, out_support, choi };
        let marginal = chan.input_marginal();
        let d_in = 1usize << k_in;
        for r in 0..d_in {
            for c in 0..d_in {
                let want = if r == c { 1.0 / d_in as f64 } else { 0.0 };
                if (marginal[(r, c)] - Complex64::new(want, 0.0)).norm() > PSD_TOL {
                    return Err(SclError::invalid("channel is not trace-preserving"));
                }
            }
        }
        Ok(chan)
    }

    pub fn in_support(&self) -> &[usize] {
        &self.in_support
    }

    pub fn out_support(&self) -> &[usize] {
        &self.out_support
    }

    pub fn choi(&self) -> &CMat {
        &self.choi
    }

    /// Partial trace of the Choi state over the output block.
    fn input_marginal(&self) -> CMat {
        let d_in = 1usize << self.in_support.len();
        let d_out = 1usize << self.out_support.len();
        let mut m = CMat::zeros(d_in, d_in);
        for o in 0..d_out {
            for r in 0..d_in {
                for c in 0..d_in {
                    m[(r, c)] += self.choi[((o << self.in_support.len()) | r, (o << self.in_support.len()) | c)];
                }
            }
        }
        m
    }

    /// Apply the channel to a density matrix on the input support.
    pub fn apply(&self, rho: &CMat) -> Result<CMat, SclError> {
        let k_in = self.in_support.len();
        let d_in = 1usize << k_in;
        let d_out = 1usize << self.out_support.len();
        if rho.nrows() != d_in || rho.ncols() != d_in {
            return Err(SclError::Dimension("input density size".into()));
        }
        // E(rho) = d_in * Tr_in[ choi (I_out ⊗ rho^T) ]
        let mut out = CMat::zeros(d_out, d_out);
        for o in 0..d_out {
            for op in 0..d_out {
                let mut acc = Complex64::default();
                for j in 0..d_in {
                    for k in 0..d_in {
                        acc += self.choi[((o << k_in) | j, (op << k_in) | k)] * rho[(j, k)];
                    }
                }
                out[(o, op)] = acc * d_in as f64;
            }
        }
        Ok(out)
    }

    /// D_ave between this channel and a target unitary on the same support,
    /// via entanglement fidelity of the twisted channel.
    pub fn average_distance_to_unitary(&self, u: &CMat) -> Result<f64, SclError> {
        let k_in = self.in_support.len();
        if self.in_support != self.out_support {
            return Err(SclError::invalid("distance needs matching in/out supports"));
        }
        let d = 1usize << k_in;
        if u.nrows() != d || u.ncols() != d {
            return Err(SclError::Dimension("target unitary size".into()));
        }
        if !crate::linalg::is_unitary(u, 1e-9) {
            return Err(SclError::invalid("target is not unitary"));
        }
        // |Φ_U⟩ = (U ⊗ I)|Φ⟩, entanglement fidelity F_e = ⟨Φ_U|J|Φ_U⟩.
        let dim = d * d;
        let mut phi = nalgebra::DVector::<Complex64>::zeros(dim);
        let norm = 1.0 / (d as f64).sqrt();
        for j in 0..d {
            for o in 0..d {
                phi[(o << k_in) | j] = u[(o, j)] * norm;
            }
        }
        let fe = (phi.adjoint() * &self.choi * &phi)[(0, 0)].re;
        let f_avg = (d as f64 * fe + 1.0) / (d as f64 + 1.0);
        Ok((1.0 - f_avg).clamp(0.0, 1.0))
    }
}

/// Choi state of the map that feeds maximally mixed states on inputs outside
/// `keep_in`, applies the circuit, and traces outputs outside `keep_out`.
pub fn reduced_channel(
    circuit: &Circuit,
    keep_in: &[usize],
    keep_out: &[usize],
) -> Result<SmallChannel, SclError> {
    let n = circuit.num_qubits();
    let cap = dense_cap();
    if n > cap {
        return Err(SclError::DenseCap { qubits: n, cap });
    }
    for &q in keep_in.iter().chain(keep_out) {
        if q >= n {
            return Err(SclError::invalid("kept qubit out of range"));
        }
    }
    let mut keep_in = keep_in.to_vec();
    keep_in.sort_unstable();
    keep_in.dedup();
    let mut keep_out = keep_out.to_vec();
    keep_out.sort_unstable();
    keep_out.dedup();
    let k_in = keep_in.len();
    let k_out = keep_out.len();
    let m = n - k_in;
    let traced_in: Vec<usize> = (0..n).filter(|q| !keep_in.contains(q)).collect();
    let total = n + m;

    // Purify each traced input with a reference copy; apply the circuit to the
    // system half; the cross partial traces of the resulting vectors give the
    // Choi blocks.
    let d_out = 1usize << k_out;
    let cols = 1usize << (total - k_out);
    let mut reshaped: Vec<CMat> = Vec::with_capacity(1 << k_in);
    for j in 0..(1usize << k_in) {
        let mut psi = StateVector::zero(total);
        {
            let amps = psi.amplitudes_mut();
            amps[0] = Complex64::default();
            let amp = Complex64::new(1.0 / (1u64 << m) as f64, 0.0).sqrt();
            for b in 0..(1usize << m) {
                let mut idx = 0usize;
                for (pos, &q) in keep_in.iter().enumerate() {
                    if (j >> (k_in - 1 - pos)) & 1 == 1 {
                        idx |= 1 << (total - 1 - q);
                    }
                }
                for (pos, &q) in traced_in.iter().enumerate() {
                    if (b >> (m - 1 - pos)) & 1 == 1 {
                        idx |= 1 << (total - 1 - q);
                        idx |= 1 << (total - 1 - (n + pos));
                    }
                }
                amps[idx] = amp;
            }
        }
        for layer in circuit.layers() {
            for g in layer {
                let (a, bq) = g.qubits();
                psi.apply_two_qubit(g.matrix(), a, bq);
            }
        }
        // Reshape into (kept-out rows) x (everything-else columns).
        let out_shifts: Vec<usize> = keep_out.iter().map(|&q| total - 1 - q).collect();
        let trace_shifts: Vec<usize> =
            (0..total).rev().filter(|s| !out_shifts.contains(s)).collect();
        let mut v = CMat::zeros(d_out, cols);
        for (i, &z) in psi.amplitudes().iter().enumerate() {
            if z != Complex64::default() {
                let mut o = 0usize;
                for (pos, &s) in out_shifts.iter().enumerate() {
                    if (i >> s) & 1 == 1 {
                        o |= 1 << (k_out - 1 - pos);
                    }
                }
                let mut t = 0usize;
                for (pos, &s) in trace_shifts.iter().enumerate() {
                    if (i >> s) & 1 == 1 {
                        t |= 1 << (trace_shifts.len() - 1 - pos);
                    }
                }
                v[(o, t)] += z;
            }
        }
        reshaped.push(v);
    }

    let d_in = 1usize << k_in;
    let dim = d_in * d_out;
    let mut choi = CMat::zeros(dim, dim);
    let scale = 1.0 / d_in as f64;
    for j in 0..d_in {
        for k in 0..d_in {
            let block = &reshaped[j] * dagger(&reshaped[k]);
            for o in 0..d_out {
                for op in 0..d_out {
                    choi[((o << k_in) | j, (op << k_in) | k)] = block[(o, op)] * scale;
                }
            }
        }
    }
    SmallChannel::new(keep_in, keep_out, choi)
}
