//! Dense few-qubit operators attached to an explicit qubit support.

use std::collections::BTreeSet;

use crate::error::SclError;
use crate::linalg::{is_hermitian, is_unitary, CMat};
use crate::state::StateVector;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    support: Vec<usize>,
    matrix: CMat,
    hermitian: bool,
    unitary: bool,
}

impl DenseOperator {
    pub fn new(support: Vec<usize>, matrix: CMat) -> Result<Self, SclError> {
        let unique: BTreeSet<usize> = support.iter().cloned().collect();
        if unique.len() != support.len() {
            return Err(SclError::invalid("duplicate qubits in support"));
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(SclError::invalid("support must be ascending"));
        }
        let dim = 1usize << support.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(SclError::Dimension(format!(
                "matrix {}x{} vs support of {} qubits",
                matrix.nrows(),
                matrix.ncols(),
                support.len()
            )));
        }
        let hermitian = is_hermitian(&matrix, 1e-10);
        let unitary = is_unitary(&matrix, 1e-10);
        Ok(Self { support, matrix, hermitian, unitary })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_set(&self) -> BTreeSet<usize> {
        self.support.iter().cloned().collect()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn num_qubits(&self) -> usize {
        self.support.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    /// Re-express on a superset support (identity on the added qubits).
    pub fn embed(&self, support: &[usize]) -> Result<Self, SclError> {
        let target: BTreeSet<usize> = support.iter().cloned().collect();
        if !self.support_set().is_subset(&target) {
            return Err(SclError::invalid("embed target misses support qubits"));
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(SclError::invalid("embed support must be ascending"));
        }
        let k = support.len();
        let dim = 1usize << k;
        // Position of each old-support qubit inside the new index.
        let pos: Vec<usize> = self
            .support
            .iter()
            .map(|q| support.iter().position(|s| s == q).unwrap())
            .collect();
        let old_k = self.support.len();
        let extract = |idx: usize| -> usize {
            let mut r = 0usize;
            for (j, &p) in pos.iter().enumerate() {
                if idx & (1 << (k - 1 - p)) != 0 {
                    r |= 1 << (old_k - 1 - j);
                }
            }
            r
        };
        let rest_mask: usize = {
            let mut m = dim - 1;
            for &p in &pos {
                m &= !(1 << (k - 1 - p));
            }
            m
        };
        let mut out = CMat::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                if r & rest_mask == c & rest_mask {
                    out[(r, c)] = self.matrix[(extract(r), extract(c))];
                }
            }
        }
        Self::new(support.to_vec(), out)
    }

    /// Partial trace onto `keep` (must be a subset of the support).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self, SclError> {
        let keep_set: BTreeSet<usize> = keep.iter().cloned().collect();
        if !keep_set.is_subset(&self.support_set()) {
            return Err(SclError::invalid("keep outside support"));
        }
        let k = self.support.len();
        let pos: Vec<usize> = keep
            .iter()
            .map(|q| self.support.iter().position(|s| s == q).unwrap())
            .collect();
        let kk = keep.len();
        let keep_mask: usize = pos.iter().map(|&p| 1usize << (k - 1 - p)).sum();
        let full = 1usize << k;
        let extract = |idx: usize| -> usize {
            let mut r = 0usize;
            for (j, &p) in pos.iter().enumerate() {
                if idx & (1 << (k - 1 - p)) != 0 {
                    r |= 1 << (kk - 1 - j);
                }
            }
            r
        };
        let dim = 1usize << kk;
        let mut out = CMat::zeros(dim, dim);
        for r in 0..full {
            for c in 0..full {
                if r & !keep_mask == c & !keep_mask {
                    out[(extract(r), extract(c))] += self.matrix[(r, c)];
                }
            }
        }
        Self::new(keep.to_vec(), out)
    }

    /// Partial inner product <bra| M |bra> on one support qubit; the result
    /// lives on the remaining support.
    pub fn project_qubit(&self, qubit: usize, bra: [num_complex::Complex64; 2]) -> Result<Self, SclError> {
        let p = self
            .support
            .iter()
            .position(|&q| q == qubit)
            .ok_or_else(|| SclError::invalid("projected qubit not in support"))?;
        let k = self.support.len();
        let bit = 1usize << (k - 1 - p);
        let rest: Vec<usize> = self.support.iter().cloned().filter(|&q| q != qubit).collect();
        let dim = 1usize << (k - 1);
        let expand = |idx: usize, set: bool| -> usize {
            let high = (idx >> (k - 1 - p)) << (k - p);
            let low = idx & (bit - 1);
            high | low | if set { bit } else { 0 }
        };
        let mut out = CMat::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                let mut acc = num_complex::Complex64::default();
                for (x, bx) in bra.iter().enumerate() {
                    for (y, by) in bra.iter().enumerate() {
                        acc += bx.conj() * by
                            * self.matrix[(expand(r, x == 1), expand(c, y == 1))];
                    }
                }
                out[(r, c)] = acc;
            }
        }
        Self::new(rest, out)
    }

    /// Expectation value on a full state (support indexes into the state).
    pub fn expectation(&self, state: &StateVector) -> Result<f64, SclError> {
        let rho = state.reduced_density(&self.support);
        let val = (self.matrix.clone() * rho).trace();
        Ok(val.re)
    }
}
