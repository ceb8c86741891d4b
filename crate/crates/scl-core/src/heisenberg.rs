//! Exact Heisenberg evolution of single-qubit Paulis through a circuit.
//!
//! U†P_iU is computed by conjugating P_i through the layers in reverse,
//! growing the active support only when a gate actually touches it. For
//! depth-d circuits the result lives on the structural lightcone of {i}.

use crate::circuit::Circuit;
use crate::dense::DenseOperator;
use crate::error::SclError;
use crate::linalg::{dagger, CMat};
use crate::pauli::PauliOp;

/// U†P_iU restricted to its support, with identity tensor factors trimmed.
pub fn heisenberg_observable_exact(
    circuit: &Circuit,
    qubit: usize,
    pauli: PauliOp,
) -> Result<DenseOperator, SclError> {
    if qubit >= circuit.num_qubits() {
        return Err(SclError::invalid(format!(
            "qubit {} out of range for {}-qubit circuit",
            qubit,
            circuit.num_qubits()
        )));
    }
    let mut support: Vec<usize> = vec![qubit];
    let mut matrix: CMat = pauli.matrix();
    for layer in circuit.layers().iter().rev() {
        for gate in layer {
            let (a, b) = gate.qubits();
            if !support.contains(&a) && !support.contains(&b) {
                continue;
            }
            let mut grown = support.clone();
            for q in [a, b] {
                if !grown.contains(&q) {
                    grown.push(q);
                }
            }
            grown.sort_unstable();
            let op = DenseOperator::new(support, matrix)?.embed(&grown)?;
            let gate_full = embed_gate(gate.matrix(), a, b, &grown);
            matrix = dagger(&gate_full) * op.matrix() * &gate_full;
            support = grown;
        }
    }
    let trimmed = trim_identity_qubits(&support, &matrix);
    DenseOperator::new(trimmed.0, trimmed.1)
}

/// Embed a two-qubit gate on (a, b) into the full operator on `support`.
/// Row/column index within the gate is 2*bit_a + bit_b.
pub fn embed_gate(u: &CMat, a: usize, b: usize, support: &[usize]) -> CMat {
    let k = support.len();
    let dim = 1usize << k;
    let pa = support.iter().position(|&q| q == a).expect("a in support");
    let pb = support.iter().position(|&q| q == b).expect("b in support");
    let sa = k - 1 - pa;
    let sb = k - 1 - pb;
    let mut out = CMat::zeros(dim, dim);
    for row in 0..dim {
        let ra = (row >> sa) & 1;
        let rb = (row >> sb) & 1;
        let base = row & !(1 << sa) & !(1 << sb);
        for ca in 0..2usize {
            for cb in 0..2usize {
                let col = base | (ca << sa) | (cb << sb);
                out[(row, col)] = u[(2 * ra + rb, 2 * ca + cb)];
            }
        }
    }
    out
}

/// Drop qubits on which the operator acts as the identity factor.
fn trim_identity_qubits(support: &[usize], matrix: &CMat) -> (Vec<usize>, CMat) {
    let mut support = support.to_vec();
    let mut matrix = matrix.clone();
    'outer: loop {
        if support.len() <= 1 {
            return (support, matrix);
        }
        for pos in 0..support.len() {
            if let Some(reduced) = try_remove_factor(&support, &matrix, pos) {
                support.remove(pos);
                matrix = reduced;
                continue 'outer;
            }
        }
        return (support, matrix);
    }
}

/// If `matrix` = M ⊗ I at tensor slot `pos`, return M; otherwise None.
fn try_remove_factor(support: &[usize], matrix: &CMat, pos: usize) -> Option<CMat> {
    let k = support.len();
    let shift = k - 1 - pos;
    let dim = 1usize << (k - 1);
    let insert = |idx: usize, bit: usize| -> usize {
        let high = (idx >> shift) << (shift + 1);
        let low = idx & ((1 << shift) - 1);
        high | (bit << shift) | low
    };
    let mut out = CMat::zeros(dim, dim);
    let tol = 1e-12;
    for r in 0..dim {
        for c in 0..dim {
            let v00 = matrix[(insert(r, 0), insert(c, 0))];
            let v11 = matrix[(insert(r, 1), insert(c, 1))];
            let v01 = matrix[(insert(r, 0), insert(c, 1))];
            let v10 = matrix[(insert(r, 1), insert(c, 0))];
            if (v00 - v11).norm() > tol || v01.norm() > tol || v10.norm() > tol {
                return None;
            }
            out[(r, c)] = v00;
        }
    }
    Some(out)
}
