//! Identity checks, strong and weak, and the PASS/FAIL verifier that tests a
//! learned circuit against dataset access to the unknown channel.
//!
//! The verifier never touches the simulator directly: it estimates the Pauli
//! transfer coefficients of the unknown channel on small supports from the
//! randomized measurement dataset, composes them classically with the learned
//! circuit's exact Heisenberg images, and folds the per-qubit deviations into
//! a single decision.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::dataset::MeasurementDataset;
use crate::dense::DenseOperator;
use crate::dense_cap;
use crate::error::SclError;
use crate::heisenberg::heisenberg_observable_exact;
use crate::linalg::spectral_norm;
use crate::obs::SUPPORT_K_MAX;
use crate::pauli::{PauliObservable, PauliOp, PauliString};

/// ½ Σ_{P ∈ {X,Y,Z}} ‖U†P_iU − P_i‖_∞, the sufficient-condition quantity for
/// the strong local identity check. Zero whenever U commutes with every Pauli
/// on qubit i, in particular when i lies outside U's support.
pub fn strong_local_deviation(u: &DenseOperator, i: usize) -> Result<f64, SclError> {
    if !u.is_unitary() {
        return Err(SclError::invalid("strong deviation needs a unitary"));
    }
    if !u.support().contains(&i) {
        return Ok(0.0);
    }
    let support = u.support().to_vec();
    let mut total = 0.0;
    for op in PauliOp::ALL {
        let p = PauliString::single(i, op).matrix_on(&support);
        let diff = u.matrix().adjoint() * &p * u.matrix() - &p;
        total += spectral_norm(&diff);
    }
    Ok(0.5 * total)
}

/// Total squared Pauli weight of U on qubit i: Σ_{P : P_i ≠ I} |α_P|² in the
/// normalized expansion U = Σ_P α_P P. Equals (3/2)·D_ave(E_i^U, I).
///
/// Computed without enumerating Pauli strings: the weight with identity at i
/// is ‖Tr_i U‖_F² / 2^{k+1} for a k-qubit unitary, and the total weight is 1.
pub fn pauli_influence(u: &DenseOperator, i: usize) -> Result<f64, SclError> {
    if !u.is_unitary() {
        return Err(SclError::invalid("influence needs a unitary"));
    }
    let k = u.support().len();
    let cap = dense_cap();
    if k > cap {
        return Err(SclError::DenseCap { qubits: k, cap });
    }
    if !u.support().contains(&i) {
        return Ok(0.0);
    }
    let keep: Vec<usize> = u.support().iter().cloned().filter(|&q| q != i).collect();
    let trace_out = if keep.is_empty() {
        u.matrix().trace().norm_sqr()
    } else {
        let m = u.partial_trace(&keep)?;
        m.matrix().iter().map(|z| z.norm_sqr()).sum()
    };
    Ok((1.0 - trace_out / (1u64 << (k + 1)) as f64).clamp(0.0, 1.0))
}

/// Estimate ô_i = D_ave(E_i^{V̂†C}, I) for every system qubit i from a
/// unitary-mode dataset of the unknown channel C.
///
/// For each i the Heisenberg image V̂ σ_{b,i} V̂† is expanded exactly into
/// Pauli strings on its lightcone S_i; the dataset supplies the empirical
/// transfer means R̂_{Q,b} = E[x_b · y_Q] with x_b the input-side and y_Q the
/// outcome-side shadow values. The diagonal single-qubit transfer entries are
/// r_bb = Σ_Q c_{b,Q} R̂_{Q,b} and ô_i = ½ − (r_XX + r_YY + r_ZZ)/6, clamped
/// at zero.
///
/// V̂ may act on more qubits than the system (ancillas start and end
/// maximally mixed); Pauli terms leaving the system contribute nothing and
/// are skipped.
pub fn estimate_local_deviations(
    ds: &MeasurementDataset,
    v_hat: &Circuit,
) -> Result<Vec<f64>, SclError> {
    let samples = ds.unitary_samples()?;
    if samples.is_empty() {
        return Err(SclError::invalid("empty dataset"));
    }
    let n = ds.n;
    if v_hat.num_qubits() < n {
        return Err(SclError::invalid("learned circuit smaller than the system"));
    }
    let v_dag = v_hat.dagger();
    (0..n)
        .into_par_iter()
        .map(|i| {
            // x_b[s] = 3·⟨input_i|σ_b|input_i⟩ reconstructs σ_b,i on average.
            let xin: Vec<[f64; 3]> = samples
                .iter()
                .map(|s| {
                    let mut row = [0.0; 3];
                    for (bi, op) in PauliOp::ALL.into_iter().enumerate() {
                        row[bi] = 3.0 * s.input[i].pauli_expectation(op);
                    }
                    row
                })
                .collect();
            let mut dots: HashMap<PauliString, [f64; 3]> = HashMap::new();
            let mut trace_r3 = 0.0;
            for (bi, op) in PauliOp::ALL.into_iter().enumerate() {
                let h = heisenberg_observable_exact(&v_dag, i, op)?;
                if h.support().len() > SUPPORT_K_MAX {
                    return Err(SclError::invalid(format!(
                        "lightcone of qubit {} has {} qubits, cap {}",
                        i,
                        h.support().len(),
                        SUPPORT_K_MAX
                    )));
                }
                let obs = PauliObservable::from_matrix(h.matrix(), h.support(), 1e-12)?;
                let mut r_bb = 0.0;
                for (q, coef) in obs.terms() {
                    if q.support().any(|s| s >= n) {
                        continue;
                    }
                    let entry = dots.entry(q.clone()).or_insert_with(|| {
                        let mut acc = [0.0; 3];
                        let scale = 3f64.powi(q.weight() as i32);
                        for (s, x) in samples.iter().zip(&xin) {
                            let mut y = scale;
                            for (sq, sop) in q.iter() {
                                y *= s.outcome[sq].pauli_expectation(sop);
                                if y == 0.0 {
                                    break;
                                }
                            }
                            if y != 0.0 {
                                for a in 0..3 {
                                    acc[a] += x[a] * y;
                                }
                            }
                        }
                        for a in &mut acc {
                            *a /= samples.len() as f64;
                        }
                        acc
                    });
                    r_bb += coef * entry[bi];
                }
                trace_r3 += r_bb;
            }
            Ok((0.5 - trace_r3 / 6.0).max(0.0))
        })
        .collect()
}

/// Dataset size for verification at error ε and failure probability δ; the
/// leading constant is an empirical calibration for the desk-scale estimator.
pub fn verification_sample_size(eps: f64, delta: f64, n: usize) -> usize {
    let n = n as f64;
    (200.0 * n * n * (n / delta).ln() / (eps * eps)).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

/// PASS iff (3/2) Σ ô_i ≤ ε/2, inclusive at the boundary.
pub fn verify(o: &[f64], eps: f64) -> Verdict {
    let score = 1.5 * o.iter().sum::<f64>();
    if score <= eps / 2.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub o: Vec<f64>,
    pub score: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

pub fn verify_report(o: Vec<f64>, eps: f64) -> VerifyReport {
    let verdict = verify(&o, eps);
    let score = 1.5 * o.iter().sum::<f64>();
    VerifyReport { o, score, threshold: eps / 2.0, verdict }
}
