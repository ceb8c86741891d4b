//! Single-qubit stabilizer states and the stabilizer decomposition of
//! density matrices over a chosen qubit subset.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dense::DenseOperator;
use crate::error::SclError;
use crate::linalg::{c, cr, CMat};
use crate::pauli::PauliOp;

/// The six single-qubit stabilizer states. Wire names: "0", "1", "+", "-",
/// "r" (y+), "l" (y-).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilizerLabel {
    #[serde(rename = "0")]
    Z0,
    #[serde(rename = "1")]
    Z1,
    #[serde(rename = "+")]
    Xp,
    #[serde(rename = "-")]
    Xm,
    #[serde(rename = "r")]
    Yp,
    #[serde(rename = "l")]
    Ym,
}

impl StabilizerLabel {
    pub const ALL: [StabilizerLabel; 6] = [
        StabilizerLabel::Z0,
        StabilizerLabel::Z1,
        StabilizerLabel::Xp,
        StabilizerLabel::Xm,
        StabilizerLabel::Yp,
        StabilizerLabel::Ym,
    ];

    pub fn ket(self) -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            StabilizerLabel::Z0 => [cr(1.0), cr(0.0)],
            StabilizerLabel::Z1 => [cr(0.0), cr(1.0)],
            StabilizerLabel::Xp => [cr(s), cr(s)],
            StabilizerLabel::Xm => [cr(s), cr(-s)],
            StabilizerLabel::Yp => [cr(s), c(0.0, s)],
            StabilizerLabel::Ym => [cr(s), c(0.0, -s)],
        }
    }

    /// Measurement axis this state is an eigenstate of.
    pub fn axis(self) -> PauliOp {
        match self {
            StabilizerLabel::Z0 | StabilizerLabel::Z1 => PauliOp::Z,
            StabilizerLabel::Xp | StabilizerLabel::Xm => PauliOp::X,
            StabilizerLabel::Yp | StabilizerLabel::Ym => PauliOp::Y,
        }
    }

    /// Eigenvalue of this state under its own axis.
    pub fn sign(self) -> f64 {
        match self {
            StabilizerLabel::Z0 | StabilizerLabel::Xp | StabilizerLabel::Yp => 1.0,
            _ => -1.0,
        }
    }

    /// Eigenstate of `axis` with the given outcome bit (0 -> +1 eigenvalue).
    pub fn from_axis_outcome(axis: PauliOp, outcome_one: bool) -> Self {
        match (axis, outcome_one) {
            (PauliOp::Z, false) => StabilizerLabel::Z0,
            (PauliOp::Z, true) => StabilizerLabel::Z1,
            (PauliOp::X, false) => StabilizerLabel::Xp,
            (PauliOp::X, true) => StabilizerLabel::Xm,
            (PauliOp::Y, false) => StabilizerLabel::Yp,
            (PauliOp::Y, true) => StabilizerLabel::Ym,
        }
    }

    /// <s|P|s> for a single qubit; always one of {-1, 0, +1}.
    pub fn pauli_expectation(self, p: PauliOp) -> f64 {
        if self.axis() == p {
            self.sign()
        } else {
            0.0
        }
    }

    pub fn wire_name(self) -> &'static str {
        match self {
            StabilizerLabel::Z0 => "0",
            StabilizerLabel::Z1 => "1",
            StabilizerLabel::Xp => "+",
            StabilizerLabel::Xm => "-",
            StabilizerLabel::Yp => "r",
            StabilizerLabel::Ym => "l",
        }
    }

    pub fn from_wire_name(s: &str) -> Result<Self, SclError> {
        match s {
            "0" => Ok(StabilizerLabel::Z0),
            "1" => Ok(StabilizerLabel::Z1),
            "+" => Ok(StabilizerLabel::Xp),
            "-" => Ok(StabilizerLabel::Xm),
            "r" => Ok(StabilizerLabel::Yp),
            "l" => Ok(StabilizerLabel::Ym),
            _ => Err(SclError::invalid(format!("unknown stabilizer label {s:?}"))),
        }
    }

    pub fn density(self) -> CMat {
        let k = self.ket();
        CMat::from_fn(2, 2, |r, c_| k[r] * k[c_].conj())
    }
}

/// One term of a stabilizer decomposition.
#[derive(Debug, Clone)]
pub struct StabTerm {
    pub coefficient: f64,
    /// Stabilizer label per decomposed qubit, ascending qubit order.
    pub labels: Vec<(usize, StabilizerLabel)>,
    /// Normalized conditional operator on the remaining support qubits
    /// (a 1x1 identity when the subset covers the whole support).
    pub conditional: DenseOperator,
}

/// The 10 per-qubit decomposition entries (kept state, projected state, weight).
const DECOMP_TABLE: [(StabilizerLabel, StabilizerLabel, f64); 10] = [
    (StabilizerLabel::Z0, StabilizerLabel::Z0, 1.0),
    (StabilizerLabel::Z1, StabilizerLabel::Z1, 1.0),
    (StabilizerLabel::Xp, StabilizerLabel::Xp, 0.5),
    (StabilizerLabel::Xp, StabilizerLabel::Xm, -0.5),
    (StabilizerLabel::Xm, StabilizerLabel::Xp, -0.5),
    (StabilizerLabel::Xm, StabilizerLabel::Xm, 0.5),
    (StabilizerLabel::Yp, StabilizerLabel::Yp, 0.5),
    (StabilizerLabel::Yp, StabilizerLabel::Ym, -0.5),
    (StabilizerLabel::Ym, StabilizerLabel::Yp, -0.5),
    (StabilizerLabel::Ym, StabilizerLabel::Ym, 0.5),
];

/// Decompose a density matrix over the qubit subset `subset` of its support
/// into 10^|subset| weighted terms, each a product stabilizer on the subset
/// tensored with a normalized conditional on the rest. The coefficients sum
/// to 1 and their absolute values sum to 3^|subset|.
pub fn stabilizer_decompose(
    rho: &DenseOperator,
    subset: &[usize],
) -> Result<Vec<StabTerm>, SclError> {
    if !rho.is_hermitian() {
        return Err(SclError::invalid("stabilizer_decompose needs a Hermitian operator"));
    }
    let support = rho.support_set();
    for q in subset {
        if !support.contains(q) {
            return Err(SclError::invalid("subset qubit outside support"));
        }
    }
    let mut subset: Vec<usize> = subset.to_vec();
    subset.sort_unstable();
    subset.dedup();
    let k = subset.len();
    let rest: Vec<usize> = rho
        .support()
        .iter()
        .cloned()
        .filter(|q| !subset.contains(q))
        .collect();
    let rest_dim = 1usize << rest.len();
    let maximally_mixed = DenseOperator::new(
        rest.clone(),
        CMat::identity(rest_dim, rest_dim).map(|z| z / cr(rest_dim as f64)),
    )?;

    let mut terms = Vec::with_capacity(10usize.pow(k as u32));
    let mut choice = vec![0usize; k];
    loop {
        let mut weight = 1.0;
        let mut labels = Vec::with_capacity(k);
        let mut projected = rho.clone();
        for (i, &q) in subset.iter().enumerate() {
            let (kept, proj, b) = DECOMP_TABLE[choice[i]];
            weight *= b;
            labels.push((q, kept));
            projected = projected.project_qubit(q, proj.ket())?;
        }
        let z = projected.matrix().trace().re;
        let (alpha, conditional) = if z > 1e-14 {
            let m = projected.matrix().map(|x| x / cr(z));
            (z * weight, DenseOperator::new(rest.clone(), m)?)
        } else {
            (0.0, maximally_mixed.clone())
        };
        terms.push(StabTerm { coefficient: alpha, labels, conditional });

        // Advance the mixed-radix counter.
        let mut i = 0;
        loop {
            if i == k {
                return Ok(terms);
            }
            choice[i] += 1;
            if choice[i] < 10 {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Recompose a stabilizer decomposition back into a dense operator on the
/// original support (test/diagnostic helper).
pub fn recompose(terms: &[StabTerm], support: &[usize]) -> Result<DenseOperator, SclError> {
    let dim = 1usize << support.len();
    let mut acc = CMat::zeros(dim, dim);
    for t in terms {
        if t.coefficient == 0.0 {
            continue;
        }
        // Label projectors tensored with the conditional, then embedded.
        let mut full = t.conditional.clone();
        for &(q, s) in &t.labels {
            let sd = DenseOperator::new(vec![q], s.density())?;
            full = tensor_dense(&full, &sd)?;
        }
        let emb = full.embed(support)?;
        acc += emb.matrix().map(|z| z * cr(t.coefficient));
    }
    DenseOperator::new(support.to_vec(), acc)
}

/// Tensor two operators with disjoint supports (result support ascending).
pub fn tensor_dense(a: &DenseOperator, b: &DenseOperator) -> Result<DenseOperator, SclError> {
    let mut support: Vec<usize> = a.support().iter().chain(b.support()).cloned().collect();
    support.sort_unstable();
    if a.support_set().intersection(&b.support_set()).count() > 0 {
        return Err(SclError::invalid("tensor supports overlap"));
    }
    let k = support.len();
    let dim = 1usize << k;
    let a_pos: Vec<usize> = a.support().iter().map(|q| support.iter().position(|s| s == q).unwrap()).collect();
    let b_pos: Vec<usize> = b.support().iter().map(|q| support.iter().position(|s| s == q).unwrap()).collect();
    let extract = |idx: usize, pos: &[usize]| -> usize {
        let mut r = 0usize;
        for (j, &p) in pos.iter().enumerate() {
            if idx & (1 << (k - 1 - p)) != 0 {
                r |= 1 << (pos.len() - 1 - j);
            }
        }
        r
    };
    let m = CMat::from_fn(dim, dim, |r, c_| {
        a.matrix()[(extract(r, &a_pos), extract(c_, &a_pos))]
            * b.matrix()[(extract(r, &b_pos), extract(c_, &b_pos))]
    });
    DenseOperator::new(support, m)
}
