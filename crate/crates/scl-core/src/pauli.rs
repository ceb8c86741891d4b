//! Pauli strings and real-linear combinations of them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SclError;
use crate::linalg::{c, cr, eye, kron, spectral_norm, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PauliOp {
    X,
    Y,
    Z,
}

impl PauliOp {
    pub fn matrix(self) -> CMat {
        match self {
            PauliOp::X => CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]),
            PauliOp::Y => CMat::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]),
            PauliOp::Z => CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]),
        }
    }

    pub fn letter(self) -> char {
        match self {
            PauliOp::X => 'X',
            PauliOp::Y => 'Y',
            PauliOp::Z => 'Z',
        }
    }

    pub fn from_letter(ch: char) -> Option<Self> {
        match ch {
            'X' => Some(PauliOp::X),
            'Y' => Some(PauliOp::Y),
            'Z' => Some(PauliOp::Z),
            _ => None,
        }
    }

    pub const ALL: [PauliOp; 3] = [PauliOp::X, PauliOp::Y, PauliOp::Z];
}

/// Tensor product of single-qubit Paulis; identity on unlisted qubits.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    ops: BTreeMap<usize, PauliOp>,
}

impl PauliString {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn single(qubit: usize, op: PauliOp) -> Self {
        let mut ops = BTreeMap::new();
        ops.insert(qubit, op);
        Self { ops }
    }

    pub fn from_ops(ops: impl IntoIterator<Item = (usize, PauliOp)>) -> Self {
        Self { ops: ops.into_iter().collect() }
    }

    pub fn weight(&self) -> usize {
        self.ops.len()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.ops.keys().cloned()
    }

    pub fn support_set(&self) -> BTreeSet<usize> {
        self.ops.keys().cloned().collect()
    }

    pub fn op_at(&self, qubit: usize) -> Option<PauliOp> {
        self.ops.get(&qubit).cloned()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, PauliOp)> + '_ {
        self.ops.iter().map(|(q, p)| (*q, *p))
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    /// Dense matrix on the ordered qubit list `support` (ascending, must
    /// contain the string's support).
    pub fn matrix_on(&self, support: &[usize]) -> CMat {
        let mut m = eye(1);
        for q in support {
            let f = match self.ops.get(q) {
                Some(op) => op.matrix(),
                None => eye(2),
            };
            m = kron(&m, &f);
        }
        m
    }

    pub fn parse(s: &str) -> Result<Self, SclError> {
        let s = s.trim();
        if s.is_empty() || s == "I" {
            return Ok(Self::identity());
        }
        let mut ops = BTreeMap::new();
        let mut chars = s.chars().peekable();
        while let Some(ch) = chars.next() {
            let op = PauliOp::from_letter(ch)
                .ok_or_else(|| SclError::invalid(format!("bad pauli letter in {s:?}")))?;
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            if digits.is_empty() {
                return Err(SclError::invalid(format!("missing qubit index in {s:?}")));
            }
            let q: usize = digits.parse().map_err(|_| SclError::invalid("qubit index"))?;
            if ops.insert(q, op).is_some() {
                return Err(SclError::invalid(format!("duplicate qubit {q} in {s:?}")));
            }
        }
        Ok(Self { ops })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return write!(f, "I");
        }
        for (q, op) in &self.ops {
            write!(f, "{}{}", op.letter(), q)?;
        }
        Ok(())
    }
}

/// Real linear combination of Pauli strings with a declared support.
/// Zero coefficients are never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PauliObservable {
    terms: BTreeMap<PauliString, f64>,
    declared_support: BTreeSet<usize>,
}

impl PauliObservable {
    pub fn new(support: impl IntoIterator<Item = usize>) -> Self {
        Self { terms: BTreeMap::new(), declared_support: support.into_iter().collect() }
    }

    pub fn set(&mut self, p: PauliString, coef: f64) -> Result<(), SclError> {
        if !p.support_set().is_subset(&self.declared_support) {
            return Err(SclError::invalid("term outside declared support"));
        }
        if coef == 0.0 {
            self.terms.remove(&p);
        } else {
            self.terms.insert(p, coef);
        }
        Ok(())
    }

    pub fn coef(&self, p: &PauliString) -> f64 {
        self.terms.get(p).cloned().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, f64)> + '_ {
        self.terms.iter().map(|(p, c)| (p, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn declared_support(&self) -> &BTreeSet<usize> {
        &self.declared_support
    }

    /// Union of term supports (can be smaller than the declared support).
    pub fn actual_support(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        for p in self.terms.keys() {
            s.extend(p.support());
        }
        s
    }

    /// Dense matrix on the ordered ascending list of declared-support qubits.
    pub fn to_matrix(&self) -> CMat {
        let support: Vec<usize> = self.declared_support.iter().cloned().collect();
        let dim = 1usize << support.len();
        let mut m = CMat::zeros(dim, dim);
        for (p, coef) in &self.terms {
            m += p.matrix_on(&support).map(|z| z * cr(*coef));
        }
        m
    }

    /// Expand a Hermitian matrix on the ordered qubit list `support` into
    /// Pauli coefficients, dropping magnitudes below `tol`.
    pub fn from_matrix(m: &CMat, support: &[usize], tol: f64) -> Result<Self, SclError> {
        let k = support.len();
        if m.nrows() != (1 << k) || m.ncols() != (1 << k) {
            return Err(SclError::Dimension("observable matrix vs support".into()));
        }
        let mut obs = Self::new(support.iter().cloned());
        let dim = 1usize << k;
        for string in enumerate_paulis(support) {
            let pm = string.matrix_on(support);
            let tr: Complex64 = (pm * m).trace();
            let coef = tr.re / dim as f64;
            if coef.abs() > tol {
                obs.set(string, coef)?;
            }
        }
        Ok(obs)
    }

    pub fn spectral_distance(&self, other: &Self) -> f64 {
        let support: Vec<usize> = self
            .declared_support
            .union(&other.declared_support)
            .cloned()
            .collect();
        let dim = 1usize << support.len();
        let mut m = CMat::zeros(dim, dim);
        for (p, coef) in &self.terms {
            m += p.matrix_on(&support).map(|z| z * cr(*coef));
        }
        for (p, coef) in &other.terms {
            m -= p.matrix_on(&support).map(|z| z * cr(*coef));
        }
        spectral_norm(&m)
    }

    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(&self.to_matrix())
    }

    pub fn max_coef_distance(&self, other: &Self) -> f64 {
        let mut keys: BTreeSet<&PauliString> = self.terms.keys().collect();
        keys.extend(other.terms.keys());
        keys.into_iter()
            .map(|p| (self.coef(p) - other.coef(p)).abs())
            .fold(0.0, f64::max)
    }
}

/// All 4^k Pauli strings (including identity) on the given qubits.
pub fn enumerate_paulis(support: &[usize]) -> Vec<PauliString> {
    let mut out = vec![PauliString::identity()];
    for &q in support {
        let mut next = Vec::with_capacity(out.len() * 4);
        for s in &out {
            next.push(s.clone());
            for op in PauliOp::ALL {
                let mut t = s.clone();
                t.ops.insert(q, op);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ObsTermJson {
    pauli: String,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct ObsJson {
    support: Vec<usize>,
    terms: Vec<ObsTermJson>,
}

impl PauliObservable {
    pub fn to_json(&self) -> serde_json::Value {
        let j = ObsJson {
            support: self.declared_support.iter().cloned().collect(),
            terms: self
                .terms
                .iter()
                .map(|(p, c)| ObsTermJson { pauli: p.to_string(), coef: *c })
                .collect(),
        };
        serde_json::to_value(j).expect("observable json")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, SclError> {
        let j: ObsJson = serde_json::from_value(v.clone())?;
        let mut obs = Self::new(j.support);
        for t in j.terms {
            let p = PauliString::parse(&t.pauli)?;
            if t.coef != 0.0 {
                obs.set(p, t.coef)?;
            }
        }
        Ok(obs)
    }
}

/// Conjugate a Pauli string through a two-qubit gate, symbolically, when the
/// result is again a signed Pauli string (always the case for Clifford
/// gates). `u` is the 4x4 matrix on ordered qubits (a, b); computes
/// u^dag P u restricted to {a, b}. Returns None for non-Clifford action.
pub fn conjugate_pauli_through_gate(
    u: &CMat,
    a: usize,
    b: usize,
    p: &PauliString,
) -> Option<(f64, PauliString)> {
    let pa = p.op_at(a);
    let pb = p.op_at(b);
    if pa.is_none() && pb.is_none() {
        return Some((1.0, p.clone()));
    }
    let local = PauliString::from_ops(
        [(0usize, pa), (1usize, pb)].into_iter().filter_map(|(q, o)| o.map(|o| (q, o))),
    );
    let m = u.adjoint() * local.matrix_on(&[0, 1]) * u;
    // Expand in the 2-qubit Pauli basis and demand a single +-1 term.
    let mut found: Option<(f64, Option<PauliOp>, Option<PauliOp>)> = None;
    for oa in [None, Some(PauliOp::X), Some(PauliOp::Y), Some(PauliOp::Z)] {
        for ob in [None, Some(PauliOp::X), Some(PauliOp::Y), Some(PauliOp::Z)] {
            let s = PauliString::from_ops(
                [(0usize, oa), (1usize, ob)].into_iter().filter_map(|(q, o)| o.map(|o| (q, o))),
            );
            let tr = (s.matrix_on(&[0, 1]) * &m).trace();
            let coef = tr.re / 4.0;
            if tr.im.abs() > 1e-9 {
                return None;
            }
            if coef.abs() > 1e-9 {
                if (coef.abs() - 1.0).abs() > 1e-9 || found.is_some() {
                    return None;
                }
                found = Some((coef.signum(), oa, ob));
            }
        }
    }
    let (sign, oa, ob) = found?;
    let mut ops: BTreeMap<usize, PauliOp> = p.ops.clone();
    ops.remove(&a);
    ops.remove(&b);
    if let Some(o) = oa {
        ops.insert(a, o);
    }
    if let Some(o) = ob {
        ops.insert(b, o);
    }
    Some((sign, PauliString { ops }))
}
