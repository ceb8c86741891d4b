//! Gates, layered circuits, and their JSON wire format.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense_cap;
use crate::error::SclError;
use crate::geometry::{build_geometry, GeometryGraph, GeometrySpec};
use crate::linalg::{c, is_unitary, CMat};
use crate::state::StateVector;

pub const FORMAT_VERSION: u32 = 1;

/// Two-qubit gate on an ordered pair; row/column index is 2*bit_a + bit_b.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    qubits: (usize, usize),
    matrix: CMat,
}

impl Gate {
    pub fn new(a: usize, b: usize, matrix: CMat) -> Result<Self, SclError> {
        if a == b {
            return Err(SclError::invalid("gate qubits must differ"));
        }
        if matrix.nrows() != 4 || matrix.ncols() != 4 {
            return Err(SclError::Dimension("gate matrix must be 4x4".into()));
        }
        if !is_unitary(&matrix, 1e-12) {
            return Err(SclError::invalid("gate matrix is not unitary within 1e-12"));
        }
        Ok(Self { qubits: (a, b), matrix })
    }

    pub fn qubits(&self) -> (usize, usize) {
        self.qubits
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self { qubits: self.qubits, matrix: self.matrix.adjoint() }
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.qubits == other.qubits
            && (self.matrix.clone() - &other.matrix)
                .iter()
                .all(|z| z.norm() <= tol)
    }
}

/// Role annotation for sewn-circuit layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Block,
    GlobalSwap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n: usize,
    layers: Vec<Vec<Gate>>,
    roles: Vec<Option<LayerRole>>,
    geometry: Option<GeometryGraph>,
    gateset_tag: Option<String>,
}

impl Circuit {
    pub fn new(n: usize, layers: Vec<Vec<Gate>>) -> Result<Self, SclError> {
        let roles = vec![None; layers.len()];
        Self::with_roles(n, layers, roles, None, None)
    }

    pub fn with_geometry(
        n: usize,
        layers: Vec<Vec<Gate>>,
        geometry: GeometryGraph,
    ) -> Result<Self, SclError> {
        let roles = vec![None; layers.len()];
        Self::with_roles(n, layers, roles, Some(geometry), None)
    }

    pub fn with_roles(
        n: usize,
        layers: Vec<Vec<Gate>>,
        roles: Vec<Option<LayerRole>>,
        geometry: Option<GeometryGraph>,
        gateset_tag: Option<String>,
    ) -> Result<Self, SclError> {
        if roles.len() != layers.len() {
            return Err(SclError::Dimension("roles vs layers".into()));
        }
        for layer in &layers {
            let mut used = BTreeSet::new();
            for g in layer {
                let (a, b) = g.qubits();
                if a >= n || b >= n {
                    return Err(SclError::invalid("gate qubit out of range"));
                }
                if !used.insert(a) || !used.insert(b) {
                    return Err(SclError::invalid("overlapping gates in one layer"));
                }
                if let Some(geo) = &geometry {
                    if !geo.has_edge(a, b) {
                        return Err(SclError::invalid(format!(
                            "gate ({a},{b}) not on a geometry edge"
                        )));
                    }
                }
            }
        }
        if let Some(geo) = &geometry {
            if geo.vertex_count() != n {
                return Err(SclError::Dimension("geometry vertex count vs n".into()));
            }
        }
        Ok(Self { n, layers, roles, geometry, gateset_tag })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<Gate>] {
        &self.layers
    }

    pub fn roles(&self) -> &[Option<LayerRole>] {
        &self.roles
    }

    pub fn geometry(&self) -> Option<&GeometryGraph> {
        self.geometry.as_ref()
    }

    pub fn gateset_tag(&self) -> Option<&str> {
        self.gateset_tag.as_deref()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    /// Reversed layer order with conjugate-transposed gates.
    pub fn dagger(&self) -> Self {
        let layers: Vec<Vec<Gate>> = self
            .layers
            .iter()
            .rev()
            .map(|l| l.iter().map(Gate::dagger).collect())
            .collect();
        let roles = self.roles.iter().rev().cloned().collect();
        Self {
            n: self.n,
            layers,
            roles,
            geometry: self.geometry.clone(),
            gateset_tag: self.gateset_tag.clone(),
        }
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector, SclError> {
        if state.num_qubits() != self.n {
            return Err(SclError::Dimension("state vs circuit qubits".into()));
        }
        let mut out = state.clone();
        for layer in &self.layers {
            for g in layer {
                let (a, b) = g.qubits();
                out.apply_two_qubit(g.matrix(), a, b);
            }
        }
        Ok(out)
    }

    pub fn apply_dagger(&self, state: &StateVector) -> Result<StateVector, SclError> {
        self.dagger().apply(state)
    }

    /// Dense unitary of the whole circuit; guarded by the dense cap.
    pub fn unitary(&self) -> Result<CMat, SclError> {
        let cap = dense_cap();
        if self.n > cap {
            return Err(SclError::DenseCap { qubits: self.n, cap });
        }
        let dim = 1usize << self.n;
        let mut cols = Vec::with_capacity(dim);
        for j in 0..dim {
            let col = self.apply(&StateVector::basis(self.n, j))?;
            cols.push(col.as_cvec());
        }
        Ok(CMat::from_columns(&cols))
    }

    /// Backward lightcone of `seeds` through the circuit structure: the set
    /// of qubits whose initial state can influence the seeds' output.
    pub fn structural_lightcone(&self, seeds: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut active = seeds.clone();
        for layer in self.layers.iter().rev() {
            for g in layer {
                let (a, b) = g.qubits();
                if active.contains(&a) || active.contains(&b) {
                    active.insert(a);
                    active.insert(b);
                }
            }
        }
        active
    }

    pub fn to_json(&self) -> serde_json::Value {
        let layers: Vec<serde_json::Value> = self
            .layers
            .iter()
            .zip(&self.roles)
            .map(|(layer, role)| {
                let gates: Vec<serde_json::Value> =
                    layer.iter().map(gate_to_json).collect();
                match role {
                    None => serde_json::Value::Array(gates),
                    Some(r) => serde_json::json!({
                        "role": r,
                        "gates": gates,
                    }),
                }
            })
            .collect();
        let mut obj = serde_json::json!({
            "format_version": FORMAT_VERSION,
            "n": self.n,
            "layers": layers,
        });
        if let Some(geo) = &self.geometry {
            obj["geometry"] = serde_json::to_value(geo.spec()).expect("geometry json");
        }
        if let Some(tag) = &self.gateset_tag {
            obj["gateset"] = serde_json::Value::String(tag.clone());
        }
        obj
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, SclError> {
        let obj = v.as_object().ok_or_else(|| SclError::invalid("circuit json not an object"))?;
        if let Some(fv) = obj.get("format_version") {
            if fv.as_u64() != Some(FORMAT_VERSION as u64) {
                return Err(SclError::invalid(format!("unsupported format_version {fv}")));
            }
        }
        let n = obj
            .get("n")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| SclError::invalid("missing n"))? as usize;
        let geometry = match obj.get("geometry") {
            Some(g) => {
                let spec: GeometrySpec = serde_json::from_value(g.clone())?;
                Some(build_geometry(&spec)?)
            }
            None => None,
        };
        let gateset_tag = obj.get("gateset").and_then(|x| x.as_str()).map(String::from);
        let raw_layers = obj
            .get("layers")
            .and_then(|x| x.as_array())
            .ok_or_else(|| SclError::invalid("missing layers"))?;
        let mut layers = Vec::new();
        let mut roles = Vec::new();
        for l in raw_layers {
            let (gates_json, role) = if let Some(arr) = l.as_array() {
                (arr.clone(), None)
            } else {
                let role: LayerRole = serde_json::from_value(
                    l.get("role").cloned().ok_or_else(|| SclError::invalid("layer role"))?,
                )?;
                let gates = l
                    .get("gates")
                    .and_then(|x| x.as_array())
                    .ok_or_else(|| SclError::invalid("layer gates"))?
                    .clone();
                (gates, Some(role))
            };
            let mut layer = Vec::new();
            for g in &gates_json {
                layer.push(gate_from_json(g)?);
            }
            layers.push(layer);
            roles.push(role);
        }
        Self::with_roles(n, layers, roles, geometry, gateset_tag)
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_json()).expect("circuit json");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }
}

/// Standard two-qubit gate matrices (row/column index 2*bit_a + bit_b).
pub mod gates {
    use crate::linalg::{cr, CMat};

    pub fn swap() -> CMat {
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = cr(1.0);
        m[(1, 2)] = cr(1.0);
        m[(2, 1)] = cr(1.0);
        m[(3, 3)] = cr(1.0);
        m
    }

    pub fn cz() -> CMat {
        let mut m = CMat::identity(4, 4);
        m[(3, 3)] = cr(-1.0);
        m
    }

    pub fn cnot() -> CMat {
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = cr(1.0);
        m[(1, 1)] = cr(1.0);
        m[(2, 3)] = cr(1.0);
        m[(3, 2)] = cr(1.0);
        m
    }

    /// Self-inverse Clifford entangler: maps |00> to a Bell pair.
    /// Columns: (e00+e11, e01+e10, e01-e10, e00-e11)/sqrt(2).
    pub fn bell_entangler() -> CMat {
        let s = cr(std::f64::consts::FRAC_1_SQRT_2);
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = s;
        m[(3, 0)] = s;
        m[(1, 1)] = s;
        m[(2, 1)] = s;
        m[(1, 2)] = s;
        m[(2, 2)] = -s;
        m[(0, 3)] = s;
        m[(3, 3)] = -s;
        m
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn gate_to_json(g: &Gate) -> serde_json::Value {
    let u: Vec<Vec<[f64; 2]>> = (0..4)
        .map(|r| (0..4).map(|c| [g.matrix()[(r, c)].re, g.matrix()[(r, c)].im]).collect())
        .collect();
    serde_json::json!({ "q": [g.qubits().0, g.qubits().1], "u": u })
}

fn gate_from_json(v: &serde_json::Value) -> Result<Gate, SclError> {
    let q = v
        .get("q")
        .and_then(|x| x.as_array())
        .ok_or_else(|| SclError::invalid("gate q"))?;
    if q.len() != 2 {
        return Err(SclError::invalid("gate q must have 2 entries"));
    }
    let a = q[0].as_u64().ok_or_else(|| SclError::invalid("gate q"))? as usize;
    let b = q[1].as_u64().ok_or_else(|| SclError::invalid("gate q"))? as usize;
    let u: Vec<Vec<[f64; 2]>> = serde_json::from_value(
        v.get("u").cloned().ok_or_else(|| SclError::invalid("gate u"))?,
    )?;
    if u.len() != 4 || u.iter().any(|row| row.len() != 4) {
        return Err(SclError::Dimension("gate u must be 4x4".into()));
    }
    let m = CMat::from_fn(4, 4, |r, cix| {
        let [re, im] = u[r][cix];
        c(re, im)
    });
    Gate::new(a, b, m)
}
