//! Python bindings for the core learning library. Circuits cross the
//! boundary as JSON strings so the Python side stays dependency-free.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scl_core::circuit::{gates, Circuit, Gate};
use scl_core::dist;
use scl_core::error::SclError;
use scl_core::linalg::{haar_unitary, CMat};
use scl_core::state::StateVector;
use scl_core::statelearn::learn_1d_state;

fn err(e: SclError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn named_set(tag: &str) -> PyResult<Vec<CMat>> {
    match tag {
        "cz-swap" => Ok(vec![gates::cz(), gates::swap()]),
        "clifford2" => Ok(vec![gates::cz(), gates::swap(), gates::cnot(), gates::bell_entangler()]),
        _ => Err(PyValueError::new_err(format!("unknown gateset {tag:?}"))),
    }
}

fn parse_circuit(json: &str) -> PyResult<Circuit> {
    let v: serde_json::Value =
        serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Circuit::from_json(&v).map_err(err)
}

fn to_state(n: usize, amps: Vec<Complex64>) -> PyResult<StateVector> {
    StateVector::new(n, amps).map_err(err)
}

/// Brick-wall circuit on a line; `gateset` of "haar" draws Haar two-qubit
/// gates, otherwise gates come uniformly from the named set.
#[pyfunction]
#[pyo3(signature = (n, depth, gateset="haar", seed=0))]
fn random_line_circuit(n: usize, depth: usize, gateset: &str, seed: u64) -> PyResult<String> {
    let set = if gateset == "haar" { Vec::new() } else { named_set(gateset)? };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for d in 0..depth {
        let mut layer = Vec::new();
        let mut a = d % 2;
        while a + 1 < n {
            let m = if set.is_empty() {
                haar_unitary(4, &mut rng)
            } else {
                set[rng.gen_range(0..set.len())].clone()
            };
            layer.push(Gate::new(a, a + 1, m).map_err(err)?);
            a += 2;
        }
        layers.push(layer);
    }
    let c = Circuit::new(n, layers).map_err(err)?;
    Ok(c.to_json().to_string())
}

#[pyfunction]
fn circuit_depth(circuit_json: &str) -> PyResult<usize> {
    Ok(parse_circuit(circuit_json)?.depth())
}

#[pyfunction]
fn apply_circuit(circuit_json: &str, amps: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    let c = parse_circuit(circuit_json)?;
    let state = to_state(c.num_qubits(), amps)?;
    Ok(c.apply(&state).map_err(err)?.amplitudes().to_vec())
}

/// Learn a shallow preparation circuit for a 1d state. Returns the
/// preparation circuit as JSON together with its fidelity against the
/// input state.
#[pyfunction]
#[pyo3(signature = (amps, depth, gateset="cz-swap"))]
fn learn_state_1d(amps: Vec<Complex64>, depth: usize, gateset: &str) -> PyResult<(String, f64)> {
    let n = amps.len().trailing_zeros() as usize;
    if amps.len() != 1 << n {
        return Err(PyValueError::new_err("amplitude count is not a power of two"));
    }
    let state = to_state(n, amps)?;
    let set = named_set(gateset)?;
    let assignment = learn_1d_state(&state, depth, &set).map_err(err)?;
    let preparation = assignment.merged.dagger();
    let fid = preparation
        .apply(&StateVector::zero(n))
        .map_err(err)?
        .fidelity(&state);
    Ok((preparation.to_json().to_string(), fid))
}

fn to_cmat(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    let dim = rows.len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("matrix is not square"));
    }
    Ok(CMat::from_fn(dim, dim, |i, j| rows[i][j]))
}

#[pyfunction]
fn average_gate_distance(u1: Vec<Vec<Complex64>>, u2: Vec<Vec<Complex64>>) -> PyResult<f64> {
    dist::average_gate_distance(&to_cmat(u1)?, &to_cmat(u2)?).map_err(err)
}

#[pyfunction]
fn diamond_proxy(u1: Vec<Vec<Complex64>>, u2: Vec<Vec<Complex64>>) -> PyResult<(f64, f64)> {
    dist::unitary_diamond_proxy(&to_cmat(u1)?, &to_cmat(u2)?).map_err(err)
}

#[pymodule]
fn sclpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(random_line_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(circuit_depth, m)?)?;
    m.add_function(wrap_pyfunction!(apply_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(learn_state_1d, m)?)?;
    m.add_function(wrap_pyfunction!(average_gate_distance, m)?)?;
    m.add_function(wrap_pyfunction!(diamond_proxy, m)?)?;
    Ok(())
}
