//! Randomized measurement datasets: generation, JSONL serialization, and
//! derived per-observable sample streams.
//!
//! Reproducibility contract: ChaCha8 seeded with the dataset seed, with the
//! stream id set to the sample index, so every sample's draws are independent
//! of generation order and identical across platforms.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::dense_cap;
use crate::error::SclError;
use crate::pauli::{PauliOp, PauliString};
use crate::stab::StabilizerLabel;
use crate::state::StateVector;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    Unitary,
    State,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitarySample {
    pub input: Vec<StabilizerLabel>,
    pub outcome: Vec<StabilizerLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSample {
    pub outcome: Vec<StabilizerLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Unitary(Vec<UnitarySample>),
    State(Vec<StateSample>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDataset {
    pub mode: DatasetMode,
    pub n: usize,
    pub seed: u64,
    pub circuit_digest: String,
    pub samples: Samples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSamplePair {
    pub input: Vec<StabilizerLabel>,
    pub value: f64,
}

impl MeasurementDataset {
    pub fn num_samples(&self) -> usize {
        match &self.samples {
            Samples::Unitary(v) => v.len(),
            Samples::State(v) => v.len(),
        }
    }

    pub fn unitary_samples(&self) -> Result<&[UnitarySample], SclError> {
        match &self.samples {
            Samples::Unitary(v) => Ok(v),
            Samples::State(_) => Err(SclError::invalid("expected a unitary-mode dataset")),
        }
    }

    pub fn state_samples(&self) -> Result<&[StateSample], SclError> {
        match &self.samples {
            Samples::State(v) => Ok(v),
            Samples::Unitary(_) => Err(SclError::invalid("expected a state-mode dataset")),
        }
    }
}

fn check_cap(circuit: &Circuit) -> Result<(), SclError> {
    let cap = dense_cap();
    if circuit.num_qubits() > cap {
        return Err(SclError::DenseCap { qubits: circuit.num_qubits(), cap });
    }
    Ok(())
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn random_input_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<StabilizerLabel> {
    (0..n).map(|_| StabilizerLabel::ALL[rng.gen_range(0..6)]).collect()
}

/// Measure every qubit of `psi` in a uniformly random Pauli basis,
/// collapsing sequentially, and return the collapsed eigenstate labels.
fn measure_random_bases(
    psi: &mut StateVector,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<StabilizerLabel> {
    let mut outcome = Vec::with_capacity(n);
    for q in 0..n {
        let axis = [PauliOp::X, PauliOp::Y, PauliOp::Z][rng.gen_range(0..3)];
        let p1 = psi.measurement_probability_one(q, axis);
        let one = rng.gen_range(0.0..1.0) < p1;
        psi.collapse_axis(q, axis, one);
        outcome.push(StabilizerLabel::from_axis_outcome(axis, one));
    }
    outcome
}

pub fn sample_unitary_dataset(
    circuit: &Circuit,
    num: usize,
    seed: u64,
) -> Result<MeasurementDataset, SclError> {
    check_cap(circuit)?;
    let n = circuit.num_qubits();
    let digest = circuit.digest();
    let samples: Vec<UnitarySample> = (0..num as u64)
        .map(|idx| {
            let mut rng = sample_rng(seed, idx);
            let input = random_input_labels(n, &mut rng);
            let factors: Vec<[Complex64; 2]> = input.iter().map(|l| l.ket()).collect();
            let mut psi = circuit.apply(&StateVector::product(&factors))?;
            let outcome = measure_random_bases(&mut psi, n, &mut rng);
            Ok(UnitarySample { input, outcome })
        })
        .collect::<Result<_, SclError>>()?;
    Ok(MeasurementDataset {
        mode: DatasetMode::Unitary,
        n,
        seed,
        circuit_digest: digest,
        samples: Samples::Unitary(samples),
    })
}

pub fn sample_state_dataset(
    circuit: &Circuit,
    num: usize,
    seed: u64,
) -> Result<MeasurementDataset, SclError> {
    check_cap(circuit)?;
    let n = circuit.num_qubits();
    let digest = circuit.digest();
    let samples: Vec<StateSample> = (0..num as u64)
        .map(|idx| {
            let mut rng = sample_rng(seed, idx);
            let mut psi = circuit.apply(&StateVector::zero(n))?;
            let outcome = measure_random_bases(&mut psi, n, &mut rng);
            Ok(StateSample { outcome })
        })
        .collect::<Result<_, SclError>>()?;
    Ok(MeasurementDataset {
        mode: DatasetMode::State,
        n,
        seed,
        circuit_digest: digest,
        samples: Samples::State(samples),
    })
}

/// Per-sample estimator values v = 3^w Π_i ⟨φ_i|P_i|φ_i⟩ for the target Pauli.
pub fn derive_pauli_dataset(
    ds: &MeasurementDataset,
    target: &PauliString,
) -> Result<Vec<ObservableSamplePair>, SclError> {
    if target.weight() == 0 {
        return Err(SclError::invalid("target Pauli must have weight at least 1"));
    }
    let samples = ds.unitary_samples()?;
    let scale = 3f64.powi(target.weight() as i32);
    Ok(samples
        .iter()
        .map(|s| {
            let mut v = scale;
            for (q, op) in target.iter() {
                v *= s.outcome[q].pauli_expectation(op);
            }
            ObservableSamplePair { input: s.input.clone(), value: v }
        })
        .collect())
}

/// Same per-sample values for a state dataset (no input half).
pub fn derive_pauli_values_state(
    ds: &MeasurementDataset,
    target: &PauliString,
) -> Result<Vec<f64>, SclError> {
    if target.weight() == 0 {
        return Err(SclError::invalid("target Pauli must have weight at least 1"));
    }
    let samples = ds.state_samples()?;
    let scale = 3f64.powi(target.weight() as i32);
    Ok(samples
        .iter()
        .map(|s| {
            let mut v = scale;
            for (q, op) in target.iter() {
                v *= s.outcome[q].pauli_expectation(op);
            }
            v
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct Header {
    mode: DatasetMode,
    n: usize,
    #[serde(rename = "N")]
    num: usize,
    seed: u64,
    circuit_digest: String,
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
struct UnitaryLine {
    input: String,
    outcome: String,
}

#[derive(Serialize, Deserialize)]
struct StateLine {
    outcome: String,
}

fn labels_to_string(labels: &[StabilizerLabel]) -> String {
    labels.iter().map(|l| l.wire_name()).collect()
}

fn labels_from_string(s: &str, n: usize) -> Result<Vec<StabilizerLabel>, SclError> {
    let labels: Vec<StabilizerLabel> = s
        .chars()
        .map(|ch| StabilizerLabel::from_wire_name(&ch.to_string()))
        .collect::<Result<_, _>>()?;
    if labels.len() != n {
        return Err(SclError::invalid("sample length differs from header n"));
    }
    Ok(labels)
}

pub fn write_dataset(ds: &MeasurementDataset, w: &mut impl Write) -> Result<(), SclError> {
    let header = Header {
        mode: ds.mode,
        n: ds.n,
        num: ds.num_samples(),
        seed: ds.seed,
        circuit_digest: ds.circuit_digest.clone(),
        format_version: DATASET_FORMAT_VERSION,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    match &ds.samples {
        Samples::Unitary(samples) => {
            for s in samples {
                let line = UnitaryLine {
                    input: labels_to_string(&s.input),
                    outcome: labels_to_string(&s.outcome),
                };
                writeln!(w, "{}", serde_json::to_string(&line)?)?;
            }
        }
        Samples::State(samples) => {
            for s in samples {
                let line = StateLine { outcome: labels_to_string(&s.outcome) };
                writeln!(w, "{}", serde_json::to_string(&line)?)?;
            }
        }
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl BufRead) -> Result<MeasurementDataset, SclError> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| SclError::invalid("empty dataset file"))??;
    let header: Header = serde_json::from_str(&header_line)?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(SclError::invalid(format!(
            "unsupported dataset format_version {}",
            header.format_version
        )));
    }
    let samples = match header.mode {
        DatasetMode::Unitary => {
            let mut v = Vec::with_capacity(header.num);
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: UnitaryLine = serde_json::from_str(&line)?;
                v.push(UnitarySample {
                    input: labels_from_string(&parsed.input, header.n)?,
                    outcome: labels_from_string(&parsed.outcome, header.n)?,
                });
            }
            Samples::Unitary(v)
        }
        DatasetMode::State => {
            let mut v = Vec::with_capacity(header.num);
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: StateLine = serde_json::from_str(&line)?;
                v.push(StateSample { outcome: labels_from_string(&parsed.outcome, header.n)? });
            }
            Samples::State(v)
        }
    };
    let ds = MeasurementDataset {
        mode: header.mode,
        n: header.n,
        seed: header.seed,
        circuit_digest: header.circuit_digest,
        samples,
    };
    if ds.num_samples() != header.num {
        return Err(SclError::invalid("sample count differs from header N"));
    }
    Ok(ds)
}

/// Empirical means of shadow values keyed by Pauli string, shared across the
/// many candidate scorings that reuse the same dataset.
pub struct PauliMeanCache<'a> {
    ds: &'a MeasurementDataset,
    cache: std::sync::Mutex<std::collections::HashMap<PauliString, f64>>,
}

impl<'a> PauliMeanCache<'a> {
    pub fn new(ds: &'a MeasurementDataset) -> Self {
        Self { ds, cache: Default::default() }
    }

    /// Mean of 3^w Π ⟨φ_i|P_i|φ_i⟩ over outcomes; estimates Tr(ρ P).
    pub fn mean(&self, p: &PauliString) -> Result<f64, SclError> {
        if p.weight() == 0 {
            return Ok(1.0);
        }
        if let Some(&v) = self.cache.lock().unwrap().get(p) {
            return Ok(v);
        }
        let samples = self.ds.state_samples()?;
        let scale = 3f64.powi(p.weight() as i32);
        let mut total = 0.0;
        for s in samples {
            let mut v = 1.0;
            for (q, op) in p.iter() {
                v *= s.outcome[q].pauli_expectation(op);
                if v == 0.0 {
                    break;
                }
            }
            total += v;
        }
        let mean = scale * total / samples.len() as f64;
        self.cache.lock().unwrap().insert(p.clone(), mean);
        Ok(mean)
    }
}
