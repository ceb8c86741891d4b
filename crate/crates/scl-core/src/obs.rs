//! Estimating few-body Heisenberg-evolved observables and reduced density
//! matrices from measurement datasets, and snapping estimates onto exact
//! finite-gate-set candidates.

use itertools::Itertools;

use crate::circuit::{Circuit, Gate};
use crate::dataset::{MeasurementDataset, ObservableSamplePair};
use crate::dense::DenseOperator;
use crate::error::SclError;
use crate::geometry::GeometryGraph;
use crate::heisenberg::heisenberg_observable_exact;
use crate::linalg::{hermitian_eig, CMat};
use crate::pauli::{enumerate_paulis, PauliObservable, PauliOp, PauliString};

pub const SUPPORT_K_MAX: usize = 8;
const UNKNOWN_SUPPORT_N_MAX: usize = 16;
const UNKNOWN_SUPPORT_WEIGHT_MAX: usize = 4;
pub const ENUMERATION_CAP: usize = 1_000_000;

fn alpha_hat(pairs: &[ObservableSamplePair], p: &PauliString) -> f64 {
    let scale = 3f64.powi(p.weight() as i32);
    let mut total = 0.0;
    for pair in pairs {
        if pair.value == 0.0 {
            continue;
        }
        let mut inp = 1.0;
        for (q, op) in p.iter() {
            inp *= pair.input[q].pauli_expectation(op);
            if inp == 0.0 {
                break;
            }
        }
        total += pair.value * inp;
    }
    scale * total / pairs.len() as f64
}

/// Estimate all Pauli coefficients up to weight k and keep the ones above
/// the detection threshold 0.5 eps / (2 sqrt 2)^k.
pub fn learn_observable_unknown_support(
    pairs: &[ObservableSamplePair],
    k: usize,
    eps: f64,
) -> Result<PauliObservable, SclError> {
    if pairs.is_empty() {
        return Err(SclError::invalid("empty sample list"));
    }
    if !(0.0..=1.0).contains(&eps) || eps == 0.0 || k == 0 {
        return Err(SclError::invalid("need k >= 1 and eps in (0, 1]"));
    }
    let n = pairs[0].input.len();
    if n > UNKNOWN_SUPPORT_N_MAX || k > UNKNOWN_SUPPORT_WEIGHT_MAX {
        return Err(SclError::invalid("unknown-support search size exceeds the configured bound"));
    }
    let threshold = 0.5 * eps / (2.0 * two_sqrt()).powi(k as i32);
    let mut kept: Vec<(PauliString, f64)> = Vec::new();
    for w in 1..=k.min(n) {
        for qubits in (0..n).combinations(w) {
            for ops in std::iter::repeat(PauliOp::ALL).take(w).multi_cartesian_product() {
                let p = PauliString::from_ops(qubits.iter().cloned().zip(ops));
                let a = alpha_hat(pairs, &p);
                if a.abs() >= threshold {
                    kept.push((p, a));
                }
            }
        }
    }
    let support: std::collections::BTreeSet<usize> =
        kept.iter().flat_map(|(p, _)| p.support_set()).collect();
    let mut obs = PauliObservable::new(support);
    for (p, a) in kept {
        obs.set(p, a)?;
    }
    Ok(obs)
}

fn two_sqrt() -> f64 {
    std::f64::consts::SQRT_2
}

/// Estimate every Pauli coefficient supported in S, without thresholding.
pub fn learn_observable_known_support(
    pairs: &[ObservableSamplePair],
    support: &[usize],
) -> Result<PauliObservable, SclError> {
    if support.is_empty() {
        return Err(SclError::invalid("known support must be nonempty"));
    }
    if support.len() > SUPPORT_K_MAX {
        return Err(SclError::invalid("support larger than the configured maximum"));
    }
    if pairs.is_empty() {
        return Err(SclError::invalid("empty sample list"));
    }
    let mut obs = PauliObservable::new(support.iter().cloned());
    for p in enumerate_paulis(support) {
        if p.weight() == 0 {
            continue;
        }
        let a = alpha_hat(pairs, &p);
        if a != 0.0 {
            obs.set(p, a)?;
        }
    }
    Ok(obs)
}

#[derive(Debug, Clone)]
pub struct SnapResult {
    pub operator: DenseOperator,
    pub index: usize,
    pub distance: f64,
    pub low_confidence: bool,
}

/// Normalized Frobenius distance, invariant under embedding into a larger
/// register. For Pauli-string candidates it agrees with the spectral
/// distance, and unlike the spectral norm the statistical noise of an
/// estimate only enters through its projection onto the one-dimensional
/// candidate-difference direction, not aggregated over every coefficient.
fn normalized_frobenius_distance(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / (a.nrows() as f64).sqrt()
}

/// Nearest candidate in normalized Frobenius distance; errors if the
/// candidate family itself violates the promised minimum gap.
pub fn snap_observable_to_candidates(
    estimate: &PauliObservable,
    candidates: &[DenseOperator],
    min_gap: f64,
) -> Result<SnapResult, SclError> {
    if candidates.is_empty() {
        return Err(SclError::invalid("no candidates to snap to"));
    }
    let mut union: std::collections::BTreeSet<usize> = estimate.declared_support().clone();
    for c in candidates {
        union.extend(c.support().iter().cloned());
    }
    let union: Vec<usize> = union.into_iter().collect();
    let embedded: Vec<CMat> = candidates
        .iter()
        .map(|c| c.embed(&union).map(|e| e.matrix().clone()))
        .collect::<Result<_, _>>()?;
    for i in 0..embedded.len() {
        for j in (i + 1)..embedded.len() {
            let d = normalized_frobenius_distance(&embedded[i], &embedded[j]);
            if d < min_gap {
                return Err(SclError::invalid(format!(
                    "candidates {} and {} are {:.3e} apart, below the promised gap {:.3e}",
                    i, j, d, min_gap
                )));
            }
        }
    }
    let mut est = PauliObservable::new(union.iter().cloned());
    for (p, coef) in estimate.terms() {
        est.set(p.clone(), coef)?;
    }
    let est_matrix = est.to_matrix();
    let mut best = (0usize, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (i, m) in embedded.iter().enumerate() {
        let d = normalized_frobenius_distance(m, &est_matrix);
        if d < best.1 {
            second = best.1;
            best = (i, d);
        } else if d < second {
            second = d;
        }
    }
    // The absolute distance is dominated by statistical noise spread over
    // every coefficient; what decides the snap is the margin to the
    // runner-up, so that is what flags a shaky decision.
    Ok(SnapResult {
        operator: candidates[best.0].clone(),
        index: best.0,
        distance: best.1,
        low_confidence: second - best.1 < min_gap / 3.0,
    })
}

/// All U†P_iU over depth-d circuits drawn from the gate set on the region
/// graph, deduplicated. One circuit layer is a matching of region edges with
/// a gate choice per selected edge; architectures are enumerated in edge
/// order so the output ordering is deterministic.
pub fn enumerate_gateset_heisenberg_candidates(
    gateset: &[CMat],
    depth: usize,
    graph: &GeometryGraph,
    region: &[usize],
    target: usize,
    pauli: PauliOp,
) -> Result<Vec<DenseOperator>, SclError> {
    if !region.contains(&target) {
        return Err(SclError::invalid("target qubit must lie in the region"));
    }
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .filter(|(a, b)| region.contains(a) && region.contains(b))
        .collect();
    let mut layers: Vec<Vec<(usize, usize, usize)>> = Vec::new();
    let mut current: Vec<(usize, usize, usize)> = Vec::new();
    let mut used: std::collections::BTreeSet<usize> = Default::default();
    enumerate_layers(&edges, gateset.len(), 0, &mut current, &mut used, &mut layers);
    let total = layers.len().checked_pow(depth as u32).unwrap_or(usize::MAX);
    if total > ENUMERATION_CAP {
        return Err(SclError::invalid(format!(
            "candidate enumeration would produce {} circuits, over the cap {}",
            total, ENUMERATION_CAP
        )));
    }
    let n = region.iter().max().unwrap() + 1;
    let mut seen: Vec<DenseOperator> = Vec::new();
    let mut indices = vec![0usize; depth];
    loop {
        let mut gate_layers = Vec::with_capacity(depth);
        for &li in &indices {
            let layer: Vec<Gate> = layers[li]
                .iter()
                .map(|&(a, b, g)| Gate::new(a, b, gateset[g].clone()))
                .collect::<Result<_, _>>()?;
            gate_layers.push(layer);
        }
        let circ = Circuit::new(n, gate_layers)?;
        let cand = heisenberg_observable_exact(&circ, target, pauli)?;
        let duplicate = seen.iter().any(|prev| operators_equal(prev, &cand));
        if !duplicate {
            seen.push(cand);
        }
        // Odometer over layer choices.
        let mut pos = 0;
        loop {
            if pos == depth {
                return Ok(seen);
            }
            indices[pos] += 1;
            if indices[pos] < layers.len() {
                break;
            }
            indices[pos] = 0;
            pos += 1;
        }
        if depth == 0 {
            return Ok(seen);
        }
    }
}

fn enumerate_layers(
    edges: &[(usize, usize)],
    num_gates: usize,
    from: usize,
    current: &mut Vec<(usize, usize, usize)>,
    used: &mut std::collections::BTreeSet<usize>,
    out: &mut Vec<Vec<(usize, usize, usize)>>,
) {
    if from == edges.len() {
        out.push(current.clone());
        return;
    }
    let (a, b) = edges[from];
    // Skip this edge.
    enumerate_layers(edges, num_gates, from + 1, current, used, out);
    if !used.contains(&a) && !used.contains(&b) {
        used.insert(a);
        used.insert(b);
        for g in 0..num_gates {
            current.push((a, b, g));
            enumerate_layers(edges, num_gates, from + 1, current, used, out);
            current.pop();
        }
        used.remove(&a);
        used.remove(&b);
    }
}

fn operators_equal(a: &DenseOperator, b: &DenseOperator) -> bool {
    if a.support() != b.support() {
        return false;
    }
    crate::linalg::max_abs_entry(&(a.matrix() - b.matrix())) < 1e-9
}

/// Shadow estimates of reduced density matrices on the given regions.
pub fn learn_reduced_density_matrices(
    ds: &MeasurementDataset,
    regions: &[Vec<usize>],
    psd_project: bool,
) -> Result<Vec<DenseOperator>, SclError> {
    let samples = ds.state_samples()?;
    if samples.is_empty() {
        return Err(SclError::invalid("empty dataset"));
    }
    let mut out = Vec::with_capacity(regions.len());
    for region in regions {
        if region.len() > SUPPORT_K_MAX {
            return Err(SclError::invalid("region larger than the configured maximum"));
        }
        let dim = 1usize << region.len();
        let norm = 1.0 / dim as f64;
        let mut sigma = CMat::zeros(dim, dim);
        for p in enumerate_paulis(region) {
            let beta = if p.weight() == 0 {
                norm
            } else {
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
                scale * total / samples.len() as f64 * norm
            };
            if beta != 0.0 {
                sigma += p.matrix_on(region).map(|z| z * beta);
            }
        }
        if psd_project {
            sigma = psd_projection(&sigma);
        }
        out.push(DenseOperator::new(region.clone(), sigma)?);
    }
    Ok(out)
}

/// Clip negative eigenvalues and renormalize the trace to 1.
pub fn psd_projection(m: &CMat) -> CMat {
    let (eigs, vecs) = hermitian_eig(m);
    let clipped: Vec<f64> = eigs.iter().map(|&e| e.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    if total <= 0.0 {
        // Fully negative estimate: fall back to the maximally mixed state.
        return crate::linalg::eye(m.nrows()).map(|z| z / m.nrows() as f64);
    }
    for (i, &e) in clipped.iter().enumerate() {
        if e > 0.0 {
            let v = vecs.column(i);
            out += (v * v.adjoint()).map(|z| z * (e * scale));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::gates;
    use crate::dataset::{derive_pauli_dataset, sample_state_dataset, sample_unitary_dataset};
    use crate::geometry;
    use crate::linalg::{cr, eye, haar_unitary, max_abs_entry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_support_recovers_a_planted_z() {
        let c = Circuit::new(4, vec![]).unwrap();
        let ds = sample_unitary_dataset(&c, 20000, 2).unwrap();
        let pairs = derive_pauli_dataset(&ds, &PauliString::single(1, PauliOp::Z)).unwrap();
        let obs = learn_observable_unknown_support(&pairs, 1, 0.3).unwrap();
        let support: Vec<usize> = obs.actual_support().into_iter().collect();
        assert_eq!(support, vec![1]);
        let coef = obs.coef(&PauliString::single(1, PauliOp::Z));
        assert!((coef - 1.0).abs() < 0.1, "coef {}", coef);
    }

    #[test]
    fn all_zero_values_give_empty_observable() {
        let pairs = vec![
            crate::dataset::ObservableSamplePair {
                input: vec![crate::stab::StabilizerLabel::Z0; 3],
                value: 0.0,
            };
            100
        ];
        let obs = learn_observable_unknown_support(&pairs, 2, 0.5).unwrap();
        assert_eq!(obs.num_terms(), 0);
    }

    #[test]
    fn known_support_gives_clean_one_hot_coefficients() {
        let c = Circuit::new(3, vec![]).unwrap();
        let ds = sample_unitary_dataset(&c, 20000, 4).unwrap();
        let pairs = derive_pauli_dataset(&ds, &PauliString::single(1, PauliOp::Z)).unwrap();
        let obs = learn_observable_known_support(&pairs, &[1]).unwrap();
        assert!((obs.coef(&PauliString::single(1, PauliOp::Z)) - 1.0).abs() < 0.1);
        assert!(obs.coef(&PauliString::single(1, PauliOp::X)).abs() < 0.1);
        assert!(obs.coef(&PauliString::single(1, PauliOp::Y)).abs() < 0.1);
        assert!(learn_observable_known_support(&pairs, &[]).is_err());
    }

    #[test]
    fn known_support_tracks_the_oracle_on_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut hits = 0;
        for seed in 0..5u64 {
            let layers = vec![vec![
                Gate::new(0, 1, haar_unitary(4, &mut rng)).unwrap(),
                Gate::new(2, 3, haar_unitary(4, &mut rng)).unwrap(),
            ]];
            let c = Circuit::new(4, layers).unwrap();
            let ds = sample_unitary_dataset(&c, 50000, 100 + seed).unwrap();
            let oracle = heisenberg_observable_exact(&c, 1, PauliOp::X).unwrap();
            let pairs = derive_pauli_dataset(&ds, &PauliString::single(1, PauliOp::X)).unwrap();
            let learned = learn_observable_known_support(&pairs, oracle.support()).unwrap();
            let dist = crate::linalg::spectral_norm(&(learned.to_matrix() - oracle.matrix()));
            if dist <= 0.15 {
                hits += 1;
            }
        }
        assert!(hits >= 4, "only {}/5 within tolerance", hits);
    }

    #[test]
    fn snapping_picks_the_nearest_candidate() {
        let z = DenseOperator::new(vec![1], PauliOp::Z.matrix()).unwrap();
        let x = DenseOperator::new(vec![1], PauliOp::X.matrix()).unwrap();
        let mut est = PauliObservable::new([1]);
        est.set(PauliString::single(1, PauliOp::Z), 0.95).unwrap();
        est.set(PauliString::single(1, PauliOp::X), 0.02).unwrap();
        let snap = snap_observable_to_candidates(&est, &[z.clone(), x], 1.0).unwrap();
        assert_eq!(snap.index, 0);
        assert!(!snap.low_confidence);

        let mut exact = PauliObservable::new([1]);
        exact.set(PauliString::single(1, PauliOp::Z), 1.0).unwrap();
        let snap2 = snap_observable_to_candidates(&exact, &[z], 1.0).unwrap();
        assert!(snap2.distance < 1e-12);
    }

    #[test]
    fn snapping_rejects_gap_violations() {
        let z = DenseOperator::new(vec![0], PauliOp::Z.matrix()).unwrap();
        let est = PauliObservable::new([0]);
        assert!(snap_observable_to_candidates(&est, &[z.clone(), z], 0.5).is_err());
    }

    #[test]
    fn candidate_enumeration_small_cases() {
        let g = geometry::line(2);
        let only_identity =
            enumerate_gateset_heisenberg_candidates(&[eye(4)], 2, &g, &[0, 1], 0, PauliOp::X)
                .unwrap();
        assert_eq!(only_identity.len(), 1);
        assert_eq!(only_identity[0].support(), &[0]);

        let swaps =
            enumerate_gateset_heisenberg_candidates(&[gates::swap()], 1, &g, &[0, 1], 0, PauliOp::X)
                .unwrap();
        assert_eq!(swaps.len(), 2);
        let supports: Vec<Vec<usize>> =
            swaps.iter().map(|c| c.support().to_vec()).collect();
        assert!(supports.contains(&vec![0]));
        assert!(supports.contains(&vec![1]));

        // A duplicated gate produces no duplicate candidates.
        let dup = enumerate_gateset_heisenberg_candidates(
            &[gates::swap(), gates::swap()],
            1,
            &g,
            &[0, 1],
            0,
            PauliOp::X,
        )
        .unwrap();
        assert_eq!(dup.len(), 2);
    }

    #[test]
    fn snapped_gateset_observables_match_oracle() {
        let g = geometry::line(3);
        let gateset = [gates::swap(), gates::cz()];
        let mut hits = 0;
        for seed in 0..6u64 {
            // Planted depth-1 circuit over the gate set.
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let pick = rand::Rng::gen_range(&mut rng, 0..3usize);
            let layers = match pick {
                0 => vec![vec![Gate::new(0, 1, gates::swap()).unwrap()]],
                1 => vec![vec![Gate::new(1, 2, gates::cz()).unwrap()]],
                _ => vec![vec![Gate::new(0, 1, gates::cz()).unwrap()]],
            };
            let c = Circuit::new(3, layers).unwrap();
            let ds = sample_unitary_dataset(&c, 2000, 7000 + seed).unwrap();
            let oracle = heisenberg_observable_exact(&c, 1, PauliOp::X).unwrap();
            let cands = enumerate_gateset_heisenberg_candidates(
                &gateset, 1, &g, &[0, 1, 2], 1, PauliOp::X,
            )
            .unwrap();
            let pairs = derive_pauli_dataset(&ds, &PauliString::single(1, PauliOp::X)).unwrap();
            let union: Vec<usize> = (0..3).collect();
            let learned = learn_observable_known_support(&pairs, &union).unwrap();
            let snap = snap_observable_to_candidates(&learned, &cands, 1.0).unwrap();
            let same = snap.operator.support() == oracle.support()
                && max_abs_entry(&(snap.operator.matrix() - oracle.matrix())) < 1e-9;
            if same {
                hits += 1;
            }
        }
        assert_eq!(hits, 6);
    }

    #[test]
    fn rdm_estimates_match_known_states() {
        let c = Circuit::new(2, vec![]).unwrap();
        let ds = sample_state_dataset(&c, 5000, 3).unwrap();
        let rdms = learn_reduced_density_matrices(&ds, &[vec![0]], false).unwrap();
        let mut ket0 = CMat::zeros(2, 2);
        ket0[(0, 0)] = cr(1.0);
        assert!(max_abs_entry(&(rdms[0].matrix() - ket0)) < 0.1);
        assert!((rdms[0].matrix().trace().re - 1.0).abs() < 1e-12);

        let bell = Circuit::new(
            2,
            vec![vec![Gate::new(0, 1, gates::bell_entangler()).unwrap()]],
        )
        .unwrap();
        let ds2 = sample_state_dataset(&bell, 5000, 5).unwrap();
        let rdms2 = learn_reduced_density_matrices(&ds2, &[vec![0]], true).unwrap();
        let half = eye(2).map(|z| z * 0.5);
        assert!(max_abs_entry(&(rdms2[0].matrix() - half)) < 0.1);
    }

    #[test]
    fn rdm_error_rate_improves_with_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let layers = vec![vec![Gate::new(0, 1, haar_unitary(4, &mut rng)).unwrap()]];
        let c = Circuit::new(2, layers).unwrap();
        let psi = c.apply(&crate::state::StateVector::zero(2)).unwrap();
        let exact = psi.reduced_density(&[0]);
        let mut errs = Vec::new();
        for (num, seed) in [(2000usize, 31u64), (8000, 32)] {
            let ds = sample_state_dataset(&c, num, seed).unwrap();
            let rdm = learn_reduced_density_matrices(&ds, &[vec![0]], false).unwrap();
            errs.push(max_abs_entry(&(rdm[0].matrix() - &exact)));
        }
        assert!(errs[1] < errs[0] * 1.6, "errors {:?}", errs);
    }
}
