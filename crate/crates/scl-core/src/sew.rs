//! Sewing learned per-qubit (or per-region) operators into a circuit on the
//! doubled system that approximates U tensor U-dagger.
//!
//! Qubit j's ancilla partner is n + j. The sewn circuit applies the blocks
//! W_i first (ordered by a greedy coloring of the support-overlap graph) and
//! finishes with the global layer of swaps.

use num_complex::Complex64;

use crate::circuit::{gates, Circuit, Gate, LayerRole};
use crate::dense::DenseOperator;
use crate::error::SclError;
use crate::geometry::GeometryGraph;
use crate::linalg::{kron, max_abs_entry, polar_unitary, spectral_norm, CMat};
use crate::pauli::PauliOp;
use crate::state::StateVector;
use crate::synth::synthesize_unitary;

/// SVD projection onto the nearest unitary.
pub fn project_to_unitary(a: &DenseOperator) -> Result<DenseOperator, SclError> {
    if a.matrix().nrows() != a.matrix().ncols() {
        return Err(SclError::Dimension("projection needs a square matrix".into()));
    }
    DenseOperator::new(a.support().to_vec(), polar_unitary(a.matrix()))
}

#[derive(Debug, Clone)]
pub struct SewBlock {
    /// System qubits whose swap this block implements.
    pub region: Vec<usize>,
    /// Full support including ancilla indices n + j.
    pub support: Vec<usize>,
    pub w: DenseOperator,
}

/// W_i = Proj_U( 1/2 I + 1/2 sum_P O_{i,P} x P_{n+i} ) for one qubit i.
pub fn build_sew_block(
    ox: &DenseOperator,
    oy: &DenseOperator,
    oz: &DenseOperator,
    qubit: usize,
    n: usize,
) -> Result<SewBlock, SclError> {
    let mut sys: std::collections::BTreeSet<usize> = Default::default();
    for o in [ox, oy, oz] {
        if !o.is_hermitian() {
            return Err(SclError::invalid("sew block observables must be hermitian"));
        }
        if spectral_norm(o.matrix()) > 1.2 {
            return Err(SclError::invalid("observable norm too large for a Pauli image"));
        }
        sys.extend(o.support().iter().cloned());
    }
    sys.insert(qubit);
    if sys.iter().any(|&q| q >= n) {
        return Err(SclError::invalid("observable support outside the system register"));
    }
    let sys: Vec<usize> = sys.into_iter().collect();
    let dim_sys = 1usize << sys.len();
    let ancilla = n + qubit;
    let mut support = sys.clone();
    support.push(ancilla);

    let mut m = kron(&crate::linalg::eye(dim_sys), &crate::linalg::eye(2)).map(|z| z * 0.5);
    for (o, p) in [(ox, PauliOp::X), (oy, PauliOp::Y), (oz, PauliOp::Z)] {
        let emb = o.embed(&sys)?;
        m += kron(emb.matrix(), &p.matrix()).map(|z| z * 0.5);
    }
    let w = DenseOperator::new(support.clone(), polar_unitary(&m))?;
    Ok(SewBlock { region: vec![qubit], support, w })
}

/// Greedy coloring of the support-overlap graph; blocks inside one layer are
/// support disjoint. Blocks are taken in their given (ascending-qubit) order.
pub fn order_blocks_by_coloring(blocks: Vec<SewBlock>) -> Vec<Vec<SewBlock>> {
    let supports: Vec<std::collections::BTreeSet<usize>> = blocks
        .iter()
        .map(|b| b.support.iter().cloned().collect())
        .collect();
    let mut color_of: Vec<usize> = Vec::with_capacity(blocks.len());
    for i in 0..blocks.len() {
        let mut taken: std::collections::BTreeSet<usize> = Default::default();
        for j in 0..i {
            if !supports[i].is_disjoint(&supports[j]) {
                taken.insert(color_of[j]);
            }
        }
        let mut c = 0;
        while taken.contains(&c) {
            c += 1;
        }
        color_of.push(c);
    }
    let num_colors = color_of.iter().max().map_or(0, |&c| c + 1);
    let mut layers: Vec<Vec<SewBlock>> = (0..num_colors).map(|_| Vec::new()).collect();
    for (block, color) in blocks.into_iter().zip(color_of) {
        layers[color].push(block);
    }
    layers
}

/// Assemble ordered blocks plus the final global swap layer into a circuit
/// on 2n qubits. Block unitaries are synthesized into two-qubit gates.
pub fn sew(layers: &[Vec<SewBlock>], n: usize) -> Result<Circuit, SclError> {
    let mut covered: std::collections::BTreeSet<usize> = Default::default();
    for layer in layers {
        for block in layer {
            for &q in &block.region {
                if !covered.insert(q) {
                    return Err(SclError::invalid(format!("qubit {} covered twice", q)));
                }
            }
        }
    }
    if covered != (0..n).collect() {
        return Err(SclError::invalid("blocks must cover qubits 0..n exactly once"));
    }
    let mut gate_layers: Vec<Vec<Gate>> = Vec::new();
    let mut roles: Vec<Option<LayerRole>> = Vec::new();
    for layer in layers {
        for block in layer {
            let synth = synthesize_unitary(&block.w, None)?;
            for sub in synth.layers() {
                if sub.is_empty() {
                    continue;
                }
                gate_layers.push(sub.clone());
                roles.push(Some(LayerRole::Block));
            }
        }
    }
    let swap_layer: Vec<Gate> = (0..n)
        .map(|i| Gate::new(i, n + i, gates::swap()))
        .collect::<Result<_, _>>()?;
    gate_layers.push(swap_layer);
    roles.push(Some(LayerRole::GlobalSwap));
    Circuit::with_roles(2 * n, gate_layers, roles, None, None)
}

/// Build the sewn circuit S prod_i V_i S_i V_i-dagger from local inversions.
pub fn sew_local_inversions(inversions: &[Circuit], n: usize) -> Result<Circuit, SclError> {
    if inversions.len() != n {
        return Err(SclError::invalid("need one local inversion per qubit"));
    }
    let blocks: Vec<SewBlock> = inversions
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut support: std::collections::BTreeSet<usize> = Default::default();
            support.insert(i);
            for layer in v.layers() {
                for g in layer {
                    let (a, b) = g.qubits();
                    support.insert(a);
                    support.insert(b);
                }
            }
            if support.iter().any(|&q| q >= n) {
                return Err(SclError::invalid("inversion acts outside the system register"));
            }
            let mut full = support.iter().cloned().collect::<Vec<usize>>();
            full.push(n + i);
            Ok(SewBlock {
                region: vec![i],
                support: full,
                w: DenseOperator::new(vec![i], crate::linalg::eye(2))?,
            })
        })
        .collect::<Result<_, _>>()?;
    let ordered = order_blocks_by_coloring(blocks);

    let mut gate_layers: Vec<Vec<Gate>> = Vec::new();
    let mut roles: Vec<Option<LayerRole>> = Vec::new();
    for layer in &ordered {
        for block in layer {
            let i = block.region[0];
            let v = &inversions[i];
            // Matrix product V_i S_i V_i^dagger applies V_i^dagger first.
            for sub in v.dagger().layers() {
                if !sub.is_empty() {
                    gate_layers.push(sub.clone());
                    roles.push(Some(LayerRole::Block));
                }
            }
            gate_layers.push(vec![Gate::new(i, n + i, gates::swap())?]);
            roles.push(Some(LayerRole::Block));
            for sub in v.layers() {
                if !sub.is_empty() {
                    gate_layers.push(sub.clone());
                    roles.push(Some(LayerRole::Block));
                }
            }
        }
    }
    let swap_layer: Vec<Gate> = (0..n)
        .map(|i| Gate::new(i, n + i, gates::swap()))
        .collect::<Result<_, _>>()?;
    gate_layers.push(swap_layer);
    roles.push(Some(LayerRole::GlobalSwap));
    Circuit::with_roles(2 * n, gate_layers, roles, None, None)
}

/// Search a depth-d gate-set circuit V on the region's lightcone such that
/// V-dagger S_A V matches the block unitary, and emit it as 2d+1 layers
/// (V, swap layer on the region, V-dagger), padded to exactly 2d+1.
pub fn compile_block_to_shallow(
    block: &SewBlock,
    depth: usize,
    graph: &GeometryGraph,
    gateset: &[CMat],
    n: usize,
    tol: f64,
) -> Result<Vec<Vec<Gate>>, SclError> {
    let lightcone: Vec<usize> = block
        .support
        .iter()
        .filter(|&&q| q < n)
        .cloned()
        .collect();
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .filter(|(a, b)| lightcone.contains(a) && lightcone.contains(b))
        .collect();
    let mut single_layers: Vec<Vec<(usize, usize, usize)>> = Vec::new();
    enumerate_matchings(&edges, gateset.len(), 0, &mut Vec::new(), &mut Default::default(), &mut single_layers);

    let target = block.w.embed(&block.support)?;
    let mut indices = vec![0usize; depth];
    loop {
        let mut layer_gates: Vec<Vec<Gate>> = Vec::with_capacity(depth);
        for &li in &indices {
            layer_gates.push(
                single_layers[li]
                    .iter()
                    .map(|&(a, b, g)| Gate::new(a, b, gateset[g].clone()))
                    .collect::<Result<_, _>>()?,
            );
        }
        let cand = candidate_block_unitary(&layer_gates, &block.region, &block.support, n)?;
        if max_abs_entry(&(cand - target.matrix())) <= tol {
            let mut out: Vec<Vec<Gate>> = Vec::with_capacity(2 * depth + 1);
            for lg in &layer_gates {
                out.push(lg.clone());
            }
            let swap_layer: Vec<Gate> = block
                .region
                .iter()
                .map(|&j| Gate::new(j, n + j, gates::swap()))
                .collect::<Result<_, _>>()?;
            out.push(swap_layer);
            for lg in layer_gates.iter().rev() {
                out.push(lg.iter().map(|g| g.dagger()).collect());
            }
            return Ok(out);
        }
        let mut pos = 0;
        loop {
            if pos == depth {
                return Err(SclError::learning(
                    "no gate-set circuit reproduces the block within tolerance",
                ));
            }
            indices[pos] += 1;
            if indices[pos] < single_layers.len() {
                break;
            }
            indices[pos] = 0;
            pos += 1;
        }
    }
}

/// Dense V-dagger S_A V on the block support (V given as layers applied
/// first to last).
fn candidate_block_unitary(
    layers: &[Vec<Gate>],
    region: &[usize],
    support: &[usize],
    n: usize,
) -> Result<CMat, SclError> {
    let dim = 1usize << support.len();
    let mut v = crate::linalg::eye(dim);
    for layer in layers {
        for g in layer {
            let (a, b) = g.qubits();
            v = crate::heisenberg::embed_gate(g.matrix(), a, b, support) * v;
        }
    }
    let mut s = crate::linalg::eye(dim);
    for &j in region {
        s = crate::heisenberg::embed_gate(&gates::swap(), j, n + j, support) * s;
    }
    Ok(crate::linalg::dagger(&v) * s * v)
}

fn enumerate_matchings(
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
    enumerate_matchings(edges, num_gates, from + 1, current, used, out);
    if !used.contains(&a) && !used.contains(&b) {
        used.insert(a);
        used.insert(b);
        for g in 0..num_gates {
            current.push((a, b, g));
            enumerate_matchings(edges, num_gates, from + 1, current, used, out);
            current.pop();
        }
        used.remove(&a);
        used.remove(&b);
    }
}

/// Feed |psi> on the system half and |0^n> on the ancilla half, apply the
/// sewn circuit, and trace out the ancillas.
pub fn implement_learned_channel(
    sewn: &Circuit,
    psi: &StateVector,
) -> Result<CMat, SclError> {
    let n = psi.num_qubits();
    if sewn.num_qubits() != 2 * n {
        return Err(SclError::Dimension("sewn circuit must act on 2n qubits".into()));
    }
    if 2 * n > crate::dense_cap() {
        return Err(SclError::DenseCap { qubits: 2 * n, cap: crate::dense_cap() });
    }
    let mut big = StateVector::zero(2 * n);
    {
        let amps = big.amplitudes_mut();
        amps[0] = Complex64::default();
        let shift = n;
        for (i, &z) in psi.amplitudes().iter().enumerate() {
            amps[i << shift] = z;
        }
    }
    let out = sewn.apply(&big)?;
    let keep: Vec<usize> = (0..n).collect();
    Ok(out.reduced_density(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry;
    use crate::heisenberg::heisenberg_observable_exact;
    use crate::linalg::{eye, haar_unitary, max_entry_phase_min};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_line_circuit(n: usize, depth: usize, rng: &mut ChaCha8Rng) -> Circuit {
        let mut layers = Vec::new();
        for d in 0..depth {
            let mut layer = Vec::new();
            let mut a = if d % 2 == 0 { 0 } else { 1 };
            while a + 1 < n {
                layer.push(Gate::new(a, a + 1, haar_unitary(4, rng)).unwrap());
                a += 2;
            }
            layers.push(layer);
        }
        Circuit::new(n, layers).unwrap()
    }

    fn exact_blocks(c: &Circuit, n: usize) -> Vec<SewBlock> {
        (0..n)
            .map(|i| {
                let ox = heisenberg_observable_exact(c, i, PauliOp::X).unwrap();
                let oy = heisenberg_observable_exact(c, i, PauliOp::Y).unwrap();
                let oz = heisenberg_observable_exact(c, i, PauliOp::Z).unwrap();
                build_sew_block(&ox, &oy, &oz, i, n).unwrap()
            })
            .collect()
    }

    fn target_double(c: &Circuit) -> CMat {
        let u = c.unitary().unwrap();
        kron(&u, &crate::linalg::dagger(&u))
    }

    #[test]
    fn projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_unitary(4, &mut rng);
        let a = DenseOperator::new(vec![0, 1], u.clone()).unwrap();
        let p = project_to_unitary(&a).unwrap();
        assert!(max_abs_entry(&(p.matrix() - &u)) < 1e-10);
        let scaled = DenseOperator::new(vec![0, 1], u.map(|z| z * 2.0)).unwrap();
        let p2 = project_to_unitary(&scaled).unwrap();
        assert!(max_abs_entry(&(p2.matrix() - &u)) < 1e-10);
        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = crate::linalg::cr(2.0);
        d[(1, 1)] = crate::linalg::cr(0.5);
        let p3 = project_to_unitary(&DenseOperator::new(vec![0], d).unwrap()).unwrap();
        assert!(max_abs_entry(&(p3.matrix() - eye(2))) < 1e-12);
    }

    #[test]
    fn identity_circuit_block_is_a_swap() {
        let c = Circuit::new(2, vec![]).unwrap();
        let blocks = exact_blocks(&c, 2);
        assert_eq!(blocks[0].support, vec![0, 2]);
        assert!(max_abs_entry(&(blocks[0].w.matrix() - gates::swap())) < 1e-10);
    }

    #[test]
    fn block_matches_conjugated_swap_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 3;
        let c = random_line_circuit(n, 1, &mut rng);
        let blocks = exact_blocks(&c, n);
        for block in &blocks {
            assert!(block.w.is_unitary());
            // Oracle: (U'^d x I) S_i (U' x I) restricted to the block support,
            // where U' acts on the doubled register.
            let i = block.region[0];
            let u = c.unitary().unwrap();
            let full_support: Vec<usize> = (0..2 * n).collect();
            let ud = DenseOperator::new((0..n).collect(), u).unwrap();
            let ue = ud.embed(&full_support).unwrap();
            let s = crate::heisenberg::embed_gate(&gates::swap(), i, n + i, &full_support);
            let w_full = crate::linalg::dagger(ue.matrix()) * s * ue.matrix();
            let w_emb = block.w.embed(&full_support).unwrap();
            assert!(max_abs_entry(&(w_emb.matrix() - w_full)) < 1e-9);
        }
    }

    #[test]
    fn coloring_layers_are_support_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 6;
        let c = random_line_circuit(n, 1, &mut rng);
        let layers = order_blocks_by_coloring(exact_blocks(&c, n));
        assert!(layers.len() <= 4);
        for layer in &layers {
            let mut seen: std::collections::BTreeSet<usize> = Default::default();
            for block in layer {
                for &q in &block.support {
                    assert!(seen.insert(q), "support overlap inside a layer");
                }
            }
        }
    }

    #[test]
    fn exact_sewing_reproduces_the_doubled_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for depth in [1usize, 2] {
            let n = 4;
            let c = random_line_circuit(n, depth, &mut rng);
            let layers = order_blocks_by_coloring(exact_blocks(&c, n));
            let sewn = sew(&layers, n).unwrap();
            let got = sewn.unitary().unwrap();
            assert!(
                max_entry_phase_min(&got, &target_double(&c)) < 1e-8,
                "depth {}",
                depth
            );
        }
    }

    #[test]
    fn sewing_identity_gives_identity() {
        let n = 3;
        let c = Circuit::new(n, vec![]).unwrap();
        let layers = order_blocks_by_coloring(exact_blocks(&c, n));
        let sewn = sew(&layers, n).unwrap();
        assert!(max_entry_phase_min(&sewn.unitary().unwrap(), &eye(1 << (2 * n))) < 1e-9);
    }

    #[test]
    fn perturbed_blocks_obey_the_telescoping_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 4;
        let c = random_line_circuit(n, 1, &mut rng);
        let mut total_eps = 0.0;
        let blocks: Vec<SewBlock> = (0..n)
            .map(|i| {
                let mut obs = Vec::new();
                for p in [PauliOp::X, PauliOp::Y, PauliOp::Z] {
                    let o = heisenberg_observable_exact(&c, i, p).unwrap();
                    let dim = o.matrix().nrows();
                    // Random Hermitian perturbation with known spectral size.
                    let g = haar_unitary(dim, &mut rng);
                    let h = (&g + crate::linalg::dagger(&g)).map(|z| z * 0.5);
                    let eps = 0.02 * spectral_norm(&h);
                    let scaled = h.map(|z| z * 0.02);
                    total_eps += eps;
                    let m = o.matrix() + scaled;
                    obs.push(DenseOperator::new(o.support().to_vec(), m).unwrap());
                }
                build_sew_block(&obs[0], &obs[1], &obs[2], i, n).unwrap()
            })
            .collect();
        let layers = order_blocks_by_coloring(blocks);
        let sewn = sew(&layers, n).unwrap();
        let diff_spectral = {
            let got = sewn.unitary().unwrap();
            let tgt = target_double(&c);
            let (_, phi) = crate::linalg::frobenius_phase_min(&got, &tgt);
            let rotated = got.map(|z| z * crate::linalg::c(0.0, phi).exp());
            spectral_norm(&(rotated - tgt))
        };
        assert!(
            diff_spectral <= total_eps + 1e-8,
            "deviation {} budget {}",
            diff_spectral,
            total_eps
        );
    }

    #[test]
    fn local_inversion_sewing_matches_doubled_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 3;
        let c = random_line_circuit(n, 1, &mut rng);
        // V_i = U^dagger works as a local inversion for every qubit.
        let inversions: Vec<Circuit> = (0..n).map(|_| c.dagger()).collect();
        let sewn = sew_local_inversions(&inversions, n).unwrap();
        assert!(max_entry_phase_min(&sewn.unitary().unwrap(), &target_double(&c)) < 1e-9);

        let trivial: Vec<Circuit> = (0..n).map(|_| Circuit::new(n, vec![]).unwrap()).collect();
        let sewn_id = sew_local_inversions(&trivial, n).unwrap();
        assert!(max_entry_phase_min(&sewn_id.unitary().unwrap(), &eye(1 << (2 * n))) < 1e-9);
    }

    #[test]
    fn shallow_compilation_finds_finite_gate_blocks() {
        let n = 3;
        let g = geometry::line(n);
        let gateset = [gates::swap(), gates::cz()];
        let planted = Circuit::new(
            n,
            vec![vec![Gate::new(0, 1, gates::cz()).unwrap()]],
        )
        .unwrap();
        let blocks = exact_blocks(&planted, n);
        for block in &blocks {
            let layers = compile_block_to_shallow(block, 1, &g, &gateset, n, 1e-9).unwrap();
            assert_eq!(layers.len(), 3);
        }
        // Identity block compiles to the bare swap.
        let id = Circuit::new(n, vec![]).unwrap();
        let block0 = &exact_blocks(&id, n)[0];
        let layers = compile_block_to_shallow(block0, 0, &g, &gateset, n, 1e-9).unwrap();
        assert_eq!(layers.len(), 1);
        assert_eq!(layers[0].len(), 1);
    }

    #[test]
    fn learned_channel_reproduces_the_unitary_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 3;
        let c = random_line_circuit(n, 1, &mut rng);
        let sewn = sew(&order_blocks_by_coloring(exact_blocks(&c, n)), n).unwrap();
        for _ in 0..5 {
            let factors: Vec<[Complex64; 2]> = (0..n)
                .map(|_| {
                    let u = haar_unitary(2, &mut rng);
                    [u[(0, 0)], u[(1, 0)]]
                })
                .collect();
            let psi = StateVector::product(&factors);
            let rho = implement_learned_channel(&sewn, &psi).unwrap();
            let evolved = c.apply(&psi).unwrap();
            let fid = (evolved.as_cvec().adjoint() * &rho * evolved.as_cvec())[(0, 0)].re;
            assert!(fid >= 1.0 - 1e-9, "fidelity {}", fid);
        }
    }
}
