//! Learning lattice states prepared by shallow circuits.
//!
//! The 1D route enumerates candidate local inversions per region, solves a
//! chain constraint problem by dynamic programming, and merges the chosen
//! candidates into one inverter. The 2D route first disentangles vertical
//! strips, then learns a shallow preparation circuit for each residual
//! region on a patch extended by ancilla columns, and assembles everything
//! into a preparation circuit of depth 3d.

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::circuit::{Circuit, Gate};
use crate::dense::DenseOperator;
use crate::error::SclError;
use crate::geometry::{lattice, lightcone, GeometryGraph};
use crate::heisenberg::embed_gate;
use crate::linalg::{cr, dagger, hermitian_eig, orthonormal_completion, polar_unitary, CMat, CVec};
use crate::state::StateVector;
use crate::synth::synthesize_unitary;

const EXACT_TOL: f64 = 1e-9;

/// Candidate local inversions for one region, all of the same depth.
#[derive(Debug, Clone)]
pub struct CandidateList {
    pub region: Vec<usize>,
    pub footprint: Vec<usize>,
    pub circuits: Vec<Circuit>,
    pub scores: Vec<f64>,
}

/// A solved chain: one candidate index per region plus the merged circuit.
#[derive(Debug, Clone)]
pub struct ChainAssignment {
    pub chosen: Vec<usize>,
    pub merged: Circuit,
}

pub enum CandidateSource<'a> {
    GateSet { gates: &'a [CMat], graph: &'a GeometryGraph },
    Explicit(&'a [Circuit]),
}

/// A gate slot assignment: (a, b, index into the gate set).
type Slot = (usize, usize, usize);

/// All matchings over `edges` with every gate-set choice attached. When
/// `touch` is given, only edges meeting that set may carry a gate.
fn matchings_with_gates(
    edges: &[(usize, usize)],
    gate_count: usize,
    touch: Option<&BTreeSet<usize>>,
) -> Vec<Vec<Slot>> {
    let usable: Vec<(usize, usize)> = edges
        .iter()
        .filter(|(a, b)| touch.map_or(true, |t| t.contains(a) || t.contains(b)))
        .cloned()
        .collect();
    let mut out = Vec::new();
    let mut current: Vec<Slot> = Vec::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    fn recurse(
        usable: &[(usize, usize)],
        gate_count: usize,
        i: usize,
        current: &mut Vec<Slot>,
        used: &mut BTreeSet<usize>,
        out: &mut Vec<Vec<Slot>>,
    ) {
        if i == usable.len() {
            out.push(current.clone());
            return;
        }
        recurse(usable, gate_count, i + 1, current, used, out);
        let (a, b) = usable[i];
        if !used.contains(&a) && !used.contains(&b) {
            used.insert(a);
            used.insert(b);
            for g in 0..gate_count {
                current.push((a, b, g));
                recurse(usable, gate_count, i + 1, current, used, out);
                current.pop();
            }
            used.remove(&a);
            used.remove(&b);
        }
    }
    recurse(&usable, gate_count, 0, &mut current, &mut used, &mut out);
    out.sort_by_key(|m| m.len());
    out
}

fn slots_to_layers(layers: &[Vec<Slot>], gateset: &[CMat]) -> Result<Vec<Vec<Gate>>, SclError> {
    layers
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|&(a, b, g)| Gate::new(a, b, gateset[g].clone()))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect()
}

/// Gates of `layers` inside the backward lightcone of `region`: keep a gate
/// in layer t when it meets the support grown from the region through all
/// later layers. Returns the filtered layers and the cone support.
pub fn backward_cone(layers: &[Vec<Gate>], region: &[usize]) -> (Vec<Vec<Gate>>, Vec<usize>) {
    let mut support: BTreeSet<usize> = region.iter().cloned().collect();
    let mut kept: Vec<Vec<Gate>> = vec![Vec::new(); layers.len()];
    for t in (0..layers.len()).rev() {
        for gate in &layers[t] {
            let (a, b) = gate.qubits();
            if support.contains(&a) || support.contains(&b) {
                kept[t].push(gate.clone());
                support.insert(a);
                support.insert(b);
            }
        }
    }
    (kept, support.into_iter().collect())
}

/// ⟨0_region| Tr_rest(V ρ V†) |0_region⟩ with all of V's gates inside ρ's
/// support.
pub fn inversion_fidelity(
    rho: &DenseOperator,
    circuit: &Circuit,
    region: &[usize],
) -> Result<f64, SclError> {
    let support = rho.support().to_vec();
    let mut m = rho.matrix().clone();
    for layer in circuit.layers() {
        for gate in layer {
            let (a, b) = gate.qubits();
            if !support.contains(&a) || !support.contains(&b) {
                return Err(SclError::invalid("gate outside the density matrix support"));
            }
            let g = embed_gate(gate.matrix(), a, b, &support);
            m = &g * &m * dagger(&g);
        }
    }
    let k = support.len();
    let mut mask = 0usize;
    for q in region {
        let pos = support
            .iter()
            .position(|s| s == q)
            .ok_or_else(|| SclError::invalid("region outside the density matrix support"))?;
        mask |= 1 << (k - 1 - pos);
    }
    let mut score = 0.0;
    for idx in 0..(1usize << k) {
        if idx & mask == 0 {
            score += m[(idx, idx)].re;
        }
    }
    Ok(score)
}

pub fn enumerate_local_inversions(
    rho: &DenseOperator,
    region: &[usize],
    depth: usize,
    source: &CandidateSource,
    threshold: f64,
) -> Result<CandidateList, SclError> {
    let footprint = rho.support().to_vec();
    let mut circuits = Vec::new();
    let mut scores = Vec::new();
    match source {
        CandidateSource::GateSet { gates, graph } => {
            let region_set: BTreeSet<usize> = region.iter().cloned().collect();
            let edges: Vec<(usize, usize)> = graph
                .edges()
                .filter(|(a, b)| footprint.contains(a) && footprint.contains(b))
                .collect();
            // Trapezoid shape: the t-th applied layer only needs gates
            // meeting the lightcone of the region at radius t-1.
            let per_layer: Vec<Vec<Vec<Slot>>> = (0..depth)
                .map(|t| {
                    let cone = lightcone(graph, &region_set, t);
                    matchings_with_gates(&edges, gates.len(), Some(&cone))
                })
                .collect();
            let mut stack: Vec<Vec<Slot>> = Vec::new();
            enumerate_product(&per_layer, &mut stack, &mut |layers| {
                let gate_layers = slots_to_layers(layers, gates)?;
                let n = footprint.iter().max().map_or(1, |&q| q + 1);
                let circuit = Circuit::new(n, gate_layers)?;
                let score = inversion_fidelity(rho, &circuit, region)?;
                if score >= threshold {
                    circuits.push(circuit);
                    scores.push(score.min(1.0));
                }
                Ok(())
            })?;
        }
        CandidateSource::Explicit(list) => {
            for circuit in list.iter() {
                let score = inversion_fidelity(rho, circuit, region)?;
                if score >= threshold {
                    circuits.push(circuit.clone());
                    scores.push(score.min(1.0));
                }
            }
        }
    }
    Ok(CandidateList { region: region.to_vec(), footprint, circuits, scores })
}

fn enumerate_product<'a, F>(
    per_layer: &'a [Vec<Vec<Slot>>],
    stack: &mut Vec<Vec<Slot>>,
    visit: &mut F,
) -> Result<(), SclError>
where
    F: FnMut(&[Vec<Slot>]) -> Result<(), SclError>,
{
    if stack.len() == per_layer.len() {
        return visit(stack);
    }
    for choice in &per_layer[stack.len()] {
        stack.push(choice.clone());
        enumerate_product(per_layer, stack, visit)?;
        stack.pop();
    }
    Ok(())
}

/// Whether two candidates can coexist: on every qubit both footprints see,
/// the gate covering it must agree. A gate only one side carries is fine
/// when the other side could not have represented it, i.e. the gate leaves
/// the other footprint or (for touch-constrained lists) misses the other
/// region.
pub fn candidates_consistent(
    a: &Circuit,
    wa: &BTreeSet<usize>,
    ra: Option<&BTreeSet<usize>>,
    b: &Circuit,
    wb: &BTreeSet<usize>,
    rb: Option<&BTreeSet<usize>>,
    tol: f64,
) -> bool {
    let depth = a.depth().max(b.depth());
    let empty: Vec<Gate> = Vec::new();
    let shared: Vec<usize> = wa.intersection(wb).cloned().collect();
    for t in 0..depth {
        let la = a.layers().get(t).unwrap_or(&empty);
        let lb = b.layers().get(t).unwrap_or(&empty);
        for &q in &shared {
            let ga = la.iter().find(|g| g.qubits().0 == q || g.qubits().1 == q);
            let gb = lb.iter().find(|g| g.qubits().0 == q || g.qubits().1 == q);
            let ok = match (ga, gb) {
                (None, None) => true,
                (Some(x), Some(y)) => x.approx_eq(y, tol),
                (Some(x), None) => !representable(x, wb, rb),
                (None, Some(y)) => !representable(y, wa, ra),
            };
            if !ok {
                return false;
            }
        }
    }
    true
}

fn representable(gate: &Gate, w: &BTreeSet<usize>, r: Option<&BTreeSet<usize>>) -> bool {
    let (a, b) = gate.qubits();
    if !w.contains(&a) || !w.contains(&b) {
        return false;
    }
    r.map_or(true, |r| r.contains(&a) || r.contains(&b))
}

/// Dynamic program over the chain. Returns one candidate index per list;
/// ties are broken toward the smallest index. Positions in the error are
/// 1-based.
pub fn solve_chain_csp<F>(lists: &[CandidateList], consistent: F) -> Result<Vec<usize>, SclError>
where
    F: Fn(usize, usize, usize) -> bool,
{
    if lists.is_empty() {
        return Err(SclError::invalid("empty candidate chain"));
    }
    let mut feasible: Vec<Vec<bool>> = Vec::with_capacity(lists.len());
    let mut prev: Vec<Vec<usize>> = Vec::with_capacity(lists.len());
    if lists[0].circuits.is_empty() {
        return Err(SclError::Unsatisfiable { position: 1, reason: "no candidates".into() });
    }
    feasible.push(vec![true; lists[0].circuits.len()]);
    prev.push(vec![usize::MAX; lists[0].circuits.len()]);
    for i in 1..lists.len() {
        let m = lists[i].circuits.len();
        let mut f = vec![false; m];
        let mut p = vec![usize::MAX; m];
        for j in 0..m {
            for (k, &ok) in feasible[i - 1].iter().enumerate() {
                if ok && consistent(i - 1, k, j) {
                    f[j] = true;
                    p[j] = k;
                    break;
                }
            }
        }
        if !f.iter().any(|&x| x) {
            return Err(SclError::Unsatisfiable {
                position: i + 1,
                reason: "no candidate extends any feasible prefix".into(),
            });
        }
        feasible.push(f);
        prev.push(p);
    }
    let last = feasible.len() - 1;
    let mut j = feasible[last].iter().position(|&x| x).expect("feasible end");
    let mut chosen = vec![0usize; lists.len()];
    chosen[last] = j;
    for i in (1..=last).rev() {
        j = prev[i][j];
        chosen[i - 1] = j;
    }
    Ok(chosen)
}

/// Union of the chosen candidates, layer by layer, shared gates taken once.
pub fn merge_assignment(
    lists: &[CandidateList],
    chosen: &[usize],
    n: usize,
) -> Result<Circuit, SclError> {
    if lists.len() != chosen.len() {
        return Err(SclError::invalid("assignment length mismatch"));
    }
    let depth = lists
        .iter()
        .zip(chosen)
        .map(|(l, &j)| l.circuits[j].depth())
        .max()
        .unwrap_or(0);
    let mut layers: Vec<Vec<Gate>> = vec![Vec::new(); depth];
    for (list, &j) in lists.iter().zip(chosen) {
        let circuit = &list.circuits[j];
        for (t, layer) in circuit.layers().iter().enumerate() {
            for gate in layer {
                let (a, b) = gate.qubits();
                let mut duplicate = false;
                for existing in &layers[t] {
                    let (x, y) = existing.qubits();
                    if (x, y) == (a, b) {
                        if existing.approx_eq(gate, EXACT_TOL) {
                            duplicate = true;
                            break;
                        }
                        return Err(SclError::learning(format!(
                            "merge conflict on ({a},{b}) in layer {t}"
                        )));
                    }
                    if x == a || x == b || y == a || y == b {
                        return Err(SclError::learning(format!(
                            "merge collision at qubit overlap in layer {t}"
                        )));
                    }
                }
                if !duplicate {
                    layers[t].push(gate.clone());
                }
            }
        }
    }
    Circuit::new(n, layers)
}

fn rdm_operator(state: &StateVector, support: &[usize]) -> Result<DenseOperator, SclError> {
    DenseOperator::new(support.to_vec(), small_rdm(state, support))
}

/// Reduced density matrix by direct accumulation, fast for small `keep`.
fn small_rdm(state: &StateVector, keep: &[usize]) -> CMat {
    let n = state.num_qubits();
    let k = keep.len();
    let shifts: Vec<usize> = keep.iter().map(|&q| n - 1 - q).collect();
    let dim = 1usize << k;
    let mask: usize = shifts.iter().map(|&s| 1usize << s).sum();
    let scat: Vec<usize> = (0..dim)
        .map(|sub| {
            let mut x = 0usize;
            for (j, &s) in shifts.iter().enumerate() {
                if sub & (1 << (k - 1 - j)) != 0 {
                    x |= 1 << s;
                }
            }
            x
        })
        .collect();
    let amps = state.amplitudes();
    let mut rho = CMat::zeros(dim, dim);
    for base in 0..amps.len() {
        if base & mask != 0 {
            continue;
        }
        for r in 0..dim {
            let zr = amps[base | scat[r]];
            if zr.norm_sqr() == 0.0 {
                continue;
            }
            for c in 0..dim {
                rho[(r, c)] += zr * amps[base | scat[c]].conj();
            }
        }
    }
    rho
}

/// Learn a depth-d inverter for a line state: per-qubit windows of radius
/// `depth`, full window-slot candidates scored through their backward cone,
/// then the chain DP.
pub fn learn_1d_state(
    state: &StateVector,
    depth: usize,
    gateset: &[CMat],
) -> Result<ChainAssignment, SclError> {
    let n = state.num_qubits();
    let rdm_cache: Mutex<HashMap<Vec<usize>, DenseOperator>> = Mutex::new(HashMap::new());
    let mut lists = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(depth);
        let hi = (i + depth).min(n - 1);
        let window: Vec<usize> = (lo..=hi).collect();
        let edges: Vec<(usize, usize)> = window.windows(2).map(|w| (w[0], w[1])).collect();
        let layer_options = matchings_with_gates(&edges, gateset.len(), None);
        let per_layer: Vec<Vec<Vec<Slot>>> = vec![layer_options; depth];
        let mut circuits = Vec::new();
        let mut scores = Vec::new();
        let mut score_memo: HashMap<Vec<Vec<Slot>>, f64> = HashMap::new();
        let mut stack = Vec::new();
        enumerate_product(&per_layer, &mut stack, &mut |layers| {
            let gate_layers = slots_to_layers(layers, gateset)?;
            let (cone, support) = backward_cone(&gate_layers, &[i]);
            let cone_key: Vec<Vec<Slot>> = cone
                .iter()
                .map(|l| l.iter().map(|g| (g.qubits().0, g.qubits().1, 0)).collect())
                .collect();
            // Cone gates determine the qubit-i marginal; memoize by the
            // slot positions plus gate choices.
            let key: Vec<Vec<Slot>> = layers
                .iter()
                .zip(&cone_key)
                .map(|(full, ck)| {
                    full.iter()
                        .filter(|(a, b, _)| ck.iter().any(|(x, y, _)| x == a && y == b))
                        .cloned()
                        .collect()
                })
                .collect();
            let score = if let Some(&s) = score_memo.get(&key) {
                s
            } else {
                let rho = {
                    let mut cache = rdm_cache.lock().unwrap();
                    cache
                        .entry(support.clone())
                        .or_insert_with(|| rdm_operator(state, &support).expect("rdm"))
                        .clone()
                };
                let cone_circuit = Circuit::new(n, cone.clone())?;
                let s = inversion_fidelity(&rho, &cone_circuit, &[i])?;
                score_memo.insert(key, s);
                s
            };
            if score >= 1.0 - EXACT_TOL {
                circuits.push(Circuit::new(n, gate_layers)?);
                scores.push(score.min(1.0));
            }
            Ok(())
        })?;
        lists.push(CandidateList { region: vec![i], footprint: window, circuits, scores });
    }
    let footprints: Vec<BTreeSet<usize>> =
        lists.iter().map(|l| l.footprint.iter().cloned().collect()).collect();
    let chosen = solve_chain_csp(&lists, |i, k, j| {
        candidates_consistent(
            &lists[i].circuits[k],
            &footprints[i],
            None,
            &lists[i + 1].circuits[j],
            &footprints[i + 1],
            None,
            EXACT_TOL,
        )
    })?;
    let merged = merge_assignment(&lists, &chosen, n)?;
    Ok(ChainAssignment { chosen, merged })
}

/// Result of strip disentangling on a 2D lattice.
#[derive(Debug, Clone)]
pub struct StripDisentangle {
    pub v: Circuit,
    pub strips: Vec<Vec<usize>>,
    pub strip_cols: Vec<Vec<usize>>,
    pub residual_cols: Vec<Vec<usize>>,
    pub zero_prob: f64,
    pub residual_purity: Vec<f64>,
}

fn grid_index(row: usize, col: usize, cols: usize) -> usize {
    row * cols + col
}

/// Strip start columns: residual width 2d before each strip of width w_b.
fn strip_layout(cols: usize, d: usize, w_b: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut strips = Vec::new();
    let mut residuals = Vec::new();
    let mut pos = 0usize;
    loop {
        let a_end = (pos + 2 * d).min(cols);
        if a_end + w_b > cols {
            if pos < cols {
                residuals.push((pos..cols).collect());
            }
            break;
        }
        residuals.push((pos..a_end).collect());
        strips.push((a_end..a_end + w_b).collect());
        pos = a_end + w_b;
    }
    (strips, residuals)
}

/// Probability that every qubit in `mask` reads zero after applying `gates`
/// to a copy of the state.
fn zero_projection_score(
    state: &StateVector,
    layers: &[Vec<Gate>],
    region: &[usize],
) -> f64 {
    let mut work = state.clone();
    for layer in layers {
        for gate in layer {
            let (a, b) = gate.qubits();
            work.apply_two_qubit(gate.matrix(), a, b);
        }
    }
    let n = work.num_qubits();
    let mask: usize = region.iter().map(|&q| 1usize << (n - 1 - q)).sum();
    work.amplitudes()
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx & mask == 0)
        .map(|(_, z)| z.norm_sqr())
        .sum()
}

/// Invert the vertical strips of a lattice state with a depth-d circuit so
/// the strips read |0⟩, leaving pure residual columns.
pub fn disentangle_2d(
    state: &StateVector,
    rows: usize,
    cols: usize,
    d: usize,
    gateset: &[CMat],
    w_b: usize,
) -> Result<StripDisentangle, SclError> {
    if rows * cols != state.num_qubits() {
        return Err(SclError::Dimension("lattice dims vs state size".into()));
    }
    if w_b < 2 * d + 1 {
        return Err(SclError::invalid("strip width must be at least 2d+1"));
    }
    let graph = lattice(&[rows, cols]);
    let (strip_cols, residual_cols) = strip_layout(cols, d, w_b);
    let mut strip_circuits: Vec<Circuit> = Vec::new();
    let mut strips = Vec::new();
    for sc in &strip_cols {
        let mut lists = Vec::with_capacity(rows);
        let mut regions = Vec::with_capacity(rows);
        for r in 0..rows {
            let region: Vec<usize> = sc.iter().map(|&c| grid_index(r, c, cols)).collect();
            let region_set: BTreeSet<usize> = region.iter().cloned().collect();
            let circuits = if d == 1 {
                depth1_strip_candidates(state, &graph, &region, gateset, rows * cols)?
            } else {
                // General depth: enumerate trapezoid-shaped layer stacks
                // and score each against the full state.
                let per_layer: Vec<Vec<Vec<Slot>>> = (0..d)
                    .map(|t| {
                        let cone = lightcone(&graph, &region_set, t);
                        let edges: Vec<(usize, usize)> = graph
                            .edges()
                            .filter(|(a, b)| cone.contains(a) || cone.contains(b))
                            .collect();
                        matchings_with_gates(&edges, gateset.len(), Some(&cone))
                    })
                    .collect();
                let mut raw: Vec<Vec<Vec<Slot>>> = Vec::new();
                let mut stack = Vec::new();
                enumerate_product(&per_layer, &mut stack, &mut |layers| {
                    raw.push(layers.to_vec());
                    Ok(())
                })?;
                raw.par_iter()
                    .filter_map(|layers| {
                        let gate_layers = slots_to_layers(layers, gateset).expect("gates");
                        let score = zero_projection_score(state, &gate_layers, &region);
                        (score >= 1.0 - EXACT_TOL)
                            .then(|| Circuit::new(rows * cols, gate_layers).expect("circuit"))
                    })
                    .collect()
            };
            let scores = vec![1.0; circuits.len()];
            let footprint: Vec<usize> =
                lightcone(&graph, &region_set, d).into_iter().collect();
            lists.push(CandidateList { region: region.clone(), footprint, circuits, scores });
            regions.push(region);
        }
        let footprints: Vec<BTreeSet<usize>> =
            lists.iter().map(|l| l.footprint.iter().cloned().collect()).collect();
        let region_sets: Vec<BTreeSet<usize>> =
            lists.iter().map(|l| l.region.iter().cloned().collect()).collect();
        let chosen = solve_chain_csp(&lists, |i, k, j| {
            candidates_consistent(
                &lists[i].circuits[k],
                &footprints[i],
                Some(&region_sets[i]),
                &lists[i + 1].circuits[j],
                &footprints[i + 1],
                Some(&region_sets[i + 1]),
                EXACT_TOL,
            )
        })?;
        strip_circuits.push(merge_assignment(&lists, &chosen, rows * cols)?);
        strips.push(regions.concat());
    }
    // Strips are separated by 2d columns, so their inverters commute; put
    // them in shared layers.
    let depth = strip_circuits.iter().map(|c| c.depth()).max().unwrap_or(0);
    let mut layers: Vec<Vec<Gate>> = vec![Vec::new(); depth];
    for circuit in &strip_circuits {
        for (t, layer) in circuit.layers().iter().enumerate() {
            for gate in layer {
                let (a, b) = gate.qubits();
                if layers[t].iter().any(|g| {
                    let (x, y) = g.qubits();
                    x == a || x == b || y == a || y == b
                }) {
                    return Err(SclError::learning("strip inverters overlap"));
                }
                layers[t].push(gate.clone());
            }
        }
    }
    let v = Circuit::new(rows * cols, layers)?;
    let tau = v.apply(state)?;
    let all_strip: Vec<usize> = strips.concat();
    let no_gates: Vec<Vec<Gate>> = Vec::new();
    let zero_prob = zero_projection_score(&tau, &no_gates, &all_strip);
    let mut residual_purity = Vec::new();
    for rc in &residual_cols {
        let support: Vec<usize> = (0..rows)
            .flat_map(|r| rc.iter().map(move |&c| grid_index(r, c, cols)))
            .collect();
        let mut support = support;
        support.sort_unstable();
        let rho = tau.reduced_density(&support);
        let (eigs, _) = hermitian_eig(&rho);
        residual_purity.push(eigs.iter().cloned().fold(f64::MIN, f64::max));
    }
    Ok(StripDisentangle { v, strips, strip_cols, residual_cols, zero_prob, residual_purity })
}

/// Depth-1 candidates with every gate touching the region, built from
/// per-qubit marginal checks: the joint all-zeros probability is 1 exactly
/// when each region qubit's marginal is, and a single layer lets each
/// marginal depend only on the one gate covering that qubit.
fn depth1_strip_candidates(
    state: &StateVector,
    graph: &GeometryGraph,
    region: &[usize],
    gateset: &[CMat],
    n: usize,
) -> Result<Vec<Circuit>, SclError> {
    let mut options: Vec<Vec<Option<Slot>>> = Vec::new();
    for &q in region {
        let mut opts: Vec<Option<Slot>> = Vec::new();
        let rho1 = small_rdm(state, &[q]);
        if rho1[(0, 0)].re >= 1.0 - EXACT_TOL {
            opts.push(None);
        }
        for (a, b) in graph.edges().filter(|&(a, b)| a == q || b == q) {
            let rho2 = small_rdm(state, &[a, b]);
            for (gi, g) in gateset.iter().enumerate() {
                let m = g * &rho2 * dagger(g);
                let p0 = if a == q {
                    m[(0, 0)].re + m[(1, 1)].re
                } else {
                    m[(0, 0)].re + m[(2, 2)].re
                };
                if p0 >= 1.0 - EXACT_TOL {
                    opts.push(Some((a, b, gi)));
                }
            }
        }
        options.push(opts);
    }
    let mut out = Vec::new();
    let mut chosen: Vec<Slot> = Vec::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    fn recurse(
        region: &[usize],
        options: &[Vec<Option<Slot>>],
        i: usize,
        chosen: &mut Vec<Slot>,
        used: &mut BTreeSet<usize>,
        out: &mut Vec<Vec<Slot>>,
    ) {
        if i == region.len() {
            out.push(chosen.clone());
            return;
        }
        let q = region[i];
        // A gate chosen for an earlier region qubit may already cover q; it
        // then has to be valid for q as well, and it is the only option.
        if let Some(&slot) = chosen.iter().find(|(a, b, _)| *a == q || *b == q) {
            if options[i].contains(&Some(slot)) {
                recurse(region, options, i + 1, chosen, used, out);
            }
            return;
        }
        for opt in &options[i] {
            match opt {
                None => recurse(region, options, i + 1, chosen, used, out),
                Some(slot) => {
                    let (a, b, _) = *slot;
                    let other = if a == q { b } else { a };
                    if used.contains(&other) {
                        continue;
                    }
                    // The gate may cover another region qubit; its marginal
                    // depends only on this gate, so the gate has to be valid
                    // for that qubit too (qubits already settled on "no
                    // gate" are the ones reached here).
                    if let Some(j) = region.iter().position(|&r| r == other) {
                        if !options[j].contains(&Some(*slot)) {
                            continue;
                        }
                    }
                    used.insert(a);
                    used.insert(b);
                    chosen.push(*slot);
                    recurse(region, options, i + 1, chosen, used, out);
                    chosen.pop();
                    used.remove(&a);
                    used.remove(&b);
                }
            }
        }
    }
    recurse(region, &options, 0, &mut chosen, &mut used, &mut out);
    out.sort();
    out.dedup();
    out.into_iter()
        .map(|slots| {
            let layers = slots_to_layers(&[slots], gateset)?;
            Circuit::new(n, layers)
        })
        .collect()
}

/// Learned preparation for one residual region, on its own patch register.
#[derive(Debug, Clone)]
pub struct PatchCircuit {
    pub w: Circuit,
    pub patch_rows: usize,
    pub patch_cols: usize,
    /// Patch-local indices of the region qubits, ascending.
    pub region_local: Vec<usize>,
    /// Lattice indices the region qubits map to, ascending.
    pub region_global: Vec<usize>,
}

/// Search for a depth-2d preparation circuit on the patch (region columns
/// plus ancilla columns) whose output matches the pure target on the region.
pub fn learn_patch_circuit(
    target: &CVec,
    patch_rows: usize,
    patch_cols: usize,
    region_cols: std::ops::Range<usize>,
    d: usize,
    gateset: &[CMat],
) -> Result<Circuit, SclError> {
    let graph = lattice(&[patch_rows, patch_cols]);
    let n = patch_rows * patch_cols;
    let region: Vec<usize> = (0..patch_rows)
        .flat_map(|r| region_cols.clone().map(move |c| grid_index(r, c, patch_cols)))
        .collect();
    let mut region = region;
    region.sort_unstable();
    if target.len() != 1usize << region.len() {
        return Err(SclError::Dimension("target vs region size".into()));
    }
    let region_set: BTreeSet<usize> = region.iter().cloned().collect();
    let depth = 2 * d;
    let edges: Vec<(usize, usize)> = graph.edges().collect();
    // Preparation order is the reverse of an inversion: the last applied
    // layer touches the region, earlier layers the grown cone.
    let per_layer: Vec<Vec<Vec<Slot>>> = (0..depth)
        .map(|t| {
            let cone = lightcone(&graph, &region_set, depth - 1 - t);
            matchings_with_gates(&edges, gateset.len(), Some(&cone))
        })
        .collect();
    if depth != 2 {
        return learn_patch_generic(
            target, n, &region, &per_layer, gateset, patch_rows, patch_cols,
        );
    }
    // Depth 2: iterate first-layer choices once each and reuse the applied
    // state across compatible second layers.
    let firsts = &per_layer[0];
    let seconds = &per_layer[1];
    let shifts: Vec<usize> = region.iter().map(|&q| n - 1 - q).collect();
    let found = firsts
        .par_iter()
        .enumerate()
        .find_map_first(|(i1, l1)| {
            let gates1 = slots_to_layers(std::slice::from_ref(l1), gateset).expect("gates");
            let mut psi1 = StateVector::zero(n);
            for gate in &gates1[0] {
                let (a, b) = gate.qubits();
                psi1.apply_two_qubit(gate.matrix(), a, b);
            }
            for (i2, l2) in seconds.iter().enumerate() {
                // Trapezoid pruning: every first-layer gate must meet the
                // region grown by the second layer's support.
                let mut grown = region_set.clone();
                for &(a, b, _) in l2 {
                    grown.insert(a);
                    grown.insert(b);
                }
                if !l1.iter().all(|(a, b, _)| grown.contains(a) || grown.contains(b)) {
                    continue;
                }
                let gates2 = slots_to_layers(std::slice::from_ref(l2), gateset).expect("gates");
                let mut psi = psi1.clone();
                for gate in &gates2[0] {
                    let (a, b) = gate.qubits();
                    psi.apply_two_qubit(gate.matrix(), a, b);
                }
                if region_fidelity(&psi, target, &shifts) >= 1.0 - EXACT_TOL {
                    return Some((i1, i2));
                }
            }
            None
        });
    match found {
        Some((i1, i2)) => {
            let layers =
                slots_to_layers(&[firsts[i1].clone(), seconds[i2].clone()], gateset)?;
            Circuit::new(n, layers)
        }
        None => Err(SclError::Unsatisfiable {
            position: 1,
            reason: "no patch circuit reproduces the target".into(),
        }),
    }
}

fn learn_patch_generic(
    target: &CVec,
    n: usize,
    region: &[usize],
    per_layer: &[Vec<Vec<Slot>>],
    gateset: &[CMat],
    _rows: usize,
    _cols: usize,
) -> Result<Circuit, SclError> {
    let shifts: Vec<usize> = region.iter().map(|&q| n - 1 - q).collect();
    let mut best: Option<Vec<Vec<Slot>>> = None;
    let mut stack = Vec::new();
    enumerate_product(per_layer, &mut stack, &mut |layers| {
        if best.is_some() {
            return Ok(());
        }
        let gate_layers = slots_to_layers(layers, gateset)?;
        let mut psi = StateVector::zero(n);
        for layer in &gate_layers {
            for gate in layer {
                let (a, b) = gate.qubits();
                psi.apply_two_qubit(gate.matrix(), a, b);
            }
        }
        if region_fidelity(&psi, target, &shifts) >= 1.0 - EXACT_TOL {
            best = Some(layers.to_vec());
        }
        Ok(())
    })?;
    match best {
        Some(layers) => Circuit::new(n, slots_to_layers(&layers, gateset)?),
        None => Err(SclError::Unsatisfiable {
            position: 1,
            reason: "no patch circuit reproduces the target".into(),
        }),
    }
}

/// ⟨target| Tr_anc(|psi⟩⟨psi|) |target⟩ for a pure patch state.
fn region_fidelity(psi: &StateVector, target: &CVec, shifts: &[usize]) -> f64 {
    let n = psi.num_qubits();
    let k = shifts.len();
    let anc_dim = 1usize << (n - k);
    let mut overlap = vec![Complex64::new(0.0, 0.0); anc_dim];
    // Map each full index to (region sub-index, packed ancilla sub-index).
    let anc_shifts: Vec<usize> = (0..n)
        .map(|pos| n - 1 - pos)
        .filter(|s| !shifts.contains(s))
        .collect();
    for (idx, z) in psi.amplitudes().iter().enumerate() {
        if z.norm_sqr() == 0.0 {
            continue;
        }
        let mut rsub = 0usize;
        for (j, &s) in shifts.iter().enumerate() {
            if idx & (1 << s) != 0 {
                rsub |= 1 << (k - 1 - j);
            }
        }
        let mut asub = 0usize;
        for (j, &s) in anc_shifts.iter().enumerate() {
            if idx & (1 << s) != 0 {
                asub |= 1 << (anc_shifts.len() - 1 - j);
            }
        }
        overlap[asub] += target[rsub].conj() * z;
    }
    overlap.iter().map(|z| z.norm_sqr()).sum()
}

/// Output of a patch circuit on its own register: the region state and its
/// purity.
pub fn patch_output_state(patch: &PatchCircuit) -> Result<(CVec, f64), SclError> {
    let n = patch.patch_rows * patch.patch_cols;
    let psi = patch.w.apply(&StateVector::zero(n))?;
    let rho = psi.reduced_density(&patch.region_local);
    let (eigs, vecs) = hermitian_eig(&rho);
    let (arg, &purity) = eigs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("eigenvalues");
    Ok((vecs.column(arg).into_owned(), purity))
}

/// Parallel patch circuits followed by the strip inverter's dagger, on a
/// register of n lattice qubits plus per-patch ancillas.
pub fn assemble_state_preparation(
    v: &Circuit,
    patches: &[PatchCircuit],
    n: usize,
) -> Result<Circuit, SclError> {
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut total = n;
    // Map each patch-local qubit to a global index: region qubits keep
    // their lattice index, ancillas are appended after the lattice.
    let mut maps: Vec<Vec<usize>> = Vec::new();
    for patch in patches {
        let pn = patch.patch_rows * patch.patch_cols;
        let mut map = vec![usize::MAX; pn];
        for (local, global) in patch.region_local.iter().zip(&patch.region_global) {
            map[*local] = *global;
            if !used.insert(*global) {
                return Err(SclError::learning("patch support collision"));
            }
        }
        for slot in map.iter_mut() {
            if *slot == usize::MAX {
                *slot = total;
                total += 1;
            }
        }
        maps.push(map);
    }
    let patch_depth = patches.iter().map(|p| p.w.depth()).max().unwrap_or(0);
    let mut layers: Vec<Vec<Gate>> = vec![Vec::new(); patch_depth];
    for (patch, map) in patches.iter().zip(&maps) {
        for (t, layer) in patch.w.layers().iter().enumerate() {
            for gate in layer {
                let (a, b) = gate.qubits();
                layers[t].push(Gate::new(map[a], map[b], gate.matrix().clone())?);
            }
        }
    }
    for layer in v.dagger().layers() {
        layers.push(layer.clone());
    }
    Circuit::new(total, layers)
}

/// Embed disjoint pure pieces into one register; qubits not covered by any
/// piece are |0⟩.
pub fn product_embed(pieces: &[(Vec<usize>, CVec)], n: usize) -> Result<StateVector, SclError> {
    let mut covered = BTreeSet::new();
    for (qs, vec) in pieces {
        if vec.len() != 1usize << qs.len() {
            return Err(SclError::Dimension("piece vector vs support".into()));
        }
        for &q in qs {
            if q >= n || !covered.insert(q) {
                return Err(SclError::invalid("pieces must be disjoint and in range"));
            }
        }
    }
    let zero_mask: usize = (0..n)
        .filter(|q| !covered.contains(q))
        .map(|q| 1usize << (n - 1 - q))
        .sum();
    let piece_shifts: Vec<Vec<usize>> = pieces
        .iter()
        .map(|(qs, _)| qs.iter().map(|&q| n - 1 - q).collect())
        .collect();
    let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << n];
    for (idx, amp) in amps.iter_mut().enumerate() {
        if idx & zero_mask != 0 {
            continue;
        }
        let mut z = Complex64::new(1.0, 0.0);
        for ((_, vec), shifts) in pieces.iter().zip(&piece_shifts) {
            let mut sub = 0usize;
            for (j, &s) in shifts.iter().enumerate() {
                if idx & (1 << s) != 0 {
                    sub |= 1 << (shifts.len() - 1 - j);
                }
            }
            z *= vec[sub];
        }
        *amp = z;
    }
    StateVector::new(n, amps)
}

/// Full 2D pipeline result.
#[derive(Debug, Clone)]
pub struct Learned2dState {
    pub disentangle: StripDisentangle,
    pub patches: Vec<PatchCircuit>,
    pub preparation: Circuit,
    pub depth: usize,
    pub fidelity: f64,
}

/// Disentangle the strips, learn a patch preparation per residual region,
/// assemble, and score against the input state.
pub fn learn_2d_state(
    state: &StateVector,
    rows: usize,
    cols: usize,
    d: usize,
    gateset: &[CMat],
) -> Result<Learned2dState, SclError> {
    let dis = disentangle_2d(state, rows, cols, d, gateset, 2 * d + 1)?;
    if dis.zero_prob < 1.0 - EXACT_TOL {
        return Err(SclError::learning(format!(
            "strip disentangling left population {:.3e}",
            1.0 - dis.zero_prob
        )));
    }
    let tau = dis.v.apply(state)?;
    let mut patches = Vec::new();
    for (ri, rc) in dis.residual_cols.iter().enumerate() {
        if dis.residual_purity[ri] < 1.0 - EXACT_TOL {
            return Err(SclError::learning(format!(
                "residual region {ri} is not pure: lambda_max {:.6}",
                dis.residual_purity[ri]
            )));
        }
        let mut region_global: Vec<usize> = (0..rows)
            .flat_map(|r| rc.iter().map(move |&c| grid_index(r, c, cols)))
            .collect();
        region_global.sort_unstable();
        let rho = tau.reduced_density(&region_global);
        let (eigs, vecs) = hermitian_eig(&rho);
        let arg = eigs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .expect("eigenvalues");
        let target = vecs.column(arg).into_owned();
        let w = rc.len();
        let anc_left = if rc[0] == 0 { 0 } else { 2 * d };
        let anc_right = if *rc.last().unwrap() == cols - 1 { 0 } else { 2 * d };
        let patch_cols = anc_left + w + anc_right;
        let region_cols = anc_left..anc_left + w;
        let circuit =
            learn_patch_circuit(&target, rows, patch_cols, region_cols.clone(), d, gateset)?;
        let mut region_local: Vec<usize> = (0..rows)
            .flat_map(|r| region_cols.clone().map(move |c| grid_index(r, c, patch_cols)))
            .collect();
        region_local.sort_unstable();
        patches.push(PatchCircuit {
            w: circuit,
            patch_rows: rows,
            patch_cols,
            region_local,
            region_global,
        });
    }
    let preparation = assemble_state_preparation(&dis.v, &patches, rows * cols)?;
    let depth = preparation.depth();
    // Scored without co-simulating ancillas: each patch output is pure on
    // its region, so the lattice state is a product of the learned pieces.
    let mut pieces: Vec<(Vec<usize>, CVec)> = Vec::new();
    for patch in &patches {
        let (piece, purity) = patch_output_state(patch)?;
        if purity < 1.0 - 1e-7 {
            return Err(SclError::learning("patch output not pure on the region"));
        }
        pieces.push((patch.region_global.clone(), piece));
    }
    let product = product_embed(&pieces, rows * cols)?;
    let prepared = dis.v.apply_dagger(&product)?;
    let fidelity = prepared.fidelity(state);
    Ok(Learned2dState { disentangle: dis, patches, preparation, depth, fidelity })
}

/// ‖ρ_AB − ρ_A ⊗ ρ_B‖₁ between two disjoint blocks.
pub fn factorization_gap(state: &StateVector, a: &[usize], b: &[usize]) -> f64 {
    let mut ab: Vec<usize> = a.iter().chain(b.iter()).cloned().collect();
    ab.sort_unstable();
    let rho_ab = state.reduced_density(&ab);
    let rho_a = state.reduced_density(a);
    let rho_b = state.reduced_density(b);
    // Align the kron factor order with the sorted joint support.
    let mut pieces: Vec<(Vec<usize>, CMat)> = vec![(a.to_vec(), rho_a), (b.to_vec(), rho_b)];
    pieces.sort_by_key(|(qs, _)| qs[0]);
    let sorted_each = pieces.iter().all(|(qs, _)| qs.windows(2).all(|w| w[0] < w[1]));
    assert!(sorted_each, "blocks must be ascending");
    assert!(
        pieces[0].0.last().unwrap() < pieces[1].0.first().unwrap(),
        "blocks must not interleave"
    );
    let prod = crate::linalg::kron(&pieces[0].1, &pieces[1].1);
    let diff = rho_ab - prod;
    let (eigs, _) = hermitian_eig(&diff);
    eigs.iter().map(|e| e.abs()).sum()
}

/// Disentangle a 1D region without ancillas: one Uhlmann unitary per block
/// splits the state into pure pieces, each synthesized directly. The depth
/// is not bounded by d.
pub fn learn_1d_state_no_ancilla(
    state: &StateVector,
    d: usize,
) -> Result<(Circuit, f64), SclError> {
    let m = state.num_qubits();
    let ell = 4 * d;
    let mut block_starts = Vec::new();
    let mut s = ell;
    while s + ell < m {
        block_starts.push(s);
        s += 2 * ell;
    }
    let mut work = state.clone();
    let mut unblocked: Vec<Circuit> = Vec::new();
    for &start in &block_starts {
        let block: Vec<usize> = (start..start + ell).collect();
        let u = uhlmann_disentangler(&work, &block)?;
        let op = DenseOperator::new(block.clone(), dagger(&u))?;
        work.apply_on(op.matrix(), &block);
        unblocked.push(synthesize_unitary(&DenseOperator::new(block, u)?, None)?);
    }
    // Pieces between block midpoints are now pure; prepare each directly.
    let mut cut_points = vec![0usize];
    for &start in &block_starts {
        cut_points.push(start + ell / 2);
    }
    cut_points.push(m);
    let mut layers: Vec<Vec<Gate>> = Vec::new();
    let mut fid_floor: f64 = 1.0;
    for w in cut_points.windows(2) {
        let piece: Vec<usize> = (w[0]..w[1]).collect();
        let rho = work.reduced_density(&piece);
        let (eigs, vecs) = hermitian_eig(&rho);
        let arg = eigs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .expect("eigenvalues");
        fid_floor = fid_floor.min(eigs[arg]);
        let column = vecs.column(arg).into_owned();
        let dim = column.len();
        let rest = orthonormal_completion(std::slice::from_ref(&column), dim, dim - 1);
        let mut u = CMat::zeros(dim, dim);
        u.set_column(0, &column);
        for (j, col) in rest.iter().enumerate() {
            u.set_column(j + 1, col);
        }
        let prep = synthesize_unitary(&DenseOperator::new(piece, u)?, None)?;
        for layer in prep.layers() {
            layers.push(layer.clone());
        }
    }
    for circuit in &unblocked {
        for layer in circuit.layers() {
            layers.push(layer.clone());
        }
    }
    let prep = Circuit::new(m, layers)?;
    let prepared = prep.apply(&StateVector::zero(m))?;
    Ok((prep, prepared.fidelity(state)))
}

/// Uhlmann unitary on `block` mapping the product of one-sided purifications
/// to the state, so its dagger disentangles the block's two sides.
fn uhlmann_disentangler(state: &StateVector, block: &[usize]) -> Result<CMat, SclError> {
    let m = state.num_qubits();
    let left: Vec<usize> = (0..block[0]).collect();
    let right: Vec<usize> = (block[block.len() - 1] + 1..m).collect();
    let env: Vec<usize> = left.iter().chain(right.iter()).cloned().collect();
    let ell = block.len();
    let half = ell / 2;
    let coeff = coefficient_matrix(state, &env, block);
    let rho_env = &coeff * coeff.adjoint();
    let (mu, e) = hermitian_eig(&rho_env);
    // Purify each side separately, pinning the purifier into half the block.
    let rho_left = state.reduced_density(&left);
    let rho_right = state.reduced_density(&right);
    let (lam_l, v_l) = hermitian_eig(&rho_left);
    let (lam_r, v_r) = hermitian_eig(&rho_right);
    let rank_l = lam_l.iter().filter(|&&x| x > 1e-9).count();
    let rank_r = lam_r.iter().filter(|&&x| x > 1e-9).count();
    if rank_l > 1 << half || rank_r > 1 << (ell - half) {
        return Err(SclError::learning(
            "block too small for the one-sided purification ranks",
        ));
    }
    let dim_l = rho_left.nrows();
    let dim_r = rho_right.nrows();
    let left_kept: Vec<usize> =
        (0..lam_l.len()).filter(|&i| lam_l[i] > 1e-9).collect();
    let right_kept: Vec<usize> =
        (0..lam_r.len()).filter(|&i| lam_r[i] > 1e-9).collect();
    let mut coeff12 = CMat::zeros(dim_l * dim_r, 1 << ell);
    for (kl, &il) in left_kept.iter().enumerate() {
        for (kr, &ir) in right_kept.iter().enumerate() {
            let scale = cr((lam_l[il] * lam_r[ir]).sqrt());
            // Block index: left-half purifier bits then right-half bits.
            let b_idx = (kl << (ell - half)) | kr;
            for ia in 0..dim_l {
                for ic in 0..dim_r {
                    coeff12[(ia * dim_r + ic, b_idx)] +=
                        scale * v_l[(ia, il)] * v_r[(ic, ir)];
                }
            }
        }
    }
    // Both purifications share the env eigenbasis, so matching Schmidt
    // vectors defines the Uhlmann rotation.
    let mut b_cols: Vec<CVec> = Vec::new();
    let mut b12_cols: Vec<CVec> = Vec::new();
    for (idx, &weight) in mu.iter().enumerate() {
        if weight <= 1e-9 {
            continue;
        }
        let em = e.column(idx).conjugate().clone_owned();
        let scale = cr(1.0 / weight.sqrt());
        b_cols.push((coeff.transpose() * &em) * scale);
        b12_cols.push((coeff12.transpose() * &em) * scale);
    }
    let dim_b = 1usize << ell;
    let mut b_full = b_cols.clone();
    b_full.extend(orthonormal_completion(&b_cols, dim_b, dim_b - b_cols.len()));
    let mut b12_full = b12_cols.clone();
    b12_full.extend(orthonormal_completion(&b12_cols, dim_b, dim_b - b12_cols.len()));
    let mut u = CMat::zeros(dim_b, dim_b);
    for (bm, b12m) in b_full.iter().zip(&b12_full) {
        u += bm * b12m.adjoint();
    }
    Ok(polar_unitary(&u))
}

/// Coefficient matrix of a pure state across a bipartition: rows indexed by
/// `row_qubits`, columns by `col_qubits`, each in the usual ascending-bit
/// order.
fn coefficient_matrix(state: &StateVector, row_qubits: &[usize], col_qubits: &[usize]) -> CMat {
    let n = state.num_qubits();
    let rs: Vec<usize> = row_qubits.iter().map(|&q| n - 1 - q).collect();
    let cs: Vec<usize> = col_qubits.iter().map(|&q| n - 1 - q).collect();
    let mut out = CMat::zeros(1 << rs.len(), 1 << cs.len());
    for (idx, z) in state.amplitudes().iter().enumerate() {
        let mut r = 0usize;
        for (j, &s) in rs.iter().enumerate() {
            if idx & (1 << s) != 0 {
                r |= 1 << (rs.len() - 1 - j);
            }
        }
        let mut c = 0usize;
        for (j, &s) in cs.iter().enumerate() {
            if idx & (1 << s) != 0 {
                c |= 1 << (cs.len() - 1 - j);
            }
        }
        out[(r, c)] = *z;
    }
    out
}

/// Closed-form robustness bounds for the state-learning chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBudget {
    /// 13n ε^{1/16} + 4n δ^{1/4}
    pub local_to_global: f64,
    /// sqrt(2ε + Lδ)
    pub chain_merge: f64,
    /// 6 n^{25/32} ε₀^{1/32}
    pub end_to_end: f64,
    /// ε₀ small enough that the end-to-end bound meets the target ε.
    pub required_eps0: f64,
}

pub fn error_budget(eps: f64, delta: f64, n: usize, l: usize, eps0: f64) -> ErrorBudget {
    let nf = n as f64;
    let local_to_global = 13.0 * nf * eps.powf(1.0 / 16.0) + 4.0 * nf * delta.powf(0.25);
    let chain_merge = (2.0 * eps + l as f64 * delta).sqrt();
    let end_to_end = 6.0 * nf.powf(25.0 / 32.0) * eps0.powf(1.0 / 32.0);
    let required_eps0 = (eps / (6.0 * nf.powf(25.0 / 32.0))).powi(32);
    ErrorBudget { local_to_global, chain_merge, end_to_end, required_eps0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::gates;
    use crate::geometry::line;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn planted_gates() -> Vec<CMat> {
        // The entangler keeps planted states nontrivial on |0..0>; CZ and
        // SWAP alone would fix it.
        vec![gates::cz(), gates::swap(), gates::bell_entangler()]
    }

    fn random_layer(
        edges: &[(usize, usize)],
        gateset: &[CMat],
        rng: &mut ChaCha8Rng,
        density: f64,
    ) -> Vec<Gate> {
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.shuffle(rng);
        let mut used = BTreeSet::new();
        let mut layer = Vec::new();
        for i in order {
            let (a, b) = edges[i];
            if used.contains(&a) || used.contains(&b) || rng.gen::<f64>() > density {
                continue;
            }
            used.insert(a);
            used.insert(b);
            let g = rng.gen_range(0..gateset.len());
            layer.push(Gate::new(a, b, gateset[g].clone()).unwrap());
        }
        layer
    }

    fn planted_state(
        graph: &GeometryGraph,
        depth: usize,
        gateset: &[CMat],
        seed: u64,
    ) -> (Circuit, StateVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<(usize, usize)> = graph.edges().collect();
        let layers: Vec<Vec<Gate>> =
            (0..depth).map(|_| random_layer(&edges, gateset, &mut rng, 0.7)).collect();
        let circuit = Circuit::new(graph.vertex_count(), layers).unwrap();
        let state = circuit.apply(&StateVector::zero(graph.vertex_count())).unwrap();
        (circuit, state)
    }

    #[test]
    fn identity_candidate_survives_on_the_all_zeros_state() {
        let state = StateVector::zero(4);
        let graph = line(4);
        let rho = rdm_operator(&state, &[0, 1, 2]).unwrap();
        let gates = planted_gates();
        let source = CandidateSource::GateSet { gates: &gates, graph: &graph };
        let list = enumerate_local_inversions(&rho, &[1], 1, &source, 1.0 - 1e-12).unwrap();
        assert!(!list.circuits.is_empty());
        assert!(list.circuits.iter().any(|c| c.gate_count() == 0));
        assert!(list.scores.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn planted_inverse_is_among_the_candidates() {
        let graph = line(5);
        let gates = planted_gates();
        let (circuit, state) = planted_state(&graph, 1, &gates, 7);
        let region = vec![2usize];
        let footprint: Vec<usize> = lightcone(&graph, &BTreeSet::from([2]), 1).into_iter().collect();
        let rho = rdm_operator(&state, &footprint).unwrap();
        let source = CandidateSource::GateSet { gates: &gates, graph: &graph };
        let list = enumerate_local_inversions(&rho, &region, 1, &source, 1.0 - 1e-9).unwrap();
        // The cone restriction of the planted inverse must be present.
        let (cone, _) = backward_cone(circuit.layers(), &region);
        let truth: Vec<Gate> = cone[0].iter().map(|g| g.dagger()).collect();
        let hit = list.circuits.iter().any(|c| {
            c.gate_count() == truth.len()
                && truth.iter().all(|g| {
                    c.layers()[0].iter().any(|h| h.approx_eq(g, 1e-12))
                })
        });
        assert!(hit, "ground-truth cone inverse missing from the candidate list");
        assert!(list.scores.iter().all(|&s| s >= 1.0 - 1e-9));
    }

    #[test]
    fn impossible_threshold_empties_the_list() {
        let state = StateVector::zero(3);
        let graph = line(3);
        let rho = rdm_operator(&state, &[0, 1, 2]).unwrap();
        let gates = planted_gates();
        let source = CandidateSource::GateSet { gates: &gates, graph: &graph };
        let list = enumerate_local_inversions(&rho, &[1], 1, &source, 1.1).unwrap();
        assert!(list.circuits.is_empty());
    }

    #[test]
    fn singleton_chain_solves_trivially() {
        let c = Circuit::new(2, vec![vec![]]).unwrap();
        let list = CandidateList {
            region: vec![0],
            footprint: vec![0, 1],
            circuits: vec![c],
            scores: vec![1.0],
        };
        let lists = vec![list.clone(), list];
        let chosen = solve_chain_csp(&lists, |_, _, _| true).unwrap();
        assert_eq!(chosen, vec![0, 0]);
    }

    #[test]
    fn incompatible_pair_is_unsatisfiable_at_position_two() {
        let a = Circuit::new(2, vec![vec![Gate::new(0, 1, gates::cz()).unwrap()]]).unwrap();
        let b = Circuit::new(2, vec![vec![Gate::new(0, 1, gates::swap()).unwrap()]]).unwrap();
        let la = CandidateList {
            region: vec![0],
            footprint: vec![0, 1],
            circuits: vec![a],
            scores: vec![1.0],
        };
        let lb = CandidateList {
            region: vec![1],
            footprint: vec![0, 1],
            circuits: vec![b],
            scores: vec![1.0],
        };
        let w: BTreeSet<usize> = [0, 1].into();
        let lists = [la, lb];
        let err = solve_chain_csp(&lists, |i, k, j| {
            candidates_consistent(
                &lists[i].circuits[k],
                &w,
                None,
                &lists[i + 1].circuits[j],
                &w,
                None,
                1e-9,
            )
        })
        .unwrap_err();
        match err {
            SclError::Unsatisfiable { position, .. } => assert_eq!(position, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn merged_inverter_resets_planted_lines() {
        for &n in &[8usize, 12] {
            let graph = line(n);
            let gates = planted_gates();
            let (_, state) = planted_state(&graph, 2, &gates, 1000 + n as u64);
            let assignment = learn_1d_state(&state, 2, &gates).unwrap();
            assert_eq!(assignment.merged.depth(), 2);
            let inverted = assignment.merged.apply(&state).unwrap();
            let fid = inverted.fidelity(&StateVector::zero(n));
            assert!(fid >= 1.0 - 1e-9, "n={n}: fidelity {fid}");
        }
    }

    #[test]
    fn planted_chain_with_decoys_stays_satisfiable() {
        // Four two-qubit regions on a planted line: the candidate lists
        // carry decoys alongside the ground truth, yet the merged choice
        // must still invert the state exactly.
        let graph = line(8);
        let gates = planted_gates();
        let (_, state) = planted_state(&graph, 1, &gates, 17);
        let source = CandidateSource::GateSet { gates: &gates, graph: &graph };
        let mut lists = Vec::new();
        for i in 0..4usize {
            let region = vec![2 * i, 2 * i + 1];
            let seeds: BTreeSet<usize> = region.iter().cloned().collect();
            let footprint: Vec<usize> = lightcone(&graph, &seeds, 1).into_iter().collect();
            let rho = rdm_operator(&state, &footprint).unwrap();
            let list =
                enumerate_local_inversions(&rho, &region, 1, &source, 1.0 - 1e-9).unwrap();
            assert!(!list.circuits.is_empty(), "region {i} has no candidates");
            lists.push(list);
        }
        let footprints: Vec<BTreeSet<usize>> =
            lists.iter().map(|l| l.footprint.iter().cloned().collect()).collect();
        let regions: Vec<BTreeSet<usize>> =
            lists.iter().map(|l| l.region.iter().cloned().collect()).collect();
        let chosen = solve_chain_csp(&lists, |i, k, j| {
            candidates_consistent(
                &lists[i].circuits[k],
                &footprints[i],
                Some(&regions[i]),
                &lists[i + 1].circuits[j],
                &footprints[i + 1],
                Some(&regions[i + 1]),
                1e-9,
            )
        })
        .unwrap();
        let merged = merge_assignment(&lists, &chosen, 8).unwrap();
        assert_eq!(merged.depth(), 1);
        let inverted = merged.apply(&state).unwrap();
        assert!(inverted.fidelity(&StateVector::zero(8)) >= 1.0 - 1e-9);
    }

    #[test]
    fn merging_identities_gives_an_empty_circuit() {
        let c = Circuit::new(4, vec![vec![]]).unwrap();
        let lists: Vec<CandidateList> = (0..4)
            .map(|i| CandidateList {
                region: vec![i],
                footprint: vec![i],
                circuits: vec![c.clone()],
                scores: vec![1.0],
            })
            .collect();
        let merged = merge_assignment(&lists, &[0, 0, 0, 0], 4).unwrap();
        assert_eq!(merged.gate_count(), 0);
        assert_eq!(merged.depth(), 1);
    }

    #[test]
    fn dp_never_rejects_a_planted_chain() {
        let gates = planted_gates();
        for seed in 0..50u64 {
            let graph = line(8);
            let (_, state) = planted_state(&graph, 1, &gates, 4000 + seed);
            let assignment = learn_1d_state(&state, 1, &gates).unwrap();
            let inverted = assignment.merged.apply(&state).unwrap();
            assert!(inverted.fidelity(&StateVector::zero(8)) >= 1.0 - 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn strip_disentangling_resets_the_strip() {
        let graph = lattice(&[3, 7]);
        let gates = planted_gates();
        let (_, state) = planted_state(&graph, 1, &gates, 11);
        let dis = disentangle_2d(&state, 3, 7, 1, &gates, 3).unwrap();
        assert!(dis.zero_prob >= 1.0 - 1e-9, "strip population {}", 1.0 - dis.zero_prob);
        for &p in &dis.residual_purity {
            assert!(p >= 1.0 - 1e-9, "residual purity {p}");
        }
        assert!(dis.v.depth() <= 1);
    }

    #[test]
    fn strip_inverter_gates_stay_valid_for_every_covered_region_qubit() {
        // Regression: a swap on (17, 18) zeroes qubit 18 by dumping the
        // entanglement with 19 onto the untouched qubit 17; the assembled
        // candidate must not pick it for 18 after 17 settled on "no gate".
        let gates = planted_gates();
        let picks: [(usize, usize, usize); 8] = [
            (3, 4, 0),
            (2, 9, 0),
            (10, 11, 2),
            (0, 7, 2),
            (5, 12, 0),
            (15, 16, 2),
            (18, 19, 2),
            (13, 20, 2),
        ];
        let layer: Vec<Gate> = picks
            .iter()
            .map(|&(a, b, g)| Gate::new(a, b, gates[g].clone()).unwrap())
            .collect();
        let planted = Circuit::new(21, vec![layer]).unwrap();
        let state = planted.apply(&StateVector::zero(21)).unwrap();
        let dis = disentangle_2d(&state, 3, 7, 1, &gates, 3).unwrap();
        assert!(dis.zero_prob >= 1.0 - 1e-9, "strip population {}", 1.0 - dis.zero_prob);
    }

    #[test]
    fn disentangling_a_product_state_reports_unit_diagnostic() {
        let state = StateVector::zero(21);
        let gates = planted_gates();
        let dis = disentangle_2d(&state, 3, 7, 1, &gates, 3).unwrap();
        assert!(dis.zero_prob >= 1.0 - 1e-12);
    }

    #[test]
    fn patch_learning_reproduces_a_planted_residual() {
        // Plant on a 3x5 lattice with one strip; the residual 3x2 region
        // must be reachable by a depth-2 patch circuit with two ancilla
        // columns.
        let graph = lattice(&[3, 5]);
        let gates = planted_gates();
        let (_, state) = planted_state(&graph, 1, &gates, 23);
        let dis = disentangle_2d(&state, 3, 5, 1, &gates, 3).unwrap();
        assert!(dis.zero_prob >= 1.0 - 1e-9);
        let tau = dis.v.apply(&state).unwrap();
        let region: Vec<usize> = vec![0, 1, 5, 6, 10, 11];
        let rho = tau.reduced_density(&region);
        let (eigs, vecs) = hermitian_eig(&rho);
        let arg = eigs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert!(eigs[arg] >= 1.0 - 1e-9);
        let target = vecs.column(arg).into_owned();
        let w = learn_patch_circuit(&target, 3, 4, 0..2, 1, &gates).unwrap();
        assert!(w.depth() <= 2);
        let patch = PatchCircuit {
            w,
            patch_rows: 3,
            patch_cols: 4,
            region_local: vec![0, 1, 4, 5, 8, 9],
            region_global: region,
        };
        let (piece, purity) = patch_output_state(&patch).unwrap();
        assert!(purity >= 1.0 - 1e-9);
        let overlap: Complex64 = piece
            .iter()
            .zip(target.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert!(overlap.norm_sqr() >= 1.0 - 1e-9);
    }

    #[test]
    fn corrupted_patch_target_is_unsatisfiable() {
        // A random non-circuit state on a 2x2 region cannot be prepared by
        // the tiny gate set.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut target = CVec::from_fn(16, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let norm = target.norm();
        target /= Complex64::new(norm, 0.0);
        let gates = planted_gates();
        let err = learn_patch_circuit(&target, 2, 4, 0..2, 1, &gates).unwrap_err();
        assert!(matches!(err, SclError::Unsatisfiable { .. }));
    }

    #[test]
    fn assembled_preparation_reaches_the_planted_state() {
        let graph = lattice(&[3, 7]);
        let gates = planted_gates();
        let (_, state) = planted_state(&graph, 1, &gates, 31);
        let learned = learn_2d_state(&state, 3, 7, 1, &gates).unwrap();
        assert!(learned.depth <= 3, "depth {}", learned.depth);
        assert!(learned.fidelity >= 1.0 - 1e-6, "fidelity {}", learned.fidelity);
    }

    #[test]
    fn empty_inverter_and_trivial_patch_prepare_zeros() {
        let v = Circuit::new(4, vec![]).unwrap();
        let w = Circuit::new(2, vec![]).unwrap();
        let patch = PatchCircuit {
            w,
            patch_rows: 1,
            patch_cols: 2,
            region_local: vec![0, 1],
            region_global: vec![0, 1],
        };
        let prep = assemble_state_preparation(&v, &[patch], 4).unwrap();
        assert_eq!(prep.gate_count(), 0);
        let out = prep.apply(&StateVector::zero(prep.num_qubits())).unwrap();
        assert!(out.fidelity(&StateVector::zero(prep.num_qubits())) >= 1.0 - 1e-12);
    }

    #[test]
    fn separated_blocks_factorize_on_planted_lattices() {
        let graph = lattice(&[3, 7]);
        let gates = planted_gates();
        let (_, state) = planted_state(&graph, 1, &gates, 47);
        // Top-row blocks in columns 0-1 and 4-5: lightcones stay disjoint.
        let gap = factorization_gap(&state, &[0, 1], &[4, 5]);
        assert!(gap <= 1e-7, "trace-norm gap {gap}");

        let line_graph = line(12);
        let (_, chain) = planted_state(&line_graph, 1, &gates, 23);
        let gap = factorization_gap(&chain, &[0, 1, 2, 3], &[7, 8, 9, 10]);
        assert!(gap <= 1e-7, "trace-norm gap {gap}");
    }

    #[test]
    fn no_ancilla_learning_inverts_a_planted_line() {
        let graph = line(9);
        let gates = planted_gates();
        let (_, state) = planted_state(&graph, 1, &gates, 13);
        let (prep, fid) = learn_1d_state_no_ancilla(&state, 1).unwrap();
        assert!(fid >= 1.0 - 1e-6, "fidelity {fid}");
        assert!(prep.num_qubits() == 9);
    }

    #[test]
    fn no_ancilla_learning_is_trivial_on_product_states() {
        let state = StateVector::zero(9);
        let (_, fid) = learn_1d_state_no_ancilla(&state, 1).unwrap();
        assert!(fid >= 1.0 - 1e-9);
    }

    #[test]
    fn budget_vanishes_at_zero_and_grows_monotonically() {
        let zero = error_budget(0.0, 0.0, 8, 4, 0.0);
        assert_eq!(zero.local_to_global, 0.0);
        assert_eq!(zero.chain_merge, 0.0);
        assert_eq!(zero.end_to_end, 0.0);
        let grid = [0.0, 1e-8, 1e-4, 1e-2];
        for (i, &e1) in grid.iter().enumerate() {
            for &e2 in &grid[i..] {
                let a = error_budget(e1, e1, 8, 4, e1);
                let b = error_budget(e2, e2, 8, 4, e2);
                assert!(b.local_to_global >= a.local_to_global);
                assert!(b.chain_merge >= a.chain_merge);
                assert!(b.end_to_end >= a.end_to_end);
            }
        }
    }

    #[test]
    fn budget_matches_direct_arithmetic() {
        let budget = error_budget(0.1, 0.0, 16, 1, 1e-12);
        let expected = 6.0 * (16f64).powf(25.0 / 32.0) * (1e-12f64).powf(1.0 / 32.0);
        assert!((budget.end_to_end - expected).abs() <= expected * 1e-6);
        let eps0 = budget.required_eps0;
        let back = 6.0 * (16f64).powf(25.0 / 32.0) * eps0.powf(1.0 / 32.0);
        assert!((back - 0.1).abs() <= 1e-9);
    }
}
