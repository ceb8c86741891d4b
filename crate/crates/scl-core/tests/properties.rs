//! Randomized invariant checks. Each property draws structure (sizes,
//! depths, subsets) from proptest and fills in the continuous parts from a
//! drawn seed, which keeps shrinking meaningful.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scl_core::circuit::{Circuit, Gate};
use scl_core::coloring::{lattice_region_coloring, verify_coloring};
use scl_core::dataset::{read_dataset, sample_state_dataset, write_dataset};
use scl_core::dense::DenseOperator;
use scl_core::dist::average_gate_distance;
use scl_core::geometry::{lattice, line};
use scl_core::heisenberg::heisenberg_observable_exact;
use scl_core::linalg::{dagger, haar_unitary, max_abs_entry, polar_unitary};
use scl_core::pauli::PauliOp;
use scl_core::sew::build_sew_block;
use scl_core::stab::{recompose, stabilizer_decompose};
use scl_core::state::StateVector;
use num_complex::Complex64;

fn brick_wall(n: usize, depth: usize, seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for d in 0..depth {
        let mut layer = Vec::new();
        let mut a = d % 2;
        while a + 1 < n {
            layer.push(Gate::new(a, a + 1, haar_unitary(4, &mut rng)).unwrap());
            a += 2;
        }
        layers.push(layer);
    }
    Circuit::new(n, layers).unwrap()
}

fn haar_state(n: usize, seed: u64) -> StateVector {
    let c = brick_wall(n, 2, seed.wrapping_add(1));
    c.apply(&StateVector::zero(n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn circuits_preserve_the_state_norm(n in 2usize..6, depth in 1usize..4, seed in 0u64..1000) {
        let c = brick_wall(n, depth, seed);
        let out = c.apply(&StateVector::zero(n)).unwrap();
        let norm: f64 = out.amplitudes().iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn circuit_json_round_trips(n in 2usize..6, depth in 1usize..4, seed in 0u64..1000) {
        let c = brick_wall(n, depth, seed);
        let back = Circuit::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(c.digest(), back.digest());
    }

    #[test]
    fn heisenberg_images_stay_in_the_lightcone(
        n in 3usize..7, depth in 1usize..3, qubit_pick in 0usize..100, seed in 0u64..1000,
    ) {
        let c = brick_wall(n, depth, seed);
        let i = qubit_pick % n;
        let graph = line(n);
        let cone = light_cone_or_set(&graph, i, depth);
        for p in [PauliOp::X, PauliOp::Y, PauliOp::Z] {
            let o = heisenberg_observable_exact(&c, i, p).unwrap();
            prop_assert!(o.support().iter().all(|q| cone.contains(q)),
                "support {:?} escapes the depth-{} cone of {}", o.support(), depth, i);
        }
    }

    #[test]
    fn sew_blocks_are_unitary_with_the_paired_ancilla(
        n in 2usize..5, qubit_pick in 0usize..100, seed in 0u64..1000,
    ) {
        let c = brick_wall(n, 1, seed);
        let i = qubit_pick % n;
        let ox = heisenberg_observable_exact(&c, i, PauliOp::X).unwrap();
        let oy = heisenberg_observable_exact(&c, i, PauliOp::Y).unwrap();
        let oz = heisenberg_observable_exact(&c, i, PauliOp::Z).unwrap();
        let block = build_sew_block(&ox, &oy, &oz, i, n).unwrap();
        prop_assert!(block.w.is_unitary());
        prop_assert!(block.support.contains(&(n + i)));
        prop_assert!(block.support.iter().all(|&q| q < n || q == n + i));
    }

    #[test]
    fn colorings_partition_and_separate(k in 1usize..3, mult in 1usize..3, r in 2usize..4) {
        let period = 2 * k * r;
        let dims: Vec<usize> = vec![period * mult; k];
        let coloring = lattice_region_coloring(k, &dims, r).unwrap();
        let graph = lattice(&dims);
        verify_coloring(&coloring, &graph, k).unwrap();
        let total: usize = coloring.regions.iter().map(|r| r.len()).sum();
        prop_assert_eq!(total, dims.iter().product::<usize>());
        prop_assert_eq!(coloring.num_colors, k + 1);
    }

    #[test]
    fn stabilizer_decomposition_recomposes(n in 2usize..5, sub_pick in 0usize..100, seed in 0u64..1000) {
        let state = haar_state(n, seed);
        let a = sub_pick % n;
        let b = (sub_pick / n) % n;
        let subset: Vec<usize> = if a == b { vec![a] } else { vec![a.min(b), a.max(b)] };
        let rho_m = state.reduced_density(&subset);
        let rho = DenseOperator::new(subset.clone(), rho_m.clone()).unwrap();
        let terms = stabilizer_decompose(&rho, &subset).unwrap();
        let sum: f64 = terms.iter().map(|t| t.coefficient).sum();
        let abs_sum: f64 = terms.iter().map(|t| t.coefficient.abs()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!((abs_sum - 3f64.powi(subset.len() as i32)).abs() < 1e-8);
        let back = recompose(&terms, &subset).unwrap();
        prop_assert!(max_abs_entry(&(back.matrix() - &rho_m)) < 1e-9);
    }

    #[test]
    fn unitary_projection_is_idempotent_and_scale_free(dim_pick in 0usize..3, scale in 0.2f64..5.0, seed in 0u64..1000) {
        let dim = 1usize << (1 + dim_pick);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = haar_unitary(dim, &mut rng);
        let p = polar_unitary(&u.map(|z| z * scale));
        prop_assert!(max_abs_entry(&(dagger(&p) * &p - scl_core::linalg::eye(dim))) < 1e-10);
        prop_assert!(max_abs_entry(&(&p - &u)) < 1e-9);
    }

    #[test]
    fn average_distance_is_phase_invariant_and_bounded(dim_pick in 0usize..3, phi in 0.0f64..6.28, seed in 0u64..1000) {
        let dim = 1usize << (1 + dim_pick);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = haar_unitary(dim, &mut rng);
        let v = haar_unitary(dim, &mut rng);
        let d = average_gate_distance(&u, &v).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        let rotated = v.map(|z| z * Complex64::from_polar(1.0, phi));
        let d2 = average_gate_distance(&u, &rotated).unwrap();
        prop_assert!((d - d2).abs() < 1e-9);
        prop_assert!(average_gate_distance(&u, &u).unwrap() < 1e-12);
    }

    #[test]
    fn datasets_round_trip_through_jsonl(n in 2usize..5, num in 1usize..30, seed in 0u64..1000) {
        let c = brick_wall(n, 1, seed);
        let ds = sample_state_dataset(&c, num, seed).unwrap();
        let mut first = Vec::new();
        write_dataset(&ds, &mut first).unwrap();
        let back = read_dataset(&mut first.as_slice()).unwrap();
        prop_assert_eq!(ds.n, back.n);
        prop_assert_eq!(&ds, &back);
        let mut second = Vec::new();
        write_dataset(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }
}

fn light_cone_or_set(
    graph: &scl_core::geometry::GeometryGraph,
    i: usize,
    d: usize,
) -> std::collections::BTreeSet<usize> {
    scl_core::geometry::lightcone(graph, &std::collections::BTreeSet::from([i]), d)
}
