//! Optimization landscape of the brickwork SWAP-rotation ansatz: exact and
//! Monte Carlo evaluation of the local cost against a planted SWAP-product
//! target, the family of suboptimal minima indexed by bit strings, and
//! neighborhood probing around them.
//!
//! The exact evaluator never enumerates the 6^n product inputs. Averaging a
//! single-qubit projector over the six stabilizer states is a 2-design, which
//! collapses the per-qubit cost to
//!   c_i = 1/2 - (1/6) Σ_a Tr(σ_i^a W σ_i^a W†) / 2^n,   W = U(θ)† U_S,
//! and the conjugations by σ_i^a reduce to index bit flips and sign patterns.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{gates, Circuit, Gate};
use crate::dense_cap;
use crate::error::SclError;
use crate::linalg::{cr, eye, CMat};
use crate::stab::StabilizerLabel;
use crate::state::StateVector;

/// Angles of the three-layer SWAP-rotation brickwork, grouped as five-angle
/// blocks over qubit quadruples 4j..4j+3 plus one link angle between
/// consecutive blocks. Qubits beyond the last full block carry no gates.
///
/// Block order within `blocks[j]`: the two outer-layer gates applied first
/// on (4j, 4j+1) and (4j+2, 4j+3), the middle gate on (4j+1, 4j+2), then the
/// two outer-layer gates applied last. `links[j]` is the middle-layer gate on
/// (4j+3, 4j+4).
#[derive(Debug, Clone, PartialEq)]
pub struct SwapAnsatzParams {
    pub n: usize,
    pub blocks: Vec<[f64; 5]>,
    pub links: Vec<f64>,
}

impl SwapAnsatzParams {
    pub fn zeros(n: usize) -> Self {
        let b = n / 4;
        Self { n, blocks: vec![[0.0; 5]; b], links: vec![0.0; b.saturating_sub(1)] }
    }

    pub fn angle_count(n: usize) -> usize {
        let b = n / 4;
        5 * b + b.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), SclError> {
        let b = self.n / 4;
        if self.blocks.len() != b || self.links.len() != b.saturating_sub(1) {
            return Err(SclError::invalid(format!(
                "expected {} blocks and {} links for n={}, got {} and {}",
                b,
                b.saturating_sub(1),
                self.n,
                self.blocks.len(),
                self.links.len()
            )));
        }
        Ok(())
    }

    fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.iter().flatten().cloned().collect();
        v.extend_from_slice(&self.links);
        v
    }

    fn from_flat(n: usize, v: &[f64]) -> Self {
        let b = n / 4;
        let mut p = Self::zeros(n);
        for j in 0..b {
            p.blocks[j].copy_from_slice(&v[5 * j..5 * j + 5]);
        }
        p.links.copy_from_slice(&v[5 * b..]);
        p
    }
}

fn swap_rotation(theta: f64) -> CMat {
    eye(4).map(|z| z * cr(theta.cos())) + gates::swap().map(|z| z * Complex64::new(0.0, theta.sin()))
}

/// The three-layer circuit; layers are emitted in application order, so the
/// block's last two angles parameterize the final layer.
pub fn build_swap_ansatz(p: &SwapAnsatzParams) -> Result<Circuit, SclError> {
    p.validate()?;
    let b = p.n / 4;
    let mut first = Vec::new();
    let mut middle = Vec::new();
    let mut last = Vec::new();
    for j in 0..b {
        let a = p.blocks[j];
        first.push(Gate::new(4 * j, 4 * j + 1, swap_rotation(a[0]))?);
        first.push(Gate::new(4 * j + 2, 4 * j + 3, swap_rotation(a[1]))?);
        middle.push(Gate::new(4 * j + 1, 4 * j + 2, swap_rotation(a[2]))?);
        last.push(Gate::new(4 * j, 4 * j + 1, swap_rotation(a[3]))?);
        last.push(Gate::new(4 * j + 2, 4 * j + 3, swap_rotation(a[4]))?);
    }
    for (j, &theta) in p.links.iter().enumerate() {
        middle.push(Gate::new(4 * j + 3, 4 * j + 4, swap_rotation(theta))?);
    }
    Circuit::new(p.n, vec![first, middle, last])
}

/// The planted target: a SWAP across the outer qubits of every block in S.
pub fn target_circuit(s: &[usize], n: usize) -> Result<Circuit, SclError> {
    let b = n / 4;
    let mut layer = Vec::new();
    for &j in s {
        if j >= b {
            return Err(SclError::invalid(format!("block {j} out of range for n={n}")));
        }
        layer.push(Gate::new(4 * j, 4 * j + 3, gates::swap())?);
    }
    Circuit::new(n, vec![layer])
}

/// θ_x: quarter-turn angles on every block of S whose bit in x is set, zeros
/// everywhere else, all links zero. A set block composes to the target SWAP
/// up to global phase.
pub fn local_minimum_point(x: u64, s: &[usize], n: usize) -> Result<SwapAnsatzParams, SclError> {
    let mut s = s.to_vec();
    s.sort_unstable();
    if s.len() < 64 && x >= 1u64 << s.len() {
        return Err(SclError::invalid(format!("x={x} out of range for |S|={}", s.len())));
    }
    let mut p = SwapAnsatzParams::zeros(n);
    let b = n / 4;
    for (id, &j) in s.iter().enumerate() {
        if j >= b {
            return Err(SclError::invalid(format!("block {j} out of range for n={n}")));
        }
        if (x >> id) & 1 == 1 {
            p.blocks[j] = [std::f64::consts::FRAC_PI_2; 5];
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Dense matrix of W = U(θ)† U_S, built column by column through the
/// simulator.
fn cost_operator(p: &SwapAnsatzParams, s: &[usize]) -> Result<CMat, SclError> {
    let n = p.n;
    let u_theta = build_swap_ansatz(p)?;
    let u_s = target_circuit(s, n)?;
    let dim = 1usize << n;
    let mut w = CMat::zeros(dim, dim);
    for col in 0..dim {
        let psi = u_theta.apply_dagger(&u_s.apply(&StateVector::basis(n, col))?)?;
        for (row, amp) in psi.amplitudes().iter().enumerate() {
            w[(row, col)] = *amp;
        }
    }
    Ok(w)
}

/// Σ_a Tr(σ_i^a W σ_i^a W†) evaluated with bit flips: X permutes the i-th
/// index bit, Z contributes parity signs, Y combines both.
fn pauli_twirl_trace(w: &CMat, n: usize, i: usize) -> f64 {
    let dim = 1usize << n;
    let mask = 1usize << (n - 1 - i);
    let mut x_term = Complex64::default();
    let mut y_term = Complex64::default();
    let mut z_term = Complex64::default();
    for r in 0..dim {
        let br = (r & mask != 0) as i32;
        for c in 0..dim {
            let bc = (c & mask != 0) as i32;
            let flipped = w[(r ^ mask, c ^ mask)];
            let here = w[(r, c)].conj();
            x_term += flipped * here;
            y_term += flipped * here * cr(if br == bc { 1.0 } else { -1.0 });
            z_term += w[(r, c)] * here * cr(if (br + bc) % 2 == 0 { 1.0 } else { -1.0 });
        }
    }
    (x_term + y_term + z_term).re
}

fn exact_cost(p: &SwapAnsatzParams, s: &[usize]) -> Result<f64, SclError> {
    let n = p.n;
    let cap = dense_cap();
    if n > cap {
        return Err(SclError::DenseCap { qubits: n, cap });
    }
    let w = cost_operator(p, s)?;
    let scale = (1usize << n) as f64;
    let mut total = 0.0;
    for i in 0..n {
        let c_i = 0.5 - pauli_twirl_trace(&w, n, i) / (6.0 * scale);
        total += c_i.max(0.0);
    }
    Ok(total)
}

/// Empirical mean and standard error of the cost over uniform product
/// stabilizer inputs.
pub fn local_cost_monte_carlo(
    p: &SwapAnsatzParams,
    s: &[usize],
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), SclError> {
    if samples == 0 {
        return Err(SclError::invalid("monte carlo needs at least one sample"));
    }
    let n = p.n;
    let u_theta = build_swap_ansatz(p)?;
    let u_s = target_circuit(s, n)?;
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let labels: Vec<StabilizerLabel> =
                (0..n).map(|_| StabilizerLabel::ALL[rng.gen_range(0..6)]).collect();
            let kets: Vec<[Complex64; 2]> = labels.iter().map(|l| l.ket()).collect();
            let psi = StateVector::product(&kets);
            let phi = u_theta.apply_dagger(&u_s.apply(&psi)?)?;
            let mut cost = 0.0;
            for (i, ket) in kets.iter().enumerate() {
                let mask = 1usize << (n - 1 - i);
                let mut keep = 0.0;
                for idx in 0..phi.amplitudes().len() {
                    if idx & mask == 0 {
                        let amp = ket[0].conj() * phi.amplitudes()[idx]
                            + ket[1].conj() * phi.amplitudes()[idx | mask];
                        keep += amp.norm_sqr();
                    }
                }
                cost += 1.0 - keep;
            }
            Ok(cost)
        })
        .collect::<Result<_, SclError>>()?;
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (samples.saturating_sub(1).max(1)) as f64;
    Ok((mean, (var / samples as f64).sqrt()))
}

pub fn local_cost(p: &SwapAnsatzParams, s: &[usize], method: CostMethod) -> Result<f64, SclError> {
    match method {
        CostMethod::Exact => exact_cost(p, s),
        CostMethod::MonteCarlo { samples, seed } => {
            Ok(local_cost_monte_carlo(p, s, samples, seed)?.0)
        }
    }
}

/// Minimum exact cost over `trials` uniform offsets with ‖Δ‖_∞ ≤ radius,
/// together with the achieving parameter point.
pub fn probe_neighborhood(
    p0: &SwapAnsatzParams,
    s: &[usize],
    radius: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, SwapAnsatzParams), SclError> {
    if radius >= std::f64::consts::FRAC_PI_4 {
        return Err(SclError::invalid("probe radius must stay below pi/4"));
    }
    p0.validate()?;
    let center = p0.flat();
    let points: Vec<SwapAnsatzParams> = (0..trials as u64)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let moved: Vec<f64> =
                center.iter().map(|&a| a + rng.gen_range(-radius..=radius)).collect();
            SwapAnsatzParams::from_flat(p0.n, &moved)
        })
        .collect();
    let mut best = (exact_cost(p0, s)?, p0.clone());
    let probed = points
        .into_par_iter()
        .map(|p| Ok((exact_cost(&p, s)?, p)))
        .collect::<Result<Vec<_>, SclError>>()?;
    for (cost, p) in probed {
        if cost < best.0 {
            best = (cost, p);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_unitary, max_abs_entry};

    const PI_2: f64 = std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_angles_build_the_identity() {
        let p = SwapAnsatzParams::zeros(8);
        let c = build_swap_ansatz(&p).unwrap();
        for layer in c.layers() {
            for g in layer {
                assert!(max_abs_entry(&(g.matrix() - eye(4))) < 1e-12);
            }
        }
    }

    #[test]
    fn quarter_turn_gate_is_i_swap_and_every_gate_is_unitary() {
        let mut p = SwapAnsatzParams::zeros(8);
        p.blocks[1][2] = PI_2;
        p.links[0] = 0.3;
        let c = build_swap_ansatz(&p).unwrap();
        let want = gates::swap().map(|z| z * Complex64::new(0.0, 1.0));
        let middle = &c.layers()[1];
        let g = middle.iter().find(|g| g.qubits() == (5, 6)).unwrap();
        assert!(max_abs_entry(&(g.matrix() - want)) < 1e-12);
        for layer in c.layers() {
            for g in layer {
                assert!(is_unitary(g.matrix(), 1e-12));
            }
        }
    }

    #[test]
    fn set_blocks_compose_to_the_target_swap() {
        // One quarter-turn block equals SWAP(0,3) up to global phase.
        let p = local_minimum_point(1, &[0], 4).unwrap();
        let c = build_swap_ansatz(&p).unwrap();
        let t = target_circuit(&[0], 4).unwrap();
        for idx in 0..16 {
            let a = c.apply(&StateVector::basis(4, idx)).unwrap();
            let b = t.apply(&StateVector::basis(4, idx)).unwrap();
            assert!((a.fidelity(&b) - 1.0).abs() < 1e-12, "basis {idx}");
        }
    }

    #[test]
    fn exact_cost_matches_the_product_input_enumeration() {
        // Brute-force average over all 6^4 product stabilizer inputs.
        let s = [0usize];
        let points = [
            local_minimum_point(0, &s, 4).unwrap(),
            local_minimum_point(1, &s, 4).unwrap(),
            SwapAnsatzParams { n: 4, blocks: vec![[0.3, -0.7, 1.1, 0.2, -0.4]], links: vec![] },
        ];
        for p in points {
            let exact = local_cost(&p, &s, CostMethod::Exact).unwrap();
            let u_theta = build_swap_ansatz(&p).unwrap();
            let u_s = target_circuit(&s, 4).unwrap();
            let mut total = 0.0;
            let mut count = 0usize;
            let mut stack = vec![Vec::new()];
            while let Some(prefix) = stack.pop() {
                if prefix.len() == 4 {
                    let kets: Vec<[Complex64; 2]> =
                        prefix.iter().map(|l: &StabilizerLabel| l.ket()).collect();
                    let psi = StateVector::product(&kets);
                    let phi = u_theta.apply_dagger(&u_s.apply(&psi).unwrap()).unwrap();
                    for (i, ket) in kets.iter().enumerate() {
                        let mask = 1usize << (4 - 1 - i);
                        let mut keep = 0.0;
                        for idx in 0..16 {
                            if idx & mask == 0 {
                                let amp = ket[0].conj() * phi.amplitudes()[idx]
                                    + ket[1].conj() * phi.amplitudes()[idx | mask];
                                keep += amp.norm_sqr();
                            }
                        }
                        total += 1.0 - keep;
                    }
                    count += 1;
                    continue;
                }
                for l in StabilizerLabel::ALL {
                    let mut next = prefix.clone();
                    next.push(l);
                    stack.push(next);
                }
            }
            let brute = total / count as f64;
            assert!((exact - brute).abs() < 1e-9, "exact {exact} vs brute {brute}");
        }
    }

    #[test]
    fn planted_minima_cost_the_unset_blocks() {
        let s = [0usize, 1];
        for x in 0..4u64 {
            let p = local_minimum_point(x, &s, 8).unwrap();
            let cost = local_cost(&p, &s, CostMethod::Exact).unwrap();
            let want = (2 - x.count_ones()) as f64;
            assert!((cost - want).abs() < 1e-9, "x={x}: {cost} vs {want}");
        }
    }

    #[test]
    fn suboptimality_gap_holds_exhaustively() {
        let s = [0usize, 1, 2];
        let top = (1u64 << s.len()) - 1;
        let global = local_cost(
            &local_minimum_point(top, &s, 12).unwrap(),
            &s,
            CostMethod::Exact,
        )
        .unwrap();
        assert!(global.abs() < 1e-9);
        for x in 0..top {
            let cost = local_cost(
                &local_minimum_point(x, &s, 12).unwrap(),
                &s,
                CostMethod::Exact,
            )
            .unwrap();
            assert!(cost >= 1.0 + global - 1e-9, "x={x}: {cost}");
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let s = [0usize, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..10 {
            let mut p = SwapAnsatzParams::zeros(8);
            for b in &mut p.blocks {
                for a in b.iter_mut() {
                    *a = rng.gen_range(-PI_2..PI_2);
                }
            }
            for l in &mut p.links {
                *l = rng.gen_range(-PI_2..PI_2);
            }
            let exact = local_cost(&p, &s, CostMethod::Exact).unwrap();
            let (mc, stderr) = local_cost_monte_carlo(&p, &s, 20_000, 90 + trial).unwrap();
            assert!(
                (mc - exact).abs() <= 4.0 * stderr + 1e-12,
                "trial {trial}: {mc} vs {exact}, stderr {stderr}"
            );
        }
    }

    #[test]
    fn minima_points_are_distinct_and_range_checked() {
        let s = [0usize, 2];
        let a = local_minimum_point(1, &s, 12).unwrap();
        let b = local_minimum_point(2, &s, 12).unwrap();
        assert_ne!(a, b);
        assert!(local_minimum_point(4, &s, 12).is_err());
        assert!(local_minimum_point(0, &[5], 12).is_err());
    }

    #[test]
    fn probing_never_beats_a_planted_minimum() {
        let s = [0usize, 1];
        let radius = std::f64::consts::FRAC_PI_4 - 0.01;
        for x in 0..4u64 {
            let p = local_minimum_point(x, &s, 8).unwrap();
            let center = local_cost(&p, &s, CostMethod::Exact).unwrap();
            let (min, _) = probe_neighborhood(&p, &s, radius, 300, 7 + x).unwrap();
            assert!(min >= center - 1e-9, "x={x}: probed {min} below {center}");
        }
    }

    #[test]
    fn zero_radius_probe_returns_the_center() {
        let s = [0usize, 1];
        let p = local_minimum_point(2, &s, 8).unwrap();
        let center = local_cost(&p, &s, CostMethod::Exact).unwrap();
        let (min, argmin) = probe_neighborhood(&p, &s, 0.0, 50, 3).unwrap();
        assert!((min - center).abs() < 1e-12);
        assert_eq!(argmin, p);
    }
}
