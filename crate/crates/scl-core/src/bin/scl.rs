//! Command-line driver: circuit generation, sampling, learning, verification,
//! distances, and the landscape study. Exit codes: 0 success, 2 learning
//! failure, 1 usage or input error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use scl_core::circuit::{gates, Circuit, Gate};
use scl_core::dataset::{read_dataset, sample_state_dataset, sample_unitary_dataset, write_dataset};
use scl_core::dist::{average_gate_distance, phase_min_spectral_appliers, DenseSeqApplier};
use scl_core::error::SclError;
use scl_core::geometry::{self, GeometryGraph, GeometrySpec};
use scl_core::landscape::{local_cost, local_minimum_point, probe_neighborhood, CostMethod};
use scl_core::linalg::{dagger, haar_unitary, CMat};
use scl_core::pipelines::{
    self, build_gateset_context, learn_unitary_general, learn_unitary_geo, learn_unitary_lattice,
    LearnedUnitary, Strategy,
};
use scl_core::state::StateVector;
use scl_core::verify::{estimate_local_deviations, verify_report, Verdict};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "scl", version, about = "shallow quantum circuit learning at desk scale")]
struct Cli {
    /// Cap on worker threads for the parallel sections.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeomKind {
    Line,
    Lattice,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMode {
    Unitary,
    State,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    General,
    Geo,
    LatticeOptimized,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateMode {
    #[value(name = "1d")]
    OneD,
    #[value(name = "2d")]
    TwoD,
    NoAncilla,
}

#[derive(Args)]
struct GeomArgs {
    #[arg(long, value_enum)]
    geometry: Option<GeomKind>,
    /// Qubit count for a line geometry.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated lattice dimensions, e.g. 3,7.
    #[arg(long)]
    dims: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random brick-wall circuit on a geometry.
    GenCircuit {
        #[command(flatten)]
        geom: GeomArgs,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        /// Gate source: a named finite set (clifford2, cz-swap) or su4.
        #[arg(long, default_value = "su4")]
        gateset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a randomized measurement dataset from a circuit file.
    Sample {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, value_enum, default_value = "unitary")]
        mode: SampleMode,
        #[arg(long = "N")]
        num: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a sewn implementation of the sampled unitary.
    LearnUnitary {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Target accuracy for the sparse-Pauli truncation (general strategy).
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Support size bound for the general strategy.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[command(flatten)]
        geom: GeomArgs,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        /// Finite gate set to snap onto (geo and lattice-optimized).
        #[arg(long)]
        gateset: Option<String>,
        /// Circuit file: supplies the geometry and, within the dense cap,
        /// oracle error measurements for the report.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a preparation circuit for the state planted by a circuit file.
    LearnState {
        #[arg(long, value_enum)]
        mode: StateMode,
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        /// rows,cols for the 2d mode.
        #[arg(long)]
        dims: Option<String>,
        #[arg(long, default_value = "cz-swap")]
        gateset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a learned circuit against a fresh dataset.
    Verify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        learned: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average-gate and diamond-proxy distances between two circuit files.
    Distance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Landscape study: exact cost and neighborhood probes at the planted
    /// local minima, emitted as CSV.
    Landscape {
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Comma-separated block indices of the target swap product.
        #[arg(long, default_value = "0,1")]
        s: String,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4 - 0.01)]
        radius: f64,
        #[arg(long, default_value_t = 2000)]
        probe_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("scl: failed to set --jobs: {e}");
            std::process::exit(1);
        }
    }
    match run(cli.cmd) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("scl: {e}");
            let code = match e {
                SclError::Learning(_) | SclError::Unsatisfiable { .. } => 2,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>, SclError> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| SclError::invalid(format!("bad dims entry {p:?}"))))
        .collect()
}

fn build_graph(geom: &GeomArgs) -> Result<GeometryGraph, SclError> {
    match (geom.geometry, &geom.dims, geom.n) {
        (Some(GeomKind::Line), _, Some(n)) => Ok(geometry::line(n)),
        (Some(GeomKind::Lattice), Some(d), _) => Ok(geometry::lattice(&parse_dims(d)?)),
        (None, Some(d), _) => Ok(geometry::lattice(&parse_dims(d)?)),
        (None, None, Some(n)) => Ok(geometry::line(n)),
        _ => Err(SclError::invalid("need --geometry with --n (line) or --dims (lattice)")),
    }
}

fn named_gateset(name: &str) -> Result<Vec<CMat>, SclError> {
    match name {
        "clifford2" => Ok(vec![gates::cz(), gates::swap(), gates::cnot(), gates::bell_entangler()]),
        "cz-swap" => Ok(vec![gates::cz(), gates::swap()]),
        other => Err(SclError::invalid(format!("unknown gate set {other:?}"))),
    }
}

fn read_circuit(path: &Path) -> Result<Circuit, SclError> {
    let text = std::fs::read_to_string(path)?;
    Circuit::from_json(&serde_json::from_str(&text)?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), SclError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Brick-wall circuit: each layer is a random maximal matching of the
/// geometry with gates drawn from the named set (or Haar for su4).
fn random_circuit(
    graph: &GeometryGraph,
    depth: usize,
    gateset: &str,
    seed: u64,
) -> Result<Circuit, SclError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let finite = if gateset == "su4" { None } else { Some(named_gateset(gateset)?) };
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let mut edges: Vec<(usize, usize)> = graph.edges().collect();
        edges.shuffle(&mut rng);
        let mut used = std::collections::BTreeSet::new();
        let mut layer = Vec::new();
        for (a, b) in edges {
            if used.contains(&a) || used.contains(&b) {
                continue;
            }
            used.insert(a);
            used.insert(b);
            let m = match &finite {
                Some(set) => set[rng.gen_range(0..set.len())].clone(),
                None => haar_unitary(4, &mut rng),
            };
            layer.push(Gate::new(a, b, m)?);
        }
        layers.push(layer);
    }
    let roles = vec![None; layers.len()];
    Circuit::with_roles(
        graph.vertex_count(),
        layers,
        roles,
        Some(graph.clone()),
        Some(gateset.to_string()),
    )
}

fn graph_from_circuit_or_flags(
    oracle: Option<&Circuit>,
    geom: &GeomArgs,
    n: usize,
) -> Result<GeometryGraph, SclError> {
    if geom.geometry.is_some() || geom.dims.is_some() || geom.n.is_some() {
        return build_graph(geom);
    }
    if let Some(c) = oracle {
        if let Some(g) = c.geometry() {
            return Ok(g.clone());
        }
    }
    Ok(geometry::line(n))
}

fn run(cmd: Cmd) -> Result<i32, SclError> {
    match cmd {
        Cmd::GenCircuit { geom, depth, gateset, seed, out } => {
            let graph = build_graph(&geom)?;
            let circuit = random_circuit(&graph, depth, &gateset, seed)?;
            write_json(&out, &circuit.to_json())?;
            Ok(0)
        }
        Cmd::Sample { circuit, mode, num, seed, out } => {
            let c = read_circuit(&circuit)?;
            let ds = match mode {
                SampleMode::Unitary => sample_unitary_dataset(&c, num, seed)?,
                SampleMode::State => sample_state_dataset(&c, num, seed)?,
            };
            let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
            write_dataset(&ds, &mut w)?;
            w.flush()?;
            Ok(0)
        }
        Cmd::LearnUnitary { data, strategy, eps, k, geom, depth, gateset, oracle, out } => {
            let ds = {
                let mut r = std::io::BufReader::new(std::fs::File::open(&data)?);
                read_dataset(&mut r)?
            };
            let oracle_circuit = oracle.as_deref().map(read_circuit).transpose()?;
            let strategy = match strategy {
                Some(StrategyArg::General) => Strategy::General,
                Some(StrategyArg::Geo) => Strategy::Geo,
                Some(StrategyArg::LatticeOptimized) => Strategy::LatticeOptimized,
                None => {
                    let has_geometry = geom.geometry.is_some()
                        || geom.dims.is_some()
                        || geom.n.is_some()
                        || oracle_circuit.as_ref().is_some_and(|c| c.geometry().is_some());
                    if has_geometry { Strategy::Geo } else { Strategy::General }
                }
            };
            let set = gateset.as_deref().map(named_gateset).transpose()?;
            let lu: LearnedUnitary = match strategy {
                Strategy::General => learn_unitary_general(&ds, k, eps)?,
                Strategy::Geo => {
                    let graph = graph_from_circuit_or_flags(oracle_circuit.as_ref(), &geom, ds.n)?;
                    let ctx = set
                        .as_deref()
                        .map(|g| build_gateset_context(&graph, depth, g))
                        .transpose()?;
                    learn_unitary_geo(&ds, &graph, depth, ctx.as_ref())?
                }
                Strategy::LatticeOptimized => {
                    let set = set.ok_or_else(|| {
                        SclError::invalid("lattice-optimized needs a finite --gateset")
                    })?;
                    let graph = graph_from_circuit_or_flags(oracle_circuit.as_ref(), &geom, ds.n)?;
                    let (kdim, dims) = match graph.spec() {
                        GeometrySpec::Line { length } => (1usize, vec![*length]),
                        GeometrySpec::Lattice { dims } => (dims.len(), dims.clone()),
                        GeometrySpec::Custom { .. } => {
                            return Err(SclError::invalid(
                                "lattice-optimized needs a line or lattice geometry",
                            ))
                        }
                    };
                    let ctx = build_gateset_context(&graph, depth, &set)?;
                    learn_unitary_lattice(&ds, kdim, &dims, depth, &ctx)?
                }
            };
            let mut report = pipelines::unitary_report(&lu);
            if let Some(oc) = &oracle_circuit {
                report["oracle"] = oracle_section(&lu, oc)?;
            }
            write_json(&out, &report)?;
            Ok(0)
        }
        Cmd::LearnState { mode, circuit, depth, dims, gateset, out } => {
            let c = read_circuit(&circuit)?;
            let state = c.apply(&StateVector::zero(c.num_qubits()))?;
            let set = named_gateset(&gateset)?;
            let (_, report) = match mode {
                StateMode::OneD => pipelines::learn_state_1d_report(&state, depth, &set)?,
                StateMode::TwoD => {
                    let dims = parse_dims(
                        dims.as_deref()
                            .ok_or_else(|| SclError::invalid("2d mode needs --dims rows,cols"))?,
                    )?;
                    if dims.len() != 2 {
                        return Err(SclError::invalid("2d mode needs exactly rows,cols"));
                    }
                    pipelines::learn_state_2d_report(&state, dims[0], dims[1], depth, &set)?
                }
                StateMode::NoAncilla => pipelines::learn_state_no_ancilla_report(&state, depth)?,
            };
            write_json(&out, &report)?;
            Ok(0)
        }
        Cmd::Verify { data, learned, eps, out } => {
            let ds = {
                let mut r = std::io::BufReader::new(std::fs::File::open(&data)?);
                read_dataset(&mut r)?
            };
            let text = std::fs::read_to_string(&learned)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.get("format_version").and_then(|v| v.as_u64())
                != Some(pipelines::REPORT_FORMAT_VERSION as u64)
            {
                return Err(SclError::invalid("unsupported learned-report format_version"));
            }
            let circuit_json = value.get("circuit").unwrap_or(&value);
            let v_hat = Circuit::from_json(circuit_json)?;
            let o = estimate_local_deviations(&ds, &v_hat)?;
            let rep = verify_report(o, eps);
            let verdict = rep.verdict;
            let mut report = serde_json::to_value(&rep)?;
            report["format_version"] = json!(pipelines::REPORT_FORMAT_VERSION);
            println!("{}", if verdict == Verdict::Pass { "PASS" } else { "FAIL" });
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            Ok(if verdict == Verdict::Pass { 0 } else { 2 })
        }
        Cmd::Distance { a, b, out } => {
            let ca = read_circuit(&a)?;
            let cb = read_circuit(&b)?;
            let ua = ca.unitary()?;
            let ub = cb.unitary()?;
            let ave = average_gate_distance(&ua, &ub)?;
            let (lower, upper) = scl_core::dist::unitary_diamond_proxy(&ua, &ub)?;
            let report = json!({
                "format_version": pipelines::REPORT_FORMAT_VERSION,
                "n": ca.num_qubits(),
                "average_gate_distance": ave,
                "diamond_proxy_lower": lower,
                "diamond_proxy_upper": upper,
            });
            match out {
                Some(p) => write_json(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(0)
        }
        Cmd::Landscape { n, s, radius, probe_samples, seed, out } => {
            let s = parse_dims(&s)?;
            let mut csv = String::from("x,popcount,exact_cost,probed_min\n");
            for x in 0..(1u64 << s.len()) {
                let p = local_minimum_point(x, &s, n)?;
                let cost = local_cost(&p, &s, CostMethod::Exact)?;
                let (probed, _) =
                    probe_neighborhood(&p, &s, radius, probe_samples, seed ^ (x + 1))?;
                csv.push_str(&format!(
                    "{},{},{:.12e},{:.12e}\n",
                    x,
                    x.count_ones(),
                    cost,
                    probed
                ));
            }
            std::fs::write(&out, csv)?;
            Ok(0)
        }
    }
}

/// Oracle comparison for the learn-unitary report: per-observable spectral
/// errors and the phase-minimized spectral distance of the sewn channel
/// against U x U-dagger, both within the dense cap.
fn oracle_section(lu: &LearnedUnitary, oracle: &Circuit) -> Result<serde_json::Value, SclError> {
    let eps = pipelines::measured_axis_errors(lu, oracle)?;
    let eps_sum: f64 = eps.iter().sum();
    let n = lu.n;
    let mut section = json!({
        "eps": eps,
        "eps_sum": eps_sum,
        "diamond_proxy_bound": 3.0 * eps_sum,
    });
    if 2 * n <= scl_core::dense_cap() {
        let mut learned_ops: Vec<(Vec<usize>, CMat)> = Vec::new();
        for layer in &lu.ordered {
            for block in layer {
                learned_ops.push((block.support.clone(), block.w.matrix().clone()));
            }
        }
        for i in 0..n {
            learned_ops.push((vec![i, n + i], gates::swap()));
        }
        let learned = DenseSeqApplier::new(2 * n, learned_ops);
        let mut target_ops: Vec<(Vec<usize>, CMat)> = Vec::new();
        for layer in oracle.layers() {
            for g in layer {
                let (a, b) = g.qubits();
                target_ops.push((vec![a, b], g.matrix().clone()));
            }
        }
        for layer in oracle.layers().iter().rev() {
            for g in layer {
                let (a, b) = g.qubits();
                target_ops.push((vec![n + a, n + b], dagger(g.matrix())));
            }
        }
        let target = DenseSeqApplier::new(2 * n, target_ops);
        section["sewn_spectral_distance"] =
            json!(phase_min_spectral_appliers(&learned, &target));
    }
    Ok(section)
}
