//! Command-line front end: evolve circuits, scan ramp step sizes, optimize
//! bang-bang angles, export correlators, and self-validate against the
//! exact causal-cone reference.
//!
//! Exit codes: 0 ok, 2 configuration or input error, 3 numerical failure,
//! 4 finished but the result is tainted by truncation error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;

use peps_bb::config::RunConfig;
use peps_bb::container;
use peps_bb::ntu::evolve_from_product;
use peps_bb::observables::{measure_energy, ChannelEnv};
use peps_bb::optimize::{
    optimize_bb, padded_seed, scan_dt, EnergyCost, SearchOptions, EPS_NTU_TAINT,
};
use peps_bb::oracle::{self, pauli_z, DEFAULT_QUBIT_CAP};
use peps_bb::sequences::{ap_sequence, bb_sequence, GateSequence, ALPHA_G_BOUND, BETA_BOUND};
use peps_bb::{Error, Result};

const OUTPUT_FORMAT_VERSION: &str = "1.0";

#[derive(Parser)]
#[command(name = "peps-bb", about = "Bang-bang state preparation on the infinite square lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Strategy {
    /// Seed the search from the best smooth ramp of the same depth.
    ApSeed,
    /// Seed from a shallower optimized sequence (requires --resume).
    WarmStart,
}

#[derive(Subcommand)]
enum Command {
    /// Run a gate sequence from the product state and report observables.
    Evolve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Gate sequence JSON file.
        #[arg(long)]
        sequence: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan the ramp step size and locate the energy optimum.
    ScanDt {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Circuit depths to scan (repeatable).
        #[arg(long = "n", required = true)]
        depths: Vec<usize>,
        /// Step-size grid as start:stop:count.
        #[arg(long, default_value = "0.02:0.45:18")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize all 2N angles of a depth-N circuit.
    OptimizeBb {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "n")]
        depth: Option<usize>,
        #[arg(long, value_enum, default_value = "ap-seed")]
        strategy: Strategy,
        /// Depth N-1 optimized sequence JSON to warm start from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Connected ZZ correlator of a stored state along a lattice row.
    Correlate {
        /// State container directory written by evolve.
        #[arg(long)]
        state: PathBuf,
        /// Largest separation to export.
        #[arg(long, default_value_t = 8)]
        rmax: usize,
        /// Transverse field used for the boundary environment metadata;
        /// defaults to the value stored with the state.
        #[arg(long)]
        g: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-check the tensor-network pipeline against the exact
    /// causal-cone simulator on random sequences.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "n-random", default_value_t = 10)]
        n_random: usize,
        #[arg(long, default_value_t = 1)]
        depth: usize,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("grid must be start:stop:count, got {spec}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if !(start > 0.0 && stop > start && count >= 2) {
        return Err(bad());
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_evolve(config: &Option<PathBuf>, sequence: &Path, out: &Path) -> Result<bool> {
    let cfg = load_config(config)?;
    let seq = GateSequence::from_json(&std::fs::read_to_string(sequence)?)?;
    let (state, report) = evolve_from_product(&seq, &cfg.ntu_options())?;
    let energy = measure_energy(&state, seq.target_field(), &cfg.boundary_options())?;
    let tainted = report.eps_ntu > EPS_NTU_TAINT;

    std::fs::create_dir_all(out)?;
    let meta = serde_json::json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "g": seq.g,
        "variant": seq.variant,
        "target_field": seq.target_field(),
        "depth": seq.depth(),
        "seed": cfg.seed,
    });
    container::save_state(&out.join("state"), &state, meta)?;
    write_json(&out.join("evolution.json"), &serde_json::json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "eps_ntu": report.eps_ntu,
        "tainted": tainted,
        "layers": serde_json::to_value(&report.layers)?,
        "seed": cfg.seed,
    }))?;
    write_json(&out.join("observables.json"), &serde_json::json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "energy_per_bond": energy.per_bond,
        "bond_spread": energy.spread,
        "x": energy.x,
        "z": energy.z,
        "eps_ntu": report.eps_ntu,
        "seed": cfg.seed,
    }))?;
    println!(
        "E = {:.8}  <X> = {:.8}  eps_ntu = {:.3e}{}",
        energy.per_bond,
        energy.x,
        report.eps_ntu,
        if tainted { "  (tainted)" } else { "" }
    );
    Ok(tainted)
}

fn cmd_scan_dt(config: &Option<PathBuf>, depths: &[usize], grid: &str, out: &Path) -> Result<bool> {
    let cfg = load_config(config)?;
    let dts = parse_grid(grid)?;
    std::fs::create_dir_all(out)?;
    let mut optima = Vec::new();
    let mut tainted = false;
    for &n in depths {
        let cost = EnergyCost::new(cfg.variant, cfg.g, cfg.ntu_options(), cfg.boundary_options());
        let scan = scan_dt(n, cfg.variant, cfg.g, &dts, &cost)?;
        let mut csv = String::from("two_n_dt,dt,energy,eps_ntu\n");
        for p in &scan.points {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                2.0 * n as f64 * p.dt,
                p.dt,
                p.energy,
                p.eps_ntu
            ));
        }
        std::fs::write(out.join(format!("scan_n{n}.csv")), csv)?;
        tainted |= scan
            .points
            .iter()
            .any(|p| p.dt == scan.best_dt && p.eps_ntu > EPS_NTU_TAINT);
        println!("N = {n}: dt* = {:.6}, E* = {:.8}", scan.best_dt, scan.best_energy);
        optima.push(serde_json::json!({
            "n": n,
            "best_dt": scan.best_dt,
            "best_energy": scan.best_energy,
        }));
    }
    write_json(&out.join("optima.json"), &serde_json::json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "g": cfg.g,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "optima": optima,
    }))?;
    Ok(tainted)
}

fn cmd_optimize_bb(
    config: &Option<PathBuf>,
    depth: Option<usize>,
    strategy: Strategy,
    resume: &Option<PathBuf>,
    out: &Path,
) -> Result<bool> {
    let cfg = load_config(config)?;
    let n = depth.unwrap_or(cfg.depth);
    let cost = EnergyCost::new(cfg.variant, cfg.g, cfg.ntu_options(), cfg.boundary_options());
    let seed_seq = match strategy {
        Strategy::ApSeed => {
            let dts = parse_grid("0.02:0.45:12")?;
            let scan = scan_dt(n, cfg.variant, cfg.g, &dts, &cost)?;
            ap_sequence(n, scan.best_dt, cfg.variant, cfg.g)?
        }
        Strategy::WarmStart => {
            let path = resume.as_ref().ok_or_else(|| {
                Error::Config("--strategy warm-start requires --resume".into())
            })?;
            let prev = GateSequence::from_json(&std::fs::read_to_string(path)?)?;
            if prev.depth() + 1 != n {
                return Err(Error::Config(format!(
                    "warm start needs a depth {} sequence, got depth {}",
                    n - 1,
                    prev.depth()
                )));
            }
            padded_seed(&prev)?
        }
    };
    let result = optimize_bb(&cost, &seed_seq, &SearchOptions::default(), &SearchOptions::default())?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("best_sequence.json"), result.sequence.to_json()?)?;
    write_json(&out.join("optimize.json"), &serde_json::json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "n": n,
        "g": cfg.g,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "energy": result.energy,
        "eps_ntu": result.eps_ntu,
        "tainted": result.tainted,
        "evals": result.evals,
        "trace": serde_json::to_value(&result.trace)?,
    }))?;
    println!(
        "N = {n}: E = {:.8}, eps_ntu = {:.3e}, {} evaluations{}",
        result.energy,
        result.eps_ntu,
        result.evals,
        if result.tainted { " (tainted)" } else { "" }
    );
    Ok(result.tainted)
}

fn cmd_correlate(state_dir: &Path, rmax: usize, g: Option<f64>, out: &Path) -> Result<bool> {
    let manifest = container::load_manifest(state_dir)?;
    let state = container::load_state(state_dir)?;
    let g = g
        .or_else(|| manifest.meta.get("target_field").and_then(|v| v.as_f64()))
        .ok_or_else(|| Error::Config("state has no stored field; pass --g".into()))?;
    let seed = manifest.meta.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);

    let opts = peps_bb::boundary::BoundaryOptions::default();
    let env = ChannelEnv::build(&state, &opts)?;
    let corr = env.connected_row(&state, &pauli_z(), rmax)?;

    std::fs::create_dir_all(out)?;
    let mut csv = String::from("r,c_conn\n");
    for (i, c) in corr.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, c));
    }
    std::fs::write(out.join("correlator.csv"), csv)?;

    // Decay length from a least-squares line through log|C(r)| over the
    // clearly nonzero points.
    let pts: Vec<(f64, f64)> = corr
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 1e-12)
        .map(|(i, c)| ((i + 1) as f64, c.abs().ln()))
        .collect();
    let decay = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        if slope < 0.0 { Some(-1.0 / slope) } else { None }
    } else {
        None
    };
    write_json(&out.join("correlator.json"), &serde_json::json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "g": g,
        "seed": seed,
        "r_max": rmax,
        "c_conn": corr,
        "decay_length": decay,
    }))?;
    if let Some(xi) = decay {
        println!("decay length = {xi:.4} over {} points", pts.len());
    } else {
        println!("no exponential decay fit ({} usable points)", pts.len());
    }
    Ok(false)
}

fn cmd_validate(config: &Option<PathBuf>, n_random: usize, depth: usize) -> Result<bool> {
    let cfg = load_config(config)?;
    if depth == 0 || depth > 2 {
        return Err(Error::Config(
            "validate supports depth 1 or 2 (exact-cone budget)".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let tol = if depth == 1 { 1e-8 } else { 1e-6 };
    let mut max_x: f64 = 0.0;
    let mut max_zz: f64 = 0.0;
    let mut max_eps: f64 = 0.0;
    for _ in 0..n_random {
        let beta: Vec<f64> = (0..depth)
            .map(|_| rng.random_range(-0.4 * BETA_BOUND..0.4 * BETA_BOUND))
            .collect();
        let alpha: Vec<f64> = (0..depth)
            .map(|_| rng.random_range(-0.2 * ALPHA_G_BOUND / cfg.g..0.2 * ALPHA_G_BOUND / cfg.g))
            .collect();
        let seq = bb_sequence(beta, alpha, cfg.variant, cfg.g)?;
        let (state, report) = evolve_from_product(&seq, &cfg.ntu_options())?;
        let energy = measure_energy(&state, seq.target_field(), &cfg.boundary_options())?;
        let probe = oracle::probe(&seq, DEFAULT_QUBIT_CAP)?;
        max_x = max_x.max((energy.x - probe.x).abs());
        let oracle_energy = -probe.zz_bond - 0.5 * seq.target_field() * probe.x;
        max_zz = max_zz.max((energy.per_bond - oracle_energy).abs());
        max_eps = max_eps.max(report.eps_ntu);
    }
    let pass = max_x <= tol && max_zz <= 10.0 * tol && max_eps <= 1e-10;
    let summary = serde_json::json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "seed": cfg.seed,
        "depth": depth,
        "n_random": n_random,
        "max_x_diff": max_x,
        "max_energy_diff": max_zz,
        "max_eps_ntu": max_eps,
        "tolerance": tol,
        "pass": pass,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if !pass {
        return Err(Error::BoundaryStalled(format!(
            "oracle mismatch: max x diff {max_x:.3e}, max energy diff {max_zz:.3e}"
        )));
    }
    Ok(false)
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Sequence(_)
        | Error::FormatVersion { .. }
        | Error::Json(_)
        | Error::Io(_)
        | Error::Shape(_)
        | Error::BadAxes(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::Evolve { config, sequence, out } => cmd_evolve(config, sequence, out),
        Command::ScanDt { config, depths, grid, out } => cmd_scan_dt(config, depths, grid, out),
        Command::OptimizeBb { config, depth, strategy, resume, out } => {
            cmd_optimize_bb(config, *depth, *strategy, resume, out)
        }
        Command::Correlate { state, rmax, g, out } => cmd_correlate(state, *rmax, *g, out),
        Command::Validate { config, n_random, depth } => cmd_validate(config, *n_random, *depth),
    };
    match run {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
