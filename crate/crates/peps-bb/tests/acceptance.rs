//! Acceptance gate: one test per criterion, each emitting a single
//! PASS/FAIL line. Lines also append to `acceptance_report.txt` in the
//! workspace root so they survive libtest output capture.
//!
//! Heavy computations (ramp scans, bang-bang optimizations) are shared
//! between criteria through `OnceLock` statics. Boundary dimensions for
//! the inner optimization loops are reduced relative to the defaults to
//! fit a single-core budget; every final reported energy is re-measured
//! at chi=16 with the default tolerances.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand::SeedableRng;

use peps_bb::boundary::{converge_boundary, BoundaryOptions, BoundarySide};
use peps_bb::ntu::{evolve_from_product, NtuOptions};
use peps_bb::observables::{measure_energy_rows, ChannelEnv, EnergyReport};
use peps_bb::optimize::{
    optimize_bb, padded_seed, scan_dt, DtScan, EnergyCost, OptimizeResult, SearchOptions,
};
use peps_bb::oracle::{self, pauli_x, pauli_z, DEFAULT_QUBIT_CAP};
use peps_bb::sequences::{ap_sequence, bb_sequence, GateSequence, ProtocolVariant};
use peps_bb::Tensor;

const G: f64 = 3.1;

fn report_file() -> &'static Mutex<std::fs::File> {
    static FILE: OnceLock<Mutex<std::fs::File>> = OnceLock::new();
    FILE.get_or_init(|| {
        Mutex::new(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(concat!(env!("CARGO_MANIFEST_DIR"), "/../../acceptance_report.txt"))
                .expect("open acceptance report"),
        )
    })
}

fn report(id: usize, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {id} ({name}): {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("{line}");
    if let Ok(mut f) = report_file().lock() {
        let _ = writeln!(f, "{line}");
    }
    assert!(pass, "{line}");
}

fn note(line: &str) {
    println!("{line}");
    if let Ok(mut f) = report_file().lock() {
        let _ = writeln!(f, "{line}");
    }
}

/// Loose boundary settings for inner optimization loops.
fn fast_opts() -> BoundaryOptions {
    BoundaryOptions {
        chi: 8,
        tol: 1e-6,
        compress_tol: 1e-7,
        eig_tol: 1e-7,
        ..BoundaryOptions::default()
    }
}

/// Settings for final reported numbers.
fn measure_opts() -> BoundaryOptions {
    BoundaryOptions {
        chi: 16,
        ..BoundaryOptions::default()
    }
}

fn fast_cost(variant: ProtocolVariant) -> EnergyCost {
    let mut cost = EnergyCost::new(variant, G, NtuOptions::default(), fast_opts());
    cost.row_symmetric = true;
    cost
}

/// Final energy of a sequence at chi=16 (horizontal bonds; the circuit
/// drives all bond classes identically).
fn final_energy(seq: &GateSequence) -> EnergyReport {
    let (state, _) = evolve_from_product(seq, &NtuOptions::default()).unwrap();
    measure_energy_rows(&state, seq.target_field(), &measure_opts()).unwrap()
}

// ---------------------------------------------------------------- shared

/// Ramp-step scans for N = 2..6, each bracketing from the previous depth's
/// optimum.
fn ap_scans() -> &'static BTreeMap<usize, DtScan> {
    static SCANS: OnceLock<BTreeMap<usize, DtScan>> = OnceLock::new();
    SCANS.get_or_init(|| {
        let mut out = BTreeMap::new();
        let mut guess = 0.18;
        for n in 2..=6 {
            let cost = fast_cost(ProtocolVariant::ParaTarget);
            let dts: Vec<f64> = if n == 2 {
                (0..7).map(|i| 0.06 + 0.04 * i as f64).collect()
            } else {
                [0.6, 0.75, 0.9, 1.05, 1.2].iter().map(|f| f * guess).collect()
            };
            let scan = scan_dt(n, ProtocolVariant::ParaTarget, G, &dts, &cost).unwrap();
            guess = scan.best_dt;
            note(&format!(
                "  [ap] N={n}: dt*={:.5} E(chi=8)={:.6}",
                scan.best_dt, scan.best_energy
            ));
            out.insert(n, scan);
        }
        out
    })
}

/// Bang-bang optimization chain N = 2,3,4 (5,6 attempted as non-gating
/// extensions), warm-starting each depth from the previous optimum.
fn bb_chain() -> &'static BTreeMap<usize, OptimizeResult> {
    static CHAIN: OnceLock<BTreeMap<usize, OptimizeResult>> = OnceLock::new();
    CHAIN.get_or_init(|| {
        let mut out = BTreeMap::new();
        let seed2 = ap_sequence(2, ap_scans()[&2].best_dt, ProtocolVariant::ParaTarget, G).unwrap();
        let budgets: [(usize, usize, usize); 5] = [
            (2, 160, 60),
            (3, 40, 16),
            (4, 26, 10),
            (5, 12, 6),
            (6, 10, 4),
        ];
        let mut prev: Option<GateSequence> = None;
        for (n, nm_evals, ps_evals) in budgets {
            let cost = fast_cost(ProtocolVariant::ParaTarget);
            let seed = match &prev {
                None => seed2.clone(),
                Some(p) => padded_seed(p).unwrap(),
            };
            let nm = SearchOptions {
                max_evals: nm_evals,
                ..SearchOptions::default()
            };
            let ps = SearchOptions {
                max_evals: ps_evals,
                ..SearchOptions::default()
            };
            let res = optimize_bb(&cost, &seed, &nm, &ps).unwrap();
            note(&format!(
                "  [bb] N={n}: E(chi=8)={:.6} eps={:.2e} evals={}",
                res.energy, res.eps_ntu, res.evals
            ));
            prev = Some(res.sequence.clone());
            out.insert(n, res);
        }
        out
    })
}

// -------------------------------------------------------------- criteria

#[test]
fn c1_product_state_energy() {
    let seq = bb_sequence(vec![0.0; 2], vec![0.0; 2], ProtocolVariant::ParaTarget, G).unwrap();
    let e = final_energy(&seq);
    let diff = (e.per_bond + G / 2.0).abs();
    report(
        1,
        "product energy",
        diff <= 1e-10,
        &format!("zero-angle energy {:.12}, target {:.2}, diff {diff:.2e}", e.per_bond, -G / 2.0),
    );
}

#[test]
fn c2_truncation_free_shallow() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let mut max_eps = 0.0f64;
    for depth in 1..=3 {
        for _ in 0..4 {
            let beta: Vec<f64> = (0..depth).map(|_| rng.random_range(-1.4..1.4)).collect();
            let alpha: Vec<f64> = (0..depth)
                .map(|_| rng.random_range(-0.9 / G..0.9 / G))
                .collect();
            let seq = bb_sequence(beta, alpha, ProtocolVariant::ParaTarget, G).unwrap();
            let (_, rep) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
            max_eps = max_eps.max(rep.eps_ntu);
        }
    }
    report(
        2,
        "no truncation at N<=3",
        max_eps <= 1e-10,
        &format!("max eps_ntu over 12 random sequences = {max_eps:.2e}"),
    );
}

#[test]
fn c3_oracle_equivalence() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    let zz = Tensor::from_fn(&[2, 2, 2, 2], |ix| {
        pauli_z().get(&[ix[0], ix[1]]) * pauli_z().get(&[ix[2], ix[3]])
    });
    let opts = measure_opts();
    let mut worst: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (depth, samples) in [(1usize, 20usize), (2, 10)] {
        let mut mx = 0.0f64;
        let mut mz = 0.0f64;
        for _ in 0..samples {
            let beta: Vec<f64> = (0..depth).map(|_| rng.random_range(-0.6..0.6)).collect();
            let alpha: Vec<f64> = (0..depth).map(|_| rng.random_range(-0.3..0.3)).collect();
            let seq = bb_sequence(beta, alpha, ProtocolVariant::ParaTarget, G).unwrap();
            let (state, rep) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
            assert_eq!(rep.eps_ntu, 0.0);
            let env = ChannelEnv::build(&state, &opts).unwrap();
            let x = 0.5
                * (env.one_site(&state, &pauli_x(), true).unwrap().re
                    + env.one_site(&state, &pauli_x(), false).unwrap().re);
            let zz_ab = env.two_site_horizontal(&state, &zz, true).unwrap().re;
            let probe = oracle::probe(&seq, DEFAULT_QUBIT_CAP).unwrap();
            mx = mx.max((x - probe.x).abs());
            mz = mz.max((zz_ab - probe.zz_bond).abs());
        }
        worst.insert(depth, (mx, mz));
    }
    let (x1, z1) = worst[&1];
    let (x2, z2) = worst[&2];
    report(
        3,
        "oracle equivalence",
        x1 <= 1e-8 && z1 <= 1e-8 && x2 <= 1e-6 && z2 <= 1e-6,
        &format!("N=1 max diffs (x {x1:.2e}, zz {z1:.2e}) tol 1e-8; N=2 (x {x2:.2e}, zz {z2:.2e}) tol 1e-6"),
    );
}

#[test]
fn c4_ramp_energy_table() {
    let targets = [
        (2usize, -1.575331),
        (3, -1.611126),
        (4, -1.626484),
        (5, -1.630946),
        (6, -1.633067),
    ];
    let scans = ap_scans();
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, target) in targets {
        let seq = ap_sequence(n, scans[&n].best_dt, ProtocolVariant::ParaTarget, G).unwrap();
        let (_, rep) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
        let e = final_energy(&seq).per_bond;
        let ok = (e - target).abs() <= 1e-3 && rep.eps_ntu <= 1e-5;
        pass &= ok;
        parts.push(format!(
            "N={n}: {e:.6} vs {target:.6} (diff {:.1e}, eps {:.1e})",
            (e - target).abs(),
            rep.eps_ntu
        ));
    }
    report(4, "ramp optima vs Table", pass, &parts.join("; "));
}

#[test]
fn c5_bang_bang_table() {
    let thresholds = [(2usize, -1.6365), (3, -1.638), (4, -1.639)];
    let chain = bb_chain();
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, threshold) in thresholds {
        let e = final_energy(&chain[&n].sequence).per_bond;
        let ok = e <= threshold;
        pass &= ok;
        parts.push(format!("N={n}: {e:.6} (need <= {threshold})"));
    }
    for n in [5usize, 6] {
        if let Some(res) = chain.get(&n) {
            let e = final_energy(&res.sequence).per_bond;
            parts.push(format!("N={n}: {e:.6} (non-gating)"));
        }
    }
    report(5, "bang-bang optima vs Table", pass, &parts.join("; "));
}

#[test]
fn c6_ramp_curve_collapse() {
    // Fixed total rotation angles 2*N*dt; the small-step region of the
    // energy curves must coincide across depths. Per-layer splitting error
    // grows like dt^2 with a coefficient near one, so the shallowest curve
    // (depth 2) only stays within 1e-3 of the deep ones while its own step
    // dt = tau/4 is at most about 0.025.
    let taus = [0.04, 0.08, 0.10];
    let depths = [2usize, 6, 10];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for &tau in &taus {
        let mut es = Vec::new();
        for &n in &depths {
            let dt = tau / (2.0 * n as f64);
            let seq = ap_sequence(n, dt, ProtocolVariant::ParaTarget, G).unwrap();
            let (state, _) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
            let e = measure_energy_rows(&state, G, &fast_opts()).unwrap().per_bond;
            es.push(e);
        }
        let spread = es.iter().cloned().fold(f64::MIN, f64::max)
            - es.iter().cloned().fold(f64::MAX, f64::min);
        worst = worst.max(spread);
        parts.push(format!("tau={tau}: spread {spread:.2e}"));
    }
    report(
        6,
        "small-step curve collapse",
        worst <= 1e-3,
        &format!("{} (tol 1e-3)", parts.join("; ")),
    );
}

#[test]
fn c7_correlator_light_cone() {
    let seq = &bb_chain()[&2].sequence;
    let (state, _) = evolve_from_product(seq, &NtuOptions::default()).unwrap();
    let env = ChannelEnv::build(&state, &measure_opts()).unwrap();
    let corr = env.connected_row(&state, &pauli_z(), 8).unwrap();
    let outside = corr[4..].iter().cloned().fold(0.0f64, |a, c| a.max(c.abs()));
    let inside = corr[..4].iter().cloned().fold(0.0f64, |a, c| a.max(c.abs()));
    report(
        7,
        "correlation light cone",
        outside <= 1e-8,
        &format!("max |C(r)| for r>4: {outside:.2e} (tol 1e-8); max inside cone {inside:.2e}"),
    );
}

#[test]
fn c8_critical_ramp_variant() {
    // Ramp from the paramagnet to the ferromagnet at zero target field:
    // energy is the pure -ZZ bond average, floor -1.
    let cost = fast_cost(ProtocolVariant::ParaToFerro);
    let dts: Vec<f64> = (0..8).map(|i| 0.05 + 0.055 * i as f64).collect();
    let scan = scan_dt(2, ProtocolVariant::ParaToFerro, G, &dts, &cost).unwrap();
    let ap_seq = ap_sequence(2, scan.best_dt, ProtocolVariant::ParaToFerro, G).unwrap();
    let e_ap = final_energy(&ap_seq).per_bond;

    let nm = SearchOptions {
        max_evals: 160,
        ..SearchOptions::default()
    };
    let ps = SearchOptions {
        max_evals: 60,
        ..SearchOptions::default()
    };
    let res = optimize_bb(&cost, &ap_seq, &nm, &ps).unwrap();
    let e_bb = final_energy(&res.sequence).per_bond;

    let floor_ok = scan.points.iter().all(|p| p.energy >= -1.0 - 1e-9)
        && e_ap >= -1.0 - 1e-9
        && e_bb >= -1.0 - 1e-9;
    let ap_ok = (e_ap + 0.28202).abs() <= 1e-3;
    let bb_ok = e_bb <= -0.47;
    report(
        8,
        "critical-ramp variant",
        ap_ok && bb_ok && floor_ok,
        &format!(
            "AP N=2: {e_ap:.6} vs -0.28202 (diff {:.1e}); BB N=2: {e_bb:.6} (need <= -0.47); floor -1 respected: {floor_ok}",
            (e_ap + 0.28202).abs()
        ),
    );
}

#[test]
fn c9_property_suite() {
    // Isometry residuals of a converged boundary.
    let seq = bb_sequence(vec![0.3, 0.22], vec![0.14, 0.1], ProtocolVariant::ParaTarget, G).unwrap();
    let (state, _) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
    let (bnd, _) = converge_boundary(&state, BoundarySide::Top, &measure_opts()).unwrap();
    let mut iso = 0.0f64;
    for (t, left) in [(&bnd.al, true), (&bnd.bl, true), (&bnd.ar, false), (&bnd.br, false)] {
        let s = t.shape().to_vec();
        let m = if left {
            t.reshape(&[s[0] * s[1] * s[2], s[3]]).unwrap()
        } else {
            t.reshape(&[s[0], s[1] * s[2] * s[3]]).unwrap()
        };
        let mm = if left {
            m.conj().contract(&m, &[(0, 0)]).unwrap()
        } else {
            m.contract(&m.conj(), &[(1, 1)]).unwrap()
        };
        let d = mm.shape()[0];
        let resid = mm.sub(&Tensor::identity(d)).unwrap().norm();
        iso = iso.max(resid);
    }

    // Identity and hermiticity of observables.
    let env = ChannelEnv::build(&state, &measure_opts()).unwrap();
    let one = env.one_site(&state, &Tensor::identity(2), true).unwrap();
    let id_dev = (one.re - 1.0).abs().max(one.im.abs());
    let herm = [
        env.one_site(&state, &pauli_x(), true).unwrap().im.abs(),
        env.one_site(&state, &pauli_z(), false).unwrap().im.abs(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);

    // Optimizer progress is monotone, and bang-bang beats the ramp.
    let chain = bb_chain();
    let monotone = chain.values().all(|r| {
        r.trace
            .progress
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 + 1e-12)
    });
    let scans = ap_scans();
    let dominated = [2usize, 3, 4]
        .iter()
        .all(|n| chain[n].energy <= scans[n].best_energy + 1e-6);

    report(
        9,
        "structural properties",
        iso <= 1e-10 && id_dev <= 1e-10 && herm <= 1e-9 && monotone && dominated,
        &format!(
            "isometry {iso:.1e} (tol 1e-10); <1> dev {id_dev:.1e}; hermiticity {herm:.1e}; monotone {monotone}; E_BB<=E_AP {dominated}"
        ),
    );
}
