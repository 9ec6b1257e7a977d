//! Gate-angle optimization: energy cost over circuit parameters, a
//! derivative-free simplex search, a pattern-search polish, and step-size
//! scans for the smooth-ramp schedules.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;

use crate::boundary::BoundaryOptions;
use crate::ntu::{evolve_from_product, NtuOptions};
use crate::observables::{measure_energy, measure_energy_rows};
use crate::sequences::{
    ap_sequence, bb_sequence, GateSequence, ProtocolVariant, ALPHA_G_BOUND, BETA_BOUND,
};
use crate::Result;

/// Truncation-residual level above which an energy is flagged as unreliable.
pub const EPS_NTU_TAINT: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CostEvaluation {
    /// Energy per bond of the target Hamiltonian.
    pub energy: f64,
    pub eps_ntu: f64,
    /// Truncation residual exceeded [`EPS_NTU_TAINT`].
    pub tainted: bool,
}

/// Energy of the circuit end state as a function of the packed angle vector
/// [beta[0..n], alpha[0..n]]. Out-of-bound angles get a smooth penalty so
/// the search can recover. Evaluations are cached on quantized angles.
pub struct EnergyCost {
    pub variant: ProtocolVariant,
    pub g: f64,
    pub ntu: NtuOptions,
    pub boundary: BoundaryOptions,
    /// Measure horizontal bonds only; valid for sequences that drive all
    /// bond classes with equal angles (see
    /// [`crate::observables::measure_energy_rows`]).
    pub row_symmetric: bool,
    cache: RefCell<HashMap<Vec<i64>, CostEvaluation>>,
    evals: RefCell<usize>,
}

fn quantize(p: &[f64]) -> Vec<i64> {
    p.iter().map(|x| (x / 1e-12).round() as i64).collect()
}

impl EnergyCost {
    pub fn new(
        variant: ProtocolVariant,
        g: f64,
        ntu: NtuOptions,
        boundary: BoundaryOptions,
    ) -> EnergyCost {
        EnergyCost {
            variant,
            g,
            ntu,
            boundary,
            row_symmetric: false,
            cache: RefCell::new(HashMap::new()),
            evals: RefCell::new(0),
        }
    }

    /// Network evaluations actually run (cache misses).
    pub fn evals(&self) -> usize {
        *self.evals.borrow()
    }

    pub fn sequence(&self, p: &[f64]) -> Result<GateSequence> {
        let n = p.len() / 2;
        bb_sequence(
            p[..n].to_vec(),
            p[n..].to_vec(),
            self.variant,
            self.g,
        )
    }

    /// Distance of the packed vector outside the admissible box.
    pub fn bound_violation(&self, p: &[f64]) -> f64 {
        let n = p.len() / 2;
        let gf = match self.variant {
            ProtocolVariant::ParaTarget => self.g.abs(),
            ProtocolVariant::ParaToFerro => crate::sequences::CRITICAL_FIELD,
        };
        let mut v = 0.0;
        for &b in &p[..n] {
            v += (b.abs() - BETA_BOUND).max(0.0);
        }
        for &a in &p[n..] {
            v += ((a * gf).abs() - ALPHA_G_BOUND).max(0.0);
        }
        v
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<CostEvaluation> {
        let key = quantize(p);
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(*hit);
        }
        let seq = self.sequence(p)?;
        let (state, report) = evolve_from_product(&seq, &self.ntu)?;
        let energy = if self.row_symmetric {
            measure_energy_rows(&state, seq.target_field(), &self.boundary)?
        } else {
            measure_energy(&state, seq.target_field(), &self.boundary)?
        };
        let out = CostEvaluation {
            energy: energy.per_bond,
            eps_ntu: report.eps_ntu,
            tainted: report.eps_ntu > EPS_NTU_TAINT,
        };
        *self.evals.borrow_mut() += 1;
        self.cache.borrow_mut().insert(key, out);
        Ok(out)
    }

    /// Scalar objective for the derivative-free searches.
    pub fn objective(&self, p: &[f64]) -> f64 {
        let viol = self.bound_violation(p);
        if viol > 0.0 {
            return 1e3 + 1e3 * viol;
        }
        match self.evaluate(p) {
            Ok(c) => c.energy,
            Err(_) => 1e6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizerTrace {
    /// (objective evaluations so far, best objective) after each stage or
    /// iteration block.
    pub progress: Vec<(usize, f64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    pub max_evals: usize,
    /// Stop when the simplex objective spread falls below this.
    pub f_tol: f64,
    /// Stop when the simplex (or mesh) size falls below this.
    pub x_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_evals: 400,
            f_tol: 1e-9,
            x_tol: 1e-7,
        }
    }
}

/// Derivative-free simplex minimization with dimension-adaptive expansion
/// and contraction coefficients.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    opts: &SearchOptions,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let fx0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size: f64 = (0..n)
            .map(|i| {
                simplex
                    .iter()
                    .map(|(x, _)| (x[i] - simplex[0].0[i]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() < opts.f_tol || size < opts.x_tol {
            break;
        }
        // Centroid of all but the worst.
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / nf)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n)
            .map(|i| centroid[i] + alpha * (centroid[i] - worst.0[i]))
            .collect();
        let fr = eval(&reflect, &mut evals);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|i| centroid[i] + beta * (reflect[i] - centroid[i]))
                .collect();
            let fe = eval(&expand, &mut evals);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let toward = if fr < worst.1 { &reflect } else { &worst.0 };
            let ftoward = if fr < worst.1 { fr } else { worst.1 };
            let contract: Vec<f64> = (0..n)
                .map(|i| centroid[i] + gamma * (toward[i] - centroid[i]))
                .collect();
            let fc = eval(&contract, &mut evals);
            if fc < ftoward {
                simplex[n] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        v.0[i] = best[i] + delta * (v.0[i] - best[i]);
                    }
                    v.1 = eval(&v.0, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0.clone(), simplex[0].1, evals)
}

/// Coordinate pattern search: poll +/- mesh along each axis, expand on
/// success, halve on failure.
pub fn pattern_search(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    mesh0: f64,
    opts: &SearchOptions,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(x0);
    let mut evals = 1usize;
    let mut mesh = mesh0;
    while mesh > opts.x_tol && evals < opts.max_evals {
        let mut improved = false;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] += sign * mesh;
                let fc = f(&cand);
                evals += 1;
                if fc < fx - 1e-15 {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
                if evals >= opts.max_evals {
                    break;
                }
            }
            if evals >= opts.max_evals {
                break;
            }
        }
        mesh = if improved { mesh * 2.0 } else { mesh * 0.5 };
        mesh = mesh.min(mesh0);
    }
    (x, fx, evals)
}

/// Golden-section minimization of a one-dimensional unimodal function.
pub fn golden_section(
    f: &mut dyn FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo) > rel_tol * (lo.abs() + hi.abs()).max(1e-12) {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DtScanPoint {
    pub dt: f64,
    pub energy: f64,
    pub eps_ntu: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DtScan {
    pub points: Vec<DtScanPoint>,
    pub best_dt: f64,
    pub best_energy: f64,
}

/// Grid scan of the smooth-ramp step size, refined around the best grid
/// point by golden section.
pub fn scan_dt(
    n: usize,
    variant: ProtocolVariant,
    g: f64,
    dts: &[f64],
    cost: &EnergyCost,
) -> Result<DtScan> {
    let mut points = Vec::with_capacity(dts.len());
    let eval_dt = |dt: f64| -> Result<CostEvaluation> {
        let seq = ap_sequence(n, dt, variant, g)?;
        let mut p = seq.beta.clone();
        p.extend_from_slice(&seq.alpha);
        cost.evaluate(&p)
    };
    let mut best = (f64::NAN, f64::INFINITY);
    for &dt in dts {
        let c = eval_dt(dt)?;
        if c.energy < best.1 {
            best = (dt, c.energy);
        }
        points.push(DtScanPoint {
            dt,
            energy: c.energy,
            eps_ntu: c.eps_ntu,
        });
    }
    // Bracket around the best grid point and refine.
    let idx = dts.iter().position(|&d| d == best.0).unwrap_or(0);
    let lo = if idx == 0 { dts[0] * 0.5 } else { dts[idx - 1] };
    let hi = if idx + 1 == dts.len() {
        dts[idx] * 1.5
    } else {
        dts[idx + 1]
    };
    // The minimum is quadratic: a 1e-3 relative dt error shifts the energy
    // by far less than measurement tolerances.
    let mut f = |dt: f64| eval_dt(dt).map(|c| c.energy).unwrap_or(1e6);
    let (best_dt, best_energy) = golden_section(&mut f, lo, hi, 1e-3);
    let (best_dt, best_energy) = if best_energy < best.1 {
        (best_dt, best_energy)
    } else {
        best
    };
    Ok(DtScan {
        points,
        best_dt,
        best_energy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStrategy {
    /// Start from the best smooth-ramp schedule of the same depth.
    ApSeed,
    /// Start from a shallower optimized sequence padded with a zero layer.
    WarmStart,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizeResult {
    pub sequence: GateSequence,
    pub energy: f64,
    pub eps_ntu: f64,
    pub tainted: bool,
    pub evals: usize,
    pub trace: OptimizerTrace,
}

/// Optimize all 2N angles of a depth-N circuit: simplex search from the
/// seed, then a pattern-search polish.
pub fn optimize_bb(
    cost: &EnergyCost,
    seed: &GateSequence,
    nm_opts: &SearchOptions,
    ps_opts: &SearchOptions,
) -> Result<OptimizeResult> {
    let mut p = seed.beta.clone();
    p.extend_from_slice(&seed.alpha);
    let mut trace = Vec::new();
    let mut f = |x: &[f64]| cost.objective(x);
    let f0 = f(&p);
    trace.push((1usize, f0));
    let (p1, f1, e1) = nelder_mead(&mut f, &p, 0.05, nm_opts);
    trace.push((1 + e1, f1));
    let (p2, f2, e2) = pattern_search(&mut f, &p1, 0.01, ps_opts);
    trace.push((1 + e1 + e2, f2));
    let best = cost.evaluate(&p2)?;
    Ok(OptimizeResult {
        sequence: cost.sequence(&p2)?,
        energy: best.energy,
        eps_ntu: best.eps_ntu,
        tainted: best.tainted,
        evals: 1 + e1 + e2,
        trace: OptimizerTrace { progress: trace },
    })
}

/// Depth-(N+1) seed from a depth-N optimum: repeat the last layer angles.
pub fn padded_seed(prev: &GateSequence) -> Result<GateSequence> {
    let mut beta = prev.beta.clone();
    let mut alpha = prev.alpha.clone();
    beta.push(*beta.last().expect("non-empty"));
    alpha.push(*alpha.last().expect("non-empty"));
    bb_sequence(beta, alpha, prev.variant, prev.g)
}
