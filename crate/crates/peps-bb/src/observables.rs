//! Expectation values from converged boundary MPS pairs: one- and two-site
//! observables, the bond-resolved energy, and row correlators.
//!
//! A top and a bottom boundary close the infinite network into a
//! column-to-column channel. Ratios of channel amplitudes with and without
//! operator insertions give expectation values; the channel fixed points
//! make the window effectively infinite.

use serde::Serialize;

use crate::boundary::{
    col_left_kb, col_right, converge_boundary, BoundaryMps, BoundaryOptions, BoundaryReport,
    BoundarySide,
};
use crate::ipeps::{IPepsState, AX_LEFT};
use crate::tensor::{dominant_eigenpair, factorize_svd, LinearMap, Tensor, C64};
use crate::{Error, Result};
use ndarray::Array1;

fn tensor_to_vec(t: &Tensor) -> Array1<C64> {
    Array1::from_iter(t.as_slice().iter().copied())
}

fn vec_to_tensor(v: &Array1<C64>, shape: &[usize]) -> Tensor {
    Tensor::from_array(v.clone())
        .reshape(shape)
        .expect("vector length matches shape")
}

/// Channel closed by a top and bottom boundary around the lattice row.
pub struct ChannelEnv {
    pub top: BoundaryMps,
    pub bot: BoundaryMps,
    pub top_report: BoundaryReport,
    pub bot_report: BoundaryReport,
    /// Bottom tensors pre-conjugated so the shared column kernels apply the
    /// bottom boundary unconjugated.
    bot_a: Tensor,
    bot_b: Tensor,
    /// Left fixed points at the cuts entering an A and a B column.
    la: Tensor,
    lb: Tensor,
    /// Right fixed points at the same cuts.
    ra: Tensor,
    rb: Tensor,
}

/// Left transfer through one channel column (top tensor, ket site, bra
/// site, bottom tensor).
fn chan_left(
    v: &Tensor,
    top: &Tensor,
    ket: &Tensor,
    bra: &Tensor,
    bot_conj: &Tensor,
) -> Result<Tensor> {
    col_left_kb(v, top, ket, bra, bot_conj)
}

struct ChanLeftMap<'a> {
    // (top, site, pre-conjugated bottom) per column, lattice order.
    steps: [(&'a Tensor, &'a Tensor, &'a Tensor); 2],
    shape: [usize; 4],
}

impl LinearMap for ChanLeftMap<'_> {
    fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut t = vec_to_tensor(v, &self.shape);
        for (top, site, bot) in self.steps {
            t = chan_left(&t, top, site, site, bot).expect("channel contraction");
        }
        tensor_to_vec(&t)
    }
}

struct ChanRightMap<'a> {
    // Columns in lattice order; the map applies column 1 first.
    steps: [(&'a Tensor, &'a Tensor, &'a Tensor); 2],
    shape: [usize; 4],
}

impl LinearMap for ChanRightMap<'_> {
    fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut t = vec_to_tensor(v, &self.shape);
        for (top, site, bot) in [self.steps[1], self.steps[0]] {
            t = col_right(&t, top, site, bot).expect("channel contraction");
        }
        tensor_to_vec(&t)
    }
}

fn scalar(v: &Tensor, r: &Tensor) -> Result<C64> {
    v.contract(r, &[(0, 0), (1, 1), (2, 2), (3, 3)])?.as_scalar()
}

impl ChannelEnv {
    /// Converge both boundaries of `state` and the channel fixed points.
    pub fn build(state: &IPepsState, opts: &BoundaryOptions) -> Result<ChannelEnv> {
        let (top, top_report) = converge_boundary(state, BoundarySide::Top, opts)?;
        let (bot, bot_report) = converge_boundary(state, BoundarySide::Bottom, opts)?;
        let bot_a = bot.al.conj();
        let bot_b = bot.bl.conj();

        let shape_a = [
            top.al.shape()[0],
            state.a.shape()[AX_LEFT],
            state.a.shape()[AX_LEFT],
            bot.al.shape()[0],
        ];
        let lmap = ChanLeftMap {
            steps: [(&top.al, &state.a, &bot_a), (&top.bl, &state.b, &bot_b)],
            shape: shape_a,
        };
        let (_, la_v) = dominant_eigenpair(&lmap, None, 1e-10, 20000)?;
        let la = vec_to_tensor(&la_v, &shape_a);
        let lb = chan_left(&la, &top.al, &state.a, &state.a, &bot_a)?.normalized();

        let rmap = ChanRightMap {
            steps: [(&top.al, &state.a, &bot_a), (&top.bl, &state.b, &bot_b)],
            shape: shape_a,
        };
        let (_, ra_v) = dominant_eigenpair(&rmap, None, 1e-10, 20000)?;
        let ra = vec_to_tensor(&ra_v, &shape_a);
        let rb = col_right(&ra, &top.bl, &state.b, &bot_b)?.normalized();

        Ok(ChannelEnv {
            top,
            bot,
            top_report,
            bot_report,
            bot_a,
            bot_b,
            la,
            lb,
            ra,
            rb,
        })
    }

    fn column(&self, on_a: bool) -> (&Tensor, &Tensor) {
        if on_a {
            (&self.top.al, &self.bot_a)
        } else {
            (&self.top.bl, &self.bot_b)
        }
    }

    /// One-site expectation on the given sublattice.
    pub fn one_site(&self, state: &IPepsState, op: &Tensor, on_a: bool) -> Result<C64> {
        let site = if on_a { &state.a } else { &state.b };
        let (l, r) = if on_a {
            (&self.la, &self.rb)
        } else {
            (&self.lb, &self.ra)
        };
        let (top, bot) = self.column(on_a);
        let ket = op.contract(site, &[(1, 0)])?;
        let num = scalar(&chan_left(l, top, &ket, site, bot)?, r)?;
        let den = scalar(&chan_left(l, top, site, site, bot)?, r)?;
        ratio(num, den)
    }

    /// Two-site expectation on one horizontal bond. `left_is_a` selects the
    /// bond class; `op2` has axes [p1 out, p1 in, p2 out, p2 in] with site 1
    /// the left site.
    pub fn two_site_horizontal(
        &self,
        state: &IPepsState,
        op2: &Tensor,
        left_is_a: bool,
    ) -> Result<C64> {
        let (s1, s2) = if left_is_a {
            (&state.a, &state.b)
        } else {
            (&state.b, &state.a)
        };
        let (l, r) = if left_is_a {
            (&self.la, &self.ra)
        } else {
            (&self.lb, &self.rb)
        };
        let (top1, bot1) = self.column(left_is_a);
        let (top2, bot2) = self.column(!left_is_a);

        let f = factorize_svd(op2, &[0, 1], None, 1e-14)?;
        let rank = f.s.len();
        let mut num = C64::new(0.0, 0.0);
        for k in 0..rank {
            let sq = f.s[k].sqrt();
            let p = Tensor::from_fn(&[2, 2], |ix| f.u.get(&[ix[0], ix[1], k]) * sq);
            let q = Tensor::from_fn(&[2, 2], |ix| f.vh.get(&[k, ix[0], ix[1]]) * sq);
            let k1 = p.contract(s1, &[(1, 0)])?;
            let k2 = q.contract(s2, &[(1, 0)])?;
            let v = chan_left(l, top1, &k1, s1, bot1)?;
            let v = chan_left(&v, top2, &k2, s2, bot2)?;
            num += scalar(&v, r)?;
        }
        let v = chan_left(l, top1, s1, s1, bot1)?;
        let v = chan_left(&v, top2, s2, s2, bot2)?;
        let den = scalar(&v, r)?;
        ratio(num, den)
    }

    /// Connected correlator of one-site `op` along a row, distances
    /// 1..=r_max from an A site.
    pub fn connected_row(
        &self,
        state: &IPepsState,
        op: &Tensor,
        r_max: usize,
    ) -> Result<Vec<f64>> {
        let oa = self.one_site(state, op, true)?.re;
        let ob = self.one_site(state, op, false)?.re;
        let ket_a = op.contract(&state.a, &[(1, 0)])?;
        let ket_b = op.contract(&state.b, &[(1, 0)])?;
        let (top_a, bot_a) = self.column(true);
        let (top_b, bot_b) = self.column(false);
        // Running vectors with the operator at site 0 and without.
        let mut v_op = chan_left(&self.la, top_a, &ket_a, &state.a, bot_a)?;
        let mut v_id = chan_left(&self.la, top_a, &state.a, &state.a, bot_a)?;
        let mut out = Vec::with_capacity(r_max);
        for dist in 1..=r_max {
            // Column at this distance: B for odd, A for even.
            let on_a = dist % 2 == 0;
            let (site, ket, top, bot) = if on_a {
                (&state.a, &ket_a, top_a, bot_a)
            } else {
                (&state.b, &ket_b, top_b, bot_b)
            };
            // Terminating fixed point sits left of the next column.
            let r_fp = if on_a { &self.rb } else { &self.ra };
            let num = scalar(&chan_left(&v_op, top, ket, site, bot)?, r_fp)?;
            let den = scalar(&chan_left(&v_id, top, site, site, bot)?, r_fp)?;
            let pair = ratio(num, den)?.re;
            let single = if on_a { oa } else { ob };
            out.push(pair - oa * single);
            // Keep a shared normalization so the running vectors stay O(1).
            v_op = chan_left(&v_op, top, site, site, bot)?;
            v_id = chan_left(&v_id, top, site, site, bot)?;
            let n = v_id.norm();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::DegenerateNorm(n));
            }
            let c = C64::new(1.0 / n, 0.0);
            v_op = v_op.scaled(c);
            v_id = v_id.scaled(c);
        }
        Ok(out)
    }
}

fn ratio(num: C64, den: C64) -> Result<C64> {
    if den.norm() < 1e-300 || !den.is_finite() {
        return Err(Error::DegenerateNorm(den.norm()));
    }
    Ok(num / den)
}

pub fn pauli_x() -> Tensor {
    crate::oracle::pauli_x()
}

pub fn pauli_z() -> Tensor {
    crate::oracle::pauli_z()
}

/// Energy density of one bond: -Z Z - (g/4)(X 1 + 1 X). Summing over the
/// four bonds of a site reproduces -sum ZZ - g sum X.
pub fn bond_hamiltonian(g: f64) -> Tensor {
    let x = pauli_x();
    let z = pauli_z();
    let id = Tensor::identity(2);
    Tensor::from_fn(&[2, 2, 2, 2], |ix| {
        let zz = z.get(&[ix[0], ix[1]]) * z.get(&[ix[2], ix[3]]);
        let x1 = x.get(&[ix[0], ix[1]]) * id.get(&[ix[2], ix[3]]);
        let x2 = id.get(&[ix[0], ix[1]]) * x.get(&[ix[2], ix[3]]);
        -zz - (x1 + x2).scale(g / 4.0)
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BondEnergies {
    pub h_ab: f64,
    pub h_ba: f64,
    pub v_ab: f64,
    pub v_ba: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    /// Mean bond energy; two bonds per site.
    pub per_bond: f64,
    pub bonds: BondEnergies,
    /// Max minus min over the four bond classes, a translation-invariance
    /// diagnostic.
    pub spread: f64,
    pub x: f64,
    pub z: f64,
}

/// Measure the target Hamiltonian at field `g` with fresh channel
/// environments (horizontal bonds from `state`, vertical bonds from the
/// quarter-turn rotated network).
pub fn measure_energy(state: &IPepsState, g: f64, opts: &BoundaryOptions) -> Result<EnergyReport> {
    let env_h = ChannelEnv::build(state, opts)?;
    let rotated = state.rotated();
    let env_v = ChannelEnv::build(&rotated, opts)?;
    measure_energy_with_envs(state, &rotated, g, &env_h, &env_v)
}

/// Horizontal-bond-only energy. The circuit applies equal angles to all
/// four bond classes, so evolved states have rotation-symmetric bond
/// energies (the `spread` diagnostic of [`measure_energy`] stays at noise
/// level); skipping the rotated environment halves the cost. The spread
/// reported here covers only the two horizontal classes.
pub fn measure_energy_rows(
    state: &IPepsState,
    g: f64,
    opts: &BoundaryOptions,
) -> Result<EnergyReport> {
    let env_h = ChannelEnv::build(state, opts)?;
    let h2 = bond_hamiltonian(g);
    let h_ab = env_h.two_site_horizontal(state, &h2, true)?.re;
    let h_ba = env_h.two_site_horizontal(state, &h2, false)?.re;
    let per_bond = 0.5 * (h_ab + h_ba);
    let x = 0.5
        * (env_h.one_site(state, &pauli_x(), true)?.re
            + env_h.one_site(state, &pauli_x(), false)?.re);
    let z = 0.5
        * (env_h.one_site(state, &pauli_z(), true)?.re
            + env_h.one_site(state, &pauli_z(), false)?.re);
    Ok(EnergyReport {
        per_bond,
        bonds: BondEnergies {
            h_ab,
            h_ba,
            v_ab: h_ab,
            v_ba: h_ba,
        },
        spread: (h_ab - h_ba).abs(),
        x,
        z,
    })
}

/// As [`measure_energy`] with caller-supplied environments (`env_v` built
/// from `rotated = state.rotated()`).
pub fn measure_energy_with_envs(
    state: &IPepsState,
    rotated: &IPepsState,
    g: f64,
    env_h: &ChannelEnv,
    env_v: &ChannelEnv,
) -> Result<EnergyReport> {
    let h2 = bond_hamiltonian(g);
    let h_ab = env_h.two_site_horizontal(state, &h2, true)?.re;
    let h_ba = env_h.two_site_horizontal(state, &h2, false)?.re;
    // The quarter turn maps the vertical AB/BA bonds onto horizontal AB/BA.
    let v_ab = env_v.two_site_horizontal(rotated, &h2, true)?.re;
    let v_ba = env_v.two_site_horizontal(rotated, &h2, false)?.re;
    let bonds = [h_ab, h_ba, v_ab, v_ba];
    let per_bond = bonds.iter().sum::<f64>() / 4.0;
    let spread = bonds.iter().cloned().fold(f64::MIN, f64::max)
        - bonds.iter().cloned().fold(f64::MAX, f64::min);
    let x = 0.5
        * (env_h.one_site(state, &pauli_x(), true)?.re
            + env_h.one_site(state, &pauli_x(), false)?.re);
    let z = 0.5
        * (env_h.one_site(state, &pauli_z(), true)?.re
            + env_h.one_site(state, &pauli_z(), false)?.re);
    Ok(EnergyReport {
        per_bond,
        bonds: BondEnergies {
            h_ab,
            h_ba,
            v_ab,
            v_ba,
        },
        spread,
        x,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipeps::init_product_x;
    use crate::ntu::{evolve_from_product, NtuOptions};
    use crate::oracle;
    use crate::sequences::{bb_sequence, GateSequence, ProtocolVariant};
    use approx::assert_abs_diff_eq;

    fn small_opts(chi: usize) -> BoundaryOptions {
        BoundaryOptions {
            chi,
            tol: 1e-9,
            ..BoundaryOptions::default()
        }
    }

    #[test]
    fn product_state_observables() {
        let s = init_product_x();
        let env = ChannelEnv::build(&s, &small_opts(4)).unwrap();
        let x = env.one_site(&s, &pauli_x(), true).unwrap();
        assert_abs_diff_eq!(x.re, 1.0, epsilon = 1e-10);
        let z = env.one_site(&s, &pauli_z(), false).unwrap();
        assert_abs_diff_eq!(z.re, 0.0, epsilon = 1e-10);
        let rep = measure_energy(&s, 3.1, &small_opts(4)).unwrap();
        assert_abs_diff_eq!(rep.per_bond, -3.1 / 2.0, epsilon = 1e-9);
        assert!(rep.spread < 1e-9);
        let corr = env.connected_row(&s, &pauli_z(), 3).unwrap();
        for c in corr {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-9);
        }
    }

    fn depth_one() -> GateSequence {
        bb_sequence(vec![0.3], vec![0.2], ProtocolVariant::ParaTarget, 3.1).unwrap()
    }

    #[test]
    fn depth_one_matches_exact_cone() {
        let seq = depth_one();
        let (state, rep) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
        assert_eq!(rep.eps_ntu, 0.0);
        let probe = oracle::probe(&seq, 26).unwrap();
        let opts = small_opts(8);
        let env = ChannelEnv::build(&state, &opts).unwrap();
        let xa = env.one_site(&state, &pauli_x(), true).unwrap().re;
        let xb = env.one_site(&state, &pauli_x(), false).unwrap().re;
        assert_abs_diff_eq!(xa, probe.x, epsilon = 1e-7);
        assert_abs_diff_eq!(xb, probe.x, epsilon = 1e-7);
        let zz = Tensor::from_fn(&[2, 2, 2, 2], |ix| {
            pauli_z().get(&[ix[0], ix[1]]) * pauli_z().get(&[ix[2], ix[3]])
        });
        let zz_h = env.two_site_horizontal(&state, &zz, true).unwrap().re;
        assert_abs_diff_eq!(zz_h, probe.zz_bond, epsilon = 1e-7);

        let energy = measure_energy(&state, 3.1, &opts).unwrap();
        let e_exact = oracle::energy_per_bond(&seq, 26).unwrap();
        assert_abs_diff_eq!(energy.per_bond, e_exact, epsilon = 1e-6);
        assert!(energy.spread < 1e-6, "spread {}", energy.spread);
    }

    #[test]
    fn depth_one_correlator_matches_exact_cone() {
        let seq = depth_one();
        let (state, _) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
        let env = ChannelEnv::build(&state, &small_opts(8)).unwrap();
        let corr = env.connected_row(&state, &pauli_z(), 3).unwrap();
        let probe = oracle::probe(&seq, 26).unwrap();
        // <Z> = 0 for these circuits, so connected equals plain.
        assert_abs_diff_eq!(corr[0], probe.zz_bond, epsilon = 1e-7);
        assert_abs_diff_eq!(corr[1], probe.zz_dist2, epsilon = 1e-7);
        // Distance 3 exceeds twice the depth: outside the light cone.
        assert_abs_diff_eq!(corr[2], 0.0, epsilon = 1e-7);
    }
}
