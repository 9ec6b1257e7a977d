//! Boundary matrix-product states for contracting the infinite double-layer
//! network from above or below.
//!
//! The boundary is a uniform MPS with a two-column unit cell, kept in mixed
//! canonical form. Absorbing a lattice row multiplies each boundary bond by
//! the squared horizontal bond dimension; the enlarged row is never stored
//! explicitly. Instead each big column stays factored as (boundary tensor,
//! site tensor), and the compressed boundary is found variationally from
//! the fixed points of the mixed transfer channel, with isometries updated
//! through polar decompositions.

use ndarray::Array1;
use serde::Serialize;

use crate::ipeps::{IPepsState, AX_BOTTOM, AX_LEFT, AX_RIGHT, AX_TOP};
use crate::tensor::{
    dominant_eigenpair, factorize_polar, LinearMap, PolarSide, Tensor, C64,
};
use crate::{Error, Result};

/// Boundary MPS tensor axes: [left bond, ket, bra, right bond]. The ket and
/// bra legs face the lattice and are kept separate, never fused.
pub const BT_LEFT: usize = 0;
pub const BT_KET: usize = 1;
pub const BT_BRA: usize = 2;
pub const BT_RIGHT: usize = 3;

/// Two-column boundary MPS in mixed canonical form. Site 0 sits above the
/// sublattice-A column of the row about to be absorbed. `c_ab` is the bond
/// matrix between sites 0 and 1, `c_ba` the one closing the cell.
#[derive(Clone, Debug)]
pub struct BoundaryMps {
    pub al: Tensor,
    pub bl: Tensor,
    pub ar: Tensor,
    pub br: Tensor,
    pub ac: Tensor,
    pub bc: Tensor,
    pub c_ab: Tensor,
    pub c_ba: Tensor,
}

impl BoundaryMps {
    /// Bond dimensions (entering site 0, entering site 1).
    pub fn bond_dims(&self) -> (usize, usize) {
        (self.al.shape()[BT_LEFT], self.al.shape()[BT_RIGHT])
    }

    /// Lattice-facing leg dimensions of the two sites.
    pub fn down_dims(&self) -> (usize, usize) {
        (self.al.shape()[BT_KET], self.bl.shape()[BT_KET])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("al", &self.al),
            ("bl", &self.bl),
            ("ar", &self.ar),
            ("br", &self.br),
            ("ac", &self.ac),
            ("bc", &self.bc),
        ] {
            if t.rank() != 4 {
                return Err(Error::Shape(format!("{name} has rank {}", t.rank())));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite);
            }
        }
        let (x0, x1) = self.bond_dims();
        let checks = [
            ("al", self.al.shape(), [x0, x1]),
            ("bl", self.bl.shape(), [x1, x0]),
            ("ar", self.ar.shape(), [x0, x1]),
            ("br", self.br.shape(), [x1, x0]),
            ("ac", self.ac.shape(), [x0, x1]),
            ("bc", self.bc.shape(), [x1, x0]),
        ];
        for (name, shape, [l, r]) in checks {
            if shape[BT_LEFT] != l || shape[BT_RIGHT] != r {
                return Err(Error::Shape(format!("{name} bonds {shape:?}")));
            }
        }
        if self.c_ab.shape() != [x1, x1] || self.c_ba.shape() != [x0, x0] {
            return Err(Error::Shape("bond matrix dimensions".into()));
        }
        Ok(())
    }

    /// Residuals of the four mixed-canonical identities, relative to the
    /// center norms.
    pub fn gauge_costs(&self) -> Result<[f64; 4]> {
        let nac = self.ac.norm().max(f64::MIN_POSITIVE);
        let nbc = self.bc.norm().max(f64::MIN_POSITIVE);
        let e1 = self
            .ac
            .sub(&self.al.contract(&self.c_ab, &[(BT_RIGHT, 0)])?)?
            .norm()
            / nac;
        let e2 = self
            .ac
            .sub(&self.c_ba.contract(&self.ar, &[(1, BT_LEFT)])?)?
            .norm()
            / nac;
        let e3 = self
            .bc
            .sub(&self.bl.contract(&self.c_ba, &[(BT_RIGHT, 0)])?)?
            .norm()
            / nbc;
        let e4 = self
            .bc
            .sub(&self.c_ab.contract(&self.br, &[(1, BT_LEFT)])?)?
            .norm()
            / nbc;
        Ok([e1, e2, e3, e4])
    }

    /// The same boundary with the two unit-cell sites relabeled.
    pub fn swapped(&self) -> BoundaryMps {
        BoundaryMps {
            al: self.bl.clone(),
            bl: self.al.clone(),
            ar: self.br.clone(),
            br: self.ar.clone(),
            ac: self.bc.clone(),
            bc: self.ac.clone(),
            c_ab: self.c_ba.clone(),
            c_ba: self.c_ab.clone(),
        }
    }

    /// Starting boundary for the half-plane contraction: bond dimension one,
    /// lattice legs traced against each other.
    pub fn trivial(d0: usize, d1: usize) -> BoundaryMps {
        let delta = |d: usize| {
            Tensor::from_fn(&[1, d, d, 1], |ix| {
                if ix[1] == ix[2] {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .normalized()
        };
        let t0 = delta(d0);
        let t1 = delta(d1);
        BoundaryMps {
            al: t0.clone(),
            bl: t1.clone(),
            ar: t0.clone(),
            br: t1.clone(),
            ac: t0,
            bc: t1,
            c_ab: Tensor::identity(1),
            c_ba: Tensor::identity(1),
        }
    }
}

/// One column of the enlarged row, kept factored: the old boundary tensor
/// above and the double-layer site below.
#[derive(Clone, Debug)]
pub struct ColumnPair {
    pub top: Tensor,
    pub site: Tensor,
}

impl ColumnPair {
    /// Big bond dimension on the left of this column.
    pub fn left_dim(&self) -> usize {
        self.top.shape()[BT_LEFT] * self.site.shape()[AX_LEFT].pow(2)
    }

    pub fn right_dim(&self) -> usize {
        self.top.shape()[BT_RIGHT] * self.site.shape()[AX_RIGHT].pow(2)
    }

    pub fn down_dim(&self) -> usize {
        self.site.shape()[AX_BOTTOM]
    }

    /// Explicit big MPS tensor [left, ket, bra, right] with the factored
    /// legs fused. Test and small-dimension use only.
    pub fn materialize(&self) -> Result<Tensor> {
        let x = &self.site;
        // top[l,tk,tb,r] ket[p,tk,lk,dk,rk] -> [l,tb,r,p,lk,dk,rk]
        let w = self.top.contract(x, &[(BT_KET, AX_TOP)])?;
        // contract bra over (tb, p): free w [l,r,lk,dk,rk] + bra [lb,db,rb]
        let w = w.contract(&x.conj(), &[(1, AX_TOP), (3, AX_PHYS_BRA)])?;
        // w axes: [l, r, lk, dk, rk, lb, db, rb] -> [l, lk, lb, dk, db, r, rk, rb]
        let w = w.permute(&[0, 2, 5, 3, 6, 1, 4, 7]);
        let s = w.shape().to_vec();
        w.reshape(&[s[0] * s[1] * s[2], s[3], s[4], s[5] * s[6] * s[7]])
    }
}

// Bra tensors share the site axis order; alias for readability in the
// double-layer contractions.
const AX_PHYS_BRA: usize = 0;

/// Transfer a left vector [old bond, h ket, h bra, small bond] through one
/// factored column sandwiched with the conjugated small tensor.
pub(crate) fn col_left(v: &Tensor, top: &Tensor, site: &Tensor, small: &Tensor) -> Result<Tensor> {
    col_left_kb(v, top, site, site, small)
}

/// [`col_left`] with distinct ket and bra site tensors.
pub(crate) fn col_left_kb(
    v: &Tensor,
    top: &Tensor,
    ket: &Tensor,
    bra: &Tensor,
    small: &Tensor,
) -> Result<Tensor> {
    let w = col_left_open_kb(v, top, ket, bra)?;
    // w: [s, r_old, dk, rk, db, rb]; close with conj(small)[s, dk, db, s'].
    let w = w.contract(&small.conj(), &[(0, BT_LEFT), (2, BT_KET), (4, BT_BRA)])?;
    // -> [r_old, rk, rb, s']
    Ok(w)
}

/// As [`col_left`] but leaving the lattice legs open:
/// result [small left, old right, down ket, h ket right, down bra, h bra right].
fn col_left_open(v: &Tensor, top: &Tensor, site: &Tensor) -> Result<Tensor> {
    col_left_open_kb(v, top, site, site)
}

/// Open left transfer with distinct ket and bra site tensors (the bra is
/// conjugated here).
pub(crate) fn col_left_open_kb(
    v: &Tensor,
    top: &Tensor,
    ket: &Tensor,
    bra: &Tensor,
) -> Result<Tensor> {
    // v[l_old, lk, lb, s] top[l_old, tk, tb, r_old] -> [lk, lb, s, tk, tb, r_old]
    let w = v.contract(top, &[(0, BT_LEFT)])?;
    // ket[p, tk, lk, dk, rk] over (lk, tk) -> [lb, s, tb, r_old, p, dk, rk]
    let w = w.contract(ket, &[(0, AX_LEFT), (3, AX_TOP)])?;
    // bra over (lb, tb, p) -> [s, r_old, dk, rk, db, rb]
    w.contract(&bra.conj(), &[(0, AX_LEFT), (2, AX_TOP), (4, 0)])
}

/// Right-moving counterpart of [`col_left`].
pub(crate) fn col_right(v: &Tensor, top: &Tensor, site: &Tensor, small: &Tensor) -> Result<Tensor> {
    let w = col_right_open(v, top, site)?;
    // w: [s', l_old, lk, dk, lb, db]; close with conj(small)[s, dk, db, s'].
    let w = w.contract(&small.conj(), &[(0, BT_RIGHT), (3, BT_KET), (5, BT_BRA)])?;
    // -> [l_old, lk, lb, s]
    Ok(w)
}

fn col_right_open(v: &Tensor, top: &Tensor, site: &Tensor) -> Result<Tensor> {
    // v[r_old, rk, rb, s'] top[l_old, tk, tb, r_old] -> [rk, rb, s', l_old, tk, tb]
    let w = v.contract(top, &[(0, BT_RIGHT)])?;
    // ket over (rk, tk) -> [rb, s', l_old, tb, p, lk, dk]
    let w = w.contract(site, &[(0, AX_RIGHT), (4, AX_TOP)])?;
    // bra over (rb, tb, p) -> [s', l_old, lk, dk, lb, db]
    w.contract(&site.conj(), &[(0, AX_RIGHT), (3, AX_TOP), (4, 0)])
}

fn tensor_to_vec(t: &Tensor) -> Array1<C64> {
    Array1::from_iter(t.as_slice().iter().copied())
}

fn vec_to_tensor(v: &Array1<C64>, shape: &[usize]) -> Tensor {
    Tensor::from_array(v.clone())
        .reshape(shape)
        .expect("vector length matches shape")
}

/// Left action of the two-column mixed channel (big columns above, small
/// conjugated below).
struct LeftCellMap<'a> {
    cols: [(&'a ColumnPair, &'a Tensor); 2],
    shape: [usize; 4],
}

impl<'a> LeftCellMap<'a> {
    fn new(cols: [(&'a ColumnPair, &'a Tensor); 2]) -> Self {
        let (c0, s0) = cols[0];
        let shape = [
            c0.top.shape()[BT_LEFT],
            c0.site.shape()[AX_LEFT],
            c0.site.shape()[AX_LEFT],
            s0.shape()[BT_LEFT],
        ];
        LeftCellMap { cols, shape }
    }
}

impl LinearMap for LeftCellMap<'_> {
    fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut t = vec_to_tensor(v, &self.shape);
        for (col, small) in self.cols {
            t = col_left(&t, &col.top, &col.site, small).expect("channel contraction");
        }
        tensor_to_vec(&t)
    }
}

struct RightCellMap<'a> {
    cols: [(&'a ColumnPair, &'a Tensor); 2],
    shape: [usize; 4],
}

impl<'a> RightCellMap<'a> {
    /// `cols` in lattice order; the map applies column 1 first.
    fn new(cols: [(&'a ColumnPair, &'a Tensor); 2]) -> Self {
        let (c1, s1) = cols[1];
        let shape = [
            c1.top.shape()[BT_RIGHT],
            c1.site.shape()[AX_RIGHT],
            c1.site.shape()[AX_RIGHT],
            s1.shape()[BT_RIGHT],
        ];
        RightCellMap { cols, shape }
    }
}

impl LinearMap for RightCellMap<'_> {
    fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut t = vec_to_tensor(v, &self.shape);
        for (col, small) in [self.cols[1], self.cols[0]] {
            t = col_right(&t, &col.top, &col.site, small).expect("channel contraction");
        }
        tensor_to_vec(&t)
    }
}

/// Mixed transfer cell between two explicit boundary MPS (x above, y below,
/// conjugated), left action on [x bond, y bond].
struct SmallCellMap<'a> {
    cols: [(&'a Tensor, &'a Tensor); 2],
    shape: [usize; 2],
}

impl LinearMap for SmallCellMap<'_> {
    fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut t = vec_to_tensor(v, &self.shape);
        for (x, y) in self.cols {
            // v[sx, sy] x[sx, k, b, rx] -> [sy, k, b, rx]
            let w = t.contract(x, &[(0, BT_LEFT)]).expect("transfer");
            // conj(y)[sy, k, b, ry] over (sy, k, b) -> [rx, ry]
            t = w
                .contract(&y.conj(), &[(0, BT_LEFT), (1, BT_KET), (2, BT_BRA)])
                .expect("transfer");
        }
        tensor_to_vec(&t)
    }
}

/// Dominant eigenvalue of the mixed transfer cell of two explicit two-site
/// boundary MPS.
pub fn cell_overlap(
    x: (&Tensor, &Tensor),
    y: (&Tensor, &Tensor),
    tol: f64,
    max_iter: usize,
) -> Result<C64> {
    let map = SmallCellMap {
        cols: [(x.0, y.0), (x.1, y.1)],
        shape: [x.0.shape()[BT_LEFT], y.0.shape()[BT_LEFT]],
    };
    let (lambda, _) = dominant_eigenpair(&map, None, tol, max_iter)?;
    Ok(lambda)
}

/// Per-site fidelity of two boundary states given by their left-canonical
/// tensors: |lambda_xy| / sqrt(lambda_xx lambda_yy), square-rooted for one
/// column.
pub fn fidelity_per_site(x: &BoundaryMps, y: &BoundaryMps) -> Result<f64> {
    let tol = 1e-9;
    let iters = 10000;
    let xy = cell_overlap((&x.al, &x.bl), (&y.al, &y.bl), tol, iters)?;
    let xx = cell_overlap((&x.al, &x.bl), (&x.al, &x.bl), tol, iters)?;
    let yy = cell_overlap((&y.al, &y.bl), (&y.al, &y.bl), tol, iters)?;
    let denom = (xx.norm() * yy.norm()).sqrt().max(f64::MIN_POSITIVE);
    Ok((xy.norm() / denom).sqrt().min(1.0))
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryOptions {
    /// Boundary bond dimension ceiling.
    pub chi: usize,
    /// Per-site fidelity drift threshold for row convergence.
    pub tol: f64,
    pub max_rows: usize,
    /// Cap on compression sweeps per row.
    pub compress_iters: usize,
    /// Gauge-residual target ending a compression early.
    pub compress_tol: f64,
    pub eig_tol: f64,
    pub eig_iters: usize,
    pub seed: u64,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        BoundaryOptions {
            chi: 40,
            tol: 1e-8,
            max_rows: 200,
            compress_iters: 60,
            compress_tol: 1e-9,
            eig_tol: 1e-8,
            eig_iters: 6000,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompressReport {
    pub iters: usize,
    pub cost: f64,
    pub converged: bool,
}

/// Warm-start storage for the channel fixed points across compression
/// sweeps and rows.
#[derive(Default)]
pub struct CompressWorkspace {
    rho0: Option<Array1<C64>>,
    sig0: Option<Array1<C64>>,
}

fn normalized_vec(t: &Tensor) -> Tensor {
    let n = t.norm();
    if n > 0.0 {
        t.scaled(C64::new(1.0 / n, 0.0))
    } else {
        t.clone()
    }
}

/// Variationally compress the factored two-column row onto a boundary MPS
/// with the bond dimensions of `guess`.
pub fn compress(
    cols: &[ColumnPair; 2],
    guess: BoundaryMps,
    opts: &BoundaryOptions,
    ws: &mut CompressWorkspace,
) -> Result<(BoundaryMps, CompressReport)> {
    let mut cur = guess;
    cur.validate()?;
    if cur.down_dims() != (cols[0].down_dim(), cols[1].down_dim()) {
        return Err(Error::Shape("guess lattice legs do not match the row".into()));
    }
    let mut cost = f64::INFINITY;
    let mut iters = 0;
    for it in 0..opts.compress_iters {
        iters = it + 1;
        // Fixed points need only be as accurate as the current gauge
        // error; tighten as the sweep converges.
        let eig_tol = (cost * 1e-2).clamp(opts.eig_tol, 1e-5);
        // Channel fixed points at the bond entering column 0.
        let lmap = LeftCellMap::new([(&cols[0], &cur.al), (&cols[1], &cur.bl)]);
        let (_, rho0_v) = dominant_eigenpair(
            &lmap,
            ws.rho0.as_ref().filter(|v| v.len() == lmap.dim()),
            eig_tol,
            opts.eig_iters,
        )?;
        let rmap = RightCellMap::new([(&cols[0], &cur.ar), (&cols[1], &cur.br)]);
        let (_, sig0_v) = dominant_eigenpair(
            &rmap,
            ws.sig0.as_ref().filter(|v| v.len() == rmap.dim()),
            eig_tol,
            opts.eig_iters,
        )?;
        ws.rho0 = Some(rho0_v.clone());
        ws.sig0 = Some(sig0_v.clone());
        let rho0 = vec_to_tensor(&rho0_v, &lmap.shape);
        let sig0 = vec_to_tensor(&sig0_v, &rmap.shape);
        // Environments at the bond between the columns.
        let rho1 = normalized_vec(&col_left(&rho0, &cols[0].top, &cols[0].site, &cur.al)?);
        let sig1 = normalized_vec(&col_right(&sig0, &cols[1].top, &cols[1].site, &cur.br)?);

        // New centers: environments sandwiching one big column.
        let open0 = col_left_open(&rho0, &cols[0].top, &cols[0].site)?;
        let ac = normalized_vec(&open0.contract(&sig1, &[(1, 0), (3, 1), (5, 2)])?);
        let open1 = col_left_open(&rho1, &cols[1].top, &cols[1].site)?;
        let bc = normalized_vec(&open1.contract(&sig0, &[(1, 0), (3, 1), (5, 2)])?);
        let c_ab = normalized_vec(&rho1.contract(&sig1, &[(0, 0), (1, 1), (2, 2)])?);
        let c_ba = normalized_vec(&rho0.contract(&sig0, &[(0, 0), (1, 1), (2, 2)])?);

        // Isometries from polar factors of the centers and bond matrices.
        let (x0, x1) = cur.bond_dims();
        let (d0, d1) = cur.down_dims();
        let ac_l = ac.reshape(&[x0 * d0 * d0, x1])?;
        let ac_r = ac.reshape(&[x0, d0 * d0 * x1])?;
        let bc_l = bc.reshape(&[x1 * d1 * d1, x0])?;
        let bc_r = bc.reshape(&[x1, d1 * d1 * x0])?;
        let (u_ac_l, _) = factorize_polar(&ac_l, PolarSide::Left)?;
        let (u_ac_r, _) = factorize_polar(&ac_r, PolarSide::Right)?;
        let (u_bc_l, _) = factorize_polar(&bc_l, PolarSide::Left)?;
        let (u_bc_r, _) = factorize_polar(&bc_r, PolarSide::Right)?;
        let (u_ab_l, _) = factorize_polar(&c_ab, PolarSide::Left)?;
        let (u_ab_r, _) = factorize_polar(&c_ab, PolarSide::Right)?;
        let (u_ba_l, _) = factorize_polar(&c_ba, PolarSide::Left)?;
        let (u_ba_r, _) = factorize_polar(&c_ba, PolarSide::Right)?;

        let al = u_ac_l
            .contract(&u_ab_l.conj(), &[(1, 1)])?
            .reshape(&[x0, d0, d0, x1])?;
        let ar = u_ba_r
            .conj()
            .contract(&u_ac_r, &[(0, 0)])?
            .reshape(&[x0, d0, d0, x1])?;
        let bl = u_bc_l
            .contract(&u_ba_l.conj(), &[(1, 1)])?
            .reshape(&[x1, d1, d1, x0])?;
        let br = u_ab_r
            .conj()
            .contract(&u_bc_r, &[(0, 0)])?
            .reshape(&[x1, d1, d1, x0])?;

        cur = BoundaryMps {
            al,
            bl,
            ar,
            br,
            ac,
            bc,
            c_ab,
            c_ba,
        };
        cost = cur
            .gauge_costs()?
            .into_iter()
            .fold(0.0f64, f64::max);
        if cost < opts.compress_tol {
            break;
        }
    }
    let converged = cost < opts.compress_tol;
    Ok((cur, CompressReport {
        iters,
        cost,
        converged,
    }))
}

fn isometrized(t: &Tensor, left: bool) -> Result<Tensor> {
    let s = t.shape().to_vec();
    if left {
        let m = t.reshape(&[s[0] * s[1] * s[2], s[3]])?;
        let (u, _) = factorize_polar(&m, PolarSide::Left)?;
        u.reshape(&s)
    } else {
        let m = t.reshape(&[s[0], s[1] * s[2] * s[3]])?;
        let (u, _) = factorize_polar(&m, PolarSide::Right)?;
        u.reshape(&s)
    }
}

/// Random gauge-consistent boundary with the given bond and lattice-leg
/// dimensions, used when no warm start is available.
pub fn random_boundary(
    x0: usize,
    x1: usize,
    d0: usize,
    d1: usize,
    seed: u64,
) -> Result<BoundaryMps> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let al = isometrized(&Tensor::random(&[x0, d0, d0, x1], &mut rng), true)?;
    let bl = isometrized(&Tensor::random(&[x1, d1, d1, x0], &mut rng), true)?;
    let ar = isometrized(&Tensor::random(&[x0, d0, d0, x1], &mut rng), false)?;
    let br = isometrized(&Tensor::random(&[x1, d1, d1, x0], &mut rng), false)?;
    let c_ab = Tensor::identity(x1).normalized();
    let c_ba = Tensor::identity(x0).normalized();
    let ac = al.contract(&c_ab, &[(BT_RIGHT, 0)])?;
    let bc = bl.contract(&c_ba, &[(BT_RIGHT, 0)])?;
    Ok(BoundaryMps {
        al,
        bl,
        ar,
        br,
        ac,
        bc,
        c_ab,
        c_ba,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySide {
    Top,
    Bottom,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    pub rows: usize,
    pub fidelity_drift: f64,
    pub converged: bool,
}

/// Row-absorb until the boundary stops changing: the per-site fidelity
/// between boundaries two rows apart (same sublattice alignment) approaches
/// one.
///
/// The returned boundary is aligned so that site 0 faces a sublattice-A
/// column of the adjacent lattice row. For `Bottom`, the network is flipped
/// vertically and the result's lattice legs contract directly with the
/// bottom legs of the original site tensors.
pub fn converge_boundary(
    state: &IPepsState,
    side: BoundarySide,
    opts: &BoundaryOptions,
) -> Result<(BoundaryMps, BoundaryReport)> {
    let s = match side {
        BoundarySide::Top => state.clone(),
        BoundarySide::Bottom => state.flipped_vertical(),
    };
    s.validate()?;
    let mut cur = BoundaryMps::trivial(s.a.shape()[AX_TOP], s.b.shape()[AX_TOP]);
    // Boundaries produced on the two previous rows; index 0 is two rows ago.
    let mut history: [Option<BoundaryMps>; 2] = [None, None];
    let mut ws = CompressWorkspace::default();
    let mut drift = f64::INFINITY;
    for row in 0..opts.max_rows {
        let (x0, x1) = if row % 2 == 0 {
            (&s.a, &s.b)
        } else {
            (&s.b, &s.a)
        };
        let cols = [
            ColumnPair {
                top: cur.al.clone(),
                site: x0.clone(),
            },
            ColumnPair {
                top: cur.bl.clone(),
                site: x1.clone(),
            },
        ];
        let t0 = cols[0].left_dim().min(opts.chi);
        let t1 = cols[0].right_dim().min(opts.chi);
        let (d0, d1) = (cols[0].down_dim(), cols[1].down_dim());
        let guess = match &history[0] {
            Some(prev)
                if prev.bond_dims() == (t0, t1) && prev.down_dims() == (d0, d1) =>
            {
                prev.clone()
            }
            _ => {
                ws = CompressWorkspace::default();
                random_boundary(t0, t1, d0, d1, opts.seed.wrapping_add(row as u64))?
            }
        };
        let (next, _rep) = compress(&cols, guess, opts, &mut ws)?;
        if let Some(prev) = &history[0] {
            if prev.down_dims() == next.down_dims() {
                drift = (1.0 - fidelity_per_site(prev, &next)?).abs();
                if drift < opts.tol && row >= 3 {
                    // After absorbing an even row the boundary faces a
                    // B-sublattice column; swap so site 0 always faces A.
                    let out = if row % 2 == 0 { next.swapped() } else { next };
                    return Ok((out, BoundaryReport {
                        rows: row + 1,
                        fidelity_drift: drift,
                        converged: true,
                    }));
                }
            }
        }
        history[0] = history[1].take();
        history[1] = Some(next.clone());
        cur = next;
    }
    Err(Error::BoundaryStalled(format!(
        "no convergence after {} rows (last drift {drift:.3e})",
        opts.max_rows
    )))
}
