//! The infinite checkerboard PEPS with site tensors A and B, exact
//! (truncation-free) gate absorption, and the SVD split of the two-site
//! ZZ gate.
//!
//! Site tensors are rank 5 with axes `[phys, top, left, bottom, right]`
//! (axes 0..5). Every nearest neighbor of an A site is a B site; the four
//! inter-sublattice bond classes are named by orientation and by which
//! sublattice sits left/top.

use serde::{Deserialize, Serialize};

use crate::tensor::{factorize_svd, C64, Tensor};
use crate::{Error, Result};

pub const AX_PHYS: usize = 0;
pub const AX_TOP: usize = 1;
pub const AX_LEFT: usize = 2;
pub const AX_BOTTOM: usize = 3;
pub const AX_RIGHT: usize = 4;

/// The four inter-sublattice bond classes of the checkerboard.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondClass {
    /// A left, B right: A.right -- B.left
    HorizontalAB,
    /// B left, A right: B.right -- A.left
    HorizontalBA,
    /// A above, B below: A.bottom -- B.top
    VerticalAB,
    /// B above, A below: B.bottom -- A.top
    VerticalBA,
}

impl BondClass {
    pub const ALL: [BondClass; 4] = [
        BondClass::HorizontalAB,
        BondClass::HorizontalBA,
        BondClass::VerticalAB,
        BondClass::VerticalBA,
    ];
}

/// Extents of the four shared bonds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondDims {
    pub h_ab: usize,
    pub h_ba: usize,
    pub v_ab: usize,
    pub v_ba: usize,
}

impl BondDims {
    pub fn max(&self) -> usize {
        self.h_ab.max(self.h_ba).max(self.v_ab).max(self.v_ba)
    }
}

/// Infinite checkerboard PEPS given by its two sublattice tensors.
#[derive(Clone, Debug)]
pub struct IPepsState {
    pub a: Tensor,
    pub b: Tensor,
}

impl IPepsState {
    pub fn new(a: Tensor, b: Tensor) -> Result<Self> {
        let state = IPepsState { a, b };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("A", &self.a), ("B", &self.b)] {
            if t.rank() != 5 {
                return Err(Error::Shape(format!(
                    "site tensor {name} must be rank 5, got {:?}",
                    t.shape()
                )));
            }
            if t.shape()[AX_PHYS] != 2 {
                return Err(Error::Shape(format!(
                    "site tensor {name} physical extent must be 2, got {}",
                    t.shape()[AX_PHYS]
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite);
            }
            if t.norm() == 0.0 {
                return Err(Error::Shape(format!("site tensor {name} is zero")));
            }
        }
        let (a, b) = (self.a.shape(), self.b.shape());
        let pairs = [
            (a[AX_RIGHT], b[AX_LEFT], "A.right/B.left"),
            (b[AX_RIGHT], a[AX_LEFT], "B.right/A.left"),
            (a[AX_BOTTOM], b[AX_TOP], "A.bottom/B.top"),
            (b[AX_BOTTOM], a[AX_TOP], "B.bottom/A.top"),
        ];
        for (x, y, name) in pairs {
            if x != y {
                return Err(Error::Shape(format!("bond {name}: extents {x} != {y}")));
            }
        }
        Ok(())
    }

    pub fn bond_dims(&self) -> BondDims {
        BondDims {
            h_ab: self.a.shape()[AX_RIGHT],
            h_ba: self.b.shape()[AX_RIGHT],
            v_ab: self.a.shape()[AX_BOTTOM],
            v_ba: self.b.shape()[AX_BOTTOM],
        }
    }

    /// Rotate the lattice by 90 degrees counterclockwise. Vertical bond
    /// classes map onto the horizontal ones (A->B stays A->B), so observables
    /// on vertical bonds can reuse the horizontal machinery.
    pub fn rotated(&self) -> IPepsState {
        // new [p, top, left, bottom, right] = old [p, right, top, left, bottom]
        let perm = [AX_PHYS, AX_RIGHT, AX_TOP, AX_LEFT, AX_BOTTOM];
        IPepsState {
            a: self.a.permute(&perm),
            b: self.b.permute(&perm),
        }
    }

    /// Mirror top and bottom. Used to run the bottom-boundary convergence
    /// with the same downward-moving machinery as the top boundary.
    pub fn flipped_vertical(&self) -> IPepsState {
        let perm = [AX_PHYS, AX_BOTTOM, AX_LEFT, AX_TOP, AX_RIGHT];
        IPepsState {
            a: self.a.permute(&perm),
            b: self.b.permute(&perm),
        }
    }
}

/// Product state fully polarized along +X: all bonds of extent 1.
pub fn init_product_x() -> IPepsState {
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let t = Tensor::from_fn(&[2, 1, 1, 1, 1], |_| amp);
    IPepsState {
        a: t.clone(),
        b: t,
    }
}

/// Contract a 2x2 unitary into the physical axis of both site tensors.
/// Exact: bond dimensions are unchanged and no truncation error occurs.
pub fn apply_one_site(state: &IPepsState, u: &Tensor) -> Result<IPepsState> {
    if u.shape() != [2, 2] {
        return Err(Error::Shape(format!("one-site gate must be 2x2, got {:?}", u.shape())));
    }
    let dev = u
        .conj()
        .contract(u, &[(0, 0)])?
        .sub(&Tensor::identity(2))?
        .norm();
    if dev > 1e-12 {
        return Err(Error::NonUnitary(dev));
    }
    let apply = |t: &Tensor| -> Result<Tensor> {
        // u[p', p] t[p, ...] -> [p', ...]
        u.contract(t, &[(1, AX_PHYS)])
    };
    Ok(IPepsState {
        a: apply(&state.a)?,
        b: apply(&state.b)?,
    })
}

/// exp(i theta X): the one-site Trotter gate of the transverse-field term.
pub fn x_rotation(theta: f64) -> Tensor {
    let c = C64::new(theta.cos(), 0.0);
    let is = C64::new(0.0, theta.sin());
    Tensor::mat2([[c, is], [is, c]])
}

/// Two rank-3 factors `[phys_out, phys_in, rank]` whose contraction over the
/// rank index reproduces a two-site gate.
#[derive(Clone, Debug)]
pub struct TwoSiteGateFactors {
    pub g_left: Tensor,
    pub g_right: Tensor,
    pub rank: usize,
}

impl TwoSiteGateFactors {
    /// Reassemble the gate as `[p1_out, p1_in, p2_out, p2_in]`.
    pub fn to_gate(&self) -> Result<Tensor> {
        self.g_left.contract(&self.g_right, &[(2, 2)])
    }
}

/// Split the ZZ Trotter gate exp(+i beta Z x Z) (= e^{-i beta (-ZxZ)}) into
/// two site factors with the singular weight shared evenly. Numerically zero
/// singular values are trimmed, so beta = 0 gives rank 1.
pub fn split_zz_gate(beta: f64) -> Result<TwoSiteGateFactors> {
    if !beta.is_finite() {
        return Err(Error::NonFinite);
    }
    let z = Tensor::mat2([
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
    ]);
    let id = Tensor::identity(2);
    let cosb = C64::new(beta.cos(), 0.0);
    let isinb = C64::new(0.0, beta.sin());
    // gate[p1', p1, p2', p2] = cos b * I x I + i sin b * Z x Z
    let gate = Tensor::from_fn(&[2, 2, 2, 2], |ix| {
        cosb * id.get(&[ix[0], ix[1]]) * id.get(&[ix[2], ix[3]])
            + isinb * z.get(&[ix[0], ix[1]]) * z.get(&[ix[2], ix[3]])
    });
    let f = factorize_svd(&gate, &[0, 1], None, 1e-14)?;
    let rank = f.s.len();
    let sqrt_s: Vec<f64> = f.s.iter().map(|x| x.sqrt()).collect();
    let g_left = Tensor::from_fn(&[2, 2, rank], |ix| {
        f.u.get(&[ix[0], ix[1], ix[2]]) * C64::new(sqrt_s[ix[2]], 0.0)
    });
    let g_right = Tensor::from_fn(&[2, 2, rank], |ix| {
        f.vh.get(&[ix[2], ix[0], ix[1]]) * C64::new(sqrt_s[ix[2]], 0.0)
    });
    Ok(TwoSiteGateFactors {
        g_left,
        g_right,
        rank,
    })
}

/// Absorb a rank-3 gate factor `[p_out, p_in, k]` into a site tensor, fusing
/// the gate rank index into the given bond axis as the fast index.
pub fn absorb_factor(site: &Tensor, factor: &Tensor, bond_axis: usize) -> Result<Tensor> {
    // g[p', p, k] t[p, a1..a4] -> [p', k, a1..a4]
    let t = factor.contract(site, &[(1, AX_PHYS)])?;
    // Move k next to the bond axis (which sits at 1 + bond_axis after the
    // contraction pushed it back by one... axes are [p', k, top, left, bottom, right]).
    let mut perm: Vec<usize> = vec![0];
    for ax in 1..5 {
        perm.push(1 + ax); // original virtual axes
        if ax == bond_axis {
            perm.push(1); // k, fast index after the bond axis
        }
    }
    let t = t.permute(&perm);
    let mut shape: Vec<usize> = t.shape().to_vec();
    // Fuse (bond, k) at positions (bond_axis, bond_axis + 1).
    let fused = shape[bond_axis] * shape[bond_axis + 1];
    shape.remove(bond_axis + 1);
    shape[bond_axis] = fused;
    t.reshape(&shape)
}

/// Absorb the two gate factors into the site tensors of one bond class, on
/// every bond of that class simultaneously. Exact: the bond extent grows by
/// the gate rank.
pub fn absorb_gate_exact(
    state: &IPepsState,
    factors: &TwoSiteGateFactors,
    class: BondClass,
) -> Result<IPepsState> {
    let (new_a, new_b) = absorbed_pair(state, factors, class)?;
    IPepsState::new(new_a, new_b)
}

/// The enlarged (A, B) pair after absorbing the gate on one bond class.
pub(crate) fn absorbed_pair(
    state: &IPepsState,
    factors: &TwoSiteGateFactors,
    class: BondClass,
) -> Result<(Tensor, Tensor)> {
    let (ga, gb) = (&factors.g_left, &factors.g_right);
    Ok(match class {
        BondClass::HorizontalAB => (
            absorb_factor(&state.a, ga, AX_RIGHT)?,
            absorb_factor(&state.b, gb, AX_LEFT)?,
        ),
        BondClass::HorizontalBA => (
            absorb_factor(&state.a, gb, AX_LEFT)?,
            absorb_factor(&state.b, ga, AX_RIGHT)?,
        ),
        BondClass::VerticalAB => (
            absorb_factor(&state.a, ga, AX_BOTTOM)?,
            absorb_factor(&state.b, gb, AX_TOP)?,
        ),
        BondClass::VerticalBA => (
            absorb_factor(&state.a, gb, AX_TOP)?,
            absorb_factor(&state.b, ga, AX_BOTTOM)?,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn product_state_shape() {
        let s = init_product_x();
        assert_eq!(s.a.shape(), &[2, 1, 1, 1, 1]);
        let d = s.bond_dims();
        assert_eq!((d.h_ab, d.h_ba, d.v_ab, d.v_ba), (1, 1, 1, 1));
        s.validate().unwrap();
    }

    #[test]
    fn one_site_identity_is_bitwise_noop() {
        let s = init_product_x();
        let s2 = apply_one_site(&s, &Tensor::identity(2)).unwrap();
        assert_eq!(s.a, s2.a);
        assert_eq!(s.b, s2.b);
    }

    #[test]
    fn one_site_inverse_pair_restores() {
        let s = init_product_x();
        let s = apply_one_site(&s, &x_rotation(0.3)).unwrap();
        let s1 = apply_one_site(&s, &x_rotation(0.7)).unwrap();
        let s2 = apply_one_site(&s1, &x_rotation(-0.7)).unwrap();
        assert!(s2.a.sub(&s.a).unwrap().norm() < 1e-13);
        assert!(s2.b.sub(&s.b).unwrap().norm() < 1e-13);
    }

    #[test]
    fn one_site_rejects_non_unitary() {
        let s = init_product_x();
        let m = Tensor::mat2([
            [C64::new(1.0, 0.0), C64::new(0.3, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ]);
        assert!(apply_one_site(&s, &m).is_err());
    }

    #[test]
    fn zz_split_beta_zero_is_rank_one_identity() {
        let f = split_zz_gate(0.0).unwrap();
        assert_eq!(f.rank, 1);
        let gate = f.to_gate().unwrap();
        let id4 = Tensor::from_fn(&[2, 2, 2, 2], |ix| {
            let id = Tensor::identity(2);
            id.get(&[ix[0], ix[1]]) * id.get(&[ix[2], ix[3]])
        });
        assert!(gate.sub(&id4).unwrap().norm() < 1e-13);
    }

    #[test]
    fn zz_split_schmidt_values() {
        let beta = std::f64::consts::PI / 8.0;
        let f = split_zz_gate(beta).unwrap();
        assert_eq!(f.rank, 2);
        // Each rank slice of a factor carries sqrt of one Schmidt value.
        let slice_norm_sq = |t: &Tensor, k: usize| -> f64 {
            (0..2)
                .flat_map(|i| (0..2).map(move |j| t.get(&[i, j, k]).norm_sqr()))
                .sum()
        };
        assert_abs_diff_eq!(slice_norm_sq(&f.g_left, 0), 2.0 * beta.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(slice_norm_sq(&f.g_left, 1), 2.0 * beta.sin(), epsilon = 1e-12);

        let quarter = split_zz_gate(std::f64::consts::PI / 4.0).unwrap();
        assert_eq!(quarter.rank, 2);
        // Equal Schmidt values at pi/4.
        assert_abs_diff_eq!(
            slice_norm_sq(&quarter.g_left, 0),
            slice_norm_sq(&quarter.g_left, 1),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zz_split_reconstructs_gate() {
        for beta in [0.11f64, -0.6, 1.9, std::f64::consts::PI / 8.0] {
            let f = split_zz_gate(beta).unwrap();
            let gate = f.to_gate().unwrap();
            let z = Tensor::mat2([
                [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
            ]);
            let id = Tensor::identity(2);
            let want = Tensor::from_fn(&[2, 2, 2, 2], |ix| {
                C64::new(beta.cos(), 0.0) * id.get(&[ix[0], ix[1]]) * id.get(&[ix[2], ix[3]])
                    + C64::new(0.0, beta.sin()) * z.get(&[ix[0], ix[1]]) * z.get(&[ix[2], ix[3]])
            });
            assert!(gate.sub(&want).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn absorb_zero_angle_keeps_bond_extent() {
        let s = init_product_x();
        let f = split_zz_gate(0.0).unwrap();
        let s2 = absorb_gate_exact(&s, &f, BondClass::HorizontalAB).unwrap();
        assert_eq!(s2.bond_dims(), s.bond_dims());
    }

    #[test]
    fn absorb_grows_bond_by_rank() {
        let s = init_product_x();
        let f = split_zz_gate(std::f64::consts::PI / 8.0).unwrap();
        let s2 = absorb_gate_exact(&s, &f, BondClass::HorizontalAB).unwrap();
        let d = s2.bond_dims();
        assert_eq!((d.h_ab, d.h_ba, d.v_ab, d.v_ba), (2, 1, 1, 1));
        // All four classes applied: every bond doubles.
        let mut s3 = s;
        for class in BondClass::ALL {
            s3 = absorb_gate_exact(&s3, &f, class).unwrap();
        }
        let d3 = s3.bond_dims();
        assert_eq!((d3.h_ab, d3.h_ba, d3.v_ab, d3.v_ba), (2, 2, 2, 2));
    }

    #[test]
    fn rotation_preserves_validity_and_maps_bonds() {
        let s = init_product_x();
        let f = split_zz_gate(0.4).unwrap();
        let s2 = absorb_gate_exact(&s, &f, BondClass::VerticalAB).unwrap();
        let r = s2.rotated();
        r.validate().unwrap();
        assert_eq!(r.bond_dims().h_ab, s2.bond_dims().v_ab);
    }
}
