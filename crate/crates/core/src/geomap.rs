//! Piecewise-affine geometric parametrizations.
//!
//! A geometry parameter deforms part of the reference domain through an
//! affine map `x_phys = A x_ref + b` that differs per subdomain. Assembly
//! stays on the fixed reference mesh and pulls the integrals back: volume
//! elements pick up `det A`, gradients are composed with `A^{-1}`, and
//! boundary facets pick up the tangent-space area factor.
//!
//! Both supported families parametrize the axial semi-length: the physical
//! domain has total axial length `2 mu_g`, realized by stretching only the
//! far half of the reference domain while the near half (where the clamped
//! face sits) stays fixed:
//!
//! - `beam2d_semilength`: reference beam of length 1; the right half
//!   `x > 0.5` maps as `x -> (4 mu_g - 1)(x - 0.5) + 0.5`. `mu_g = 0.5` is
//!   the identity; invertibility needs `mu_g > 0.25`.
//! - `tube_semilength`: reference tube of length 2; the upper half `z > 1`
//!   maps as `z -> (2 mu_g - 1)(z - 1) + 1`. `mu_g = 1` is the identity;
//!   invertibility needs `mu_g > 0.5`.

use nalgebra::SMatrix;
use serde::Deserialize;

use crate::constitutive::{det, inverse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricMapKind {
    Beam2dSemilength,
    TubeSemilength,
}

/// One affine piece `x -> A x + b`, stored padded to 3-D.
#[derive(Debug, Clone, Copy)]
pub struct AffinePiece {
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
}

impl AffinePiece {
    fn identity() -> Self {
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        AffinePiece { a, b: [0.0; 3] }
    }

    /// The D x D Jacobian block of this piece.
    pub fn jacobian<const D: usize>(&self) -> SMatrix<f64, D, D> {
        let mut m = SMatrix::<f64, D, D>::zeros();
        for i in 0..D {
            for j in 0..D {
                m[(i, j)] = self.a[i][j];
            }
        }
        m
    }

    pub fn map_point(&self, x: &[f64], out: &mut [f64]) {
        let dim = out.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.b[i];
            for j in 0..dim {
                v += self.a[i][j] * x[j];
            }
            *o = v;
        }
    }
}

/// Per-piece pull-back data precomputed for one spatial dimension.
#[derive(Debug, Clone, Copy)]
pub struct PieceKinematics<const D: usize> {
    /// Inverse Jacobian A^{-1}, composing reference gradients into physical ones.
    pub inv_jac: SMatrix<f64, D, D>,
    /// det A, the volume scaling.
    pub det: f64,
}

/// The two-piece map with its subdomain split rule.
#[derive(Debug, Clone)]
pub struct GeometricMap {
    pub kind: GeometricMapKind,
    pub mu_g: f64,
    pub pieces: [AffinePiece; 2],
    /// Elements whose centroid coordinate along `split_axis` exceeds
    /// `split_at` belong to piece 1, the rest to piece 0.
    pub split_axis: usize,
    pub split_at: f64,
}

impl GeometricMap {
    pub fn build(kind: GeometricMapKind, mu_g: f64) -> Result<Self> {
        let min = match kind {
            GeometricMapKind::Beam2dSemilength => 0.25,
            GeometricMapKind::TubeSemilength => 0.5,
        };
        if !(mu_g > min) {
            return Err(Error::Config(format!(
                "semi-length must exceed {min} to keep the map invertible, got {mu_g}"
            )));
        }
        let mut moving = AffinePiece::identity();
        let (split_axis, split_at) = match kind {
            GeometricMapKind::Beam2dSemilength => {
                let scale = 4.0 * mu_g - 1.0;
                moving.a[0][0] = scale;
                moving.b[0] = 0.5 * (1.0 - scale);
                (0, 0.5)
            }
            GeometricMapKind::TubeSemilength => {
                let scale = 2.0 * mu_g - 1.0;
                moving.a[2][2] = scale;
                moving.b[2] = 1.0 - scale;
                (2, 1.0)
            }
        };
        Ok(GeometricMap {
            kind,
            mu_g,
            pieces: [AffinePiece::identity(), moving],
            split_axis,
            split_at,
        })
    }

    /// Piece index for an element given its centroid.
    pub fn piece_for_centroid(&self, centroid: &[f64]) -> usize {
        usize::from(centroid[self.split_axis] > self.split_at)
    }

    /// Pull-back kinematics of a piece in dimension D.
    pub fn kinematics<const D: usize>(&self, piece: usize) -> Result<PieceKinematics<D>> {
        let jac = self.pieces[piece].jacobian::<D>();
        let d = det(&jac);
        if !(d > 0.0) {
            return Err(Error::Config(format!(
                "geometric map piece {piece} has non-positive Jacobian determinant {d}"
            )));
        }
        Ok(PieceKinematics { inv_jac: inverse(&jac, d), det: d })
    }

    /// Area scaling of a boundary facet spanned by the given reference
    /// tangent vectors (one in 2-D, two in 3-D) under piece `piece`.
    pub fn facet_area_factor(&self, piece: usize, tangents: &[[f64; 3]], dim: usize) -> f64 {
        let a = &self.pieces[piece].a;
        let map = |t: &[f64; 3]| {
            let mut out = [0.0; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i] += a[i][j] * t[j];
                }
            }
            out
        };
        match dim {
            2 => {
                let t = tangents[0];
                let mt = map(&t);
                let n0 = (t[0] * t[0] + t[1] * t[1]).sqrt();
                let n1 = (mt[0] * mt[0] + mt[1] * mt[1]).sqrt();
                n1 / n0
            }
            3 => {
                let cross = |u: &[f64; 3], v: &[f64; 3]| {
                    [
                        u[1] * v[2] - u[2] * v[1],
                        u[2] * v[0] - u[0] * v[2],
                        u[0] * v[1] - u[1] * v[0],
                    ]
                };
                let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                let c0 = cross(&tangents[0], &tangents[1]);
                let m0 = map(&tangents[0]);
                let m1 = map(&tangents[1]);
                let c1 = cross(&m0, &m1);
                norm(&c1) / norm(&c0)
            }
            _ => unreachable!(),
        }
    }

    /// Maps a reference point to the physical domain (used to materialize a
    /// physically equivalent mesh for validation).
    pub fn map_point(&self, x: &[f64], dim: usize) -> Vec<f64> {
        let piece = if x[self.split_axis] > self.split_at + 1e-14 { 1 } else { 0 };
        let mut out = vec![0.0; dim];
        self.pieces[piece].map_point(x, &mut out);
        out
    }
}
