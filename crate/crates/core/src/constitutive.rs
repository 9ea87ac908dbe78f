//! Hyperelastic material laws: Saint Venant-Kirchhoff and compressible
//! neo-Hookean.
//!
//! Both laws are parametrized by the two Lamé constants, here called `shear`
//! (the shear modulus, = E / (2(1+nu))) and `lambda` (the first Lamé
//! constant, = E nu / ((1+nu)(1-2nu))). Stored energies per unit reference
//! volume:
//!
//! - Saint Venant-Kirchhoff:  psi = shear * (E:E) + lambda/2 * (tr E)^2,
//!   with E = (F^T F - I)/2 the Green-Lagrange strain. Defined for every F.
//! - Neo-Hookean:  psi = shear/2 * (I1 - d) - shear * ln J + lambda/2 * (ln J)^2,
//!   with I1 = tr(F^T F), J = det F, d the spatial dimension. Requires J > 0;
//!   any evaluation at J <= 0 fails with an inadmissible-state error. The
//!   `I1 - d` shift makes the undeformed energy exactly zero in both 2-D and
//!   3-D.
//!
//! Stresses are first Piola-Kirchhoff, P = d(psi)/dF, and the material
//! tangent is the fourth-order derivative A[i][j][k][l] = dP_ij / dF_kl,
//! which is major-symmetric for both laws.

use nalgebra::SMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Which stored-energy law to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialModel {
    /// Saint Venant-Kirchhoff (quadratic in Green-Lagrange strain).
    Svk,
    /// Compressible neo-Hookean.
    Nh,
}

impl std::fmt::Display for MaterialModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaterialModel::Svk => write!(f, "Saint Venant-Kirchhoff"),
            MaterialModel::Nh => write!(f, "neo-Hookean"),
        }
    }
}

/// Lamé constants (shear, lambda) from Young's modulus and Poisson ratio.
pub fn lame_parameters(young: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(young > 0.0) {
        return Err(Error::Config(format!("Young's modulus must be positive, got {young}")));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::Config(format!(
            "Poisson ratio must lie in (-1, 0.5), got {poisson}"
        )));
    }
    let shear = young / (2.0 * (1.0 + poisson));
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((shear, lambda))
}

/// A material law with fixed Lamé constants.
#[derive(Debug, Clone, Copy)]
pub struct Material {
    pub model: MaterialModel,
    pub shear: f64,
    pub lambda: f64,
}

impl Material {
    pub fn new(model: MaterialModel, young: f64, poisson: f64) -> Result<Self> {
        let (shear, lambda) = lame_parameters(young, poisson)?;
        Ok(Material { model, shear, lambda })
    }
}

/// Kinematic quantities derived from one deformation gradient.
#[derive(Debug, Clone)]
pub struct DeformationState<const D: usize> {
    /// Deformation gradient F = I + grad(u).
    pub f: SMatrix<f64, D, D>,
    /// Right Cauchy-Green tensor C = F^T F.
    pub c: SMatrix<f64, D, D>,
    /// Green-Lagrange strain E = (C - I)/2.
    pub e_gl: SMatrix<f64, D, D>,
    /// det F.
    pub j: f64,
    /// tr C.
    pub i1: f64,
    /// ((tr C)^2 - tr(C^2)) / 2.
    pub i2: f64,
    /// det C.
    pub i3: f64,
}

impl<const D: usize> DeformationState<D> {
    /// Builds the state from a displacement gradient (not the deformation
    /// gradient itself).
    pub fn from_displacement_gradient(grad_u: &SMatrix<f64, D, D>) -> Self {
        let f = SMatrix::<f64, D, D>::identity() + grad_u;
        Self::from_deformation_gradient(f)
    }

    pub fn from_deformation_gradient(f: SMatrix<f64, D, D>) -> Self {
        let c = f.transpose() * f;
        let e_gl = (c - SMatrix::<f64, D, D>::identity()) * 0.5;
        let j = det(&f);
        let i1 = c.trace();
        let c2 = c * c;
        let i2 = 0.5 * (i1 * i1 - c2.trace());
        let i3 = det(&c);
        DeformationState { f, c, e_gl, j, i1, i2, i3 }
    }

    /// True when det F <= 0, i.e. the state is outside the admissible set of
    /// volume-preserving-orientation deformations.
    pub fn is_inverted(&self) -> bool {
        self.j <= 0.0
    }
}

/// Determinant of a small square matrix (2x2 or 3x3).
pub fn det<const D: usize>(m: &SMatrix<f64, D, D>) -> f64 {
    match D {
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => unreachable!("dimension is 2 or 3"),
    }
}

/// Inverse of a small square matrix via the adjugate. The caller must ensure
/// the determinant is nonzero.
pub fn inverse<const D: usize>(m: &SMatrix<f64, D, D>, determinant: f64) -> SMatrix<f64, D, D> {
    let mut inv = SMatrix::<f64, D, D>::zeros();
    match D {
        2 => {
            inv[(0, 0)] = m[(1, 1)];
            inv[(0, 1)] = -m[(0, 1)];
            inv[(1, 0)] = -m[(1, 0)];
            inv[(1, 1)] = m[(0, 0)];
        }
        3 => {
            inv[(0, 0)] = m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
            inv[(0, 1)] = m[(0, 2)] * m[(2, 1)] - m[(0, 1)] * m[(2, 2)];
            inv[(0, 2)] = m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)];
            inv[(1, 0)] = m[(1, 2)] * m[(2, 0)] - m[(1, 0)] * m[(2, 2)];
            inv[(1, 1)] = m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)];
            inv[(1, 2)] = m[(0, 2)] * m[(1, 0)] - m[(0, 0)] * m[(1, 2)];
            inv[(2, 0)] = m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)];
            inv[(2, 1)] = m[(0, 1)] * m[(2, 0)] - m[(0, 0)] * m[(2, 1)];
            inv[(2, 2)] = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        }
        _ => unreachable!("dimension is 2 or 3"),
    }
    inv / determinant
}

/// Fourth-order material tangent A[i][j][k][l] = dP_ij / dF_kl.
#[derive(Debug, Clone)]
pub struct Tangent<const D: usize>(pub [[[[f64; D]; D]; D]; D]);

impl<const D: usize> Tangent<D> {
    pub fn zeros() -> Self {
        Tangent([[[[0.0; D]; D]; D]; D])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.0[i][j][k][l]
    }

    /// Largest violation of the major symmetry A[ijkl] = A[klij], relative
    /// to the largest entry.
    pub fn major_symmetry_defect(&self) -> f64 {
        let mut max_entry = 0.0f64;
        let mut max_defect = 0.0f64;
        for i in 0..D {
            for j in 0..D {
                for k in 0..D {
                    for l in 0..D {
                        max_entry = max_entry.max(self.0[i][j][k][l].abs());
                        max_defect = max_defect.max((self.0[i][j][k][l] - self.0[k][l][i][j]).abs());
                    }
                }
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_defect / max_entry
        }
    }
}

impl Material {
    fn check_admissible<const D: usize>(
        &self,
        state: &DeformationState<D>,
        element: Option<usize>,
    ) -> Result<()> {
        if self.model == MaterialModel::Nh && state.is_inverted() {
            return Err(Error::InadmissibleState { det_f: state.j, element });
        }
        Ok(())
    }

    /// Stored energy density psi(F).
    pub fn energy<const D: usize>(&self, state: &DeformationState<D>) -> Result<f64> {
        self.check_admissible(state, None)?;
        match self.model {
            MaterialModel::Svk => {
                let e = &state.e_gl;
                let e_dot_e: f64 = e.iter().map(|v| v * v).sum();
                let tr_e = e.trace();
                Ok(self.shear * e_dot_e + 0.5 * self.lambda * tr_e * tr_e)
            }
            MaterialModel::Nh => {
                let ln_j = state.j.ln();
                Ok(0.5 * self.shear * (state.i1 - D as f64) - self.shear * ln_j
                    + 0.5 * self.lambda * ln_j * ln_j)
            }
        }
    }

    /// First Piola-Kirchhoff stress P(F) = d(psi)/dF.
    pub fn piola<const D: usize>(
        &self,
        state: &DeformationState<D>,
        element: Option<usize>,
    ) -> Result<SMatrix<f64, D, D>> {
        self.check_admissible(state, element)?;
        match self.model {
            MaterialModel::Svk => {
                // P = F S with the second Piola stress
                // S = 2 shear E + lambda tr(E) I.
                let tr_e = state.e_gl.trace();
                let s = state.e_gl * (2.0 * self.shear)
                    + SMatrix::<f64, D, D>::identity() * (self.lambda * tr_e);
                Ok(state.f * s)
            }
            MaterialModel::Nh => {
                // P = shear (F - F^{-T}) + lambda ln(J) F^{-T}.
                let f_inv = inverse(&state.f, state.j);
                let f_inv_t = f_inv.transpose();
                let ln_j = state.j.ln();
                Ok(state.f * self.shear + f_inv_t * (self.lambda * ln_j - self.shear))
            }
        }
    }

    /// Material tangent A[i][j][k][l] = dP_ij / dF_kl.
    pub fn tangent<const D: usize>(
        &self,
        state: &DeformationState<D>,
        element: Option<usize>,
    ) -> Result<Tangent<D>> {
        self.check_admissible(state, element)?;
        let mut a = Tangent::<D>::zeros();
        match self.model {
            MaterialModel::Svk => {
                // A[ijkl] = delta_ik S_lj + shear (F_il F_kj + delta_jl B_ik)
                //           + lambda F_ij F_kl,   B = F F^T.
                let f = &state.f;
                let tr_e = state.e_gl.trace();
                let s = state.e_gl * (2.0 * self.shear)
                    + SMatrix::<f64, D, D>::identity() * (self.lambda * tr_e);
                let b = f * f.transpose();
                for i in 0..D {
                    for j in 0..D {
                        for k in 0..D {
                            for l in 0..D {
                                let mut v = self.shear * f[(i, l)] * f[(k, j)]
                                    + self.lambda * f[(i, j)] * f[(k, l)];
                                if i == k {
                                    v += s[(l, j)];
                                }
                                if j == l {
                                    v += self.shear * b[(i, k)];
                                }
                                a.0[i][j][k][l] = v;
                            }
                        }
                    }
                }
            }
            MaterialModel::Nh => {
                // A[ijkl] = shear delta_ik delta_jl
                //           + (shear - lambda ln J) Finv_jk Finv_li
                //           + lambda Finv_ji Finv_lk.
                let f_inv = inverse(&state.f, state.j);
                let ln_j = state.j.ln();
                let coef = self.shear - self.lambda * ln_j;
                for i in 0..D {
                    for j in 0..D {
                        for k in 0..D {
                            for l in 0..D {
                                let mut v = coef * f_inv[(j, k)] * f_inv[(l, i)]
                                    + self.lambda * f_inv[(j, i)] * f_inv[(l, k)];
                                if i == k && j == l {
                                    v += self.shear;
                                }
                                a.0[i][j][k][l] = v;
                            }
                        }
                    }
                }
            }
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state<const D: usize>(rng: &mut ChaCha8Rng, scale: f64) -> DeformationState<D> {
        let mut g = SMatrix::<f64, D, D>::zeros();
        for i in 0..D {
            for j in 0..D {
                g[(i, j)] = scale * rng.random_range(-1.0..1.0);
            }
        }
        DeformationState::from_displacement_gradient(&g)
    }

    fn materials() -> Vec<Material> {
        vec![
            Material::new(MaterialModel::Svk, 1.0e6, 0.3).unwrap(),
            Material::new(MaterialModel::Nh, 1.0e6, 0.3).unwrap(),
        ]
    }

    #[test]
    fn lame_constants_match_closed_form() {
        let (shear, lambda) = lame_parameters(1.0e6, 0.3).unwrap();
        assert_relative_eq!(shear, 384_615.384_615_384_6, max_relative = 1e-12);
        assert_relative_eq!(lambda, 576_923.076_923_076_9, max_relative = 1e-12);
    }

    #[test]
    fn lame_rejects_incompressible_limit() {
        assert!(lame_parameters(1.0e6, 0.5).is_err());
        assert!(lame_parameters(1.0e6, -1.0).is_err());
        assert!(lame_parameters(0.0, 0.3).is_err());
    }

    #[test]
    fn svk_energy_uniaxial_stretch() {
        let m = Material::new(MaterialModel::Svk, 1.0e6, 0.3).unwrap();
        let mut f = SMatrix::<f64, 2, 2>::identity();
        f[(0, 0)] = 1.1;
        let st = DeformationState::from_deformation_gradient(f);
        // E = diag(0.105, 0); psi = shear*0.105^2 + lambda/2*0.105^2.
        assert_relative_eq!(m.energy(&st).unwrap(), 7420.673076923077, max_relative = 1e-12);
    }

    #[test]
    fn energy_vanishes_at_identity() {
        for m in materials() {
            let st2 = DeformationState::<2>::from_displacement_gradient(&SMatrix::zeros());
            let st3 = DeformationState::<3>::from_displacement_gradient(&SMatrix::zeros());
            assert_eq!(m.energy(&st2).unwrap(), 0.0);
            assert_eq!(m.energy(&st3).unwrap(), 0.0);
            assert_eq!(m.piola(&st2, None).unwrap().norm(), 0.0);
            assert_eq!(m.piola(&st3, None).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn invariants_of_diagonal_stretch() {
        let mut f = SMatrix::<f64, 3, 3>::identity();
        f[(0, 0)] = 1.2;
        f[(1, 1)] = 0.9;
        let st = DeformationState::from_deformation_gradient(f);
        let (a, b, c) = (1.44, 0.81, 1.0);
        assert_relative_eq!(st.i1, a + b + c, max_relative = 1e-14);
        assert_relative_eq!(st.i2, a * b + b * c + a * c, max_relative = 1e-14);
        assert_relative_eq!(st.i3, a * b * c, max_relative = 1e-14);
        assert_relative_eq!(st.j, 1.2 * 0.9, max_relative = 1e-14);
    }

    #[test]
    fn nh_rejects_inverted_states() {
        let m = Material::new(MaterialModel::Nh, 1.0e6, 0.3).unwrap();
        let mut f = SMatrix::<f64, 2, 2>::identity();
        f[(0, 0)] = -0.5;
        let st = DeformationState::from_deformation_gradient(f);
        assert!(matches!(m.energy(&st), Err(Error::InadmissibleState { .. })));
        assert!(matches!(m.piola(&st, Some(3)), Err(Error::InadmissibleState { element: Some(3), .. })));
        assert!(m.tangent(&st, None).is_err());

        // Saint Venant-Kirchhoff stays defined for the same state.
        let svk = Material::new(MaterialModel::Svk, 1.0e6, 0.3).unwrap();
        assert!(svk.energy(&st).is_ok());
    }

    /// Central-difference gradient of the energy with respect to F.
    fn fd_piola<const D: usize>(m: &Material, f: &SMatrix<f64, D, D>, h: f64) -> SMatrix<f64, D, D> {
        let mut p = SMatrix::<f64, D, D>::zeros();
        for k in 0..D {
            for l in 0..D {
                let mut fp = *f;
                fp[(k, l)] += h;
                let mut fm = *f;
                fm[(k, l)] -= h;
                let ep = m.energy(&DeformationState::from_deformation_gradient(fp)).unwrap();
                let em = m.energy(&DeformationState::from_deformation_gradient(fm)).unwrap();
                p[(k, l)] = (ep - em) / (2.0 * h);
            }
        }
        p
    }

    fn fd_tangent<const D: usize>(m: &Material, f: &SMatrix<f64, D, D>, h: f64) -> Tangent<D> {
        let mut a = Tangent::<D>::zeros();
        for k in 0..D {
            for l in 0..D {
                let mut fp = *f;
                fp[(k, l)] += h;
                let mut fm = *f;
                fm[(k, l)] -= h;
                let pp = m
                    .piola(&DeformationState::from_deformation_gradient(fp), None)
                    .unwrap();
                let pm = m
                    .piola(&DeformationState::from_deformation_gradient(fm), None)
                    .unwrap();
                for i in 0..D {
                    for j in 0..D {
                        a.0[i][j][k][l] = (pp[(i, j)] - pm[(i, j)]) / (2.0 * h);
                    }
                }
            }
        }
        a
    }

    fn check_piola_against_energy<const D: usize>(n_states: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for m in materials() {
            for _ in 0..n_states {
                let st = random_state::<D>(&mut rng, 0.05);
                let p = m.piola(&st, None).unwrap();
                let h = 1e-6 * (1.0 + st.f.norm());
                let p_fd = fd_piola(&m, &st.f, h);
                let denom = p.norm().max(1.0);
                assert!(
                    (p - p_fd).norm() / denom < 1e-6,
                    "{} piola mismatch: {:.3e}",
                    m.model,
                    (p - p_fd).norm() / denom
                );
            }
        }
    }

    fn check_tangent_against_piola<const D: usize>(n_states: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in materials() {
            for _ in 0..n_states {
                let st = random_state::<D>(&mut rng, 0.05);
                let a = m.tangent(&st, None).unwrap();
                let h = 1e-6 * (1.0 + st.f.norm());
                let a_fd = fd_tangent(&m, &st.f, h);
                let mut max_entry = 0.0f64;
                let mut max_diff = 0.0f64;
                for i in 0..D {
                    for j in 0..D {
                        for k in 0..D {
                            for l in 0..D {
                                max_entry = max_entry.max(a.0[i][j][k][l].abs());
                                max_diff =
                                    max_diff.max((a.0[i][j][k][l] - a_fd.0[i][j][k][l]).abs());
                            }
                        }
                    }
                }
                assert!(
                    max_diff / max_entry < 1e-5,
                    "{} tangent mismatch: {:.3e}",
                    m.model,
                    max_diff / max_entry
                );
                assert!(
                    a.major_symmetry_defect() < 1e-9,
                    "{} major symmetry defect {:.3e}",
                    m.model,
                    a.major_symmetry_defect()
                );
            }
        }
    }

    #[test]
    fn piola_is_energy_gradient_2d() {
        check_piola_against_energy::<2>(50);
    }

    #[test]
    fn piola_is_energy_gradient_3d() {
        check_piola_against_energy::<3>(50);
    }

    #[test]
    fn tangent_is_piola_derivative_2d() {
        check_tangent_against_piola::<2>(50);
    }

    #[test]
    fn tangent_is_piola_derivative_3d() {
        check_tangent_against_piola::<3>(50);
    }

    #[test]
    fn tangent_at_identity_is_isotropic() {
        for m in materials() {
            let st = DeformationState::<3>::from_displacement_gradient(&SMatrix::zeros());
            let a = m.tangent(&st, None).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            let expected = m.lambda * kron(i, j) * kron(k, l)
                                + m.shear * (kron(i, k) * kron(j, l) + kron(i, l) * kron(j, k));
                            assert_relative_eq!(a.get(i, j, k, l), expected, epsilon = 1e-9);
                        }
                    }
                }
            }
        }
    }

    fn kron(a: usize, b: usize) -> f64 {
        if a == b {
            1.0
        } else {
            0.0
        }
    }

    /// psi is invariant under rotations applied after the deformation.
    #[test]
    fn energy_is_frame_indifferent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in materials() {
            for _ in 0..20 {
                let st = random_state::<3>(&mut rng, 0.05);
                let angle: f64 = rng.random_range(-3.0..3.0);
                let axis = nalgebra::Unit::new_normalize(nalgebra::Vector3::new(
                    rng.random_range(-1.0..1.0f64),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ));
                let r = nalgebra::Rotation3::from_axis_angle(&axis, angle);
                let rf = r.matrix() * st.f;
                let rotated = DeformationState::from_deformation_gradient(rf);
                let e0 = m.energy(&st).unwrap();
                let e1 = m.energy(&rotated).unwrap();
                assert_relative_eq!(e0, e1, max_relative = 1e-10);
            }
        }
    }

    /// For small strains the Saint Venant-Kirchhoff energy approaches the
    /// linear-elastic energy shear*(eps:eps) + lambda/2*(tr eps)^2 with a
    /// cubic remainder: halving the strain scale shrinks the gap ~8x.
    #[test]
    fn svk_reduces_to_linear_elasticity() {
        let m = Material::new(MaterialModel::Svk, 1.0e6, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = SMatrix::<f64, 3, 3>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                g[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let linear = |grad: &SMatrix<f64, 3, 3>| {
            let eps = (grad + grad.transpose()) * 0.5;
            let eps_dot: f64 = eps.iter().map(|v| v * v).sum();
            m.shear * eps_dot + 0.5 * m.lambda * eps.trace() * eps.trace()
        };
        let gap = |scale: f64| {
            let gs = g * scale;
            let st = DeformationState::from_displacement_gradient(&gs);
            (m.energy(&st).unwrap() - linear(&gs)).abs()
        };
        let g1 = gap(1e-2);
        let g2 = gap(5e-3);
        let ratio = g1 / g2;
        assert!(
            (6.0..10.0).contains(&ratio),
            "expected ~8x cubic decay, got ratio {ratio}"
        );
    }
}
