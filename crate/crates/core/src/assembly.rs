//! Residual and tangent assembly for the hyperelastic equilibrium equations.
//!
//! The weak form solved here is: find u with the prescribed boundary values
//! such that for every test function phi,
//!
//! ```text
//! G(u)[phi] = int P(I + grad u) : grad phi  -  int B . phi  -  int_GammaN T . phi = 0
//! ```
//!
//! with P the first Piola-Kirchhoff stress, B a constant body force and T a
//! traction that is affine in the continuation parameter. Displacements use
//! linear simplex elements; Dirichlet constraints are eliminated
//! symmetrically (zeroed residual rows, identity rows/columns in the
//! tangent) with the prescribed values supplied through the lifting of
//! [`crate::bc::DofMap`].
//!
//! When a [`GeometricMap`] is present, assembly runs on the fixed reference
//! mesh and pulls the physical-domain integrals back: gradients compose with
//! the inverse map Jacobian, volumes scale with its determinant, and facet
//! loads pick up the tangent-space area factor. Element shape gradients and
//! mapped volumes are cached at construction, so residual evaluations only
//! do constitutive work.

use nalgebra::{DVector, SMatrix};

use crate::bc::{BoundaryConditions, DofMap};
use crate::constitutive::{inverse, DeformationState, Material};
use crate::error::{Error, Result};
use crate::geomap::GeometricMap;
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::sparse::CooMatrix;

/// Maximum local DoFs per element (tetrahedron, 3 components).
const MAX_LD: usize = 12;

/// Assembly context for one mesh / material / loading combination.
///
/// Construction precomputes the (possibly pulled-back) shape-function
/// gradients, element volumes and load vectors; the per-state entry points
/// [`Assembler::residual`], [`Assembler::jacobian`] and
/// [`Assembler::internal_force`] only evaluate the material law.
pub struct Assembler<'a> {
    pub mesh: &'a Mesh,
    pub dofmap: &'a DofMap,
    pub material: Material,
    pub body_force: [f64; 3],
    pub rule: QuadratureRule,
    /// Physical shape gradients per element, `npe * dim` entries each.
    grads: Vec<f64>,
    /// Mapped element volumes (reference volume times map determinant).
    vols: Vec<f64>,
    /// Body-force load vector (no rows zeroed).
    f_body: DVector<f64>,
    /// mu-independent part of the traction load vector.
    f_trac_base: DVector<f64>,
    /// Coefficient of mu in the traction load vector.
    f_trac_slope: DVector<f64>,
}

impl<'a> Assembler<'a> {
    pub fn new(
        mesh: &'a Mesh,
        dofmap: &'a DofMap,
        bcs: &BoundaryConditions,
        material: Material,
        body_force: [f64; 3],
        geo: Option<&GeometricMap>,
        rule: QuadratureRule,
    ) -> Result<Self> {
        let mut asm = Assembler {
            mesh,
            dofmap,
            material,
            body_force,
            rule,
            grads: vec![0.0; mesh.n_elements() * (mesh.dim + 1) * mesh.dim],
            vols: vec![0.0; mesh.n_elements()],
            f_body: DVector::zeros(dofmap.n_dofs),
            f_trac_base: DVector::zeros(dofmap.n_dofs),
            f_trac_slope: DVector::zeros(dofmap.n_dofs),
        };
        match mesh.dim {
            2 => asm.precompute::<2>(geo, bcs)?,
            3 => asm.precompute::<3>(geo, bcs)?,
            d => return Err(Error::Mesh(format!("unsupported dimension {d}"))),
        }
        Ok(asm)
    }

    fn precompute<const D: usize>(
        &mut self,
        geo: Option<&GeometricMap>,
        bcs: &BoundaryConditions,
    ) -> Result<()> {
        let mesh = self.mesh;
        let npe = D + 1;
        let factorial = if D == 2 { 2.0 } else { 6.0 };

        for e in 0..mesh.n_elements() {
            let conn = mesh.element(e);
            // Edge matrix: columns are X_a - X_0.
            let x0 = mesh.node(conn[0]);
            let mut dm = SMatrix::<f64, D, D>::zeros();
            for a in 1..npe {
                let xa = mesh.node(conn[a]);
                for i in 0..D {
                    dm[(i, a - 1)] = xa[i] - x0[i];
                }
            }
            let det = crate::constitutive::det(&dm);
            if !(det > 0.0) {
                return Err(Error::Mesh(format!(
                    "element {e} has non-positive volume (det {det})"
                )));
            }
            let dm_inv = inverse(&dm, det);

            // Pull-back data for the piece containing this element.
            let (inv_jac, map_det) = match geo {
                Some(g) => {
                    let mut centroid = [0.0f64; 3];
                    for &n in conn {
                        let p = mesh.node(n);
                        for i in 0..D {
                            centroid[i] += p[i] / npe as f64;
                        }
                    }
                    let k = g.kinematics::<D>(g.piece_for_centroid(&centroid[..D]))?;
                    (k.inv_jac, k.det)
                }
                None => (SMatrix::<f64, D, D>::identity(), 1.0),
            };

            // Reference gradients: row a of dm_inv for vertex a+1, minus their
            // sum for vertex 0; then compose with the map inverse.
            let base = e * npe * D;
            for a in 1..npe {
                for j in 0..D {
                    let mut gj = 0.0;
                    for m in 0..D {
                        gj += dm_inv[(a - 1, m)] * inv_jac[(m, j)];
                    }
                    self.grads[base + a * D + j] = gj;
                }
            }
            for j in 0..D {
                let mut s = 0.0;
                for a in 1..npe {
                    s += self.grads[base + a * D + j];
                }
                self.grads[base + j] = -s;
            }
            self.vols[e] = det / factorial * map_det;
        }

        self.assemble_loads::<D>(geo, bcs)
    }

    fn assemble_loads<const D: usize>(
        &mut self,
        geo: Option<&GeometricMap>,
        bcs: &BoundaryConditions,
    ) -> Result<()> {
        let mesh = self.mesh;
        let points = self.rule.points(D);

        // Body force: int B . phi_a over each element.
        for e in 0..mesh.n_elements() {
            let conn = mesh.element(e);
            for q in &points {
                for (a, &node) in conn.iter().enumerate() {
                    let phi = q.barycentric[a];
                    for i in 0..D {
                        self.f_body[node * D + i] +=
                            q.weight * self.vols[e] * self.body_force[i] * phi;
                    }
                }
            }
        }

        // Tractions: facet-wise, exact for constant T on linear facets.
        for spec in &bcs.traction {
            for facet in mesh.facets.iter().filter(|f| f.tag == spec.tag) {
                let arity = mesh.facet_arity();
                let area_ref = mesh.facet_area(facet);
                let factor = match geo {
                    Some(g) => {
                        let mut centroid = [0.0f64; 3];
                        for &n in &facet.nodes[..arity] {
                            let p = mesh.node(n);
                            for i in 0..D {
                                centroid[i] += p[i] / arity as f64;
                            }
                        }
                        let piece = g.piece_for_centroid(&centroid[..D]);
                        let mut tangents = [[0.0f64; 3]; 2];
                        let p0 = mesh.node(facet.nodes[0]);
                        for t in 0..arity - 1 {
                            let pt = mesh.node(facet.nodes[t + 1]);
                            for i in 0..D {
                                tangents[t][i] = pt[i] - p0[i];
                            }
                        }
                        g.facet_area_factor(piece, &tangents[..arity - 1], D)
                    }
                    None => 1.0,
                };
                let weight = area_ref * factor / arity as f64;
                for &node in &facet.nodes[..arity] {
                    for i in 0..D {
                        self.f_trac_base[node * D + i] += weight * spec.base[i];
                        self.f_trac_slope[node * D + i] += weight * spec.slope[i];
                    }
                }
            }
        }
        Ok(())
    }

    /// Load vector at a given parameter value (no rows zeroed).
    pub fn load_vector(&self, mu: f64) -> DVector<f64> {
        &self.f_body + &self.f_trac_base + &self.f_trac_slope * mu
    }

    /// Body-force load vector (no rows zeroed).
    pub fn body_load(&self) -> &DVector<f64> {
        &self.f_body
    }

    /// (base, slope) of the affine traction load vector.
    pub fn traction_load(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.f_trac_base, &self.f_trac_slope)
    }

    fn dispatch<T>(
        &self,
        f2: impl FnOnce(&Self) -> Result<T>,
        f3: impl FnOnce(&Self) -> Result<T>,
    ) -> Result<T> {
        match self.mesh.dim {
            2 => f2(self),
            3 => f3(self),
            _ => unreachable!(),
        }
    }

    /// Internal-force vector int P : grad phi with constrained rows zeroed.
    pub fn internal_force(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = self.dispatch(
            |s| s.internal_force_impl::<2>(u),
            |s| s.internal_force_impl::<3>(u),
        )?;
        self.dofmap.zero_constrained(&mut out);
        Ok(out)
    }

    fn internal_force_impl<const D: usize>(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dofmap.n_dofs);
        let mut local = [0.0f64; MAX_LD];
        let mut force = [0.0f64; MAX_LD];
        for e in 0..self.mesh.n_elements() {
            let conn = self.mesh.element(e);
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..D {
                    local[a * D + i] = u[node * D + i];
                }
            }
            self.element_force::<D>(e, &local, &mut force)?;
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..D {
                    out[node * D + i] += force[a * D + i];
                }
            }
        }
        Ok(out)
    }

    /// Full residual G(u; mu) with constrained rows zeroed.
    pub fn residual(&self, u: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
        let mut g = self.dispatch(
            |s| s.internal_force_impl::<2>(u),
            |s| s.internal_force_impl::<3>(u),
        )?;
        g -= &self.f_body;
        g -= &self.f_trac_base;
        g.axpy(-mu, &self.f_trac_slope, 1.0);
        self.dofmap.zero_constrained(&mut g);
        Ok(g)
    }

    /// Tangent matrix dG/du with Dirichlet DoFs eliminated symmetrically
    /// (identity diagonal on constrained rows/columns).
    pub fn jacobian(&self, u: &DVector<f64>) -> Result<CooMatrix> {
        self.dispatch(|s| s.jacobian_impl::<2>(u), |s| s.jacobian_impl::<3>(u))
    }

    fn jacobian_impl<const D: usize>(&self, u: &DVector<f64>) -> Result<CooMatrix> {
        let npe = D + 1;
        let ld = npe * D;
        let mut coo = CooMatrix::new(self.dofmap.n_dofs);
        coo.triplets.reserve(self.mesh.n_elements() * ld * ld + self.dofmap.prescribed.len());
        let mut local = [0.0f64; MAX_LD];
        let mut k_local = [0.0f64; MAX_LD * MAX_LD];
        for e in 0..self.mesh.n_elements() {
            let conn = self.mesh.element(e);
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..D {
                    local[a * D + i] = u[node * D + i];
                }
            }
            self.element_jacobian::<D>(e, &local, &mut k_local)?;
            for (a, &na) in conn.iter().enumerate() {
                for i in 0..D {
                    let row = na * D + i;
                    if self.dofmap.constrained[row] {
                        continue;
                    }
                    for (b, &nb) in conn.iter().enumerate() {
                        for j in 0..D {
                            let col = nb * D + j;
                            if self.dofmap.constrained[col] {
                                continue;
                            }
                            coo.push(row, col, k_local[(a * D + i) * ld + b * D + j]);
                        }
                    }
                }
            }
        }
        for &(dof, _, _) in &self.dofmap.prescribed {
            coo.push(dof, dof, 1.0);
        }
        Ok(coo)
    }

    /// Total potential: stored energy minus the work of body force and
    /// traction at parameter `mu`. Its gradient with respect to the free
    /// DoFs is the residual.
    pub fn total_potential(&self, u: &DVector<f64>, mu: f64) -> Result<f64> {
        let strain_energy = self.dispatch(
            |s| s.strain_energy_impl::<2>(u),
            |s| s.strain_energy_impl::<3>(u),
        )?;
        let load = self.load_vector(mu);
        Ok(strain_energy - load.dot(u))
    }

    fn strain_energy_impl<const D: usize>(&self, u: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        let mut local = [0.0f64; MAX_LD];
        for e in 0..self.mesh.n_elements() {
            let conn = self.mesh.element(e);
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..D {
                    local[a * D + i] = u[node * D + i];
                }
            }
            let state = self.element_state::<D>(e, &local);
            if self.material.model == crate::constitutive::MaterialModel::Nh && state.is_inverted()
            {
                return Err(Error::InadmissibleState { det_f: state.j, element: Some(e) });
            }
            total += self.material.energy(&state)? * self.vols[e];
        }
        Ok(total)
    }

    #[inline]
    fn element_state<const D: usize>(&self, e: usize, local: &[f64]) -> DeformationState<D> {
        let npe = D + 1;
        let base = e * npe * D;
        let mut grad_u = SMatrix::<f64, D, D>::zeros();
        for a in 0..npe {
            for i in 0..D {
                for j in 0..D {
                    grad_u[(i, j)] += local[a * D + i] * self.grads[base + a * D + j];
                }
            }
        }
        DeformationState::from_displacement_gradient(&grad_u)
    }

    /// Stress contribution of one element into `force[..npe*D]`.
    fn element_force<const D: usize>(
        &self,
        e: usize,
        local: &[f64],
        force: &mut [f64],
    ) -> Result<()> {
        let npe = D + 1;
        let base = e * npe * D;
        force[..npe * D].fill(0.0);
        let state = self.element_state::<D>(e, local);
        let p = self.material.piola(&state, Some(e))?;
        // With linear elements the stress is element-wise constant, so each
        // quadrature point sees the same integrand; the weights sum to one.
        for q in &self.rule.points(D) {
            let w = q.weight * self.vols[e];
            for a in 0..npe {
                for i in 0..D {
                    let mut v = 0.0;
                    for j in 0..D {
                        v += p[(i, j)] * self.grads[base + a * D + j];
                    }
                    force[a * D + i] += w * v;
                }
            }
        }
        Ok(())
    }

    /// Stress tangent of one element into `k_local` (row-major, npe*D square).
    fn element_jacobian<const D: usize>(
        &self,
        e: usize,
        local: &[f64],
        k_local: &mut [f64],
    ) -> Result<()> {
        let npe = D + 1;
        let ld = npe * D;
        let base = e * npe * D;
        k_local[..ld * ld].fill(0.0);
        let state = self.element_state::<D>(e, local);
        let tangent = self.material.tangent(&state, Some(e))?;
        for q in &self.rule.points(D) {
            let w = q.weight * self.vols[e];
            for b in 0..npe {
                for j in 0..D {
                    // t[i][p] = sum_q A[i][p][j][q] gradb[q]
                    let mut t = [[0.0f64; 3]; 3];
                    for i in 0..D {
                        for pp in 0..D {
                            let mut s = 0.0;
                            for qq in 0..D {
                                s += tangent.0[i][pp][j][qq] * self.grads[base + b * D + qq];
                            }
                            t[i][pp] = s;
                        }
                    }
                    for a in 0..npe {
                        for i in 0..D {
                            let mut s = 0.0;
                            for pp in 0..D {
                                s += t[i][pp] * self.grads[base + a * D + pp];
                            }
                            k_local[(a * D + i) * ld + b * D + j] += w * s;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Index structure for assembling on a subset of elements: the element list,
/// the DoFs their nodes carry, and a global-to-local DoF translation.
#[derive(Debug, Clone)]
pub struct SupportStructure {
    pub elements: Vec<usize>,
    pub dofs: Vec<usize>,
    /// Length `n_dofs`; `u32::MAX` outside the support.
    pub global_to_local: Vec<u32>,
}

impl SupportStructure {
    /// Support of a set of seed DoFs: all elements touching the seed DoFs'
    /// nodes, plus every DoF of those elements' nodes. Internal-force rows at
    /// the seed DoFs are complete when assembled over this element set.
    pub fn for_seed_dofs(mesh: &Mesh, seed_dofs: &[usize]) -> Self {
        let mut node_marked = vec![false; mesh.n_nodes()];
        for &dof in seed_dofs {
            node_marked[dof / mesh.dim] = true;
        }
        let mut elements = Vec::new();
        for e in 0..mesh.n_elements() {
            if mesh.element(e).iter().any(|&n| node_marked[n]) {
                elements.push(e);
            }
        }
        let mut dof_marked = vec![false; mesh.n_nodes() * mesh.dim];
        for &e in &elements {
            for &n in mesh.element(e) {
                for c in 0..mesh.dim {
                    dof_marked[n * mesh.dim + c] = true;
                }
            }
        }
        let dofs: Vec<usize> =
            (0..dof_marked.len()).filter(|&d| dof_marked[d]).collect();
        let mut global_to_local = vec![u32::MAX; dof_marked.len()];
        for (local, &dof) in dofs.iter().enumerate() {
            global_to_local[dof] = local as u32;
        }
        SupportStructure { elements, dofs, global_to_local }
    }

    pub fn fraction_of(&self, mesh: &Mesh) -> f64 {
        self.elements.len() as f64 / mesh.n_elements() as f64
    }
}

impl<'a> Assembler<'a> {
    /// Internal force restricted to the support: `u_local` holds displacement
    /// values for `sup.dofs` (in that order) and the result is accumulated in
    /// the same layout. Only rows belonging to the seed DoFs the support was
    /// built from are complete. No rows are zeroed.
    pub fn support_internal_force(
        &self,
        sup: &SupportStructure,
        u_local: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        match self.mesh.dim {
            2 => self.support_force_impl::<2>(sup, u_local, out),
            3 => self.support_force_impl::<3>(sup, u_local, out),
            _ => unreachable!(),
        }
    }

    fn support_force_impl<const D: usize>(
        &self,
        sup: &SupportStructure,
        u_local: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        out.fill(0.0);
        let mut local = [0.0f64; MAX_LD];
        let mut force = [0.0f64; MAX_LD];
        for &e in &sup.elements {
            let conn = self.mesh.element(e);
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..D {
                    local[a * D + i] = u_local[sup.global_to_local[node * D + i] as usize];
                }
            }
            self.element_force::<D>(e, &local, &mut force)?;
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..D {
                    out[sup.global_to_local[node * D + i] as usize] += force[a * D + i];
                }
            }
        }
        Ok(())
    }

    /// Sampled rows of `J(u) V`: for every `(support-local row, output row)`
    /// pair in `sampled`, accumulates that row of the tangent applied to the
    /// basis block `v_local` (rows in support-local layout) into `out`.
    /// Columns of constrained DoFs are skipped, matching the eliminated
    /// full-size tangent.
    pub fn support_jacobian_rows(
        &self,
        sup: &SupportStructure,
        u_local: &[f64],
        v_local: &nalgebra::DMatrix<f64>,
        sampled: &[(usize, usize)],
        out: &mut nalgebra::DMatrix<f64>,
    ) -> Result<()> {
        match self.mesh.dim {
            2 => self.support_jac_impl::<2>(sup, u_local, v_local, sampled, out),
            3 => self.support_jac_impl::<3>(sup, u_local, v_local, sampled, out),
            _ => unreachable!(),
        }
    }

    fn support_jac_impl<const D: usize>(
        &self,
        sup: &SupportStructure,
        u_local: &[f64],
        v_local: &nalgebra::DMatrix<f64>,
        sampled: &[(usize, usize)],
        out: &mut nalgebra::DMatrix<f64>,
    ) -> Result<()> {
        let npe = D + 1;
        let ld = npe * D;
        out.fill(0.0);
        let n_cols = v_local.ncols();
        let mut sample_of_local = vec![u32::MAX; sup.dofs.len()];
        for &(local_row, out_row) in sampled {
            sample_of_local[local_row] = out_row as u32;
        }
        let mut local = [0.0f64; MAX_LD];
        let mut k_local = [0.0f64; MAX_LD * MAX_LD];
        for &e in &sup.elements {
            let conn = self.mesh.element(e);
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..D {
                    local[a * D + i] = u_local[sup.global_to_local[node * D + i] as usize];
                }
            }
            self.element_jacobian::<D>(e, &local, &mut k_local)?;
            for (a, &na) in conn.iter().enumerate() {
                for i in 0..D {
                    let row_local = sup.global_to_local[na * D + i] as usize;
                    let sample = sample_of_local[row_local];
                    if sample == u32::MAX {
                        continue;
                    }
                    for (b, &nb) in conn.iter().enumerate() {
                        for j in 0..D {
                            let col = nb * D + j;
                            if self.dofmap.constrained[col] {
                                continue;
                            }
                            let k = k_local[(a * D + i) * ld + b * D + j];
                            let col_local = sup.global_to_local[col] as usize;
                            for n in 0..n_cols {
                                out[(sample as usize, n)] += k * v_local[(col_local, n)];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
