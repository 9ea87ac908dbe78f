//! Dirichlet and Neumann boundary data, and the DoF bookkeeping that goes
//! with them.
//!
//! Displacement DoFs are interleaved: DoF `node * dim + component`. Both
//! prescribed displacements and tractions are affine in the continuation
//! parameter: `value(mu) = base + mu * slope`. Dirichlet constraints are
//! imposed by symmetric elimination — constrained residual rows are zeroed
//! and the tangent matrix keeps an identity row/column there — while the
//! prescribed values enter through a lifting vector.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};

/// Prescribed displacement on all nodes of the facets with a given tag.
/// `mask` selects which components are constrained; unmasked components stay
/// free even on the tagged boundary.
#[derive(Debug, Clone)]
pub struct DirichletSpec {
    pub tag: BoundaryTag,
    pub mask: [bool; 3],
    pub base: [f64; 3],
    pub slope: [f64; 3],
}

/// Constant traction (force per reference area) on the facets with a tag.
#[derive(Debug, Clone)]
pub struct TractionSpec {
    pub tag: BoundaryTag,
    pub base: [f64; 3],
    pub slope: [f64; 3],
}

#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<DirichletSpec>,
    pub traction: Vec<TractionSpec>,
}

impl BoundaryConditions {
    /// A full clamp (all components zero) on `tag`.
    pub fn clamp(tag: BoundaryTag) -> DirichletSpec {
        DirichletSpec { tag, mask: [true; 3], base: [0.0; 3], slope: [0.0; 3] }
    }
}

/// Per-DoF constraint table derived from a mesh and boundary conditions.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub dim: usize,
    pub n_dofs: usize,
    /// `true` for DoFs carrying a Dirichlet value.
    pub constrained: Vec<bool>,
    /// (dof, base, slope) for every constrained DoF, sorted by dof.
    pub prescribed: Vec<(usize, f64, f64)>,
}

impl DofMap {
    pub fn build(mesh: &Mesh, bcs: &BoundaryConditions) -> Result<Self> {
        let n_dofs = mesh.n_nodes() * mesh.dim;
        let mut constrained = vec![false; n_dofs];
        let mut values: Vec<Option<(f64, f64)>> = vec![None; n_dofs];

        for spec in &bcs.dirichlet {
            let nodes = mesh.tagged_nodes(spec.tag);
            if nodes.is_empty() {
                return Err(Error::Mesh(format!(
                    "Dirichlet condition references tag {:?} which no boundary facet carries",
                    spec.tag
                )));
            }
            for &node in &nodes {
                for comp in 0..mesh.dim {
                    if !spec.mask[comp] {
                        continue;
                    }
                    let dof = node * mesh.dim + comp;
                    let new = (spec.base[comp], spec.slope[comp]);
                    if let Some(old) = values[dof] {
                        if old != new {
                            return Err(Error::Config(format!(
                                "DoF {dof} receives conflicting Dirichlet values {old:?} and {new:?}"
                            )));
                        }
                    }
                    constrained[dof] = true;
                    values[dof] = Some(new);
                }
            }
        }

        for spec in &bcs.traction {
            if mesh.tagged_nodes(spec.tag).is_empty() {
                return Err(Error::Mesh(format!(
                    "traction references tag {:?} which no boundary facet carries",
                    spec.tag
                )));
            }
        }

        let prescribed = values
            .iter()
            .enumerate()
            .filter_map(|(dof, v)| v.map(|(base, slope)| (dof, base, slope)))
            .collect();

        Ok(DofMap { dim: mesh.dim, n_dofs, constrained, prescribed })
    }

    pub fn n_free(&self) -> usize {
        self.n_dofs - self.prescribed.len()
    }

    /// Lifting vector: prescribed values at constrained DoFs, zero elsewhere.
    pub fn lifting(&self, mu: f64) -> DVector<f64> {
        let mut r = DVector::zeros(self.n_dofs);
        for &(dof, base, slope) in &self.prescribed {
            r[dof] = base + mu * slope;
        }
        r
    }

    /// Overwrites the constrained entries of `u` with the values at `mu`.
    pub fn apply_values(&self, u: &mut DVector<f64>, mu: f64) {
        for &(dof, base, slope) in &self.prescribed {
            u[dof] = base + mu * slope;
        }
    }

    /// Subtracts the lifting, leaving zeros at constrained DoFs.
    pub fn homogenize(&self, u: &DVector<f64>, mu: f64) -> DVector<f64> {
        let mut out = u.clone();
        for &(dof, base, slope) in &self.prescribed {
            out[dof] -= base + mu * slope;
        }
        out
    }

    /// Zeroes the constrained entries of a vector in place.
    pub fn zero_constrained(&self, v: &mut DVector<f64>) {
        for &(dof, _, _) in &self.prescribed {
            v[dof] = 0.0;
        }
    }
}

/// Splits the Dirichlet data at `mu` into an explicit lifting vector plus a
/// homogenized constraint table (same constrained set, zero values).
pub fn apply_lifting(dofmap: &DofMap, mu: f64) -> (DVector<f64>, DofMap) {
    let lifting = dofmap.lifting(mu);
    let homogenized = DofMap {
        dim: dofmap.dim,
        n_dofs: dofmap.n_dofs,
        constrained: dofmap.constrained.clone(),
        prescribed: dofmap.prescribed.iter().map(|&(dof, _, _)| (dof, 0.0, 0.0)).collect(),
    };
    (lifting, homogenized)
}
