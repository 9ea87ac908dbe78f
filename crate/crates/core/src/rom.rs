//! Snapshot compression and the reduced Galerkin model.
//!
//! Offline, converged full-order states (homogenized, i.e. with the lifting
//! of the prescribed values removed) are gathered as columns of a snapshot
//! matrix and compressed by a singular value decomposition. The basis keeps
//! the smallest number of left singular vectors whose discarded spectral
//! energy fraction stays under a tolerance: with singular values s_1 >= s_2
//! >= ..., the rank N is the smallest n with sum_{k>n} s_k^2 <= eps^2 *
//! sum_k s_k^2.
//!
//! Online, the displacement is sought as `lifting(mu) + V x` with reduced
//! coordinates x, and the equilibrium equations are projected onto the basis:
//! `V^T G(lifting + V x; mu) = 0`. The same Newton loop as the full model
//! drives the solve, with the dense reduced tangent `V^T J V`.

use nalgebra::{DMatrix, DVector};

use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::solver::{
    newton_solve, Branch, NewtonReport, NewtonSettings, NonlinearSystem, OutputFunctional,
    SeedingPolicy, SweepProblem,
};

/// Equal-length state vectors collected column-wise.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub n_dofs: usize,
    pub columns: Vec<DVector<f64>>,
}

impl SnapshotSet {
    pub fn new(n_dofs: usize) -> Self {
        SnapshotSet { n_dofs, columns: Vec::new() }
    }

    pub fn from_columns(n_dofs: usize, columns: Vec<DVector<f64>>) -> Result<Self> {
        let mut set = SnapshotSet::new(n_dofs);
        for c in columns {
            set.push(c)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, column: DVector<f64>) -> Result<()> {
        if column.len() != self.n_dofs {
            return Err(Error::Reduction(format!(
                "snapshot length {} does not match state size {}",
                column.len(),
                self.n_dofs
            )));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn extend(&mut self, columns: &[DVector<f64>]) -> Result<()> {
        for c in columns {
            self.push(c.clone())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.columns)
    }
}

/// Orthonormal reduced basis with its full singular spectrum.
#[derive(Debug, Clone)]
pub struct PodBasis {
    /// n_dofs x n_modes, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// All singular values of the snapshot matrix, descending.
    pub sigma: Vec<f64>,
    /// Energy tolerance the truncation was computed with.
    pub eps: f64,
}

impl PodBasis {
    pub fn n_full(&self) -> usize {
        self.modes.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    /// Fraction of spectral energy in the discarded modes.
    pub fn discarded_energy_fraction(&self) -> f64 {
        let total: f64 = self.sigma.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self.sigma[self.n_modes()..].iter().map(|s| s * s).sum();
        tail / total
    }

    /// Largest deviation of V^T V from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.modes.tr_mul(&self.modes);
        let mut defect = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - target).abs());
            }
        }
        defect
    }
}

/// Smallest rank n >= 1 whose discarded tail energy sum_{k>n} sigma_k^2 is at
/// most eps^2 times the total energy. `sigma` must be non-increasing.
pub fn truncation_rank(sigma: &[f64], eps: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let budget = eps * eps * total;
    let mut tail = 0.0;
    // Walk from the smallest singular value; the first index whose cumulative
    // tail exceeds the budget must stay in the basis.
    for n in (1..sigma.len()).rev() {
        tail += sigma[n] * sigma[n];
        if tail > budget {
            return n + 1;
        }
    }
    1
}

/// Compresses the snapshots into an orthonormal basis by SVD with energy
/// truncation at `eps`.
pub fn pod_compress(snapshots: &SnapshotSet, eps: f64) -> Result<PodBasis> {
    if snapshots.is_empty() {
        return Err(Error::Reduction("snapshot set is empty".into()));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Reduction(format!(
            "energy tolerance must lie in [0, 1), got {eps}"
        )));
    }
    let matrix = snapshots.to_matrix();
    if matrix.amax() == 0.0 {
        return Err(Error::Reduction(
            "snapshot matrix is identically zero; nothing to compress".into(),
        ));
    }

    let svd = nalgebra::linalg::SVD::new(matrix, true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Reduction("singular vectors were not computed".into()))?;
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    debug_assert!(sigma.windows(2).all(|w| w[0] >= w[1]));

    let rank = truncation_rank(&sigma, eps);
    let basis = PodBasis { modes: u.columns(0, rank).into_owned(), sigma, eps };
    let defect = basis.orthonormality_defect();
    if defect > 1e-10 {
        return Err(Error::Reduction(format!(
            "compressed basis lost orthonormality (defect {defect:.3e})"
        )));
    }
    Ok(basis)
}

/// The projected equilibrium equations as a [`NonlinearSystem`] over reduced
/// coordinates.
pub struct ReducedSystem<'a, 'b> {
    pub assembler: &'b Assembler<'a>,
    pub modes: &'b DMatrix<f64>,
    pub mu: f64,
    /// Records the internal-force vector of every residual evaluation.
    /// Hyper-reduction trains on these: they sample the force along states
    /// the reduced model actually visits (lifting + V x, seeded predictors
    /// included), which an unreduced sweep cannot provide — the stiffness is
    /// so large that even tiny state differences between the two manifolds
    /// decorrelate the forces.
    pub force_capture: Option<&'b mut Vec<DVector<f64>>>,
}

impl ReducedSystem<'_, '_> {
    /// lifting(mu) + V x.
    pub fn full_state(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut u = self.assembler.dofmap.lifting(self.mu);
        u.gemv(1.0, self.modes, x, 1.0);
        u
    }

    /// Dense reduced tangent V^T J(u) V.
    pub fn reduced_tangent(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let u = self.full_state(x);
        let jacobian = self.assembler.jacobian(&u)?;
        let jv = jacobian.mul_dense(self.modes);
        Ok(self.modes.tr_mul(&jv))
    }
}

impl NonlinearSystem for ReducedSystem<'_, '_> {
    fn residual(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.full_state(x);
        let f_int = self.assembler.internal_force(&u)?;
        if let Some(capture) = self.force_capture.as_deref_mut() {
            capture.push(f_int.clone());
        }
        let mut g = f_int;
        g -= self.assembler.body_load();
        let (base, slope) = self.assembler.traction_load();
        g -= base;
        g.axpy(-self.mu, slope, 1.0);
        self.assembler.dofmap.zero_constrained(&mut g);
        Ok(self.modes.tr_mul(&g))
    }

    fn newton_step(
        &mut self,
        x: &DVector<f64>,
        residual: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let tangent = self.reduced_tangent(x)?;
        let delta = tangent
            .lu()
            .solve(residual)
            .ok_or_else(|| Error::SingularJacobian("reduced tangent is singular".into()))?;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian(
                "reduced tangent solve produced non-finite values".into(),
            ));
        }
        Ok(delta)
    }
}

/// Reduced continuation problem: the state is the reduced coordinate vector.
/// With `capture_forces` set, every Newton iterate's internal force lands in
/// `force_snapshots` — the training data for hyper-reduction.
pub struct ReducedProblem<'a, 'b> {
    pub assembler: &'b Assembler<'a>,
    pub basis: &'b PodBasis,
    /// Seeding shape projected onto the basis.
    pub seed_reduced: DVector<f64>,
    pub seed_threshold: Option<f64>,
    pub functional: OutputFunctional,
    pub settings: NewtonSettings,
    pub capture_forces: bool,
    pub force_snapshots: Vec<DVector<f64>>,
}

impl<'a, 'b> ReducedProblem<'a, 'b> {
    pub fn new(
        assembler: &'b Assembler<'a>,
        basis: &'b PodBasis,
        seeding: &SeedingPolicy,
        functional: OutputFunctional,
        settings: NewtonSettings,
    ) -> Result<Self> {
        if basis.n_full() != assembler.dofmap.n_dofs {
            return Err(Error::Reduction(format!(
                "basis has {} rows but the problem has {} unknowns",
                basis.n_full(),
                assembler.dofmap.n_dofs
            )));
        }
        let shape = seeding.shape(assembler.mesh, assembler.dofmap);
        Ok(ReducedProblem {
            assembler,
            basis,
            seed_reduced: basis.modes.tr_mul(&shape),
            seed_threshold: Some(seeding.until_output_exceeds),
            functional,
            settings,
            capture_forces: false,
            force_snapshots: Vec::new(),
        })
    }
}

impl SweepProblem for ReducedProblem<'_, '_> {
    fn initial_state(&mut self, _mu: f64) -> DVector<f64> {
        DVector::zeros(self.basis.n_modes())
    }

    fn prepare(&mut self, _state: &mut DVector<f64>, _mu: f64) {}

    fn seed(&self, state: &mut DVector<f64>) {
        *state += &self.seed_reduced;
    }

    fn seed_threshold(&self) -> Option<f64> {
        self.seed_threshold
    }

    fn solve(&mut self, state: &mut DVector<f64>, mu: f64) -> Result<NewtonReport> {
        let mut system = ReducedSystem {
            assembler: self.assembler,
            modes: &self.basis.modes,
            mu,
            force_capture: self.capture_forces.then_some(&mut self.force_snapshots),
        };
        newton_solve(&mut system, state, &self.settings)
    }

    fn reconstruct(&self, state: &DVector<f64>, mu: f64) -> DVector<f64> {
        let system = ReducedSystem {
            assembler: self.assembler,
            modes: &self.basis.modes,
            mu,
            force_capture: None,
        };
        system.full_state(state)
    }

    fn output(&self, u_full: &DVector<f64>) -> f64 {
        self.functional.evaluate(u_full, self.assembler.mesh.dim)
    }
}

/// Deviation between two branches at one shared grid point.
#[derive(Debug, Clone, Copy)]
pub struct PointError {
    pub mu: f64,
    /// |u_ref - u_other|.
    pub abs_state: f64,
    /// |u_ref - u_other| / max(|u_ref|, 1e-14).
    pub rel_state: f64,
    /// |s_ref - s_other|.
    pub abs_output: f64,
    /// |u_ref|, the scale the relative error divides by.
    pub state_norm: f64,
}

/// Aggregate deviations between two branches computed on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct ErrorStats {
    /// max over compared points of the relative state error.
    pub max_rel_state: f64,
    /// mean over compared points of |u_ref - u_other|.
    pub mean_abs_state: f64,
    /// max over compared points of |s_ref - s_other|.
    pub max_abs_output: f64,
    /// max over compared points of |u_ref|.
    pub max_state_norm: f64,
    /// Parameter value where the absolute state error peaks.
    pub worst_mu: f64,
    /// Points converged in both branches.
    pub n_compared: usize,
}

impl ErrorStats {
    pub fn from_points(points: &[PointError]) -> ErrorStats {
        let mut stats = ErrorStats {
            max_rel_state: 0.0,
            mean_abs_state: 0.0,
            max_abs_output: 0.0,
            max_state_norm: 0.0,
            worst_mu: f64::NAN,
            n_compared: points.len(),
        };
        let mut worst_abs = -1.0;
        for p in points {
            if p.abs_state > worst_abs {
                worst_abs = p.abs_state;
                stats.worst_mu = p.mu;
            }
            stats.max_rel_state = stats.max_rel_state.max(p.rel_state);
            stats.mean_abs_state += p.abs_state;
            stats.max_abs_output = stats.max_abs_output.max(p.abs_output);
            stats.max_state_norm = stats.max_state_norm.max(p.state_norm);
        }
        if !points.is_empty() {
            stats.mean_abs_state /= points.len() as f64;
        }
        stats
    }
}

/// Point-by-point deviations. The grids must agree exactly; only points
/// converged in both branches are reported.
pub fn pointwise_errors(reference: &Branch, other: &Branch) -> Result<Vec<PointError>> {
    if reference.points.len() != other.points.len() {
        return Err(Error::GridMismatch(format!(
            "branches have {} and {} points",
            reference.points.len(),
            other.points.len()
        )));
    }
    let mut out = Vec::new();
    for (a, b) in reference.points.iter().zip(&other.points) {
        if a.mu != b.mu {
            return Err(Error::GridMismatch(format!(
                "parameter grids differ: {} vs {}",
                a.mu, b.mu
            )));
        }
        if !(a.converged && b.converged) {
            continue;
        }
        let abs_state = (&a.u - &b.u).norm();
        let state_norm = a.u.norm();
        out.push(PointError {
            mu: a.mu,
            abs_state,
            rel_state: abs_state / state_norm.max(1e-14),
            abs_output: (a.s - b.s).abs(),
            state_norm,
        });
    }
    Ok(out)
}

/// Aggregate form of [`pointwise_errors`].
pub fn branch_errors(reference: &Branch, other: &Branch) -> Result<ErrorStats> {
    Ok(ErrorStats::from_points(&pointwise_errors(reference, other)?))
}
