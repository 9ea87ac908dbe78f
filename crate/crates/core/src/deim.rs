//! Hyper-reduction of the internal-force term by discrete empirical
//! interpolation.
//!
//! The reduced Galerkin model still assembles the full internal force at
//! every Newton iteration. Hyper-reduction removes that cost: internal-force
//! vectors recorded at every full-order Newton iterate are compressed into
//! force modes U, a greedy pass picks one interpolation DoF per retained
//! mode, and online the projected force is approximated as
//!
//! `V^T f(u)  ~=  [V^T U_m (P_s^T U_m)^+] P_s^T f(u)`
//!
//! where `P_s^T f(u)` samples the force at `s` of the chosen DoFs and `+` is
//! the least-squares pseudo-inverse. The sample set is oversampled — `s` is
//! twice the interpolated mode count `m`, capped by the retained index list —
//! because a square collocation system can become badly conditioned for some
//! mode counts, letting tiny interpolation defects balloon into spurious
//! equilibria near a buckling point. The extra rows keep the fit an
//! orthogonal projection onto the mode span at a modest sampling cost.
//! Samples only need the elements touching the sampled nodes, so the online
//! cost scales with the number of samples instead of the mesh size. The map
//! in brackets is a small dense matrix precomputed offline.
//!
//! When the sampled model fails to converge at some continuation step, the
//! sample set grows by [`RETRY_INCREMENT`] modes (reusing the retained
//! spectrum and index list) and the step is retried; the enlarged operator
//! stays in place for the rest of the sweep.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, SupportStructure};
use crate::error::{Error, Result};
use crate::rom::{pod_compress, truncation_rank, PodBasis, SnapshotSet};
use crate::solver::{
    newton_solve, NewtonReport, NewtonSettings, NonlinearSystem, OutputFunctional,
    SeedingPolicy, SweepProblem,
};

/// Modes added per convergence-failure retry.
pub const RETRY_INCREMENT: usize = 5;

/// Extra force modes retained beyond the energy-selected count, as retry
/// headroom.
const RETRY_HEADROOM: usize = 25;

/// Oversampling ratio: sampled rows per interpolated force mode.
const OVERSAMPLE: usize = 2;

/// How the online model linearizes the sampled force term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeimJacobian {
    /// Sampled rows of the assembled tangent, restricted to the support.
    #[default]
    Analytic,
    /// Central differences of the sampled residual in reduced directions.
    FiniteDifference,
}

/// Force modes with their greedy interpolation DoFs.
#[derive(Debug, Clone)]
pub struct DeimModel {
    /// Retained force modes (n_dofs x m_avail, orthonormal columns).
    pub modes: DMatrix<f64>,
    /// Sample DoFs: one greedy interpolation DoF per retained mode, extended
    /// with high-leverage DoFs so oversampled fits have rows to draw on.
    pub indices: Vec<usize>,
    /// Full singular spectrum of the force snapshots, descending.
    pub sigma: Vec<f64>,
    /// Mode count selected by the energy tolerance (initial online size).
    pub m_init: usize,
}

impl DeimModel {
    pub fn m_available(&self) -> usize {
        self.modes.ncols()
    }
}

/// Compresses force snapshots and runs the greedy index selection. `eps`
/// sets the initial mode count by discarded-energy truncation; `max_modes`
/// caps both the initial count and the retained retry headroom.
pub fn deim_build(
    snapshots: &SnapshotSet,
    eps: f64,
    max_modes: Option<usize>,
) -> Result<DeimModel> {
    let basis = pod_compress(snapshots, 0.0)?;
    let sigma = basis.sigma;
    let all_modes = basis.modes;

    let mut m_init = truncation_rank(&sigma, eps).min(all_modes.ncols());
    if let Some(cap) = max_modes {
        if cap == 0 {
            return Err(Error::Reduction("force mode cap must be positive".into()));
        }
        m_init = m_init.min(cap);
    }
    let mut m_keep = (m_init + RETRY_HEADROOM).min(all_modes.ncols());
    if let Some(cap) = max_modes {
        m_keep = m_keep.min(cap);
    }
    // Numerically zero modes carry no force information and would degrade
    // the interpolation system; drop them from the retained set.
    let noise_floor = sigma[0] * 1e-13;
    while m_keep > 1 && sigma[m_keep - 1] <= noise_floor {
        m_keep -= 1;
    }
    m_init = m_init.min(m_keep);

    let mut indices = greedy_indices(&all_modes, m_keep)?;
    let m_keep = indices.len();
    extend_with_leverage_rows(&all_modes, m_keep, &mut indices, OVERSAMPLE * m_keep);
    Ok(DeimModel {
        modes: all_modes.columns(0, m_keep).into_owned(),
        indices,
        sigma,
        m_init: m_init.min(m_keep),
    })
}

/// Greedy selection: the first DoF maximizes |mode 1|; each further DoF
/// maximizes the residual of interpolating the next mode through the DoFs
/// chosen so far. Stops early (shortening the usable mode set) if the
/// interpolation system degenerates.
fn greedy_indices(modes: &DMatrix<f64>, m: usize) -> Result<Vec<usize>> {
    let first = argmax_abs(&modes.column(0).into_owned());
    if modes.column(0)[first].abs() == 0.0 {
        return Err(Error::Reduction("leading force mode is zero".into()));
    }
    let mut indices = vec![first];
    for k in 1..m {
        let uk = modes.column(k).into_owned();
        // Interpolate uk through the current DoFs: (P^T U_k) c = P^T u_k.
        let mut a = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (i, &p) in indices.iter().enumerate() {
            for j in 0..k {
                a[(i, j)] = modes[(p, j)];
            }
            rhs[i] = uk[p];
        }
        let Some(c) = a.lu().solve(&rhs) else {
            break;
        };
        let mut r = uk;
        r.gemv(-1.0, &modes.columns(0, k).into_owned(), &c, 1.0);
        let p = argmax_abs(&r);
        if r[p].abs() < 1e-12 || indices.contains(&p) {
            break;
        }
        indices.push(p);
    }
    Ok(indices)
}

/// Appends DoFs in order of decreasing leverage (squared row norm over the
/// first `m` modes) until `indices` reaches `target` entries, skipping DoFs
/// already chosen and DoFs the modes never touch. Leverage ranks how much a
/// row constrains a least-squares fit in the mode span, so these extra rows
/// are the natural complement to the greedy interpolation DoFs when the fit
/// is oversampled.
fn extend_with_leverage_rows(
    modes: &DMatrix<f64>,
    m: usize,
    indices: &mut Vec<usize>,
    target: usize,
) {
    if indices.len() >= target {
        return;
    }
    let chosen: std::collections::HashSet<usize> = indices.iter().copied().collect();
    let mut pool: Vec<(usize, f64)> = (0..modes.nrows())
        .filter(|i| !chosen.contains(i))
        .map(|i| {
            let lev: f64 = (0..m).map(|j| modes[(i, j)] * modes[(i, j)]).sum();
            (i, lev)
        })
        .filter(|&(_, lev)| lev > 0.0)
        .collect();
    pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in pool {
        if indices.len() >= target {
            break;
        }
        indices.push(i);
    }
}

fn argmax_abs(v: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_val = v[0].abs();
    for i in 1..v.len() {
        let val = v[i].abs();
        if val > best_val {
            best = i;
            best_val = val;
        }
    }
    best
}

/// The precomputed online operator at a fixed sample count.
pub struct DeimOnlineOp {
    /// Interpolated force-mode count in use.
    pub m: usize,
    /// Sampled force rows in use (m <= s <= OVERSAMPLE * m).
    pub s: usize,
    /// V^T U_m (P_s^T U_m)^+, n_modes x s.
    map: DMatrix<f64>,
    /// Elements and DoFs needed to assemble the sampled force rows.
    support: SupportStructure,
    /// State basis restricted to support rows (n_support x n_modes).
    v_support: DMatrix<f64>,
    /// Lifting restricted to support rows: base + mu * slope.
    lift_base: DVector<f64>,
    lift_slope: DVector<f64>,
    /// (support-local row, sample number) pairs for tangent sampling.
    sampled: Vec<(usize, usize)>,
    /// Support-local rows of the sampled DoFs; f64::MAX marks a constrained
    /// sample whose force is pinned to zero.
    sample_rows: Vec<Option<usize>>,
    /// Exactly projected load vectors: V^T (f_body + f_traction_base) and
    /// V^T f_traction_slope.
    load_base: DVector<f64>,
    load_slope: DVector<f64>,
    jacobian_kind: DeimJacobian,
    /// Scratch buffers for the support-restricted assembly.
    u_local: Vec<f64>,
    f_local: Vec<f64>,
}

impl DeimOnlineOp {
    pub fn build(
        assembler: &Assembler,
        basis: &PodBasis,
        deim: &DeimModel,
        m: usize,
        jacobian_kind: DeimJacobian,
    ) -> Result<Self> {
        if m == 0 || m > deim.m_available() {
            return Err(Error::Reduction(format!(
                "requested {m} samples but the model retains {}",
                deim.m_available()
            )));
        }
        let n_dofs = assembler.dofmap.n_dofs;
        if basis.n_full() != n_dofs || deim.modes.nrows() != n_dofs {
            return Err(Error::Reduction(
                "basis and force modes must match the problem size".into(),
            ));
        }

        let s = (OVERSAMPLE * m).min(deim.indices.len());
        let indices = &deim.indices[..s];
        let u_m = deim.modes.columns(0, m);

        // map = (V^T U_m) (P_s^T U_m)^+ via the thin QR of the s x m
        // collocation matrix: pinv = R^{-1} Q^T.
        let mut pu = DMatrix::zeros(s, m);
        for (i, &p) in indices.iter().enumerate() {
            for j in 0..m {
                pu[(i, j)] = u_m[(p, j)];
            }
        }
        let qr = pu.qr();
        let pinv = qr
            .r()
            .solve_upper_triangular(&qr.q().transpose())
            .ok_or_else(|| {
                Error::Reduction("collocation system is rank-deficient; samples degenerate".into())
            })?;
        let map = basis.modes.tr_mul(&u_m) * pinv;

        let support = SupportStructure::for_seed_dofs(assembler.mesh, indices);
        let n_sup = support.dofs.len();
        let mut v_support = DMatrix::zeros(n_sup, basis.n_modes());
        for (local, &dof) in support.dofs.iter().enumerate() {
            for j in 0..basis.n_modes() {
                v_support[(local, j)] = basis.modes[(dof, j)];
            }
        }
        let full_base = assembler.dofmap.lifting(0.0);
        let full_slope = assembler.dofmap.lifting(1.0) - &full_base;
        let lift_base =
            DVector::from_fn(n_sup, |i, _| full_base[support.dofs[i]]);
        let lift_slope =
            DVector::from_fn(n_sup, |i, _| full_slope[support.dofs[i]]);

        let mut sampled = Vec::with_capacity(s);
        let mut sample_rows = Vec::with_capacity(s);
        for (k, &p) in indices.iter().enumerate() {
            if assembler.dofmap.constrained[p] {
                // The full model zeroes constrained force rows; mirror that.
                sample_rows.push(None);
            } else {
                let local = support.global_to_local[p] as usize;
                sampled.push((local, k));
                sample_rows.push(Some(local));
            }
        }

        let load_full = assembler.body_load() + assembler.traction_load().0;
        let load_base = basis.modes.tr_mul(&load_full);
        let load_slope = basis.modes.tr_mul(assembler.traction_load().1);

        Ok(DeimOnlineOp {
            m,
            s,
            map,
            support,
            v_support,
            lift_base,
            lift_slope,
            sampled,
            sample_rows,
            load_base,
            load_slope,
            jacobian_kind,
            u_local: vec![0.0; n_sup],
            f_local: vec![0.0; n_sup],
        })
    }

    /// Fraction of mesh elements the sampled assembly touches.
    pub fn support_fraction(&self, assembler: &Assembler) -> f64 {
        self.support.fraction_of(assembler.mesh)
    }

    /// Displacement on the support rows for reduced coordinates x at mu.
    fn fill_u_local(&mut self, x: &DVector<f64>, mu: f64) {
        for i in 0..self.u_local.len() {
            let mut v = self.lift_base[i] + mu * self.lift_slope[i];
            for j in 0..x.len() {
                v += self.v_support[(i, j)] * x[j];
            }
            self.u_local[i] = v;
        }
    }

    /// Hyper-reduced residual: map * (sampled internal force) minus the
    /// exactly projected loads.
    pub fn residual(
        &mut self,
        assembler: &Assembler,
        x: &DVector<f64>,
        mu: f64,
    ) -> Result<DVector<f64>> {
        self.fill_u_local(x, mu);
        let mut f_local = std::mem::take(&mut self.f_local);
        assembler.support_internal_force(&self.support, &self.u_local, &mut f_local)?;
        let samples = DVector::from_fn(self.s, |k, _| match self.sample_rows[k] {
            Some(row) => f_local[row],
            None => 0.0,
        });
        self.f_local = f_local;
        let mut g = &self.map * samples;
        g -= &self.load_base;
        g.axpy(-mu, &self.load_slope, 1.0);
        Ok(g)
    }

    /// Hyper-reduced tangent, by sampled tangent rows or finite differences.
    pub fn jacobian(
        &mut self,
        assembler: &Assembler,
        x: &DVector<f64>,
        mu: f64,
    ) -> Result<DMatrix<f64>> {
        match self.jacobian_kind {
            DeimJacobian::Analytic => {
                self.fill_u_local(x, mu);
                let mut rows = DMatrix::zeros(self.s, x.len());
                assembler.support_jacobian_rows(
                    &self.support,
                    &self.u_local,
                    &self.v_support,
                    &self.sampled,
                    &mut rows,
                )?;
                Ok(&self.map * rows)
            }
            DeimJacobian::FiniteDifference => {
                let n = x.len();
                let mut jac = DMatrix::zeros(n, n);
                let mut xp = x.clone();
                for k in 0..n {
                    let h = 1e-6 * (1.0 + x[k].abs());
                    xp[k] = x[k] + h;
                    let gp = self.residual(assembler, &xp, mu)?;
                    xp[k] = x[k] - h;
                    let gm = self.residual(assembler, &xp, mu)?;
                    xp[k] = x[k];
                    let col = (gp - gm) / (2.0 * h);
                    jac.set_column(k, &col);
                }
                Ok(jac)
            }
        }
    }
}

/// The hyper-reduced equations as a [`NonlinearSystem`] over reduced
/// coordinates.
pub struct DeimSystem<'a, 'b> {
    pub assembler: &'b Assembler<'a>,
    pub op: &'b mut DeimOnlineOp,
    pub mu: f64,
}

impl NonlinearSystem for DeimSystem<'_, '_> {
    fn residual(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.op.residual(self.assembler, x, self.mu)
    }

    fn newton_step(
        &mut self,
        x: &DVector<f64>,
        residual: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let tangent = self.op.jacobian(self.assembler, x, self.mu)?;
        let delta = tangent
            .lu()
            .solve(residual)
            .ok_or_else(|| Error::SingularJacobian("hyper-reduced tangent is singular".into()))?;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian(
                "hyper-reduced tangent solve produced non-finite values".into(),
            ));
        }
        Ok(delta)
    }
}

/// Hyper-reduced continuation problem with sample-growth retry.
pub struct DeimProblem<'a, 'b> {
    pub assembler: &'b Assembler<'a>,
    pub basis: &'b PodBasis,
    pub deim: &'b DeimModel,
    pub op: DeimOnlineOp,
    pub seed_reduced: DVector<f64>,
    pub seed_threshold: Option<f64>,
    pub functional: OutputFunctional,
    pub settings: NewtonSettings,
    pub jacobian_kind: DeimJacobian,
}

impl<'a, 'b> DeimProblem<'a, 'b> {
    pub fn new(
        assembler: &'b Assembler<'a>,
        basis: &'b PodBasis,
        deim: &'b DeimModel,
        m: usize,
        jacobian_kind: DeimJacobian,
        seeding: &SeedingPolicy,
        functional: OutputFunctional,
        settings: NewtonSettings,
    ) -> Result<Self> {
        let op = DeimOnlineOp::build(assembler, basis, deim, m, jacobian_kind)?;
        let shape = seeding.shape(assembler.mesh, assembler.dofmap);
        Ok(DeimProblem {
            assembler,
            basis,
            deim,
            op,
            seed_reduced: basis.modes.tr_mul(&shape),
            seed_threshold: Some(seeding.until_output_exceeds),
            functional,
            settings,
            jacobian_kind,
        })
    }

    /// Next sample count for a retry, if the retained modes allow growth.
    fn grown_m(&self) -> Option<usize> {
        let next = (self.op.m + RETRY_INCREMENT).min(self.deim.m_available());
        (next > self.op.m).then_some(next)
    }
}

impl SweepProblem for DeimProblem<'_, '_> {
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
        let backup = state.clone();
        loop {
            let mut system =
                DeimSystem { assembler: self.assembler, op: &mut self.op, mu };
            let attempt = newton_solve(&mut system, state, &self.settings);
            match attempt {
                Ok(report) => return Ok(report),
                Err(Error::NonConvergence { .. }) | Err(Error::SingularJacobian(_)) => {
                    let Some(next) = self.grown_m() else {
                        return attempt;
                    };
                    self.op = DeimOnlineOp::build(
                        self.assembler,
                        self.basis,
                        self.deim,
                        next,
                        self.jacobian_kind,
                    )?;
                    *state = backup.clone();
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn reconstruct(&self, state: &DVector<f64>, mu: f64) -> DVector<f64> {
        let mut u = self.assembler.dofmap.lifting(mu);
        u.gemv(1.0, &self.basis.modes, state, 1.0);
        u
    }

    fn output(&self, u_full: &DVector<f64>) -> f64 {
        self.functional.evaluate(u_full, self.assembler.mesh.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::{BoundaryConditions, DirichletSpec, DofMap};
    use crate::constitutive::{Material, MaterialModel};
    use crate::mesh::{build_beam_2d, BoundaryTag, Mesh};
    use crate::quadrature::QuadratureRule;
    use crate::rom::{branch_errors, ReducedProblem, ReducedSystem};
    use crate::solver::{continuation_sweep, ContinuationPlan, FullOrderProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn compression_bcs() -> BoundaryConditions {
        BoundaryConditions {
            dirichlet: vec![
                BoundaryConditions::clamp(BoundaryTag::DirichletLeft),
                DirichletSpec {
                    tag: BoundaryTag::DirichletRight,
                    mask: [true; 3],
                    base: [0.0; 3],
                    slope: [-1.0, 0.0, 0.0],
                },
            ],
            traction: vec![],
        }
    }

    struct Offline {
        mesh: Mesh,
        bcs: BoundaryConditions,
    }

    struct OfflineData {
        state_snaps: Vec<DVector<f64>>,
        force_snaps: Vec<DVector<f64>>,
        branch: crate::solver::Branch,
    }

    impl Offline {
        fn beam() -> Self {
            Offline { mesh: build_beam_2d(1.0, 0.1, 10, 2).unwrap(), bcs: compression_bcs() }
        }

        fn run(&self, asm: &Assembler, steps: usize, mu_max: f64) -> OfflineData {
            let seeding =
                SeedingPolicy { component: 1, amplitude: 1e-4, until_output_exceeds: 1e-3 };
            let settings = NewtonSettings { abs_tol: 1e-9, ..Default::default() };
            let mut problem = FullOrderProblem::new(
                asm,
                &seeding,
                OutputFunctional::InfNormComponent(1),
                settings,
            );
            problem.capture_forces = true;
            let plan = ContinuationPlan::uniform(0.0, mu_max, steps).unwrap();
            let branch = continuation_sweep(&mut problem, &plan, 1e-3).unwrap();
            assert_eq!(branch.converged_count(), steps);
            OfflineData {
                state_snaps: problem.snapshots,
                force_snaps: problem.force_snapshots,
                branch,
            }
        }
    }

    fn assembler<'a>(
        off: &'a Offline,
        dm: &'a DofMap,
        body: [f64; 3],
    ) -> Assembler<'a> {
        let material = Material::new(MaterialModel::Svk, 1.0e6, 0.3).unwrap();
        Assembler::new(
            &off.mesh,
            dm,
            &off.bcs,
            material,
            body,
            None,
            QuadratureRule::Standard,
        )
        .unwrap()
    }

    #[test]
    fn greedy_indices_are_distinct_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<DVector<f64>> = (0..10)
            .map(|_| DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let set = SnapshotSet::from_columns(30, cols).unwrap();
        let model = deim_build(&set, 1e-6, None).unwrap();
        assert!(model.m_init >= 1 && model.m_init <= model.m_available());
        let mut seen = std::collections::HashSet::new();
        for &p in &model.indices {
            assert!(p < 30);
            assert!(seen.insert(p), "duplicate interpolation DoF {p}");
        }
    }

    #[test]
    fn mode_cap_limits_the_sample_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cols: Vec<DVector<f64>> = (0..12)
            .map(|_| DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let set = SnapshotSet::from_columns(25, cols).unwrap();
        let model = deim_build(&set, 0.0, Some(4)).unwrap();
        assert_eq!(model.m_available(), 4);
        assert!(model.m_init <= 4);
        assert!(deim_build(&set, 0.0, Some(0)).is_err());
    }

    /// The defining interpolation property: any vector in the span of the
    /// first m modes is reproduced exactly from its m sampled entries.
    #[test]
    fn interpolation_is_exact_on_the_mode_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cols: Vec<DVector<f64>> = (0..8)
            .map(|_| DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let set = SnapshotSet::from_columns(40, cols).unwrap();
        let model = deim_build(&set, 0.0, None).unwrap();
        let m = model.m_available().min(6);

        let u_m = model.modes.columns(0, m).into_owned();
        let mut pu = DMatrix::zeros(m, m);
        for (i, &p) in model.indices[..m].iter().enumerate() {
            for j in 0..m {
                pu[(i, j)] = u_m[(p, j)];
            }
        }
        let pu_lu = pu.lu();
        for _ in 0..5 {
            let c = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
            let w = &u_m * &c;
            let sampled = DVector::from_fn(m, |k, _| w[model.indices[k]]);
            let coeffs = pu_lu.solve(&sampled).unwrap();
            let rebuilt = &u_m * coeffs;
            assert!(
                (&rebuilt - &w).amax() < 1e-10 * w.amax().max(1.0),
                "interpolation failed to reproduce a span vector"
            );
        }
    }

    /// With every retained force mode in play, the hyper-reduced residual
    /// agrees with the exact reduced residual at training states.
    #[test]
    fn sampled_residual_matches_projected_residual_on_training_states() {
        let off = Offline::beam();
        let dm = DofMap::build(&off.mesh, &off.bcs).unwrap();
        let asm = assembler(&off, &dm, [0.0, -400.0, 0.0]);
        let data = off.run(&asm, 6, 0.01);

        let states = SnapshotSet::from_columns(dm.n_dofs, data.state_snaps).unwrap();
        let basis = pod_compress(&states, 1e-12).unwrap();
        let forces = SnapshotSet::from_columns(dm.n_dofs, data.force_snaps).unwrap();
        let model = deim_build(&forces, 0.0, None).unwrap();
        let mut op = DeimOnlineOp::build(
            &asm,
            &basis,
            &model,
            model.m_available(),
            DeimJacobian::Analytic,
        )
        .unwrap();

        for point in &data.branch.points {
            let mu = point.mu;
            let homog = dm.homogenize(&point.u, mu);
            let x = basis.modes.tr_mul(&homog);
            let approx = op.residual(&asm, &x, mu).unwrap();
            let mut exact_sys =
                ReducedSystem { assembler: &asm, modes: &basis.modes, mu, force_capture: None };
            let exact = exact_sys.residual(&x).unwrap();
            // Mode retention trims the spectrum at 1e-13 of the largest
            // singular value, so exactness holds relative to that scale (the
            // early Newton iterates carry far larger forces than converged
            // states).
            let scale = model.sigma[0];
            assert!(
                (&approx - &exact).norm() <= 1e-10 * scale,
                "mu {mu}: sampled residual deviates by {:.3e} (scale {scale:.3e})",
                (&approx - &exact).norm()
            );
        }
    }

    #[test]
    fn analytic_and_difference_tangents_agree() {
        let off = Offline::beam();
        let dm = DofMap::build(&off.mesh, &off.bcs).unwrap();
        let asm = assembler(&off, &dm, [0.0, -400.0, 0.0]);
        let data = off.run(&asm, 5, 0.01);

        let states = SnapshotSet::from_columns(dm.n_dofs, data.state_snaps).unwrap();
        let basis = pod_compress(&states, 1e-10).unwrap();
        let forces = SnapshotSet::from_columns(dm.n_dofs, data.force_snaps).unwrap();
        let model = deim_build(&forces, 1e-10, None).unwrap();
        let m = model.m_init.max(4).min(model.m_available());

        let mut analytic =
            DeimOnlineOp::build(&asm, &basis, &model, m, DeimJacobian::Analytic).unwrap();
        let mut fd = DeimOnlineOp::build(
            &asm,
            &basis,
            &model,
            m,
            DeimJacobian::FiniteDifference,
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DVector::from_fn(basis.n_modes(), |_, _| rng.random_range(-1e-3..1e-3));
        let mu = 0.006;
        let ja = analytic.jacobian(&asm, &x, mu).unwrap();
        let jf = fd.jacobian(&asm, &x, mu).unwrap();
        let scale = ja.amax();
        assert!(
            (&ja - &jf).amax() <= 1e-5 * scale,
            "tangent mismatch {:.3e} at scale {scale:.3e}",
            (&ja - &jf).amax()
        );
    }

    /// End-to-end: the hyper-reduced sweep reproduces the plain reduced sweep
    /// while assembling only a strict subset of the mesh.
    #[test]
    fn sampled_sweep_tracks_reduced_sweep() {
        let off = Offline::beam();
        let dm = DofMap::build(&off.mesh, &off.bcs).unwrap();
        let asm = assembler(&off, &dm, [0.0, -300.0, 0.0]);
        let data = off.run(&asm, 8, 0.012);

        let states = SnapshotSet::from_columns(dm.n_dofs, data.state_snaps).unwrap();
        let basis = pod_compress(&states, 1e-9).unwrap();
        let forces = SnapshotSet::from_columns(dm.n_dofs, data.force_snaps).unwrap();
        let model = deim_build(&forces, 1e-9, None).unwrap();

        let seeding =
            SeedingPolicy { component: 1, amplitude: 1e-4, until_output_exceeds: 1e-3 };
        let settings = NewtonSettings { abs_tol: 1e-9, ..Default::default() };
        let plan = ContinuationPlan::uniform(0.0, 0.012, 8).unwrap();

        let mut rb = ReducedProblem::new(
            &asm,
            &basis,
            &seeding,
            OutputFunctional::InfNormComponent(1),
            settings,
        )
        .unwrap();
        let rb_branch = continuation_sweep(&mut rb, &plan, 1e-3).unwrap();

        let mut hyper = DeimProblem::new(
            &asm,
            &basis,
            &model,
            model.m_init,
            DeimJacobian::Analytic,
            &seeding,
            OutputFunctional::InfNormComponent(1),
            settings,
        )
        .unwrap();
        let fraction = hyper.op.support_fraction(&asm);
        assert!(
            fraction < 1.0,
            "sampled assembly must touch a strict subset, got {fraction}"
        );
        let hr_branch = continuation_sweep(&mut hyper, &plan, 1e-3).unwrap();
        assert_eq!(hr_branch.converged_count(), 8);

        let stats = branch_errors(&rb_branch, &hr_branch).unwrap();
        assert!(stats.max_rel_state < 1e-5, "state error {:.3e}", stats.max_rel_state);
        assert!(stats.max_abs_output < 1e-7, "output error {:.3e}", stats.max_abs_output);
    }

    /// Starting from a deliberately crippled sample count, the solve retries
    /// with more samples instead of failing, and keeps the grown operator.
    #[test]
    fn failed_solves_grow_the_sample_set() {
        let off = Offline::beam();
        let dm = DofMap::build(&off.mesh, &off.bcs).unwrap();
        let asm = assembler(&off, &dm, [0.0, -300.0, 0.0]);
        let data = off.run(&asm, 6, 0.01);

        let states = SnapshotSet::from_columns(dm.n_dofs, data.state_snaps).unwrap();
        let basis = pod_compress(&states, 1e-9).unwrap();
        assert!(basis.n_modes() >= 2);
        let forces = SnapshotSet::from_columns(dm.n_dofs, data.force_snaps).unwrap();
        let model = deim_build(&forces, 1e-9, None).unwrap();
        assert!(model.m_available() >= basis.n_modes() + 1);

        let seeding =
            SeedingPolicy { component: 1, amplitude: 1e-4, until_output_exceeds: 1e-3 };
        let settings = NewtonSettings { abs_tol: 1e-9, ..Default::default() };
        // One sample cannot control several reduced directions: the tangent
        // is rank-one and the first solve must fail, triggering growth.
        let mut hyper = DeimProblem::new(
            &asm,
            &basis,
            &model,
            1,
            DeimJacobian::Analytic,
            &seeding,
            OutputFunctional::InfNormComponent(1),
            settings,
        )
        .unwrap();
        let mut state = hyper.initial_state(0.0);
        hyper.prepare(&mut state, 0.004);
        hyper.solve(&mut state, 0.004).unwrap();
        assert!(hyper.op.m > 1, "sample count did not grow");

        // The grown operator's solution agrees with the plain reduced
        // solve; the interpolation defect perturbs the stiff system's root
        // only marginally.
        let mut rb_sys = ReducedSystem { assembler: &asm, modes: &basis.modes, mu: 0.004, force_capture: None };
        let mut x_rb = DVector::zeros(basis.n_modes());
        newton_solve(&mut rb_sys, &mut x_rb, &settings).unwrap();
        let dev = (&state - &x_rb).norm() / x_rb.norm().max(1.0);
        assert!(dev < 1e-5, "hyper-reduced solution off by {dev:.3e}");
    }
}
