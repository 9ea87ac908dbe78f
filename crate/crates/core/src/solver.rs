//! Newton-Kantorovich iteration and natural-parameter continuation.
//!
//! The same sweep loop drives the full-order model, the reduced Galerkin
//! model and the hyper-reduced model through the [`SweepProblem`] trait: a
//! problem exposes its state vector (nodal displacements or reduced
//! coordinates), updates it for a new parameter value, optionally seeds a
//! transverse perturbation, and solves one Newton problem. The sweep records
//! a [`Branch`] of points, rescues non-converged steps by recursive
//! parameter bisection, and detects the buckling onset as the first
//! converged point whose output functional exceeds a threshold.

use nalgebra::DVector;

use crate::assembly::Assembler;
use crate::bc::DofMap;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Termination controls for the Newton loop.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Absolute tolerance on the residual 2-norm (in force units; callers
    /// scale it by a characteristic load).
    pub abs_tol: f64,
    /// Relative tolerance against the first residual of the solve.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Abort when the residual grows beyond this factor of its initial value.
    pub divergence_ratio: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { abs_tol: 1e-9, rel_tol: 1e-10, max_iter: 25, divergence_ratio: 1e4 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Residual norms per iteration, capped storage (first entry = initial).
    pub history: [f64; 32],
    pub history_len: usize,
}

/// A nonlinear system in some coordinate system: residual evaluation and one
/// linearized solve.
pub trait NonlinearSystem {
    fn residual(&mut self, state: &DVector<f64>) -> Result<DVector<f64>>;
    /// Solves J(state) delta = residual.
    fn newton_step(&mut self, state: &DVector<f64>, residual: &DVector<f64>)
        -> Result<DVector<f64>>;
}

/// Newton iteration: state <- state - J^{-1} G until the residual norm drops
/// under `max(abs_tol, rel_tol * |G_0|)`. The state is updated in place; on
/// failure it holds the last iterate.
pub fn newton_solve(
    system: &mut dyn NonlinearSystem,
    state: &mut DVector<f64>,
    settings: &NewtonSettings,
) -> Result<NewtonReport> {
    let mut report = NewtonReport {
        iterations: 0,
        final_residual: f64::INFINITY,
        history: [0.0; 32],
        history_len: 0,
    };
    let mut g = system.residual(state)?;
    let r0 = g.norm();
    let tol = settings.abs_tol.max(settings.rel_tol * r0);
    let push = |report: &mut NewtonReport, r: f64| {
        if report.history_len < report.history.len() {
            report.history[report.history_len] = r;
            report.history_len += 1;
        }
    };
    push(&mut report, r0);

    let mut r = r0;
    loop {
        if !r.is_finite() {
            return Err(Error::NonConvergence { iters: report.iterations, last_residual: r });
        }
        if r <= tol {
            report.final_residual = r;
            return Ok(report);
        }
        if report.iterations >= settings.max_iter {
            return Err(Error::NonConvergence { iters: report.iterations, last_residual: r });
        }
        if r > settings.divergence_ratio * (r0 + settings.abs_tol) {
            return Err(Error::NonConvergence { iters: report.iterations, last_residual: r });
        }
        let delta = system.newton_step(state, &g)?;
        *state -= &delta;
        report.iterations += 1;
        g = system.residual(state)?;
        r = g.norm();
        push(&mut report, r);
    }
}

/// Uniform continuation grid: `count` points `mu_min + j * delta`,
/// j = 1..=count, with `delta = (mu_max - mu_min) / count`. The sweep warm
/// starts from the state at `mu_min`.
#[derive(Debug, Clone)]
pub struct ContinuationPlan {
    pub mu_base: f64,
    pub mus: Vec<f64>,
}

impl ContinuationPlan {
    pub fn uniform(mu_min: f64, mu_max: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Continuation("continuation plan needs at least one step".into()));
        }
        if !(mu_max > mu_min) {
            return Err(Error::Continuation(format!(
                "parameter range is empty: [{mu_min}, {mu_max}]"
            )));
        }
        let delta = (mu_max - mu_min) / count as f64;
        let mus = (1..=count).map(|j| mu_min + j as f64 * delta).collect();
        Ok(ContinuationPlan { mu_base: mu_min, mus })
    }

    pub fn delta(&self) -> f64 {
        if self.mus.len() > 1 {
            self.mus[1] - self.mus[0]
        } else {
            self.mus[0] - self.mu_base
        }
    }
}

/// Scalar diagram output s(u).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFunctional {
    /// max_i |u_component(i)| over all nodes.
    InfNormComponent(usize),
    /// max |u_x| + max |u_y| (tube buckling indicator).
    SumInfNormXY,
}

impl OutputFunctional {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            OutputFunctional::InfNormComponent(c) if *c >= dim => Err(Error::Config(format!(
                "output functional component {c} out of range for dimension {dim}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, u: &DVector<f64>, dim: usize) -> f64 {
        let n_nodes = u.len() / dim;
        match self {
            OutputFunctional::InfNormComponent(c) => {
                (0..n_nodes).map(|n| u[n * dim + c].abs()).fold(0.0, f64::max)
            }
            OutputFunctional::SumInfNormXY => {
                let mx = (0..n_nodes).map(|n| u[n * dim].abs()).fold(0.0, f64::max);
                let my = (0..n_nodes).map(|n| u[n * dim + 1].abs()).fold(0.0, f64::max);
                mx + my
            }
        }
    }
}

/// Transverse perturbation added to the initial guess while the branch is
/// still unbuckled, to break the symmetry of the trivial branch at pitchfork
/// points. The shape is a half sine wave along the compression axis.
#[derive(Debug, Clone)]
pub struct SeedingPolicy {
    /// Displacement component receiving the perturbation.
    pub component: usize,
    /// Peak amplitude (signed; the sign selects the branch).
    pub amplitude: f64,
    /// Seed only while the previous recorded |s| stays below this.
    pub until_output_exceeds: f64,
}

impl SeedingPolicy {
    /// Nodal perturbation vector: amplitude * sin(pi (x - lo)/(hi - lo)) on
    /// the chosen component, zeroed at constrained DoFs so prescribed values
    /// stay exact.
    pub fn shape(&self, mesh: &Mesh, dofmap: &DofMap) -> DVector<f64> {
        let (lo, hi) = mesh.axis_extent;
        let span = hi - lo;
        let mut v = DVector::zeros(dofmap.n_dofs);
        for n in 0..mesh.n_nodes() {
            let t = (mesh.node(n)[mesh.axis] - lo) / span;
            let dof = n * mesh.dim + self.component;
            if !dofmap.constrained[dof] {
                v[dof] = self.amplitude * (std::f64::consts::PI * t).sin();
            }
        }
        v
    }
}

/// One recorded continuation point. `state` is the full displacement vector
/// (reduced problems reconstruct before recording).
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub mu: f64,
    pub u: DVector<f64>,
    pub s: f64,
    pub newton_iters: usize,
    pub converged: bool,
}

/// A full sweep: points in grid order plus the detected onset.
#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub critical_mu: Option<f64>,
    pub detection_threshold: f64,
}

impl Branch {
    /// Smallest converged parameter whose output exceeds the threshold.
    pub fn detect_critical(points: &[BranchPoint], threshold: f64) -> Option<f64> {
        points
            .iter()
            .find(|p| p.converged && p.s > threshold)
            .map(|p| p.mu)
    }

    pub fn converged_count(&self) -> usize {
        self.points.iter().filter(|p| p.converged).count()
    }
}

/// What the continuation loop needs from a model (full, reduced or
/// hyper-reduced): state preparation per parameter, seeding, one nonlinear
/// solve, and reconstruction for recording.
pub trait SweepProblem {
    /// State at the warm-start parameter `mu_base` (usually zeros in
    /// homogenized/reduced coordinates, the lifting in full coordinates).
    fn initial_state(&mut self, mu: f64) -> DVector<f64>;
    /// Updates parameter-dependent parts of the state (prescribed values in
    /// full coordinates; no-op for reduced coordinates).
    fn prepare(&mut self, state: &mut DVector<f64>, mu: f64);
    /// Adds the branch-selection perturbation in this problem's coordinates.
    fn seed(&self, state: &mut DVector<f64>);
    /// Seeding threshold on |s| (applied while the previous point is below it).
    fn seed_threshold(&self) -> Option<f64>;
    /// Solves the nonlinear problem at `mu`, updating `state` in place.
    fn solve(&mut self, state: &mut DVector<f64>, mu: f64) -> Result<NewtonReport>;
    /// Full displacement vector for recording/output.
    fn reconstruct(&self, state: &DVector<f64>, mu: f64) -> DVector<f64>;
    fn output(&self, u_full: &DVector<f64>) -> f64;
    /// Called once per converged grid point (not for rescue sub-steps);
    /// snapshot collectors hook in here.
    fn accept(&mut self, _state: &DVector<f64>, _mu: f64) {}
}

/// Maximum recursive bisection depth when a step fails to converge.
const MAX_RESCUE_DEPTH: usize = 4;

/// Runs natural-parameter continuation over the plan. Non-converged steps
/// (after sub-step rescue) are recorded with `converged = false` and the
/// sweep resumes from the last converged state. A first step that fails even
/// after rescue aborts the sweep.
pub fn continuation_sweep(
    problem: &mut dyn SweepProblem,
    plan: &ContinuationPlan,
    detection_threshold: f64,
) -> Result<Branch> {
    let mut points: Vec<BranchPoint> = Vec::with_capacity(plan.mus.len());
    let mut state = problem.initial_state(plan.mu_base);
    let mut mu_prev = plan.mu_base;
    let mut s_prev = 0.0f64;

    for (j, &mu) in plan.mus.iter().enumerate() {
        let mut trial = state.clone();
        problem.prepare(&mut trial, mu);
        if let Some(threshold) = problem.seed_threshold() {
            if s_prev.abs() < threshold {
                problem.seed(&mut trial);
            }
        }

        match solve_with_rescue(problem, &mut trial, mu_prev, mu, MAX_RESCUE_DEPTH) {
            Ok(report) => {
                problem.accept(&trial, mu);
                let u_full = problem.reconstruct(&trial, mu);
                let s = problem.output(&u_full);
                points.push(BranchPoint {
                    mu,
                    u: u_full,
                    s,
                    newton_iters: report.iterations,
                    converged: true,
                });
                state = trial;
                mu_prev = mu;
                s_prev = s;
            }
            Err(Error::NonConvergence { iters, last_residual }) => {
                if j == 0 {
                    return Err(Error::Continuation(format!(
                        "first continuation step at mu = {mu} failed \
                         (residual {last_residual:.3e} after {iters} iterations)"
                    )));
                }
                let u_full = problem.reconstruct(&trial, mu);
                let s = problem.output(&u_full);
                points.push(BranchPoint { mu, u: u_full, s, newton_iters: iters, converged: false });
                // Continue from the last converged state.
            }
            Err(other) => return Err(other),
        }
    }

    let critical_mu = Branch::detect_critical(&points, detection_threshold);
    Ok(Branch { points, critical_mu, detection_threshold })
}

/// The assembled finite-element problem as a [`NonlinearSystem`] over nodal
/// displacements. Optionally records the internal-force vector of every
/// residual evaluation, which is the training data for hyper-reduction.
pub struct FullOrderSystem<'a, 'b> {
    pub assembler: &'b Assembler<'a>,
    pub mu: f64,
    pub force_capture: Option<&'b mut Vec<DVector<f64>>>,
}

impl NonlinearSystem for FullOrderSystem<'_, '_> {
    fn residual(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let f_int = self.assembler.internal_force(u)?;
        if let Some(capture) = self.force_capture.as_deref_mut() {
            capture.push(f_int.clone());
        }
        let mut g = f_int;
        g -= self.assembler.body_load();
        let (base, slope) = self.assembler.traction_load();
        g -= base;
        g.axpy(-self.mu, slope, 1.0);
        self.assembler.dofmap.zero_constrained(&mut g);
        Ok(g)
    }

    fn newton_step(
        &mut self,
        u: &DVector<f64>,
        residual: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.assembler.jacobian(u)?.solve(residual)
    }
}

/// Full-order continuation problem: the state is the nodal displacement
/// vector including prescribed values. Converged grid points are stored
/// homogenized in `snapshots`; with `capture_forces` set, every Newton
/// iterate's internal force lands in `force_snapshots`.
pub struct FullOrderProblem<'a, 'b> {
    pub assembler: &'b Assembler<'a>,
    pub seed_shape: DVector<f64>,
    pub seed_threshold: Option<f64>,
    pub functional: OutputFunctional,
    pub settings: NewtonSettings,
    pub capture_forces: bool,
    pub snapshots: Vec<DVector<f64>>,
    pub force_snapshots: Vec<DVector<f64>>,
}

impl<'a, 'b> FullOrderProblem<'a, 'b> {
    pub fn new(
        assembler: &'b Assembler<'a>,
        seeding: &SeedingPolicy,
        functional: OutputFunctional,
        settings: NewtonSettings,
    ) -> Self {
        let seed_shape = seeding.shape(assembler.mesh, assembler.dofmap);
        FullOrderProblem {
            assembler,
            seed_shape,
            seed_threshold: Some(seeding.until_output_exceeds),
            functional,
            settings,
            capture_forces: false,
            snapshots: Vec::new(),
            force_snapshots: Vec::new(),
        }
    }
}

impl SweepProblem for FullOrderProblem<'_, '_> {
    fn initial_state(&mut self, mu: f64) -> DVector<f64> {
        self.assembler.dofmap.lifting(mu)
    }

    fn prepare(&mut self, state: &mut DVector<f64>, mu: f64) {
        self.assembler.dofmap.apply_values(state, mu);
    }

    fn seed(&self, state: &mut DVector<f64>) {
        *state += &self.seed_shape;
    }

    fn seed_threshold(&self) -> Option<f64> {
        self.seed_threshold
    }

    fn solve(&mut self, state: &mut DVector<f64>, mu: f64) -> Result<NewtonReport> {
        let mut system = FullOrderSystem {
            assembler: self.assembler,
            mu,
            force_capture: self.capture_forces.then_some(&mut self.force_snapshots),
        };
        newton_solve(&mut system, state, &self.settings)
    }

    fn reconstruct(&self, state: &DVector<f64>, _mu: f64) -> DVector<f64> {
        state.clone()
    }

    fn output(&self, u_full: &DVector<f64>) -> f64 {
        self.functional.evaluate(u_full, self.assembler.mesh.dim)
    }

    fn accept(&mut self, state: &DVector<f64>, mu: f64) {
        self.snapshots.push(self.assembler.dofmap.homogenize(state, mu));
    }
}

/// Tries the step directly; on non-convergence, solves an intermediate
/// parameter first (recursively, halving the interval up to `depth` times).
/// Intermediate solutions only improve the warm start and are not recorded.
fn solve_with_rescue(
    problem: &mut dyn SweepProblem,
    state: &mut DVector<f64>,
    mu_from: f64,
    mu_to: f64,
    depth: usize,
) -> Result<NewtonReport> {
    let backup = state.clone();
    match problem.solve(state, mu_to) {
        Ok(report) => Ok(report),
        Err(Error::NonConvergence { .. }) if depth > 0 => {
            *state = backup;
            let mid = 0.5 * (mu_from + mu_to);
            problem.prepare(state, mid);
            solve_with_rescue(problem, state, mu_from, mid, depth - 1)?;
            problem.prepare(state, mu_to);
            solve_with_rescue(problem, state, mid, mu_to, depth - 1)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::{BoundaryConditions, DirichletSpec};
    use crate::constitutive::{Material, MaterialModel};
    use crate::mesh::{build_beam_2d, BoundaryTag};
    use crate::quadrature::QuadratureRule;
    use approx::assert_relative_eq;

    /// Scalar cubic y^3 + y - c(mu) = 0 solved through the trait; checks the
    /// Newton loop, warm starting and rescue logic without FE machinery.
    struct Cubic {
        c: f64,
        settings: NewtonSettings,
    }

    impl NonlinearSystem for Cubic {
        fn residual(&mut self, state: &DVector<f64>) -> Result<DVector<f64>> {
            let y = state[0];
            Ok(DVector::from_vec(vec![y * y * y + y - self.c]))
        }
        fn newton_step(
            &mut self,
            state: &DVector<f64>,
            residual: &DVector<f64>,
        ) -> Result<DVector<f64>> {
            let y = state[0];
            Ok(DVector::from_vec(vec![residual[0] / (3.0 * y * y + 1.0)]))
        }
    }

    struct CubicSweep {
        settings: NewtonSettings,
    }

    impl SweepProblem for CubicSweep {
        fn initial_state(&mut self, _mu: f64) -> DVector<f64> {
            DVector::zeros(1)
        }
        fn prepare(&mut self, _state: &mut DVector<f64>, _mu: f64) {}
        fn seed(&self, _state: &mut DVector<f64>) {}
        fn seed_threshold(&self) -> Option<f64> {
            None
        }
        fn solve(&mut self, state: &mut DVector<f64>, mu: f64) -> Result<NewtonReport> {
            let mut sys = Cubic { c: mu, settings: self.settings };
            let settings = sys.settings;
            newton_solve(&mut sys, state, &settings)
        }
        fn reconstruct(&self, state: &DVector<f64>, _mu: f64) -> DVector<f64> {
            state.clone()
        }
        fn output(&self, u: &DVector<f64>) -> f64 {
            u[0].abs()
        }
    }

    #[test]
    fn newton_converges_quadratically_on_cubic() {
        let mut sys = Cubic { c: 10.0, settings: NewtonSettings::default() };
        let settings = NewtonSettings { abs_tol: 1e-12, rel_tol: 0.0, ..Default::default() };
        let mut state = DVector::from_vec(vec![5.0]);
        let report = newton_solve(&mut sys, &mut state, &settings).unwrap();
        assert!(report.final_residual <= 1e-12);
        // y^3 + y = 10 has root 2.
        assert_relative_eq!(state[0], 2.0, epsilon = 1e-10);
        // Quadratic tail: fitted order over the last usable triple >= 1.8.
        let h = &report.history[..report.history_len];
        let n = h.len();
        assert!(n >= 4);
        let (r2, r1, r0) = (h[n - 2], h[n - 3], h[n - 4]);
        let order = (r2 / r1).ln() / (r1 / r0).ln();
        assert!(order >= 1.8, "observed order {order}");
    }

    #[test]
    fn newton_accepts_existing_root_without_iterating() {
        let mut sys = Cubic { c: 10.0, settings: NewtonSettings::default() };
        let settings = NewtonSettings::default();
        let mut state = DVector::from_vec(vec![2.0]);
        let report = newton_solve(&mut sys, &mut state, &settings).unwrap();
        assert!(report.iterations <= 1);
    }

    #[test]
    fn newton_reports_nonconvergence() {
        // x^2 + 1 = 0 has no real root; Newton oscillates.
        struct NoRoot;
        impl NonlinearSystem for NoRoot {
            fn residual(&mut self, state: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::from_vec(vec![state[0] * state[0] + 1.0]))
            }
            fn newton_step(
                &mut self,
                state: &DVector<f64>,
                residual: &DVector<f64>,
            ) -> Result<DVector<f64>> {
                let d = 2.0 * state[0];
                if d.abs() < 1e-14 {
                    return Err(Error::SingularJacobian("flat point".into()));
                }
                Ok(DVector::from_vec(vec![residual[0] / d]))
            }
        }
        let mut state = DVector::from_vec(vec![0.7]);
        let err = newton_solve(&mut NoRoot, &mut state, &NewtonSettings::default());
        assert!(matches!(
            err,
            Err(Error::NonConvergence { .. }) | Err(Error::SingularJacobian(_))
        ));
    }

    #[test]
    fn singular_jacobian_is_propagated_not_silenced() {
        struct Singular;
        impl NonlinearSystem for Singular {
            fn residual(&mut self, state: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::from_vec(vec![state[0] + 1.0]))
            }
            fn newton_step(
                &mut self,
                _state: &DVector<f64>,
                _residual: &DVector<f64>,
            ) -> Result<DVector<f64>> {
                Err(Error::SingularJacobian("zero pivot".into()))
            }
        }
        let mut state = DVector::zeros(1);
        assert!(matches!(
            newton_solve(&mut Singular, &mut state, &NewtonSettings::default()),
            Err(Error::SingularJacobian(_))
        ));
    }

    #[test]
    fn plan_rejects_empty_ranges() {
        assert!(ContinuationPlan::uniform(0.2, 0.2, 10).is_err());
        assert!(ContinuationPlan::uniform(0.3, 0.2, 10).is_err());
        assert!(ContinuationPlan::uniform(0.0, 0.2, 0).is_err());
    }

    #[test]
    fn plan_grid_is_uniform_and_excludes_base() {
        let plan = ContinuationPlan::uniform(0.0, 0.2, 200).unwrap();
        assert_eq!(plan.mus.len(), 200);
        assert_relative_eq!(plan.delta(), 1e-3, epsilon = 1e-15);
        assert_relative_eq!(plan.mus[0], 1e-3, epsilon = 1e-15);
        assert_relative_eq!(*plan.mus.last().unwrap(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn sweep_records_all_points_in_order() {
        let mut problem = CubicSweep { settings: NewtonSettings::default() };
        let plan = ContinuationPlan::uniform(0.0, 5.0, 25).unwrap();
        let branch = continuation_sweep(&mut problem, &plan, 1.1).unwrap();
        assert_eq!(branch.points.len(), 25);
        assert!(branch.points.iter().all(|p| p.converged));
        // Monotone growth of the output along this single stable branch.
        for w in branch.points.windows(2) {
            assert!(w[1].s >= w[0].s);
        }
        // Critical detection: the root of y^3 + y = mu crosses 1.1 at
        // mu = 2.431, between the grid values 2.4 (root 1.0933) and
        // 2.6 (root 1.1356), so detection must fire exactly at 2.6.
        let expected = branch.points.iter().find(|p| p.s > 1.1).unwrap().mu;
        assert_eq!(branch.critical_mu, Some(expected));
        assert_relative_eq!(expected, 2.6, epsilon = 1e-12);
    }

    /// Full-order sweep on a small pre-buckling beam: every step converges,
    /// the end shortening follows the prescribed value, and the capture hooks
    /// fill up (one state snapshot per grid point, several force iterates).
    #[test]
    fn full_order_sweep_converges_and_captures() {
        let mesh = build_beam_2d(1.0, 0.1, 8, 2).unwrap();
        let bcs = BoundaryConditions {
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
        };
        let dm = DofMap::build(&mesh, &bcs).unwrap();
        let material = Material::new(MaterialModel::Svk, 1.0e6, 0.3).unwrap();
        let asm = Assembler::new(
            &mesh,
            &dm,
            &bcs,
            material,
            [0.0; 3],
            None,
            QuadratureRule::Standard,
        )
        .unwrap();
        let seeding =
            SeedingPolicy { component: 1, amplitude: 1e-4, until_output_exceeds: 1e-3 };
        let settings = NewtonSettings { abs_tol: 1e-6, ..Default::default() };
        let mut problem = FullOrderProblem::new(
            &asm,
            &seeding,
            OutputFunctional::InfNormComponent(1),
            settings,
        );
        problem.capture_forces = true;
        let plan = ContinuationPlan::uniform(0.0, 0.01, 4).unwrap();
        let branch = continuation_sweep(&mut problem, &plan, 1e-3).unwrap();

        assert_eq!(branch.converged_count(), 4);
        let (_, x_end) = mesh.axis_extent;
        for (point, &mu) in branch.points.iter().zip(&plan.mus) {
            // Prescribed end shortening is reproduced exactly in the state.
            for n in 0..mesh.n_nodes() {
                if mesh.node(n)[0] == x_end {
                    assert_eq!(point.u[2 * n], -mu);
                }
            }
        }
        assert_eq!(problem.snapshots.len(), 4);
        assert!(problem.force_snapshots.len() >= 8);
        // Homogenized snapshots carry no prescribed values.
        for snap in &problem.snapshots {
            for &(dof, _, _) in &dm.prescribed {
                assert_eq!(snap[dof], 0.0);
            }
        }
    }

    #[test]
    fn functional_kinds_and_validation() {
        let u = DVector::from_vec(vec![1.0, -3.0, 2.0, 0.5]);
        assert_eq!(OutputFunctional::InfNormComponent(1).evaluate(&u, 2), 3.0);
        assert_eq!(OutputFunctional::InfNormComponent(0).evaluate(&u, 2), 2.0);
        assert_eq!(OutputFunctional::SumInfNormXY.evaluate(&u, 2), 5.0);
        assert!(OutputFunctional::InfNormComponent(2).validate(2).is_err());
        assert!(OutputFunctional::InfNormComponent(2).validate(3).is_ok());
    }

    /// A sweep whose problem fails beyond a parameter cap but recovers by
    /// sub-stepping when the jump from the last converged state is halved.
    struct FragileSweep {
        /// Fails when |mu - state| jump is larger than this.
        max_jump: f64,
    }

    impl SweepProblem for FragileSweep {
        fn initial_state(&mut self, mu: f64) -> DVector<f64> {
            DVector::from_vec(vec![mu])
        }
        fn prepare(&mut self, _state: &mut DVector<f64>, _mu: f64) {}
        fn seed(&self, _state: &mut DVector<f64>) {}
        fn seed_threshold(&self) -> Option<f64> {
            None
        }
        fn solve(&mut self, state: &mut DVector<f64>, mu: f64) -> Result<NewtonReport> {
            if (mu - state[0]).abs() > self.max_jump {
                return Err(Error::NonConvergence { iters: 25, last_residual: 1.0 });
            }
            state[0] = mu;
            Ok(NewtonReport {
                iterations: 1,
                final_residual: 0.0,
                history: [0.0; 32],
                history_len: 1,
            })
        }
        fn reconstruct(&self, state: &DVector<f64>, _mu: f64) -> DVector<f64> {
            state.clone()
        }
        fn output(&self, u: &DVector<f64>) -> f64 {
            u[0]
        }
    }

    #[test]
    fn rescue_substepping_recovers_large_steps() {
        // Step size 0.1 exceeds the 0.03 cap, but 4 bisections bring the
        // sub-step to 0.00625 < 0.03.
        let mut problem = FragileSweep { max_jump: 0.03 };
        let plan = ContinuationPlan::uniform(0.0, 1.0, 10).unwrap();
        let branch = continuation_sweep(&mut problem, &plan, f64::INFINITY).unwrap();
        assert_eq!(branch.converged_count(), 10);
    }

    #[test]
    fn failed_steps_are_recorded_and_sweep_continues() {
        // Cap below what rescue can reach: every step fails, but the sweep
        // still records them all... except the first, which aborts.
        let mut problem = FragileSweep { max_jump: 1e-9 };
        let plan = ContinuationPlan::uniform(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            continuation_sweep(&mut problem, &plan, 1.0),
            Err(Error::Continuation(_))
        ));

        // With a cap that lets only the first steps through, later failures
        // are recorded as non-converged and the sweep completes.
        struct CapAfter {
            inner: FragileSweep,
            fail_above: f64,
        }
        impl SweepProblem for CapAfter {
            fn initial_state(&mut self, mu: f64) -> DVector<f64> {
                self.inner.initial_state(mu)
            }
            fn prepare(&mut self, state: &mut DVector<f64>, mu: f64) {
                self.inner.prepare(state, mu)
            }
            fn seed(&self, state: &mut DVector<f64>) {
                self.inner.seed(state)
            }
            fn seed_threshold(&self) -> Option<f64> {
                None
            }
            fn solve(&mut self, state: &mut DVector<f64>, mu: f64) -> Result<NewtonReport> {
                if mu > self.fail_above {
                    return Err(Error::NonConvergence { iters: 25, last_residual: 1.0 });
                }
                self.inner.solve(state, mu)
            }
            fn reconstruct(&self, state: &DVector<f64>, mu: f64) -> DVector<f64> {
                self.inner.reconstruct(state, mu)
            }
            fn output(&self, u: &DVector<f64>) -> f64 {
                self.inner.output(u)
            }
        }
        let mut problem = CapAfter { inner: FragileSweep { max_jump: 10.0 }, fail_above: 0.55 };
        let plan = ContinuationPlan::uniform(0.0, 1.0, 10).unwrap();
        let branch = continuation_sweep(&mut problem, &plan, f64::INFINITY).unwrap();
        assert_eq!(branch.points.len(), 10);
        assert_eq!(branch.converged_count(), 5);
        assert!(branch.points[5..].iter().all(|p| !p.converged));
    }
}
