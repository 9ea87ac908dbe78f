//! Study orchestration: the offline phase (training sweeps, compression,
//! persistence), the online phase (reduced and sampled sweeps, diagrams,
//! error studies), diagram comparison and mesh export.
//!
//! File layout under the output directory, all prefixed with the scenario
//! name: `<name>_model.bin` (offline products), `<name>_spectrum.csv`,
//! `<name>_offline_<case>.csv` (training branches), `<name>_diagram.csv`
//! (all online branches), `<name>_diagram.svg`, `<name>_online_<case>*.csv`
//! (per-case branches and error tables) and `report.txt` (appended across
//! runs). CSV content depends only on the scenario, so repeated runs write
//! byte-identical tables; timings live in the report only.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::artifacts::{mesh_fingerprint, Artifacts};
use crate::assembly::Assembler;
use crate::deim::{deim_build, DeimProblem};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::report::{
    append_report, branch_csv, compare_tables, diagram_svg, errors_csv, spectrum_csv,
    CompareSummary, DiagramTable, SvgSeries,
};
use crate::rom::{branch_errors, pod_compress, ErrorStats, ReducedProblem, SnapshotSet};
use crate::scenario::{BuiltScenario, CaseSpec, GeometryConfig, Scenario};
use crate::solver::{continuation_sweep, Branch, FullOrderProblem};

/// Products of the offline phase, mirrored on disk.
pub struct OfflineOutputs {
    pub artifacts: Artifacts,
    /// (case label, training branch) in case order.
    pub branches: Vec<(String, Branch)>,
    pub snapshot_count: usize,
    pub force_snapshot_count: usize,
    pub seconds: f64,
    pub artifact_path: PathBuf,
}

/// Online results for one parameter case.
pub struct CaseOutputs {
    pub label: String,
    pub reduced: Branch,
    /// Hyper-reduced branch, when force interpolation is configured.
    pub sampled: Option<Branch>,
    /// Full-order branch on the online grid, when comparison is enabled.
    pub reference: Option<Branch>,
    pub reduced_errors: Option<ErrorStats>,
    pub sampled_errors: Option<ErrorStats>,
    pub reduced_seconds: f64,
    pub sampled_seconds: Option<f64>,
    pub reference_seconds: Option<f64>,
    /// Final interpolated-mode count of the online operator (growth included).
    pub sampled_m: Option<usize>,
    /// Final sampled-row count of the online operator.
    pub sampled_rows: Option<usize>,
    /// Fraction of elements the sampled operator assembles over.
    pub support_fraction: Option<f64>,
}

/// Products of the online phase.
pub struct OnlineOutputs {
    pub cases: Vec<CaseOutputs>,
    pub basis_dim: usize,
    pub diagram_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Canonical location of a scenario's persisted offline products.
pub fn artifact_path(scenario: &Scenario, out_dir: &Path) -> PathBuf {
    out_dir.join(format!("{}_model.bin", scenario.name))
}

fn report_path(out_dir: &Path) -> PathBuf {
    out_dir.join("report.txt")
}

/// Keeps letters, digits, '.', '-' and '_'; everything else becomes '-'.
fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '-' })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}

fn case_assembler<'a>(built: &'a BuiltScenario, case: &'a CaseSpec) -> Result<Assembler<'a>> {
    Assembler::new(
        &built.mesh,
        &built.dofmap,
        &built.bcs,
        case.material,
        built.config.loading.body_force,
        case.geo.as_ref(),
        built.rule,
    )
}

fn critical_label(critical: Option<f64>) -> String {
    match critical {
        Some(mu) => format!("mu* = {mu}"),
        None => "no onset detected".into(),
    }
}

fn converged_count(branch: &Branch) -> usize {
    branch.points.iter().filter(|p| p.converged).count()
}

/// Runs every training sweep, compresses the snapshots, persists the offline
/// products and appends a phase summary to the report.
pub fn run_offline(scenario: &Scenario, out_dir: &Path) -> Result<OfflineOutputs> {
    let built = scenario.build()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(format!("creating {}: {e}", out_dir.display())))?;
    let start = Instant::now();

    let n_dofs = built.dofmap.n_dofs;
    let mut snapshots = SnapshotSet::new(n_dofs);
    let mut branches = Vec::new();
    for case in &built.offline_cases {
        let assembler = case_assembler(&built, case)?;
        let mut problem = FullOrderProblem::new(
            &assembler,
            &built.seeding,
            built.functional,
            built.settings,
        );
        let branch = continuation_sweep(
            &mut problem,
            &built.offline_plan,
            scenario.detection.threshold,
        )?;
        snapshots.extend(&problem.snapshots)?;
        branches.push((case.label.clone(), branch));
    }

    let basis = pod_compress(&snapshots, scenario.reduction.eps_pod)?;

    // Force-interpolation training replays the sweeps with the reduced model
    // so the recorded forces live on the reduced manifold (lifting + V x,
    // projected seeds included). Forces at unreduced states are useless here:
    // the stiffness is large enough that the tiny state gap between the two
    // manifolds swamps the force components the interpolation must resolve.
    let mut forces = SnapshotSet::new(n_dofs);
    let deim = match &scenario.reduction.deim {
        Some(cfg) => {
            for case in &built.offline_cases {
                let assembler = case_assembler(&built, case)?;
                let mut problem = ReducedProblem::new(
                    &assembler,
                    &basis,
                    &built.seeding,
                    built.functional,
                    built.settings,
                )?;
                problem.capture_forces = true;
                continuation_sweep(
                    &mut problem,
                    &built.offline_plan,
                    scenario.detection.threshold,
                )?;
                forces.extend(&problem.force_snapshots)?;
            }
            Some(deim_build(&forces, cfg.eps, cfg.max_modes)?)
        }
        None => None,
    };
    let force_snapshot_count = forces.len();
    let snapshot_count = snapshots.len();
    let artifacts = Artifacts {
        fingerprint: mesh_fingerprint(&built.mesh),
        basis,
        deim,
        snapshots: Some(snapshots),
    };
    let path = artifact_path(scenario, out_dir);
    artifacts.save(&path)?;

    write_text(
        &out_dir.join(format!("{}_spectrum.csv", scenario.name)),
        &spectrum_csv(&artifacts.basis.sigma),
    )?;
    for (label, branch) in &branches {
        write_text(
            &out_dir.join(format!("{}_offline_{}.csv", scenario.name, sanitize(label))),
            &branch_csv(branch),
        )?;
    }

    let seconds = start.elapsed().as_secs_f64();
    let mut text = format!(
        "== offline: {} ==\nmesh: dim {}, {} nodes, {} elements, {} unknowns ({} free)\n",
        scenario.name,
        built.mesh.dim,
        built.mesh.n_nodes(),
        built.mesh.n_elements(),
        built.dofmap.n_dofs,
        built.dofmap.n_free(),
    );
    text.push_str(&format!(
        "training: {} sweep(s) over {} grid points in [{}, {}]\n",
        built.offline_cases.len(),
        built.offline_plan.mus.len(),
        built.offline_plan.mus.first().copied().unwrap_or(f64::NAN),
        built.offline_plan.mus.last().copied().unwrap_or(f64::NAN),
    ));
    text.push_str(&format!(
        "snapshots: {snapshot_count} states, {force_snapshot_count} force iterates\n"
    ));
    text.push_str(&format!(
        "basis: N = {} (eps = {}), discarded energy fraction {:.3e}\n",
        artifacts.basis.n_modes(),
        artifacts.basis.eps,
        artifacts.basis.discarded_energy_fraction(),
    ));
    if let Some(deim) = &artifacts.deim {
        text.push_str(&format!(
            "force interpolation: m = {} of {} retained modes\n",
            deim.m_init,
            deim.m_available(),
        ));
    }
    for (label, branch) in &branches {
        text.push_str(&format!(
            "  {label}: {}, {}/{} converged\n",
            critical_label(branch.critical_mu),
            converged_count(branch),
            branch.points.len(),
        ));
    }
    if let Some(dt) = diameter_to_thickness(scenario) {
        text.push_str(&format!("tube diameter-to-thickness: {dt:.2}\n"));
    }
    text.push_str(&format!("wall time: {seconds:.2} s\n\n"));
    append_report(&report_path(out_dir), &text)?;

    Ok(OfflineOutputs {
        artifacts,
        branches,
        snapshot_count,
        force_snapshot_count,
        seconds,
        artifact_path: path,
    })
}

/// Outer diameter over wall thickness, for tube scenarios only.
pub fn diameter_to_thickness(scenario: &Scenario) -> Option<f64> {
    match scenario.geometry {
        GeometryConfig::Tube { r_inner, r_outer, .. } => {
            Some(2.0 * r_outer / (r_outer - r_inner))
        }
        _ => None,
    }
}

/// Runs the reduced (and, when configured, sampled and full-order) sweeps
/// for every online case, writes the diagram CSV/SVG and per-case tables,
/// and appends a phase summary to the report.
pub fn run_online(
    scenario: &Scenario,
    artifacts: &Artifacts,
    out_dir: &Path,
) -> Result<OnlineOutputs> {
    let built = scenario.build()?;
    artifacts.verify_mesh(&built.mesh)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(format!("creating {}: {e}", out_dir.display())))?;
    let start = Instant::now();

    let has_geometry = scenario.geometry_map.is_some();
    let has_material = scenario.material.young_range.is_some()
        || scenario.material.poisson_range.is_some()
        || !scenario.material.online_pairs.is_empty();
    let mut diagram = DiagramTable::new(has_geometry, has_material);
    let mut cases = Vec::new();

    for case in &built.online_cases {
        let assembler = case_assembler(&built, case)?;
        let threshold = scenario.detection.threshold;

        let t = Instant::now();
        let mut reduced_problem = ReducedProblem::new(
            &assembler,
            &artifacts.basis,
            &built.seeding,
            built.functional,
            built.settings,
        )?;
        let reduced = continuation_sweep(&mut reduced_problem, &built.online_plan, threshold)?;
        let reduced_seconds = t.elapsed().as_secs_f64();

        let mut sampled = None;
        let mut sampled_seconds = None;
        let mut sampled_m = None;
        let mut sampled_rows = None;
        let mut support_fraction = None;
        if let (Some(cfg), Some(model)) = (&scenario.reduction.deim, &artifacts.deim) {
            let t = Instant::now();
            let mut problem = DeimProblem::new(
                &assembler,
                &artifacts.basis,
                model,
                model.m_init,
                cfg.jacobian,
                &built.seeding,
                built.functional,
                built.settings,
            )?;
            sampled = Some(continuation_sweep(&mut problem, &built.online_plan, threshold)?);
            sampled_seconds = Some(t.elapsed().as_secs_f64());
            sampled_m = Some(problem.op.m);
            sampled_rows = Some(problem.op.s);
            support_fraction = Some(problem.op.support_fraction(&assembler));
        }

        let mut reference = None;
        let mut reference_seconds = None;
        if scenario.reduction.compare_high_fidelity {
            let t = Instant::now();
            let mut problem = FullOrderProblem::new(
                &assembler,
                &built.seeding,
                built.functional,
                built.settings,
            );
            reference = Some(continuation_sweep(&mut problem, &built.online_plan, threshold)?);
            reference_seconds = Some(t.elapsed().as_secs_f64());
        }

        let reduced_errors = match &reference {
            Some(r) => Some(branch_errors(r, &reduced)?),
            None => None,
        };
        let sampled_errors = match (&reference, &sampled) {
            (Some(r), Some(s)) => Some(branch_errors(r, s)?),
            _ => None,
        };

        let tag = sanitize(&case.label);
        write_text(
            &out_dir.join(format!("{}_online_{tag}.csv", scenario.name)),
            &branch_csv(&reduced),
        )?;
        if let Some(s) = &sampled {
            write_text(
                &out_dir.join(format!("{}_online_{tag}_sampled.csv", scenario.name)),
                &branch_csv(s),
            )?;
        }
        if let Some(r) = &reference {
            write_text(
                &out_dir.join(format!("{}_online_{tag}_reference.csv", scenario.name)),
                &branch_csv(r),
            )?;
            let points = crate::rom::pointwise_errors(r, &reduced)?;
            write_text(
                &out_dir.join(format!("{}_online_{tag}_errors.csv", scenario.name)),
                &errors_csv(&points),
            )?;
        }

        diagram.push_branch(
            &reduced,
            case.geo.as_ref().map(|g| g.mu_g),
            has_material.then_some((case.young, case.poisson)),
        );
        cases.push(CaseOutputs {
            label: case.label.clone(),
            reduced,
            sampled,
            reference,
            reduced_errors,
            sampled_errors,
            reduced_seconds,
            sampled_seconds,
            reference_seconds,
            sampled_m,
            sampled_rows,
            support_fraction,
        });
    }

    let diagram_path = out_dir.join(format!("{}_diagram.csv", scenario.name));
    write_text(&diagram_path, &diagram.to_csv())?;
    let series: Vec<SvgSeries> = cases
        .iter()
        .map(|c| SvgSeries {
            label: c.label.clone(),
            mus: c.reduced.points.iter().map(|p| p.mu).collect(),
            values: c.reduced.points.iter().map(|p| p.s).collect(),
            critical: c.reduced.critical_mu,
        })
        .collect();
    let svg_path = out_dir.join(format!("{}_diagram.svg", scenario.name));
    write_text(
        &svg_path,
        &diagram_svg(&scenario.name, "compression parameter", "branch output", &series),
    )?;

    let n_points = built.online_plan.mus.len();
    let mut text = format!(
        "== online: {} ==\nbasis: N = {}; grid: {} points\n",
        scenario.name,
        artifacts.basis.n_modes(),
        n_points,
    );
    for c in &cases {
        text.push_str(&format!(
            "case {}:\n  reduced: {}, {}/{} converged, {:.3} s ({:.2} ms per point)\n",
            c.label,
            critical_label(c.reduced.critical_mu),
            converged_count(&c.reduced),
            n_points,
            c.reduced_seconds,
            1e3 * c.reduced_seconds / n_points as f64,
        ));
        if let (Some(s), Some(secs)) = (&c.sampled, c.sampled_seconds) {
            text.push_str(&format!(
                "  sampled: {}, m = {} ({} rows), support {:.1}% of elements, {:.3} s ({:.2} ms per point)\n",
                critical_label(s.critical_mu),
                c.sampled_m.unwrap_or(0),
                c.sampled_rows.unwrap_or(0),
                100.0 * c.support_fraction.unwrap_or(f64::NAN),
                secs,
                1e3 * secs / n_points as f64,
            ));
        }
        if let (Some(r), Some(secs)) = (&c.reference, c.reference_seconds) {
            text.push_str(&format!(
                "  full order: {}, {:.3} s ({:.2} ms per point)\n",
                critical_label(r.critical_mu),
                secs,
                1e3 * secs / n_points as f64,
            ));
            text.push_str(&format!(
                "  speed-up full/reduced = {:.1}",
                secs / c.reduced_seconds.max(1e-12),
            ));
            if let Some(ds) = c.sampled_seconds {
                text.push_str(&format!(", full/sampled = {:.1}", secs / ds.max(1e-12)));
            }
            text.push('\n');
        }
        if let Some(e) = &c.reduced_errors {
            text.push_str(&format!(
                "  reduced error vs full order: max rel state {:.3e}, mean abs state {:.3e}, max |ds| {:.3e}, worst at mu = {}\n",
                e.max_rel_state, e.mean_abs_state, e.max_abs_output, e.worst_mu,
            ));
        }
        if let Some(e) = &c.sampled_errors {
            text.push_str(&format!(
                "  sampled error vs full order: max rel state {:.3e}, max |ds| {:.3e}\n",
                e.max_rel_state, e.max_abs_output,
            ));
        }
    }
    if let Some(dt) = diameter_to_thickness(scenario) {
        text.push_str(&format!("tube diameter-to-thickness: {dt:.2}\n"));
    }
    text.push_str(&format!("wall time: {:.2} s\n\n", start.elapsed().as_secs_f64()));
    append_report(&report_path(out_dir), &text)?;

    Ok(OnlineOutputs { cases, basis_dim: artifacts.basis.n_modes(), diagram_path, svg_path })
}

/// Loads two diagram CSVs and summarizes their critical parameters, branch
/// ordering and pointwise deviation.
pub fn compare_diagrams(path_a: &Path, path_b: &Path, threshold: f64) -> Result<CompareSummary> {
    let read = |path: &Path| -> Result<DiagramTable> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
        DiagramTable::from_csv(&text)
    };
    compare_tables(&read(path_a)?, &read(path_b)?, threshold)
}

/// Writes the scenario mesh as a legacy-format VTK unstructured grid.
pub fn mesh_export(scenario: &Scenario, out_path: &Path) -> Result<()> {
    let built = scenario.build()?;
    write_text(out_path, &mesh_vtk(&built.mesh, &scenario.name))
}

fn mesh_vtk(mesh: &Mesh, name: &str) -> String {
    use std::fmt::Write as _;
    let dim = mesh.dim;
    let npe = dim + 1;
    let n_nodes = mesh.n_nodes();
    let n_elements = mesh.n_elements();
    let mut out = format!("# vtk DataFile Version 3.0\n{name}\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {n_nodes} double");
    for n in 0..n_nodes {
        let x = mesh.nodes[dim * n];
        let y = mesh.nodes[dim * n + 1];
        let z = if dim == 3 { mesh.nodes[dim * n + 2] } else { 0.0 };
        let _ = writeln!(out, "{x} {y} {z}");
    }
    let _ = writeln!(out, "CELLS {n_elements} {}", n_elements * (npe + 1));
    for e in 0..n_elements {
        let _ = write!(out, "{npe}");
        for k in 0..npe {
            let _ = write!(out, " {}", mesh.elements[npe * e + k]);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {n_elements}");
    let cell_type = if dim == 2 { 5 } else { 10 };
    for _ in 0..n_elements {
        let _ = writeln!(out, "{cell_type}");
    }
    out
}
