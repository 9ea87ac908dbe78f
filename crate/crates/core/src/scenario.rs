//! Scenario files: the TOML schema describing a study and its translation
//! into meshes, boundary conditions, parameter cases and sweep plans.
//!
//! A scenario names one structure (2-D beam, 3-D beam or tube), one material
//! law with optional training ranges, a compression mode, the continuation
//! grids, reduction tolerances and the buckling-detection rule. `build`
//! validates everything and returns the assembled study: the mesh, the
//! boundary conditions, one case per offline training configuration
//! (material vertices crossed with geometry training values) and one per
//! online query configuration.

use serde::{Deserialize, Serialize};

use crate::bc::{BoundaryConditions, DirichletSpec, DofMap, TractionSpec};
use crate::constitutive::{Material, MaterialModel};
use crate::deim::DeimJacobian;
use crate::error::{Error, Result};
use crate::geomap::{GeometricMap, GeometricMapKind};
use crate::mesh::{
    build_beam_2d_tagged, build_beam_3d_tagged, build_tube_3d_tagged, BoundaryTag, Mesh,
};
use crate::quadrature::QuadratureRule;
use crate::solver::{ContinuationPlan, NewtonSettings, OutputFunctional, SeedingPolicy};

/// Top-level scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub loading: LoadingConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub geometry_map: Option<GeometryMapConfig>,
    pub reduction: ReductionConfig,
    pub detection: DetectionConfig,
    #[serde(default)]
    pub seeding: SeedingConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Beam2d { length: f64, height: f64, nx: usize, ny: usize },
    /// Axis-aligned box: `length` along x, `width` along y, `height` along z.
    Beam3d { length: f64, height: f64, width: f64, nx: usize, ny: usize, nz: usize },
    Tube {
        r_inner: f64,
        r_outer: f64,
        length: f64,
        n_circ: usize,
        n_rad: usize,
        n_axial: usize,
    },
}

impl GeometryConfig {
    pub fn dim(&self) -> usize {
        match self {
            GeometryConfig::Beam2d { .. } => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub model: MaterialModel,
    pub young: f64,
    pub poisson: f64,
    /// Training interval for Young's modulus (enables material sweeps).
    #[serde(default)]
    pub young_range: Option<[f64; 2]>,
    /// Training interval for Poisson's ratio.
    #[serde(default)]
    pub poisson_range: Option<[f64; 2]>,
    /// Online (young, poisson) queries; defaults to the nominal values.
    #[serde(default)]
    pub online_pairs: Vec<[f64; 2]>,
}

/// How the compression parameter mu enters the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    /// All end-face components prescribed: mu is the end shortening.
    Clamp,
    /// Only the axial component prescribed; transverse components free.
    Axial,
    /// Axial surface traction of magnitude mu (force per area) on the end.
    Traction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingConfig {
    pub compression: CompressionMode,
    #[serde(default)]
    pub body_force: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mu_min: f64,
    pub mu_max: f64,
    pub offline_steps: usize,
    /// Online grid resolution; defaults to the offline one.
    #[serde(default)]
    pub online_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryMapConfig {
    pub kind: GeometricMapKind,
    pub train: Vec<f64>,
    /// Online geometry values; defaults to the training values.
    #[serde(default)]
    pub online: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    /// Energy tolerance for the state basis truncation.
    pub eps_pod: f64,
    /// Re-run the full model online and report errors and speed-ups.
    #[serde(default)]
    pub compare_high_fidelity: bool,
    /// Presence enables hyper-reduction of the internal force.
    #[serde(default)]
    pub deim: Option<DeimConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeimConfig {
    /// Energy tolerance for the force-mode truncation.
    pub eps: f64,
    #[serde(default)]
    pub max_modes: Option<usize>,
    #[serde(default)]
    pub jacobian: DeimJacobian,
}

/// Which scalar tracks the buckling amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionFunctional {
    /// max |u_y|: transverse deflection of beams.
    TransverseY,
    /// max |u_z|: out-of-plane deflection of 3-D beams.
    TransverseZ,
    /// max |u_x| + max |u_y|: radial deflection of axially compressed tubes.
    PlanarXy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub functional: DetectionFunctional,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedingConfig {
    /// Peak of the transverse half-sine perturbation (0 disables seeding,
    /// which symmetric reference runs rely on).
    pub amplitude: f64,
    /// Branch selector.
    pub sign: f64,
}

impl Default for SeedingConfig {
    fn default() -> Self {
        SeedingConfig { amplitude: 1e-4, sign: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub quadrature: QuadratureRule,
    pub max_iter: usize,
    /// Newton absolute tolerance = tolerance_factor * characteristic force.
    pub tolerance_factor: f64,
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            quadrature: QuadratureRule::Standard,
            max_iter: 25,
            tolerance_factor: 1e-9,
            rel_tol: 1e-10,
        }
    }
}

/// One assembled parameter configuration (material and optional geometry).
#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub label: String,
    pub material: Material,
    /// Young's modulus the material was derived from.
    pub young: f64,
    /// Poisson's ratio the material was derived from.
    pub poisson: f64,
    pub geo: Option<GeometricMap>,
}

/// A validated, mesh-level study ready for the offline/online drivers.
pub struct BuiltScenario {
    pub config: Scenario,
    pub mesh: Mesh,
    pub bcs: BoundaryConditions,
    pub dofmap: DofMap,
    pub offline_cases: Vec<CaseSpec>,
    pub online_cases: Vec<CaseSpec>,
    pub offline_plan: ContinuationPlan,
    pub online_plan: ContinuationPlan,
    pub functional: OutputFunctional,
    pub seeding: SeedingPolicy,
    pub settings: NewtonSettings,
    pub rule: QuadratureRule,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(format!("reading scenario {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Config(format!(
                "scenario name '{}' must be non-empty and use only letters, \
                 digits, '_' or '-'",
                self.name
            )));
        }
        match &self.geometry {
            GeometryConfig::Beam2d { length, height, nx, ny } => {
                positive("length", *length)?;
                positive("height", *height)?;
                at_least_one("nx", *nx)?;
                at_least_one("ny", *ny)?;
            }
            GeometryConfig::Beam3d { length, height, width, nx, ny, nz } => {
                positive("length", *length)?;
                positive("height", *height)?;
                positive("width", *width)?;
                at_least_one("nx", *nx)?;
                at_least_one("ny", *ny)?;
                at_least_one("nz", *nz)?;
            }
            GeometryConfig::Tube { r_inner, r_outer, length, n_circ, n_rad, n_axial } => {
                positive("r_inner", *r_inner)?;
                positive("length", *length)?;
                if !(r_outer > r_inner) {
                    return Err(Error::Config(format!(
                        "tube needs r_outer > r_inner, got {r_inner} >= {r_outer}"
                    )));
                }
                if *n_circ < 3 {
                    return Err(Error::Config("tube needs n_circ >= 3".into()));
                }
                at_least_one("n_rad", *n_rad)?;
                at_least_one("n_axial", *n_axial)?;
            }
        }

        Material::new(self.material.model, self.material.young, self.material.poisson)?;
        for range in [&self.material.young_range, &self.material.poisson_range]
            .into_iter()
            .flatten()
        {
            if !(range[0] < range[1]) {
                return Err(Error::Config(format!(
                    "material range [{}, {}] is empty",
                    range[0], range[1]
                )));
            }
        }
        for pair in &self.material.online_pairs {
            Material::new(self.material.model, pair[0], pair[1])?;
        }

        if !(self.sweep.mu_max > self.sweep.mu_min) {
            return Err(Error::Config(format!(
                "sweep range [{}, {}] is empty",
                self.sweep.mu_min, self.sweep.mu_max
            )));
        }
        at_least_one("offline_steps", self.sweep.offline_steps)?;
        if let Some(n) = self.sweep.online_steps {
            at_least_one("online_steps", n)?;
        }

        if let Some(map) = &self.geometry_map {
            // The maps assume the reference extents they were derived for.
            let reference_length = match (&self.geometry, map.kind) {
                (
                    GeometryConfig::Beam2d { length, .. },
                    GeometricMapKind::Beam2dSemilength,
                ) => (*length, 1.0),
                (GeometryConfig::Tube { length, .. }, GeometricMapKind::TubeSemilength) => {
                    (*length, 2.0)
                }
                _ => {
                    return Err(Error::Config(
                        "geometry map kind does not fit the geometry kind".into(),
                    ))
                }
            };
            if reference_length.0 != reference_length.1 {
                return Err(Error::Config(format!(
                    "this geometry map requires the reference length {}, got {}",
                    reference_length.1, reference_length.0
                )));
            }
            if map.train.is_empty() {
                return Err(Error::Config("geometry map needs training values".into()));
            }
            for &v in map.train.iter().chain(&map.online) {
                GeometricMap::build(map.kind, v)?;
            }
        }

        for (what, eps) in [("eps_pod", self.reduction.eps_pod)]
            .into_iter()
            .chain(self.reduction.deim.as_ref().map(|d| ("deim eps", d.eps)))
        {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::Config(format!(
                    "{what} must lie in [0, 1), got {eps}"
                )));
            }
        }
        if let Some(deim) = &self.reduction.deim {
            if deim.max_modes == Some(0) {
                return Err(Error::Config("deim max_modes must be positive".into()));
            }
        }

        if !(self.detection.threshold > 0.0) {
            return Err(Error::Config("detection threshold must be positive".into()));
        }
        if !self.seeding.amplitude.is_finite() || self.seeding.amplitude < 0.0 {
            return Err(Error::Config("seeding amplitude must be non-negative".into()));
        }
        if self.seeding.sign != 1.0 && self.seeding.sign != -1.0 {
            return Err(Error::Config("seeding sign must be 1 or -1".into()));
        }
        at_least_one("max_iter", self.solver.max_iter)?;
        positive("tolerance_factor", self.solver.tolerance_factor)?;
        if self.solver.rel_tol < 0.0 {
            return Err(Error::Config("rel_tol must be non-negative".into()));
        }

        let dim = self.geometry.dim();
        if dim == 2
            && matches!(
                self.detection.functional,
                DetectionFunctional::TransverseZ | DetectionFunctional::PlanarXy
            )
        {
            return Err(Error::Config(
                "detection functional needs a third displacement component".into(),
            ));
        }
        Ok(())
    }

    /// Materializes the mesh, boundary conditions and case lists.
    pub fn build(&self) -> Result<BuiltScenario> {
        self.validate()?;

        let end_tag = match self.loading.compression {
            CompressionMode::Traction => BoundaryTag::NeumannRight,
            _ => BoundaryTag::DirichletRight,
        };
        let mesh = match &self.geometry {
            GeometryConfig::Beam2d { length, height, nx, ny } => {
                build_beam_2d_tagged(*length, *height, *nx, *ny, end_tag)?
            }
            GeometryConfig::Beam3d { length, height, width, nx, ny, nz } => {
                build_beam_3d_tagged(*length, *width, *height, *nx, *ny, *nz, end_tag)?
            }
            GeometryConfig::Tube { r_inner, r_outer, length, n_circ, n_rad, n_axial } => {
                build_tube_3d_tagged(
                    *r_inner, *r_outer, *length, *n_circ, *n_rad, *n_axial, end_tag,
                )?
            }
        };

        let axis = mesh.axis;
        let mut axis_vec = [0.0; 3];
        axis_vec[axis] = -1.0;
        let mut dirichlet = vec![BoundaryConditions::clamp(BoundaryTag::DirichletLeft)];
        let mut traction = Vec::new();
        match self.loading.compression {
            CompressionMode::Clamp => dirichlet.push(DirichletSpec {
                tag: BoundaryTag::DirichletRight,
                mask: [true; 3],
                base: [0.0; 3],
                slope: axis_vec,
            }),
            CompressionMode::Axial => {
                let mut mask = [false; 3];
                mask[axis] = true;
                dirichlet.push(DirichletSpec {
                    tag: BoundaryTag::DirichletRight,
                    mask,
                    base: [0.0; 3],
                    slope: axis_vec,
                });
            }
            CompressionMode::Traction => traction.push(TractionSpec {
                tag: BoundaryTag::NeumannRight,
                base: [0.0; 3],
                slope: axis_vec,
            }),
        }
        let bcs = BoundaryConditions { dirichlet, traction };
        let dofmap = DofMap::build(&mesh, &bcs)?;

        let material_train = self.material_training_values();
        let material_online = if self.material.online_pairs.is_empty() {
            vec![[self.material.young, self.material.poisson]]
        } else {
            self.material.online_pairs.clone()
        };
        let (geo_train, geo_online) = match &self.geometry_map {
            None => (vec![None], vec![None]),
            Some(map) => {
                let train: Result<Vec<_>> = map
                    .train
                    .iter()
                    .map(|&v| GeometricMap::build(map.kind, v).map(Some))
                    .collect();
                let online_values =
                    if map.online.is_empty() { &map.train } else { &map.online };
                let online: Result<Vec<_>> = online_values
                    .iter()
                    .map(|&v| GeometricMap::build(map.kind, v).map(Some))
                    .collect();
                (train?, online?)
            }
        };

        let cases = |materials: &[[f64; 2]], geos: &[Option<GeometricMap>]| -> Result<Vec<CaseSpec>> {
            let mut out = Vec::new();
            for m in materials {
                for g in geos {
                    let material = Material::new(self.material.model, m[0], m[1])?;
                    let mut label = format!("young={:.6e}_poisson={:.4}", m[0], m[1]);
                    if let Some(geo) = g {
                        label.push_str(&format!("_geometry={:.4}", geo.mu_g));
                    }
                    out.push(CaseSpec {
                        label,
                        material,
                        young: m[0],
                        poisson: m[1],
                        geo: g.clone(),
                    });
                }
            }
            Ok(out)
        };
        let offline_cases = cases(&material_train, &geo_train)?;
        let online_cases = cases(&material_online, &geo_online)?;

        let offline_plan = ContinuationPlan::uniform(
            self.sweep.mu_min,
            self.sweep.mu_max,
            self.sweep.offline_steps,
        )?;
        let online_plan = ContinuationPlan::uniform(
            self.sweep.mu_min,
            self.sweep.mu_max,
            self.sweep.online_steps.unwrap_or(self.sweep.offline_steps),
        )?;

        let functional = match self.detection.functional {
            DetectionFunctional::TransverseY => OutputFunctional::InfNormComponent(1),
            DetectionFunctional::TransverseZ => OutputFunctional::InfNormComponent(2),
            DetectionFunctional::PlanarXy => OutputFunctional::SumInfNormXY,
        };
        functional.validate(mesh.dim)?;

        let seed_component = match self.detection.functional {
            DetectionFunctional::TransverseY => 1,
            DetectionFunctional::TransverseZ => 2,
            // For tubes, a transverse half-sine in x breaks the rotational
            // symmetry of the trivial branch.
            DetectionFunctional::PlanarXy => 0,
        };
        let seeding = SeedingPolicy {
            component: seed_component,
            amplitude: self.seeding.amplitude * self.seeding.sign,
            until_output_exceeds: self.detection.threshold,
        };

        let settings = NewtonSettings {
            abs_tol: self.solver.tolerance_factor * self.characteristic_force(&mesh),
            rel_tol: self.solver.rel_tol,
            max_iter: self.solver.max_iter,
            divergence_ratio: 1e4,
        };

        Ok(BuiltScenario {
            config: self.clone(),
            mesh,
            bcs,
            dofmap,
            offline_cases,
            online_cases,
            offline_plan,
            online_plan,
            functional,
            seeding,
            settings,
            rule: self.solver.quadrature,
        })
    }

    /// Material training grid: nominal values, extended to the box corners
    /// when ranges are configured.
    fn material_training_values(&self) -> Vec<[f64; 2]> {
        let youngs: Vec<f64> = match self.material.young_range {
            Some([lo, hi]) => vec![lo, hi],
            None => vec![self.material.young],
        };
        let poissons: Vec<f64> = match self.material.poisson_range {
            Some([lo, hi]) => vec![lo, hi],
            None => vec![self.material.poisson],
        };
        let mut out = Vec::new();
        for &e in &youngs {
            for &nu in &poissons {
                out.push([e, nu]);
            }
        }
        out
    }

    /// Characteristic reaction force for scaling the Newton tolerance: the
    /// axial elastic response at full compression, or the resultant of the
    /// applied loads, whichever is larger.
    fn characteristic_force(&self, mesh: &Mesh) -> f64 {
        let (lo, hi) = mesh.axis_extent;
        let axis_len = hi - lo;
        let volume = mesh.total_volume();
        let cross_section = volume / axis_len;
        let strain = match self.loading.compression {
            CompressionMode::Traction => self.sweep.mu_max / self.material.young,
            _ => self.sweep.mu_max / axis_len,
        };
        let reaction = self.material.young * strain.abs() * cross_section;
        let body: f64 = self
            .loading
            .body_force
            .iter()
            .map(|b| b.abs())
            .fold(0.0, f64::max)
            * volume;
        let traction = match self.loading.compression {
            CompressionMode::Traction => self.sweep.mu_max.abs() * cross_section,
            _ => 0.0,
        };
        reaction.max(body).max(traction).max(1e-12)
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {v}")))
    }
}

fn at_least_one(what: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be at least 1")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beam_toml() -> String {
        r#"
            name = "beam-test"

            [geometry]
            kind = "beam2d"
            length = 1.0
            height = 0.1
            nx = 12
            ny = 2

            [material]
            model = "svk"
            young = 1.0e6
            poisson = 0.3

            [loading]
            compression = "clamp"
            body_force = [0.0, -1000.0, 0.0]

            [sweep]
            mu_min = 0.0
            mu_max = 0.2
            offline_steps = 50

            [reduction]
            eps_pod = 1e-6

            [detection]
            functional = "transverse_y"
            threshold = 0.001
        "#
        .to_string()
    }

    #[test]
    fn parses_and_builds_a_minimal_beam_study() {
        let scenario = Scenario::from_toml_str(&beam_toml()).unwrap();
        let built = scenario.build().unwrap();
        assert_eq!(built.mesh.dim, 2);
        assert_eq!(built.offline_cases.len(), 1);
        assert_eq!(built.online_cases.len(), 1);
        assert!(built.offline_cases[0].geo.is_none());
        assert_eq!(built.offline_plan.mus.len(), 50);
        assert_eq!(built.online_plan.mus.len(), 50);
        assert_eq!(built.functional, OutputFunctional::InfNormComponent(1));
        // Clamp mode prescribes both components on the right end.
        let right = built.mesh.tagged_nodes(BoundaryTag::DirichletRight);
        assert!(!right.is_empty());
        for &n in &right {
            assert!(built.dofmap.constrained[2 * n]);
            assert!(built.dofmap.constrained[2 * n + 1]);
        }
        // Newton tolerance scales with the axial reaction at full shortening:
        // young * (mu_max / L) * cross-section ~ 2e4 force units.
        assert!(built.settings.abs_tol > 1e-7 && built.settings.abs_tol < 1e-3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = beam_toml().replace("[reduction]", "typo_key = 1\n[reduction]");
        assert!(matches!(Scenario::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn axial_mode_leaves_transverse_dofs_free() {
        let text = beam_toml().replace("compression = \"clamp\"", "compression = \"axial\"");
        let built = Scenario::from_toml_str(&text).unwrap().build().unwrap();
        let right = built.mesh.tagged_nodes(BoundaryTag::DirichletRight);
        for &n in &right {
            assert!(built.dofmap.constrained[2 * n]);
            assert!(!built.dofmap.constrained[2 * n + 1]);
        }
    }

    #[test]
    fn traction_mode_tags_a_neumann_end() {
        let text =
            beam_toml().replace("compression = \"clamp\"", "compression = \"traction\"");
        let built = Scenario::from_toml_str(&text).unwrap().build().unwrap();
        assert!(built.mesh.tagged_nodes(BoundaryTag::DirichletRight).is_empty());
        assert!(!built.mesh.tagged_nodes(BoundaryTag::NeumannRight).is_empty());
        assert!(!built.bcs.traction.is_empty());
        // Only the left end is constrained.
        let left = built.mesh.tagged_nodes(BoundaryTag::DirichletLeft);
        assert_eq!(built.dofmap.n_dofs - built.dofmap.n_free(), 2 * left.len());
    }

    #[test]
    fn material_ranges_produce_corner_cases() {
        let text = beam_toml().replace(
            "poisson = 0.3",
            "poisson = 0.3\nyoung_range = [8.0e5, 1.2e6]\npoisson_range = [0.25, 0.35]\nonline_pairs = [[9.0e5, 0.28], [1.1e6, 0.32]]",
        );
        let built = Scenario::from_toml_str(&text).unwrap().build().unwrap();
        assert_eq!(built.offline_cases.len(), 4);
        assert_eq!(built.online_cases.len(), 2);
        let labels: Vec<&str> =
            built.offline_cases.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels.len(), 4);
        assert!(labels.iter().all(|l| l.contains("young=")));
    }

    #[test]
    fn geometry_map_cases_cross_with_materials() {
        let text = beam_toml()
            + r#"
            [geometry_map]
            kind = "beam2d_semilength"
            train = [0.45, 0.5, 0.55]
            online = [0.48]
        "#;
        let built = Scenario::from_toml_str(&text).unwrap().build().unwrap();
        assert_eq!(built.offline_cases.len(), 3);
        assert_eq!(built.online_cases.len(), 1);
        assert!(built.offline_cases.iter().all(|c| c.geo.is_some()));
        // Online defaults to the training values when omitted.
        let text2 = beam_toml()
            + r#"
            [geometry_map]
            kind = "beam2d_semilength"
            train = [0.45, 0.55]
        "#;
        let built2 = Scenario::from_toml_str(&text2).unwrap().build().unwrap();
        assert_eq!(built2.online_cases.len(), 2);
    }

    #[test]
    fn mismatched_geometry_map_is_rejected() {
        let text = beam_toml()
            + r#"
            [geometry_map]
            kind = "tube_semilength"
            train = [1.0]
        "#;
        assert!(matches!(Scenario::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (from, to) in [
            ("mu_max = 0.2", "mu_max = -0.1"),
            ("offline_steps = 50", "offline_steps = 0"),
            ("eps_pod = 1e-6", "eps_pod = 1.5"),
            ("threshold = 0.001", "threshold = 0.0"),
            ("poisson = 0.3", "poisson = 0.5"),
            ("nx = 12", "nx = 0"),
            ("functional = \"transverse_y\"", "functional = \"planar_xy\""),
            ("name = \"beam-test\"", "name = \"bad name!\""),
        ] {
            let text = beam_toml().replace(from, to);
            assert!(
                Scenario::from_toml_str(&text).is_err(),
                "expected rejection for {to}"
            );
        }
    }

    #[test]
    fn tube_study_builds_with_hyper_reduction() {
        let text = r#"
            name = "tube-test"

            [geometry]
            kind = "tube"
            r_inner = 0.28
            r_outer = 0.30
            length = 2.0
            n_circ = 8
            n_rad = 1
            n_axial = 4

            [material]
            model = "nh"
            young = 1.0e6
            poisson = 0.3

            [loading]
            compression = "clamp"

            [sweep]
            mu_min = 0.0
            mu_max = 0.05
            offline_steps = 10
            online_steps = 20

            [reduction]
            eps_pod = 1e-6
            compare_high_fidelity = true

            [reduction.deim]
            eps = 1e-6
            max_modes = 40

            [detection]
            functional = "planar_xy"
            threshold = 0.002
        "#;
        let built = Scenario::from_toml_str(text).unwrap().build().unwrap();
        assert_eq!(built.mesh.dim, 3);
        assert_eq!(built.mesh.axis, 2);
        assert_eq!(built.online_plan.mus.len(), 20);
        assert!(built.config.reduction.deim.is_some());
        assert_eq!(built.functional, OutputFunctional::SumInfNormXY);
        // Seeding perturbs x; the axial slope compresses along z.
        assert_eq!(built.seeding.component, 0);
        let right = built.mesh.tagged_nodes(BoundaryTag::DirichletRight);
        for &n in right.iter().take(3) {
            assert!(built.dofmap.constrained[3 * n + 2]);
        }
    }
}
