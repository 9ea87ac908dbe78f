//! Structured simplicial meshes for beam and tube geometries.
//!
//! Conventions:
//! - Nodes are stored as a flat array of coordinates, `dim` entries per node.
//! - Elements are simplices (triangles in 2-D, tetrahedra in 3-D) stored as
//!   `dim + 1` node indices per element, oriented so the signed volume is
//!   positive.
//! - Boundary facets (edges in 2-D, triangles in 3-D) are extracted from the
//!   element faces that occur exactly once, and each carries a [`BoundaryTag`].
//! - All builders produce deterministic node and element orderings, so two
//!   calls with the same arguments yield bitwise-identical meshes.
//!
//! The 2-D beam builder alternates the diagonal of each grid cell in a
//! checkerboard pattern and lays out rows with a constant per-cell spacing
//! increment. Together with an even subdivision count across the height this
//! makes the triangulation exactly invariant under reflection through the
//! beam midline, which downstream symmetry checks rely on.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Label attached to every boundary facet.
///
/// `DirichletLeft` marks the clamped end (minimum coordinate along the
/// compression axis). The opposite end is tagged `DirichletRight` when the
/// compression is imposed through a displacement and `NeumannRight` when it
/// is imposed through a traction. Everything else is `FreeBoundary`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BoundaryTag {
    DirichletLeft,
    DirichletRight,
    NeumannRight,
    FreeBoundary,
}

/// One boundary facet: `dim` node indices (the third entry is unused in 2-D)
/// plus the owning element and a tag.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFacet {
    pub nodes: [usize; 3],
    pub element: usize,
    pub tag: BoundaryTag,
}

/// A simplicial mesh in 2 or 3 dimensions.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    /// Flat node coordinates, `dim` per node.
    pub nodes: Vec<f64>,
    /// Flat element connectivity, `dim + 1` node indices per element.
    pub elements: Vec<usize>,
    pub facets: Vec<BoundaryFacet>,
    /// Coordinate axis along which the compression acts (0 for beams, 2 for tubes).
    pub axis: usize,
    /// Extent of the mesh along `axis` (min, max).
    pub axis_extent: (f64, f64),
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    /// Number of nodes per boundary facet (2 in 2-D, 3 in 3-D).
    pub fn facet_arity(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e * (self.dim + 1)..(e + 1) * (self.dim + 1)]
    }

    /// Signed volume of element `e` (area in 2-D). Positive by construction.
    pub fn element_volume(&self, e: usize) -> f64 {
        let conn = self.element(e);
        match self.dim {
            2 => {
                let a = self.node(conn[0]);
                let b = self.node(conn[1]);
                let c = self.node(conn[2]);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            }
            3 => {
                let a = self.node(conn[0]);
                let b = self.node(conn[1]);
                let c = self.node(conn[2]);
                let d = self.node(conn[3]);
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
                (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
                    + u[2] * (v[0] * w[1] - v[1] * w[0]))
                    / 6.0
            }
            _ => unreachable!("mesh dimension is 2 or 3"),
        }
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_volume(e)).sum()
    }

    /// Area of a boundary facet (edge length in 2-D, triangle area in 3-D).
    pub fn facet_area(&self, f: &BoundaryFacet) -> f64 {
        match self.dim {
            2 => {
                let a = self.node(f.nodes[0]);
                let b = self.node(f.nodes[1]);
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            }
            3 => {
                let a = self.node(f.nodes[0]);
                let b = self.node(f.nodes[1]);
                let c = self.node(f.nodes[2]);
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let n = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
            }
            _ => unreachable!(),
        }
    }

    /// Node indices that appear in at least one facet with the given tag,
    /// sorted and deduplicated.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let arity = self.facet_arity();
        let mut out: Vec<usize> = self
            .facets
            .iter()
            .filter(|f| f.tag == tag)
            .flat_map(|f| f.nodes[..arity].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Writes the mesh in legacy ASCII VTK format.
    pub fn write_vtk(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        s.push_str("buckrom mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(s, "POINTS {} double", self.n_nodes());
        for i in 0..self.n_nodes() {
            let p = self.node(i);
            let z = if self.dim == 3 { p[2] } else { 0.0 };
            let _ = writeln!(s, "{:.17} {:.17} {:.17}", p[0], p[1], z);
        }
        let npe = self.dim + 1;
        let _ = writeln!(s, "CELLS {} {}", self.n_elements(), self.n_elements() * (npe + 1));
        for e in 0..self.n_elements() {
            let conn = self.element(e);
            let _ = write!(s, "{npe}");
            for &n in conn {
                let _ = write!(s, " {n}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.n_elements());
        let vtk_type = if self.dim == 2 { 5 } else { 10 };
        for _ in 0..self.n_elements() {
            let _ = writeln!(s, "{vtk_type}");
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Diameter-to-thickness ratio of a tube cross-section, `2 r_outer / (r_outer - r_inner)`.
/// Shells with large values (beyond roughly 120) are outside the intended
/// thick-shell regime of this toolkit.
pub fn diameter_to_thickness(r_inner: f64, r_outer: f64) -> f64 {
    2.0 * r_outer / (r_outer - r_inner)
}

fn check_positive(value: f64, what: &str) -> Result<()> {
    if !(value > 0.0) {
        return Err(Error::Mesh(format!("{what} must be positive, got {value}")));
    }
    Ok(())
}

fn check_subdiv(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::Mesh(format!("{what} must be at least 1")));
    }
    Ok(())
}

/// Coordinates 0, h, 2h, ..., n*h with the increment snapped to 26
/// significand bits. Every coordinate `j*h` and every pairwise difference is
/// then exactly representable, so all cells have bitwise-identical widths and
/// reflected node pairs are exactly symmetric — mirror-symmetric problems
/// stay symmetric to machine precision instead of drifting through grid
/// rounding. The final coordinate matches `extent` to about 1.5e-8 relative.
fn uniform_coords(extent: f64, n: usize) -> Vec<f64> {
    let h = snap_increment(extent / n as f64);
    (0..=n).map(|j| j as f64 * h).collect()
}

/// Rounds a positive finite value to 26 significand bits.
fn snap_increment(h: f64) -> f64 {
    debug_assert!(h.is_finite() && h > 0.0);
    let exp = ((h.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    let scale = 2f64.powi(25 - exp);
    (h * scale).round() / scale
}

/// 2-D beam `[0, length] x [0, height]` split into `nx * ny` grid cells, two
/// triangles each. The cell diagonal alternates in a checkerboard pattern:
/// cells with even `i + j` are split along the (i,j)-(i+1,j+1) diagonal,
/// the others along (i+1,j)-(i,j+1). The right end is tagged `DirichletRight`;
/// use [`build_beam_2d_tagged`] for traction-loaded ends.
pub fn build_beam_2d(length: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh> {
    build_beam_2d_tagged(length, height, nx, ny, BoundaryTag::DirichletRight)
}

/// Same as [`build_beam_2d`] but with an explicit tag for the `x = length` end.
pub fn build_beam_2d_tagged(
    length: f64,
    height: f64,
    nx: usize,
    ny: usize,
    end_tag: BoundaryTag,
) -> Result<Mesh> {
    check_positive(length, "length")?;
    check_positive(height, "height")?;
    check_subdiv(nx, "nx")?;
    check_subdiv(ny, "ny")?;

    let xs = uniform_coords(length, nx);
    let ys = uniform_coords(height, ny);
    let node_id = |i: usize, j: usize| i * (ny + 1) + j;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * 2);
    for i in 0..=nx {
        for j in 0..=ny {
            nodes.push(xs[i]);
            nodes.push(ys[j]);
        }
    }

    let mut elements = Vec::with_capacity(2 * nx * ny * 3);
    for i in 0..nx {
        for j in 0..ny {
            let n00 = node_id(i, j);
            let n10 = node_id(i + 1, j);
            let n11 = node_id(i + 1, j + 1);
            let n01 = node_id(i, j + 1);
            if (i + j) % 2 == 0 {
                elements.extend_from_slice(&[n00, n10, n11]);
                elements.extend_from_slice(&[n00, n11, n01]);
            } else {
                elements.extend_from_slice(&[n00, n10, n01]);
                elements.extend_from_slice(&[n10, n11, n01]);
            }
        }
    }

    finish_mesh(2, nodes, elements, 0, end_tag)
}

/// The six tetrahedra of the Kuhn subdivision of one grid cell, as corner
/// triples in `(dx, dy, dz)` bit form. All six share the main diagonal
/// 000-111, which makes the subdivision face-to-face conforming on any
/// structured grid, including periodic directions.
const KUHN_TETS: [[u8; 4]; 6] = [
    [0b000, 0b100, 0b110, 0b111],
    [0b000, 0b110, 0b010, 0b111],
    [0b000, 0b010, 0b011, 0b111],
    [0b000, 0b011, 0b001, 0b111],
    [0b000, 0b001, 0b101, 0b111],
    [0b000, 0b101, 0b100, 0b111],
];

/// 3-D beam `[0, lx] x [0, ly] x [0, lz]` on an `nx * ny * nz` grid, each
/// cell split into six tetrahedra. The `x = lx` face is tagged `DirichletRight`.
pub fn build_beam_3d(
    lx: f64,
    ly: f64,
    lz: f64,
    nx: usize,
    ny: usize,
    nz: usize,
) -> Result<Mesh> {
    build_beam_3d_tagged(lx, ly, lz, nx, ny, nz, BoundaryTag::DirichletRight)
}

/// Same as [`build_beam_3d`] but with an explicit tag for the `x = lx` face.
pub fn build_beam_3d_tagged(
    lx: f64,
    ly: f64,
    lz: f64,
    nx: usize,
    ny: usize,
    nz: usize,
    end_tag: BoundaryTag,
) -> Result<Mesh> {
    check_positive(lx, "lx")?;
    check_positive(ly, "ly")?;
    check_positive(lz, "lz")?;
    check_subdiv(nx, "nx")?;
    check_subdiv(ny, "ny")?;
    check_subdiv(nz, "nz")?;

    let xs = uniform_coords(lx, nx);
    let ys = uniform_coords(ly, ny);
    let zs = uniform_coords(lz, nz);
    let node_id = |i: usize, j: usize, k: usize| (i * (ny + 1) + j) * (nz + 1) + k;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1) * 3);
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                nodes.push(xs[i]);
                nodes.push(ys[j]);
                nodes.push(zs[k]);
            }
        }
    }

    let mut elements = Vec::with_capacity(6 * nx * ny * nz * 4);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let corner = |bits: u8| {
                    node_id(
                        i + ((bits >> 2) & 1) as usize,
                        j + ((bits >> 1) & 1) as usize,
                        k + (bits & 1) as usize,
                    )
                };
                for tet in &KUHN_TETS {
                    for &b in tet {
                        elements.push(corner(b));
                    }
                }
            }
        }
    }

    finish_mesh(3, nodes, elements, 0, end_tag)
}

/// Hollow cylinder (polygonal annulus cross-section) of inner radius
/// `r_inner`, outer radius `r_outer`, axial length `length` along `z`,
/// meshed with `n_circ` circumferential sectors, `n_rad` radial layers and
/// `n_axial` axial layers, six tetrahedra per hexahedral cell. The `z = 0`
/// face is tagged `DirichletLeft`; the `z = length` face gets `end_tag`.
pub fn build_tube_3d(
    r_inner: f64,
    r_outer: f64,
    length: f64,
    n_circ: usize,
    n_rad: usize,
    n_axial: usize,
) -> Result<Mesh> {
    build_tube_3d_tagged(r_inner, r_outer, length, n_circ, n_rad, n_axial, BoundaryTag::NeumannRight)
}

/// Same as [`build_tube_3d`] but with an explicit tag for the `z = length` face.
pub fn build_tube_3d_tagged(
    r_inner: f64,
    r_outer: f64,
    length: f64,
    n_circ: usize,
    n_rad: usize,
    n_axial: usize,
    end_tag: BoundaryTag,
) -> Result<Mesh> {
    check_positive(r_inner, "r_inner")?;
    check_positive(length, "length")?;
    if !(r_outer > r_inner) {
        return Err(Error::Mesh(format!(
            "r_outer ({r_outer}) must exceed r_inner ({r_inner})"
        )));
    }
    if n_circ < 3 {
        return Err(Error::Mesh(format!("n_circ must be at least 3, got {n_circ}")));
    }
    check_subdiv(n_rad, "n_rad")?;
    check_subdiv(n_axial, "n_axial")?;

    let zs = uniform_coords(length, n_axial);
    let dr = (r_outer - r_inner) / n_rad as f64;
    let node_id = |k: usize, q: usize, c: usize| (k * (n_rad + 1) + q) * n_circ + c;

    let mut nodes = Vec::with_capacity((n_axial + 1) * (n_rad + 1) * n_circ * 3);
    for k in 0..=n_axial {
        for q in 0..=n_rad {
            let r = r_inner + q as f64 * dr;
            for c in 0..n_circ {
                let theta = 2.0 * std::f64::consts::PI * c as f64 / n_circ as f64;
                nodes.push(r * theta.cos());
                nodes.push(r * theta.sin());
                nodes.push(zs[k]);
            }
        }
    }

    // Index-space cube per cell: bit 2 -> axial, bit 1 -> radial,
    // bit 0 -> circumferential (wrapping). The shared Kuhn diagonal keeps
    // faces conforming across the periodic seam.
    let mut elements = Vec::with_capacity(6 * n_axial * n_rad * n_circ * 4);
    for k in 0..n_axial {
        for q in 0..n_rad {
            for c in 0..n_circ {
                let corner = |bits: u8| {
                    node_id(
                        k + ((bits >> 2) & 1) as usize,
                        q + ((bits >> 1) & 1) as usize,
                        (c + (bits & 1) as usize) % n_circ,
                    )
                };
                for tet in &KUHN_TETS {
                    for &b in tet {
                        elements.push(corner(b));
                    }
                }
            }
        }
    }

    finish_mesh(3, nodes, elements, 2, end_tag)
}

/// Orients elements positively, extracts and tags boundary facets, and
/// validates element quality.
fn finish_mesh(
    dim: usize,
    nodes: Vec<f64>,
    mut elements: Vec<usize>,
    axis: usize,
    end_tag: BoundaryTag,
) -> Result<Mesh> {
    let mut mesh = Mesh {
        dim,
        nodes,
        elements: Vec::new(),
        facets: Vec::new(),
        axis,
        axis_extent: (0.0, 0.0),
    };

    // Fix orientation: swap the last two vertices when the signed volume is
    // negative, then reject degenerate elements.
    let npe = dim + 1;
    let n_elem = elements.len() / npe;
    mesh.elements = std::mem::take(&mut elements);
    for e in 0..n_elem {
        let vol = mesh.element_volume(e);
        if vol < 0.0 {
            mesh.elements.swap(e * npe + npe - 2, e * npe + npe - 1);
        }
    }
    for e in 0..n_elem {
        let vol = mesh.element_volume(e);
        if !(vol > 0.0) {
            return Err(Error::Mesh(format!("element {e} is degenerate (volume {vol})")));
        }
    }

    let (lo, hi) = axis_extent(&mesh, axis);
    mesh.axis_extent = (lo, hi);
    let tol = 1e-9 * (hi - lo).max(1.0);

    // Boundary facets are the element faces that occur exactly once.
    let mut face_count: HashMap<Vec<usize>, (usize, usize, [usize; 3])> = HashMap::new();
    for e in 0..n_elem {
        let conn = mesh.element(e).to_vec();
        let faces: Vec<[usize; 3]> = if dim == 2 {
            vec![
                [conn[0], conn[1], usize::MAX],
                [conn[1], conn[2], usize::MAX],
                [conn[2], conn[0], usize::MAX],
            ]
        } else {
            vec![
                [conn[0], conn[1], conn[2]],
                [conn[0], conn[1], conn[3]],
                [conn[0], conn[2], conn[3]],
                [conn[1], conn[2], conn[3]],
            ]
        };
        for face in faces {
            let mut key: Vec<usize> = face[..dim].to_vec();
            key.sort_unstable();
            let entry = face_count.entry(key).or_insert((0, e, face));
            entry.0 += 1;
        }
    }

    let mut boundary: Vec<(usize, [usize; 3])> = face_count
        .into_values()
        .filter(|(count, _, _)| *count == 1)
        .map(|(_, e, face)| (e, face))
        .collect();
    boundary.sort_unstable_by_key(|(e, face)| (*e, *face));

    for (e, face) in boundary {
        let on_plane = |value: f64| {
            face[..dim]
                .iter()
                .all(|&n| (mesh.node(n)[axis] - value).abs() <= tol)
        };
        let tag = if on_plane(lo) {
            BoundaryTag::DirichletLeft
        } else if on_plane(hi) {
            end_tag
        } else {
            BoundaryTag::FreeBoundary
        };
        mesh.facets.push(BoundaryFacet { nodes: face, element: e, tag });
    }

    Ok(mesh)
}

fn axis_extent(mesh: &Mesh, axis: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..mesh.n_nodes() {
        let v = mesh.node(i)[axis];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn beam_2d_minimal_counts_and_area() {
        let m = build_beam_2d(1.0, 0.1, 1, 1).unwrap();
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.n_elements(), 2);
        assert_relative_eq!(m.total_volume(), 0.1, max_relative = 1e-7);
    }

    #[test]
    fn beam_2d_desk_scale_counts() {
        let m = build_beam_2d(1.0, 0.1, 40, 4).unwrap();
        assert_eq!(m.n_nodes(), 205);
        assert_eq!(m.n_elements(), 320);
        assert_relative_eq!(m.total_volume(), 0.1, max_relative = 1e-7);
    }

    #[test]
    fn beam_3d_unit_cube() {
        let m = build_beam_3d(1.0, 1.0, 1.0, 1, 1, 1).unwrap();
        assert_eq!(m.n_nodes(), 8);
        assert_eq!(m.n_elements(), 6);
        assert_relative_eq!(m.total_volume(), 1.0, max_relative = 1e-7);
    }

    #[test]
    fn beam_3d_counts_and_volume() {
        let m = build_beam_3d(1.0, 0.2, 0.079, 20, 4, 2).unwrap();
        assert_eq!(m.n_nodes(), 21 * 5 * 3);
        assert_eq!(m.n_elements(), 6 * 20 * 4 * 2);
        assert_relative_eq!(m.total_volume(), 1.0 * 0.2 * 0.079, max_relative = 1e-7);
    }

    #[test]
    fn tube_volume_close_to_annulus() {
        let m = build_tube_3d(0.28, 0.30, 2.0, 16, 2, 8).unwrap();
        let exact = std::f64::consts::PI * (0.30f64.powi(2) - 0.28f64.powi(2)) * 2.0;
        let defect = (exact - m.total_volume()) / exact;
        assert!(defect > 0.0, "polygonal cross-section must underestimate");
        assert!(defect < 0.03, "volume defect {defect} exceeds 3%");
        assert_eq!(m.n_nodes(), 16 * 3 * 9);
        assert_eq!(m.n_elements(), 6 * 16 * 2 * 8);
    }

    #[test]
    fn tube_diameter_thickness_ratio() {
        assert_relative_eq!(diameter_to_thickness(0.28, 0.30), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn all_volumes_positive() {
        for m in [
            build_beam_2d(1.0, 0.1, 7, 3).unwrap(),
            build_beam_3d(1.0, 0.2, 0.079, 5, 3, 2).unwrap(),
            build_tube_3d(0.28, 0.30, 2.0, 12, 2, 5).unwrap(),
        ] {
            for e in 0..m.n_elements() {
                assert!(m.element_volume(e) > 0.0, "element {e} not positively oriented");
            }
        }
    }

    /// Every element face is shared by exactly two elements or lies on the
    /// boundary, and the extracted boundary matches that face census.
    fn check_watertight(m: &Mesh) {
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let npe = m.dim + 1;
        for e in 0..m.n_elements() {
            let conn = m.element(e);
            for skip in 0..npe {
                let mut key: Vec<usize> = (0..npe).filter(|&i| i != skip).map(|i| conn[i]).collect();
                if m.dim == 2 && key.len() != 2 {
                    continue;
                }
                key.sort_unstable();
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        // In 2-D the loop above enumerates each edge once per opposite vertex,
        // which is exactly the three edges of each triangle.
        let boundary_count = counts.values().filter(|&&c| c == 1).count();
        assert!(counts.values().all(|&c| c == 1 || c == 2), "non-manifold face");
        assert_eq!(boundary_count, m.facets.len());
    }

    #[test]
    fn meshes_are_watertight() {
        check_watertight(&build_beam_2d(1.0, 0.1, 6, 4).unwrap());
        check_watertight(&build_beam_3d(1.0, 0.2, 0.1, 4, 3, 2).unwrap());
        check_watertight(&build_tube_3d(0.28, 0.30, 2.0, 12, 2, 4).unwrap());
    }

    #[test]
    fn beam_2d_boundary_tags() {
        let (nx, ny) = (6, 4);
        let m = build_beam_2d(1.0, 0.1, nx, ny).unwrap();
        let count = |tag| m.facets.iter().filter(|f| f.tag == tag).count();
        assert_eq!(count(BoundaryTag::DirichletLeft), ny);
        assert_eq!(count(BoundaryTag::DirichletRight), ny);
        assert_eq!(count(BoundaryTag::FreeBoundary), 2 * nx);
        assert_eq!(m.facets.len(), 2 * nx + 2 * ny);

        let left = m.tagged_nodes(BoundaryTag::DirichletLeft);
        assert_eq!(left.len(), ny + 1);
        for &n in &left {
            assert_eq!(m.node(n)[0], 0.0);
        }
    }

    #[test]
    fn neumann_end_tag_is_honored() {
        let m = build_beam_2d_tagged(1.0, 0.1, 5, 2, BoundaryTag::NeumannRight).unwrap();
        let right = m.tagged_nodes(BoundaryTag::NeumannRight);
        assert_eq!(right.len(), 3);
        assert!(m.tagged_nodes(BoundaryTag::DirichletRight).is_empty());
    }

    #[test]
    fn tube_clamps_at_z_zero() {
        let m = build_tube_3d(0.28, 0.30, 2.0, 12, 1, 4).unwrap();
        let left = m.tagged_nodes(BoundaryTag::DirichletLeft);
        assert_eq!(left.len(), 12 * 2);
        for &n in &left {
            assert_eq!(m.node(n)[2], 0.0);
        }
        let right = m.tagged_nodes(BoundaryTag::NeumannRight);
        assert_eq!(right.len(), 12 * 2);
    }

    /// With an even number of cells across the height, the 2-D triangulation
    /// maps onto itself under reflection through the midline: mirrored cells
    /// have bitwise-equal heights and the checkerboard diagonals swap
    /// orientation consistently.
    #[test]
    fn beam_2d_is_reflection_symmetric() {
        let (nx, ny) = (8, 4);
        let m = build_beam_2d(1.0, 0.1, nx, ny).unwrap();
        let node_id = |i: usize, j: usize| i * (ny + 1) + j;

        // Mirrored row spacings are bitwise equal.
        for j in 0..ny {
            let dy = m.node(node_id(0, j + 1))[1] - m.node(node_id(0, j))[1];
            let dy_m = m.node(node_id(0, ny - j))[1] - m.node(node_id(0, ny - j - 1))[1];
            assert_eq!(dy.to_bits(), dy_m.to_bits());
        }

        // The element set is invariant under the node permutation
        // (i, j) -> (i, ny - j).
        let mirror = |n: usize| {
            let i = n / (ny + 1);
            let j = n % (ny + 1);
            node_id(i, ny - j)
        };
        let mut element_sets: Vec<Vec<usize>> = Vec::new();
        for e in 0..m.n_elements() {
            let mut conn = m.element(e).to_vec();
            conn.sort_unstable();
            element_sets.push(conn);
        }
        element_sets.sort();
        for e in 0..m.n_elements() {
            let mut mirrored: Vec<usize> = m.element(e).iter().map(|&n| mirror(n)).collect();
            mirrored.sort_unstable();
            assert!(
                element_sets.binary_search(&mirrored).is_ok(),
                "mirror of element {e} is not in the mesh"
            );
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(build_beam_2d(0.0, 0.1, 4, 4).is_err());
        assert!(build_beam_2d(1.0, -0.1, 4, 4).is_err());
        assert!(build_beam_2d(1.0, 0.1, 0, 4).is_err());
        assert!(build_beam_3d(1.0, 1.0, 1.0, 1, 0, 1).is_err());
        assert!(build_tube_3d(0.30, 0.28, 2.0, 12, 1, 4).is_err());
        assert!(build_tube_3d(0.28, 0.30, 2.0, 2, 1, 4).is_err());
    }

    #[test]
    fn vtk_export_roundtrip_counts() {
        let m = build_beam_2d(1.0, 0.1, 3, 2).unwrap();
        let path = std::env::temp_dir().join("buckrom_mesh_test.vtk");
        m.write_vtk(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&format!("POINTS {} double", m.n_nodes())));
        assert!(text.contains(&format!("CELL_TYPES {}", m.n_elements())));
        let _ = std::fs::remove_file(&path);
    }

    proptest! {
        #[test]
        fn prop_beam_2d_counts_and_volume(nx in 1usize..12, ny in 1usize..8) {
            let m = build_beam_2d(2.0, 0.5, nx, ny).unwrap();
            prop_assert_eq!(m.n_nodes(), (nx + 1) * (ny + 1));
            prop_assert_eq!(m.n_elements(), 2 * nx * ny);
            prop_assert!((m.total_volume() - 1.0).abs() < 1e-6);
            for e in 0..m.n_elements() {
                prop_assert!(m.element_volume(e) > 0.0);
            }
        }

        #[test]
        fn prop_beam_3d_counts_and_volume(nx in 1usize..5, ny in 1usize..4, nz in 1usize..4) {
            let m = build_beam_3d(1.0, 0.5, 0.25, nx, ny, nz).unwrap();
            prop_assert_eq!(m.n_nodes(), (nx + 1) * (ny + 1) * (nz + 1));
            prop_assert_eq!(m.n_elements(), 6 * nx * ny * nz);
            prop_assert!((m.total_volume() - 0.125).abs() < 1e-6);
        }
    }
}
