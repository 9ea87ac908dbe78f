//! Persistence of offline results in one binary container.
//!
//! The file layout is a fixed header (magic, format version, mesh
//! fingerprint, section count) followed by tagged sections, each carrying its
//! own byte length so unknown tags can be skipped. Stored sections: the state
//! basis with its singular spectrum, the optional force-interpolation model,
//! and the optional raw state snapshots. Loading verifies the header, and
//! [`Artifacts::verify_mesh`] rejects artifacts built for a different mesh;
//! truncated or foreign files surface as stale-artifact errors.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::deim::DeimModel;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::rom::{PodBasis, SnapshotSet};

const MAGIC: [u8; 4] = *b"BROM";
const VERSION: u32 = 1;

const TAG_BASIS: u8 = 1;
const TAG_DEIM: u8 = 2;
const TAG_SNAPSHOTS: u8 = 3;

/// The offline products of one scenario, bound to a mesh fingerprint.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub fingerprint: u64,
    pub basis: PodBasis,
    pub deim: Option<DeimModel>,
    pub snapshots: Option<SnapshotSet>,
}

/// FNV-1a 64-bit hash over the mesh topology and exact coordinate bits.
pub fn mesh_fingerprint(mesh: &Mesh) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&(mesh.dim as u64).to_le_bytes());
    eat(&(mesh.nodes.len() as u64).to_le_bytes());
    for &x in &mesh.nodes {
        eat(&x.to_bits().to_le_bytes());
    }
    eat(&(mesh.elements.len() as u64).to_le_bytes());
    for &n in &mesh.elements {
        eat(&(n as u64).to_le_bytes());
    }
    h
}

impl Artifacts {
    /// Fails with a stale-artifact error when the artifacts were built for a
    /// different mesh.
    pub fn verify_mesh(&self, mesh: &Mesh) -> Result<()> {
        let current = mesh_fingerprint(mesh);
        if current != self.fingerprint {
            return Err(Error::StaleArtifacts(format!(
                "mesh fingerprint {current:016x} does not match stored {:016x}; \
                 re-run the offline phase",
                self.fingerprint
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut sections: Vec<(u8, Vec<u8>)> =
            vec![(TAG_BASIS, encode_basis(&self.basis))];
        if let Some(deim) = &self.deim {
            sections.push((TAG_DEIM, encode_deim(deim)));
        }
        if let Some(snapshots) = &self.snapshots {
            sections.push((TAG_SNAPSHOTS, encode_snapshots(snapshots)));
        }

        let file = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("creating {}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(file);
        let write = |w: &mut dyn Write| -> std::io::Result<()> {
            w.write_all(&MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            w.write_all(&self.fingerprint.to_le_bytes())?;
            w.write_all(&(sections.len() as u32).to_le_bytes())?;
            for (tag, payload) in &sections {
                w.write_all(&[*tag])?;
                w.write_all(&(payload.len() as u64).to_le_bytes())?;
                w.write_all(payload)?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("opening {}: {e}", path.display())))?;
        let mut r = Cursor { inner: std::io::BufReader::new(file) };

        let magic = r.bytes::<4>()?;
        if magic != MAGIC {
            return Err(Error::StaleArtifacts(format!(
                "{} is not an artifact file (bad magic)",
                path.display()
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::StaleArtifacts(format!(
                "artifact format version {version} is not supported (expected {VERSION})"
            )));
        }
        let fingerprint = r.u64()?;
        let n_sections = r.u32()?;

        let mut basis = None;
        let mut deim = None;
        let mut snapshots = None;
        for _ in 0..n_sections {
            let tag = r.bytes::<1>()?[0];
            let len = r.u64()? as usize;
            let payload = r.vec(len)?;
            match tag {
                TAG_BASIS => basis = Some(decode_basis(&payload)?),
                TAG_DEIM => deim = Some(decode_deim(&payload)?),
                TAG_SNAPSHOTS => snapshots = Some(decode_snapshots(&payload)?),
                _ => {} // tolerate sections from newer writers
            }
        }
        let basis = basis.ok_or_else(|| {
            Error::StaleArtifacts("artifact file carries no basis section".into())
        })?;
        Ok(Artifacts { fingerprint, basis, deim, snapshots })
    }
}

fn encode_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    out.extend((m.nrows() as u64).to_le_bytes());
    out.extend((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend(v.to_le_bytes());
    }
}

fn encode_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.extend((values.len() as u64).to_le_bytes());
    for v in values {
        out.extend(v.to_le_bytes());
    }
}

fn encode_basis(basis: &PodBasis) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(basis.eps.to_le_bytes());
    encode_f64s(&mut out, &basis.sigma);
    encode_matrix(&mut out, &basis.modes);
    out
}

fn encode_deim(deim: &DeimModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend((deim.m_init as u64).to_le_bytes());
    out.extend((deim.indices.len() as u64).to_le_bytes());
    for &i in &deim.indices {
        out.extend((i as u64).to_le_bytes());
    }
    encode_f64s(&mut out, &deim.sigma);
    encode_matrix(&mut out, &deim.modes);
    out
}

fn encode_snapshots(snapshots: &SnapshotSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend((snapshots.n_dofs as u64).to_le_bytes());
    out.extend((snapshots.columns.len() as u64).to_le_bytes());
    for column in &snapshots.columns {
        for v in column.iter() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

fn decode_basis(payload: &[u8]) -> Result<PodBasis> {
    let mut s = Slice { data: payload, pos: 0 };
    let eps = s.f64()?;
    let sigma = s.f64s()?;
    let modes = s.matrix()?;
    s.finish()?;
    Ok(PodBasis { modes, sigma, eps })
}

fn decode_deim(payload: &[u8]) -> Result<DeimModel> {
    let mut s = Slice { data: payload, pos: 0 };
    let m_init = s.u64()? as usize;
    let n_indices = s.u64()? as usize;
    let mut indices = Vec::with_capacity(n_indices);
    for _ in 0..n_indices {
        indices.push(s.u64()? as usize);
    }
    let sigma = s.f64s()?;
    let modes = s.matrix()?;
    s.finish()?;
    if indices.len() < modes.ncols() || m_init == 0 || m_init > modes.ncols() {
        return Err(Error::StaleArtifacts(
            "force-interpolation section is internally inconsistent".into(),
        ));
    }
    Ok(DeimModel { modes, indices, sigma, m_init })
}

fn decode_snapshots(payload: &[u8]) -> Result<SnapshotSet> {
    let mut s = Slice { data: payload, pos: 0 };
    let n_dofs = s.u64()? as usize;
    let n_cols = s.u64()? as usize;
    let mut columns = Vec::with_capacity(n_cols);
    for _ in 0..n_cols {
        let mut column = DVector::zeros(n_dofs);
        for i in 0..n_dofs {
            column[i] = s.f64()?;
        }
        columns.push(column);
    }
    s.finish()?;
    SnapshotSet::from_columns(n_dofs, columns)
}

/// Reader over a file with truncation mapped to stale-artifact errors.
struct Cursor<R: Read> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>()?))
    }

    fn vec(&mut self, len: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        Ok(buf)
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::StaleArtifacts("artifact file is truncated".into())
    } else {
        Error::Io(e.to_string())
    }
}

/// Reader over one decoded section payload.
struct Slice<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Slice<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::StaleArtifacts("artifact section is truncated".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let nrows = self.u64()? as usize;
        let ncols = self.u64()? as usize;
        let mut m = DMatrix::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::StaleArtifacts(
                "artifact section carries trailing bytes".into(),
            ));
        }
        Ok(())
    }
}
