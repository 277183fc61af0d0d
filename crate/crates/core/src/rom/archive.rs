//! Versioned binary container for bases and reduced operators.
//!
//! Layout (little endian): magic `RBARCHV1`, format version `u32`, kind
//! string, metadata string (JSON), section count `u32`, then per section
//! its name, `rows: u64`, `cols: u64` and column-major `f64` data. The file
//! ends with the SHA-256 digest of everything before it. Strings are a
//! `u32` byte length followed by UTF-8.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::{InnerProductTag, PodBasis, ReducedTaylorGreen, ReducedTracer, RomError};
use crate::fem2d::{NewtonConfig, TimeGrid};

const MAGIC: &[u8; 8] = b"RBARCHV1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveSection {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub kind: String,
    pub meta: serde_json::Value,
    pub sections: Vec<ArchiveSection>,
}

fn io_err(e: impl std::fmt::Display) -> RomError {
    RomError::Archive(e.to_string())
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn read_str(cur: &mut Cursor<&[u8]>) -> Result<String, RomError> {
    let len = cur.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut buf = vec![0u8; len];
    cur.read_exact(&mut buf).map_err(io_err)?;
    String::from_utf8(buf).map_err(io_err)
}

impl Archive {
    pub fn new(kind: &str) -> Self {
        Self { kind: kind.to_string(), meta: serde_json::Value::Object(Default::default()), sections: Vec::new() }
    }

    pub fn push_matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        self.sections.push(ArchiveSection { name: name.into(), rows: m.nrows(), cols: m.ncols(), data: m.as_slice().to_vec() });
    }

    pub fn push_vector(&mut self, name: &str, v: &[f64]) {
        self.sections.push(ArchiveSection { name: name.into(), rows: v.len(), cols: 1, data: v.to_vec() });
    }

    fn section(&self, name: &str) -> Result<&ArchiveSection, RomError> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| RomError::Archive(format!("{} archive has no section {name:?}", self.kind)))
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>, RomError> {
        let s = self.section(name)?;
        Ok(DMatrix::from_column_slice(s.rows, s.cols, &s.data))
    }

    pub fn vector(&self, name: &str) -> Result<DVector<f64>, RomError> {
        let s = self.section(name)?;
        Ok(DVector::from_column_slice(&s.data))
    }

    fn expect_kind(&self, kind: &str) -> Result<(), RomError> {
        if self.kind != kind {
            return Err(RomError::Archive(format!("expected a {kind} archive, found {}", self.kind)));
        }
        Ok(())
    }

    fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T, RomError> {
        let v = self.meta.get(key).ok_or_else(|| RomError::Archive(format!("missing metadata {key:?}")))?;
        serde_json::from_value(v.clone()).map_err(io_err)
    }

    fn body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
        write_str(&mut out, &self.kind);
        write_str(&mut out, &self.meta.to_string());
        out.write_u32::<LittleEndian>(self.sections.len() as u32).unwrap();
        for s in &self.sections {
            write_str(&mut out, &s.name);
            out.write_u64::<LittleEndian>(s.rows as u64).unwrap();
            out.write_u64::<LittleEndian>(s.cols as u64).unwrap();
            for v in &s.data {
                out.write_f64::<LittleEndian>(*v).unwrap();
            }
        }
        out
    }

    /// Hex SHA-256 digest of the archive content.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body();
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RomError> {
        if bytes.len() < MAGIC.len() + 32 || &bytes[..8] != MAGIC {
            return Err(RomError::Archive("not an archive (bad magic)".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(RomError::Archive("content hash mismatch".into()));
        }
        let mut cur = Cursor::new(body);
        cur.set_position(8);
        let version = cur.read_u32::<LittleEndian>().map_err(io_err)?;
        if version != FORMAT_VERSION {
            return Err(RomError::Archive(format!("unsupported archive version {version}")));
        }
        let kind = read_str(&mut cur)?;
        let meta = serde_json::from_str(&read_str(&mut cur)?).map_err(io_err)?;
        let count = cur.read_u32::<LittleEndian>().map_err(io_err)?;
        let mut sections = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = read_str(&mut cur)?;
            let rows = cur.read_u64::<LittleEndian>().map_err(io_err)? as usize;
            let cols = cur.read_u64::<LittleEndian>().map_err(io_err)? as usize;
            let len = rows.checked_mul(cols).ok_or_else(|| RomError::Archive("section too large".into()))?;
            let mut data = vec![0.0; len];
            cur.read_f64_into::<LittleEndian>(&mut data).map_err(io_err)?;
            sections.push(ArchiveSection { name, rows, cols, data });
        }
        Ok(Self { kind, meta, sections })
    }

    pub fn write(&self, path: &Path) -> Result<(), RomError> {
        let mut f = std::fs::File::create(path).map_err(io_err)?;
        f.write_all(&self.to_bytes()).map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self, RomError> {
        let bytes = std::fs::read(path).map_err(|e| RomError::Archive(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

impl PodBasis {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("pod_basis");
        a.meta = serde_json::json!({ "tag": self.tag, "rank_deficient": self.rank_deficient });
        a.push_matrix("modes", &self.modes);
        a.push_vector("singular_values", &self.singular_values);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self, RomError> {
        a.expect_kind("pod_basis")?;
        Ok(Self {
            modes: a.matrix("modes")?,
            singular_values: a.vector("singular_values")?.as_slice().to_vec(),
            tag: a.meta_field::<InnerProductTag>("tag")?,
            rank_deficient: a.meta_field("rank_deficient")?,
        })
    }
}

impl ReducedTaylorGreen {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("reduced_taylor_green");
        a.meta = serde_json::json!({ "grid": self.grid, "size": self.len() });
        a.push_matrix("mass", &self.mass);
        a.push_matrix("stiffness", &self.stiffness);
        a.push_matrix("advection", &self.advection);
        a.push_vector("initial", self.initial.as_slice());
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self, RomError> {
        a.expect_kind("reduced_taylor_green")?;
        Ok(Self {
            mass: a.matrix("mass")?,
            stiffness: a.matrix("stiffness")?,
            advection: a.matrix("advection")?,
            initial: a.vector("initial")?,
            grid: a.meta_field::<TimeGrid>("grid")?,
        })
    }
}

impl ReducedTracer {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("reduced_tracer");
        a.meta = serde_json::json!({
            "grid": self.grid,
            "newton": self.newton,
            "d_m": self.d_m,
            "d_l": self.d_l,
            "regions": self.num_regions(),
            "head_size": self.head_size(),
            "concentration_size": self.concentration_size(),
        });
        for (name, list) in [("a", &self.a), ("b", &self.b), ("c", &self.c)] {
            for (r, m) in list.iter().enumerate() {
                a.push_matrix(&format!("{name}{r}"), m);
            }
        }
        a.push_matrix("mass", &self.mass);
        a.push_matrix("stiffness", &self.stiffness);
        a.push_vector("f", self.f.as_slice());
        a.push_vector("g", self.g.as_slice());
        a.push_vector("head_guess", self.head_guess.as_slice());
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self, RomError> {
        a.expect_kind("reduced_tracer")?;
        let regions: usize = a.meta_field("regions")?;
        let list = |name: &str| (0..regions).map(|r| a.matrix(&format!("{name}{r}"))).collect::<Result<Vec<_>, _>>();
        Ok(Self {
            a: list("a")?,
            b: list("b")?,
            c: list("c")?,
            mass: a.matrix("mass")?,
            stiffness: a.matrix("stiffness")?,
            f: a.vector("f")?,
            g: a.vector("g")?,
            d_m: a.meta_field("d_m")?,
            d_l: a.meta_field("d_l")?,
            grid: a.meta_field::<TimeGrid>("grid")?,
            newton: a.meta_field::<NewtonConfig>("newton")?,
            head_guess: a.vector("head_guess")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Archive {
        let mut a = Archive::new("test");
        a.meta = serde_json::json!({ "x": 1 });
        a.push_matrix("m", &DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 + 0.5));
        a.push_vector("v", &[1.0, -2.0]);
        a
    }

    #[test]
    fn round_trip() {
        let a = sample();
        let b = Archive::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.matrix("m").unwrap()[(1, 2)], 5.5);
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        bytes[30] ^= 1;
        assert!(matches!(Archive::from_bytes(&bytes), Err(RomError::Archive(_))));
        assert!(Archive::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn missing_section_is_named() {
        let err = sample().matrix("nope").unwrap_err().to_string();
        assert!(err.contains("nope"));
    }

    #[test]
    fn reduced_taylor_green_round_trip() {
        let rom = ReducedTaylorGreen {
            mass: DMatrix::identity(2, 2),
            stiffness: DMatrix::from_element(2, 2, 0.5),
            advection: DMatrix::zeros(2, 2),
            initial: DVector::from_vec(vec![1.0, 2.0]),
            grid: TimeGrid::new(1.0, 0.1).unwrap(),
        };
        let back = ReducedTaylorGreen::from_archive(&Archive::from_bytes(&rom.to_archive().to_bytes()).unwrap()).unwrap();
        assert_eq!(rom, back);
        assert!(PodBasis::from_archive(&rom.to_archive()).is_err());
    }
}
