//! The `nrv` container: one JSON header line followed by a little-endian
//! payload in x-fastest order.
//!
//! ```text
//! {"dims":[nx,ny,nz],"spacing_um":[sx,sy,sz],"dtype":"u16","kind":"raw","provenance":"real"}\n
//! <nx*ny*nz little-endian samples>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{voxel_count, DType, Kind, Provenance, Volume3D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrvHeader {
    pub dims: [usize; 3],
    pub spacing_um: [f64; 3],
    pub dtype: String,
    pub kind: Kind,
    pub provenance: Provenance,
}

impl NrvHeader {
    pub fn of(v: &Volume3D) -> NrvHeader {
        NrvHeader {
            dims: v.dims(),
            spacing_um: v.spacing(),
            dtype: match v.dtype() {
                DType::U16 => "u16".into(),
                DType::F32 => "f32".into(),
            },
            kind: v.kind(),
            provenance: v.provenance(),
        }
    }

    fn dtype(&self) -> Result<DType> {
        match self.dtype.as_str() {
            "u16" => Ok(DType::U16),
            "f32" => Ok(DType::F32),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

pub fn read_nrv<R: Read>(reader: R) -> Result<Volume3D> {
    let mut reader = BufReader::new(reader);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader("missing header terminator".into()));
    }
    line.pop();
    let header: NrvHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let dtype = header.dtype()?;

    let n = voxel_count(header.dims);
    let width = match dtype {
        DType::U16 => 2,
        DType::F32 => 4,
    };
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != n * width {
        return Err(Error::PayloadSizeMismatch {
            expected: n * width,
            found: payload.len(),
        });
    }

    let data: Vec<f32> = match dtype {
        DType::U16 => payload
            .chunks_exact(2)
            .map(|c| LittleEndian::read_u16(c) as f32)
            .collect(),
        DType::F32 => payload.chunks_exact(4).map(LittleEndian::read_f32).collect(),
    };
    let v = Volume3D::from_parts_unchecked(
        header.dims,
        header.spacing_um,
        data,
        dtype,
        header.kind,
        header.provenance,
    );
    v.validate()?;
    Ok(v)
}

pub fn write_nrv<W: Write>(v: &Volume3D, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let header = serde_json::to_string(&NrvHeader::of(v))
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    match v.dtype() {
        DType::U16 => {
            let mut buf = vec![0u8; v.len() * 2];
            for (chunk, &x) in buf.chunks_exact_mut(2).zip(v.data()) {
                LittleEndian::write_u16(chunk, x as u16);
            }
            w.write_all(&buf)?;
        }
        DType::F32 => {
            let mut buf = vec![0u8; v.len() * 4];
            LittleEndian::write_f32_into(v.data(), &mut buf);
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn to_bytes(v: &Volume3D) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len() * 4 + 128);
    write_nrv(v, &mut out).expect("writing to memory cannot fail");
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Volume3D> {
    read_nrv(bytes)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    read_nrv(File::open(path)?)
}

pub fn save_volume(v: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    write_nrv(v, File::create(path)?)
}
