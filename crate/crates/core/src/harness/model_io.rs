//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "MMMLMODL"
//! version  u32      currently 1
//! count    u32      number of arrays
//! array*   count times:
//!   name_len u16, name (UTF-8)
//!   dtype    u8     1 = f64, 2 = u64, 3 = UTF-8 strings
//!   ndim     u8
//!   dims     u64 × ndim
//!   payload  f64/u64: product(dims) values
//!            strings: dims[0] × (u32 length, bytes)
//! ```
//!
//! Matrices are stored column-major with `dims = [rows, cols]`; stacks of
//! per-set matrices use `dims = [N, rows, cols]`, each matrix column-major.

use std::collections::HashMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use crate::error::{MmmlError, Result};
use crate::kernels::KernelKind;
use crate::metric::{EmbeddingModel, LearnedMetric, ModelParts};
use crate::set_model::{GrassmannPoint, SpdPoint};

pub const MAGIC: &[u8; 8] = b"MMMLMODL";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F64: u8 = 1;
const DTYPE_U64: u8 = 2;
const DTYPE_STR: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
enum ArrayData {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Str(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
struct NamedArray {
    name: String,
    dims: Vec<u64>,
    data: ArrayData,
}

fn f64_array(name: &str, dims: &[usize], data: Vec<f64>) -> NamedArray {
    NamedArray {
        name: name.into(),
        dims: dims.iter().map(|&d| d as u64).collect(),
        data: ArrayData::F64(data),
    }
}

fn stack_matrices<'a>(
    name: &str,
    mats: impl ExactSizeIterator<Item = &'a DMatrix<f64>>,
    rows: usize,
    cols: usize,
) -> NamedArray {
    let n = mats.len();
    let mut data = Vec::with_capacity(n * rows * cols);
    for m in mats {
        data.extend_from_slice(m.as_slice());
    }
    f64_array(name, &[n, rows, cols], data)
}

fn write_array(out: &mut Vec<u8>, a: &NamedArray) -> Result<()> {
    let io = |e| MmmlError::Format(format!("write failed: {e}"));
    let name = a.name.as_bytes();
    out.write_u16::<LittleEndian>(name.len() as u16)
        .map_err(io)?;
    out.extend_from_slice(name);
    let dtype = match a.data {
        ArrayData::F64(_) => DTYPE_F64,
        ArrayData::U64(_) => DTYPE_U64,
        ArrayData::Str(_) => DTYPE_STR,
    };
    out.push(dtype);
    out.push(a.dims.len() as u8);
    for &d in &a.dims {
        out.write_u64::<LittleEndian>(d).map_err(io)?;
    }
    match &a.data {
        ArrayData::F64(v) => {
            for &x in v {
                out.write_f64::<LittleEndian>(x).map_err(io)?;
            }
        }
        ArrayData::U64(v) => {
            for &x in v {
                out.write_u64::<LittleEndian>(x).map_err(io)?;
            }
        }
        ArrayData::Str(v) => {
            for s in v {
                out.write_u32::<LittleEndian>(s.len() as u32).map_err(io)?;
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
    Ok(())
}

fn truncated(_: std::io::Error) -> MmmlError {
    MmmlError::Format("file is truncated".into())
}

fn read_array(cur: &mut Cursor<&[u8]>) -> Result<NamedArray> {
    let name_len = cur.read_u16::<LittleEndian>().map_err(truncated)? as usize;
    let mut name = vec![0; name_len];
    cur.read_exact(&mut name).map_err(truncated)?;
    let name =
        String::from_utf8(name).map_err(|_| MmmlError::Format("array name is not UTF-8".into()))?;
    let dtype = cur.read_u8().map_err(truncated)?;
    let ndim = cur.read_u8().map_err(truncated)? as usize;
    let dims = (0..ndim)
        .map(|_| cur.read_u64::<LittleEndian>().map_err(truncated))
        .collect::<Result<Vec<u64>>>()?;
    let count = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| MmmlError::Format(format!("array '{name}' has overflowing dims")))?;
    let remaining = (cur.get_ref().len() as u64).saturating_sub(cur.position());
    let min_bytes = match dtype {
        DTYPE_STR => count.saturating_mul(4),
        _ => count.saturating_mul(8),
    };
    if min_bytes > remaining {
        return Err(MmmlError::Format("file is truncated".into()));
    }
    let data = match dtype {
        DTYPE_F64 => ArrayData::F64(
            (0..count)
                .map(|_| cur.read_f64::<LittleEndian>().map_err(truncated))
                .collect::<Result<_>>()?,
        ),
        DTYPE_U64 => ArrayData::U64(
            (0..count)
                .map(|_| cur.read_u64::<LittleEndian>().map_err(truncated))
                .collect::<Result<_>>()?,
        ),
        DTYPE_STR => ArrayData::Str(
            (0..count)
                .map(|_| {
                    let len = cur.read_u32::<LittleEndian>().map_err(truncated)? as usize;
                    let mut buf = vec![0; len];
                    cur.read_exact(&mut buf).map_err(truncated)?;
                    String::from_utf8(buf)
                        .map_err(|_| MmmlError::Format("string is not UTF-8".into()))
                })
                .collect::<Result<_>>()?,
        ),
        other => {
            return Err(MmmlError::Format(format!(
                "array '{name}' has unknown dtype {other}"
            )))
        }
    };
    Ok(NamedArray { name, dims, data })
}

/// Serializes a model to bytes.
pub fn encode_model(model: &EmbeddingModel) -> Result<Vec<u8>> {
    let metric = model.metric();
    let n = model.gallery_labels().len();
    let (d, q, d_z, models) = (model.dim(), model.q(), model.d_z(), metric.models());
    let arrays = vec![
        NamedArray {
            name: "shape".into(),
            dims: vec![5],
            data: ArrayData::U64(vec![
                n as u64,
                d as u64,
                q as u64,
                d_z as u64,
                models as u64,
            ]),
        },
        f64_array("hyper", &[2], vec![model.alpha(), model.eps()]),
        NamedArray {
            name: "kinds".into(),
            dims: vec![models as u64],
            data: ArrayData::U64(model.kinds().iter().map(|k| k.code()).collect()),
        },
        f64_array("u", &[models], metric.u().to_vec()),
        f64_array("kernel_scales", &[models], metric.kernel_scales().to_vec()),
        f64_array("e_mat", &[n, d_z], metric.e_mat().as_slice().to_vec()),
        f64_array(
            "eigenvalues",
            &[d_z],
            metric.eigenvalues().as_slice().to_vec(),
        ),
        NamedArray {
            name: "labels".into(),
            dims: vec![n as u64],
            data: ArrayData::Str(model.gallery_labels().to_vec()),
        },
        NamedArray {
            name: "set_ids".into(),
            dims: vec![n as u64],
            data: ArrayData::Str(model.set_ids().to_vec()),
        },
        stack_matrices(
            "spd_c_star",
            model.spd_anchors().iter().map(SpdPoint::c_star),
            d,
            d,
        ),
        stack_matrices(
            "spd_log",
            model.spd_anchors().iter().map(SpdPoint::log_c),
            d,
            d,
        ),
        stack_matrices(
            "grassmann_basis",
            model.grassmann_anchors().iter().map(GrassmannPoint::basis),
            d,
            q,
        ),
        {
            let mut data = Vec::with_capacity(n * models * d_z);
            for e in model.gallery_embeddings() {
                data.extend_from_slice(e.as_slice());
            }
            f64_array("gallery_embeddings", &[n, models * d_z], data)
        },
    ];
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION)
        .expect("vec write");
    out.write_u32::<LittleEndian>(arrays.len() as u32)
        .expect("vec write");
    for a in &arrays {
        write_array(&mut out, a)?;
    }
    Ok(out)
}

struct ArrayTable(HashMap<String, NamedArray>);

impl ArrayTable {
    fn get(&self, name: &str, dims: &[usize]) -> Result<&NamedArray> {
        let a = self
            .0
            .get(name)
            .ok_or_else(|| MmmlError::Format(format!("missing array '{name}'")))?;
        let want: Vec<u64> = dims.iter().map(|&d| d as u64).collect();
        if a.dims != want {
            return Err(MmmlError::Format(format!(
                "array '{name}' has dims {:?}, expected {want:?}",
                a.dims
            )));
        }
        Ok(a)
    }

    fn f64s(&self, name: &str, dims: &[usize]) -> Result<&[f64]> {
        match &self.get(name, dims)?.data {
            ArrayData::F64(v) => Ok(v),
            _ => Err(MmmlError::Format(format!("array '{name}' should hold f64"))),
        }
    }

    fn u64s(&self, name: &str, dims: &[usize]) -> Result<&[u64]> {
        match &self.get(name, dims)?.data {
            ArrayData::U64(v) => Ok(v),
            _ => Err(MmmlError::Format(format!("array '{name}' should hold u64"))),
        }
    }

    fn strings(&self, name: &str, dims: &[usize]) -> Result<&[String]> {
        match &self.get(name, dims)?.data {
            ArrayData::Str(v) => Ok(v),
            _ => Err(MmmlError::Format(format!(
                "array '{name}' should hold strings"
            ))),
        }
    }
}

fn unstack(data: &[f64], n: usize, rows: usize, cols: usize) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|i| {
            DMatrix::from_column_slice(rows, cols, &data[i * rows * cols..(i + 1) * rows * cols])
        })
        .collect()
}

/// Parses bytes produced by [`encode_model`].
pub fn decode_model(bytes: &[u8]) -> Result<EmbeddingModel> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(MmmlError::Format(
            "bad magic bytes; not an mmml model file".into(),
        ));
    }
    let mut cur = Cursor::new(bytes);
    cur.set_position(8);
    let version = cur.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(MmmlError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let count = cur.read_u32::<LittleEndian>().map_err(truncated)?;
    let mut table = HashMap::new();
    for _ in 0..count {
        let a = read_array(&mut cur)?;
        table.insert(a.name.clone(), a);
    }
    if cur.position() != bytes.len() as u64 {
        return Err(MmmlError::Format("trailing bytes after last array".into()));
    }
    let t = ArrayTable(table);

    let shape = t.u64s("shape", &[5])?;
    let [n, d, q, d_z, models] = [0, 1, 2, 3, 4].map(|i| shape[i] as usize);
    let hyper = t.f64s("hyper", &[2])?;
    let kinds = t
        .u64s("kinds", &[models])?
        .iter()
        .map(|&c| {
            KernelKind::from_code(c)
                .ok_or_else(|| MmmlError::Format(format!("unknown kernel code {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let metric = LearnedMetric::from_parts(
        DMatrix::from_column_slice(n, d_z, t.f64s("e_mat", &[n, d_z])?),
        DVector::from_column_slice(t.f64s("eigenvalues", &[d_z])?),
        t.f64s("u", &[models])?.to_vec(),
        t.f64s("kernel_scales", &[models])?.to_vec(),
    )?;
    let c_stars = unstack(t.f64s("spd_c_star", &[n, d, d])?, n, d, d);
    let logs = unstack(t.f64s("spd_log", &[n, d, d])?, n, d, d);
    let spd_anchors = c_stars
        .into_iter()
        .zip(logs)
        .map(|(c, l)| SpdPoint::from_parts(c, l))
        .collect::<Result<Vec<_>>>()?;
    let grassmann_anchors = unstack(t.f64s("grassmann_basis", &[n, d, q])?, n, d, q)
        .into_iter()
        .map(GrassmannPoint::new)
        .collect::<Result<Vec<_>>>()?;
    let emb = t.f64s("gallery_embeddings", &[n, models * d_z])?;
    let width = models * d_z;
    let gallery_embeddings = (0..n)
        .map(|i| DVector::from_column_slice(&emb[i * width..(i + 1) * width]))
        .collect();
    EmbeddingModel::from_parts(ModelParts {
        metric,
        kinds,
        gallery_labels: t.strings("labels", &[n])?.to_vec(),
        set_ids: t.strings("set_ids", &[n])?.to_vec(),
        spd_anchors,
        grassmann_anchors,
        gallery_embeddings,
        q,
        alpha: hyper[0],
        eps: hyper[1],
    })
}

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| MmmlError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel> {
    let bytes = fs::read(path).map_err(|e| MmmlError::io(path, e))?;
    decode_model(&bytes)
}
