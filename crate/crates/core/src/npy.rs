//! Reading and writing arrays in the NPY 1.0 format.
//!
//! Only little-endian, C-order `<f4` and `<f8` payloads are supported.
//! Payloads are always widened to `f64` on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::array::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

/// On-disk element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Dtype {
    #[serde(rename = "<f4")]
    F32,
    #[default]
    #[serde(rename = "<f8")]
    F64,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_descr(descr: &str) -> Result<Self> {
        match descr {
            "<f4" => Ok(Dtype::F32),
            "<f8" => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

/// Decoded header of an NPY file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

impl Header {
    fn dict_string(&self) -> String {
        let shape = match self.shape.len() {
            0 => "()".to_string(),
            1 => format!("({},)", self.shape[0]),
            _ => format!(
                "({})",
                self.shape
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        format!(
            "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
            self.dtype.descr(),
            shape
        )
    }

    /// Full preamble: magic, version, length and the space-padded dict.
    fn encode(&self) -> Vec<u8> {
        let dict = self.dict_string();
        // magic + version + u16 length, then dict + padding + '\n', total multiple of 64
        let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
        let pad = (64 - unpadded % 64) % 64;
        let header_len = dict.len() + pad + 1;

        let mut out = Vec::with_capacity(unpadded + pad);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header_len as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend(std::iter::repeat_n(b' ', pad));
        out.push(b'\n');
        out
    }

    pub fn read<R: Read>(reader: &mut R, origin: &str) -> Result<Self> {
        let mut magic = [0u8; 6];
        read_exact_or(reader, &mut magic, 6)?;
        if magic != MAGIC {
            return Err(Error::BadMagic(origin.to_string()));
        }
        let mut version = [0u8; 2];
        read_exact_or(reader, &mut version, 2)?;
        if version != [1, 0] {
            return Err(Error::UnsupportedVersion {
                major: version[0],
                minor: version[1],
            });
        }
        let mut len = [0u8; 2];
        read_exact_or(reader, &mut len, 2)?;
        let len = u16::from_le_bytes(len) as usize;
        let mut dict = vec![0u8; len];
        read_exact_or(reader, &mut dict, len)?;
        let dict = std::str::from_utf8(&dict)
            .map_err(|_| Error::BadHeader("header is not ASCII".into()))?;
        parse_dict(dict)
    }
}

fn read_exact_or<R: Read>(reader: &mut R, buf: &mut [u8], expected: usize) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    expected,
                    found: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io("<stream>", e)),
        }
    }
    Ok(())
}

/// Parses the Python dict literal of an NPY header.
fn parse_dict(text: &str) -> Result<Header> {
    let body = text.trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| Error::BadHeader(format!("not a dict: {body:?}")))?;

    let value_of = |key: &str| -> Result<&str> {
        let pat = format!("'{key}':");
        let start = body
            .find(&pat)
            .ok_or_else(|| Error::BadHeader(format!("missing key {key:?}")))?
            + pat.len();
        Ok(body[start..].trim_start())
    };

    let descr = value_of("descr")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|d| d.split('\'').next())
        .ok_or_else(|| Error::BadHeader("descr is not a string".into()))?;
    let dtype = Dtype::from_descr(descr)?;

    let fortran = value_of("fortran_order")?;
    if fortran.starts_with("True") {
        return Err(Error::BadHeader("fortran_order=True is not supported".into()));
    } else if !fortran.starts_with("False") {
        return Err(Error::BadHeader("fortran_order is not a bool".into()));
    }

    let shape = value_of("shape")?;
    let shape = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| Error::BadHeader("shape is not a tuple".into()))?;
    let shape = shape
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::BadHeader(format!("bad shape extent {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Header { dtype, shape })
}

/// Reads only the header of an NPY file.
pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Header::read(&mut BufReader::new(file), &path.display().to_string())
}

/// Decodes an NPY stream; the payload is widened to `f64`.
pub fn read_array_from<R: Read>(reader: &mut R, origin: &str) -> Result<Array<f64>> {
    let header = Header::read(reader, origin)?;
    let count: usize = header.shape.iter().product();
    let expected = count * header.dtype.size();
    let mut payload = Vec::with_capacity(expected);
    reader
        .take(expected as u64)
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(origin, e))?;
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }

    let data: Vec<f64> = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect(),
    };
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Array::from_vec(header.shape, data)
}

pub fn read_array(path: impl AsRef<Path>) -> Result<Array<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_array_from(&mut BufReader::new(file), &path.display().to_string())
}

/// Encodes an array; `f64 -> f32` narrowing rounds to nearest, ties to even.
pub fn write_array_to<W: Write, T: Scalar>(writer: &mut W, a: &Array<T>, dtype: Dtype) -> std::io::Result<()> {
    let header = Header {
        dtype,
        shape: a.shape().to_vec(),
    };
    writer.write_all(&header.encode())?;
    match dtype {
        Dtype::F32 => {
            for v in a.data() {
                writer.write_all(&(v.to_f64_lossless() as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for v in a.data() {
                writer.write_all(&v.to_f64_lossless().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn write_array<T: Scalar>(path: impl AsRef<Path>, a: &Array<T>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_array_to(&mut writer, a, dtype).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}
