//! Bit-exact binary container for every pipeline artifact.
//!
//! Layout: magic `MSPC`, version (u16 LE), kind (u8), four dims (u32 LE),
//! dtype (u8), row-major little-endian payload, footer length (u32 LE) and
//! a UTF-8 footer of `key=value` lines.

use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MSPC";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 16 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    CfrFrameStack = 1,
    SpectrumPair = 2,
    MetaSpectrumPair = 3,
    MusicSpectrum = 4,
    Fingerprint = 5,
}

impl Kind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Self::CfrFrameStack,
            2 => Self::SpectrumPair,
            3 => Self::MetaSpectrumPair,
            4 => Self::MusicSpectrum,
            5 => Self::Fingerprint,
            _ => return Err(Error::Container(format!("unknown container kind {v}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F64(Vec<f64>),
    F32(Vec<f32>),
    Complex(Vec<Complex64>),
    U8(Vec<u8>),
}

impl Payload {
    fn dtype(&self) -> u8 {
        match self {
            Self::F64(_) => 1,
            Self::F32(_) => 2,
            Self::Complex(_) => 3,
            Self::U8(_) => 4,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F64(v) => v.len(),
            Self::F32(v) => v.len(),
            Self::Complex(v) => v.len(),
            Self::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Item size in bytes of a dtype code.
fn item_size(dtype: u8) -> Result<usize> {
    Ok(match dtype {
        1 => 8,
        2 => 4,
        3 => 16,
        4 => 1,
        _ => return Err(Error::Container(format!("unknown dtype {dtype}"))),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: Kind,
    pub dims: [u32; 4],
    pub payload: Payload,
    /// Ordered `key=value` metadata.
    pub footer: Vec<(String, String)>,
}

impl Container {
    pub fn new(kind: Kind, dims: [u32; 4], payload: Payload) -> Result<Self> {
        let n: u64 = dims.iter().map(|&d| d as u64).product();
        if n != payload.len() as u64 {
            return Err(Error::Container(format!(
                "dims {dims:?} need {n} values but the payload holds {}",
                payload.len()
            )));
        }
        Ok(Self {
            kind,
            dims,
            payload,
            footer: Vec::new(),
        })
    }

    pub fn dims_usize(&self) -> [usize; 4] {
        self.dims.map(|d| d as usize)
    }

    /// Appends a metadata entry. Keys may not contain `=` or line breaks and
    /// values may not contain line breaks.
    pub fn push_meta(&mut self, key: &str, value: impl Display) -> Result<()> {
        let value = value.to_string();
        if key.is_empty() || key.contains(['=', '\n', '\r']) || value.contains(['\n', '\r']) {
            return Err(Error::Container(format!("invalid footer entry '{key}'")));
        }
        self.footer.push((key.to_string(), value));
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.footer.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::Container(format!("footer lacks '{key}'")))?;
        raw.parse()
            .map_err(|_| Error::Container(format!("footer entry {key}={raw} is malformed")))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn meta_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::Container(format!("footer lacks '{key}'")))?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Container(format!("footer entry {key} has malformed item '{s}'")))
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() * 8 + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.payload.dtype());
        match &self.payload {
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::Complex(v) => v.iter().for_each(|x| {
                out.extend_from_slice(&x.re.to_le_bytes());
                out.extend_from_slice(&x.im.to_le_bytes());
            }),
            Payload::U8(v) => out.extend_from_slice(v),
        }
        let footer: String = self.footer.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(footer.len() as u32).to_le_bytes());
        out.extend_from_slice(footer.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Container("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let kind = Kind::from_u8(bytes[6])?;
        let mut dims = [0u32; 4];
        for (i, d) in dims.iter_mut().enumerate() {
            let o = 7 + 4 * i;
            *d = u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        }
        let dtype = bytes[23];
        let size = item_size(dtype)?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        let payload_len = n
            .and_then(|n| n.checked_mul(size))
            .ok_or_else(|| Error::Container("dims overflow".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() < payload_len + 4 {
            return Err(Error::Container(format!(
                "payload needs {payload_len} bytes plus footer length, found {}",
                body.len()
            )));
        }
        let raw = &body[..payload_len];
        let payload = match dtype {
            1 => Payload::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect()),
            2 => Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect()),
            3 => Payload::Complex(
                raw.chunks_exact(16)
                    .map(|c| {
                        Complex64::new(
                            f64::from_le_bytes(c[..8].try_into().expect("8")),
                            f64::from_le_bytes(c[8..].try_into().expect("8")),
                        )
                    })
                    .collect(),
            ),
            _ => Payload::U8(raw.to_vec()),
        };
        let rest = &body[payload_len..];
        let flen = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        if rest.len() != 4 + flen {
            return Err(Error::Container(format!(
                "footer declares {flen} bytes, found {}",
                rest.len() - 4
            )));
        }
        let text = std::str::from_utf8(&rest[4..]).map_err(|_| Error::Container("footer is not UTF-8".into()))?;
        let mut footer = Vec::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Container(format!("footer line '{line}' lacks '='")))?;
            footer.push((k.to_string(), v.to_string()));
        }
        let mut c = Self::new(kind, dims, payload)?;
        c.footer = footer;
        Ok(c)
    }

    /// Atomic write, see [`write_atomic`].
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: Kind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Container(format!("expected a {kind:?} container, found {:?}", self.kind)));
        }
        Ok(())
    }

    pub fn f64_values(&self) -> Result<&[f64]> {
        match &self.payload {
            Payload::F64(v) => Ok(v),
            _ => Err(Error::Container("payload is not f64".into())),
        }
    }

    pub fn complex_values(&self) -> Result<&[Complex64]> {
        match &self.payload {
            Payload::Complex(v) => Ok(v),
            _ => Err(Error::Container("payload is not complex".into())),
        }
    }

    pub fn u8_values(&self) -> Result<&[u8]> {
        match &self.payload {
            Payload::U8(v) => Ok(v),
            _ => Err(Error::Container("payload is not u8".into())),
        }
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place. Missing parent directories are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Joins displayable items with commas for a footer list.
pub fn join_list<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
