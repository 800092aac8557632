//! Reading and writing the numpy npy format, version 1.0.
//!
//! Only little-endian `f4`/`f8` payloads in C order are supported. The header is
//! padded so that the payload starts on a 64-byte boundary, matching what numpy
//! itself writes.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// The npy magic string.
pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

const ALIGN: usize = 64;

/// Element type of an npy payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
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
            other => Err(Error::MalformedHeader(format!(
                "unsupported descr {other:?}; only '<f4' and '<f8' are accepted"
            ))),
        }
    }
}

/// Parsed npy header dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

impl Header {
    pub fn n_elements(&self) -> usize {
        self.shape.iter().product()
    }

    fn dict(&self) -> String {
        let shape = match self.shape.as_slice() {
            [] => "()".to_string(),
            [d] => format!("({d},)"),
            dims => format!(
                "({})",
                dims.iter()
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

    /// Encodes magic, version, length and the padded dictionary.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut dict = self.dict().into_bytes();
        // magic(6) + version(2) + len(2) + dict + '\n'
        let unpadded = MAGIC.len() + 4 + dict.len() + 1;
        let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
        dict.resize(dict.len() + pad, b' ');
        dict.push(b'\n');

        let mut out = Vec::with_capacity(MAGIC.len() + 4 + dict.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(&dict);
        out
    }

    /// Reads and validates a version 1.0 header from the start of `reader`.
    pub fn read<R: Read>(reader: &mut R) -> Result<Self> {
        let mut preamble = [0u8; 10];
        reader
            .read_exact(&mut preamble)
            .map_err(|_| Error::MalformedHeader("file shorter than the npy preamble".into()))?;
        if &preamble[..6] != MAGIC {
            return Err(Error::MalformedHeader("missing \\x93NUMPY magic".into()));
        }
        if preamble[6..8] != [1, 0] {
            return Err(Error::MalformedHeader(format!(
                "unsupported version {}.{}",
                preamble[6], preamble[7]
            )));
        }
        let len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
        let mut dict = vec![0u8; len];
        reader
            .read_exact(&mut dict)
            .map_err(|_| Error::MalformedHeader("truncated header dictionary".into()))?;
        let text = std::str::from_utf8(&dict)
            .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
        Self::parse_dict(text)
    }

    fn parse_dict(text: &str) -> Result<Self> {
        let entries = DictParser::new(text).parse()?;
        let mut descr = None;
        let mut fortran = None;
        let mut shape = None;
        for (key, value) in entries {
            match (key.as_str(), value) {
                ("descr", Literal::Str(s)) => descr = Some(s),
                ("fortran_order", Literal::Bool(b)) => fortran = Some(b),
                ("shape", Literal::Tuple(dims)) => shape = Some(dims),
                (k, v) => {
                    return Err(Error::MalformedHeader(format!(
                        "unexpected entry {k:?}: {v:?}"
                    )))
                }
            }
        }
        let descr = descr.ok_or_else(|| Error::MalformedHeader("missing 'descr'".into()))?;
        let fortran =
            fortran.ok_or_else(|| Error::MalformedHeader("missing 'fortran_order'".into()))?;
        let shape = shape.ok_or_else(|| Error::MalformedHeader("missing 'shape'".into()))?;
        if fortran {
            return Err(Error::MalformedHeader(
                "fortran_order=True is not supported".into(),
            ));
        }
        Ok(Header {
            dtype: Dtype::from_descr(&descr)?,
            shape,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parser for the small Python-literal subset that npy headers use.
struct DictParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> DictParser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            src: text.as_bytes(),
            pos: 0,
        }
    }

    fn err(&self, what: &str) -> Error {
        Error::MalformedHeader(format!("{what} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8) -> Result<()> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", byte as char)))
        }
    }

    fn parse(mut self) -> Result<Vec<(String, Literal)>> {
        self.expect(b'{')?;
        let mut entries = Vec::new();
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.literal()?;
            entries.push((key, value));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
        if self.peek().is_some() {
            return Err(self.err("trailing characters after dictionary"));
        }
        Ok(entries)
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.src.len() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn literal(&mut self) -> Result<Literal> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Literal::Str),
            Some(b'(') => self.tuple().map(Literal::Tuple),
            Some(_) => {
                let rest = &self.src[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Literal::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Literal::Bool(false))
                } else {
                    Err(self.err("unsupported literal"))
                }
            }
            None => Err(self.err("unexpected end of header")),
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    return Ok(dims);
                }
                Some(c) if c.is_ascii_digit() => {
                    let start = self.pos;
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    let dim = digits
                        .parse::<usize>()
                        .map_err(|_| self.err("dimension does not fit in usize"))?;
                    dims.push(dim);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.err("expected ',' or ')' in shape")),
                    }
                }
                _ => return Err(self.err("expected a dimension")),
            }
        }
    }
}

/// Reads a header and exactly the payload it describes, widening to `f64`.
pub fn read_npy<R: Read>(reader: &mut R) -> Result<(Header, Vec<f64>)> {
    let header = Header::read(reader)?;
    let expected = header
        .n_elements()
        .checked_mul(header.dtype.size())
        .ok_or_else(|| Error::MalformedHeader("shape overflows the address space".into()))?;
    let mut payload = Vec::with_capacity(expected);
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::MalformedHeader(format!("unreadable payload: {e}")))?;
    if payload.len() != expected {
        return Err(Error::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f64> = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    };
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok((header, values))
}

/// Writes a header followed by `values` encoded as `header.dtype`.
pub fn write_npy<W: Write>(writer: &mut W, header: &Header, values: &[f64]) -> std::io::Result<()> {
    debug_assert_eq!(header.n_elements(), values.len());
    writer.write_all(&header.to_bytes())?;
    match header.dtype {
        Dtype::F32 => {
            for v in values {
                writer.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for v in values {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}
