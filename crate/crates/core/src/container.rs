//! Binary container shared by generator (`IRGM1`) and classifier (`IRCF1`)
//! files.
//!
//! Every file starts with a 5-byte magic and a little-endian `u16` version,
//! followed by a header and shape table, then a weight blob of little-endian
//! `f64`. Integers are little-endian `u64`, enums are single bytes. Layer
//! stacks are described in the shape table as `count:u64` followed by
//! `(in:u64, out:u64, activation:u8)` per layer; their weights appear in the
//! blob as the row-major `out × in` matrix followed by the `out` biases.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Dense, LayerStack};

pub const FORMAT_VERSION: u16 = 1;

// Guards allocation sizes read from untrusted headers.
const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_magic(magic: &[u8; 5]) -> Self {
        let mut w = Writer::default();
        w.buf.extend_from_slice(magic);
        w.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn stack_schema(&mut self, stack: &LayerStack) {
        self.usize(stack.layers().len());
        for layer in stack.layers() {
            self.usize(layer.input_dim());
            self.usize(layer.output_dim());
            self.u8(layer.activation.code());
        }
    }

    pub fn stack_weights(&mut self, stack: &LayerStack) {
        for layer in stack.layers() {
            self.f64s(layer.weight.as_slice());
            self.f64s(&layer.bias);
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct StackSchema {
    shapes: Vec<(usize, usize, Activation)>,
}

impl<'a> Reader<'a> {
    pub fn open(buf: &'a [u8], magic: &[u8; 5]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let found = r.take(5, "magic")?;
        if found != magic {
            return Err(Error::parse(
                "magic",
                format!(
                    "expected {:?}, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(found)
                ),
            ));
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::parse("version", format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::parse(
                field,
                format!("truncated: need {n} bytes at offset {}, file has {}", self.pos, self.buf.len()),
            )),
        }
    }

    pub fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    pub fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    /// A size field; rejects zero and absurdly large values.
    pub fn dim(&mut self, field: &str) -> Result<usize> {
        let v = self.u64(field)?;
        if v == 0 || v > MAX_ELEMENTS {
            return Err(Error::parse(field, format!("invalid size {v}")));
        }
        Ok(v as usize)
    }

    pub fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize, field: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::parse(field, "size overflow"))?, field)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn stack_schema(&mut self, prefix: &str) -> Result<StackSchema> {
        let count = self.dim(&format!("{prefix}.layer_count"))?;
        let mut shapes = Vec::with_capacity(count.min(1024));
        for l in 0..count {
            let input = self.dim(&format!("{prefix}.layer[{l}].in"))?;
            let output = self.dim(&format!("{prefix}.layer[{l}].out"))?;
            let field = format!("{prefix}.layer[{l}].activation");
            let code = self.u8(&field)?;
            let act = Activation::from_code(code)
                .ok_or_else(|| Error::parse(&field, format!("unknown activation code {code}")))?;
            if (input as u64) * (output as u64) > MAX_ELEMENTS {
                return Err(Error::parse(format!("{prefix}.layer[{l}]"), "layer too large"));
            }
            shapes.push((input, output, act));
        }
        Ok(StackSchema { shapes })
    }

    pub fn stack_weights(&mut self, schema: &StackSchema, prefix: &str) -> Result<LayerStack> {
        let mut layers = Vec::with_capacity(schema.shapes.len());
        for (l, &(input, output, act)) in schema.shapes.iter().enumerate() {
            let w = self.f64s(input * output, &format!("{prefix}.layer[{l}].weight"))?;
            let b = self.f64s(output, &format!("{prefix}.layer[{l}].bias"))?;
            let weight = Matrix::from_row_major(output, input, w)?;
            layers.push(Dense::new(weight, b, act)?);
        }
        LayerStack::new(layers).map_err(|e| Error::parse(format!("{prefix}.layers"), e.to_string()))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::parse(
                "end of file",
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ))
        }
    }
}

impl StackSchema {
    pub fn input_dim(&self) -> usize {
        self.shapes[0].0
    }

    pub fn output_dim(&self) -> usize {
        self.shapes[self.shapes.len() - 1].1
    }
}
