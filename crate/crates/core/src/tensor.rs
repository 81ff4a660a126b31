//! Dense 4-D tensors in (batch, channel, row, column) order.
//!
//! The binary "SP4T" format is the on-disk representation used by
//! checkpoints and visualization dumps: the magic bytes `SP4T`, four
//! little-endian `u32` dimensions `(n, c, h, w)` and then `n*c*h*w`
//! little-endian `f64` values in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SP4T_MAGIC: &[u8; 4] = b"SP4T";

/// Shape of a [`Tensor4`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape4 { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of values in one batch element.
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn with_batch(self, n: usize) -> Self {
        Shape4 { n, ..self }
    }
}

impl std::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: Shape4) -> Self {
        Tensor4 {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape4, value: f64) -> Self {
        Tensor4 {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::dim(
                "Tensor4::from_vec",
                format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor4 { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.shape.offset(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let i = self.shape.offset(n, c, h, w);
        &mut self.data[i]
    }

    /// Values of batch element `n`.
    pub fn item(&self, n: usize) -> &[f64] {
        let len = self.shape.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.shape.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Same data viewed under a different shape with equal element count.
    pub fn reshape(self, shape: Shape4) -> Result<Self> {
        Tensor4::from_vec(shape, self.data)
    }

    /// Gathers the listed batch elements into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Self {
        let len = self.shape.item_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.item(i));
        }
        Tensor4 {
            shape: self.shape.with_batch(indices.len()),
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_shape("Tensor4::zip_map", other.shape)?;
        Ok(Tensor4 {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|x| x * factor)
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Tensor4, factor: f64) -> Result<()> {
        self.expect_shape("Tensor4::add_scaled", other.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor4) -> Result<f64> {
        self.expect_shape("Tensor4::dot", other.shape)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn expect_shape(&self, op: &'static str, shape: Shape4) -> Result<()> {
        if self.shape != shape {
            return Err(Error::dim(
                op,
                format!("expected shape {shape}, got {}", self.shape),
            ));
        }
        Ok(())
    }

    pub fn write_sp4t<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(SP4T_MAGIC)?;
        let s = self.shape;
        for d in [s.n, s.c, s.h, s.w] {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn to_sp4t_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.data.len() * 8);
        self.write_sp4t(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_sp4t_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != SP4T_MAGIC {
            return Err(Error::format("SP4T", "missing SP4T header"));
        }
        let dim = |i: usize| {
            u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        };
        let shape = Shape4::new(dim(0), dim(1), dim(2), dim(3));
        let body = &bytes[20..];
        if body.len() != shape.len() * 8 {
            return Err(Error::format(
                "SP4T",
                format!(
                    "shape {shape} needs {} payload bytes, found {}",
                    shape.len() * 8,
                    body.len()
                ),
            ));
        }
        let data = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Tensor4 { shape, data })
    }

    pub fn read_sp4t<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<reader>", e))?;
        Tensor4::from_sp4t_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_sp4t_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor4::from_sp4t_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn offsets_are_row_major() {
        let s = Shape4::new(2, 3, 4, 5);
        assert_eq!(s.offset(0, 0, 0, 1), 1);
        assert_eq!(s.offset(0, 0, 1, 0), 5);
        assert_eq!(s.offset(0, 1, 0, 0), 20);
        assert_eq!(s.offset(1, 0, 0, 0), 60);
        assert_eq!(s.offset(1, 2, 3, 4), s.len() - 1);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor4::from_vec(Shape4::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn sp4t_header_layout() {
        let t = Tensor4::from_vec(Shape4::new(1, 1, 1, 2), vec![1.5, -2.0]).unwrap();
        let b = t.to_sp4t_bytes();
        assert_eq!(&b[..4], b"SP4T");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[16..20], &2u32.to_le_bytes());
        assert_eq!(&b[20..28], &1.5f64.to_le_bytes());
        assert_eq!(b.len(), 20 + 16);
    }

    #[test]
    fn sp4t_rejects_truncation_and_bad_magic() {
        let t = Tensor4::filled(Shape4::new(1, 2, 2, 2), 3.0);
        let b = t.to_sp4t_bytes();
        assert!(Tensor4::from_sp4t_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Tensor4::from_sp4t_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn sp4t_round_trip(n in 1usize..3, c in 1usize..3, h in 1usize..4, w in 1usize..4,
                           seed in any::<u64>()) {
            let shape = Shape4::new(n, c, h, w);
            let mut state = seed | 1;
            let t = Tensor4::from_fn(shape, |_, _, _, _| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state as f64 / u64::MAX as f64) * 200.0 - 100.0
            });
            let back = Tensor4::from_sp4t_bytes(&t.to_sp4t_bytes()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
