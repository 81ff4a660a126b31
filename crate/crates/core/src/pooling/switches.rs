//! Per-region selected locations and their "SPSW" binary form.
//!
//! Layout (all little-endian): magic `SPSW`; `u32` window rows, window cols,
//! stride, input rows, input cols; `u32` batch, channels, output rows,
//! output cols; then one `i32` per output cell in (n, c, row, col) order
//! holding the plane-flat input index `y * input_cols + x`, or `-1` when the
//! region had no selectable element.

use std::fs;
use std::path::Path;

use super::geometry::PoolingGeometry;
use crate::error::{Error, Result};
use crate::tensor::Shape4;

pub const SPSW_MAGIC: &[u8; 4] = b"SPSW";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchMap {
    geometry: PoolingGeometry,
    batch: usize,
    channels: usize,
    cells: Vec<Option<u32>>,
}

impl SwitchMap {
    pub fn new(geometry: PoolingGeometry, batch: usize, channels: usize) -> Self {
        SwitchMap {
            geometry,
            batch,
            channels,
            cells: vec![None; batch * channels * geometry.output_len()],
        }
    }

    pub(crate) fn from_cells(
        geometry: PoolingGeometry,
        batch: usize,
        channels: usize,
        cells: Vec<Option<u32>>,
    ) -> Result<Self> {
        let map = SwitchMap {
            geometry,
            batch,
            channels,
            cells,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn geometry(&self) -> &PoolingGeometry {
        &self.geometry
    }

    /// Shape of the pooled tensor these switches belong to.
    pub fn output_shape(&self) -> Shape4 {
        let (oh, ow) = self.geometry.output();
        Shape4::new(self.batch, self.channels, oh, ow)
    }

    pub fn input_shape(&self) -> Shape4 {
        Shape4::new(self.batch, self.channels, self.geometry.input.0, self.geometry.input.1)
    }

    pub fn cells(&self) -> &[Option<u32>] {
        &self.cells
    }

    /// Switches of plane `(n, c)`, row-major over output cells.
    pub fn plane(&self, n: usize, c: usize) -> &[Option<u32>] {
        let len = self.geometry.output_len();
        let start = (n * self.channels + c) * len;
        &self.cells[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [Option<u32>] {
        let len = self.geometry.output_len();
        let start = (n * self.channels + c) * len;
        &mut self.cells[start..start + len]
    }

    pub fn none_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Checks that every recorded index lies inside its own region.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if self.cells.len() != self.batch * self.channels * g.output_len() {
            return Err(Error::Switch(format!(
                "{} cells for {} planes of {} regions",
                self.cells.len(),
                self.batch * self.channels,
                g.output_len()
            )));
        }
        let regions = g.regions();
        let w = g.input.1;
        for plane in self.cells.chunks(g.output_len()) {
            for (cell, region) in plane.iter().zip(&regions) {
                if let Some(l) = *cell {
                    let (y, x) = (l as usize / w, l as usize % w);
                    if l as usize >= g.input_len() || !region.contains(y, x) {
                        return Err(Error::Switch(format!(
                            "index {l} outside region rows {:?} cols {:?}",
                            region.rows, region.cols
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let (oh, ow) = g.output();
        let mut out = Vec::with_capacity(40 + 4 * self.cells.len());
        out.extend_from_slice(SPSW_MAGIC);
        for v in [
            g.window.0, g.window.1, g.stride, g.input.0, g.input.1, self.batch, self.channels, oh, ow,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for cell in &self.cells {
            let v: i32 = cell.map_or(-1, |l| l as i32);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 40 || &bytes[..4] != SPSW_MAGIC {
            return Err(Error::format("SPSW", "missing SPSW header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let geometry = PoolingGeometry::new((word(0), word(1)), word(2), (word(3), word(4)))?;
        let (batch, channels) = (word(5), word(6));
        if geometry.output() != (word(7), word(8)) {
            return Err(Error::format(
                "SPSW",
                format!(
                    "stored output grid {}x{} disagrees with geometry {:?}",
                    word(7),
                    word(8),
                    geometry.output()
                ),
            ));
        }
        let body = &bytes[40..];
        let expected = batch * channels * geometry.output_len();
        if body.len() != 4 * expected {
            return Err(Error::format(
                "SPSW",
                format!("expected {expected} cells, found {} bytes", body.len()),
            ));
        }
        let mut cells = Vec::with_capacity(expected);
        for chunk in body.chunks_exact(4) {
            let v = i32::from_le_bytes(chunk.try_into().unwrap());
            cells.push(match v {
                -1 => None,
                v if v >= 0 => Some(v as u32),
                v => return Err(Error::format("SPSW", format!("invalid switch value {v}"))),
            });
        }
        SwitchMap::from_cells(geometry, batch, channels, cells)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        SwitchMap::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> SwitchMap {
        let g = PoolingGeometry::square(3, 2, (5, 5)).unwrap();
        let mut m = SwitchMap::new(g, 1, 2);
        m.plane_mut(0, 0).copy_from_slice(&[Some(0), Some(4), None, Some(24)]);
        m.plane_mut(0, 1).copy_from_slice(&[Some(12), None, Some(21), Some(18)]);
        m
    }

    #[test]
    fn byte_layout() {
        let b = sample_map().to_bytes();
        assert_eq!(&b[..4], b"SPSW");
        assert_eq!(b.len(), 40 + 8 * 4);
        assert_eq!(&b[40..44], &0i32.to_le_bytes());
        assert_eq!(&b[48..52], &(-1i32).to_le_bytes());
        assert_eq!(SwitchMap::from_bytes(&b).unwrap(), sample_map());
    }

    #[test]
    fn rejects_out_of_region_index() {
        let mut m = sample_map();
        m.plane_mut(0, 0)[0] = Some(3);
        assert!(matches!(m.validate(), Err(Error::Switch(_))));
        assert!(SwitchMap::from_bytes(&m.to_bytes()).is_err());
    }

    #[test]
    fn rejects_truncated() {
        let b = sample_map().to_bytes();
        assert!(SwitchMap::from_bytes(&b[..b.len() - 2]).is_err());
    }
}
