use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pooling-region layout over one `h x w` plane.
///
/// Windows start every `stride` cells. When the last full window stops short
/// of the border, one more window is appended and clamped to the plane, so
/// border regions may be smaller than `kh x kw` but every input cell belongs
/// to at least one region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingGeometry {
    pub window: (usize, usize),
    pub stride: usize,
    pub input: (usize, usize),
}

/// Half-open row and column ranges of one region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl Region {
    pub fn len(&self) -> usize {
        (self.rows.1 - self.rows.0) * (self.cols.1 - self.cols.0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.rows.0..self.rows.1).contains(&y) && (self.cols.0..self.cols.1).contains(&x)
    }

    /// Plane-flat indices (`y * width + x`) covered by the region, row-major.
    pub fn indices(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.rows.0..self.rows.1)
            .flat_map(move |y| (self.cols.0..self.cols.1).map(move |x| y * width + x))
    }
}

fn axis_len(dim: usize, window: usize, stride: usize) -> usize {
    let mut out = (dim - window) / stride + 1;
    let last_end = (out - 1) * stride + window;
    if last_end < dim && out * stride < dim {
        out += 1;
    }
    out
}

fn axis_span(index: usize, dim: usize, window: usize, stride: usize) -> (usize, usize) {
    let start = index * stride;
    (start, (start + window).min(dim))
}

impl PoolingGeometry {
    pub fn new(window: (usize, usize), stride: usize, input: (usize, usize)) -> Result<Self> {
        let g = PoolingGeometry {
            window,
            stride,
            input,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square window helper.
    pub fn square(size: usize, stride: usize, input: (usize, usize)) -> Result<Self> {
        PoolingGeometry::new((size, size), stride, input)
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.window;
        if kh == 0 || kw == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "pooling window {kh}x{kw} / stride {} must be positive",
                self.stride
            )));
        }
        if self.input.0 < kh || self.input.1 < kw {
            return Err(Error::dim(
                "pooling",
                format!(
                    "window {kh}x{kw} larger than input {}x{}",
                    self.input.0, self.input.1
                ),
            ));
        }
        Ok(())
    }

    /// Output grid `(rows, cols)`.
    pub fn output(&self) -> (usize, usize) {
        (
            axis_len(self.input.0, self.window.0, self.stride),
            axis_len(self.input.1, self.window.1, self.stride),
        )
    }

    pub fn output_len(&self) -> usize {
        let (h, w) = self.output();
        h * w
    }

    pub fn input_len(&self) -> usize {
        self.input.0 * self.input.1
    }

    pub fn region(&self, oy: usize, ox: usize) -> Region {
        Region {
            rows: axis_span(oy, self.input.0, self.window.0, self.stride),
            cols: axis_span(ox, self.input.1, self.window.1, self.stride),
        }
    }

    /// All regions in row-major output order.
    pub fn regions(&self) -> Vec<Region> {
        let (oh, ow) = self.output();
        (0..oh)
            .flat_map(|y| (0..ow).map(move |x| (y, x)))
            .map(|(y, x)| self.region(y, x))
            .collect()
    }

    pub fn with_input(&self, input: (usize, usize)) -> Result<Self> {
        PoolingGeometry::new(self.window, self.stride, input)
    }
}

/// Flat input indices of every region, in row-major output order.
pub fn enumerate_regions(geometry: &PoolingGeometry) -> Result<Vec<Vec<usize>>> {
    geometry.validate()?;
    let w = geometry.input.1;
    Ok(geometry
        .regions()
        .iter()
        .map(|r| r.indices(w).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    /// Scans every window start independently of the axis arithmetic above.
    fn scan_windows(dim: usize, k: usize, s: usize) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + k).min(dim);
            spans.push((start, end));
            if end >= dim {
                break;
            }
            start += s;
            if start >= dim {
                break;
            }
        }
        spans
    }

    #[test]
    fn exact_tiling() {
        let g = PoolingGeometry::square(2, 2, (4, 4)).unwrap();
        let regions = enumerate_regions(&g).unwrap();
        assert_eq!(regions.len(), 4);
        assert!(regions.iter().all(|r| r.len() == 4));
        let all: BTreeSet<usize> = regions.iter().flatten().copied().collect();
        assert_eq!(all.len(), 16);
        assert_eq!(regions[0], vec![0, 1, 4, 5]);
    }

    #[test]
    fn single_window() {
        let g = PoolingGeometry::square(3, 2, (3, 3)).unwrap();
        let regions = enumerate_regions(&g).unwrap();
        assert_eq!(regions, vec![(0..9).collect::<Vec<_>>()]);
    }

    #[test]
    fn overlapping_three_by_three_on_eight() {
        // Full windows start at 0, 2, 4; the last covers rows 4..=6, so a
        // clipped window over rows 6..=7 is appended.
        let g = PoolingGeometry::square(3, 2, (8, 8)).unwrap();
        assert_eq!(g.output(), (4, 4));
        let r = g.region(2, 2);
        assert_eq!((r.rows, r.cols), ((4, 7), (4, 7)));
        let edge = g.region(3, 3);
        assert_eq!((edge.rows, edge.cols), ((6, 8), (6, 8)));
        assert_eq!(edge.len(), 4);
        // Neighbouring regions share exactly one row.
        assert_eq!(g.region(0, 0).rows.1 - g.region(1, 0).rows.0, 1);
    }

    #[test]
    fn matches_window_scanner() {
        for dim in 1..20 {
            for k in 1..=dim.min(6) {
                for s in 1..=4 {
                    let g = PoolingGeometry::new((k, k), s, (dim, dim)).unwrap();
                    let spans = scan_windows(dim, k, s);
                    assert_eq!(g.output().0, spans.len(), "dim {dim} k {k} s {s}");
                    for (i, span) in spans.iter().enumerate() {
                        assert_eq!(g.region(i, 0).rows, *span);
                    }
                    if s <= k {
                        let covered: BTreeSet<usize> =
                            enumerate_regions(&g).unwrap().into_iter().flatten().collect();
                        assert_eq!(covered.len(), dim * dim);
                    }
                }
            }
        }
    }

    #[test]
    fn preset_geometry_on_common_sizes() {
        let g = PoolingGeometry::square(3, 2, (24, 24)).unwrap();
        assert_eq!(g.output(), (12, 12));
        let g = PoolingGeometry::square(3, 2, (28, 28)).unwrap();
        assert_eq!(g.output(), (14, 14));
        let g = PoolingGeometry::square(3, 2, (32, 32)).unwrap();
        assert_eq!(g.output(), (16, 16));
    }

    #[test]
    fn window_larger_than_input() {
        assert!(PoolingGeometry::square(5, 2, (4, 4)).is_err());
        assert!(PoolingGeometry::square(0, 2, (4, 4)).is_err());
        assert!(PoolingGeometry::square(2, 0, (4, 4)).is_err());
    }
}
