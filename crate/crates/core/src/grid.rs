//! Level multi-indices, tensor-product grids on the unit cube and
//! piecewise-multilinear interpolation.
//!
//! Grid values are stored for every node including the boundary, in
//! lexicographic order of the index tuple `(j_1, ..., j_d)` with the last
//! index running fastest. Node `j` sits at `x = (j_1 h_1, ..., j_d h_d)` with
//! `h_k = 2^{-l_k}`.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Refinement levels `(l_1, ..., l_d)`; mesh width in direction `k` is `2^{-l_k}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelIndex(Vec<u32>);

impl LevelIndex {
    /// Panics if `levels` is empty.
    pub fn new(levels: Vec<u32>) -> Self {
        assert!(!levels.is_empty(), "a level index needs at least one direction");
        LevelIndex(levels)
    }

    pub fn isotropic(dim: usize, level: u32) -> Self {
        LevelIndex::new(vec![level; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn levels(&self) -> &[u32] {
        &self.0
    }

    /// `|l|_1`
    pub fn sum(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn min_level(&self) -> u32 {
        *self.0.iter().min().unwrap()
    }

    pub fn mesh_widths(&self) -> Vec<f64> {
        self.0.iter().map(|&l| mesh_width(l)).collect()
    }

    /// Nodes per direction, boundary included: `2^{l_k} + 1`.
    pub fn points_per_dim(&self) -> Vec<usize> {
        self.0.iter().map(|&l| (1usize << l) + 1).collect()
    }

    /// Interior nodes per direction: `2^{l_k} - 1`.
    pub fn interior_per_dim(&self) -> Vec<usize> {
        self.0.iter().map(|&l| (1usize << l) - 1).collect()
    }

    pub fn node_count(&self) -> u128 {
        self.0.iter().map(|&l| (1u128 << l) + 1).product()
    }

    pub fn interior_count(&self) -> u128 {
        self.0.iter().map(|&l| (1u128 << l) - 1).product()
    }

    /// Bisects the mesh in every direction listed in `subset` (0-based).
    pub fn refine(&self, subset: &[usize]) -> Result<LevelIndex> {
        let mut levels = self.0.clone();
        for &k in subset {
            let slot = levels.get_mut(k).ok_or(Error::DirectionOutOfRange {
                index: k,
                dim: self.dim(),
            })?;
            *slot += 1;
        }
        Ok(LevelIndex(levels))
    }

    /// Refines the directions whose bit is set in `mask`.
    pub fn refine_mask(&self, mask: usize) -> LevelIndex {
        LevelIndex(
            self.0
                .iter()
                .enumerate()
                .map(|(k, &l)| l + ((mask >> k) & 1) as u32)
                .collect(),
        )
    }

    /// Adds `shift` to every component.
    pub fn shifted(&self, shift: u32) -> LevelIndex {
        LevelIndex(self.0.iter().map(|&l| l + shift).collect())
    }
}

impl fmt::Display for LevelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

/// `2^{-level}`, exact in binary floating point.
pub fn mesh_width(level: u32) -> f64 {
    0.5f64.powi(level as i32)
}

pub fn mesh_widths(level: &LevelIndex) -> Vec<f64> {
    level.mesh_widths()
}

pub fn refine(level: &LevelIndex, subset: &[usize]) -> Result<LevelIndex> {
    level.refine(subset)
}

/// A point of the closed unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("point needs at least one coordinate".into()));
        }
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::PointOutsideCube { index, value });
            }
        }
        Ok(Point(coords))
    }

    /// `(0.25, 0.5, 0.25, 0.5, ...)` truncated to `dim` entries.
    pub fn reference(dim: usize) -> Self {
        Point((0..dim).map(|k| if k % 2 == 0 { 0.25 } else { 0.5 }).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Values on all nodes of a tensor-product grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    level: LevelIndex,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(level: LevelIndex) -> Self {
        let n = level.node_count() as usize;
        GridFunction {
            level,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(level: LevelIndex, values: Vec<f64>) -> Result<Self> {
        let expected = level.node_count() as usize;
        if values.len() != expected {
            return Err(Error::ValueLength {
                level,
                expected,
                got: values.len(),
            });
        }
        Ok(GridFunction { level, values })
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(level: LevelIndex, f: F) -> Self {
        let widths = level.mesh_widths();
        let dims = level.points_per_dim();
        let total = level.node_count() as usize;
        let mut idx = vec![0usize; dims.len()];
        let mut x = vec![0.0; dims.len()];
        let mut values = Vec::with_capacity(total);
        for i in 0..total {
            if i > 0 {
                for k in (0..dims.len()).rev() {
                    idx[k] += 1;
                    if idx[k] < dims[k] {
                        x[k] = idx[k] as f64 * widths[k];
                        break;
                    }
                    idx[k] = 0;
                    x[k] = 0.0;
                }
            }
            values.push(f(&x));
        }
        GridFunction { level, values }
    }

    pub fn level(&self) -> &LevelIndex {
        &self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at the node with index tuple `idx`.
    pub fn at(&self, idx: &[usize]) -> f64 {
        let dims = self.level.points_per_dim();
        let mut flat = 0;
        for (k, &j) in idx.iter().enumerate() {
            flat = flat * dims[k] + j;
        }
        self.values[flat]
    }

    /// Largest absolute value over nodes on the boundary of the cube.
    pub fn boundary_max_abs(&self) -> f64 {
        let dims = self.level.points_per_dim();
        enumerate_indices(&dims)
            .zip(&self.values)
            .filter(|(idx, _)| idx.iter().zip(&dims).any(|(&j, &n)| j == 0 || j == n - 1))
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Evaluates the piecewise-multilinear interpolant at `x`.
    pub fn eval(&self, x: &Point) -> Result<f64> {
        multilinear_eval(self, x)
    }

    /// Writes the cache format: `u32` dimension, `u32` levels, then the node
    /// values as little-endian `f64` in lexicographic order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.level.dim() as u32).to_le_bytes())?;
        for &l in self.level.levels() {
            w.write_all(&l.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(io)?;
        let dim = u32::from_le_bytes(word) as usize;
        if dim == 0 || dim > 64 {
            return Err(Error::Format(format!("implausible dimension {dim}")));
        }
        let mut levels = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut word).map_err(io)?;
            let l = u32::from_le_bytes(word);
            if l > 40 {
                return Err(Error::Format(format!("implausible level {l}")));
            }
            levels.push(l);
        }
        let level = LevelIndex::new(levels);
        let count = usize::try_from(level.node_count())
            .map_err(|_| Error::Format("grid too large".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io)?;
        if bytes.len() != count * 8 {
            return Err(Error::Format(format!(
                "expected {} value bytes, found {}",
                count * 8,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(GridFunction { level, values })
    }
}

/// Cell lookup for one direction: returns `(cell, local coordinate in [0,1])`.
/// A point on a cell face belongs to the lower cell; `x = 1` uses the last cell.
fn locate(x: f64, level: u32) -> (usize, f64) {
    let cells = 1usize << level;
    let s = x * cells as f64;
    let cell = (s.ceil() as usize).saturating_sub(1).min(cells - 1);
    (cell, s - cell as f64)
}

pub fn multilinear_eval(g: &GridFunction, x: &Point) -> Result<f64> {
    let level = g.level();
    let d = level.dim();
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.dim(),
        });
    }
    for (index, &value) in x.coords().iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::PointOutsideCube { index, value });
        }
    }
    let dims = level.points_per_dim();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let mut base = 0;
    let mut local = Vec::with_capacity(d);
    for ((&xk, &lk), stride) in x.coords().iter().zip(level.levels()).zip(&strides) {
        let (cell, t) = locate(xk, lk);
        base += cell * stride;
        local.push(t);
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut weight = 1.0;
        let mut offset = base;
        for k in 0..d {
            if (corner >> k) & 1 == 1 {
                weight *= local[k];
                offset += strides[k];
            } else {
                weight *= 1.0 - local[k];
            }
        }
        if weight != 0.0 {
            acc += weight * g.values[offset];
        }
    }
    Ok(acc)
}

/// Iterates index tuples over a box of the given extents, last index fastest.
pub(crate) fn enumerate_indices(dims: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = dims.iter().product();
    let mut current = vec![0usize; dims.len()];
    (0..total).map(move |i| {
        if i > 0 {
            for k in (0..dims.len()).rev() {
                current[k] += 1;
                if current[k] < dims[k] {
                    break;
                }
                current[k] = 0;
            }
        }
        current.clone()
    })
}

/// All nodes of the grid in lexicographic order, with their coordinates.
pub fn enumerate_nodes(level: &LevelIndex) -> impl Iterator<Item = (Vec<usize>, Point)> + '_ {
    let widths = level.mesh_widths();
    let dims = level.points_per_dim();
    let total: usize = dims.iter().product();
    let mut current = vec![0usize; dims.len()];
    (0..total).map(move |i| {
        if i > 0 {
            for k in (0..dims.len()).rev() {
                current[k] += 1;
                if current[k] < dims[k] {
                    break;
                }
                current[k] = 0;
            }
        }
        let coords = current
            .iter()
            .zip(&widths)
            .map(|(&j, &h)| j as f64 * h)
            .collect();
        (current.clone(), Point(coords))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(l: &[u32]) -> LevelIndex {
        LevelIndex::new(l.to_vec())
    }

    #[test]
    fn mesh_widths_are_powers_of_two() {
        assert_eq!(mesh_widths(&lv(&[0, 0])), vec![1.0, 1.0]);
        assert_eq!(mesh_widths(&lv(&[3])), vec![0.125]);
        assert_eq!(mesh_widths(&lv(&[2, 5, 1])), vec![0.25, 0.03125, 0.5]);
    }

    #[test]
    fn refine_subsets() {
        assert_eq!(refine(&lv(&[2, 2]), &[]).unwrap(), lv(&[2, 2]));
        assert_eq!(refine(&lv(&[2, 2]), &[0]).unwrap(), lv(&[3, 2]));
        assert_eq!(refine(&lv(&[1, 0, 4]), &[0, 2]).unwrap(), lv(&[2, 0, 5]));
        assert_eq!(lv(&[1, 0, 4]).refine_mask(0b101), lv(&[2, 0, 5]));
        assert!(matches!(
            refine(&lv(&[1, 1]), &[2]),
            Err(Error::DirectionOutOfRange { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn counts() {
        assert_eq!(lv(&[2, 1]).node_count(), 15);
        assert_eq!(lv(&[2, 1]).interior_count(), 3);
        assert_eq!(lv(&[0, 3]).interior_count(), 0);
        assert_eq!(lv(&[0, 0]).node_count(), 4);
    }

    #[test]
    fn enumerate_small_grids() {
        let nodes: Vec<_> = enumerate_nodes(&lv(&[1])).collect();
        assert_eq!(nodes.len(), 3);
        assert_eq!(nodes[1], (vec![1], Point(vec![0.5])));
        assert_eq!(nodes[2].1.coords(), &[1.0]);

        let corners: Vec<_> = enumerate_nodes(&lv(&[0, 0])).map(|(_, p)| p).collect();
        assert_eq!(
            corners,
            vec![
                Point(vec![0.0, 0.0]),
                Point(vec![0.0, 1.0]),
                Point(vec![1.0, 0.0]),
                Point(vec![1.0, 1.0])
            ]
        );

        let nodes: Vec<_> = enumerate_nodes(&lv(&[2, 1])).collect();
        assert_eq!(nodes.len(), 15);
        assert_eq!(nodes[0], (vec![0, 0], Point(vec![0.0, 0.0])));
        assert_eq!(nodes[14], (vec![4, 2], Point(vec![1.0, 1.0])));
    }

    #[test]
    fn interpolation_examples() {
        let g = GridFunction::sample(lv(&[3, 2]), |_| 2.5);
        let x = Point::new(vec![0.37, 0.91]).unwrap();
        assert!((g.eval(&x).unwrap() - 2.5).abs() < 1e-15);

        let g = GridFunction::from_values(lv(&[1]), vec![0.0, 0.5, 0.0]).unwrap();
        assert_eq!(g.eval(&Point::new(vec![0.25]).unwrap()).unwrap(), 0.25);

        // (0.3, 0.7) on level (1,1): x in cell [0,0.5] with t=0.6, y in [0.5,1] with t=0.4.
        let g = GridFunction::sample(lv(&[1, 1]), |x| x[0] * x[1]);
        let direct = {
            let (tx, ty) = (0.6, 0.4);
            let v = |x: f64, y: f64| x * y;
            (1.0 - tx) * (1.0 - ty) * v(0.0, 0.5)
                + (1.0 - tx) * ty * v(0.0, 1.0)
                + tx * (1.0 - ty) * v(0.5, 0.5)
                + tx * ty * v(0.5, 1.0)
        };
        let got = g.eval(&Point::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert!((got - direct).abs() < 1e-15);
        assert!((got - 0.21).abs() < 1e-15);
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_edges() {
        let g = GridFunction::sample(lv(&[2, 3]), |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        for (idx, p) in enumerate_nodes(&lv(&[2, 3])) {
            assert_eq!(g.eval(&p).unwrap(), g.at(&idx));
        }
    }

    #[test]
    fn interpolation_rejects_outside_points() {
        let g = GridFunction::zeros(lv(&[1, 1]));
        assert!(matches!(
            g.eval(&Point(vec![0.5, 1.5])),
            Err(Error::PointOutsideCube { index: 1, .. })
        ));
        assert!(Point::new(vec![-0.1]).is_err());
        assert!(matches!(
            g.eval(&Point(vec![0.5])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_level_direction_interpolates_between_faces() {
        let g = GridFunction::sample(lv(&[0, 1]), |x| 1.0 + x[0] + 2.0 * x[1]);
        let v = g.eval(&Point::new(vec![0.3, 0.8]).unwrap()).unwrap();
        assert!((v - (1.0 + 0.3 + 1.6)).abs() < 1e-15);
    }

    #[test]
    fn cache_format_roundtrip_and_layout() {
        let g = GridFunction::sample(lv(&[1, 2]), |x| x[0] - x[1]);
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(buf.len(), 12 + 15 * 8);
        // node (0,1) is at (0, 0.25)
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), -0.25);
        let back = GridFunction::read_from(&buf[..]).unwrap();
        assert_eq!(back, g);
        assert!(GridFunction::read_from(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn boundary_of_sampled_sine_is_zero() {
        let g = GridFunction::sample(lv(&[2, 2, 1]), |x| {
            x.iter().map(|&t| (std::f64::consts::PI * t).sin()).product::<f64>()
        });
        assert!(g.boundary_max_abs() < 1e-15);
    }
}
