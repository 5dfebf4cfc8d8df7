//! Volumetric grids shared by every stage of the pipeline.
//!
//! All grids store voxels in x-fastest linear order: the voxel at `(x, y, z)`
//! lives at index `x + nx * (y + ny * z)`. The on-disk format uses the same
//! order (see [`io`]).

mod canvas;
pub mod io;

pub use canvas::{ProbabilityCanvas, CANVAS_INIT};
pub use io::{load_image, load_labels, load_volume, save_image, save_labels, save_volume, Volume};

use crate::error::{Error, Result};

/// Voxel extent along (x, y, z).
pub type Dims = [usize; 3];

/// Voxel coordinate (x, y, z).
pub type Position = [usize; 3];

/// Total voxel count for `dims`.
pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Axis-aligned box: `corner` is the voxel offset of the low corner, `size`
/// its extent. The corner is signed so that out-of-range requests can be
/// expressed and rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoxRegion {
    pub corner: [i64; 3],
    pub size: Dims,
}

impl BoxRegion {
    pub fn new(corner: [i64; 3], size: Dims) -> Result<Self> {
        if size.contains(&0) {
            return Err(Error::InvalidValue(format!(
                "box size components must be positive, got {size:?}"
            )));
        }
        Ok(BoxRegion { corner, size })
    }

    /// Box of `size` centred on `center` (size components should be odd).
    pub fn centered(center: Position, size: Dims) -> Self {
        let corner = [0, 1, 2].map(|a| center[a] as i64 - (size[a] / 2) as i64);
        BoxRegion { corner, size }
    }

    /// The whole extent of a grid with `dims`.
    pub fn full(dims: Dims) -> Self {
        BoxRegion {
            corner: [0; 3],
            size: dims,
        }
    }

    pub fn fits_in(&self, dims: Dims) -> bool {
        (0..3).all(|a| self.corner[a] >= 0 && self.corner[a] as usize + self.size[a] <= dims[a])
    }

    pub(crate) fn check_inside(&self, dims: Dims) -> Result<()> {
        if self.size.contains(&0) || !self.fits_in(dims) {
            return Err(Error::OutOfBounds {
                corner: self.corner,
                size: self.size,
                dims,
            });
        }
        Ok(())
    }

    /// Corner as unsigned coordinates; only valid after `check_inside`.
    pub(crate) fn origin(&self) -> Position {
        self.corner.map(|c| c as usize)
    }

    pub fn contains(&self, p: Position) -> bool {
        (0..3).all(|a| {
            let c = p[a] as i64;
            c >= self.corner[a] && c < self.corner[a] + self.size[a] as i64
        })
    }
}

/// Dense 3D grid in x-fastest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(dims: Dims, value: T) -> Self {
        Grid {
            dims,
            data: vec![value; voxel_count(dims)],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        if data.len() != voxel_count(dims) {
            return Err(Error::PayloadMismatch {
                expected: voxel_count(dims),
                actual: data.len(),
            });
        }
        Ok(Grid { dims, data })
    }

    /// Builds a grid by evaluating `f` at every voxel.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(Position) -> T) -> Self {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f([x, y, z]));
                }
            }
        }
        Grid { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, p: Position) -> usize {
        p[0] + self.dims[0] * (p[1] + self.dims[1] * p[2])
    }

    #[inline]
    pub fn position(&self, index: usize) -> Position {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, p: Position) -> T {
        self.data[self.index(p)]
    }

    #[inline]
    pub fn set(&mut self, p: Position, value: T) {
        let i = self.index(p);
        self.data[i] = value;
    }

    pub fn in_bounds(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a])
    }

    /// Copies out `region`. The region must lie fully inside the grid; there
    /// is no clamping.
    pub fn crop(&self, region: &BoxRegion) -> Result<Grid<T>> {
        region.check_inside(self.dims)?;
        let o = region.origin();
        let [sx, sy, sz] = region.size;
        let mut data = Vec::with_capacity(sx * sy * sz);
        for z in 0..sz {
            for y in 0..sy {
                let start = self.index([o[0], o[1] + y, o[2] + z]);
                data.extend_from_slice(&self.data[start..start + sx]);
            }
        }
        Ok(Grid {
            dims: region.size,
            data,
        })
    }

    /// Writes `patch` into the grid at `region`.
    pub fn paste(&mut self, region: &BoxRegion, patch: &Grid<T>) -> Result<()> {
        region.check_inside(self.dims)?;
        if patch.dims != region.size {
            return Err(Error::DimsMismatch {
                expected: region.size,
                actual: patch.dims,
            });
        }
        let o = region.origin();
        let [sx, sy, sz] = region.size;
        for z in 0..sz {
            for y in 0..sy {
                let dst = self.index([o[0], o[1] + y, o[2] + z]);
                let src = patch.index([0, y, z]);
                self.data[dst..dst + sx].copy_from_slice(&patch.data[src..src + sx]);
            }
        }
        Ok(())
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Object labels; 0 is background / unassigned.
pub type SegmentationVolume = Grid<u32>;

/// Image intensities normalized to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageVolume(Grid<f32>);

impl ImageVolume {
    pub fn new(grid: Grid<f32>) -> Result<Self> {
        if let Some((i, v)) = grid
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidValue(format!(
                "intensity {v} at voxel {:?} outside [0, 1]",
                grid.position(i)
            )));
        }
        Ok(ImageVolume(grid))
    }

    pub fn from_vec(dims: Dims, data: Vec<f32>) -> Result<Self> {
        Self::new(Grid::from_vec(dims, data)?)
    }

    /// 8-bit ingestion: `v / 255`.
    pub fn from_u8(dims: Dims, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Ok(ImageVolume(Grid::from_vec(dims, data)?))
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Self::new(Grid::filled(dims, value))
    }

    pub fn grid(&self) -> &Grid<f32> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f32> {
        self.0
    }

    pub fn crop(&self, region: &BoxRegion) -> Result<ImageVolume> {
        Ok(ImageVolume(self.0.crop(region)?))
    }
}

impl std::ops::Deref for ImageVolume {
    type Target = Grid<f32>;

    fn deref(&self) -> &Grid<f32> {
        &self.0
    }
}

/// Clamps a FoV centre so that a FoV of `fov` around it lies inside `dims`.
/// Requires `fov[a] <= dims[a]`.
pub fn clamp_center(center: Position, fov: Dims, dims: Dims) -> Position {
    [0, 1, 2].map(|a| {
        let half = fov[a] / 2;
        let hi = dims[a] - (fov[a] - half);
        center[a].clamp(half, hi)
    })
}
