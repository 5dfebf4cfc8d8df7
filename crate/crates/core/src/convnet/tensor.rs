use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Error, Result};
use crate::volume::{voxel_count, Dims, Grid};

/// Floating-point element type of the network: `f32` for training and
/// inference, `f64` for gradient checking.
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn lit(v: f64) -> Self;

    /// `C += A B` with `A` m x k and `B` k x n, all addressed by row and
    /// column strides.
    ///
    /// # Safety
    /// Every element reachable through the dimensions and strides must lie
    /// inside the allocation behind its pointer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    unsafe fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    unsafe fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
    }
}

/// Batched multichannel 3D grid. Layout is `[batch][z][y][x][channel]` with
/// channels fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    batch: usize,
    dims: Dims,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(batch: usize, dims: Dims, channels: usize) -> Self {
        Tensor {
            batch,
            dims,
            channels,
            data: vec![T::zero(); batch * voxel_count(dims) * channels],
        }
    }

    pub fn from_vec(batch: usize, dims: Dims, channels: usize, data: Vec<T>) -> Result<Self> {
        let expected = batch * voxel_count(dims) * channels;
        if data.len() != expected {
            return Err(Error::PayloadMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            batch,
            dims,
            channels,
            data,
        })
    }

    /// Interleaves single-channel grids into one sample per entry of
    /// `samples`; each sample is a list of channel grids with equal dims.
    pub fn from_grids(samples: &[Vec<&Grid<f32>>]) -> Result<Self> {
        let first = samples
            .first()
            .and_then(|s| s.first())
            .ok_or_else(|| Error::ShapeMismatch("empty batch".into()))?;
        let dims = first.dims();
        let channels = samples[0].len();
        let n = voxel_count(dims);
        let mut data = Vec::with_capacity(samples.len() * n * channels);
        for sample in samples {
            if sample.len() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    actual: sample.len(),
                });
            }
            for g in sample {
                if g.dims() != dims {
                    return Err(Error::DimsMismatch {
                        expected: dims,
                        actual: g.dims(),
                    });
                }
            }
            for i in 0..n {
                for g in sample {
                    data.push(T::lit(f64::from(g.as_slice()[i])));
                }
            }
        }
        Ok(Tensor {
            batch: samples.len(),
            dims,
            channels,
            data,
        })
    }

    /// Extracts channel `c` of sample `b` as an `f32` grid.
    pub fn channel_grid(&self, b: usize, c: usize) -> Grid<f32> {
        let n = voxel_count(self.dims);
        let base = b * n * self.channels;
        let data = (0..n)
            .map(|i| self.data[base + i * self.channels + c].to_f32().unwrap_or(f32::NAN))
            .collect();
        Grid::from_vec(self.dims, data).expect("length matches dims")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn voxels(&self) -> usize {
        voxel_count(self.dims)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Index of channel 0 at voxel `(x, y, z)` of sample `b`.
    #[inline]
    pub fn offset(&self, b: usize, p: [usize; 3]) -> usize {
        (((b * self.dims[2] + p[2]) * self.dims[1] + p[1]) * self.dims[0] + p[0]) * self.channels
    }

    pub fn same_shape(&self, other: &Tensor<T>) -> bool {
        self.batch == other.batch && self.dims == other.dims && self.channels == other.channels
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn convert<U: Real>(&self) -> Tensor<U> {
        Tensor {
            batch: self.batch,
            dims: self.dims,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}
