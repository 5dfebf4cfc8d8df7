//! SAME-mode 3D convolution (cross-correlation) with zero padding of
//! `floor(k/2)` voxels per side, plus its two backward passes.
//!
//! All three are computed as dense matrix products over an unrolled copy
//! of the input, one block of voxels at a time.

use rand::Rng;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// One convolution: weights of shape `(kx, ky, kz, c_in, c_out)` stored
/// row-major (c_out fastest), one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    kernel: [usize; 3],
    c_in: usize,
    c_out: usize,
    pub(crate) weights: Vec<T>,
    pub(crate) bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(kernel: [usize; 3], c_in: usize, c_out: usize) -> Result<Self> {
        if kernel.iter().any(|&k| k % 2 == 0) {
            return Err(Error::Architecture(format!(
                "kernel dims must be odd, got {kernel:?}"
            )));
        }
        if c_in == 0 || c_out == 0 {
            return Err(Error::Architecture("channel counts must be positive".into()));
        }
        Ok(ConvLayer {
            kernel,
            c_in,
            c_out,
            weights: vec![T::zero(); kernel.iter().product::<usize>() * c_in * c_out],
            bias: vec![T::zero(); c_out],
        })
    }

    /// Uniform weights in `±1/sqrt(fan_in)`, zero bias.
    pub fn init_uniform<R: Rng>(
        kernel: [usize; 3],
        c_in: usize,
        c_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(kernel, c_in, c_out)?;
        let scale = 1.0 / ((kernel.iter().product::<usize>() * c_in) as f64).sqrt();
        for w in &mut layer.weights {
            *w = T::lit(rng.gen_range(-1.0..1.0) * scale);
        }
        Ok(layer)
    }

    pub fn from_parts(
        kernel: [usize; 3],
        c_in: usize,
        c_out: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        let mut layer = Self::zeros(kernel, c_in, c_out)?;
        if weights.len() != layer.weights.len() || bias.len() != c_out {
            return Err(Error::ShapeMismatch(format!(
                "expected {} weights and {c_out} biases, got {} and {}",
                layer.weights.len(),
                weights.len(),
                bias.len()
            )));
        }
        layer.weights = weights;
        layer.bias = bias;
        Ok(layer)
    }

    pub fn kernel(&self) -> [usize; 3] {
        self.kernel
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    /// Weight index for spatial tap `(kx, ky, kz)`, input channel 0,
    /// output channel 0.
    #[cfg(test)]
    fn tap(&self, kx: usize, ky: usize, kz: usize) -> usize {
        ((kx * self.kernel[1] + ky) * self.kernel[2] + kz) * self.c_in * self.c_out
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Strided matrix view `(pointer offset, row stride, column stride)`.
type View = (usize, isize, isize);

/// Safe front for [`Real::gemm_acc`]: `c += a b` after checking that every
/// addressed element is in bounds.
fn gemm<T: Real>(m: usize, k: usize, n: usize, a: (&[T], View), b: (&[T], View), c: (&mut [T], View)) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let last = |(off, rs, cs): View, rows: usize, cols: usize| off + (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(last(a.1, m, k) < a.0.len());
    assert!(last(b.1, k, n) < b.0.len());
    assert!(last(c.1, m, n) < c.0.len());
    // SAFETY: strides are positive and the last element of each operand
    // was bounds-checked above.
    unsafe {
        T::gemm_acc(
            m,
            k,
            n,
            a.0.as_ptr().add(a.1 .0),
            a.1 .1,
            a.1 .2,
            b.0.as_ptr().add(b.1 .0),
            b.1 .1,
            b.1 .2,
            c.0.as_mut_ptr().add(c.1 .0),
            c.1 .1,
            c.1 .2,
        );
    }
}

/// Voxels per block of unrolled rows.
const BLOCK: usize = 512;

/// Unrolled ("im2col") view of one sample: row `r` holds, for every tap in
/// weight order, the `c` input channels of the voxel that tap reads for
/// output voxel `r`, or zeros where it falls outside the grid.
struct Unroll {
    dims: [usize; 3],
    kernel: [usize; 3],
    /// Per-tap displacement, in weight order.
    shifts: Vec<[isize; 3]>,
}

impl Unroll {
    fn new(dims: [usize; 3], kernel: [usize; 3]) -> Self {
        let p = kernel.map(|k| (k / 2) as isize);
        let mut shifts = Vec::with_capacity(kernel.iter().product());
        for kx in 0..kernel[0] {
            for ky in 0..kernel[1] {
                for kz in 0..kernel[2] {
                    shifts.push([kx as isize - p[0], ky as isize - p[1], kz as isize - p[2]]);
                }
            }
        }
        Unroll { dims, kernel, shifts }
    }

    fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Flat index of the voxel tap `t` reads for output voxel `v`.
    #[inline]
    fn source(&self, v: usize, t: usize) -> Option<usize> {
        let [nx, ny, nz] = self.dims;
        let [dx, dy, dz] = self.shifts[t];
        let x = (v % nx) as isize + dx;
        let y = (v / nx % ny) as isize + dy;
        let z = (v / (nx * ny)) as isize + dz;
        if x < 0 || y < 0 || z < 0 || x >= nx as isize || y >= ny as isize || z >= nz as isize {
            return None;
        }
        Some((z as usize * ny + y as usize) * nx + x as usize)
    }

    /// Fills `col` with rows `v0 .. v0 + rows` of the unrolled sample `src`.
    fn fill<T: Real>(&self, src: &[T], c: usize, relu: bool, v0: usize, rows: usize, col: &mut [T]) {
        let width = self.taps() * c;
        for (i, row) in col[..rows * width].chunks_exact_mut(width).enumerate() {
            for (t, dst) in row.chunks_exact_mut(c).enumerate() {
                match self.source(v0 + i, t) {
                    None => dst.fill(T::zero()),
                    Some(s) => {
                        let from = &src[s * c..][..c];
                        if relu {
                            for (d, &a) in dst.iter_mut().zip(from) {
                                *d = if a < T::zero() { T::zero() } else { a };
                            }
                        } else {
                            dst.copy_from_slice(from);
                        }
                    }
                }
            }
        }
    }

    /// Adds unrolled rows back onto the voxels they were read from.
    fn scatter_add<T: Real>(&self, col: &[T], c: usize, v0: usize, rows: usize, dst: &mut [T]) {
        let width = self.taps() * c;
        for (i, row) in col[..rows * width].chunks_exact(width).enumerate() {
            for (t, from) in row.chunks_exact(c).enumerate() {
                if let Some(s) = self.source(v0 + i, t) {
                    for (d, &g) in dst[s * c..][..c].iter_mut().zip(from) {
                        *d += g;
                    }
                }
            }
        }
    }

    /// Row blocks `(first voxel, rows)` covering the sample.
    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.voxels();
        (0..n).step_by(BLOCK).map(move |v| (v, BLOCK.min(n - v)))
    }
}

/// Forward SAME convolution. When `relu_input` is set the input is passed
/// through `max(0, .)` as it is read.
pub fn conv3d_same<T: Real>(input: &Tensor<T>, layer: &ConvLayer<T>, relu_input: bool) -> Result<Tensor<T>> {
    if input.channels() != layer.c_in {
        return Err(Error::ChannelMismatch {
            expected: layer.c_in,
            actual: input.channels(),
        });
    }
    let (ci, co) = (layer.c_in, layer.c_out);
    let mut out = Tensor::zeros(input.batch(), input.dims(), co);
    for v in out.as_mut_slice().chunks_exact_mut(co) {
        v.copy_from_slice(&layer.bias);
    }
    let un = Unroll::new(input.dims(), layer.kernel);
    let width = un.taps() * ci;
    let n = un.voxels();
    let mut col = vec![T::zero(); BLOCK.min(n) * width];
    for b in 0..input.batch() {
        let src = &input.as_slice()[b * n * ci..][..n * ci];
        let dst = &mut out.as_mut_slice()[b * n * co..][..n * co];
        for (v0, rows) in un.blocks() {
            un.fill(src, ci, relu_input, v0, rows, &mut col);
            gemm(
                rows,
                width,
                co,
                (&col, (0, width as isize, 1)),
                (&layer.weights, (0, co as isize, 1)),
                (dst, (v0 * co, co as isize, 1)),
            );
        }
    }
    Ok(out)
}

/// Gradient of a SAME convolution with respect to its (post-ReLU, when
/// `relu_input`) input, given the gradient of its output.
pub fn conv3d_same_backward_input<T: Real>(grad_out: &Tensor<T>, layer: &ConvLayer<T>) -> Tensor<T> {
    let (ci, co) = (layer.c_in, layer.c_out);
    let mut grad_in = Tensor::zeros(grad_out.batch(), grad_out.dims(), ci);
    let un = Unroll::new(grad_out.dims(), layer.kernel);
    let width = un.taps() * ci;
    let n = un.voxels();
    let mut col = vec![T::zero(); BLOCK.min(n) * width];
    for b in 0..grad_out.batch() {
        let g = &grad_out.as_slice()[b * n * co..][..n * co];
        let dst = &mut grad_in.as_mut_slice()[b * n * ci..][..n * ci];
        for (v0, rows) in un.blocks() {
            col[..rows * width].fill(T::zero());
            // Transposed weights: element (o, k) sits at k * co + o.
            gemm(
                rows,
                co,
                width,
                (g, (v0 * co, co as isize, 1)),
                (&layer.weights, (0, 1, co as isize)),
                (&mut col, (0, width as isize, 1)),
            );
            un.scatter_add(&col, ci, v0, rows, dst);
        }
    }
    grad_in
}

/// Accumulates weight and bias gradients of a SAME convolution into
/// `grad` (a layer of the same shape used as a gradient buffer).
pub fn conv3d_same_backward_params<T: Real>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    relu_input: bool,
    grad: &mut ConvLayer<T>,
) {
    let (ci, co) = (grad.c_in, grad.c_out);
    for gv in grad_out.as_slice().chunks_exact(co) {
        for (b, &v) in grad.bias.iter_mut().zip(gv) {
            *b += v;
        }
    }
    let un = Unroll::new(input.dims(), grad.kernel);
    let width = un.taps() * ci;
    let n = un.voxels();
    let mut col = vec![T::zero(); BLOCK.min(n) * width];
    for b in 0..input.batch() {
        let src = &input.as_slice()[b * n * ci..][..n * ci];
        let g = &grad_out.as_slice()[b * n * co..][..n * co];
        for (v0, rows) in un.blocks() {
            un.fill(src, ci, relu_input, v0, rows, &mut col);
            gemm(
                width,
                rows,
                co,
                (&col, (0, 1, width as isize)),
                (g, (v0 * co, co as isize, 1)),
                (&mut grad.weights, (0, co as isize, 1)),
            );
        }
    }
}
