use crate::convnet::{FfnModel, TARGET_OFF, TARGET_ON};
use crate::error::{Error, Result};
use crate::volume::{BoxRegion, Dims, Grid, Position, SegmentationVolume};

/// Where a prediction is being made: the FoV box in volume coordinates and
/// the seed of the object being grown.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchContext {
    pub region: BoxRegion,
    pub seed: Position,
}

/// Anything that maps an (image, mask) FoV pair to a probability patch of
/// the same dims with values in (0, 1).
pub trait MaskPredictor {
    fn fov(&self) -> Dims;

    fn predict(&self, ctx: &PatchContext, image: &Grid<f32>, mask: &Grid<f32>) -> Result<Grid<f32>>;
}

impl MaskPredictor for FfnModel<f32> {
    fn fov(&self) -> Dims {
        FfnModel::fov(self)
    }

    fn predict(&self, _ctx: &PatchContext, image: &Grid<f32>, mask: &Grid<f32>) -> Result<Grid<f32>> {
        self.forward(image, mask)
    }
}

/// Predicts from the hidden ground truth: 0.95 on voxels carrying the seed's
/// label, 0.05 elsewhere. A seed on background (label 0) yields 0.05
/// everywhere.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruthOracle<'a> {
    gt: &'a SegmentationVolume,
    fov: Dims,
}

impl<'a> GroundTruthOracle<'a> {
    pub fn new(gt: &'a SegmentationVolume, fov: Dims) -> Self {
        GroundTruthOracle { gt, fov }
    }
}

impl MaskPredictor for GroundTruthOracle<'_> {
    fn fov(&self) -> Dims {
        self.fov
    }

    fn predict(&self, ctx: &PatchContext, image: &Grid<f32>, _mask: &Grid<f32>) -> Result<Grid<f32>> {
        if image.dims() != ctx.region.size {
            return Err(Error::DimsMismatch {
                expected: ctx.region.size,
                actual: image.dims(),
            });
        }
        let label = self.gt.get(ctx.seed);
        let patch = self.gt.crop(&ctx.region)?;
        Ok(patch.map(|l| if label != 0 && l == label { TARGET_ON } else { TARGET_OFF }))
    }
}

/// Wraps a predictor and counts its evaluations.
#[derive(Debug)]
pub struct CountingPredictor<P> {
    pub inner: P,
    calls: std::cell::Cell<usize>,
}

impl<P> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        CountingPredictor {
            inner,
            calls: std::cell::Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<P: MaskPredictor> MaskPredictor for CountingPredictor<P> {
    fn fov(&self) -> Dims {
        self.inner.fov()
    }

    fn predict(&self, ctx: &PatchContext, image: &Grid<f32>, mask: &Grid<f32>) -> Result<Grid<f32>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.predict(ctx, image, mask)
    }
}

/// Returns the same value everywhere; used to probe the movement engine.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPredictor {
    pub fov: Dims,
    pub value: f32,
}

impl MaskPredictor for ConstantPredictor {
    fn fov(&self) -> Dims {
        self.fov
    }

    fn predict(&self, _ctx: &PatchContext, image: &Grid<f32>, _mask: &Grid<f32>) -> Result<Grid<f32>> {
        Ok(Grid::filled(image.dims(), self.value))
    }
}
