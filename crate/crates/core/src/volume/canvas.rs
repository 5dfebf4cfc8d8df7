use super::{BoxRegion, Dims, Grid, Position};
use crate::error::{Error, Result};
use crate::inference::apply_split_bias;

/// Initial value of every canvas voxel.
pub const CANVAS_INIT: f32 = 0.05;

/// Per-object probability map that the predictor writes into as the FoV
/// moves. `update_count` tracks how many times each voxel has been written.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityCanvas {
    values: Grid<f32>,
    update_count: Grid<u32>,
}

impl ProbabilityCanvas {
    pub fn new(dims: Dims) -> Self {
        ProbabilityCanvas {
            values: Grid::filled(dims, CANVAS_INIT),
            update_count: Grid::filled(dims, 0),
        }
    }

    pub fn dims(&self) -> Dims {
        self.values.dims()
    }

    pub fn values(&self) -> &Grid<f32> {
        &self.values
    }

    pub fn update_counts(&self) -> &Grid<u32> {
        &self.update_count
    }

    pub fn get(&self, p: Position) -> f32 {
        self.values.get(p)
    }

    /// Sets a voxel without touching its update count (used for seeding).
    pub fn set(&mut self, p: Position, value: f32) {
        self.values.set(p, value);
    }

    pub fn crop(&self, region: &BoxRegion) -> Result<Grid<f32>> {
        self.values.crop(region)
    }

    /// Writes a predicted patch into `region`. With `split_bias` each voxel
    /// goes through [`apply_split_bias`]; otherwise it is overwritten.
    pub fn write_patch(
        &mut self,
        region: &BoxRegion,
        patch: &Grid<f32>,
        split_bias: bool,
    ) -> Result<()> {
        region.check_inside(self.dims())?;
        if patch.dims() != region.size {
            return Err(Error::DimsMismatch {
                expected: region.size,
                actual: patch.dims(),
            });
        }
        if let Some(v) = patch
            .as_slice()
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidValue(format!(
                "patch probability {v} outside [0, 1]"
            )));
        }
        let o = region.origin();
        let [sx, sy, sz] = region.size;
        let canvas_dims = self.dims();
        let dims = region.size;
        let values = self.values.as_mut_slice();
        let counts = self.update_count.as_mut_slice();
        for z in 0..sz {
            for y in 0..sy {
                let dst = o[0] + canvas_dims[0] * ((o[1] + y) + canvas_dims[1] * (o[2] + z));
                let src = dims[0] * (y + dims[1] * z);
                for x in 0..sx {
                    let t = counts[dst + x] + 1;
                    let pred = patch.as_slice()[src + x];
                    values[dst + x] = if split_bias {
                        apply_split_bias(values[dst + x], pred, t)
                    } else {
                        pred
                    };
                    counts[dst + x] = t;
                }
            }
        }
        Ok(())
    }

    /// Voxels whose probability reaches `threshold`.
    pub fn threshold(&self, threshold: f32) -> Vec<Position> {
        self.values
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold)
            .map(|(i, _)| self.values.position(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region() -> BoxRegion {
        BoxRegion::new([1, 1, 1], [2, 2, 2]).unwrap()
    }

    #[test]
    fn fresh_canvas_is_uniform() {
        let c = ProbabilityCanvas::new([3, 3, 3]);
        assert!(c.values().as_slice().iter().all(|&v| v == CANVAS_INIT));
        assert!(c.update_counts().as_slice().iter().all(|&n| n == 0));
    }

    #[test]
    fn first_write_copies_verbatim() {
        let mut c = ProbabilityCanvas::new([4, 4, 4]);
        let patch = Grid::from_vec([2, 2, 2], vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.99]).unwrap();
        c.write_patch(&region(), &patch, true).unwrap();
        assert_eq!(c.crop(&region()).unwrap(), patch);
        assert_eq!(c.update_counts().get([1, 1, 1]), 1);
        assert_eq!(c.update_counts().get([0, 0, 0]), 0);
    }

    #[test]
    fn split_bias_blocks_recovery() {
        let mut c = ProbabilityCanvas::new([4, 4, 4]);
        c.write_patch(&region(), &Grid::filled([2, 2, 2], 0.3), true).unwrap();
        c.write_patch(&region(), &Grid::filled([2, 2, 2], 0.7), true).unwrap();
        assert_eq!(c.get([1, 1, 1]), 0.3);
        assert_eq!(c.update_counts().get([1, 1, 1]), 2);
    }

    #[test]
    fn plain_overwrite_without_bias() {
        let mut c = ProbabilityCanvas::new([4, 4, 4]);
        c.write_patch(&region(), &Grid::filled([2, 2, 2], 0.3), false).unwrap();
        c.write_patch(&region(), &Grid::filled([2, 2, 2], 0.7), false).unwrap();
        assert_eq!(c.get([1, 1, 1]), 0.7);
    }

    #[test]
    fn dims_mismatch_rejected() {
        let mut c = ProbabilityCanvas::new([4, 4, 4]);
        let err = c.write_patch(&region(), &Grid::filled([3, 2, 2], 0.5), false);
        assert!(matches!(err, Err(Error::DimsMismatch { .. })));
    }

    proptest! {
        #[test]
        fn writes_stay_in_unit_range_and_counts_grow(
            patches in prop::collection::vec(prop::collection::vec(0.0f32..=1.0, 8), 1..6),
            bias in any::<bool>(),
        ) {
            let mut c = ProbabilityCanvas::new([4, 4, 4]);
            for p in patches {
                let before = c.update_counts().clone();
                c.write_patch(&region(), &Grid::from_vec([2, 2, 2], p).unwrap(), bias).unwrap();
                prop_assert!(c.values().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(before.as_slice().iter().zip(c.update_counts().as_slice()).all(|(a, b)| b >= a));
            }
        }
    }
}
