use std::collections::{HashSet, VecDeque};

use super::movement::{find_new_positions, reduced_cell, MovementPolicy};
use super::predictor::{MaskPredictor, PatchContext};
use crate::convnet::TARGET_ON;
use crate::error::{Error, Result};
use crate::volume::{clamp_center, BoxRegion, Dims, Grid, ImageVolume, Position, ProbabilityCanvas};

/// FoV movement state for one object: FIFO of pending positions, the
/// reduced-resolution visited set, and the object's canvas.
///
/// Positions are canvas voxels; the FoV evaluated for a position is shifted
/// inward where needed so it lies fully inside the canvas.
#[derive(Clone, Debug)]
pub struct InferenceState {
    policy: MovementPolicy,
    fov: Dims,
    seed: Position,
    queue: VecDeque<Position>,
    visited: HashSet<[usize; 3]>,
    canvas: ProbabilityCanvas,
    history: Vec<Position>,
    current: Option<Position>,
    bounds: Option<(Position, Position)>,
}

impl InferenceState {
    /// Fresh canvas of `dims` (0.05 everywhere, 0.95 at `seed`) with `seed`
    /// as the only queued position.
    pub fn new(dims: Dims, fov: Dims, policy: MovementPolicy, seed: Position) -> Result<Self> {
        if (0..3).any(|a| seed[a] >= dims[a]) {
            return Err(Error::OutOfBounds {
                corner: seed.map(|v| v as i64),
                size: [1, 1, 1],
                dims,
            });
        }
        if (0..3).any(|a| fov[a] > dims[a]) {
            return Err(Error::DimsMismatch {
                expected: dims,
                actual: fov,
            });
        }
        let mut canvas = ProbabilityCanvas::new(dims);
        canvas.set(seed, TARGET_ON);
        let mut queue = VecDeque::new();
        queue.push_back(seed);
        Ok(InferenceState {
            policy,
            fov,
            seed,
            queue,
            visited: HashSet::new(),
            canvas,
            history: Vec::new(),
            current: None,
            bounds: None,
        })
    }

    /// Only positions inside the inclusive box `lo..=hi` are queued from now on.
    pub fn restrict_positions(&mut self, lo: Position, hi: Position) {
        self.bounds = Some((lo, hi));
    }

    fn allowed(&self, p: Position) -> bool {
        self.bounds
            .is_none_or(|(lo, hi)| (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a]))
    }

    /// Pops queued positions until one with an unvisited cell is found, marks
    /// it visited and returns its FoV box.
    pub fn next_region(&mut self) -> Option<BoxRegion> {
        while let Some(p) = self.queue.pop_front() {
            if self.visited.insert(reduced_cell(p, self.policy.delta)) {
                self.history.push(p);
                self.current = Some(p);
                return Some(BoxRegion::centered(clamp_center(p, self.fov, self.canvas.dims()), self.fov));
            }
        }
        self.current = None;
        None
    }

    /// Writes a prediction for the FoV at `region` (as returned by
    /// [`next_region`](Self::next_region)) and enqueues the new positions
    /// found around the current position.
    pub fn commit(&mut self, region: &BoxRegion, prediction: &Grid<f32>, split_bias: bool) -> Result<()> {
        let pos = self
            .current
            .ok_or_else(|| Error::Precondition("commit called without a current position".into()))?;
        self.canvas.write_patch(region, prediction, split_bias)?;
        for c in find_new_positions(self.canvas.values(), pos, &self.policy) {
            if self.allowed(c.position) && !self.visited.contains(&reduced_cell(c.position, self.policy.delta)) {
                self.queue.push_back(c.position);
            }
        }
        Ok(())
    }

    /// Position whose FoV was last returned by [`next_region`](Self::next_region).
    pub fn current(&self) -> Option<Position> {
        self.current
    }

    pub fn canvas(&self) -> &ProbabilityCanvas {
        &self.canvas
    }

    pub fn into_canvas(self) -> ProbabilityCanvas {
        self.canvas
    }

    pub fn seed(&self) -> Position {
        self.seed
    }

    /// Positions in the order they were evaluated.
    pub fn history(&self) -> &[Position] {
        &self.history
    }

    pub fn visited_cells(&self) -> usize {
        self.visited.len()
    }
}

/// Result of growing one object.
#[derive(Clone, Debug)]
pub struct ObjectResult {
    /// Voxels whose final probability reaches `t_move`.
    pub voxels: Vec<Position>,
    pub canvas: ProbabilityCanvas,
    /// Positions visited, in order; its length is the number of predictor
    /// evaluations.
    pub moves: Vec<Position>,
}

/// Grows a single object from `seed` by repeatedly predicting at queued FoV
/// positions, with the split bias active, until the queue is empty.
pub fn segment_object<P: MaskPredictor + ?Sized>(
    image: &ImageVolume,
    seed: Position,
    predictor: &P,
    policy: &MovementPolicy,
) -> Result<ObjectResult> {
    let fov = predictor.fov();
    let mut state = InferenceState::new(image.dims(), fov, *policy, seed)?;
    while let Some(region) = state.next_region() {
        let image_patch = image.crop(&region)?;
        let mask_patch = state.canvas().crop(&region)?;
        let ctx = PatchContext { region, seed };
        let prediction = predictor.predict(&ctx, &image_patch, &mask_patch)?;
        state.commit(&region, &prediction, true)?;
    }
    let moves = state.history().to_vec();
    let canvas = state.into_canvas();
    Ok(ObjectResult {
        voxels: canvas.threshold(policy.t_move),
        canvas,
        moves,
    })
}

/// Upper bound on predictor evaluations for one object in a volume of `dims`.
pub fn evaluation_bound(dims: Dims, delta: Dims) -> usize {
    (0..3).map(|a| dims[a].div_ceil(delta[a])).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{ConstantPredictor, CountingPredictor, GroundTruthOracle};
    use crate::volume::SegmentationVolume;

    fn image(dims: Dims) -> ImageVolume {
        ImageVolume::filled(dims, 0.5).unwrap()
    }

    #[test]
    fn constant_low_predictor_gives_empty_object() {
        let p = CountingPredictor::new(ConstantPredictor { fov: [9, 9, 5], value: 0.05 });
        let policy = MovementPolicy { delta: [2, 2, 1], t_move: 0.9 };
        let r = segment_object(&image([20, 20, 10]), [10, 10, 5], &p, &policy).unwrap();
        assert!(r.voxels.is_empty());
        assert_eq!(p.calls(), 1);
        assert_eq!(r.moves, vec![[10, 10, 5]]);
    }

    #[test]
    fn saturating_predictor_terminates_within_bound() {
        let dims = [30, 28, 12];
        let policy = MovementPolicy { delta: [4, 4, 2], t_move: 0.9 };
        let p = CountingPredictor::new(ConstantPredictor { fov: [9, 9, 5], value: 0.95 });
        let r = segment_object(&image(dims), [3, 3, 3], &p, &policy).unwrap();
        assert!(p.calls() <= evaluation_bound(dims, policy.delta));
        assert_eq!(r.voxels.len(), 30 * 28 * 12);
    }

    fn ball(dims: Dims, c: [f64; 3], r: f64) -> SegmentationVolume {
        Grid::from_fn(dims, |p| {
            let d2: f64 = (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum();
            u32::from(d2 <= r * r)
        })
    }

    #[test]
    fn oracle_recovers_ball_inside_one_fov() {
        let dims = [40, 40, 20];
        let gt = ball(dims, [20.0, 19.0, 10.0], 4.0);
        let oracle = GroundTruthOracle::new(&gt, [33, 33, 17]);
        let r = segment_object(&image(dims), [20, 19, 10], &oracle, &MovementPolicy::default()).unwrap();
        let mut expected: Vec<Position> = (0..gt.len()).filter(|&i| gt.as_slice()[i] == 1).map(|i| gt.position(i)).collect();
        expected.sort();
        let mut got = r.voxels.clone();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn out_of_bounds_seed_rejected() {
        let p = ConstantPredictor { fov: [9, 9, 5], value: 0.05 };
        assert!(segment_object(&image([20, 20, 10]), [20, 0, 0], &p, &MovementPolicy::default()).is_err());
    }

    #[test]
    fn visited_cells_never_repeat() {
        let dims = [30, 28, 12];
        let policy = MovementPolicy { delta: [4, 4, 2], t_move: 0.9 };
        let p = ConstantPredictor { fov: [9, 9, 5], value: 0.95 };
        let r = segment_object(&image(dims), [15, 14, 6], &p, &policy).unwrap();
        let cells: HashSet<_> = r.moves.iter().map(|&m| reduced_cell(m, policy.delta)).collect();
        assert_eq!(cells.len(), r.moves.len());
    }
}
