use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::convnet::{TARGET_OFF, TARGET_ON};
use crate::error::{Error, Result};
use crate::synth::World;
use crate::volume::{BoxRegion, Dims, Grid, Position};

/// Example extent that allows exactly one FoV step in every direction.
pub fn example_dims(fov: Dims, delta: Dims) -> Dims {
    [0, 1, 2].map(|a| fov[a] + 2 * delta[a])
}

/// A training subvolume: image, soft-target mask of the object under the
/// central voxel, and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub image: Grid<f32>,
    pub target: Grid<f32>,
    /// Centre in example coordinates.
    pub center: Position,
    /// Centre in the source volume.
    pub source_center: Position,
}

impl TrainingExample {
    pub fn dims(&self) -> Dims {
        self.image.dims()
    }

    /// Fraction of target voxels at the on value.
    pub fn active_fraction(&self) -> f64 {
        let on = self.target.as_slice().iter().filter(|&&v| v == TARGET_ON).count();
        on as f64 / self.target.len() as f64
    }
}

/// Crops a `dims` example centred on `center`; target voxels sharing the
/// centre's label are 0.95, all others 0.05.
pub fn extract_example(
    image: &Grid<f32>,
    labels: &Grid<u32>,
    center: Position,
    dims: Dims,
) -> Result<TrainingExample> {
    if image.dims() != labels.dims() {
        return Err(Error::DimsMismatch {
            expected: image.dims(),
            actual: labels.dims(),
        });
    }
    if !labels.in_bounds(center.map(|v| v as i64)) {
        return Err(Error::OutOfBounds {
            corner: center.map(|v| v as i64),
            size: [1, 1, 1],
            dims: labels.dims(),
        });
    }
    let label = labels.get(center);
    if label == 0 {
        return Err(Error::Precondition(format!("example centre {center:?} lies on background")));
    }
    let region = BoxRegion::centered(center, dims);
    let image = image.crop(&region)?;
    let target = labels
        .crop(&region)?
        .map(|l| if l == label { TARGET_ON } else { TARGET_OFF });
    Ok(TrainingExample {
        image,
        target,
        center: dims.map(|d| d / 2),
        source_center: center,
    })
}

/// Endless stream of examples centred on random labelled voxels of a
/// corpus, drawn with a seeded generator.
pub struct ExampleSampler<'a> {
    worlds: &'a [World],
    /// Per world, the labelled voxels whose example box fits.
    centers: Vec<Vec<Position>>,
    dims: Dims,
    rng: ChaCha8Rng,
}

impl<'a> ExampleSampler<'a> {
    pub fn new(worlds: &'a [World], dims: Dims, seed: u64) -> Result<Self> {
        if worlds.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let centers: Vec<Vec<Position>> = worlds
            .iter()
            .map(|w| {
                let l = &w.labels;
                (0..l.len())
                    .filter(|&i| l.as_slice()[i] != 0)
                    .map(|i| l.position(i))
                    .filter(|&p| BoxRegion::centered(p, dims).fits_in(l.dims()))
                    .collect()
            })
            .collect();
        if centers.iter().all(Vec::is_empty) {
            return Err(Error::EmptyCorpus);
        }
        Ok(ExampleSampler {
            worlds,
            centers,
            dims,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sample(&mut self) -> Result<TrainingExample> {
        let w = loop {
            let w = self.rng.gen_range(0..self.worlds.len());
            if !self.centers[w].is_empty() {
                break w;
            }
        };
        let c = self.centers[w][self.rng.gen_range(0..self.centers[w].len())];
        let world = &self.worlds[w];
        extract_example(world.image.grid(), &world.labels, c, self.dims)
    }
}

impl Iterator for ExampleSampler<'_> {
    type Item = TrainingExample;

    fn next(&mut self) -> Option<TrainingExample> {
        // Centres are pre-filtered, so extraction cannot fail.
        self.sample().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_example_dims() {
        assert_eq!(example_dims([33, 33, 17], [8, 8, 4]), [49, 49, 25]);
        assert_eq!(example_dims([17, 17, 9], [4, 4, 2]), [25, 25, 13]);
    }

    #[test]
    fn uniform_object_gives_full_target() {
        let img = Grid::filled([9, 9, 5], 0.5);
        let gt = Grid::filled([9, 9, 5], 3u32);
        let ex = extract_example(&img, &gt, [4, 4, 2], [5, 5, 3]).unwrap();
        assert!(ex.target.as_slice().iter().all(|&v| v == TARGET_ON));
        assert_eq!(ex.active_fraction(), 1.0);
        assert_eq!(ex.center, [2, 2, 1]);
    }

    #[test]
    fn half_object_half_fraction() {
        let img = Grid::filled([6, 2, 1], 0.5);
        let gt = Grid::from_fn([6, 2, 1], |[x, _, _]| if x < 3 { 2 } else { 1 });
        // Box x in 1..5 around x = 3: labels 2, 2, 1, 1.
        let ex = extract_example(&img, &gt, [3, 1, 0], [4, 2, 1]).unwrap();
        assert_eq!(ex.active_fraction(), 0.5);
    }

    #[test]
    fn background_centre_rejected() {
        let img = Grid::filled([5, 5, 5], 0.5);
        let gt = Grid::filled([5, 5, 5], 0u32);
        assert!(matches!(extract_example(&img, &gt, [2, 2, 2], [3, 3, 3]), Err(Error::Precondition(_))));
    }

    #[test]
    fn box_outside_volume_rejected() {
        let img = Grid::filled([5, 5, 5], 0.5);
        let gt = Grid::filled([5, 5, 5], 1u32);
        assert!(matches!(extract_example(&img, &gt, [0, 2, 2], [3, 3, 3]), Err(Error::OutOfBounds { .. })));
    }
}
