use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::engine::segment_object;
use super::movement::MovementPolicy;
use super::predictor::MaskPredictor;
use super::seeds::{seed_points, Seed, SeedConfig, SeedList};
use crate::error::Result;
use crate::volume::{Grid, ImageVolume, ProbabilityCanvas, SegmentationVolume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblyOptions {
    /// Objects adding fewer voxels than this are discarded; 0 disables.
    pub min_object_size: usize,
    /// Keep each committed object's canvas.
    pub keep_canvases: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeedOutcome {
    /// Seed voxel was already assigned to an earlier object.
    Skipped,
    /// Object grew but added nothing (or too little) to the segmentation.
    Discarded { evaluations: usize, voxels: usize },
    Committed { id: u32, evaluations: usize, voxels: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRecord {
    pub seed: Seed,
    pub outcome: SeedOutcome,
}

/// Run log of a full-volume segmentation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferenceLog {
    pub records: Vec<SeedRecord>,
}

impl InferenceLog {
    pub fn evaluations(&self) -> usize {
        self.records
            .iter()
            .map(|r| match r.outcome {
                SeedOutcome::Skipped => 0,
                SeedOutcome::Discarded { evaluations, .. } | SeedOutcome::Committed { evaluations, .. } => evaluations,
            })
            .sum()
    }

    pub fn objects(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, SeedOutcome::Committed { .. }))
            .count()
    }

    /// One line per seed: `seed x y z score outcome [id] [moves] [voxels]`,
    /// then a totals line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let [x, y, z] = r.seed.position;
            let _ = write!(s, "seed {x} {y} {z} {:.4} ", r.seed.score);
            let _ = match r.outcome {
                SeedOutcome::Skipped => writeln!(s, "skipped"),
                SeedOutcome::Discarded { evaluations, voxels } => {
                    writeln!(s, "discarded moves={evaluations} voxels={voxels}")
                }
                SeedOutcome::Committed { id, evaluations, voxels } => {
                    writeln!(s, "committed id={id} moves={evaluations} voxels={voxels}")
                }
            };
        }
        let _ = writeln!(
            s,
            "total seeds={} objects={} evaluations={}",
            self.records.len(),
            self.objects(),
            self.evaluations()
        );
        s
    }
}

#[derive(Clone, Debug)]
pub struct VolumeSegmentation {
    pub labels: SegmentationVolume,
    pub log: InferenceLog,
    /// `(id, canvas)` per committed object when requested.
    pub canvases: Vec<(u32, ProbabilityCanvas)>,
}

/// Runs [`segment_object`] from every seed in order and assembles the
/// thresholded objects into one label volume. Seeds on already-labelled
/// voxels are skipped; voxels keep the first object that claims them.
pub fn segment_with_seeds<P: MaskPredictor + ?Sized>(
    image: &ImageVolume,
    predictor: &P,
    policy: &MovementPolicy,
    seeds: &SeedList,
    options: &AssemblyOptions,
) -> Result<VolumeSegmentation> {
    policy.validate()?;
    let mut labels = Grid::filled(image.dims(), 0u32);
    let mut log = InferenceLog::default();
    let mut canvases = Vec::new();
    let mut next_id = 1u32;
    for seed in seeds.iter() {
        if labels.get(seed.position) != 0 {
            log.records.push(SeedRecord {
                seed: *seed,
                outcome: SeedOutcome::Skipped,
            });
            continue;
        }
        let object = segment_object(image, seed.position, predictor, policy)?;
        let evaluations = object.moves.len();
        let fresh: Vec<_> = object.voxels.iter().filter(|&&p| labels.get(p) == 0).collect();
        let outcome = if fresh.is_empty() || fresh.len() < options.min_object_size {
            SeedOutcome::Discarded {
                evaluations,
                voxels: fresh.len(),
            }
        } else {
            let id = next_id;
            next_id += 1;
            for &&p in &fresh {
                labels.set(p, id);
            }
            if options.keep_canvases {
                canvases.push((id, object.canvas));
            }
            SeedOutcome::Committed {
                id,
                evaluations,
                voxels: fresh.len(),
            }
        };
        log.records.push(SeedRecord { seed: *seed, outcome });
    }
    Ok(VolumeSegmentation { labels, log, canvases })
}

/// Seeds the image with [`seed_points`] and segments it.
pub fn segment_volume<P: MaskPredictor + ?Sized>(
    image: &ImageVolume,
    predictor: &P,
    policy: &MovementPolicy,
    seed_config: &SeedConfig,
    options: &AssemblyOptions,
) -> Result<VolumeSegmentation> {
    let seeds = seed_points(image, seed_config)?;
    segment_with_seeds(image, predictor, policy, &seeds, options)
}
