use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::example::{example_dims, ExampleSampler, TrainingExample};
use super::rebalance::{RebalancedStream, RebalancingBins};
use crate::convnet::{save_checkpoint, FfnModel, ModelSpec, Tensor};
use crate::error::{Error, Result};
use crate::inference::{segment_volume, AssemblyOptions, InferenceState, MovementPolicy, SeedConfig};
use crate::metrics::{evaluate, EvaluationReport};
use crate::synth::World;
use crate::volume::{BoxRegion, Dims, Grid, Position};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub fov: Dims,
    pub channels: usize,
    /// Residual modules; derived from the FoV when absent.
    pub modules: Option<usize>,
    pub delta: Dims,
    pub t_move: f32,
    /// Example extent; must equal `fov + 2 * delta` when given.
    pub example: Option<Dims>,
    pub learning_rate: f32,
    pub batch_size: usize,
    /// Upper bound on SGD steps.
    pub max_steps: usize,
    /// SGD steps between checkpoints.
    pub checkpoint_interval: usize,
    /// Non-improving evaluations tolerated before stopping.
    pub patience: usize,
    /// Resample examples to equal active-fraction class frequencies.
    pub rebalance: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            fov: [33, 33, 17],
            channels: 32,
            modules: None,
            delta: [8, 8, 4],
            t_move: 0.9,
            example: None,
            learning_rate: 0.001,
            batch_size: 4,
            max_steps: 20_000,
            checkpoint_interval: 1_000,
            patience: 3,
            rebalance: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Small network for CPU-scale experiments. The loss is summed over
    /// about 10^4 voxels per batch, so the step size is scaled down to match.
    pub fn desk_scale() -> Self {
        TrainingConfig {
            fov: [17, 17, 9],
            channels: 8,
            delta: [4, 4, 2],
            learning_rate: 1e-5,
            ..TrainingConfig::default()
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            fov: self.fov,
            channels: self.channels,
            modules: self.modules.unwrap_or_else(|| ModelSpec::default_modules(self.fov)),
        }
    }

    pub fn policy(&self) -> MovementPolicy {
        MovementPolicy {
            delta: self.delta,
            t_move: self.t_move,
        }
    }

    pub fn example_dims(&self) -> Dims {
        example_dims(self.fov, self.delta)
    }

    /// Fills derived fields so the config prints in full.
    pub fn resolved(&self) -> Self {
        TrainingConfig {
            modules: Some(self.model_spec().modules),
            example: Some(self.example_dims()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec()
            .validate()
            .map_err(|e| Error::config("fov/channels/modules", e.to_string()))?;
        self.policy().validate()?;
        if let Some(ex) = self.example {
            let want = self.example_dims();
            if ex != want {
                return Err(Error::config(
                    "example",
                    format!("{ex:?} must equal fov + 2 * delta = {want:?}"),
                ));
            }
        }
        if (0..3).any(|a| 2 * self.delta[a] > self.fov[a]) {
            return Err(Error::config("delta", "each step must be at most half the fov"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("max_steps", self.max_steps),
            ("checkpoint_interval", self.checkpoint_interval),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Several examples advanced through their FoV moves in lockstep; each
/// step is one forward/backward pass over the examples that still have a
/// move, followed by one SGD update.
pub struct LockstepBatch {
    examples: Vec<TrainingExample>,
    states: Vec<InferenceState>,
}

impl LockstepBatch {
    pub fn new(examples: Vec<TrainingExample>, fov: Dims, policy: &MovementPolicy) -> Result<Self> {
        let want = example_dims(fov, policy.delta);
        let states = examples
            .iter()
            .map(|ex| {
                if ex.dims() != want || ex.target.dims() != want {
                    return Err(Error::DimsMismatch {
                        expected: want,
                        actual: ex.dims(),
                    });
                }
                let mut st = InferenceState::new(want, fov, *policy, ex.center)?;
                let c = ex.center;
                let d = policy.delta;
                st.restrict_positions([0, 1, 2].map(|a| c[a] - d[a]), [0, 1, 2].map(|a| c[a] + d[a]));
                Ok(st)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LockstepBatch { examples, states })
    }

    /// Runs one step; `None` once every example has run out of moves.
    pub fn step(&mut self, model: &mut FfnModel<f32>, lr: f32) -> Result<Option<f32>> {
        let mut active: Vec<(usize, BoxRegion)> = Vec::new();
        for (i, st) in self.states.iter_mut().enumerate() {
            if let Some(r) = st.next_region() {
                active.push((i, r));
            }
        }
        if active.is_empty() {
            return Ok(None);
        }
        let mut patches: Vec<(Grid<f32>, Grid<f32>, Grid<f32>)> = Vec::with_capacity(active.len());
        for &(i, r) in &active {
            let ex = &self.examples[i];
            patches.push((ex.image.crop(&r)?, self.states[i].canvas().crop(&r)?, ex.target.crop(&r)?));
        }
        let inputs: Vec<Vec<&Grid<f32>>> = patches.iter().map(|(im, m, _)| vec![im, m]).collect();
        let targets: Vec<Vec<&Grid<f32>>> = patches.iter().map(|(_, _, t)| vec![t]).collect();
        let input = Tensor::<f32>::from_grids(&inputs)?;
        let target = Tensor::<f32>::from_grids(&targets)?;
        let (loss, grads, prediction) = model.forward_backward(&input, &target)?;
        model.sgd_step(&grads, lr)?;
        for (k, &(i, r)) in active.iter().enumerate() {
            self.states[i].commit(&r, &prediction.channel_grid(k, 0), false)?;
        }
        Ok(Some(loss))
    }

    /// Positions visited so far, per example.
    pub fn moves(&self) -> Vec<Vec<Position>> {
        self.states.iter().map(|s| s.history().to_vec()).collect()
    }
}

/// Trains on every FoV move of `examples` (in lockstep) until all are done;
/// returns the loss of each SGD step.
pub fn train_batch(
    model: &mut FfnModel<f32>,
    examples: &[TrainingExample],
    policy: &MovementPolicy,
    lr: f32,
) -> Result<Vec<f32>> {
    let mut batch = LockstepBatch::new(examples.to_vec(), model.fov(), policy)?;
    let mut losses = Vec::new();
    while let Some(loss) = batch.step(model, lr)? {
        losses.push(loss);
    }
    Ok(losses)
}

/// Per-move loss trace of training on one example.
pub fn train_on_example(
    model: &mut FfnModel<f32>,
    example: &TrainingExample,
    policy: &MovementPolicy,
    lr: f32,
) -> Result<Vec<f32>> {
    train_batch(model, std::slice::from_ref(example), policy, lr)
}

/// Scores a checkpoint.
pub trait CheckpointEvaluator {
    fn evaluate(&mut self, model: &FfnModel<f32>) -> Result<EvaluationReport>;
}

/// Full inference with generated seeds on held-out worlds; edge counts are
/// pooled over all worlds.
pub struct HeldOutEvaluator<'a> {
    pub worlds: &'a [World],
    pub policy: MovementPolicy,
    pub seeds: SeedConfig,
    pub options: AssemblyOptions,
}

impl HeldOutEvaluator<'_> {
    /// Per-world reports, skipping worlds without skeleton edges.
    pub fn reports(&self, model: &FfnModel<f32>) -> Result<Vec<EvaluationReport>> {
        let mut out = Vec::new();
        for w in self.worlds {
            if w.skeletons.iter().all(|s| s.edges.is_empty()) {
                continue;
            }
            let seg = segment_volume(&w.image, model, &self.policy, &self.seeds, &self.options)?;
            out.push(evaluate(&w.skeletons, &seg.labels)?);
        }
        Ok(out)
    }
}

impl CheckpointEvaluator for HeldOutEvaluator<'_> {
    fn evaluate(&mut self, model: &FfnModel<f32>) -> Result<EvaluationReport> {
        EvaluationReport::aggregate(&self.reports(model)?).ok_or(Error::ZeroEdges)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub step: usize,
    pub path: Option<PathBuf>,
    pub report: EvaluationReport,
    /// Mean per-step loss since the previous checkpoint.
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub model: FfnModel<f32>,
    /// Model of the best-scoring checkpoint.
    pub best_model: FfnModel<f32>,
    pub best: usize,
    pub checkpoints: Vec<CheckpointRecord>,
    pub losses: Vec<f32>,
    pub stopped_early: bool,
}

impl TrainingOutcome {
    pub fn best_record(&self) -> &CheckpointRecord {
        &self.checkpoints[self.best]
    }
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("checkpoint_{step:06}.ffn")
}

/// Trains `model` on examples drawn from `corpus` for up to
/// `config.max_steps` SGD steps. Every `checkpoint_interval` steps, and once
/// at the end, the model is evaluated (and saved under `out_dir` when
/// given); training stops after `patience` evaluations in a row fail to
/// raise edge accuracy.
pub fn training_loop(
    mut model: FfnModel<f32>,
    corpus: &[World],
    config: &TrainingConfig,
    evaluator: &mut dyn CheckpointEvaluator,
    out_dir: Option<&Path>,
) -> Result<TrainingOutcome> {
    config.validate()?;
    if model.spec() != config.model_spec() {
        return Err(Error::Architecture(format!(
            "model {:?} does not match config {:?}",
            model.spec(),
            config.model_spec()
        )));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let policy = config.policy();
    let sampler = ExampleSampler::new(corpus, config.example_dims(), config.seed.wrapping_add(1))?;
    let mut examples: Box<dyn Iterator<Item = TrainingExample> + '_> = if config.rebalance {
        let bins = RebalancingBins::default();
        let classes = bins.classes();
        Box::new(
            RebalancedStream::new(sampler, classes, move |ex: &TrainingExample| bins.class_of(ex.active_fraction()), config.seed.wrapping_add(2))
                .with_patience(10_000),
        )
    } else {
        Box::new(sampler)
    };

    let mut losses: Vec<f32> = Vec::new();
    let mut tracker = Tracker {
        out_dir,
        patience: config.patience,
        checkpoints: Vec::new(),
        best: None,
        stale: 0,
    };
    let mut stopped_early = false;
    let mut since_checkpoint = 0usize;
    let mut batch: Option<LockstepBatch> = None;
    let mut step = 0;

    while step < config.max_steps {
        if batch.is_none() {
            let next: Vec<TrainingExample> = examples.by_ref().take(config.batch_size).collect();
            if next.is_empty() {
                break;
            }
            batch = Some(LockstepBatch::new(next, config.fov, &policy)?);
        }
        let b = batch.as_mut().expect("batch was just filled");
        match b.step(&mut model, config.learning_rate)? {
            None => batch = None,
            Some(loss) => {
                losses.push(loss);
                step += 1;
                since_checkpoint += 1;
                if step % config.checkpoint_interval == 0 {
                    let stop = tracker.checkpoint(&model, step, &losses[losses.len() - since_checkpoint..], evaluator)?;
                    since_checkpoint = 0;
                    if stop {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    if since_checkpoint > 0 || tracker.checkpoints.is_empty() {
        tracker.checkpoint(&model, step, &losses[losses.len() - since_checkpoint..], evaluator)?;
    }
    let (best, _, best_model) = tracker.best.expect("at least one checkpoint is evaluated");
    Ok(TrainingOutcome {
        model,
        best_model,
        best,
        checkpoints: tracker.checkpoints,
        losses,
        stopped_early,
    })
}

struct Tracker<'a> {
    out_dir: Option<&'a Path>,
    patience: usize,
    checkpoints: Vec<CheckpointRecord>,
    best: Option<(usize, f64, FfnModel<f32>)>,
    stale: usize,
}

impl Tracker<'_> {
    /// Saves and scores `model`; true when patience has run out.
    fn checkpoint(
        &mut self,
        model: &FfnModel<f32>,
        step: usize,
        recent: &[f32],
        evaluator: &mut dyn CheckpointEvaluator,
    ) -> Result<bool> {
        let path = match self.out_dir {
            Some(dir) => {
                let p = dir.join(checkpoint_file_name(step));
                save_checkpoint(model, &p)?;
                Some(p)
            }
            None => None,
        };
        let report = evaluator.evaluate(model)?;
        let mean_loss = if recent.is_empty() {
            0.0
        } else {
            recent.iter().map(|&l| f64::from(l)).sum::<f64>() / recent.len() as f64
        };
        log::info!(
            "step {step}: loss {mean_loss:.4} edge accuracy {:.1}% merged {:.1}% split {:.1}%",
            report.edge_accuracy(),
            report.merged_pct(),
            report.split_pct()
        );
        let score = report.edge_accuracy();
        self.checkpoints.push(CheckpointRecord {
            step,
            path,
            report,
            mean_loss,
        });
        if self.best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            self.best = Some((self.checkpoints.len() - 1, score, model.clone()));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Ok(self.stale >= self.patience)
    }
}
