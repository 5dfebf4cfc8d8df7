use std::fs;
use std::path::{Path, PathBuf};

use ffn_core::convnet::{load_checkpoint, save_checkpoint, FfnModel};
use ffn_core::inference::{seed_points, segment_volume, GroundTruthOracle};
use ffn_core::metrics::{evaluate, load_skeletons};
use ffn_core::synth::{generate_world, World};
use ffn_core::training::{training_loop, HeldOutEvaluator};
use ffn_core::volume::{load_image, load_labels, save_labels};

use crate::config::RunConfig;
use crate::error::CliError;

pub const SEGMENTATION_FILE: &str = "segmentation.raw";
pub const RUN_LOG_FILE: &str = "run.log";
pub const METRICS_FILE: &str = "metrics.log";
pub const BEST_FILE: &str = "best.ffn";
pub const CONFIG_FILE: &str = "config.toml";

pub enum Predictor {
    Checkpoint(PathBuf),
    Oracle(PathBuf),
}

fn world_dir(root: &Path, split: &str, i: usize) -> PathBuf {
    root.join(split).join(format!("world_{i:03}"))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    let splits = [("train", cfg.data.train_worlds), ("eval", cfg.data.eval_worlds)];
    let mut seed = cfg.synth.seed;
    for (split, n) in splits {
        for i in 0..n {
            let mut sc = cfg.synth.clone();
            sc.seed = seed;
            seed = seed.wrapping_add(1);
            let world = generate_world(&sc)?;
            let dir = world_dir(out, split, i);
            world.save(&dir)?;
            log::info!("{}: {} objects", dir.display(), world.skeletons.len());
        }
    }
    write(&out.join(CONFIG_FILE), &cfg.to_toml())
}

/// Loads `root/split/world_000`, `world_001`, ... until one is missing.
fn load_split(root: &Path, split: &str) -> Result<Vec<World>, CliError> {
    let mut worlds = Vec::new();
    loop {
        let dir = world_dir(root, split, worlds.len());
        if !dir.is_dir() {
            return Ok(worlds);
        }
        worlds.push(World::load(&dir)?);
    }
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), CliError> {
    let train = load_split(data, "train")?;
    let held_out = load_split(data, "eval")?;
    if train.is_empty() || held_out.is_empty() {
        return Err(ffn_core::Error::EmptyCorpus.into());
    }
    create_dir(out)?;
    write(&out.join(CONFIG_FILE), &cfg.to_toml())?;
    let tc = &cfg.training;
    let model = FfnModel::init(tc.model_spec(), tc.seed)?;
    let mut evaluator = HeldOutEvaluator {
        worlds: &held_out,
        policy: tc.policy(),
        seeds: cfg.seeds,
        options: cfg.assembly,
    };
    let outcome = training_loop(model, &train, tc, &mut evaluator, Some(out))?;
    let mut lines = String::new();
    for c in &outcome.checkpoints {
        let kv = c.report.render_kv().replace('\n', " ");
        lines.push_str(&format!("step={} mean_loss={:.6} {}\n", c.step, c.mean_loss, kv.trim_end()));
    }
    write(&out.join(METRICS_FILE), &lines)?;
    save_checkpoint(&outcome.best_model, out.join(BEST_FILE))?;
    let best = outcome.best_record();
    println!(
        "best checkpoint: step {} edge accuracy {:.2}% merged {:.2}%{}",
        best.step,
        best.report.edge_accuracy(),
        best.report.merged_pct(),
        if outcome.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(())
}

pub fn infer(cfg: &RunConfig, predictor: &Predictor, image: &Path, out: &Path) -> Result<(), CliError> {
    let tc = &cfg.training;
    let img = load_image(image)?;
    let policy = tc.policy();
    let seg = match predictor {
        Predictor::Checkpoint(path) => {
            let model = load_checkpoint(path)?;
            if model.fov() != tc.fov {
                return Err(CliError::Config(format!(
                    "fov {:?} does not match checkpoint {} with fov {:?}",
                    tc.fov,
                    path.display(),
                    model.fov()
                )));
            }
            segment_volume(&img, &model, &policy, &cfg.seeds, &cfg.assembly)?
        }
        Predictor::Oracle(path) => {
            let labels = load_labels(path)?;
            let oracle = GroundTruthOracle::new(&labels, tc.fov);
            segment_volume(&img, &oracle, &policy, &cfg.seeds, &cfg.assembly)?
        }
    };
    create_dir(out)?;
    save_labels(&seg.labels, out.join(SEGMENTATION_FILE))?;
    write(&out.join(RUN_LOG_FILE), &seg.log.render())?;
    println!(
        "{} objects from {} seeds, {} evaluations",
        seg.log.objects(),
        seg.log.records.len(),
        seg.log.evaluations()
    );
    Ok(())
}

pub fn eval(segmentation: &Path, skeletons: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let labels = load_labels(segmentation)?;
    let skel = load_skeletons(skeletons)?;
    let report = evaluate(&skel, &labels)?;
    print!("{}", report.render_table());
    if let Some(path) = out {
        write(path, &report.render_kv())?;
    }
    Ok(())
}

pub fn seeds(cfg: &RunConfig, image: &Path) -> Result<(), CliError> {
    let img = load_image(image)?;
    let list = seed_points(&img, &cfg.seeds)?;
    for s in list.iter() {
        let [x, y, z] = s.position;
        println!("{x} {y} {z} {:.4}", s.score);
    }
    Ok(())
}
