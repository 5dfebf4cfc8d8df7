//! Procedural ground-truth worlds: tube and blob objects separated by dark
//! shells, a noisy intensity image, and one skeleton per object.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{load_skeletons, save_skeletons, Skeleton};
use crate::volume::{load_image, load_labels, save_image, save_labels, Dims, Grid, ImageVolume, Position, SegmentationVolume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dims: Dims,
    /// Inclusive range of object counts.
    pub objects: [usize; 2],
    /// Probability that an object is a tube rather than a blob.
    pub tube_fraction: f64,
    pub tube_radius: [f64; 2],
    /// Inclusive range of centerline steps per tube.
    pub tube_length: [usize; 2],
    /// Per-step direction jitter; bounds the walk's curvature.
    pub curvature: f64,
    pub blob_radius: [f64; 2],
    /// z step of walks and z radius of blobs are scaled by this.
    pub anisotropy: f64,
    pub interior: f32,
    pub background: f32,
    /// Intensity of the shell around each object.
    pub boundary: f32,
    pub boundary_width: usize,
    /// Half-width of the uniform additive noise.
    pub noise: f32,
    pub placement_attempts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dims: [64, 64, 32],
            objects: [3, 8],
            tube_fraction: 0.7,
            tube_radius: [3.0, 4.5],
            tube_length: [30, 80],
            curvature: 0.25,
            blob_radius: [4.0, 7.0],
            anisotropy: 1.0,
            interior: 0.8,
            background: 0.2,
            boundary: 0.05,
            boundary_width: 1,
            noise: 0.05,
            placement_attempts: 200,
            seed: 0,
        }
    }
}

fn check_range(field: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
        return Err(Error::config(field, format!("{r:?} must be positive and ordered")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::config("dims", "every dimension must be positive"));
        }
        if self.objects[0] > self.objects[1] {
            return Err(Error::config("objects", format!("{:?} is not an ordered range", self.objects)));
        }
        if !(0.0..=1.0).contains(&self.tube_fraction) {
            return Err(Error::config("tube_fraction", "must be in [0, 1]"));
        }
        check_range("tube_radius", self.tube_radius)?;
        check_range("blob_radius", self.blob_radius)?;
        if self.tube_length[0] == 0 || self.tube_length[0] > self.tube_length[1] {
            return Err(Error::config("tube_length", format!("{:?} must be positive and ordered", self.tube_length)));
        }
        if !(self.anisotropy > 0.0 && self.anisotropy.is_finite()) {
            return Err(Error::config("anisotropy", "must be positive"));
        }
        if !(self.curvature >= 0.0 && self.curvature.is_finite()) {
            return Err(Error::config("curvature", "must be non-negative"));
        }
        for (field, v) in [("interior", self.interior), ("background", self.background), ("boundary", self.boundary)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("{v} is not in [0, 1]")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise", "must be non-negative"));
        }
        if self.placement_attempts == 0 {
            return Err(Error::config("placement_attempts", "must be at least 1"));
        }
        let fit = 2.0 * self.tube_radius[1].max(self.blob_radius[1]) + 3.0;
        if self.objects[1] > 0 && self.dims.iter().any(|&d| (d as f64) < fit) {
            return Err(Error::config("dims", format!("too small for radius ranges (need at least {fit} per axis)")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub image: ImageVolume,
    pub labels: SegmentationVolume,
    /// Skeleton `i` describes the object labelled `i + 1`.
    pub skeletons: Vec<Skeleton>,
}

pub const IMAGE_FILE: &str = "image.raw";
pub const LABELS_FILE: &str = "labels.raw";
pub const SKELETONS_FILE: &str = "skeletons.txt";

impl World {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_image(&self.image, dir.join(IMAGE_FILE))?;
        save_labels(&self.labels, dir.join(LABELS_FILE))?;
        save_skeletons(&self.skeletons, dir.join(SKELETONS_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(World {
            image: load_image(dir.join(IMAGE_FILE))?,
            labels: load_labels(dir.join(LABELS_FILE))?,
            skeletons: load_skeletons(dir.join(SKELETONS_FILE))?,
        })
    }
}

struct Shape {
    voxels: Vec<Position>,
    nodes: Vec<Position>,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.map(|c| c / n);
        }
    }
}

/// Voxels within `radius` of any point (z distances divided by `anisotropy`).
fn dilate(points: &[[f64; 3]], radius: f64, anisotropy: f64, dims: Dims) -> Vec<Position> {
    let mut mask = Grid::filled(dims, false);
    let reach = [radius, radius, radius * anisotropy];
    for p in points {
        let lo: [usize; 3] = [0, 1, 2].map(|a| (p[a] - reach[a]).floor().max(0.0) as usize);
        let hi: [usize; 3] = [0, 1, 2].map(|a| ((p[a] + reach[a]).ceil() as usize).min(dims[a] - 1));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let d2 = (x as f64 - p[0]).powi(2)
                        + (y as f64 - p[1]).powi(2)
                        + ((z as f64 - p[2]) / anisotropy).powi(2);
                    if d2 <= radius * radius {
                        mask.set([x, y, z], true);
                    }
                }
            }
        }
    }
    (0..mask.len()).filter(|&i| mask.as_slice()[i]).map(|i| mask.position(i)).collect()
}

fn round(p: [f64; 3]) -> Position {
    p.map(|v| v.round() as usize)
}

fn tube(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Shape {
    let dims = cfg.dims;
    let radius = uniform(rng, cfg.tube_radius);
    let margin: [f64; 3] = [radius + 1.0, radius + 1.0, (radius * cfg.anisotropy + 1.0).min(dims[2] as f64 / 2.0 - 0.5)];
    let lo = margin;
    let hi: [f64; 3] = [0, 1, 2].map(|a| dims[a] as f64 - 1.0 - margin[a]);
    let mut p: [f64; 3] = [0, 1, 2].map(|a| if hi[a] > lo[a] { rng.gen_range(lo[a]..=hi[a]) } else { (dims[a] as f64 - 1.0) / 2.0 });
    let mut dir = unit_vector(rng);
    let steps = rng.gen_range(cfg.tube_length[0]..=cfg.tube_length[1]);
    let mut points = vec![p];
    for _ in 0..steps {
        let jitter = unit_vector(rng);
        let mut d: [f64; 3] = [0, 1, 2].map(|a| dir[a] + cfg.curvature * jitter[a]);
        let n = d.iter().map(|c| c * c).sum::<f64>().sqrt();
        d = d.map(|c| c / n);
        let mut next: [f64; 3] = [d[0] + p[0], d[1] + p[1], d[2] * cfg.anisotropy + p[2]];
        for a in 0..3 {
            if next[a] < lo[a] || next[a] > hi[a] {
                d[a] = -d[a];
                let step = if a == 2 { d[a] * cfg.anisotropy } else { d[a] };
                next[a] = (p[a] + step).clamp(lo[a].min(hi[a]), hi[a].max(lo[a]));
            }
        }
        dir = d;
        p = next;
        points.push(p);
    }
    let mut nodes: Vec<Position> = Vec::new();
    for &q in &points {
        let r = round(q);
        if nodes.last() != Some(&r) {
            nodes.push(r);
        }
    }
    Shape {
        voxels: dilate(&points, radius, cfg.anisotropy, dims),
        nodes,
    }
}

fn blob(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Shape {
    let dims = cfg.dims;
    let radii: [f64; 3] = [0, 1, 2].map(|a| {
        let r = uniform(rng, cfg.blob_radius);
        let r = if a == 2 { r * cfg.anisotropy } else { r };
        r.min((dims[a] as f64 - 3.0) / 2.0).max(1.0)
    });
    let c: [f64; 3] = [0, 1, 2].map(|a| {
        let lo = radii[a] + 1.0;
        let hi = dims[a] as f64 - 2.0 - radii[a];
        if hi > lo {
            rng.gen_range(lo..=hi).round()
        } else {
            ((dims[a] - 1) / 2) as f64
        }
    });
    let mut voxels = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let q = [x as f64, y as f64, z as f64];
                let d: f64 = (0..3).map(|a| ((q[a] - c[a]) / radii[a]).powi(2)).sum();
                if d <= 1.0 {
                    voxels.push([x, y, z]);
                }
            }
        }
    }
    let axis = (0..3).max_by(|&a, &b| radii[a].total_cmp(&radii[b])).unwrap_or(0);
    let half = (radii[axis] - 1.0).floor().max(1.0);
    let mut a = c;
    let mut b = c;
    a[axis] -= half;
    b[axis] += half;
    Shape {
        voxels,
        nodes: vec![round(a), round(b)],
    }
}

/// True if `p` is labelled or has a labelled 26-neighbour.
fn touches_label(labels: &SegmentationVolume, p: Position) -> bool {
    let dims = labels.dims();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let q = [p[0] as i64 + dx, p[1] as i64 + dy, p[2] as i64 + dz];
                if (0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as i64)
                    && labels.get(q.map(|v| v as usize)) != 0
                {
                    return true;
                }
            }
        }
    }
    false
}

/// Generates a world from `config`. Objects never touch (not even
/// diagonally), and every skeleton node lies inside its own object.
pub fn generate_world(config: &SynthConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims = config.dims;
    let count = rng.gen_range(config.objects[0]..=config.objects[1]);
    let mut labels = Grid::filled(dims, 0u32);
    let mut skeletons = Vec::with_capacity(count);
    for id in 1..=count as u32 {
        let mut placed = false;
        for _ in 0..config.placement_attempts {
            let shape = if rng.gen_bool(config.tube_fraction) {
                tube(config, &mut rng)
            } else {
                blob(config, &mut rng)
            };
            if shape.voxels.iter().any(|&p| touches_label(&labels, p)) {
                continue;
            }
            for &p in &shape.voxels {
                labels.set(p, id);
            }
            skeletons.push(Skeleton::chain(id, &shape.nodes));
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Placement {
                attempts: config.placement_attempts,
            });
        }
    }
    let image = render_image(&labels, config, &mut rng)?;
    Ok(World { image, labels, skeletons })
}

fn render_image(labels: &SegmentationVolume, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<ImageVolume> {
    let dims = labels.dims();
    let w = cfg.boundary_width as i64;
    let near_object = |p: Position| -> bool {
        for dz in -w..=w {
            for dy in -w..=w {
                for dx in -w..=w {
                    let q = [p[0] as i64 + dx, p[1] as i64 + dy, p[2] as i64 + dz];
                    if (0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as i64) && labels.get(q.map(|v| v as usize)) != 0 {
                        return true;
                    }
                }
            }
        }
        false
    };
    let base = Grid::from_fn(dims, |p| {
        if labels.get(p) != 0 {
            cfg.interior
        } else if w > 0 && near_object(p) {
            cfg.boundary
        } else {
            cfg.background
        }
    });
    let data = base
        .into_vec()
        .into_iter()
        .map(|v| {
            let n = if cfg.noise > 0.0 { rng.gen_range(-cfg.noise..=cfg.noise) } else { 0.0 };
            (v + n).clamp(0.0, 1.0)
        })
        .collect();
    ImageVolume::from_vec(dims, data)
}

/// Stamps a ball of `radius` around every skeleton node, labelled with the
/// skeleton id. Balls of different skeletons may not overlap.
pub fn rasterize_gt_labels(skeletons: &[Skeleton], dims: Dims, radius: f64) -> Result<SegmentationVolume> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidValue(format!("radius {radius} must be non-negative")));
    }
    let mut labels = Grid::filled(dims, 0u32);
    let r = radius.floor() as i64;
    for sk in skeletons {
        if sk.id == 0 {
            return Err(Error::InvalidValue("skeleton id 0 is reserved for background".into()));
        }
        sk.check_bounds(dims)?;
        for n in &sk.nodes {
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if ((dx * dx + dy * dy + dz * dz) as f64) > radius * radius {
                            continue;
                        }
                        let q = [n.position[0] as i64 + dx, n.position[1] as i64 + dy, n.position[2] as i64 + dz];
                        if !(0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as i64) {
                            continue;
                        }
                        let q = q.map(|v| v as usize);
                        match labels.get(q) {
                            0 => labels.set(q, sk.id),
                            l if l == sk.id => {}
                            other => {
                                return Err(Error::Overlap {
                                    a: other,
                                    b: sk.id,
                                    voxel: q,
                                })
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(labels)
}
