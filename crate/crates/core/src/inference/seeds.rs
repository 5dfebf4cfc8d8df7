//! Seed selection: points far from suspected object boundaries.
//!
//! 3D Sobel gradient magnitude → boundary mask (magnitude at or above a
//! fraction of the maximum) → exact Euclidean distance transform to the
//! nearest boundary voxel → 26-neighbourhood local maxima → greedy
//! non-maximum suppression, strongest first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Grid, ImageVolume, Position};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedConfig {
    /// Boundary threshold as a fraction of the maximum gradient magnitude.
    pub sobel_threshold: f64,
    /// Seeds closer than this (in physical units) to a stronger seed are
    /// suppressed.
    pub nms_radius: f64,
    /// Maxima whose boundary distance is below this are discarded; this drops
    /// the thin ridges that lie on dark membranes themselves.
    pub min_distance: f64,
    /// Physical voxel size along (x, y, z).
    pub spacing: [f64; 3],
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            sobel_threshold: 0.1,
            nms_radius: 2.0,
            min_distance: 1.5,
            spacing: [1.0, 1.0, 1.0],
        }
    }
}

impl SeedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sobel_threshold > 0.0 && self.sobel_threshold <= 1.0) {
            return Err(Error::config("seeds.sobel_threshold", "must be in (0, 1]"));
        }
        if !(self.nms_radius >= 0.0) {
            return Err(Error::config("seeds.nms_radius", "must be non-negative"));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("seeds.spacing", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub position: Position,
    pub score: f64,
}

/// Seeds ordered by non-increasing score.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeedList {
    pub seeds: Vec<Seed>,
}

impl SeedList {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Seed> {
        self.seeds.iter()
    }
}

/// Applies a 3-tap kernel along `axis` with replicated borders.
fn filter_axis(input: &Grid<f64>, axis: usize, taps: [f64; 3]) -> Grid<f64> {
    let dims = input.dims();
    let n = dims[axis];
    Grid::from_fn(dims, |p| {
        let mut acc = 0.0;
        for (k, &w) in taps.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut q = p;
            q[axis] = (p[axis] + k).saturating_sub(1).min(n - 1);
            acc += w * input.get(q);
        }
        acc
    })
}

/// 3D Sobel gradient magnitude: central difference along one axis,
/// `[1, 2, 1]` smoothing along the other two, replicated borders.
pub fn sobel_magnitude(image: &ImageVolume) -> Grid<f64> {
    let src = image.grid().map(f64::from);
    let deriv = [-1.0, 0.0, 1.0];
    let smooth = [1.0, 2.0, 1.0];
    let mut mag2 = Grid::filled(src.dims(), 0.0);
    for axis in 0..3 {
        let mut g = filter_axis(&src, axis, deriv);
        for other in (0..3).filter(|&a| a != axis) {
            g = filter_axis(&g, other, smooth);
        }
        for (m, v) in mag2.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *m += v * v;
        }
    }
    mag2.map(f64::sqrt)
}

/// 1D lower envelope of parabolas: `out[p] = min_q (x_p - x_q)^2 + f[q]` with
/// `x_i = i * spacing`. Infinite entries of `f` are skipped.
fn squared_distance_1d(f: &[f64], spacing: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = Vec::with_capacity(n); // parabola apices
    let mut z: Vec<f64> = Vec::with_capacity(n + 1); // envelope boundaries
    for q in (0..n).filter(|&q| f[q].is_finite()) {
        let xq = q as f64 * spacing;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&r) => {
                    let xr = r as f64 * spacing;
                    let s = ((f[q] + xq * xq) - (f[r] + xr * xr)) / (2.0 * (xq - xr));
                    if s <= *z.last().expect("z tracks v") {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        let xp = p as f64 * spacing;
        while k + 1 < v.len() && z[k + 1] < xp {
            k += 1;
        }
        let xv = v[k] as f64 * spacing;
        *o = (xp - xv) * (xp - xv) + f[v[k]];
    }
}

/// Exact Euclidean distance from every voxel to the nearest `true` voxel of
/// `features`, with anisotropic `spacing`. Infinite when there are no
/// features.
pub fn euclidean_distance_transform(features: &Grid<bool>, spacing: [f64; 3]) -> Grid<f64> {
    let dims = features.dims();
    let mut d = features.map(|f| if f { 0.0 } else { f64::INFINITY });
    for axis in 0..3 {
        let n = dims[axis];
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let [a1, a2] = match axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        for j in 0..dims[a2] {
            for i in 0..dims[a1] {
                let mut p = [0; 3];
                p[a1] = i;
                p[a2] = j;
                for (k, l) in line.iter_mut().enumerate() {
                    p[axis] = k;
                    *l = d.get(p);
                }
                squared_distance_1d(&line, spacing[axis], &mut out);
                for (k, &o) in out.iter().enumerate() {
                    p[axis] = k;
                    d.set(p, o);
                }
            }
        }
    }
    d.map(f64::sqrt)
}

fn neighbours(dims: Dims, p: Position) -> impl Iterator<Item = Position> {
    (-1i64..=1)
        .flat_map(|dz| (-1i64..=1).flat_map(move |dy| (-1i64..=1).map(move |dx| [dx, dy, dz])))
        .filter(|d| *d != [0, 0, 0])
        .filter_map(move |d| {
            let q = [0, 1, 2].map(|a| p[a] as i64 + d[a]);
            (0..3)
                .all(|a| q[a] >= 0 && (q[a] as usize) < dims[a])
                .then(|| q.map(|v| v as usize))
        })
}

/// Seed points for `image`. A constant image (no gradient at all) yields a
/// single seed at the volume centre with score 0.
pub fn seed_points(image: &ImageVolume, config: &SeedConfig) -> Result<SeedList> {
    config.validate()?;
    let dims = image.dims();
    if image.is_empty() {
        return Err(Error::Precondition("seed_points needs a non-empty image".into()));
    }
    let centre = SeedList {
        seeds: vec![Seed {
            position: dims.map(|d| d / 2),
            score: 0.0,
        }],
    };
    let mag = sobel_magnitude(image);
    let max = mag.as_slice().iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(centre);
    }
    let threshold = config.sobel_threshold * max;
    let boundary = mag.map(|m| m >= threshold);
    let dist = euclidean_distance_transform(&boundary, config.spacing);

    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in 0..dist.len() {
        let v = dist.as_slice()[i];
        if v <= 0.0 || v < config.min_distance {
            continue;
        }
        let p = dist.position(i);
        if neighbours(dims, p).all(|q| dist.get(q) <= v) {
            candidates.push((i, v));
        }
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut suppressed = Grid::filled(dims, false);
    let r = config.nms_radius;
    let reach = config.spacing.map(|s| (r / s).floor() as i64);
    let mut seeds = Vec::new();
    for (i, score) in candidates {
        let p = dist.position(i);
        if suppressed.get(p) {
            continue;
        }
        seeds.push(Seed { position: p, score });
        for dz in -reach[2]..=reach[2] {
            for dy in -reach[1]..=reach[1] {
                for dx in -reach[0]..=reach[0] {
                    let q = [p[0] as i64 + dx, p[1] as i64 + dy, p[2] as i64 + dz];
                    if !suppressed.in_bounds(q) {
                        continue;
                    }
                    let d2 = (dx as f64 * config.spacing[0]).powi(2)
                        + (dy as f64 * config.spacing[1]).powi(2)
                        + (dz as f64 * config.spacing[2]).powi(2);
                    if d2 <= r * r {
                        suppressed.set(q.map(|v| v as usize), true);
                    }
                }
            }
        }
    }
    Ok(SeedList { seeds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force distance to the nearest feature.
    fn brute_edt(features: &Grid<bool>, spacing: [f64; 3]) -> Grid<f64> {
        let pts: Vec<Position> = (0..features.len())
            .filter(|&i| features.as_slice()[i])
            .map(|i| features.position(i))
            .collect();
        Grid::from_fn(features.dims(), |p| {
            pts.iter()
                .map(|q| {
                    (0..3)
                        .map(|a| ((p[a] as f64 - q[a] as f64) * spacing[a]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
    }

    proptest! {
        #[test]
        fn edt_matches_brute_force(
            dims in prop::array::uniform3(1usize..7),
            bits in prop::collection::vec(prop::bool::weighted(0.15), 216),
            spacing in prop::array::uniform3(prop::sample::select(vec![1.0, 2.0, 0.5])),
        ) {
            let f = Grid::from_fn(dims, |p| bits[p[0] + 6 * (p[1] + 6 * p[2])]);
            let fast = euclidean_distance_transform(&f, spacing);
            let slow = brute_edt(&f, spacing);
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                prop_assert!((a == b) || (a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn constant_image_falls_back_to_centre() {
        let img = ImageVolume::filled([9, 8, 5], 0.4).unwrap();
        let s = seed_points(&img, &SeedConfig::default()).unwrap();
        assert_eq!(s.seeds, vec![Seed { position: [4, 4, 2], score: 0.0 }]);
    }

    #[test]
    fn two_compartments_one_seed_each() {
        // Bright x in 0..5 and 6..11, dark plane at x = 5.
        let img = ImageVolume::new(Grid::from_fn([11, 1, 1], |[x, _, _]| if x == 5 { 0.1 } else { 0.9 })).unwrap();
        let s = seed_points(&img, &SeedConfig::default()).unwrap();
        // Boundary voxels are x = 4 and x = 6 (the plane itself has zero
        // central difference); the far ends sit 4 voxels away.
        assert_eq!(
            s.seeds,
            vec![Seed { position: [0, 0, 0], score: 4.0 }, Seed { position: [10, 0, 0], score: 4.0 }]
        );
    }

    #[test]
    fn scores_non_increasing() {
        let img = ImageVolume::new(Grid::from_fn([20, 16, 8], |[x, y, z]| {
            let d = ((x as f64 - 6.0).powi(2) + (y as f64 - 8.0).powi(2) + (z as f64 - 4.0).powi(2)).sqrt();
            let e = ((x as f64 - 15.0).powi(2) + (y as f64 - 6.0).powi(2)).sqrt();
            if d < 4.0 || e < 3.0 { 0.8 } else { 0.2 }
        }))
        .unwrap();
        let s = seed_points(&img, &SeedConfig::default()).unwrap();
        assert!(!s.is_empty());
        assert!(s.seeds.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(s.iter().all(|seed| (0..3).all(|a| seed.position[a] < img.dims()[a])));
    }

    #[test]
    fn sobel_of_ramp() {
        let img = ImageVolume::new(Grid::from_fn([5, 5, 5], |[x, _, _]| x as f32 * 0.1)).unwrap();
        let m = sobel_magnitude(&img);
        // Interior: (0.3 - 0.1) * 16 = 3.2.
        assert!((m.get([2, 2, 2]) - 3.2).abs() < 1e-6);
    }
}
