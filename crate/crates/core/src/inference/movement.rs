use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Grid, Position};

/// FoV step vector and move threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovementPolicy {
    pub delta: Dims,
    pub t_move: f32,
}

impl Default for MovementPolicy {
    fn default() -> Self {
        MovementPolicy {
            delta: [8, 8, 4],
            t_move: 0.9,
        }
    }
}

impl MovementPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.delta.contains(&0) {
            return Err(Error::config("delta", "every step component must be at least 1"));
        }
        if !(self.t_move > 0.5 && self.t_move < 1.0) {
            return Err(Error::config("t_move", format!("{} is not in (0.5, 1)", self.t_move)));
        }
        Ok(())
    }
}

/// Visited-set cell of a position: componentwise floor division by delta.
pub fn reduced_cell(pos: Position, delta: Dims) -> [usize; 3] {
    [pos[0] / delta[0], pos[1] / delta[1], pos[2] / delta[2]]
}

/// Split bias: once a voxel has been written (`t > 1`) and sits below 0.5,
/// a new prediction may not raise it.
#[inline]
pub fn apply_split_bias(v_prev: f32, v_pred: f32, t: u32) -> f32 {
    if v_pred > v_prev && v_prev < 0.5 && t > 1 {
        v_prev
    } else {
        v_pred
    }
}

/// A candidate FoV position found on one of the six faces of the step box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub position: Position,
    pub value: f32,
}

/// Scans the planes `pos ± delta` along each axis, restricted to the box
/// `pos ± delta` (clipped to the canvas), for their maximum. Within a plane,
/// equal maxima resolve to the voxel nearest the on-axis point, then to scan
/// order. Maxima reaching `t_move` are returned in descending order of value;
/// ties keep plane order (-x, +x, -y, +y, -z, +z).
pub fn find_new_positions(canvas: &Grid<f32>, pos: Position, policy: &MovementPolicy) -> Vec<Candidate> {
    let dims = canvas.dims();
    let d = policy.delta;
    let lo: [usize; 3] = [0, 1, 2].map(|a| pos[a].saturating_sub(d[a]));
    let hi: [usize; 3] = [0, 1, 2].map(|a| (pos[a] + d[a]).min(dims[a] - 1));
    let mut found = Vec::with_capacity(6);
    for axis in 0..3 {
        let planes = [pos[axis].checked_sub(d[axis]), Some(pos[axis] + d[axis]).filter(|&p| p < dims[axis])];
        for plane in planes.into_iter().flatten() {
            let mut range_lo = lo;
            let mut range_hi = hi;
            range_lo[axis] = plane;
            range_hi[axis] = plane;
            let mut axial = pos;
            axial[axis] = plane;
            let mut best: Option<(Candidate, usize)> = None;
            for z in range_lo[2]..=range_hi[2] {
                for y in range_lo[1]..=range_hi[1] {
                    for x in range_lo[0]..=range_hi[0] {
                        let q = [x, y, z];
                        let v = canvas.get(q);
                        let better = match best {
                            None => true,
                            Some((b, _)) if v != b.value => v > b.value,
                            Some((_, d)) => dist2(q, axial) < d,
                        };
                        if better {
                            best = Some((Candidate { position: q, value: v }, dist2(q, axial)));
                        }
                    }
                }
            }
            if let Some((b, _)) = best.filter(|(b, _)| b.value >= policy.t_move) {
                found.push(b);
            }
        }
    }
    found.sort_by(|a, b| b.value.total_cmp(&a.value));
    found
}

fn dist2(a: Position, b: Position) -> usize {
    (0..3).map(|i| a[i].abs_diff(b[i]).pow(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_bias_cases() {
        assert_eq!(apply_split_bias(0.3, 0.7, 2), 0.3);
        assert_eq!(apply_split_bias(0.6, 0.9, 2), 0.9);
        assert_eq!(apply_split_bias(0.05, 0.95, 1), 0.95);
        assert_eq!(apply_split_bias(0.3, 0.1, 5), 0.1);
    }

    #[test]
    fn reduced_cell_cases() {
        assert_eq!(reduced_cell([0, 0, 0], [8, 8, 4]), [0, 0, 0]);
        assert_eq!(reduced_cell([17, 9, 5], [8, 8, 4]), [2, 1, 1]);
        assert_eq!(reduced_cell([8, 8, 4], [8, 8, 4]), [1, 1, 1]);
    }

    #[test]
    fn policy_validation() {
        assert!(MovementPolicy::default().validate().is_ok());
        assert!(MovementPolicy { delta: [0, 1, 1], t_move: 0.9 }.validate().is_err());
        assert!(MovementPolicy { delta: [1, 1, 1], t_move: 0.5 }.validate().is_err());
    }

    fn canvas() -> Grid<f32> {
        Grid::filled([40, 40, 20], 0.05)
    }

    #[test]
    fn uniform_canvas_has_no_moves() {
        assert!(find_new_positions(&canvas(), [20, 20, 10], &MovementPolicy::default()).is_empty());
    }

    /// Exhaustive oracle: every voxel of the six clipped planes.
    fn brute_force(c: &Grid<f32>, pos: Position, p: &MovementPolicy) -> Vec<(Position, f32)> {
        let mut out = Vec::new();
        for axis in 0..3 {
            for sign in [-1i64, 1] {
                let plane = pos[axis] as i64 + sign * p.delta[axis] as i64;
                let mut best: Option<(Position, f32)> = None;
                for i in 0..c.len() {
                    let q = c.position(i);
                    let inside = (0..3).all(|a| (q[a] as i64 - pos[a] as i64).abs() <= p.delta[a] as i64);
                    let mut axial = pos.map(|v| v as i64);
                    axial[axis] = plane;
                    let d = |r: Position| -> i64 { (0..3).map(|a| (r[a] as i64 - axial[a]).pow(2)).sum() };
                    let wins = |b: (Position, f32)| {
                        c.get(q) > b.1 || (c.get(q) == b.1 && (d(q), i) < (d(b.0), c.index(b.0)))
                    };
                    if inside && q[axis] as i64 == plane && best.is_none_or(wins) {
                        best = Some((q, c.get(q)));
                    }
                }
                if let Some(b) = best.filter(|b| b.1 >= p.t_move) {
                    out.push(b);
                }
            }
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    #[test]
    fn single_bright_voxel_on_plus_x_plane() {
        let mut c = canvas();
        c.set([28, 23, 12], 0.95);
        let found = find_new_positions(&c, [20, 20, 10], &MovementPolicy::default());
        assert_eq!(found, vec![Candidate { position: [28, 23, 12], value: 0.95 }]);
        assert_eq!(brute_force(&c, [20, 20, 10], &MovementPolicy::default()), vec![([28, 23, 12], 0.95)]);
    }

    #[test]
    fn voxel_outside_box_ignored() {
        let mut c = canvas();
        c.set([28, 29, 10], 0.95); // y offset 9 > delta 8
        assert!(find_new_positions(&c, [20, 20, 10], &MovementPolicy::default()).is_empty());
    }

    #[test]
    fn sorted_by_activation() {
        let mut c = canvas();
        c.set([20, 28, 10], 0.99);
        c.set([18, 20, 6], 0.92);
        let found = find_new_positions(&c, [20, 20, 10], &MovementPolicy::default());
        assert_eq!(
            found.iter().map(|f| f.position).collect::<Vec<_>>(),
            vec![[20, 28, 10], [18, 20, 6]]
        );
    }

    proptest! {
        #[test]
        fn matches_exhaustive_scan(
            bright in prop::collection::vec((0usize..16, 0usize..16, 0usize..8, 0.85f32..1.0), 0..12),
            pos in (0usize..16, 0usize..16, 0usize..8),
        ) {
            let mut c = Grid::filled([16, 16, 8], 0.05);
            for (x, y, z, v) in bright {
                c.set([x, y, z], v);
            }
            let p = MovementPolicy { delta: [4, 4, 2], t_move: 0.9 };
            let pos = [pos.0, pos.1, pos.2];
            let fast: Vec<(Position, f32)> = find_new_positions(&c, pos, &p).iter().map(|f| (f.position, f.value)).collect();
            prop_assert_eq!(fast, brute_force(&c, pos, &p));
        }

        #[test]
        fn split_bias_monotone(v_prev in 0.0f32..0.5, v_pred in 0.0f32..=1.0, t in 2u32..100) {
            prop_assert!(apply_split_bias(v_prev, v_pred, t) <= v_prev);
        }
    }
}
