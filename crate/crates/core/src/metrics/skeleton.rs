//! Ground-truth skeletons and their text format:
//!
//! ```text
//! skeleton 7
//! node 0 12 30 4
//! node 1 13 30 4
//! edge 0 1
//! end
//! ```
//!
//! Node ids are unique within a skeleton; edges reference node ids. Blank
//! lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Dims, Position};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkeletonNode {
    pub id: u32,
    pub position: Position,
}

/// A skeleton: nodes plus undirected edges given as indices into `nodes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    pub id: u32,
    pub nodes: Vec<SkeletonNode>,
    pub edges: Vec<(usize, usize)>,
}

impl Skeleton {
    /// Builds a chain skeleton through `positions` (node ids 0..n).
    pub fn chain(id: u32, positions: &[Position]) -> Self {
        Skeleton {
            id,
            nodes: positions
                .iter()
                .enumerate()
                .map(|(i, &position)| SkeletonNode { id: i as u32, position })
                .collect(),
            edges: (1..positions.len()).map(|i| (i - 1, i)).collect(),
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// True when the edge set has no cycles.
    pub fn is_forest(&self) -> bool {
        let mut uf = UnionFind::new(self.nodes.len());
        self.edges.iter().all(|&(a, b)| uf.union(a, b))
    }

    pub fn check_bounds(&self, dims: Dims) -> Result<()> {
        for n in &self.nodes {
            if (0..3).any(|a| n.position[a] >= dims[a]) {
                return Err(Error::OutOfBounds {
                    corner: n.position.map(|v| v as i64),
                    size: [1, 1, 1],
                    dims,
                });
            }
        }
        Ok(())
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

pub fn render_skeletons(skeletons: &[Skeleton]) -> String {
    let mut s = String::new();
    for sk in skeletons {
        let _ = writeln!(s, "skeleton {}", sk.id);
        for n in &sk.nodes {
            let [x, y, z] = n.position;
            let _ = writeln!(s, "node {} {x} {y} {z}", n.id);
        }
        for &(a, b) in &sk.edges {
            let _ = writeln!(s, "edge {} {}", sk.nodes[a].id, sk.nodes[b].id);
        }
        s.push_str("end\n");
    }
    s
}

pub fn save_skeletons(skeletons: &[Skeleton], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_skeletons(skeletons)).map_err(|e| Error::io(path, e))
}

fn parse_fields<const N: usize>(rest: &str, line: usize) -> Result<[u64; N]> {
    let parts: Vec<u64> = rest
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line,
            reason: format!("expected {N} non-negative integers, got `{rest}`"),
        })?;
    parts.try_into().map_err(|_| Error::Parse {
        line,
        reason: format!("expected {N} fields, got `{rest}`"),
    })
}

fn to_u32(v: u64, line: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Parse {
        line,
        reason: format!("{v} does not fit in 32 bits"),
    })
}

pub fn parse_skeletons(text: &str) -> Result<Vec<Skeleton>> {
    struct Open {
        sk: Skeleton,
        raw_edges: Vec<(u32, u32, usize)>,
    }
    let mut out = Vec::new();
    let mut current: Option<Open> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (key, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
        match (key, current.as_mut()) {
            ("skeleton", None) => {
                let [id] = parse_fields::<1>(rest, line)?;
                current = Some(Open {
                    sk: Skeleton {
                        id: to_u32(id, line)?,
                        nodes: Vec::new(),
                        edges: Vec::new(),
                    },
                    raw_edges: Vec::new(),
                });
            }
            ("node", Some(open)) => {
                let [id, x, y, z] = parse_fields::<4>(rest, line)?;
                let id = to_u32(id, line)?;
                if open.sk.nodes.iter().any(|n| n.id == id) {
                    return Err(Error::DuplicateNode {
                        skeleton: open.sk.id,
                        node: id,
                    });
                }
                open.sk.nodes.push(SkeletonNode {
                    id,
                    position: [x as usize, y as usize, z as usize],
                });
            }
            ("edge", Some(open)) => {
                let [a, b] = parse_fields::<2>(rest, line)?;
                open.raw_edges.push((to_u32(a, line)?, to_u32(b, line)?, line));
            }
            ("end", Some(_)) => {
                let Open { mut sk, raw_edges } = current.take().expect("matched Some");
                let index: std::collections::HashMap<u32, usize> =
                    sk.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
                for (a, b, _) in raw_edges {
                    match (index.get(&a), index.get(&b)) {
                        (Some(&ia), Some(&ib)) => sk.edges.push((ia, ib)),
                        _ => return Err(Error::DanglingEdge { skeleton: sk.id, a, b }),
                    }
                }
                if !sk.is_forest() {
                    log::warn!("skeleton {} contains a cycle", sk.id);
                }
                out.push(sk);
            }
            (k, _) => {
                return Err(Error::Parse {
                    line,
                    reason: format!("unexpected `{k}`"),
                })
            }
        }
    }
    if current.is_some() {
        return Err(Error::Parse {
            line: text.lines().count(),
            reason: "missing `end` for the last skeleton".into(),
        });
    }
    Ok(out)
}

pub fn load_skeletons(path: impl AsRef<Path>) -> Result<Vec<Skeleton>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_skeletons(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_round_trip() {
        let sk = vec![Skeleton::chain(3, &[[1, 2, 3], [4, 5, 6]])];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        save_skeletons(&sk, &p).unwrap();
        assert_eq!(load_skeletons(&p).unwrap(), sk);
        assert_eq!(fs::read_to_string(&p).unwrap(), "skeleton 3\nnode 0 1 2 3\nnode 1 4 5 6\nedge 0 1\nend\n");
    }

    #[test]
    fn dangling_edge_names_the_edge() {
        let text = "skeleton 1\nnode 0 0 0 0\nedge 0 5\nend\n";
        let err = parse_skeletons(text).unwrap_err();
        assert!(matches!(err, Error::DanglingEdge { skeleton: 1, a: 0, b: 5 }));
        assert!(err.to_string().contains("(0, 5)"));
    }

    #[test]
    fn duplicate_node_rejected() {
        let text = "skeleton 1\nnode 0 0 0 0\nnode 0 1 1 1\nend\n";
        assert!(matches!(parse_skeletons(text), Err(Error::DuplicateNode { skeleton: 1, node: 0 })));
    }

    #[test]
    fn many_fragments_load() {
        let sks: Vec<Skeleton> = (1..=221u32)
            .map(|i| Skeleton::chain(i, &[[i as usize, 0, 0], [i as usize, 1, 0], [i as usize, 2, 1]]))
            .collect();
        let parsed = parse_skeletons(&render_skeletons(&sks)).unwrap();
        assert_eq!(parsed.len(), 221);
        assert_eq!(parsed, sks);
    }

    #[test]
    fn cycle_is_not_a_forest_but_loads() {
        let text = "skeleton 1\nnode 0 0 0 0\nnode 1 1 0 0\nnode 2 1 1 0\nedge 0 1\nedge 1 2\nedge 2 0\nend\n";
        let sk = parse_skeletons(text).unwrap();
        assert!(!sk[0].is_forest());
        assert_eq!(sk[0].degrees(), vec![2, 2, 2]);
    }

    #[test]
    fn unterminated_skeleton_rejected() {
        assert!(matches!(parse_skeletons("skeleton 1\nnode 0 0 0 0\n"), Err(Error::Parse { .. })));
    }
}
