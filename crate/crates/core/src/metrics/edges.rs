use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use super::skeleton::{Skeleton, UnionFind};
use crate::error::{Error, Result};
use crate::volume::SegmentationVolume;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeCategory {
    Correct,
    Split,
    Merged,
    Omitted,
}

impl fmt::Display for EdgeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeCategory::Correct => "correct",
            EdgeCategory::Split => "split",
            EdgeCategory::Merged => "merged",
            EdgeCategory::Omitted => "omitted",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifiedEdge {
    /// Index into the skeleton list.
    pub skeleton: usize,
    /// Index into that skeleton's edge list.
    pub edge: usize,
    pub category: EdgeCategory,
    /// Omitted edge that the adjustment rules count as correct.
    pub adjusted: bool,
}

impl ClassifiedEdge {
    /// Category after omission adjustment.
    pub fn effective(&self) -> EdgeCategory {
        if self.adjusted {
            EdgeCategory::Correct
        } else {
            self.category
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeClassification {
    pub edges: Vec<ClassifiedEdge>,
}

impl EdgeClassification {
    pub fn count(&self, category: EdgeCategory) -> usize {
        self.edges.iter().filter(|e| e.category == category).count()
    }

    pub fn adjusted_count(&self) -> usize {
        self.edges.iter().filter(|e| e.adjusted).count()
    }
}

fn node_labels(skeletons: &[Skeleton], r: &SegmentationVolume) -> Result<Vec<Vec<u32>>> {
    skeletons
        .iter()
        .map(|sk| {
            sk.check_bounds(r.dims())?;
            Ok(sk.nodes.iter().map(|n| r.get(n.position)).collect())
        })
        .collect()
}

/// Labels every skeleton edge against the segmentation `r`, checking
/// omitted, then split, then merged.
pub fn classify_edges(skeletons: &[Skeleton], r: &SegmentationVolume) -> Result<EdgeClassification> {
    let labels = node_labels(skeletons, r)?;
    let mut touched_by: HashMap<u32, HashSet<usize>> = HashMap::new();
    for (s, ls) in labels.iter().enumerate() {
        for &l in ls.iter().filter(|&&l| l != 0) {
            touched_by.entry(l).or_default().insert(s);
        }
    }
    let mut edges = Vec::new();
    for (s, sk) in skeletons.iter().enumerate() {
        for (e, &(a, b)) in sk.edges.iter().enumerate() {
            let (la, lb) = (labels[s][a], labels[s][b]);
            let category = if la == 0 || lb == 0 {
                EdgeCategory::Omitted
            } else if la != lb {
                EdgeCategory::Split
            } else if touched_by[&la].len() > 1 {
                EdgeCategory::Merged
            } else {
                EdgeCategory::Correct
            };
            edges.push(ClassifiedEdge {
                skeleton: s,
                edge: e,
                category,
                adjusted: false,
            });
        }
    }
    Ok(EdgeClassification { edges })
}

/// Marks omitted edges that count as correct: those with a degree-one
/// endpoint, and those in a connected run of omitted edges whose labelled
/// nodes (at least two) all carry the same ID.
pub fn adjust_omitted(
    classification: &EdgeClassification,
    skeletons: &[Skeleton],
    r: &SegmentationVolume,
) -> Result<EdgeClassification> {
    let labels = node_labels(skeletons, r)?;
    let mut out = classification.clone();
    let mut by_skeleton: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, ce) in out.edges.iter().enumerate() {
        if ce.category == EdgeCategory::Omitted {
            by_skeleton.entry(ce.skeleton).or_default().push(i);
        }
    }
    for (s, omitted) in by_skeleton {
        let sk = &skeletons[s];
        let degree = sk.degrees();
        let mut uf = UnionFind::new(sk.nodes.len());
        for &i in &omitted {
            let (a, b) = sk.edges[out.edges[i].edge];
            uf.union(a, b);
        }
        // Labelled nodes per component root.
        let mut boundary: HashMap<usize, HashSet<usize>> = HashMap::new();
        for &i in &omitted {
            let (a, b) = sk.edges[out.edges[i].edge];
            let root = uf.find(a);
            let entry = boundary.entry(root).or_default();
            for n in [a, b] {
                if labels[s][n] != 0 {
                    entry.insert(n);
                }
            }
        }
        for &i in &omitted {
            let (a, b) = sk.edges[out.edges[i].edge];
            let leaf = degree[a] == 1 || degree[b] == 1;
            let nodes = &boundary[&uf.find(a)];
            let ids: HashSet<u32> = nodes.iter().map(|&n| labels[s][n]).collect();
            let bridged = nodes.len() >= 2 && ids.len() == 1;
            out.edges[i].adjusted = leaf || bridged;
        }
    }
    Ok(out)
}

/// Edge-level summary in the five reported columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvaluationReport {
    pub total_edges: usize,
    /// Correct edges including adjusted omissions.
    pub correct: usize,
    pub merged: usize,
    pub split: usize,
    pub omitted_adjusted: usize,
    pub omitted_raw: usize,
}

fn pct(n: usize, total: usize) -> f64 {
    100.0 * n as f64 / total as f64
}

impl EvaluationReport {
    /// Pools edge counts over several evaluations; `None` for an empty input.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a EvaluationReport>) -> Option<EvaluationReport> {
        reports.into_iter().fold(None, |acc: Option<EvaluationReport>, r| {
            Some(match acc {
                None => *r,
                Some(a) => EvaluationReport {
                    total_edges: a.total_edges + r.total_edges,
                    correct: a.correct + r.correct,
                    merged: a.merged + r.merged,
                    split: a.split + r.split,
                    omitted_adjusted: a.omitted_adjusted + r.omitted_adjusted,
                    omitted_raw: a.omitted_raw + r.omitted_raw,
                },
            })
        })
    }

    pub fn edge_accuracy(&self) -> f64 {
        pct(self.correct, self.total_edges)
    }

    pub fn merged_pct(&self) -> f64 {
        pct(self.merged, self.total_edges)
    }

    pub fn split_pct(&self) -> f64 {
        pct(self.split, self.total_edges)
    }

    pub fn omitted_adjusted_pct(&self) -> f64 {
        pct(self.omitted_adjusted, self.total_edges)
    }

    pub fn omitted_raw_pct(&self) -> f64 {
        pct(self.omitted_raw, self.total_edges)
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>14} {:>14} {:>14} {:>18} {:>14}",
            "Edge accuracy", "Merged edges", "Split edges", "Omitted (adj.)", "Omitted (raw)"
        );
        let _ = writeln!(
            s,
            "{:>13.1}% {:>13.1}% {:>13.1}% {:>17.1}% {:>13.1}%",
            self.edge_accuracy(),
            self.merged_pct(),
            self.split_pct(),
            self.omitted_adjusted_pct(),
            self.omitted_raw_pct()
        );
        let _ = writeln!(s, "({} edges)", self.total_edges);
        s
    }

    pub fn render_kv(&self) -> String {
        format!(
            "total_edges={}\ncorrect={}\nmerged={}\nsplit={}\nomitted_adjusted={}\nomitted_raw={}\n\
             edge_accuracy={:.4}\nmerged_pct={:.4}\nsplit_pct={:.4}\nomitted_adjusted_pct={:.4}\nomitted_raw_pct={:.4}\n",
            self.total_edges,
            self.correct,
            self.merged,
            self.split,
            self.omitted_adjusted,
            self.omitted_raw,
            self.edge_accuracy(),
            self.merged_pct(),
            self.split_pct(),
            self.omitted_adjusted_pct(),
            self.omitted_raw_pct()
        )
    }
}

pub fn edge_accuracy(classification: &EdgeClassification) -> Result<EvaluationReport> {
    let total_edges = classification.edges.len();
    if total_edges == 0 {
        return Err(Error::ZeroEdges);
    }
    let omitted_raw = classification.count(EdgeCategory::Omitted);
    let adjusted = classification.adjusted_count();
    Ok(EvaluationReport {
        total_edges,
        correct: classification.count(EdgeCategory::Correct) + adjusted,
        merged: classification.count(EdgeCategory::Merged),
        split: classification.count(EdgeCategory::Split),
        omitted_adjusted: omitted_raw - adjusted,
        omitted_raw,
    })
}

/// Classification, omission adjustment and summary in one call.
pub fn evaluate(skeletons: &[Skeleton], r: &SegmentationVolume) -> Result<EvaluationReport> {
    let raw = classify_edges(skeletons, r)?;
    edge_accuracy(&adjust_omitted(&raw, skeletons, r)?)
}
