//! Timestep mask sharing.
//!
//! For a fixed (layer, head), timesteps whose skipped-block sets are
//! mutually similar (pairwise IoU at or above a threshold) are clustered
//! greedily into cliques; each cluster stores one shared mask, the OR of
//! its members' kept blocks, trading a little sparsity for footprint.

use crate::calibration::{BlockMask, DictEntry, MaskDictionary};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// IoU of the skipped-block sets of two masks over the same layout.
/// Both-empty skipped sets count as identical (IoU 1).
pub fn skipped_iou(a: &BlockMask, b: &BlockMask) -> Result<f64> {
    if a.layout != b.layout {
        return Err(Error::invalid("skipped-set IoU needs a shared layout"));
    }
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&ka, &kb) in a.bits().iter().zip(b.bits()) {
        let (sa, sb) = (!ka, !kb);
        if sa && sb {
            intersection += 1;
        }
        if sa || sb {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(intersection as f64 / union as f64)
    }
}

/// One clique of timesteps sharing a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepCluster {
    /// Member timesteps, ascending.
    pub members: Vec<usize>,
    /// OR of the members' kept blocks.
    pub shared: BlockMask,
}

/// Elementwise OR of the members' kept blocks; equivalently the shared
/// skipped set is the intersection of member skipped sets.
pub fn shared_mask(members: &[&BlockMask]) -> Result<BlockMask> {
    let first = members
        .first()
        .ok_or_else(|| Error::invalid("cannot share an empty mask list"))?;
    let mut bits = first.bits().to_vec();
    for m in &members[1..] {
        if m.layout != first.layout {
            return Err(Error::invalid("shared masks must have one layout"));
        }
        for (acc, &b) in bits.iter_mut().zip(m.bits()) {
            *acc |= b;
        }
    }
    BlockMask::from_bits(first.layout, bits)
}

/// Greedy clique clustering over `(timestep, mask)` pairs, ascending by
/// timestep. A timestep joins the earliest-created cluster whose every
/// member has skipped-set IoU >= `tau` with it; otherwise it opens a new
/// cluster.
pub fn cluster_timesteps(masks: &[(usize, &BlockMask)], tau: f64) -> Result<Vec<TimestepCluster>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("IoU threshold must be in (0, 1]"));
    }
    let mut ordered: Vec<&(usize, &BlockMask)> = masks.iter().collect();
    ordered.sort_by_key(|(t, _)| *t);
    let mut clusters: Vec<Vec<(usize, &BlockMask)>> = Vec::new();
    'next: for &&(t, mask) in &ordered {
        for cluster in clusters.iter_mut() {
            let mut admissible = true;
            for &(_, member) in cluster.iter() {
                if skipped_iou(mask, member)? < tau {
                    admissible = false;
                    break;
                }
            }
            if admissible {
                cluster.push((t, mask));
                continue 'next;
            }
        }
        clusters.push(vec![(t, mask)]);
    }
    clusters
        .into_iter()
        .map(|members| {
            let mask_refs: Vec<&BlockMask> = members.iter().map(|(_, m)| *m).collect();
            Ok(TimestepCluster {
                members: members.iter().map(|(t, _)| *t).collect(),
                shared: shared_mask(&mask_refs)?,
            })
        })
        .collect()
}

/// Cluster membership for one (layer, head), as persisted in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub layer: usize,
    pub head: usize,
    /// Member timesteps per cluster, in creation order.
    pub clusters: Vec<Vec<usize>>,
}

/// Result of sharing masks across a dictionary.
#[derive(Debug, Clone)]
pub struct SharingOutcome {
    /// The dictionary with member masks replaced by shared masks.
    pub dictionary: MaskDictionary,
    pub assignments: Vec<ClusterAssignment>,
    /// T x T skipped-set IoU averaged over (layer, head) columns where
    /// both timesteps carry masks; diagonal 1.
    pub iou_matrix: Vec<Vec<f64>>,
}

/// Clusters every (layer, head) column of the dictionary at threshold
/// `tau`. Timesteps holding repetitive markers keep them and do not
/// participate in clustering.
pub fn share_dictionary(dict: &MaskDictionary, tau: f64) -> Result<SharingOutcome> {
    let grid = dict.grid;
    let mut shared = dict.clone();
    let mut assignments = Vec::new();
    for layer in 0..grid.layers {
        for head in 0..grid.heads {
            let mut column: Vec<(usize, &BlockMask)> = Vec::new();
            for t in 0..grid.timesteps {
                let key = crate::calibration::CellKey {
                    timestep: t,
                    layer,
                    head,
                };
                if let DictEntry::Mask(m) = dict.get(key)? {
                    column.push((t, m));
                }
            }
            if column.is_empty() {
                assignments.push(ClusterAssignment {
                    layer,
                    head,
                    clusters: Vec::new(),
                });
                continue;
            }
            let clusters = cluster_timesteps(&column, tau)?;
            for cluster in &clusters {
                for &t in &cluster.members {
                    shared.replace(
                        crate::calibration::CellKey {
                            timestep: t,
                            layer,
                            head,
                        },
                        DictEntry::Mask(cluster.shared.clone()),
                    );
                }
            }
            assignments.push(ClusterAssignment {
                layer,
                head,
                clusters: clusters.iter().map(|c| c.members.clone()).collect(),
            });
        }
    }
    let iou_matrix = timestep_iou_matrix(dict)?;
    Ok(SharingOutcome {
        dictionary: shared,
        assignments,
        iou_matrix,
    })
}

/// Pairwise skipped-set IoU between timesteps, averaged over all
/// (layer, head) columns where both entries are masks.
pub fn timestep_iou_matrix(dict: &MaskDictionary) -> Result<Vec<Vec<f64>>> {
    let grid = dict.grid;
    let t_total = grid.timesteps;
    let mut matrix = vec![vec![0.0; t_total]; t_total];
    for (t1, row) in matrix.iter_mut().enumerate() {
        for (t2, slot) in row.iter_mut().enumerate() {
            if t1 == t2 {
                *slot = 1.0;
                continue;
            }
            let mut total = 0.0;
            let mut contributors = 0usize;
            for layer in 0..grid.layers {
                for head in 0..grid.heads {
                    let e1 = dict.get(crate::calibration::CellKey {
                        timestep: t1,
                        layer,
                        head,
                    })?;
                    let e2 = dict.get(crate::calibration::CellKey {
                        timestep: t2,
                        layer,
                        head,
                    })?;
                    if let (DictEntry::Mask(m1), DictEntry::Mask(m2)) = (e1, e2) {
                        total += skipped_iou(m1, m2)?;
                        contributors += 1;
                    }
                }
            }
            *slot = if contributors > 0 {
                total / contributors as f64
            } else {
                0.0
            };
        }
    }
    Ok(matrix)
}
