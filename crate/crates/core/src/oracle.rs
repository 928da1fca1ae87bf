//! Brute-force ground truth for small instances: exhaustive enumeration of
//! segment and segmentation spaces, exact event masses under the canonical
//! refinement semantics, and the three prior-uniformity schemes.
//!
//! Everything here is deliberately unclever; these routines exist to check
//! the incremental machinery, not to be fast.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::evidence::{EvidenceModel, PriorSpec};
use crate::math::logsumexp;
use crate::membership::{
    EvaluationMode, EvidenceMembership, MembershipOracle, UniformMembership,
};
use crate::region_graph::{ImageGrid, RegionGraph, RegionId, RegionSet};
use crate::segmentation_space::{Partition, SEvent};

/// Hard cap for segment enumeration.
pub const SEGMENT_ENUM_CAP: usize = 16;
/// Hard cap for segmentation enumeration.
pub const SEGMENTATION_ENUM_CAP: usize = 12;

/// All connected region subsets of `universe` containing `base`, in
/// canonical set order.
pub fn enumerate_segments_within(
    base: RegionId,
    universe: &RegionSet,
    graph: &RegionGraph,
) -> Result<Vec<RegionSet>> {
    if universe.len() > SEGMENT_ENUM_CAP {
        return Err(Error::Size(format!(
            "segment enumeration is capped at {SEGMENT_ENUM_CAP} regions, got {}",
            universe.len()
        )));
    }
    if !universe.contains(&base) {
        return Err(Error::Input(format!("base region {base} not in universe")));
    }
    let ids: Vec<RegionId> = universe.iter().copied().collect();
    let base_bit = ids.binary_search(&base).expect("base is in universe");
    let n = ids.len();
    let mut result = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask & (1 << base_bit) == 0 {
            continue;
        }
        let subset: RegionSet = ids
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &id)| id)
            .collect();
        if graph.is_connected(&subset)? {
            result.push(subset);
        }
    }
    result.sort();
    Ok(result)
}

/// All connected segments containing `base` over the whole graph (Θ_base).
pub fn enumerate_segments(base: RegionId, graph: &RegionGraph) -> Result<Vec<RegionSet>> {
    enumerate_segments_within(base, &graph.all_regions(), graph)
}

fn enumerate_partitions_of(
    universe: &RegionSet,
    graph: &RegionGraph,
    prefix: &mut Vec<RegionSet>,
    out: &mut Vec<Partition>,
) -> Result<()> {
    let Some(&first) = universe.iter().next() else {
        out.push(Partition::new(prefix.clone()));
        return Ok(());
    };
    let component = graph.component_of(first, universe);
    for block in enumerate_segments_within(first, &component, graph)? {
        let rest: RegionSet = universe.difference(&block).copied().collect();
        prefix.push(block);
        enumerate_partitions_of(&rest, graph, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

/// All partitions of the region set into connected blocks (Π), canonically
/// ordered.
pub fn enumerate_segmentations(graph: &RegionGraph) -> Result<Vec<Partition>> {
    if graph.region_count() > SEGMENTATION_ENUM_CAP {
        return Err(Error::Size(format!(
            "segmentation enumeration is capped at {SEGMENTATION_ENUM_CAP} regions, got {}",
            graph.region_count()
        )));
    }
    let mut out = Vec::new();
    enumerate_partitions_of(&graph.all_regions(), graph, &mut Vec::new(), &mut out)?;
    out.sort();
    Ok(out)
}

/// Per-block data of a segmentation under the canonical rebase order: the
/// block, its base (least id), its Θ universe (component of the base among
/// regions not covered by earlier blocks), and its frontier there.
pub fn canonical_factors(
    partition: &Partition,
    graph: &RegionGraph,
) -> Result<Vec<(RegionSet, RegionId, RegionSet, RegionSet)>> {
    let mut blocks: Vec<&RegionSet> = partition.blocks().iter().collect();
    blocks.sort_by_key(|b| *b.iter().next().expect("blocks are non-empty"));
    let mut covered = RegionSet::new();
    let mut factors = Vec::with_capacity(blocks.len());
    for block in blocks {
        let base = *block.iter().next().expect("non-empty block");
        let uncovered: RegionSet = graph
            .all_regions()
            .difference(&covered)
            .copied()
            .collect();
        let universe = graph.component_of(base, &uncovered);
        if !block.is_subset(&universe) {
            return Err(Error::Internal(format!(
                "block {block:?} escapes the component of its base"
            )));
        }
        let frontier = graph.frontier(block, &RegionSet::new(), &universe)?;
        covered.extend(block.iter().copied());
        factors.push(((*block).clone(), base, frontier, universe));
    }
    Ok(factors)
}

/// Exact log mass of one segmentation under the pairwise product semantics.
pub fn pairwise_partition_log_mass(
    partition: &Partition,
    graph: &RegionGraph,
    oracle: &mut dyn MembershipOracle,
) -> Result<f64> {
    let mut log_mass = 0.0;
    for (block, base, frontier, _) in canonical_factors(partition, graph)? {
        for &r in &block {
            if r != base {
                log_mass += oracle.split(base, &block, r)?.log_include;
            }
        }
        for &r in &frontier {
            log_mass += oracle.split(base, &block, r)?.log_exclude;
        }
    }
    Ok(log_mass)
}

/// The full distribution over Π with per-hypothesis log masses.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    /// (segmentation, log probability), descending by mass.
    pub hypotheses: Vec<(Partition, f64)>,
    pub mode: ExactMode,
    /// Signed deviation of the raw total from 1. Masses are normalized only
    /// when |deviation| exceeds 1e-9, and the deviation is always reported.
    pub sum_deviation: f64,
}

/// Which probability assignment an [`ExactDistribution`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMode {
    /// Evidence-driven pairwise membership probabilities.
    Pairwise,
    /// Membership uniformity: every refinement splits evenly.
    MembershipUniform,
    /// Segment uniformity propagated through the product map.
    SegmentUniform,
    /// Segmentation uniformity: 1 / |Π|.
    SegmentationUniform,
}

impl ExactDistribution {
    fn from_logs(mut hypotheses: Vec<(Partition, f64)>, mode: ExactMode) -> Self {
        let total = logsumexp(&hypotheses.iter().map(|(_, l)| *l).collect::<Vec<_>>());
        let sum_deviation = total.exp_m1();
        if sum_deviation.abs() > 1e-9 {
            for (_, l) in &mut hypotheses {
                *l -= total;
            }
        }
        hypotheses.sort_by(|(pa, la), (pb, lb)| lb.total_cmp(la).then_with(|| pa.cmp(pb)));
        Self {
            hypotheses,
            mode,
            sum_deviation,
        }
    }

    pub fn log_mass_of(&self, partition: &Partition) -> Option<f64> {
        self.hypotheses
            .iter()
            .find(|(p, _)| p == partition)
            .map(|(_, l)| *l)
    }
}

fn exact_masses_with_oracle(
    graph: &RegionGraph,
    oracle: &mut dyn MembershipOracle,
    mode: ExactMode,
) -> Result<ExactDistribution> {
    let mut hypotheses = Vec::new();
    for partition in enumerate_segmentations(graph)? {
        let log_mass = pairwise_partition_log_mass(&partition, graph, oracle)?;
        hypotheses.push((partition, log_mass));
    }
    Ok(ExactDistribution::from_logs(hypotheses, mode))
}

/// Exact evidence-driven distribution over Π (pairwise membership mode).
pub fn exact_masses(
    graph: &RegionGraph,
    image: &ImageGrid,
    models: &[Box<dyn EvidenceModel>],
    prior: &PriorSpec,
) -> Result<ExactDistribution> {
    let mut oracle =
        EvidenceMembership::new(models, *prior, EvaluationMode::Pairwise, graph, image);
    exact_masses_with_oracle(graph, &mut oracle, ExactMode::Pairwise)
}

/// Exact distribution over Π under one of the prior-uniformity schemes.
pub fn exact_prior_masses(graph: &RegionGraph, mode: ExactMode) -> Result<ExactDistribution> {
    match mode {
        ExactMode::Pairwise => Err(Error::Input(
            "pairwise masses need image data; call exact_masses".into(),
        )),
        ExactMode::MembershipUniform => {
            let mut oracle = UniformMembership::new(0.5)?;
            exact_masses_with_oracle(graph, &mut oracle, mode)
        }
        ExactMode::SegmentationUniform => {
            let partitions = enumerate_segmentations(graph)?;
            let log_p = -(partitions.len() as f64).ln();
            Ok(ExactDistribution::from_logs(
                partitions.into_iter().map(|p| (p, log_p)).collect(),
                mode,
            ))
        }
        ExactMode::SegmentUniform => {
            let mut hypotheses = Vec::new();
            for partition in enumerate_segmentations(graph)? {
                let mut log_mass = 0.0;
                for (_, base, _, universe) in canonical_factors(&partition, graph)? {
                    let theta = enumerate_segments_within(base, &universe, graph)?;
                    log_mass -= (theta.len() as f64).ln();
                }
                hypotheses.push((partition, log_mass));
            }
            Ok(ExactDistribution::from_logs(hypotheses, ExactMode::SegmentUniform))
        }
    }
}

/// Total-variation distances between the three prior-uniformity schemes.
#[derive(Debug, Clone)]
pub struct PriorComparison {
    pub n_segmentations: usize,
    pub tv_membership_vs_segmentation: f64,
    pub tv_segment_vs_segmentation: f64,
    pub tv_membership_vs_segment: f64,
}

fn total_variation(a: &ExactDistribution, b: &ExactDistribution) -> Result<f64> {
    if a.hypotheses.len() != b.hypotheses.len() {
        return Err(Error::Internal(
            "prior distributions enumerate different spaces".into(),
        ));
    }
    // hypotheses are sorted by mass; align the two lists by partition
    let mut av: Vec<(&Partition, f64)> = a.hypotheses.iter().map(|(p, l)| (p, *l)).collect();
    let mut bv: Vec<(&Partition, f64)> = b.hypotheses.iter().map(|(p, l)| (p, *l)).collect();
    av.sort_by_key(|(pa, _)| *pa);
    bv.sort_by_key(|(pa, _)| *pa);
    let mut tv = 0.0;
    for ((pa, la), (pb, lb)) in av.iter().zip(bv.iter()) {
        if pa != pb {
            return Err(Error::Internal(
                "prior distributions enumerate different spaces".into(),
            ));
        }
        tv += (la.exp() - lb.exp()).abs();
    }
    Ok(tv / 2.0)
}

/// Evaluates segmentation uniformity, segment uniformity propagated through
/// the product map, and membership uniformity over Π, reporting pairwise
/// total-variation distances.
pub fn prior_comparison(graph: &RegionGraph) -> Result<PriorComparison> {
    let segmentation = exact_prior_masses(graph, ExactMode::SegmentationUniform)?;
    let segment = exact_prior_masses(graph, ExactMode::SegmentUniform)?;
    let membership = exact_prior_masses(graph, ExactMode::MembershipUniform)?;
    Ok(PriorComparison {
        n_segmentations: segmentation.hypotheses.len(),
        tv_membership_vs_segmentation: total_variation(&membership, &segmentation)?,
        tv_segment_vs_segmentation: total_variation(&segment, &segmentation)?,
        tv_membership_vs_segment: total_variation(&membership, &segment)?,
    })
}

/// Explicit set expansion of a segment event τ(I, E) over `universe`: all
/// connected segments containing `base` that include I and avoid E.
pub fn expand_segment_event(
    base: RegionId,
    include: &RegionSet,
    exclude: &RegionSet,
    universe: &RegionSet,
    graph: &RegionGraph,
) -> Result<BTreeSet<RegionSet>> {
    Ok(enumerate_segments_within(base, universe, graph)?
        .into_iter()
        .filter(|t| include.is_subset(t) && exclude.is_disjoint(t))
        .collect())
}

/// Explicit set expansion of a segmentation event σ(F, I, E): all
/// segmentations containing every finalized segment whose block at the
/// event's base includes I and avoids E.
pub fn expand_segmentation_event(
    event: &SEvent,
    graph: &RegionGraph,
) -> Result<BTreeSet<Partition>> {
    let mut out = BTreeSet::new();
    for partition in enumerate_segmentations(graph)? {
        let finalized_ok = event
            .finalized()
            .iter()
            .all(|f| partition.blocks().contains(f));
        if !finalized_ok {
            continue;
        }
        let Some(block) = partition.block_of(event.base()) else {
            continue;
        };
        if event.include().is_subset(block) && event.exclude().is_disjoint(block) {
            out.insert(partition);
        }
    }
    Ok(out)
}
