//! Membership-probability sources for refinement decisions.
//!
//! A [`MembershipOracle`] answers one question: if `region` is considered for
//! the segment grown from `base` with current include set `include`, how does
//! the event's mass split between the include and exclude branches? The
//! evidence-backed implementation caches answers because evidence
//! evaluations dominate search runtime.

use std::collections::HashMap;

use crate::error::Result;
use crate::evidence::{membership_split, EvidenceModel, MembershipSplit, PriorSpec};
use crate::region_graph::{ImageGrid, RegionGraph, RegionId, RegionSet};

/// How the evidence ratio for a candidate region is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluationMode {
    /// λ₁ between the base region alone and the candidate; independent of
    /// the include/exclude state, so ground-event masses are order-invariant.
    Pairwise,
    /// λ₁ between the whole current include set and the candidate; masses
    /// are relative to the canonical refinement order.
    Aggregate,
}

impl std::str::FromStr for EvaluationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pairwise" => Ok(Self::Pairwise),
            "aggregate" => Ok(Self::Aggregate),
            other => Err(format!("unknown mode {other:?} (expected pairwise|aggregate)")),
        }
    }
}

pub trait MembershipOracle {
    /// Mass split for deciding `region` against the segment currently grown
    /// to `include` from `base`.
    fn split(
        &mut self,
        base: RegionId,
        include: &RegionSet,
        region: RegionId,
    ) -> Result<MembershipSplit>;
}

/// Fixed-probability oracle; `p = 0.5` realizes membership uniformity.
#[derive(Debug, Clone, Copy)]
pub struct UniformMembership {
    split: MembershipSplit,
}

impl UniformMembership {
    pub fn new(p: f64) -> Result<Self> {
        Ok(Self {
            split: MembershipSplit::from_probability(p)?,
        })
    }
}

impl MembershipOracle for UniformMembership {
    fn split(&mut self, _: RegionId, _: &RegionSet, _: RegionId) -> Result<MembershipSplit> {
        Ok(self.split)
    }
}

/// Evidence-driven oracle over one or more independent models, with a cache
/// keyed by (mode-specific evaluated set, candidate region).
pub struct EvidenceMembership<'a> {
    models: &'a [Box<dyn EvidenceModel>],
    prior: PriorSpec,
    mode: EvaluationMode,
    graph: &'a RegionGraph,
    image: &'a ImageGrid,
    cache: HashMap<(Vec<RegionId>, RegionId), MembershipSplit>,
    evaluations: usize,
}

impl<'a> EvidenceMembership<'a> {
    pub fn new(
        models: &'a [Box<dyn EvidenceModel>],
        prior: PriorSpec,
        mode: EvaluationMode,
        graph: &'a RegionGraph,
        image: &'a ImageGrid,
    ) -> Self {
        Self {
            models,
            prior,
            mode,
            graph,
            image,
            cache: HashMap::new(),
            evaluations: 0,
        }
    }

    /// Number of cache-missing evidence evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

impl MembershipOracle for EvidenceMembership<'_> {
    fn split(
        &mut self,
        base: RegionId,
        include: &RegionSet,
        region: RegionId,
    ) -> Result<MembershipSplit> {
        let lhs: Vec<RegionId> = match self.mode {
            EvaluationMode::Pairwise => vec![base],
            EvaluationMode::Aggregate => include.iter().copied().collect(),
        };
        if let Some(split) = self.cache.get(&(lhs.clone(), region)) {
            return Ok(*split);
        }
        let lhs_set: RegionSet = lhs.iter().copied().collect();
        let rhs: RegionSet = [region].into();
        let mut log_lambdas = Vec::with_capacity(self.models.len());
        for model in self.models {
            log_lambdas.push(model.log_lambda1(&lhs_set, &rhs, self.graph, self.image)?);
        }
        self.evaluations += 1;
        let split = membership_split(&self.prior, &log_lambdas)?;
        self.cache.insert((lhs, region), split);
        Ok(split)
    }
}

/// Picks the frontier region whose membership probability is farthest from
/// ½, breaking ties toward the lowest id. Frontier iteration is ascending,
/// so a strict comparison realizes the tie rule.
pub fn pick_refinement_region(
    oracle: &mut dyn MembershipOracle,
    base: RegionId,
    include: &RegionSet,
    frontier: &RegionSet,
) -> Result<(RegionId, MembershipSplit)> {
    debug_assert!(!frontier.is_empty());
    let mut best: Option<(f64, RegionId, MembershipSplit)> = None;
    for &region in frontier {
        let split = oracle.split(base, include, region)?;
        let score = (split.p_include() - 0.5).abs();
        if best.is_none_or(|(s, _, _)| score > s) {
            best = Some((score, region, split));
        }
    }
    let (_, region, split) = best.expect("frontier is non-empty");
    Ok((region, split))
}
