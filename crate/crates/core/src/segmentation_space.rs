//! The segmentation sample space: σ(F, I, E) events over full partitions of
//! the region set, S-refinement and rebase, and best-first enumeration of the
//! most probable segmentations.
//!
//! An event fixes a set of finalized segments F and carries one live segment
//! hypothesis τ(I, E) over the still-uncovered regions. Refining the live
//! hypothesis splits the event in two; once the hypothesis grounds, the
//! segment moves into F and a new hypothesis starts at the lowest-id
//! uncovered region (the canonical rebase policy, which pins down every
//! per-segment Θ mass).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::evidence::{EvidenceModel, MembershipSplit, PriorSpec};
use crate::math::logsumexp;
use crate::membership::{
    pick_refinement_region, EvaluationMode, EvidenceMembership, MembershipOracle,
};
use crate::region_graph::{ImageGrid, RegionGraph, RegionId, RegionSet};
use crate::segment_space::RankedDistribution;

/// A full segmentation in canonical form: blocks sorted by their least
/// region id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Partition(Vec<RegionSet>);

impl Partition {
    pub fn new(mut blocks: Vec<RegionSet>) -> Self {
        blocks.sort();
        Partition(blocks)
    }

    pub fn blocks(&self) -> &[RegionSet] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The block containing `region`, if any.
    pub fn block_of(&self, region: RegionId) -> Option<&RegionSet> {
        self.0.iter().find(|b| b.contains(&region))
    }
}

/// An event σ(F, I, E) with its accumulated log mass. `log_theta` tracks the
/// mass of the live hypothesis τ(I, E) within its own segment space, so the
/// identity `log_prob = Σ finalized masses + log_theta` holds throughout.
#[derive(Debug, Clone)]
pub struct SEvent {
    finalized: Vec<RegionSet>,
    finalized_log_masses: Vec<f64>,
    covered: RegionSet,
    base: RegionId,
    include: RegionSet,
    exclude: RegionSet,
    log_theta: f64,
    log_prob: f64,
    frontier: RegionSet,
}

impl SEvent {
    pub fn finalized(&self) -> &[RegionSet] {
        &self.finalized
    }

    /// Θ-ground log mass recorded for each finalized segment, parallel to
    /// [`SEvent::finalized`].
    pub fn finalized_log_masses(&self) -> &[f64] {
        &self.finalized_log_masses
    }

    pub fn base(&self) -> RegionId {
        self.base
    }

    pub fn include(&self) -> &RegionSet {
        &self.include
    }

    pub fn exclude(&self) -> &RegionSet {
        &self.exclude
    }

    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    pub fn log_theta(&self) -> f64 {
        self.log_theta
    }

    pub fn frontier(&self) -> &RegionSet {
        &self.frontier
    }

    /// The live hypothesis admits no further refinement.
    pub fn theta_is_ground(&self) -> bool {
        self.frontier.is_empty()
    }

    /// The event names a single segmentation.
    pub fn is_ground(&self, graph: &RegionGraph) -> bool {
        self.theta_is_ground()
            && self.covered.len() + self.include.len() == graph.region_count()
    }

    /// The segmentation named by a ground event: F plus the live segment.
    pub fn partition(&self) -> Partition {
        let mut blocks = self.finalized.clone();
        blocks.push(self.include.clone());
        Partition::new(blocks)
    }
}

/// Probability of an event per the product map: the live hypothesis mass
/// times the recorded Θ-ground mass of every finalized segment, looked up in
/// `segment_masses` (linear probabilities). A finalized segment without a
/// recorded mass is an internal-consistency error.
pub fn s_event_probability(
    event: &SEvent,
    segment_masses: &BTreeMap<RegionSet, f64>,
) -> Result<f64> {
    let mut prob = event.log_theta.exp();
    for segment in &event.finalized {
        let mass = segment_masses.get(segment).ok_or_else(|| {
            Error::Internal(format!(
                "no recorded ground mass for finalized segment {segment:?}"
            ))
        })?;
        prob *= mass;
    }
    Ok(prob)
}

fn selection_precedes(a: &SEvent, b: &SEvent) -> bool {
    match a.log_prob.total_cmp(&b.log_prob) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            (
                a.include.len(),
                &a.include,
                &a.exclude,
                a.finalized.len(),
                &a.finalized,
            ) < (
                b.include.len(),
                &b.include,
                &b.exclude,
                b.finalized.len(),
                &b.finalized,
            )
        }
    }
}

/// A pairwise-disjoint set of events partitioning the segmentation space.
#[derive(Debug, Clone)]
pub struct SCover {
    events: Vec<SEvent>,
    all: RegionSet,
}

impl SCover {
    /// The initial cover: one event with F = ∅, base = region 0, I = {R₀},
    /// E = ∅ and mass 1.
    pub fn init(graph: &RegionGraph) -> Result<Self> {
        let all = graph.all_regions();
        if all.is_empty() {
            return Err(Error::Input("graph has no regions".into()));
        }
        if !graph.is_connected(&all)? {
            return Err(Error::Input("region graph is not connected".into()));
        }
        let include: RegionSet = [0].into();
        let frontier = graph.frontier(&include, &RegionSet::new(), &all)?;
        Ok(Self {
            events: vec![SEvent {
                finalized: Vec::new(),
                finalized_log_masses: Vec::new(),
                covered: RegionSet::new(),
                base: 0,
                include,
                exclude: RegionSet::new(),
                log_theta: 0.0,
                log_prob: 0.0,
                frontier,
            }],
            all,
        })
    }

    pub fn events(&self) -> &[SEvent] {
        &self.events
    }

    /// Index of the highest-mass event that is not a full segmentation.
    pub fn select_event(&self, graph: &RegionGraph) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, event) in self.events.iter().enumerate() {
            if event.is_ground(graph) {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(j) if selection_precedes(event, &self.events[j]) => best = Some(i),
                _ => {}
            }
        }
        best
    }

    /// Splits an event on `region`, yielding σ(F, I ∪ {region}, E) and
    /// σ(F, I, E ∪ {region}). Fails with [`Error::RebaseRequired`] when the
    /// live hypothesis is already ground.
    pub fn s_refine(
        &mut self,
        event_index: usize,
        region: RegionId,
        split: MembershipSplit,
        graph: &RegionGraph,
    ) -> Result<()> {
        let event = self
            .events
            .get(event_index)
            .ok_or_else(|| Error::Input(format!("no event at index {event_index}")))?;
        if event.theta_is_ground() {
            return Err(Error::RebaseRequired);
        }
        if !event.frontier.contains(&region) {
            return Err(Error::Input(format!(
                "region {region} is not in the event's frontier"
            )));
        }
        let universe: RegionSet = self.all.difference(&event.covered).copied().collect();
        let mut include = event.include.clone();
        include.insert(region);
        let mut exclude = event.exclude.clone();
        exclude.insert(region);

        let include_child = SEvent {
            finalized: event.finalized.clone(),
            finalized_log_masses: event.finalized_log_masses.clone(),
            covered: event.covered.clone(),
            base: event.base,
            frontier: graph.frontier(&include, &event.exclude, &universe)?,
            include,
            exclude: event.exclude.clone(),
            log_theta: event.log_theta + split.log_include,
            log_prob: event.log_prob + split.log_include,
        };
        let exclude_child = SEvent {
            finalized: event.finalized.clone(),
            finalized_log_masses: event.finalized_log_masses.clone(),
            covered: event.covered.clone(),
            base: event.base,
            frontier: graph.frontier(&event.include, &exclude, &universe)?,
            include: event.include.clone(),
            exclude,
            log_theta: event.log_theta + split.log_exclude,
            log_prob: event.log_prob + split.log_exclude,
        };
        self.events[event_index] = include_child;
        self.events.push(exclude_child);
        Ok(())
    }

    /// Rewrites an event whose live hypothesis is ground: the segment moves
    /// into F (recording its Θ mass), a fresh hypothesis starts at the
    /// lowest-id uncovered region, and the first refinement of the new
    /// segment space is applied as part of the same step. Isolated new bases
    /// ground immediately and the rewrite recurses. Mass is unchanged by the
    /// rewrite itself; only the fused refinement splits it.
    pub fn s_rebase(
        &mut self,
        event_index: usize,
        oracle: &mut dyn MembershipOracle,
        graph: &RegionGraph,
    ) -> Result<()> {
        let event = self
            .events
            .get(event_index)
            .ok_or_else(|| Error::Input(format!("no event at index {event_index}")))?;
        if !event.theta_is_ground() {
            return Err(Error::Input(
                "rebase applies only to events with a ground segment hypothesis".into(),
            ));
        }
        if event.is_ground(graph) {
            return Err(Error::GroundEvent);
        }
        let mut event = self.events[event_index].clone();
        loop {
            // finalize the current segment with its Θ-ground mass
            event.covered.extend(event.include.iter().copied());
            event.finalized.push(std::mem::take(&mut event.include));
            event.finalized_log_masses.push(event.log_theta);

            let uncovered: RegionSet = self.all.difference(&event.covered).copied().collect();
            let new_base = *uncovered
                .iter()
                .next()
                .expect("rebase requires uncovered regions");
            event.base = new_base;
            event.include = [new_base].into();
            event.exclude.clear();
            event.log_theta = 0.0;
            event.frontier = graph.frontier(&event.include, &event.exclude, &uncovered)?;

            if !event.frontier.is_empty() {
                break;
            }
            // isolated base: τ({base}, ∅) is ground; recurse unless complete
            if event.covered.len() + 1 == self.all.len() {
                self.events[event_index] = event;
                return Ok(());
            }
        }
        let (region, split) =
            pick_refinement_region(oracle, event.base, &event.include, &event.frontier)?;
        self.events[event_index] = event;
        self.s_refine(event_index, region, split, graph)
    }

    pub fn log_total(&self) -> f64 {
        let logs: Vec<f64> = self.events.iter().map(|e| e.log_prob).collect();
        logsumexp(&logs)
    }

    pub fn residual_log_mass(&self, graph: &RegionGraph) -> f64 {
        let logs: Vec<f64> = self
            .events
            .iter()
            .filter(|e| !e.is_ground(graph))
            .map(|e| e.log_prob)
            .collect();
        logsumexp(&logs)
    }
}

/// Best-first driver over an [`SCover`], mirroring the segment-space search.
pub struct SegmentationSearch<'o> {
    cover: SCover,
    oracle: &'o mut dyn MembershipOracle,
    n: usize,
    guaranteed: bool,
    done: bool,
    steps: usize,
}

impl<'o> SegmentationSearch<'o> {
    pub fn new(graph: &RegionGraph, oracle: &'o mut dyn MembershipOracle, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("n must be at least 1".into()));
        }
        Ok(Self {
            cover: SCover::init(graph)?,
            oracle,
            n,
            guaranteed: false,
            done: false,
            steps: 0,
        })
    }

    pub fn cover(&self) -> &SCover {
        &self.cover
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn nth_ground_mass(&self, graph: &RegionGraph) -> Option<f64> {
        let mut masses: Vec<f64> = self
            .cover
            .events()
            .iter()
            .filter(|e| e.is_ground(graph))
            .map(|e| e.log_prob())
            .collect();
        if masses.len() < self.n {
            return None;
        }
        masses.sort_by(|a, b| b.total_cmp(a));
        Some(masses[self.n - 1])
    }

    fn termination_met(&self, graph: &RegionGraph) -> bool {
        let Some(nth) = self.nth_ground_mass(graph) else {
            return false;
        };
        match self.cover.select_event(graph) {
            Some(idx) => nth >= self.cover.events()[idx].log_prob(),
            None => true,
        }
    }

    /// One refinement or rebase; false when finished.
    pub fn step(&mut self, graph: &RegionGraph) -> Result<bool> {
        if self.done {
            return Ok(false);
        }
        if self.termination_met(graph) {
            self.guaranteed = true;
            self.done = true;
            return Ok(false);
        }
        let Some(idx) = self.cover.select_event(graph) else {
            self.guaranteed = true;
            self.done = true;
            return Ok(false);
        };
        let event = &self.cover.events()[idx];
        if event.theta_is_ground() {
            self.cover.s_rebase(idx, self.oracle, graph)?;
        } else {
            let (region, split) =
                pick_refinement_region(self.oracle, event.base(), &event.include, &event.frontier)?;
            self.cover.s_refine(idx, region, split, graph)?;
        }
        self.steps += 1;
        Ok(true)
    }

    pub fn run(&mut self, graph: &RegionGraph) -> Result<()> {
        while self.step(graph)? {}
        Ok(())
    }

    pub fn distribution(&self, graph: &RegionGraph) -> RankedDistribution<Partition> {
        let entries: Vec<(Partition, f64)> = self
            .cover
            .events()
            .iter()
            .filter(|e| e.is_ground(graph))
            .map(|e| (e.partition(), e.log_prob()))
            .collect();
        RankedDistribution::from_parts(
            entries,
            self.cover.residual_log_mass(graph),
            self.guaranteed,
        )
    }
}

/// Enumerates the most probable full segmentations until the ranking of the
/// best `n` is guaranteed or the space is exhausted.
pub fn top_n_segmentations(
    graph: &RegionGraph,
    image: &ImageGrid,
    models: &[Box<dyn EvidenceModel>],
    prior: &PriorSpec,
    n: usize,
    mode: EvaluationMode,
) -> Result<RankedDistribution<Partition>> {
    let mut oracle = EvidenceMembership::new(models, *prior, mode, graph, image);
    let mut search = SegmentationSearch::new(graph, &mut oracle, n)?;
    search.run(graph)?;
    Ok(search.distribution(graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membership::UniformMembership;
    use crate::region_graph::{path_graph, RegionGraph};

    fn cycle4() -> RegionGraph {
        RegionGraph::from_edges(4, &[(0, 1), (1, 3), (3, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn initial_event_shape() {
        let g = path_graph(3);
        let cover = SCover::init(&g).unwrap();
        assert_eq!(cover.events().len(), 1);
        let e = &cover.events()[0];
        assert!(e.finalized().is_empty());
        assert_eq!(e.base(), 0);
        assert_eq!(e.include(), &[0].into());
        assert_eq!(e.log_prob(), 0.0);
    }

    #[test]
    fn refine_conserves_mass_for_any_split() {
        let g = path_graph(3);
        for p in [0.5, 0.25, 0.9, 0.01] {
            let mut cover = SCover::init(&g).unwrap();
            cover
                .s_refine(0, 1, MembershipSplit::from_probability(p).unwrap(), &g)
                .unwrap();
            assert!(cover.log_total().abs() < 1e-12, "p = {p}");
            let masses: Vec<f64> = cover.events().iter().map(|e| e.log_prob().exp()).collect();
            assert!((masses[0] - p).abs() < 1e-12);
            assert!((masses[1] - (1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_on_ground_theta_requires_rebase() {
        let g = path_graph(2);
        let mut cover = SCover::init(&g).unwrap();
        cover
            .s_refine(0, 1, MembershipSplit::from_probability(0.5).unwrap(), &g)
            .unwrap();
        // event 0 is σ(∅, {0,1}, ∅): τ ground, S-ground too (covers everything)
        assert!(cover.events()[0].theta_is_ground());
        assert!(matches!(
            cover.s_refine(0, 1, MembershipSplit::from_probability(0.5).unwrap(), &g),
            Err(Error::RebaseRequired)
        ));
        // event 1 is σ(∅, {0}, {1}): τ ground (frontier exhausted), not S-ground
        assert!(cover.events()[1].theta_is_ground());
        assert!(!cover.events()[1].is_ground(&g));
    }

    #[test]
    fn rebase_is_a_mass_preserving_rewrite() {
        let g = path_graph(3);
        let mut cover = SCover::init(&g).unwrap();
        cover
            .s_refine(0, 1, MembershipSplit::from_probability(0.5).unwrap(), &g)
            .unwrap();
        // event 1 is σ(∅, {0}, {1}) with τ ground; rebase finalizes {0}, starts at 1
        let before = cover.events()[1].log_prob();
        let mut oracle = UniformMembership::new(0.5).unwrap();
        cover.s_rebase(1, &mut oracle, &g).unwrap();
        // the rewrite spawned the fused first refinement: two children with
        // the rewritten event replaced in place
        let total = cover.log_total();
        assert!(total.abs() < 1e-12);
        let e = &cover.events()[1];
        assert_eq!(e.finalized(), &[[0].into()]);
        assert_eq!(e.base(), 1);
        assert!((e.finalized_log_masses()[0] - before).abs() < 1e-12);
    }

    #[test]
    fn rebase_on_s_ground_event_signals_ground() {
        let g = path_graph(2);
        let mut cover = SCover::init(&g).unwrap();
        cover
            .s_refine(0, 1, MembershipSplit::from_probability(0.5).unwrap(), &g)
            .unwrap();
        let mut oracle = UniformMembership::new(0.5).unwrap();
        assert!(matches!(
            cover.s_rebase(0, &mut oracle, &g),
            Err(Error::GroundEvent)
        ));
    }

    #[test]
    fn cycle_exhaustion_counts_twelve_segmentations() {
        let g = cycle4();
        let mut oracle = UniformMembership::new(0.5).unwrap();
        let mut search = SegmentationSearch::new(&g, &mut oracle, usize::MAX).unwrap();
        search.run(&g).unwrap();
        let dist = search.distribution(&g);
        assert_eq!(dist.entries.len(), 12);
        assert!(dist.guaranteed);
        assert_eq!(dist.residual_log_mass, f64::NEG_INFINITY);
        let mut logs: Vec<f64> = dist.entries.iter().map(|(_, l)| *l).collect();
        assert!(logsumexp(&logs).abs() < 1e-9);
        logs.sort_by(f64::total_cmp);
    }

    #[test]
    fn path_exhaustion_counts_four_segmentations() {
        let g = path_graph(3);
        let mut oracle = UniformMembership::new(0.5).unwrap();
        let mut search = SegmentationSearch::new(&g, &mut oracle, usize::MAX).unwrap();
        search.run(&g).unwrap();
        let dist = search.distribution(&g);
        assert_eq!(dist.entries.len(), 4);
        let single_region_blocks = Partition::new(vec![[0].into(), [1].into(), [2].into()]);
        let one_segment = Partition::new(vec![[0, 1, 2].into()]);
        let got: Vec<&Partition> = dist.entries.iter().map(|(p, _)| p).collect();
        assert!(got.contains(&&single_region_blocks));
        assert!(got.contains(&&one_segment));
    }

    #[test]
    fn single_region_graph_has_one_segmentation() {
        let g = path_graph(1);
        let mut oracle = UniformMembership::new(0.5).unwrap();
        let mut search = SegmentationSearch::new(&g, &mut oracle, 1).unwrap();
        search.run(&g).unwrap();
        let dist = search.distribution(&g);
        assert_eq!(dist.entries.len(), 1);
        assert!(dist.entries[0].1.abs() < 1e-15);
        assert!(dist.guaranteed);
    }

    #[test]
    fn disconnected_remainders_are_handled_per_component() {
        // T-shaped graph: 1-0, 0-2, 0-3; removing 0's segment leaves {1,2,3}
        // pairwise disconnected
        let g = RegionGraph::from_edges(4, &[(1, 0), (0, 2), (0, 3)]).unwrap();
        let mut oracle = UniformMembership::new(0.5).unwrap();
        let mut search = SegmentationSearch::new(&g, &mut oracle, usize::MAX).unwrap();
        search.run(&g).unwrap();
        let dist = search.distribution(&g);
        // connected partitions of the star K1,3: blocks containing 0 can be
        // any subset of leaves plus 0; leaves otherwise singletons → 2^3 = 8
        assert_eq!(dist.entries.len(), 8);
        assert!(logsumexp(&dist.entries.iter().map(|(_, l)| *l).collect::<Vec<_>>()).abs() < 1e-9);
        // the all-singletons partition passes through a chain of isolated rebases
        let singletons = Partition::new(vec![[0].into(), [1].into(), [2].into(), [3].into()]);
        assert!(dist.entries.iter().any(|(p, _)| p == &singletons));
    }

    #[test]
    fn event_probability_product() {
        let g = path_graph(3);
        let mut cover = SCover::init(&g).unwrap();
        cover
            .s_refine(0, 1, MembershipSplit::from_probability(0.5).unwrap(), &g)
            .unwrap();
        let mut oracle = UniformMembership::new(0.5).unwrap();
        cover.s_rebase(1, &mut oracle, &g).unwrap();
        let event = &cover.events()[1];
        let mut masses = BTreeMap::new();
        masses.insert(RegionSet::from([0]), event.finalized_log_masses()[0].exp());
        let p = s_event_probability(event, &masses).unwrap();
        assert!((p - event.log_prob().exp()).abs() < 1e-12);
        // missing mass is an internal error
        let empty = BTreeMap::new();
        assert!(matches!(
            s_event_probability(event, &empty),
            Err(Error::Internal(_))
        ));
        // F = ∅ means the probability is the live hypothesis mass alone
        let fresh = SCover::init(&g).unwrap();
        let p = s_event_probability(&fresh.events()[0], &BTreeMap::new()).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partitions_order_canonically() {
        let a = Partition::new(vec![[2, 3].into(), [0, 1].into()]);
        let b = Partition::new(vec![[0, 1].into(), [2, 3].into()]);
        assert_eq!(a, b);
        assert_eq!(a.blocks()[0], [0, 1].into());
        assert_eq!(a.block_of(3), Some(&[2, 3].into()));
        assert_eq!(a.block_of(9), None);
    }
}
