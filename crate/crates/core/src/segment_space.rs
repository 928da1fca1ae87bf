//! The segment sample space: covers of τ(I, E) events over all connected
//! segments containing a base region, their refinement, and best-first
//! enumeration of the most probable segments.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::evidence::{EvidenceModel, MembershipSplit, PriorSpec};
use crate::math::logsumexp;
use crate::membership::{
    pick_refinement_region, EvaluationMode, EvidenceMembership, MembershipOracle,
};
use crate::region_graph::{ImageGrid, RegionGraph, RegionId, RegionSet};

/// An event τ(I, E): every segment that includes all of `include` and none of
/// `exclude`, carried with its log probability mass.
#[derive(Debug, Clone)]
pub struct TEvent {
    base: RegionId,
    include: RegionSet,
    exclude: RegionSet,
    log_prob: f64,
    frontier: RegionSet,
}

impl TEvent {
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

    /// Undecided regions adjacent to the include set; empty iff ground.
    pub fn frontier(&self) -> &RegionSet {
        &self.frontier
    }

    pub fn is_ground(&self) -> bool {
        self.frontier.is_empty()
    }
}

/// Comparison key realizing the deterministic selection rule: highest mass
/// first, then smallest include set, then lexicographic id order.
fn selection_precedes(a: &TEvent, b: &TEvent) -> bool {
    match a.log_prob.total_cmp(&b.log_prob) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            (a.include.len(), &a.include, &a.exclude) < (b.include.len(), &b.include, &b.exclude)
        }
    }
}

/// A pairwise-disjoint set of events partitioning the segment space of one
/// base region over a connected universe.
#[derive(Debug, Clone)]
pub struct TCover {
    base: RegionId,
    universe: RegionSet,
    events: Vec<TEvent>,
}

impl TCover {
    /// The poorest approximation: the single event τ({base}, ∅) with mass 1.
    pub fn init_cover(base: RegionId, universe: &RegionSet, graph: &RegionGraph) -> Result<Self> {
        if !universe.contains(&base) {
            return Err(Error::Input(format!(
                "base region {base} is not part of the universe"
            )));
        }
        if !graph.is_connected(universe)? {
            return Err(Error::Input("universe induces a disconnected subgraph".into()));
        }
        let include: RegionSet = [base].into();
        let frontier = graph.frontier(&include, &RegionSet::new(), universe)?;
        Ok(Self {
            base,
            universe: universe.clone(),
            events: vec![TEvent {
                base,
                include,
                exclude: RegionSet::new(),
                log_prob: 0.0,
                frontier,
            }],
        })
    }

    pub fn base(&self) -> RegionId {
        self.base
    }

    pub fn universe(&self) -> &RegionSet {
        &self.universe
    }

    pub fn events(&self) -> &[TEvent] {
        &self.events
    }

    /// Index of the highest-mass non-ground event under the deterministic
    /// selection order, if any.
    pub fn select_event(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, event) in self.events.iter().enumerate() {
            if event.is_ground() {
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

    /// Selects the refinement event and region: the highest-mass non-ground
    /// event, and its frontier member with the most decisive membership.
    pub fn select_refinement(
        &self,
        oracle: &mut dyn MembershipOracle,
    ) -> Result<(usize, RegionId, MembershipSplit)> {
        let idx = self.select_event().ok_or(Error::Exhausted)?;
        let event = &self.events[idx];
        let (region, split) =
            pick_refinement_region(oracle, event.base, &event.include, &event.frontier)?;
        Ok((idx, region, split))
    }

    /// Splits an event on `region` with membership probability `p_inc`,
    /// replacing it by τ(I ∪ {region}, E) and τ(I, E ∪ {region}).
    pub fn t_refine(
        &mut self,
        event_index: usize,
        region: RegionId,
        p_inc: f64,
        graph: &RegionGraph,
    ) -> Result<()> {
        self.t_refine_split(event_index, region, MembershipSplit::from_probability(p_inc)?, graph)
    }

    /// Log-space variant of [`TCover::t_refine`]; mass is conserved exactly
    /// as `log_prob + log p` and `log_prob + log (1 − p)`.
    pub fn t_refine_split(
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
        if event.is_ground() {
            return Err(Error::GroundEvent);
        }
        if !event.frontier.contains(&region) {
            return Err(Error::Input(format!(
                "region {region} is not in the event's frontier"
            )));
        }
        let mut include = event.include.clone();
        include.insert(region);
        let mut exclude = event.exclude.clone();
        exclude.insert(region);

        let include_child = TEvent {
            base: event.base,
            frontier: graph.frontier(&include, &event.exclude, &self.universe)?,
            include,
            exclude: event.exclude.clone(),
            log_prob: event.log_prob + split.log_include,
        };
        let exclude_child = TEvent {
            base: event.base,
            frontier: graph.frontier(&event.include, &exclude, &self.universe)?,
            include: event.include.clone(),
            exclude,
            log_prob: event.log_prob + split.log_exclude,
        };
        self.events[event_index] = include_child;
        self.events.push(exclude_child);
        Ok(())
    }

    /// log Σ of all event masses; 0 (= log 1) up to accumulated rounding.
    pub fn log_total(&self) -> f64 {
        let logs: Vec<f64> = self.events.iter().map(|e| e.log_prob).collect();
        logsumexp(&logs)
    }

    /// log Σ of non-ground event masses.
    pub fn residual_log_mass(&self) -> f64 {
        let logs: Vec<f64> = self
            .events
            .iter()
            .filter(|e| !e.is_ground())
            .map(|e| e.log_prob)
            .collect();
        logsumexp(&logs)
    }
}

/// An ordered list of ground hypotheses with their log masses, the residual
/// mass still locked in unexplored non-ground events, and whether the
/// termination criterion proved the ranking.
#[derive(Debug, Clone)]
pub struct RankedDistribution<H> {
    pub entries: Vec<(H, f64)>,
    pub residual_log_mass: f64,
    pub guaranteed: bool,
}

impl<H: Ord> RankedDistribution<H> {
    /// Builds a distribution, sorting entries by descending mass with
    /// lexicographic tie-breaking.
    pub fn from_parts(
        mut entries: Vec<(H, f64)>,
        residual_log_mass: f64,
        guaranteed: bool,
    ) -> Self {
        entries.sort_by(|(ha, la), (hb, lb)| lb.total_cmp(la).then_with(|| ha.cmp(hb)));
        Self {
            entries,
            residual_log_mass,
            guaranteed,
        }
    }
}

/// Shannon entropy (base 2) of the renormalized explicit entries, reported
/// alongside the untouched residual probability mass.
pub fn entropy<H>(dist: &RankedDistribution<H>) -> Result<(f64, f64)> {
    if dist.entries.is_empty() {
        return Err(Error::Input("entropy of an empty distribution".into()));
    }
    let logs: Vec<f64> = dist.entries.iter().map(|(_, l)| *l).collect();
    Ok((
        entropy_bits_of_logs(&logs),
        dist.residual_log_mass.exp(),
    ))
}

/// Entropy in bits of the distribution proportional to exp(logs).
pub fn entropy_bits_of_logs(logs: &[f64]) -> f64 {
    let total = logsumexp(logs);
    let mut bits = 0.0;
    for &l in logs {
        let ln_q = l - total;
        if ln_q.is_finite() {
            bits -= ln_q.exp() * ln_q;
        }
    }
    bits / std::f64::consts::LN_2
}

/// Min-heap over the n largest ground masses seen so far; `kth_largest`
/// answers the termination test in O(1).
struct TopMasses {
    limit: usize,
    heap: BinaryHeap<std::cmp::Reverse<LogMass>>,
}

#[derive(PartialEq)]
struct LogMass(f64);

impl Eq for LogMass {}

impl PartialOrd for LogMass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogMass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl TopMasses {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            heap: BinaryHeap::new(),
        }
    }

    fn push(&mut self, log_mass: f64) {
        if self.heap.len() < self.limit {
            self.heap.push(std::cmp::Reverse(LogMass(log_mass)));
        } else if let Some(std::cmp::Reverse(LogMass(m))) = self.heap.peek() {
            if log_mass > *m {
                self.heap.pop();
                self.heap.push(std::cmp::Reverse(LogMass(log_mass)));
            }
        }
    }

    /// The n-th largest mass once n entries exist.
    fn kth_largest(&self) -> Option<f64> {
        if self.heap.len() < self.limit {
            None
        } else {
            self.heap.peek().map(|std::cmp::Reverse(LogMass(m))| *m)
        }
    }
}

/// Best-first driver over a [`TCover`]. `step` is exposed so callers can
/// audit mass conservation between refinements.
pub struct SegmentSearch<'o> {
    cover: TCover,
    oracle: &'o mut dyn MembershipOracle,
    top: TopMasses,
    guaranteed: bool,
    done: bool,
    steps: usize,
}

impl<'o> SegmentSearch<'o> {
    pub fn new(
        base: RegionId,
        universe: &RegionSet,
        graph: &RegionGraph,
        oracle: &'o mut dyn MembershipOracle,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("n must be at least 1".into()));
        }
        let cover = TCover::init_cover(base, universe, graph)?;
        let mut top = TopMasses::new(n);
        for event in cover.events() {
            if event.is_ground() {
                top.push(event.log_prob());
            }
        }
        Ok(Self {
            cover,
            oracle,
            top,
            guaranteed: false,
            done: false,
            steps: 0,
        })
    }

    pub fn cover(&self) -> &TCover {
        &self.cover
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// True once the n best ground events each carry at least as much mass as
    /// every remaining non-ground event.
    fn termination_met(&self) -> bool {
        let Some(nth) = self.top.kth_largest() else {
            return false;
        };
        match self.cover.select_event() {
            Some(idx) => nth >= self.cover.events()[idx].log_prob(),
            None => true,
        }
    }

    /// Performs one refinement. Returns false when the search has finished
    /// (guaranteed ranking or exhausted space).
    pub fn step(&mut self, graph: &RegionGraph) -> Result<bool> {
        if self.done {
            return Ok(false);
        }
        if self.termination_met() {
            self.guaranteed = true;
            self.done = true;
            return Ok(false);
        }
        let (idx, region, split) = match self.cover.select_refinement(self.oracle) {
            Ok(choice) => choice,
            Err(Error::Exhausted) => {
                // exhausted space: the full distribution is explicit
                self.guaranteed = true;
                self.done = true;
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        self.cover.t_refine_split(idx, region, split, graph)?;
        self.steps += 1;
        for i in [idx, self.cover.events().len() - 1] {
            let event = &self.cover.events()[i];
            if event.is_ground() {
                self.top.push(event.log_prob());
            }
        }
        Ok(true)
    }

    pub fn run(&mut self, graph: &RegionGraph) -> Result<()> {
        while self.step(graph)? {}
        Ok(())
    }

    /// Ground events sorted by descending mass, with the unexplored residual.
    pub fn distribution(&self) -> RankedDistribution<RegionSet> {
        let entries: Vec<(RegionSet, f64)> = self
            .cover
            .events()
            .iter()
            .filter(|e| e.is_ground())
            .map(|e| (e.include().clone(), e.log_prob()))
            .collect();
        RankedDistribution::from_parts(entries, self.cover.residual_log_mass(), self.guaranteed)
    }
}

/// Enumerates the most probable segments containing `base` until the ranking
/// of the best `n` is guaranteed or the space is exhausted.
pub fn top_n_segments(
    base: RegionId,
    graph: &RegionGraph,
    image: &ImageGrid,
    models: &[Box<dyn EvidenceModel>],
    prior: &PriorSpec,
    n: usize,
    mode: EvaluationMode,
) -> Result<RankedDistribution<RegionSet>> {
    let mut oracle = EvidenceMembership::new(models, *prior, mode, graph, image);
    let universe = graph.all_regions();
    let mut search = SegmentSearch::new(base, &universe, graph, &mut oracle, n)?;
    search.run(graph)?;
    Ok(search.distribution())
}

/// Mass of the ground segment `segment` of Θ_base over `universe` under the
/// pairwise product semantics: ∏ p(base, r) over members, ∏ (1 − p(base, r))
/// over the segment's frontier. Order-invariant; serves as the closed form
/// the search must reproduce.
pub fn pairwise_segment_log_mass(
    segment: &RegionSet,
    base: RegionId,
    universe: &RegionSet,
    graph: &RegionGraph,
    oracle: &mut dyn MembershipOracle,
) -> Result<f64> {
    let mut log_mass = 0.0;
    for &r in segment {
        if r != base {
            log_mass += oracle.split(base, segment, r)?.log_include;
        }
    }
    for &r in &graph.frontier(segment, &RegionSet::new(), universe)? {
        log_mass += oracle.split(base, segment, r)?.log_exclude;
    }
    Ok(log_mass)
}
