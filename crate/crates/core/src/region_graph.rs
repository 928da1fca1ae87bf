//! The image, its initial partition into regions, and the adjacency relation.
//!
//! Every refinement step elsewhere in the crate is gated by connectivity
//! queries answered here: whether a set of regions is connected, and which
//! regions are legal refinement candidates (the frontier) for a given
//! include/exclude state.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

/// Index of a region inside a [`RegionGraph`].
pub type RegionId = u32;

/// Ordered set of region ids. Ordering makes iteration and lexicographic
/// tie-breaking deterministic everywhere.
pub type RegionSet = BTreeSet<RegionId>;

/// Dense row-major range image: one real observation per element, with the
/// element's coordinates given by its column (x₁) and row (x₂).
#[derive(Debug, Clone)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Input(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite value at element ({}, {})",
                i / width,
                i % width
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Observation at (row, col).
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A connected set of image elements; the atomic unit of merging.
#[derive(Debug, Clone)]
pub struct Region {
    id: RegionId,
    elements: Vec<(usize, usize)>,
}

impl Region {
    /// Builds a region, checking non-emptiness and 4-connectivity.
    pub fn new(id: RegionId, elements: Vec<(usize, usize)>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Input(format!("region {id} has no elements")));
        }
        if !elements_connected(&elements) {
            return Err(Error::Input(format!(
                "region {id} is not connected under 4-adjacency"
            )));
        }
        Ok(Self { id, elements })
    }

    pub fn id(&self) -> RegionId {
        self.id
    }

    /// Elements as (row, col) pairs.
    pub fn elements(&self) -> &[(usize, usize)] {
        &self.elements
    }
}

fn elements_connected(elements: &[(usize, usize)]) -> bool {
    let set: BTreeSet<(usize, usize)> = elements.iter().cloned().collect();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    let start = *elements.first().expect("non-empty");
    queue.push_back(start);
    seen.insert(start);
    while let Some((r, c)) = queue.pop_front() {
        let mut push = |rr: usize, cc: usize| {
            if set.contains(&(rr, cc)) && seen.insert((rr, cc)) {
                queue.push_back((rr, cc));
            }
        };
        if r > 0 {
            push(r - 1, c);
        }
        if c > 0 {
            push(r, c - 1);
        }
        push(r + 1, c);
        push(r, c + 1);
    }
    seen.len() == set.len()
}

/// An initial partition of the image into regions plus their adjacency
/// relation. Immutable after construction; all queries are pure reads.
#[derive(Debug, Clone)]
pub struct RegionGraph {
    regions: Vec<Region>,
    adjacency: Vec<RegionSet>,
    /// Per-element owning region, row-major; empty for abstract graphs.
    region_map: Vec<RegionId>,
    width: usize,
    height: usize,
}

impl RegionGraph {
    /// Tiles the image into `block_size` × `block_size` squares, keeping the
    /// smaller rectangles at the right/bottom boundary as their own regions.
    /// Region ids are assigned row-major over the block grid.
    pub fn partition_grid(image: &ImageGrid, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Input("block size must be at least 1".into()));
        }
        let blocks_x = image.width().div_ceil(block_size);
        let blocks_y = image.height().div_ceil(block_size);
        let mut regions = Vec::with_capacity(blocks_x * blocks_y);
        for by in 0..blocks_y {
            for bx in 0..blocks_x {
                let id = (by * blocks_x + bx) as RegionId;
                let mut elements = Vec::new();
                for r in by * block_size..((by + 1) * block_size).min(image.height()) {
                    for c in bx * block_size..((bx + 1) * block_size).min(image.width()) {
                        elements.push((r, c));
                    }
                }
                regions.push(Region::new(id, elements)?);
            }
        }
        Self::from_regions(regions, image.width(), image.height())
    }

    /// Builds the graph from an explicit partition, deriving adjacency from
    /// 4-adjacent element pairs that cross region boundaries.
    pub fn from_regions(regions: Vec<Region>, width: usize, height: usize) -> Result<Self> {
        let mut region_map = vec![RegionId::MAX; width * height];
        for region in &regions {
            for &(r, c) in region.elements() {
                if r >= height || c >= width {
                    return Err(Error::Input(format!(
                        "region {} element ({r}, {c}) lies outside the {width}x{height} grid",
                        region.id()
                    )));
                }
                let idx = r * width + c;
                if region_map[idx] != RegionId::MAX {
                    return Err(Error::Input(format!(
                        "element ({r}, {c}) belongs to regions {} and {}",
                        region_map[idx],
                        region.id()
                    )));
                }
                region_map[idx] = region.id();
            }
        }
        if let Some(i) = region_map.iter().position(|&id| id == RegionId::MAX) {
            return Err(Error::Input(format!(
                "element ({}, {}) is not covered by any region",
                i / width,
                i % width
            )));
        }
        let mut adjacency = vec![RegionSet::new(); regions.len()];
        for r in 0..height {
            for c in 0..width {
                let here = region_map[r * width + c];
                if c + 1 < width {
                    let right = region_map[r * width + c + 1];
                    if right != here {
                        adjacency[here as usize].insert(right);
                        adjacency[right as usize].insert(here);
                    }
                }
                if r + 1 < height {
                    let below = region_map[(r + 1) * width + c];
                    if below != here {
                        adjacency[here as usize].insert(below);
                        adjacency[below as usize].insert(here);
                    }
                }
            }
        }
        let graph = Self {
            regions,
            adjacency,
            region_map,
            width,
            height,
        };
        if !graph.is_connected(&graph.all_regions())? {
            return Err(Error::Input("image is not a connected universe".into()));
        }
        Ok(graph)
    }

    /// Builds a graph with the given adjacency over abstract regions that do
    /// not correspond to image elements. Regions receive placeholder
    /// single-element extents so the partition machinery stays usable on
    /// pure topologies (paths, cycles, random graphs).
    pub fn from_edges(region_count: usize, edges: &[(RegionId, RegionId)]) -> Result<Self> {
        if region_count == 0 {
            return Err(Error::Input("graph needs at least one region".into()));
        }
        let mut adjacency = vec![RegionSet::new(); region_count];
        for &(a, b) in edges {
            if a as usize >= region_count || b as usize >= region_count {
                return Err(Error::Input(format!("edge ({a}, {b}) names an unknown region")));
            }
            if a == b {
                return Err(Error::Input(format!("self-adjacency on region {a}")));
            }
            adjacency[a as usize].insert(b);
            adjacency[b as usize].insert(a);
        }
        let regions = (0..region_count)
            .map(|i| Region {
                id: i as RegionId,
                elements: vec![(0, 2 * i)],
            })
            .collect();
        Ok(Self {
            regions,
            adjacency,
            region_map: Vec::new(),
            width: 0,
            height: 0,
        })
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id as usize]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn neighbors(&self, id: RegionId) -> &RegionSet {
        &self.adjacency[id as usize]
    }

    /// Per-element owning region, row-major. Empty for abstract graphs.
    pub fn region_map(&self) -> &[RegionId] {
        &self.region_map
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn all_regions(&self) -> RegionSet {
        (0..self.regions.len() as RegionId).collect()
    }

    fn check_ids(&self, ids: &RegionSet) -> Result<()> {
        if let Some(&id) = ids.iter().next_back() {
            if id as usize >= self.regions.len() {
                return Err(Error::Input(format!("region id {id} out of range")));
            }
        }
        Ok(())
    }

    /// True iff the induced subgraph on `ids` is connected. The empty set and
    /// singletons are connected by convention.
    pub fn is_connected(&self, ids: &RegionSet) -> Result<bool> {
        self.check_ids(ids)?;
        let Some(&start) = ids.iter().next() else {
            return Ok(true);
        };
        Ok(self.component_of(start, ids).len() == ids.len())
    }

    /// The connected component of `seed` inside `universe` (which must
    /// contain the seed).
    pub fn component_of(&self, seed: RegionId, universe: &RegionSet) -> RegionSet {
        debug_assert!(universe.contains(&seed));
        let mut seen = RegionSet::new();
        let mut queue = VecDeque::new();
        seen.insert(seed);
        queue.push_back(seed);
        while let Some(id) = queue.pop_front() {
            for &nb in self.neighbors(id) {
                if universe.contains(&nb) && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        seen
    }

    /// Regions of `universe` outside `include ∪ exclude` that are adjacent to
    /// at least one member of `include`. An empty result means the event
    /// restricted to `universe` is ground.
    pub fn frontier(
        &self,
        include: &RegionSet,
        exclude: &RegionSet,
        universe: &RegionSet,
    ) -> Result<RegionSet> {
        self.check_ids(universe)?;
        if include.is_empty() {
            return Err(Error::Input("include set must be non-empty".into()));
        }
        if !include.is_subset(universe) || !exclude.is_subset(universe) {
            return Err(Error::Input(
                "include and exclude sets must lie inside the universe".into(),
            ));
        }
        if !include.is_disjoint(exclude) {
            return Err(Error::Input("include and exclude sets overlap".into()));
        }
        let mut result = RegionSet::new();
        for &id in include {
            for &nb in self.neighbors(id) {
                if universe.contains(&nb) && !include.contains(&nb) && !exclude.contains(&nb) {
                    result.insert(nb);
                }
            }
        }
        Ok(result)
    }
}

/// A path graph R0–R1–…–R(n-1); handy for small worked examples.
pub fn path_graph(n: usize) -> RegionGraph {
    let edges: Vec<_> = (1..n as RegionId).map(|i| (i - 1, i)).collect();
    RegionGraph::from_edges(n, &edges).expect("path graph is valid")
}
