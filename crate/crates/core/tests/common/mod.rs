//! Shared test fixtures: an independent quadrature oracle for the evidence
//! integral, random instance generators, and a randomized membership source.
//!
//! The quadrature code deliberately avoids the library's moment/Cholesky
//! path: it works from raw element data, locates the integrand mode by
//! golden-section coordinate descent, estimates the local covariance by
//! finite differences, and integrates with tensor-product Simpson rules.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use segprob_core::evidence::MembershipSplit;
use segprob_core::membership::MembershipOracle;
use segprob_core::region_graph::{ImageGrid, RegionGraph, RegionId, RegionSet};
use segprob_core::Result;

/// Raw (x1, x2, z) triples of a region set's elements.
pub fn raw_elements(
    regions: &RegionSet,
    graph: &RegionGraph,
    image: &ImageGrid,
) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for &id in regions {
        for &(r, c) in graph.region(id).elements() {
            out.push((c as f64, r as f64, image.value(r, c)));
        }
    }
    out
}

pub fn centroid(elements: &[(f64, f64, f64)]) -> (f64, f64) {
    let n = elements.len() as f64;
    let sx: f64 = elements.iter().map(|e| e.0).sum();
    let sy: f64 = elements.iter().map(|e| e.1).sum();
    (sx / n, sy / n)
}

/// log of the (unnormalized in u) integrand: log p(z | u) + log p(u).
fn log_integrand(
    u: [f64; 3],
    elements: &[(f64, f64, f64)],
    center: (f64, f64),
    sigma2: f64,
    tau2: f64,
) -> f64 {
    let n = elements.len() as f64;
    let mut sse = 0.0;
    for &(x, y, z) in elements {
        let fit = u[0] * (x - center.0) + u[1] * (y - center.1) + u[2];
        sse += (z - fit) * (z - fit);
    }
    let log_lik = -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - sse / (2.0 * sigma2);
    let log_prior = -1.5 * (2.0 * std::f64::consts::PI * tau2).ln()
        - (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) / (2.0 * tau2);
    log_lik + log_prior
}

fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

fn find_mode(
    elements: &[(f64, f64, f64)],
    center: (f64, f64),
    sigma2: f64,
    tau2: f64,
) -> [f64; 3] {
    let zmax = elements
        .iter()
        .map(|e| e.2.abs())
        .fold(0.0f64, f64::max);
    let span = 10.0 * tau2.sqrt() + 10.0 * zmax + 10.0;
    let mut u = [0.0f64; 3];
    for _ in 0..60 {
        let before = u;
        for axis in 0..3 {
            let best = golden_section(
                |v| {
                    let mut trial = u;
                    trial[axis] = v;
                    log_integrand(trial, elements, center, sigma2, tau2)
                },
                u[axis] - span,
                u[axis] + span,
                1e-11,
            );
            u[axis] = best;
        }
        let delta: f64 = (0..3).map(|i| (u[i] - before[i]).abs()).sum();
        if delta < 1e-10 {
            break;
        }
    }
    u
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    inv
}

/// Independent evaluation of log ∫ p(z | u) p(u) du by tensor-product
/// Simpson quadrature around the numerically located mode.
pub fn quadrature_log_evidence(
    elements: &[(f64, f64, f64)],
    center: (f64, f64),
    sigma2: f64,
    tau2: f64,
    points_per_axis: usize,
) -> f64 {
    assert!(points_per_axis >= 21 && points_per_axis % 2 == 1);
    let mode = find_mode(elements, center, sigma2, tau2);
    let f_mode = log_integrand(mode, elements, center, sigma2, tau2);

    // Hessian of -log f by central second differences
    let h = 1e-4;
    let mut hess = [[0.0; 3]; 3];
    let f_at = |du: [f64; 3]| {
        log_integrand(
            [mode[0] + du[0], mode[1] + du[1], mode[2] + du[2]],
            elements,
            center,
            sigma2,
            tau2,
        )
    };
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = h;
        hess[i][i] = -(f_at(e) - 2.0 * f_mode + f_at([-e[0], -e[1], -e[2]])) / (h * h);
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let mut pp = [0.0; 3];
            pp[i] = h;
            pp[j] = h;
            let mut pm = [0.0; 3];
            pm[i] = h;
            pm[j] = -h;
            let mp = [-pm[0], -pm[1], -pm[2]];
            let mm = [-pp[0], -pp[1], -pp[2]];
            let v = -(f_at(pp) - f_at(pm) - f_at(mp) + f_at(mm)) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    let cov = invert3(hess);
    let sds: Vec<f64> = (0..3).map(|i| cov[i][i].max(1e-30).sqrt()).collect();

    // Simpson weights over mode ± 10 marginal sd per axis
    let half = 10.0;
    let n = points_per_axis;
    let axes: Vec<(Vec<f64>, f64)> = (0..3)
        .map(|i| {
            let lo = mode[i] - half * sds[i];
            let hi = mode[i] + half * sds[i];
            let step = (hi - lo) / (n as f64 - 1.0);
            let nodes: Vec<f64> = (0..n).map(|k| lo + step * k as f64).collect();
            (nodes, step)
        })
        .collect();
    let w = |k: usize| -> f64 {
        if k == 0 || k == n - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut sum = 0.0;
    for (i, &a) in axes[0].0.iter().enumerate() {
        for (j, &b) in axes[1].0.iter().enumerate() {
            let wij = w(i) * w(j);
            for (k, &c) in axes[2].0.iter().enumerate() {
                let lf = log_integrand([a, b, c], elements, center, sigma2, tau2);
                sum += wij * w(k) * (lf - f_mode).exp();
            }
        }
    }
    let volume_factor = axes[0].1 * axes[1].1 * axes[2].1 / 27.0;
    f_mode + (sum * volume_factor).ln()
}

/// Expansion of a segment event against a precomputed Θ enumeration.
pub fn filter_expand_t<'a>(
    include: &RegionSet,
    exclude: &RegionSet,
    theta: &'a [RegionSet],
) -> std::collections::BTreeSet<&'a RegionSet> {
    theta
        .iter()
        .filter(|t| include.is_subset(t) && exclude.is_disjoint(t))
        .collect()
}

/// Expansion of a segmentation event against a precomputed Π enumeration.
pub fn filter_expand_s<'a>(
    event: &segprob_core::segmentation_space::SEvent,
    pi: &'a [segprob_core::segmentation_space::Partition],
) -> std::collections::BTreeSet<&'a segprob_core::segmentation_space::Partition> {
    pi.iter()
        .filter(|partition| {
            event
                .finalized()
                .iter()
                .all(|f| partition.blocks().contains(f))
                && partition.block_of(event.base()).is_some_and(|block| {
                    event.include().is_subset(block) && event.exclude().is_disjoint(block)
                })
        })
        .collect()
}

/// A random connected graph on `n` regions: a random spanning tree plus each
/// remaining edge independently with probability `extra`.
pub fn random_connected_graph(n: usize, extra: f64, rng: &mut ChaCha12Rng) -> RegionGraph {
    let mut order: Vec<RegionId> = (0..n as RegionId).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.push((order[i], order[j]));
    }
    for a in 0..n as RegionId {
        for b in (a + 1)..n as RegionId {
            if rng.random_range(0.0..1.0) < extra && !edges.contains(&(a, b)) && !edges.contains(&(b, a)) {
                edges.push((a, b));
            }
        }
    }
    RegionGraph::from_edges(n, &edges).expect("generated graph is valid")
}

/// Membership oracle that answers with seeded random probabilities,
/// memoized per (base, include, region) so repeated queries agree.
pub struct RandomMembership {
    rng: ChaCha12Rng,
    memo: std::collections::HashMap<(RegionId, Vec<RegionId>, RegionId), MembershipSplit>,
}

impl RandomMembership {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
            memo: std::collections::HashMap::new(),
        }
    }
}

impl MembershipOracle for RandomMembership {
    fn split(
        &mut self,
        base: RegionId,
        include: &RegionSet,
        region: RegionId,
    ) -> Result<MembershipSplit> {
        let key = (base, include.iter().copied().collect::<Vec<_>>(), region);
        if let Some(s) = self.memo.get(&key) {
            return Ok(*s);
        }
        let p = self.rng.random_range(0.05..0.95);
        let split = MembershipSplit::from_probability(p)?;
        self.memo.insert(key, split);
        Ok(split)
    }
}

/// Deterministic pairwise membership table: p(base, region) derived by
/// hashing the pair, independent of include/exclude state.
pub struct PairTable {
    salt: u64,
}

impl PairTable {
    pub fn new(salt: u64) -> Self {
        Self { salt }
    }
}

impl MembershipOracle for PairTable {
    fn split(&mut self, base: RegionId, _: &RegionSet, region: RegionId) -> Result<MembershipSplit> {
        let h = segprob_core::math::splitmix64(
            self.salt ^ ((u64::from(base) << 32) | u64::from(region)),
        );
        let p = 0.05 + 0.9 * ((h >> 11) as f64 / (1u64 << 53) as f64);
        MembershipSplit::from_probability(p)
    }
}
