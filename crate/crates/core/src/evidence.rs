//! Statistical image models: log marginal likelihoods of region data and the
//! membership probabilities that drive refinement.
//!
//! The shipped model treats a region set's observations as the vector of
//! z-values and a plane z = a·x₁ + b·x₂ + c with a zero-mean Gaussian
//! coefficient prior. The marginal law of the observations is Gaussian with
//! covariance σ²·I + τ²·A·Aᵀ; its log density is evaluated in the
//! 3-dimensional coefficient space (never materializing the n×n covariance):
//!
//!   log p(y) = −½ [ n·ln(2πσ²) + 3·ln τ² + ln det M + yᵀy/σ² − bᵀM⁻¹b/σ⁴ ]
//!
//! with M = AᵀA/σ² + I/τ² and b = Aᵀy. Design rows are centered on the
//! evaluated set's element centroid for conditioning; evidence ratios center
//! every term on the union's centroid so numerator and denominator share one
//! coordinate frame.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{fnv1a64, softplus};
use crate::region_graph::{ImageGrid, RegionGraph, RegionSet};

/// Pooled first/second-order moments of a set of image elements. Merging is
/// additive, so per-region statistics can be combined in O(1) per region.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SuffStats {
    pub n: f64,
    pub sx: f64,
    pub sy: f64,
    pub sxx: f64,
    pub syy: f64,
    pub sxy: f64,
    pub sz: f64,
    pub sxz: f64,
    pub syz: f64,
    pub szz: f64,
}

impl SuffStats {
    pub fn add_element(&mut self, x: f64, y: f64, z: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
        self.sz += z;
        self.sxz += x * z;
        self.syz += y * z;
        self.szz += z * z;
    }

    pub fn merge(&mut self, other: &SuffStats) {
        self.n += other.n;
        self.sx += other.sx;
        self.sy += other.sy;
        self.sxx += other.sxx;
        self.syy += other.syy;
        self.sxy += other.sxy;
        self.sz += other.sz;
        self.sxz += other.sxz;
        self.syz += other.syz;
        self.szz += other.szz;
    }

    /// Element centroid (x̄, ȳ).
    pub fn centroid(&self) -> (f64, f64) {
        (self.sx / self.n, self.sy / self.n)
    }

    /// Design moments for rows (x−cx, y−cy, 1): G = AᵀA, b = Aᵀy, s = yᵀy.
    pub fn centered(&self, cx: f64, cy: f64) -> DesignMoments {
        let n = self.n;
        let dxx = self.sxx - 2.0 * cx * self.sx + n * cx * cx;
        let dyy = self.syy - 2.0 * cy * self.sy + n * cy * cy;
        let dxy = self.sxy - cx * self.sy - cy * self.sx + n * cx * cy;
        let dx = self.sx - n * cx;
        let dy = self.sy - n * cy;
        let g = Matrix3::new(dxx, dxy, dx, dxy, dyy, dy, dx, dy, n);
        let b = Vector3::new(self.sxz - cx * self.sz, self.syz - cy * self.sz, self.sz);
        DesignMoments {
            g,
            b,
            s: self.szz,
            n,
        }
    }
}

/// Centered design-space products sufficient for every evidence evaluation.
#[derive(Debug, Clone)]
pub struct DesignMoments {
    pub g: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub s: f64,
    pub n: f64,
}

/// A statistical image model exposing log marginal likelihoods of pooled
/// region data. Implementations must be deterministic given the same region
/// set and data.
pub trait EvidenceModel: Send + Sync {
    /// log ∫ p(y_R | u) p(u) du for the pooled data of `regions`.
    fn log_evidence(&self, regions: &RegionSet, graph: &RegionGraph, image: &ImageGrid)
        -> Result<f64>;

    /// Same integral with design rows centered on an explicit (cx, cy); the
    /// primitive from which evidence ratios are assembled.
    fn log_evidence_at(
        &self,
        regions: &RegionSet,
        graph: &RegionGraph,
        image: &ImageGrid,
        center: (f64, f64),
    ) -> Result<f64>;

    /// log λ₁ = log evidence(a) + log evidence(b) − log evidence(a ∪ b),
    /// all three terms centered on the union's centroid.
    fn log_lambda1(
        &self,
        set_a: &RegionSet,
        set_b: &RegionSet,
        graph: &RegionGraph,
        image: &ImageGrid,
    ) -> Result<f64>;
}

/// Ratio of separate to joint marginal evidence, exponentiated last.
pub fn lambda1(
    model: &dyn EvidenceModel,
    set_a: &RegionSet,
    set_b: &RegionSet,
    graph: &RegionGraph,
    image: &ImageGrid,
) -> Result<f64> {
    Ok(model.log_lambda1(set_a, set_b, graph, image)?.exp())
}

/// Planar surface model: z = a·x₁ + b·x₂ + c observed under zero-mean
/// Gaussian noise, with an independent zero-mean Gaussian prior on (a, b, c).
#[derive(Debug, Clone, Copy)]
pub struct PlanarGaussianModel {
    noise_variance: f64,
    prior_scale: f64,
}

impl PlanarGaussianModel {
    pub fn new(noise_variance: f64, prior_scale: f64) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(Error::Input(format!(
                "noise variance must be positive and finite, got {noise_variance}"
            )));
        }
        if !(prior_scale.is_finite() && prior_scale > 0.0) {
            return Err(Error::Input(format!(
                "prior scale must be positive and finite, got {prior_scale}"
            )));
        }
        Ok(Self {
            noise_variance,
            prior_scale,
        })
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn prior_scale(&self) -> f64 {
        self.prior_scale
    }

    /// Closed-form log evidence from centered design moments.
    pub fn log_evidence_from_moments(&self, m: &DesignMoments) -> Result<f64> {
        let s2 = self.noise_variance;
        let t2 = self.prior_scale;
        let precision = m.g / s2 + Matrix3::identity() / t2;
        let chol = precision.cholesky().ok_or_else(|| {
            Error::Internal("posterior precision is not positive definite".into())
        })?;
        let l = chol.l();
        let logdet = 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln() + l[(2, 2)].ln());
        let v = chol.solve(&m.b);
        let quad = m.s / s2 - m.b.dot(&v) / (s2 * s2);
        Ok(-0.5
            * (m.n * (2.0 * std::f64::consts::PI).ln()
                + m.n * s2.ln()
                + 3.0 * t2.ln()
                + logdet
                + quad))
    }

    /// Monte-Carlo estimate of the log evidence with a delta-method standard
    /// error of the log estimate. Coefficients are drawn from the prior with
    /// a ChaCha12 generator keyed by `seed` on a stream derived from the
    /// FNV-1a hash of the region-id set, so concurrent calls never share
    /// generator state and a fixed seed reproduces bit-identical output.
    pub fn mc_log_evidence(
        &self,
        regions: &RegionSet,
        graph: &RegionGraph,
        image: &ImageGrid,
        sample_count: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let stats = pooled_stats(regions, graph, image)?;
        let center = stats.centroid();
        self.mc_log_evidence_at(regions, graph, image, center, sample_count, seed)
    }

    /// [`PlanarGaussianModel::mc_log_evidence`] with explicit design-row
    /// centering, for cross-checking evidence ratios term by term.
    pub fn mc_log_evidence_at(
        &self,
        regions: &RegionSet,
        graph: &RegionGraph,
        image: &ImageGrid,
        center: (f64, f64),
        sample_count: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        if sample_count < 2 {
            return Err(Error::Input(format!(
                "sample count must be at least 2, got {sample_count}"
            )));
        }
        let stats = pooled_stats(regions, graph, image)?;
        let m = stats.centered(center.0, center.1);
        let s2 = self.noise_variance;
        let tau = self.prior_scale.sqrt();
        let ll_base = -0.5 * m.n * (2.0 * std::f64::consts::PI * s2).ln();

        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a64(regions.iter().copied()));
        let mut lls = Vec::with_capacity(sample_count);
        for _ in 0..sample_count {
            let u = Vector3::new(
                tau * rng.sample::<f64, _>(StandardNormal),
                tau * rng.sample::<f64, _>(StandardNormal),
                tau * rng.sample::<f64, _>(StandardNormal),
            );
            let sse = m.s - 2.0 * u.dot(&m.b) + u.dot(&(m.g * u));
            lls.push(ll_base - sse / (2.0 * s2));
        }
        let max = lls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = lls.iter().map(|ll| (ll - max).exp()).collect();
        let mean: f64 = weights.iter().sum::<f64>() / sample_count as f64;
        let var: f64 = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>()
            / (sample_count as f64 - 1.0);
        let estimate = max + mean.ln();
        let se = var.sqrt() / ((sample_count as f64).sqrt() * mean);
        Ok((estimate, se))
    }
}

/// Pools the per-element observations of a region set into moments.
pub fn pooled_stats(
    regions: &RegionSet,
    graph: &RegionGraph,
    image: &ImageGrid,
) -> Result<SuffStats> {
    if regions.is_empty() {
        return Err(Error::Input("evidence requires a non-empty region set".into()));
    }
    if let Some(&id) = regions.iter().next_back() {
        if id as usize >= graph.region_count() {
            return Err(Error::Input(format!("region id {id} out of range")));
        }
    }
    let mut stats = SuffStats::default();
    for &id in regions {
        for &(r, c) in graph.region(id).elements() {
            if r >= image.height() || c >= image.width() {
                return Err(Error::Input(format!(
                    "region {id} element ({r}, {c}) lies outside the image"
                )));
            }
            let z = image.value(r, c);
            if !z.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite observation at element ({r}, {c})"
                )));
            }
            stats.add_element(c as f64, r as f64, z);
        }
    }
    Ok(stats)
}

impl EvidenceModel for PlanarGaussianModel {
    fn log_evidence(
        &self,
        regions: &RegionSet,
        graph: &RegionGraph,
        image: &ImageGrid,
    ) -> Result<f64> {
        let stats = pooled_stats(regions, graph, image)?;
        let (cx, cy) = stats.centroid();
        self.log_evidence_from_moments(&stats.centered(cx, cy))
    }

    fn log_evidence_at(
        &self,
        regions: &RegionSet,
        graph: &RegionGraph,
        image: &ImageGrid,
        center: (f64, f64),
    ) -> Result<f64> {
        let stats = pooled_stats(regions, graph, image)?;
        self.log_evidence_from_moments(&stats.centered(center.0, center.1))
    }

    fn log_lambda1(
        &self,
        set_a: &RegionSet,
        set_b: &RegionSet,
        graph: &RegionGraph,
        image: &ImageGrid,
    ) -> Result<f64> {
        if !set_a.is_disjoint(set_b) {
            return Err(Error::Input("evidence ratio requires disjoint region sets".into()));
        }
        let stats_a = pooled_stats(set_a, graph, image)?;
        let stats_b = pooled_stats(set_b, graph, image)?;
        let mut union = stats_a;
        union.merge(&stats_b);
        let (cx, cy) = union.centroid();
        let la = self.log_evidence_from_moments(&stats_a.centered(cx, cy))?;
        let lb = self.log_evidence_from_moments(&stats_b.centered(cx, cy))?;
        let lu = self.log_evidence_from_moments(&union.centered(cx, cy))?;
        Ok(la + lb - lu)
    }
}

/// Prior membership probability P₀ and how it was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorMode {
    /// Every refinement splits its event's prior mass evenly (P₀ = ½).
    MembershipUniform,
    /// A fixed, user-supplied P₀.
    MembershipFixed,
}

#[derive(Debug, Clone, Copy)]
pub struct PriorSpec {
    mode: PriorMode,
    p0: f64,
}

impl PriorSpec {
    pub fn membership_uniform() -> Self {
        Self {
            mode: PriorMode::MembershipUniform,
            p0: 0.5,
        }
    }

    pub fn membership_fixed(p0: f64) -> Result<Self> {
        if !(p0.is_finite() && p0 > 0.0 && p0 < 1.0) {
            return Err(Error::Input(format!(
                "prior membership probability must lie in (0, 1), got {p0}"
            )));
        }
        Ok(Self {
            mode: PriorMode::MembershipFixed,
            p0,
        })
    }

    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// log λ₀ = log((1 − P₀)/P₀).
    pub fn log_lambda0(&self) -> f64 {
        (-self.p0).ln_1p() - self.p0.ln()
    }
}

/// A refinement's membership decision in log space: log P_I and log (1 − P_I).
/// Carrying both keeps event masses exact even when P_I saturates in linear
/// double precision.
#[derive(Debug, Clone, Copy)]
pub struct MembershipSplit {
    pub log_include: f64,
    pub log_exclude: f64,
}

impl MembershipSplit {
    /// Split from a plain probability in (0, 1).
    pub fn from_probability(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0 && p < 1.0) {
            return Err(Error::Input(format!(
                "membership probability must lie in (0, 1), got {p}"
            )));
        }
        Ok(Self {
            log_include: p.ln(),
            log_exclude: (-p).ln_1p(),
        })
    }

    /// Split from total log odds L = log λ₀ + Σ log λₗ against inclusion:
    /// P_I = 1 / (1 + e^L).
    pub fn from_log_odds(log_odds: f64) -> Self {
        let sp = softplus(log_odds);
        Self {
            log_include: -sp,
            log_exclude: log_odds - sp,
        }
    }

    /// P_I as a plain probability, clamped into the open interval.
    pub fn p_include(&self) -> f64 {
        self.log_include
            .exp()
            .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }
}

fn check_lambdas(lambda1_values: &[f64]) -> Result<()> {
    if lambda1_values.is_empty() {
        return Err(Error::Input("at least one evidence ratio is required".into()));
    }
    for &l in lambda1_values {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Input(format!(
                "evidence ratios must be positive and finite, got {l}"
            )));
        }
    }
    Ok(())
}

/// Posterior membership probability 1 / (1 + λ₀ ∏ₗ λₗ) for one or more
/// independent models, accumulated in log space. Result lies in (0, 1).
pub fn membership_probability(prior: &PriorSpec, lambda1_values: &[f64]) -> Result<f64> {
    check_lambdas(lambda1_values)?;
    let log_odds = prior.log_lambda0() + lambda1_values.iter().map(|l| l.ln()).sum::<f64>();
    Ok(MembershipSplit::from_log_odds(log_odds).p_include())
}

/// Log-space variant taking log λₗ values directly; used by the searches so
/// extreme evidence never leaves the log domain.
pub fn membership_split(prior: &PriorSpec, log_lambda1_values: &[f64]) -> Result<MembershipSplit> {
    if log_lambda1_values.is_empty() {
        return Err(Error::Input("at least one evidence ratio is required".into()));
    }
    for &l in log_lambda1_values {
        if l.is_nan() {
            return Err(Error::Input("evidence ratio is NaN".into()));
        }
    }
    let log_odds = prior.log_lambda0() + log_lambda1_values.iter().sum::<f64>();
    Ok(MembershipSplit::from_log_odds(log_odds))
}

/// One plane model per `model=planar` block plus the shared prior, parsed
/// from the `key=value` configuration grammar.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub models: Vec<PlanarGaussianModel>,
    pub p0: Option<f64>,
}

/// Parses a model configuration. Blocks start at each `model=planar` line;
/// `sigma2` and `tau2` apply to the current block, `p0` is global. Blank
/// lines and `#` comments are ignored.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    struct Block {
        sigma2: Option<f64>,
        tau2: Option<f64>,
        line: usize,
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut p0 = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected key=value, got {line:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid number {v:?} for {key}"),
            })
        };
        match key {
            "model" => {
                if value != "planar" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown model {value:?} (expected \"planar\")"),
                    });
                }
                blocks.push(Block {
                    sigma2: None,
                    tau2: None,
                    line: line_no,
                });
            }
            "sigma2" | "tau2" => {
                let v = parse_f64(value)?;
                let Some(block) = blocks.last_mut() else {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("{key} appears before any model= line"),
                    });
                };
                if key == "sigma2" {
                    block.sigma2 = Some(v);
                } else {
                    block.tau2 = Some(v);
                }
            }
            "p0" => p0 = Some(parse_f64(value)?),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown key {key:?}"),
                });
            }
        }
    }
    let mut models = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let sigma2 = block.sigma2.ok_or_else(|| Error::Parse {
            line: block.line,
            message: "model block is missing sigma2".into(),
        })?;
        let tau2 = block.tau2.unwrap_or(DEFAULT_PRIOR_SCALE);
        models.push(PlanarGaussianModel::new(sigma2, tau2)?);
    }
    Ok(ModelConfig { models, p0 })
}

/// Default coefficient prior variance τ²; weak enough to be data-dominated.
pub const DEFAULT_PRIOR_SCALE: f64 = 1e4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region_graph::path_graph;

    fn single_pixel_setup(z: f64) -> (RegionGraph, ImageGrid) {
        let image = ImageGrid::new(1, 1, vec![z]).unwrap();
        let graph = RegionGraph::partition_grid(&image, 1).unwrap();
        (graph, image)
    }

    #[test]
    fn single_element_zero_matches_standard_normal_as_prior_vanishes() {
        let (graph, image) = single_pixel_setup(0.0);
        let model = PlanarGaussianModel::new(1.0, 1e-12).unwrap();
        let le = model.log_evidence(&[0].into(), &graph, &image).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((le - expected).abs() < 1e-9, "got {le}, want {expected}");
    }

    #[test]
    fn single_element_is_one_dimensional_gaussian() {
        for &(v, s2, t2) in &[(0.7, 0.3, 2.0), (-2.0, 1.5, 10.0), (4.0, 0.1, 1e4)] {
            let (graph, image) = single_pixel_setup(v);
            let model = PlanarGaussianModel::new(s2, t2).unwrap();
            let le = model.log_evidence(&[0].into(), &graph, &image).unwrap();
            let var = s2 + t2;
            let expected = -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + v * v / var);
            assert!((le - expected).abs() < 1e-10, "got {le}, want {expected}");
        }
    }

    #[test]
    fn empty_region_set_is_input_error() {
        let (graph, image) = single_pixel_setup(0.0);
        let model = PlanarGaussianModel::new(1.0, 1.0).unwrap();
        assert!(matches!(
            model.log_evidence(&RegionSet::new(), &graph, &image),
            Err(Error::Input(_))
        ));
    }

    fn two_block_setup(za: impl Fn(usize, usize) -> f64, zb: impl Fn(usize, usize) -> f64) -> (RegionGraph, ImageGrid) {
        // 6x3 image, two 3x3 blocks side by side
        let mut values = vec![0.0; 18];
        for r in 0..3 {
            for c in 0..3 {
                values[r * 6 + c] = za(r, c);
                values[r * 6 + c + 3] = zb(r, c + 3);
            }
        }
        let image = ImageGrid::new(6, 3, values).unwrap();
        let graph = RegionGraph::partition_grid(&image, 3).unwrap();
        (graph, image)
    }

    #[test]
    fn identical_plane_data_favors_merging() {
        let plane = |_r: usize, c: usize| 1.0 + 0.1 * c as f64;
        let (graph, image) = two_block_setup(plane, plane);
        let model = PlanarGaussianModel::new(0.01, 100.0).unwrap();
        let l1 = lambda1(&model, &[0].into(), &[1].into(), &graph, &image).unwrap();
        assert!(l1 < 1.0, "lambda1 = {l1}");
    }

    #[test]
    fn distant_parallel_planes_disfavor_merging() {
        let s2 = 0.01f64;
        let gap = 100.0 * s2.sqrt();
        let (graph, image) = two_block_setup(|_, c| 0.1 * c as f64, move |_, c| 0.1 * c as f64 + gap);
        let model = PlanarGaussianModel::new(s2, 100.0).unwrap();
        let log_l1 = model
            .log_lambda1(&[0].into(), &[1].into(), &graph, &image)
            .unwrap();
        assert!(log_l1 > 100.0, "log lambda1 = {log_l1}");
    }

    #[test]
    fn huge_noise_washes_lambda1_to_one() {
        let (graph, image) = two_block_setup(|_, c| 0.5 * c as f64, |_, c| -0.5 * c as f64 + 5.0);
        let model = PlanarGaussianModel::new(1e12, 100.0).unwrap();
        let l1 = lambda1(&model, &[0].into(), &[1].into(), &graph, &image).unwrap();
        assert!((l1 - 1.0).abs() < 1e-3, "lambda1 = {l1}");
    }

    #[test]
    fn lambda1_rejects_overlap() {
        let (graph, image) = two_block_setup(|_, _| 0.0, |_, _| 0.0);
        let model = PlanarGaussianModel::new(1.0, 1.0).unwrap();
        assert!(matches!(
            model.log_lambda1(&[0].into(), &[0, 1].into(), &graph, &image),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn prior_collapse_factorizes_evidence() {
        let (graph, image) = two_block_setup(|r, c| 0.3 * r as f64 - 0.2 * c as f64, |r, c| 0.1 * (r + c) as f64);
        let model = PlanarGaussianModel::new(0.5, 1e-10).unwrap();
        let la = model.log_evidence(&[0].into(), &graph, &image).unwrap();
        let lb = model.log_evidence(&[1].into(), &graph, &image).unwrap();
        let lu = model.log_evidence(&[0, 1].into(), &graph, &image).unwrap();
        assert!((lu - (la + lb)).abs() < 1e-6, "gap {}", lu - la - lb);
    }

    #[test]
    fn membership_trivia() {
        let prior = PriorSpec::membership_uniform();
        assert!((membership_probability(&prior, &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((membership_probability(&prior, &[2.0, 2.0]).unwrap() - 0.2).abs() < 1e-15);
        assert!(membership_probability(&prior, &[1e-300]).unwrap() > 1.0 - 1e-9);
        assert!(membership_probability(&prior, &[1e300]).unwrap() < 1e-9);
        // result stays inside the open interval even under saturation
        let p = membership_probability(&prior, &[1e-308]).unwrap();
        assert!(p < 1.0);
        let p = membership_probability(&prior, &[f64::MAX]).unwrap();
        assert!(p > 0.0);
    }

    #[test]
    fn membership_rejects_bad_lambdas() {
        let prior = PriorSpec::membership_uniform();
        assert!(membership_probability(&prior, &[]).is_err());
        assert!(membership_probability(&prior, &[0.0]).is_err());
        assert!(membership_probability(&prior, &[-1.0]).is_err());
        assert!(membership_probability(&prior, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn membership_strictly_decreasing_in_each_lambda() {
        let prior = PriorSpec::membership_fixed(0.3).unwrap();
        let mut prev = f64::INFINITY;
        for l in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let p = membership_probability(&prior, &[l, 1.5]).unwrap();
            assert!(p < prev);
            prev = p;
        }
        // and decreasing in lambda0 (increasing p0 raises the probability)
        let lo = membership_probability(&PriorSpec::membership_fixed(0.2).unwrap(), &[1.0]).unwrap();
        let hi = membership_probability(&PriorSpec::membership_fixed(0.8).unwrap(), &[1.0]).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn split_probability_mass_is_conserved() {
        for odds in [-700.0, -3.0, 0.0, 2.5, 500.0] {
            let split = MembershipSplit::from_log_odds(odds);
            let total = split.log_include.exp() + split.log_exclude.exp();
            assert!((total - 1.0).abs() < 1e-12, "odds {odds}: total {total}");
        }
    }

    #[test]
    fn mc_is_deterministic_per_seed_and_tightens_with_samples() {
        let (graph, image) = two_block_setup(|_, c| 0.2 * c as f64, |_, c| 0.2 * c as f64);
        let model = PlanarGaussianModel::new(1.0, 1.0).unwrap();
        let set: RegionSet = [0, 1].into();
        let a = model.mc_log_evidence(&set, &graph, &image, 2000, 42).unwrap();
        let b = model.mc_log_evidence(&set, &graph, &image, 2000, 42).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        let coarse = model.mc_log_evidence(&set, &graph, &image, 2, 7).unwrap();
        let fine = model.mc_log_evidence(&set, &graph, &image, 200_000, 7).unwrap();
        assert!(fine.1 < coarse.1);
        assert!(matches!(
            model.mc_log_evidence(&set, &graph, &image, 1, 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn mc_streams_are_isolated_per_region_set() {
        let (graph, image) = two_block_setup(|_, _| 1.0, |_, _| 1.0);
        let model = PlanarGaussianModel::new(1.0, 1.0).unwrap();
        let a = model.mc_log_evidence(&[0].into(), &graph, &image, 100, 3).unwrap();
        let b = model.mc_log_evidence(&[1].into(), &graph, &image, 100, 3).unwrap();
        // identical data, distinct streams: estimates differ
        assert_ne!(a.0.to_bits(), b.0.to_bits());
    }

    #[test]
    fn lambda1_consistent_with_centered_evidence_calls() {
        let (graph, image) = two_block_setup(|r, c| 0.3 * r as f64 + 0.1 * c as f64, |_, c| 0.7 * c as f64);
        let model = PlanarGaussianModel::new(0.2, 50.0).unwrap();
        let a: RegionSet = [0].into();
        let b: RegionSet = [1].into();
        let mut u = pooled_stats(&a, &graph, &image).unwrap();
        u.merge(&pooled_stats(&b, &graph, &image).unwrap());
        let center = u.centroid();
        let la = model.log_evidence_at(&a, &graph, &image, center).unwrap();
        let lb = model.log_evidence_at(&b, &graph, &image, center).unwrap();
        let lu = model
            .log_evidence_at(&[0, 1].into(), &graph, &image, center)
            .unwrap();
        let direct = model.log_lambda1(&a, &b, &graph, &image).unwrap();
        let assembled = la + lb - lu;
        let rel = (direct - assembled).abs() / direct.abs().max(1.0);
        assert!(rel < 1e-12, "rel diff {rel}");
    }

    #[test]
    fn parse_config_multiple_blocks() {
        let cfg = parse_model_config(
            "# two models\nmodel=planar\nsigma2=0.1\ntau2=100\n\nmodel=planar\nsigma2=0.5\np0=0.4\n",
        )
        .unwrap();
        assert_eq!(cfg.models.len(), 2);
        assert_eq!(cfg.models[0].noise_variance(), 0.1);
        assert_eq!(cfg.models[0].prior_scale(), 100.0);
        assert_eq!(cfg.models[1].prior_scale(), DEFAULT_PRIOR_SCALE);
        assert_eq!(cfg.p0, Some(0.4));
    }

    #[test]
    fn parse_config_errors_carry_line_numbers() {
        match parse_model_config("model=planar\nsigma2=abc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_model_config("sigma2=0.1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_model_config("model=quadric\n").is_err());
        assert!(parse_model_config("bogus=1\n").is_err());
    }

    #[test]
    fn abstract_graph_elements_reject_evidence_on_missing_image() {
        let graph = path_graph(3);
        let image = ImageGrid::new(1, 1, vec![0.0]).unwrap();
        let model = PlanarGaussianModel::new(1.0, 1.0).unwrap();
        assert!(model.log_evidence(&[2].into(), &graph, &image).is_err());
    }
}
