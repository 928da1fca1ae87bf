//! Synthetic range scenes and every file format the tools read or write.
//!
//! All text formats are ASCII with `\n` line endings and `.` decimal
//! separators. Floating-point values are written with Rust's
//! shortest-round-trip formatting, so writing and re-reading a file
//! reproduces bit-identical values.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::splitmix64;
use crate::region_graph::{ImageGrid, RegionGraph};
use crate::segment_space::RankedDistribution;
use crate::segmentation_space::Partition;

/// Parameters of the synthetic pyramid-on-a-plane range scene: a four-sided
/// pyramid whose apex sits over the image center, rising from the background
/// plane x₃ = 0.
///
/// `base_extent` scales the pyramid footprint as a fraction of the image's
/// inscribed square (1.0 = the base touches the image boundary; smaller
/// values leave visible background).
#[derive(Debug, Clone, Copy)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub pyramid_height: f64,
    pub noise_variance: f64,
    pub seed: u64,
    pub base_extent: f64,
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.width < 4 || self.height < 4 {
            return Err(Error::Input(format!(
                "scene must be at least 4x4, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.pyramid_height.is_finite() && self.pyramid_height > 0.0) {
            return Err(Error::Input(format!(
                "pyramid height must be positive, got {}",
                self.pyramid_height
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::Input(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        if !(self.base_extent.is_finite() && self.base_extent > 0.0 && self.base_extent <= 1.0) {
            return Err(Error::Input(format!(
                "base extent must lie in (0, 1], got {}",
                self.base_extent
            )));
        }
        Ok(())
    }

    fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    fn half_extent(&self) -> f64 {
        let (cx, cy) = self.center();
        cx.min(cy) * self.base_extent
    }

    /// Noiseless surface height at (row, col):
    /// max(0, H · (1 − L∞-distance from the center / half-extent)).
    pub fn surface(&self, row: usize, col: usize) -> f64 {
        let (cx, cy) = self.center();
        let d = (col as f64 - cx).abs().max((row as f64 - cy).abs());
        (self.pyramid_height * (1.0 - d / self.half_extent())).max(0.0)
    }

    /// Ground-truth surface label at (row, col): faces 0..=3 (toward −x₂,
    /// +x₂, −x₁, +x₁ in that order), 4 for the background plane. Elements on
    /// a face diagonal take the lower face index.
    pub fn surface_label(&self, row: usize, col: usize) -> u8 {
        if self.surface(row, col) <= 0.0 {
            return 4;
        }
        let (cx, cy) = self.center();
        let dx = col as f64 - cx;
        let dy = row as f64 - cy;
        if -dy >= dx.abs() {
            0
        } else if dy >= dx.abs() {
            1
        } else if -dx >= dy.abs() {
            2
        } else {
            3
        }
    }
}

/// Generates the scene: the noiseless pyramid surface plus i.i.d. zero-mean
/// Gaussian noise. Noise is drawn row-major from a ChaCha12 generator seeded
/// with `seed`; normals come from `rand_distr`'s `StandardNormal` (ziggurat).
/// Identical specs produce identical images.
pub fn generate_scene(spec: &SceneSpec) -> Result<ImageGrid> {
    spec.validate()?;
    let sigma = spec.noise_variance.sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.width * spec.height);
    for row in 0..spec.height {
        for col in 0..spec.width {
            let mut z = spec.surface(row, col);
            if sigma > 0.0 {
                z += sigma * rng.sample::<f64, _>(StandardNormal);
            }
            values.push(z);
        }
    }
    ImageGrid::new(spec.width, spec.height, values)
}

/// A small randomized test scene: the region grid is cut in two by a random
/// horizontal or vertical line and each side gets its own random plane, plus
/// noise. Deterministic per seed; used by the oracle-equivalence trials.
pub fn random_two_plane_scene(
    region_cols: usize,
    region_rows: usize,
    block_size: usize,
    noise_variance: f64,
    seed: u64,
) -> Result<ImageGrid> {
    if region_cols == 0 || region_rows == 0 || block_size == 0 {
        return Err(Error::Input("scene dimensions must be positive".into()));
    }
    let width = region_cols * block_size;
    let height = region_rows * block_size;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let vertical: bool = rng.random();
    let cut = if vertical {
        block_size * rng.random_range(1..region_cols.max(2))
    } else {
        block_size * rng.random_range(1..region_rows.max(2))
    };
    let mut plane = || {
        let a = rng.random_range(-1.0..1.0);
        let b = rng.random_range(-1.0..1.0);
        let c = rng.random_range(-5.0..5.0);
        move |row: usize, col: usize| a * col as f64 + b * row as f64 + c
    };
    let (plane_a, plane_b) = (plane(), plane());
    let sigma = noise_variance.sqrt();
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let side_b = if vertical { col >= cut } else { row >= cut };
            let mut z = if side_b {
                plane_b(row, col)
            } else {
                plane_a(row, col)
            };
            if sigma > 0.0 {
                z += sigma * rng.sample::<f64, _>(StandardNormal);
            }
            values.push(z);
        }
    }
    ImageGrid::new(width, height, values)
}

// ── Range-image text format ────────────────────────────────────────────────
// line 1: `width height`; then `height` lines of `width` z-values each.

pub fn read_range_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let text = fs::read_to_string(path)?;
    parse_range_image(&text)
}

pub fn parse_range_image(text: &str) -> Result<ImageGrid> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let mut parts = header.split_whitespace();
    let parse_dim = |token: Option<&str>, what: &str| -> Result<usize> {
        let token = token.ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("header is missing the {what}"),
        })?;
        token.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            message: format!("invalid {what} {token:?}"),
        })
    };
    let width = parse_dim(parts.next(), "width")?;
    let height = parse_dim(parts.next(), "height")?;
    if parts.next().is_some() {
        return Err(Error::Parse {
            line: 1,
            message: "header has trailing tokens".into(),
        });
    }
    let mut values = Vec::with_capacity(width * height);
    let mut rows_read = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if rows_read == height {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {height} data rows, found extra content"),
            });
        }
        let mut count = 0;
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid value {token:?}"),
            })?;
            values.push(v);
            count += 1;
        }
        if count != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} values, found {count}"),
            });
        }
        rows_read += 1;
    }
    if rows_read != height {
        return Err(Error::Parse {
            line: rows_read + 2,
            message: format!("expected {height} data rows, found {rows_read}"),
        });
    }
    ImageGrid::new(width, height, values)
}

pub fn write_range_image(image: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", image.width(), image.height());
    for row in 0..image.height() {
        for col in 0..image.width() {
            if col > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", image.value(row, col));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ── Label maps and renders ─────────────────────────────────────────────────

/// A per-element labeling of the grid (region ids or segment labels).
#[derive(Debug, Clone)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

/// Labels every element with its region id.
pub fn region_label_map(graph: &RegionGraph) -> Result<LabelMap> {
    if graph.region_map().is_empty() {
        return Err(Error::Input(
            "graph carries no element map (abstract topology)".into(),
        ));
    }
    Ok(LabelMap {
        width: graph.width(),
        height: graph.height(),
        labels: graph.region_map().to_vec(),
    })
}

/// Labels every element with its segment, identified by the segment's lowest
/// region id.
pub fn segmentation_label_map(graph: &RegionGraph, partition: &Partition) -> Result<LabelMap> {
    let mut region_label = vec![u32::MAX; graph.region_count()];
    for block in partition.blocks() {
        let label = *block.iter().next().ok_or_else(|| {
            Error::Input("segmentation contains an empty segment".into())
        })?;
        for &r in block {
            if r as usize >= region_label.len() {
                return Err(Error::Input(format!("region id {r} out of range")));
            }
            region_label[r as usize] = label;
        }
    }
    if region_label.contains(&u32::MAX) {
        return Err(Error::Input("segmentation does not cover every region".into()));
    }
    let base = region_label_map(graph)?;
    Ok(LabelMap {
        width: base.width,
        height: base.height,
        labels: base.labels.iter().map(|&r| region_label[r as usize]).collect(),
    })
}

/// Region-map text format: line 1 `width height`, then row-major labels, one
/// row per line.
pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", map.width, map.height);
    for row in 0..map.height {
        for col in 0..map.width {
            if col > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", map.labels[row * map.width + col]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Deterministic label color: the low 24 bits of splitmix64(label).
pub fn label_color(label: u32) -> [u8; 3] {
    let h = splitmix64(u64::from(label));
    [(h >> 16) as u8, (h >> 8) as u8, h as u8]
}

/// Renders a label map as a binary P6 portable pixmap, one distinct color
/// per label.
pub fn write_render(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write!(file, "P6\n{} {}\n255\n", map.width, map.height)?;
    let mut bytes = Vec::with_capacity(map.labels.len() * 3);
    for &label in &map.labels {
        bytes.extend_from_slice(&label_color(label));
    }
    file.write_all(&bytes)?;
    Ok(())
}

// ── Ranked-distribution text formats ───────────────────────────────────────
// entry line: `rank log2prob payload`; footers `residual_log2 v` and
// `guaranteed true|false`. Segment payloads are comma-separated region ids;
// segmentation payloads separate segments with `|`.

fn format_log2(value: f64) -> String {
    if value == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{:.9}", value / std::f64::consts::LN_2)
    }
}

fn write_distribution<H>(
    dist: &RankedDistribution<H>,
    max_entries: Option<usize>,
    payload: impl Fn(&H) -> String,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    let limit = max_entries.unwrap_or(usize::MAX);
    for (rank, (hypothesis, log_prob)) in dist.entries.iter().take(limit).enumerate() {
        let _ = writeln!(
            out,
            "{} {} {}",
            rank + 1,
            format_log2(*log_prob),
            payload(hypothesis)
        );
    }
    let _ = writeln!(out, "residual_log2 {}", format_log2(dist.residual_log_mass));
    let _ = writeln!(out, "guaranteed {}", dist.guaranteed);
    fs::write(path, out)?;
    Ok(())
}

fn segment_payload(segment: &crate::region_graph::RegionSet) -> String {
    segment
        .iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Segment distribution: one line per entry with rank, log₂ probability and
/// the comma-separated region ids of the segment.
pub fn write_segment_distribution(
    dist: &RankedDistribution<crate::region_graph::RegionSet>,
    max_entries: Option<usize>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_distribution(dist, max_entries, segment_payload, path.as_ref())
}

/// Segmentation distribution: per-rank records with the segmentation's
/// segments as `|`-separated region-id lists.
pub fn write_segmentation_distribution(
    dist: &RankedDistribution<Partition>,
    max_entries: Option<usize>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_distribution(
        dist,
        max_entries,
        |partition: &Partition| {
            partition
                .blocks()
                .iter()
                .map(segment_payload)
                .collect::<Vec<_>>()
                .join("|")
        },
        path.as_ref(),
    )
}

/// The numeric content of a stored distribution; enough to recompute entropy
/// and residual mass without interpreting the payloads.
#[derive(Debug, Clone)]
pub struct DistributionSummary {
    /// Natural-log probabilities of the stored entries, in file order.
    pub entry_log_probs: Vec<f64>,
    pub residual_log_mass: f64,
    pub guaranteed: bool,
}

/// Reads back either distribution format.
pub fn read_distribution_summary(path: impl AsRef<Path>) -> Result<DistributionSummary> {
    let text = fs::read_to_string(path)?;
    let mut entry_log_probs = Vec::new();
    let mut residual = None;
    let mut guaranteed = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let first = parts.next().expect("non-empty line");
        let parse_log2 = |token: Option<&str>| -> Result<f64> {
            let token = token.ok_or_else(|| Error::Parse {
                line: line_no,
                message: "missing log2 probability".into(),
            })?;
            if token == "-inf" {
                return Ok(f64::NEG_INFINITY);
            }
            token
                .parse::<f64>()
                .map(|v| v * std::f64::consts::LN_2)
                .map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid log2 probability {token:?}"),
                })
        };
        match first {
            "residual_log2" => residual = Some(parse_log2(parts.next())?),
            "guaranteed" => {
                guaranteed = Some(match parts.next() {
                    Some("true") => true,
                    Some("false") => false,
                    other => {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("invalid guaranteed flag {other:?}"),
                        })
                    }
                })
            }
            rank => {
                rank.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("expected an entry rank or footer key, got {rank:?}"),
                })?;
                entry_log_probs.push(parse_log2(parts.next())?);
            }
        }
    }
    Ok(DistributionSummary {
        entry_log_probs,
        residual_log_mass: residual.ok_or(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing residual_log2 footer".into(),
        })?,
        guaranteed: guaranteed.ok_or(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing guaranteed footer".into(),
        })?,
    })
}
