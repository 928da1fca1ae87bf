//! Command-line driver: scene generation, segment/segmentation ranking,
//! oracle validation and entropy reports, wired for reproducible runs.
//!
//! Exit codes: 0 success, 2 invalid input (including parse errors and bad
//! flags), 3 exhaustive-enumeration size caps, 4 internal consistency
//! errors, 1 anything else (I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segprob_core::evidence::DEFAULT_PRIOR_SCALE;
use segprob_core::membership::EvaluationMode;
use segprob_core::oracle::{exact_masses, prior_comparison};
use segprob_core::scene_io::{
    generate_scene, random_two_plane_scene, read_distribution_summary, read_range_image,
    region_label_map, segmentation_label_map, write_label_map, write_range_image, write_render,
    write_segment_distribution, write_segmentation_distribution, SceneSpec,
};
use segprob_core::segment_space::entropy_bits_of_logs;
use segprob_core::segmentation_space::SegmentationSearch;
use segprob_core::{
    parse_model_config, top_n_segmentations, top_n_segments, Error, EvidenceMembership,
    EvidenceModel, PlanarGaussianModel, PriorSpec, RegionGraph, Result,
};

#[derive(Parser)]
#[command(
    name = "segprob",
    version,
    about = "Probability distributions over image segments and segmentations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic pyramid range scene
    Gen(GenArgs),
    /// Rank the most probable segments containing a base region
    TopnSegments(TopnSegmentsArgs),
    /// Rank the most probable full segmentations
    TopnSegmentations(TopnSegmentationsArgs),
    /// Validate the search against the brute-force oracle on small instances
    Oracle(OracleArgs),
    /// Entropy and residual mass of a stored distribution
    Entropy(EntropyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Side length of a square scene
    #[arg(long, default_value_t = 100)]
    size: usize,
    /// Explicit width (overrides --size)
    #[arg(long)]
    width: Option<usize>,
    /// Explicit height (overrides --size)
    #[arg(long)]
    height: Option<usize>,
    /// Apex height of the pyramid
    #[arg(long, default_value_t = 12.0)]
    pyramid_height: f64,
    /// Variance of the additive Gaussian noise
    #[arg(long, default_value_t = 0.1)]
    sigma2: f64,
    /// RNG seed; identical seeds reproduce identical scenes
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pyramid footprint as a fraction of the inscribed square
    #[arg(long, default_value_t = 1.0)]
    base_extent: f64,
    /// Output range-image path
    #[arg(short, long, default_value = "scene.range")]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Noise variance of the planar model
    #[arg(long)]
    sigma2: Option<f64>,
    /// Coefficient prior variance of the planar model
    #[arg(long)]
    tau2: Option<f64>,
    /// Prior membership probability
    #[arg(long)]
    p0: Option<f64>,
    /// Model configuration file (key=value blocks; see README)
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(Vec<Box<dyn EvidenceModel>>, PriorSpec)> {
        let mut models: Vec<PlanarGaussianModel> = Vec::new();
        let mut p0 = None;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            let config = parse_model_config(&text)?;
            models = config.models;
            p0 = config.p0;
        }
        if models.is_empty() {
            models.push(PlanarGaussianModel::new(
                self.sigma2.unwrap_or(0.1),
                self.tau2.unwrap_or(DEFAULT_PRIOR_SCALE),
            )?);
        } else if self.sigma2.is_some() || self.tau2.is_some() {
            if models.len() > 1 {
                return Err(Error::Input(
                    "--sigma2/--tau2 are ambiguous when the config defines several models"
                        .into(),
                ));
            }
            let current = models[0];
            models[0] = PlanarGaussianModel::new(
                self.sigma2.unwrap_or(current.noise_variance()),
                self.tau2.unwrap_or(current.prior_scale()),
            )?;
        }
        let p0 = self.p0.or(p0).unwrap_or(0.5);
        let prior = if p0 == 0.5 {
            PriorSpec::membership_uniform()
        } else {
            PriorSpec::membership_fixed(p0)?
        };
        let boxed = models
            .into_iter()
            .map(|m| Box::new(m) as Box<dyn EvidenceModel>)
            .collect();
        Ok((boxed, prior))
    }
}

#[derive(Args)]
struct TopnSegmentsArgs {
    /// Input range-image file
    #[arg(long)]
    input: PathBuf,
    /// Square block size of the initial partition
    #[arg(long, default_value_t = 10)]
    block: usize,
    /// Base region id the segments must contain
    #[arg(long, default_value_t = 0)]
    base: u32,
    /// Number of top hypotheses whose ranking must be guaranteed
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Membership evaluation: pairwise or aggregate
    #[arg(long, default_value = "pairwise")]
    mode: String,
    #[command(flatten)]
    model: ModelArgs,
    /// Output distribution path
    #[arg(short, long, default_value = "segments.dist")]
    out: PathBuf,
}

#[derive(Args)]
struct TopnSegmentationsArgs {
    /// Input range-image file
    #[arg(long)]
    input: PathBuf,
    /// Square block size of the initial partition
    #[arg(long, default_value_t = 10)]
    block: usize,
    /// Number of top hypotheses whose ranking must be guaranteed
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Membership evaluation: pairwise or aggregate
    #[arg(long, default_value = "pairwise")]
    mode: String,
    #[command(flatten)]
    model: ModelArgs,
    /// Output distribution path
    #[arg(short, long, default_value = "segmentations.dist")]
    out: PathBuf,
    /// Directory for one label-map render per rank
    #[arg(long)]
    renders: Option<PathBuf>,
    /// Also write the initial region map here
    #[arg(long)]
    region_map: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Number of regions in the random test instances (id grid, at most 12)
    #[arg(long, default_value_t = 9)]
    regions: usize,
    /// Number of randomized trials
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Base RNG seed
    #[arg(long, default_value_t = 3)]
    seed: u64,
    /// Square block size (elements per region side)
    #[arg(long, default_value_t = 3)]
    block: usize,
    /// Coefficient prior variance used in the trials
    #[arg(long, default_value_t = 100.0)]
    tau2: f64,
}

#[derive(Args)]
struct EntropyArgs {
    /// Stored distribution file (segments or segmentations)
    #[arg(long)]
    input: PathBuf,
}

fn parse_mode(mode: &str) -> Result<EvaluationMode> {
    mode.parse::<EvaluationMode>().map_err(Error::Input)
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let spec = SceneSpec {
        width: args.width.unwrap_or(args.size),
        height: args.height.unwrap_or(args.size),
        pyramid_height: args.pyramid_height,
        noise_variance: args.sigma2,
        seed: args.seed,
        base_extent: args.base_extent,
    };
    let image = generate_scene(&spec)?;
    write_range_image(&image, &args.out)?;
    println!(
        "wrote {}x{} range image to {}",
        image.width(),
        image.height(),
        args.out.display()
    );
    Ok(())
}

fn cmd_topn_segments(args: &TopnSegmentsArgs) -> Result<()> {
    let mode = parse_mode(&args.mode)?;
    let (models, prior) = args.model.resolve()?;
    let image = read_range_image(&args.input)?;
    let graph = RegionGraph::partition_grid(&image, args.block)?;
    if args.base as usize >= graph.region_count() {
        return Err(Error::Input(format!(
            "--base {} out of range ({} regions)",
            args.base,
            graph.region_count()
        )));
    }
    let dist = top_n_segments(args.base, &graph, &image, &models, &prior, args.n, mode)?;
    write_segment_distribution(&dist, Some(args.n), &args.out)?;
    println!(
        "wrote {} of {} ground segments to {} (guaranteed: {})",
        args.n.min(dist.entries.len()),
        dist.entries.len(),
        args.out.display(),
        dist.guaranteed
    );
    Ok(())
}

fn cmd_topn_segmentations(args: &TopnSegmentationsArgs) -> Result<()> {
    let mode = parse_mode(&args.mode)?;
    let (models, prior) = args.model.resolve()?;
    let image = read_range_image(&args.input)?;
    let graph = RegionGraph::partition_grid(&image, args.block)?;
    let dist = top_n_segmentations(&graph, &image, &models, &prior, args.n, mode)?;
    write_segmentation_distribution(&dist, Some(args.n), &args.out)?;
    if let Some(path) = &args.region_map {
        write_label_map(&region_label_map(&graph)?, path)?;
    }
    if let Some(dir) = &args.renders {
        std::fs::create_dir_all(dir)?;
        for (rank, (partition, _)) in dist.entries.iter().take(args.n).enumerate() {
            let map = segmentation_label_map(&graph, partition)?;
            write_render(&map, dir.join(format!("rank_{:02}.ppm", rank + 1)))?;
        }
    }
    println!(
        "wrote {} of {} ground segmentations to {} (guaranteed: {})",
        args.n.min(dist.entries.len()),
        dist.entries.len(),
        args.out.display(),
        dist.guaranteed
    );
    Ok(())
}

fn oracle_grid_dims(regions: usize) -> Result<(usize, usize)> {
    if regions == 0 {
        return Err(Error::Input("--regions must be at least 1".into()));
    }
    if regions > 12 {
        return Err(Error::Size(format!(
            "oracle instances are capped at 12 regions, got {regions}"
        )));
    }
    let mut rows = 1;
    for r in 1..=regions {
        if regions.is_multiple_of(r) && r * r <= regions {
            rows = r;
        }
    }
    Ok((rows, regions / rows))
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let (rows, cols) = oracle_grid_dims(args.regions)?;
    let prior = PriorSpec::membership_uniform();
    let mut agreements = 0usize;
    let mut printed_table = false;
    for trial in 0..args.trials {
        let sigma2 = [0.01, 0.1, 1.0][trial % 3];
        let image =
            random_two_plane_scene(cols, rows, args.block, sigma2, args.seed + trial as u64)?;
        let graph = RegionGraph::partition_grid(&image, args.block)?;
        let models: Vec<Box<dyn EvidenceModel>> =
            vec![Box::new(PlanarGaussianModel::new(sigma2, args.tau2)?)];
        let mut oracle = EvidenceMembership::new(
            &models,
            prior,
            EvaluationMode::Pairwise,
            &graph,
            &image,
        );
        let mut search = SegmentationSearch::new(&graph, &mut oracle, usize::MAX)?;
        search.run(&graph)?;
        let dist = search.distribution(&graph);
        let exact = exact_masses(&graph, &image, &models, &prior)?;
        let mut max_rel: f64 = if dist.entries.len() == exact.hypotheses.len() {
            0.0
        } else {
            f64::INFINITY
        };
        for (partition, log_mass) in &dist.entries {
            match exact.log_mass_of(partition) {
                Some(expected) => {
                    max_rel = max_rel.max((log_mass - expected).abs() / expected.abs().max(1.0))
                }
                None => max_rel = f64::INFINITY,
            }
        }
        let agrees = max_rel <= 1e-9;
        agreements += usize::from(agrees);
        println!(
            "trial {:>3}: sigma2={sigma2:<5} |Pi|={:<6} max rel diff {max_rel:.3e} {}",
            trial + 1,
            exact.hypotheses.len(),
            if agrees { "ok" } else { "MISMATCH" }
        );
        if !printed_table {
            println!("top hypotheses of trial 1:");
            for (rank, (partition, log_mass)) in exact.hypotheses.iter().take(10).enumerate() {
                let blocks: Vec<String> = partition
                    .blocks()
                    .iter()
                    .map(|b| {
                        b.iter()
                            .map(|id| id.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect();
                println!(
                    "  rank {:>2} p={:.6e} {}",
                    rank + 1,
                    log_mass.exp(),
                    blocks.join("|")
                );
            }
            printed_table = true;
        }
    }
    println!(
        "{}/{} trials agree with the exact oracle within 1e-9",
        agreements, args.trials
    );

    let probe = random_two_plane_scene(cols, rows, args.block, 0.1, args.seed)?;
    let graph = RegionGraph::partition_grid(&probe, args.block)?;
    let cmp = prior_comparison(&graph)?;
    println!("prior comparison over |Pi| = {}:", cmp.n_segmentations);
    println!(
        "  TV(membership, segmentation-uniform) = {:.6}",
        cmp.tv_membership_vs_segmentation
    );
    println!(
        "  TV(segment-uniform, segmentation-uniform) = {:.6}",
        cmp.tv_segment_vs_segmentation
    );
    println!(
        "  TV(membership, segment-uniform) = {:.6}",
        cmp.tv_membership_vs_segment
    );
    if agreements != args.trials {
        return Err(Error::Internal(format!(
            "{} of {} oracle trials disagreed",
            args.trials - agreements,
            args.trials
        )));
    }
    Ok(())
}

fn cmd_entropy(args: &EntropyArgs) -> Result<()> {
    let summary = read_distribution_summary(&args.input)?;
    if summary.entry_log_probs.is_empty() {
        return Err(Error::Input("distribution file has no entries".into()));
    }
    let bits = entropy_bits_of_logs(&summary.entry_log_probs);
    println!("entries {}", summary.entry_log_probs.len());
    println!("entropy_bits {bits:.9}");
    println!("residual_mass {:.9e}", summary.residual_log_mass.exp());
    println!("guaranteed {}", summary.guaranteed);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::TopnSegments(args) => cmd_topn_segments(args),
        Command::TopnSegmentations(args) => cmd_topn_segmentations(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Entropy(args) => cmd_entropy(args),
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Input(_) | Error::Parse { .. } => 2,
        Error::Size(_) => 3,
        Error::Internal(_) | Error::GroundEvent | Error::RebaseRequired | Error::Exhausted => 4,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
