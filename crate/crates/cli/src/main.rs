use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use srcsel::augment::{materialize, plan_with_ops, AugmentConfig};
use srcsel::cache::{content_hash, SignatureCache};
use srcsel::dataset::{class_counts, label_set, load_manifest, save_manifest, DatasetManifest};
use srcsel::report::{ScoreReport, SelectionEntry};
use srcsel::scoring::{score_matrix, select_source, ScoreMatrix, ScoredDataset};
use srcsel::signature::{compute_dataset_signature, select_k_for_manifest, DatasetSignature, SignatureOptions};
use srcsel::subset::{filter_subset, SubsetPolicy};

/// Exit status when a target has no non-degenerate source.
const NO_VALID_SOURCE: u8 = 2;

#[derive(Parser, Debug)]
#[command(author, version, about = "Pick a transfer-learning source dataset by color EMD, label overlap and class balance")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute (or reuse cached) color signatures. K is chosen on the first
    /// manifest unless forced with --k.
    Signature {
        /// Dataset manifests; the first one is the target.
        #[arg(required = true)]
        manifests: Vec<PathBuf>,

        #[command(flatten)]
        sig: SignatureArgs,
    },
    /// Score source datasets against a target and recommend one.
    Score {
        /// Target dataset manifest.
        target: PathBuf,

        /// Source dataset manifests.
        #[arg(required = true)]
        sources: Vec<PathBuf>,

        #[command(flatten)]
        sig: SignatureArgs,

        /// Added to the label overlap in the score denominator.
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,

        /// Score every dataset against every other one.
        #[arg(long)]
        all_pairs: bool,

        /// Format of the report printed on standard output.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,

        /// Directory to write scores.csv and scores.json into.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Restrict a source dataset to the target's label space.
    Subset {
        /// Source dataset manifest.
        source: PathBuf,

        /// Target dataset manifest whose labels are kept.
        #[arg(long)]
        target: PathBuf,

        #[arg(long, value_enum, default_value_t = Policy::Strict)]
        policy: Policy,

        /// Output manifest path.
        #[arg(long, short)]
        out: PathBuf,

        /// Removal report path [default: next to the output, `.report.json`]
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rebalance class counts by undersampling and transformed copies.
    Augment {
        /// Dataset manifest.
        manifest: PathBuf,

        /// Output directory for manifest.json, plan.json and images/.
        #[arg(long, short)]
        out_dir: PathBuf,

        /// JSON file with min_count, max_count, seed and allowed_ops.
        #[arg(long)]
        config: Option<PathBuf>,

        /// Lower class-count bound [default: median count]
        #[arg(long)]
        min_count: Option<u64>,

        /// Upper class-count bound [default: 3 x median count]
        #[arg(long)]
        max_count: Option<u64>,

        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Debug, Clone)]
struct SignatureArgs {
    /// Use this many clusters instead of choosing K by the elbow rule.
    #[arg(long)]
    k: Option<usize>,

    /// Largest K tried by the elbow rule.
    #[arg(long, default_value_t = 16)]
    k_max: usize,

    /// Relative RSS improvement below which adding a cluster stops paying off.
    #[arg(long, default_value_t = 0.05)]
    k_threshold: f64,

    /// Number of target images sampled to choose K.
    #[arg(long, default_value_t = 64)]
    k_sample: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Cluster every pixel instead of a seeded 2^18-pixel sample per image.
    #[arg(long)]
    no_subsample: bool,

    #[arg(long, env = "SRCSEL_CACHE_DIR", default_value = ".srcsel-cache")]
    cache_dir: PathBuf,

    /// Ignore and overwrite cached signatures.
    #[arg(long)]
    no_cache: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Policy {
    Strict,
    Relaxed,
}

impl From<Policy> for SubsetPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Strict => SubsetPolicy::Strict,
            Policy::Relaxed => SubsetPolicy::Relaxed,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Command::Signature { manifests, sig } => {
            let manifests = load_all(&manifests)?;
            let (k, sigs) = signatures(&manifests, &sig)?;
            println!("K = {k}");
            for (m, (s, hit)) in manifests.iter().zip(&sigs) {
                println!(
                    "{}\t{} centroids\t{}",
                    m.dataset_id,
                    s.signature.len(),
                    if *hit { "cached" } else { "computed" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Score {
            target,
            sources,
            sig,
            epsilon,
            all_pairs,
            format,
            out_dir,
        } => {
            let mut paths = vec![target];
            paths.extend(sources);
            let manifests = load_all(&paths)?;
            let (k, sigs) = signatures(&manifests, &sig)?;
            let scored: Vec<ScoredDataset> = manifests
                .iter()
                .zip(sigs)
                .map(|(m, (s, _))| ScoredDataset::new(m, s.signature))
                .collect();
            let matrix = score_matrix(&scored, epsilon)?;
            let matrix = if all_pairs { matrix } else { target_row(matrix) };
            score(&matrix, &scored, k, sig.seed, epsilon, format, out_dir.as_deref())
        }
        Command::Subset {
            source,
            target,
            policy,
            out,
            report,
        } => {
            let src = load(&source)?;
            let tgt = load(&target)?;
            let mut filtered = filter_subset(&src, &label_set(&tgt), policy.into())?;
            filtered.manifest.absolutize_paths()?;
            save_manifest(&filtered.manifest, &out)?;
            let report_path = report.unwrap_or_else(|| out.with_extension("report.json"));
            let text = serde_json::to_string_pretty(&filtered.report())? + "\n";
            std::fs::write(&report_path, &text).with_context(|| format!("writing {}", report_path.display()))?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Augment {
            manifest,
            out_dir,
            config,
            min_count,
            max_count,
            seed,
        } => {
            let m = load(&manifest)?;
            let mut cfg: AugmentConfig = match &config {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                )
                .with_context(|| format!("parsing {}", p.display()))?,
                None => AugmentConfig::default(),
            };
            cfg.min_count = min_count.or(cfg.min_count);
            cfg.max_count = max_count.or(cfg.max_count);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let (min, max) = cfg.band(&class_counts(&m));
            let plan = plan_with_ops(&m, min, max, cfg.seed, &cfg.allowed_ops)?;
            for reason in &plan.infeasible {
                log::warn!("band not met for {reason}");
            }
            let out = materialize(&plan, &m, &out_dir)?;
            save_manifest(&out, out_dir.join("manifest.json"))?;
            let plan_path = out_dir.join("plan.json");
            std::fs::write(&plan_path, serde_json::to_string_pretty(&plan)? + "\n")
                .with_context(|| format!("writing {}", plan_path.display()))?;
            println!(
                "band [{min}, {max}]: {} augmented, {} removed, {} classes outside the band",
                plan.oversample.len(),
                plan.undersample.len(),
                plan.infeasible.len()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(path: &Path) -> Result<DatasetManifest> {
    load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<DatasetManifest>> {
    paths.iter().map(|p| load(p)).collect()
}

/// Signatures for every manifest with one shared K, plus whether each came
/// from the cache.
fn signatures(manifests: &[DatasetManifest], args: &SignatureArgs) -> Result<(usize, Vec<(DatasetSignature, bool)>)> {
    let k = match args.k {
        Some(0) => bail!("--k must be at least 1"),
        Some(k) => k,
        None => {
            let report = select_k_for_manifest(&manifests[0], args.k_sample, 1, args.k_max, args.k_threshold, args.seed)
                .context("choosing K")?;
            log::info!("mean RSS per K {:?} -> K = {}", report.rss, report.chosen);
            report.chosen
        }
    };
    let mut opts = SignatureOptions::new(k, args.seed);
    if args.no_subsample {
        opts.max_pixels = None;
    }
    let cache = SignatureCache::new(&args.cache_dir);
    let mut out = Vec::with_capacity(manifests.len());
    for m in manifests {
        let hash = content_hash(m)?;
        let cached = if args.no_cache {
            None
        } else {
            cache.load(&m.dataset_id, &hash, k, args.seed, opts.max_pixels)
        };
        match cached {
            Some(sig) => out.push((sig, true)),
            None => {
                let sig = compute_dataset_signature(m, &hash, &opts)
                    .with_context(|| format!("signature of `{}`", m.dataset_id))?;
                cache.store(&sig, opts.max_pixels)?;
                out.push((sig, false));
            }
        }
    }
    Ok((k, out))
}

/// Keeps only the first dataset's row, without its self-comparison.
fn target_row(mut m: ScoreMatrix) -> ScoreMatrix {
    let mut row = m.scores.swap_remove(0);
    row.remove(0);
    let ids = m.ids.split_off(1);
    ScoreMatrix { ids, scores: vec![row] }
}

fn score(
    matrix: &ScoreMatrix,
    datasets: &[ScoredDataset],
    k: usize,
    seed: u64,
    epsilon: f64,
    format: Format,
    out_dir: Option<&Path>,
) -> Result<ExitCode> {
    let samples: HashMap<String, u64> = datasets.iter().map(|d| (d.id.clone(), d.sample_count())).collect();
    let mut selections = Vec::new();
    for row in &matrix.scores {
        let target_id = row[0].target_id.clone();
        selections.push(match select_source(&target_id, row, &samples) {
            Ok(sel) => SelectionEntry {
                target_id,
                selection: Some(sel),
                error: None,
            },
            Err(e) => SelectionEntry {
                target_id,
                selection: None,
                error: Some(e.to_string()),
            },
        });
    }
    let report = ScoreReport::from_matrix(matrix, k, seed, epsilon, selections);
    let (csv, json) = (report.to_csv()?, report.to_json()?);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("scores.csv"), &csv)?;
        std::fs::write(dir.join("scores.json"), &json)?;
    }

    let mut failed = false;
    match format {
        Format::Json => print!("{json}"),
        Format::Csv => {
            print!("{csv}");
            for row in &matrix.scores {
                let degenerate: Vec<&str> = row
                    .iter()
                    .filter(|s| s.degenerate && s.source_id != s.target_id)
                    .map(|s| s.source_id.as_str())
                    .collect();
                if !degenerate.is_empty() {
                    println!("# degenerate for {}: {}", row[0].target_id, degenerate.join(", "));
                }
            }
        }
    }
    for entry in &report.selections {
        match &entry.selection {
            Some(sel) => {
                let shortlist: Vec<String> = sel
                    .candidates
                    .iter()
                    .map(|c| format!("{} ({:.4}, {} samples)", c.source_id, c.score, c.sample_count))
                    .collect();
                if format == Format::Csv {
                    println!("selected {} for {}; shortlist: {}", sel.chosen, sel.target_id, shortlist.join(", "));
                }
            }
            None => {
                failed = true;
                eprintln!(
                    "no valid source for `{}`: {}",
                    entry.target_id,
                    entry.error.as_deref().unwrap_or("every score is degenerate")
                );
            }
        }
    }
    Ok(if failed { ExitCode::from(NO_VALID_SOURCE) } else { ExitCode::SUCCESS })
}
