use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use segbench::losses::{default_matrix, gwdl_loss_and_grad, gwdl_score, DistanceMatrix, OneHotGt};
use segbench::metrics::{evaluate_case, EvalOptions};
use segbench::report::{run_manifest, RunOptions};
use segbench::volume::raw::read_volume;
use segbench::{AsdMode, ProbVolume, Task, Taxonomy};

#[derive(Parser)]
#[command(name = "segbench", version, about = "Segmentation benchmarking: metrics, ensembles, bootstrap statistics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate every case of a manifest and write reports.
    Run {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the manifest's majority-vote tie seed.
        #[arg(long)]
        vote_seed: Option<u64>,
        /// Overrides the number of bootstrap resamples.
        #[arg(long)]
        boot_n: Option<usize>,
        /// Overrides the bootstrap seed.
        #[arg(long)]
        boot_seed: Option<u64>,
        /// Also write decorated markdown tables.
        #[arg(long)]
        markdown: bool,
    },
    /// Evaluate one prediction against one ground truth; prints CSV.
    Metrics {
        gt: PathBuf,
        pred: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Average the two directed mean distances instead of pooling.
        #[arg(long)]
        directed_asd: bool,
    },
    /// Generalized Wasserstein Dice score, loss and gradient norm.
    ///
    /// Takes one probability map per class of the distance matrix, in
    /// matrix order, followed by the ground-truth label map.
    Gwdl {
        #[arg(num_args = 2.., required = true)]
        files: Vec<PathBuf>,
        /// Distance matrix JSON; the default lesion hierarchy otherwise.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
    },
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: segbench::Error| e.to_string())
}

fn load_taxonomy(path: Option<&PathBuf>) -> Result<Taxonomy> {
    match path {
        Some(p) => Taxonomy::load(p).with_context(|| format!("loading taxonomy {}", p.display())),
        None => Ok(Taxonomy::default()),
    }
}

fn cmd_run(manifest: PathBuf, opts: RunOptions) -> Result<ExitCode> {
    let report = run_manifest(&manifest, &opts).with_context(|| format!("running {}", manifest.display()))?;
    for (id, msg) in &report.failures {
        eprintln!("case {id} failed: {msg}");
    }
    println!(
        "{} of {} cases evaluated, {} records; reports in {}",
        report.n_cases - report.failures.len(),
        report.n_cases,
        report.n_records,
        opts.out_dir.display()
    );
    Ok(if report.success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_metrics(gt: PathBuf, pred: PathBuf, task: Task, taxonomy: Option<PathBuf>, directed: bool) -> Result<()> {
    let taxonomy = load_taxonomy(taxonomy.as_ref())?;
    let gt_vol = read_volume(&gt)?.into_labels().with_context(|| format!("reading {}", gt.display()))?;
    let pred_vol = read_volume(&pred)?.into_labels().with_context(|| format!("reading {}", pred.display()))?;
    let opts = EvalOptions {
        asd_mode: if directed { AsdMode::DirectedMean } else { AsdMode::Pooled },
    };
    let rows = evaluate_case(&gt_vol, &pred_vol, &taxonomy, task, opts)?;
    println!("class,dsc,hd95_mm,asd_mm,avd_ml,sen");
    for m in rows {
        println!("{},{},{},{},{},{}", m.class, m.dsc, m.hd95, m.asd, m.avd, m.sen);
    }
    Ok(())
}

fn cmd_gwdl(mut files: Vec<PathBuf>, matrix: Option<PathBuf>, taxonomy: Option<PathBuf>) -> Result<()> {
    let gt_path = files.pop().expect("clap enforces two or more files");
    let matrix = match &matrix {
        Some(p) => DistanceMatrix::load(p).with_context(|| format!("loading matrix {}", p.display()))?,
        None => default_matrix(),
    };
    if files.len() != matrix.len() {
        bail!("{} probability maps given but the matrix has {} classes", files.len(), matrix.len());
    }
    let taxonomy = load_taxonomy(taxonomy.as_ref())?;
    let channels = files
        .iter()
        .map(|p| Ok(read_volume(p).with_context(|| format!("reading {}", p.display()))?.into_scalar()))
        .collect::<Result<Vec<_>>>()?;
    let probs = ProbVolume::from_channels(&channels)?;
    let gt_vol = read_volume(&gt_path)?.into_labels()?;
    let gt = OneHotGt::from_labels(&gt_vol, &taxonomy, &matrix)?;
    let score = gwdl_score(&probs, &gt, &matrix)?;
    let (loss, grad) = gwdl_loss_and_grad(&probs, &gt, &matrix)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("score {score}");
    println!("loss {loss}");
    println!("grad_norm {norm}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            manifest,
            out,
            vote_seed,
            boot_n,
            boot_seed,
            markdown,
        } => cmd_run(
            manifest,
            RunOptions {
                out_dir: out,
                vote_seed,
                boot_n,
                boot_seed,
                markdown,
            },
        ),
        Cmd::Metrics {
            gt,
            pred,
            task,
            taxonomy,
            directed_asd,
        } => cmd_metrics(gt, pred, task, taxonomy, directed_asd).map(|_| ExitCode::SUCCESS),
        Cmd::Gwdl { files, matrix, taxonomy } => cmd_gwdl(files, matrix, taxonomy).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
