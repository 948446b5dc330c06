use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use handrv_core::pathops::{default_epsilon, DEFAULT_EPSILON_PERCENTILE, DEFAULT_MIN_LEN};
use handrv_core::plot;
use handrv_core::synth::generate::write_trajectories;
use handrv_core::synth::{
    compare_modes, gen_hand, gen_play, precision_at_k, read_labels, BenchConfig, BenchReport,
    HandConfig, Labels, MotifLibrary, SynthConfig,
};
use handrv_core::trajdata::{write_manifest, WeightScope};
use handrv_core::{
    load_dataset, load_embeddings, read_manifest, retrieve, segment_kinematic, split_even,
    DistanceMode, Error, RetrievalManifest, RetrievalParams, Segment, Trajectory,
};

#[derive(Parser)]
#[command(
    name = "handrv",
    version,
    about = "Retrieve play-data segments that move like a hand demonstration"
)]
struct Cli {
    /// Worker threads [default: machine parallelism]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic play data plus one hand demonstration per motif
    GenSynth(GenSynthArgs),
    /// Print the segment table of a dataset
    Segment(SegmentArgs),
    /// Retrieve the top-K play segments for each hand segment
    Retrieve(RetrieveArgs),
    /// Score retrieval modes on one benchmark config and write bench-report.json
    Eval(EvalArgs),
    /// Run the default and confusable benchmark suites
    Bench(BenchArgs),
    /// Precision of a manifest against generated labels
    Score(ScoreArgs),
    /// Draw each query path with its matched spans as SVG
    ExportSvg(ExportSvgArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectories per task motif
    #[arg(long, default_value_t = SynthConfig::default().per_task)]
    per_task: usize,
    /// Number of task motifs, taken from the front of the library
    #[arg(long, default_value_t = SynthConfig::default().tasks)]
    tasks: usize,
    /// Translation applied to hand tracks, "x,y" in pixels
    #[arg(long, value_parser = parse_point, default_value = "0,0", allow_hyphen_values = true)]
    hand_offset: [f64; 2],
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentOpts {
    /// Kinematic cut threshold [default: 10th percentile of the play magnitudes]
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MIN_LEN)]
    min_len: usize,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    play: PathBuf,
    #[command(flatten)]
    seg: SegmentOpts,
    /// Split every trajectory into N equal parts instead of cutting at pauses
    #[arg(long, value_name = "N")]
    split_even: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Path,
    Embedding,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    PerQuery,
    Union,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    play: PathBuf,
    #[arg(long)]
    hand: PathBuf,
    /// Candidates kept by the visual filter
    #[arg(long = "M", default_value_t = 100)]
    m: usize,
    /// Matches kept per hand segment
    #[arg(long = "K", default_value_t = 25)]
    k: usize,
    #[command(flatten)]
    seg: SegmentOpts,
    /// Align against every play segment (ablation)
    #[arg(long, conflicts_with = "m")]
    no_visual_filter: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Path)]
    distance_mode: ModeArg,
    /// Split each hand trajectory into N equal parts
    #[arg(long, value_name = "N")]
    split_even: Option<usize>,
    /// Recorded in the manifest; retrieval itself draws no random numbers
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normalize weights per hand segment or across the whole manifest
    #[arg(long, value_enum, default_value_t = ScopeArg::PerQuery)]
    weight_scope: ScopeArg,
    /// Output directory for manifest.json
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Default,
    Confusable,
}

#[derive(Args)]
struct BenchOpts {
    /// Comma-separated seeds, at least three
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long = "K", default_value_t = 25)]
    k: usize,
    #[arg(long = "M", default_value_t = 100)]
    m: usize,
    #[arg(long)]
    per_task: Option<usize>,
}

impl BenchOpts {
    fn apply(&self, mut cfg: BenchConfig) -> BenchConfig {
        cfg.k = self.k;
        cfg.m = self.m;
        if let Some(n) = self.per_task {
            cfg.synth.per_task = n;
        }
        cfg
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum, default_value_t = Suite::Default)]
    config: Suite,
    #[command(flatten)]
    opts: BenchOpts,
    /// Output directory for bench-report.json and bench-report.svg
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    opts: BenchOpts,
    /// Also write both reports and charts into this directory
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Motif every query demonstrates [default: taken from "hand-<motif>" query ids]
    #[arg(long)]
    motif: Option<String>,
}

#[derive(Args)]
struct ExportSvgArgs {
    #[arg(long)]
    play: PathBuf,
    #[arg(long)]
    hand: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory, one overlay-<query>.svg per hand trajectory
    #[arg(short, long)]
    out: PathBuf,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts[..] {
        [x, y] => {
            let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
            Ok([p(x)?, p(y)?])
        }
        _ => Err(format!("expected \"x,y\", got {s:?}")),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn gen_synth(a: GenSynthArgs) -> Result<()> {
    let lib = MotifLibrary::standard();
    let cfg = SynthConfig {
        per_task: a.per_task,
        tasks: a.tasks,
        ..SynthConfig::default()
    };
    create_dir(&a.out)?;
    let data = gen_play(&lib, &cfg, a.seed)?;
    data.write(&a.out)?;
    let mut hand_cfg = HandConfig::for_play(&cfg);
    hand_cfg.offset = a.hand_offset;
    for motif in lib.names().take(cfg.tasks) {
        let (traj, table) = gen_hand(&lib, motif, &hand_cfg, a.seed)?;
        write_trajectories(
            &a.out,
            &format!("hand-{motif}.jsonl"),
            &[traj],
            &[Arc::new(table)],
        )?;
    }
    println!(
        "wrote {} play trajectories ({} labeled motions) and {} hand demonstrations to {}",
        data.trajectories.len(),
        data.labels.len(),
        cfg.tasks,
        a.out.display()
    );
    Ok(())
}

/// Loads a dataset and attaches embeddings to every segment whose trajectory
/// references a blob.
struct Loaded {
    trajectories: Vec<Trajectory>,
    tables: Vec<Option<Arc<handrv_core::EmbeddingTable>>>,
}

fn load(path: &Path) -> Result<Loaded> {
    let trajectories = load_dataset(path)?;
    let tables = trajectories
        .iter()
        .map(|t| {
            t.embeddings
                .as_ref()
                .map(|_| load_embeddings(t).map(Arc::new))
                .transpose()
        })
        .collect::<handrv_core::Result<_>>()?;
    Ok(Loaded {
        trajectories,
        tables,
    })
}

#[derive(Clone, Copy)]
enum Segmentation {
    Kinematic {
        epsilon: f64,
        min_len: usize,
    },
    Even {
        parts: usize,
        min_len: usize,
    },
    /// Kinematic when kinematics exist, otherwise the whole trajectory.
    HandDefault {
        epsilon: f64,
        min_len: usize,
    },
}

fn segments(data: &Loaded, how: Segmentation) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (t, table) in data.trajectories.iter().zip(&data.tables) {
        let segs = match how {
            Segmentation::Kinematic { epsilon, min_len } => segment_kinematic(t, epsilon, min_len)?,
            Segmentation::Even { parts, min_len } => split_even(t, parts, min_len)?,
            Segmentation::HandDefault { epsilon, min_len } => {
                if t.kin.is_some() {
                    segment_kinematic(t, epsilon, min_len)?
                } else {
                    split_even(t, 1, min_len.min(t.len()))?
                }
            }
        };
        out.extend(segs.into_iter().map(|s| match table {
            Some(tab) => s.with_embeddings(tab.clone()),
            None => s,
        }));
    }
    Ok(out)
}

fn resolve_epsilon(given: Option<f64>, play: &Loaded) -> Result<f64> {
    if let Some(e) = given {
        return Ok(e);
    }
    default_epsilon(&play.trajectories, DEFAULT_EPSILON_PERCENTILE).ok_or_else(|| {
        Error::MissingKinematics(
            "no play trajectory has a positive kinematic magnitude; pass --epsilon or --split-even"
                .into(),
        )
        .into()
    })
}

fn segment_cmd(a: SegmentArgs) -> Result<()> {
    let play = load(&a.play)?;
    let how = match a.split_even {
        Some(parts) => Segmentation::Even {
            parts,
            min_len: a.seg.min_len,
        },
        None => Segmentation::Kinematic {
            epsilon: resolve_epsilon(a.seg.epsilon, &play)?,
            min_len: a.seg.min_len,
        },
    };
    let segs = segments(&play, how)?;
    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
    let table = (|| -> std::io::Result<()> {
        writeln!(out, "traj_id\tstart\tend\tframes")?;
        for s in &segs {
            writeln!(out, "{}\t{}\t{}\t{}", s.traj_id, s.start, s.end, s.len())?;
        }
        out.flush()
    })();
    match table {
        // a closed downstream pipe (`| head`) is not a failure
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
        r => r.context("writing segment table")?,
    }
    eprintln!(
        "{} segments from {} trajectories",
        segs.len(),
        play.trajectories.len()
    );
    Ok(())
}

fn retrieve_cmd(a: RetrieveArgs) -> Result<()> {
    let play = load(&a.play)?;
    let hand = load(&a.hand)?;
    let epsilon = resolve_epsilon(a.seg.epsilon, &play)?;
    let params = RetrievalParams {
        m: a.m,
        k: a.k,
        use_visual_filter: !a.no_visual_filter,
        distance_mode: match a.distance_mode {
            ModeArg::Path => DistanceMode::Path,
            ModeArg::Embedding => DistanceMode::Embedding,
        },
        epsilon,
        min_len: a.seg.min_len,
        seed: a.seed,
        split_even: a.split_even,
        weight_scope: match a.weight_scope {
            ScopeArg::PerQuery => WeightScope::PerQuery,
            ScopeArg::Union => WeightScope::Union,
        },
    };
    params.validate()?;
    let play_segs = segments(
        &play,
        Segmentation::Kinematic {
            epsilon,
            min_len: a.seg.min_len,
        },
    )?;
    let hand_how = match a.split_even {
        Some(parts) => Segmentation::Even {
            parts,
            min_len: a.seg.min_len,
        },
        None => Segmentation::HandDefault {
            epsilon,
            min_len: a.seg.min_len,
        },
    };
    let hand_segs = segments(&hand, hand_how)?;
    let manifest = retrieve(&hand_segs, &play_segs, &params)?;
    manifest.validate()?;
    create_dir(&a.out)?;
    let path = a.out.join("manifest.json");
    write_manifest(&manifest, &path)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} matches for {} hand segments against {} play segments -> {}",
        manifest.matches.len(),
        hand_segs.len(),
        play_segs.len(),
        path.display()
    );
    Ok(())
}

fn suite(lib: &MotifLibrary, s: Suite) -> BenchConfig {
    match s {
        Suite::Default => BenchConfig::standard(lib),
        Suite::Confusable => BenchConfig::confusable(lib),
    }
}

fn write_report(report: &BenchReport, dir: &Path, stem: &str) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(format!("{stem}.json")), &report.to_json()?)?;
    write_file(&dir.join(format!("{stem}.svg")), &plot::bench_chart(report))
}

fn print_report(report: &BenchReport) {
    println!(
        "config {} (K = {}, seeds {:?})",
        report.cfg.name, report.cfg.k, report.seeds
    );
    for m in &report.modes {
        println!(
            "  {:<16} precision {:.3} ± {:.3}  {:.2}s",
            m.name, m.precision_mean, m.precision_std, m.wallclock_s
        );
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let lib = MotifLibrary::standard();
    let cfg = a.opts.apply(suite(&lib, a.config));
    let report = compare_modes(&lib, &cfg, &a.opts.seeds)?;
    write_report(&report, &a.out, "bench-report")?;
    print_report(&report);
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let lib = MotifLibrary::standard();
    for s in [Suite::Default, Suite::Confusable] {
        let cfg = a.opts.apply(suite(&lib, s));
        let report = compare_modes(&lib, &cfg, &a.opts.seeds)?;
        print_report(&report);
        if let Some(dir) = &a.out {
            write_report(&report, dir, &format!("bench-{}", cfg.name))?;
        }
    }
    Ok(())
}

fn score_cmd(a: ScoreArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let labels = Labels::new(&read_labels(&a.labels)?.segments);
    let motif = match a.motif {
        Some(m) => m,
        None => {
            let id = manifest.query_id.as_str();
            match id.strip_prefix("hand-") {
                Some(m) if !id.contains('+') => m.to_owned(),
                _ => bail!("cannot infer the motif from query id {id:?}; pass --motif"),
            }
        }
    };
    let p = precision_at_k(&manifest, &labels, &motif)?;
    println!("precision@{} for {motif}: {p:.4}", manifest.matches.len());
    Ok(())
}

fn export_svg_cmd(a: ExportSvgArgs) -> Result<()> {
    let play = load_dataset(&a.play)?;
    let hand = load_dataset(&a.hand)?;
    let manifest = read_manifest(&a.manifest)?;
    create_dir(&a.out)?;
    for q in &hand {
        let own = RetrievalManifest {
            matches: manifest
                .matches
                .iter()
                .filter(|m| m.query_traj_id == q.id)
                .cloned()
                .collect(),
            ..manifest.clone()
        };
        let path = a.out.join(format!("overlay-{}.svg", q.id));
        write_file(&path, &plot::overlay(q, &own, &play)?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParams("--threads must be ≥ 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Segment(a) => segment_cmd(a),
        Command::Retrieve(a) => retrieve_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::ExportSvg(a) => export_svg_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err
                .downcast_ref::<Error>()
                .is_some_and(|e| !e.is_validation());
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
