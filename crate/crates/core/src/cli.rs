//! Command-line front end.
//!
//! [`run`] parses arguments, executes one subcommand and maps the outcome
//! to an exit code: 0 success, 1 usage or configuration error, 2 data
//! error, 3 internal error. Each run that writes files also writes a
//! manifest recording the config hash, seed and input/output digests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{sha256_hex, RunConfig};
use crate::error::{Error, Result};
use crate::explain::{explain_table, summarize, write_row_attributions};
use crate::features::{
    build_dataset, extract_event_features, write_medians, FeatureParams, FeatureTable,
    InfiniteRanking, RankingVariable,
};
use crate::gbdt::{
    classification_metrics, compare_ranking_variables, format_ranking_report, format_table1, grid_search_cv,
    predict_table, train_gbdt, GbdtModel, Table1Row,
};
use crate::ingest::{
    load_match_with, segment_attack_sequences, synchronize_events, write_events, Match, TeamId, TrackedFrame,
};
use crate::render::{colormap_from_scores, prepare_frame, render_animation_svg, render_frame_svg, RenderOptions};
use crate::synth::{synthesize_match, EVENTS_FILE, TRACKING_FILE};

#[derive(Debug, Parser)]
#[command(name = "tactica", version, about = "Space scores and pass-success models from football tracking data")]
pub struct Cli {
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct MatchArgs {
    /// Tracking JSONL file.
    #[arg(long, requires = "events")]
    pub tracking: Option<PathBuf>,
    /// Event JSONL file.
    #[arg(long, requires = "tracking")]
    pub events: Option<PathBuf>,
    /// Directory holding tracking.jsonl/events.jsonl, or subdirectories that do.
    #[arg(long, conflicts_with_all = ["tracking", "events"])]
    pub matches: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InfiniteChoice {
    First,
    Last,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align event frames to the tracking data at each kickoff.
    Sync {
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        events: PathBuf,
    },
    /// Split events into attack sequences (JSON).
    Segment {
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        events: PathBuf,
    },
    /// Build the imputed pass feature table (CSV).
    Features {
        #[command(flatten)]
        input: MatchArgs,
        /// Receivers per pass; overrides the config.
        #[arg(long)]
        n: Option<usize>,
        /// Ranking variable; overrides the config.
        #[arg(long)]
        ranking: Option<RankingVariable>,
    },
    /// Grid-search hyperparameters by cross-validation and fit a model.
    Train {
        #[arg(long)]
        features: PathBuf,
    },
    /// Score a model on a feature table.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Shapley attributions for every row plus a ranked summary.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Cross-validated accuracy for each receiver-ranking variable.
    CompareRankings {
        #[command(flatten)]
        input: MatchArgs,
        #[arg(long)]
        n: Option<usize>,
        /// Where unreachable (+inf) times rank; `both` runs the comparison twice.
        #[arg(long, value_enum)]
        infinite_ranking: Option<InfiniteChoice>,
    },
    /// Draw space scores as SVG, one file per frame or one animation.
    Render {
        #[arg(long)]
        tracking: PathBuf,
        /// First frame index to draw.
        #[arg(long)]
        from: Option<i64>,
        /// Last frame index to draw (inclusive).
        #[arg(long)]
        to: Option<i64>,
        /// Team drawn as attacking; defaults to each frame's own record.
        #[arg(long)]
        team: Option<String>,
        /// Draw dominance-region boundaries.
        #[arg(long)]
        voronoi: bool,
        /// Hide score labels.
        #[arg(long)]
        no_scores: bool,
        /// Combine the frames into one animated SVG.
        #[arg(long)]
        animate: bool,
    },
    /// Generate a synthetic match with a known success rule.
    Synth,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sync { .. } => "sync",
            Command::Segment { .. } => "segment",
            Command::Features { .. } => "features",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Explain { .. } => "explain",
            Command::CompareRankings { .. } => "compare-rankings",
            Command::Render { .. } => "render",
            Command::Synth => "synth",
        }
    }
}

#[derive(Debug, Serialize)]
struct Digest {
    name: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    tool_version: &'static str,
    config_hash: String,
    seed: u64,
    inputs: Vec<Digest>,
    outputs: Vec<Digest>,
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    cv_seed: u64,
    out: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest: Option<PathBuf>,
}

impl Ctx {
    /// Output file; the manifest goes beside it as `<name>.manifest.json`.
    fn out_file(&mut self, default: &str) -> PathBuf {
        let file = self.out.clone().unwrap_or_else(|| PathBuf::from(default));
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.manifest = Some(file.with_file_name(name));
        file
    }

    /// Output directory (created); the manifest goes inside it.
    fn out_dir(&mut self, default: &str) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from(default));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.manifest = Some(dir.join("manifest.json"));
        Ok(dir)
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    fn write_text(&mut self, path: &Path, text: &str) -> Result<()> {
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
        self.output(path);
        Ok(())
    }
}

fn digest_of(p: &Path) -> Result<Digest> {
    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
    Ok(Digest {
        name: p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string()),
        sha256: sha256_hex(&bytes),
    })
}

fn write_manifest(ctx: &Ctx, command: &str, path: &Path) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: ctx.cfg.hash(),
        seed: ctx.seed,
        inputs: ctx.inputs.iter().map(|p| digest_of(p)).collect::<Result<_>>()?,
        outputs: ctx.outputs.iter().map(|p| digest_of(p)).collect::<Result<_>>()?,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_matches(input: &MatchArgs, cfg: &RunConfig, ctx: &mut Ctx) -> Result<Vec<Match>> {
    let mut pairs = Vec::new();
    match (&input.tracking, &input.events, &input.matches) {
        (Some(t), Some(e), None) => pairs.push((t.clone(), e.clone())),
        (None, None, Some(dir)) => {
            let own = (dir.join(TRACKING_FILE), dir.join(EVENTS_FILE));
            if own.0.is_file() && own.1.is_file() {
                pairs.push(own);
            } else {
                let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
                    .map_err(|e| Error::io(dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_dir())
                    .collect();
                subdirs.sort();
                for d in subdirs {
                    let pair = (d.join(TRACKING_FILE), d.join(EVENTS_FILE));
                    if pair.0.is_file() && pair.1.is_file() {
                        pairs.push(pair);
                    }
                }
            }
            if pairs.is_empty() {
                return Err(Error::Data(format!("no matches found under {}", dir.display())));
            }
        }
        _ => {
            return Err(Error::InvalidParam(
                "give either --tracking and --events, or --matches".into(),
            ))
        }
    }
    let mut matches = Vec::with_capacity(pairs.len());
    for (t, e) in pairs {
        log::info!("loading {} and {}", t.display(), e.display());
        let m = load_match_with(&t, &e, &cfg.pitch)?;
        log_warnings(&m.warnings);
        ctx.input(&t);
        ctx.input(&e);
        matches.push(m);
    }
    Ok(matches)
}

/// Log the first few warnings and a count of the rest.
fn log_warnings(warnings: &[String]) {
    const SHOWN: usize = 5;
    for w in warnings.iter().take(SHOWN) {
        log::warn!("{w}");
    }
    if warnings.len() > SHOWN {
        log::warn!("... and {} more warnings", warnings.len() - SHOWN);
    }
}

fn feature_params(cfg: &RunConfig, n: Option<usize>, ranking: Option<RankingVariable>) -> Result<FeatureParams> {
    let mut p = cfg.features;
    if let Some(n) = n {
        p.n = n;
    }
    if let Some(r) = ranking {
        p.ranking = r;
    }
    if p.n < 1 {
        return Err(Error::InvalidParam("--n must be >= 1".into()));
    }
    Ok(p)
}

fn attacking_team(frame: &TrackedFrame, team: Option<&str>) -> Result<TeamId> {
    if let Some(t) = team {
        return Ok(TeamId::new(t));
    }
    frame
        .meta
        .attacking_team
        .clone()
        .or_else(|| frame.meta.right_team.clone())
        .or_else(|| frame.teams().into_iter().next())
        .ok_or_else(|| Error::Data(format!("frame {} has no players", frame.frame_index)))
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut ctx = Ctx {
        seed: cli.seed.unwrap_or(cfg.seed),
        cv_seed: cli.seed.unwrap_or(cfg.cv.seed),
        cfg: cfg.clone(),
        out: cli.out.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        manifest: None,
    };
    if let Some(p) = &cli.config {
        ctx.input(p);
    }
    let threshold = cfg.threshold.0;
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    let mut print = |s: &str| -> Result<()> {
        stdout
            .write_all(s.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    };

    match &cli.command {
        Command::Sync { tracking, events } => {
            let m = load_match_with(tracking, events, &cfg.pitch)?;
            ctx.input(tracking);
            ctx.input(events);
            let report = synchronize_events(&m.frames, &m.events)?;
            log_warnings(&m.warnings);
            log_warnings(&report.warnings);
            let mut text = String::new();
            for (id, shift) in &report.shifts {
                text.push_str(&format!("kickoff {id}: shift {shift:+} frames\n"));
            }
            print(&text)?;
            let out = ctx.out_file("events.synced.jsonl");
            write_events(&out, &report.events)?;
            ctx.output(&out);
        }
        Command::Segment { tracking, events } => {
            let m = load_match_with(tracking, events, &cfg.pitch)?;
            ctx.input(tracking);
            ctx.input(events);
            let seg = segment_attack_sequences(&m.events, &m.frames)?;
            log_warnings(&seg.warnings);
            print(&format!(
                "{} sequences, {} dropped\n",
                seg.sequences.len(),
                seg.dropped.len()
            ))?;
            let out = ctx.out_file("sequences.json");
            let mut text = serde_json::to_string_pretty(&seg)?;
            text.push('\n');
            ctx.write_text(&out, &text)?;
        }
        Command::Features { input, n, ranking } => {
            let params = feature_params(&cfg, *n, *ranking)?;
            let matches = load_matches(input, &cfg, &mut ctx)?;
            let (table, medians) = build_dataset(&matches, &params, &cfg.pitch, &cfg.motion, &cfg.weight)?;
            let out = ctx.out_file("features.csv");
            table.write_csv(&out)?;
            ctx.output(&out);
            let sidecar = out.with_extension("medians.json");
            write_medians(&sidecar, &table.columns, &medians)?;
            ctx.output(&sidecar);
            log::info!("{} passes, {} columns", table.len(), table.n_features());
        }
        Command::Train { features } => {
            let table = FeatureTable::read_csv(features)?;
            ctx.input(features);
            let grid = cfg.grid(ctx.seed)?;
            let gs = grid_search_cv(&table, &grid, cfg.cv.k, ctx.cv_seed, threshold)?;
            let mut text = String::new();
            for (i, r) in gs.results.iter().enumerate() {
                let hp = &r.hyperparameters;
                text.push_str(&format!(
                    "{}depth={} lr={} trees={}  cv accuracy {:.4}\n",
                    if i == gs.best_index { "* " } else { "  " },
                    hp.max_depth,
                    hp.learning_rate,
                    hp.n_trees,
                    r.mean_accuracy
                ));
            }
            print(&text)?;
            let model = train_gbdt(&table, &gs.best)?;
            let out = ctx.out_file("model.json");
            model.save(&out)?;
            ctx.output(&out);
        }
        Command::Eval { model, features } => {
            let m = GbdtModel::load(model)?;
            let table = FeatureTable::read_csv(features)?;
            ctx.input(model);
            ctx.input(features);
            let probs = predict_table(&m, &table)?;
            let report = classification_metrics(&table.labels(), &probs, threshold)?;
            let mut text = report.render();
            text.push('\n');
            text.push_str(&format_table1(&[
                Table1Row::macro_averaged("model", &report),
                Table1Row::failure_class("fail", &report),
            ]));
            print(&text)?;
            if ctx.out.is_some() {
                let out = ctx.out_file("report.txt");
                ctx.write_text(&out, &text)?;
            }
        }
        Command::Explain { model, features } => {
            let m = GbdtModel::load(model)?;
            let table = FeatureTable::read_csv(features)?;
            ctx.input(model);
            ctx.input(features);
            let explanations = explain_table(&m, &table)?;
            let summary = summarize(&m.columns, &explanations);
            let mut text = String::new();
            for f in summary.ranked() {
                text.push_str(&format!("{:>3} {:<24} {:.6}\n", f.rank, f.feature, f.mean_abs_shap));
            }
            print(&text)?;
            let dir = ctx.out_dir("explain")?;
            let summary_path = dir.join("shap_summary.csv");
            summary.write_csv(&summary_path)?;
            ctx.output(&summary_path);
            let rows_path = dir.join("shap_values.csv");
            write_row_attributions(&rows_path, &table, &explanations)?;
            ctx.output(&rows_path);
        }
        Command::CompareRankings {
            input,
            n,
            infinite_ranking,
        } => {
            let params = feature_params(&cfg, *n, None)?;
            let matches = load_matches(input, &cfg, &mut ctx)?;
            let mut events = Vec::new();
            for m in &matches {
                let (evs, warnings) =
                    extract_event_features(m, &cfg.pitch, &cfg.motion, &cfg.weight, params.space_semantics)?;
                log_warnings(&warnings);
                events.extend(evs);
            }
            let modes: Vec<InfiniteRanking> = match infinite_ranking {
                None => vec![params.infinite_ranking],
                Some(InfiniteChoice::First) => vec![InfiniteRanking::First],
                Some(InfiniteChoice::Last) => vec![InfiniteRanking::Last],
                Some(InfiniteChoice::Both) => vec![InfiniteRanking::First, InfiniteRanking::Last],
            };
            let grid = cfg.grid(ctx.seed)?;
            let mut text = String::new();
            for mode in modes {
                let p = FeatureParams {
                    infinite_ranking: mode,
                    ..params
                };
                let cmp = compare_ranking_variables(&events, &p, &grid, cfg.cv.k, ctx.cv_seed, threshold)?;
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(&format_ranking_report(&cmp));
            }
            print(&text)?;
            if ctx.out.is_some() {
                let out = ctx.out_file("report.txt");
                ctx.write_text(&out, &text)?;
            }
        }
        Command::Render {
            tracking,
            from,
            to,
            team,
            voronoi,
            no_scores,
            animate,
        } => {
            let frames = crate::ingest::load_tracking(tracking, &cfg.pitch)?;
            ctx.input(tracking);
            let lo = from.unwrap_or(i64::MIN);
            let hi = to.unwrap_or(i64::MAX);
            if lo > hi {
                return Err(Error::InvalidParam(format!("--from {lo} is after --to {hi}")));
            }
            let selected: Vec<&TrackedFrame> = frames
                .iter()
                .filter(|f| f.frame_index >= lo && f.frame_index <= hi)
                .collect();
            if selected.is_empty() {
                return Err(Error::Data("no frames in the requested range".into()));
            }
            use rayon::prelude::*;
            let prepared = selected
                .par_iter()
                .map(|f| {
                    let t = attacking_team(f, team.as_deref())?;
                    prepare_frame(f, &t, &cfg.pitch, &cfg.motion, &cfg.weight)
                })
                .collect::<Result<Vec<_>>>()?;
            let all_scores: Vec<f64> = prepared
                .iter()
                .flat_map(|p| p.scores.players.iter().filter(|s| !s.excluded_offside).map(|s| s.score))
                .collect();
            let (plo, phi) = cfg.render.colormap_percentiles;
            let dir = ctx.out_dir("render")?;
            let opts = RenderOptions {
                show_voronoi_boundaries: *voronoi || cfg.render.show_voronoi_boundaries,
                show_scores: !*no_scores && cfg.render.show_scores,
                colormap: colormap_from_scores(&all_scores, plo, phi),
                frame_range: Some((
                    selected.first().map(|f| f.frame_index).unwrap_or(lo),
                    selected.last().map(|f| f.frame_index).unwrap_or(hi),
                )),
                output_dir: dir.clone(),
            };
            opts.validate()?;
            if *animate {
                let svg = render_animation_svg(&prepared, &opts, cfg.render.animation_fps)?;
                let path = dir.join("animation.svg");
                ctx.write_text(&path, &svg)?;
            } else {
                let docs: Vec<(i64, String)> = prepared
                    .par_iter()
                    .map(|p| (p.frame.frame_index, render_frame_svg(&p.frame, &p.scores, &p.field, &opts)))
                    .collect();
                for (idx, svg) in docs {
                    let path = dir.join(format!("frame_{idx:06}.svg"));
                    ctx.write_text(&path, &svg)?;
                }
            }
        }
        Command::Synth => {
            let m = synthesize_match(&cfg.synth, ctx.seed, &cfg.pitch, &cfg.motion, &cfg.weight)?;
            let dir = ctx.out_dir("synth")?;
            for p in m.write(&dir)? {
                ctx.output(&p);
            }
            print(&format!(
                "{} passes, success rate {:.4}, mean true probability {:.4}\n",
                m.ground_truth.len(),
                m.success_rate(),
                m.mean_probability()
            ))?;
        }
    }
    if let Some(path) = &ctx.manifest {
        write_manifest(&ctx, cli.command.name(), path)?;
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Run the CLI on `argv` (including the program name) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli)));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            3
        }
    }
}
