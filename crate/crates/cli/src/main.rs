use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mrfdpm::grid::bin_points;
use mrfdpm::heatmap::emit_heatmap;
use mrfdpm::inference::{select_index, write_criteria_csv, Criterion, FitReport};
use mrfdpm::ingest::{
    default_court_region, parse_shot_csv, summarize, to_study_pattern, ColumnMap, ParseMode,
};
use mrfdpm::sim::{benchmark_grid, make_setting, simulate_nhpp};
use mrfdpm::study::{fit_eta_grid_with_chains, fit_mfm_with_chain, run_replicates, StudyConfig};
use mrfdpm::{Grid, NeighborGraph, StudyRegion};
use serde::Serialize;

mod config;
mod files;

use config::{resolve, ChainArgs, Model, Overrides};
use files::{create, read_json, write_json, PatternFile, Truth};

/// Bayesian nonparametric intensity estimation for spatial point patterns.
#[derive(Debug, Parser)]
#[command(name = "mrfdpm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a pattern from one of the three benchmark surfaces.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        setting: u32,
        #[arg(long)]
        seed: u64,
        /// Output pattern file (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a pattern over a grid of smoothing values, or with the MFM model.
    Fit {
        /// Pattern file (JSON).
        #[arg(long)]
        input: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        model: Option<Model>,
        /// Master seed [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Grid columns; falls back to the grid stored in the pattern file.
        #[arg(long)]
        nx: Option<usize>,
        /// Grid rows.
        #[arg(long)]
        ny: Option<usize>,
        /// Write every chain as JSON lines.
        #[arg(long)]
        dump_chains: bool,
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Replicated recovery study on a benchmark surface.
    Study {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        setting: u32,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Also fit the MFM benchmark on every replicate.
        #[arg(long)]
        mfm: bool,
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Convert a shot-chart CSV to a pattern file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML table mapping field names to CSV headers.
        #[arg(long)]
        columns: Option<PathBuf>,
        /// Skip malformed rows instead of failing.
        #[arg(long)]
        lenient: bool,
        /// Label for the printed summary row.
        #[arg(long, default_value = "player")]
        player: String,
        /// Study region `x_min,x_max,y_min,y_max` [default: -250,250,-50,300]
        #[arg(long, value_parser = parse_region)]
        region: Option<StudyRegion>,
        /// Grid stored as the fitting hint.
        #[arg(long, default_value_t = 50)]
        nx: usize,
        #[arg(long, default_value_t = 35)]
        ny: usize,
    },
    /// Render a heatmap (SVG plus CSV matrix) from a fit or a pattern file.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Output path without extension.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Field::Surface)]
        field: Field,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Field {
    /// Intensity of the representative draw of a fit.
    Surface,
    /// Posterior mean intensity of a fit.
    PosteriorMean,
    /// Box counts of a pattern.
    Counts,
    /// Generating surface of a simulated pattern.
    Truth,
}

/// Bad input detected after argument parsing; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_region(s: &str) -> std::result::Result<StudyRegion, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{t}`"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [x0, x1, y0, y1] => StudyRegion::new(*x0, *x1, *y0, *y1).map_err(|e| e.to_string()),
        _ => Err("expected x_min,x_max,y_min,y_max".into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { setting, seed, out } => simulate(setting, seed, &out),
        Command::Fit {
            input,
            out,
            model,
            seed,
            nx,
            ny,
            dump_chains,
            chain,
        } => {
            set_jobs(chain.jobs)?;
            let r = resolve(
                &chain,
                Overrides {
                    model,
                    seed,
                    nx,
                    ny,
                },
            )
            .map_err(into_usage)?;
            fit(&input, &out, &r, dump_chains)
        }
        Command::Study {
            setting,
            reps,
            seed,
            out,
            mfm,
            chain,
        } => {
            set_jobs(chain.jobs)?;
            let r = resolve(
                &chain,
                Overrides {
                    model: None,
                    seed: Some(seed),
                    nx: None,
                    ny: None,
                },
            )
            .map_err(into_usage)?;
            study(setting, reps, seed, mfm, &out, &r)
        }
        Command::Ingest {
            input,
            out,
            columns,
            lenient,
            player,
            region,
            nx,
            ny,
        } => ingest(
            &input,
            &out,
            columns.as_deref(),
            lenient,
            &player,
            region,
            nx,
            ny,
        ),
        Command::Report {
            input,
            out,
            field,
            nx,
            ny,
            title,
        } => report(&input, &out, field, nx, ny, title),
    }
}

fn into_usage(e: anyhow::Error) -> anyhow::Error {
    usage(format!("{e:#}"))
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn simulate(setting: u32, seed: u64, out: &Path) -> Result<()> {
    let s = make_setting(setting, &benchmark_grid())?;
    let surface = s.surface();
    let pattern = simulate_nhpp(&surface, seed);
    println!(
        "setting {setting}: {} points on {} boxes",
        pattern.len(),
        s.grid.n_boxes()
    );
    let file = PatternFile {
        pattern,
        grid: Some(s.grid),
        truth: Some(Truth {
            setting,
            component_values: s.component_values.clone(),
            labels: s.truth_labels().to_vec(),
            surface: surface.values().to_vec(),
        }),
        dropped: None,
        summary: None,
    };
    write_json(out, &file)
}

fn pick_grid(file: &PatternFile, nx: Option<usize>, ny: Option<usize>) -> Result<Grid> {
    match (nx, ny, file.grid) {
        (Some(nx), Some(ny), _) => Grid::new(*file.pattern.region(), nx, ny).map_err(Into::into),
        (None, None, Some(g)) => {
            if g.region() != file.pattern.region() {
                bail!("stored grid does not cover the pattern region");
            }
            Ok(g)
        }
        (None, None, None) => Err(usage("no grid: pass --nx and --ny")),
        _ => Err(usage("--nx and --ny go together")),
    }
}

#[derive(Serialize)]
struct Selection {
    criterion: &'static str,
    eta: Option<f64>,
    k_hat: usize,
    surface: String,
}

fn fmt_eta(eta: Option<f64>) -> String {
    eta.map_or_else(|| "mfm".into(), |e| e.to_string())
}

fn fit(input: &Path, out: &Path, r: &config::Resolved, dump_chains: bool) -> Result<()> {
    let file: PatternFile = read_json(input)?;
    let grid = pick_grid(&file, r.nx, r.ny)?;
    let binned = bin_points(&file.pattern, &grid)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    println!(
        "{} points, {} x {} grid, {} + {} sweeps (thin {})",
        binned.total(),
        grid.n_x(),
        grid.n_y(),
        r.chain.burn_in,
        r.chain.retained,
        r.chain.thin
    );

    let mut selections = Vec::new();
    match r.model {
        Model::Mfm => {
            let (f, chain) = fit_mfm_with_chain(&binned, &r.hyper, r.gamma, &r.chain)?;
            write_json(&out.join("fit_mfm.json"), &f)?;
            if dump_chains {
                chain.write_jsonl(create(&out.join("chain_mfm.jsonl"))?)?;
            }
            let stem = out.join("surface_MFM");
            emit_heatmap(&grid, &f.surface, &stem, "MFM representative intensity")?;
            println!("MFM: K_hat = {}", f.k_hat);
            selections.push(Selection {
                criterion: "MFM",
                eta: None,
                k_hat: f.k_hat,
                surface: stem.with_extension("csv").display().to_string(),
            });
        }
        Model::MrfDpm => {
            let graph = NeighborGraph::rook(&grid);
            let fits = fit_eta_grid_with_chains(
                &binned,
                &graph,
                &r.hyper,
                &r.eta_grid,
                &r.chain,
                dump_chains,
            )?;
            println!(
                "{:>6} {:>12} {:>12} {:>12} {:>5}",
                "eta", "DIC", "LPML", "BIC", "K"
            );
            for (f, chain) in &fits {
                let tag = fmt_eta(f.eta);
                write_json(&out.join(format!("fit_eta_{tag}.json")), f)?;
                if let Some(c) = chain {
                    c.write_jsonl(create(&out.join(format!("chain_eta_{tag}.jsonl")))?)?;
                }
                println!(
                    "{tag:>6} {:>12.2} {:>12.2} {:>12.2} {:>5}",
                    f.criteria.dic, f.criteria.lpml, f.criteria.bic, f.k_hat
                );
            }
            let reports: Vec<&FitReport> = fits.iter().map(|(f, _)| f).collect();
            write_criteria_csv(&reports, create(&out.join("criteria.csv"))?)?;
            let table: Vec<_> = reports
                .iter()
                .map(|f| (f.eta.unwrap_or(0.0), f.criteria))
                .collect();
            for c in Criterion::ALL {
                let f = reports[select_index(&table, c)?];
                let stem = out.join(format!("surface_{}", c.name()));
                let title = format!("{} selection, eta = {}", c.name(), fmt_eta(f.eta));
                emit_heatmap(&grid, &f.surface, &stem, &title)?;
                println!(
                    "{}: eta = {}, K_hat = {}",
                    c.name(),
                    fmt_eta(f.eta),
                    f.k_hat
                );
                selections.push(Selection {
                    criterion: c.name(),
                    eta: f.eta,
                    k_hat: f.k_hat,
                    surface: stem.with_extension("csv").display().to_string(),
                });
            }
        }
    }
    write_json(&out.join("selection.json"), &selections)
}

fn study(
    setting: u32,
    reps: usize,
    seed: u64,
    mfm: bool,
    out: &Path,
    r: &config::Resolved,
) -> Result<()> {
    let s = make_setting(setting, &benchmark_grid())?;
    let cfg = StudyConfig {
        hyper: r.hyper,
        eta_grid: r.eta_grid.clone(),
        chain: r.chain,
        include_mfm: mfm,
        mfm_gamma: r.gamma,
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report = run_replicates(&s, reps, &cfg, seed)?;
    write_json(&out.join(format!("study_setting{setting}.json")), &report)?;
    report.write_rows_csv(create(
        &out.join(format!("replicates_setting{setting}.csv")),
    )?)?;
    println!(
        "setting {setting}, true K = {}, {reps} replicates",
        report.true_k
    );
    println!(
        "{:>8} {:>10} {:>8} {:>8}",
        "method", "K-accuracy", "mean RI", "mean K"
    );
    for m in &report.summary {
        println!(
            "{:>8} {:>10.2} {:>8.3} {:>8.2}",
            m.method.name(),
            m.k_accuracy,
            m.mean_ri,
            m.mean_k_hat
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn ingest(
    input: &Path,
    out: &Path,
    columns: Option<&Path>,
    lenient: bool,
    player: &str,
    region: Option<StudyRegion>,
    nx: usize,
    ny: usize,
) -> Result<()> {
    let map: ColumnMap = match columns {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ColumnMap::default(),
    };
    let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mode = if lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let parsed = parse_shot_csv(BufReader::new(f), &map, mode)?;
    for (line, msg) in &parsed.malformed {
        eprintln!("skipped line {line}: {msg}");
    }
    let region = region.unwrap_or_else(default_court_region);
    let grid = Grid::new(region, nx, ny).map_err(|e| usage(e.to_string()))?;
    let (pattern, dropped) = to_study_pattern(&parsed.records, &region);
    let summary = summarize(&parsed.records);
    println!("{}", summary.table_row(player));
    println!("{} shots in region, {dropped} outside", pattern.len());
    let file = PatternFile {
        pattern,
        grid: Some(grid),
        truth: None,
        dropped: Some(dropped),
        summary: Some(summary),
    };
    write_json(out, &file)
}

fn report(
    input: &Path,
    out: &Path,
    field: Field,
    nx: Option<usize>,
    ny: Option<usize>,
    title: Option<String>,
) -> Result<()> {
    let value: serde_json::Value = read_json(input)?;
    let (grid, values, default_title) = match field {
        Field::Surface | Field::PosteriorMean => {
            let f: FitReport = serde_json::from_value(value)
                .map_err(|e| usage(format!("{} is not a fit report: {e}", input.display())))?;
            let (v, t) = if field == Field::Surface {
                (f.surface, "representative intensity")
            } else {
                (f.posterior_mean, "posterior mean intensity")
            };
            (f.grid, v, format!("{t}, eta = {}", fmt_eta(f.eta)))
        }
        Field::Counts | Field::Truth => {
            let p: PatternFile = serde_json::from_value(value)
                .map_err(|e| usage(format!("{} is not a pattern file: {e}", input.display())))?;
            if field == Field::Truth {
                let t = p
                    .truth
                    .as_ref()
                    .ok_or_else(|| usage("pattern has no truth"))?;
                let g = p.grid.ok_or_else(|| usage("pattern has no grid"))?;
                (
                    g,
                    t.surface.clone(),
                    format!("setting {} intensity", t.setting),
                )
            } else {
                let g = pick_grid(&p, nx, ny)?;
                let b = bin_points(&p.pattern, &g)?;
                let v = b.counts().iter().map(|&c| c as f64).collect();
                (g, v, "box counts".to_string())
            }
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    emit_heatmap(
        &grid,
        &values,
        out,
        title.as_deref().unwrap_or(&default_title),
    )?;
    println!(
        "wrote {} and {}",
        out.with_extension("svg").display(),
        out.with_extension("csv").display()
    );
    Ok(())
}
