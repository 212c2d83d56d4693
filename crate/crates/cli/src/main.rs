//! `stratmatch`: file-based pipeline for prognostic-score stratification
//! and within-stratum propensity matching.
//!
//! Stages hand data off through CSV files, keeping the pilot/analysis
//! separation visible on disk: `generate` (or your own data) -> `split` ->
//! `stratify` -> `diagnose` / `match` -> `summary`. Every run appends its
//! parameter echo to `call_record.json` in the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stratmatch::dataset::{load_csv, write_csv, DataFrame, Formula};
use stratmatch::diagnostics::{
    fisher_mill_csv, fisher_mill_data, histogram_csv, propensity_hist_data, residual_csv,
    residual_data, size_ratio_csv, size_ratio_data, PlotData,
};
use stratmatch::glm::FittedGlm;
use stratmatch::matcher::{
    effective_sample_size, match_csv, strata_match_with, MatchResult, PropensityInput,
};
use stratmatch::sampler::split_pilot_set;
use stratmatch::stratifier::{
    auto_stratify, issue_table_with, manual_stratify_with, strata_table_csv, AutoStratifyConfig,
    IssueTableRow, IssueThresholds, Prognosis, StrataTableRow, Stratified,
};

#[derive(Parser)]
#[command(
    name = "stratmatch",
    version,
    about = "Prognostic-score stratification pilot designs with within-stratum optimal matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    Manual,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    /// Size-ratio points per stratum
    Sr,
    /// Propensity-score histogram for one stratum
    Hist,
    /// Fisher-Mill scatter for one stratum
    Fm,
    /// Prognostic-model residual table
    Residual,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated observational dataset
    Generate {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset into a control-only pilot set and an analysis set
    Split {
        #[arg(long)]
        treat: String,
        #[arg(long, default_value_t = 0.1)]
        pilot_fraction: f64,
        /// Comma-separated discrete covariates to balance the split on
        #[arg(long, value_delimiter = ',')]
        group_by: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_pilot: PathBuf,
        #[arg(long)]
        out_analysis: PathBuf,
    },
    /// Stratify an analysis set (prognostic quantiles or manual crossing)
    Stratify {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        treat: Option<String>,
        /// Prognostic model formula, e.g. "outcome ~ X1 + X2" (auto mode)
        #[arg(long)]
        prognosis: Option<String>,
        /// CSV of externally fitted prognostic scores (auto mode)
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Outcome column name; required with --scores
        #[arg(long)]
        outcome: Option<String>,
        /// Pilot set to use verbatim instead of splitting one off
        #[arg(long)]
        pilot_in: Option<PathBuf>,
        #[arg(long, default_value_t = 2500)]
        size: usize,
        #[arg(long, default_value_t = 0.1)]
        pilot_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Strata formula for manual mode, e.g. "treat ~ sex + race"
        #[arg(long)]
        strata_formula: Option<String>,
        #[arg(long, default_value_t = 75)]
        too_few: usize,
        #[arg(long, default_value_t = 5000)]
        too_many: usize,
        #[arg(long, default_value_t = 4)]
        ratio: usize,
    },
    /// Export diagnostic plot data (and optionally SVG) from a stratify run
    Diagnose {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum)]
        plot: PlotKind,
        #[arg(long)]
        stratum: Option<u32>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Propensity model formula, e.g. "treat ~ X1 + X2"
        #[arg(long)]
        propensity: Option<String>,
        /// CSV with a propensity_score column (e.g. a match output)
        #[arg(long)]
        propensity_scores: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        jitter_prog: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter_prop: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; omit to print to stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also render an SVG next to --out
        #[arg(long)]
        svg: bool,
    },
    /// Optimal 1:k propensity matching within strata
    Match {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        treat: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Propensity model formula, e.g. "treat ~ X1 + X2 + B1 + B2"
        #[arg(long)]
        propensity: Option<String>,
        /// Fitted propensity model JSON (from a stratify run)
        #[arg(long)]
        propensity_model: Option<PathBuf>,
        /// CSV with a propensity_score column
        #[arg(long)]
        propensity_scores: Option<PathBuf>,
        /// Fit the propensity model without stratum fixed effects
        #[arg(long)]
        no_stratum_effects: bool,
        /// Worker threads for per-stratum solves (env STRATMATCH_THREADS)
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Print a human-readable summary of a stratify run or a match output
    Summary {
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        matches: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Append this run's parameter echo to `call_record.json` in `dir`.
fn record_call(dir: &Path, subcommand: &str, args: &BTreeMap<String, String>) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    let line = serde_json::to_string(&serde_json::json!({
        "subcommand": subcommand,
        "args": args,
    }))?;
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("call_record.json"))?;
    writeln!(f, "{line}")?;
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { n, seed, out } => generate(n, seed, &out),
        Command::Split {
            treat,
            pilot_fraction,
            group_by,
            seed,
            input,
            out_pilot,
            out_analysis,
        } => split(&treat, pilot_fraction, &group_by, seed, &input, &out_pilot, &out_analysis),
        Command::Stratify {
            mode,
            input,
            out_dir,
            treat,
            prognosis,
            scores,
            outcome,
            pilot_in,
            size,
            pilot_fraction,
            seed,
            strata_formula,
            too_few,
            too_many,
            ratio,
        } => {
            let thresholds = IssueThresholds {
                too_few,
                too_many,
                ratio,
            };
            match mode {
                Mode::Auto => stratify_auto(StratifyAutoArgs {
                    input,
                    out_dir,
                    treat: treat.ok_or_else(|| usage("--treat is required in auto mode"))?,
                    prognosis,
                    scores,
                    outcome,
                    pilot_in,
                    size,
                    pilot_fraction,
                    seed,
                    thresholds,
                }),
                Mode::Manual => stratify_manual(
                    &input,
                    &out_dir,
                    strata_formula
                        .ok_or_else(|| usage("--strata-formula is required in manual mode"))?,
                    thresholds,
                ),
            }
        }
        Command::Diagnose {
            dir,
            plot,
            stratum,
            bins,
            propensity,
            propensity_scores,
            jitter_prog,
            jitter_prop,
            seed,
            out,
            svg,
        } => diagnose(DiagnoseArgs {
            dir,
            plot,
            stratum,
            bins,
            propensity,
            propensity_scores,
            jitter_prog,
            jitter_prop,
            seed,
            out,
            svg,
        }),
        Command::Match {
            input,
            treat,
            k,
            propensity,
            propensity_model,
            propensity_scores,
            no_stratum_effects,
            threads,
            out,
            summary_out,
        } => do_match(MatchArgs {
            input,
            treat,
            k,
            propensity,
            propensity_model,
            propensity_scores,
            no_stratum_effects,
            threads,
            out,
            summary_out,
        }),
        Command::Summary { dir, matches } => summary(dir.as_deref(), matches.as_deref()),
    }
}

// --- generate ----------------------------------------------------------------

fn generate(n: u64, seed: u64, out: &Path) -> Result<(), Failure> {
    let df = stratmatch::simgen::make_sample_data(&stratmatch::simgen::SimConfig {
        n: n as usize,
        seed,
    })?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_csv(&df, out)?;
    eprintln!("generate: n={n} seed={seed} out={}", out.display());
    let args = BTreeMap::from([
        ("n".to_string(), n.to_string()),
        ("seed".to_string(), seed.to_string()),
        ("out".to_string(), out.display().to_string()),
    ]);
    record_call(&parent_dir(out), "generate", &args)
}

// --- split --------------------------------------------------------------------

fn split(
    treat: &str,
    pilot_fraction: f64,
    group_by: &[String],
    seed: u64,
    input: &Path,
    out_pilot: &Path,
    out_analysis: &Path,
) -> Result<(), Failure> {
    let df = load_csv(input, None)?;
    let result = split_pilot_set(&df, treat, pilot_fraction, group_by, seed)?;
    for msg in &result.messages {
        eprintln!("{msg}");
    }
    write_csv(&result.pilot_set, out_pilot)?;
    write_csv(&result.analysis_set, out_analysis)?;
    eprintln!(
        "split: pilot={} rows, analysis={} rows",
        result.pilot_set.n_rows(),
        result.analysis_set.n_rows()
    );
    let args = BTreeMap::from([
        ("treat".to_string(), treat.to_string()),
        ("pilot_fraction".to_string(), pilot_fraction.to_string()),
        ("group_by".to_string(), group_by.join(",")),
        ("seed".to_string(), seed.to_string()),
        ("in".to_string(), input.display().to_string()),
        ("out_pilot".to_string(), out_pilot.display().to_string()),
        ("out_analysis".to_string(), out_analysis.display().to_string()),
    ]);
    record_call(&parent_dir(out_analysis), "split", &args)
}

// --- stratify -------------------------------------------------------------------

struct StratifyAutoArgs {
    input: PathBuf,
    out_dir: PathBuf,
    treat: String,
    prognosis: Option<String>,
    scores: Option<PathBuf>,
    outcome: Option<String>,
    pilot_in: Option<PathBuf>,
    size: usize,
    pilot_fraction: f64,
    seed: u64,
    thresholds: IssueThresholds,
}

/// Sidecar written by `stratify` so later stages know how the run was set up.
#[derive(serde::Serialize, serde::Deserialize)]
struct RunMeta {
    mode: String,
    treat: String,
    outcome: Option<String>,
    prognosis: Option<String>,
    strata_formula: Option<String>,
    too_few: usize,
    too_many: usize,
    ratio: usize,
}

fn read_scores_column(path: &Path, column: &str) -> Result<Vec<f64>, Failure> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .or_else(|| (headers.len() == 1).then_some(0))
        .ok_or_else(|| usage(format!("{} needs a '{column}' column", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let cell = rec.get(idx).unwrap_or("");
        out.push(cell.parse::<f64>().map_err(|_| {
            usage(format!("{}: '{cell}' is not a number", path.display()))
        })?);
    }
    Ok(out)
}

fn stratify_auto(args: StratifyAutoArgs) -> Result<(), Failure> {
    let df = load_csv(&args.input, None)?;
    let prognosis = match (&args.prognosis, &args.scores) {
        (Some(f), None) => Prognosis::Formula(Formula::parse(f)?),
        (None, Some(path)) => Prognosis::Scores(read_scores_column(path, "prognostic_score")?),
        _ => return Err(usage("auto mode needs exactly one of --prognosis or --scores")),
    };
    let pilot = match &args.pilot_in {
        Some(p) => Some(load_csv(p, None)?),
        None => None,
    };
    let cfg = AutoStratifyConfig {
        treat: args.treat.clone(),
        size: args.size,
        pilot_fraction: args.pilot_fraction,
        outcome: args.outcome.clone(),
        seed: args.seed,
        thresholds: args.thresholds,
    };
    let strata = auto_stratify(&df, prognosis, pilot.as_ref(), &cfg)?;

    for msg in &strata.messages {
        eprintln!("{msg}");
    }
    for w in &strata.warnings {
        eprintln!("warning: {w}");
    }

    std::fs::create_dir_all(&args.out_dir)?;
    write_csv(&strata.analysis_set, args.out_dir.join("analysis.csv"))?;
    if let Some(p) = &strata.pilot_set {
        write_csv(p, args.out_dir.join("pilot.csv"))?;
    }
    std::fs::write(
        args.out_dir.join("strata_table.csv"),
        strata_table_csv(&strata.strata_table),
    )?;
    std::fs::write(
        args.out_dir.join("issue_table.csv"),
        stratmatch::stratifier::issue_table_csv(&strata.issue_table),
    )?;
    let mut w = csv::Writer::from_path(args.out_dir.join("scores.csv"))?;
    w.write_record(["row_id", "prognostic_score"])?;
    for (row_id, s) in strata
        .analysis_set
        .row_ids()
        .iter()
        .zip(&strata.prognostic_scores)
    {
        w.write_record([row_id.to_string(), stratmatch::numfmt::fmt_float(*s)])?;
    }
    w.flush()?;
    if let Some(model) = &strata.prognostic_model {
        std::fs::write(args.out_dir.join("model.json"), model.to_json()?)?;
    }
    let meta = RunMeta {
        mode: "auto".to_string(),
        treat: args.treat.clone(),
        outcome: args.outcome.clone(),
        prognosis: args.prognosis.clone(),
        strata_formula: None,
        too_few: args.thresholds.too_few,
        too_many: args.thresholds.too_many,
        ratio: args.thresholds.ratio,
    };
    std::fs::write(
        args.out_dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;

    print!("{}", strata.summary_text());

    let mut rec = BTreeMap::from([
        ("mode".to_string(), "auto".to_string()),
        ("in".to_string(), args.input.display().to_string()),
        ("out_dir".to_string(), args.out_dir.display().to_string()),
        ("treat".to_string(), args.treat),
        ("size".to_string(), args.size.to_string()),
        ("pilot_fraction".to_string(), args.pilot_fraction.to_string()),
        ("seed".to_string(), args.seed.to_string()),
    ]);
    if let Some(f) = &args.prognosis {
        rec.insert("prognosis".to_string(), f.clone());
    }
    if let Some(s) = &args.scores {
        rec.insert("scores".to_string(), s.display().to_string());
    }
    if let Some(o) = &args.outcome {
        rec.insert("outcome".to_string(), o.clone());
    }
    if let Some(p) = &args.pilot_in {
        rec.insert("pilot_in".to_string(), p.display().to_string());
    }
    record_call(&args.out_dir, "stratify", &rec)
}

fn stratify_manual(
    input: &Path,
    out_dir: &Path,
    formula_text: String,
    thresholds: IssueThresholds,
) -> Result<(), Failure> {
    let df = load_csv(input, None)?;
    let formula = Formula::parse(&formula_text)?;
    let strata = manual_stratify_with(&df, &formula, &thresholds)?;

    std::fs::create_dir_all(out_dir)?;
    write_csv(&strata.analysis_set, out_dir.join("analysis.csv"))?;
    std::fs::write(
        out_dir.join("strata_table.csv"),
        strata_table_csv(&strata.strata_table),
    )?;
    std::fs::write(
        out_dir.join("issue_table.csv"),
        stratmatch::stratifier::issue_table_csv(&strata.issue_table),
    )?;
    let meta = RunMeta {
        mode: "manual".to_string(),
        treat: strata.treat.clone(),
        outcome: None,
        prognosis: None,
        strata_formula: Some(formula_text.clone()),
        too_few: thresholds.too_few,
        too_many: thresholds.too_many,
        ratio: thresholds.ratio,
    };
    std::fs::write(out_dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    print!("{}", strata.summary_text());

    let rec = BTreeMap::from([
        ("mode".to_string(), "manual".to_string()),
        ("in".to_string(), input.display().to_string()),
        ("out_dir".to_string(), out_dir.display().to_string()),
        ("strata_formula".to_string(), formula_text),
    ]);
    record_call(out_dir, "stratify", &rec)
}

// --- diagnose -------------------------------------------------------------------

/// Stratified view reassembled from a stratify output directory.
struct DirStrata {
    analysis: DataFrame,
    treat: String,
    scores: Option<Vec<f64>>,
    issue: Vec<IssueTableRow>,
    table: Vec<StrataTableRow>,
}

impl Stratified for DirStrata {
    fn analysis_set(&self) -> &DataFrame {
        &self.analysis
    }
    fn strata_table(&self) -> &[StrataTableRow] {
        &self.table
    }
    fn issue_table(&self) -> &[IssueTableRow] {
        &self.issue
    }
    fn prognostic_scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }
    fn treat_column(&self) -> &str {
        &self.treat
    }
}

fn load_run_dir(dir: &Path) -> Result<(DirStrata, RunMeta), Failure> {
    let meta_path = dir.join("meta.json");
    let meta: RunMeta = serde_json::from_str(
        &std::fs::read_to_string(&meta_path)
            .map_err(|e| usage(format!("{}: {e}", meta_path.display())))?,
    )?;
    let analysis = load_csv(dir.join("analysis.csv"), None)?;
    let thresholds = IssueThresholds {
        too_few: meta.too_few,
        too_many: meta.too_many,
        ratio: meta.ratio,
    };
    let issue = issue_table_with(&analysis, &meta.treat, &thresholds)?;
    let scores_path = dir.join("scores.csv");
    let scores = if scores_path.exists() {
        Some(
            read_scores_column(&scores_path, "prognostic_score")
                .map_err(|e| match e {
                    Failure::Usage(m) => usage(m),
                    other => other,
                })?,
        )
    } else {
        None
    };
    let strata = DirStrata {
        treat: meta.treat.clone(),
        analysis,
        scores,
        issue,
        table: Vec::new(),
    };
    Ok((strata, meta))
}

struct DiagnoseArgs {
    dir: PathBuf,
    plot: PlotKind,
    stratum: Option<u32>,
    bins: usize,
    propensity: Option<String>,
    propensity_scores: Option<PathBuf>,
    jitter_prog: f64,
    jitter_prop: f64,
    seed: u64,
    out: Option<PathBuf>,
    svg: bool,
}

fn diagnose(args: DiagnoseArgs) -> Result<(), Failure> {
    let (strata, _meta) = load_run_dir(&args.dir)?;
    let propensity_input = match (&args.propensity, &args.propensity_scores) {
        (Some(f), None) => Some(PropensityInput::Formula(Formula::parse(f)?)),
        (None, Some(p)) => Some(PropensityInput::Scores(read_scores_column(
            p,
            "propensity_score",
        )?)),
        (None, None) => None,
        _ => return Err(usage("give at most one of --propensity / --propensity-scores")),
    };

    let need_propensity = || {
        propensity_input
            .clone()
            .ok_or_else(|| usage("this plot needs --propensity or --propensity-scores"))
    };
    let need_stratum = || args.stratum.ok_or_else(|| usage("this plot needs --stratum"));

    let (csv_text, svg_text) = match args.plot {
        PlotKind::Sr => {
            let points = size_ratio_data(&strata);
            let svg = args
                .svg
                .then(|| stratmatch::diagnostics::render_svg_string(&PlotData::SizeRatio(&points)));
            (size_ratio_csv(&points), svg)
        }
        PlotKind::Hist => {
            let h = propensity_hist_data(&strata, &need_propensity()?, need_stratum()?, args.bins)?;
            let svg = args
                .svg
                .then(|| stratmatch::diagnostics::render_svg_string(&PlotData::Histogram(&h)));
            (histogram_csv(&h), svg)
        }
        PlotKind::Fm => {
            let points = fisher_mill_data(
                &strata,
                &need_propensity()?,
                need_stratum()?,
                args.jitter_prog,
                args.jitter_prop,
                args.seed,
            )?;
            let svg = args
                .svg
                .then(|| stratmatch::diagnostics::render_svg_string(&PlotData::FisherMill(&points)));
            (fisher_mill_csv(&points), svg)
        }
        PlotKind::Residual => {
            let model_path = args.dir.join("model.json");
            let model = FittedGlm::from_json(
                &std::fs::read_to_string(&model_path)
                    .map_err(|e| usage(format!("{}: {e}", model_path.display())))?,
            )?;
            let pilot = load_csv(args.dir.join("pilot.csv"), None)?;
            let rows = residual_data(&model, &pilot)?;
            (residual_csv(&rows), None)
        }
    };

    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, &csv_text)?;
            if let Some(svg) = svg_text {
                std::fs::write(path.with_extension("svg"), svg)?;
            }
            let rec = BTreeMap::from([
                ("dir".to_string(), args.dir.display().to_string()),
                ("plot".to_string(), plot_name(args.plot).to_string()),
                ("out".to_string(), path.display().to_string()),
            ]);
            record_call(&parent_dir(path), "diagnose", &rec)?;
        }
        None => {
            if args.svg {
                return Err(usage("--svg needs --out"));
            }
            print!("{csv_text}");
        }
    }
    Ok(())
}

fn plot_name(plot: PlotKind) -> &'static str {
    match plot {
        PlotKind::Sr => "sr",
        PlotKind::Hist => "hist",
        PlotKind::Fm => "fm",
        PlotKind::Residual => "residual",
    }
}

// --- match ----------------------------------------------------------------------

struct MatchArgs {
    input: PathBuf,
    treat: String,
    k: usize,
    propensity: Option<String>,
    propensity_model: Option<PathBuf>,
    propensity_scores: Option<PathBuf>,
    no_stratum_effects: bool,
    threads: Option<usize>,
    out: PathBuf,
    summary_out: Option<PathBuf>,
}

fn threads_from_env() -> Option<usize> {
    std::env::var("STRATMATCH_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
}

fn do_match(args: MatchArgs) -> Result<(), Failure> {
    let analysis = load_csv(&args.input, None)?;
    let input = match (&args.propensity, &args.propensity_model, &args.propensity_scores) {
        (Some(f), None, None) => PropensityInput::Formula(Formula::parse(f)?),
        (None, Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            PropensityInput::Model(FittedGlm::from_json(&text)?)
        }
        (None, None, Some(path)) => {
            PropensityInput::Scores(read_scores_column(path, "propensity_score")?)
        }
        _ => {
            return Err(usage(
                "give exactly one of --propensity / --propensity-model / --propensity-scores",
            ))
        }
    };
    let threads = args.threads.or_else(threads_from_env).unwrap_or(1).max(1);

    let strata = DirStrata {
        treat: args.treat.clone(),
        analysis,
        scores: None,
        issue: Vec::new(),
        table: Vec::new(),
    };
    let result = strata_match_with(&strata, &input, args.k, !args.no_stratum_effects, threads)?;
    for msg in &result.messages {
        eprintln!("{msg}");
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.out, match_csv(&result, &strata)?)?;
    let summary_path = args
        .summary_out
        .clone()
        .unwrap_or_else(|| args.out.with_file_name("summary.json"));
    std::fs::write(&summary_path, result.summary_json())?;
    print!("{}", result.summary_text());

    let mut rec = BTreeMap::from([
        ("in".to_string(), args.input.display().to_string()),
        ("treat".to_string(), args.treat),
        ("k".to_string(), args.k.to_string()),
        ("stratum_effects".to_string(), (!args.no_stratum_effects).to_string()),
        ("threads".to_string(), threads.to_string()),
        ("out".to_string(), args.out.display().to_string()),
    ]);
    if let Some(f) = &args.propensity {
        rec.insert("propensity".to_string(), f.clone());
    }
    if let Some(p) = &args.propensity_model {
        rec.insert("propensity_model".to_string(), p.display().to_string());
    }
    if let Some(p) = &args.propensity_scores {
        rec.insert("propensity_scores".to_string(), p.display().to_string());
    }
    record_call(&parent_dir(&args.out), "match", &rec)
}

// --- summary --------------------------------------------------------------------

fn summary(dir: Option<&Path>, matches: Option<&Path>) -> Result<(), Failure> {
    match (dir, matches) {
        (Some(dir), None) => summary_dir(dir),
        (None, Some(path)) => summary_matches(path),
        _ => Err(usage("give exactly one of --dir or --matches")),
    }
}

fn summary_dir(dir: &Path) -> Result<(), Failure> {
    let (strata, meta) = load_run_dir(dir)?;
    println!("{} stratification", meta.mode);
    println!();
    println!(
        "Analysis set dimensions: {} X {}",
        strata.analysis.n_rows(),
        strata.analysis.n_cols()
    );
    let pilot_path = dir.join("pilot.csv");
    if pilot_path.exists() {
        let pilot = load_csv(&pilot_path, None)?;
        println!();
        println!("Pilot set dimensions: {} X {}", pilot.n_rows(), pilot.n_cols());
    }
    if let Some(f) = &meta.prognosis {
        println!();
        println!("Prognostic Score Formula:\n{f}");
    }
    if let Some(f) = &meta.strata_formula {
        println!();
        println!("Strata Formula:\n{f}");
    }
    let sizes: Vec<usize> = strata.issue.iter().map(|r| r.total).collect();
    println!();
    println!("Number of strata: {}", strata.issue.len());
    println!();
    println!(
        "\tMin size: {} \tMax size: {}",
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0)
    );
    Ok(())
}

fn summary_matches(path: &Path) -> Result<(), Failure> {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("{} needs a '{name}' column", path.display())))
    };
    let treat_idx = col("treat")?;
    let label_idx = col("set_label")?;

    let mut sets: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    let mut unmatched_treated = 0usize;
    let mut unmatched_controls = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let treated = rec.get(treat_idx) == Some("1");
        match rec.get(label_idx) {
            Some("") | None => {
                if treated {
                    unmatched_treated += 1;
                } else {
                    unmatched_controls += 1;
                }
            }
            Some(label) => {
                let e = sets.entry(label.to_string()).or_insert((0, 0));
                if treated {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
    }
    let mut structure: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for shape in sets.values() {
        *structure.entry(*shape).or_insert(0) += 1;
    }
    if unmatched_treated > 0 {
        structure.insert((1, 0), unmatched_treated);
    }
    if unmatched_controls > 0 {
        structure.insert((0, 1), unmatched_controls);
    }
    let result = MatchResult {
        assignment: Vec::new(),
        k: 0,
        effective_pairs: effective_sample_size(&structure),
        set_structure: structure,
        propensity_scores: Vec::new(),
        warnings: Vec::new(),
        messages: Vec::new(),
    };
    print!("{}", result.summary_text());
    Ok(())
}
