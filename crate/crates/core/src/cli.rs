//! The `listcombine` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or parameter values
//! rejected before any computation), 2 on data errors (unreadable input,
//! degenerate data, failed self-test).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::data::{summarize_cells, validate, ListDesign, RawRecord};
use crate::error::Error;
use crate::estimators::{estimate_all, EstimateReport, Method, VarianceForm};
use crate::io::{
    group_records, infer_j_items, load_csv, render_report, write_csv, ColumnMapping, ComparisonRow, Format,
    PlaceboRow, QuestionAnalysis, QuestionGroup, Report,
};
use crate::numeric::{PowerOptions, Probability};
use crate::placebo::{cross_study_difference, fisher_across, placebo_test_one, placebo_test_two, PlaceboTest};
use crate::selftest::{self, Scale};
use crate::simulation::{
    generate_dataset, power_test_one_grid, power_test_two, DgpParams, GridAxis, GridSpec, PowerMode, SamplingMode,
    Violation,
};

#[derive(Debug, Parser)]
#[command(name = "listcombine", version, about = "Prevalence estimation combining direct questions and list experiments")]
pub struct Cli {
    /// Worker threads for simulations (default: all cores). Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Direct, standard list and combined estimates for each question.
    Estimate(EstimateArgs),
    /// Placebo tests of the identifying assumptions.
    Placebo(PlaceboArgs),
    /// Differences in estimates between two studies, question by question.
    CompareStudies(CompareArgs),
    /// Generate a synthetic dataset as CSV.
    Simulate(SimulateArgs),
    /// Power of the placebo tests.
    Power(PowerArgs),
    /// Run the acceptance checks at reduced scale.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Long-format CSV: y_direct, z_treat, v_count and optionally
    /// respondent_id, question_id, study, attention_failed.
    #[arg(long)]
    pub input: PathBuf,
    /// Restrict to these question ids (repeatable).
    #[arg(long = "question")]
    pub questions: Vec<String>,
    /// Number of non-sensitive items J. Inferred from the counts when omitted.
    #[arg(long)]
    pub j_items: Option<u32>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceFormArg {
    GammaHat,
    CellCounts,
}

impl From<VarianceFormArg> for VarianceForm {
    fn from(v: VarianceFormArg) -> Self {
        match v {
            VarianceFormArg::GammaHat => VarianceForm::GammaHat,
            VarianceFormArg::CellCounts => VarianceForm::CellCounts,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Denominators for the combined estimator's variance.
    #[arg(long, value_enum, default_value_t = VarianceFormArg::GammaHat)]
    pub variance_form: VarianceFormArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhichTest {
    One,
    Two,
    Both,
}

#[derive(Debug, Args)]
pub struct PlaceboArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = WhichTest::Both)]
    pub test: WhichTest,
    /// Combine p-values across questions with Fisher's method.
    #[arg(long)]
    pub fisher: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Study label subtracted from.
    #[arg(long)]
    pub study_a: String,
    /// Study label subtracted.
    #[arg(long)]
    pub study_b: String,
    #[arg(long, value_enum, default_value_t = VarianceFormArg::GammaHat)]
    pub variance_form: VarianceFormArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViolationArg {
    FalseConfessor,
    Liar,
    DesignAffected,
}

impl From<ViolationArg> for Violation {
    fn from(v: ViolationArg) -> Self {
        match v {
            ViolationArg::FalseConfessor => Violation::FalseConfessor,
            ViolationArg::Liar => Violation::Liar,
            ViolationArg::DesignAffected => Violation::DesignAffected,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Prevalence Pr[X = 1].
    #[arg(long)]
    pub mu: f64,
    /// Pr[Y = 1 | X = 1].
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 4)]
    pub j_items: u32,
    /// Control items follow Binomial(J, w).
    #[arg(long, default_value_t = 0.4)]
    pub w_success: f64,
    /// Share of "Yes" answers that are false confessions.
    #[arg(long, default_value_t = 0.0)]
    pub false_confessor_share: f64,
    #[arg(long, default_value_t = 0.0)]
    pub liar_share: f64,
    #[arg(long, default_value_t = 0.0)]
    pub design_affected_share: f64,
    /// Fix the number of "Yes" answers instead of drawing it.
    #[arg(long)]
    pub yes_count: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PowerTest {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PowerAxis {
    /// Vary the share of one violation type.
    Share,
    /// Vary the control-list success probability with a fixed false-confessor share.
    WSuccess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PowerModeArg {
    Analytic,
    Simulated,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long, value_enum)]
    pub test: PowerTest,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: u32,
    /// Output format; defaults to CSV for grids.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub output: Option<PathBuf>,

    // Test I grid.
    /// "Yes"-stratum sizes (comma separated). Default 100 to 1000 by 50.
    #[arg(long, value_delimiter = ',')]
    pub n_yes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = PowerAxis::Share)]
    pub axis: PowerAxis,
    #[arg(long, value_enum, default_value_t = ViolationArg::FalseConfessor)]
    pub violation: ViolationArg,
    /// Violation shares (comma separated). On the w-success axis, the single
    /// false-confessor share (default 0.2).
    #[arg(long, value_delimiter = ',')]
    pub share: Vec<f64>,
    /// Control-list success probabilities (comma separated). On the share
    /// axis, the single value used (default 0.4).
    #[arg(long, value_delimiter = ',')]
    pub w_success: Vec<f64>,
    /// Axis step when the axis values are not given.
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 4)]
    pub j_items: u32,

    // Test II.
    /// Pr[Y = 1] in the treated arm.
    #[arg(long)]
    pub p1: Option<f64>,
    /// Pr[Y = 1] in the control arm.
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub n1: Option<u64>,
    #[arg(long)]
    pub n0: Option<u64>,
    #[arg(long, value_enum, default_value_t = PowerModeArg::Analytic)]
    pub mode: PowerModeArg,
    #[arg(long)]
    pub continuity_correction: bool,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 20_261_018)]
    pub seed: u64,
    /// Run at the full acceptance scale instead of the reduced one.
    #[arg(long)]
    pub full: bool,
}

/// Failure of a subcommand: usage problems map to exit code 1, data
/// problems to 2.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn probability(name: &str, v: f64) -> Result<Probability, Failure> {
    Probability::new(v).map_err(|_| usage(format!("--{name} must lie in [0, 1], got {v}")))
}

fn alpha(v: f64) -> Result<Probability, Failure> {
    let a = probability("alpha", v)?;
    if a.is_interior() {
        Ok(a)
    } else {
        Err(usage(format!("--alpha must lie strictly between 0 and 1, got {v}")))
    }
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Estimate(_) => "estimate",
        Command::Placebo(_) => "placebo",
        Command::CompareStudies(_) => "compare-studies",
        Command::Simulate(_) => "simulate",
        Command::Power(_) => "power",
        Command::Selftest(_) => "selftest",
    }
}

fn subcommand_help(name: Option<&str>) -> String {
    let mut cmd = Cli::command();
    match name.and_then(|n| cmd.find_subcommand_mut(n)) {
        Some(sub) => sub.render_help().to_string(),
        None => cmd.render_help().to_string(),
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// writing the report to `out` and messages to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{e}");
            let sub = args.iter().skip(1).find_map(|a| {
                let a = a.to_str()?;
                Cli::command().get_subcommands().find(|s| s.get_name() == a).map(|_| a.to_string())
            });
            if !matches!(e.kind(), ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(err, "\n{}", subcommand_help(sub.as_deref()));
            }
            return 1;
        }
    };
    let name = subcommand_name(&cli.command);
    let outcome = match cli.threads {
        Some(0) => Err(usage("--threads must be positive")),
        Some(t) => {
            // The global pool can only be configured once per process; a
            // second call (e.g. when `run` is used as a library) keeps the
            // first setting, which is harmless since results do not depend on it.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            dispatch(&cli.command, out, err)
        }
        None => dispatch(&cli.command, out, err),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n");
            let _ = write!(err, "{}", subcommand_help(Some(name)));
            1
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Estimate(a) => estimate(a, out, err),
        Command::Placebo(a) => placebo(a, out, err),
        Command::CompareStudies(a) => compare(a, out, err),
        Command::Simulate(a) => simulate(a, out, err),
        Command::Power(a) => power(a, out, err),
        Command::Selftest(a) => run_selftest(a, out),
    }
}

fn emit(bytes: &[u8], path: Option<&PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    let io_err = |e: std::io::Error| Failure::Data(e.to_string());
    match path {
        Some(p) => {
            let mut f = File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            f.write_all(bytes).map_err(io_err)
        }
        None => out.write_all(bytes).map_err(io_err),
    }
}

/// A validated question group ready for analysis.
struct Loaded {
    group: QuestionGroup,
    cells: crate::data::CellSummary,
    exclusions: crate::data::ExclusionReport,
}

type LoadedGroups = (Vec<Result<Loaded, String>>, Vec<String>);

fn load_groups(a: &InputArgs, err: &mut dyn Write) -> Result<LoadedGroups, Failure> {
    let records = load_csv(&a.input, &ColumnMapping::default())?;
    let design = design_for(a, &records, err)?;
    let mut groups = group_records(&records);
    if !a.questions.is_empty() {
        for q in &a.questions {
            if !groups.iter().any(|g| &g.question == q) {
                return Err(Failure::Data(format!("question {q:?} not found in input")));
            }
        }
        groups.retain(|g| a.questions.contains(&g.question));
    }
    let labels = groups.iter().map(|g| g.question.clone()).collect();
    let loaded = groups
        .into_iter()
        .map(|group| match validate(&group.records, &design) {
            Ok(ds) => Ok(Loaded {
                cells: summarize_cells(&ds),
                exclusions: ds.exclusions().clone(),
                group,
            }),
            Err(e) => Err(format!("{}: {e}", group.question)),
        })
        .collect();
    Ok((loaded, labels))
}

fn design_for(a: &InputArgs, records: &[RawRecord], err: &mut dyn Write) -> Result<ListDesign, Failure> {
    let alpha = alpha(a.alpha)?;
    let j = match a.j_items {
        Some(0) => return Err(usage("--j-items must be positive")),
        Some(j) => j,
        None => {
            let j = infer_j_items(records)
                .ok_or_else(|| Failure::Data("cannot infer the list length: no usable counts".into()))?;
            let _ = writeln!(err, "note: --j-items not given, inferred J = {j} from the observed counts");
            j
        }
    };
    Ok(ListDesign::new(j, alpha.get())?)
}

fn all_failed<T>(loaded: &[Result<T, String>]) -> Option<String> {
    if loaded.iter().all(Result::is_err) {
        Some(loaded.iter().filter_map(|r| r.as_ref().err().cloned()).collect::<Vec<_>>().join("; "))
    } else {
        None
    }
}

fn estimate(a: &EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let alpha = alpha(a.input.alpha)?;
    let (loaded, _) = load_groups(&a.input, err)?;
    if let Some(msg) = all_failed(&loaded) {
        return Err(Failure::Data(msg));
    }
    let mut rows = Vec::new();
    for l in loaded {
        match l {
            Ok(l) => rows.push(QuestionAnalysis {
                estimates: estimate_all(
                    &l.cells,
                    alpha,
                    a.variance_form.into(),
                    &l.group.question,
                    l.group.study.as_deref(),
                ),
                exclusions: l.exclusions,
            }),
            Err(msg) => {
                let _ = writeln!(err, "warning: {msg}");
            }
        }
    }
    emit(&render_report(&Report::Estimates(&rows), a.input.format), a.input.output.as_ref(), out)?;
    Ok(0)
}

fn placebo(a: &PlaceboArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let (loaded, _) = load_groups(&a.input, err)?;
    if let Some(msg) = all_failed(&loaded) {
        return Err(Failure::Data(msg));
    }
    let tests: &[PlaceboTest] = match a.test {
        WhichTest::One => &[PlaceboTest::TestI],
        WhichTest::Two => &[PlaceboTest::TestII],
        WhichTest::Both => &[PlaceboTest::TestI, PlaceboTest::TestII],
    };
    let mut rows = Vec::new();
    let mut fisher = Vec::new();
    for &test in tests {
        let mut results = Vec::new();
        for l in loaded.iter().flatten() {
            let q = &l.group.question;
            let r = match test {
                PlaceboTest::TestI => placebo_test_one(&l.cells),
                _ => placebo_test_two(&l.cells),
            }
            .map(|r| r.with_question(q.clone()));
            let label = match &l.group.study {
                Some(s) => format!("{q} [{s}]"),
                None => q.clone(),
            };
            rows.push(PlaceboRow {
                question: q.clone(),
                study: l.group.study.clone(),
                test,
                report: r.as_ref().ok().cloned(),
                error: r.as_ref().err().map(ToString::to_string),
            });
            results.push((label, r));
        }
        if a.fisher {
            let summary = fisher_across(results.iter().map(|(q, r)| (q.as_str(), r)))?;
            fisher.push((test, summary));
        }
    }
    for l in loaded.iter().filter_map(|l| l.as_ref().err()) {
        let _ = writeln!(err, "warning: {l}");
    }
    emit(
        &render_report(&Report::Placebo { rows: &rows, fisher: &fisher }, a.input.format),
        a.input.output.as_ref(),
        out,
    )?;
    Ok(0)
}

fn compare(a: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let alpha = alpha(a.input.alpha)?;
    if a.study_a == a.study_b {
        return Err(usage("--study-a and --study-b must differ"));
    }
    let (loaded, _) = load_groups(&a.input, err)?;
    let mut questions: Vec<String> = Vec::new();
    for l in loaded.iter().flatten() {
        if !questions.contains(&l.group.question) {
            questions.push(l.group.question.clone());
        }
    }
    let find = |q: &str, study: &str| {
        loaded
            .iter()
            .flatten()
            .find(|l| l.group.question == q && l.group.study.as_deref() == Some(study))
    };
    let mut rows = Vec::new();
    for q in &questions {
        let (Some(la), Some(lb)) = (find(q, &a.study_a), find(q, &a.study_b)) else {
            let _ = writeln!(err, "warning: question {q} is missing from one of the studies");
            continue;
        };
        let ea = estimate_all(&la.cells, alpha, a.variance_form.into(), q, Some(&a.study_a));
        let eb = estimate_all(&lb.cells, alpha, a.variance_form.into(), q, Some(&a.study_b));
        let pick = |e: &crate::estimators::QuestionEstimates, m: Method| -> Option<EstimateReport> {
            match m {
                Method::Direct => e.direct.clone(),
                Method::StandardList => e.standard.clone(),
                Method::CombinedList => e.combined.clone(),
            }
        };
        for m in Method::ALL {
            let r = match (pick(&ea, m), pick(&eb, m)) {
                (Some(x), Some(y)) => cross_study_difference(&x, &y).map_err(|e| e.to_string()),
                _ => Err(format!("{} estimate unavailable in one study", m.label())),
            };
            rows.push(ComparisonRow {
                question: q.clone(),
                method: m,
                report: r.as_ref().ok().cloned().map(|r| r.with_question(q.clone())),
                error: r.err(),
            });
        }
    }
    if rows.is_empty() {
        return Err(Failure::Data(format!(
            "no question appears in both study {:?} and study {:?}",
            a.study_a, a.study_b
        )));
    }
    let report = Report::Comparison {
        study_a: &a.study_a,
        study_b: &a.study_b,
        rows: &rows,
    };
    emit(&render_report(&report, a.input.format), a.input.output.as_ref(), out)?;
    Ok(0)
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let bad = |e: Error| usage(e.to_string());
    let mut params = DgpParams::new(a.mu, a.p, a.n)
        .and_then(|p| p.with_gamma(a.gamma))
        .and_then(|p| p.with_list(a.j_items, a.w_success))
        .map_err(bad)?;
    if let Some(k) = a.yes_count {
        params = params.with_sampling(SamplingMode::FixedYesCount(k)).map_err(bad)?;
    }
    for (kind, share) in [
        (Violation::FalseConfessor, a.false_confessor_share),
        (Violation::Liar, a.liar_share),
        (Violation::DesignAffected, a.design_affected_share),
    ] {
        params = params.with_violation(kind, share).map_err(bad)?;
    }
    let ds = generate_dataset(&params, a.seed)?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf)?;
    emit(&buf, a.output.as_ref(), out)?;
    let _ = writeln!(err, "seed {}: wrote {} respondents", a.seed, ds.len());
    Ok(0)
}

fn power(a: &PowerArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let alpha = alpha(a.alpha)?;
    match a.test {
        PowerTest::One => power_one(a, alpha, out, err),
        PowerTest::Two => power_two(a, alpha, out, err),
    }
}

fn power_one(a: &PowerArgs, alpha: Probability, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let seed = a.seed.ok_or_else(|| usage("--seed is required for simulated power"))?;
    if !(a.step > 0.0 && a.step <= 1.0) {
        return Err(usage("--step must lie in (0, 1]"));
    }
    let single = |xs: &[f64], name: &str, default: f64| -> Result<f64, Failure> {
        match xs {
            [] => Ok(default),
            [x] => Ok(*x),
            _ => Err(usage(format!("--{name} takes a single value on this axis"))),
        }
    };
    let mut grid = match a.axis {
        PowerAxis::Share => {
            let mut g = GridSpec::violation_panel(a.violation.into(), a.step);
            if let GridAxis::ViolationShare { shares, w_success, .. } = &mut g.axis {
                if !a.share.is_empty() {
                    *shares = a.share.clone();
                }
                *w_success = single(&a.w_success, "w-success", 0.4)?;
            }
            g
        }
        PowerAxis::WSuccess => {
            let mut g = GridSpec::w_success_panel(a.step);
            if let GridAxis::WSuccess {
                values,
                false_confessor_share,
            } = &mut g.axis
            {
                if !a.w_success.is_empty() {
                    *values = a.w_success.clone();
                }
                *false_confessor_share = single(&a.share, "share", 0.2)?;
            }
            g
        }
    };
    if !a.n_yes.is_empty() {
        grid.n_yes = a.n_yes.clone();
    }
    grid.gamma = a.gamma;
    grid.j_items = a.j_items;
    grid.validate().map_err(|e| usage(e.to_string()))?;
    if a.replicates == 0 {
        return Err(usage("--replicates must be positive"));
    }
    let _ = writeln!(err, "seed {seed}: {} cells x {} replicates", grid.cell_count(), a.replicates);
    let cells = power_test_one_grid(&grid, a.replicates, alpha, seed)?;
    let format = a.format.unwrap_or(Format::Csv);
    emit(&render_report(&Report::Power(&cells), format), a.output.as_ref(), out)?;
    Ok(0)
}

fn power_two(a: &PowerArgs, alpha: Probability, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let need = |x: Option<f64>, name: &str| x.ok_or_else(|| usage(format!("--{name} is required for --test two")));
    let p1 = probability("p1", need(a.p1, "p1")?)?;
    let p0 = probability("p0", need(a.p0, "p0")?)?;
    let n1 = a.n1.ok_or_else(|| usage("--n1 is required for --test two"))?;
    let n0 = a.n0.ok_or_else(|| usage("--n0 is required for --test two"))?;
    if n1 == 0 || n0 == 0 {
        return Err(usage("--n1 and --n0 must be positive"));
    }
    let options = PowerOptions {
        continuity_correction: a.continuity_correction,
    };
    let mut fields: Vec<(String, Value)> = vec![
        ("test".into(), json!("test_ii")),
        ("p1".into(), json!(p1.get())),
        ("p0".into(), json!(p0.get())),
        ("n1".into(), json!(n1)),
        ("n0".into(), json!(n0)),
        ("alpha".into(), json!(alpha.get())),
        ("continuity_correction".into(), json!(a.continuity_correction)),
    ];
    let mode = match a.mode {
        PowerModeArg::Analytic => {
            fields.push(("mode".into(), json!("analytic")));
            PowerMode::Analytic
        }
        PowerModeArg::Simulated => {
            let seed = a.seed.ok_or_else(|| usage("--seed is required for simulated power"))?;
            if a.replicates == 0 {
                return Err(usage("--replicates must be positive"));
            }
            let _ = writeln!(err, "seed {seed}: {} replicates", a.replicates);
            fields.push(("mode".into(), json!("simulated")));
            fields.push(("replicates".into(), json!(a.replicates)));
            fields.push(("seed".into(), json!(seed)));
            PowerMode::Simulated {
                replicates: a.replicates,
                seed,
            }
        }
    };
    let power = power_test_two(p1, p0, n1, n0, alpha, mode, options).map_err(|e| usage(e.to_string()))?;
    fields.push(("power".into(), json!(power.get())));
    let format = a.format.unwrap_or(Format::Text);
    let report = Report::Summary {
        kind: "power_test_two",
        fields: &fields,
    };
    emit(&render_report(&report, format), a.output.as_ref(), out)?;
    Ok(0)
}

fn run_selftest(a: &SelftestArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let scale = if a.full { Scale::Full } else { Scale::Reduced };
    let mut w = BufWriter::new(out);
    let _ = writeln!(w, "selftest ({scale:?} scale, seed {})", a.seed);
    let mut failed = 0;
    for (id, _) in selftest::CRITERIA {
        let o = selftest::run_criterion(id, scale, a.seed);
        if !o.passed {
            failed += 1;
        }
        let _ = writeln!(w, "{}", o.line());
        let _ = w.flush();
    }
    let _ = writeln!(w, "{} of {} criteria passed", selftest::CRITERIA.len() - failed, selftest::CRITERIA.len());
    drop(w);
    Ok(if failed == 0 { 0 } else { 2 })
}
