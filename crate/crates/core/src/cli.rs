//! Command-line front end.
//!
//! Exit codes: 0 success, 1 stage failure, lint findings or a damaged run,
//! 2 usage, configuration or input errors. Diagnostics go to stderr; with
//! `--json`, stdout carries one JSON document per command.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::digest::canonical_json;
use crate::engine::ExhaustionPolicy;
use crate::guidelines::{lint_script, Finding};
use crate::orchestrator::{
    resume, run_ablation, run_pipeline, AblationReport, Cursor, DefectModel, MetricsReport, ResolvedConfig,
    RunConfig, RunError, RunOptions, RunOutcome, RunState, CONFIG_FILE, REPORT_FILE, STATE_FILE,
};
use crate::providers::mock::MockScenario;
use crate::providers::Backend;
use crate::schema::{parse_script, UserPrompt};
use crate::stages::{Agent, StageId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_ABLATION_PROMPT: &str = "a lighthouse keeper finds a message in a bottle";

#[derive(Debug, Parser)]
#[command(name = "reelwright", version, about = "Plan a shot-by-shot video story from a one-line prompt")]
pub struct Cli {
    /// Print a machine-readable JSON document on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the whole pipeline into a new run directory.
    Run(RunArgs),
    /// Check a script file against the structure, content and style guides.
    Lint(LintArgs),
    /// Continue an interrupted or failed run.
    Resume(ResumeArgs),
    /// Print the metrics report of a finished run.
    Report(ReportArgs),
    /// Compare compliance with and without selected agents.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct PromptArgs {
    /// Story prompt text.
    #[arg(long)]
    pub prompt: Option<String>,
    /// File holding the story prompt.
    #[arg(long, value_name = "PATH")]
    pub prompt_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StoryArgs {
    /// Number of shots.
    #[arg(long, default_value_t = 3)]
    pub shots: u32,
    /// Target seconds per clip.
    #[arg(long, default_value_t = 5.0)]
    pub clip_seconds: f64,
}

/// Overrides applied on top of the config file or the stored run config.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Provider backend: `mock` or `http`.
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    /// Mock scenario file.
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Seed for every derived random choice.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fail instead of emitting best-so-far output when a loop runs out of budget.
    #[arg(long)]
    pub strict: bool,
    /// Maximum shots processed at once.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub story: StoryArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Agents to switch off (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', value_parser = parse_agent)]
    pub disable: Vec<Agent>,
    /// Run directory to create.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Stop after this stage; finish later with `resume`.
    #[arg(long, value_parser = parse_stage)]
    pub halt_after: Option<StageId>,
}

#[derive(Debug, Args)]
pub struct LintArgs {
    /// Script JSON file.
    pub script: PathBuf,
    /// Expected shot count; defaults to the script's own.
    #[arg(long)]
    pub shots: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    /// Run directory.
    #[arg(value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Agents to switch off (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', value_parser = parse_agent)]
    pub disable: Vec<Agent>,
    /// Continue even if the configuration differs from the stored one.
    #[arg(long)]
    pub allow_config_change: bool,
    /// Stop after this stage.
    #[arg(long, value_parser = parse_stage)]
    pub halt_after: Option<StageId>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub story: StoryArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Agents to ablate; all of them when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_agent)]
    pub disable: Vec<Agent>,
    /// Paired trials per configuration.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Directory for `ablation.json` and `ablation.txt`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse()
}

fn parse_agent(s: &str) -> Result<Agent, String> {
    s.parse()
}

fn parse_stage(s: &str) -> Result<StageId, String> {
    s.parse()
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Config(_)
            | RunError::NotARun(_)
            | RunError::AlreadyExists(_)
            | RunError::ConfigDigestMismatch { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_FAILURE, message: e.to_string() }
    }
}

/// Parses `args` and runs the command, writing to the given streams.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, cli.json, out),
        Command::Lint(a) => cmd_lint(a, cli.json, out),
        Command::Resume(a) => cmd_resume(a, cli.json, out),
        Command::Report(a) => cmd_report(a, cli.json, out),
        Command::Ablate(a) => cmd_ablate(a, cli.json, out),
    }
}

fn read_prompt(p: &PromptArgs, story: &StoryArgs, fallback: Option<&str>) -> Result<UserPrompt, Failure> {
    let text = match (&p.prompt, &p.prompt_file, fallback) {
        (Some(t), None, _) => t.clone(),
        (None, Some(f), _) => std::fs::read_to_string(f)
            .map_err(|e| Failure::usage(format!("cannot read prompt file {}: {e}", f.display())))?,
        (None, None, Some(t)) => t.to_string(),
        _ => return Err(Failure::usage("give exactly one of --prompt or --prompt-file")),
    };
    UserPrompt::new(text.trim(), story.shots, story.clip_seconds)
        .map_err(|e| Failure::usage(format!("prompt: {e}")))
}

impl ConfigArgs {
    fn is_empty(&self) -> bool {
        self.config.is_none()
            && self.backend.is_none()
            && self.scenario.is_none()
            && self.seed.is_none()
            && !self.strict
            && self.concurrency.is_none()
    }

    /// Loads `--config` (or takes `base`) and applies the overrides.
    fn resolve(&self, base: Option<ResolvedConfig>, disable: &[Agent]) -> Result<ResolvedConfig, Failure> {
        let (mut config, mut scenario) = match (&self.config, base) {
            (Some(path), _) => {
                let r = RunConfig::load(path)?.resolve()?;
                (r.config, r.scenario)
            }
            (None, Some(b)) => (b.config, b.scenario),
            (None, None) => {
                let r = RunConfig::default().resolve()?;
                (r.config, r.scenario)
            }
        };
        if let Some(b) = self.backend {
            config.backend = b;
        }
        if let Some(path) = &self.scenario {
            let s = MockScenario::load(path)
                .map_err(|e| Failure::usage(format!("scenario {}: {e}", path.display())))?;
            scenario = Some(s);
        }
        if config.backend == Backend::Http && self.scenario.is_none() {
            scenario = None;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if self.strict {
            config.pipeline.policy = ExhaustionPolicy::Fail;
        }
        if let Some(c) = self.concurrency {
            config.pipeline.concurrency = c;
        }
        config.pipeline.disabled.extend(disable.iter().copied());
        Ok(ResolvedConfig::new(config, scenario)?)
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    run_id: &'a str,
    run_dir: String,
    shots: usize,
    complete: bool,
    stages: Vec<StageLine>,
    warnings: &'a [String],
    report: Option<String>,
}

#[derive(Serialize)]
struct StageLine {
    stage: String,
    status: String,
    seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn summarize_state(
    state: &RunState,
    run_dir: &Path,
    shots: usize,
    json: bool,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    let report = run_dir.join(REPORT_FILE);
    let summary = RunSummary {
        run_id: &state.run_id,
        run_dir: run_dir.display().to_string(),
        shots,
        complete: state.is_done(),
        stages: state
            .stages
            .iter()
            .map(|r| StageLine {
                stage: r.stage.to_string(),
                status: r.status.to_string(),
                seconds: r.seconds,
                error: r.error.clone(),
            })
            .collect(),
        warnings: &state.warnings,
        report: report.is_file().then(|| report.display().to_string()),
    };
    if json {
        out.write_all(&canonical_json(&summary))?;
        return writeln!(out);
    }
    writeln!(out, "run {} in {}", summary.run_id, summary.run_dir)?;
    writeln!(out, "shots: {shots}")?;
    let rows = summary
        .stages
        .iter()
        .map(|s| {
            vec![
                s.stage.clone(),
                s.status.clone(),
                format!("{:.3}", s.seconds),
                s.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.write_all(table(&["stage", "status", "seconds", "error"], rows).as_bytes())?;
    match state.cursor {
        Cursor::Done => {}
        Cursor::Stage(s) => writeln!(out, "next stage: {s}")?,
    }
    writeln!(out, "warnings: {}", state.warnings.len())?;
    for w in &state.warnings {
        writeln!(out, "  {w}")?;
    }
    if let Some(r) = &summary.report {
        writeln!(out, "report: {r}")?;
    }
    Ok(())
}

fn finish(
    result: Result<RunOutcome, RunError>,
    dir: &Path,
    shots: usize,
    json: bool,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    match result {
        Ok(outcome) => {
            let n = outcome.story.as_ref().map_or(shots, |s| s.pairs.len());
            summarize_state(&outcome.state, &outcome.run_dir, n, json, out)?;
            Ok(EXIT_OK)
        }
        Err(e @ RunError::Stage { .. }) => {
            if let Ok(state) = RunState::load(dir) {
                summarize_state(&state, dir, shots, json, out)?;
            }
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_run(a: &RunArgs, json: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let prompt = read_prompt(&a.prompt, &a.story, None)?;
    let resolved = a.config.resolve(None, &a.disable)?;
    let opts = RunOptions { halt_after: a.halt_after, allow_config_change: false };
    let result = run_pipeline(&resolved, &prompt, &a.out, &opts);
    finish(result, &a.out, prompt.target_shot_count as usize, json, out)
}

fn cmd_resume(a: &ResumeArgs, json: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    if !a.out.join(STATE_FILE).is_file() {
        return Err(RunError::NotARun(a.out.clone()).into());
    }
    let config = if a.config.is_empty() && a.disable.is_empty() {
        None
    } else {
        let stored: ResolvedConfig = read_json(&a.out.join(CONFIG_FILE))?;
        Some(a.config.resolve(Some(stored), &a.disable)?)
    };
    let opts = RunOptions { halt_after: a.halt_after, allow_config_change: a.allow_config_change };
    let result = resume(&a.out, config.as_ref(), &opts);
    finish(result, &a.out, 0, json, out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let bytes = std::fs::read(path)
        .map_err(|e| Failure { code: EXIT_FAILURE, message: format!("{}: {e}", path.display()) })?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Failure { code: EXIT_FAILURE, message: format!("{}: {e}", path.display()) })
}

#[derive(Serialize)]
struct LintDocument<'a> {
    script: String,
    findings: &'a [Finding],
}

fn cmd_lint(a: &LintArgs, json: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let bytes =
        std::fs::read(&a.script).map_err(|e| Failure::usage(format!("{}: {e}", a.script.display())))?;
    let script = parse_script(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", a.script.display())))?;
    let checker = crate::guidelines::ContentRules::default()
        .compile()
        .map_err(|e| Failure::usage(format!("content rules: {e}")))?;
    let findings = lint_script(&script, a.shots, &checker);
    if json {
        let doc = LintDocument { script: a.script.display().to_string(), findings: &findings };
        out.write_all(&canonical_json(&doc))?;
        writeln!(out)?;
    } else {
        for f in &findings {
            writeln!(out, "{f}")?;
        }
    }
    Ok(if findings.is_empty() { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_report(a: &ReportArgs, json: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let state = RunState::load(&a.out).map_err(|_| Failure::from(RunError::NotARun(a.out.clone())))?;
    let path = a.out.join(REPORT_FILE);
    if !state.is_done() || !path.is_file() {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: format!("{} has not finished; resume it first", a.out.display()),
        });
    }
    let report: MetricsReport = read_json(&path)?;
    if json {
        out.write_all(&canonical_json(&report))?;
        writeln!(out)?;
    } else {
        out.write_all(render_report(&report).as_bytes())?;
    }
    Ok(EXIT_OK)
}

/// Human-readable form of a run report.
pub fn render_report(report: &MetricsReport) -> String {
    let mut s = format!("run {} ({} shots)\n\ncompliance\n", report.run_id, report.shots);
    let rows = report
        .compliance
        .iter()
        .map(|(k, c)| vec![k.clone(), c.passed.to_string(), c.total.to_string(), format!("{:.1}", c.rate)])
        .collect();
    s += &table(&["check", "passed", "total", "rate"], rows);
    s += "\nloops\n";
    let rows = report
        .max_iterations
        .iter()
        .map(|(k, n)| {
            let loops: Vec<_> =
                report.loops.iter().filter(|l| crate::orchestrator::loop_kind(l) == k).collect();
            let budget = loops.iter().map(|l| l.max_iterations).max().unwrap_or(0);
            let exhausted =
                loops.iter().filter(|l| l.outcome == crate::engine::Outcome::BudgetExhausted).count();
            vec![k.clone(), loops.len().to_string(), n.to_string(), budget.to_string(), exhausted.to_string()]
        })
        .collect();
    s += &table(&["loop", "count", "max iterations", "budget", "exhausted"], rows);
    s += &format!("\nresidual findings: {}\n", report.residual_findings);
    if !report.stage_seconds.is_empty() {
        s += "\nstage seconds\n";
        let rows = StageId::ALL
            .iter()
            .filter_map(|st| {
                report.stage_seconds.get(st.as_str()).map(|v| vec![st.to_string(), format!("{v:.3}")])
            })
            .collect();
        s += &table(&["stage", "seconds"], rows);
    }
    s
}

fn cmd_ablate(a: &AblateArgs, json: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let prompt = read_prompt(&a.prompt, &a.story, Some(DEFAULT_ABLATION_PROMPT))?;
    let base = a.config.resolve(None, &[])?;
    let toggles: BTreeSet<Agent> = if a.disable.is_empty() {
        Agent::ALL.into_iter().collect()
    } else {
        a.disable.iter().copied().collect()
    };
    let report = run_ablation(&base, &prompt, &toggles, a.trials, &DefectModel::default())?;
    let text = render_ablation(&report);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ablation.json"), canonical_json(&report))?;
        std::fs::write(dir.join("ablation.txt"), &text)?;
    }
    if json {
        out.write_all(&canonical_json(&report))?;
        writeln!(out)?;
    } else {
        out.write_all(text.as_bytes())?;
    }
    Ok(EXIT_OK)
}

/// Comparison table of an ablation: one row per configuration, one column
/// per check family, followed by the paired sign tests.
pub fn render_ablation(report: &AblationReport) -> String {
    let families: BTreeSet<&str> =
        report.rows.iter().flat_map(|r| r.compliance.keys().map(String::as_str)).collect();
    let mut headers = vec!["configuration"];
    headers.extend(families.iter().copied());
    headers.push("failed");
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone()];
            row.extend(
                families.iter().map(|f| r.compliance.get(*f).map_or("-".into(), |v| format!("{v:.1}"))),
            );
            row.push(r.failed_runs.to_string());
            row
        })
        .collect();
    let mut s = format!("{} trials, {} shots\n\n", report.trials, report.shots);
    s += &table(&headers, rows);
    if !report.sign_tests.is_empty() {
        s += "\nsign tests (enabled vs ablated)\n";
        let rows = report
            .sign_tests
            .iter()
            .map(|t| {
                vec![
                    t.toggle.to_string(),
                    t.family.clone(),
                    t.wins.to_string(),
                    t.losses.to_string(),
                    format_p(t.p_value),
                ]
            })
            .collect();
        s += &table(&["agent", "check", "wins", "losses", "p"], rows);
    }
    s
}

fn format_p(p: f64) -> String {
    if p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.2e}")
    }
}

/// Left-aligns the first column and right-aligns the rest.
fn table(headers: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                s += &format!("{cell:<w$}");
            } else {
                s += &format!("  {cell:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut s = line(headers.to_vec());
    s +=
        &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in &rows {
        s += &line(r.iter().map(String::as_str).collect());
    }
    s
}
