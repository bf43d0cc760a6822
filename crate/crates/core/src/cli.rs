//! Command-line front end: `check | solve | fluct | diagnose | recode`.
//!
//! Exit codes: 0 success, 2 validation or usage, 3 infeasible, 4 numerical
//! failure. With `--json` every command prints one object
//! `{command, config_digest, params, results}`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::ballmass::{singularity_series, write_series, DiagnosticSeries, Growth};
use crate::config::{preset, preset_names, ConfigIssue, Model, ModelConfig};
use crate::error::Error;
use crate::fluctuation::{
    asip_harness, green_kubo_covariance, nonsingularity_check, select_nonsingular, CoboundaryVerdict, LagPolicy,
};
use crate::markov::MarkovMeasure;
use crate::solver::{bowen_root, level_set_sample, pressure, solve_dimension_two, Presentation, SolveOptions, SolveResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "flowdim", version, about = "Dimension-two Markov measures for suspension flows over subshifts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a model and report mixing index, Bowen root and feasibility.
    Check(Source),
    /// Find Markov measures with h/∫F^u = 1/2.
    Solve(SolveArgs),
    /// Exact covariance, nondegeneracy tests and the tail-event harness.
    Fluct(FluctArgs),
    /// Ball-mass singularity series along ε(n) = exp(-n b).
    Diagnose(DiagnoseArgs),
    /// Higher block presentation of a model.
    Recode(RecodeArgs),
}

#[derive(Debug, Args)]
pub struct Source {
    /// Model file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled model.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(preset_names()))]
    pub preset: Option<String>,
    /// Print a single JSON object.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 4)]
    pub ell_max: usize,
    /// Number of distinct level-set points.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Return a level-set point with nonsingular fluctuation covariance.
    #[arg(long)]
    pub nonsingular: bool,
    /// Required with `--count > 1` or `--nonsingular`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the first solution, embedded in its model, to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FluctArgs {
    #[command(flatten)]
    pub source: Source,
    /// Monte Carlo paths; 0 gives the exact report only.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "1000:2000:1000")]
    pub n_grid: String,
    #[arg(long, default_value_t = crate::fluctuation::DEFAULT_D)]
    pub big_d: f64,
    #[arg(long, default_value_t = crate::fluctuation::DEFAULT_C_TILDE)]
    pub c_tilde: f64,
    /// Longest periodic orbit used by the nondegeneracy tests.
    #[arg(long, default_value_t = 8)]
    pub l_max: usize,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value = "250:2000:250")]
    pub n_grid: String,
    #[arg(long, default_value_t = crate::fluctuation::DEFAULT_D)]
    pub big_d: f64,
    /// The additive constant C of the stopping rule.
    #[arg(long, default_value_t = crate::ballmass::DEFAULT_C, allow_hyphen_values = true)]
    pub offset_c: f64,
    #[arg(long, default_value_t = crate::fluctuation::DEFAULT_C_TILDE)]
    pub c_tilde: f64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecodeArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub ell: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command: exit code and machine-readable errors.
#[derive(Debug)]
struct Failure {
    code: i32,
    errors: Vec<ConfigIssue>,
    extra: Option<(&'static str, Value)>,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, errors: vec![ConfigIssue { kind: "usage", message: message.into() }], extra: None }
    }

    fn io(e: std::io::Error, what: &str) -> Self {
        Self { code: EXIT_VALIDATION, errors: vec![ConfigIssue { kind: "io", message: format!("{what}: {e}") }], extra: None }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind, extra) = match &e {
            Error::Infeasible { s_star } => (EXIT_INFEASIBLE, "infeasible", Some(("s_star", json!(s_star)))),
            Error::Numerical(_) => (EXIT_NUMERICAL, "numerical", None),
            _ => (EXIT_VALIDATION, "invalid", None),
        };
        Self { code, errors: vec![ConfigIssue { kind, message: e.to_string() }], extra }
    }
}

struct Report {
    command: &'static str,
    digest: Option<String>,
    params: Value,
    json: bool,
}

impl Report {
    fn emit(&self, out: &mut dyn Write, results: &Value) -> std::io::Result<()> {
        let doc = json!({
            "command": self.command,
            "config_digest": self.digest,
            "params": self.params,
            "results": results,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("report serializes"))
    }
}

/// Parses `a:b:step` into `a, a+step, ..., <= b`.
pub fn parse_grid(s: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || format!("n-grid {s:?} must be a:b:step with 0 < a <= b and step > 0");
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<usize> = parts.iter().map(|p| p.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if a == 0 || step == 0 || b < a {
        return Err(bad());
    }
    Ok((a..=b).step_by(step).collect())
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let (name, source) = match &cli.command {
        Command::Check(s) => ("check", s),
        Command::Solve(a) => ("solve", &a.source),
        Command::Fluct(a) => ("fluct", &a.source),
        Command::Diagnose(a) => ("diagnose", &a.source),
        Command::Recode(a) => ("recode", &a.source),
    };
    let mut report = Report {
        command: name,
        digest: None,
        params: json!({ "config": source.config, "preset": source.preset }),
        json: source.json,
    };
    let result = load(source).and_then(|(cfg, model)| {
        report.digest = Some(cfg.digest());
        match &cli.command {
            Command::Check(_) => check(&model, &mut report, out),
            Command::Solve(a) => solve(&model, a, &mut report, out),
            Command::Fluct(a) => fluct(&model, a, &mut report, out),
            Command::Diagnose(a) => diagnose(&model, a, &mut report, out, err),
            Command::Recode(a) => recode(&model, a, &mut report, out),
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            if report.json {
                let mut results = json!({ "errors": f.errors });
                if let Some((k, v)) = &f.extra {
                    results[*k] = v.clone();
                }
                let _ = report.emit(out, &results);
            } else {
                for e in &f.errors {
                    let _ = writeln!(err, "error [{}]: {}", e.kind, e.message);
                }
            }
            f.code
        }
    }
}

fn load(source: &Source) -> Result<(ModelConfig, Model), Failure> {
    let cfg = match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(e, &path.display().to_string()))?;
            ModelConfig::parse(&text).map_err(|e| Failure {
                code: EXIT_VALIDATION,
                errors: vec![ConfigIssue { kind: "schema", message: e.to_string() }],
                extra: None,
            })?
        }
        (None, Some(name)) => preset(name).ok_or_else(|| Failure::usage(format!("unknown preset {name}")))?,
        (None, None) => return Err(Failure::usage("one of --config or --preset is required")),
    };
    let model = cfg.validate().map_err(|errors| Failure { code: EXIT_VALIDATION, errors, extra: None })?;
    Ok((cfg, model))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure::io(e, "output"))
}

fn check(model: &Model, report: &mut Report, out: &mut dyn Write) -> Result<(), Failure> {
    let sft = &model.sft;
    let mixing = sft.mixing_index(sft.alphabet_size().pow(2) * 2);
    let mut results = json!({
        "valid": true,
        "alphabet_size": sft.alphabet_size(),
        "edges": sft.edge_count(),
        "free_parameters": sft.free_parameters(),
        "mixing_index": mixing,
        "fu_depth": model.fu.depth(),
        "roof_depth": model.roof.depth(),
    });
    if mixing.is_some() {
        let pres = Presentation::new(sft, &model.fu, &model.roof, model.fu.depth().saturating_sub(1).max(1))?;
        let s_star = bowen_root(&pres.sft, &pres.fu)?;
        results["topological_entropy"] = json!(pressure(&pres.sft, &pres.fu, 0.0)?);
        results["s_star"] = json!(s_star);
        let verdict = solve_dimension_two(sft, &model.fu, &model.roof, &SolveOptions::default());
        results["feasible"] = json!(verdict.is_ok());
        if let Ok(r) = verdict {
            results["ell_needed"] = json!(r.ell_used);
        }
    } else {
        results["feasible"] = json!(false);
    }
    if report.json {
        return report.emit(out, &results).map_err(|e| Failure::io(e, "output"));
    }
    let mut text = format!(
        "valid model: {} symbols, {} edges, mixing index {}\n",
        sft.alphabet_size(),
        sft.edge_count(),
        mixing.map_or("none (not mixing)".to_string(), |p| p.to_string())
    );
    if let Some(s) = results.get("s_star") {
        text += &format!("Bowen root s* = {s}\n");
    }
    text += &format!("dimension-two measure: {}\n", if results["feasible"] == json!(true) { "feasible" } else { "infeasible" });
    write_out(out, &text)
}

fn require_seed(seed: Option<u64>, why: &str) -> Result<u64, Failure> {
    seed.ok_or_else(|| Failure::usage(format!("--seed is required {why}")))
}

fn solution_json(model: &Model, r: &SolveResult) -> Result<Value, Failure> {
    let nonsingular = nonsingularity_check(&r.measure, &r.presentation.fu, 8)?;
    let presented = presented_model(model, r)?;
    Ok(json!({
        "ell": r.ell_used,
        "alphabet": presented.names,
        "markov": r.measure.rows(),
        "stationary": r.measure.stationary().as_slice(),
        "stats": r.stats,
        "residual_ratio": r.report.residual_ratio,
        "residual_b2a": r.report.residual_b2a,
        "nonsingular": nonsingular.nonsingular,
        "rank_cycles": nonsingular.rank_cycles,
        "det_q": nonsingular.det_q,
    }))
}

/// The model on the presentation a solution lives on, carrying it.
fn presented_model(model: &Model, r: &SolveResult) -> Result<Model, Failure> {
    let mut m = if r.ell_used > 1 { model.recode(r.ell_used)?.1 } else { model.clone() };
    m.markov = Some(r.measure.clone());
    Ok(m)
}

fn solve(model: &Model, a: &SolveArgs, report: &mut Report, out: &mut dyn Write) -> Result<(), Failure> {
    let randomized = a.count > 1 || a.nonsingular;
    let seed = if randomized { require_seed(a.seed, "with --count > 1 or --nonsingular")? } else { a.seed.unwrap_or(0) };
    if a.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let opts = SolveOptions { tol: a.tol, ell_max: a.ell_max, seed, ..SolveOptions::default() };
    report.params["tol"] = json!(a.tol);
    report.params["ell_max"] = json!(a.ell_max);
    report.params["count"] = json!(a.count);
    report.params["nonsingular"] = json!(a.nonsingular);
    report.params["seed"] = json!(a.seed);
    let solutions = if a.nonsingular {
        let (r, _) = select_nonsingular(&model.sft, &model.fu, &model.roof, &opts, 8, 8.max(a.count))?;
        let mut v = vec![r];
        if a.count > 1 {
            v.extend(level_set_sample(&model.sft, &model.fu, &model.roof, a.count, &opts)?.into_iter().skip(1).take(a.count - 1));
        }
        v
    } else if a.count > 1 {
        level_set_sample(&model.sft, &model.fu, &model.roof, a.count, &opts)?
    } else {
        vec![solve_dimension_two(&model.sft, &model.fu, &model.roof, &opts)?]
    };
    let first = &solutions[0];
    let solved_cfg = presented_model(model, first)?.to_config(None);
    if let Some(path) = &a.out {
        std::fs::write(path, solved_cfg.to_json_pretty() + "\n").map_err(|e| Failure::io(e, &path.display().to_string()))?;
    }
    let list: Vec<Value> = solutions.iter().map(|r| solution_json(model, r)).collect::<Result<_, _>>()?;
    let results = json!({
        "s_star": first.s_star,
        "a_ell": first.a_ell,
        "ell_used": first.ell_used,
        "solutions": list,
        "config": solved_cfg,
    });
    if report.json {
        return report.emit(out, &results).map_err(|e| Failure::io(e, "output"));
    }
    let mut text = format!("s* = {:.12}  presentation: {}-block\n", first.s_star, first.ell_used);
    for (k, r) in solutions.iter().enumerate() {
        text += &format!(
            "solution {k}: h/∫F^u - 1/2 = {:.3e}, dim = {:.12}, b - 2a = {:.3e}\n  P = {:?}\n",
            r.report.residual_ratio,
            r.stats.dim,
            r.report.residual_b2a,
            r.measure.rows()
        );
    }
    write_out(out, &text)
}

fn verdict_json(model: &Model, v: &CoboundaryVerdict) -> Value {
    json!({
        "is_degenerate": v.is_degenerate,
        "witness": v.witness.as_ref().map(|c| model.name_of(c.symbols())),
        "witness_sum": v.witness_sum,
        "cycles_checked": v.cycles_checked,
    })
}

fn fluct(model: &Model, a: &FluctArgs, report: &mut Report, out: &mut dyn Write) -> Result<(), Failure> {
    let measure: &MarkovMeasure = model
        .markov
        .as_ref()
        .ok_or_else(|| Failure::usage("fluct needs a model with a markov block (run solve --out first)"))?;
    let grid = parse_grid(&a.n_grid).map_err(Failure::usage)?;
    let seed = if a.samples > 0 { Some(require_seed(a.seed, "when --samples > 0")?) } else { a.seed };
    if a.l_max < 1 {
        return Err(Failure::usage("--l-max must be at least 1"));
    }
    report.params["samples"] = json!(a.samples);
    report.params["seed"] = json!(seed);
    report.params["n_grid"] = json!(grid);
    report.params["D"] = json!(a.big_d);
    report.params["c_tilde"] = json!(a.c_tilde);
    report.params["l_max"] = json!(a.l_max);
    let check = nonsingularity_check(measure, &model.fu, a.l_max)?;
    let qs = green_kubo_covariance(measure, &model.fs, &LagPolicy::default())?;
    let mut results = json!({
        "q": check.q,
        "q_s": qs,
        "det_q": check.det_q,
        "rank_cycles": check.rank_cycles,
        "nonsingular": check.nonsingular,
        "entropy_coordinate": verdict_json(model, &check.x_verdict),
        "expansion_coordinate": verdict_json(model, &check.y_verdict),
    });
    let tail = match seed {
        Some(seed) if a.samples > 0 => {
            Some(asip_harness(measure, &model.fu, &model.fs, &grid, a.samples, a.big_d, a.c_tilde, seed)?)
        }
        _ => None,
    };
    if let Some(t) = &tail {
        results["tail"] = json!(t);
    }
    if report.json {
        return report.emit(out, &results).map_err(|e| Failure::io(e, "output"));
    }
    let q = check.q.q;
    let mut text = format!(
        "Q = [[{:.10}, {:.10}], [{:.10}, {:.10}]]  (lags used {}, residual {:.2e})\ndet Q = {:.6e}, cycle rank {} (orbits up to length {})\n",
        q[0][0], q[0][1], q[1][0], q[1][1], check.q.lag_used, check.q.truncation_residual, check.det_q, check.rank_cycles, a.l_max
    );
    for (label, v) in [("-G - a", &check.x_verdict), ("F^u - b", &check.y_verdict)] {
        text += &match &v.witness {
            Some(c) => format!(
                "{label}: not a coboundary, orbit ({}) has centered sum {:.6e}\n",
                model.name_of(c.symbols()),
                v.witness_sum.unwrap_or(0.0)
            ),
            None => format!("{label}: sums vanish on all {} orbits checked, coboundary candidate\n", v.cycles_checked),
        };
    }
    text += &format!("nonsingular: {}\n", check.nonsingular);
    if let Some(t) = &tail {
        text += "n, freq_u, freq_s, freq_joint, freq_u*freq_s, rho_pred\n";
        for (i, n) in t.n_grid.iter().enumerate() {
            text += &format!(
                "{n}, {:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.6e}\n",
                t.freq_u[i], t.freq_s[i], t.freq_joint[i], t.freq_product[i], t.rho_pred[i]
            );
        }
        for w in &t.warnings {
            text += &format!("warning: {w}\n");
        }
    }
    write_out(out, &text)
}

fn diagnose(model: &Model, a: &DiagnoseArgs, report: &mut Report, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let seed = require_seed(a.seed, "for diagnose")?;
    let grid = parse_grid(&a.n_grid).map_err(Failure::usage)?;
    if a.samples == 0 {
        return Err(Failure::usage("--samples must be positive"));
    }
    report.params["seed"] = json!(seed);
    report.params["samples"] = json!(a.samples);
    report.params["n_grid"] = json!(grid);
    report.params["D"] = json!(a.big_d);
    report.params["C"] = json!(a.offset_c);
    report.params["c_tilde"] = json!(a.c_tilde);
    let (presented, source) = match &model.markov {
        Some(_) => (model.clone(), "config"),
        None => {
            let (r, _) = select_nonsingular(&model.sft, &model.fu, &model.roof, &SolveOptions::default(), 8, 8)?;
            (presented_model(model, &r)?, "solved")
        }
    };
    let measure = presented.markov.as_ref().expect("measure present");
    let series = singularity_series(measure, &presented.fu, &presented.fs, a.big_d, a.offset_c, a.c_tilde, &grid, a.samples, seed)?;
    let mut csv = Vec::new();
    write_series(&series, &mut csv).map_err(|e| Failure::io(e, "csv"))?;
    if let Some(path) = &a.out {
        std::fs::write(path, &csv).map_err(|e| Failure::io(e, &path.display().to_string()))?;
    }
    let growth = series.growth();
    if report.json {
        let results = json!({
            "statistic": "ln((ε/2) μ_P([ω]_{-n2}^{n1}) / ε^2), a cylinder lower-bound proxy for the ball mass",
            "measure_source": source,
            "markov": measure.rows(),
            "growth": growth,
            "rows": series.rows,
            "warnings": series.warnings,
            "csv": a.out,
        });
        return report.emit(out, &results).map_err(|e| Failure::io(e, "output"));
    }
    let summary = summary_text(&series, growth, source);
    if a.out.is_some() {
        write_out(out, &summary)
    } else {
        out.write_all(&csv).map_err(|e| Failure::io(e, "output"))?;
        err.write_all(summary.as_bytes()).map_err(|e| Failure::io(e, "output"))
    }
}

fn summary_text(series: &DiagnosticSeries, growth: Growth, source: &str) -> String {
    let mut s = format!("measure: {source}; statistic: ln of cylinder lower bound over ε(n)^2\n");
    if let (Some(f), Some(l)) = (series.rows.first(), series.rows.last()) {
        s += &format!(
            "max_log_ratio: {:.6} at n = {} -> {:.6} at n = {}\n",
            f.max_log_ratio, f.n, l.max_log_ratio, l.n
        );
    }
    s += match growth {
        Growth::Increasing => "growth: increasing\n",
        Growth::Decreasing => "growth: decaying\n",
        Growth::Mixed => "growth: not monotone\n",
    };
    for w in &series.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

fn recode(model: &Model, a: &RecodeArgs, report: &mut Report, out: &mut dyn Write) -> Result<(), Failure> {
    if a.ell == 0 {
        return Err(Failure::usage("--ell must be at least 1"));
    }
    report.params["ell"] = json!(a.ell);
    let recoded = if a.ell == 1 { model.clone() } else { model.recode(a.ell)?.1 };
    let cfg = recoded.to_config(None);
    let text = cfg.to_json_pretty() + "\n";
    if let Some(path) = &a.out {
        std::fs::write(path, &text).map_err(|e| Failure::io(e, &path.display().to_string()))?;
    }
    if report.json {
        let results = json!({
            "ell": a.ell,
            "alphabet_size": recoded.sft.alphabet_size(),
            "config_digest_recoded": cfg.digest(),
            "config": cfg,
        });
        return report.emit(out, &results).map_err(|e| Failure::io(e, "output"));
    }
    write_out(out, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("250:2000:250").unwrap().len(), 8);
        assert_eq!(parse_grid("5:5:1").unwrap(), vec![5]);
        assert_eq!(parse_grid("1:10:4").unwrap(), vec![1, 5, 9]);
        for bad in ["0:10:1", "10:5:1", "1:10:0", "1:10", "a:b:c"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(Failure::from(Error::Infeasible { s_star: 0.2 }).code, EXIT_INFEASIBLE);
        assert_eq!(Failure::from(Error::Numerical("x".into())).code, EXIT_NUMERICAL);
        assert_eq!(Failure::from(Error::NotMixing).code, EXIT_VALIDATION);
    }
}
