//! Command-line front-end. Every run prints one JSON report on stdout (or to
//! `--output`) and human-readable diagnostics on stderr.
//!
//! Exit codes: 0 stable / pass, 1 I/O, schema or usage error, 2 unstable or
//! failed validation, 3 marginal, 4 unsupported or assumptions not met,
//! 5 dimension cap, 6 solver failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lyapunov::{self, LyapunovCertificate, ValidationMode};
use crate::mcsim::{self, SimulationPlan};
use crate::models::{self, Law, MarkovJumpSystem, MatrixDistribution, Problem};
use crate::radius::{self, AssumptionPath, Verdict};

pub const SCHEMA_VERSION: u32 = 1;
pub const LIFT_CAP_ENV: &str = "SWITCHSTAB_MAX_LIFT_ENTRIES";

#[derive(Debug, Parser)]
#[command(
    name = "switchstab",
    version,
    about = "Mean stability analysis of stochastic switched linear systems"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InputArg {
    /// Problem file (JSON).
    #[arg(short, long)]
    pub input: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// p-radius of an i.i.d. law (or a Markov system for p in {1, 2}).
    Pradius {
        #[command(flatten)]
        input: InputArg,
        #[arg(short)]
        p: u32,
    },
    /// p-th mean stability verdict.
    Stability {
        #[command(flatten)]
        input: InputArg,
        #[arg(short)]
        p: u32,
        #[arg(long, default_value_t = radius::DEFAULT_DECISION_MARGIN)]
        margin: f64,
    },
    /// Synthesize a degree-p Lyapunov certificate.
    Lyapunov {
        #[command(flatten)]
        input: InputArg,
        #[arg(short)]
        p: u32,
        /// `exact` or `mc:N`.
        #[arg(long)]
        validate: Option<String>,
        #[arg(long, default_value_t = lyapunov::DEFAULT_VALIDATION_SEED)]
        seed: u64,
    },
    /// Joint spectral radius bracket by product enumeration.
    Jsr {
        #[command(flatten)]
        input: InputArg,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = radius::DEFAULT_PRODUCT_BUDGET)]
        budget: usize,
    },
    /// p-radius sequence for p = 1..=pmax.
    Limit {
        #[command(flatten)]
        input: InputArg,
        #[arg(long)]
        pmax: u32,
        #[arg(long)]
        even_only: bool,
        /// Also write `p,value` rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Markovian p-radius through T_p.
    Markov {
        #[command(flatten)]
        input: InputArg,
        #[arg(short)]
        p: u32,
        /// Use the modes M_i + n_i f.
        #[arg(long)]
        closed_loop: bool,
        /// Comma-separated gain overriding the one in the file.
        #[arg(long)]
        feedback: Option<String>,
        /// Allow p outside {1, 2}; no verdict is given.
        #[arg(long)]
        experimental_general_p: bool,
    },
    /// Monte Carlo moment series.
    Simulate {
        #[command(flatten)]
        input: InputArg,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        seed: u64,
        /// Comma-separated initial state.
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long = "p", default_value_t = 1)]
        p: u32,
        /// Certificate whose value is averaged alongside the norm.
        #[arg(long)]
        cert: Option<PathBuf>,
        /// One-based initial mode for Markov systems.
        #[arg(long)]
        initial_mode: Option<usize>,
        #[arg(long)]
        closed_loop: bool,
        /// Directory receiving the CSV series.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a certificate's decrease condition.
    Validate {
        #[arg(long)]
        cert: PathBuf,
        #[command(flatten)]
        input: InputArg,
        /// `exact` or `mc:N`.
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = lyapunov::DEFAULT_VALIDATION_SEED)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Pradius { .. } => "pradius",
            Command::Stability { .. } => "stability",
            Command::Lyapunov { .. } => "lyapunov",
            Command::Jsr { .. } => "jsr",
            Command::Limit { .. } => "limit",
            Command::Markov { .. } => "markov",
            Command::Simulate { .. } => "simulate",
            Command::Validate { .. } => "validate",
        }
    }

    fn input(&self) -> &Path {
        match self {
            Command::Pradius { input, .. }
            | Command::Stability { input, .. }
            | Command::Lyapunov { input, .. }
            | Command::Jsr { input, .. }
            | Command::Limit { input, .. }
            | Command::Markov { input, .. }
            | Command::Simulate { input, .. }
            | Command::Validate { input, .. } => &input.input,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub command: String,
    pub args: Vec<String>,
    pub input_digest: Option<String>,
    pub result: Value,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Value>,
}

struct Outcome {
    result: Value,
    warnings: Vec<String>,
    exit: i32,
}

impl Outcome {
    fn new(result: impl Serialize, exit: i32) -> Self {
        Self {
            result: serde_json::to_value(result).expect("serialisable"),
            warnings: Vec::new(),
            exit,
        }
    }
}

fn verdict_exit(v: Verdict) -> i32 {
    match v {
        Verdict::Stable => 0,
        Verdict::Unstable => 2,
        Verdict::Marginal => 3,
        Verdict::Unsupported => 4,
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("{what}: cannot parse {s:?} as a number"))
                })
        })
        .collect()
}

fn parse_mode(text: &str, seed: u64) -> Result<ValidationMode> {
    if text == "exact" {
        return Ok(ValidationMode::Exact);
    }
    text.strip_prefix("mc:")
        .and_then(|n| n.parse::<usize>().ok())
        .map(|samples| ValidationMode::MonteCarlo { samples, seed })
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "validation mode must be exact or mc:N, got {text:?}"
            ))
        })
}

fn require_iid<'a>(problem: &'a Problem, command: &str) -> Result<&'a MatrixDistribution> {
    problem
        .as_iid()
        .ok_or_else(|| Error::InvalidArgument(format!("{command} needs an i.i.d. problem file")))
}

fn closed_loop(sys: &MarkovJumpSystem, feedback: Option<&str>) -> Result<MarkovJumpSystem> {
    let sys = match feedback {
        Some(f) => sys.clone().with_feedback(parse_list(f, "--feedback")?)?,
        None => sys.clone(),
    };
    Ok(sys.apply_feedback()?)
}

fn unlicensed_warning(p: u32, path: AssumptionPath, warnings: &mut Vec<String>) {
    if path == AssumptionPath::Unsupported {
        warnings.push(format!(
            "p = {p} is odd and the support does not keep the orthant invariant; no value reported"
        ));
    }
}

fn execute(cmd: &Command, problem: &Problem) -> Result<Outcome> {
    match cmd {
        Command::Pradius { p, .. } => match problem {
            Problem::Iid(mu) => {
                let r = radius::p_radius(mu, *p)?;
                let exit = if r.is_licensed() { 0 } else { 4 };
                let mut out = Outcome::new(&r, exit);
                unlicensed_warning(*p, r.assumption_path, &mut out.warnings);
                Ok(out)
            }
            Problem::Markov(sys) => {
                let r = radius::markov_p_radius(sys, *p)?;
                let exit = if r.radius.is_licensed() { 0 } else { 4 };
                let mut out = Outcome::new(&r, exit);
                unlicensed_warning(*p, r.radius.assumption_path, &mut out.warnings);
                Ok(out)
            }
        },
        Command::Stability { p, margin, .. } => {
            let (report, verdict) = match problem {
                Problem::Iid(mu) => {
                    let r = radius::check_mean_stability_with_margin(mu, *p, *margin)?;
                    let v = r.verdict;
                    (serde_json::to_value(&r).expect("serialisable"), v)
                }
                Problem::Markov(sys) => {
                    let r = radius::markov_p_radius_with_margin(sys, *p, *margin)?;
                    let v = r.verdict.unwrap_or(Verdict::Unsupported);
                    (serde_json::to_value(&r).expect("serialisable"), v)
                }
            };
            let mut out = Outcome::new(report, verdict_exit(verdict));
            match verdict {
                Verdict::Marginal => out.warnings.push(format!("radius within {margin} of 1")),
                Verdict::Unsupported => out
                    .warnings
                    .push(format!("p = {p} is not licensed for this support")),
                _ => {}
            }
            Ok(out)
        }
        Command::Lyapunov {
            p, validate, seed, ..
        } => {
            let mu = require_iid(problem, "lyapunov")?;
            let cert = lyapunov::synthesize_degree_p(mu, *p)?;
            let mut result = json!({ "certificate": cert.to_json() });
            let mut exit = 0;
            let mut warnings = Vec::new();
            if let Some(mode) = validate {
                let report =
                    lyapunov::validate_certificate(&cert, mu, None, parse_mode(mode, *seed)?)?;
                if !report.passed {
                    exit = 2;
                    warnings.push(format!(
                        "{} test vectors violate the decrease condition",
                        report.violations
                    ));
                }
                result["validation"] = serde_json::to_value(&report).expect("serialisable");
            }
            Ok(Outcome {
                result,
                warnings,
                exit,
            })
        }
        Command::Jsr { depth, budget, .. } => {
            let atoms: Vec<linalg::Matrix> = match problem {
                Problem::Iid(mu) => match mu.law() {
                    Law::Atomic(atoms) => atoms.iter().map(|a| a.matrix.clone()).collect(),
                    Law::UniformEntries { .. } => {
                        return Err(Error::AssumptionsNotMet(
                            "joint spectral radius bounds need a finite (atomic) support".into(),
                        ))
                    }
                },
                Problem::Markov(sys) => sys.modes().to_vec(),
            };
            let b = radius::jsr_bounds_with_budget(&atoms, *depth, *budget)?;
            let mut out = Outcome::new(&b, 0);
            if b.truncated {
                out.warnings.push(format!(
                    "product budget reached; enumerated lengths up to {}",
                    b.depth
                ));
            }
            Ok(out)
        }
        Command::Limit {
            pmax,
            even_only,
            csv,
            ..
        } => {
            let mu = require_iid(problem, "limit")?;
            let seq = radius::limit_sequence(mu, *pmax, *even_only)?;
            let mut out = Outcome::new(&seq, 0);
            if seq.truncated {
                out.warnings.push(format!(
                    "dimension cap reached; sequence stops at p = {}",
                    seq.entries.last().map_or(0, |e| e.p)
                ));
            }
            if let Some(path) = csv {
                let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
                w.write_record(["p", "value"]).map_err(csv_error)?;
                for e in &seq.entries {
                    w.write_record([e.p.to_string(), e.value.to_string()])
                        .map_err(csv_error)?;
                }
                w.flush()?;
                out.result["csv"] = json!(path.display().to_string());
            }
            Ok(out)
        }
        Command::Markov {
            p,
            closed_loop: cl,
            feedback,
            experimental_general_p,
            ..
        } => {
            let base = problem.as_markov().ok_or_else(|| {
                Error::InvalidArgument("markov needs a Markov problem file".into())
            })?;
            let sys = if *cl {
                closed_loop(base, feedback.as_deref())?
            } else {
                base.clone()
            };
            let general = !matches!(p, 1 | 2);
            if general && !experimental_general_p {
                return Err(Error::AssumptionsNotMet(format!(
                    "Markovian p-radius verdicts cover p in {{1, 2}}; pass --experimental-general-p for p = {p}"
                )));
            }
            let r = if general {
                radius::markov_p_radius_experimental(&sys, *p)?
            } else {
                radius::markov_p_radius(&sys, *p)?
            };
            let exit = match r.verdict {
                Some(v) => verdict_exit(v),
                None => 0,
            };
            let mut out = Outcome::new(&r, exit);
            if r.experimental {
                out.warnings.push(format!(
                    "p = {p} is experimental; the value carries no stability verdict"
                ));
            }
            if r.verdict == Some(Verdict::Unsupported) {
                out.warnings
                    .push("p = 1 needs entrywise nonnegative modes; no value reported".into());
            }
            if *cl {
                out.result["closed_loop_modes"] = json!(sys
                    .modes()
                    .iter()
                    .map(linalg::Matrix::to_rows)
                    .collect::<Vec<_>>());
            }
            Ok(out)
        }
        Command::Simulate {
            paths,
            horizon,
            seed,
            x0,
            p,
            cert,
            initial_mode,
            closed_loop: cl,
            out_dir,
            ..
        } => {
            let mut plan = SimulationPlan::new(*paths, *horizon, *seed, parse_list(x0, "--x0")?)
                .with_exponent(*p);
            if let Some(m) = initial_mode {
                if *m == 0 {
                    return Err(Error::InvalidArgument("--initial-mode is one-based".into()));
                }
                plan = plan.with_initial_mode(m - 1);
            }
            fs::create_dir_all(out_dir)?;
            let moments_path = out_dir.join("moments.csv");
            let mut warnings = Vec::new();
            let mut result = json!({
                "paths": paths,
                "horizon": horizon,
                "seed": seed,
                "moment_exponent": p,
            });
            let (series, truncated) = match problem {
                Problem::Iid(mu) => {
                    if *cl || initial_mode.is_some() {
                        return Err(Error::InvalidArgument(
                            "--closed-loop and --initial-mode apply to Markov systems".into(),
                        ));
                    }
                    let certificate = match cert {
                        Some(path) => Some(LyapunovCertificate::from_json_str(
                            &fs::read_to_string(path)?,
                        )?),
                        None => None,
                    };
                    let sim = mcsim::simulate_iid(mu, &plan, certificate.as_ref())?;
                    if let Some(cs) = &sim.certificate {
                        let cert_path = out_dir.join("certificate_moments.csv");
                        cs.write_csv(fs::File::create(&cert_path)?)?;
                        result["certificate_csv"] = json!(cert_path.display().to_string());
                        result["certificate_decay"] = json!(mcsim::decay_rate(cs));
                    }
                    (sim.euclidean, sim.truncated_paths)
                }
                Problem::Markov(base) => {
                    if cert.is_some() {
                        return Err(Error::InvalidArgument(
                            "--cert applies to i.i.d. systems".into(),
                        ));
                    }
                    let sys = if *cl {
                        closed_loop(base, None)?
                    } else {
                        base.clone()
                    };
                    let sim = mcsim::simulate_markov(&sys, &plan)?;
                    result["final_mean_state"] = json!(sim.mean_state.last());
                    (sim.euclidean, sim.truncated_paths)
                }
            };
            series.write_csv(fs::File::create(&moments_path)?)?;
            result["csv"] = json!(moments_path.display().to_string());
            result["final_mean"] = json!(series.points.last().map(|pt| pt.mean));
            result["decay"] = json!(mcsim::decay_rate(&series));
            result["truncated_paths"] = json!(truncated);
            if truncated > 0 {
                warnings.push(format!(
                    "{truncated} paths overflowed and were dropped from later steps"
                ));
            }
            Ok(Outcome {
                result,
                warnings,
                exit: 0,
            })
        }
        Command::Validate {
            cert, mode, seed, ..
        } => {
            let mu = require_iid(problem, "validate")?;
            let certificate = LyapunovCertificate::from_json_str(&fs::read_to_string(cert)?)?;
            let report =
                lyapunov::validate_certificate(&certificate, mu, None, parse_mode(mode, *seed)?)?;
            let exit = if report.passed { 0 } else { 2 };
            let mut out = Outcome::new(&report, exit);
            if !report.passed {
                out.warnings.push(format!(
                    "{} test vectors violate the decrease condition",
                    report.violations
                ));
            }
            Ok(out)
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn error_value(e: &Error) -> Value {
    let pointer = match e {
        Error::Model(m) => m.pointer().map(str::to_owned),
        _ => None,
    };
    json!({ "exit_code": e.exit_code(), "message": e.to_string(), "pointer": pointer })
}

fn apply_lift_cap_env() -> Result<()> {
    if let Ok(raw) = std::env::var(LIFT_CAP_ENV) {
        let cap = raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{LIFT_CAP_ENV} must be a positive integer, got {raw:?}"
                ))
            })?;
        linalg::set_lift_cap(cap);
    }
    Ok(())
}

fn read_problem(path: &Path) -> Result<(Problem, String)> {
    let bytes = fs::read(path)?;
    let digest = format!("sha256:{}", hex::encode(Sha256::digest(&bytes)));
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::InvalidArgument(format!("{} is not UTF-8", path.display())))?;
    Ok((models::load_problem(&text)?, digest))
}

/// Parses `argv` (program name first), runs the command and writes the
/// report. Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
            return code;
        }
    };
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        command: cli.command.name().to_owned(),
        args,
        input_digest: None,
        result: Value::Null,
        warnings: Vec::new(),
        error: None,
    };

    let outcome = apply_lift_cap_env()
        .and_then(|()| read_problem(cli.command.input()))
        .and_then(|(problem, digest)| {
            report.input_digest = Some(digest);
            match cli.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
                    .install(|| execute(&cli.command, &problem)),
                None => execute(&cli.command, &problem),
            }
        });

    let code = match outcome {
        Ok(o) => {
            for w in &o.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            report.result = o.result;
            report.warnings = o.warnings;
            o.exit
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            report.error = Some(error_value(&e));
            e.exit_code()
        }
    };

    let text = serde_json::to_string_pretty(&report).expect("serialisable") + "\n";
    match &cli.output {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                return 1;
            }
        }
        None => {
            let _ = stdout.write_all(text.as_bytes());
        }
    }
    code
}
