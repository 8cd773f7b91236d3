//! Command-line front end: expression ingestion, subcommand dispatch, and
//! JSON report emission. Reports are deterministic for a fixed config and
//! seed; the JSON goes to stdout (or `--report`), human summaries to stderr.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use antinv::kernel::{self, SweepReport, DEFAULT_TOL_RATIO};
use antinv::nilmanifold;
use antinv::product6d;
use antinv::r4family::{self, AntiInvariantCandidate};
use antinv::symexpr::{self, is_zero, SampleDomain, ScalarExpr};
use antinv::verification;

#[derive(Parser)]
#[command(
    name = "antinv",
    version,
    about = "Anti-invariant form constructions: symbolic verification and kernel estimation"
)]
struct Cli {
    /// RNG seed for sampled checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of sample points for the probabilistic zero test.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Zero-test tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Key-value config file mirroring the flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON report to this path instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check closedness of a·β + b·γ for J_f on the four-equation system.
    VerifyClosed {
        #[arg(long, allow_hyphen_values = true)]
        a: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        b: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        f: Option<String>,
    },
    /// Nijenhuis components and integrability of a named structure.
    Nijenhuis {
        /// `jf` (needs --f) or `kt` (needs --lambda, --mu).
        #[arg(long)]
        structure: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        f: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<String>,
    },
    /// A member of the closed family: either --s/--t on the constraint
    /// circle, or --n for the countable subfamily.
    AlphaFamily {
        #[arg(long, allow_hyphen_values = true)]
        s: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        t: Option<f64>,
        #[arg(long)]
        n: Option<u32>,
    },
    /// Kodaira–Thurston verification for J_{λ,μ}.
    Kodaira {
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<String>,
    },
    /// Product-chart checks for the 6-dimensional structure.
    Product6d {
        #[arg(long, allow_hyphen_values = true)]
        f: Option<String>,
    },
    /// Kernel-dimension estimate for the discretized closedness system.
    Hminus {
        #[arg(long, allow_hyphen_values = true)]
        f: Option<String>,
        /// Comma-separated even resolutions, e.g. `4,6,8`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long = "tol-ratio")]
        tol_ratio: Option<f64>,
    },
    /// Run the complete built-in verification battery.
    ReproducePaper {
        /// Trim the expensive kernel resolutions.
        #[arg(long)]
        quick: bool,
    },
}

/// Resolved global settings, echoed into every report.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    seed: u64,
    samples: usize,
    tolerance: f64,
}

struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    fn load(path: Option<&PathBuf>) -> Result<Self> {
        let mut values = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("config line {} is not `key = value`", lineno + 1))?;
                values.insert(key.trim().to_owned(), value.trim().to_owned());
            }
        }
        Ok(ConfigFile { values })
    }

    fn string(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.values.get(key).cloned())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("config value for `{key}` is invalid: `{raw}`")),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests keep clap's behavior; genuine usage
            // errors are validation failures.
            use clap::error::ErrorKind;
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                err.exit();
            }
            eprintln!("{err}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = ConfigFile::load(cli.config.as_ref())?;
    let seed = file
        .parse("seed", cli.seed)?
        .unwrap_or(symexpr::DEFAULT_SEED);
    let samples = file
        .parse("samples", cli.samples)?
        .unwrap_or(symexpr::DEFAULT_SAMPLES);
    let tolerance = file
        .parse("tol", cli.tol)?
        .unwrap_or(symexpr::DEFAULT_TOLERANCE);
    if samples == 0 {
        bail!("--samples must be at least 1");
    }
    // Negated so that NaN fails validation too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(tolerance > 0.0) {
        bail!("--tol must be positive");
    }
    let settings = Settings {
        seed,
        samples,
        tolerance,
    };

    let domain_for = |vars: &[&str]| -> SampleDomain {
        SampleDomain::unit(vars)
            .with_samples(settings.samples)
            .with_tolerance(settings.tolerance)
            .with_seed(settings.seed)
    };

    let (command_name, config_json, report_json, exit): (
        &str,
        serde_json::Value,
        serde_json::Value,
        ExitCode,
    ) = match &cli.command {
        Command::VerifyClosed { a, b, f } => {
            let a_text = file
                .string("a", a.clone())
                .ok_or_else(|| anyhow!("verify-closed requires --a"))?;
            let b_text = file
                .string("b", b.clone())
                .ok_or_else(|| anyhow!("verify-closed requires --b"))?;
            let f_text = file
                .string("f", f.clone())
                .ok_or_else(|| anyhow!("verify-closed requires --f"))?;
            let parse_r4 = |text: &str| -> Result<ScalarExpr> {
                symexpr::parse(text, &r4family::CHART).map_err(|e| anyhow!("in `{text}`: {e}"))
            };
            let candidate = AntiInvariantCandidate {
                a: parse_r4(&a_text)?,
                b: parse_r4(&b_text)?,
            };
            let f_expr = parse_r4(&f_text)?;
            let dom = domain_for(&r4family::CHART);
            let residuals = r4family::first_order_residual(&candidate, &f_expr);
            let mut entries = Vec::new();
            let mut closed = true;
            for (i, r) in residuals.iter().enumerate() {
                let zero = is_zero(r, &dom)?;
                let mut sup: f64 = 0.0;
                for point in dom.points() {
                    sup = sup.max(r.evaluate(&point)?.abs());
                }
                closed = closed && zero;
                entries.push(json!({
                    "equation": i + 1,
                    "residual": r.to_string(),
                    "zero": zero,
                    "sup_norm_sampled": sup,
                }));
            }
            let report = json!({
                "f": f_text, "a": a_text, "b": b_text,
                "equations": entries,
                "closed": closed,
            });
            eprintln!(
                "verify-closed: {}",
                if closed { "closed" } else { "not closed" }
            );
            let config = json!({"a": a_text, "b": b_text, "f": f_text});
            ("verify-closed", config, report, ExitCode::SUCCESS)
        }
        Command::Nijenhuis {
            structure,
            f,
            lambda,
            mu,
        } => {
            let structure = file
                .string("structure", structure.clone())
                .unwrap_or_else(|| "jf".to_owned());
            match structure.as_str() {
                "jf" => {
                    let f_text = file
                        .string("f", f.clone())
                        .ok_or_else(|| anyhow!("nijenhuis --structure jf requires --f"))?;
                    let f_expr = symexpr::parse(&f_text, &r4family::CHART)
                        .map_err(|e| anyhow!("in `{f_text}`: {e}"))?;
                    let jf = r4family::build_jf(f_expr)?;
                    let dom = domain_for(&r4family::CHART);
                    let names = ["dx1", "dx2", "dy1", "dy2"];
                    let mut components = Vec::new();
                    for j in 0..4 {
                        for k in (j + 1)..4 {
                            let n = jf.acs().nijenhuis(j, k);
                            let entries: Vec<String> = n.iter().map(ToString::to_string).collect();
                            let vanishes = n
                                .iter()
                                .map(|c| is_zero(c, &dom))
                                .collect::<Result<Vec<_>, _>>()?
                                .into_iter()
                                .all(|z| z);
                            components.push(json!({
                                "pair": [names[j], names[k]],
                                "components": entries,
                                "vanishes": vanishes,
                            }));
                        }
                    }
                    let integrable = jf.acs().is_integrable(&dom)?;
                    eprintln!(
                        "nijenhuis jf: {}",
                        if integrable {
                            "integrable"
                        } else {
                            "non-integrable"
                        }
                    );
                    let report = json!({
                        "structure": "jf", "f": f_text,
                        "pairs": components,
                        "integrable": integrable,
                    });
                    let config = json!({"structure": "jf", "f": f_text});
                    ("nijenhuis", config, report, ExitCode::SUCCESS)
                }
                "kt" => {
                    let lt = file
                        .string("lambda", lambda.clone())
                        .ok_or_else(|| anyhow!("nijenhuis --structure kt requires --lambda"))?;
                    let mt = file
                        .string("mu", mu.clone())
                        .ok_or_else(|| anyhow!("nijenhuis --structure kt requires --mu"))?;
                    let l = symexpr::parse(&lt, &nilmanifold::CHART)
                        .map_err(|e| anyhow!("in `{lt}`: {e}"))?;
                    let m = symexpr::parse(&mt, &nilmanifold::CHART)
                        .map_err(|e| anyhow!("in `{mt}`: {e}"))?;
                    let j = nilmanifold::build_j_lambda_mu(&l, &m)?;
                    let dom = domain_for(&nilmanifold::CHART);
                    let mut components = Vec::new();
                    for a in 0..4 {
                        for b in (a + 1)..4 {
                            let n = j.nijenhuis(a, b);
                            components.push(json!({
                                "pair": [format!("E{}", a + 1), format!("E{}", b + 1)],
                                "components": n.iter().map(ToString::to_string).collect::<Vec<_>>(),
                            }));
                        }
                    }
                    let integrable = j.is_integrable(&dom)?;
                    eprintln!(
                        "nijenhuis kt: {}",
                        if integrable {
                            "integrable"
                        } else {
                            "non-integrable"
                        }
                    );
                    let report = json!({
                        "structure": "kt", "lambda": lt, "mu": mt,
                        "pairs": components,
                        "integrable": integrable,
                    });
                    let config = json!({"structure": "kt", "lambda": lt, "mu": mt});
                    ("nijenhuis", config, report, ExitCode::SUCCESS)
                }
                other => bail!("unknown structure `{other}` (expected `jf` or `kt`)"),
            }
        }
        Command::AlphaFamily { s, t, n } => {
            let n_value = file.parse("n", *n)?;
            let (s_value, t_value) = match n_value {
                Some(n) => {
                    if n == 0 {
                        bail!("--n must be at least 1");
                    }
                    r4family::alpha_n_parameters(n)
                }
                None => {
                    let s = file
                        .parse("s", *s)?
                        .ok_or_else(|| anyhow!("alpha-family requires --s/--t or --n"))?;
                    let t = file
                        .parse("t", *t)?
                        .ok_or_else(|| anyhow!("alpha-family requires --s/--t or --n"))?;
                    (s, t)
                }
            };
            let alpha = r4family::alpha_family(s_value, t_value)?;
            let dom = domain_for(&r4family::CHART);
            let d = alpha.exterior_derivative()?;
            let closed = d.is_zero_form(&dom)?;
            eprintln!("alpha-family: s = {s_value}, t = {t_value}, closed = {closed}");
            let report = json!({
                "s": s_value,
                "t": t_value,
                "constraint_residual": s_value * s_value + t_value * t_value + t_value,
                "form": alpha.to_json(),
                "closed": closed,
            });
            let config = json!({"s": s_value, "t": t_value, "n": n_value});
            ("alpha-family", config, report, ExitCode::SUCCESS)
        }
        Command::Kodaira { lambda, mu } => {
            let lt = file
                .string("lambda", lambda.clone())
                .ok_or_else(|| anyhow!("kodaira requires --lambda"))?;
            let mt = file
                .string("mu", mu.clone())
                .ok_or_else(|| anyhow!("kodaira requires --mu"))?;
            let l =
                symexpr::parse(&lt, &nilmanifold::CHART).map_err(|e| anyhow!("in `{lt}`: {e}"))?;
            let m =
                symexpr::parse(&mt, &nilmanifold::CHART).map_err(|e| anyhow!("in `{mt}`: {e}"))?;
            let report = nilmanifold::verify_h_minus_2(&l, &m)?;
            eprintln!(
                "kodaira: checks {}; dimension sandwich 2 <= h- <= {}",
                if report.passed() { "passed" } else { "FAILED" },
                report.b_plus
            );
            let config = json!({"lambda": lt, "mu": mt});
            let report = serde_json::to_value(&report)?;
            ("kodaira", config, report, ExitCode::SUCCESS)
        }
        Command::Product6d { f } => {
            let f_text = file
                .string("f", f.clone())
                .ok_or_else(|| anyhow!("product6d requires --f"))?;
            let f_expr = symexpr::parse(&f_text, &product6d::CHART)
                .map_err(|e| anyhow!("in `{f_text}`: {e}"))?;
            let chart = product6d::build_product_acs(f_expr)?;
            let nij = product6d::product_nijenhuis_check(&chart)?;
            let forms = product6d::local_anti_invariant_check(&chart)?;
            eprintln!(
                "product6d: nijenhuis identity {}, forms {}",
                if nij.identity_holds { "holds" } else { "FAILS" },
                if forms.all_pass() { "pass" } else { "FAIL" }
            );
            let report = json!({
                "f": f_text,
                "nijenhuis": serde_json::to_value(&nij)?,
                "anti_invariant_forms": serde_json::to_value(&forms)?,
            });
            let config = json!({"f": f_text});
            ("product6d", config, report, ExitCode::SUCCESS)
        }
        Command::Hminus { f, grid, tol_ratio } => {
            let f_text = file
                .string("f", f.clone())
                .ok_or_else(|| anyhow!("hminus requires --f"))?;
            let grid_text = file
                .string("grid", grid.clone())
                .unwrap_or_else(|| "4,6".to_owned());
            let ratio = file
                .parse("tol-ratio", *tol_ratio)?
                .unwrap_or(DEFAULT_TOL_RATIO);
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(ratio >= 1.0) {
                bail!("--tol-ratio must be at least 1");
            }
            let resolutions: Vec<usize> = grid_text
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse::<usize>()
                        .map_err(|_| anyhow!("bad grid entry `{part}`"))
                })
                .collect::<Result<_>>()?;
            if resolutions.is_empty() {
                bail!("--grid needs at least one resolution");
            }
            let f_expr = symexpr::parse(&f_text, &r4family::CHART)
                .map_err(|e| anyhow!("in `{f_text}`: {e}"))?;
            let f_fn = move |p: &[f64; 4]| -> f64 {
                let point: HashMap<String, f64> = r4family::CHART
                    .iter()
                    .zip(p.iter())
                    .map(|(name, v)| ((*name).to_owned(), *v))
                    .collect();
                f_expr.evaluate(&point).unwrap_or(f64::NAN)
            };
            let sweep = kernel::resolution_sweep(&f_fn, &resolutions, ratio)?;
            let any_ambiguous = sweep.reports.iter().any(|r| r.ambiguous);
            let exit = if sweep.stable {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            };
            eprintln!(
                "hminus: dim = {:?}, stable = {}, ambiguous = {}",
                sweep.dim, sweep.stable, any_ambiguous
            );
            let report = sweep_report_json(&f_text, &resolutions, &sweep);
            let config = json!({"f": f_text, "grid": grid_text, "tol_ratio": ratio});
            ("hminus", config, report, exit)
        }
        Command::ReproducePaper { quick } => {
            let reports = verification::run_battery(*quick);
            let all_passed = reports.iter().all(|r| r.passed);
            for r in &reports {
                eprintln!(
                    "criterion {:2} ({}): {}",
                    r.id,
                    r.name,
                    if r.passed { "PASS" } else { "FAIL" }
                );
            }
            let criteria: Vec<serde_json::Value> = reports
                .iter()
                .map(|r| {
                    // Timing is environment noise; keep the report
                    // byte-identical across runs.
                    json!({
                        "id": r.id,
                        "name": r.name,
                        "passed": r.passed,
                        "details": r.details,
                    })
                })
                .collect();
            let report = json!({"criteria": criteria, "all_passed": all_passed});
            let config = json!({"quick": quick});
            let exit = if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
            ("reproduce-paper", config, report, exit)
        }
    };

    let envelope = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command_name,
        "config": {
            "seed": settings.seed,
            "samples": settings.samples,
            "tol": settings.tolerance,
            "args": config_json,
        },
        "report": report_json,
    });
    let rendered = serde_json::to_string_pretty(&envelope)?;
    match &cli.report {
        Some(path) => fs::write(path, rendered.as_bytes())
            .with_context(|| format!("cannot write report to {}", path.display()))?,
        None => println!("{rendered}"),
    }
    Ok(exit)
}

fn sweep_report_json(f: &str, grid: &[usize], sweep: &SweepReport) -> serde_json::Value {
    json!({
        "f": f,
        "grid": grid,
        "singular_values": sweep.reports.iter().map(|r| r.singular_values.clone()).collect::<Vec<_>>(),
        "dim": sweep.dim,
        "stable": sweep.stable,
        "ambiguous": sweep.reports.iter().map(|r| r.ambiguous).collect::<Vec<_>>(),
        "basis_residuals": sweep.reports.iter().map(|r| r.basis_residuals.clone()).collect::<Vec<_>>(),
        "gap_ratios": sweep.reports.iter().map(|r| r.gap_ratio).collect::<Vec<_>>(),
    })
}
