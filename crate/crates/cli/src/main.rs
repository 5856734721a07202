//! `derivlab`: command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verification check fails or a
//! computation cannot finish, 2 on usage errors.

mod config;
mod verify;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use derivlab::catalog::{self, DerivationMap};
use derivlab::ckmr;
use derivlab::extremal::{self, RatioOptions};
use derivlab::seqspace::Weights;
use derivlab::{SeqVector, SpaceDescriptor};
use serde::Serialize;

use config::{OutputFormat, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "derivlab", version, about = "Interpolation derivations on finite sequence spaces")]
struct Cli {
    /// Flat JSON config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Dual-norm tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    support_cap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Norm of a vector file.
    Norm {
        #[arg(long)]
        space: String,
        #[arg(long)]
        input: PathBuf,
    },
    /// κ and κ* on [1, n] for n in a range.
    Kappa {
        #[arg(long)]
        space: String,
        #[arg(long, default_value = "1..16")]
        range: String,
    },
    /// Calderón distance between two spaces on [1, n].
    Distance {
        /// Spaces M,N.
        #[arg(long)]
        couple: String,
        #[arg(long, default_value = "1..8")]
        range: String,
    },
    /// Applies a derivation map to a vector file.
    Derive {
        #[arg(long)]
        map: String,
        /// Couple B0,B1 for critical maps.
        #[arg(long)]
        couple: Option<String>,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        p1: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Weights for weighted_demo: a path or an inline list `[w1, w2, ...]`.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Builds a selector sequence for a vector file.
    Selector {
        /// single-slot or lions-peetre.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        couple: Option<String>,
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        p1: Option<f64>,
        /// Slot index floor(log κ) for single-slot.
        #[arg(long, allow_hyphen_values = true)]
        floor: Option<i64>,
        #[arg(long, allow_hyphen_values = true, default_value_t = -1)]
        sign: i8,
    },
    /// Runs a verification suite.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// κ, κ* and critical derivation norm along [1, n].
    Growth {
        #[arg(long)]
        couple: String,
        #[arg(long, default_value_t = 16)]
        n_max: usize,
    },
    /// Weighted couple with κ(n) equal to a prescribed slow sequence.
    DemoSlowGrowth {
        /// `loglog`, a path, or an inline list `[d1, d2, ...]`.
        #[arg(long, default_value = "loglog")]
        delta: String,
        #[arg(long, default_value_t = 16)]
        n_max: usize,
    },
}

/// Errors caused by the invocation rather than the computation.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<derivlab::Error>() {
        Some(derivlab::Error::Solver(_)) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None if err.downcast_ref::<serde_json::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn parse_range(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| usage(format!("range '{s}' must look like a..b")))?;
    let a: usize = a.trim().parse().map_err(|_| usage(format!("bad range start in '{s}'")))?;
    let b: usize = b.trim().parse().map_err(|_| usage(format!("bad range end in '{s}'")))?;
    if a == 0 || a > b {
        return Err(usage(format!("range '{s}' must satisfy 1 <= a <= b")));
    }
    Ok((a, b))
}

/// Splits `X,Y` at the top-level comma, so inline weight lists stay whole.
fn split_pair(s: &str, what: &str) -> anyhow::Result<(String, String)> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => return Ok((s[..i].trim().to_string(), s[i + 1..].trim().to_string())),
            _ => {}
        }
    }
    Err(usage(format!("{what} '{s}' must be two comma-separated values")))
}

fn parse_couple(cfg: &RunConfig, s: &str) -> anyhow::Result<(SpaceDescriptor, SpaceDescriptor)> {
    let (a, b) = split_pair(s, "couple")?;
    Ok((cfg.space(&a)?, cfg.space(&b)?))
}

fn read_vector(path: &Path) -> anyhow::Result<SeqVector> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
    let bad = |msg: String| usage(format!("vector file {}: {msg}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    // Element-level type errors are reported by field before serde sees them.
    for (field, want_index) in [("indices", true), ("values", false)] {
        let Some(items) = value.get(field) else {
            return Err(bad(format!("missing field `{field}`")));
        };
        let items = items.as_array().ok_or_else(|| bad(format!("`{field}` must be an array")))?;
        for (k, item) in items.iter().enumerate() {
            let ok = if want_index { item.as_u64().is_some() } else { item.as_f64().is_some() };
            if !ok {
                let kind = if want_index { "a positive integer" } else { "a number" };
                return Err(bad(format!("`{field}[{k}]` must be {kind}, got {item}")));
            }
        }
    }
    serde_json::from_value(value).map_err(|e| bad(e.to_string()))
}

fn read_list(spec: &str, what: &str) -> anyhow::Result<Vec<f64>> {
    let w = if spec.trim_start().starts_with('[') {
        serde_json::from_str::<Vec<f64>>(spec).map_err(|e| usage(format!("{what}: {e}")))?
    } else {
        Weights::from_file(Path::new(spec))?.values.to_vec()
    };
    Ok(w)
}

fn ratio_options(cfg: &RunConfig) -> RatioOptions {
    RatioOptions { seed: cfg.seed, ..Default::default() }
}

fn need<T>(v: Option<T>, flag: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| usage(format!("--{flag} is required here")))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn emit(cli_out: Option<&Path>, body: &str) -> anyhow::Result<()> {
    match cli_out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load(
        cli.config.as_deref(),
        Overrides {
            seed: cli.seed,
            support_cap: cli.support_cap,
            dual_tolerance: cli.tol,
            trials: cli.trials,
            output_format: cli.format,
        },
    )
    .map_err(|e| usage(format!("{e:#}")))?;
    let out = cli.out.as_deref();
    let fmt = cfg.output_format;
    match cli.command {
        Command::Norm { space, input } => {
            let sp = cfg.space(&space)?;
            let x = read_vector(&input)?;
            let v = sp.norm(&x)?;
            let body = match fmt {
                OutputFormat::Csv => format!("space,norm\n{sp},{v}\n"),
                OutputFormat::Json => json(&serde_json::json!({ "space": sp, "norm": v }))?,
            };
            emit(out, &body)?;
        }
        Command::Kappa { space, range } => {
            let sp = cfg.space(&space)?;
            let (a, b) = parse_range(&range)?;
            if b > sp.support_bound {
                return Err(usage(format!("range end {b} exceeds the support cap {}", sp.support_bound)));
            }
            let rows = extremal::kappa_table(&sp, a..=b, &ratio_options(&cfg))?;
            let body = match fmt {
                OutputFormat::Json => json(&rows)?,
                OutputFormat::Csv => {
                    let mut s = String::from("n,kappa,kappa_star,log_kappa,floor_log_kappa,certified_gap\n");
                    for r in &rows {
                        writeln!(
                            s,
                            "{},{},{},{},{},{}",
                            r.n,
                            r.kappa,
                            r.kappa_star,
                            r.log_kappa,
                            r.floor_log_kappa,
                            csv_opt(r.certified_gap)
                        )?;
                    }
                    s
                }
            };
            emit(out, &body)?;
        }
        Command::Distance { couple, range } => {
            let (m, n) = parse_couple(&cfg, &couple)?;
            let (a, b) = parse_range(&range)?;
            let opts = ratio_options(&cfg);
            let mut rows = Vec::new();
            for k in a..=b {
                let d = extremal::calderon_distance(&m, &n, &extremal::interval(k), &opts)?;
                rows.push((k, d));
            }
            let body = match fmt {
                OutputFormat::Json => json(
                    &rows
                        .iter()
                        .map(|(k, d)| serde_json::json!({ "n": k, "gap_mn": d.gap_mn, "gap_nm": d.gap_nm, "distance": d.distance }))
                        .collect::<Vec<_>>(),
                )?,
                OutputFormat::Csv => {
                    let mut s = String::from("n,gap_mn,gap_nm,distance\n");
                    for (k, d) in &rows {
                        writeln!(s, "{k},{},{},{}", d.gap_mn, d.gap_nm, d.distance)?;
                    }
                    s
                }
            };
            emit(out, &body)?;
        }
        Command::Derive { map, couple, p0, p1, theta, weights, input } => {
            let omega = match map.as_str() {
                "kalton_peck" => DerivationMap::KaltonPeck,
                "zero" => DerivationMap::Zero,
                "lions_peetre" => DerivationMap::LionsPeetre {
                    p0: need(p0, "p0")?,
                    p1: need(p1, "p1")?,
                    theta: need(theta, "theta")?,
                },
                "rank_J" => DerivationMap::RankJ {
                    p0: need(p0, "p0")?,
                    p1: need(p1, "p1")?,
                    theta: need(theta, "theta")?,
                },
                "critical_real" => DerivationMap::CriticalReal { couple: parse_couple(&cfg, &need(couple, "couple")?)? },
                "critical_complex" => {
                    DerivationMap::CriticalComplex { couple: parse_couple(&cfg, &need(couple, "couple")?)? }
                }
                "weighted_demo" => DerivationMap::WeightedDemo { weights: read_list(&need(weights, "weights")?, "weights")? },
                other => {
                    return Err(usage(format!(
                        "unknown map '{other}'; expected kalton_peck, lions_peetre, rank_J, critical_real, critical_complex, weighted_demo or zero"
                    )))
                }
            };
            omega.validate()?;
            let b = read_vector(&input)?;
            let v = omega.apply(&b)?;
            emit(out, &json(&v)?)?;
        }
        Command::Selector { kind, input, couple, q, theta, p0, p1, floor, sign } => {
            let a = read_vector(&input)?;
            let report = match kind.as_str() {
                "single-slot" => {
                    let c = parse_couple(&cfg, &need(couple, "couple")?)?;
                    let q = match q {
                        Some(s) => {
                            let (x, y) = split_pair(&s, "q")?;
                            let parse = |t: &str| t.parse::<f64>().map_err(|_| usage(format!("bad q value '{t}'")));
                            (parse(&x)?, parse(&y)?)
                        }
                        None => (2.0, 2.0),
                    };
                    if sign != 1 && sign != -1 {
                        return Err(usage("--sign must be 1 or -1"));
                    }
                    ckmr::single_slot_selector(&a, need(floor, "floor")?, sign, theta.unwrap_or(0.5), c, q)?
                }
                "lions-peetre" => ckmr::lions_peetre_selector(&a, need(p0, "p0")?, need(p1, "p1")?, need(theta, "theta")?)?,
                other => return Err(usage(format!("unknown selector '{other}'; expected single-slot or lions-peetre"))),
            };
            emit(out, &json(&report)?)?;
        }
        Command::Verify { suite } => {
            let checks = verify::run(&suite, &cfg).map_err(|e| {
                if e.to_string().starts_with("unknown suite") {
                    usage(e.to_string())
                } else {
                    e
                }
            })?;
            let failed = checks.iter().filter(|c| !c.pass).count();
            let body = match fmt {
                OutputFormat::Json => json(&checks)?,
                OutputFormat::Csv => {
                    let mut s = String::from("suite,check,result,detail\n");
                    for c in &checks {
                        let detail = c.detail.replace('"', "'");
                        writeln!(s, "{},{},{},\"{detail}\"", c.suite, c.name, if c.pass { "pass" } else { "FAIL" })?;
                    }
                    s
                }
            };
            emit(out, &body)?;
            eprintln!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Growth { couple, n_max } => {
            let c = parse_couple(&cfg, &couple)?;
            let t = catalog::growth_diagnostic(&c, n_max, &ratio_options(&cfg))?;
            emit(out, &growth_body(&t, fmt)?)?;
        }
        Command::DemoSlowGrowth { delta, n_max } => {
            let d = if delta == "loglog" { catalog::loglog_delta(n_max) } else { read_list(&delta, "delta")? };
            let t = catalog::slow_growth_demo(&d, n_max, &ratio_options(&cfg))?;
            emit(out, &growth_body(&t, fmt)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn growth_body(t: &catalog::GrowthTable, fmt: OutputFormat) -> anyhow::Result<String> {
    if t.rows.iter().any(|r| r.heuristic) {
        eprintln!("note: some rows rest on heuristic kappa values");
    }
    eprintln!("critical derivation norm nonconstant: {}", t.nonconstant);
    Ok(match fmt {
        OutputFormat::Json => json(t)?,
        OutputFormat::Csv => {
            let mut s = String::from("n,kappa,kappa_star,floor_log_kappa,floor_log_kappa_star,critical_norm,heuristic\n");
            for r in &t.rows {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.n, r.kappa, r.kappa_star, r.floor_log_kappa, r.floor_log_kappa_star, r.critical_norm, r.heuristic
                )?;
            }
            s
        }
    })
}
