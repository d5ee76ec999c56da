//! `bandcert` command-line front end.

mod report;

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use bandcert::catalog::{self, ExampleParams};
use bandcert::certify::{certify_band, grid_points, PipelineConfig, SearchConfig, Verdict};
use bandcert::dispersion::spectrum_at;
use bandcert::lattice::{family_to_json, parse_family_file, BlochFamily, Quasimomentum};
use bandcert::suites::{self, FamilySource, SUITE_NAMES};
use bandcert::Tolerances;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use report::{
    AngleConvention, CertifyOutput, InputIdentity, ReportedCertificate, RunReport, Timing, VerifyOutput,
    SCHEMA_VERSION,
};
use sha2::{Digest, Sha256};

const EXIT_CERTIFIED: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_NO_CERTIFICATE: u8 = 2;
const EXIT_HYPOTHESIS_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "bandcert", version, about = "Certify global extrema of dispersion bands of periodic graphs")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Seed for every random choice (search seeds, random suites).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative eigenvalue gap below which a band counts as degenerate.
    #[arg(long, global = true)]
    tol_gap: Option<f64>,
    /// Relative rank threshold for inertia and pseudoinverses.
    #[arg(long, global = true)]
    tol_rank: Option<f64>,
    /// Convention for reported quasimomenta.
    #[arg(long, global = true, value_enum, default_value = "pi")]
    angle_convention: AngleConvention,
    /// Write the main output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    #[arg(long, allow_hyphen_values = true)]
    qa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    qb: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    qc: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
}

impl Overrides {
    fn params(&self) -> ExampleParams {
        ExampleParams {
            qa: self.qa,
            qb: self.qb,
            qc: self.qc,
            beta: self.beta,
            t: self.t,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct InputOpts {
    /// Graph or raw-family JSON file; `-` reads standard input.
    file: Option<String>,
    /// Use a catalog example instead of a file.
    #[arg(long, conflicts_with = "file")]
    example: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate bands on a uniform grid as CSV.
    Bands {
        #[command(flatten)]
        input: InputOpts,
        /// Bands to include (1-based, comma separated); default all.
        #[arg(long, value_delimiter = ',')]
        band: Vec<usize>,
        /// Points per axis.
        #[arg(long, default_value_t = 41)]
        grid: usize,
    },
    /// Search critical points of one band and certify them.
    Certify {
        #[command(flatten)]
        input: InputOpts,
        #[arg(long, default_value_t = 1)]
        band: usize,
        /// Random search seeds (each searched for a minimum and a maximum).
        #[arg(long, default_value_t = 8)]
        seeds: usize,
        /// Extra search seed, comma separated components; repeatable.
        #[arg(long = "seed-point", value_parser = parse_point, allow_hyphen_values = true)]
        seed_points: Vec<Vec<f64>>,
        /// Skip the corner points of the torus.
        #[arg(long)]
        no_corners: bool,
        /// Grid confirmation and conjecture probe, as `grid=K`.
        #[arg(long, value_parser = parse_oracle)]
        oracle: Option<usize>,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
    },
    /// Run property suites.
    Verify {
        #[command(flatten)]
        input: InputOpts,
        /// Random families: number of cases per suite.
        #[arg(long, conflicts_with_all = ["file", "example"])]
        random: Option<usize>,
        /// Cases per suite for a fixed input family.
        #[arg(long, default_value_t = 20)]
        cases: usize,
        /// Suites to run (comma separated); default all.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
        /// Points per axis for Weyl bracket grids.
        #[arg(long, default_value_t = 41)]
        grid: usize,
    },
    /// Print a catalog family in raw-family JSON.
    Example {
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn parse_point(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

fn parse_oracle(s: &str) -> std::result::Result<usize, String> {
    let k = s.strip_prefix("grid=").ok_or("expected grid=K")?;
    let k: usize = k.parse().map_err(|e| format!("grid size: {e}"))?;
    if k < 2 {
        return Err("grid size must be at least 2".into());
    }
    Ok(k)
}

struct Loaded {
    family: BlochFamily,
    identity: InputIdentity,
}

fn load(input: &InputOpts) -> Result<Loaded> {
    if let Some(name) = &input.example {
        let ex = catalog::by_name(name, &input.overrides.params())?;
        return Ok(Loaded {
            family: ex.family,
            identity: InputIdentity {
                kind: "example".into(),
                name: Some(ex.name),
                sha256: None,
                example_parameters: ex.parameters,
            },
        });
    }
    let path = input
        .file
        .as_deref()
        .ok_or_else(|| anyhow!("no input: give a file, `-` for stdin, or --example NAME"))?;
    let (bytes, kind, name) = if path == "-" {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf).context("reading standard input")?;
        (buf, "stdin", None)
    } else {
        let buf = fs::read(path).with_context(|| format!("reading {path}"))?;
        (buf, "file", Some(path.to_string()))
    };
    let family = parse_family_file(&bytes).with_context(|| format!("parsing {path}"))?;
    let digest = Sha256::digest(&bytes);
    let sha: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded {
        family,
        identity: InputIdentity {
            kind: kind.into(),
            name,
            sha256: Some(sha),
            example_parameters: Vec::new(),
        },
    })
}

fn tolerances(g: &GlobalOpts) -> Tolerances {
    let mut t = Tolerances::default();
    if let Some(x) = g.tol_gap {
        t.gap = x;
    }
    if let Some(x) = g.tol_rank {
        t.rank = x;
    }
    t
}

fn emit(g: &GlobalOpts, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// 12 significant digits.
fn fmt12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.11e}");
    let v: f64 = s.parse().expect("formatted float");
    format!("{v}")
}

fn cmd_bands(g: &GlobalOpts, input: &InputOpts, bands: &[usize], grid: usize) -> Result<u8> {
    let loaded = load(input)?;
    let fam = &loaded.family;
    let n = fam.size();
    let bands: Vec<usize> = if bands.is_empty() { (1..=n).collect() } else { bands.to_vec() };
    if let Some(&b) = bands.iter().find(|&&b| b == 0 || b > n) {
        bail!("band {b} out of range 1..={n}");
    }
    let pts = grid_points(fam.dimension(), grid)?;
    let spectra: Vec<Vec<f64>> = pts
        .par_iter()
        .map(|p| spectrum_at(fam, p.components()))
        .collect::<std::result::Result<_, _>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=fam.dimension())
        .map(|j| format!("alpha_{j}"))
        .chain(bands.iter().map(|b| format!("lambda_{b}")))
        .collect();
    w.write_record(&header)?;
    for (p, s) in pts.iter().zip(&spectra) {
        let row: Vec<String> = g
            .angle_convention
            .apply(p)
            .into_iter()
            .chain(bands.iter().map(|&b| s[b - 1]))
            .map(fmt12)
            .collect();
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("csv: {e}"))?;
    emit(g, std::str::from_utf8(&bytes)?)?;
    Ok(EXIT_CERTIFIED)
}

fn threads_in_use() -> usize {
    rayon::current_num_threads()
}

fn report_json(r: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)? + "\n")
}

#[allow(clippy::too_many_arguments)]
fn cmd_certify(
    g: &GlobalOpts,
    input: &InputOpts,
    band: usize,
    seeds: usize,
    seed_points: &[Vec<f64>],
    no_corners: bool,
    oracle: Option<usize>,
    max_iters: usize,
) -> Result<u8> {
    let started = Instant::now();
    let loaded = load(input)?;
    let fam = &loaded.family;
    if let Some(p) = seed_points.iter().find(|p| p.len() != fam.dimension()) {
        bail!("seed point has {} components, family has dimension {}", p.len(), fam.dimension());
    }
    let cfg = PipelineConfig {
        search: SearchConfig {
            max_iters,
            ..SearchConfig::default()
        },
        seeds,
        seed: g.seed,
        corners: !no_corners,
        oracle_grid: oracle,
        tol: tolerances(g),
        extra_seeds: seed_points.iter().map(|p| Quasimomentum::new(p.clone())).collect(),
        ..PipelineConfig::default()
    };
    let rep = certify_band(fam, band, &cfg)?;
    let code = if rep.certificates.iter().any(|c| c.verdict.is_certificate()) {
        EXIT_CERTIFIED
    } else if rep.certificates.iter().any(|c| c.verdict == Verdict::HypothesisFailed) {
        EXIT_HYPOTHESIS_FAILED
    } else {
        EXIT_NO_CERTIFICATE
    };
    for c in &rep.certificates {
        eprintln!(
            "band {} at {:?}: {:.12} {:?} {:?}",
            c.band,
            g.angle_convention.apply(&c.alpha_star),
            c.value,
            c.verdict,
            c.reason_codes
        );
    }
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool: "bandcert".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "certify".into(),
        input: loaded.identity,
        parameters: serde_json::json!({
            "band": band,
            "seeds": seeds,
            "seed": g.seed,
            "seed_points": seed_points,
            "corners": !no_corners,
            "oracle_grid": oracle,
            "max_iters": max_iters,
            "tolerances": cfg.tol,
            "angle_convention": g.angle_convention,
        }),
        certificates: rep
            .certificates
            .iter()
            .map(|c| ReportedCertificate {
                alpha: g.angle_convention.apply(&c.alpha_star),
                certificate: c.clone(),
            })
            .collect(),
        certify: Some(CertifyOutput {
            band: rep.band,
            flat_band: rep.flat_band,
            searches: rep.searches,
            grid: rep.grid,
            probe: rep.probe,
        }),
        verify: None,
        timing: Timing {
            wall_seconds: started.elapsed().as_secs_f64(),
            threads: threads_in_use(),
        },
        warnings: rep.warnings,
    };
    emit(g, &report_json(&report)?)?;
    Ok(code)
}

fn cmd_verify(
    g: &GlobalOpts,
    input: &InputOpts,
    random: Option<usize>,
    cases: usize,
    checks: &[String],
    grid: usize,
) -> Result<u8> {
    let started = Instant::now();
    let checks: Vec<String> = if checks.is_empty() {
        SUITE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        checks.to_vec()
    };
    if let Some(bad) = checks.iter().find(|c| !SUITE_NAMES.contains(&c.as_str())) {
        bail!("unknown check `{bad}`; available: {}", SUITE_NAMES.join(", "));
    }
    let (loaded, count) = match random {
        Some(k) => (None, k),
        None => (Some(load(input)?), cases),
    };
    let src = match &loaded {
        Some(l) => FamilySource::Fixed(&l.family),
        None => FamilySource::Random,
    };
    let tol = tolerances(g);
    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    let mut tr_stats = None;
    for check in &checks {
        let rep = match check.as_str() {
            "gradient" => suites::gradient_suite(src, count, g.seed, &tol),
            "hessian" => suites::hessian_suite(src, count, g.seed, &tol),
            "index" => suites::index_suite(src, count, g.seed, &tol),
            "weyl" => suites::weyl_suite(src, count, g.seed, grid, &tol),
            "haynsworth" => suites::haynsworth_suite(count, g.seed),
            "epsilon-schur" => suites::epsilon_schur_suite(count, g.seed),
            "reparam" => suites::reparam_suite(src, count, g.seed, &tol),
            "time-reversal" => {
                if let FamilySource::Fixed(f) = src {
                    if !f.time_reversal() {
                        warnings.push("time-reversal: skipped, family is not real".into());
                        continue;
                    }
                }
                let (rep, stats) = suites::time_reversal_suite(src, count, g.seed, &tol);
                tr_stats = Some(stats);
                rep
            }
            other => unreachable!("validated check {other}"),
        };
        eprintln!(
            "{}: {}/{} passed, worst residual {:.3e} (threshold {:.1e})",
            rep.name, rep.passed, rep.cases, rep.worst_residual, rep.threshold
        );
        reports.push(rep);
    }
    let all_pass = !reports.is_empty() && reports.iter().all(|r| r.all_pass());
    let (identity, params) = match &loaded {
        Some(l) => (l.identity.clone(), serde_json::json!({ "cases": count })),
        None => (
            InputIdentity {
                kind: "random".into(),
                name: None,
                sha256: None,
                example_parameters: Vec::new(),
            },
            serde_json::json!({ "random": count }),
        ),
    };
    let mut params = params;
    params["checks"] = serde_json::json!(checks);
    params["grid"] = serde_json::json!(grid);
    params["seed"] = serde_json::json!(g.seed);
    params["tolerances"] = serde_json::json!(tol);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool: "bandcert".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "verify".into(),
        input: identity,
        parameters: params,
        certificates: Vec::new(),
        certify: None,
        verify: Some(VerifyOutput {
            suites: reports,
            time_reversal: tr_stats,
            all_pass,
        }),
        timing: Timing {
            wall_seconds: started.elapsed().as_secs_f64(),
            threads: threads_in_use(),
        },
        warnings,
    };
    emit(g, &report_json(&report)?)?;
    Ok(if all_pass { EXIT_CERTIFIED } else { EXIT_FAILURE })
}

fn cmd_example(g: &GlobalOpts, name: &str, overrides: &Overrides) -> Result<u8> {
    let ex = catalog::by_name(name, &overrides.params())?;
    emit(g, &(family_to_json(&ex.family) + "\n"))?;
    Ok(EXIT_CERTIFIED)
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Bands { input, band, grid } => cmd_bands(g, input, band, *grid),
        Command::Certify {
            input,
            band,
            seeds,
            seed_points,
            no_corners,
            oracle,
            max_iters,
        } => cmd_certify(g, input, *band, *seeds, seed_points, *no_corners, *oracle, *max_iters),
        Command::Verify {
            input,
            random,
            cases,
            checks,
            grid,
        } => cmd_verify(g, input, *random, *cases, checks, *grid),
        Command::Example { name, overrides } => cmd_example(g, name, overrides),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
