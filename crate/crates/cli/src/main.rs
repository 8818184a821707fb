//! `ostbc`: command-line driver for ambiguity-space computations, the
//! dimension census, the blind estimator and the Ky Fan check.
//!
//! All randomness derives from `--seed`. JSON output is stable across reruns.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ostbc_core::census::{find_mstar, CensusResult, DEFAULT_TRIALS};
use ostbc_core::embed::DEFAULT_REL_TOL;
use ostbc_core::estimator::{run_estimate, ConstellationModel, SimulationConfig};
use ostbc_core::kyfan::{kyfan_sample_check, SpectrumSpec};
use ostbc_core::ostbc::{builtin_code, load_definition, validate_matrices, OstbCode, BUILTIN_CODES, DEFAULT_CODE_TOL};
use ostbc_core::random::{gaussian_channel, random_symmetric, trial_rng};
use ostbc_core::subspace::{compute_bspace, compute_bstar, hr_basis, AmbiguitySubspace, SubspaceReport};

#[derive(Parser, Debug)]
#[command(name = "ostbc", version, about = "Blind channel estimation subspaces for orthogonal space-time block codes")]
struct Cli {
    /// Output format on stdout.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List or validate codes.
    Codes {
        #[command(subcommand)]
        action: CodesAction,
    },
    /// Invariant ambiguity space of a code.
    Bstar {
        #[command(flatten)]
        code: CodeSource,
        /// Relative singular-value threshold for kernels.
        #[arg(long, default_value_t = DEFAULT_REL_TOL)]
        tol: f64,
        /// Write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Ambiguity space for one random channel.
    Bspace {
        #[command(flatten)]
        code: CodeSource,
        /// Receive antennas.
        #[arg(long)]
        rx: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_REL_TOL)]
        tol: f64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Dimension census over random channels for M = 1..rx-max.
    Census {
        #[command(flatten)]
        code: CodeSource,
        #[arg(long)]
        rx_max: usize,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_REL_TOL)]
        tol: f64,
        /// Per-trial rows.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Summary.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Simulate a link and run the blind estimator.
    Estimate {
        #[command(flatten)]
        code: CodeSource,
        #[arg(long)]
        rx: usize,
        /// Number of received blocks.
        #[arg(long)]
        blocks: usize,
        /// Noise variance per complex dimension.
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Constellation::Pm1)]
        constellation: Constellation,
        #[arg(long, default_value_t = DEFAULT_REL_TOL)]
        tol: f64,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Received blocks, one row of 2ML entries per block.
        #[arg(long)]
        blocks_csv: Option<PathBuf>,
    },
    /// Randomized check of the trace maximization bound on a random symmetric matrix.
    Kyfan {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum CodesAction {
    /// Builtin codes with their dimensions.
    List,
    /// Orthogonality check of a builtin code or code file.
    Validate {
        #[command(flatten)]
        code: CodeSource,
        #[arg(long, default_value_t = DEFAULT_CODE_TOL)]
        tol: f64,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct CodeSource {
    /// Builtin code name.
    #[arg(long)]
    code: Option<String>,
    /// JSON code definition.
    #[arg(long)]
    code_file: Option<PathBuf>,
}

impl CodeSource {
    fn load(&self) -> Result<OstbCode> {
        match (&self.code, &self.code_file) {
            (Some(name), _) => Ok(builtin_code(name)?),
            (None, Some(path)) => {
                let def = load_definition(path).with_context(|| format!("reading {}", path.display()))?;
                def.into_code().with_context(|| format!("code file {}", path.display()))
            }
            (None, None) => bail!("one of --code or --code-file is required"),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Constellation {
    /// Independent uniform +-1 symbols.
    Pm1,
    /// Independent standard Gaussian symbols.
    Gaussian,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Prints `text` or the JSON of `value` to stdout, and writes the JSON to `path` if given.
fn emit<T: Serialize>(format: Format, path: Option<&Path>, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if let Some(p) = path {
        write_json(p, value)?;
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Text => write!(out, "{}", text())?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CodeEntry {
    name: &'static str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "K")]
    k: usize,
}

fn cmd_codes_list(format: Format) -> Result<()> {
    let entries: Vec<CodeEntry> = BUILTIN_CODES
        .iter()
        .map(|&name| {
            let c = builtin_code(name).expect("builtin");
            CodeEntry { name, n: c.n(), l: c.l(), k: c.k() }
        })
        .collect();
    emit(format, None, &entries, || {
        entries.iter().map(|e| format!("{} N={} L={} K={}\n", e.name, e.n, e.l, e.k)).collect()
    })
}

#[derive(Serialize)]
struct ValidateOutput {
    code: String,
    #[serde(flatten)]
    report: ostbc_core::ostbc::ValidationReport,
}

fn cmd_codes_validate(format: Format, source: &CodeSource, tol: f64) -> Result<()> {
    if tol.is_nan() || tol <= 0.0 {
        bail!("tolerance must be positive, got {tol}");
    }
    // code files are checked from the raw definition so an invalid family still gets a report
    let (name, report) = match (&source.code, &source.code_file) {
        (Some(name), _) => {
            let code = builtin_code(name)?;
            (name.clone(), validate_matrices(code.n(), code.matrices(), tol))
        }
        (None, Some(path)) => {
            let def = load_definition(path).with_context(|| format!("reading {}", path.display()))?;
            let mats = def.to_matrices().with_context(|| format!("code file {}", path.display()))?;
            (def.name.clone(), validate_matrices(def.n, &mats, tol))
        }
        (None, None) => bail!("one of --code or --code-file is required"),
    };
    let out = ValidateOutput { code: name, report };
    emit(format, None, &out, || {
        format!(
            "code={} norm_deviation={:.3e} cross_deviation={:.3e} tol={:.1e} {}\n",
            out.code,
            report.norm_deviation,
            report.cross_deviation,
            report.tol,
            if report.passed { "PASS" } else { "FAIL" }
        )
    })?;
    if !report.passed {
        bail!("code `{}` violates the orthogonality constraints", out.code);
    }
    Ok(())
}

fn subspace_text(sub: &AmbiguitySubspace, report: &SubspaceReport) -> String {
    let mut s = format!("code={} kind={}", report.code, report.kind);
    if let Some(m) = report.m {
        s += &format!(" M={m}");
    }
    if let Some(seed) = report.seed {
        s += &format!(" seed={seed}");
    }
    s += "\n";
    s += &format!("dim={}, identifiable={}\n", sub.dim(), sub.identifiable());
    s += &format!(
        "hurwitz-radon family_size={} max_skew_residual={:.3e} max_anticommute_residual={:.3e}\n",
        report.hr.family_size, report.hr.max_skew_residual, report.hr.max_anticommute_residual
    );
    s
}

fn emit_subspace(format: Format, json: Option<&Path>, sub: &AmbiguitySubspace) -> Result<()> {
    let hr = hr_basis(sub).context("Hurwitz-Radon extraction failed")?;
    let report = SubspaceReport::new(sub, &hr);
    emit(format, json, &report, || subspace_text(sub, &report))
}

fn cmd_bstar(format: Format, source: &CodeSource, tol: f64, json: Option<&Path>) -> Result<()> {
    let code = source.load()?;
    let sub = compute_bstar(&code, tol)?;
    emit_subspace(format, json, &sub)
}

fn cmd_bspace(format: Format, source: &CodeSource, rx: usize, seed: u64, tol: f64, json: Option<&Path>) -> Result<()> {
    let code = source.load()?;
    if rx < 1 {
        bail!("--rx must be at least 1");
    }
    let channel = gaussian_channel(code.n(), rx, &mut trial_rng(seed, 0));
    let sub = compute_bspace(&code, &channel, tol)?.with_seed(seed);
    emit_subspace(format, json, &sub)
}

#[derive(Serialize)]
struct CensusRow<'a> {
    code: &'a str,
    #[serde(rename = "M")]
    m: usize,
    trial: usize,
    dim: usize,
    max_principal_angle_to_bstar: f64,
}

#[derive(Serialize)]
struct CensusOutput<'a> {
    #[serde(flatten)]
    result: &'a CensusResult,
    passed: bool,
    violations: Vec<String>,
}

fn write_census_csv(path: &Path, result: &CensusResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for (code, m, r) in result.rows() {
        w.serialize(CensusRow { code, m, trial: r.trial, dim: r.dim, max_principal_angle_to_bstar: r.max_principal_angle_to_bstar })?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_census(
    format: Format,
    source: &CodeSource,
    rx_max: usize,
    trials: usize,
    seed: u64,
    tol: f64,
    csv_path: Option<&Path>,
    json: Option<&Path>,
) -> Result<()> {
    let code = source.load()?;
    let result = find_mstar(&code, rx_max, trials, seed, tol)?;
    if let Some(p) = csv_path {
        write_census_csv(p, &result)?;
    }
    let violations = result.check();
    let out = CensusOutput { result: &result, passed: violations.is_empty(), violations: violations.clone() };
    emit(format, json, &out, || {
        let mut s = format!("code={} N={} trials={} seed={}\n", result.code, result.n, result.trials, result.seed);
        for (c, d) in result.dims.iter().zip(&result.d_mode) {
            let hist: Vec<String> = c.histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            s += &format!("M={} d_mode={} histogram={{{}}} matches_bstar={}\n", c.m, d, hist.join(","), c.all_match_bstar());
        }
        let ms = result.m_star.map_or("none".to_string(), |m| m.to_string());
        s += &format!("d_star={} M_star={}\n", result.d_star, ms);
        for v in &violations {
            s += &format!("violation: {v}\n");
        }
        s
    })?;
    if !violations.is_empty() {
        bail!("census invariants violated ({} issue(s))", violations.len());
    }
    Ok(())
}

fn write_blocks_csv(path: &Path, blocks: &[nalgebra::DVector<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if let Some(first) = blocks.first() {
        w.write_record((0..first.len()).map(|i| format!("y{i}")))?;
    }
    for y in blocks {
        w.write_record(y.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    format: Format,
    source: &CodeSource,
    rx: usize,
    blocks: usize,
    sigma2: f64,
    seed: u64,
    constellation: Constellation,
    tol: f64,
    json: Option<&Path>,
    blocks_csv: Option<&Path>,
) -> Result<()> {
    let code = source.load()?;
    let k = code.k();
    let constellation = match constellation {
        Constellation::Pm1 => ConstellationModel::iid_pm1(k),
        Constellation::Gaussian => ConstellationModel::gaussian(k),
    };
    let config = SimulationConfig { code, m: rx, constellation, blocks, sigma2, seed };
    let (report, sim) = run_estimate(&config, tol)?;
    if let Some(p) = blocks_csv {
        write_blocks_csv(p, &sim.blocks)?;
    }
    emit(format, json, &report, || {
        format!(
            "code={} M={} J={} sigma2={} seed={}\n\
             subspace_angle={:.6e} rad ({:.4} deg)\n\
             residual={:.6e} orthogonality_residual={:.6e}\n\
             top_multiplicity={} degenerate={}\n",
            report.code,
            report.m,
            report.blocks,
            report.sigma2,
            report.seed,
            report.subspace_angle,
            report.subspace_angle.to_degrees(),
            report.residual,
            report.orthogonality_residual,
            report.top_multiplicity,
            report.degenerate
        )
    })
}

fn cmd_kyfan(format: Format, m: usize, q: usize, seed: u64, samples: usize, json: Option<&Path>) -> Result<()> {
    if m < 1 {
        bail!("--m must be at least 1");
    }
    // the matrix draw uses the last stream so it never overlaps the sample streams
    let p = random_symmetric(m, &mut trial_rng(seed, u64::MAX));
    let spec = SpectrumSpec::new(p, q)?;
    let report = kyfan_sample_check(&spec, samples, seed)?;
    emit(format, json, &report, || {
        format!(
            "m={} q={} q_minus={} q_plus={} samples={} seed={}\n\
             kyfan_value={:.12e} max_observed={:.12e} bound_holds={}\n\
             near_max_samples={} near_max_members={}\n\
             constructed={} constructed_max_rel_error={:.3e} constructed_accepted={}\n\
             perturbed={} perturbed_rejected={}\n\
             {}\n",
            report.m,
            report.q,
            report.q_minus,
            report.q_plus,
            report.samples,
            report.seed,
            report.kyfan_value,
            report.max_observed,
            report.bound_holds,
            report.near_max_samples,
            report.near_max_members,
            report.constructed,
            report.constructed_max_rel_error,
            report.constructed_accepted,
            report.perturbed,
            report.perturbed_rejected,
            if report.passed { "PASS" } else { "FAIL" }
        )
    })?;
    if !report.passed {
        bail!("trace maximization check failed");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let f = cli.format;
    match &cli.command {
        Command::Codes { action: CodesAction::List } => cmd_codes_list(f),
        Command::Codes { action: CodesAction::Validate { code, tol } } => cmd_codes_validate(f, code, *tol),
        Command::Bstar { code, tol, json } => cmd_bstar(f, code, *tol, json.as_deref()),
        Command::Bspace { code, rx, seed, tol, json } => cmd_bspace(f, code, *rx, *seed, *tol, json.as_deref()),
        Command::Census { code, rx_max, trials, seed, tol, csv, json } => {
            cmd_census(f, code, *rx_max, *trials, *seed, *tol, csv.as_deref(), json.as_deref())
        }
        Command::Estimate { code, rx, blocks, sigma2, seed, constellation, tol, json, blocks_csv } => cmd_estimate(
            f,
            code,
            *rx,
            *blocks,
            *sigma2,
            *seed,
            *constellation,
            *tol,
            json.as_deref(),
            blocks_csv.as_deref(),
        ),
        Command::Kyfan { m, q, seed, samples, json } => cmd_kyfan(f, *m, *q, *seed, *samples, json.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
