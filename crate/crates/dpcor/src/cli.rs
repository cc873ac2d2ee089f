//! Command implementations behind the `dpcor` binary.
//!
//! Commands read and write files only; raw data never reaches a privatized
//! artifact. Every command is deterministic given its `--seed`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{
    bayes_grid_p2, bayes_mh, mle_matrix, posterior_mean_matrix, CorrelationMatrix,
    EstimateReport, MhOptions, ReportDiagnostics, SourceMeta,
};
use crate::harness::{run_experiment, write_records_csv};
use crate::mechanism::{privatize_counts, verify_dp_ratio, Mechanism, NoisyCountSet, PrivacyBudget};
use crate::quadrant::{quadrant_counts, Dataset, TieKeyMatrix};
use crate::sim::{MarginalSpec, SimScenario};

/// Noise stream for privatization, disjoint from the per-column tie-key
/// streams (those use stream ids `0..p`).
const NOISE_STREAM: u64 = 1 << 32;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_noisy(path: &Path) -> Result<NoisyCountSet> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

fn source_meta(noisy: &NoisyCountSet) -> SourceMeta {
    SourceMeta {
        mechanism: noisy.mechanism().name().to_string(),
        epsilon_total: noisy.epsilon_total(),
        epsilon_pair: noisy.epsilon_pair(),
        n: noisy.n(),
        p: noisy.p(),
        half_n: noisy.half_n(),
        bounds: noisy.bounds(),
    }
}

#[derive(Debug, Clone)]
pub struct PrivatizeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub epsilon: f64,
    pub mechanism: Mechanism,
    pub seed: u64,
}

/// Read a CSV dataset, coarsen to quadrant counts with seeded tie keys,
/// privatize, and write the noisy-count JSON.
pub fn privatize_cmd(args: &PrivatizeArgs) -> Result<()> {
    let (data, _names) = Dataset::from_csv_path(&args.input)?;
    let keys = TieKeyMatrix::generate(data.n(), data.p(), args.seed)?;
    let counts = quadrant_counts(&data, &keys)?;
    let budget = PrivacyBudget::new(args.epsilon, data.p())?;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    rng.set_stream(NOISE_STREAM);
    let noisy = privatize_counts(&counts, &budget, args.mechanism, &mut rng)?;
    write_json(&args.output, &noisy)
}

#[derive(Debug, Clone)]
pub struct EstimateMleArgs {
    pub input: PathBuf,
    pub output: PathBuf,
}

/// Noise-naive MLE from range-preserving noisy counts.
pub fn estimate_mle_cmd(args: &EstimateMleArgs) -> Result<()> {
    let noisy = read_noisy(&args.input)?;
    let (matrix, info) = mle_matrix(&noisy)?;
    let report = EstimateReport {
        method: "mle-nn".into(),
        p: noisy.p(),
        point: matrix.row_major(),
        alpha: None,
        intervals: None,
        diagnostics: ReportDiagnostics {
            was_psd: Some(info.was_psd),
            frobenius_adjustment: Some(info.frobenius_adjustment),
            ..ReportDiagnostics::default()
        },
        source: source_meta(&noisy),
    };
    write_json(&args.output, &report)
}

#[derive(Debug, Clone)]
pub struct EstimateBayesArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub samples: usize,
    pub burnin: usize,
    pub grid_size: usize,
    pub alpha: f64,
    /// Use the Metropolis sampler even at p = 2 (the grid is the default
    /// there).
    pub force_mh: bool,
}

/// Noise-aware Bayesian posterior from geometric-mechanism counts.
pub fn estimate_bayes_cmd(args: &EstimateBayesArgs) -> Result<()> {
    let noisy = read_noisy(&args.input)?;
    if noisy.mechanism() != Mechanism::Geometric {
        return Err(Error::Validation(format!(
            "estimate-bayes requires geometric-mechanism counts, got {}",
            noisy.mechanism()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let report = if noisy.p() == 2 && !args.force_mh {
        let (summary, draws) = bayes_grid_p2(
            noisy.values()[0] as i64,
            noisy.half_n(),
            noisy.epsilon_pair(),
            noisy.delta(),
            args.grid_size,
            args.alpha,
            args.samples,
            &mut rng,
        )?;
        let point = CorrelationMatrix::from_pairs(2, &[summary.pairs[0].mean])?;
        EstimateReport {
            method: "bayes-na".into(),
            p: 2,
            point: point.row_major(),
            alpha: Some(args.alpha),
            intervals: Some(summary.pairs.clone()),
            diagnostics: ReportDiagnostics {
                sampler: Some(draws.diagnostics.sampler.clone()),
                acceptance: Some(draws.diagnostics.acceptance),
                min_ess: Some(draws.diagnostics.min_ess()),
                mean_projected: Some(false),
                ..ReportDiagnostics::default()
            },
            source: source_meta(&noisy),
        }
    } else {
        let opts = MhOptions {
            samples: args.samples,
            burn_in: args.burnin,
            alpha: args.alpha,
            ..MhOptions::default()
        };
        let (summary, draws) = bayes_mh(&noisy, &opts, &mut rng)?;
        let (point, projected) = posterior_mean_matrix(&draws)?;
        EstimateReport {
            method: "bayes-na".into(),
            p: noisy.p(),
            point: point.row_major(),
            alpha: Some(args.alpha),
            intervals: Some(summary.pairs.clone()),
            diagnostics: ReportDiagnostics {
                sampler: Some(draws.diagnostics.sampler.clone()),
                acceptance: Some(draws.diagnostics.acceptance),
                min_ess: Some(draws.diagnostics.min_ess()),
                mean_projected: Some(projected),
                ..ReportDiagnostics::default()
            },
            source: source_meta(&noisy),
        }
    };
    write_json(&args.output, &report)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: PathBuf,
    pub output: PathBuf,
}

/// Run a scenario config: metrics JSON to `--output`, per-replicate CSV
/// alongside it with a `.records.csv` extension.
pub fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let scenario = load_scenario(&args.config)?;
    let (report, records) = run_experiment(&scenario)?;
    write_json(&args.output, &report)?;
    let csv_path = args.output.with_extension("records.csv");
    let file = std::fs::File::create(csv_path)?;
    write_records_csv(&records, std::io::BufWriter::new(file))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct VerifyDpArgs {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub lower: i64,
    pub upper: i64,
    pub delta: f64,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyDpReport {
    pub mechanism: String,
    pub epsilon: f64,
    pub lower: i64,
    pub upper: i64,
    pub delta: f64,
    pub max_log_ratio: f64,
    pub satisfied: bool,
}

/// Enumerate output distributions and report the worst-case log ratio.
pub fn verify_dp_cmd(args: &VerifyDpArgs) -> Result<VerifyDpReport> {
    let ratio = verify_dp_ratio(args.mechanism, args.lower, args.upper, args.delta, args.epsilon)?;
    let report = VerifyDpReport {
        mechanism: args.mechanism.name().to_string(),
        epsilon: args.epsilon,
        lower: args.lower,
        upper: args.upper,
        delta: args.delta,
        max_log_ratio: ratio,
        satisfied: ratio <= args.epsilon + 1e-9,
    };
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    } else {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    if !report.satisfied {
        return Err(Error::Diagnostic(format!(
            "max log-ratio {ratio} exceeds epsilon {}",
            args.epsilon
        )));
    }
    Ok(report)
}

#[derive(Debug, Deserialize)]
struct ScenarioToml {
    p: usize,
    n: usize,
    runs: usize,
    epsilon: f64,
    mechanism: String,
    estimator: String,
    marginals: Vec<String>,
    seed: u64,
    alpha: Option<f64>,
    samples: Option<usize>,
    burnin: Option<usize>,
    grid_size: Option<usize>,
    bin_width: Option<f64>,
}

/// Parse a scenario from the flat TOML schema (see the README).
pub fn parse_scenario(text: &str) -> Result<SimScenario> {
    let raw: ScenarioToml =
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
    let scenario = SimScenario {
        p: raw.p,
        n: raw.n,
        runs: raw.runs,
        epsilon_total: raw.epsilon,
        mechanism: Mechanism::parse(&raw.mechanism)?,
        estimator: crate::estimate::EstimatorKind::parse(&raw.estimator)?,
        marginals: raw
            .marginals
            .iter()
            .map(|m| MarginalSpec::parse(m))
            .collect::<Result<_>>()?,
        master_seed: raw.seed,
        alpha: raw.alpha.unwrap_or(0.05),
        samples: raw.samples.unwrap_or(1000),
        burn_in: raw.burnin.unwrap_or(1000),
        grid_size: raw.grid_size.unwrap_or(2001),
        bin_width: raw.bin_width.unwrap_or(0.4),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<SimScenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}
