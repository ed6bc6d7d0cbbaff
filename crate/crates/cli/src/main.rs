use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amenable_sas::groups::{FolnerScheme, FolnerSequence, GroupDescriptor, GroupElement, Side};
use amenable_sas::measure::{build_psi_measure, kakutani_sum, BernoulliParam, ProductBernoulliMeasure, PsiProfile};
use amenable_sas::stable::sample_path;
use anyhow::anyhow;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use sas_cli::emit::{self, EmitError};
use sas_cli::run::{run_scenario, RunOptions};
use sas_cli::scenario::{parse_group, parse_scenario, Scenario};

const EXIT_ALL_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "sasdiag", version, about = "Ergodic and mixing diagnostics for stationary SαS processes on amenable groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every test of a scenario and write traces plus summary.json.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the evaluation budget.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Tabulate Følner defects over the generators and tempered ratios.
    Folner {
        /// Z, Z2, Z^d, H3 or heisenberg.
        #[arg(long)]
        group: String,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        #[arg(long, default_value_t = 32.0)]
        threshold: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Kakutani partial sums for a pair of product Bernoulli measures.
    Kakutani {
        #[arg(long)]
        group: String,
        /// `uniform`, `psi`, or a JSON Bernoulli parameter.
        #[arg(long)]
        first: String,
        #[arg(long, default_value = "uniform")]
        second: String,
        /// Box radius of the window.
        #[arg(long, default_value_t = 100)]
        radius: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Sample paths of a scenario's process on a Følner set.
    Sample {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        /// LePage series length.
        #[arg(long, default_value_t = 1000)]
        terms: usize,
        /// Følner index of the window.
        #[arg(long, default_value_t = 1)]
        radius: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
    },
}

enum Failure {
    Invalid(anyhow::Error),
    Compute(anyhow::Error),
    Io(EmitError),
}

impl From<EmitError> for Failure {
    fn from(e: EmitError) -> Self {
        Failure::Io(e)
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn compute(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Compute(e.into())
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Failure::Io(EmitError { path: path.to_path_buf(), source }))?;
    parse_scenario(&text).map_err(|e| invalid(anyhow!("{}:\n{e}", path.display())))
}

fn group(name: &str) -> Result<GroupDescriptor, Failure> {
    parse_group(name).ok_or_else(|| invalid(anyhow!("unknown group {name:?}; expected Z, Z2, Z^d, H3 or heisenberg")))
}

fn boxes(d: GroupDescriptor, budget: Option<u64>) -> Result<FolnerSequence, Failure> {
    let scheme = if d == GroupDescriptor::heisenberg() { FolnerScheme::HeisenbergBox } else { FolnerScheme::Box };
    let seq = FolnerSequence::new(d, scheme).map_err(compute)?;
    Ok(match budget {
        Some(b) => seq.with_budget(b),
        None => seq,
    })
}

fn measure(d: GroupDescriptor, spec: &str) -> Result<ProductBernoulliMeasure, Failure> {
    match spec {
        "uniform" => Ok(ProductBernoulliMeasure::uniform(d)),
        "psi" => Ok(build_psi_measure(d, &PsiProfile::default()).map_err(compute)?.measure),
        json => {
            let param: BernoulliParam =
                serde_json::from_str(json).map_err(|e| invalid(anyhow!("measure {json:?}: {e}")))?;
            ProductBernoulliMeasure::new(d, param).map_err(invalid)
        }
    }
}

#[derive(Serialize)]
struct DefectRow {
    n: usize,
    size: u64,
    generator: String,
    side: &'static str,
    defect: f64,
}

#[derive(Serialize)]
struct RatioRow {
    n: usize,
    ratio: f64,
}

#[derive(Serialize)]
struct KakutaniRow {
    window_size: usize,
    value: f64,
}

#[derive(Serialize)]
struct PathRow {
    path_id: usize,
    group_coords: String,
    value: f64,
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Run { scenario, out, seed, budget } => {
            let s = load_scenario(&scenario)?;
            let summary = run_scenario(&s, &RunOptions { seed, budget });
            for t in &summary.tests {
                match &t.result {
                    Ok(r) => eprintln!("{}: {} ({:.2?})", t.label, r.verdict, t.wall_clock),
                    Err(e) => eprintln!("{}: error: {e}", t.label),
                }
            }
            emit::emit(&summary, &out)?;
            Ok(if summary.success() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ALL_FAILED) })
        }
        Command::Folner { group: name, n_max, threshold, out, budget } => {
            let d = group(&name)?;
            let seq = boxes(d, budget)?;
            let mut rows = Vec::new();
            for n in 1..=n_max {
                let size = seq.size(n).map_err(compute)?;
                for g in d.generators() {
                    for (side, label) in [(Side::Left, "left"), (Side::Right, "right")] {
                        let defect = seq.defect(n, &g, side).map_err(compute)?;
                        rows.push(DefectRow { n, size, generator: g.to_string(), side: label, defect });
                    }
                }
            }
            std::fs::create_dir_all(&out).map_err(|source| EmitError { path: out.clone(), source })?;
            emit::write_csv(&out.join("folner.csv"), &rows)?;
            let (report, error) = match seq.tempered_check(n_max, threshold) {
                Ok(r) => (r, None),
                Err(p) => (p.partial, Some(p.error)),
            };
            let ratios: Vec<RatioRow> =
                report.n_values.iter().zip(&report.ratios).map(|(&n, &ratio)| RatioRow { n, ratio }).collect();
            emit::write_csv(&out.join("tempered.csv"), &ratios)?;
            eprintln!("max tempered ratio {:.4} (threshold {threshold})", report.max_ratio);
            match error {
                Some(e) => Err(compute(anyhow!("tempered check stopped early: {e}"))),
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Kakutani { group: name, first, second, radius, out, budget } => {
            let d = group(&name)?;
            let (m1, m2) = (measure(d, &first)?, measure(d, &second)?);
            let window = boxes(d, budget)?.set(radius).map_err(compute)?;
            let report = kakutani_sum(&m1, &m2, &window);
            let rows: Vec<KakutaniRow> =
                report.partial_sums.iter().map(|&(window_size, value)| KakutaniRow { window_size, value }).collect();
            std::fs::create_dir_all(&out).map_err(|source| EmitError { path: out.clone(), source })?;
            emit::write_csv(&out.join("kakutani.csv"), &rows)?;
            let doc = json!({
                "group": d,
                "radius": radius,
                "first": m1.param(),
                "second": m2.param(),
                "report": report,
            });
            emit::write_json(&out.join("kakutani.json"), &doc)?;
            eprintln!("Kakutani sum {:.6} over {} sites: {:?}", report.total, report.window_size, report.verdict);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample { scenario, paths, terms, radius, out, seed, budget } => {
            let mut s = load_scenario(&scenario)?;
            if seed.is_some() {
                s.seed = seed;
            }
            let p = s.process().map_err(compute)?;
            let window: Vec<GroupElement> = s.sequence(budget).and_then(|q| q.set(radius)).map_err(compute)?;
            let set = sample_path(&p, &window, terms, paths, s.effective_seed()).map_err(compute)?;
            if let Some(w) = &set.warning {
                eprintln!("warning: {w}");
            }
            let rows: Vec<PathRow> = set
                .paths
                .iter()
                .enumerate()
                .flat_map(|(path_id, path)| {
                    path.window
                        .iter()
                        .zip(&path.values)
                        .map(move |(g, &value)| PathRow { path_id, group_coords: g.to_string(), value })
                })
                .collect();
            std::fs::create_dir_all(&out).map_err(|source| EmitError { path: out.clone(), source })?;
            emit::write_csv(&out.join("paths.csv"), &rows)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Invalid(e)) => {
            eprintln!("invalid input: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ALL_FAILED)
        }
        Err(Failure::Io(e)) => {
            eprintln!("I/O error: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn measure_specs_parse() {
        let d = GroupDescriptor::integers();
        assert!(measure(d, "uniform").is_ok());
        assert!(measure(d, r#"{"family":"constant","p0":0.3}"#).is_ok());
        assert!(matches!(measure(d, "{"), Err(Failure::Invalid(_))));
    }
}
