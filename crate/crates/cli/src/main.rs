mod output;
mod psi;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kg_core::counterexample::{self, DEFAULT_PRIME_BUDGET};
use kg_core::gauge::Gauge;
use kg_core::measures::{classify, exact_measure, IntVec, SlabSpec};
use kg_core::montecarlo::{
    count_solutions, draw_points, expected_count_check, mc_measure, qia_report, schmidt_residual,
    MCConfig,
};
use kg_core::rational::{self, Rational};
use kg_core::series::{series_table, ApproxFunction, Convention, MultiApproxFunction};
use kg_core::{selftest, Error};
use serde::Serialize;
use serde_json::json;

use output::{Format, Header, Sink};

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Domain(String),
    Infeasible(String),
    Verdict(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Verdict(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Domain(m) => write!(f, "domain error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Verdict(m) => write!(f, "failed verdict: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(m) => CliError::Parse(m),
            Error::Domain(m) => CliError::Domain(m),
            Error::Capacity(m) => CliError::Domain(format!("capacity exceeded: {m}")),
            Error::Infeasible(r) => CliError::Infeasible(r.binding),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "kg",
    version,
    about = "Exact measures, counting sums and certificates for Khintchine-Groshev type sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file; a `<out>.header.json` is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct McArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Exact measure of B(q, δ) or B'(q, δ), optionally checked by Monte Carlo.
    Measure {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        q: Vec<i64>,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long, value_parser = parse_delta)]
        delta: Rational,
        /// Use B' (gcd(q, p) = 1) instead of B.
        #[arg(long)]
        coprime: bool,
        /// Monte Carlo samples; 0 skips the estimate.
        #[arg(long, default_value_t = 0)]
        samples: u64,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Partial sums, Φ and χ for h = 1..N.
    Series {
        #[arg(long)]
        psi: String,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long = "N")]
        big_n: u64,
        #[arg(long, default_value = "proof")]
        convention: Convention,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solution counts at a point (`--x`) or the Monte Carlo mean of 𝒩'(X, h).
    Count {
        #[arg(long)]
        psi: String,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long)]
        h: u64,
        /// Point in [0,1)^(n·m), row-major; omit for the Monte Carlo mean.
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
        /// Count only q with gcd(q, p) = 1 (only with --x).
        #[arg(long)]
        coprime: bool,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Second-moment sums D_N against S_N².
    Qia {
        #[arg(long)]
        psi: String,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long = "N")]
        big_n: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// 𝒩(X, h) − Φ(h) over a grid of h at random points X.
    Schmidt {
        #[arg(long)]
        psi: String,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 1)]
        m: u32,
        /// Comma-separated grid of h.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "16,32,64,128,256,512,1024"
        )]
        h: Vec<u64>,
        /// Number of points X.
        #[arg(long, default_value_t = 100)]
        samples: u64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value = "theorem")]
        convention: Convention,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Builds and certifies ψ whose error weight beats F(main term).
    Counterexample {
        /// identity, log, linear:a,b or exp:a.
        #[arg(long)]
        gauge: Gauge,
        #[arg(long)]
        blocks: usize,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long, default_value_t = DEFAULT_PRIME_BUDGET)]
        prime_budget: u64,
        #[arg(long, default_value = "proof")]
        convention: Convention,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Runs the built-in invariant checks.
    Selftest {
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn parse_delta(s: &str) -> Result<Rational, String> {
    let d = rational::parse(s).map_err(|e| e.to_string())?;
    if d <= rational::int(0) || d >= rational::ratio(1, 2) {
        return Err(format!("delta {s} is outside (0, 1/2)"));
    }
    Ok(d)
}

fn sink(o: &OutputArgs) -> Sink {
    Sink {
        out: o.out.clone(),
        format: o.format,
    }
}

fn with_psi(mut header: Header, p: &psi::PsiInput) -> Header {
    header.psi_source = Some(p.source.clone());
    header.psi_sha256 = Some(p.sha256.clone());
    header
}

fn main_term(conv: Convention) -> Option<String> {
    Some(match conv {
        Convention::Theorem => "theorem: Phi uses (2 Psi)^m".to_string(),
        Convention::Proof => "proof: Phi uses Psi^m".to_string(),
    })
}

#[derive(Serialize)]
struct MeasureOut {
    #[serde(with = "rational::text")]
    exact: Rational,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc: Option<kg_core::montecarlo::MCEstimate>,
}

#[derive(Serialize)]
struct CountRow {
    h: u64,
    coprime: bool,
    count: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Measure {
            q,
            m,
            delta,
            coprime,
            samples,
            mc,
            output,
        } => {
            let slab = SlabSpec::new(IntVec::new(q.clone())?, delta.clone(), m, coprime)?;
            let exact = exact_measure(&slab);
            let estimate = if samples > 0 {
                let cfg = MCConfig::new(mc.seed, samples, mc.workers);
                Some(mc_measure(|x| classify(x, &slab), slab.dims(), &cfg)?)
            } else {
                None
            };
            let params = json!({
                "q": q, "m": m, "delta": rational::to_text(&delta), "coprime": coprime,
                "samples": samples, "seed": mc.seed, "format": output.format.name(),
            });
            sink(&output).write_object(
                &Header::new("measure", params, None),
                &MeasureOut {
                    exact,
                    mc: estimate,
                },
            )
        }
        Command::Series {
            psi,
            n,
            m,
            big_n,
            convention,
            output,
        } => {
            let p = psi::load(&psi)?;
            let rows = series_table(&p.psi, n, m, big_n, convention)?;
            let params = json!({
                "psi": p.psi, "n": n, "m": m, "N": big_n, "convention": convention,
                "format": output.format.name(),
            });
            let header = with_psi(Header::new("series", params, main_term(convention)), &p);
            sink(&output).write_rows(&header, &rows)
        }
        Command::Count {
            psi,
            n,
            m,
            h,
            x,
            coprime,
            samples,
            mc,
            output,
        } => {
            let p = psi::load(&psi)?;
            let params = json!({
                "psi": p.psi, "n": n, "m": m, "h": h, "x": x, "coprime": coprime,
                "samples": samples, "seed": mc.seed, "format": output.format.name(),
            });
            let header = with_psi(Header::new("count", params, None), &p);
            match x {
                Some(x) => {
                    let lift = MultiApproxFunction::NormLift {
                        psi: p.psi.clone(),
                        n,
                    };
                    let count = count_solutions(&x, &lift, m, h, coprime)?;
                    sink(&output).write_object(&header, &CountRow { h, coprime, count })
                }
                None => {
                    let cfg = MCConfig::new(mc.seed, samples, mc.workers);
                    let report = expected_count_check(&p.psi, n, m, h, &cfg)?;
                    sink(&output).write_object(&header, &report)
                }
            }
        }
        Command::Qia {
            psi,
            n,
            m,
            big_n,
            samples,
            mc,
            output,
        } => {
            let p = psi::load(&psi)?;
            let cfg = MCConfig::new(mc.seed, samples, mc.workers);
            let report = qia_report(&p.psi, n, m, big_n, &cfg)?;
            let params = json!({
                "psi": p.psi, "n": n, "m": m, "N": big_n, "samples": samples, "seed": mc.seed,
                "format": output.format.name(),
            });
            let header = with_psi(Header::new("qia", params, None), &p);
            sink(&output).write_object(&header, &report)
        }
        Command::Schmidt {
            psi,
            n,
            m,
            h,
            samples,
            epsilon,
            convention,
            mc,
            output,
        } => {
            let p = psi::load(&psi)?;
            if h.contains(&0) {
                return Err(CliError::Domain("grid values must be >= 1".into()));
            }
            let grid = h;
            let cfg = MCConfig::new(mc.seed, samples, mc.workers);
            let points = draw_points(&cfg, (n * m) as usize)?;
            let lift = MultiApproxFunction::NormLift {
                psi: p.psi.clone(),
                n,
            };
            let rows = schmidt_residual(&points, &lift, m, &grid, epsilon, convention, mc.workers)?;
            let params = json!({
                "psi": p.psi, "n": n, "m": m, "h": grid, "samples": samples, "seed": mc.seed,
                "epsilon": epsilon, "convention": convention, "format": output.format.name(),
            });
            let header = with_psi(Header::new("schmidt", params, main_term(convention)), &p);
            sink(&output).write_rows(&header, &rows)
        }
        Command::Counterexample {
            gauge,
            blocks,
            m,
            prime_budget,
            convention,
            output,
        } => {
            let params = json!({
                "gauge": gauge.to_string(), "blocks": blocks, "m": m, "prime_budget": prime_budget,
                "convention": convention, "format": output.format.name(),
            });
            let header = Header::new("counterexample", params, main_term(convention));
            let sink = sink(&output);
            let (psi, cert) =
                match counterexample::build_psi_with(&gauge, m, blocks, prime_budget, convention) {
                    Ok(v) => v,
                    Err(Error::Infeasible(report)) => {
                        sink.write_object(&header, &*report)?;
                        return Err(CliError::Infeasible(report.binding.clone()));
                    }
                    Err(e) => return Err(e.into()),
                };
            let ApproxFunction::Sparse(sparse) = &psi else {
                return Err(CliError::Domain("builder returned a non-sparse ψ".into()));
            };
            let report = counterexample::certify(sparse, &gauge, cert.n, m, &cert)?;
            match output.format {
                Format::Json => sink.write_object(&header, &cert)?,
                Format::Csv => sink.write_rows(&header, &cert.checkpoints)?,
            }
            if !report.passed() {
                let names: Vec<&str> = report.failures.iter().map(|f| f.check.as_str()).collect();
                return Err(CliError::Verdict(format!(
                    "certify failed: {}",
                    names.join(", ")
                )));
            }
            Ok(())
        }
        Command::Selftest { output } => {
            let checks = selftest::run();
            let params = json!({ "format": output.format.name() });
            sink(&output).write_rows(&Header::new("selftest", params, None), &checks)?;
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name)
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Verdict(format!(
                    "selftest: {}",
                    failed.join(", ")
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kg: {e}");
            ExitCode::from(e.code())
        }
    }
}
