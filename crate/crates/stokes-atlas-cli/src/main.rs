//! `stokes-atlas` command-line tool.
//!
//! Exit codes: 0 pass, 2 refusal (boundary or ambiguous input), 3 numerical
//! failure, 4 usage error.

use clap::{Parser, Subcommand};
use stokes_atlas::dsdomain;
use stokes_atlas::extraction;
use stokes_atlas::io::{self, GridSpec, ModulusDocument, Status, SystemInput};
use stokes_atlas::monodromy;
use stokes_atlas::polyfield::Parameter;
use stokes_atlas::{Complex64, Error, Tolerances};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "stokes-atlas", version, about = "Douady-Sentenac diagrams, unfolded Stokes data and monodromy")]
struct Cli {
    /// JSON file overriding any subset of the numerical tolerances.
    #[arg(long, global = true)]
    tol_context: Option<PathBuf>,
    /// Seed for randomised steps (conjugacy search).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an SVG phase portrait of x' = e^{i slant} p(x).
    Portrait {
        #[command(flatten)]
        param: ParamArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        slant: f64,
    },
    /// Classify a parameter: diagram, tau-coordinates, bifurcation distance.
    Classify {
        #[command(flatten)]
        param: ParamArgs,
        /// Classify at this slant only instead of the slant grid.
        #[arg(long, allow_hyphen_values = true)]
        slant: Option<f64>,
    },
    /// Check the compatibility condition between modulus documents.
    CheckCompat {
        /// Modulus documents sharing (k, n, epsilon, Lambda).
        #[arg(required = true)]
        documents: Vec<PathBuf>,
    },
    /// Extract the Stokes data of a rational system into a modulus document.
    Extract {
        /// System input JSON.
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        slant: Option<f64>,
    },
    /// Classify every point of a parameter grid in parallel.
    Sweep {
        /// Grid spec JSON.
        grid: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        slant: Option<f64>,
        /// Also write a CSV summary here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct ParamArgs {
    /// Comma-separated coefficients e_0,...,e_{k-1}, e.g. `-1` or `0.3+0.2i,-0.5i`.
    #[arg(long, allow_hyphen_values = true)]
    epsilon: String,
    /// Expected number of coefficients.
    #[arg(long)]
    k: Option<usize>,
}

impl ParamArgs {
    fn parameter(&self) -> Result<Parameter, Error> {
        let coeffs = self
            .epsilon
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<Complex64>().map_err(|_| Error::InvalidInput(format!("cannot parse coefficient `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(k) = self.k {
            if k != coeffs.len() {
                return Err(Error::InvalidInput(format!("--k {k} but {} coefficients given", coeffs.len())));
            }
        }
        Parameter::new(coeffs)
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialise") + "\n"
}

fn tolerances(cli: &Cli) -> Result<Tolerances, Error> {
    let mut tol = match &cli.tol_context {
        Some(p) => Tolerances::from_json(&read(p)?)?,
        None => Tolerances::default(),
    };
    if let Some(seed) = cli.seed {
        tol.seed = seed;
    }
    Ok(tol)
}

fn run(cli: &Cli) -> Result<Status, Error> {
    let tol = tolerances(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Portrait { param, slant } => {
            let svg = io::portrait_svg(&param.parameter()?, *slant, &tol)?;
            emit(out, &svg)?;
            Ok(Status::Pass)
        }
        Command::Classify { param, slant } => {
            let report = io::classify_report(&param.parameter()?, *slant, &tol);
            match &report.diagram {
                Some(d) => eprintln!("diagram {d} (id {})", report.diagram_id.unwrap_or_default()),
                None => eprintln!("{}", report.message.as_deref().unwrap_or("no diagram")),
            }
            emit(out, &to_json(&report))?;
            Ok(report.status)
        }
        Command::CheckCompat { documents } => {
            let docs = documents.iter().map(|p| ModulusDocument::from_json(&read(p)?)).collect::<Result<Vec<_>, _>>()?;
            if let Some(bad) = docs.iter().position(|d| !d.same_header(&docs[0])) {
                return Err(Error::InvalidInput(format!("document {bad} does not share (k, n, epsilon, Lambda) with document 0")));
            }
            let items = docs.iter().map(|d| d.presentation()).collect::<Result<Vec<_>, _>>()?;
            let m = items.len();
            let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
            let triples: Vec<[usize; 3]> = (0..m)
                .flat_map(|i| (i + 1..m).flat_map(move |j| (j + 1..m).map(move |l| [i, j, l])))
                .collect();
            let report = monodromy::compatibility_check(&items, &pairs, &triples, &tol)?;
            for p in &report.pairs {
                eprintln!(
                    "{} ~ {}: {} (residual {:.3e}, braid {:?})",
                    p.from,
                    p.to,
                    if p.conjugate { "conjugate" } else { "not conjugate" },
                    p.residual,
                    p.braid
                );
            }
            for t in &report.triples {
                eprintln!("cocycle {:?}: residual {:.3e}", t.indices, t.residual);
            }
            eprintln!("{}", if report.pass { "compatible" } else { "incompatible" });
            emit(out, &to_json(&report))?;
            Ok(if report.pass { Status::Pass } else { Status::Failure })
        }
        Command::Extract { system, slant } => {
            let sys = SystemInput::from_json(&read(system)?)?.to_system()?;
            let ex = match slant {
                Some(s) => {
                    let class = dsdomain::classify_at(&sys.param, *s, &tol)?;
                    extraction::extract_stokes(&sys, &class.diagram, *s, &tol)?
                }
                None => extraction::extract(&sys, &tol)?,
            };
            eprintln!("diagram {} at slant {}, min flag angle {:.3e}", ex.diagram.word, ex.slant, ex.min_angle);
            let doc = ModulusDocument::from_extraction(&sys, &ex, &tol)?;
            emit(out, &(doc.to_json() + "\n"))?;
            Ok(Status::Pass)
        }
        Command::Sweep { grid, slant, csv } => {
            let spec = GridSpec::from_json(&read(grid)?)?;
            let report = io::sweep_classify(&spec, *slant, &tol);
            if let Some(p) = csv {
                std::fs::write(p, report.to_csv()).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?;
            }
            eprintln!("{} grid points", report.points.len());
            emit(out, &to_json(&report))?;
            Ok(Status::Pass)
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("STOKES_ATLAS_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidInput(format!("STOKES_ATLAS_THREADS={v} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    let status = configure_threads().and_then(|_| run(&cli)).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        Status::of(&e)
    });
    ExitCode::from(status.exit_code() as u8)
}
