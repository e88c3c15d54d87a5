use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sobtrace::experiments::{
    extension_grid, singular_gain_experiment, verify_basis_equivalence, verify_extension, verify_residuals,
    verify_restriction,
};
use sobtrace::{ExperimentReport, HarnessError, Manifest, Overrides, RunOptions, Setup};
use sobtrace_core::basis::DEFAULT_RANK_TOL;
use sobtrace_core::domain::{product_corpus, test_corpus, CorpusMember};
use sobtrace_core::flows::flow;
use sobtrace_core::norms::{classical_besov_seminorm, classical_modulus, flow_besov_breakdown, flow_modulus, sobolev_norm};
use sobtrace_core::check_step2;

#[derive(Parser)]
#[command(name = "sobtrace", version, about = "Trace and extension experiments for step-2 vector fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Manifest file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV file (a directory for `report`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integrability exponent.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Grid cells per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Flow radius.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Per-sample progress on standard error.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Step-2 bracket condition at the centre of V1.
    Check,
    /// `e^{τZ} x` for a declared field.
    Flow {
        #[arg(long)]
        field: String,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, allow_hyphen_values = true)]
        tau: f64,
    },
    /// Flow and translation moduli of one corpus member over the t grid.
    Modulus {
        #[arg(long, default_value = "C0")]
        member: String,
    },
    /// Norms of every corpus member.
    Norm,
    /// Samples of the extension of one corpus member.
    Extend {
        #[arg(long, default_value = "C0")]
        member: String,
    },
    /// Run one experiment.
    Verify {
        #[arg(value_enum)]
        experiment: Experiment,
    },
    /// Run every experiment, one CSV per experiment in the `--out` directory.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Restriction,
    Extension,
    Basis,
    Singular,
    Residuals,
}

impl Experiment {
    const ALL: [Experiment; 5] =
        [Experiment::Restriction, Experiment::Extension, Experiment::Basis, Experiment::Singular, Experiment::Residuals];

    fn name(self) -> &'static str {
        match self {
            Experiment::Restriction => "restriction",
            Experiment::Extension => "extension",
            Experiment::Basis => "basis",
            Experiment::Singular => "singular",
            Experiment::Residuals => "residuals",
        }
    }

    fn run(self, setup: &Setup, opts: RunOptions) -> sobtrace::Result<ExperimentReport> {
        match self {
            Experiment::Restriction => verify_restriction(setup, opts),
            Experiment::Extension => verify_extension(setup, opts),
            Experiment::Basis => verify_basis_equivalence(setup, opts),
            Experiment::Singular => singular_gain_experiment(setup, opts),
            Experiment::Residuals => verify_residuals(setup, opts),
        }
    }
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> sobtrace::Result<Manifest> {
    let path = common.config.as_ref().ok_or_else(|| HarnessError::Config("--config <path> is required".into()))?;
    let mut m = Manifest::load(path)?;
    m.apply(&Overrides { p: common.p, grid: common.grid, delta: common.delta, seed: common.seed })?;
    Ok(m)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// Writes to `--out` or standard output.
fn emit(out: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> sobtrace::Result<()>) -> sobtrace::Result<()> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(io_err(path))?;
            let mut w = std::io::BufWriter::new(file);
            body(&mut w)?;
            w.flush().map_err(io_err(path))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)
        }
    }
}

fn member(corpus: Vec<CorpusMember>, id: &str) -> sobtrace::Result<CorpusMember> {
    corpus
        .into_iter()
        .find(|m| m.id == id)
        .ok_or_else(|| HarnessError::Config(format!("no corpus member `{id}` (raise experiment.corpus?)")))
}

fn csv_line(w: &mut dyn Write, cells: &[String]) -> sobtrace::Result<()> {
    writeln!(w, "{}", cells.join(",")).map_err(|source| HarnessError::Io { path: "<output>".into(), source })
}

fn run(cli: Cli) -> sobtrace::Result<Outcome> {
    let common = &cli.common;
    let opts = RunOptions { verbose: common.verbose };
    let manifest = load(common)?;
    let out = common.out.as_deref();
    match cli.command {
        Command::Check => {
            let first: Vec<_> = manifest
                .experiment
                .first_layer
                .iter()
                .map(|n| manifest.field(n).expect("validated").clone())
                .collect();
            let first = if manifest.experiment.time_field.is_some() {
                first.iter().map(|f| f.restrict_to_slice()).collect::<sobtrace_core::Result<Vec<_>>>()?
            } else {
                first
            };
            let point = manifest.domain.v1.center();
            let check = check_step2(&first, &point, DEFAULT_RANK_TOL)?;
            println!("rank {} of {}", check.rank, point.len());
            println!("satisfied {}", check.satisfied);
            let names = &manifest.experiment.first_layer;
            for i in 0..check.spanning_set.len() {
                match check.spanning_set.provenance(i) {
                    Some((l, m)) => println!("Z{} = [{}, {}]", i + 1, names[l], names[m]),
                    None => println!("Z{} = {}", i + 1, names[i]),
                }
            }
            Ok(if check.satisfied { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Flow { field, point, tau } => {
            let z = manifest.field(&field).ok_or_else(|| HarnessError::Config(format!("unknown field `{field}`")))?;
            let x = point
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| HarnessError::Config(format!("bad point `{point}`")))?;
            if x.len() != z.dim() {
                return Err(sobtrace_core::Error::DimensionMismatch { expected: z.dim(), found: x.len() }.into());
            }
            let y = flow(z, &x, tau, &Default::default())?;
            println!("{}", y.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            Ok(Outcome::Pass)
        }
        Command::Modulus { member: id } => {
            let setup = Setup::new(manifest)?;
            let m = &setup.manifest;
            let psi = member(test_corpus(&m.domain, m.experiment.corpus), &id)?;
            let fields = setup.basis.first_layer_fields();
            emit(out, |w| {
                let mut header = vec![String::from("t")];
                header.extend(m.experiment.first_layer.iter().map(|n| format!("omega_{n}")));
                header.push("omega_translation".into());
                csv_line(w, &header)?;
                for t in m.norms.t_grid() {
                    let mut row = vec![t.to_string()];
                    for z in fields {
                        row.push(flow_modulus(t, &*psi.field, z, &m.domain.v1, &m.domain.v, &m.norms, &setup.flow)?.to_string());
                    }
                    row.push(classical_modulus(t, &*psi.field, &m.domain.v, m.norms.p, m.norms.grid_res)?.to_string());
                    csv_line(w, &row)?;
                }
                Ok(())
            })?;
            Ok(Outcome::Pass)
        }
        Command::Norm => {
            let setup = Setup::new(manifest)?;
            let m = &setup.manifest;
            let u = setup.u();
            let slice = test_corpus(&m.domain, m.experiment.corpus);
            let products = product_corpus(&m.domain, m.experiment.corpus);
            emit(out, |w| {
                let mut header = vec![String::from("id"), "scale".into(), "lp".into()];
                header.extend(m.experiment.first_layer.iter().map(|n| format!("seminorm_{n}")));
                header.extend(["besov".into(), "classical_seminorm".into(), "sobolev_product".into()]);
                csv_line(w, &header)?;
                for (psi, phi) in slice.iter().zip(&products) {
                    let b = flow_besov_breakdown(&*psi.field, &setup.basis, &m.domain.v1, &m.domain.v, &m.norms, &setup.flow)?;
                    let classical = classical_besov_seminorm(&*psi.field, &m.domain.v, &m.norms)?;
                    let sob = sobolev_norm(&*phi.field, &setup.bundle, &u, &m.norms)?;
                    let mut row = vec![psi.id.clone(), psi.scale.to_string(), b.lp.to_string()];
                    row.extend(b.seminorms.iter().map(|s| s.to_string()));
                    row.extend([b.total.to_string(), classical.to_string(), sob.to_string()]);
                    if opts.verbose {
                        eprintln!("[norm] {}: besov {}", psi.id, b.total);
                    }
                    csv_line(w, &row)?;
                }
                Ok(())
            })?;
            Ok(Outcome::Pass)
        }
        Command::Extend { member: id } => {
            let setup = Setup::new(manifest)?;
            let m = &setup.manifest;
            let psi = member(test_corpus(&m.domain, m.experiment.corpus), &id)?;
            let rows = extension_grid(&setup, Arc::clone(&psi.field))?;
            emit(out, |w| {
                let n = m.slice_dim();
                let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
                header.extend(["t".into(), "value".into()]);
                csv_line(w, &header)?;
                for r in &rows {
                    csv_line(w, &r.iter().map(|v| v.to_string()).collect::<Vec<_>>())?;
                }
                Ok(())
            })?;
            Ok(Outcome::Pass)
        }
        Command::Verify { experiment } => {
            let setup = Setup::new(manifest)?;
            let report = experiment.run(&setup, opts)?;
            emit(out, |w| report.write_csv(w))?;
            if out.is_some() {
                eprintln!("{}: {}", experiment.name(), if report.passed { "pass" } else { "FAIL" });
            }
            Ok(if report.passed { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Report => {
            let dir = out.ok_or_else(|| HarnessError::Config("report needs --out <directory>".into()))?;
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            let setup = Setup::new(manifest)?;
            let mut all = true;
            for e in Experiment::ALL {
                let report = e.run(&setup, opts)?;
                let path = dir.join(format!("{}.csv", e.name()));
                emit(Some(&path), |w| report.write_csv(w))?;
                println!("{}: {}", e.name(), if report.passed { "pass" } else { "FAIL" });
                all &= report.passed;
            }
            Ok(if all { Outcome::Pass } else { Outcome::Fail })
        }
    }
}
