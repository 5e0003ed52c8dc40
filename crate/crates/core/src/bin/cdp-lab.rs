use cdp_core::harness::config::{ExperimentConfig, SuiteConfig, PAPER_SUITE_NAME};
use cdp_core::harness::experiments::{run, tally, RunOptions};
use cdp_core::harness::report::{write_csv, write_json_lines, ExperimentReport, Format};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiments on convergence of chaos decompositions.
#[derive(Parser, Debug)]
#[command(name = "cdp-lab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Root seed; defaults to the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the main Monte Carlo sample count of every experiment.
    #[arg(long, global = true)]
    paths: Option<u64>,
    /// Directory for the report file; stdout when absent.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::JsonLines)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a config file or the bundled suite `paper-suite`.
    Run { config: String },
    CdpScan,
    CounterexampleIid,
    CounterexampleTwoPoint,
    DecouplingCertify,
    ReverseTriangle,
    PoissonExample,
    PoissonIsometry,
    Mehler,
}

impl Command {
    fn experiment_id(&self) -> Option<&'static str> {
        Some(match self {
            Command::Run { .. } => return None,
            Command::CdpScan => "cdp-scan",
            Command::CounterexampleIid => "counterexample-iid",
            Command::CounterexampleTwoPoint => "counterexample-two-point",
            Command::DecouplingCertify => "decoupling-certify",
            Command::ReverseTriangle => "reverse-triangle",
            Command::PoissonExample => "poisson-example",
            Command::PoissonIsometry => "poisson-isometry",
            Command::Mehler => "mehler",
        })
    }
}

/// A single experiment takes its parameters from the bundled suite.
fn suite_for(command: &Command) -> cdp_core::Result<SuiteConfig> {
    match command {
        Command::Run { config } => SuiteConfig::load(config),
        other => {
            let id = other.experiment_id().expect("experiment subcommand");
            let bundled = SuiteConfig::paper_suite()?;
            let exp = bundled
                .experiments
                .iter()
                .find(|e| e.id() == id)
                .cloned()
                .map_or_else(|| ExperimentConfig::default_for(id), Ok)?;
            Ok(SuiteConfig { name: id.into(), seed: bundled.seed, experiments: vec![exp] })
        }
    }
}

fn emit(common: &Common, name: &str, reports: &[ExperimentReport]) -> cdp_core::Result<()> {
    let write = |w: &mut dyn Write| match common.format {
        Format::JsonLines => write_json_lines(w, reports),
        Format::Csv => write_csv(w, reports),
    };
    match &common.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let ext = match common.format {
                Format::JsonLines => "jsonl",
                Format::Csv => "csv",
            };
            let path = dir.join(format!("{name}.{ext}"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write(&mut f)?;
            f.flush()?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = suite_for(&cli.command).and_then(|suite| {
        let reports = run(&suite, RunOptions { seed: cli.common.seed, paths: cli.common.paths })?;
        let name = if suite.name.is_empty() { PAPER_SUITE_NAME } else { suite.name.as_str() };
        emit(&cli.common, name, &reports)?;
        Ok(reports)
    });
    match result {
        Ok(reports) => {
            for r in &reports {
                let (pass, fail, info) = tally(std::slice::from_ref(r));
                let secs = r.runtime.map_or(0.0, |d| d.as_secs_f64());
                eprintln!("{:<26} pass {pass:>4}  fail {fail:>3}  info {info:>3}  {secs:>8.2}s", r.experiment_id);
                for m in r.failures() {
                    eprintln!("  FAIL {} = {} (reference {:?})", m.name, m.value, m.reference);
                }
            }
            if reports.iter().all(ExperimentReport::all_pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
