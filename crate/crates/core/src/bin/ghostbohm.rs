use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ghostbohm::biham::BihamConvention;
use ghostbohm::export::read_series;
use ghostbohm::parallel::Execution;
use ghostbohm::plot::{emit_diagnostics_plot, emit_plot};
use ghostbohm::run::{resolve_out_dir, run_scenario, RunOptions, OUT_DIR_ENV};
use ghostbohm::scenario::{load_scenario, preset, Format, ModelConfig, SamplingMode, PRESET_NAMES};
use ghostbohm::validate::{validate, write_summary};
use ghostbohm::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_TRUNCATED: u8 = 3;

#[derive(Parser)]
#[command(name = "ghostbohm", version, about = "Bohmian and classical ensembles for ghost quadratic Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a built-in preset.
    Run(RunArgs),
    /// List the built-in presets.
    Presets {
        /// Print each preset as a scenario document.
        #[arg(long)]
        show: bool,
    },
    /// Run the invariant and oracle suite on the presets.
    Validate {
        #[arg(long, env = OUT_DIR_ENV, default_value = "ghostbohm-out")]
        out_dir: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Render SVG plots from an exported CSV or JSON series.
    Plot {
        input: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExecArgs {
    /// Worker threads for ensemble propagation (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Propagate members one after another.
    #[arg(long)]
    sequential: bool,
}

impl ExecArgs {
    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    /// Runs `f` inside a pool of the requested size.
    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, String> {
        match self.threads {
            #[cfg(feature = "parallel")]
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(|pool| pool.install(f))
                .map_err(|e| e.to_string()),
            #[cfg(not(feature = "parallel"))]
            Some(_) => Ok(f()),
            None => Ok(f()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file or preset name (see `presets`).
    scenario: String,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long, value_parser = ["canonical", "paper-literal"])]
    biham_convention: Option<String>,
    #[arg(long)]
    hbar: Option<f64>,
    /// Skip the SVG plots.
    #[arg(long)]
    no_plot: bool,
    #[command(flatten)]
    exec: ExecArgs,
}

fn run(args: RunArgs) -> Result<ExitCode, (u8, String)> {
    let config_err = |e: Error| (EXIT_CONFIG, e.to_string());
    let mut scenario = load_scenario(&args.scenario).map_err(config_err)?;
    if let Some(seed) = args.seed {
        scenario.ensemble.seed = seed;
    }
    if let Some(step) = args.step {
        scenario.grid.step = step;
    }
    if let Some(t_end) = args.t_end {
        scenario.grid.t_end = t_end;
    }
    if let Some(size) = args.ensemble_size {
        if scenario.ensemble.sampling == SamplingMode::FixedOffsets && size != scenario.ensemble.size {
            return Err((EXIT_CONFIG, "--ensemble-size cannot resize an explicit offset list".into()));
        }
        scenario.ensemble.size = size;
    }
    if let Some(hbar) = args.hbar {
        scenario.model.set_hbar(hbar);
    }
    if let Some(conv) = &args.biham_convention {
        let conv: BihamConvention = conv.parse().map_err(|e: String| (EXIT_CONFIG, e))?;
        match &mut scenario.model {
            ModelConfig::BiHamiltonian { convention, .. } => *convention = conv,
            ModelConfig::Ghost { .. } => eprintln!("note: --biham-convention has no effect on a single-model scenario"),
        }
    }
    scenario.validate().map_err(config_err)?;

    let out_dir = resolve_out_dir(args.out_dir.as_deref(), &scenario);
    let mut options = RunOptions::for_scenario(&scenario, out_dir);
    if let Some(f) = &args.format {
        options.format = f.parse::<Format>().map_err(|e| (EXIT_CONFIG, e))?;
    }
    options.plot &= !args.no_plot;
    options.execution = args.exec.execution();

    let report = args
        .exec
        .install(|| run_scenario(&scenario, &options))
        .map_err(|e| (EXIT_CONFIG, e))?
        .map_err(config_err)?;

    match (&report.regime, &report.regime_note) {
        (Some(r), _) => println!("{}: regime {r}", report.scenario),
        (None, Some(note)) => println!("{}: {note}", report.scenario),
        (None, None) => println!("{}", report.scenario),
    }
    for (k, v) in &report.evidence {
        println!("  {k} = {v}");
    }
    for entry in &report.manifest {
        println!("  wrote {}", entry.path.display());
    }
    eprintln!("wall clock {:.3} s", report.wall_clock.as_secs_f64());
    if report.truncated {
        for t in &report.truncations {
            eprintln!("truncated: {} at sample {} (t = {})", t.series, t.index, t.t);
        }
        return Ok(ExitCode::from(EXIT_TRUNCATED));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Presets { show } => {
            for name in PRESET_NAMES {
                let s = preset(name).expect("built-in preset");
                if show {
                    println!("# {name}\n{}", s.to_toml());
                } else {
                    println!("{name:6} {}", s.notes.first().map(String::as_str).unwrap_or(""));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { out_dir, exec } => exec
            .install(|| validate(exec.execution()))
            .map_err(|e| (EXIT_CONFIG, e))
            .and_then(|report| {
                for c in &report.checks {
                    println!("{} {:40} {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.detail);
                }
                std::fs::create_dir_all(&out_dir).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", out_dir.display())))?;
                let path = out_dir.join("validation.json");
                write_summary(&report, &path).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
                println!("{} of {} checks passed; summary in {}", report.passed_count(), report.checks.len(), path.display());
                Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VALIDATION) })
            }),
        Command::Plot { input, out_dir } => (|| {
            let bundle = read_series(&input).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            let dir = out_dir.unwrap_or_else(|| input.parent().map(PathBuf::from).unwrap_or_default());
            std::fs::create_dir_all(&dir).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", dir.display())))?;
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
            let traj = dir.join(format!("{stem}_trajectories.svg"));
            let diag = dir.join(format!("{stem}_diagnostics.svg"));
            emit_plot(&bundle, &traj).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            emit_diagnostics_plot(&bundle, &diag).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            println!("wrote {}\nwrote {}", traj.display(), diag.display());
            Ok(ExitCode::SUCCESS)
        })(),
    };
    match result {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
