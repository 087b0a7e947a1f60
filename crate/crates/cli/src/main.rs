//! Command line of the simulator: run experiment matrices from scenario
//! files or presets, and classify jam observations from traces or HDC
//! event logs.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vanet_core::jam;
use vanet_core::mobility::{export_trace, import_trace};
use vanet_core::runner::{self, MatrixOptions, ScenarioOutput};
use vanet_core::scenario::Scenario;

#[derive(Parser)]
#[command(name = "vanet", version, about = "Highway VANET dissemination and jam-detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file or preset.
    Run(RunArgs),
    /// Classify congestion clusters from a mobility trace or an HDC event log.
    Classify(ClassifyArgs),
    /// Print the complete default configuration and exit.
    PrintDefaults,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file path.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in preset: paper-dissemination, desk-dissemination,
    /// paper-speedlimit, desk-hdc.
    #[arg(long)]
    preset: Option<String>,
    /// Override the scenario's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write per-run event logs.
    #[arg(long)]
    event_log: bool,
    /// Disable the radio collision model.
    #[arg(long)]
    no_collisions: bool,
    /// Print the effective configuration instead of running.
    #[arg(long)]
    print_defaults: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Mobility trace file (`# vanet-trace v1` format). The trace is
    /// analyzed as an open road.
    #[arg(long, conflicts_with = "hdc_log")]
    trace: Option<PathBuf>,
    /// HDC event log (`time node event detail` lines).
    #[arg(long)]
    hdc_log: Option<PathBuf>,
    /// Speed limit of the recorded scenario, km/h.
    #[arg(long, default_value_t = 105.0)]
    v_max_kmh: f64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Classify(args) => classify(args),
        Command::PrintDefaults => {
            print!("{}", Scenario::default().to_config());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: RunArgs) -> Result<(), String> {
    let mut scenario = load_scenario(&args)?;
    if args.print_defaults {
        print!("{}", scenario.to_config());
        return Ok(());
    }
    if let Some(seed) = args.seed {
        scenario.seeds = vec![seed];
    }
    if args.no_collisions {
        scenario.collisions = false;
    }
    fs::create_dir_all(&args.out).map_err(|e| format!("creating {}: {e}", args.out.display()))?;

    let opts = MatrixOptions { event_log: args.event_log };
    let output = runner::run_scenario(&scenario, &opts).map_err(|e| e.to_string())?;
    match output {
        ScenarioOutput::Dissemination(m) => {
            write(&args.out.join("results.csv"), &m.results_csv)?;
            write(&args.out.join("per_unit.csv"), &m.per_unit_csv)?;
            if !m.event_logs.is_empty() {
                let dir = args.out.join("runs");
                fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                for (name, text) in &m.event_logs {
                    write(&dir.join(name), text)?;
                }
            }
            println!("wrote {}", args.out.join("results.csv").display());
        }
        ScenarioOutput::SpeedLimit(outcomes) => {
            write(&args.out.join("jam_report.csv"), &runner::speedlimit_report(&outcomes))?;
            for o in &outcomes {
                let mut buf = Vec::new();
                export_trace(&o.history, &mut buf).map_err(|e| e.to_string())?;
                let name = format!("trace_vmax{}_s{}.csv", o.v_max_kmh, o.seed);
                fs::write(args.out.join(&name), buf).map_err(|e| e.to_string())?;
            }
            println!("wrote {}", args.out.join("jam_report.csv").display());
        }
        ScenarioOutput::Hdc(runs) => {
            let params = runner::jam_params(&scenario, scenario.v_max());
            for (seed, run) in &runs {
                write(&args.out.join(format!("hdc_s{seed}.log")), &run.log_text())?;
                let road = scenario.mobility.road();
                let truth = jam::ground_truth_series(
                    &run.history,
                    &params,
                    &road,
                    scenario.mobility.vehicle_length_m,
                );
                write(
                    &args.out.join(format!("classification_truth_s{seed}.csv")),
                    &jam::classification_report(&truth, &params),
                )?;
                let hdc_series =
                    jam::series_from_hdc_log_text(&run.log_text(), scenario.hdc.t_information);
                write(
                    &args.out.join(format!("classification_hdc_s{seed}.csv")),
                    &jam::classification_report(&hdc_series, &params),
                )?;
            }
            println!("wrote {} hdc run(s) to {}", runs.len(), args.out.display());
        }
    }
    Ok(())
}

fn load_scenario(args: &RunArgs) -> Result<Scenario, String> {
    match (&args.scenario, &args.preset) {
        (Some(path), None) => {
            let text =
                fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
            Scenario::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
        (None, Some(name)) => Scenario::preset(name).map_err(|e| e.to_string()),
        (None, None) => Ok(Scenario::default()),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn classify(args: ClassifyArgs) -> Result<(), String> {
    let v_max = vanet_core::mobility::kmh_to_mps(args.v_max_kmh);
    let params = jam::JamParams::for_v_max(v_max);
    let report = match (&args.trace, &args.hdc_log) {
        (Some(path), None) => {
            let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut reader = std::io::BufReader::new(file);
            let history = import_trace(&mut reader).map_err(|e| format!("{}: {e}", path.display()))?;
            let road = vanet_core::road::Road::new(
                history.positions.iter().flatten().fold(0.0f64, |a, &b| a.max(b)) + 1.0,
                vanet_core::road::Boundary::Open,
            );
            let series = jam::ground_truth_series(&history, &params, &road, 5.0);
            jam::classification_report(&series, &params)
        }
        (None, Some(path)) => {
            let mut text = String::new();
            fs::File::open(path)
                .and_then(|mut f| f.read_to_string(&mut text))
                .map_err(|e| format!("{}: {e}", path.display()))?;
            let series = jam::series_from_hdc_log_text(&text, 1.0);
            jam::classification_report(&series, &params)
        }
        _ => return Err("pass exactly one of --trace or --hdc-log".into()),
    };
    match &args.out {
        Some(path) => write(path, &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()))
}
