use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tescycle::calib::calibrate;
use tescycle::config::PlantConfig;
use tescycle::control::{rga, synthesize_decoupler, OperatingMode};
use tescycle::envelope::{coupled_power_map, sweep_envelope, BoundaryLocation, PowerEnvelope};
use tescycle::pcm_tank::{charge_ratio, TesState};
use tescycle::sim::{run_scenario, trace_to_csv, Scenario, SimOptions};
use tescycle::thermo::FluidModel;

#[derive(Parser)]
#[command(
    name = "tescycle",
    about = "Simulator and cooling-power control engine for a PCM-storage-backed refrigeration cycle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write the trace CSV plus a summary.
    Run {
        /// Scenario file (TOML).
        #[arg(long, short = 's')]
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Plant configuration overrides (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the fast integration step [s].
        #[arg(long)]
        fast_dt: Option<f64>,
        /// Override the slow tank step [s].
        #[arg(long)]
        slow_dt: Option<f64>,
        /// Ablation: bypass the decoupling matrix.
        #[arg(long)]
        no_decoupler: bool,
        /// Ablation: disable the valve feedforward.
        #[arg(long)]
        no_feedforward: bool,
    },
    /// Sweep the per-mode steady-state power envelopes and coupled maps.
    Envelope {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid points per manipulated axis.
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Modes to sweep (default: all eight).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<u8>>,
    },
    /// Identify the plant gains and dominant dynamics; write the report.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the built-in numeric anchors and print pass/fail lines.
    Selftest,
}

fn load_config(path: &Option<PathBuf>) -> Result<PlantConfig, String> {
    match path {
        None => Ok(PlantConfig::default()),
        Some(p) => PlantConfig::from_path(p).map_err(|e| e.to_string()),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn mode_from_u8(m: u8) -> Option<OperatingMode> {
    use OperatingMode::*;
    Some(match m {
        1 => M1,
        2 => M2,
        3 => M3,
        4 => M4,
        5 => M5,
        6 => M6,
        7 => M7,
        8 => M8,
        _ => return None,
    })
}

fn envelope_csv_row(env: &PowerEnvelope) -> String {
    let cell = |o: Option<(f64, f64)>| match o {
        Some((lo, hi)) => format!("{lo:.1},{hi:.1}"),
        None => ",".into(),
    };
    format!(
        "{},{},{},{},{},{}",
        env.mode,
        env.location.label(),
        cell(env.q_e_sec),
        cell(env.q_tes),
        cell(env.q_tes_sec),
        env.points.len()
    )
}

fn cmd_run(
    scenario: &Path,
    out: &Path,
    config: &Option<PathBuf>,
    fast_dt: Option<f64>,
    slow_dt: Option<f64>,
    no_decoupler: bool,
    no_feedforward: bool,
) -> Result<ExitCode, String> {
    let cfg = load_config(config)?;
    let fluid = cfg.refrigerant().map_err(|e| e.to_string())?;
    let mut sc = Scenario::from_path(scenario).map_err(|e| e.to_string())?;
    if let Some(dt) = fast_dt {
        sc.rates.fast_dt = dt;
    }
    if let Some(dt) = slow_dt {
        sc.rates.slow_dt = dt;
    }
    let opts = SimOptions {
        use_decoupler: !no_decoupler,
        use_feedforward: !no_feedforward,
    };
    let result = run_scenario(&cfg, &fluid, &sc, &opts).map_err(|e| e.to_string())?;
    write(&out.join("trace.csv"), &trace_to_csv(&result.trace))?;
    write(&out.join("summary.txt"), &result.summary.to_text())?;
    print!("{}", result.summary.to_text());
    match &result.failure {
        None => Ok(ExitCode::SUCCESS),
        Some(f) => {
            eprintln!("solver failure, trace truncated: {f}");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_envelope(
    config: &Option<PathBuf>,
    grid: usize,
    out: &Path,
    modes: &Option<Vec<u8>>,
) -> Result<ExitCode, String> {
    let cfg = load_config(config)?;
    let fluid = cfg.refrigerant().map_err(|e| e.to_string())?;
    let mode_list: Vec<u8> = modes.clone().unwrap_or_else(|| (1..=8).collect());
    let mut csv = String::from("# tescycle-envelope v1\n");
    csv.push_str(
        "mode,location,q_e_sec_min,q_e_sec_max,q_tes_min,q_tes_max,q_tes_sec_min,q_tes_sec_max,points\n",
    );
    for &m in &mode_list {
        let mode = mode_from_u8(m).ok_or_else(|| format!("no such mode: {m}"))?;
        for loc in BoundaryLocation::ALL {
            let env = sweep_envelope(&cfg, &fluid, mode, loc, grid).map_err(|e| e.to_string())?;
            println!(
                "mode {m} {:8}: {} feasible points",
                loc.label(),
                env.points.len()
            );
            csv.push_str(&envelope_csv_row(&env));
            csv.push('\n');
            if matches!(mode, OperatingMode::M1 | OperatingMode::M7) {
                let map =
                    coupled_power_map(&cfg, &fluid, mode, loc, grid).map_err(|e| e.to_string())?;
                let mut cloud = String::from(
                    "m_e,m_tes,m_tes_sec,q_e_sec,q_tes,q_tes_sec,t_sh,n_comp,t_int\n",
                );
                for p in &map.points {
                    cloud.push_str(&format!(
                        "{:.5},{:.5},{:.4},{:.2},{:.2},{:.2},{:.3},{:.2},{:.3}\n",
                        p.m_e,
                        p.m_tes,
                        p.m_tes_sec,
                        p.q_e_sec,
                        p.q_tes,
                        p.q_tes_sec,
                        p.t_sh,
                        p.n_comp,
                        p.t_int
                    ));
                }
                write(
                    &out.join(format!("cloud_mode{m}_{}.csv", loc.label())),
                    &cloud,
                )?;
                let mut frontier = String::from("q_e_sec,q_tes_max\n");
                for (x, y) in &map.frontier {
                    frontier.push_str(&format!("{x:.2},{y:.2}\n"));
                }
                write(
                    &out.join(format!("frontier_mode{m}_{}.csv", loc.label())),
                    &frontier,
                )?;
            }
        }
    }
    write(&out.join("envelope.csv"), &csv)?;
    println!("envelope table written to {}", out.join("envelope.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_calibrate(config: &Option<PathBuf>, out: &Path) -> Result<ExitCode, String> {
    let cfg = load_config(config)?;
    let fluid = cfg.refrigerant().map_err(|e| e.to_string())?;
    let cal = calibrate(&cfg, &fluid).map_err(|e| e.to_string())?;
    print!("{}", cal.report());
    write(&out.join("calibration_report.txt"), &cal.report())?;
    write(&out.join("calibration_config.toml"), &cal.config_fragment())?;
    println!(
        "report and config fragment written to {}",
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest() -> ExitCode {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {name}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    let k = [[4.5e4, -2.0e4], [-2.0e4, 5.0e4]];
    match rga(k) {
        Ok(l) => {
            check(
                "relative gain array of the reference gain block",
                (l[0][0] - 1.22).abs() < 0.005 && (l[0][1] + 0.22).abs() < 0.005,
            );
        }
        Err(_) => check("relative gain array of the reference gain block", false),
    }
    match synthesize_decoupler(k) {
        Ok(d) => {
            check(
                "decoupler off-diagonals 0.44 / 0.40",
                (d.d[0][1] - 0.44).abs() < 0.005 && (d.d[1][0] - 0.40).abs() < 0.005,
            );
            check(
                "diagonal plant 3.7e4 / 4.1e4",
                (d.k_diag[0] - 3.7e4).abs() < 0.05e4 && (d.k_diag[1] - 4.1e4).abs() < 0.05e4,
            );
        }
        Err(_) => {
            check("decoupler off-diagonals 0.44 / 0.40", false);
            check("diagonal plant 3.7e4 / 4.1e4", false);
        }
    }

    let fluid = FluidModel::default_refrigerant();
    match tescycle::cycle::junction(&fluid, 0.004, 390.0e3, 0.002, 360.0e3, 1.0e5) {
        Ok(j) => check(
            "junction mixes 2:1 flows to 380 kJ/kg",
            (j.h_comp_in - 380.0e3).abs() < 1e-9,
        ),
        Err(_) => check("junction mixes 2:1 flows to 380 kJ/kg", false),
    }

    let cfg = PlantConfig::default();
    let full = TesState::uniform(cfg.pcm.t_lat, 0.0, &cfg.tank, &cfg.pcm);
    let empty = TesState::uniform(cfg.pcm.t_lat, 1.0, &cfg.tank, &cfg.pcm);
    check(
        "charge ratio endpoints 1 and 0",
        charge_ratio(&full, &cfg.pcm, &cfg.tank).gamma == 1.0
            && charge_ratio(&empty, &cfg.pcm, &cfg.tank).gamma == 0.0,
    );

    let mut pi = tescycle::control::PiController::new(
        tescycle::config::PiGains {
            kp: 1.0e-4 / 23.0,
            ti: 1.5,
        },
        0.0,
        1.0,
    );
    let u = pi.step(100.0, 0.0, 0.0);
    check(
        "tabulated PI gain answers 100 W with 4.35e-4 kg/s",
        (u - 4.3478e-4).abs() < 1e-7,
    );

    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            config,
            fast_dt,
            slow_dt,
            no_decoupler,
            no_feedforward,
        } => cmd_run(
            scenario,
            out,
            config,
            *fast_dt,
            *slow_dt,
            *no_decoupler,
            *no_feedforward,
        ),
        Command::Envelope {
            config,
            grid,
            out,
            modes,
        } => cmd_envelope(config, *grid, out, modes),
        Command::Calibrate { config, out } => cmd_calibrate(config, out),
        Command::Selftest => return cmd_selftest(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
