use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phaselink::analysis::{default_ta_grid, sigma_curve, welch_psd_default};
use phaselink::scenario::{
    budget, compare_runs, read_report, read_trace, run_scenario, Overrides, Scenario, OUT_DIR_ENV,
};
use phaselink::Error;

#[derive(Parser)]
#[command(name = "phaselink", version, about = "Phase-stabilized QKD link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV data plus report.json.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        /// Override the run duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Phase deviation curve and PSD summary of a `time_s,phase_rad` CSV.
    Analyze {
        trace: PathBuf,
        /// Comma-separated frame durations in seconds.
        #[arg(long, value_delimiter = ',')]
        ta_grid: Option<Vec<f64>>,
    },
    /// Ratios between two run reports.
    Compare { a: PathBuf, b: PathBuf },
    /// Loss, timing and background tables of a scenario.
    Budget { scenario: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => 2,
                Error::Unstable(_) => 3,
                _ => 1,
            })
        }
    }
}

fn execute(command: Command) -> phaselink::Result<()> {
    match command {
        Command::Simulate {
            scenario,
            seed,
            out,
            duration,
        } => {
            let report = run_scenario(
                &scenario,
                &Overrides {
                    seed,
                    duration_s: duration,
                    out_dir: out,
                },
            )?;
            println!("scenario {} ({})", report.scenario, report.scenario_hash);
            for k in &report.key_sigma {
                println!(
                    "sigma(t_a = {:e} s) = {:.4} rad  qber ~ {:.5}{}",
                    k.t_a,
                    k.sigma,
                    k.qber_small_phase,
                    if k.low_confidence { "  (low confidence)" } else { "" }
                );
            }
            for c in &report.crossings {
                match c.t_a {
                    Some(t) => println!("qber {:.1}% (sigma {:.3}) reached at t_a = {t:.3e} s", c.qber * 100.0, c.sigma),
                    None => println!("qber {:.1}% (sigma {:.3}) not reached", c.qber * 100.0, c.sigma),
                }
            }
            if let Some(db) = report.loops.in_band_suppression_db {
                println!("in-band suppression: {db:.1} dB below {} Hz", report.in_band_hz);
            }
            if let Some(q) = &report.counts.qber {
                println!(
                    "counts: D0 {} D1 {}  qber {:.4} [{:.4}, {:.4}]",
                    report.counts.d0_counts,
                    report.counts.d1_counts,
                    q.e,
                    q.interval.map_or(f64::NAN, |i| i.0),
                    q.interval.map_or(f64::NAN, |i| i.1)
                );
            }
            println!("{} files written", report.files.len() + 1);
        }
        Command::Analyze { trace, ta_grid } => {
            let t = read_trace(&trace)?;
            let grid = ta_grid.unwrap_or_else(|| default_ta_grid(t.sample_rate, t.duration()));
            let curve = sigma_curve(&t, &grid)?;
            println!("t_a_s,sigma_rad,subsets,low_confidence");
            for p in &curve.points {
                println!("{:e},{:.6e},{},{}", p.t_a, p.sigma, p.subsets, p.low_confidence);
            }
            if t.len() >= 8 {
                let psd = welch_psd_default(&t)?;
                println!("# total PSD power {:.6e} rad^2, variance {:.6e} rad^2", psd.total_power(), t.variance());
            }
        }
        Command::Compare { a, b } => {
            let cmp = compare_runs(&read_report(&a)?, &read_report(&b)?)?;
            println!("metric,a,b,ratio,db");
            for r in &cmp.rows {
                println!("{},{:.6e},{:.6e},{:.6e},{:.3}", r.metric, r.a, r.b, r.ratio, r.db);
            }
        }
        Command::Budget { scenario } => {
            let s = Scenario::load(&scenario)?;
            let b = budget(&s)?;
            let l = &b.loss;
            println!("quantum channel");
            println!("  alice  {:>7.1} km {:>6.1} dB", l.alice_km, l.alice_db);
            println!("  bob    {:>7.1} km {:>6.1} dB", l.bob_km, l.bob_db);
            println!(
                "  total  {:>7.1} km {:>6.1} dB  ({:.3} dB/km)",
                l.total_km,
                l.total_db,
                l.total_db_per_km.unwrap_or(f64::NAN)
            );
            let t = &b.timing;
            println!("delays");
            println!("  alice qkd span  {:.1} us", t.alice_qkd_s * 1e6);
            println!("  bob qkd span    {:.1} us", t.bob_qkd_s * 1e6);
            println!("  arm skew        {:.1} us", t.qkd_skew_s * 1e6);
            println!("  round-trip skew {:.1} us", t.round_trip_skew_s * 1e6);
            println!("wavelength mismatch ratio {:.4e}", b.mismatch_ratio);
            for (window, bg) in &b.background {
                println!("background over {window} ({} s)", bg.duration_s);
                for s in bg.sources.iter().chain([&bg.lasers_off, &bg.total]) {
                    println!("  {:<10} {:.3} +- {:.3} /s", s.source, s.rate_hz, s.uncertainty_hz);
                }
            }
        }
    }
    Ok(())
}
