//! `coopsense sweep` — run an uncertainty sweep file and emit the result
//! CSV plus one ellipse plot per (mode, value, offset) combination.

use super::{ensure_out_dir, read_file, slug};
use crate::csv_out::sweep_csv;
use crate::error::CliError;
use crate::svg::SvgCanvas;
use crate::Cli;
use clap::Args;
use coopsense::geometry::{confidence_ellipse, transform_with_uncertainty, GaussianPose2, Pose2};
use coopsense::sim::{load_sweep, run_sweep, SweepRecord, SweepResult, SweepSpec, VariedParam};
use std::path::PathBuf;

#[derive(Args)]
pub struct SweepArgs {
    /// Sweep description file (TOML).
    pub file: PathBuf,
}

/// Builds the sweep thread pool honoring COOPSENSE_THREADS.
fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match std::env::var("COOPSENSE_THREADS") {
        Ok(v) => {
            let threads: usize = v
                .parse()
                .map_err(|_| CliError::input(format!("COOPSENSE_THREADS={v} is not a number")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

pub fn run(cli: &Cli, args: &SweepArgs) -> Result<(), CliError> {
    let mut file = load_sweep(&read_file(&args.file)?)?;
    if let Some(seed) = cli.seed {
        file.seed = seed;
    }
    file.ellipse_mass = cli.mass;
    file.validate()?;

    ensure_out_dir(&cli.out)?;
    let mut all_records = Vec::new();
    for spec in file.to_specs() {
        let result = with_pool(|| run_sweep(&spec))?;
        if cli.format.svg() {
            write_plots(cli, &spec, &result)?;
        }
        all_records.extend(result.records);
    }

    if cli.format.csv() {
        let csv_path = cli.out.join("sweep.csv");
        std::fs::write(&csv_path, sweep_csv(&SweepResult { records: all_records }))?;
        if cli.verbose > 0 {
            eprintln!("wrote {}", csv_path.display());
        }
    }
    Ok(())
}

fn value_slug(spec: &SweepSpec, value: f64) -> String {
    match spec.varied {
        VariedParam::HeadingStd => format!("{}deg", slug(round6(value.to_degrees()))),
        VariedParam::PositionStd => format!("{}m", slug(round6(value))),
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn write_plots(cli: &Cli, spec: &SweepSpec, result: &SweepResult) -> Result<(), CliError> {
    for &value in &spec.values {
        for &offset in &spec.offsets {
            let records: Vec<&SweepRecord> = result
                .records
                .iter()
                .filter(|r| r.value == value && r.offset == offset)
                .collect();
            if records.is_empty() {
                continue;
            }
            // Plot in the receiver frame over a 10 m grid.
            let mut canvas = SvgCanvas::new(cli.grid);
            canvas.marker(0.0, 0.0, 0.5, "#c62828");
            canvas.label(0.8, 1.2, 2.0, "receiver");

            // Position estimate of the sensing station itself, transformed
            // into the receiver frame (the leftmost ellipse in the plots).
            let (rx_pos_std, rx_heading_std) = spec.receiver_stds(value);
            let receiver = GaussianPose2::from_std(
                spec.receiver_pose(offset),
                rx_pos_std,
                rx_pos_std,
                rx_heading_std,
            );
            let sender_cov = match spec.mode {
                coopsense::sim::SweepMode::V2I => (
                    coopsense::sim::IRSU_POSITION_STD_M,
                    coopsense::sim::IRSU_HEADING_STD_RAD,
                ),
                coopsense::sim::SweepMode::V2V => (rx_pos_std, rx_heading_std),
            };
            let sender = GaussianPose2::from_std(
                spec.sender_pose(),
                sender_cov.0,
                sender_cov.0,
                sender_cov.1,
            );
            if let Ok(sender_in_rx) = transform_with_uncertainty(
                &receiver,
                &sender,
                &GaussianPose2::exact(Pose2::new(0.0, 0.0, 0.0)),
                spec.ut,
            ) {
                let m = sender_in_rx.mean();
                if let Ok(e) = confidence_ellipse(
                    &sender_in_rx.position_cov(),
                    (m.x, m.y),
                    spec.ellipse_mass,
                ) {
                    canvas.ellipse(&e, "#b8860b", "#fff59d");
                    canvas.marker(m.x, m.y, 0.4, "#1565c0");
                }
            }

            for r in &records {
                canvas.ellipse(&r.ellipse, "#b8860b", "#fff59d");
            }
            let name = format!(
                "sweep_{}_{}_{}_pos_{}.svg",
                spec.mode.as_str(),
                match spec.varied {
                    VariedParam::HeadingStd => "heading",
                    VariedParam::PositionStd => "position",
                },
                value_slug(spec, value),
                slug(offset),
            );
            let path = cli.out.join(name);
            std::fs::write(&path, canvas.render())?;
            if cli.verbose > 0 {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
