//! `coopsense scenario` — run a scenario file through the full pipeline
//! and emit the tick-indexed CSV log plus an overhead trajectory plot.

use super::{ensure_out_dir, read_file};
use crate::csv_out::{scenario_csv, scenario_ndjson};
use crate::error::CliError;
use crate::svg::SvgCanvas;
use crate::Cli;
use clap::Args;
use coopsense::cpm::ObjectClass;
use coopsense::sim::{load_scenario, run_scenario, Scenario, ScenarioLog};
use std::path::PathBuf;

#[derive(Args)]
pub struct ScenarioArgs {
    /// Scenario description file (TOML).
    pub file: PathBuf,
    /// Additionally write newline-delimited JSON tick records.
    #[arg(long)]
    pub ndjson: bool,
}

pub fn run(cli: &Cli, args: &ScenarioArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&read_file(&args.file)?)?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    let log = run_scenario(&scenario)?;

    ensure_out_dir(&cli.out)?;
    if cli.format.csv() {
        let path = cli.out.join("scenario.csv");
        std::fs::write(&path, scenario_csv(&log))?;
        if cli.verbose > 0 {
            eprintln!("wrote {}", path.display());
        }
    }
    if args.ndjson {
        let path = cli.out.join("scenario.ndjson");
        std::fs::write(&path, scenario_ndjson(&log))?;
        if cli.verbose > 0 {
            eprintln!("wrote {}", path.display());
        }
    }
    if cli.format.svg() {
        let path = cli.out.join("scenario.svg");
        std::fs::write(&path, render_overhead(&scenario, &log, cli.grid))?;
        if cli.verbose > 0 {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn class_color(class: ObjectClass) -> &'static str {
    match class {
        ObjectClass::Pedestrian => "#2e7d32",
        ObjectClass::Car => "#e65100",
        ObjectClass::Cyclist => "#6a1b9a",
        ObjectClass::Unknown => "#455a64",
    }
}

fn render_overhead(scenario: &Scenario, log: &ScenarioLog, grid: f64) -> String {
    let mut canvas = SvgCanvas::new(grid);

    if let Some(lane_map) = &scenario.lane_map {
        for poly in &lane_map.drivable {
            canvas.polygon(poly, "#f2f2f2", "#999999");
        }
        for line in &lane_map.dividing_lines {
            canvas.polyline(&line.polyline, "#888888", 0.12, line.crossable);
        }
        for lane in &lane_map.lanes {
            canvas.polyline(&lane.centerline, "#cccccc", 0.05, true);
        }
        for zone in &lane_map.crossing_zones {
            canvas.polygon(
                &[
                    (zone.x, zone.y),
                    (zone.x + zone.width, zone.y),
                    (zone.x + zone.width, zone.y + zone.height),
                    (zone.x, zone.y + zone.height),
                ],
                "#ffe0b2",
                "#ef6c00",
            );
        }
    }
    for occluder in &scenario.occluders {
        canvas.polygon(occluder, "#9e9e9e", "#616161");
    }

    // Receiver trajectory in red, other stations as markers.
    let mut receiver_path = Vec::new();
    for tick in &log.ticks {
        for s in &tick.stations {
            if s.sensing {
                if tick.tick == 0 {
                    canvas.marker(s.x, s.y, 0.6, "#1565c0");
                    canvas.label(s.x + 1.0, s.y + 1.0, 2.0, &format!("station {}", s.id));
                }
            } else {
                receiver_path.push((s.x, s.y));
            }
        }
    }
    canvas.polyline(&receiver_path, "#c62828", 0.2, false);
    if let Some(&(x, y)) = receiver_path.first() {
        canvas.marker(x, y, 0.5, "#c62828");
    }

    // True road-user trajectories.
    for (idx, user) in scenario.road_users.iter().enumerate() {
        let pts: Vec<(f64, f64)> = log
            .ticks
            .iter()
            .flat_map(|t| t.road_users.iter().filter(|u| u.index == idx))
            .map(|u| (u.x, u.y))
            .collect();
        canvas.polyline(&pts, class_color(user.class), 0.15, false);
    }

    // Track estimates as sparse dots.
    for tick in log.ticks.iter().step_by(5) {
        for track in &tick.tracks {
            canvas.marker(track.x, track.y, 0.12, class_color(track.class));
        }
    }

    canvas.render()
}
