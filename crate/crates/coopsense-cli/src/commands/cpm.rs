//! `coopsense cpm` — encode message descriptions, decode wire bytes, hex
//! dump, pretty print, and roundtrip checks.

use super::read_file;
use crate::error::CliError;
use crate::Cli;
use clap::Args;
use coopsense::cpm::{
    decode, encode, quantize, Cpm, CpmManagement, ObjectClass, PerceivedObject,
    SensorInformation, SensorType, StationData, StationType,
};
use coopsense::geometry::{GaussianPose2, Pose2};
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct CpmArgs {
    /// Binary message file to decode.
    #[arg(long, conflicts_with_all = ["hex", "toml"])]
    pub file: Option<PathBuf>,
    /// Hex string to decode.
    #[arg(long, conflicts_with = "toml")]
    pub hex: Option<String>,
    /// Message description (TOML) to encode.
    #[arg(long)]
    pub toml: Option<PathBuf>,
    /// Verify the roundtrip: encode∘decode is the identity on wire bytes,
    /// decode∘encode equals the quantized message.
    #[arg(long)]
    pub check: bool,
    /// Write the encoded bytes to this file.
    #[arg(long)]
    pub bin_out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct WirePose {
    x: f64,
    y: f64,
    theta: f64,
    sigma_x: f64,
    sigma_y: f64,
    #[serde(default)]
    rho: f64,
    sigma_theta_deg: f64,
}

impl WirePose {
    fn to_gaussian(&self) -> GaussianPose2 {
        GaussianPose2::from_wire_std(
            Pose2::new(self.x, self.y, self.theta),
            self.sigma_x,
            self.sigma_y,
            self.rho,
            self.sigma_theta_deg.to_radians(),
        )
    }
}

#[derive(Deserialize)]
struct ManagementFile {
    station_id: u32,
    station_type: StationType,
    generation_time_ms: u64,
    reference: WirePose,
}

#[derive(Deserialize)]
struct StationDataFile {
    heading: f64,
    speed: f64,
    length: f64,
    width: f64,
}

#[derive(Deserialize)]
struct SensorFile {
    sensor_id: u8,
    sensor_type: SensorType,
    range: f64,
    fov_start: f64,
    fov_end: f64,
}

#[derive(Deserialize)]
struct ObjectFile {
    object_id: u16,
    class: ObjectClass,
    pose: WirePose,
    speed: f64,
    speed_std: f64,
    length: f64,
    width: f64,
}

#[derive(Deserialize)]
struct CpmFile {
    management: ManagementFile,
    station_data: Option<StationDataFile>,
    #[serde(default)]
    sensors: Vec<SensorFile>,
    #[serde(default)]
    objects: Vec<ObjectFile>,
}

impl CpmFile {
    fn to_cpm(&self) -> Result<Cpm, CliError> {
        Cpm::new(
            CpmManagement {
                station_id: self.management.station_id,
                station_type: self.management.station_type,
                generation_time_ms: self.management.generation_time_ms,
                reference_position: self.management.reference.to_gaussian(),
            },
            self.station_data.as_ref().map(|sd| StationData {
                heading: sd.heading,
                speed: sd.speed,
                length: sd.length,
                width: sd.width,
            }),
            self.sensors
                .iter()
                .map(|s| SensorInformation {
                    sensor_id: s.sensor_id,
                    sensor_type: s.sensor_type,
                    range: s.range,
                    fov_start: s.fov_start,
                    fov_end: s.fov_end,
                })
                .collect(),
            self.objects
                .iter()
                .map(|o| PerceivedObject {
                    object_id: o.object_id,
                    object_class: o.class,
                    pose_in_station_frame: o.pose.to_gaussian(),
                    speed: o.speed,
                    speed_std: o.speed_std,
                    length: o.length,
                    width: o.width,
                })
                .collect(),
        )
        .map_err(CliError::from)
    }
}

fn hex_dump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (i, chunk) in bytes.chunks(16).enumerate() {
        out.push_str(&format!("{:06x}  {}\n", i * 16, hex::encode(chunk)));
    }
    out
}

fn pretty_print(cpm: &Cpm) {
    let m = &cpm.management;
    let p = m.reference_position.mean();
    let c = m.reference_position.cov();
    println!("management:");
    println!("  station_id   = {}", m.station_id);
    println!("  station_type = {:?}", m.station_type);
    println!("  generated    = {} ms", m.generation_time_ms);
    println!(
        "  reference    = ({:.3} m, {:.3} m, {:.4} rad), sigma ({:.3} m, {:.3} m, {:.4} deg)",
        p.x,
        p.y,
        p.theta,
        c[(0, 0)].sqrt(),
        c[(1, 1)].sqrt(),
        c[(2, 2)].sqrt().to_degrees()
    );
    match &cpm.station_data {
        Some(sd) => println!(
            "station data: heading {:.4} rad, speed {:.2} m/s, {:.2} x {:.2} m",
            sd.heading, sd.speed, sd.length, sd.width
        ),
        None => println!("station data: (absent)"),
    }
    println!("sensors: {}", cpm.sensors.len());
    for s in &cpm.sensors {
        println!(
            "  #{} {:?}, range {:.1} m, fov [{:.3}, {:.3}] rad",
            s.sensor_id, s.sensor_type, s.range, s.fov_start, s.fov_end
        );
    }
    println!("perceived objects: {}", cpm.objects.len());
    for o in &cpm.objects {
        let p = o.pose_in_station_frame.mean();
        let c = o.pose_in_station_frame.cov();
        println!(
            "  #{} {:?} at ({:.3}, {:.3}, {:.4}), sigma ({:.3} m, {:.3} m, {:.3} deg), \
             speed {:.2}±{:.2} m/s, {:.2} x {:.2} m",
            o.object_id,
            o.object_class,
            p.x,
            p.y,
            p.theta,
            c[(0, 0)].sqrt(),
            c[(1, 1)].sqrt(),
            c[(2, 2)].sqrt().to_degrees(),
            o.speed,
            o.speed_std,
            o.length,
            o.width
        );
    }
}

pub fn run(_cli: &Cli, args: &CpmArgs) -> Result<(), CliError> {
    if let Some(toml_path) = &args.toml {
        // Encode path.
        let file: CpmFile = toml::from_str(&read_file(toml_path)?)
            .map_err(|e| CliError::input(format!("{}: {e}", toml_path.display())))?;
        let cpm = file.to_cpm()?;
        let bytes = encode(&cpm)?;
        println!("encoded {} bytes", bytes.len());
        print!("{}", hex_dump(&bytes));
        pretty_print(&cpm);
        if args.check {
            let decoded = decode(&bytes)?;
            let quantized = quantize(&cpm)?;
            if decoded != quantized {
                return Err(CliError::input(
                    "roundtrip mismatch: decode(encode(x)) != quantize(x)".to_string(),
                ));
            }
            println!("roundtrip check: ok");
        }
        if let Some(out) = &args.bin_out {
            std::fs::write(out, &bytes)?;
            println!("wrote {}", out.display());
        }
        return Ok(());
    }

    // Decode path.
    let bytes: Vec<u8> = if let Some(path) = &args.file {
        std::fs::read(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?
    } else if let Some(hex_str) = &args.hex {
        hex::decode(hex_str.trim().replace([' ', '\n'], ""))
            .map_err(|e| CliError::input(format!("invalid hex: {e}")))?
    } else {
        return Err(CliError::input(
            "one of --file, --hex, or --toml is required".to_string(),
        ));
    };

    let cpm = decode(&bytes)?;
    println!("decoded {} bytes", bytes.len());
    pretty_print(&cpm);
    if args.check {
        let reencoded = encode(&cpm)?;
        if reencoded != bytes {
            return Err(CliError::input(
                "roundtrip mismatch: encode(decode(bytes)) != bytes".to_string(),
            ));
        }
        println!("roundtrip check: ok");
    }
    if let Some(out) = &args.bin_out {
        std::fs::write(out, &bytes)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
