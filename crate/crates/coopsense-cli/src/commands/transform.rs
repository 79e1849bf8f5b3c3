//! `coopsense transform` — one uncertainty-aware frame transformation.

use super::{ensure_out_dir, read_file};
use crate::error::CliError;
use crate::svg::SvgCanvas;
use crate::Cli;
use clap::Args;
use coopsense::geometry::{
    confidence_ellipse, transform_with_uncertainty, GaussianPose2, Pose2, UtParams,
};
use nalgebra::Matrix3;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct TransformArgs {
    /// Receiver pose "x,y,theta" in the global frame (theta in radians).
    #[arg(long, conflicts_with = "input", requires = "sender", requires = "object")]
    pub receiver: Option<String>,
    /// Receiver pose standard deviations "sx,sy,stheta" (m, m, rad).
    #[arg(long)]
    pub receiver_std: Option<String>,
    /// Sender pose "x,y,theta" in the global frame.
    #[arg(long)]
    pub sender: Option<String>,
    #[arg(long)]
    pub sender_std: Option<String>,
    /// Object pose "x,y,theta" in the sender frame.
    #[arg(long)]
    pub object: Option<String>,
    #[arg(long)]
    pub object_std: Option<String>,
    /// TOML file carrying poses with full 3×3 covariance matrices.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// UT spread parameter α ∈ (0, 1].
    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,
    /// UT prior-knowledge parameter β.
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// UT secondary scaling κ ≥ 0.
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,
}

#[derive(Deserialize)]
struct GaussianFile {
    pose: Pose2,
    /// Row-major 3×3 covariance.
    cov: [[f64; 3]; 3],
}

#[derive(Deserialize)]
struct TransformFile {
    receiver: GaussianFile,
    sender: GaussianFile,
    object: GaussianFile,
}

fn parse_triple(what: &str, s: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::input(format!(
            "{what}: expected three comma-separated numbers, got {s:?}"
        )));
    }
    let mut vals = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p
            .trim()
            .parse()
            .map_err(|e| CliError::input(format!("{what}: {e} in {s:?}")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn gaussian_from_flags(
    what: &str,
    pose: Option<&String>,
    std: Option<&String>,
) -> Result<GaussianPose2, CliError> {
    let pose = pose.ok_or_else(|| CliError::input(format!("missing --{what}")))?;
    let (x, y, theta) = parse_triple(what, pose)?;
    let pose = Pose2::new(x, y, theta);
    match std {
        None => Ok(GaussianPose2::exact(pose)),
        Some(s) => {
            let (sx, sy, st) = parse_triple(&format!("{what}-std"), s)?;
            Ok(GaussianPose2::from_std(pose, sx, sy, st))
        }
    }
}

fn gaussian_from_file(what: &str, g: &GaussianFile) -> Result<GaussianPose2, CliError> {
    let cov = Matrix3::from_fn(|i, j| g.cov[i][j]);
    GaussianPose2::new(g.pose, cov)
        .map_err(|e| CliError::input(format!("{what} covariance: {e}")))
}

pub fn run(cli: &Cli, args: &TransformArgs) -> Result<(), CliError> {
    let (receiver, sender, object) = match &args.input {
        Some(path) => {
            let file: TransformFile = toml::from_str(&read_file(path)?)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            (
                gaussian_from_file("receiver", &file.receiver)?,
                gaussian_from_file("sender", &file.sender)?,
                gaussian_from_file("object", &file.object)?,
            )
        }
        None => (
            gaussian_from_flags("receiver", args.receiver.as_ref(), args.receiver_std.as_ref())?,
            gaussian_from_flags("sender", args.sender.as_ref(), args.sender_std.as_ref())?,
            gaussian_from_flags("object", args.object.as_ref(), args.object_std.as_ref())?,
        ),
    };

    let ut = UtParams {
        alpha: args.alpha,
        beta: args.beta,
        kappa: args.kappa,
    };
    let out = transform_with_uncertainty(&receiver, &sender, &object, ut)
        .map_err(|e| CliError::input(e.to_string()))?;

    let mean = out.mean();
    let cov = out.cov();
    println!("transformed pose in receiver frame:");
    println!("  x     = {:.6} m", mean.x);
    println!("  y     = {:.6} m", mean.y);
    println!("  theta = {:.6} rad ({:.4} deg)", mean.theta, mean.theta.to_degrees());
    println!("covariance (x, y, theta):");
    for i in 0..3 {
        println!(
            "  [{:>12.6e} {:>12.6e} {:>12.6e}]",
            cov[(i, 0)],
            cov[(i, 1)],
            cov[(i, 2)]
        );
    }
    let ellipse = confidence_ellipse(&out.position_cov(), (mean.x, mean.y), cli.mass)
        .map_err(|e| CliError::input(e.to_string()))?;
    println!(
        "{:.0}% position ellipse: semi-major {:.4} m, semi-minor {:.4} m, orientation {:.4} rad",
        cli.mass * 100.0,
        ellipse.semi_major,
        ellipse.semi_minor,
        ellipse.orientation
    );

    if cli.format.svg() {
        ensure_out_dir(&cli.out)?;
        let mut canvas = SvgCanvas::new(cli.grid);
        canvas.marker(0.0, 0.0, 0.4, "#c62828");
        canvas.label(0.5, 0.8, 1.2, "receiver");
        canvas.ellipse(&ellipse, "#b8860b", "#ffd54f");
        canvas.marker(mean.x, mean.y, 0.2, "#333333");
        let path = cli.out.join("transform.svg");
        std::fs::write(&path, canvas.render())?;
        if cli.verbose > 0 {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}
