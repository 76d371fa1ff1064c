//! `ergosearch` command-line driver.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
//! run fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ergosearch::io::{read_raster, to_gray8, write_pgm, RasterKind};
use ergosearch::{run, sweep_lambda, ScenarioConfig};

#[derive(Parser)]
#[command(name = "ergosearch", version, about = "Ergodic multi-agent search over drifting targets")]
struct Cli {
    /// Root directory for relative output paths.
    #[arg(long, global = true, env = "ERGOSEARCH_OUT", value_name = "DIR")]
    root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its logs.
    Run {
        config: PathBuf,
        /// Target seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both modes over a set of velocity ratios and tabulate the metrics.
    Sweep(SweepArgs),
    /// Write a quick-look image of a saved field.
    Render {
        field: PathBuf,
        /// Grayscale PGM instead of false-color PNG.
        #[arg(long, conflicts_with = "png")]
        pgm: bool,
        /// False-color PNG (the default).
        #[arg(long)]
        png: bool,
        /// Image path; defaults to the field path with a new extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a config and check its invariants without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    horizons: Vec<f64>,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Directory for sweep.csv, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .chain()
                .find_map(|c| c.downcast_ref::<ergosearch::Error>())
                .is_none_or(ergosearch::Error::is_config);
            ExitCode::from(if config { 1 } else { 2 })
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let root = cli.root.unwrap_or_default();
    match cli.command {
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok ({} steps of {} s)", config.display(), cfg.steps(), cfg.dt());
        }
        Command::Run { config, seed, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.targets.seed = s;
            }
            let dir = out.unwrap_or_else(|| root.join(&cfg.output.dir));
            let report = run(&cfg, Some(&dir)).map_err(anyhow::Error::from)?;
            let s = &report.summary;
            println!(
                "t = {} s: eta {:.4}, kappa {:.4} ({} detected, {} escaped); output in {}",
                s.t_end,
                s.eta,
                s.kappa,
                s.counts.detected,
                s.counts.escaped,
                dir.display()
            );
        }
        Command::Sweep(a) => sweep(a, &root)?,
        Command::Render { field, pgm, png: _, out } => render(&field, pgm, out)?,
    }
    Ok(())
}

fn sweep(a: SweepArgs, root: &Path) -> anyhow::Result<()> {
    let cfg = ScenarioConfig::load(&a.config)?;
    let rows = sweep_lambda(&cfg, &a.lambdas, &a.horizons, a.jobs)?;
    let dir = a.out.unwrap_or_else(|| root.join(&cfg.output.dir));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    println!("{:>10} {:>8} {:>10} {:>8} {:>8}", "lambda", "mode", "horizon", "eta", "kappa");
    for r in &rows {
        w.serialize(r)?;
        println!("{:>10} {:>8} {:>10} {:>8.4} {:>8.4}", r.lambda, r.mode.label(), r.horizon, r.eta, r.kappa);
    }
    w.flush()?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

/// Low values dark purple, high values white.
const PALETTE: [[f64; 3]; 5] = [
    [20.0, 4.0, 40.0],
    [88.0, 24.0, 120.0],
    [166.0, 72.0, 160.0],
    [226.0, 160.0, 208.0],
    [255.0, 255.0, 255.0],
];

fn false_color(g: u8) -> [u8; 3] {
    let s = g as f64 / 255.0 * (PALETTE.len() - 1) as f64;
    let k = (s.floor() as usize).min(PALETTE.len() - 2);
    let f = s - k as f64;
    let (a, b) = (PALETTE[k], PALETTE[k + 1]);
    std::array::from_fn(|c| (a[c] + f * (b[c] - a[c])).round() as u8)
}

fn render(field: &Path, pgm: bool, out: Option<PathBuf>) -> anyhow::Result<()> {
    let (header, planes) = read_raster(field)?;
    let values: Vec<f64> = match header.kind {
        RasterKind::Scalar => planes.into_iter().next().unwrap_or_default(),
        RasterKind::Flow => {
            let Some([wx, wy]) = planes.get(..2) else { bail!("flow file has no snapshot") };
            wx.iter().zip(wy).map(|(x, y)| x.hypot(*y)).collect()
        }
    };
    let (nx, ny) = (header.nx, header.ny);
    let out = out.unwrap_or_else(|| field.with_extension(if pgm { "pgm" } else { "png" }));
    if pgm {
        write_pgm(&out, &values, nx, ny)?;
    } else {
        let rgb: Vec<u8> = to_gray8(&values, nx, ny).into_iter().flat_map(false_color).collect();
        let img = image::RgbImage::from_raw(nx as u32, ny as u32, rgb).context("image dimensions")?;
        img.save_with_format(&out, image::ImageFormat::Png)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
