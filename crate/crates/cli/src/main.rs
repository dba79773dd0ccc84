//! `scalesteg`: analyze channels, embed and extract messages, verify and sweep.
//!
//! Exit codes: 0 success, 1 usage or key error, 2 infeasible payload,
//! 3 solver failure, 4 I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use scalesteg::analysis::REFERENCE_SFS;
use scalesteg::cost::CostVariant;
use scalesteg::pipeline::{self, RunConfig, StegoKey};
use scalesteg::pixelgrid::{load_image, save_image};
use scalesteg::resampler::resize;
use scalesteg::{ChannelSpec, Error, Family, PixelGrid, ScaleFactor};

#[derive(Parser)]
#[command(name = "scalesteg", version, about = "Steganography that survives image downscaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report design parameters, site counts, dPI histogram and capacity.
    Analyze {
        image: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Also write the per-site cost map as CSV.
        #[arg(long, value_name = "PATH")]
        costs: Option<PathBuf>,
        /// Report destination (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed a message file into a cover; writes the proxy stego and key.
    Embed {
        cover: PathBuf,
        message: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the cover-domain modification map as JSON.
        #[arg(long, value_name = "PATH")]
        emit_delta: Option<PathBuf>,
    },
    /// Recover the message from a scaled stego image.
    Extract {
        scaled: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed, resize through the real channel, extract, and report.
    Verify {
        cover: PathBuf,
        /// Message file; a random message at --payload is used if absent.
        message: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a channel/SF/cost grid over a directory of covers; writes CSV.
    Sweep {
        dir: PathBuf,
        /// Channels: nearest, bilinear, bicubic, aa-bilinear, aa-bicubic.
        #[arg(long, value_delimiter = ',', default_value = "bilinear,bicubic,aa-bilinear,aa-bicubic")]
        channels: Vec<String>,
        /// Scale factors; defaults to the reference table rows.
        #[arg(long, value_delimiter = ',')]
        sfs: Vec<ScaleFactor>,
        #[arg(long, value_delimiter = ',', default_value = "hill-plain")]
        costs: Vec<CostVariant>,
        #[arg(long, value_delimiter = ',', default_value = "0.05")]
        payloads: Vec<f64>,
        #[arg(long)]
        interval: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the channel to an image (the receiver-side resize).
    Resize {
        image: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ChannelArgs {
    #[arg(long, default_value = "bilinear")]
    channel: Family,
    #[arg(long)]
    antialias: bool,
    #[arg(long, default_value = "0.5")]
    sf: ScaleFactor,
}

impl ChannelArgs {
    fn spec(&self) -> scalesteg::Result<ChannelSpec> {
        ChannelSpec::new(self.channel, self.antialias, self.sf)
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Bits per scaled-image pixel.
    #[arg(long, default_value_t = 0.05)]
    payload: f64,
    #[arg(long, default_value = "hill-plain")]
    cost: CostVariant,
    /// Lattice interval override.
    #[arg(long)]
    interval: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flag runs slower than this in reports.
    #[arg(long, value_name = "MS")]
    time_budget: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> scalesteg::Result<RunConfig> {
        let mut cfg = RunConfig::new(self.channel.spec()?);
        cfg.payload = self.payload;
        cfg.cost = self.cost;
        cfg.interval = self.interval;
        cfg.seed = self.seed;
        if self.time_budget.is_some() {
            cfg.time_budget_ms = self.time_budget;
        }
        Ok(cfg)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Infeasible(_) | Error::CoverTooSmall { .. } => 2,
                Error::SolverFailure(_) | Error::PlanInconsistent(_) => 3,
                Error::Io { .. }
                | Error::UnsupportedFormat(_)
                | Error::UnsupportedDepth(_)
                | Error::Truncated { .. } => 4,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    1
}

fn write_text(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout(), "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.context("writing stdout"),
            }
        }
    }
}

fn read_bytes(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_channel(name: &str) -> anyhow::Result<(Family, bool)> {
    let (aa, fam) = match name.strip_prefix("aa-") {
        Some(rest) => (true, rest),
        None => (false, name),
    };
    let family: Family = fam.parse().map_err(|e| anyhow!("channel {name:?}: {e}"))?;
    Ok((family, aa))
}

fn load_dir(dir: &Path) -> anyhow::Result<Vec<(String, PixelGrid)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for p in paths {
        match load_image(&p) {
            Ok(img) => images.push((p.file_name().unwrap().to_string_lossy().into_owned(), img)),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(images)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze { image, run, costs, out } => {
            let cover = load_image(&image)?;
            let report = pipeline::analyze(&cover, &run.config()?, costs.is_some())?;
            if let (Some(path), Some(map)) = (&costs, &report.costs) {
                std::fs::write(path, map.to_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let mut value = serde_json::to_value(&report)?;
            if let Some(obj) = value.as_object_mut() {
                obj.remove("costs");
            }
            write_text(out.as_deref(), &serde_json::to_string_pretty(&value)?)
        }
        Command::Embed { cover, message, run, key, out, emit_delta } => {
            let cover = load_image(&cover)?;
            let msg = read_bytes(&message)?;
            let outcome = pipeline::embed_message(&cover, &run.config()?, &msg)?;
            save_image(&outcome.stego, &out)?;
            outcome.key.save(&key)?;
            if let Some(p) = emit_delta {
                std::fs::write(&p, serde_json::to_string(&outcome.delta)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            println!(
                "capacity_bits={} used_bits={} l1={} changed_sites={} wet_retries={}",
                outcome.plan.capacity_bits,
                outcome.message_bits,
                outcome.l1(),
                outcome.changed_sites(),
                outcome.wet_retries
            );
            Ok(())
        }
        Command::Extract { scaled, key, out } => {
            let key = StegoKey::load(&key)?;
            let scaled = load_image(&scaled)?;
            let msg = pipeline::extract_message(&scaled, &key)?;
            std::fs::write(&out, &msg).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Command::Verify { cover, message, run, out } => {
            let name = cover.display().to_string();
            let img = load_image(&cover)?;
            let cfg = run.config()?;
            let mut report = match message {
                Some(p) => pipeline::verify(&img, &read_bytes(&p)?, &cfg),
                None => pipeline::verify_random(&name, &img, &cfg),
            };
            report.image = name;
            write_text(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            if let Some(err) = &report.error {
                return Err(anyhow!("verify failed: {err}"));
            }
            Ok(())
        }
        Command::Sweep { dir, channels, sfs, costs, payloads, interval, seed, out } => {
            let images = load_dir(&dir)?;
            let sfs = if sfs.is_empty() {
                REFERENCE_SFS
                    .iter()
                    .map(|&(n, d)| ScaleFactor::new(n, d))
                    .collect::<scalesteg::Result<Vec<_>>>()?
            } else {
                sfs
            };
            let mut configs = Vec::new();
            for ch in &channels {
                let (family, aa) = parse_channel(ch)?;
                for &sf in &sfs {
                    for &cost in &costs {
                        for &payload in &payloads {
                            let mut cfg = RunConfig::new(ChannelSpec::new(family, aa, sf)?);
                            cfg.cost = cost;
                            cfg.payload = payload;
                            cfg.interval = interval;
                            cfg.seed = seed;
                            configs.push(cfg);
                        }
                    }
                }
            }
            let rows = pipeline::sweep(&images, &configs)?;
            write_text(out.as_deref(), pipeline::sweep_csv(&configs, &rows)?.trim_end())
        }
        Command::Resize { image, channel, out } => {
            let img = load_image(&image)?;
            save_image(&resize(&img, &channel.spec()?)?, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = std::env::var("SCALESTEG_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
