use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irf_core::harmonic_model::Harmonic;
use irf_core::ImageStack;
use irf_toolkit::config::{
    ChannelMode, CombineRule, EpsilonPolicy, Estimator, PipelineConfig, Region,
};
use irf_toolkit::documents::{ModelDocument, RunReport};
use irf_toolkit::output::write_outputs;
use irf_toolkit::pipeline::{design_model, estimate_model, filter_image, run_static, run_tracking};
use irf_toolkit::pnm::{read_image, write_image};
use irf_toolkit::synth::{scene, sequence, Patch, SceneSpec, SpeckleSpec};
use irf_toolkit::{Result, ToolkitError};

/// Texture anomaly detection with inverse resonance filters.
#[derive(Parser)]
#[command(name = "irf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate resonance roots and amplitudes on the base region.
    Estimate {
        image: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Design per-channel filters (estimating first unless --model is given).
    Design {
        image: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the filter output as an image.
    Filter {
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Full single-image run: mask, boxes, report.
    Detect {
        image: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write an overlay with confirmed boxes outlined.
        #[arg(long)]
        overlay: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Frame-sequence run with binary-correlation confirmation.
    Track {
        #[arg(required = true)]
        frames: Vec<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        overlay: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate synthetic fixtures.
    Synth(SynthArgs),
    /// Summarize a report document.
    Report {
        report: PathBuf,
        /// Print the normalized JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// row,col,rows,cols
    #[arg(long, value_parser = parse_region)]
    base_region: Option<Region>,
    /// P,Q
    #[arg(long, value_parser = parse_pair)]
    order: Option<(usize, usize)>,
    #[arg(long, value_enum)]
    estimator: Option<Estimator>,
    /// Plain linear prediction instead of the palindromic fit.
    #[arg(long)]
    plain: bool,
    #[arg(long)]
    split: Option<usize>,
    #[arg(long)]
    max_log_modulus: Option<f64>,
    /// Keep raw root moduli in the filter design.
    #[arg(long)]
    no_project: bool,
    #[arg(long, value_enum)]
    channel_mode: Option<ChannelMode>,
    #[arg(long)]
    sigma_multiplier: Option<f64>,
    #[arg(long)]
    min_area: Option<usize>,
    #[arg(long)]
    extension: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Fixed evidence threshold.
    #[arg(long, conflicts_with = "epsilon_mean_std")]
    epsilon: Option<f64>,
    /// Evidence threshold mean(C) + k std(C).
    #[arg(long)]
    epsilon_mean_std: Option<f64>,
    #[arg(long)]
    cell: Option<usize>,
    #[arg(long)]
    fill: Option<f64>,
    #[arg(long, value_enum)]
    combine: Option<CombineRule>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    r_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record stage timings in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output image; with --frames > 1, `_000`, `_001`, ... are appended to the stem.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    rows: usize,
    #[arg(long, default_value_t = 128)]
    cols: usize,
    /// fx,fy,amplitude,phase (repeatable)
    #[arg(long = "harmonic", value_parser = parse_harmonic)]
    harmonics: Vec<Harmonic>,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 128.0)]
    offset: f64,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// row,col,size,fx,fy,amplitude[,level] (repeatable)
    #[arg(long = "patch", value_parser = parse_patch)]
    patches: Vec<Patch>,
    #[arg(long, default_value_t = 1)]
    frames: usize,
    /// Speckle blobs per frame.
    #[arg(long, default_value_t = 0)]
    speckle: usize,
    #[arg(long, default_value_t = 3)]
    speckle_size: usize,
    /// Keep speckle clear of this many preceding frames' speckle.
    #[arg(long, default_value_t = 2)]
    speckle_history: usize,
    #[arg(long, default_value_t = irf_core::harmonic_model::DEFAULT_SEED)]
    seed: u64,
}

fn numbers<T: std::str::FromStr>(s: &str, n: usize) -> std::result::Result<Vec<T>, String> {
    let v: Vec<T> = s
        .split([',', 'x'])
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| format!("bad number '{t}'"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!(
            "expected {n} comma-separated values, got {}",
            v.len()
        ));
    }
    Ok(v)
}

fn parse_region(s: &str) -> std::result::Result<Region, String> {
    let v = numbers::<usize>(s, 4)?;
    Ok(Region {
        row: v[0],
        col: v[1],
        rows: v[2],
        cols: v[3],
    })
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let v = numbers::<usize>(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_harmonic(s: &str) -> std::result::Result<Harmonic, String> {
    let v = numbers::<f64>(s, 4)?;
    Ok(Harmonic::new(v[0], v[1], v[2], v[3]))
}

fn parse_patch(s: &str) -> std::result::Result<Patch, String> {
    let v: Vec<&str> = s.split(',').collect();
    if v.len() != 6 && v.len() != 7 {
        return Err("expected row,col,size,fx,fy,amplitude[,level]".into());
    }
    let u = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad integer '{t}'"))
    };
    let f = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number '{t}'"))
    };
    Ok(Patch {
        row: u(v[0])?,
        col: u(v[1])?,
        size: u(v[2])?,
        texture: Harmonic::new(f(v[3])?, f(v[4])?, f(v[5])?, 0.0),
        level: v.get(6).map_or(Ok(0.0), |t| f(t))?,
    })
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = read_text(p)?;
                serde_json::from_str(&text).map_err(|e| ToolkitError::Document {
                    path: p.clone(),
                    message: e.to_string(),
                })?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(c.base_region, self.base_region);
        set!(c.order, self.order);
        set!(c.estimator, self.estimator);
        if self.plain {
            c.symmetric = false;
        }
        if self.split.is_some() {
            c.split = self.split;
        }
        set!(c.max_log_modulus, self.max_log_modulus);
        if self.no_project {
            c.project_roots = false;
        }
        set!(c.channel_mode, self.channel_mode);
        set!(c.sigma_multiplier, self.sigma_multiplier);
        set!(c.min_area, self.min_area);
        set!(c.histogram.extension, self.extension);
        set!(c.histogram.levels, self.levels);
        set!(c.histogram.epsilon, self.epsilon.map(EpsilonPolicy::Fixed));
        set!(
            c.histogram.epsilon,
            self.epsilon_mean_std.map(EpsilonPolicy::MeanStd)
        );
        set!(c.histogram.cell, self.cell);
        set!(c.histogram.fill, self.fill);
        set!(c.histogram.combine, self.combine);
        set!(c.tracking.window, self.window);
        set!(c.tracking.r_threshold, self.r_threshold);
        set!(c.seed, self.seed);
        if self.timings {
            c.timings = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ToolkitError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn load_image(path: &Path) -> Result<ImageStack> {
    read_image(path)
        .map_err(|source| ToolkitError::Read {
            path: path.to_path_buf(),
            source,
        })?
        .map_err(|source| ToolkitError::Parse {
            path: path.to_path_buf(),
            source,
        })
}

fn load_model(path: &Path) -> Result<ModelDocument> {
    let text = read_text(path)?;
    let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| ToolkitError::Document {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    doc.check_version()
        .map_err(|message| ToolkitError::Document {
            path: path.to_path_buf(),
            message,
        })?;
    Ok(doc)
}

fn save_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| ToolkitError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("document serializes");
    s.push('\n');
    save_text(path, &s)
}

fn save_image(path: &Path, image: &ImageStack) -> Result<()> {
    write_image(path, image).map_err(|source| ToolkitError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn numbered(path: &Path, index: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_{index:03}{ext}"))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SceneSpec {
        rows: a.rows,
        cols: a.cols,
        noise: a.noise,
        offset: a.offset,
        channels: a.channels,
        patches: a.patches.clone(),
        seed: a.seed,
        ..Default::default()
    };
    if !a.harmonics.is_empty() {
        spec.harmonics = a.harmonics.clone();
    }
    if a.frames <= 1 && a.speckle == 0 {
        return save_image(&a.out, &scene(&spec)?);
    }
    let speckle = SpeckleSpec {
        count: a.speckle,
        size: a.speckle_size,
        margin: a.speckle_size + 8,
        history: a.speckle_history,
    };
    let seq = sequence(&spec, a.frames.max(1), &speckle)?;
    for (t, f) in seq.frames.iter().enumerate() {
        save_image(&numbered(&a.out, t), f)?;
    }
    Ok(())
}

fn summarize(r: &RunReport) -> String {
    let mut s = format!(
        "mode: {:?}\nestimator: {:?}, order {}x{}\n",
        r.mode, r.model.estimator, r.model.order.0, r.model.order.1
    );
    for ch in &r.model.channels {
        let max_damp = ch
            .dampings_x
            .iter()
            .chain(&ch.dampings_y)
            .fold(0.0f64, |m, d| m.max(d.abs()));
        s += &format!(
            "channel {}: {}x{} roots, max |damping| {:.3e}",
            ch.channel,
            ch.zx.len(),
            ch.zy.len(),
            max_damp
        );
        if let Some(f) = &ch.filter {
            s += &format!(
                ", kernel {}x{}, E {:.4}, sigma {:.4e}",
                f.rows,
                f.cols,
                f.e,
                f.sigma2.sqrt()
            );
        }
        s.push('\n');
    }
    for f in &r.frames {
        s += &format!(
            "frame {}: {} flagged pixels, {} objects\n",
            f.frame_index,
            f.flagged_pixels,
            f.objects.len()
        );
        for o in &f.objects {
            let b = o.bbox;
            s += &format!(
                "  box ({}, {})-({}, {}) area {}",
                b.x0, b.y0, b.x1, b.y1, o.area
            );
            if let Some(fill) = o.max_fill {
                s += &format!(" fill {fill:.2}");
            }
            if let Some(r) = o.r {
                s += &format!(" r {r:.3}");
            }
            s += if o.confirmed {
                " confirmed\n"
            } else {
                " rejected\n"
            };
        }
    }
    for w in &r.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate { image, out, cfg } => {
            let c = cfg.resolve()?;
            save_json(&out, &estimate_model(&load_image(&image)?, &c)?)
        }
        Command::Design {
            image,
            model,
            out,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let img = load_image(&image)?;
            let doc = match model {
                Some(p) => load_model(&p)?,
                None => estimate_model(&img, &c)?,
            };
            save_json(&out, &design_model(&img, &c, doc)?)
        }
        Command::Filter {
            image,
            model,
            out,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let planes = filter_image(&load_image(&image)?, &c, &load_model(&model)?)?;
            save_image(
                &out,
                &ImageStack::new(planes).map_err(ToolkitError::core("filtering"))?,
            )
        }
        Command::Detect {
            image,
            model,
            out_dir,
            overlay,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let img = load_image(&image)?;
            let model = model.as_deref().map(load_model).transpose()?;
            let run = run_static(&img, &c, model)?;
            let objects = &run.report.frames[0].objects;
            write_outputs(
                &out_dir,
                "",
                &run.mask,
                objects,
                Some(&run.report),
                overlay.then_some(&img),
            )?;
            Ok(())
        }
        Command::Track {
            frames,
            model,
            out_dir,
            overlay,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let imgs = frames
                .iter()
                .map(|p| load_image(p))
                .collect::<Result<Vec<_>>>()?;
            let model = model.as_deref().map(load_model).transpose()?;
            let run = run_tracking(&imgs, &c, model)?;
            for (t, (mask, frame)) in run.masks.iter().zip(&run.report.frames).enumerate() {
                let stem = format!("frame_{t:03}_");
                write_outputs(
                    &out_dir,
                    &stem,
                    mask,
                    &frame.objects,
                    None,
                    overlay.then(|| &imgs[t]),
                )?;
            }
            save_text(&out_dir.join("report.json"), &run.report.to_json())?;
            Ok(())
        }
        Command::Synth(a) => synth(&a),
        Command::Report { report, json } => {
            let text = read_text(&report)?;
            let r = RunReport::from_json(&text).map_err(|message| ToolkitError::Document {
                path: report.clone(),
                message,
            })?;
            if json {
                print!("{}", r.to_json());
            } else {
                print!("{}", summarize(&r));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("irf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
