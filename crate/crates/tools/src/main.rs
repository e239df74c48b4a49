use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acf_core::boosting::{CachedNegatives, NegativeSource};
use acf_core::detector::detect_multiview;
use acf_core::eval::evaluate;
use acf_core::{compute_channels, Merging, Rerank};
use acf_tools::ablation::{run_ablation, scale_variants};
use acf_tools::bench::bench;
use acf_tools::config::RunConfig;
use acf_tools::formats::{load_annotations, load_detections, save_annotations, save_detections, save_json, DetectionMap};
use acf_tools::imageio::{draw_boxes, image_id_of, list_images, load_image, save_plane_png, save_png, to_rgb8};
use acf_tools::model_io::{load_model, save_model};
use acf_tools::pipeline::{file_positives, Jitter, synth_positives, train_multiview, FileNegatives, SynthNegatives};
use acf_tools::synth::{annotations, generate_image, image_id, SynthConfig};
use acf_tools::{ToolError, ToolResult};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "acf", version, about = "Multi-view aggregate channel feature detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a run configuration with every default filled in.
    Config {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the synthetic splits as PNG files with annotations.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of images of every split.
        #[arg(long)]
        images: Option<usize>,
    },
    /// Train a multi-view model. Uses the configured dataset paths when
    /// present, the synthetic splits otherwise.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Detect in image files or directories and write detection records.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        rerank: Option<RerankArg>,
        #[arg(long, value_enum)]
        merging: Option<MergingArg>,
        #[arg(long, allow_negative_numbers = true)]
        score_threshold: Option<f64>,
        /// Directory for copies of the inputs with detections drawn.
        #[arg(long)]
        render: Option<PathBuf>,
    },
    /// Score detections against annotations.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        jaccard: f64,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        fppi: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dump every channel of an image as grayscale PNG.
    Channels {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Measure detection throughput.
    Bench {
        #[arg(long)]
        model: PathBuf,
        /// Image files or directories; the synthetic test split when absent.
        #[arg(long = "input", num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        images: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fusion and channel-design sweep on the synthetic splits.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RerankArg {
    None,
    Normalization,
    NewScore,
    OverlapRerank,
    SumOfOverlap,
}

impl From<RerankArg> for Rerank {
    fn from(r: RerankArg) -> Rerank {
        match r {
            RerankArg::None => Rerank::None,
            RerankArg::Normalization => Rerank::Normalization,
            RerankArg::NewScore => Rerank::NewScore,
            RerankArg::OverlapRerank => Rerank::OverlapRerank,
            RerankArg::SumOfOverlap => Rerank::SumOfOverlap,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MergingArg {
    GreedyNms,
    Combination,
}

impl From<MergingArg> for Merging {
    fn from(m: MergingArg) -> Merging {
        match m {
            MergingArg::GreedyNms => Merging::GreedyNms,
            MergingArg::Combination => Merging::Combination,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> ToolResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn create_dir(path: &Path) -> ToolResult<()> {
    std::fs::create_dir_all(path).map_err(|e| ToolError::io(path, e))
}

fn collect_inputs(inputs: &[PathBuf]) -> ToolResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        files.extend(list_images(p)?);
    }
    if files.is_empty() {
        return Err(ToolError::Validation("no input images found".into()));
    }
    Ok(files)
}

fn run(command: Command) -> ToolResult<()> {
    match command {
        Command::Config { out } => RunConfig::default().save(&out),
        Command::Synth { config, out, images } => {
            let run = load_config(&config)?;
            let splits = [
                ("train", &run.synth.train),
                ("negatives", &run.synth.negatives),
                ("test", &run.synth.test),
            ];
            for (name, cfg) in splits {
                let mut cfg: SynthConfig = cfg.clone();
                if name == "negatives" {
                    cfg = cfg.negatives();
                }
                if let Some(n) = images {
                    cfg.image_count = n;
                }
                write_split(&out.join(name), &cfg)?;
                eprintln!("{name}: {} images", cfg.image_count);
            }
            Ok(())
        }
        Command::Train { config, model } => {
            let run = load_config(&config)?;
            let out = model
                .or_else(|| run.paths.model.clone())
                .ok_or_else(|| ToolError::Config("no model output path (use --model or paths.model)".into()))?;
            let positives = match (&run.paths.train_images, &run.paths.train_annotations) {
                (Some(dir), Some(ann)) => file_positives(dir, &load_annotations(ann)?, &run.channels, run.window_size, &Jitter::for_scan(&run))?,
                (None, None) => synth_positives(&run.synth.train, &run.channels, run.window_size, &Jitter::for_scan(&run)),
                _ => return Err(ToolError::Config("train_images and train_annotations must be set together".into())),
            };
            eprintln!("{} positives", positives.len());
            let negatives: Box<dyn NegativeSource> = match &run.paths.negative_images {
                Some(dir) => Box::new(CachedNegatives::new(FileNegatives {
                    paths: list_images(dir)?,
                    pyramid: run.pyramid.clone(),
                })),
                None => Box::new(CachedNegatives::new(SynthNegatives {
                    config: run.synth.negatives.clone(),
                    pyramid: run.pyramid.clone(),
                })),
            };
            let (model, _) = train_multiview(&positives, negatives.as_ref(), &run, |v, r| {
                let last = r.rounds.last().map(|s| s.error).unwrap_or(0.0);
                eprintln!(
                    "view {}: {} trees, {} negatives, final weighted error {last:.2e}",
                    v + 1,
                    r.rounds.len(),
                    r.final_negatives
                );
            })?;
            save_model(&model, &out)
        }
        Command::Detect {
            model,
            inputs,
            output,
            rerank,
            merging,
            score_threshold,
            render,
        } => {
            let mut model = load_model(&model)?;
            if let Some(r) = rerank {
                model.fusion.rerank = r.into();
            }
            if let Some(m) = merging {
                model.fusion.merging = m.into();
            }
            if let Some(t) = score_threshold {
                model.fusion.score_threshold = t;
            }
            model.fusion.validate().map_err(|e| ToolError::Config(e.to_string()))?;
            if let Some(dir) = &render {
                create_dir(dir)?;
            }
            let mut map = DetectionMap::new();
            for path in collect_inputs(&inputs)? {
                let image = load_image(&path)?;
                let dets = detect_multiview(&image, &model)?;
                let id = image_id_of(&path);
                if let Some(dir) = &render {
                    let mut canvas = to_rgb8(&image);
                    let boxes: Vec<_> = dets.iter().map(|d| d.bbox()).collect();
                    draw_boxes(&mut canvas, &boxes, [255, 32, 32]);
                    let target = dir.join(format!("{id}.png"));
                    canvas.save(&target).map_err(|source| ToolError::Image { path: target, source })?;
                }
                eprintln!("{id}: {} detections", dets.len());
                map.insert(id, dets);
            }
            save_detections(&output, &map)
        }
        Command::Eval {
            detections,
            annotations,
            jaccard,
            fppi,
            output,
        } => {
            let config = acf_core::EvalConfig {
                jaccard_threshold: jaccard,
                fppi_points: fppi,
            };
            config.validate().map_err(|e| ToolError::Config(e.to_string()))?;
            let dets = load_detections(&detections)?;
            let truth = load_annotations(&annotations)?;
            truth.validate()?;
            let summary = evaluate(&dets, &truth, &config);
            println!("AP {:.4}", summary.average_precision);
            for ((p, d), (_, c)) in summary.discrete.readouts.iter().zip(&summary.continuous.readouts) {
                println!("TPR@{p} FPPI discrete {d:.4} continuous {c:.4}");
            }
            match output {
                Some(p) => save_json(&p, &summary),
                None => Ok(()),
            }
        }
        Command::Channels { image, out, config } => {
            let run = load_config(&config)?;
            let img = load_image(&image)?;
            let stack = compute_channels(&img, &run.channels)?;
            create_dir(&out)?;
            for (c, d) in stack.descriptors().iter().enumerate() {
                save_plane_png(&stack.plane(c), &out.join(format!("{c:02}_{}.png", d.label())))?;
            }
            eprintln!("{} channels of {}x{}", stack.num_channels(), stack.width(), stack.height());
            Ok(())
        }
        Command::Bench {
            model,
            inputs,
            images,
            threads,
            config,
            output,
        } => {
            let model = load_model(&model)?;
            let set = if inputs.is_empty() {
                let run = load_config(&config)?;
                (0..images.min(run.synth.test.image_count))
                    .map(|i| generate_image(&run.synth.test, i).image)
                    .collect::<Vec<_>>()
            } else {
                collect_inputs(&inputs)?
                    .iter()
                    .take(images)
                    .map(|p| load_image(p))
                    .collect::<ToolResult<Vec<_>>>()?
            };
            let report = bench(&model, &set, threads)?;
            print!("{}", report.render());
            match output {
                Some(p) => save_json(&p, &report),
                None => Ok(()),
            }
        }
        Command::Ablate { config, output } => {
            let run = load_config(&config)?;
            let report = run_ablation(&run, &run.synth, &scale_variants(&run.channels), |m| eprintln!("{m}"))?;
            print!("{}", report.render());
            match output {
                Some(p) => save_json(&p, &report),
                None => Ok(()),
            }
        }
    }
}

fn write_split(dir: &Path, cfg: &SynthConfig) -> ToolResult<()> {
    cfg.validate()?;
    let images = dir.join("images");
    create_dir(&images)?;
    for i in 0..cfg.image_count {
        save_png(&generate_image(cfg, i).image, &images.join(format!("{}.png", image_id(i))))?;
    }
    save_annotations(&dir.join("annotations.jsonl"), &annotations(cfg))?;
    save_json(&dir.join("manifest.json"), cfg)
}
