//! Subcommand implementations.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{BenchmarkArgs, NormalizeArgs, SynthesizeArgs, TrainArgs};
use colornorm::baselines::{
    estimate_stain_macenko, fit_lab_stats, normalize_macenko, normalize_reinhard, LabStats,
    StainModel,
};
use colornorm::gradcheck;
use colornorm::model::{build_model, ArchSpec, Model};
use colornorm::pipeline::{
    self, normalize_colornormnet, read_ppm, write_ppm, BenchMethod, BenchTargets,
    NormalizeOptions, OffsetMode,
};
use colornorm::train::{sample_patches, train as run_training};
use colornorm::weights::{load_weights, save_weights};
use colornorm::{ImageRgb, Rng};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn thread_pool(threads: Option<usize>) -> Result<(rayon::ThreadPool, usize), CliError> {
    let n = threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
    });
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    Ok((pool, n))
}

fn require_readable(path: &Path, what: &str) -> Result<(), CliError> {
    std::fs::File::open(path)
        .map(|_| ())
        .map_err(|e| CliError::Data(format!("{what} {}: {e}", path.display())))
}

fn require_writable_parent(path: &Path, what: &str) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        if !parent.is_dir() {
            return Err(CliError::Data(format!(
                "{what} {}: parent directory {} does not exist",
                path.display(),
                parent.display()
            )));
        }
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Data(format!("config {}: {e}", args.config.display())))?;
    let mut config: RunConfig = serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(iterations) = args.iterations {
        config.iterations = iterations;
    }
    if let Some(output) = args.output {
        config.output_weights = output;
    }
    if let Some(threads) = args.threads {
        config.threads = Some(threads);
    }
    if config.target_images.is_empty() {
        return Err(CliError::Usage("config lists no target_images".into()));
    }

    // validate every path before any work starts
    for path in &config.target_images {
        require_readable(path, "target image")?;
    }
    require_writable_parent(&config.output_weights, "output_weights")?;
    if let Some(csv) = &config.log_csv {
        require_writable_parent(csv, "log_csv")?;
    }

    let cfg = config.train_config();
    cfg.validate()?;

    let mut images = Vec::with_capacity(config.target_images.len());
    for path in &config.target_images {
        images.push(read_ppm(path)?);
    }

    let mut sample_rng = Rng::new(cfg.seed).fork();
    let patches = sample_patches(&images, config.num_patches, cfg.patch_size, &mut sample_rng)?;

    let (pool, _) = thread_pool(config.threads)?;
    let (model, log) = pool.install(|| run_training(&patches, &cfg))?;

    save_weights(&model, &config.output_weights)?;
    if let Some(csv) = &config.log_csv {
        std::fs::write(csv, log.to_csv())
            .map_err(|e| CliError::Data(format!("log_csv {}: {e}", csv.display())))?;
    }
    println!(
        "trained {} iterations on {} patches; holdout loss {} -> {}",
        cfg.iterations,
        patches.len(),
        log.initial_holdout,
        log.final_holdout()
    );
    println!("weights written to {}", config.output_weights.display());
    Ok(())
}

/// Classical-method target statistics as a tagged JSON document:
/// `{"method":"reinhard","stats":{...}}` or `{"method":"macenko","stain":{...}}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
enum TargetSpec {
    Reinhard { stats: LabStats },
    Macenko { stain: StainModel },
}

fn load_target_spec(path: &Path) -> Result<TargetSpec, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("target stats {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("target stats {}: {e}", path.display())))
}

fn save_target_spec(path: &Path, spec: &TargetSpec) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(spec).expect("target spec serializes");
    std::fs::write(path, json)
        .map_err(|e| CliError::Data(format!("save target {}: {e}", path.display())))
}

pub fn normalize(args: NormalizeArgs) -> Result<(), CliError> {
    require_readable(&args.input, "input")?;
    require_writable_parent(&args.output, "output")?;

    let mode = match args.mode.as_str() {
        "global" => OffsetMode::Global,
        "pixel" => OffsetMode::Pixel,
        other => {
            return Err(CliError::Usage(format!(
                "unknown mode `{other}`; valid modes: global, pixel"
            )))
        }
    };

    let input = read_ppm(&args.input)?;
    let output = match args.method.as_str() {
        "colornormnet" => {
            let weights = args.weights.as_ref().ok_or_else(|| {
                CliError::Usage("method colornormnet requires --weights".into())
            })?;
            let model = load_weights(weights)?;
            let (pool, _) = thread_pool(args.threads)?;
            pool.install(|| {
                normalize_colornormnet(&model, &input, mode, &NormalizeOptions::default())
            })?
        }
        "reinhard" => {
            let stats = match (&args.target_stats, &args.target_image) {
                (Some(path), _) => match load_target_spec(path)? {
                    TargetSpec::Reinhard { stats } => stats,
                    TargetSpec::Macenko { .. } => {
                        return Err(CliError::Usage(
                            "target stats file holds a macenko target, not reinhard".into(),
                        ))
                    }
                },
                (None, Some(image)) => fit_lab_stats(&read_ppm(image)?),
                (None, None) => {
                    return Err(CliError::Usage(
                        "method reinhard requires --target-stats or --target-image".into(),
                    ))
                }
            };
            if let Some(path) = &args.save_target {
                save_target_spec(path, &TargetSpec::Reinhard { stats: stats.clone() })?;
            }
            normalize_reinhard(&input, &stats)
        }
        "macenko" => {
            let stain = match (&args.target_stats, &args.target_image) {
                (Some(path), _) => match load_target_spec(path)? {
                    TargetSpec::Macenko { stain } => stain,
                    TargetSpec::Reinhard { .. } => {
                        return Err(CliError::Usage(
                            "target stats file holds a reinhard target, not macenko".into(),
                        ))
                    }
                },
                (None, Some(image)) => estimate_stain_macenko(&read_ppm(image)?)?,
                (None, None) => {
                    return Err(CliError::Usage(
                        "method macenko requires --target-stats or --target-image".into(),
                    ))
                }
            };
            if let Some(path) = &args.save_target {
                save_target_spec(path, &TargetSpec::Macenko { stain: stain.clone() })?;
            }
            normalize_macenko(&input, &stain)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown method `{other}`; valid methods: colornormnet, reinhard, macenko"
            )))
        }
    };
    write_ppm(&output, &args.output)?;
    println!("normalized {} -> {}", args.input.display(), args.output.display());
    Ok(())
}

pub fn synthesize(args: SynthesizeArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if args.size < 4 {
        return Err(CliError::Usage("--size must be at least 4".into()));
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("output dir {}: {e}", args.out.display())))?;
    let mut root = Rng::new(args.seed);
    for i in 0..args.n {
        let slide_seed = root.next_u64();
        let slide = colornorm::synth::generate_slide(args.size, args.size, slide_seed);
        let path = args.out.join(format!("slide_{i:04}.ppm"));
        write_ppm(&slide, &path)?;
    }
    println!(
        "wrote {} slides of {}x{} to {}",
        args.n,
        args.size,
        args.size,
        args.out.display()
    );
    Ok(())
}

pub fn benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let methods: Vec<BenchMethod> = args
        .methods
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(BenchMethod::parse)
        .collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }

    let files = pipeline::corpus_files(&args.corpus)?;
    let pixels = pipeline::corpus_pixels(&files)?;
    if pixels < pipeline::MIN_CORPUS_PIXELS {
        return Err(CliError::Data(format!(
            "corpus holds {pixels} pixels; the benchmark needs at least {}",
            pipeline::MIN_CORPUS_PIXELS
        )));
    }

    let needs_model = methods
        .iter()
        .any(|m| matches!(m, BenchMethod::ColornormnetGlobal | BenchMethod::ColornormnetPixel));
    let model: Option<Model> = if needs_model {
        Some(match &args.weights {
            Some(path) => load_weights(path)?,
            None => {
                eprintln!("note: no --weights given; timing with fresh seeded weights");
                let mut m = build_model(&ArchSpec::reference(), &mut Rng::new(0))
                    .expect("reference arch is valid");
                m.set_mode(colornorm::model::Mode::Infer);
                m
            }
        })
    } else {
        None
    };

    let target_path: &PathBuf = args.target_image.as_ref().unwrap_or(&files[0]);
    let target_image: Option<ImageRgb> = if methods
        .iter()
        .any(|m| matches!(m, BenchMethod::Reinhard | BenchMethod::Macenko))
    {
        Some(read_ppm(target_path)?)
    } else {
        None
    };

    let targets = BenchTargets {
        model: model.as_ref(),
        reinhard: target_image.as_ref().map(fit_lab_stats),
        macenko: target_image
            .as_ref()
            .map(estimate_stain_macenko)
            .transpose()?,
    };

    let tmp;
    let out_dir = match &args.out_dir {
        Some(dir) => dir.clone(),
        None => {
            tmp = std::env::temp_dir().join(format!("colornorm-bench-{}", std::process::id()));
            tmp.clone()
        }
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("out dir {}: {e}", out_dir.display())))?;

    let (_, threads) = thread_pool(args.threads)?;
    let reports = pipeline::benchmark(&methods, &args.corpus, &targets, &out_dir, threads)?;

    print!("{}", pipeline::format_table(&reports));
    if let Some(json_path) = &args.json {
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        std::fs::write(json_path, json)
            .map_err(|e| CliError::Data(format!("json report {}: {e}", json_path.display())))?;
    }
    Ok(())
}

pub fn gradcheck() -> Result<(), CliError> {
    let reports = gradcheck::run_all();
    let mut failed = false;
    println!("{:<28} {:>14} {:>10} {:>7}", "Check", "Max rel err", "Tolerance", "Result");
    for r in &reports {
        let ok = r.passed();
        failed |= !ok;
        println!(
            "{:<28} {:>14.3e} {:>10.0e} {:>7}",
            r.name,
            r.max_rel_err,
            r.tolerance,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed {
        return Err(CliError::Numeric(
            "gradient check failed; see table above".into(),
        ));
    }
    Ok(())
}
