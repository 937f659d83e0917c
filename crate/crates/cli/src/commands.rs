use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use signpipe_core::dialogue::{self, HttpBackend, LlmBackend, MockBackend, RecognitionEvent, DEFAULT_MAX_RETRIES};
use signpipe_core::gesture::{playtime_stats, schedule, PlaytimeStats, TimelineEvent};
use signpipe_core::landmark::{read_corpus, write_corpus, LabelMap, SignSample};
use signpipe_core::netpipe::{self, BackendFactory, Pipeline, ServerConfig, SimOptions};
use signpipe_core::nn::{
    benchmark_inference, evaluate, fit, init_weights, save_weights, Classifier, ModelConfig, Tensor,
    TrainConfig, WeightStore,
};
use signpipe_core::preprocess::{preprocess_pipeline, AugmentConfig, FeatureTensor, SelectionSpec, DEFAULT_TARGET_LEN};
use signpipe_core::synth::{self, SynthConfig};

use crate::settings::{require_file, sidecar_path, BackendKind, Settings};
use crate::CliError;

type CmdResult = Result<(), CliError>;

fn load_corpus(path: &Path) -> Result<Vec<SignSample>, CliError> {
    require_file(path, "corpus")?;
    Ok(read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))?)
}

fn features(samples: &[SignSample], spec: &SelectionSpec, target_len: usize) -> anyhow::Result<Vec<FeatureTensor>> {
    samples
        .iter()
        .map(|s| preprocess_pipeline(s, spec, target_len, None).with_context(|| format!("sample {}", s.sample_id)))
        .collect()
}

fn labeled(samples: &[SignSample], feats: Vec<FeatureTensor>) -> anyhow::Result<Vec<(FeatureTensor, u32)>> {
    samples
        .iter()
        .zip(feats)
        .map(|(s, x)| {
            let y = s.label.ok_or_else(|| anyhow!("sample {} has no label", s.sample_id))?;
            Ok((x, y))
        })
        .collect()
}

fn stdout_line(line: &str) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{line}")?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Landmark corpus CSV
    #[arg(long)]
    corpus: PathBuf,
    /// Output tensor file, one [frames, features] tensor per sample
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TARGET_LEN)]
    target_len: usize,
    /// Apply seeded random augmentation
    #[arg(long)]
    augment: bool,
    /// JSON augmentation settings (implies --augment)
    #[arg(long)]
    augment_config: Option<PathBuf>,
    #[arg(long)]
    flip_prob: Option<f32>,
    #[arg(long)]
    mask_prob: Option<f32>,
}

pub fn preprocess(settings: &Settings, args: PreprocessArgs) -> CmdResult {
    let spec = settings.selection_spec()?;
    let mut augment = match &args.augment_config {
        Some(p) => {
            require_file(p, "augmentation config")?;
            let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(e.to_string()))?;
            let cfg: AugmentConfig =
                serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            Some(cfg)
        }
        None if args.augment || args.flip_prob.is_some() || args.mask_prob.is_some() => Some(AugmentConfig::default()),
        None => None,
    };
    if let Some(cfg) = augment.as_mut() {
        if let Some(p) = args.flip_prob {
            cfg.flip_prob = p;
        }
        if let Some(p) = args.mask_prob {
            cfg.mask_prob = p;
        }
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    }
    if args.target_len == 0 {
        return Err(CliError::usage("--target-len must be positive"));
    }
    let samples = load_corpus(&args.corpus)?;

    let mut store = WeightStore::new();
    for (i, s) in samples.iter().enumerate() {
        let cfg = augment.clone().map(|mut c| {
            c.rng_seed = settings.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            c
        });
        let x = preprocess_pipeline(s, &spec, args.target_len, cfg.as_ref())
            .with_context(|| format!("sample {}", s.sample_id))?;
        store
            .insert(s.sample_id.clone(), Tensor::new(vec![x.frames, x.dim], x.data))
            .map_err(|e| anyhow!(e))?;
    }
    save_weights(&store, &args.out).map_err(|e| anyhow!(e))?;
    stdout_line("samples\tframes\tfeatures")?;
    stdout_line(&format!("{}\t{}\t{}", samples.len(), args.target_len, spec.feature_dim()))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus CSV
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    min_frames: usize,
    #[arg(long, default_value_t = 48)]
    max_frames: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0.05)]
    dropout: f64,
    /// Also write a label map with one gloss per class
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

const SYNTH_GLOSSES: [&str; 10] = [
    "cloud", "yes", "happy", "sky", "rain", "hello", "thankyou", "book", "water", "friend",
];

pub fn synth_label_map(classes: usize) -> LabelMap {
    if classes <= SYNTH_GLOSSES.len() {
        LabelMap::new(SYNTH_GLOSSES[..classes].iter().map(|s| s.to_string()).collect()).expect("distinct glosses")
    } else {
        LabelMap::placeholder(classes)
    }
}

pub fn synth(settings: &Settings, args: SynthArgs) -> CmdResult {
    if args.classes == 0 || args.min_frames == 0 || args.min_frames > args.max_frames {
        return Err(CliError::usage("need --classes > 0 and 0 < --min-frames <= --max-frames"));
    }
    if !(args.noise >= 0.0 && (0.0..=1.0).contains(&args.dropout)) {
        return Err(CliError::usage("--noise must be >= 0 and --dropout within [0, 1]"));
    }
    let spec = settings.selection_spec()?;
    let cfg = SynthConfig {
        num_classes: args.classes,
        min_frames: args.min_frames,
        max_frames: args.max_frames,
        noise: args.noise,
        dropout: args.dropout,
    };
    let samples = synth::generate(args.n, &cfg, &spec, settings.seed);
    write_corpus(&samples, &args.out).map_err(|e| anyhow!(e))?;
    if let Some(path) = &args.labels_out {
        synth_label_map(args.classes).save(path).map_err(|e| anyhow!(e))?;
    }
    let rows: usize = samples.iter().map(|s| s.frames.len()).sum();
    stdout_line("samples\tclasses\trows")?;
    stdout_line(&format!("{}\t{}\t{rows}", samples.len(), args.classes))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// 176-feature, 4-layer, d=256 reference architecture
    Default,
    /// d=32, 2-layer model for quick experiments
    Tiny,
}

impl Preset {
    fn config(self, input_dim: usize, num_classes: usize) -> ModelConfig {
        match self {
            Preset::Default => ModelConfig {
                input_dim,
                num_classes,
                ..ModelConfig::default()
            },
            Preset::Tiny => ModelConfig::tiny(input_dim, num_classes),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training corpus CSV
    #[arg(long)]
    corpus: PathBuf,
    /// Labeled validation corpus CSV
    #[arg(long)]
    val: Option<PathBuf>,
    /// Where to write the trained weights (architecture goes to `<out>.json`)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// JSON model config; overrides --preset
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Number of classes; defaults to the label map size or the largest label + 1
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f32,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Stop once validation top-1 reaches this fraction
    #[arg(long)]
    stop_at_val_acc: Option<f64>,
}

pub fn train(settings: &Settings, args: TrainArgs) -> CmdResult {
    let spec = settings.selection_spec()?;
    if let Some(p) = &args.val {
        require_file(p, "validation corpus")?;
    }
    if !(args.lr >= 0.0 && args.lr.is_finite()) || args.batch_size == 0 {
        return Err(CliError::usage("--lr must be >= 0 and --batch-size positive"));
    }
    let train_samples = load_corpus(&args.corpus)?;
    let val_samples = match &args.val {
        Some(p) => load_corpus(p)?,
        None => Vec::new(),
    };

    let cfg = match &args.model_config {
        Some(p) => {
            require_file(p, "model config")?;
            ModelConfig::load(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => {
            let max_label = train_samples.iter().chain(&val_samples).filter_map(|s| s.label).max();
            let classes = match (args.num_classes, &settings.labels) {
                (Some(n), _) => n,
                (None, Some(p)) => LabelMap::load(p).map_err(|e| CliError::usage(e.to_string()))?.len(),
                (None, None) => max_label.map_or(0, |m| m as usize + 1),
            };
            args.preset.config(spec.feature_dim(), classes)
        }
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if cfg.input_dim != spec.feature_dim() {
        return Err(CliError::usage(format!(
            "model input_dim {} does not match the selection's {} features",
            cfg.input_dim,
            spec.feature_dim()
        )));
    }
    settings.label_map(cfg.num_classes)?;

    let train_set = labeled(&train_samples, features(&train_samples, &spec, cfg.max_seq_len)?)?;
    let val_set = labeled(&val_samples, features(&val_samples, &spec, cfg.max_seq_len)?)?;
    let mut net = Classifier::from_store(&init_weights(&cfg, settings.seed).map_err(|e| anyhow!(e))?, &cfg)
        .map_err(|e| anyhow!(e))?;
    log::info!(
        "training {} parameters on {} samples ({} validation)",
        net.num_parameters(),
        train_set.len(),
        val_set.len()
    );

    let tc = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        batch_size: args.batch_size,
        seed: settings.seed,
        stop_at_val_acc: args.stop_at_val_acc,
    };
    stdout_line("epoch,train_loss,train_acc,val_loss,val_acc")?;
    let mut write_err = None;
    fit(&mut net, &train_set, &val_set, &tc, |r| {
        let line = format!(
            "{},{:.6},{:.4},{:.6},{:.4}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
        if let Err(e) = stdout_line(&line) {
            write_err.get_or_insert(e);
        }
    })
    .map_err(|e| anyhow!(e))?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    save_weights(&net.to_store(), &args.out).map_err(|e| anyhow!(e))?;
    cfg.save(&sidecar_path(&args.out)).map_err(|e| anyhow!(e))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Corpus CSV of samples to classify (labels ignored)
    #[arg(long)]
    input: PathBuf,
    /// JSON model config instead of the weights sidecar
    #[arg(long)]
    model_config: Option<PathBuf>,
}

pub fn infer(settings: &Settings, args: InferArgs) -> CmdResult {
    let net = settings.classifier(args.model_config.as_deref())?;
    let labels = settings.label_map(net.config().num_classes)?;
    let spec = settings.selection_spec()?;
    let samples = load_corpus(&args.input)?;
    for x in features(&samples, &spec, net.config().max_seq_len)? {
        let p = net.predict(&x, &labels).map_err(|e| anyhow!(e))?;
        stdout_line(&format!("{}\t{:.6}", p.gloss, p.confidence))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labeled corpus CSV
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model_config: Option<PathBuf>,
}

pub fn eval(settings: &Settings, args: EvalArgs) -> CmdResult {
    let net = settings.classifier(args.model_config.as_deref())?;
    let labels = settings.label_map(net.config().num_classes)?;
    let spec = settings.selection_spec()?;
    let samples = load_corpus(&args.corpus)?;
    if samples.is_empty() {
        return Err(anyhow!("corpus {} contains no samples", args.corpus.display()).into());
    }
    let data = labeled(&samples, features(&samples, &spec, net.config().max_seq_len)?)?;
    let ev = evaluate(&net, &data).map_err(|e| anyhow!(e))?;
    stdout_line("samples\ttop1\ttop5\tmean_loss")?;
    stdout_line(&format!("{}\t{:.6}\t{:.6}\t{:.6}", ev.samples, ev.top1, ev.top5, ev.mean_loss))?;
    stdout_line("")?;
    stdout_line("class\tgloss\tsupport\tcorrect")?;
    for (id, c) in ev.per_class.iter().enumerate().filter(|(_, c)| c.support > 0) {
        let gloss = labels.gloss(id as u32).unwrap_or("?");
        stdout_line(&format!("{id}\t{gloss}\t{}\t{}", c.support, c.correct))?;
    }
    Ok(())
}

fn backend_factory(settings: &Settings) -> BackendFactory {
    match settings.backend {
        BackendKind::Mock => {
            let seed = settings.seed;
            Arc::new(move || Box::new(MockBackend::new(seed)) as Box<dyn LlmBackend + Send>)
        }
        BackendKind::Http => {
            let (url, model) = (settings.llm_url.clone(), settings.llm_model.clone());
            Arc::new(move || Box::new(HttpBackend::from_env(url.clone(), model.clone())) as Box<dyn LlmBackend + Send>)
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Per-request processing deadline
    #[arg(long, default_value_t = 10.0)]
    deadline_secs: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: usize,
    #[arg(long)]
    model_config: Option<PathBuf>,
}

pub fn serve(settings: &Settings, args: ServeArgs) -> CmdResult {
    if !(args.deadline_secs > 0.0 && args.deadline_secs.is_finite()) {
        return Err(CliError::usage("--deadline-secs must be positive"));
    }
    let classifier = settings.classifier(args.model_config.as_deref())?;
    let pipeline = Pipeline {
        labels: settings.label_map(classifier.config().num_classes)?,
        classifier,
        spec: settings.selection_spec()?,
        db: settings.descriptor_db()?,
        template: settings.prompt_template()?,
        wpm: settings.wpm,
        max_retries: args.max_retries,
    };
    pipeline.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let mut config = ServerConfig::new(format!("{}:{}", args.host, settings.port), backend_factory(settings));
    config.deadline = Duration::from_secs_f64(args.deadline_secs);
    let handle = netpipe::serve(Arc::new(pipeline), config).map_err(|e| anyhow!(e))?;
    stdout_line(&format!("listening\t{}", handle.local_addr()))?;
    handle.wait();
    Ok(())
}

#[derive(Debug, Args)]
pub struct RobotSimArgs {
    /// Corpus CSV of samples to send
    #[arg(long)]
    input: PathBuf,
    /// Event log to write
    #[arg(long)]
    log: PathBuf,
    /// Server address; defaults to 127.0.0.1 and --port
    #[arg(long)]
    addr: Option<String>,
    #[arg(long, default_value_t = 60.0)]
    read_timeout_secs: f64,
}

pub fn robot_sim(settings: &Settings, args: RobotSimArgs) -> CmdResult {
    if !(args.read_timeout_secs > 0.0 && args.read_timeout_secs.is_finite()) {
        return Err(CliError::usage("--read-timeout-secs must be positive"));
    }
    let samples = load_corpus(&args.input)?;
    let addr = args.addr.unwrap_or_else(|| format!("127.0.0.1:{}", settings.port));
    let opts = SimOptions {
        realtime: settings.realtime,
        read_timeout: Some(Duration::from_secs_f64(args.read_timeout_secs)),
    };
    let report = netpipe::robot_sim(&addr, &samples, &args.log, &opts).map_err(|e| anyhow!(e))?;
    stdout_line("samples\tresults\tscripts\terrors")?;
    stdout_line(&format!(
        "{}\t{}\t{}\t{}",
        report.samples_sent, report.results, report.scripts, report.errors
    ))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    gloss: String,
    /// Recognition confidence in percent
    #[arg(long)]
    confidence: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: usize,
    /// Also print the scheduled timeline as TSV
    #[arg(long)]
    timeline: bool,
}

pub fn compose(settings: &Settings, args: ComposeArgs) -> CmdResult {
    let event = RecognitionEvent::new(args.gloss, args.confidence).map_err(|e| CliError::usage(e.to_string()))?;
    let db = settings.descriptor_db()?;
    let template = settings.prompt_template()?;
    let mut backend = backend_factory(settings)();
    let c = dialogue::compose(&event, &db, &mut backend, &template, args.max_retries).map_err(|e| anyhow!(e))?;
    for w in &c.warnings {
        log::warn!("{w}");
    }
    stdout_line(&c.tagged_text)?;
    if args.timeline {
        let t = schedule(&c.script, &db, settings.wpm).map_err(|e| anyhow!(e))?;
        stdout_line("start_s\tduration_s\tkind\tcontent")?;
        for e in &t.events {
            let (kind, content) = match e {
                TimelineEvent::Speech { text, .. } => ("speech", text.clone()),
                TimelineEvent::Gesture { tag, .. } => ("gesture", tag.clone()),
            };
            stdout_line(&format!("{:.3}\t{:.3}\t{kind}\t{content}", e.start_s(), e.duration_s()))?;
        }
        for w in &t.warnings {
            log::warn!("{w}");
        }
    }
    Ok(())
}

pub fn stats(settings: &Settings) -> CmdResult {
    let db = settings.descriptor_db()?;
    let s = playtime_stats(&db).map_err(|e| anyhow!(e))?;
    stdout_line("field\tvalue")?;
    for (name, v) in PlaytimeStats::FIELDS.iter().zip(s.values()) {
        stdout_line(&format!("{name}\t{v:.4}"))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Architecture to time when no --weights are given
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    #[arg(long)]
    model_config: Option<PathBuf>,
}

pub fn bench(settings: &Settings, args: BenchArgs) -> CmdResult {
    if args.runs == 0 {
        return Err(CliError::usage("--runs must be positive"));
    }
    let net = if settings.weights.is_some() {
        settings.classifier(args.model_config.as_deref())?
    } else {
        let cfg = match &args.model_config {
            Some(p) => {
                require_file(p, "model config")?;
                ModelConfig::load(p).map_err(|e| CliError::usage(e.to_string()))?
            }
            None => args.preset.config(settings.selection_spec()?.feature_dim(), ModelConfig::default().num_classes),
        };
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Classifier::from_store(&init_weights(&cfg, settings.seed).map_err(|e| anyhow!(e))?, &cfg)
            .map_err(|e| anyhow!(e))?
    };
    let s = benchmark_inference(&net, args.runs, settings.seed).map_err(|e| anyhow!(e))?;
    stdout_line("runs\tp50_ms\tp99_ms\tmean_ms\tmin_ms\tmax_ms")?;
    stdout_line(&format!(
        "{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
        s.runs, s.p50_ms, s.p99_ms, s.mean_ms, s.min_ms, s.max_ms
    ))?;
    Ok(())
}
