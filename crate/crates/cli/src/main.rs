//! `c2c` command line: segment, featurize, synth, train, eval, ablate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod config;

use std::path::{Path, PathBuf};

use c2c_core::audio_io::{load_manifest, load_wav, resample_linear, split_dataset, PIPELINE_RATE};
use c2c_core::features::{log_mel_features, raw_frame_features, write_features};
use c2c_core::model::{infer_configs, ParamSet};
use c2c_core::preprocess::preprocess_pipeline;
use c2c_core::synth::{generate_corpus, SynthSpec};
use c2c_core::train_eval::{
    evaluate, render_ablation_csv, render_ablation_table, run_ablation_suite, train, Scenario,
    TrainError,
};

use config::{CliConfig, ConfigError};

enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Numerical { .. } => CliError::Numeric(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::UnknownProfile(_) => CliError::Usage(e.to_string()),
            ConfigError::File { .. } => CliError::Data(e.to_string()),
        }
    }
}

struct Flag {
    name: &'static str,
    takes_value: bool,
    help: &'static str,
}

const fn flag(name: &'static str, help: &'static str) -> Flag {
    Flag {
        name,
        takes_value: true,
        help,
    }
}

const fn switch(name: &'static str, help: &'static str) -> Flag {
    Flag {
        name,
        takes_value: false,
        help,
    }
}

const COMMON_FLAGS: &[Flag] = &[
    flag("--config", "layered key = value config file"),
    flag("--profile", "configuration profile: desk or paper_scale"),
    flag(
        "--seed",
        "seed for every random draw (default: $C2C_SEED or 42)",
    ),
];

struct Subcommand {
    name: &'static str,
    summary: &'static str,
    flags: &'static [Flag],
}

const SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "segment",
        summary: "detect cough bursts in a WAV file and write the segmented audio",
        flags: &[
            flag("--in", "input WAV path (required)"),
            flag(
                "--out",
                "output WAV path for the segmented audio (required)",
            ),
            flag(
                "--regions",
                "output JSON path for the detected regions (required)",
            ),
            flag("--window-ms", "analysis window length in ms"),
            flag("--hop-ms", "analysis hop length in ms"),
            flag("--onset", "onset threshold on short-time energy"),
            flag("--offset", "offset threshold on short-time energy"),
        ],
    },
    Subcommand {
        name: "featurize",
        summary: "compute frontend features for a WAV file",
        flags: &[
            flag("--in", "input WAV path (required)"),
            flag("--out", "output feature file path (required)"),
            flag(
                "--frontend",
                "frontend kind: log_mel (default) or raw_frame",
            ),
        ],
    },
    Subcommand {
        name: "synth",
        summary: "generate a labeled synthetic corpus with burst ground truth",
        flags: &[
            flag("--out-dir", "output directory (required)"),
            flag("--clips", "number of clips (default 20)"),
            flag("--clip-sec", "clip duration in seconds (default 6)"),
            flag("--snr-db", "burst-to-background ratio in dB (default 30)"),
            flag("--bursts-min", "minimum bursts per clip (default 2)"),
            flag("--bursts-max", "maximum bursts per clip (default 3)"),
            switch(
                "--with-breath",
                "also emit a noise-only breath clip per subject",
            ),
        ],
    },
    Subcommand {
        name: "train",
        summary: "train one scenario from a manifest and save checkpoint + report",
        flags: &[
            flag("--manifest", "dataset manifest CSV (required)"),
            flag("--out-dir", "output directory (required)"),
            flag("--scenario", "pipeline arm (default C2C)"),
            flag("--epochs", "override epoch count"),
            flag("--batch-size", "override batch size"),
            flag("--lr-max", "override peak learning rate"),
            flag("--val-fraction", "validation fraction (default 0.08)"),
        ],
    },
    Subcommand {
        name: "eval",
        summary: "score a manifest with a saved checkpoint",
        flags: &[
            flag("--manifest", "dataset manifest CSV (required)"),
            flag("--checkpoint", "checkpoint path (required)"),
            flag("--report", "output report JSON path (required)"),
            flag(
                "--scenario",
                "pipeline arm the checkpoint was trained for (default C2C)",
            ),
        ],
    },
    Subcommand {
        name: "ablate",
        summary: "train every scenario with a shared seed and tabulate the comparison",
        flags: &[
            flag("--manifest", "dataset manifest CSV (required)"),
            flag("--out-dir", "output directory (required)"),
            flag("--epochs", "override epoch count"),
            flag("--batch-size", "override batch size"),
            flag("--lr-max", "override peak learning rate"),
            flag("--val-fraction", "validation fraction (default 0.08)"),
        ],
    },
];

fn usage() -> String {
    let mut out = String::from("usage: c2c <subcommand> [flags]\n\nsubcommands:\n");
    for sub in SUBCOMMANDS {
        out.push_str(&format!("  {:<10} {}\n", sub.name, sub.summary));
    }
    out.push_str("\nrun `c2c <subcommand> --help` for per-subcommand flags\n");
    out
}

fn sub_usage(sub: &Subcommand) -> String {
    let mut out = format!(
        "usage: c2c {} [flags]\n\n{}\n\nflags:\n",
        sub.name, sub.summary
    );
    for f in sub.flags.iter().chain(COMMON_FLAGS.iter()) {
        let arg = if f.takes_value {
            format!("{} <value>", f.name)
        } else {
            f.name.to_string()
        };
        out.push_str(&format!("  {arg:<22} {}\n", f.help));
    }
    out.push_str("  --help                 print this help\n");
    out
}

/// Parsed `--name value` pairs (switches store "true").
struct Parsed {
    values: Vec<(String, String)>,
}

impl Parsed {
    fn get(&self, name: &str) -> Option<&str> {
        self.values
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> Result<&str, CliError> {
        self.get(name)
            .ok_or_else(|| CliError::Usage(format!("missing required flag {name}")))
    }

    fn parse_num<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, CliError> {
        match self.get(name) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("cannot parse `{v}` for {name}"))),
        }
    }
}

fn parse_flags(sub: &Subcommand, argv: &[String]) -> Result<Parsed, CliError> {
    let mut values = Vec::new();
    let mut i = 0;
    while i < argv.len() {
        let arg = &argv[i];
        if arg == "--help" {
            return Err(CliError::Usage(String::new())); // handled by caller
        }
        let spec = sub
            .flags
            .iter()
            .chain(COMMON_FLAGS.iter())
            .find(|f| f.name == arg)
            .ok_or_else(|| {
                CliError::Usage(format!("unknown flag `{arg}` for `c2c {}`", sub.name))
            })?;
        if spec.takes_value {
            i += 1;
            let value = argv
                .get(i)
                .ok_or_else(|| CliError::Usage(format!("flag {} expects a value", spec.name)))?;
            values.push((arg.clone(), value.clone()));
        } else {
            values.push((arg.clone(), "true".to_string()));
        }
        i += 1;
    }
    Ok(Parsed { values })
}

/// Builds the layered config: defaults, $C2C_SEED, profile, file, flags.
fn build_config(parsed: &Parsed) -> Result<CliConfig, CliError> {
    let mut cfg = CliConfig::default();
    if let Ok(env_seed) = std::env::var("C2C_SEED") {
        cfg.train.seed = env_seed
            .parse()
            .map_err(|_| CliError::Usage(format!("cannot parse C2C_SEED=`{env_seed}`")))?;
    }
    if let Some(profile) = parsed.get("--profile") {
        cfg.apply_profile(profile)?;
    }
    if let Some(path) = parsed.get("--config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config `{path}`: {e}")))?;
        cfg.apply_file(&text)?;
    }
    if let Some(seed) = parsed.parse_num::<u64>("--seed")? {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = parsed.parse_num::<usize>("--epochs")? {
        cfg.train.epochs = epochs;
    }
    if let Some(batch) = parsed.parse_num::<usize>("--batch-size")? {
        cfg.train.batch_size = batch;
    }
    if let Some(lr) = parsed.parse_num::<f64>("--lr-max")? {
        cfg.train.lr_max = lr;
    }
    if let Some(fraction) = parsed.parse_num::<f64>("--val-fraction")? {
        cfg.val_fraction = fraction;
    }
    Ok(cfg)
}

fn load_input_clip(parsed: &Parsed) -> Result<c2c_core::audio_io::AudioClip, CliError> {
    let input = parsed.require("--in")?;
    let clip = load_wav(Path::new(input)).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(resample_linear(&clip, PIPELINE_RATE))
}

fn run_segment(parsed: &Parsed) -> Result<(), CliError> {
    let mut cfg = build_config(parsed)?;
    if let Some(v) = parsed.parse_num::<f64>("--window-ms")? {
        cfg.pipe.preprocess.window_ms = v;
    }
    if let Some(v) = parsed.parse_num::<f64>("--hop-ms")? {
        cfg.pipe.preprocess.hop_ms = v;
    }
    if let Some(v) = parsed.parse_num::<f64>("--onset")? {
        cfg.pipe.preprocess.onset_threshold = v;
    }
    if let Some(v) = parsed.parse_num::<f64>("--offset")? {
        cfg.pipe.preprocess.offset_threshold = v;
    }
    let out = parsed.require("--out")?.to_string();
    let regions_path = parsed.require("--regions")?.to_string();
    let clip = load_input_clip(parsed)?;
    let result = preprocess_pipeline(&clip, &cfg.pipe.preprocess)
        .map_err(|e| CliError::Data(e.to_string()))?;
    c2c_core::audio_io::write_wav(&result.clip, Path::new(&out))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let rate = clip.sample_rate as f64;
    let regions: Vec<serde_json::Value> = result
        .regions
        .iter()
        .map(|r| {
            serde_json::json!({
                "start_sample": r.start_sample,
                "end_sample": r.end_sample,
                "start_sec": r.start_sample as f64 / rate,
                "end_sec": r.end_sample as f64 / rate,
            })
        })
        .collect();
    std::fs::write(
        &regions_path,
        serde_json::to_string_pretty(&regions).expect("regions serialize"),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    if result.no_cough_detected {
        eprintln!("warning: no cough detected; passing the normalized clip through");
    }
    if result.silent {
        eprintln!("warning: input is all zeros");
    }
    println!(
        "segment: {} region(s), kept {} of {} samples",
        result.regions.len(),
        result.clip.len(),
        clip.len()
    );
    Ok(())
}

fn run_featurize(parsed: &Parsed) -> Result<(), CliError> {
    let cfg = build_config(parsed)?;
    let out = parsed.require("--out")?.to_string();
    let clip = load_input_clip(parsed)?;
    let kind = parsed.get("--frontend").unwrap_or("log_mel");
    let feats = match kind {
        "log_mel" => log_mel_features(&clip, &cfg.pipe.frontend),
        "raw_frame" => raw_frame_features(&clip, &cfg.pipe.frontend),
        other => {
            return Err(CliError::Usage(format!(
                "unknown frontend `{other}` (expected log_mel or raw_frame)"
            )))
        }
    }
    .map_err(|e| CliError::Data(e.to_string()))?;
    write_features(&feats, Path::new(&out)).map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "featurize: {} frames x {} bins -> {out}",
        feats.frames, feats.bins
    );
    Ok(())
}

fn parse_band(parsed: &Parsed, name: &str, default: (f64, f64)) -> Result<(f64, f64), CliError> {
    match parsed.get(name) {
        None => Ok(default),
        Some(v) => {
            let (lo, hi) = v
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("{name} expects LO:HI, found `{v}`")))?;
            let lo = lo
                .parse()
                .map_err(|_| CliError::Usage(format!("cannot parse `{lo}` in {name}")))?;
            let hi = hi
                .parse()
                .map_err(|_| CliError::Usage(format!("cannot parse `{hi}` in {name}")))?;
            Ok((lo, hi))
        }
    }
}

fn run_synth(parsed: &Parsed) -> Result<(), CliError> {
    let cfg = build_config(parsed)?;
    let out_dir = parsed.require("--out-dir")?.to_string();
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        n_clips: parsed.parse_num("--clips")?.unwrap_or(defaults.n_clips),
        clip_sec: parsed.parse_num("--clip-sec")?.unwrap_or(defaults.clip_sec),
        snr_db: parsed.parse_num("--snr-db")?.unwrap_or(defaults.snr_db),
        bursts_per_clip: (
            parsed
                .parse_num("--bursts-min")?
                .unwrap_or(defaults.bursts_per_clip.0),
            parsed
                .parse_num("--bursts-max")?
                .unwrap_or(defaults.bursts_per_clip.1),
        ),
        class0_band: parse_band(parsed, "--class0-band", defaults.class0_band)?,
        class1_band: parse_band(parsed, "--class1-band", defaults.class1_band)?,
        seed: cfg.train.seed,
        with_breath: parsed.get("--with-breath").is_some(),
        ..defaults
    };
    let (manifest, truths) =
        generate_corpus(&spec, Path::new(&out_dir)).map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "synth: {} clip(s) with truth -> {}",
        truths.len(),
        manifest.display()
    );
    Ok(())
}

fn parse_scenario(parsed: &Parsed) -> Result<Scenario, CliError> {
    match parsed.get("--scenario") {
        None => Ok(Scenario::C2c),
        Some(v) => Scenario::parse(v).ok_or_else(|| {
            let names: Vec<&str> = Scenario::all().iter().map(|s| s.name()).collect();
            CliError::Usage(format!(
                "unknown scenario `{v}` (expected one of {})",
                names.join(", ")
            ))
        }),
    }
}

fn run_train(parsed: &Parsed) -> Result<(), CliError> {
    let cfg = build_config(parsed)?;
    let manifest_path = PathBuf::from(parsed.require("--manifest")?);
    let out_dir = PathBuf::from(parsed.require("--out-dir")?);
    let scenario = parse_scenario(parsed)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Data(e.to_string()))?;

    let entries = load_manifest(&manifest_path).map_err(|e| CliError::Data(e.to_string()))?;
    let split = split_dataset(&entries, cfg.val_fraction, cfg.train.seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let outcome = train(&split, scenario, &cfg.train, &cfg.pipe, base_dir)?;

    let checkpoint = out_dir.join("model.c2cm");
    outcome
        .params
        .save(&checkpoint)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let report_path = out_dir.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&outcome.report).expect("report serializes"),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "train: scenario {} roc_auc {:.4} ({} pos / {} neg) -> {}",
        outcome.report.scenario,
        outcome.report.roc_auc,
        outcome.report.n_pos,
        outcome.report.n_neg,
        report_path.display()
    );
    Ok(())
}

fn run_eval(parsed: &Parsed) -> Result<(), CliError> {
    let mut cfg = build_config(parsed)?;
    let manifest_path = PathBuf::from(parsed.require("--manifest")?);
    let checkpoint = PathBuf::from(parsed.require("--checkpoint")?);
    let report_path = PathBuf::from(parsed.require("--report")?);
    let scenario = parse_scenario(parsed)?;

    let params = ParamSet::load(&checkpoint).map_err(|e| CliError::Data(e.to_string()))?;
    let (mut enc, cls) = infer_configs(&params).map_err(|e| CliError::Data(e.to_string()))?;
    // dilations are not stored in the checkpoint; honor the config file when
    // it supplies a matching list
    if cfg.pipe.encoder.dilations.len() == enc.blocks {
        enc.dilations = cfg.pipe.encoder.dilations.clone();
    }
    cfg.pipe.encoder = enc;
    cfg.pipe.classifier = cls;

    let entries = load_manifest(&manifest_path).map_err(|e| CliError::Data(e.to_string()))?;
    let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let report = evaluate(&params, &entries, scenario, &cfg.train, &cfg.pipe, base_dir)?;
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "eval: scenario {} roc_auc {:.4} over {} clip(s) -> {}",
        report.scenario,
        report.roc_auc,
        report.scores.len(),
        report_path.display()
    );
    Ok(())
}

fn run_ablate(parsed: &Parsed) -> Result<(), CliError> {
    let cfg = build_config(parsed)?;
    let manifest_path = PathBuf::from(parsed.require("--manifest")?);
    let out_dir = PathBuf::from(parsed.require("--out-dir")?);
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Data(e.to_string()))?;

    let outcome = run_ablation_suite(&manifest_path, &cfg.train, &cfg.pipe, cfg.val_fraction)?;
    for (scenario, why) in &outcome.skipped {
        eprintln!("warning: {scenario}: {why}");
    }
    let table = render_ablation_table(&outcome.reports);
    std::fs::write(out_dir.join("ablation.txt"), &table)
        .map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(
        out_dir.join("ablation.csv"),
        render_ablation_csv(&outcome.reports),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    for report in &outcome.reports {
        std::fs::write(
            out_dir.join(format!("report_{}.json", report.scenario.name())),
            serde_json::to_string_pretty(report).expect("report serializes"),
        )
        .map_err(|e| CliError::Data(e.to_string()))?;
    }
    print!("{table}");
    Ok(())
}

pub fn dispatch(argv: &[String]) -> i32 {
    if argv.is_empty() {
        eprint!("{}", usage());
        return 1;
    }
    if argv[0] == "--help" || argv[0] == "help" {
        print!("{}", usage());
        return 0;
    }
    let Some(sub) = SUBCOMMANDS.iter().find(|s| s.name == argv[0]) else {
        eprintln!("error: unknown subcommand `{}`", argv[0]);
        eprint!("{}", usage());
        return 1;
    };
    if argv[1..].iter().any(|a| a == "--help") {
        print!("{}", sub_usage(sub));
        return 0;
    }
    let parsed = match parse_flags(sub, &argv[1..]) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}", e.message());
            eprint!("{}", sub_usage(sub));
            return 1;
        }
    };
    let result = match sub.name {
        "segment" => run_segment(&parsed),
        "featurize" => run_featurize(&parsed),
        "synth" => run_synth(&parsed),
        "train" => run_train(&parsed),
        "eval" => run_eval(&parsed),
        "ablate" => run_ablate(&parsed),
        _ => unreachable!(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            if matches!(e, CliError::Usage(_)) {
                eprint!("{}", sub_usage(sub));
            }
            e.code()
        }
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(dispatch(&argv));
}
