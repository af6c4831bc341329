use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use itm_core::embedstore::{
    load_embedding_set, save_embedding_set, synth_generate, Manifest, ManifestEntry, SynthSpec,
};
use itm_core::metrics::{stability_subsample, RankResult, SubsetMode};
use itm_core::pipeline::{score_embedding_set, PipelineConfig};
use itm_core::trainer::EvalMode;
use itm_core::{ItmError, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::opts::{GlobalOpts, MetricsArgs, RankArgs, ScoreArgs, StabilityArgs, SynthArgs};
use crate::scores::{load_scores, lookup, RankReport, RankedModel, Role};
use crate::table;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ItmError + '_ {
    move |source| ItmError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(io_error(path)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(io_error(Path::new("<stdout>"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// The evolved mode reads evaluation labels, so it is announced on every run.
fn announce_eval_mode(mode: EvalMode) {
    match mode {
        EvalMode::EvolvedWithLabels => eprintln!(
            "itm: eval mode `evolved`: each evaluation batch is evolved toward the centers of its own labels"
        ),
        EvalMode::StaticLogits => eprintln!("itm: eval mode `static`: evaluation classifies h(f(E)) without evolution"),
    }
}

fn score_entries(manifest: &Manifest, entries: &[&ManifestEntry], cfg: &PipelineConfig) -> Result<Vec<RankedModel>> {
    entries
        .par_iter()
        .map(|entry| {
            let mut set = load_embedding_set(manifest.resolve(entry))?;
            set.set_name(entry.name.clone());
            let (report, _) = score_embedding_set(&set, cfg)?;
            log::info!("{}: score {:.4} (n = {})", entry.name, report.best_score, report.n_used);
            Ok(RankedModel {
                name: entry.name.clone(),
                ground_truth: entry.ground_truth,
                score: report.best_score,
                n_used: report.n_used,
            })
        })
        .collect()
}

pub fn score(g: &GlobalOpts, args: &ScoreArgs) -> Result<()> {
    let cfg = g.pipeline();
    cfg.train.validate()?;
    let set = load_embedding_set(&args.features)?;
    announce_eval_mode(cfg.train.eval_mode);
    let (report, _) = score_embedding_set(&set, &cfg)?;
    emit(g.out.as_deref(), &to_json(&report)?)
}

pub fn rank(g: &GlobalOpts, args: &RankArgs) -> Result<()> {
    let cfg = g.pipeline();
    cfg.train.validate()?;
    let manifest = Manifest::load(&args.manifest)?;
    announce_eval_mode(cfg.train.eval_mode);
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    let models = score_entries(&manifest, &entries, &cfg)?;

    let (with_truth, excluded): (Vec<&RankedModel>, Vec<&RankedModel>) =
        models.iter().partition(|m| m.ground_truth.is_some());
    let correlation = if with_truth.len() < 2 {
        log::warn!("{} model(s) with ground truth; correlation skipped", with_truth.len());
        None
    } else {
        Some(RankResult::compute(
            with_truth.iter().map(|m| m.name.clone()).collect(),
            with_truth.iter().filter_map(|m| m.ground_truth).collect(),
            with_truth.iter().map(|m| m.score).collect(),
        )?)
    };
    let report = RankReport {
        excluded: excluded.iter().map(|m| m.name.clone()).collect(),
        models,
        correlation,
        config: serde_json::to_value(&cfg)?,
    };
    if let Some(out) = &g.out {
        emit(Some(out), &to_json(&report)?)?;
    }
    emit(None, &table::render(&report))
}

pub fn synth(g: &GlobalOpts, args: &SynthArgs) -> Result<()> {
    let dir: PathBuf = args
        .out_dir
        .clone()
        .or_else(|| g.out.clone())
        .ok_or_else(|| ItmError::Argument("synth needs --out-dir".into()))?;
    let spec = SynthSpec {
        num_models: args.models,
        num_classes: args.classes,
        dim: args.dim,
        samples_per_class: args.samples_per_class,
        separability_range: (args.sep_low, args.sep_high),
        noise_sigma: args.noise,
    };
    spec.validate()?;
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let models = synth_generate(&spec, g.seed)?;
    let mut entries = Vec::with_capacity(models.len());
    let mut summary = String::from("model  separability  truth\n");
    for m in &models {
        let file = PathBuf::from(format!("{}.itmf", m.set.name()));
        save_embedding_set(&m.set, dir.join(&file))?;
        writeln!(summary, "{}  {:12.4}  {:.4}", m.set.name(), m.separability, m.oracle_accuracy).ok();
        entries.push(ManifestEntry {
            name: m.set.name().to_string(),
            features: file,
            ground_truth: Some(m.oracle_accuracy),
        });
    }
    Manifest::new(entries)?.save(dir.join("manifest.json"))?;
    emit(None, &summary)
}

fn parse_compare(spec: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(ItmError::Argument(format!("--compare expects NAME=PATH, got {spec:?}"))),
    }
}

fn require_all(values: Vec<Option<f64>>, names: &[String], source: &str) -> Result<Vec<f64>> {
    values
        .into_iter()
        .zip(names)
        .map(|(v, n)| v.ok_or_else(|| ItmError::Validation(format!("{source} has no score for {n:?}"))))
        .collect()
}

pub fn stability(g: &GlobalOpts, args: &StabilityArgs) -> Result<()> {
    let compares = args.compare.iter().map(|s| parse_compare(s)).collect::<Result<Vec<_>>>()?;
    if args.plot_data.is_some() && compares.is_empty() {
        return Err(ItmError::Argument("--plot-data needs at least one --compare method".into()));
    }
    let manifest = Manifest::load(&args.manifest)?;
    let pool: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.ground_truth.is_some()).collect();
    let names: Vec<String> = pool.iter().map(|e| e.name.clone()).collect();
    let truth: Vec<f64> = pool.iter().filter_map(|e| e.ground_truth).collect();

    let itm = match &args.scores {
        Some(path) => {
            let scores = load_scores(path, Role::Predicted)?;
            require_all(lookup(&scores, &names), &names, &path.display().to_string())?
        }
        None => {
            let cfg = g.pipeline();
            cfg.train.validate()?;
            announce_eval_mode(cfg.train.eval_mode);
            score_entries(&manifest, &pool, &cfg)?.into_iter().map(|m| m.score).collect()
        }
    };
    let mut methods = vec![("itm".to_string(), itm)];
    for (name, path) in &compares {
        let scores = load_scores(path, Role::Predicted)?;
        methods.push((name.clone(), require_all(lookup(&scores, &names), &names, &path.display().to_string())?));
    }

    let mode = match args.samples {
        Some(count) => SubsetMode::Sampled { count, seed: g.seed },
        None => SubsetMode::Exhaustive,
    };
    let result = stability_subsample(&truth, &methods, args.k, mode)?;

    let mut csv = String::from("method,subset_id,tau_w\n");
    for (name, values) in &result.methods {
        for (id, tau_w) in values.iter().enumerate() {
            writeln!(csv, "{name},{id},{tau_w}").ok();
        }
    }
    if let Some(path) = &args.plot_data {
        let itm = &result.methods[0].1;
        let mut plot = String::from("subset_id,counterpart,x,y\n");
        for (name, values) in &result.methods[1..] {
            for (id, (x, y)) in values.iter().zip(itm).enumerate() {
                writeln!(plot, "{id},{name},{x},{y}").ok();
            }
        }
        emit(Some(path), &plot)?;
    }
    emit(g.out.as_deref(), &csv)
}

pub fn metrics(g: &GlobalOpts, args: &MetricsArgs) -> Result<()> {
    let truth = load_scores(&args.truth, Role::Truth)?;
    let predicted = load_scores(&args.predicted, Role::Predicted)?;
    let names: Vec<String> = truth.iter().map(|(n, _)| n.clone()).collect();
    let mut kept = (Vec::new(), Vec::new(), Vec::new());
    for ((name, t), p) in truth.iter().zip(lookup(&predicted, &names)) {
        match p {
            Some(p) => {
                kept.0.push(name.clone());
                kept.1.push(*t);
                kept.2.push(p);
            }
            None => log::warn!("{name:?} has no prediction; left out"),
        }
    }
    if kept.0.len() < 2 {
        return Err(ItmError::Validation(format!(
            "{} model(s) common to both files; need at least 2",
            kept.0.len()
        )));
    }
    let result = RankResult::compute(kept.0, kept.1, kept.2)?;
    emit(g.out.as_deref(), &to_json(&result)?)
}
