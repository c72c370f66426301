//! Command implementations behind the `mazelab` binary: train, synthesize,
//! extract, analyze, sweep, track, and verify, all writing reproducible
//! artifacts into a single run directory.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::eval::{self, SweepVector};
use crate::geometry;
use crate::maze::{Maze, TileType};
use crate::model::PolicyModel;
use crate::rng;
use crate::rollout::{self, SteerVector, Transcript};
use crate::store::{self, RunConfig, RunStore, StoreError};
use crate::synth::{self, SynthSpec};
use crate::train::{self, Algorithm, SgdMomentum};
use crate::vectors::{self, ConceptVector};

/// Exit-code taxonomy: 2 config, 3 runtime, 4 failed verification.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::VerifyFailed(_) => 4,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Config(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        })*
    };
}

runtime_from!(
    crate::maze::MazeError,
    crate::model::ModelError,
    crate::rollout::RolloutError,
    crate::train::TrainError,
    crate::synth::SynthError,
    crate::vectors::VectorError,
    crate::geometry::GeometryError,
    crate::eval::EvalError,
    std::io::Error
);

type Model = PolicyModel<f32>;

fn load_model(store: &RunStore, name: &str) -> Result<(Model, u64), CliError> {
    if !store.has(name) {
        return Err(CliError::Config(format!(
            "checkpoint {name} is not an artifact of this run"
        )));
    }
    Ok(PolicyModel::load(&store.path_of(name))?)
}

fn load_vector_artifact(store: &RunStore, name: &str) -> Result<ConceptVector, CliError> {
    if !store.has(name) {
        return Err(CliError::Config(format!(
            "vector file {name} is not an artifact of this run"
        )));
    }
    Ok(vectors::load_vector(&store.path_of(name))?)
}

/// Generates a maze and writes its snapshot (with config hash and seed).
pub fn cmd_gen_maze(config_path: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let config = RunConfig::from_file(config_path)?;
    config.validate()?;
    let maze = Maze::generate(&config.env, seed)?;
    let doc = serde_json::json!({
        "config_hash": store::config_hash(&config),
        "seed": seed,
        "snapshot": maze.snapshot(),
    });
    std::fs::write(out, serde_json::to_string_pretty(&doc).expect("snapshot json"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("maze {}x{} written to {}", config.env.width, config.env.width, out.display());
    Ok(())
}

fn checkpoint_name(step: usize) -> String {
    format!("ck_{step:06}.ckpt")
}

fn rl_metrics_header() -> &'static str {
    "step,mean_reward,gold_rate,mold_rate,beta,lr_scale,loss_pg,loss_kl,loss_entropy,loss_total\n"
}

/// Trains a policy: checkpoints at the eval cadence (plus the initial and
/// final states) and a metrics CSV row per update.
pub fn cmd_train(
    config_path: Option<&Path>,
    run_dir: &Path,
    seed: u64,
    algorithm: Option<Algorithm>,
    steps: Option<usize>,
    resume: bool,
) -> Result<(), CliError> {
    let (mut store, mut start_step, mut model, mut metrics_csv) = if resume {
        let store = RunStore::open(run_dir)?;
        let cfg = store.config().clone();
        let mut latest: Option<usize> = None;
        for s in 0..=cfg.train.total_steps {
            if store.has(&checkpoint_name(s)) {
                latest = Some(s);
            }
        }
        let latest = latest.ok_or_else(|| {
            CliError::Config("cannot resume: no checkpoint artifacts found".into())
        })?;
        let (model, _) = load_model(&store, &checkpoint_name(latest))?;
        let metrics = std::fs::read_to_string(store.path_of("metrics.csv"))
            .unwrap_or_else(|_| rl_metrics_header().to_string());
        (store, latest, model, metrics)
    } else {
        let config_path = config_path.ok_or_else(|| {
            CliError::Config("--config is required when starting a new run".into())
        })?;
        let mut config = RunConfig::from_file(config_path)?;
        config.train.seed = seed;
        if let Some(algo) = algorithm {
            config.train.algorithm = algo;
        }
        if let Some(n) = steps {
            config.train.total_steps = n;
        }
        config.validate()?;
        let mut store = RunStore::create(run_dir, &config)?;
        let model = Model::init(&config.model)?;
        model.save(&store.path_of(&checkpoint_name(0)), 0)?;
        store.record_file(&checkpoint_name(0), &[])?;
        (store, 0, model, rl_metrics_header().to_string())
    };

    let config = store.config().clone();
    let cfg = &config.train;
    let vocab = &config.vocab;
    let total = cfg.total_steps;
    let mut opt = SgdMomentum::new(&model, cfg.momentum);

    match cfg.algorithm {
        Algorithm::Grpo | Algorithm::Reinforce => {
            while start_step < total {
                let step = start_step;
                let (metrics, _) =
                    train::rl_update(&mut model, &mut opt, vocab, &config.env, cfg, step)?;
                let l = &metrics.loss;
                let _ = writeln!(
                    metrics_csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    metrics.step,
                    metrics.mean_reward,
                    metrics.gold_rate,
                    metrics.mold_rate,
                    metrics.beta,
                    metrics.lr_scale,
                    l.pg,
                    l.kl,
                    l.entropy,
                    l.total
                );
                start_step += 1;
                if start_step % cfg.eval_cadence == 0 || start_step == total {
                    model.save(&store.path_of(&checkpoint_name(start_step)), start_step as u64)?;
                    store.record_file(&checkpoint_name(start_step), &[])?;
                }
                if step % 10 == 0 {
                    println!(
                        "step {step}: mean reward {:.2}, gold rate {:.3}",
                        metrics.mean_reward, metrics.gold_rate
                    );
                }
            }
        }
        Algorithm::Sft => {
            let dataset =
                train::make_planner_transcripts(&config.env, cfg.sft_dataset, rng::mix(seed, 0xda7a))?;
            if !resume {
                metrics_csv = "step,loss\n".to_string();
            }
            while start_step < total {
                let step = start_step;
                let loss = train::sft_update(&mut model, &mut opt, vocab, &dataset, cfg, step)?;
                let _ = writeln!(metrics_csv, "{step},{loss}");
                start_step += 1;
                if start_step % cfg.eval_cadence == 0 || start_step == total {
                    model.save(&store.path_of(&checkpoint_name(start_step)), start_step as u64)?;
                    store.record_file(&checkpoint_name(start_step), &[])?;
                }
                if step % 50 == 0 {
                    println!("sft step {step}: loss {loss:.4}");
                }
            }
        }
    }

    store.put_bytes("metrics.csv", metrics_csv.as_bytes(), &[&checkpoint_name(0)])?;
    // mark the final checkpoint
    let final_name = checkpoint_name(total);
    if store.has(&final_name) {
        store.put_bytes("final_checkpoint.txt", final_name.as_bytes(), &[&final_name])?;
    } else {
        store.put_bytes("final_checkpoint.txt", checkpoint_name(0).as_bytes(), &[])?;
    }
    store.put_bytes(
        "vocab_manifest.json",
        serde_json::to_string_pretty(&vocab.manifest())
            .expect("manifest json")
            .as_bytes(),
        &[],
    )?;
    println!("training finished at step {total}");
    Ok(())
}

fn transcripts_jsonl(transcripts: &[Transcript]) -> String {
    let mut out = String::new();
    for t in transcripts {
        out.push_str(&serde_json::to_string(t).expect("transcript json"));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct RolloutSummary {
    episodes: usize,
    mean_reward: f64,
    gold_rate: f64,
    mold_rate: f64,
    per_turn_entropy: Vec<f64>,
}

/// Rolls out k episodes from a checkpoint, optionally steered.
#[allow(clippy::too_many_arguments)]
pub fn cmd_rollout(
    run_dir: &Path,
    checkpoint: &str,
    seed: u64,
    episodes: usize,
    steer_vector: Option<&str>,
    steer_layer: Option<usize>,
    steer_factor: f64,
    out_prefix: &str,
) -> Result<(), CliError> {
    let mut store = RunStore::open(run_dir)?;
    let config = store.config().clone();
    let (model, _) = load_model(&store, checkpoint)?;
    let steer = match steer_vector {
        Some(name) => {
            let v = load_vector_artifact(&store, name)?;
            let layer = steer_layer.ok_or_else(|| {
                CliError::Config("--steer-layer is required with --steer-vector".into())
            })?;
            Some(SteerVector {
                vector: v.at(layer).to_vec(),
                layer,
                factor: steer_factor,
            })
        }
        None => None,
    };
    let ts = rollout::rollout(
        &model,
        &config.vocab,
        &config.env,
        seed,
        config.train.temperature,
        steer.as_ref(),
        episodes,
    )?;
    let summary = RolloutSummary {
        episodes: ts.len(),
        mean_reward: ts.iter().map(|t| t.total_reward).sum::<f64>() / ts.len().max(1) as f64,
        gold_rate: ts.iter().map(|t| t.entry_rate(TileType::Gold)).sum::<f64>()
            / ts.len().max(1) as f64,
        mold_rate: ts.iter().map(|t| t.entry_rate(TileType::Mold)).sum::<f64>()
            / ts.len().max(1) as f64,
        per_turn_entropy: rollout::per_turn_entropy(&ts),
    };
    store.put_bytes(
        &format!("{out_prefix}.jsonl"),
        transcripts_jsonl(&ts).as_bytes(),
        &[checkpoint],
    )?;
    store.put_report(
        &format!("{out_prefix}_summary.json"),
        &summary,
        &[checkpoint],
    )?;
    println!(
        "rolled out {} episodes: mean reward {:.2}",
        summary.episodes, summary.mean_reward
    );
    Ok(())
}

/// Generates the labeled synthetic trajectory set.
pub fn cmd_synth(run_dir: &Path, seed: u64, out_name: &str) -> Result<(), CliError> {
    let mut store = RunStore::open(run_dir)?;
    let config = store.config().clone();
    let spec = SynthSpec {
        base_seed: seed,
        ..config.synth.clone()
    };
    let ts = synth::synthesize(&spec, &config.env, &config.vocab)?;
    let mut jsonl = String::new();
    for t in &ts {
        jsonl.push_str(&serde_json::to_string(t).expect("transcript json"));
        jsonl.push('\n');
    }
    store.put_bytes(&format!("{out_name}.jsonl"), jsonl.as_bytes(), &[])?;
    let balance = synth::verify_balance(&ts, spec.balance_band);
    store.put_report(&format!("{out_name}_balance.json"), &balance, &[])?;
    println!(
        "synthesized {} trajectories ({} per class)",
        ts.len(),
        spec.per_class
    );
    Ok(())
}

#[derive(Serialize)]
struct ExtractReport {
    checkpoint: String,
    tag: String,
    mold: vectors::LayerSelectReport,
    gold: vectors::LayerSelectReport,
}

/// The extraction pipeline: synthesize, capture, average, difference, and
/// select layers. `tag` distinguishes trained vectors from maze-naive
/// controls.
pub fn cmd_extract(
    run_dir: &Path,
    checkpoint: &str,
    seed: u64,
    tag: &str,
) -> Result<(), CliError> {
    let mut store = RunStore::open(run_dir)?;
    let config = store.config().clone();
    let (model, _) = load_model(&store, checkpoint)?;
    let spec = SynthSpec {
        base_seed: seed,
        ..config.synth.clone()
    };
    let ts = synth::synthesize(&spec, &config.env, &config.vocab)?;
    let (extract_split, held_out) =
        vectors::split_held_out(&ts, config.extract.holdout_frac, rng::mix(seed, 0x5e1d));

    let acts = vectors::capture_activations(&model, &extract_split)?;
    let held_acts = vectors::capture_activations(&model, &held_out)?;
    let means = vectors::class_means(&acts)?;
    let (v_mold, v_gold) = vectors::extract_eq1(&means, tag);
    let (p_mold, p_gold) = vectors::extract_path_ref(&means, tag);
    let report_mold = vectors::select_layer(&v_mold, &held_acts, config.extract.hist_bins)?;
    let report_gold = vectors::select_layer(&v_gold, &held_acts, config.extract.hist_bins)?;

    let names = [
        (format!("v_mold_{tag}.vec"), &v_mold),
        (format!("v_gold_{tag}.vec"), &v_gold),
        (format!("v_mold_pathref_{tag}.vec"), &p_mold),
        (format!("v_gold_pathref_{tag}.vec"), &p_gold),
    ];
    for (name, v) in &names {
        vectors::save_vector(&store.path_of(name), v)?;
        store.record_file(name, &[checkpoint])?;
    }
    vectors::save_activations(&store.path_of(&format!("activations_held_{tag}.bin")), &held_acts)?;
    store.record_file(&format!("activations_held_{tag}.bin"), &[checkpoint])?;
    store.put_report(
        &format!("class_means_{tag}.json"),
        &means,
        &[checkpoint],
    )?;
    store.put_report(
        &format!("layer_select_{tag}.json"),
        &ExtractReport {
            checkpoint: checkpoint.to_string(),
            tag: tag.to_string(),
            mold: report_mold,
            gold: report_gold,
        },
        &[checkpoint],
    )?;
    println!(
        "extracted {tag} vectors from {checkpoint} (mold layer {}, gold layer {})",
        names[0].1.norms.len(),
        names[1].1.norms.len()
    );
    Ok(())
}

/// Recomputes a layer-selection report from stored artifacts.
pub fn cmd_select_layer(
    run_dir: &Path,
    vector: &str,
    activations: &str,
    out_name: &str,
) -> Result<(), CliError> {
    let mut store = RunStore::open(run_dir)?;
    let config = store.config().clone();
    let v = load_vector_artifact(&store, vector)?;
    if !store.has(activations) {
        return Err(CliError::Config(format!(
            "activations file {activations} is not an artifact of this run"
        )));
    }
    let acts = vectors::load_activations(&store.path_of(activations))?;
    let report = vectors::select_layer(&v, &acts, config.extract.hist_bins)?;
    store.put_report(out_name, &report, &[vector, activations])?;
    println!("selected layer {} for {}", report.selected, vector);
    Ok(())
}

/// Reads the selected layer for a class out of a layer_select report file.
pub fn selected_layer(store: &RunStore, report_name: &str, class: TileType) -> Result<usize, CliError> {
    let text = std::fs::read_to_string(store.path_of(report_name))
        .map_err(|e| CliError::Config(format!("cannot read {report_name}: {e}")))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("bad report {report_name}: {e}")))?;
    let key = match class {
        TileType::Mold => "mold",
        TileType::Gold => "gold",
        TileType::Path => return Err(CliError::Config("no steering layer for Path".into())),
    };
    doc["report"][key]["selected"]
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| CliError::Runtime(format!("report {report_name} lacks {key}.selected")))
}

pub enum AnalyzeSpec<'a> {
    Cosine {
        a: &'a str,
        b: &'a str,
        out: &'a str,
    },
    TileMeans {
        means: &'a str,
        layer: Option<usize>,
        out: &'a str,
    },
    LogitLens {
        vector: &'a str,
        checkpoint: &'a str,
        layer: Option<usize>,
        k: Option<usize>,
        out: &'a str,
    },
    Pca {
        vectors: Vec<&'a str>,
        components: usize,
        out: &'a str,
    },
    Series {
        checkpoints: Vec<&'a str>,
        class: TileType,
        layer: usize,
        seed: u64,
        out: &'a str,
    },
}

/// Runs one geometric analysis over stored artifacts.
pub fn cmd_analyze(run_dir: &Path, spec: AnalyzeSpec) -> Result<(), CliError> {
    let mut store = RunStore::open(run_dir)?;
    let config = store.config().clone();
    match spec {
        AnalyzeSpec::Cosine { a, b, out } => {
            let va = load_vector_artifact(&store, a)?;
            let vb = load_vector_artifact(&store, b)?;
            let report = geometry::cosine_report(&va, &vb)?;
            let mut csv = String::from("layer,cosine\n");
            for (l, c) in report.per_layer.iter().enumerate() {
                match c {
                    Some(v) => {
                        let _ = writeln!(csv, "{l},{v}");
                    }
                    None => {
                        let _ = writeln!(csv, "{l},");
                    }
                }
            }
            store.put_bytes(&format!("{out}.csv"), csv.as_bytes(), &[a, b])?;
            store.put_report(&format!("{out}.json"), &report, &[a, b])?;
            println!("cosine: avg {:.4}, min {:.4} (layer {})", report.avg, report.min, report.argmin);
        }
        AnalyzeSpec::TileMeans { means, layer, out } => {
            let text = std::fs::read_to_string(store.path_of(means))
                .map_err(|e| CliError::Config(format!("cannot read {means}: {e}")))?;
            let doc: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Runtime(format!("bad means file: {e}")))?;
            let cm: vectors::ClassMeans = serde_json::from_value(doc["report"].clone())
                .map_err(|e| CliError::Runtime(format!("bad means file: {e}")))?;
            let l = layer
                .or(config.analysis.tile_mean_layer)
                .unwrap_or_else(|| geometry::tile_mean_layer(cm.n_layers));
            let r = geometry::centered_tile_cosines(
                &cm.mean[&TileType::Mold][l],
                &cm.mean[&TileType::Gold][l],
                &cm.mean[&TileType::Path][l],
            )?;
            let report = serde_json::json!({ "layer": l, "cosines": r });
            store.put_report(&format!("{out}.json"), &report, &[means])?;
            println!(
                "tile means at layer {l}: cos(M,G) = {:?}",
                r.mold_gold
            );
        }
        AnalyzeSpec::LogitLens {
            vector,
            checkpoint,
            layer,
            k,
            out,
        } => {
            let v = load_vector_artifact(&store, vector)?;
            let (model, _) = load_model(&store, checkpoint)?;
            let l = layer
                .or(config.analysis.logit_lens_layer)
                .unwrap_or_else(|| geometry::logit_lens_layer(v.n_layers()));
            let k = k.unwrap_or(config.analysis.logit_lens_k);
            let report = geometry::logit_lens(v.at(l), &model, k)?;
            let tsv = geometry::logit_lens_tsv(&report, &config.vocab);
            store.put_bytes(&format!("{out}.tsv"), tsv.as_bytes(), &[vector, checkpoint])?;
            store.put_report(&format!("{out}.json"), &report, &[vector, checkpoint])?;
            println!("logit lens at layer {l}: top promoted token id {}", report.promoted[0].0);
        }
        AnalyzeSpec::Pca {
            vectors: names,
            components,
            out,
        } => {
            let mut rows = Vec::new();
            for name in &names {
                let v = load_vector_artifact(&store, name)?;
                for layer in &v.layers {
                    rows.push(layer.clone());
                }
            }
            let r = geometry::pca(&rows, components)?;
            store.put_report(&format!("{out}.json"), &r, &names.to_vec())?;
            println!(
                "pca over {} vectors: ratios {:?}",
                rows.len(),
                r.explained_variance_ratio
            );
        }
        AnalyzeSpec::Series {
            checkpoints,
            class,
            layer,
            seed,
            out,
        } => {
            if checkpoints.len() < 2 {
                return Err(CliError::Config("series needs at least 2 checkpoints".into()));
            }
            let spec = SynthSpec {
                base_seed: seed,
                per_class: config.analysis.series_per_class,
                ..config.synth.clone()
            };
            let ts = synth::synthesize(&spec, &config.env, &config.vocab)?;
            let mut points = Vec::new();
            for name in &checkpoints {
                let (model, step) = load_model(&store, name)?;
                let acts = vectors::capture_activations(&model, &ts)?;
                let means = vectors::class_means(&acts)?;
                let (v_mold, v_gold) = vectors::extract_eq1(&means, name);
                let v = match class {
                    TileType::Mold => v_mold,
                    _ => v_gold,
                };
                points.push(geometry::SeriesPoint {
                    step,
                    vector: v.at(layer).to_vec(),
                    mean_gold: means.mean[&TileType::Gold][layer].clone(),
                    mean_mold: means.mean[&TileType::Mold][layer].clone(),
                });
            }
            points.sort_by_key(|p| p.step);
            let axis = points.last().expect("nonempty").vector.clone();
            let rows = geometry::axis_alignment_series(&points, &axis)?;
            let mut csv = String::from("step,cos_axis,projection_separation\n");
            for r in &rows {
                let _ = writeln!(csv, "{},{},{}", r.step, r.cos_axis, r.projection_separation);
            }
            store.put_bytes(&format!("{out}.csv"), csv.as_bytes(), &checkpoints.to_vec())?;
            println!("series over {} checkpoints written", rows.len());
        }
    }
    Ok(())
}

/// Steering sweep over the configured factor grid for a set of vectors on
/// one checkpoint. Control vectors are norm-matched to their trained
/// counterparts by class.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    run_dir: &Path,
    checkpoint: &str,
    condition: &str,
    vector_names: &[String],
    control: bool,
    control_names: &[String],
    layer_report: &str,
    episodes: Option<usize>,
    seed: u64,
    out_name: &str,
) -> Result<(), CliError> {
    let mut store = RunStore::open(run_dir)?;
    let config = store.config().clone();
    if control && control_names.is_empty() {
        return Err(CliError::Config(
            "--control requires --control-vectors".into(),
        ));
    }
    let (model, _) = load_model(&store, checkpoint)?;
    let episodes = episodes.unwrap_or(config.analysis.sweep_episodes);
    let alphas = config.analysis.alphas.clone();

    let mut requests: Vec<(String, SweepVector)> = Vec::new();
    let mut trained_norm_at: std::collections::BTreeMap<u8, (usize, f64)> = Default::default();
    for name in vector_names {
        let v = load_vector_artifact(&store, name)?;
        let layer = selected_layer(&store, layer_report, v.class)?;
        trained_norm_at.insert(v.class.code(), (layer, v.norms[layer]));
        let stem = name.trim_end_matches(".vec").to_string();
        requests.push((
            name.clone(),
            SweepVector::from_concept(&stem, &v, layer),
        ));
    }
    if control {
        for name in control_names {
            let u = load_vector_artifact(&store, name)?;
            let (layer, v_norm) = *trained_norm_at.get(&u.class.code()).ok_or_else(|| {
                CliError::Config(format!(
                    "control vector {name} has no trained counterpart of the same class"
                ))
            })?;
            let stem = name.trim_end_matches(".vec").to_string();
            let mut sv = SweepVector::from_concept(&stem, &u, layer);
            sv.norm_match_to = Some(v_norm);
            requests.push((name.clone(), sv));
        }
    }

    let mut cells = Vec::new();
    for (_, sv) in &requests {
        cells.extend(eval::steering_sweep(
            &model,
            condition,
            &config.vocab,
            &config.env,
            sv,
            &alphas,
            episodes,
            seed,
            config.train.temperature,
        )?);
    }
    let csv = eval::sweep_csv(&cells);
    let mut parents: Vec<&str> = vec![checkpoint];
    for (name, _) in &requests {
        parents.push(name.as_str());
    }
    store.put_bytes(&format!("{out_name}.csv"), csv.as_bytes(), &parents)?;
    store.put_report(&format!("{out_name}.json"), &cells, &parents)?;
    println!("sweep complete: {} cells", cells.len());
    Ok(())
}

#[derive(Serialize)]
struct TrackSummary {
    vector: String,
    layer: usize,
    trained_d: Option<f64>,
    naive_d: Option<f64>,
    ratio_abs: Option<f64>,
}

/// Projection tracking of one vector on trained and maze-naive
/// checkpoints over a fresh synthetic set.
#[allow(clippy::too_many_arguments)]
pub fn cmd_track(
    run_dir: &Path,
    checkpoint: &str,
    naive_checkpoint: &str,
    vector_name: &str,
    layer_report: &str,
    per_class: Option<usize>,
    seed: u64,
    out_name: &str,
) -> Result<(), CliError> {
    let mut store = RunStore::open(run_dir)?;
    let config = store.config().clone();
    let v = load_vector_artifact(&store, vector_name)?;
    let layer = selected_layer(&store, layer_report, v.class)?;
    let (trained, _) = load_model(&store, checkpoint)?;
    let (naive, _) = load_model(&store, naive_checkpoint)?;

    let spec = SynthSpec {
        base_seed: seed,
        per_class: per_class.unwrap_or(config.analysis.track_per_class),
        ..config.synth.clone()
    };
    let ts = synth::synthesize(&spec, &config.env, &config.vocab)?;

    let r_trained = eval::track_transcripts(&trained, "trained", vector_name, v.at(layer), layer, &ts)?;
    let r_naive = eval::track_transcripts(&naive, "naive", vector_name, v.at(layer), layer, &ts)?;

    let mut csv = String::from("condition,class,index,projection_std\n");
    for (r, cond) in [(&r_trained, "trained"), (&r_naive, "naive")] {
        for (i, p) in r.gold_projections.iter().enumerate() {
            let _ = writeln!(csv, "{cond},Gold,{i},{p}");
        }
        for (i, p) in r.mold_projections.iter().enumerate() {
            let _ = writeln!(csv, "{cond},Mold,{i},{p}");
        }
    }
    let summary = TrackSummary {
        vector: vector_name.to_string(),
        layer,
        trained_d: r_trained.cohens_d,
        naive_d: r_naive.cohens_d,
        ratio_abs: match (r_trained.cohens_d, r_naive.cohens_d) {
            (Some(t), Some(n)) if n != 0.0 => Some((t / n).abs()),
            _ => None,
        },
    };
    let parents = [checkpoint, naive_checkpoint, vector_name];
    store.put_bytes(&format!("{out_name}.csv"), csv.as_bytes(), &parents)?;
    store.put_report(&format!("{out_name}.json"), &summary, &parents)?;
    println!(
        "tracking: trained |d| {:?}, naive |d| {:?}",
        summary.trained_d.map(f64::abs),
        summary.naive_d.map(f64::abs)
    );
    Ok(())
}

/// Re-validates every artifact hash and lineage link in a run directory.
pub fn cmd_verify(run_dir: &Path) -> Result<(), CliError> {
    let report = store::verify_run(run_dir)?;
    if report.ok() {
        println!("verified {} artifacts: ok", report.checked);
        Ok(())
    } else {
        Err(CliError::VerifyFailed(report.problems.join("\n")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.env.width = 13;
        cfg.env.episode_len = 4;
        cfg.model.n_layers = 2;
        cfg.model.d_model = 16;
        cfg.model.n_heads = 2;
        cfg.model.d_ff = 24;
        cfg.model.context_len = 128;
        cfg.train.total_steps = 2;
        cfg.train.eval_cadence = 1;
        cfg.train.group_size = 2;
        cfg.train.prompts_per_batch = 2;
        cfg.synth.per_class = 8;
        cfg.analysis.sweep_episodes = 2;
        cfg.analysis.track_per_class = 6;
        cfg.analysis.series_per_class = 6;
        cfg
    }

    fn write_config(dir: &Path) -> PathBuf {
        let p = dir.join("cfg.json");
        std::fs::write(&p, serde_json::to_string(&small_config()).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_step_training_leaves_only_initial_checkpoint() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path());
        let run = tmp.path().join("run");
        cmd_train(Some(&cfg), &run, 1, None, Some(0), false).unwrap();
        let store = RunStore::open(&run).unwrap();
        assert!(store.has("ck_000000.ckpt"));
        assert!(!store.has("ck_000001.ckpt"));
        let final_name = std::fs::read_to_string(run.join("final_checkpoint.txt")).unwrap();
        assert_eq!(final_name, "ck_000000.ckpt");
        cmd_verify(&run).unwrap();
    }

    #[test]
    fn rerun_with_same_seed_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path());
        let run_a = tmp.path().join("a");
        let run_b = tmp.path().join("b");
        cmd_train(Some(&cfg), &run_a, 7, None, Some(2), false).unwrap();
        cmd_train(Some(&cfg), &run_b, 7, None, Some(2), false).unwrap();
        for name in ["metrics.csv", "ck_000002.ckpt", "config.json", "index.json"] {
            let a = std::fs::read(run_a.join(name)).unwrap();
            let b = std::fs::read(run_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn full_pipeline_smoke_and_lineage() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path());
        let run = tmp.path().join("run");
        cmd_train(Some(&cfg), &run, 3, None, Some(1), false).unwrap();
        cmd_synth(&run, 11, "synth").unwrap();
        cmd_extract(&run, "ck_000001.ckpt", 21, "trained").unwrap();
        cmd_extract(&run, "ck_000000.ckpt", 21, "control").unwrap();
        cmd_select_layer(
            &run,
            "v_mold_trained.vec",
            "activations_held_trained.bin",
            "reselect.json",
        )
        .unwrap();
        cmd_rollout(&run, "ck_000001.ckpt", 5, 2, None, None, 0.0, "rollout").unwrap();
        cmd_analyze(
            &run,
            AnalyzeSpec::Cosine {
                a: "v_mold_trained.vec",
                b: "v_gold_trained.vec",
                out: "cosine_trained",
            },
        )
        .unwrap();
        cmd_analyze(
            &run,
            AnalyzeSpec::TileMeans {
                means: "class_means_trained.json",
                layer: None,
                out: "tilemeans",
            },
        )
        .unwrap();
        cmd_analyze(
            &run,
            AnalyzeSpec::LogitLens {
                vector: "v_mold_trained.vec",
                checkpoint: "ck_000001.ckpt",
                layer: None,
                k: Some(3),
                out: "lens",
            },
        )
        .unwrap();
        cmd_analyze(
            &run,
            AnalyzeSpec::Pca {
                vectors: vec!["v_mold_trained.vec", "v_gold_trained.vec"],
                components: 2,
                out: "pca",
            },
        )
        .unwrap();
        cmd_analyze(
            &run,
            AnalyzeSpec::Series {
                checkpoints: vec!["ck_000000.ckpt", "ck_000001.ckpt"],
                class: TileType::Gold,
                layer: 1,
                seed: 31,
                out: "series",
            },
        )
        .unwrap();
        cmd_sweep(
            &run,
            "ck_000001.ckpt",
            "trained",
            &["v_gold_trained.vec".to_string()],
            true,
            &["v_gold_control.vec".to_string()],
            "layer_select_trained.json",
            Some(2),
            41,
            "sweep_trained",
        )
        .unwrap();
        cmd_track(
            &run,
            "ck_000001.ckpt",
            "ck_000000.ckpt",
            "v_gold_trained.vec",
            "layer_select_trained.json",
            Some(6),
            51,
            "track",
        )
        .unwrap();
        cmd_verify(&run).unwrap();

        // logit lens tsv has 2k rows plus header
        let tsv = std::fs::read_to_string(run.join("lens.tsv")).unwrap();
        assert_eq!(tsv.lines().count(), 1 + 2 * 3);

        // track cohen's d recomputable from the emitted per-sample csv
        let csv = std::fs::read_to_string(run.join("track.csv")).unwrap();
        let mut gold = Vec::new();
        let mut mold = Vec::new();
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f[0] == "trained" {
                let v: f64 = f[3].parse().unwrap();
                if f[1] == "Gold" {
                    gold.push(v);
                } else {
                    mold.push(v);
                }
            }
        }
        let d_csv = crate::stats::cohens_d(&gold, &mold).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(run.join("track.json")).unwrap())
                .unwrap();
        let d_json = summary["report"]["trained_d"].as_f64().unwrap();
        assert!(
            (d_csv - d_json).abs() < 1e-9,
            "csv {d_csv} vs summary {d_json}"
        );
    }

    #[test]
    fn sweep_without_control_vectors_errors_with_flag() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path());
        let run = tmp.path().join("run");
        cmd_train(Some(&cfg), &run, 3, None, Some(0), false).unwrap();
        let err = cmd_sweep(
            &run,
            "ck_000000.ckpt",
            "naive",
            &["v.vec".to_string()],
            true,
            &[],
            "layer_select_trained.json",
            Some(1),
            1,
            "sweep",
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_seed_semantics_are_not_ambient() {
        // identical commands with different seeds must differ
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path());
        let run_a = tmp.path().join("a");
        let run_b = tmp.path().join("b");
        cmd_train(Some(&cfg), &run_a, 1, None, Some(1), false).unwrap();
        cmd_train(Some(&cfg), &run_b, 2, None, Some(1), false).unwrap();
        let a = std::fs::read(run_a.join("metrics.csv")).unwrap();
        let b = std::fs::read(run_b.join("metrics.csv")).unwrap();
        assert_ne!(a, b);
    }
}
