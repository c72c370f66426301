//! Concept-vector extraction by difference in class means, Path-referenced
//! variants, separability-based layer selection, and norm matching for
//! control-vector steering.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::maze::TileType;
use crate::model::{ModelError, PolicyModel, Scalar};
use crate::rng;
use crate::stats;
use crate::synth::LabeledTranscript;

#[derive(Debug, thiserror::Error)]
pub enum VectorError {
    #[error("class {0:?} has no samples")]
    EmptyClass(TileType),
    #[error("need at least 2 samples per side for layer selection, got {pos} / {neg}")]
    TooFewSamples { pos: usize, neg: usize },
    #[error("control vector has zero norm at layer {0}")]
    ZeroNormControl(usize),
    #[error("vector file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Residual activations of one labeled trajectory at its final assistant
/// direction token, one vector per layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationSample {
    pub class: TileType,
    pub n_steps: usize,
    /// layers x d_model
    pub acts: Vec<Vec<f64>>,
}

/// Runs forward passes over labeled transcripts, capturing every layer's
/// residual at the final assistant-turn token.
pub fn capture_activations<T: Scalar>(
    model: &PolicyModel<T>,
    transcripts: &[LabeledTranscript],
) -> Result<Vec<ActivationSample>, VectorError> {
    let mut out = Vec::with_capacity(transcripts.len());
    for t in transcripts {
        let fwd = model.forward(&t.tokens, &[t.final_action_position], None)?;
        let acts = (0..model.config.n_layers)
            .map(|l| fwd.cache.at(l, 0).to_vec())
            .collect();
        out.push(ActivationSample {
            class: t.class,
            n_steps: t.n_steps,
            acts,
        });
    }
    Ok(out)
}

/// Per-class mean activations and counts, per layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMeans {
    pub n_layers: usize,
    pub d_model: usize,
    /// class -> layers x d
    pub mean: BTreeMap<TileType, Vec<Vec<f64>>>,
    pub count: BTreeMap<TileType, usize>,
}

pub fn class_means(samples: &[ActivationSample]) -> Result<ClassMeans, VectorError> {
    let n_layers = samples.first().map(|s| s.acts.len()).unwrap_or(0);
    let d = samples.first().map(|s| s.acts[0].len()).unwrap_or(0);
    let mut mean: BTreeMap<TileType, Vec<Vec<f64>>> = BTreeMap::new();
    let mut count: BTreeMap<TileType, usize> = BTreeMap::new();
    for s in samples {
        let m = mean
            .entry(s.class)
            .or_insert_with(|| vec![vec![0.0; d]; n_layers]);
        for l in 0..n_layers {
            for j in 0..d {
                m[l][j] += s.acts[l][j];
            }
        }
        *count.entry(s.class).or_insert(0) += 1;
    }
    for class in [TileType::Mold, TileType::Gold, TileType::Path] {
        let n = *count.get(&class).unwrap_or(&0);
        if n == 0 {
            return Err(VectorError::EmptyClass(class));
        }
        for row in mean.get_mut(&class).expect("counted class") {
            for v in row {
                *v /= n as f64;
            }
        }
    }
    Ok(ClassMeans {
        n_layers,
        d_model: d,
        mean,
        count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionKind {
    /// Class mean minus the count-weighted mean of the other two classes.
    Eq1,
    /// Class mean minus the Path class mean.
    PathRef,
    /// Class mean minus the opposite reward class only (no Path term).
    NoPath,
}

/// A per-layer family of difference-in-means directions for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVector {
    pub class: TileType,
    pub kind: ExtractionKind,
    /// Identifier of the source checkpoint ("control" runs set their own).
    pub checkpoint: String,
    /// layers x d_model
    pub layers: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

impl ConceptVector {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn at(&self, layer: usize) -> &[f64] {
        &self.layers[layer]
    }

    fn from_layers(
        class: TileType,
        kind: ExtractionKind,
        checkpoint: &str,
        layers: Vec<Vec<f64>>,
    ) -> ConceptVector {
        let norms = layers
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        ConceptVector {
            class,
            kind,
            checkpoint: checkpoint.to_string(),
            layers,
            norms,
        }
    }
}

fn pooled_mean(means: &ClassMeans, classes: &[TileType], layer: usize) -> Vec<f64> {
    let d = means.d_model;
    let mut out = vec![0.0; d];
    let total: usize = classes.iter().map(|c| means.count[c]).sum();
    for c in classes {
        let w = means.count[c] as f64;
        for j in 0..d {
            out[j] += w * means.mean[c][layer][j];
        }
    }
    for v in &mut out {
        *v /= total as f64;
    }
    out
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Difference-in-means reward vectors: each class mean minus the pooled
/// mean of the remaining two classes (count-weighted).
pub fn extract_eq1(means: &ClassMeans, checkpoint: &str) -> (ConceptVector, ConceptVector) {
    extract_with(means, checkpoint, ExtractionKind::Eq1)
}

/// Path-referenced variants: each class mean minus the Path mean.
pub fn extract_path_ref(means: &ClassMeans, checkpoint: &str) -> (ConceptVector, ConceptVector) {
    extract_with(means, checkpoint, ExtractionKind::PathRef)
}

/// The construction-check variant with Path removed from both subtrahends;
/// by construction the two outputs are exact negatives.
pub fn extract_no_path(means: &ClassMeans, checkpoint: &str) -> (ConceptVector, ConceptVector) {
    extract_with(means, checkpoint, ExtractionKind::NoPath)
}

fn extract_with(
    means: &ClassMeans,
    checkpoint: &str,
    kind: ExtractionKind,
) -> (ConceptVector, ConceptVector) {
    let build = |class: TileType| -> ConceptVector {
        let layers = (0..means.n_layers)
            .map(|l| {
                let sub = match (kind, class) {
                    (ExtractionKind::Eq1, TileType::Mold) => {
                        pooled_mean(means, &[TileType::Gold, TileType::Path], l)
                    }
                    (ExtractionKind::Eq1, TileType::Gold) => {
                        pooled_mean(means, &[TileType::Mold, TileType::Path], l)
                    }
                    (ExtractionKind::PathRef, _) => means.mean[&TileType::Path][l].clone(),
                    (ExtractionKind::NoPath, TileType::Mold) => {
                        means.mean[&TileType::Gold][l].clone()
                    }
                    (ExtractionKind::NoPath, TileType::Gold) => {
                        means.mean[&TileType::Mold][l].clone()
                    }
                    (_, other) => panic!("no reward vector for class {other:?}"),
                };
                diff(&means.mean[&class][l], &sub)
            })
            .collect();
        ConceptVector::from_layers(class, kind, checkpoint, layers)
    };
    (build(TileType::Mold), build(TileType::Gold))
}

/// Per-layer separability metrics and the chosen steering layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSelectReport {
    pub class: TileType,
    pub auroc: Vec<f64>,
    pub cohens_d: Vec<f64>,
    pub overlap: Vec<f64>,
    pub argmax_auroc: usize,
    pub argmax_abs_d: usize,
    pub argmin_overlap: usize,
    pub selected: usize,
}

fn argmax_by(xs: &[f64], key: impl Fn(f64) -> f64) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if key(v) > key(xs[best]) {
            best = i;
        }
    }
    best
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v < xs[best] {
            best = i;
        }
    }
    best
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores held-out activations against the per-layer vectors of one class:
/// AUROC and Cohen's d over raw projections, histogram overlap over cosine
/// similarities (`bins` bins on the joint range), then
/// `selected = floor(mean(argmax AUROC, argmax |d|, argmin overlap))`.
/// Argmax/argmin ties resolve to the lowest layer.
pub fn select_layer(
    vector: &ConceptVector,
    held_out: &[ActivationSample],
    bins: usize,
) -> Result<LayerSelectReport, VectorError> {
    let n_pos = held_out.iter().filter(|s| s.class == vector.class).count();
    let n_neg = held_out.len() - n_pos;
    if n_pos < 2 || n_neg < 2 {
        return Err(VectorError::TooFewSamples {
            pos: n_pos,
            neg: n_neg,
        });
    }
    let n_layers = vector.n_layers();
    let mut auroc = Vec::with_capacity(n_layers);
    let mut ds = Vec::with_capacity(n_layers);
    let mut ovl = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let v = vector.at(l);
        let vn = norm(v);
        let mut proj_pos = Vec::with_capacity(n_pos);
        let mut proj_neg = Vec::with_capacity(n_neg);
        let mut cos_pos = Vec::with_capacity(n_pos);
        let mut cos_neg = Vec::with_capacity(n_neg);
        for s in held_out {
            let a = &s.acts[l];
            let p = dot(a, v);
            let c = if vn > 0.0 {
                p / (norm(a) * vn).max(1e-300)
            } else {
                0.0
            };
            if s.class == vector.class {
                proj_pos.push(p);
                cos_pos.push(c);
            } else {
                proj_neg.push(p);
                cos_neg.push(c);
            }
        }
        auroc.push(stats::auroc(&proj_pos, &proj_neg));
        ds.push(stats::cohens_d(&proj_pos, &proj_neg).unwrap_or(0.0));
        ovl.push(stats::histogram_overlap(&cos_pos, &cos_neg, bins));
    }
    let argmax_auroc = argmax_by(&auroc, |v| v);
    let argmax_abs_d = argmax_by(&ds, f64::abs);
    let argmin_overlap = argmin(&ovl);
    let selected = (argmax_auroc + argmax_abs_d + argmin_overlap) / 3;
    Ok(LayerSelectReport {
        class: vector.class,
        auroc,
        cohens_d: ds,
        overlap: ovl,
        argmax_auroc,
        argmax_abs_d,
        argmin_overlap,
        selected,
    })
}

/// Deterministic stratified split: within each (class, n_steps) cell,
/// `holdout_frac` of the samples (at least one when possible) go to the
/// held-out side.
pub fn split_held_out(
    transcripts: &[LabeledTranscript],
    holdout_frac: f64,
    seed: u64,
) -> (Vec<LabeledTranscript>, Vec<LabeledTranscript>) {
    let mut cells: BTreeMap<(u8, usize), Vec<&LabeledTranscript>> = BTreeMap::new();
    for t in transcripts {
        cells.entry((t.class.code(), t.n_steps)).or_default().push(t);
    }
    let mut train = Vec::new();
    let mut held = Vec::new();
    for ((class, n), mut cell) in cells {
        // deterministic shuffle per cell
        use rand::Rng;
        let mut r = rng::stream_rng(rng::mix(seed, (class as u64) << 32 | n as u64), 8);
        for i in (1..cell.len()).rev() {
            let j = r.gen_range(0..=i);
            cell.swap(i, j);
        }
        let k = ((cell.len() as f64 * holdout_frac).round() as usize)
            .max(1)
            .min(cell.len().saturating_sub(1));
        for (i, t) in cell.into_iter().enumerate() {
            if i < k {
                held.push(t.clone());
            } else {
                train.push(t.clone());
            }
        }
    }
    (train, held)
}

/// Scaled control factor: `beta` such that `beta * ||u|| = alpha * ||v||`.
pub fn norm_match(alpha: f64, v_norm: f64, u_norm: f64) -> Result<f64, VectorError> {
    if u_norm <= 0.0 {
        return Err(VectorError::ZeroNormControl(0));
    }
    Ok(alpha * v_norm / u_norm)
}

/// Vector file: one-line JSON header, then the per-layer f32 payload in
/// layer-major order.
pub fn save_vector(path: &Path, v: &ConceptVector) -> Result<(), VectorError> {
    let header = serde_json::json!({
        "format_version": 1,
        "class": v.class,
        "kind": v.kind,
        "checkpoint": v.checkpoint,
        "n_layers": v.n_layers(),
        "d_model": v.layers.first().map(|l| l.len()).unwrap_or(0),
        "norms": v.norms,
    });
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string(&header).expect("header").as_bytes())?;
    f.write_all(b"\n")?;
    for layer in &v.layers {
        for &x in layer {
            f.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_vector(path: &Path) -> Result<ConceptVector, VectorError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| VectorError::Format("missing header line".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| VectorError::Format(format!("bad header: {e}")))?;
    let n_layers = header["n_layers"].as_u64().unwrap_or(0) as usize;
    let d = header["d_model"].as_u64().unwrap_or(0) as usize;
    let payload = &bytes[nl + 1..];
    if payload.len() != n_layers * d * 4 {
        return Err(VectorError::Format(format!(
            "payload length {} != {} layers x {} dims x 4",
            payload.len(),
            n_layers,
            d
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let off = (l * d + j) * 4;
            row.push(f32::from_le_bytes([
                payload[off],
                payload[off + 1],
                payload[off + 2],
                payload[off + 3],
            ]) as f64);
        }
        layers.push(row);
    }
    let class: TileType = serde_json::from_value(header["class"].clone())
        .map_err(|e| VectorError::Format(format!("bad class: {e}")))?;
    let kind: ExtractionKind = serde_json::from_value(header["kind"].clone())
        .map_err(|e| VectorError::Format(format!("bad kind: {e}")))?;
    let checkpoint = header["checkpoint"].as_str().unwrap_or("").to_string();
    let stored_norms: Vec<f64> = serde_json::from_value(header["norms"].clone())
        .map_err(|e| VectorError::Format(format!("bad norms: {e}")))?;
    let v = ConceptVector::from_layers(class, kind, &checkpoint, layers);
    for (a, b) in v.norms.iter().zip(&stored_norms) {
        if (a - b).abs() > 1e-6 * (1.0 + b.abs()) {
            return Err(VectorError::Format(format!(
                "stored norm {b} does not match payload norm {a}"
            )));
        }
    }
    Ok(v)
}

/// Activation dump: JSON header plus f32 payload, sample-major then
/// layer-major. Feeds `select-layer` and the tracking analyses.
pub fn save_activations(path: &Path, samples: &[ActivationSample]) -> Result<(), VectorError> {
    let n_layers = samples.first().map(|s| s.acts.len()).unwrap_or(0);
    let d = samples.first().map(|s| s.acts[0].len()).unwrap_or(0);
    let header = serde_json::json!({
        "format_version": 1,
        "n_samples": samples.len(),
        "n_layers": n_layers,
        "d_model": d,
        "classes": samples.iter().map(|s| s.class.code()).collect::<Vec<_>>(),
        "n_steps": samples.iter().map(|s| s.n_steps).collect::<Vec<_>>(),
    });
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string(&header).expect("header").as_bytes())?;
    f.write_all(b"\n")?;
    for s in samples {
        for layer in &s.acts {
            for &x in layer {
                f.write_all(&(x as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn load_activations(path: &Path) -> Result<Vec<ActivationSample>, VectorError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| VectorError::Format("missing header line".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| VectorError::Format(format!("bad header: {e}")))?;
    let n_samples = header["n_samples"].as_u64().unwrap_or(0) as usize;
    let n_layers = header["n_layers"].as_u64().unwrap_or(0) as usize;
    let d = header["d_model"].as_u64().unwrap_or(0) as usize;
    let classes: Vec<u8> = serde_json::from_value(header["classes"].clone())
        .map_err(|e| VectorError::Format(format!("bad classes: {e}")))?;
    let n_steps: Vec<usize> = serde_json::from_value(header["n_steps"].clone())
        .map_err(|e| VectorError::Format(format!("bad n_steps: {e}")))?;
    let payload = &bytes[nl + 1..];
    if payload.len() != n_samples * n_layers * d * 4 || classes.len() != n_samples {
        return Err(VectorError::Format("payload size mismatch".into()));
    }
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut acts = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                let off = ((i * n_layers + l) * d + j) * 4;
                row.push(f32::from_le_bytes([
                    payload[off],
                    payload[off + 1],
                    payload[off + 2],
                    payload[off + 3],
                ]) as f64);
            }
            acts.push(row);
        }
        out.push(ActivationSample {
            class: TileType::from_code(classes[i])
                .ok_or_else(|| VectorError::Format(format!("bad class code {}", classes[i])))?,
            n_steps: n_steps[i],
            acts,
        });
    }
    Ok(out)
}
