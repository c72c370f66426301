//! Behavioral steering sweeps over maze metrics and projection tracking of
//! goal achievement, for trained and control vectors on trained and
//! maze-naive checkpoints.

use serde::{Deserialize, Serialize};

use crate::codec::Vocab;
use crate::maze::{MazeConfig, TileType};
use crate::model::{PolicyModel, Scalar};
use crate::rng;
use crate::rollout::{self, RolloutError, SteerVector};
use crate::stats;
use crate::synth::LabeledTranscript;
use crate::vectors::{self, ActivationSample, ConceptVector, VectorError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("tracking class {0:?} absent from the sample set")]
    MissingClass(TileType),
}

/// Aggregate maze metrics for one (vector, condition, factor) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub vector: String,
    pub condition: String,
    /// Nominal steering factor (control cells record the nominal value,
    /// not the norm-matched one).
    pub alpha: f64,
    /// Factor actually injected (norm-matched for control vectors).
    pub applied_factor: f64,
    pub gold_rate: f64,
    pub mold_rate: f64,
    pub mean_reward: f64,
    pub mean_entropy: f64,
    pub episodes: usize,
    pub stderr_reward: f64,
    pub stderr_gold_rate: f64,
}

/// One sweep request: a named vector at its steering layer, applied to a
/// model condition. `norm_match_to` carries the trained vector's norm when
/// this is a control cell.
#[derive(Debug, Clone)]
pub struct SweepVector {
    pub name: String,
    pub vector: Vec<f64>,
    pub layer: usize,
    pub norm_match_to: Option<f64>,
}

impl SweepVector {
    pub fn from_concept(name: &str, v: &ConceptVector, layer: usize) -> SweepVector {
        SweepVector {
            name: name.to_string(),
            vector: v.at(layer).to_vec(),
            layer,
            norm_match_to: None,
        }
    }

    fn vector_norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// The injected factor for a nominal alpha.
    pub fn applied_factor(&self, alpha: f64) -> Result<f64, VectorError> {
        match self.norm_match_to {
            Some(v_norm) => vectors::norm_match(alpha, v_norm, self.vector_norm()),
            None => Ok(alpha),
        }
    }
}

/// Seed for one sweep cell. Cells at the same alpha index share seeds
/// across vectors and conditions, and the alpha = 0 cell reproduces an
/// unsteered rollout bitwise.
pub fn sweep_cell_seed(seed: u64, alpha_idx: usize) -> u64 {
    rng::mix(seed, 0x5731 + alpha_idx as u64)
}

/// Steered rollouts at each factor; per-cell maze metrics.
pub fn steering_sweep<T: Scalar>(
    model: &PolicyModel<T>,
    condition: &str,
    vocab: &Vocab,
    env: &MazeConfig,
    sweep_vector: &SweepVector,
    alphas: &[f64],
    episodes: usize,
    seed: u64,
    temperature: f64,
) -> Result<Vec<SweepCell>, EvalError> {
    let mut out = Vec::with_capacity(alphas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        let applied = sweep_vector.applied_factor(alpha)?;
        let steer = SteerVector {
            vector: sweep_vector.vector.clone(),
            layer: sweep_vector.layer,
            factor: applied,
        };
        let cell_seed = sweep_cell_seed(seed, ai);
        let transcripts = rollout::rollout(
            model,
            vocab,
            env,
            cell_seed,
            temperature,
            Some(&steer),
            episodes,
        )?;
        let rewards: Vec<f64> = transcripts.iter().map(|t| t.total_reward).collect();
        let gold_rates: Vec<f64> = transcripts
            .iter()
            .map(|t| t.entry_rate(TileType::Gold))
            .collect();
        let mold_rates: Vec<f64> = transcripts
            .iter()
            .map(|t| t.entry_rate(TileType::Mold))
            .collect();
        let entropy = rollout::per_turn_entropy(&transcripts);
        let n = transcripts.len().max(1) as f64;
        out.push(SweepCell {
            vector: sweep_vector.name.clone(),
            condition: condition.to_string(),
            alpha,
            applied_factor: applied,
            gold_rate: stats::mean(&gold_rates),
            mold_rate: stats::mean(&mold_rates),
            mean_reward: stats::mean(&rewards),
            mean_entropy: stats::mean(&entropy),
            episodes: transcripts.len(),
            stderr_reward: (stats::variance(&rewards) / n).sqrt(),
            stderr_gold_rate: (stats::variance(&gold_rates) / n).sqrt(),
        });
    }
    Ok(out)
}

/// Serializes sweep cells as the plot-data CSV contract:
/// (vector, condition, alpha, metric, value, n, stderr).
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("vector,condition,alpha,metric,value,n,stderr\n");
    for c in cells {
        let rows = [
            ("gold_rate", c.gold_rate, c.stderr_gold_rate),
            ("mold_rate", c.mold_rate, f64::NAN),
            ("mean_reward", c.mean_reward, c.stderr_reward),
            ("mean_entropy", c.mean_entropy, f64::NAN),
            ("applied_factor", c.applied_factor, f64::NAN),
        ];
        for (metric, value, stderr) in rows {
            let se = if stderr.is_nan() {
                String::new()
            } else {
                format!("{stderr}")
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.vector, c.condition, c.alpha, metric, value, c.episodes, se
            ));
        }
    }
    out
}

/// Projection tracking of one vector at its steering layer on fresh
/// labeled activations: standardized per-class projections and the
/// between-class effect size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingReport {
    pub condition: String,
    pub vector: String,
    pub layer: usize,
    /// Standardized projections (units: pooled standard deviations from
    /// the pooled mean) for Gold-final and Mold-final trajectories.
    pub gold_projections: Vec<f64>,
    pub mold_projections: Vec<f64>,
    /// Cohen's d of Gold-final vs Mold-final raw projections; None when
    /// the pooled variance vanishes (e.g. a zero vector).
    pub cohens_d: Option<f64>,
    pub degenerate: bool,
}

/// Projects final-token activations onto the vector and standardizes by
/// the pooled mean and standard deviation across both classes.
pub fn projection_tracking(
    condition: &str,
    vector_name: &str,
    vector: &[f64],
    layer: usize,
    samples: &[ActivationSample],
) -> Result<TrackingReport, EvalError> {
    let project = |s: &ActivationSample| -> f64 {
        s.acts[layer].iter().zip(vector).map(|(a, v)| a * v).sum()
    };
    let gold: Vec<f64> = samples
        .iter()
        .filter(|s| s.class == TileType::Gold)
        .map(project)
        .collect();
    let mold: Vec<f64> = samples
        .iter()
        .filter(|s| s.class == TileType::Mold)
        .map(project)
        .collect();
    if gold.is_empty() {
        return Err(EvalError::MissingClass(TileType::Gold));
    }
    if mold.is_empty() {
        return Err(EvalError::MissingClass(TileType::Mold));
    }
    let pooled: Vec<f64> = gold.iter().chain(&mold).cloned().collect();
    let mean = stats::mean(&pooled);
    let sd = stats::variance(&pooled).sqrt();
    let d = stats::cohens_d(&gold, &mold);
    let standardize = |xs: &[f64]| -> Vec<f64> {
        if sd > 0.0 {
            xs.iter().map(|x| (x - mean) / sd).collect()
        } else {
            vec![0.0; xs.len()]
        }
    };
    Ok(TrackingReport {
        condition: condition.to_string(),
        vector: vector_name.to_string(),
        layer,
        gold_projections: standardize(&gold),
        mold_projections: standardize(&mold),
        cohens_d: d,
        degenerate: d.is_none(),
    })
}

/// Capture + track in one step for a batch of labeled transcripts.
pub fn track_transcripts<T: Scalar>(
    model: &PolicyModel<T>,
    condition: &str,
    vector_name: &str,
    vector: &[f64],
    layer: usize,
    transcripts: &[LabeledTranscript],
) -> Result<TrackingReport, EvalError> {
    let samples = vectors::capture_activations(model, transcripts)?;
    projection_tracking(condition, vector_name, vector, layer, &samples)
}
