//! Geometric analyses over concept vectors and class means: per-layer
//! cosine reports, centered tile-mean cosines, logit-lens readout through
//! the unembedding, PCA over vector sets, and checkpoint-series alignment
//! against a fixed reference axis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::codec::Vocab;
use crate::model::{PolicyModel, Scalar};
use crate::vectors::ConceptVector;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("cosine undefined at every layer (zero vectors)")]
    AllLayersDegenerate,
    #[error("layer dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("centered tile mean for {0} has zero norm")]
    ZeroCenteredMean(String),
    #[error("top-{0} exceeds vocabulary size {1}")]
    KTooLarge(usize, usize),
    #[error("PCA needs at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("PCA input has zero variance (all vectors identical)")]
    ZeroVariance,
    #[error("reference axis has zero norm")]
    ZeroAxis,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity; None when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot(a, b) / (na * nb))
    }
}

/// Per-layer cosines between two vector families plus the average and
/// minimum reductions. Degenerate layers are skipped and listed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CosineReport {
    pub per_layer: Vec<Option<f64>>,
    pub avg: f64,
    pub min: f64,
    pub argmin: usize,
    pub skipped: Vec<usize>,
}

pub fn cosine_report(a: &ConceptVector, b: &ConceptVector) -> Result<CosineReport, GeometryError> {
    if a.n_layers() != b.n_layers() {
        return Err(GeometryError::DimMismatch(a.n_layers(), b.n_layers()));
    }
    let mut per_layer = Vec::with_capacity(a.n_layers());
    let mut skipped = Vec::new();
    for l in 0..a.n_layers() {
        let c = cosine(a.at(l), b.at(l));
        if c.is_none() {
            skipped.push(l);
        }
        per_layer.push(c);
    }
    let defined: Vec<(usize, f64)> = per_layer
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|v| (i, v)))
        .collect();
    if defined.is_empty() {
        return Err(GeometryError::AllLayersDegenerate);
    }
    let avg = defined.iter().map(|&(_, v)| v).sum::<f64>() / defined.len() as f64;
    let (argmin, min) = defined
        .iter()
        .cloned()
        .fold((defined[0].0, f64::INFINITY), |acc, (i, v)| {
            if v < acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    Ok(CosineReport {
        per_layer,
        avg,
        min,
        argmin,
        skipped,
    })
}

/// Pairwise cosines of the three class means after subtracting their grand
/// mean. A pair is None when either centered mean has zero norm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TileMeanCosines {
    pub mold_gold: Option<f64>,
    pub mold_path: Option<f64>,
    pub gold_path: Option<f64>,
}

/// `means` are the Mold, Gold, Path class means at one layer.
pub fn centered_tile_cosines(
    mold: &[f64],
    gold: &[f64],
    path: &[f64],
) -> Result<TileMeanCosines, GeometryError> {
    let d = mold.len();
    let mut grand = vec![0.0; d];
    for j in 0..d {
        grand[j] = (mold[j] + gold[j] + path[j]) / 3.0;
    }
    let center = |v: &[f64]| -> Vec<f64> { v.iter().zip(&grand).map(|(x, g)| x - g).collect() };
    let cm = center(mold);
    let cg = center(gold);
    let cp = center(path);
    let out = TileMeanCosines {
        mold_gold: cosine(&cm, &cg),
        mold_path: cosine(&cm, &cp),
        gold_path: cosine(&cg, &cp),
    };
    if out.mold_gold.is_none() && out.mold_path.is_none() && out.gold_path.is_none() {
        return Err(GeometryError::ZeroCenteredMean("all pairs".into()));
    }
    Ok(out)
}

/// Default depth-fraction layer for logit-lens readout.
pub fn logit_lens_layer(n_layers: usize) -> usize {
    5 * n_layers / 6
}

/// Default depth-fraction layer for tile-mean geometry.
pub fn tile_mean_layer(n_layers: usize) -> usize {
    2 * n_layers / 3
}

/// Tokens most promoted and most suppressed by a direction, read through
/// the unembedding. Ties resolve to the lower token id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitLensReport {
    pub promoted: Vec<(u32, f64)>,
    pub suppressed: Vec<(u32, f64)>,
}

pub fn logit_lens<T: Scalar>(
    vector: &[f64],
    model: &PolicyModel<T>,
    k: usize,
) -> Result<LogitLensReport, GeometryError> {
    let vocab_size = model.config.vocab_size;
    if k > vocab_size {
        return Err(GeometryError::KTooLarge(k, vocab_size));
    }
    if vector.len() != model.config.d_model {
        return Err(GeometryError::DimMismatch(vector.len(), model.config.d_model));
    }
    let wu = model.unembed.as_ref().unwrap_or(&model.tok_emb);
    let mut scores: Vec<(u32, f64)> = (0..vocab_size)
        .map(|t| {
            let row = wu.row(t);
            let s = row
                .iter()
                .zip(vector)
                .map(|(w, v)| w.as_f64() * v)
                .sum::<f64>();
            (t as u32, s)
        })
        .collect();
    let mut promoted = scores.clone();
    promoted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scores.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(LogitLensReport {
        promoted: promoted.into_iter().take(k).collect(),
        suppressed: scores.into_iter().take(k).collect(),
    })
}

/// Renders a logit-lens report as TSV rows (kind, rank, token, score).
pub fn logit_lens_tsv(report: &LogitLensReport, vocab: &Vocab) -> String {
    let mut out = String::from("kind\trank\ttoken\tscore\n");
    for (i, (t, s)) in report.promoted.iter().enumerate() {
        out.push_str(&format!("promoted\t{}\t{}\t{}\n", i + 1, vocab.token_string(*t), s));
    }
    for (i, (t, s)) in report.suppressed.iter().enumerate() {
        out.push_str(&format!(
            "suppressed\t{}\t{}\t{}\n",
            i + 1,
            vocab.token_string(*t),
            s
        ));
    }
    out
}

/// Principal components of a small vector set via eigendecomposition of
/// the covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaResult {
    /// n_components x d, orthonormal, sign fixed so each component's
    /// largest-magnitude coordinate is positive.
    pub components: Vec<Vec<f64>>,
    /// Fraction of total variance captured per component, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
    /// n_vectors x n_components projections of the centered inputs.
    pub loadings: Vec<Vec<f64>>,
    /// Sum of all eigenvalues (total variance), for reconstruction checks.
    pub total_variance: f64,
}

pub fn pca(vectors: &[Vec<f64>], n_components: usize) -> Result<PcaResult, GeometryError> {
    let n = vectors.len();
    if n < 2 {
        return Err(GeometryError::TooFewVectors(n));
    }
    let d = vectors[0].len();
    let n_components = n_components.min(d).min(n);
    let mut mean = vec![0.0; d];
    for v in vectors {
        for j in 0..d {
            mean[j] += v[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    // covariance with 1/(n-1)
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for c in &centered {
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n as f64 - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = cov.symmetric_eigen();
    let total_variance: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    if total_variance <= 1e-300 {
        return Err(GeometryError::ZeroVariance);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut components = Vec::with_capacity(n_components);
    let mut ratios = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let mut comp: Vec<f64> = (0..d).map(|j| eig.eigenvectors[(j, idx)]).collect();
        // sign convention: the largest-magnitude coordinate is positive
        let mut biggest = 0;
        for j in 0..d {
            if comp[j].abs() > comp[biggest].abs() {
                biggest = j;
            }
        }
        if comp[biggest] < 0.0 {
            for v in &mut comp {
                *v = -*v;
            }
        }
        ratios.push(eig.eigenvalues[idx].max(0.0) / total_variance);
        components.push(comp);
    }
    let loadings = centered
        .iter()
        .map(|c| components.iter().map(|comp| dot(c, comp)).collect())
        .collect();
    Ok(PcaResult {
        components,
        explained_variance_ratio: ratios,
        loadings,
        total_variance,
    })
}

/// One checkpoint's contribution to a training-series alignment analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub step: u64,
    /// Concept vector at the analysis layer.
    pub vector: Vec<f64>,
    /// Gold and Mold class means at the same layer.
    pub mean_gold: Vec<f64>,
    pub mean_mold: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesRow {
    pub step: u64,
    /// cos(vector at this step, reference axis)
    pub cos_axis: f64,
    /// <mean_gold - mean_mold, unit reference axis>
    pub projection_separation: f64,
}

/// Alignment of per-checkpoint vectors and class-mean separations with a
/// fixed reference axis. Points are reported sorted by step.
pub fn axis_alignment_series(
    points: &[SeriesPoint],
    axis: &[f64],
) -> Result<Vec<SeriesRow>, GeometryError> {
    let axis_norm = norm(axis);
    if axis_norm == 0.0 {
        return Err(GeometryError::ZeroAxis);
    }
    let mut sorted: Vec<&SeriesPoint> = points.iter().collect();
    sorted.sort_by_key(|p| p.step);
    sorted
        .into_iter()
        .map(|p| {
            if p.vector.len() != axis.len() {
                return Err(GeometryError::DimMismatch(p.vector.len(), axis.len()));
            }
            let cos_axis = cosine(&p.vector, axis).unwrap_or(0.0);
            let delta: Vec<f64> = p
                .mean_gold
                .iter()
                .zip(&p.mean_mold)
                .map(|(g, m)| g - m)
                .collect();
            Ok(SeriesRow {
                step: p.step,
                cos_axis,
                projection_separation: dot(&delta, axis) / axis_norm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::TileType;
    use crate::vectors::ExtractionKind;

    fn cv(class: TileType, layers: Vec<Vec<f64>>) -> ConceptVector {
        let norms = layers
            .iter()
            .map(|l| l.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        ConceptVector {
            class,
            kind: ExtractionKind::Eq1,
            checkpoint: "t".into(),
            layers,
            norms,
        }
    }

    #[test]
    fn antipodal_vectors_have_min_and_avg_minus_one() {
        let a = cv(TileType::Mold, vec![vec![1.0, 2.0], vec![0.5, -1.0]]);
        let b = cv(
            TileType::Gold,
            vec![vec![-1.0, -2.0], vec![-0.5, 1.0]],
        );
        let r = cosine_report(&a, &b).unwrap();
        assert!((r.avg + 1.0).abs() < 1e-12);
        assert!((r.min + 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_have_zero_cosines() {
        let a = cv(TileType::Mold, vec![vec![1.0, 0.0]]);
        let b = cv(TileType::Gold, vec![vec![0.0, 3.0]]);
        let r = cosine_report(&a, &b).unwrap();
        assert_eq!(r.per_layer[0], Some(0.0));
    }

    #[test]
    fn zero_layers_are_skipped_and_flagged() {
        let a = cv(TileType::Mold, vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        let b = cv(TileType::Gold, vec![vec![1.0, 1.0], vec![1.0, 0.0]]);
        let r = cosine_report(&a, &b).unwrap();
        assert_eq!(r.skipped, vec![0]);
        assert_eq!(r.per_layer[0], None);
        assert_eq!(r.argmin, 1);
        let z = cv(TileType::Mold, vec![vec![0.0]]);
        let w = cv(TileType::Gold, vec![vec![1.0]]);
        assert!(matches!(
            cosine_report(&z, &w),
            Err(GeometryError::AllLayersDegenerate)
        ));
    }

    #[test]
    fn cosine_report_is_scale_invariant() {
        let a = cv(TileType::Mold, vec![vec![1.0, 2.0], vec![3.0, -1.0]]);
        let b = cv(TileType::Gold, vec![vec![-2.0, 1.0], vec![0.5, 0.5]]);
        let scaled = cv(
            TileType::Mold,
            vec![vec![7.0, 14.0], vec![0.3, -0.1]],
        );
        let r1 = cosine_report(&a, &b).unwrap();
        let r2 = cosine_report(&scaled, &b).unwrap();
        for (x, y) in r1.per_layer.iter().zip(&r2.per_layer) {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn three_symmetric_unit_vectors_give_minus_half() {
        // 120-degree separated unit vectors in the plane
        let at = |deg: f64| {
            let r = deg.to_radians();
            vec![r.cos(), r.sin()]
        };
        let r = centered_tile_cosines(&at(90.0), &at(210.0), &at(330.0)).unwrap();
        assert!((r.mold_gold.unwrap() + 0.5).abs() < 1e-9);
        assert!((r.mold_path.unwrap() + 0.5).abs() < 1e-9);
        assert!((r.gold_path.unwrap() + 0.5).abs() < 1e-9);
    }

    #[test]
    fn antipodal_means_with_zero_path_center_to_minus_one() {
        let mold = vec![2.0, 0.0];
        let gold = vec![-2.0, 0.0];
        let path = vec![0.0, 0.0];
        let r = centered_tile_cosines(&mold, &gold, &path).unwrap();
        assert!((r.mold_gold.unwrap() + 1.0).abs() < 1e-12);
        // the zero-centered Path mean leaves its pairs undefined
        assert!(r.mold_path.is_none());
        assert!(r.gold_path.is_none());
    }

    #[test]
    fn centered_means_sum_to_zero() {
        let mut rng = crate::rng::stream_rng(3, 80);
        use rand::Rng;
        for _ in 0..20 {
            let d = 6;
            let gen = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                (0..d).map(|_| r.gen::<f64>() * 4.0 - 2.0).collect()
            };
            let m = gen(&mut rng);
            let g = gen(&mut rng);
            let p = gen(&mut rng);
            let mut grand = vec![0.0; d];
            for j in 0..d {
                grand[j] = (m[j] + g[j] + p[j]) / 3.0;
            }
            for j in 0..d {
                let sum = (m[j] - grand[j]) + (g[j] - grand[j]) + (p[j] - grand[j]);
                assert!(sum.abs() < 1e-12);
            }
        }
    }

    fn lens_model(seed: u64) -> PolicyModel<f64> {
        PolicyModel::init(&crate::model::ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            context_len: 16,
            seed,
            ..crate::model::ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_vector_gives_deterministic_tie_order() {
        let model = lens_model(1);
        let v = vec![0.0; 8];
        let r = logit_lens(&v, &model, 5).unwrap();
        let ids: Vec<u32> = r.promoted.iter().map(|&(t, _)| t).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        for &(_, s) in &r.promoted {
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn basis_vector_promotes_matching_unembedding_row() {
        let mut model = lens_model(2);
        // make token 3's unembedding row align with e3
        let wu = model.unembed.as_mut().unwrap();
        for t in 0..wu.rows {
            for j in 0..8 {
                wu.row_mut(t)[j] = if t == 3 && j == 3 { 5.0 } else { 0.01 * (t + j) as f64 };
            }
        }
        let mut v = vec![0.0; 8];
        v[3] = 1.0;
        let r = logit_lens(&v, &model, 1).unwrap();
        assert_eq!(r.promoted[0].0, 3);
    }

    #[test]
    fn logit_lens_matches_full_sort_oracle_and_negation_swaps() {
        use rand::Rng;
        let model = lens_model(3);
        let mut rng = crate::rng::stream_rng(5, 81);
        for _ in 0..20 {
            let v: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let k = rng.gen_range(1..=model.config.vocab_size);
            let r = logit_lens(&v, &model, k).unwrap();
            // oracle: full sort of all scores
            let wu = model.unembed.as_ref().unwrap();
            let mut scores: Vec<(u32, f64)> = (0..model.config.vocab_size)
                .map(|t| {
                    (
                        t as u32,
                        wu.row(t).iter().zip(&v).map(|(w, x)| w * x).sum::<f64>(),
                    )
                })
                .collect();
            scores.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            assert_eq!(
                r.promoted,
                scores.iter().take(k).cloned().collect::<Vec<_>>()
            );
            // negation swaps promoted and suppressed (scores negate)
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let rn = logit_lens(&neg, &model, k).unwrap();
            let promoted_ids: Vec<u32> = r.promoted.iter().map(|&(t, _)| t).collect();
            let mut neg_suppressed_ids: Vec<u32> =
                rn.suppressed.iter().map(|&(t, _)| t).collect();
            // tie order may differ between ascending and descending sorts;
            // compare as sets of scores
            neg_suppressed_ids.sort_unstable();
            let mut promoted_sorted = promoted_ids.clone();
            promoted_sorted.sort_unstable();
            assert_eq!(promoted_sorted, neg_suppressed_ids);
        }
        assert!(logit_lens(&vec![0.0; 8], &model, 99).is_err());
    }

    #[test]
    fn pca_recovers_a_line_exactly() {
        let w = vec![3.0, -4.0, 0.0];
        let vectors: Vec<Vec<f64>> = (0..6)
            .map(|i| w.iter().map(|x| x * (i as f64 - 2.5)).collect())
            .collect();
        let r = pca(&vectors, 2).unwrap();
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        let c = cosine(&r.components[0], &w).unwrap().abs();
        assert!((c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_components_are_orthonormal_and_ratios_sorted() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(6, 82);
        let vectors: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let r = pca(&vectors, 4).unwrap();
        for i in 0..r.components.len() {
            assert!((norm(&r.components[i]) - 1.0).abs() < 1e-9);
            for j in 0..i {
                assert!(dot(&r.components[i], &r.components[j]).abs() < 1e-9);
            }
        }
        let ratios = &r.explained_variance_ratio;
        for i in 1..ratios.len() {
            assert!(ratios[i] <= ratios[i - 1] + 1e-12);
        }
        assert!(ratios.iter().sum::<f64>() <= 1.0 + 1e-9);
    }

    #[test]
    fn pca_reconstruction_error_equals_dropped_variance() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(7, 83);
        let n = 30;
        let d = 6;
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen::<f64>() * 3.0).collect())
            .collect();
        let keep = 2;
        let r = pca(&vectors, keep).unwrap();
        // recompute centered data
        let mut mean = vec![0.0; d];
        for v in &vectors {
            for j in 0..d {
                mean[j] += v[j] / n as f64;
            }
        }
        let mut residual_ss = 0.0;
        for (v, load) in vectors.iter().zip(&r.loadings) {
            let centered: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
            let mut recon = vec![0.0; d];
            for (c, comp) in load.iter().zip(&r.components) {
                for j in 0..d {
                    recon[j] += c * comp[j];
                }
            }
            for j in 0..d {
                residual_ss += (centered[j] - recon[j]).powi(2);
            }
        }
        let dropped =
            r.total_variance * (1.0 - r.explained_variance_ratio.iter().sum::<f64>());
        let residual_var = residual_ss / (n as f64 - 1.0);
        assert!(
            (residual_var - dropped).abs() < 1e-6 * (1.0 + dropped),
            "residual {residual_var} vs dropped {dropped}"
        );
    }

    #[test]
    fn pca_degenerate_set_is_an_error() {
        let vectors = vec![vec![1.0, 1.0]; 5];
        assert!(matches!(pca(&vectors, 1), Err(GeometryError::ZeroVariance)));
    }

    #[test]
    fn planted_direction_is_recovered() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(8, 84);
        let d = 12;
        let planted: Vec<f64> = (0..d).map(|j| ((j * j + 1) as f64).sin()).collect();
        let vectors: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let t = rng.gen::<f64>() * 10.0 - 5.0;
                (0..d)
                    .map(|j| planted[j] * t + (rng.gen::<f64>() - 0.5) * 0.01)
                    .collect()
            })
            .collect();
        let r = pca(&vectors, 1).unwrap();
        assert!(cosine(&r.components[0], &planted).unwrap().abs() > 0.99);
    }

    #[test]
    fn series_hand_cases() {
        let e = vec![1.0, 0.0];
        let points = vec![
            SeriesPoint {
                step: 20,
                vector: vec![1.0, 0.0],
                mean_gold: vec![2.0, 0.0],
                mean_mold: vec![-1.0, 0.0],
            },
            SeriesPoint {
                step: 10,
                vector: vec![0.0, 1.0],
                mean_gold: vec![0.0, 5.0],
                mean_mold: vec![0.0, 1.0],
            },
        ];
        let rows = axis_alignment_series(&points, &e).unwrap();
        // sorted by step
        assert_eq!(rows[0].step, 10);
        assert_eq!(rows[1].step, 20);
        // final-step vector equals the axis: cosine 1
        assert!((rows[1].cos_axis - 1.0).abs() < 1e-12);
        assert!((rows[1].projection_separation - 3.0).abs() < 1e-12);
        // orthogonal point: all zeros
        assert_eq!(rows[0].cos_axis, 0.0);
        assert_eq!(rows[0].projection_separation, 0.0);
        assert!(matches!(
            axis_alignment_series(&points, &[0.0, 0.0]),
            Err(GeometryError::ZeroAxis)
        ));
    }
}
