//! Verification and identification metrics over cosine scores.

use serde::{Deserialize, Serialize};

use crate::data::PairList;
use crate::error::{Error, Result};
use crate::numkit::{cosine, l2_normalize, Mat};

/// Genuine (same identity) and impostor (different identity) scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        if genuine.iter().chain(&impostor).any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("score".into()));
        }
        Ok(ScoreSet { genuine, impostor })
    }

    fn require_both(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::EmptyScores);
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.genuine.len() + self.impostor.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Pairs with score >= threshold are accepted.
    pub threshold: f64,
    pub tar: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarAtFar {
    pub far_target: f64,
    pub point: RocPoint,
    /// Fewer than `1 / far_target` impostor scores: the target cannot be
    /// resolved and the operating point is only indicative.
    pub unreliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationAccuracy {
    pub accuracy: f64,
    pub threshold: f64,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Number of entries of ascending `v` that are `>= t`.
fn count_at_least(v: &[f64], t: f64) -> usize {
    v.len() - v.partition_point(|&x| x < t)
}

/// Cosine score of every pair, in pair order.
pub fn score_pairs(embeddings: &Mat, pairs: &PairList) -> Result<ScoreSet> {
    let n = embeddings.rows();
    let score = |&(i, j): &(usize, usize)| -> Result<f64> {
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
        }
        cosine(embeddings.row(i), embeddings.row(j))
    };
    let genuine = pairs.genuine.iter().map(score).collect::<Result<Vec<_>>>()?;
    let impostor = pairs.impostor.iter().map(score).collect::<Result<Vec<_>>>()?;
    ScoreSet::new(genuine, impostor)
}

/// Best single-threshold pair classification accuracy.
///
/// Candidate thresholds are the midpoints between adjacent distinct scores
/// plus an accept-all sentinel (`-1` or lower) and a reject-all sentinel
/// (just above `max(1, max score)`). Ties go to the smaller threshold.
pub fn verification_accuracy(scores: &ScoreSet) -> Result<VerificationAccuracy> {
    scores.require_both()?;
    let genuine = sorted(&scores.genuine);
    let impostor = sorted(&scores.impostor);
    let mut distinct = sorted(&[scores.genuine.as_slice(), scores.impostor.as_slice()].concat());
    distinct.dedup();

    let low = distinct[0].min(-1.0);
    let high = distinct[distinct.len() - 1].max(1.0).next_up();
    let candidates = std::iter::once(low)
        .chain(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])))
        .chain(std::iter::once(high));

    let total = scores.total() as f64;
    let mut best = VerificationAccuracy { accuracy: -1.0, threshold: low };
    let mut best_correct = 0usize;
    for t in candidates {
        let correct = count_at_least(&genuine, t) + (impostor.len() - count_at_least(&impostor, t));
        if best.accuracy < 0.0 || correct > best_correct {
            best_correct = correct;
            best = VerificationAccuracy { accuracy: correct as f64 / total, threshold: t };
        }
    }
    Ok(best)
}

/// TAR at the most permissive threshold whose empirical FAR does not exceed
/// `far_target`.
///
/// With impostors sorted descending and `k = floor(far_target * n)`, the
/// threshold sits just above the `(k+1)`-th highest impostor score, so at
/// most `k` impostors are accepted. When `k >= n` every pair is accepted.
pub fn tar_at_far(scores: &ScoreSet, far_target: f64) -> Result<TarAtFar> {
    scores.require_both()?;
    if !(far_target > 0.0 && far_target <= 1.0) {
        return Err(Error::InvalidConfig(format!("FAR target {far_target} outside (0, 1]")));
    }
    let n_imp = scores.impostor.len();
    let product = far_target * n_imp as f64;
    // small slack so that e.g. 0.001 * 1000 is not floored to 0
    let allowed = (product + 1e-9).floor() as usize;

    let mut impostor = sorted(&scores.impostor);
    impostor.reverse();
    let threshold = if allowed >= n_imp {
        impostor[n_imp - 1].min(scores.genuine.iter().copied().fold(f64::INFINITY, f64::min))
    } else {
        impostor[allowed].next_up()
    };
    let genuine = sorted(&scores.genuine);
    let accepted_imp = impostor.iter().filter(|&&s| s >= threshold).count();
    Ok(TarAtFar {
        far_target,
        point: RocPoint {
            threshold,
            tar: count_at_least(&genuine, threshold) as f64 / genuine.len() as f64,
            far: accepted_imp as f64 / n_imp as f64,
        },
        unreliable: product < 1.0,
    })
}

/// ROC points at every distinct score, threshold descending.
pub fn roc_curve(scores: &ScoreSet) -> Result<Vec<RocPoint>> {
    scores.require_both()?;
    let genuine = sorted(&scores.genuine);
    let impostor = sorted(&scores.impostor);
    let mut distinct = sorted(&[scores.genuine.as_slice(), scores.impostor.as_slice()].concat());
    distinct.dedup();
    Ok(distinct
        .iter()
        .rev()
        .map(|&t| RocPoint {
            threshold: t,
            tar: count_at_least(&genuine, t) as f64 / genuine.len() as f64,
            far: count_at_least(&impostor, t) as f64 / impostor.len() as f64,
        })
        .collect())
}

/// Fraction of probes whose most similar gallery entry (cosine, ties to the
/// lowest gallery index) has the probe's label.
pub fn rank1_identification(
    probe_embeddings: &Mat,
    probe_labels: &[usize],
    gallery_embeddings: &Mat,
    gallery_labels: &[usize],
) -> Result<f64> {
    if gallery_embeddings.rows() == 0 {
        return Err(Error::EmptyGallery);
    }
    if probe_labels.len() != probe_embeddings.rows() {
        return Err(Error::DimensionMismatch { expected: probe_embeddings.rows(), found: probe_labels.len() });
    }
    if gallery_labels.len() != gallery_embeddings.rows() {
        return Err(Error::DimensionMismatch { expected: gallery_embeddings.rows(), found: gallery_labels.len() });
    }
    if probe_labels.is_empty() {
        return Err(Error::InsufficientSamples("no probes".into()));
    }
    let gallery = gallery_embeddings.normalized_rows()?;
    let mut hits = 0usize;
    for (probe, &label) in probe_embeddings.iter_rows().zip(probe_labels) {
        let p = l2_normalize(probe)?;
        if p.len() != gallery.cols() {
            return Err(Error::DimensionMismatch { expected: gallery.cols(), found: p.len() });
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (g, row) in gallery.iter_rows().enumerate() {
            let s: f64 = p.iter().zip(row).map(|(a, b)| a * b).sum();
            if s > best.0 {
                best = (s, g);
            }
        }
        if gallery_labels[best.1] == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / probe_labels.len() as f64)
}

/// Same-class sample/sample and sample/center cosine distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSampleReport {
    pub sample_sample: Vec<f64>,
    pub sample_center: Vec<f64>,
    pub mean_sample_sample: f64,
    pub mean_sample_center: f64,
    /// Classes whose center is undefined (zero vector) and were excluded.
    pub degenerate_classes: Vec<usize>,
}

/// Compares matching samples with each other against matching samples with
/// their class center. Without explicit `centers`, each class center is the
/// normalized mean of its normalized samples.
pub fn center_vs_sample_distributions(
    embeddings: &Mat,
    labels: &[usize],
    centers: Option<&Mat>,
) -> Result<CenterSampleReport> {
    if labels.len() != embeddings.rows() {
        return Err(Error::DimensionMismatch { expected: embeddings.rows(), found: labels.len() });
    }
    let class_count = match centers {
        Some(c) => c.rows(),
        None => labels.iter().max().map_or(0, |m| m + 1),
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        if l >= class_count {
            return Err(Error::LabelOutOfRange { label: l, classes: class_count });
        }
        members[l].push(i);
    }
    if let Some(class) = members.iter().position(|m| m.len() == 1) {
        return Err(Error::InsufficientSamples(format!("class {class} has a single sample")));
    }
    let units = embeddings.normalized_rows()?;

    let mut report = CenterSampleReport {
        sample_sample: Vec::new(),
        sample_center: Vec::new(),
        mean_sample_sample: f64::NAN,
        mean_sample_center: f64::NAN,
        degenerate_classes: Vec::new(),
    };
    for (class, idx) in members.iter().enumerate().filter(|(_, m)| !m.is_empty()) {
        let center = match centers {
            Some(c) => l2_normalize(c.row(class)),
            None => {
                let mut sum = vec![0.0; units.cols()];
                for &i in idx {
                    sum.iter_mut().zip(units.row(i)).for_each(|(s, u)| *s += u);
                }
                l2_normalize(&sum)
            }
        };
        let center = match center {
            Ok(c) => c,
            Err(Error::ZeroNorm) => {
                report.degenerate_classes.push(class);
                continue;
            }
            Err(e) => return Err(e),
        };
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                report.sample_sample.push(cosine(units.row(i), units.row(j))?);
            }
            report.sample_center.push(cosine(units.row(i), &center)?);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    report.mean_sample_sample = mean(&report.sample_sample);
    report.mean_sample_center = mean(&report.sample_center);
    Ok(report)
}
