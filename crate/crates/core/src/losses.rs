//! Margin-penalty softmax losses, feature distillation, and the adaptive
//! class-center machinery.
//!
//! Every loss returns its mean value over the batch together with the exact
//! gradient with respect to the *unnormalized* feature rows. Features and
//! centers are l2-normalized inside the losses; callers hand over raw network
//! outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{clip01, cosine, dot, l2_normalize, norm, Mat, EPS_NORM};

/// Margin-penalty parameters: additive angular margin `m1` (radians),
/// additive cosine margin `m2`, and logit scale `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub m1: f64,
    pub m2: f64,
    pub s: f64,
}

impl MarginConfig {
    pub fn arcface(m1: f64, s: f64) -> Self {
        MarginConfig { m1, m2: 0.0, s }
    }

    pub fn cosface(m2: f64, s: f64) -> Self {
        MarginConfig { m1: 0.0, m2, s }
    }

    /// Plain normalized softmax, no margin.
    pub fn plain(s: f64) -> Self {
        MarginConfig { m1: 0.0, m2: 0.0, s }
    }

    pub fn is_arcface(&self) -> bool {
        self.m1 > 0.0 && self.m2 == 0.0
    }

    pub fn is_cosface(&self) -> bool {
        self.m1 == 0.0 && self.m2 > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.m1.is_finite() && self.m2.is_finite() && self.s.is_finite();
        if !finite || self.m1 < 0.0 || self.m2 < 0.0 || self.s <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "margin requires m1 >= 0, m2 >= 0, s > 0 (got m1={}, m2={}, s={})",
                self.m1, self.m2, self.s
            )));
        }
        Ok(())
    }
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig::arcface(0.5, 64.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean loss over the batch.
    pub value: f64,
    /// Gradient of `value` with respect to the raw feature rows (N x d).
    pub grad_features: Mat,
    /// Per-sample logits after the margin is applied (N x c), when the loss has any.
    pub logits: Option<Mat>,
}

/// Weights of the task loss (`lambda`) and the distillation loss (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedLossConfig {
    pub lambda: f64,
    pub beta: f64,
}

impl CombinedLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be non-negative (lambda={}, beta={})",
                self.lambda, self.beta
            )));
        }
        Ok(())
    }
}

/// Which momentum rule drives the center update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Clipped student/teacher feature cosine.
    Plain,
    /// The plain value multiplied by the center/teacher cosine, then clipped.
    HardWeighted,
}

/// Target-class logit before scaling, `cos(theta + m1) - m2`, and its
/// derivative with respect to `cos(theta)`.
///
/// `cos(theta + m1)` is expanded as `cos(theta)cos(m1) - sin(theta)sin(m1)`
/// with `sin(theta) = sqrt(1 - cos^2)`; there is no special handling for
/// `theta + m1 > pi`. At `sin(theta) == 0` the angle is not differentiable
/// and the `sin` term's derivative is taken as zero.
fn target_cosine(cos_t: f64, cfg: &MarginConfig) -> (f64, f64) {
    if cfg.m1 == 0.0 {
        return (cos_t - cfg.m2, 1.0);
    }
    let (sin_m, cos_m) = cfg.m1.sin_cos();
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let value = cos_t * cos_m - sin_t * sin_m - cfg.m2;
    let deriv = if sin_t > EPS_NORM { cos_m + cos_t / sin_t * sin_m } else { cos_m };
    (value, deriv)
}

fn check_batch(features: &Mat, labels: &[usize], centers: &Mat) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::ShapeMismatch("empty feature batch".into()));
    }
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch { expected: features.rows(), found: labels.len() });
    }
    if features.cols() != centers.cols() {
        return Err(Error::DimensionMismatch { expected: centers.cols(), found: features.cols() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= centers.rows()) {
        return Err(Error::LabelOutOfRange { label, classes: centers.rows() });
    }
    Ok(())
}

/// Shared margin-softmax evaluation. Returns the loss and, on request, the
/// gradient with respect to the raw (unnormalized) center rows.
fn margin_softmax(
    features: &Mat,
    labels: &[usize],
    centers: &Mat,
    cfg: &MarginConfig,
    want_center_grad: bool,
) -> Result<(LossOutput, Option<Mat>)> {
    cfg.validate()?;
    check_batch(features, labels, centers)?;
    let (n, d) = features.shape();
    let c = centers.rows();
    let unit_centers = centers.normalized_rows()?;
    let inv_n = 1.0 / n as f64;

    let mut total = 0.0;
    let mut grad = Mat::zeros(n, d);
    let mut logits = Mat::zeros(n, c);
    let mut grad_unit_centers = want_center_grad.then(|| Mat::zeros(c, d));
    let mut dcos = vec![0.0; c];

    for (i, &label) in labels.iter().enumerate() {
        let f = features.row(i);
        let f_norm = norm(f);
        if !f_norm.is_finite() {
            return Err(Error::NonFinite(format!("feature row {i}")));
        }
        if f_norm <= EPS_NORM {
            return Err(Error::ZeroNorm);
        }
        let u: Vec<f64> = f.iter().map(|x| x / f_norm).collect();

        let mut target_deriv = 1.0;
        for j in 0..c {
            let cos_j = dot(&u, unit_centers.row(j));
            let z = if j == label {
                let (t, dt) = target_cosine(cos_j.clamp(-1.0, 1.0), cfg);
                target_deriv = dt;
                cfg.s * t
            } else {
                cfg.s * cos_j
            };
            logits.set(i, j, z);
        }

        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        let loss_i = lse - row[label];
        if !loss_i.is_finite() {
            return Err(Error::NonFinite(format!("loss of sample {i}")));
        }
        total += loss_i;

        // dL_i/dcos_j
        for j in 0..c {
            let p = (row[j] - lse).exp();
            dcos[j] = if j == label { cfg.s * (p - 1.0) * target_deriv } else { cfg.s * p };
        }

        // g = sum_j dL/dcos_j * w_j, then project out the radial component of f.
        let mut g = vec![0.0; d];
        for (j, &dc) in dcos.iter().enumerate() {
            for (gk, wk) in g.iter_mut().zip(unit_centers.row(j)) {
                *gk += dc * wk;
            }
        }
        let radial = dot(&g, &u);
        for ((out, gk), uk) in grad.row_mut(i).iter_mut().zip(&g).zip(&u) {
            *out = (gk - radial * uk) / f_norm * inv_n;
        }

        if let Some(gc) = grad_unit_centers.as_mut() {
            for (j, &dc) in dcos.iter().enumerate() {
                for (out, uk) in gc.row_mut(j).iter_mut().zip(&u) {
                    *out += dc * uk * inv_n;
                }
            }
        }
    }

    let grad_centers = match grad_unit_centers {
        Some(gu) => {
            let mut raw = Mat::zeros(c, d);
            for j in 0..c {
                let w_norm = norm(centers.row(j));
                let w = unit_centers.row(j);
                let radial = dot(gu.row(j), w);
                for ((out, g), wk) in raw.row_mut(j).iter_mut().zip(gu.row(j)).zip(w) {
                    *out = (g - radial * wk) / w_norm;
                }
            }
            Some(raw)
        }
        None => None,
    };

    let out = LossOutput { value: total * inv_n, grad_features: grad, logits: Some(logits) };
    Ok((out, grad_centers))
}

/// Margin-penalty softmax loss (ArcFace / CosFace family) of `features`
/// against class `centers`. Centers are treated as constants.
pub fn aml_loss(
    features: &Mat,
    labels: &[usize],
    centers: &Mat,
    cfg: &MarginConfig,
) -> Result<LossOutput> {
    margin_softmax(features, labels, centers, cfg, false).map(|(out, _)| out)
}

/// [`aml_loss`] plus the gradient with respect to the raw center rows, for
/// the regime where the classifier is trained jointly with the network.
pub fn aml_loss_with_center_grad(
    features: &Mat,
    labels: &[usize],
    centers: &Mat,
    cfg: &MarginConfig,
) -> Result<(LossOutput, Mat)> {
    let (out, gc) = margin_softmax(features, labels, centers, cfg, true)?;
    Ok((out, gc.expect("center gradient requested")))
}

/// Margin-penalty softmax of student features against frozen teacher centers.
///
/// Same formula as [`aml_loss`]; only the student features receive gradient.
pub fn amldistill_loss(
    student_features: &Mat,
    labels: &[usize],
    teacher_centers: &Mat,
    cfg: &MarginConfig,
) -> Result<LossOutput> {
    aml_loss(student_features, labels, teacher_centers, cfg)
}

/// Mean squared feature distance `(1/N) sum_i |f_s - f_t|^2`.
pub fn mse_kd_loss(student_features: &Mat, teacher_features: &Mat) -> Result<LossOutput> {
    if student_features.shape() != teacher_features.shape() {
        return Err(Error::DimensionMismatch {
            expected: student_features.as_slice().len(),
            found: teacher_features.as_slice().len(),
        });
    }
    let (n, d) = student_features.shape();
    if n == 0 {
        return Err(Error::ShapeMismatch("empty feature batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Mat::zeros(n, d);
    let mut total = 0.0;
    for ((g, s), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(student_features.as_slice())
        .zip(teacher_features.as_slice())
    {
        let diff = s - t;
        total += diff * diff;
        *g = 2.0 * inv_n * diff;
    }
    Ok(LossOutput { value: total * inv_n, grad_features: grad, logits: None })
}

/// `lambda * main + beta * kd`, values and gradients alike.
pub fn combined_loss(
    main: &LossOutput,
    kd: &LossOutput,
    cfg: &CombinedLossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    if main.grad_features.shape() != kd.grad_features.shape() {
        return Err(Error::DimensionMismatch {
            expected: main.grad_features.as_slice().len(),
            found: kd.grad_features.as_slice().len(),
        });
    }
    let mut grad = main.grad_features.clone();
    grad.scale(cfg.lambda);
    grad.add_scaled(&kd.grad_features, cfg.beta)?;
    Ok(LossOutput {
        value: cfg.lambda * main.value + cfg.beta * kd.value,
        grad_features: grad,
        logits: main.logits.clone(),
    })
}

/// EMA momentum from the student's ability to imitate the teacher:
/// the student/teacher cosine clipped to [0, 1].
pub fn compute_alpha(student_feature: &[f64], teacher_feature: &[f64]) -> Result<f64> {
    clip01(cosine(student_feature, teacher_feature)?)
}

/// Momentum weighted by sample difficulty: the student/teacher cosine times
/// the cosine between the class center before this update and the teacher
/// feature, clipped to [0, 1].
pub fn compute_alpha_prime(
    student_feature: &[f64],
    teacher_feature: &[f64],
    prev_center: &[f64],
) -> Result<f64> {
    let imitation = cosine(student_feature, teacher_feature)?;
    let easiness = cosine(prev_center, teacher_feature)?;
    clip01(imitation * easiness)
}

/// Pre-normalization EMA blend `alpha * center + (1 - alpha) * teacher_dir`.
pub fn ema_blend(center: &[f64], teacher_dir: &[f64], alpha: f64) -> Vec<f64> {
    center
        .iter()
        .zip(teacher_dir)
        .map(|(w, t)| alpha * w + (1.0 - alpha) * t)
        .collect()
}

/// Class centers refined by exponential moving average of teacher features.
///
/// Rows are kept at unit norm; `iteration` counts completed batch steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterBank {
    centers: Mat,
    iteration: u64,
}

impl CenterBank {
    /// Bank over the given rows, each l2-normalized.
    pub fn new(centers: &Mat) -> Result<Self> {
        if centers.rows() == 0 || centers.cols() == 0 {
            return Err(Error::ShapeMismatch("center bank needs at least one class and dimension".into()));
        }
        Ok(CenterBank { centers: centers.normalized_rows()?, iteration: 0 })
    }

    /// Normalized per-class mean of normalized features. Fails with
    /// `InsufficientSamples` if a class has no samples and `ZeroNorm` if a
    /// class mean cancels out.
    pub fn from_class_means(features: &Mat, labels: &[usize], class_count: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch { expected: features.rows(), found: labels.len() });
        }
        let mut sums = Mat::zeros(class_count, features.cols());
        let mut counts = vec![0usize; class_count];
        for (row, &label) in features.iter_rows().zip(labels) {
            if label >= class_count {
                return Err(Error::LabelOutOfRange { label, classes: class_count });
            }
            let unit = l2_normalize(row)?;
            for (s, u) in sums.row_mut(label).iter_mut().zip(&unit) {
                *s += u;
            }
            counts[label] += 1;
        }
        if let Some(missing) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InsufficientSamples(format!("class {missing} has no samples")));
        }
        CenterBank::new(&sums)
    }

    pub fn centers(&self) -> &Mat {
        &self.centers
    }

    pub fn center(&self, class: usize) -> &[f64] {
        self.centers.row(class)
    }

    pub fn class_count(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    /// Number of completed batch steps.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Moves the center of `label` toward the normalized teacher feature:
    /// `w <- normalize(alpha * w + (1 - alpha) * normalize(f_t))`.
    ///
    /// `alpha == 1` leaves the row untouched. If the blend cancels to zero
    /// the row is left untouched and `ZeroNorm` is returned.
    pub fn update_center(&mut self, label: usize, teacher_feature: &[f64], alpha: f64) -> Result<()> {
        if label >= self.class_count() {
            return Err(Error::LabelOutOfRange { label, classes: self.class_count() });
        }
        if teacher_feature.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: teacher_feature.len() });
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidSpec(format!("EMA momentum {alpha} outside [0, 1]")));
        }
        let teacher_dir = l2_normalize(teacher_feature)?;
        if alpha == 1.0 {
            return Ok(());
        }
        let blended = ema_blend(self.center(label), &teacher_dir, alpha);
        let updated = l2_normalize(&blended)?;
        self.centers.row_mut(label).copy_from_slice(&updated);
        Ok(())
    }

    fn advance(&mut self) {
        self.iteration += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaDistillOutput {
    /// Margin-softmax loss against the refreshed centers.
    pub loss: LossOutput,
    /// Momentum used for each sample, in batch order.
    pub alphas: Vec<f64>,
    /// Samples whose update cancelled to a zero vector and was skipped.
    pub skipped: Vec<usize>,
}

/// One adaptive distillation step.
///
/// Samples are visited in ascending index order. Each computes its momentum
/// (from the center as left by the previous sample) and updates its class
/// center; the loss is then evaluated against the updated bank and the
/// bank's iteration counter advances by one. On error the bank is unchanged.
pub fn adadistill_step(
    student_features: &Mat,
    teacher_features: &Mat,
    labels: &[usize],
    bank: &mut CenterBank,
    cfg: &MarginConfig,
    mode: AlphaMode,
) -> Result<AdaDistillOutput> {
    if student_features.shape() != teacher_features.shape() {
        return Err(Error::ShapeMismatch(format!(
            "student {:?} vs teacher {:?}",
            student_features.shape(),
            teacher_features.shape()
        )));
    }
    check_batch(student_features, labels, bank.centers())?;

    let mut next = bank.clone();
    let mut alphas = Vec::with_capacity(labels.len());
    let mut skipped = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let fs = student_features.row(i);
        let ft = teacher_features.row(i);
        let alpha = match mode {
            AlphaMode::Plain => compute_alpha(fs, ft)?,
            AlphaMode::HardWeighted => compute_alpha_prime(fs, ft, next.center(label))?,
        };
        match next.update_center(label, ft, alpha) {
            Ok(()) => {}
            Err(Error::ZeroNorm) if norm(ft) > EPS_NORM => skipped.push(i),
            Err(e) => return Err(e),
        }
        alphas.push(alpha);
    }
    let loss = amldistill_loss(student_features, labels, next.centers(), cfg)?;
    next.advance();
    *bank = next;
    Ok(AdaDistillOutput { loss, alphas, skipped })
}
