use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{generate_pairs, make_batches, Dataset, PairList};
use crate::error::{Error, Result};
use crate::eval::{rank1_identification, score_pairs, tar_at_far, verification_accuracy, TarAtFar};
use crate::losses::{
    adadistill_step, aml_loss_with_center_grad, amldistill_loss, combined_loss, mse_kd_loss, CenterBank,
    LossOutput,
};
use crate::models::MlpNetwork;
use crate::numkit::{Mat, Seed};
use crate::optim::{LrSchedule, SgdParams, SgdState};

use super::config::{CenterInit, ExperimentConfig, Method};

// sub-stream tags for Seed::fork
const STREAM_TEACHER_INIT: u64 = 1;
const STREAM_TEACHER_CLASSIFIER: u64 = 2;
const STREAM_TEACHER_BATCHES: u64 = 3;
const STREAM_STUDENT_INIT: u64 = 4;
const STREAM_STUDENT_CLASSIFIER: u64 = 5;
const STREAM_STUDENT_BATCHES: u64 = 6;

/// Number of metric checkpoints per run.
const CHECKPOINTS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: u64,
    pub loss: f64,
    pub lr: f64,
    pub mean_alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: u64,
    pub verification_accuracy: f64,
}

/// Everything a training run records. `batch_seconds` is wall-clock and the
/// only field that varies between identical runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub alphas: Vec<Vec<f64>>,
    pub batch_seconds: Vec<f64>,
}

impl RunLog {
    /// Mean loss over iterations `[from, to)`.
    pub fn mean_loss(&self, from: usize, to: usize) -> f64 {
        let rows = &self.rows[from..to.min(self.rows.len())];
        rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64
    }

    /// Mean of the logged per-batch alpha over consecutive windows.
    pub fn windowed_mean_alpha(&self, window: usize) -> Vec<f64> {
        let alphas: Vec<f64> = self.rows.iter().filter_map(|r| r.mean_alpha).collect();
        alphas.chunks_exact(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
    }

    /// Writes `iteration,loss,lr,mean_alpha` for every `every`-th iteration
    /// plus the last one.
    pub fn write_csv(&self, path: impl AsRef<Path>, every: u64) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "loss", "lr", "mean_alpha"])?;
        let every = every.max(1);
        let last = self.rows.last().map(|r| r.iteration);
        for row in &self.rows {
            if row.iteration % every == 0 || Some(row.iteration) == last {
                w.write_record([
                    row.iteration.to_string(),
                    row.loss.to_string(),
                    row.lr.to_string(),
                    row.mean_alpha.map(|a| a.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// A trained, frozen teacher and its normalized classifier rows.
#[derive(Debug, Clone)]
pub struct TeacherRun {
    pub network: MlpNetwork,
    pub centers: CenterBank,
    pub log: RunLog,
}

#[derive(Debug, Clone)]
pub struct StudentRun {
    pub network: MlpNetwork,
    /// Final EMA bank for the adaptive methods.
    pub centers: Option<CenterBank>,
    pub log: RunLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub verification_accuracy: f64,
    pub threshold: f64,
    pub tar_at_far: Vec<TarAtFar>,
    pub rank1: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

/// Evaluation pairs for a dataset under `cfg`.
pub fn evaluation_pairs(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<PairList> {
    generate_pairs(dataset, cfg.eval.n_genuine, cfg.eval.n_impostor, cfg.eval.pair_seed)
}

/// Holdout metrics. Rank-1 probes are the holdout samples; the gallery holds
/// one entry per class, the normalized mean of its training-split embeddings.
pub fn evaluate_network(
    network: &MlpNetwork,
    dataset: &Dataset,
    pairs: &PairList,
    far_targets: &[f64],
) -> Result<EvalMetrics> {
    evaluate_embeddings(&network.embed(&dataset.inputs)?, dataset, pairs, far_targets)
}

/// [`evaluate_network`] on precomputed embeddings of every dataset sample.
pub fn evaluate_embeddings(
    embeddings: &Mat,
    dataset: &Dataset,
    pairs: &PairList,
    far_targets: &[f64],
) -> Result<EvalMetrics> {
    let scores = score_pairs(embeddings, pairs)?;
    let acc = verification_accuracy(&scores)?;
    let tars = far_targets.iter().map(|&f| tar_at_far(&scores, f)).collect::<Result<Vec<_>>>()?;

    let train = dataset.train_indices();
    let gallery = CenterBank::from_class_means(
        &embeddings.select_rows(&train),
        &dataset.labels_of(&train),
        dataset.class_count(),
    )?;
    let gallery_labels: Vec<usize> = (0..dataset.class_count()).collect();
    let probes = dataset.holdout_indices();
    let rank1 = rank1_identification(
        &embeddings.select_rows(&probes),
        &dataset.labels_of(&probes),
        gallery.centers(),
        &gallery_labels,
    )?;
    Ok(EvalMetrics {
        verification_accuracy: acc.accuracy,
        threshold: acc.threshold,
        tar_at_far: tars,
        rank1,
        n_genuine: pairs.genuine.len(),
        n_impostor: pairs.impostor.len(),
    })
}

fn holdout_accuracy(network: &MlpNetwork, dataset: &Dataset, pairs: &PairList) -> Result<f64> {
    let embeddings = network.embed(&dataset.inputs)?;
    Ok(verification_accuracy(&score_pairs(&embeddings, pairs)?)?.accuracy)
}

/// Cycles through epochs of seeded batches.
struct BatchStream<'a> {
    dataset: &'a Dataset,
    batch_size: usize,
    seed: Seed,
    epoch: u64,
    batches: Vec<Vec<usize>>,
    next: usize,
}

impl<'a> BatchStream<'a> {
    fn new(dataset: &'a Dataset, batch_size: usize, seed: Seed) -> Result<Self> {
        let batches = make_batches(dataset, batch_size, seed.fork(0))?;
        Ok(BatchStream { dataset, batch_size, seed, epoch: 0, batches, next: 0 })
    }

    fn next_batch(&mut self) -> Result<&[usize]> {
        if self.next == self.batches.len() {
            self.epoch += 1;
            self.batches = make_batches(self.dataset, self.batch_size, self.seed.fork(self.epoch))?;
            self.next = 0;
        }
        self.next += 1;
        Ok(&self.batches[self.next - 1])
    }
}

fn random_classifier(class_count: usize, dim: usize, seed: Seed) -> Result<Mat> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = seed.rng();
    let data = (0..class_count * dim).map(|_| rng.sample(StandardNormal)).collect();
    Mat::from_vec(class_count, dim, data)?.normalized_rows()
}

fn check_finite(iteration: u64, loss: &LossOutput) -> Result<()> {
    if !loss.value.is_finite() || !loss.grad_features.is_finite() {
        return Err(Error::DivergedRun { iteration, detail: format!("loss {}", loss.value) });
    }
    Ok(())
}

fn checkpoint_every(total: u64) -> u64 {
    (total / CHECKPOINTS).max(1)
}

/// Network (plus optional classifier rows) under SGD.
struct Learner {
    network: MlpNetwork,
    classifier: Option<Mat>,
    state: SgdState,
    schedule: LrSchedule,
    momentum: f64,
    weight_decay: f64,
}

impl Learner {
    fn new(network: MlpNetwork, classifier: Option<Mat>, cfg: &ExperimentConfig, total: u64) -> Result<Self> {
        let mut lens: Vec<usize> = network.clone().params_mut().iter().map(|p| p.len()).collect();
        if let Some(c) = &classifier {
            lens.push(c.as_slice().len());
        }
        Ok(Learner {
            network,
            classifier,
            state: SgdState::new(&lens),
            schedule: cfg.lr_schedule.schedule(total)?,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        })
    }

    fn step(&mut self, iteration: u64, grads: &[&[f64]]) -> Result<f64> {
        let lr = self.schedule.lr_at(iteration);
        let hp = SgdParams { lr, momentum: self.momentum, weight_decay: self.weight_decay };
        let mut params = self.network.params_mut();
        if let Some(c) = self.classifier.as_mut() {
            params.push(c.as_mut_slice());
        }
        self.state.step(&mut params, grads, &hp)?;
        Ok(lr)
    }
}

/// Trains the teacher with the margin softmax, classifier rows learned
/// jointly, and returns it frozen with its normalized classifier.
pub fn train_teacher(cfg: &ExperimentConfig, dataset: &Dataset, seed: Seed) -> Result<TeacherRun> {
    cfg.validate()?;
    let total = cfg.teacher_iterations();
    let pairs = evaluation_pairs(cfg, dataset)?;
    let network = MlpNetwork::init(&cfg.teacher_spec, seed.fork(STREAM_TEACHER_INIT))?;
    let classifier = random_classifier(
        dataset.class_count(),
        cfg.teacher_spec.output_dim(),
        seed.fork(STREAM_TEACHER_CLASSIFIER),
    )?;
    let mut learner = Learner::new(network, Some(classifier), cfg, total)?;
    let mut batches = BatchStream::new(dataset, cfg.batch_size, seed.fork(STREAM_TEACHER_BATCHES))?;
    let mut log = RunLog::default();
    let every = checkpoint_every(total);

    for iteration in 0..total {
        let started = Instant::now();
        let batch = batches.next_batch()?.to_vec();
        let inputs = dataset.inputs.select_rows(&batch);
        let labels = dataset.labels_of(&batch);
        let (features, mut cache) = learner.network.forward(&inputs)?;
        let classifier = learner.classifier.as_ref().expect("teacher classifier");
        let (loss, grad_classifier) = aml_loss_with_center_grad(&features, &labels, classifier, &cfg.margin)?;
        check_finite(iteration, &loss)?;
        let grads = learner.network.backward(&mut cache, &loss.grad_features)?;
        let mut tensors = grads.tensors();
        tensors.push(grad_classifier.as_slice());
        let lr = learner.step(iteration, &tensors)?;
        if !learner.network.is_finite() {
            return Err(Error::DivergedRun { iteration, detail: "non-finite teacher parameters".into() });
        }
        log.rows.push(LogRow { iteration, loss: loss.value, lr, mean_alpha: None });
        log.batch_seconds.push(started.elapsed().as_secs_f64());
        if (iteration + 1) % every == 0 || iteration + 1 == total {
            log.checkpoints.push(Checkpoint {
                iteration: iteration + 1,
                verification_accuracy: holdout_accuracy(&learner.network, dataset, &pairs)?,
            });
        }
    }

    let classifier = learner.classifier.take().expect("teacher classifier");
    Ok(TeacherRun { network: learner.network, centers: CenterBank::new(&classifier)?, log })
}

/// Initial EMA bank for the adaptive methods.
pub fn initial_bank(cfg: &ExperimentConfig, dataset: &Dataset, teacher: &TeacherRun) -> Result<CenterBank> {
    match cfg.center_init {
        CenterInit::TeacherClassifier => Ok(teacher.centers.clone()),
        CenterInit::ClassMean => {
            let train = dataset.train_indices();
            let features = teacher.network.embed(&dataset.inputs.select_rows(&train))?;
            CenterBank::from_class_means(&features, &dataset.labels_of(&train), dataset.class_count())
        }
    }
}

/// Trains a freshly initialized student under `cfg.method`.
pub fn distill_student(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    seed: Seed,
    teacher: Option<&TeacherRun>,
) -> Result<StudentRun> {
    let student = MlpNetwork::init(&cfg.student_spec, seed.fork(STREAM_STUDENT_INIT))?;
    distill_student_from(cfg, dataset, seed, teacher, student)
}

/// Trains `student` under `cfg.method`. The teacher is only consulted by
/// methods that use one, and never receives gradients.
pub fn distill_student_from(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    seed: Seed,
    teacher: Option<&TeacherRun>,
    student: MlpNetwork,
) -> Result<StudentRun> {
    cfg.validate()?;
    let method = cfg.method;
    let teacher = if method.uses_teacher() {
        Some(teacher.ok_or_else(|| {
            Error::InvalidConfig(format!("method {} requires a trained teacher", method.name()))
        })?)
    } else {
        None
    };
    if student.spec() != &cfg.student_spec {
        return Err(Error::InvalidConfig("student network does not match student_spec".into()));
    }
    let weights = cfg.loss_weights();
    let total = cfg.total_iterations;
    let pairs = evaluation_pairs(cfg, dataset)?;
    let every = checkpoint_every(total);

    let classifier = if method.owns_classifier() {
        Some(random_classifier(
            dataset.class_count(),
            cfg.student_spec.output_dim(),
            seed.fork(STREAM_STUDENT_CLASSIFIER),
        )?)
    } else {
        None
    };
    let mut bank = match (method.alpha_mode(), teacher) {
        (Some(_), Some(t)) => Some(initial_bank(cfg, dataset, t)?),
        _ => None,
    };
    let mut learner = Learner::new(student, classifier, cfg, total)?;
    let mut batches = BatchStream::new(dataset, cfg.batch_size, seed.fork(STREAM_STUDENT_BATCHES))?;
    let mut log = RunLog::default();

    for iteration in 0..total {
        let started = Instant::now();
        let batch = batches.next_batch()?.to_vec();
        let inputs = dataset.inputs.select_rows(&batch);
        let labels = dataset.labels_of(&batch);
        let (features, mut cache) = learner.network.forward(&inputs)?;
        let teacher_features = teacher.map(|t| t.network.embed(&inputs)).transpose()?;

        let mut grad_classifier = None;
        let mut alphas = None;
        let main = match method {
            Method::Standalone | Method::MseKd => {
                let classifier = learner.classifier.as_ref().expect("student classifier");
                let (loss, gc) = aml_loss_with_center_grad(&features, &labels, classifier, &cfg.margin)?;
                grad_classifier = Some(gc);
                loss
            }
            Method::Amldistill => {
                let t = teacher.expect("teacher checked above");
                amldistill_loss(&features, &labels, t.centers.centers(), &cfg.margin)?
            }
            Method::AdadistillAlpha | Method::AdadistillAlphaPrime => {
                let mode = method.alpha_mode().expect("adaptive method");
                let ft = teacher_features.as_ref().expect("teacher features");
                let bank = bank.as_mut().expect("center bank");
                let step = adadistill_step(&features, ft, &labels, bank, &cfg.margin, mode)?;
                alphas = Some(step.alphas);
                step.loss
            }
        };
        let loss = match (&teacher_features, weights.beta > 0.0) {
            (Some(ft), true) => combined_loss(&main, &mse_kd_loss(&features, ft)?, &weights)?,
            _ if weights.lambda == 1.0 => main,
            _ => {
                let mut scaled = main;
                scaled.value *= weights.lambda;
                scaled.grad_features.scale(weights.lambda);
                scaled
            }
        };
        check_finite(iteration, &loss)?;

        let grads = learner.network.backward(&mut cache, &loss.grad_features)?;
        let mut tensors = grads.tensors();
        let scaled_gc = grad_classifier.map(|mut gc| {
            gc.scale(weights.lambda);
            gc
        });
        if let Some(gc) = &scaled_gc {
            tensors.push(gc.as_slice());
        }
        let lr = learner.step(iteration, &tensors)?;
        if !learner.network.is_finite() {
            return Err(Error::DivergedRun { iteration, detail: "non-finite student parameters".into() });
        }

        let mean_alpha = alphas.as_ref().map(|a| a.iter().sum::<f64>() / a.len() as f64);
        log.rows.push(LogRow { iteration, loss: loss.value, lr, mean_alpha });
        if let Some(a) = alphas {
            log.alphas.push(a);
        }
        log.batch_seconds.push(started.elapsed().as_secs_f64());
        if (iteration + 1) % every == 0 || iteration + 1 == total {
            log.checkpoints.push(Checkpoint {
                iteration: iteration + 1,
                verification_accuracy: holdout_accuracy(&learner.network, dataset, &pairs)?,
            });
        }
    }

    Ok(StudentRun { network: learner.network, centers: bank, log })
}
