//! Synthetic identity data: unit-norm samples scattered around random class
//! directions on the hypersphere, with deterministic batching and
//! verification-pair sampling.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::numkit::{l2_normalize, Mat, Seed};

const DATASET_MAGIC: &[u8; 8] = b"ADDSET01";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub class_count: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Standard deviation of the per-coordinate Gaussian noise added to the
    /// class direction before normalization.
    pub intra_class_noise: f64,
    pub seed: Seed,
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 || self.samples_per_class < 2 || self.input_dim < 2 {
            return Err(Error::InvalidSpec(format!(
                "dataset needs >= 2 classes, samples per class and input dims (got {}, {}, {})",
                self.class_count, self.samples_per_class, self.input_dim
            )));
        }
        if !(self.intra_class_noise >= 0.0 && self.intra_class_noise.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise {} must be >= 0", self.intra_class_noise)));
        }
        Ok(())
    }

    /// Held-out samples per class: the last fifth, rounded up.
    pub fn holdout_per_class(&self) -> usize {
        self.samples_per_class.div_ceil(5)
    }
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        SyntheticDatasetSpec {
            class_count: 20,
            samples_per_class: 50,
            input_dim: 16,
            intra_class_noise: 0.3,
            seed: Seed(2024),
        }
    }
}

/// Samples are stored class by class; within each class the last
/// [`SyntheticDatasetSpec::holdout_per_class`] samples are held out.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: SyntheticDatasetSpec,
    pub inputs: Mat,
    pub labels: Vec<usize>,
    pub latent_directions: Mat,
    pub holdout: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    spec: SyntheticDatasetSpec,
    sample_count: usize,
    input_dim: usize,
    class_count: usize,
    holdout_count: usize,
    columns: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.holdout[i]).collect()
    }

    pub fn holdout_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.holdout[i]).collect()
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Writes the `ADDSET01` container. After the JSON header come the
    /// columns in order: inputs (f64, row-major), labels (u32),
    /// latent directions (f64, row-major), holdout flags (u32, 0/1).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = DatasetHeader {
            format_version: DATASET_VERSION,
            spec: self.spec.clone(),
            sample_count: self.len(),
            input_dim: self.inputs.cols(),
            class_count: self.latent_directions.rows(),
            holdout_count: self.holdout.iter().filter(|&&h| h).count(),
            columns: ["inputs", "labels", "latent_directions", "holdout"].map(String::from).to_vec(),
        };
        container::write_header(w, DATASET_MAGIC, &header)?;
        container::write_f64s(w, self.inputs.as_slice())?;
        container::write_u32s(w, self.labels.iter().map(|&l| l as u32))?;
        container::write_f64s(w, self.latent_directions.as_slice())?;
        container::write_u32s(w, self.holdout.iter().map(|&h| h as u32))?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let header: DatasetHeader = container::read_header(r, DATASET_MAGIC)?;
        if header.format_version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset format version {}", header.format_version)));
        }
        let (n, d, c) = (header.sample_count, header.input_dim, header.class_count);
        let inputs = Mat::from_vec(n, d, container::read_f64s(r, n * d)?)?;
        let labels: Vec<usize> = container::read_u32s(r, n)?.into_iter().map(|l| l as usize).collect();
        let latent_directions = Mat::from_vec(c, d, container::read_f64s(r, c * d)?)?;
        let flags = container::read_u32s(r, n)?;
        container::expect_eof(r)?;
        if labels.iter().any(|&l| l >= c) || flags.iter().any(|&f| f > 1) {
            return Err(Error::Format("label or holdout flag out of range".into()));
        }
        Ok(Dataset {
            spec: header.spec,
            inputs,
            labels,
            latent_directions,
            holdout: flags.into_iter().map(|f| f == 1).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

pub fn generate_dataset(spec: &SyntheticDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let (c, per, d) = (spec.class_count, spec.samples_per_class, spec.input_dim);
    let mut rng = spec.seed.rng();
    let directions: Vec<Vec<f64>> = (0..c).map(|_| random_unit(&mut rng, d)).collect();
    let holdout_from = per - spec.holdout_per_class();

    let mut data = Vec::with_capacity(c * per * d);
    let mut labels = Vec::with_capacity(c * per);
    let mut holdout = Vec::with_capacity(c * per);
    for (class, dir) in directions.iter().enumerate() {
        for k in 0..per {
            let sample = loop {
                let noisy: Vec<f64> = dir
                    .iter()
                    .map(|x| x + spec.intra_class_noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                if let Ok(u) = l2_normalize(&noisy) {
                    break u;
                }
            };
            data.extend_from_slice(&sample);
            labels.push(class);
            holdout.push(k >= holdout_from);
        }
    }
    Ok(Dataset {
        spec: spec.clone(),
        inputs: Mat::from_vec(c * per, d, data)?,
        labels,
        latent_directions: Mat::from_rows(&directions)?,
        holdout,
    })
}

/// Seeded permutation of the training indices cut into full batches; the
/// short remainder is dropped.
pub fn make_batches(dataset: &Dataset, batch_size: usize, epoch_seed: Seed) -> Result<Vec<Vec<usize>>> {
    let mut train = dataset.train_indices();
    if batch_size == 0 || batch_size > train.len() {
        return Err(Error::InvalidBatchSize { batch_size, available: train.len() });
    }
    train.shuffle(&mut epoch_seed.rng());
    Ok(train.chunks_exact(batch_size).map(<[usize]>::to_vec).collect())
}

/// Verification pairs over dataset indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairList {
    pub genuine: Vec<(usize, usize)>,
    pub impostor: Vec<(usize, usize)>,
}

/// Samples genuine and impostor pairs from the holdout split without
/// replacement. Requests beyond the number of eligible pairs return all of
/// them.
pub fn generate_pairs(dataset: &Dataset, n_genuine: usize, n_impostor: usize, seed: Seed) -> Result<PairList> {
    let holdout = dataset.holdout_indices();
    let mut per_class = vec![0usize; dataset.class_count()];
    for &i in &holdout {
        per_class[dataset.labels[i]] += 1;
    }
    if per_class.iter().filter(|&&n| n >= 2).count() < 2 {
        return Err(Error::InsufficientSamples(
            "holdout needs at least two classes with two samples each".into(),
        ));
    }

    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (a, &i) in holdout.iter().enumerate() {
        for &j in &holdout[a + 1..] {
            if dataset.labels[i] == dataset.labels[j] {
                genuine.push((i, j));
            } else {
                impostor.push((i, j));
            }
        }
    }

    let mut rng = seed.rng();
    let mut pick = |all: Vec<(usize, usize)>, n: usize| -> Vec<(usize, usize)> {
        if n >= all.len() {
            return all;
        }
        let mut chosen = index::sample(&mut rng, all.len(), n).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|k| all[k]).collect()
    };
    let genuine = pick(genuine, n_genuine);
    let impostor = pick(impostor, n_impostor);
    Ok(PairList { genuine, impostor })
}
