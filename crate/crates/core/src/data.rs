//! Feature datasets: seeded synthetic Gaussian classes with planted
//! geometry, and CSV ingestion of precomputed feature vectors.
//!
//! CSV layout: header `class_id,split,f0,f1,...,f{d-1}`, `split` is `train`
//! or `test`, one vector per row. Row order within a class and split is kept
//! and becomes the fixed exemplar order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curriculum::TaskSpec;
use crate::distance::FeatureVector;
use crate::error::{CsvFault, Error, Result};
use crate::seed::mix;

/// A labelled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: FeatureVector,
    pub label: usize,
}

/// Planted class geometry for synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// One center per class.
    pub centers: Vec<Vec<f64>>,
    /// Isotropic standard deviation per class.
    pub spread: Vec<f64>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let dim = self.centers.first().map(Vec::len).ok_or(Error::EmptyInput("centers"))?;
        if dim == 0 {
            return Err(Error::EmptyInput("center dimension"));
        }
        if self.spread.len() != self.centers.len() {
            return Err(Error::LengthMismatch(self.centers.len(), self.spread.len()));
        }
        for c in &self.centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.len() });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("center"));
            }
        }
        if let Some(&s) = self.spread.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::OutOfRange {
                what: "spread",
                value: s,
                range: "(0, inf)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic { spec: SyntheticSpec },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n_classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub source: DataSource,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Feature vectors grouped by class and split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// `train[class]` in fixed exemplar order.
    pub train: Vec<Vec<FeatureVector>>,
    pub test: Vec<Vec<FeatureVector>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.manifest.n_classes
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn split(&self, split: Split) -> &[Vec<FeatureVector>] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Examples of every class in `task`, class by class in task order.
    pub fn task_examples(&self, task: &TaskSpec, split: Split) -> Vec<Example> {
        task.classes
            .iter()
            .flat_map(|c| {
                self.split(split)[c.0].iter().map(move |f| Example {
                    features: f.clone(),
                    label: c.0,
                })
            })
            .collect()
    }

    pub fn total_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }
}

fn gaussian_cloud(center: &[f64], spread: f64, count: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).expect("spread validated");
    (0..count)
        .map(|_| center.iter().map(|c| c + noise.sample(&mut rng)).collect())
        .collect()
}

/// Isotropic Gaussian draws around each planted center. Train and test come
/// from separate streams of the same per-class lineage.
pub fn generate_synthetic(name: &str, spec: &SyntheticSpec, train_per_class: usize, test_per_class: usize) -> Result<Dataset> {
    spec.validate()?;
    if train_per_class == 0 || test_per_class == 0 {
        return Err(Error::EmptyInput("per-class sample count"));
    }
    let mut train = Vec::with_capacity(spec.centers.len());
    let mut test = Vec::with_capacity(spec.centers.len());
    for (k, (center, &spread)) in spec.centers.iter().zip(&spec.spread).enumerate() {
        let lineage = mix(&[spec.seed, k as u64]);
        train.push(gaussian_cloud(center, spread, train_per_class, mix(&[lineage, 0])));
        test.push(gaussian_cloud(center, spread, test_per_class, mix(&[lineage, 1])));
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            name: name.to_string(),
            n_classes: spec.centers.len(),
            dim: spec.centers[0].len(),
            train_per_class,
            test_per_class,
            source: DataSource::Synthetic { spec: spec.clone() },
        },
        train,
        test,
    })
}

/// Smallest dimension the named presets can be realized in.
pub const PRESET_MIN_DIM: usize = 6;

pub const PRESETS: [&str; 3] = ["hub", "twin", "hub-twin"];

fn combo(dim: usize, terms: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for &(k, a) in terms {
        v[k] += a;
    }
    v
}

/// Five-class geometries whose designer preferences can be worked out by
/// hand.
///
/// * `hub`: class 0 is equidistant from classes 1..=4, which are mutually
///   equidistant and farther apart. Every center shares a unit component
///   along axis 0.
/// * `twin`: classes 0..=3 are mutually equidistant; class 4 is a slight
///   displacement of class 3.
/// * `hub-twin`: classes 1..=4 share a common direction; class 0 points the
///   opposite way, which makes it a distant, near-equidistant hub leaning
///   slightly toward the twins. Classes 2, 3 and 4 form a cluster in which
///   3 and 4 are the closest pair of the whole set.
pub fn planted_geometry(kind: &str, dim: usize, spread: f64, seed: u64) -> Result<SyntheticSpec> {
    if dim < PRESET_MIN_DIM {
        return Err(Error::DimensionMismatch {
            expected: PRESET_MIN_DIM,
            found: dim,
        });
    }
    let centers = match kind {
        "hub" => {
            let mut c = vec![combo(dim, &[(0, 1.0), (1, 0.5)])];
            c.extend((2..=5).map(|k| combo(dim, &[(0, 1.0), (k, 1.0)])));
            c
        }
        "twin" => {
            let mut c: Vec<Vec<f64>> = (1..=4).map(|k| combo(dim, &[(0, 1.0), (k, 1.0)])).collect();
            c.push(combo(dim, &[(0, 1.0), (4, 1.0), (5, 0.1)]));
            c
        }
        "hub-twin" => vec![
            combo(dim, &[(0, -2.0), (3, 1.0)]),
            combo(dim, &[(0, 2.0), (1, 1.0)]),
            combo(dim, &[(0, 2.0), (2, 1.0)]),
            combo(dim, &[(0, 2.0), (2, 1.0), (3, 1.0)]),
            combo(dim, &[(0, 2.0), (2, 1.0), (3, 1.0), (4, 0.2)]),
        ],
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let spec = SyntheticSpec {
        spread: vec![spread; centers.len()],
        centers,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn csv_err(path: &Path, line: usize, fault: CsvFault) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        fault,
    }
}

/// Reads a feature CSV laid out as described in the module docs.
pub fn load_feature_csv(path: &Path, manifest: &DatasetManifest) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, 1, CsvFault::Header(e.to_string())))?;
    let header = reader
        .headers()
        .map_err(|e| csv_err(path, 1, CsvFault::Header(e.to_string())))?
        .clone();
    let dim = manifest.dim;
    let expected: Vec<String> = ["class_id".to_string(), "split".to_string()]
        .into_iter()
        .chain((0..dim).map(|i| format!("f{i}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(csv_err(
            path,
            1,
            CsvFault::Header(format!("expected class_id,split,f0..f{}", dim.saturating_sub(1))),
        ));
    }

    let n = manifest.n_classes;
    let mut train = vec![Vec::new(); n];
    let mut test = vec![Vec::new(); n];
    for (i, record) in reader.records().enumerate() {
        let fallback_line = i + 2;
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
            csv_err(path, line, CsvFault::MalformedRow(e.to_string()))
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
        if record.len() != dim + 2 {
            return Err(csv_err(
                path,
                line,
                CsvFault::Dimension {
                    expected: dim,
                    found: record.len().saturating_sub(2),
                },
            ));
        }
        let class: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line, CsvFault::MalformedRow(format!("class_id {:?}", &record[0]))))?;
        if class >= n {
            return Err(csv_err(path, line, CsvFault::UnknownClass(class)));
        }
        let bucket = match record[1].trim() {
            "train" => &mut train,
            "test" => &mut test,
            other => return Err(csv_err(path, line, CsvFault::UnknownSplit(other.to_string()))),
        };
        let values: FeatureVector = record
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| csv_err(path, line, CsvFault::MalformedRow("non-numeric or non-finite feature".into())))?;
        bucket[class].push(values);
    }
    for (k, (tr, te)) in train.iter().zip(&test).enumerate() {
        if tr.is_empty() || te.is_empty() {
            return Err(Error::Config(format!("class {k} needs at least one train and one test row")));
        }
    }
    Ok(Dataset {
        manifest: manifest.clone(),
        train,
        test,
    })
}

/// Writes `dataset` in the feature CSV layout: train rows then test rows,
/// class by class. Values use the shortest round-trip representation.
pub fn write_feature_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "class_id,split")?;
    for i in 0..dataset.dim() {
        write!(w, ",f{i}")?;
    }
    writeln!(w)?;
    for (split, name) in [(Split::Train, "train"), (Split::Test, "test")] {
        for (k, rows) in dataset.split(split).iter().enumerate() {
            for row in rows {
                write!(w, "{k},{name}")?;
                for v in row {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
