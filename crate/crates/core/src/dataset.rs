//! Labeled datasets, feature scaling, synthetic class blobs and attacker query sets.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Purpose};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub name: String,
    features: Vec<Vec<T>>,
    labels: Vec<usize>,
    k: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(name: impl Into<String>, features: Vec<Vec<T>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        let name = name.into();
        if features.len() != labels.len() {
            return Err(Error::Dimension(format!("{} feature rows but {} labels", features.len(), labels.len())));
        }
        check_rows(&features)?;
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("label {bad} is not below class count {k}")));
        }
        Ok(Self { name, features, labels, k })
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension, or 0 for an empty dataset.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }
}

fn check_rows<T: Scalar>(rows: &[Vec<T>]) -> Result<()> {
    let d = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Dimension(format!("row {i} has {} features, expected {d}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("row {i} contains a non-finite feature")));
        }
    }
    Ok(())
}

fn parse_rows<T: Scalar, R: Read>(
    reader: R,
    file: &str,
    d: usize,
    labeled: bool,
) -> Result<Vec<(Vec<T>, Option<i64>)>> {
    let width = d + usize::from(labeled);
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            file: file.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(n + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let csv_err = |message: String| Error::Csv { file: file.into(), line, message };
        // an optional header is recognised by a non-numeric first field
        if n == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != width {
            return Err(csv_err(format!("expected {width} fields, found {}", record.len())));
        }
        let mut features = Vec::with_capacity(d);
        for (j, field) in record.iter().take(d).enumerate() {
            let v: T = field.parse().map_err(|_| csv_err(format!("field {} is not a number: {field:?}", j + 1)))?;
            if !v.is_finite() {
                return Err(csv_err(format!("field {} is not finite", j + 1)));
            }
            features.push(v);
        }
        let label = if labeled {
            let field = &record[d];
            Some(field.parse::<i64>().map_err(|_| csv_err(format!("label is not an integer: {field:?}")))?)
        } else {
            None
        };
        rows.push((features, label));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(file.into()));
    }
    Ok(rows)
}

/// Parses `d` features plus an integer label per line. Labels are remapped to
/// `0..k` in order of first appearance.
pub fn parse_csv<T: Scalar, R: Read>(reader: R, name: &str, d: usize) -> Result<LabeledDataset<T>> {
    let rows = parse_rows::<T, R>(reader, name, d, true)?;
    let mut remap: HashMap<i64, usize> = HashMap::new();
    let mut features = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (f, raw) in rows {
        let next = remap.len();
        labels.push(*remap.entry(raw.expect("labeled rows")).or_insert(next));
        features.push(f);
    }
    let k = remap.len();
    LabeledDataset::new(name, features, labels, k)
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, d: usize) -> Result<LabeledDataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(std::io::BufReader::new(file), &path.display().to_string(), d)
}

fn write_rows<T: Scalar, W: Write>(out: W, rows: &[Vec<T>], labels: Option<&[usize]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    for (i, row) in rows.iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            fields.push(l[i].to_string());
        }
        w.write_record(&fields).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Writes one row per sample: features then label. Values use the shortest
/// representation that parses back to the same bits.
pub fn write_csv<T: Scalar, W: Write>(ds: &LabeledDataset<T>, out: W) -> Result<()> {
    write_rows(out, &ds.features, Some(&ds.labels))
}

pub fn save_csv<T: Scalar>(ds: &LabeledDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(ds, &mut buf)?;
    crate::fsutil::write_atomic(path.as_ref(), &buf)
}

/// Per-column min-max map onto `[0, 2π]`; constant columns map to `π`.
pub fn scale_features<T: Scalar>(ds: &LabeledDataset<T>) -> Result<LabeledDataset<T>> {
    if ds.len() < 2 {
        return Err(Error::InvalidArgument("scaling needs at least two samples".into()));
    }
    Ok(LabeledDataset { features: scale_rows(&ds.features), ..ds.clone() })
}

fn scale_rows<T: Scalar>(rows: &[Vec<T>]) -> Vec<Vec<T>> {
    let d = rows.first().map_or(0, Vec::len);
    let tau = T::lit(TAU);
    let bounds: Vec<(T, T)> = (0..d)
        .map(|j| rows.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j]))))
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(&bounds)
                .map(|(&v, &(lo, hi))| {
                    if hi > lo {
                        // clamp guards the last-ulp overshoot of the division
                        ((v - lo) / (hi - lo) * tau).min(tau).max(T::zero())
                    } else {
                        T::lit(std::f64::consts::PI)
                    }
                })
                .collect()
        })
        .collect()
}

/// Parameters of the synthetic Gaussian class-blob task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub k: usize,
    pub d: usize,
    pub n_per_class: usize,
    pub separation: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self { k: 4, d: 8, n_per_class: 150, separation: 8.0 }
    }
}

/// Class means with pairwise distance `separation`. For `k ≤ d` they are the
/// scaled corners of a regular simplex, otherwise evenly spaced on a line;
/// either way they are rotated by a seeded random orthogonal matrix.
fn blob_means<R: Rng + ?Sized>(spec: &BlobSpec, rng: &mut R) -> Vec<Vec<f64>> {
    let (k, d) = (spec.k, spec.d);
    let base: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut m = vec![0.0; d];
            if k <= d {
                m[c] = spec.separation / std::f64::consts::SQRT_2;
            } else {
                m[0] = c as f64 * spec.separation;
            }
            m
        })
        .collect();
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    base.iter().map(|m| (0..d).map(|i| (0..d).map(|j| q[(i, j)] * m[j]).sum()).collect()).collect()
}

/// Unit-variance Gaussian clusters around [`blob_means`], scaled onto
/// `[0, 2π]`. Rows are grouped by class.
pub fn make_blobs<T: Scalar>(spec: &BlobSpec, seed: u64) -> Result<LabeledDataset<T>> {
    if spec.k == 0 || spec.d == 0 || spec.n_per_class == 0 {
        return Err(Error::InvalidArgument("blob task needs k, d and n_per_class at least 1".into()));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "blob separation {} must be finite and non-negative",
            spec.separation
        )));
    }
    let mut rng = stream(seed, Purpose::Blobs, &[]);
    let means = blob_means(spec, &mut rng);
    let mut raw = Vec::with_capacity(spec.k * spec.n_per_class);
    let mut labels = Vec::with_capacity(raw.capacity());
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.n_per_class {
            let row = mean.iter().map(|&m| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                T::lit(m + noise)
            });
            raw.push(row.collect::<Vec<T>>());
            labels.push(c);
        }
    }
    let features = if raw.len() >= 2 { scale_rows(&raw) } else { vec![vec![T::lit(std::f64::consts::PI); spec.d]] };
    LabeledDataset::new(format!("blobs-{seed}"), features, labels, spec.k)
}

/// How many samples go to the training side of a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    Fraction(f64),
    Count(usize),
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule::Fraction(0.7)
    }
}

/// Seeded shuffle, then the leading part is the training set.
pub fn split<T: Scalar>(
    ds: &LabeledDataset<T>,
    rule: SplitRule,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let n_train = match rule {
        SplitRule::Fraction(f) if (0.0..=1.0).contains(&f) => (f * ds.len() as f64).round() as usize,
        SplitRule::Count(c) if c <= ds.len() => c,
        other => return Err(Error::InvalidArgument(format!("split rule {other:?} does not fit {} samples", ds.len()))),
    };
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut stream(seed, Purpose::Split, &[]));
    let (a, b) = order.split_at(n_train);
    let (mut train, mut test) = (ds.subset(a), ds.subset(b));
    train.name = format!("{}/train", ds.name);
    test.name = format!("{}/test", ds.name);
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryProvenance {
    MixedNpd { sources: Vec<String> },
    RandomUniform,
}

/// Unlabeled attacker queries.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet<T> {
    features: Vec<Vec<T>>,
    provenance: QueryProvenance,
}

impl<T: Scalar> QuerySet<T> {
    pub fn new(features: Vec<Vec<T>>, provenance: QueryProvenance) -> Result<Self> {
        check_rows(&features)?;
        Ok(Self { features, provenance })
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn provenance(&self) -> &QueryProvenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// The first `m` queries.
    pub fn truncated(&self, m: usize) -> Self {
        Self { features: self.features[..m.min(self.len())].to_vec(), provenance: self.provenance.clone() }
    }
}

pub enum QueryKind<'a, T> {
    /// Equal shares from every source; earlier sources take the remainder.
    MixedNpd(&'a [LabeledDataset<T>]),
    RandomUniform {
        d: usize,
    },
}

/// Per-source sample counts for `m` queries over `sources` sources.
pub fn mixed_shares(m: usize, sources: usize) -> Vec<usize> {
    (0..sources).map(|i| m / sources + usize::from(i < m % sources)).collect()
}

pub fn build_query_set<T: Scalar>(kind: QueryKind<'_, T>, m: usize, seed: u64) -> Result<QuerySet<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument("query set size must be at least 1".into()));
    }
    let mut rng = stream(seed, Purpose::Query, &[]);
    match kind {
        QueryKind::RandomUniform { d } => {
            if d == 0 {
                return Err(Error::InvalidArgument("query dimension must be at least 1".into()));
            }
            let features = (0..m).map(|_| (0..d).map(|_| T::lit(rng.random::<f64>() * TAU)).collect()).collect();
            QuerySet::new(features, QueryProvenance::RandomUniform)
        }
        QueryKind::MixedNpd(sources) => {
            let Some(first) = sources.first() else {
                return Err(Error::InvalidArgument("mixed query set needs at least one source".into()));
            };
            let d = first.dim();
            if let Some(bad) = sources.iter().find(|s| s.dim() != d) {
                return Err(Error::Dimension(format!("source {} has d={}, expected {d}", bad.name, bad.dim())));
            }
            let mut features = Vec::with_capacity(m);
            for (src, share) in sources.iter().zip(mixed_shares(m, sources.len())) {
                if share > src.len() {
                    return Err(Error::InvalidArgument(format!(
                        "source {} has {} samples, {share} requested",
                        src.name,
                        src.len()
                    )));
                }
                let picked = rand::seq::index::sample(&mut rng, src.len(), share);
                features.extend(picked.iter().map(|i| src.features[i].clone()));
            }
            features.shuffle(&mut rng);
            QuerySet::new(
                features,
                QueryProvenance::MixedNpd { sources: sources.iter().map(|s| s.name.clone()).collect() },
            )
        }
    }
}

/// Query rows serialise like [`write_csv`] without the label column.
pub fn write_query_csv<T: Scalar, W: Write>(qs: &QuerySet<T>, out: W) -> Result<()> {
    write_rows(out, &qs.features, None)
}

pub fn parse_query_csv<T: Scalar, R: Read>(reader: R, name: &str, d: usize) -> Result<QuerySet<T>> {
    let rows = parse_rows::<T, R>(reader, name, d, false)?;
    QuerySet::new(rows.into_iter().map(|(f, _)| f).collect(), QueryProvenance::MixedNpd { sources: vec![name.into()] })
}
