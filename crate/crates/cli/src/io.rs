//! Artifact reading and writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;
use tidalflow_core::format::g17;

/// Version of every JSON artifact layout.
pub const SCHEMA_VERSION: u32 = 1;

/// An `f64` serialized with 17 significant digits; non-finite values become
/// `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        RawValue::from_string(g17(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

pub fn nums(values: &[f64]) -> Vec<Num> {
    values.iter().copied().map(Num).collect()
}

/// Fails with the missing path named when `path` is absent.
pub fn require(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("missing input file: {}", path.display());
    }
    Ok(())
}

/// Outputs of one command, held in memory until every artifact is ready.
#[derive(Debug, Default)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file to a temporary name, then renames them all into
    /// place. A failure leaves no new artifact behind.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut staged = Vec::new();
        let result = (|| {
            for (name, bytes) in &self.files {
                let tmp = self.dir.join(format!(".{name}.partial"));
                staged.push(tmp.clone());
                let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
                f.write_all(bytes)?;
                f.sync_all()?;
            }
            Ok::<_, anyhow::Error>(())
        })();
        if let Err(e) = result {
            for tmp in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        let mut written = Vec::new();
        for ((name, _), tmp) in self.files.iter().zip(staged) {
            let path = self.dir.join(name);
            fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV writer over an in-memory buffer.
pub fn csv_buffer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

pub fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {}", e.error()))
}

/// A labelled dense matrix: first column holds row labels, header holds the
/// column labels after `corner`.
pub fn matrix_csv(corner: &str, row_labels: &[String], col_labels: &[String], values: &Array2<f64>) -> Result<Vec<u8>> {
    let mut w = csv_buffer();
    w.write_record(std::iter::once(corner).chain(col_labels.iter().map(String::as_str)))?;
    for (label, row) in row_labels.iter().zip(values.rows()) {
        w.write_record(std::iter::once(label.clone()).chain(row.iter().map(|&x| g17(x))))?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Array2<f64>,
}

pub fn read_matrix(path: &Path) -> Result<LabelledMatrix> {
    require(path)?;
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let col_labels: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), i + 2))?;
        if rec.len() != col_labels.len() + 1 {
            bail!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                i + 2,
                rec.len(),
                col_labels.len() + 1
            );
        }
        row_labels.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let x: f64 = field
                .parse()
                .with_context(|| format!("{}: line {}: `{field}` is not a number", path.display(), i + 2))?;
            data.push(x);
        }
    }
    let values = Array2::from_shape_vec((row_labels.len(), col_labels.len()), data)?;
    Ok(LabelledMatrix {
        row_labels,
        col_labels,
        values,
    })
}

pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
