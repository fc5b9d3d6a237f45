use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Truth-by-prediction counts. Rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Argument("confusion matrix needs at least one class".into()));
        }
        let k = class_names.len();
        Ok(Self {
            class_names,
            counts: vec![0; k * k],
        })
    }

    pub fn from_predictions(
        class_names: Vec<String>,
        truth: &[usize],
        predictions: &[usize],
    ) -> Result<Self> {
        if truth.len() != predictions.len() {
            return Err(Error::Argument(format!(
                "{} labels but {} predictions",
                truth.len(),
                predictions.len()
            )));
        }
        let mut m = Self::new(class_names)?;
        for (&t, &p) in truth.iter().zip(predictions) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.num_classes();
        if truth >= k || predicted >= k {
            return Err(Error::Argument(format!(
                "class index ({truth}, {predicted}) out of range for {k} classes"
            )));
        }
        self.counts[truth * k + predicted] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes() + predicted]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.num_classes()).map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.get(i, i)).sum()
    }

    /// `trace / total`; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Per-class recall; `None` for classes with no samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.row_sums()
            .iter()
            .enumerate()
            .map(|(i, &n)| (n > 0).then(|| self.get(i, i) as f64 / n as f64))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(self.counts.chunks(self.num_classes())) {
            out.push_str(name);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Data(format!("confusion CSV: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let class_names: Vec<String> = header.split(',').skip(1).map(str::to_owned).collect();
        let mut m = Self::new(class_names)?;
        let k = m.num_classes();
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let name = fields.next().unwrap_or_default();
            if i >= k || name != m.class_names[i] {
                return Err(bad(format!("unexpected row {name:?}")));
            }
            let values = fields
                .map(|f| f.trim().parse::<u64>().map_err(|e| bad(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != k {
                return Err(bad(format!("row {name:?} has {} counts, expected {k}", values.len())));
            }
            m.counts[i * k..(i + 1) * k].copy_from_slice(&values);
            rows += 1;
        }
        if rows != k {
            return Err(bad(format!("{rows} rows, expected {k}")));
        }
        Ok(m)
    }
}

pub fn emit_confusion(matrix: &ConfusionMatrix, path: &Path) -> Result<()> {
    fs::write(path, matrix.to_csv()).map_err(|e| Error::io(path, e))
}
