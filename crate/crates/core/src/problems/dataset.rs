use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::{derive_stream, streams};

/// Row-major feature matrix with one integer label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Rescales every feature column to `[0, 1]`; constant columns become 0.
    pub fn normalize_min_max(&mut self) {
        for j in 0..self.dim() {
            let (lo, hi) = self
                .features
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    (lo.min(row[j]), hi.max(row[j]))
                });
            let span = hi - lo;
            for row in &mut self.features {
                row[j] = if span > 0.0 {
                    (row[j] - lo) / span
                } else {
                    0.0
                };
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub normalize: bool,
}

/// Reads rows of `label,feature_1,...,feature_d`.
pub fn load_csv_dataset(path: &Path, options: CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 2 {
            return Err(parse_err(
                line,
                "expected a label and at least one feature".into(),
            ));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {} features, found {}", w - 1, record.len() - 1),
                ));
            }
            _ => {}
        }
        let label_cell = &record[0];
        let label = label_cell
            .parse::<u32>()
            .or_else(|_| match label_cell.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u32),
                _ => Err(()),
            })
            .map_err(|_| {
                parse_err(
                    line,
                    format!("label `{label_cell}` is not a nonnegative integer"),
                )
            })?;
        let mut row = Vec::with_capacity(record.len() - 1);
        for (j, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("field {} `{cell}` is not numeric", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("field {} is not finite", j + 1)));
            }
            row.push(v);
        }
        labels.push(label);
        features.push(row);
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput {
            path: path.to_path_buf(),
        });
    }
    let mut data = Dataset { features, labels };
    if options.normalize {
        data.normalize_min_max();
    }
    Ok(data)
}

pub fn write_csv_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for (label, row) in data.labels.iter().zip(&data.features) {
        write!(out, "{label}")?;
        for v in row {
            write!(out, ",{v:e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Synthetic classification data: one Gaussian prototype per class, samples
/// are prototype plus unit noise, then squashed into `[0, 1]` by a logistic map.
pub fn gen_logistic_dataset(
    samples: usize,
    dim: usize,
    classes: u32,
    seed: u64,
) -> Result<Dataset> {
    if samples == 0 || dim == 0 || classes == 0 {
        return Err(Error::invalid(
            "dataset generation needs N, d and class count >= 1",
        ));
    }
    let mut rng = derive_stream(seed, streams::DATA);
    let prototypes: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| 2.0 * rng.standard_normal()).collect())
        .collect();
    let mut features = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let label = rng.index(classes as usize) as u32;
        let row = prototypes[label as usize]
            .iter()
            .map(|&c| 1.0 / (1.0 + (-(c + rng.standard_normal())).exp()))
            .collect();
        features.push(row);
        labels.push(label);
    }
    Ok(Dataset { features, labels })
}
