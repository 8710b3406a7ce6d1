//! The universal sample container and its CSV form.
//!
//! CSV layout: header `f0,...,f{d-1},label,group,domain`; labels are `-1` or
//! `1`; group and domain are unsigned integers or empty. Floats are written
//! with 17 significant digits so a round trip is lossless.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const DOMAIN_REFERENCE: u32 = 0;
pub const DOMAIN_SHIFTED: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<i8>,
    groups: Option<Vec<u32>>,
    domains: Option<Vec<u32>>,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} examples",
                labels.len(),
                features.rows()
            )));
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::invalid("labels must be -1 or +1"));
        }
        Ok(Self {
            features,
            labels,
            groups: None,
            domains: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        Self::new(Matrix::from_rows(&rows)?, labels)
    }

    pub fn with_groups(mut self, groups: Vec<u32>) -> Result<Self> {
        if groups.len() != self.len() {
            return Err(Error::invalid("group tags must match the example count"));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn with_domains(mut self, domains: Vec<u32>) -> Result<Self> {
        if domains.len() != self.len() {
            return Err(Error::invalid("domain tags must match the example count"));
        }
        self.domains = Some(domains);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn groups(&self) -> Option<&[u32]> {
        self.groups.as_deref()
    }

    pub fn domains(&self) -> Option<&[u32]> {
        self.domains.as_deref()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn y(&self, i: usize) -> f64 {
        f64::from(self.labels[i])
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.x(i));
        }
        Self {
            features: Matrix::new(indices.len(), d, data).expect("rows of a valid matrix"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: self
                .groups
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
            domains: self
                .domains
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
        }
    }

    /// Stacks two datasets. Tags survive only when both sides carry them.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::invalid("cannot concatenate datasets of different dimension"));
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let join = |a: &Option<Vec<u32>>, b: &Option<Vec<u32>>| match (a, b) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Self {
            features: Matrix::new(self.len() + other.len(), self.dim(), data)?,
            labels: self.labels.iter().chain(&other.labels).copied().collect(),
            groups: join(&self.groups, &other.groups),
            domains: join(&self.domains, &other.domains),
        })
    }

    /// Replaces the feature matrix, keeping labels and tags.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(Error::invalid("replacement features must keep the example count"));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    /// Replaces the labels, keeping features and tags.
    pub fn with_labels(&self, labels: Vec<i8>) -> Result<Self> {
        let mut out = Self::new(self.features.clone(), labels)?;
        out.groups = self.groups.clone();
        out.domains = self.domains.clone();
        Ok(out)
    }

    /// Appends a constant-1 coordinate (an intercept feature).
    pub fn with_intercept(&self) -> Self {
        let (n, d) = (self.len(), self.dim());
        let mut data = Vec::with_capacity(n * (d + 1));
        for i in 0..n {
            data.extend_from_slice(self.x(i));
            data.push(1.0);
        }
        Self {
            features: Matrix::new(n, d + 1, data).expect("finite"),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        header.extend(["label", "group", "domain"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut cols: Vec<String> = self.x(i).iter().map(|v| fmt_f64(*v)).collect();
            cols.push(self.labels[i].to_string());
            cols.push(self.groups.as_ref().map_or(String::new(), |g| g[i].to_string()));
            cols.push(self.domains.as_ref().map_or(String::new(), |g| g[i].to_string()));
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))??;
        let names: Vec<&str> = header.trim().split(',').collect();
        let tail = ["label", "group", "domain"];
        if names.len() < 3 || names[names.len() - 3..] != tail {
            return Err(Error::Parse("header must end with label,group,domain".into()));
        }
        let d = names.len() - 3;
        for (j, name) in names[..d].iter().enumerate() {
            if *name != format!("f{j}") {
                return Err(Error::Parse(format!("unexpected column {name}")));
            }
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut groups: Vec<Option<u32>> = Vec::new();
        let mut domains: Vec<Option<u32>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != d + 3 {
                return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 2, d + 3)));
            }
            for f in &fields[..d] {
                data.push(
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?,
                );
            }
            labels.push(
                fields[d]
                    .parse::<i8>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?,
            );
            let tag = |s: &str| -> Result<Option<u32>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<u32>()
                        .map(Some)
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
                }
            };
            groups.push(tag(fields[d + 1])?);
            domains.push(tag(fields[d + 2])?);
        }
        let n = labels.len();
        let mut ds = Self::new(Matrix::new(n, d, data)?, labels)?;
        let collect = |v: Vec<Option<u32>>| -> Result<Option<Vec<u32>>> {
            if v.iter().all(Option::is_some) && !v.is_empty() {
                Ok(Some(v.into_iter().flatten().collect()))
            } else if v.iter().all(Option::is_none) {
                Ok(None)
            } else {
                Err(Error::Parse("tag column is only partially filled".into()))
            }
        };
        ds.groups = collect(groups)?;
        ds.domains = collect(domains)?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        LabeledDataset::from_rows(vec![vec![0.1, -2.0], vec![1.0 / 3.0, 4.5]], vec![1, -1])
            .unwrap()
            .with_groups(vec![0, 3])
            .unwrap()
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(LabeledDataset::from_rows(vec![vec![1.0]], vec![0]).is_err());
        assert!(LabeledDataset::from_rows(vec![vec![1.0]], vec![1, 1]).is_err());
        assert!(tiny().with_groups(vec![1]).is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f0,f1,label,group,domain\n"));
        let back = LabeledDataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_rejects_partial_tags() {
        let text = "f0,label,group,domain\n1.0,1,2,\n2.0,-1,,\n";
        assert!(LabeledDataset::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn subset_and_concat_keep_tags() {
        let ds = tiny();
        let s = ds.subset(&[1]);
        assert_eq!(s.groups(), Some(&[3][..]));
        let c = ds.concat(&s).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.groups(), Some(&[0, 3, 3][..]));
        assert_eq!(ds.with_intercept().x(0), &[0.1, -2.0, 1.0]);
    }
}
