//! Report assembly. Files are collected in memory and written only once a
//! command has finished.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use shiftlab::dataset::fmt_f64;
use shiftlab::LabeledDataset;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Default, Clone)]
pub struct Outputs {
    pub files: Vec<OutputFile>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push(OutputFile { name: name.into(), contents });
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(name, s);
        Ok(())
    }

    pub fn dataset(&mut self, name: &str, data: &LabeledDataset) -> Result<(), CliError> {
        let mut buf = Vec::new();
        data.write_csv(&mut buf)?;
        self.add(name, String::from_utf8(buf).expect("csv is ascii"));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }

    /// Writes every file under `dir`, creating it as needed.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for f in &self.files {
            let p = dir.join(&f.name);
            std::fs::write(&p, &f.contents)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Minimal CSV builder with fixed float formatting.
pub struct Csv {
    out: String,
}

pub enum Cell<'a> {
    F(f64),
    U(u64),
    S(&'a str),
    B(bool),
    None,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut out = header.join(",");
        out.push('\n');
        Self { out }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.out.push(',');
            }
            match c {
                Cell::F(v) => self.out.push_str(&fmt_f64(*v)),
                Cell::U(v) => write!(self.out, "{v}").expect("string write"),
                Cell::S(s) => self.out.push_str(s),
                Cell::B(b) => self.out.push_str(if *b { "true" } else { "false" }),
                Cell::None => {}
            }
        }
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}
