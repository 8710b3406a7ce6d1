//! Writes one reference/shifted pair with its support diagnostics.

use serde::Serialize;
use shiftlab::shiftgen::{generate_pair, support_check, GeneratorSpec, ShiftSpec, SupportReport};

use super::common::ReportHeader;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::Outputs;

#[derive(Debug, Clone, Serialize)]
pub struct GenReport<'a> {
    #[serde(flatten)]
    pub header: ReportHeader<'a>,
    pub generator: GeneratorSpec,
    pub shift: &'a ShiftSpec,
    pub support: SupportReport,
}

pub const SUPPORT_TOL: f64 = 1e-10;

pub fn run(cfg: &ExperimentConfig) -> Result<(GenReport<'_>, Outputs), CliError> {
    let generator = GeneratorSpec { seed: cfg.seed, ..cfg.generator.clone() };
    let (reference, shifted) = generate_pair(&generator, &cfg.shift)?;
    let support = support_check(&reference, &shifted, SUPPORT_TOL)?;
    let mut out = Outputs::default();
    out.dataset("reference.csv", &reference)?;
    out.dataset("shifted.csv", &shifted)?;
    let report = GenReport { header: ReportHeader::new("gen", cfg), generator, shift: &cfg.shift, support };
    out.json("report.json", &report)?;
    Ok((report, out))
}
