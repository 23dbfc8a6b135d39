//! The persisted state file: the sufficient statistic plus the side
//! statistics needed by the averaged-model baseline and the noise
//! estimators. Written atomically (temp file + rename) under an advisory
//! lock.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::accumulator::{SufStat, SufStatDocument};
use crate::baselines::AveragedStat;
use crate::error::{Error, Result};
use crate::noise::{SpreadAccumulator, TailAccumulator};
use crate::spectral::{EigenvalueVector, SpectralBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AveragedDocument {
    n: u64,
    sum_x_re: Vec<f64>,
    sum_x_im: Vec<f64>,
    sum_d_re: Vec<f64>,
    sum_d_im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OperatorDocument {
    d_re: Vec<f64>,
    d_im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StateDocument {
    #[serde(flatten)]
    sufstat: SufStatDocument,
    averaged: AveragedDocument,
    spread: SpreadAccumulator,
    tail: TailAccumulator,
    /// First operator of the calibration subsequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_operator: Option<OperatorDocument>,
    /// Whether a later calibration record used a different operator.
    operator_varies: bool,
}

fn split(values: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (
        values.iter().map(|v| v.re).collect(),
        values.iter().map(|v| v.im).collect(),
    )
}

fn join(re: &[f64], im: &[f64], p: usize, what: &str) -> Result<Vec<Complex64>> {
    if re.len() != p || im.len() != p {
        return Err(Error::InvalidInput(format!("{what} must have length {p}")));
    }
    Ok(re
        .iter()
        .zip(im)
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub sufstat: SufStat,
    pub averaged: AveragedStat,
    pub spread: SpreadAccumulator,
    pub tail: TailAccumulator,
    pub reference_operator: Option<EigenvalueVector>,
    pub operator_varies: bool,
}

impl State {
    pub fn new(basis: SpectralBasis) -> Self {
        Self {
            sufstat: SufStat::new(basis),
            averaged: AveragedStat::new(basis),
            spread: SpreadAccumulator::new(basis.len()),
            tail: TailAccumulator::default(),
            reference_operator: None,
            operator_varies: false,
        }
    }

    pub fn basis(&self) -> SpectralBasis {
        self.sufstat.basis()
    }

    /// Fold one observation into every statistic. `y` is in signal space.
    /// Validation happens before any mutation.
    pub fn observe(&mut self, d: &EigenvalueVector, y: &[f64], calibration: bool) -> Result<()> {
        let basis = self.basis();
        basis.check_len(d.len())?;
        basis.check_len(y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        let x = basis.to_spectral_real(y)?;
        self.sufstat.update(d, &x)?;
        self.averaged.update(d, &x)?;
        self.tail.observe(d.values(), &x)?;
        if calibration {
            self.spread.observe(y)?;
            match &self.reference_operator {
                None => self.reference_operator = Some(d.clone()),
                Some(r) if r != d => self.operator_varies = true,
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn to_document(&self) -> StateDocument {
        let (sum_x_re, sum_x_im) = split(self.averaged.sum_x());
        let (sum_d_re, sum_d_im) = split(self.averaged.sum_d());
        StateDocument {
            sufstat: self.sufstat.to_document(),
            averaged: AveragedDocument {
                n: self.averaged.n(),
                sum_x_re,
                sum_x_im,
                sum_d_re,
                sum_d_im,
            },
            spread: self.spread.clone(),
            tail: self.tail.clone(),
            reference_operator: self.reference_operator.as_ref().map(|d| {
                let (d_re, d_im) = split(d.values());
                OperatorDocument { d_re, d_im }
            }),
            operator_varies: self.operator_varies,
        }
    }

    fn from_document(doc: StateDocument) -> Result<Self> {
        let sufstat = SufStat::from_document(&doc.sufstat)?;
        let basis = sufstat.basis();
        let p = basis.len();
        let a = &doc.averaged;
        let averaged = AveragedStat::from_sums(
            basis,
            a.n,
            join(&a.sum_x_re, &a.sum_x_im, p, "averaged.sum_x")?,
            join(&a.sum_d_re, &a.sum_d_im, p, "averaged.sum_d")?,
        )?;
        if doc.spread.sum.len() != p || doc.spread.sum_sq.len() != p {
            return Err(Error::InvalidInput(format!(
                "spread sums must have length {p}"
            )));
        }
        let reference_operator = match doc.reference_operator {
            Some(r) => Some(EigenvalueVector::new(join(
                &r.d_re,
                &r.d_im,
                p,
                "reference_operator",
            )?)?),
            None => None,
        };
        Ok(Self {
            sufstat,
            averaged,
            spread: doc.spread,
            tail: doc.tail,
            reference_operator,
            operator_varies: doc.operator_varies,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string(&self.to_document())?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Replace `path` atomically: write a sibling temp file, sync, rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = temp_path(path);
        let result = (|| {
            let mut f = File::create(&tmp)?;
            f.write_all(self.to_json()?.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, path)?;
            Ok(())
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp.{}", std::process::id()));
    path.with_file_name(name)
}

/// Exclusive advisory lock on `<state>.lock`, released on drop.
pub struct StateLock {
    file: File,
}

impl StateLock {
    pub fn acquire(state: &Path) -> Result<Self> {
        let mut name = state
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        name.push(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(state.with_file_name(name))?;
        match file.try_lock() {
            Ok(()) => Ok(Self { file }),
            Err(std::fs::TryLockError::WouldBlock) => Err(Error::InvalidInput(format!(
                "state file {} is locked by another process",
                state.display()
            ))),
            Err(std::fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }
}

impl Drop for StateLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}
