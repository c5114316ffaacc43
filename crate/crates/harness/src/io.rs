//! File formats: task lists and models as JSON, metrics as CSV. Every file
//! carries the schema version; CSV files start with a `# schema_version=N`
//! comment line ahead of the header.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use lll_core::dictionary::{CoupledDictionary, TaskId, TaskRecord};
use lll_core::environments::{Domain, SupervisedData, TaskParams, TaskSpec};
use lll_core::lifelong::Hyper;
use lll_core::linalg::{from_rows, to_rows};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Algo;
use crate::descriptors::DescriptorMap;
use crate::error::{HarnessError, HarnessResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataEntry {
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    /// Row-major `n × outputs`.
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub schema_version: u32,
    pub id: TaskId,
    pub domain: Domain,
    pub descriptor_raw: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Vec<f64>>,
}

impl TaskEntry {
    pub fn from_spec(task: &TaskSpec) -> Self {
        TaskEntry {
            schema_version: SCHEMA_VERSION,
            id: task.id,
            domain: task.domain,
            descriptor_raw: task.descriptor_raw.iter().copied().collect(),
            params: task.params.to_named(),
            data: task.data.as_ref().map(|d| DataEntry {
                x: to_rows(&d.x),
                y: to_rows(&d.y).into_iter().flatten().collect(),
            }),
            goal: task.goal.as_ref().map(|g| g.iter().copied().collect()),
        }
    }

    pub fn into_spec(self) -> Result<TaskSpec, String> {
        let params = TaskParams::from_named(self.domain, &self.params).map_err(|e| e.to_string())?;
        let data = match self.data {
            Some(d) => {
                let x = from_rows(&d.x).map_err(|e| e.to_string())?;
                let n = x.nrows();
                if n == 0 || d.y.len() % n != 0 {
                    return Err(format!("task {}: {} labels for {n} rows", self.id, d.y.len()));
                }
                let y = DMatrix::from_row_slice(n, d.y.len() / n, &d.y);
                Some(SupervisedData { x, y })
            }
            None => None,
        };
        Ok(TaskSpec {
            id: self.id,
            domain: self.domain,
            descriptor_raw: DVector::from_vec(self.descriptor_raw),
            params,
            data,
            goal: self.goal.map(DVector::from_vec),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub d: usize,
    pub d_m: usize,
    pub k: usize,
    /// Row-major.
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d_basis: Vec<Vec<f64>>,
    pub hyperparams: Hyper,
    #[serde(rename = "T")]
    pub t: usize,
}

impl DictionaryEntry {
    pub fn from_dict(dict: &CoupledDictionary, hyper: &Hyper, t: usize) -> Self {
        DictionaryEntry {
            d: dict.model_dim(),
            d_m: dict.descriptor_dim(),
            k: dict.k(),
            l: to_rows(&dict.l),
            d_basis: to_rows(&dict.d),
            hyperparams: *hyper,
            t,
        }
    }

    pub fn to_dict(&self) -> Result<CoupledDictionary, String> {
        let l = from_rows(&self.l).map_err(|e| e.to_string())?;
        let d = from_rows(&self.d_basis).map_err(|e| e.to_string())?;
        if l.shape() != (self.d, self.k) || d.shape() != (self.d_m, self.k) {
            return Err("dictionary shape disagrees with d, d_m, k".into());
        }
        CoupledDictionary::new(l, d).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: TaskId,
    pub s: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
    pub phi_m: Vec<f64>,
}

impl RegistryEntry {
    pub fn from_record(record: &TaskRecord, with_gamma: bool) -> Self {
        RegistryEntry {
            id: record.id,
            s: record.code.iter().copied().collect(),
            alpha: record.alpha.iter().copied().collect(),
            gamma: with_gamma.then(|| to_rows(&record.gamma)),
            phi_m: record.phi.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    /// Algorithm that produced the model.
    pub mode: Algo,
    pub domain: Domain,
    pub hyper: Hyper,
    pub descriptor_map: DescriptorMap,
    /// Absent for the single-task baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<DictionaryEntry>,
    pub registry: Vec<RegistryEntry>,
    /// Task presentations of the online run (revisits included).
    pub presentations: usize,
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> HarnessResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> HarnessResult<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))
}

pub fn write_tasks(path: &Path, tasks: &[TaskSpec]) -> HarnessResult<()> {
    let entries: Vec<TaskEntry> = tasks.iter().map(TaskEntry::from_spec).collect();
    write_json(path, &entries)
}

pub fn read_tasks(path: &Path) -> HarnessResult<Vec<TaskSpec>> {
    let entries: Vec<TaskEntry> = read_json(path)?;
    entries
        .into_iter()
        .map(|e| {
            if e.schema_version != SCHEMA_VERSION {
                return Err(HarnessError::format(
                    path,
                    format!("unsupported schema_version {}", e.schema_version),
                ));
            }
            e.into_spec().map_err(|m| HarnessError::format(path, m))
        })
        .collect()
}

/// Writes `rows` as CSV under the schema comment line.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> HarnessResult<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# schema_version={SCHEMA_VERSION}").expect("write to memory");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(header).map_err(|e| HarnessError::format(path, e))?;
        for row in rows {
            w.serialize(row).map_err(|e| HarnessError::format(path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

/// Reads a CSV written by [`write_csv`] into string records.
pub fn read_csv(path: &Path) -> HarnessResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r
        .headers()
        .map_err(|e| HarnessError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::format(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
