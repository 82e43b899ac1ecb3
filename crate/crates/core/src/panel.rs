//! Matched worker-firm cross sections and their CSV form.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub firm_id: u64,
    /// Productivity; unknown for panels read without a firm file.
    pub theta: Option<f64>,
    pub size: u64,
}

/// Simulation-only columns. Measurement never reads them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub x: f64,
    pub h: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub worker_id: u64,
    pub firm_id: u64,
    pub log_wage: f64,
    pub latent: Option<Latent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub year_label: i64,
    pub firms: Vec<FirmRecord>,
    pub workers: Vec<WorkerRecord>,
    pub params_used: Option<ModelParams>,
}

const WORKER_HEADER: [&str; 6] = ["worker_id", "firm_id", "log_wage", "x", "h", "theta"];
const FIRM_HEADER: [&str; 3] = ["firm_id", "theta", "size"];

impl Panel {
    /// Builds a panel from workers alone, deriving firm sizes from counts.
    /// Firms are listed in order of first appearance.
    pub fn from_workers(year_label: i64, workers: Vec<WorkerRecord>) -> Self {
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut firms: Vec<FirmRecord> = Vec::new();
        for w in &workers {
            let i = *index.entry(w.firm_id).or_insert_with(|| {
                firms.push(FirmRecord {
                    firm_id: w.firm_id,
                    theta: w.latent.map(|l| l.theta),
                    size: 0,
                });
                firms.len() - 1
            });
            firms[i].size += 1;
        }
        Self {
            year_label,
            firms,
            workers,
            params_used: None,
        }
    }

    /// Checks that firm ids are unique, every worker's firm exists, firm
    /// sizes equal worker counts and worker ids are unique.
    pub fn validate(&self) -> Result<()> {
        let mut counts: HashMap<u64, u64> = HashMap::with_capacity(self.firms.len());
        for f in &self.firms {
            if counts.insert(f.firm_id, 0).is_some() {
                return Err(Error::Layout(format!("duplicate firm_id {}", f.firm_id)));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(self.workers.len());
        for w in &self.workers {
            if !seen.insert(w.worker_id) {
                return Err(Error::Layout(format!("duplicate worker_id {}", w.worker_id)));
            }
            match counts.get_mut(&w.firm_id) {
                Some(c) => *c += 1,
                None => {
                    return Err(Error::Layout(format!(
                        "worker {} refers to unknown firm {}",
                        w.worker_id, w.firm_id
                    )))
                }
            }
        }
        for f in &self.firms {
            if counts[&f.firm_id] != f.size {
                return Err(Error::Layout(format!(
                    "firm {} has size {} but {} workers",
                    f.firm_id, f.size, counts[&f.firm_id]
                )));
            }
        }
        Ok(())
    }

    /// Log wages grouped by firm, in the order of `self.firms`.
    pub fn wage_groups(&self) -> Vec<Vec<f64>> {
        self.grouped(|w| w.log_wage)
    }

    /// Any per-worker quantity grouped by firm, in the order of `self.firms`.
    pub fn grouped<T: Copy, F: Fn(&WorkerRecord) -> T>(&self, f: F) -> Vec<Vec<T>> {
        let index: HashMap<u64, usize> = self.firms.iter().enumerate().map(|(i, r)| (r.firm_id, i)).collect();
        let mut groups: Vec<Vec<T>> = self.firms.iter().map(|r| Vec::with_capacity(r.size as usize)).collect();
        for w in &self.workers {
            if let Some(&i) = index.get(&w.firm_id) {
                groups[i].push(f(w));
            }
        }
        groups
    }

    pub fn has_latent(&self) -> bool {
        !self.workers.is_empty() && self.workers.iter().all(|w| w.latent.is_some())
    }

    /// Writes the worker file. Latent columns are written when every worker
    /// carries them.
    pub fn write_workers_csv<W: Write>(&self, out: W) -> Result<()> {
        let latent = self.has_latent();
        let mut wtr = csv::Writer::from_writer(out);
        let header: &[&str] = if latent { &WORKER_HEADER } else { &WORKER_HEADER[..3] };
        wtr.write_record(header).map_err(csv_error)?;
        for w in &self.workers {
            let mut row = vec![w.worker_id.to_string(), w.firm_id.to_string(), w.log_wage.to_string()];
            if let (true, Some(l)) = (latent, w.latent) {
                row.extend([l.x.to_string(), l.h.to_string(), l.theta.to_string()]);
            }
            wtr.write_record(&row).map_err(csv_error)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_firms_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(FIRM_HEADER).map_err(csv_error)?;
        for f in &self.firms {
            let theta = f.theta.map(|t| t.to_string()).unwrap_or_default();
            wtr.write_record([f.firm_id.to_string(), theta, f.size.to_string()])
                .map_err(csv_error)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a worker file and, optionally, a firm file. Row numbers in
    /// schema errors count the header as row 1.
    pub fn read_csv<R: Read, F: Read>(year_label: i64, workers: R, firms: Option<F>) -> Result<Self> {
        let workers = read_workers(workers)?;
        if workers.is_empty() {
            return Err(Error::EmptyPanel("worker file has no data rows".into()));
        }
        let mut panel = Panel::from_workers(year_label, workers);
        if let Some(firms) = firms {
            let declared = read_firms(firms)?;
            let thetas: HashMap<u64, (Option<f64>, u64)> =
                declared.iter().map(|f| (f.firm_id, (f.theta, f.size))).collect();
            for f in &mut panel.firms {
                match thetas.get(&f.firm_id) {
                    Some(&(theta, size)) => {
                        if size != f.size {
                            return Err(Error::Layout(format!(
                                "firm {} declared size {} but has {} workers",
                                f.firm_id, size, f.size
                            )));
                        }
                        f.theta = theta;
                    }
                    None => {
                        return Err(Error::Layout(format!("firm {} missing from firm file", f.firm_id)));
                    }
                }
            }
        }
        Ok(panel)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

fn read_workers<R: Read>(input: R) -> Result<Vec<WorkerRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| schema(1, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let latent = if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(Error::EmptyPanel("worker file is empty".into()));
    } else if names == WORKER_HEADER[..3] {
        false
    } else if names == WORKER_HEADER {
        true
    } else {
        return Err(Error::Schema {
            row: 1,
            message: format!("expected header {:?} or {:?}, found {:?}", &WORKER_HEADER[..3], WORKER_HEADER, names),
        });
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| schema(row, e))?;
        let expected = if latent { 6 } else { 3 };
        if rec.len() != expected {
            return Err(Error::Schema {
                row,
                message: format!("expected {expected} fields, found {}", rec.len()),
            });
        }
        let int = |k: usize| parse::<u64>(&rec[k], row, WORKER_HEADER[k]);
        let real = |k: usize| parse_real(&rec[k], row, WORKER_HEADER[k]);
        out.push(WorkerRecord {
            worker_id: int(0)?,
            firm_id: int(1)?,
            log_wage: real(2)?,
            latent: if latent {
                Some(Latent {
                    x: real(3)?,
                    h: real(4)?,
                    theta: real(5)?,
                })
            } else {
                None
            },
        });
    }
    Ok(out)
}

fn read_firms<R: Read>(input: R) -> Result<Vec<FirmRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| schema(1, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != FIRM_HEADER {
        return Err(Error::Schema {
            row: 1,
            message: format!("expected firm header {:?}, found {:?}", FIRM_HEADER, names),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| schema(row, e))?;
        if rec.len() != 3 {
            return Err(Error::Schema {
                row,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let theta = if rec[1].trim().is_empty() {
            None
        } else {
            Some(parse_real(&rec[1], row, "theta")?)
        };
        out.push(FirmRecord {
            firm_id: parse::<u64>(&rec[0], row, "firm_id")?,
            theta,
            size: parse::<u64>(&rec[2], row, "size")?,
        });
    }
    Ok(out)
}

fn schema(row: usize, e: csv::Error) -> Error {
    Error::Schema {
        row,
        message: e.to_string(),
    }
}

fn parse<T: std::str::FromStr>(field: &str, row: usize, name: &str) -> Result<T> {
    field.trim().parse::<T>().map_err(|_| Error::Schema {
        row,
        message: format!("cannot parse {name} from {field:?}"),
    })
}

fn parse_real(field: &str, row: usize, name: &str) -> Result<f64> {
    let v: f64 = parse(field, row, name)?;
    if !v.is_finite() {
        return Err(Error::Schema {
            row,
            message: format!("{name} is not finite"),
        });
    }
    Ok(v)
}
