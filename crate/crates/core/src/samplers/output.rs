//! Sample CSV files: `chain,step,accepted,q_1..q_d[,p_1..p_d]`.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use super::chain::{ChainRun, SampleRow};
use crate::error::{Error, Result};
use crate::numfmt::sci17;

pub fn write_samples_csv<W: Write>(out: &mut W, runs: &[ChainRun], include_momenta: bool) -> Result<()> {
    let d = runs.iter().find_map(|r| r.rows.first()).map_or(0, |row| row.q.len());
    let mut header = String::from("chain,step,accepted");
    for i in 1..=d {
        header.push_str(&format!(",q_{i}"));
    }
    if include_momenta {
        for i in 1..=d {
            header.push_str(&format!(",p_{i}"));
        }
    }
    writeln!(out, "{header}")?;
    for (c, run) in runs.iter().enumerate() {
        for row in &run.rows {
            let mut line = format!("{c},{},{}", row.step, u8::from(row.accepted));
            for v in row.q.iter() {
                line.push(',');
                line.push_str(&sci17(*v));
            }
            if include_momenta {
                let p = row
                    .p
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("momenta requested but not recorded".into()))?;
                for v in p.iter() {
                    line.push(',');
                    line.push_str(&sci17(*v));
                }
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Parsed sample file; rows keep their chain index.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleFile {
    pub dim: usize,
    pub rows: Vec<(usize, SampleRow)>,
}

impl SampleFile {
    pub fn positions(&self) -> Vec<DVector<f64>> {
        self.rows.iter().map(|(_, r)| r.q.clone()).collect()
    }
}

pub fn read_samples_csv<R: BufRead>(input: R) -> Result<SampleFile> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidConfig("empty sample file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[..3] != ["chain", "step", "accepted"] {
        return Err(Error::InvalidConfig(format!("unexpected sample header {header:?}")));
    }
    let dim = cols.iter().filter(|c| c.starts_with("q_")).count();
    let with_p = cols.iter().filter(|c| c.starts_with("p_")).count();
    if dim == 0 || (with_p != 0 && with_p != dim) || cols.len() != 3 + dim + with_p {
        return Err(Error::InvalidConfig(format!("unexpected sample header {header:?}")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::InvalidConfig(format!("malformed sample row {}", n + 2));
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad());
        }
        let chain: usize = fields[0].parse().map_err(|_| bad())?;
        let step: u64 = fields[1].parse().map_err(|_| bad())?;
        let accepted = match fields[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        let nums = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()?;
        let q = DVector::from_column_slice(&nums[..dim]);
        let p = (with_p > 0).then(|| DVector::from_column_slice(&nums[dim..]));
        rows.push((chain, SampleRow { step, accepted, q, p }));
    }
    Ok(SampleFile { dim, rows })
}
