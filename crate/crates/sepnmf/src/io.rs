//! Matrix CSV files, instance directories and result manifests.
//!
//! A matrix file is plain comma-separated rows, optionally preceded by a
//! `# rows cols` line that is checked against the data.

use crate::extract::ExtractionManifest;
use crate::gen::{PSpec, SeparableInstance};
use crate::{DenseMatrix, Error, IndexSet, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub fn write_matrix<W: Write>(out: W, a: &DenseMatrix) -> Result<()> {
    let mut out = out;
    writeln!(out, "# {} {}", a.rows(), a.cols())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let (dims, rest) = match first.trim_start().strip_prefix('#') {
        Some(h) => {
            let d: Vec<usize> = h
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dimension line: {}", first.trim()))))
                .collect::<Result<_>>()?;
            if d.len() != 2 {
                return Err(Error::Parse(format!("bad dimension line: {}", first.trim())));
            }
            (Some((d[0], d[1])), String::new())
        }
        None => (None, first),
    };
    let chained = rest.as_bytes().chain(input);
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(chained);
    let mut rows: Vec<Vec<f64>> = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let row = rec
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: not a number: {t:?}", rows.len() + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let a = DenseMatrix::from_rows(&rows).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some((r, c)) = dims {
        if (r, c) != (a.rows(), a.cols()) && !(rows.is_empty() && r * c == 0) {
            return Err(Error::Parse(format!("header says {r}x{c}, data is {}x{}", a.rows(), a.cols())));
        }
        if rows.is_empty() {
            return Ok(DenseMatrix::zeros(r, c));
        }
    }
    Ok(a)
}

pub fn write_matrix_file(path: &Path, a: &DenseMatrix) -> Result<()> {
    write_matrix(fs::File::create(path)?, a)
}

pub fn read_matrix_file(path: &Path) -> Result<DenseMatrix> {
    read_matrix(fs::File::open(path)?)
}

/// Contents of `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub eps: f64,
    pub r: usize,
    pub anchor_groups: Vec<IndexSet>,
    pub permutation: Vec<usize>,
    pub p_spec: PSpec,
    /// The resolved weights, for readers that do not regenerate them.
    pub p: Vec<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn write_instance(dir: &Path, inst: &SeparableInstance) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_file(&dir.join("Mt.csv"), &inst.mt)?;
    write_matrix_file(&dir.join("W.csv"), &inst.w)?;
    write_matrix_file(&dir.join("H.csv"), &inst.h)?;
    write_matrix_file(&dir.join("N.csv"), &inst.noise)?;
    let meta = InstanceMeta {
        family: inst.family.clone(),
        params: inst.params.clone(),
        eps: inst.eps,
        r: inst.r,
        anchor_groups: inst.anchor_groups.clone(),
        permutation: inst.permutation.clone(),
        p_spec: inst.p.clone(),
        p: inst.p_vector(),
        notes: inst.notes.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_instance(dir: &Path) -> Result<SeparableInstance> {
    let meta: InstanceMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    Ok(SeparableInstance {
        family: meta.family,
        w: read_matrix_file(&dir.join("W.csv"))?,
        h: read_matrix_file(&dir.join("H.csv"))?,
        noise: read_matrix_file(&dir.join("N.csv"))?,
        mt: read_matrix_file(&dir.join("Mt.csv"))?,
        eps: meta.eps,
        r: meta.r,
        anchor_groups: meta.anchor_groups,
        p: meta.p_spec,
        permutation: meta.permutation,
        params: meta.params,
        notes: meta.notes,
    })
}

pub fn write_manifest(path: &Path, m: &ExtractionManifest) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(m)? + "\n")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<ExtractionManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
