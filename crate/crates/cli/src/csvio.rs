//! Dataset CSV formats.
//!
//! Features: `sample_id,camera_id,person_id,f0,...,f{d-1}` with person_id
//! -1 when unknown. Attributes: `sample_id,a0,...,a{K-1}`. Reals carry 17
//! significant digits so a write/read round trip is value-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ssdal_core::{AttributeVector, Matrix};

use crate::errors::{CliError, CliResult};

/// Parsed contents of a features CSV.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub sample_ids: Vec<u64>,
    pub camera_ids: Vec<i64>,
    pub person_ids: Vec<i64>,
    pub features: Matrix,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Person/camera ids as unsigned values; -1 entries are rejected.
    pub fn known_ids(&self) -> CliResult<(Vec<u32>, Vec<u32>)> {
        let mut persons = Vec::with_capacity(self.len());
        let mut cameras = Vec::with_capacity(self.len());
        for (i, (&p, &c)) in self.person_ids.iter().zip(&self.camera_ids).enumerate() {
            if p < 0 || c < 0 {
                return Err(CliError::Data(format!(
                    "row {i}: person/camera id must be known (non-negative)"
                )));
            }
            persons.push(p as u32);
            cameras.push(c as u32);
        }
        Ok((persons, cameras))
    }
}

pub fn write_features_csv(
    path: &Path,
    sample_ids: &[u64],
    camera_ids: &[i64],
    person_ids: &[i64],
    features: &Matrix,
) -> CliResult<()> {
    if sample_ids.len() != features.rows()
        || camera_ids.len() != features.rows()
        || person_ids.len() != features.rows()
    {
        return Err(CliError::Data(
            "feature CSV columns disagree in length".to_string(),
        ));
    }
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "sample_id,camera_id,person_id")?;
        for c in 0..features.cols() {
            write!(out, ",f{c}")?;
        }
        writeln!(out)?;
        for r in 0..features.rows() {
            write!(out, "{},{},{}", sample_ids[r], camera_ids[r], person_ids[r])?;
            for v in features.row(r) {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_features_csv(path: &Path) -> CliResult<FeatureTable> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?
        .map_err(CliError::from)?;
    let head: Vec<&str> = header.split(',').collect();
    if head.len() < 4 || head[0] != "sample_id" || head[1] != "camera_id" || head[2] != "person_id"
    {
        return Err(CliError::Data(format!(
            "{}: bad features header `{header}`",
            path.display()
        )));
    }
    let dim = head.len() - 3;
    for (i, h) in head[3..].iter().enumerate() {
        if *h != format!("f{i}") {
            return Err(CliError::Data(format!(
                "{}: feature column {i} is named `{h}`",
                path.display()
            )));
        }
    }

    let mut sample_ids = Vec::new();
    let mut camera_ids = Vec::new();
    let mut person_ids = Vec::new();
    let mut data = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(CliError::from)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(CliError::Data(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                dim + 3
            )));
        }
        let bad = |what: &str| {
            CliError::Data(format!("{}: row {}: bad {what}", path.display(), lineno + 2))
        };
        sample_ids.push(fields[0].parse::<u64>().map_err(|_| bad("sample_id"))?);
        camera_ids.push(fields[1].parse::<i64>().map_err(|_| bad("camera_id"))?);
        person_ids.push(fields[2].parse::<i64>().map_err(|_| bad("person_id"))?);
        for f in &fields[3..] {
            data.push(f.parse::<f64>().map_err(|_| bad("feature value"))?);
        }
    }
    let rows = sample_ids.len();
    let features = Matrix::new(rows, dim, data).map_err(CliError::from)?;
    Ok(FeatureTable {
        sample_ids,
        camera_ids,
        person_ids,
        features,
    })
}

pub fn write_attributes_csv(
    path: &Path,
    sample_ids: &[u64],
    labels: &[AttributeVector],
) -> CliResult<()> {
    if sample_ids.len() != labels.len() {
        return Err(CliError::Data(
            "attribute CSV columns disagree in length".to_string(),
        ));
    }
    let k = labels.first().map(|l| l.len()).unwrap_or(0);
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "sample_id")?;
        for a in 0..k {
            write!(out, ",a{a}")?;
        }
        writeln!(out)?;
        for (id, label) in sample_ids.iter().zip(labels) {
            write!(out, "{id}")?;
            for b in label.bits() {
                write!(out, ",{b}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_attributes_csv(path: &Path) -> CliResult<(Vec<u64>, Vec<AttributeVector>)> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?
        .map_err(CliError::from)?;
    let head: Vec<&str> = header.split(',').collect();
    if head.len() < 2 || head[0] != "sample_id" {
        return Err(CliError::Data(format!(
            "{}: bad attributes header `{header}`",
            path.display()
        )));
    }
    let k = head.len() - 1;
    for (i, h) in head[1..].iter().enumerate() {
        if *h != format!("a{i}") {
            return Err(CliError::Data(format!(
                "{}: attribute column {i} is named `{h}`",
                path.display()
            )));
        }
    }

    let mut sample_ids = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(CliError::from)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 1 {
            return Err(CliError::Data(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                k + 1
            )));
        }
        sample_ids.push(fields[0].parse::<u64>().map_err(|_| {
            CliError::Data(format!("{}: row {}: bad sample_id", path.display(), lineno + 2))
        })?);
        let bits: Vec<u8> = fields[1..]
            .iter()
            .map(|f| match *f {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(CliError::Data(format!(
                    "{}: row {}: attribute must be 0 or 1, got `{other}`",
                    path.display(),
                    lineno + 2
                ))),
            })
            .collect::<CliResult<_>>()?;
        labels.push(AttributeVector::new(bits).map_err(CliError::from)?);
    }
    Ok((sample_ids, labels))
}

/// Require two files' sample id sequences to be identical.
pub fn check_aligned(features: &[u64], attributes: &[u64]) -> CliResult<()> {
    if features != attributes {
        return Err(CliError::Data(
            "sample_id keys of the features and attributes files do not align".to_string(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_roundtrip_is_value_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let features = Matrix::new(
            2,
            3,
            vec![
                0.1234567890123456,
                -1.0 / 3.0,
                1e-17,
                2.0_f64.sqrt(),
                -0.0,
                7.25,
            ],
        )
        .unwrap();
        write_features_csv(&path, &[0, 1], &[0, 1], &[5, -1], &features).unwrap();
        let table = read_features_csv(&path).unwrap();
        assert_eq!(table.features.data(), features.data());
        assert_eq!(table.person_ids, vec![5, -1]);
    }

    #[test]
    fn attribute_roundtrip_and_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let labels = vec![
            AttributeVector::new(vec![1, 0, 1]).unwrap(),
            AttributeVector::new(vec![0, 0, 1]).unwrap(),
        ];
        write_attributes_csv(&path, &[3, 4], &labels).unwrap();
        let (ids, read) = read_attributes_csv(&path).unwrap();
        assert_eq!(ids, vec![3, 4]);
        assert_eq!(read, labels);
        assert!(check_aligned(&[3, 4], &[3, 4]).is_ok());
        assert!(check_aligned(&[3, 4], &[4, 3]).is_err());
    }

    #[test]
    fn rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "sample_id,camera_id,person_id,f0\n0,0,0\n").unwrap();
        assert!(matches!(read_features_csv(&path), Err(CliError::Data(_))));
        std::fs::write(&path, "sample_id,a0\n0,2\n").unwrap();
        assert!(matches!(read_attributes_csv(&path), Err(CliError::Data(_))));
    }
}
