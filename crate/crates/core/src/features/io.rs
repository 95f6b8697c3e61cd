//! Feature CSV files (`f01..f28,label,attack_type,origin`) and adapters for
//! third-party flow CSVs via a column mapping.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{column_index, column_name, FeatureVector, Label, LabeledSample, BENIGN_TAG, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::kv::read_kv;

pub fn feature_header() -> Vec<String> {
    let mut h: Vec<String> = (0..FEATURE_COUNT).map(column_name).collect();
    h.extend(["label".into(), "attack_type".into(), "origin".into()]);
    h
}

pub fn write_feature_csv(samples: &[LabeledSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(feature_header())?;
    let mut row: Vec<String> = Vec::with_capacity(FEATURE_COUNT + 3);
    for s in samples {
        row.clear();
        row.extend(s.features.values.iter().map(|v| format!("{v}")));
        row.push(s.label.as_u8().to_string());
        row.push(s.attack_type.clone());
        row.push(s.origin.clone());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Where an external column goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnTarget {
    Feature(usize),
    Label,
    AttackType,
    Origin,
}

impl ColumnTarget {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "label" => Some(ColumnTarget::Label),
            "attack_type" => Some(ColumnTarget::AttackType),
            "origin" => Some(ColumnTarget::Origin),
            other => column_index(other).map(ColumnTarget::Feature),
        }
    }
}

/// `external_name = fNN | label | attack_type | origin`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnMapping {
    pub columns: BTreeMap<String, ColumnTarget>,
}

impl ColumnMapping {
    /// The identity mapping for this crate's own header.
    pub fn native() -> Self {
        let columns = feature_header()
            .into_iter()
            .map(|h| {
                let t = ColumnTarget::parse(&h).expect("native header");
                (h, t)
            })
            .collect();
        ColumnMapping { columns }
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: AsRef<str>,
    {
        let mut columns = BTreeMap::new();
        for (k, v) in pairs {
            let k = k.into();
            let target = ColumnTarget::parse(v.as_ref()).ok_or_else(|| Error::Schema {
                column: k.clone(),
                reason: format!("maps to unknown target `{}`", v.as_ref()),
            })?;
            columns.insert(k, target);
        }
        Ok(ColumnMapping { columns })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_pairs(read_kv(path)?)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..FEATURE_COUNT {
            if !self.columns.values().any(|t| *t == ColumnTarget::Feature(i)) {
                return Err(Error::Schema {
                    column: column_name(i),
                    reason: "is not provided".into(),
                });
            }
        }
        let has = |t: ColumnTarget| self.columns.values().any(|x| *x == t);
        if !has(ColumnTarget::Label) && !has(ColumnTarget::AttackType) {
            return Err(Error::Schema {
                column: "label".into(),
                reason: "is not provided (nor attack_type)".into(),
            });
        }
        Ok(())
    }
}

/// Reads a feature CSV in this crate's own schema. All feature columns are
/// required; of `label`, `attack_type` and `origin` any subset holding a
/// label or attack type will do.
pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let headers = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file))
        .headers()?
        .clone();
    let mut mapping = ColumnMapping::native();
    mapping.columns.retain(|name, target| {
        matches!(target, ColumnTarget::Feature(_)) || headers.iter().any(|h| h == name)
    });
    read_feature_csv_mapped(path, &mapping, "")
}

/// Reads any flow CSV through `mapping`. Missing `origin` falls back to
/// `default_origin`; a missing label is derived from the attack type and
/// vice versa. Blank or non-finite feature cells become absent zeros.
pub fn read_feature_csv_mapped(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
    default_origin: &str,
) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    mapping.validate()?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(std::io::BufReader::new(file));
    let headers = rdr.headers()?.clone();

    let mut slots: Vec<(usize, ColumnTarget)> = Vec::new();
    for (name, target) in &mapping.columns {
        let pos = headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.clone(),
            reason: "is missing from the file header".into(),
        })?;
        slots.push((pos, *target));
    }

    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    let mut line = 1;
    while rdr.read_record(&mut rec)? {
        line += 1;
        let mut fv = FeatureVector::default();
        let mut label = None;
        let mut tag: Option<String> = None;
        let mut origin: Option<String> = None;
        for &(pos, target) in &slots {
            let cell = rec.get(pos).unwrap_or("");
            match target {
                ColumnTarget::Feature(i) => {
                    if cell.is_empty() {
                        fv.set(i + 1, 0.0, false);
                        continue;
                    }
                    let v: f64 = cell.parse().map_err(|_| {
                        parse_err(line, format!("{}: `{cell}` is not a number", column_name(i)))
                    })?;
                    if v.is_finite() {
                        fv.set(i + 1, v, true);
                    } else {
                        fv.set(i + 1, 0.0, false);
                    }
                }
                ColumnTarget::Label => {
                    label = Some(Label::parse(cell).ok_or_else(|| {
                        parse_err(line, format!("label `{cell}` is not benign/malicious"))
                    })?);
                }
                ColumnTarget::AttackType => tag = Some(cell.to_owned()),
                ColumnTarget::Origin => origin = Some(cell.to_owned()),
            }
        }
        let (label, tag) = match (label, tag) {
            (Some(l), Some(t)) => (l, t),
            (Some(Label::Benign), None) => (Label::Benign, BENIGN_TAG.to_owned()),
            (Some(Label::Malicious), None) => (Label::Malicious, "Malicious".to_owned()),
            (None, Some(t)) if t.eq_ignore_ascii_case(BENIGN_TAG) => {
                (Label::Benign, BENIGN_TAG.to_owned())
            }
            (None, Some(t)) => (Label::Malicious, t),
            (None, None) => unreachable!("mapping validated"),
        };
        let sample = LabeledSample::new(
            fv,
            label,
            tag,
            origin.unwrap_or_else(|| default_origin.to_owned()),
        )
        .map_err(|e| parse_err(line, e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}

/// Writes a human-editable mapping file.
pub fn write_mapping(mapping: &ColumnMapping, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    for (k, t) in &mapping.columns {
        let v = match t {
            ColumnTarget::Feature(i) => column_name(*i),
            ColumnTarget::Label => "label".into(),
            ColumnTarget::AttackType => "attack_type".into(),
            ColumnTarget::Origin => "origin".into(),
        };
        writeln!(f, "{k} = {v}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
