//! Domain types and the immutable dataset container.
//!
//! A two-session experiment observes, per unit, the tuple
//! `(a0, l1, a1, y)`: first treatment, intermediate outcome, second
//! treatment, final outcome. Treatments are binary; `l1` and `y` are
//! either categorical (level codes) or continuous, declared explicitly
//! per dataset rather than inferred from data.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An intervention vector ā = (a0, a1), both components in {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPath")]
pub struct TreatmentPath {
    a0: u8,
    a1: u8,
}

#[derive(Deserialize)]
struct RawPath {
    a0: u8,
    a1: u8,
}

impl TryFrom<RawPath> for TreatmentPath {
    type Error = Error;
    fn try_from(raw: RawPath) -> Result<Self> {
        TreatmentPath::new(raw.a0, raw.a1)
    }
}

impl TreatmentPath {
    pub fn new(a0: u8, a1: u8) -> Result<Self> {
        if a0 > 1 || a1 > 1 {
            return Err(Error::InvalidInput(format!(
                "treatment must be 0 or 1, got ({a0}, {a1})"
            )));
        }
        Ok(Self { a0, a1 })
    }

    pub fn a0(&self) -> u8 {
        self.a0
    }

    pub fn a1(&self) -> u8 {
        self.a1
    }
}

impl FromStr for TreatmentPath {
    type Err = Error;

    /// Parses the CLI form "a0,a1", e.g. "1,0".
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "treatment path must be \"a0,a1\", got {s:?}"
            )));
        }
        let parse = |p: &str| {
            p.trim()
                .parse::<u8>()
                .map_err(|_| Error::InvalidInput(format!("treatment path component {p:?} is not 0/1")))
        };
        TreatmentPath::new(parse(parts[0])?, parse(parts[1])?)
    }
}

/// A contrast τ_{ā,ā'} between two treatment paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub path_a: TreatmentPath,
    pub path_a_prime: TreatmentPath,
}

impl EstimandSpec {
    pub fn new(path_a: TreatmentPath, path_a_prime: TreatmentPath) -> Self {
        Self { path_a, path_a_prime }
    }

    /// The paper's default contrast, (1,1) vs (0,0).
    pub fn full_contrast() -> Self {
        Self {
            path_a: TreatmentPath::new(1, 1).unwrap(),
            path_a_prime: TreatmentPath::new(0, 0).unwrap(),
        }
    }
}

/// A realized outcome value: a categorical level code or a real number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum OutcomeValue {
    Categorical(usize),
    Continuous(f64),
}

impl OutcomeValue {
    /// Numeric representation: the level code for categoricals, the value
    /// itself for continuous outcomes.
    pub fn as_numeric(&self) -> f64 {
        match self {
            OutcomeValue::Categorical(k) => *k as f64,
            OutcomeValue::Continuous(x) => *x,
        }
    }

    pub fn as_level(&self) -> Option<usize> {
        match self {
            OutcomeValue::Categorical(k) => Some(*k),
            OutcomeValue::Continuous(_) => None,
        }
    }
}

/// Declared support of an outcome variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Categorical { levels: usize },
    Continuous,
}

impl Support {
    pub fn is_categorical(&self) -> bool {
        matches!(self, Support::Categorical { .. })
    }

    pub fn levels(&self) -> Option<usize> {
        match self {
            Support::Categorical { levels } => Some(*levels),
            Support::Continuous => None,
        }
    }

    pub fn admits(&self, v: &OutcomeValue) -> bool {
        match (self, v) {
            (Support::Categorical { levels }, OutcomeValue::Categorical(k)) => k < levels,
            (Support::Continuous, OutcomeValue::Continuous(x)) => x.is_finite(),
            _ => false,
        }
    }
}

impl FromStr for Support {
    type Err = Error;

    /// Parses "continuous" or "categorical:<levels>".
    fn from_str(s: &str) -> Result<Self> {
        if s == "continuous" {
            return Ok(Support::Continuous);
        }
        if let Some(rest) = s.strip_prefix("categorical:") {
            let levels: usize = rest
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad level count in support {s:?}")))?;
            if levels == 0 {
                return Err(Error::InvalidInput("categorical support needs >= 1 level".into()));
            }
            return Ok(Support::Categorical { levels });
        }
        Err(Error::InvalidInput(format!(
            "support must be \"continuous\" or \"categorical:<levels>\", got {s:?}"
        )))
    }
}

/// One experimental unit's observed tuple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub a0: u8,
    pub l1: OutcomeValue,
    pub a1: u8,
    pub y: OutcomeValue,
}

/// Immutable, validated collection of units with declared supports.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    unit_ids: Vec<String>,
    units: Vec<Unit>,
    l_support: Support,
    y_support: Support,
}

impl Dataset {
    /// Builds a dataset with synthetic unit ids "0", "1", ...
    pub fn new(units: Vec<Unit>, l_support: Support, y_support: Support) -> Result<Self> {
        let ids = (0..units.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, units, l_support, y_support)
    }

    pub fn with_ids(
        unit_ids: Vec<String>,
        units: Vec<Unit>,
        l_support: Support,
        y_support: Support,
    ) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if unit_ids.len() != units.len() {
            return Err(Error::InvalidInput(format!(
                "{} unit ids for {} units",
                unit_ids.len(),
                units.len()
            )));
        }
        for (row, u) in units.iter().enumerate() {
            validate_unit(row, u, &l_support, &y_support)?;
        }
        Ok(Self { unit_ids, units, l_support, y_support })
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn l_support(&self) -> Support {
        self.l_support
    }

    pub fn y_support(&self) -> Support {
        self.y_support
    }

    /// Content hash used by the benchmark harness to assert that all
    /// estimators in a cell consumed the identical dataset.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (id, u) in self.unit_ids.iter().zip(&self.units) {
            id.hash(&mut h);
            u.a0.hash(&mut h);
            u.a1.hash(&mut h);
            hash_value(&u.l1, &mut h);
            hash_value(&u.y, &mut h);
        }
        h.finish()
    }
}

fn hash_value<H: Hasher>(v: &OutcomeValue, h: &mut H) {
    match v {
        OutcomeValue::Categorical(k) => {
            0u8.hash(h);
            k.hash(h);
        }
        OutcomeValue::Continuous(x) => {
            1u8.hash(h);
            x.to_bits().hash(h);
        }
    }
}

fn validate_unit(row: usize, u: &Unit, l_support: &Support, y_support: &Support) -> Result<()> {
    if u.a0 > 1 {
        return Err(Error::MalformedRow {
            row,
            field: "a0",
            msg: format!("treatment must be 0 or 1 (row {row})"),
        });
    }
    if u.a1 > 1 {
        return Err(Error::MalformedRow {
            row,
            field: "a1",
            msg: format!("treatment must be 0 or 1 (row {row})"),
        });
    }
    if !l_support.admits(&u.l1) {
        return Err(Error::MalformedRow {
            row,
            field: "l1",
            msg: format!("value {:?} outside declared support {:?}", u.l1, l_support),
        });
    }
    if !y_support.admits(&u.y) {
        return Err(Error::MalformedRow {
            row,
            field: "y",
            msg: format!("value {:?} outside declared support {:?}", u.y, y_support),
        });
    }
    Ok(())
}

pub const CSV_HEADER: &str = "unit_id,a0,l1,a1,y";

/// Serializes an outcome value for the CSV format. Continuous values use
/// 17 significant digits so round trips are exact at double precision.
fn format_value(v: &OutcomeValue) -> String {
    match v {
        OutcomeValue::Categorical(k) => k.to_string(),
        OutcomeValue::Continuous(x) => format!("{x:.16e}"),
    }
}

fn parse_value(row: usize, field: &'static str, s: &str, support: &Support) -> Result<OutcomeValue> {
    let v = match support {
        Support::Categorical { .. } => {
            let k: usize = s.trim().parse().map_err(|_| Error::MalformedRow {
                row,
                field,
                msg: format!("{s:?} is not a categorical level code"),
            })?;
            OutcomeValue::Categorical(k)
        }
        Support::Continuous => {
            let x: f64 = s.trim().parse().map_err(|_| Error::MalformedRow {
                row,
                field,
                msg: format!("{s:?} is not a real number"),
            })?;
            OutcomeValue::Continuous(x)
        }
    };
    if !support.admits(&v) {
        return Err(Error::MalformedRow {
            row,
            field,
            msg: format!("value {s:?} outside declared support {support:?}"),
        });
    }
    Ok(v)
}

fn parse_treatment(row: usize, field: &'static str, s: &str) -> Result<u8> {
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::MalformedRow {
            row,
            field,
            msg: format!("treatment must be 0 or 1 (row {row}), got {s:?}"),
        }),
    }
}

/// Loads the CSV format described in the README (`unit_id,a0,l1,a1,y`).
pub fn load_dataset<R: Read>(reader: R, l_support: Support, y_support: Support) -> Result<Dataset> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or(Error::EmptyDataset)?
        .map_err(Error::Io)?;
    if header.trim_end() != CSV_HEADER {
        return Err(Error::InvalidInput(format!(
            "expected header {CSV_HEADER:?}, got {header:?}"
        )));
    }
    let mut ids = Vec::new();
    let mut units = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::MalformedRow {
                row,
                field: "record",
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        ids.push(fields[0].to_string());
        units.push(Unit {
            a0: parse_treatment(row, "a0", fields[1])?,
            l1: parse_value(row, "l1", fields[2], &l_support)?,
            a1: parse_treatment(row, "a1", fields[3])?,
            y: parse_value(row, "y", fields[4], &y_support)?,
        });
    }
    Dataset::with_ids(ids, units, l_support, y_support)
}

pub fn load_dataset_path<P: AsRef<Path>>(
    path: P,
    l_support: Support,
    y_support: Support,
) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    load_dataset(f, l_support, y_support)
}

/// Writes the CSV format accepted by [`load_dataset`]. LF line endings.
pub fn save_dataset<W: Write>(dataset: &Dataset, mut writer: W) -> Result<()> {
    writeln!(writer, "{CSV_HEADER}")?;
    for (id, u) in dataset.unit_ids().iter().zip(dataset.units()) {
        if id.contains([',', '"', '\n', '\r']) {
            return Err(Error::InvalidInput(format!(
                "unit id {id:?} contains a CSV delimiter"
            )));
        }
        writeln!(
            writer,
            "{},{},{},{},{}",
            id,
            u.a0,
            format_value(&u.l1),
            u.a1,
            format_value(&u.y)
        )?;
    }
    Ok(())
}

pub fn save_dataset_path<P: AsRef<Path>>(dataset: &Dataset, path: P) -> Result<()> {
    let f = std::fs::File::create(path)?;
    save_dataset(dataset, std::io::BufWriter::new(f))
}
