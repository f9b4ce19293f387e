use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, FeatureSchema};
use crate::error::{Error, Result};

/// Rows of real-encoded feature values plus a binary label per row.
///
/// Feature columns follow the schema's non-label order. A missing cell is
/// stored as `NaN`; a missing label is tracked separately and its slot in
/// [`Cohort::labels`] holds a `0` placeholder until the row is dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    schema: FeatureSchema,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    row_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    missing_labels: BTreeSet<usize>,
}

impl Cohort {
    /// Builds a complete cohort. Values must be finite and labels in {0,1}.
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let d = schema.n_features();
        if rows.len() != labels.len() || rows.len() != row_ids.len() {
            return Err(Error::Contract(format!(
                "{} rows, {} labels and {} row ids",
                rows.len(),
                labels.len(),
                row_ids.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Contract(format!(
                    "row {i} has {} values, schema has {d} features",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("row {i} holds non-finite value {v}")));
            }
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Contract(format!("label {l} outside {{0,1}}")));
        }
        Ok(Cohort {
            schema,
            rows,
            labels,
            row_ids,
            missing_labels: BTreeSet::new(),
        })
    }

    /// Builds a cohort that may hold missing cells (`NaN`) and missing
    /// labels (`None`), as a raw load would.
    pub fn with_missing(
        schema: FeatureSchema,
        rows: Vec<Vec<f64>>,
        labels: Vec<Option<u8>>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let missing_labels: BTreeSet<usize> = (0..labels.len()).filter(|&i| labels[i].is_none()).collect();
        let filled = labels.iter().map(|l| l.unwrap_or(0)).collect();
        let probe: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect())
            .collect();
        Cohort::new(schema.clone(), probe, filled, row_ids).map(|c| Cohort {
            rows,
            missing_labels,
            ..c
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.feature_names()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    pub fn is_row_complete(&self, i: usize) -> bool {
        !self.missing_labels.contains(&i) && self.rows[i].iter().all(|v| !v.is_nan())
    }

    pub fn missing_cells(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.iter().filter(|v| v.is_nan()).count())
            .sum::<usize>()
            + self.missing_labels.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Rows at the given positions, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Cohort {
        let missing_labels = positions
            .iter()
            .enumerate()
            .filter(|(_, p)| self.missing_labels.contains(p))
            .map(|(i, _)| i)
            .collect();
        Cohort {
            schema: self.schema.clone(),
            rows: positions.iter().map(|&p| self.rows[p].clone()).collect(),
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
            row_ids: positions.iter().map(|&p| self.row_ids[p]).collect(),
            missing_labels,
        }
    }

    /// Keeps only the named features (schema order is preserved).
    pub fn select(&self, names: &[String]) -> Result<Cohort> {
        let schema = self.schema.restrict(names)?;
        let keep: Vec<usize> = schema
            .features()
            .map(|c| self.schema.feature_index(&c.name).expect("restricted from self"))
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| keep.iter().map(|&j| r[j]).collect())
            .collect();
        Ok(Cohort {
            schema,
            rows,
            labels: self.labels.clone(),
            row_ids: self.row_ids.clone(),
            missing_labels: self.missing_labels.clone(),
        })
    }

    pub(crate) fn with_rows(&self, rows: Vec<Vec<f64>>) -> Cohort {
        Cohort {
            rows,
            ..self.clone()
        }
    }

    /// Writes the cohort as CSV, decoding text categoricals back to their levels.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = self.schema.columns().iter().map(|c| c.name.as_str()).collect();
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut features = self.rows[i].iter();
            let mut record = Vec::with_capacity(header.len());
            for col in self.schema.columns() {
                if col.kind == ColumnKind::Label {
                    record.push(if self.missing_labels.contains(&i) {
                        String::new()
                    } else {
                        self.labels[i].to_string()
                    });
                    continue;
                }
                let v = *features.next().expect("row width matches schema");
                record.push(if v.is_nan() {
                    String::new()
                } else if !col.levels.is_empty() {
                    col.levels[v as usize].clone()
                } else {
                    format_value(v)
                });
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn parse_label(cell: &str) -> Option<u8> {
    match cell.to_ascii_lowercase().as_str() {
        "0" | "0.0" | "no" | "false" | "mortality (no)" => Some(0),
        "1" | "1.0" | "yes" | "true" | "mortality (yes)" => Some(1),
        _ => None,
    }
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a UTF-8, comma-separated file with a header row. Header order may
/// differ from the schema; `""` and `NA` mark missing cells.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Cohort> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::EmptyInput("file has no header row".into())),
    };
    let header: Vec<String> = header.iter().map(str::to_string).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyInput("file has an empty header row".into()));
    }

    let mut position = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if schema.column(h).is_none() {
            return Err(Error::Schema(format!("unknown column `{h}`")));
        }
        if position.insert(h.as_str(), i).is_some() {
            return Err(Error::Schema(format!("column `{h}` appears twice in header")));
        }
    }
    for c in schema.columns() {
        if !position.contains_key(c.name.as_str()) {
            return Err(Error::Schema(format!("missing column `{}`", c.name)));
        }
    }

    let raw: Vec<csv::StringRecord> = records.collect::<std::result::Result<_, _>>()?;
    if raw.is_empty() {
        return Err(Error::EmptyInput("file has no data rows".into()));
    }

    let mut schema = schema.clone();
    let label_pos = position[schema.label().name.as_str()];
    let feature_cols: Vec<(String, ColumnKind, usize)> = schema
        .features()
        .map(|c| (c.name.clone(), c.kind, position[c.name.as_str()]))
        .collect();

    // A categorical column is textual when any present cell is non-numeric;
    // every cell of a textual column is then coded as a level.
    let textual: Vec<bool> = feature_cols
        .iter()
        .map(|(_, kind, pos)| {
            *kind == ColumnKind::Categorical
                && raw.iter().any(|r| {
                    let cell = r.get(*pos).unwrap_or("");
                    !is_missing(cell) && parse_real(cell).is_none()
                })
        })
        .collect();
    for (j, t) in textual.iter().enumerate() {
        if *t {
            schema.feature_mut(j).levels.clear();
        }
    }

    let mut rows = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    let mut missing_labels = BTreeSet::new();
    for (i, record) in raw.iter().enumerate() {
        let line = i + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        let label_cell = &record[label_pos];
        if is_missing(label_cell) {
            missing_labels.insert(i);
            labels.push(0);
        } else {
            labels.push(parse_label(label_cell).ok_or_else(|| Error::Parse {
                row: line,
                column: schema.label().name.clone(),
                message: format!("`{label_cell}` is not a binary label"),
            })?);
        }

        let mut row = Vec::with_capacity(feature_cols.len());
        for (j, (name, _, pos)) in feature_cols.iter().enumerate() {
            let cell = &record[*pos];
            if is_missing(cell) {
                row.push(f64::NAN);
            } else if textual[j] {
                let col = schema.feature_mut(j);
                let code = match col.levels.iter().position(|l| l == cell) {
                    Some(c) => c,
                    None => {
                        col.levels.push(cell.to_string());
                        col.levels.len() - 1
                    }
                };
                row.push(code as f64);
            } else {
                row.push(parse_real(cell).ok_or_else(|| Error::Parse {
                    row: line,
                    column: name.clone(),
                    message: format!("`{cell}` is not a finite number"),
                })?);
            }
        }
        rows.push(row);
    }

    let n = rows.len();
    Ok(Cohort {
        schema,
        rows,
        labels,
        row_ids: (0..n).collect(),
        missing_labels,
    })
}

/// Removes every row holding a missing cell (label included), keeping order.
pub fn drop_incomplete(cohort: &Cohort) -> Result<Cohort> {
    let keep: Vec<usize> = (0..cohort.len()).filter(|&i| cohort.is_row_complete(i)).collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult(
            "every row has at least one missing cell".into(),
        ));
    }
    Ok(cohort.subset(&keep))
}

/// Re-codes text categoricals to `0..k` in first-appearance order over the
/// current rows, compacting levels that no longer occur. Numerically coded
/// categoricals are left untouched.
pub fn encode_categoricals(cohort: &Cohort) -> Cohort {
    let mut out = cohort.clone();
    let features: Vec<(usize, Vec<String>)> = cohort
        .schema
        .features()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Categorical && !c.levels.is_empty())
        .map(|(j, c)| (j, c.levels.clone()))
        .collect();
    for (j, levels) in features {
        let mut order: Vec<usize> = Vec::new();
        for r in &cohort.rows {
            let v = r[j];
            if !v.is_nan() && !order.contains(&(v as usize)) {
                order.push(v as usize);
            }
        }
        let remap: HashMap<usize, usize> =
            order.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        for r in &mut out.rows {
            if !r[j].is_nan() {
                r[j] = remap[&(r[j] as usize)] as f64;
            }
        }
        out.schema.feature_mut(j).levels = order.iter().map(|&o| levels[o].clone()).collect();
    }
    out
}
