use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use super::{Features, TaskSet};
use crate::error::{Error, Result};

/// Header prefix marking a label column.
pub const LABEL_PREFIX: &str = "label:";

const MISSING: [&str; 3] = ["", "?", "NA"];

/// Reads a multi-label CSV file. See [`read_multilabel_csv`].
pub fn load_multilabel_csv(path: impl AsRef<Path>) -> Result<TaskSet> {
    let path = path.as_ref();
    read_multilabel_csv(File::open(path)?, path)
}

/// Parses a CSV whose header lists feature columns followed by columns named
/// `label:<task>`.
///
/// Label cells accept `1`/`+1` (positive) and `0`/`-1` (negative); empty,
/// `?` and `NA` mark a missing label. Every labelled row starts out in its
/// task's training set.
pub fn read_multilabel_csv<R: Read>(reader: R, origin: impl AsRef<Path>) -> Result<TaskSet> {
    let origin = origin.as_ref();
    let err = |line: u64, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line: line as usize,
        msg,
    };

    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let n_features = header.iter().take_while(|h| !h.starts_with(LABEL_PREFIX)).count();
    let task_names: Vec<String> = header
        .iter()
        .skip(n_features)
        .map(|h| {
            h.strip_prefix(LABEL_PREFIX)
                .map(str::to_owned)
                .ok_or_else(|| err(1, format!("feature column `{h}` after the label columns")))
        })
        .collect::<Result<_>>()?;
    if task_names.is_empty() {
        return Err(err(1, format!("no `{LABEL_PREFIX}` columns in header")));
    }
    let width = header.len();

    let mut values = Vec::new();
    let mut labels: Vec<Vec<Option<i8>>> = vec![Vec::new(); task_names.len()];
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(err(line, format!("row has {} fields, header has {width}", record.len())));
        }
        for (j, cell) in record.iter().take(n_features).enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(line, format!("non-numeric feature `{cell}` in column {}", j + 1)))?;
            values.push(v);
        }
        for (m, cell) in record.iter().skip(n_features).enumerate() {
            let y = match cell {
                c if MISSING.contains(&c) => None,
                "1" | "+1" => Some(1),
                "0" | "-1" => Some(-1),
                c => return Err(err(line, format!("bad label `{c}` for task `{}`", task_names[m]))),
            };
            labels[m].push(y);
        }
    }
    let n = labels[0].len();
    if n == 0 {
        return Err(Error::Empty(format!("{}: no examples", origin.display())));
    }
    let x = Array2::from_shape_vec((n, n_features), values).expect("row lengths checked");
    let mut ts = TaskSet::new(Features::Dense(x), labels, task_names)?;
    ts.feature_names = Some(header.iter().take(n_features).map(str::to_owned).collect());
    Ok(ts)
}

/// Writes `ts` in the format read by [`read_multilabel_csv`], labels as
/// `1`/`0` and missing labels as empty cells.
pub fn write_multilabel_csv(ts: &TaskSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let feature_names = match &ts.feature_names {
        Some(names) => names.clone(),
        None => (1..=ts.dim()).map(|j| format!("x{j}")).collect(),
    };
    let header = feature_names
        .into_iter()
        .chain(ts.task_names.iter().map(|t| format!("{LABEL_PREFIX}{t}")));
    w.write_record(header)?;
    let x = ts.features.to_dense();
    for n in 0..ts.len() {
        let xn = x.row(n);
        let row = xn
            .iter()
            .map(|v| v.to_string())
            .chain(ts.labels.iter().map(|col| match col[n] {
                Some(1) => "1".to_owned(),
                Some(_) => "0".to_owned(),
                None => String::new(),
            }));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
