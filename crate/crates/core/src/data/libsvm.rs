use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dataset, Features, SparseRow};
use crate::error::{Error, Result};

/// Reads a LIBSVM file. See [`read_libsvm`].
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_libsvm(BufReader::new(File::open(path)?), path)
}

/// Parses `label idx:val idx:val ...` lines with 1-based indices.
///
/// Blank lines and `#` comments are skipped. Distinct label values become
/// classes `0..L` in ascending numeric order. `origin` only appears in error
/// messages.
pub fn read_libsvm<R: BufRead>(reader: R, origin: impl AsRef<Path>) -> Result<Dataset> {
    let origin = origin.as_ref();
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let mut raw_labels = Vec::new();
    let mut rows = Vec::new();
    let mut dim = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(lineno, format!("bad label `{label_tok}`")))?;

        let mut pairs = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("malformed token `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .ok()
                .filter(|&j| j >= 1)
                .ok_or_else(|| err(lineno, format!("bad index in `{tok}` (indices are 1-based)")))?;
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(lineno, format!("bad value in `{tok}`")))?;
            pairs.push((idx - 1, val));
        }
        let row = SparseRow::from_pairs(pairs).map_err(|e| err(lineno, e.to_string()))?;
        if let Some(&last) = row.indices.last() {
            dim = dim.max(last + 1);
        }
        raw_labels.push(label);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{}: no examples", origin.display())));
    }

    let mut classes = raw_labels.clone();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    let labels = raw_labels
        .iter()
        .map(|v| classes.binary_search_by(|c| c.total_cmp(v)).expect("label present"))
        .collect();
    Dataset::new(Features::Sparse { rows, dim }, Some(labels), classes)
}

/// Writes `ds` in LIBSVM format; zero entries are omitted and unlabelled
/// rows are written with label 0.
pub fn write_libsvm(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..ds.len() {
        let label = ds.labels.as_ref().map_or(0.0, |l| ds.classes[l[i]]);
        write!(w, "{label}")?;
        match &ds.features {
            Features::Sparse { rows, .. } => {
                for (j, v) in rows[i].iter() {
                    write!(w, " {}:{v}", j + 1)?;
                }
            }
            Features::Dense(x) => {
                for (j, &v) in x.row(i).iter().enumerate() {
                    if v != 0.0 {
                        write!(w, " {}:{v}", j + 1)?;
                    }
                }
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
