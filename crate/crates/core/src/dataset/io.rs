//! Manifest + CSV interchange format.
//!
//! The manifest is a flat `key = value` file:
//!
//! ```text
//! features = features.csv     # N rows × d_v
//! labels = labels.csv         # N rows, one class id each
//! attributes = attributes.csv # C rows × d_a
//! splits = splits.csv         # "index,split" rows; split is train | test_seen | test_unseen
//! d_v = 2048
//! d_a = 85
//! ```
//!
//! Relative paths are resolved against the manifest's directory. The optional
//! keys `num_seen` and `num_unseen` are checked against the class sets the
//! splits imply.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DatasetParts, Split, ZslDataset};
use crate::error::DataError;

pub const MANIFEST_FILE: &str = "manifest.txt";

const REQUIRED: [&str; 6] = ["features", "labels", "attributes", "splits", "d_v", "d_a"];
const OPTIONAL: [&str; 2] = ["num_seen", "num_unseen"];

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_manifest(path: &Path) -> Result<BTreeMap<String, String>, DataError> {
    let text = read(path)?;
    let bad = |msg: String| DataError::Manifest {
        path: path.to_path_buf(),
        msg,
    };
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !REQUIRED.contains(&k) && !OPTIONAL.contains(&k) {
            return Err(bad(format!("line {}: unknown key {k:?}", no + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("line {}: duplicate key {k:?}", no + 1)));
        }
    }
    for k in REQUIRED {
        if !map.contains_key(k) {
            return Err(bad(format!("missing key {k:?}")));
        }
    }
    Ok(map)
}

fn manifest_usize(path: &Path, map: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>, DataError> {
    map.get(key)
        .map(|v| {
            v.parse::<usize>().map_err(|_| DataError::Manifest {
                path: path.to_path_buf(),
                msg: format!("{key} must be a non-negative integer, got {v:?}"),
            })
        })
        .transpose()
}

/// Parses a headerless numeric matrix with exactly `width` columns.
fn read_matrix(path: &Path, width: usize) -> Result<(Vec<f64>, usize), DataError> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let fields: Vec<&str> = if line.trim().is_empty() {
            Vec::new()
        } else {
            line.split(',').collect()
        };
        if fields.len() != width {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                line: line_no,
                expected: width,
                found: fields.len(),
            });
        }
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                value: f.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    path: path.to_path_buf(),
                    line: line_no,
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok((data, rows))
}

fn read_labels(path: &Path, num_classes: usize) -> Result<Vec<usize>, DataError> {
    let text = read(path)?;
    let mut labels = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let field = line.trim();
        let id: usize = field.parse().map_err(|_| DataError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            value: field.to_string(),
        })?;
        if id >= num_classes {
            return Err(DataError::UnknownClass {
                path: path.to_path_buf(),
                line: line_no,
                id,
            });
        }
        labels.push(id);
    }
    Ok(labels)
}

fn read_splits(path: &Path, n: usize) -> Result<[Vec<usize>; 3], DataError> {
    let text = read(path)?;
    let mut out: [Vec<usize>; 3] = Default::default();
    let mut assigned = vec![false; n];
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                line: line_no,
                expected: 2,
                found: fields.len(),
            });
        }
        let index: usize = fields[0].parse().map_err(|_| DataError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            value: fields[0].to_string(),
        })?;
        if index >= n {
            return Err(DataError::IndexOutOfRange {
                path: path.to_path_buf(),
                line: line_no,
                index,
            });
        }
        let split = Split::parse(fields[1]).ok_or_else(|| DataError::UnknownSplit {
            path: path.to_path_buf(),
            line: line_no,
            name: fields[1].to_string(),
        })?;
        if std::mem::replace(&mut assigned[index], true) {
            return Err(DataError::DuplicateIndex {
                path: path.to_path_buf(),
                line: line_no,
                index,
            });
        }
        let slot = match split {
            Split::Train => 0,
            Split::TestSeen => 1,
            Split::TestUnseen => 2,
        };
        out[slot].push(index);
    }
    Ok(out)
}

/// Loads and validates a dataset from its manifest.
pub fn load(manifest_path: impl AsRef<Path>) -> Result<ZslDataset, DataError> {
    let manifest_path = manifest_path.as_ref();
    let map = parse_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let file = |key: &str| -> PathBuf { base.join(&map[key]) };
    let d_v = manifest_usize(manifest_path, &map, "d_v")?.unwrap_or(0);
    let d_a = manifest_usize(manifest_path, &map, "d_a")?.unwrap_or(0);
    if d_v == 0 || d_a == 0 {
        return Err(DataError::Manifest {
            path: manifest_path.to_path_buf(),
            msg: "d_v and d_a must be positive".into(),
        });
    }

    let (semantics, num_classes) = read_matrix(&file("attributes"), d_a)?;
    let (visual, n) = read_matrix(&file("features"), d_v)?;
    let labels_path = file("labels");
    let labels = read_labels(&labels_path, num_classes)?;
    if labels.len() != n {
        return Err(DataError::Manifest {
            path: manifest_path.to_path_buf(),
            msg: format!("{} has {} rows but {} has {n}", labels_path.display(), labels.len(), file("features").display()),
        });
    }
    let [train, test_seen, test_unseen] = read_splits(&file("splits"), n)?;
    let ds = ZslDataset::new(DatasetParts {
        d_v,
        d_a,
        visual,
        labels,
        semantics,
        train,
        test_seen,
        test_unseen,
    })?;

    for (key, actual) in [("num_seen", ds.seen_classes().len()), ("num_unseen", ds.unseen_classes().len())] {
        if let Some(declared) = manifest_usize(manifest_path, &map, key)? {
            if declared != actual {
                return Err(DataError::Manifest {
                    path: manifest_path.to_path_buf(),
                    msg: format!("{key} = {declared} but the splits imply {actual}"),
                });
            }
        }
    }
    Ok(ds)
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn matrix_csv(data: &[f64], width: usize) -> String {
    let mut out = String::new();
    for row in data.chunks(width) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // Debug formatting of f64 is the shortest exact round-trip form.
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Writes the four CSVs and a manifest into `dir`; returns the manifest path.
pub fn save(ds: &ZslDataset, dir: impl AsRef<Path>) -> Result<PathBuf, DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let parts = ds.to_parts();
    write(&dir.join("features.csv"), &matrix_csv(&parts.visual, parts.d_v))?;
    write(&dir.join("attributes.csv"), &matrix_csv(&parts.semantics, parts.d_a))?;
    let mut labels = String::new();
    for l in &parts.labels {
        let _ = writeln!(labels, "{l}");
    }
    write(&dir.join("labels.csv"), &labels)?;

    let mut tagged: Vec<(usize, Split)> = Vec::with_capacity(ds.len());
    for (split, idx) in [
        (Split::Train, &parts.train),
        (Split::TestSeen, &parts.test_seen),
        (Split::TestUnseen, &parts.test_unseen),
    ] {
        tagged.extend(idx.iter().map(|&i| (i, split)));
    }
    tagged.sort_by_key(|&(i, _)| i);
    let mut splits = String::new();
    for (i, s) in tagged {
        let _ = writeln!(splits, "{i},{}", s.name());
    }
    write(&dir.join("splits.csv"), &splits)?;

    let manifest = format!(
        "features = features.csv\nlabels = labels.csv\nattributes = attributes.csv\nsplits = splits.csv\n\
         d_v = {}\nd_a = {}\nnum_seen = {}\nnum_unseen = {}\n",
        parts.d_v,
        parts.d_a,
        ds.seen_classes().len(),
        ds.unseen_classes().len()
    );
    let path = dir.join(MANIFEST_FILE);
    write(&path, &manifest)?;
    Ok(path)
}
