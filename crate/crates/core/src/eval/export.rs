use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use autodiff::Tensor;

use super::heads::synthesize_features;
use crate::dataset::{Split, ZslDataset};
use crate::error::{Error, Result};
use crate::gan::GanBundle;
use crate::metric::{ClassRepTable, MetricNet, Srn};

const MAX_POWER_ITERS: usize = 1000;

/// Projection of row vectors onto their top two principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Two orthonormal directions, largest variance first.
    pub axes: [Vec<f64>; 2],
    pub variances: [f64; 2],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 1e-300 {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    n
}

fn mat_vec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| dot(row, v)).collect()
}

impl Pca2 {
    /// Fits on `rows` by block power iteration on the covariance, followed by a
    /// 2×2 Rayleigh-Ritz rotation.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Pca2> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Invalid("PCA needs a non-empty rectangular point set".into()));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n as f64);
        }
        let mut cov = vec![vec![0.0; d]; d];
        for r in rows {
            let c: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
            for i in 0..d {
                for j in i..d {
                    cov[i][j] += c[i] * c[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i][j] /= n as f64;
                cov[j][i] = cov[i][j];
            }
        }

        // Deterministic start vectors, not aligned with any axis.
        let mut u: Vec<f64> = (0..d).map(|i| 1.0 + 0.37 * i as f64).collect();
        let mut w: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 1.0 } else { -0.6 - 0.01 * i as f64 }).collect();
        orthonormalize(&mut u, &mut w);
        for _ in 0..MAX_POWER_ITERS {
            let mut nu = mat_vec(&cov, &u);
            let mut nw = mat_vec(&cov, &w);
            orthonormalize(&mut nu, &mut nw);
            let change = (1.0 - dot(&nu, &u).abs()) + (1.0 - dot(&nw, &w).abs());
            u = nu;
            w = nw;
            if change < 1e-15 {
                break;
            }
        }

        // Rotate within span{u, w} to the eigenvectors of the projected covariance.
        let (cu, cw) = (mat_vec(&cov, &u), mat_vec(&cov, &w));
        let (h11, h12, h22) = (dot(&u, &cu), dot(&u, &cw), dot(&w, &cw));
        let theta = 0.5 * (2.0 * h12).atan2(h11 - h22);
        let (s, c) = theta.sin_cos();
        let mut e1: Vec<f64> = u.iter().zip(&w).map(|(a, b)| c * a + s * b).collect();
        let mut e2: Vec<f64> = u.iter().zip(&w).map(|(a, b)| -s * a + c * b).collect();
        let mut l1 = dot(&e1, &mat_vec(&cov, &e1));
        let mut l2 = dot(&e2, &mat_vec(&cov, &e2));
        if l2 > l1 {
            std::mem::swap(&mut e1, &mut e2);
            std::mem::swap(&mut l1, &mut l2);
        }
        // Sign convention: largest-magnitude entry positive.
        for e in [&mut e1, &mut e2] {
            let k = (0..d).fold(0, |b, i| if e[i].abs() > e[b].abs() { i } else { b });
            if e[k] < 0.0 {
                e.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(Pca2 {
            mean,
            axes: [e1, e2],
            variances: [l1.max(0.0), l2.max(0.0)],
        })
    }

    pub fn project(&self, row: &[f64]) -> [f64; 2] {
        let c: Vec<f64> = row.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        [dot(&c, &self.axes[0]), dot(&c, &self.axes[1])]
    }
}

fn orthonormalize(u: &mut [f64], w: &mut [f64]) {
    normalize(u);
    let p = dot(u, w);
    w.iter_mut().zip(u.iter()).for_each(|(x, y)| *x -= p * y);
    normalize(w);
}

/// One exported point: what it is, its id, its class, and its vector.
struct Point {
    kind: &'static str,
    id: usize,
    class: usize,
    tag: &'static str,
    values: Vec<f64>,
}

fn write_points(dir: &Path, stem: &str, points: &[Point]) -> Result<Vec<PathBuf>> {
    let width = points.first().map_or(0, |p| p.values.len());
    let mut full = String::from("kind,id,class,split");
    for k in 1..=width {
        let _ = write!(full, ",v{k}");
    }
    full.push('\n');
    let mut pca_out = String::from("kind,id,class,split,pc1,pc2\n");
    let rows: Vec<Vec<f64>> = points.iter().map(|p| p.values.clone()).collect();
    let pca = Pca2::fit(&rows)?;
    for p in points {
        let _ = write!(full, "{},{},{},{}", p.kind, p.id, p.class, p.tag);
        for v in &p.values {
            let _ = write!(full, ",{v:?}");
        }
        full.push('\n');
        let [x, y] = pca.project(&p.values);
        let _ = writeln!(pca_out, "{},{},{},{},{x:?},{y:?}", p.kind, p.id, p.class, p.tag);
    }
    let a = dir.join(format!("{stem}.csv"));
    let b = dir.join(format!("{stem}_pca.csv"));
    fs::write(&a, full).map_err(|e| Error::io(&a, e))?;
    fs::write(&b, pca_out).map_err(|e| Error::io(&b, e))?;
    Ok(vec![a, b])
}

fn split_tag(ds: &ZslDataset, i: usize) -> &'static str {
    for s in [Split::Train, Split::TestSeen, Split::TestUnseen] {
        if ds.split(s).binary_search(&i).is_ok() {
            return s.name();
        }
    }
    "none"
}

/// Writes `representations.csv` (one row per instance, then one per class),
/// its PCA projection, and, when a generator is given, `features.csv` with
/// `per_class` synthesized rows per class next to every real instance.
///
/// Every file starts with a header line. Returns the written paths.
pub fn export_representations(
    m: &MetricNet,
    r: &Srn,
    ds: &ZslDataset,
    generator: Option<&GanBundle>,
    per_class: usize,
    dir: &Path,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let x = ds.visual_rows(&all)?;
    let a = ds.semantic_rows(ds.labels())?;
    let reps = m.embed(&x, &a)?;
    let table = ClassRepTable::build(m, r, ds)?;
    let mut points: Vec<Point> = all
        .iter()
        .map(|&i| Point {
            kind: "instance",
            id: i,
            class: ds.label(i),
            tag: split_tag(ds, i),
            values: reps.row(i).to_vec(),
        })
        .collect();
    for c in 0..ds.num_classes() {
        points.push(Point {
            kind: "class",
            id: c,
            class: c,
            tag: if ds.is_unseen(c) { "unseen" } else { "seen" },
            values: table.row(c).to_vec(),
        });
    }
    let mut written = write_points(dir, "representations", &points)?;

    if let Some(bundle) = generator {
        let classes: Vec<usize> = (0..ds.num_classes()).collect();
        let fake = synthesize_features(bundle, r, ds, &classes, per_class, seed)?;
        let mut points: Vec<Point> = all
            .iter()
            .map(|&i| Point {
                kind: "real",
                id: i,
                class: ds.label(i),
                tag: split_tag(ds, i),
                values: ds.visual_row(i).to_vec(),
            })
            .collect();
        points.extend(fake.labels.iter().enumerate().map(|(k, &c)| Point {
            kind: "synthetic",
            id: k,
            class: c,
            tag: if ds.is_unseen(c) { "unseen" } else { "seen" },
            values: fake.x.row(k).to_vec(),
        }));
        written.extend(write_points(dir, "features", &points)?);
    }
    Ok(written)
}

/// Rows of a `[n×d]` tensor as vectors.
pub fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect()
}
