use std::fmt::{self, Write as _};

use super::metrics::harmonic_mean;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Zsl,
    Gzsl,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Zsl => "zsl",
            EvalMode::Gzsl => "gzsl",
        }
    }

    pub fn parse(s: &str) -> Option<EvalMode> {
        match s.to_ascii_lowercase().as_str() {
            "zsl" => Some(EvalMode::Zsl),
            "gzsl" => Some(EvalMode::Gzsl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scores {
    Zsl { t1: f64 },
    Gzsl { u: f64, s: f64, h: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: String,
    pub scores: Scores,
    /// `(class, accuracy, test samples)` over every evaluated class.
    pub per_class: Vec<(usize, f64, usize)>,
    pub omega1: f64,
    pub omega2: f64,
    pub rep_dim: usize,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "variant,U,S,H,T1,seed,omega1,omega2,L";

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} = {v} lies outside [0, 1]")))
    }
}

impl EvalReport {
    pub fn mode(&self) -> EvalMode {
        match self.scores {
            Scores::Zsl { .. } => EvalMode::Zsl,
            Scores::Gzsl { .. } => EvalMode::Gzsl,
        }
    }

    pub fn t1(&self) -> Option<f64> {
        match self.scores {
            Scores::Zsl { t1 } => Some(t1),
            Scores::Gzsl { .. } => None,
        }
    }

    /// `(U, S, H)` in GZSL mode.
    pub fn ush(&self) -> Option<(f64, f64, f64)> {
        match self.scores {
            Scores::Gzsl { u, s, h } => Some((u, s, h)),
            Scores::Zsl { .. } => None,
        }
    }

    /// Accuracies in `[0,1]` and `H` consistent with `U`, `S`.
    pub fn validate(&self) -> Result<()> {
        match self.scores {
            Scores::Zsl { t1 } => check_unit("T1", t1)?,
            Scores::Gzsl { u, s, h } => {
                check_unit("U", u)?;
                check_unit("S", s)?;
                check_unit("H", h)?;
                if (h - harmonic_mean(u, s)).abs() > 1e-9 {
                    return Err(Error::Invalid(format!("H = {h} is not the harmonic mean of {u} and {s}")));
                }
            }
        }
        for &(c, acc, _) in &self.per_class {
            check_unit(&format!("class {c} accuracy"), acc)?;
        }
        if self.omega1 < 0.0 || self.omega2 < 0.0 {
            return Err(Error::Invalid("ensemble weights must be non-negative".into()));
        }
        Ok(())
    }

    /// One CSV line matching [`CSV_HEADER`]; absent metrics are empty fields.
    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        let (u, s, h) = match self.ush() {
            Some((u, s, h)) => (Some(u), Some(s), Some(h)),
            None => (None, None, None),
        };
        format!(
            "{},{},{},{},{},{},{:?},{:?},{}",
            self.variant,
            f(u),
            f(s),
            f(h),
            f(self.t1()),
            self.seed,
            self.omega1,
            self.omega2,
            self.rep_dim
        )
    }

    pub fn to_csv(reports: &[EvalReport]) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// `class,accuracy,samples` lines.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,accuracy,samples\n");
        for (c, acc, n) in &self.per_class {
            let _ = writeln!(out, "{c},{acc:?},{n}");
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "variant {}  mode {}  seed {}  L {}  omega1 {}  omega2 {}",
            self.variant,
            self.mode().name(),
            self.seed,
            self.rep_dim,
            self.omega1,
            self.omega2
        )?;
        match self.scores {
            Scores::Zsl { t1 } => writeln!(f, "  T1 {:6.2}", 100.0 * t1)?,
            Scores::Gzsl { u, s, h } => {
                writeln!(f, "  U {:6.2}  S {:6.2}  H {:6.2}", 100.0 * u, 100.0 * s, 100.0 * h)?
            }
        }
        for (c, acc, n) in &self.per_class {
            writeln!(f, "  class {c:>4}  acc {:6.2}  n {n}", 100.0 * acc)?;
        }
        Ok(())
    }
}
