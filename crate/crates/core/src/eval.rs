//! Relevance-feedback metrics: per-session CRC/PRC/CIC percentages, their
//! means and the cumulative CRC + PRC figure.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Allowed deviation of a session's percentage sum from 100.
pub const SUM_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Judgment {
    CompletelyRelevant,
    PartiallyRelevant,
    CompletelyIrrelevant,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("session has no judgments")]
    EmptySession,
    #[error("no sessions")]
    EmptyInput,
    #[error("session {id}: {reason}")]
    InvalidSession { id: String, reason: String },
    #[error("reading sessions: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceSession {
    #[serde(rename = "session_id")]
    pub id: String,
    pub crc: f64,
    pub prc: f64,
    pub cic: f64,
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

fn two_places<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_to(*x, 2))
}

/// (crc, prc, cic) as percentages of the judgments, each rounded to 0.1.
pub fn session_percentages(judgments: &[Judgment]) -> Result<(f64, f64, f64), EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::EmptySession);
    }
    let total = judgments.len() as f64;
    let pct = |j: Judgment| {
        let n = judgments.iter().filter(|x| **x == j).count() as f64;
        round_to(100.0 * n / total, 1)
    };
    Ok((
        pct(Judgment::CompletelyRelevant),
        pct(Judgment::PartiallyRelevant),
        pct(Judgment::CompletelyIrrelevant),
    ))
}

impl RelevanceSession {
    pub fn from_judgments(
        id: impl Into<String>,
        judgments: &[Judgment],
    ) -> Result<Self, EvalError> {
        let (crc, prc, cic) = session_percentages(judgments)?;
        Ok(RelevanceSession {
            id: id.into(),
            crc,
            prc,
            cic,
        })
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |reason: String| EvalError::InvalidSession {
            id: self.id.clone(),
            reason,
        };
        for (name, v) in [("crc", self.crc), ("prc", self.prc), ("cic", self.cic)] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} = {v} is not a percentage")));
            }
        }
        let sum = self.crc + self.prc + self.cic;
        if (sum - 100.0).abs() > SUM_TOLERANCE + 1e-9 {
            return Err(invalid(format!("percentages sum to {sum:.1}, not 100")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub sessions: Vec<RelevanceSession>,
    #[serde(serialize_with = "two_places")]
    pub mean_crc: f64,
    #[serde(serialize_with = "two_places")]
    pub mean_prc: f64,
    #[serde(serialize_with = "two_places")]
    pub mean_cic: f64,
    /// mean_crc + mean_prc.
    #[serde(serialize_with = "two_places")]
    pub cumulative: f64,
}

pub fn aggregate(sessions: &[RelevanceSession]) -> Result<EvalReport, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for s in sessions {
        s.validate()?;
    }
    let n = sessions.len() as f64;
    let mean = |f: fn(&RelevanceSession) -> f64| sessions.iter().map(f).sum::<f64>() / n;
    let mean_crc = mean(|s| s.crc);
    let mean_prc = mean(|s| s.prc);
    Ok(EvalReport {
        sessions: sessions.to_vec(),
        mean_crc,
        mean_prc,
        mean_cic: mean(|s| s.cic),
        cumulative: mean_crc + mean_prc,
    })
}

/// Reads `session_id,crc,prc,cic` rows with a header line.
pub fn read_sessions(input: impl std::io::Read) -> Result<Vec<RelevanceSession>, EvalError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(EvalError::from)
}

pub fn read_sessions_file(path: impl AsRef<Path>) -> Result<Vec<RelevanceSession>, EvalError> {
    let file = std::fs::File::open(path).map_err(csv::Error::from)?;
    read_sessions(file)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Session table followed by means and the cumulative figure.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7}",
            "session", "CRC", "PRC", "CIC"
        );
        for s in &self.sessions {
            let _ = writeln!(
                out,
                "{:<10} {:>7.1} {:>7.1} {:>7.1}",
                s.id, s.crc, s.prc, s.cic
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>7.2} {:>7.2} {:>7.2}",
            "mean", self.mean_crc, self.mean_prc, self.mean_cic
        );
        let _ = writeln!(out, "cumulative CRC+PRC: {:.2}", self.cumulative);
        out
    }
}
