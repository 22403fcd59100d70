//! Metrics CSV: one row per executed action plus windowed summary rows.
//!
//! Header: `stage,episode,step,action_kind,reward,loss,q_max,epsilon,success`.
//! Summary rows carry `window=200` in the `action_kind` column and the
//! windowed grasp success rate in `success`.

use crate::error::{Error, Result};
use std::fmt::Write as _;

pub const CSV_HEADER: &str = "stage,episode,step,action_kind,reward,loss,q_max,epsilon,success";

/// Marker stored in `action_kind` for windowed summary rows.
pub const WINDOW_MARKER: &str = "window=200";

/// Action kind label for heuristic fallback grasps (not trained on).
pub const HEURISTIC_GRASP_KIND: &str = "hgrasp";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub stage: String,
    pub episode: u64,
    pub step: u64,
    pub action_kind: String,
    pub reward: f64,
    pub loss: f64,
    pub q_max: f64,
    pub epsilon: f64,
    /// 1.0 for successful actions, windowed ratio on summary rows.
    pub success: f64,
}

impl MetricRow {
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            self.stage,
            self.episode,
            self.step,
            self.action_kind,
            self.reward,
            self.loss,
            self.q_max,
            self.epsilon,
            self.success
        )
        .unwrap();
        s
    }

    pub fn is_window_summary(&self) -> bool {
        self.action_kind == WINDOW_MARKER
    }

    /// Rows that represent grasp attempts (network or heuristic).
    pub fn is_grasp_attempt(&self) -> bool {
        self.action_kind == "grasp" || self.action_kind == HEURISTIC_GRASP_KIND
    }
}

/// Serializes rows with the canonical header.
pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut s = String::with_capacity(rows.len() * 48 + 64);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

/// Parses a metrics CSV; errors carry 1-based line numbers.
pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let num = |idx: usize| -> Result<f64> {
            fields[idx].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad number '{}'", fields[idx]),
            })
        };
        let int = |idx: usize| -> Result<u64> {
            fields[idx].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad integer '{}'", fields[idx]),
            })
        };
        rows.push(MetricRow {
            stage: fields[0].to_string(),
            episode: int(1)?,
            step: int(2)?,
            action_kind: fields[3].to_string(),
            reward: num(4)?,
            loss: num(5)?,
            q_max: num(6)?,
            epsilon: num(7)?,
            success: num(8)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> MetricRow {
        MetricRow {
            stage: "I".into(),
            episode: 3,
            step: 17,
            action_kind: "grasp".into(),
            reward: 1.0,
            loss: 0.125,
            q_max: 0.75,
            epsilon: 0.5,
            success: 1.0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row()];
        let text = to_csv(&rows);
        let back = parse_csv(&text).unwrap();
        assert_eq!(rows, back);
        // serialization is stable
        assert_eq!(text, to_csv(&back));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = format!("{CSV_HEADER}\nI,1,1,grasp,1,0,0,0.5,1\nI,zah,2,grasp,1,0,0,0.5,1\n");
        match parse_csv(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_csv("foo,bar\n").is_err());
    }
}
