//! Competition scoring: 10 points per correct answer, -150 per penalty.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;

use super::run::{Outcome, VerdictRecord};
use super::BenchError;

pub const POINTS_CORRECT: i64 = 10;
pub const POINTS_PENALTY: i64 = -150;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolCounts {
    pub tool: String,
    pub verified: u64,
    pub falsified: u64,
    pub fastest: u64,
    pub penalty: u64,
}

impl ToolCounts {
    pub fn new(tool: &str, verified: u64, falsified: u64, fastest: u64, penalty: u64) -> Self {
        Self {
            tool: tool.to_string(),
            verified,
            falsified,
            fastest,
            penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub tool_name: String,
    pub verified: u64,
    pub falsified: u64,
    pub fastest: u64,
    pub penalty: u64,
    pub score: i64,
    pub percent: f64,
}

/// Rows in input order. `fastest` is reported but not scored. The best
/// positive score gets 100%; negative scores get 0%.
pub fn score_results(counts: &[ToolCounts]) -> Result<Vec<ScoreRow>, BenchError> {
    if counts.is_empty() {
        return Err(BenchError::Empty);
    }
    let score = |c: &ToolCounts| {
        POINTS_CORRECT * (c.verified + c.falsified) as i64 + POINTS_PENALTY * c.penalty as i64
    };
    let best = counts.iter().map(score).max().unwrap_or(0);
    Ok(counts
        .iter()
        .map(|c| {
            let s = score(c);
            let percent = if best > 0 {
                100.0 * s.max(0) as f64 / best as f64
            } else {
                0.0
            };
            ScoreRow {
                tool_name: c.tool.clone(),
                verified: c.verified,
                falsified: c.falsified,
                fastest: c.fastest,
                penalty: c.penalty,
                score: s,
                percent,
            }
        })
        .collect())
}

/// Tallies per-tool result files.
///
/// A `sat` row counts as falsified (its witness was already re-checked). An
/// `unsat` row on an instance that another tool falsified is a penalty, as
/// is an `error` row carrying a witness. Among correct answers to an
/// instance, the quickest tool gets one `fastest`.
pub fn counts_from_runs(runs: &[(String, Vec<VerdictRecord>)]) -> Vec<ToolCounts> {
    let falsified: HashSet<&str> = runs
        .iter()
        .flat_map(|(_, rows)| rows.iter())
        .filter(|r| r.outcome == Outcome::Sat)
        .map(|r| r.instance.as_str())
        .collect();
    let mut counts: Vec<ToolCounts> = runs.iter().map(|(t, _)| ToolCounts::new(t, 0, 0, 0, 0)).collect();
    let mut quickest: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (i, (_, rows)) in runs.iter().enumerate() {
        for r in rows {
            let correct = match r.outcome {
                Outcome::Sat => {
                    counts[i].falsified += 1;
                    true
                }
                Outcome::Unsat if falsified.contains(r.instance.as_str()) => {
                    counts[i].penalty += 1;
                    false
                }
                Outcome::Unsat => {
                    counts[i].verified += 1;
                    true
                }
                Outcome::Error if r.penalty => {
                    counts[i].penalty += 1;
                    false
                }
                _ => false,
            };
            if correct {
                let e = quickest.entry(&r.instance).or_insert((r.seconds, i));
                if r.seconds < e.0 {
                    *e = (r.seconds, i);
                }
            }
        }
    }
    for (_, i) in quickest.into_values() {
        counts[i].fastest += 1;
    }
    counts
}

/// Aligned text table with the columns of the competition report.
pub fn render_table(rows: &[ScoreRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.tool_name.len())
        .chain([4])
        .max()
        .unwrap_or(4);
    let mut s = format!(
        "{:>2}  {:<width$}  {:>8}  {:>9}  {:>7}  {:>7}  {:>6}  {:>7}\n",
        "#", "Tool", "Verified", "Falsified", "Fastest", "Penalty", "Score", "Percent"
    );
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>2}  {:<width$}  {:>8}  {:>9}  {:>7}  {:>7}  {:>6}  {:>6.0}%",
            i + 1,
            r.tool_name,
            r.verified,
            r.falsified,
            r.fastest,
            r.penalty,
            r.score,
            r.percent
        );
    }
    s
}

pub fn score_csv(rows: &[ScoreRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tool", "verified", "falsified", "fastest", "penalty", "score", "percent"])
        .expect("writing to memory");
    for r in rows {
        w.write_record([
            r.tool_name.clone(),
            r.verified.to_string(),
            r.falsified.to_string(),
            r.fastest.to_string(),
            r.penalty.to_string(),
            r.score.to_string(),
            format!("{:.2}", r.percent),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 fields")
}

/// Reads `tool,verified,falsified,fastest,penalty` with a header row.
pub fn parse_counts(text: &str) -> Result<Vec<ToolCounts>, BenchError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::Csv(e.to_string()))?;
        if rec.len() != 5 {
            return Err(BenchError::Csv(format!(
                "row {}: expected tool,verified,falsified,fastest,penalty",
                line + 1
            )));
        }
        let n = |i: usize| {
            rec[i].parse::<u64>().map_err(|_| {
                BenchError::Csv(format!("row {}: '{}' is not a non-negative count", line + 1, &rec[i]))
            })
        };
        out.push(ToolCounts::new(&rec[0], n(1)?, n(2)?, n(3)?, n(4)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn rec(instance: &str, outcome: Outcome, seconds: f64) -> VerdictRecord {
        VerdictRecord {
            instance: instance.into(),
            outcome,
            seconds,
            witness_path: None,
            penalty: false,
            message: None,
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(score_results(&[]), Err(BenchError::Empty)));
    }

    #[test]
    fn all_negative_scores_get_zero_percent() {
        let rows = score_results(&[ToolCounts::new("a", 0, 1, 0, 1)]).unwrap();
        assert_eq!((rows[0].score, rows[0].percent), (-140, 0.0));
    }

    #[test]
    fn unsat_against_a_witness_is_a_penalty() {
        let runs = vec![
            ("x".to_string(), vec![rec("p1", Outcome::Sat, 2.0), rec("p2", Outcome::Unsat, 1.0)]),
            ("y".to_string(), vec![rec("p1", Outcome::Unsat, 1.0), rec("p2", Outcome::Unsat, 0.5)]),
        ];
        let c = counts_from_runs(&runs);
        assert_eq!(c[0], ToolCounts::new("x", 1, 1, 1, 0));
        assert_eq!(c[1], ToolCounts::new("y", 1, 0, 1, 1));
    }

    #[test]
    fn failed_recheck_is_a_penalty() {
        let mut r = rec("p", Outcome::Error, 1.0);
        r.witness_path = Some(PathBuf::from("w"));
        r.penalty = true;
        let c = counts_from_runs(&[("t".to_string(), vec![r, rec("q", Outcome::Error, 0.1)])]);
        assert_eq!(c[0], ToolCounts::new("t", 0, 0, 0, 1));
    }

    #[test]
    fn counts_csv_round_trip() {
        let text = "tool,verified,falsified,fastest,penalty\nMarabou,0,18,0,1\n";
        assert_eq!(parse_counts(text).unwrap(), vec![ToolCounts::new("Marabou", 0, 18, 0, 1)]);
        assert!(parse_counts("tool,verified,falsified,fastest,penalty\nx,0,-1,0,0\n").is_err());
    }

    proptest! {
        #[test]
        fn score_formula_and_percent_range(
            counts in prop::collection::vec((0u64..50, 0u64..50, 0u64..50, 0u64..5), 1..6)
        ) {
            let tools: Vec<ToolCounts> = counts
                .iter()
                .enumerate()
                .map(|(i, &(v, f, q, p))| ToolCounts::new(&format!("t{i}"), v, f, q, p))
                .collect();
            let rows = score_results(&tools).unwrap();
            let best = rows.iter().map(|r| r.score).max().unwrap();
            for r in &rows {
                prop_assert_eq!(r.score, 10 * (r.verified + r.falsified) as i64 - 150 * r.penalty as i64);
                prop_assert!((0.0..=100.0).contains(&r.percent));
                if best > 0 && r.score == best {
                    prop_assert_eq!(r.percent, 100.0);
                }
            }
        }
    }
}
