//! Result rows, CSV and JSON output.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment,n,L,estimator,mean_vhat,true_var,ratio,reps,degenerate,seed";

/// One `(experiment, L, estimator)` cell of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub experiment: String,
    /// Outcome units, or the horizon for time series.
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub estimator: String,
    pub mean_vhat: f64,
    pub true_var: f64,
    pub ratio: f64,
    pub reps: usize,
    pub degenerate: usize,
    pub seed: u64,
    /// Monte Carlo standard error of `ratio`. Not part of the CSV.
    #[serde(default)]
    pub ratio_se: f64,
}

impl ResultsRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{},{},{}",
            self.experiment,
            self.n,
            self.l,
            self.estimator,
            self.mean_vhat,
            self.true_var,
            self.ratio,
            self.reps,
            self.degenerate,
            self.seed
        )
    }
}

pub fn write_csv<W: Write>(rows: &[ResultsRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn to_csv_string(rows: &[ResultsRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Reads rows written by [`write_csv`]. `ratio_se` is not stored and comes back as 0.
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<ResultsRow>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Config(e.to_string()))?
        .unwrap_or_default();
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header `{header}`")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Config(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::Config(format!("line {}: expected 10 fields", k + 2)));
        }
        let bad = |what: &str| Error::Config(format!("line {}: bad {what}", k + 2));
        rows.push(ResultsRow {
            experiment: f[0].to_string(),
            n: f[1].parse().map_err(|_| bad("n"))?,
            l: f[2].parse().map_err(|_| bad("L"))?,
            estimator: f[3].to_string(),
            mean_vhat: f[4].parse().map_err(|_| bad("mean_vhat"))?,
            true_var: f[5].parse().map_err(|_| bad("true_var"))?,
            ratio: f[6].parse().map_err(|_| bad("ratio"))?,
            reps: f[7].parse().map_err(|_| bad("reps"))?,
            degenerate: f[8].parse().map_err(|_| bad("degenerate"))?,
            seed: f[9].parse().map_err(|_| bad("seed"))?,
            ratio_se: 0.0,
        });
    }
    Ok(rows)
}

/// The curve over `L` for one estimator, plus its minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestL {
    pub estimator: String,
    pub l: usize,
    pub mean_vhat: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub experiment: String,
    pub true_var: f64,
    pub true_var_reps: usize,
    /// How summary rows pick their `L`.
    pub selection_rule: String,
    pub rows: Vec<ResultsRow>,
    pub best: Vec<BestL>,
}

pub const SELECTION_RULE: &str = "argmin of mean_vhat over the L grid";

impl ExperimentOutput {
    /// Rows for one estimator tag, in grid order.
    pub fn curve(&self, estimator: &str) -> Vec<&ResultsRow> {
        self.rows.iter().filter(|r| r.estimator == estimator).collect()
    }

    pub fn best_for(&self, estimator: &str) -> Option<&BestL> {
        self.best.iter().find(|b| b.estimator == estimator)
    }

    /// Per-`L` rows followed by one `<tag>_best` row per estimator.
    pub fn all_rows(&self) -> Vec<ResultsRow> {
        let mut out = self.rows.clone();
        for b in &self.best {
            if let Some(r) = self.rows.iter().find(|r| r.estimator == b.estimator && r.l == b.l) {
                out.push(ResultsRow {
                    estimator: format!("{}_best", b.estimator),
                    ..r.clone()
                });
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("output is plain data")
    }
}

/// Picks the `L` minimizing mean `V̂` for every estimator tag in `rows`.
pub fn best_by_min(rows: &[ResultsRow]) -> Vec<BestL> {
    let mut tags: Vec<&str> = Vec::new();
    for r in rows {
        if !tags.contains(&r.estimator.as_str()) {
            tags.push(&r.estimator);
        }
    }
    tags.into_iter()
        .filter_map(|tag| {
            rows.iter()
                .filter(|r| r.estimator == tag && r.mean_vhat.is_finite())
                .min_by(|a, b| a.mean_vhat.total_cmp(&b.mean_vhat))
                .map(|r| BestL {
                    estimator: tag.to_string(),
                    l: r.l,
                    mean_vhat: r.mean_vhat,
                    ratio: r.ratio,
                    ratio_se: r.ratio_se,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(l: usize, est: &str, v: f64) -> ResultsRow {
        ResultsRow {
            experiment: "cycle".into(),
            n: 100,
            l,
            estimator: est.into(),
            mean_vhat: v,
            true_var: 0.3,
            ratio: v / 0.3,
            reps: 100,
            degenerate: 0,
            seed: 7,
            ratio_se: 0.01,
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let rows = vec![row(1, "nj_avg", 0.1 + 0.2), row(2, "nj_avg", 1.0 / 3.0), row(2, "nj_cov", 1e-300)];
        let text = to_csv_string(&rows);
        assert!(text.starts_with(CSV_HEADER));
        let back = read_csv(text.as_bytes()).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.mean_vhat.to_bits(), b.mean_vhat.to_bits());
            assert_eq!(a.ratio.to_bits(), b.ratio.to_bits());
            assert_eq!(a.l, b.l);
        }
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn best_is_the_minimum_per_tag() {
        let rows = vec![row(1, "a", 3.0), row(2, "a", 1.0), row(3, "a", 2.0), row(1, "b", 0.5)];
        let best = best_by_min(&rows);
        assert_eq!(best.len(), 2);
        assert_eq!((best[0].l, best[1].l), (2, 1));
    }
}
