//! Pairwise waiting-time reductions across controllers.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::report::ReportRow;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("need at least two runs to compare, got {0}")]
    TooFew(usize),
    #[error("`{0}` and `{1}` share no seeds")]
    NoCommonSeeds(String, String),
    #[error("`{0}` has no runs")]
    Empty(String),
}

/// Relative change of `ours` against `baseline`. Equal values give 0 even
/// when both are 0.
pub fn reduction(ours: f64, baseline: f64) -> f64 {
    if ours == baseline {
        0.0
    } else {
        (ours - baseline) / baseline
    }
}

/// Median with the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub median_wait: Vec<f64>,
    /// `matrix[i][j]`: median over shared seeds of the reduction of run `i`
    /// against baseline `j`.
    pub matrix: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

pub fn compare(groups: &[(String, Vec<ReportRow>)]) -> Result<Comparison, CompareError> {
    if groups.len() < 2 {
        return Err(CompareError::TooFew(groups.len()));
    }
    let mut warnings = Vec::new();
    let by_seed: Vec<BTreeMap<u64, f64>> =
        groups.iter().map(|(_, rows)| rows.iter().map(|r| (r.seed, r.avg_waiting_time)).collect()).collect();
    for (label, rows) in groups {
        if rows.is_empty() {
            return Err(CompareError::Empty(label.clone()));
        }
    }
    let reference = &groups[0].1[0];
    for (label, rows) in groups {
        for r in rows {
            if r.scenario != reference.scenario || r.horizon != reference.horizon {
                warnings.push(format!(
                    "mismatched scenarios: `{label}` ran {} for {} s, `{}` ran {} for {} s",
                    r.scenario, r.horizon, groups[0].0, reference.scenario, reference.horizon
                ));
                break;
            }
        }
    }
    let n = groups.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let red: Vec<f64> = by_seed[i]
                .iter()
                .filter_map(|(s, &ours)| by_seed[j].get(s).map(|&base| reduction(ours, base)))
                .collect();
            matrix[i][j] = median(&red).ok_or_else(|| CompareError::NoCommonSeeds(groups[i].0.clone(), groups[j].0.clone()))?;
        }
    }
    let median_wait = by_seed.iter().map(|m| median(&m.values().copied().collect::<Vec<_>>()).unwrap_or(0.0)).collect();
    Ok(Comparison { labels: groups.iter().map(|g| g.0.clone()).collect(), median_wait, matrix, warnings })
}

impl Comparison {
    /// Table with one row per run: label, median wait, then the reduction
    /// against every baseline column.
    pub fn write_csv<W: Write>(&self, mut w: W, hash: &str) -> io::Result<()> {
        writeln!(w, "# config_hash={hash}")?;
        let mut c = csv::Writer::from_writer(w);
        let mut header = vec!["controller".to_string(), "median_avg_waiting_time".to_string()];
        header.extend(self.labels.iter().map(|l| format!("vs_{l}")));
        c.write_record(header).map_err(io::Error::other)?;
        for (i, l) in self.labels.iter().enumerate() {
            let mut rec = vec![l.clone(), self.median_wait[i].to_string()];
            rec.extend(self.matrix[i].iter().map(|x| x.to_string()));
            c.write_record(rec).map_err(io::Error::other)?;
        }
        c.flush()
    }

    pub fn to_table(&self) -> String {
        let w = self.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(10);
        let mut s = format!("{:w$}  {:>10}", "", "median wait");
        for l in &self.labels {
            s += &format!("  {:>w$}", format!("vs {l}"));
        }
        s.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            s += &format!("{l:w$}  {:>10.2}", self.median_wait[i]);
            for x in &self.matrix[i] {
                s += &format!("  {:>w$}", format!("{:+.1}%", 100.0 * x));
            }
            s.push('\n');
        }
        s
    }
}
