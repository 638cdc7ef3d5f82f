//! Mean ± std learning curves across runs.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::trainer::MetricRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub label: String,
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_success: f64,
    pub runs: usize,
}

/// Aggregate joint evaluation returns per label. Runs with differing lengths
/// are cut to their common prefix with a warning; differing episode indices
/// within that prefix are an error.
pub fn aggregate(runs: &[(String, Vec<MetricRecord>)]) -> Result<(Vec<CurvePoint>, Vec<String>)> {
    let mut groups: BTreeMap<&str, Vec<&Vec<MetricRecord>>> = BTreeMap::new();
    for (label, records) in runs {
        groups.entry(label.as_str()).or_default().push(records);
    }
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for (label, group) in groups {
        let shortest = group.iter().map(|r| r.len()).min().unwrap_or(0);
        let longest = group.iter().map(|r| r.len()).max().unwrap_or(0);
        if shortest != longest {
            warnings.push(format!(
                "{label}: runs have {shortest} to {longest} records, truncated to the first {shortest}"
            ));
        }
        for i in 0..shortest {
            let episode = group[0][i].episode;
            if let Some(bad) = group.iter().find(|r| r[i].episode != episode) {
                return Err(Error::InvalidArgument(format!(
                    "{label}: record {i} is at episode {episode} in one run and {} in another",
                    bad[i].episode
                )));
            }
            let values: Vec<f64> = group.iter().map(|r| r[i].joint_return).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            points.push(CurvePoint {
                label: label.to_string(),
                episode,
                mean,
                std: var.sqrt(),
                mean_success: group.iter().map(|r| r[i].success_rate).sum::<f64>() / n,
                runs: group.len(),
            });
        }
    }
    Ok((points, warnings))
}

/// Tab-separated text with a header row.
pub fn to_tsv(points: &[CurvePoint]) -> String {
    let mut out = String::from("label\tepisode\tmean_joint_return\tstd_joint_return\tmean_success_rate\truns\n");
    for p in points {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.label, p.episode, p.mean, p.std, p.mean_success, p.runs
        );
    }
    out
}
