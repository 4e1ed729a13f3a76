use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Least-squares slope of `ln y` against `ln k` over the second half of the
/// episodes (`k >= K/2`), using only points with `y > 0`. `None` when fewer
/// than two such points exist.
pub fn loglog_slope(values: &[f64]) -> Option<f64> {
    let total = values.len();
    let start = total / 2;
    let points: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, y)| **y > 0.0)
        .map(|(i, y)| (((i + 1) as f64).ln(), y.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub algo: String,
    pub seed: u64,
    pub episodes: usize,
    pub strong_c: f64,
    pub strong_d: f64,
    pub weak_c: f64,
    pub weak_d: f64,
    pub slope_strong_c: Option<f64>,
    pub slope_strong_d: Option<f64>,
    pub fw_iterations: u64,
    pub wall_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoAggregate {
    pub algo: String,
    pub runs: usize,
    pub mean_strong_c: f64,
    pub mean_strong_d: f64,
    pub mean_weak_c: f64,
    pub mean_weak_d: f64,
    pub mean_slope_strong_d: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub optimal_value: Option<f64>,
    pub runs: Vec<RunSummary>,
    pub aggregates: Vec<AlgoAggregate>,
}

impl CampaignSummary {
    pub fn new(optimal_value: Option<f64>, mut runs: Vec<RunSummary>) -> Self {
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        let mut algos: Vec<String> = runs.iter().map(|r| r.algo.clone()).collect();
        algos.sort();
        algos.dedup();
        let aggregates = algos
            .into_iter()
            .map(|algo| {
                let group: Vec<&RunSummary> = runs.iter().filter(|r| r.algo == algo).collect();
                let n = group.len() as f64;
                let mean = |f: fn(&RunSummary) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
                let slopes: Vec<f64> = group.iter().filter_map(|r| r.slope_strong_d).collect();
                AlgoAggregate {
                    algo,
                    runs: group.len(),
                    mean_strong_c: mean(|r| r.strong_c),
                    mean_strong_d: mean(|r| r.strong_d),
                    mean_weak_c: mean(|r| r.weak_c),
                    mean_weak_d: mean(|r| r.weak_d),
                    mean_slope_strong_d: (!slopes.is_empty())
                        .then(|| slopes.iter().sum::<f64>() / slopes.len() as f64),
                }
            })
            .collect();
        Self {
            optimal_value,
            runs,
            aggregates,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), BenchError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Rebuilds run summaries from the ledger CSVs in `dir`.
pub fn summarize_dir(dir: &Path) -> Result<CampaignSummary, BenchError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(BenchError::Config(format!("no ledger CSVs in {}", dir.display())));
    }
    let mut runs = Vec::with_capacity(paths.len());
    for path in paths {
        runs.push(summarize_csv(&path)?);
    }
    Ok(CampaignSummary::new(None, runs))
}

pub fn summarize_csv(path: &Path) -> Result<RunSummary, BenchError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::Config(format!("{}: missing column {name}", path.display())))
    };
    let (c_run, c_algo, c_seed) = (column("run_id")?, column("algo")?, column("seed")?);
    let (c_sc, c_sd, c_wc, c_wd) = (
        column("strong_c_cum")?,
        column("strong_d_cum")?,
        column("weak_c_cum")?,
        column("weak_d_cum")?,
    );
    let c_fw = column("fw_iters")?;
    let mut strong_c = Vec::new();
    let mut strong_d = Vec::new();
    let mut last = None;
    let mut fw = 0u64;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let num = |c: usize| -> Result<f64, BenchError> {
            record[c].parse::<f64>().map_err(|e| {
                BenchError::Config(format!("{}: row {}: column {}: {e}", path.display(), line + 2, &headers[c]))
            })
        };
        strong_c.push(num(c_sc)?);
        strong_d.push(num(c_sd)?);
        fw += num(c_fw)? as u64;
        last = Some((
            record[c_run].to_string(),
            record[c_algo].to_string(),
            record[c_seed].parse::<u64>().map_err(|e| BenchError::Config(format!("{}: seed: {e}", path.display())))?,
            num(c_wc)?,
            num(c_wd)?,
        ));
    }
    let (run_id, algo, seed, weak_c, weak_d) =
        last.ok_or_else(|| BenchError::Config(format!("{} has no rows", path.display())))?;
    Ok(RunSummary {
        run_id,
        algo,
        seed,
        episodes: strong_c.len(),
        strong_c: *strong_c.last().unwrap_or(&0.0),
        strong_d: *strong_d.last().unwrap_or(&0.0),
        weak_c,
        weak_d,
        slope_strong_c: loglog_slope(&strong_c),
        slope_strong_d: loglog_slope(&strong_d),
        fw_iterations: fw,
        wall_seconds: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let values: Vec<f64> = (1..=1000).map(|k| 3.0 * (k as f64).powf(0.5)).collect();
        assert!((loglog_slope(&values).unwrap() - 0.5).abs() < 1e-12);
        let flat = vec![2.0; 100];
        assert!(loglog_slope(&flat).unwrap().abs() < 1e-12);
        assert_eq!(loglog_slope(&[0.0; 10]), None);
    }
}
