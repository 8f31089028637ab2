use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};
use crate::io::write_atomic;

pub const METRICS_HEADER: &str = "tag,n_samples,seed,rollout,mean_rl2,wall_time_s,iterations,final_lr";

/// One validation score of one fine-tuned model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub tag: String,
    pub n_samples: usize,
    pub seed: u64,
    /// 1 is the next-step score over all pairs, larger depths roll out from t = 0
    pub rollout: usize,
    pub mean_rl2: f64,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub final_lr: f64,
}

/// Seed average of the records sharing `(tag, n_samples, rollout)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRecord {
    pub tag: String,
    pub n_samples: usize,
    pub seeds: usize,
    pub rollout: usize,
    pub mean_rl2: f64,
    pub wall_time_s: f64,
    pub iterations: f64,
    pub final_lr: f64,
}

pub const AVERAGED_HEADER: &str = "tag,n_samples,seeds,rollout,mean_rl2,wall_time_s,iterations,final_lr";

fn write_csv<R: Serialize>(path: &Path, header: &str, rows: &[R]) -> Result<()> {
    // explicit header so that empty tables still carry one
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    write_atomic(path, &w.into_inner().expect("in-memory writer"))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    write_csv(path, METRICS_HEADER, rows)
}

pub fn write_averaged(path: &Path, rows: &[AveragedRecord]) -> Result<()> {
    write_csv(path, AVERAGED_HEADER, rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Tags, counts and depths keep their first-seen order.
pub fn average(rows: &[MetricsRecord]) -> Vec<AveragedRecord> {
    let mut order: Vec<(String, usize, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, usize, usize), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in rows {
        let key = (r.tag.clone(), r.n_samples, r.rollout);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let n = g.len() as f64;
            let mean = |f: &dyn Fn(&MetricsRecord) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            AveragedRecord {
                tag: key.0.clone(),
                n_samples: key.1,
                seeds: g.len(),
                rollout: key.2,
                mean_rl2: mean(&|r| r.mean_rl2),
                wall_time_s: mean(&|r| r.wall_time_s),
                iterations: mean(&|r| r.iterations as f64),
                final_lr: mean(&|r| r.final_lr),
            }
        })
        .collect()
}
