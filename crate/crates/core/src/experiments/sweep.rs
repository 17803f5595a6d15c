use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::save_transformer;
use crate::error::{Error, Result};
use crate::experiments::svg::Heatmap;
use crate::experiments::{read_csv, write_csv, write_text};
use crate::train::{count_regions_over_dataset, fit_llm_sine, AdamConfig, LlmFitConfig, SineDatasetLlm, LLM_TIME_BINS};

/// Grid of (context, heads, seed) training runs plus shared model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub contexts: Vec<usize>,
    pub heads: Vec<usize>,
    pub seeds: Vec<u64>,
    pub d_model: usize,
    pub d_head: usize,
    pub n_hidden: usize,
    pub steps: usize,
    #[serde(default)]
    pub scale_logits: bool,
    pub adam: AdamConfig,
    /// Worker threads; `None` uses the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let base = LlmFitConfig::default();
        SweepConfig {
            contexts: vec![10, 100],
            heads: vec![1, 10],
            seeds: vec![0, 1, 2],
            d_model: base.d_model,
            d_head: base.d_head,
            n_hidden: base.n_hidden,
            steps: base.steps,
            scale_logits: false,
            adam: base.adam,
            workers: None,
            out_dir: PathBuf::from("out/sweep"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SweepPoint {
    pub context: usize,
    pub heads: usize,
    pub seed: u64,
}

/// One row of `sweep.csv`; the measured fields are empty when training diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub context: usize,
    pub heads: usize,
    pub seed: u64,
    pub region_count: Option<usize>,
    pub final_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    /// Points trained in this call; the rest were read from markers.
    pub trained: usize,
    pub csv_path: PathBuf,
}

/// Settings a marker must match to be reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunKey {
    d_model: usize,
    d_head: usize,
    n_hidden: usize,
    steps: usize,
    scale_logits: bool,
    adam: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Marker {
    key: RunKey,
    record: SweepRecord,
    #[serde(default)]
    error: Option<String>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.contexts.is_empty() || self.heads.is_empty() || self.seeds.is_empty() {
            return Err(Error::param("sweep grid must be nonempty in every axis"));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::param("sweep seeds must be distinct"));
        }
        if let Some(&c) = self.contexts.iter().find(|&&c| c == 0 || c > LLM_TIME_BINS) {
            return Err(Error::param(format!("context {c} outside [1, {LLM_TIME_BINS}]")));
        }
        if self.heads.contains(&0) {
            return Err(Error::param("heads must be >= 1"));
        }
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) || self.d_head == 0 || self.n_hidden == 0 {
            return Err(Error::param("d_model must be even and all model dims positive"));
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers must be >= 1"));
        }
        Ok(())
    }

    /// Grid points in context-major, then heads, then seed order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &context in &self.contexts {
            for &heads in &self.heads {
                for &seed in &self.seeds {
                    out.push(SweepPoint { context, heads, seed });
                }
            }
        }
        out
    }

    pub fn fit_config(&self, pt: SweepPoint) -> LlmFitConfig {
        LlmFitConfig {
            context: pt.context,
            heads: pt.heads,
            d_model: self.d_model,
            d_head: self.d_head,
            n_hidden: self.n_hidden,
            seed: pt.seed,
            steps: self.steps,
            scale_logits: self.scale_logits,
            adam: self.adam,
        }
    }

    fn key(&self) -> RunKey {
        RunKey {
            d_model: self.d_model,
            d_head: self.d_head,
            n_hidden: self.n_hidden,
            steps: self.steps,
            scale_logits: self.scale_logits,
            adam: self.adam,
        }
    }

    fn points_dir(&self) -> PathBuf {
        self.out_dir.join("points")
    }
}

fn stem(pt: SweepPoint) -> String {
    format!("c{}_h{}_s{}", pt.context, pt.heads, pt.seed)
}

fn load_marker(path: &Path, key: &RunKey) -> Option<SweepRecord> {
    let text = fs::read_to_string(path).ok()?;
    let m: Marker = serde_json::from_str(&text).ok()?;
    (m.key == *key).then_some(m.record)
}

fn run_point(cfg: &SweepConfig, pt: SweepPoint) -> Result<SweepRecord> {
    let dir = cfg.points_dir();
    let mut record = SweepRecord {
        context: pt.context,
        heads: pt.heads,
        seed: pt.seed,
        region_count: None,
        final_mse: None,
    };
    let mut error = None;
    match fit_llm_sine::<f64>(&cfg.fit_config(pt)) {
        Ok(fit) => {
            let data = SineDatasetLlm::new(pt.context, cfg.d_model)?;
            record.region_count = Some(count_regions_over_dataset(&fit.params, &data)?.count);
            record.final_mse = Some(fit.final_mse);
            save_transformer(dir.join(format!("{}.params", stem(pt))), &fit.params)?;
        }
        Err(e @ Error::Training { .. }) => error = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    let marker = Marker {
        key: cfg.key(),
        record: record.clone(),
        error,
    };
    // write-then-rename so an interrupted run never leaves a half marker
    let path = dir.join(format!("{}.json", stem(pt)));
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&marker)?)?;
    fs::rename(&tmp, &path)?;
    Ok(record)
}

/// Trains every grid point not already finished, then writes `sweep.csv`
/// and its plots.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let dir = cfg.points_dir();
    fs::create_dir_all(&dir)?;
    let key = cfg.key();
    let points = cfg.points();
    let done: Vec<Option<SweepRecord>> = points
        .iter()
        .map(|&pt| load_marker(&dir.join(format!("{}.json", stem(pt))), &key))
        .collect();
    let todo: Vec<SweepPoint> = points
        .iter()
        .zip(&done)
        .filter(|(_, d)| d.is_none())
        .map(|(&p, _)| p)
        .collect();

    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("worker pool: {e}")))?;
    let fresh: Vec<SweepRecord> = pool.install(|| {
        todo.par_iter()
            .with_max_len(1)
            .map(|&pt| run_point(cfg, pt))
            .collect::<Result<_>>()
    })?;

    let mut fresh = fresh.into_iter();
    let records: Vec<SweepRecord> = done
        .into_iter()
        .map(|d| d.unwrap_or_else(|| fresh.next().expect("one fresh record per missing marker")))
        .collect();
    let csv_path = cfg.out_dir.join("sweep.csv");
    write_csv(&csv_path, &records)?;
    plot_sweep(&cfg.out_dir)?;
    Ok(SweepOutcome {
        records,
        trained: todo.len(),
        csv_path,
    })
}

/// Median of `values`; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Median region count over the seeds of one (context, heads) cell,
/// ignoring diverged runs.
pub fn median_region_count(records: &[SweepRecord], context: usize, heads: usize) -> Option<f64> {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.context == context && r.heads == heads)
        .filter_map(|r| r.region_count.map(|c| c as f64))
        .collect();
    median(&v)
}

fn sorted_unique<T: Ord + Copy>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = it.collect();
    v.sort();
    v.dedup();
    v
}

/// Renders `sweep_regions.svg` and `sweep_mse.svg` from `sweep.csv`.
pub fn plot_sweep(out_dir: &Path) -> Result<()> {
    let records: Vec<SweepRecord> = read_csv(out_dir.join("sweep.csv"))?;
    let contexts = sorted_unique(records.iter().map(|r| r.context));
    let heads = sorted_unique(records.iter().map(|r| r.heads));
    let cell = |f: &dyn Fn(&SweepRecord) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
        heads
            .iter()
            .map(|&h| {
                contexts
                    .iter()
                    .map(|&c| {
                        let v: Vec<f64> = records
                            .iter()
                            .filter(|r| r.context == c && r.heads == h)
                            .filter_map(f)
                            .collect();
                        median(&v)
                    })
                    .collect()
            })
            .collect()
    };
    let base = Heatmap {
        x_label: "context length".into(),
        y_label: "heads".into(),
        x_ticks: contexts.iter().map(|c| c.to_string()).collect(),
        y_ticks: heads.iter().map(|h| h.to_string()).collect(),
        ..Default::default()
    };
    let regions = Heatmap {
        title: "median MLP region count".into(),
        values: cell(&|r| r.region_count.map(|c| c as f64)),
        ..base.clone()
    };
    let mse = Heatmap {
        title: "median final MSE".into(),
        values: cell(&|r| r.final_mse),
        ..base
    };
    write_text(out_dir.join("sweep_regions.svg"), &regions.to_svg())?;
    write_text(out_dir.join("sweep_mse.svg"), &mse.to_svg())?;
    Ok(())
}
