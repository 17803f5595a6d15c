use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::save_mlp;
use crate::error::{Error, Result};
use crate::experiments::svg::{LineChart, Series};
use crate::experiments::{read_csv, write_csv, write_text};
use crate::geometry::{
    count_regions_1d_exact, log10_big, partition_grid_2d, zaslavsky_bound, Bounds2d, RegionMethod, RegionRecord,
    RowPolicy, DEFAULT_EPSILON,
};
use crate::mlp::{BiasMode, MlpParams};
use crate::numkit::Rng;
use crate::traces::{id_profile, read_trace_file, relative_id_changes, LayerIdRecord, LayerIdSeries};
use crate::train::{fit_mlp_sine, AdamConfig, MlpFitConfig, SineDatasetMlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition2dConfig {
    pub seed: u64,
    pub n_hidden: usize,
    pub resolution: usize,
    pub half_width: f64,
    pub out_dir: PathBuf,
}

impl Default for Partition2dConfig {
    fn default() -> Self {
        Partition2dConfig {
            seed: 0,
            n_hidden: 16,
            resolution: 400,
            half_width: 3.0,
            out_dir: PathBuf::from("out/partition2d"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSummary {
    pub standard_regions: usize,
    pub zero_bias_regions: usize,
}

/// Draws the input-space partition of a random 2-D network with and without
/// biases.
pub fn run_partition2d(cfg: &Partition2dConfig) -> Result<PartitionSummary> {
    if !(cfg.half_width > 0.0 && cfg.half_width.is_finite()) {
        return Err(Error::param("half_width must be positive"));
    }
    let bounds = Bounds2d::square(cfg.half_width);
    let mut records = Vec::new();
    let mut counts = Vec::new();
    for (mode, name) in [(BiasMode::Standard, "standard"), (BiasMode::Zero, "zero")] {
        let p: MlpParams<f64> = MlpParams::init(&mut Rng::seed_from(cfg.seed), 2, cfg.n_hidden, 1, mode)?;
        let grid = partition_grid_2d(&p, bounds, cfg.resolution)?;
        fs::create_dir_all(&cfg.out_dir)?;
        fs::write(cfg.out_dir.join(format!("partition2d_{name}.ppm")), grid.to_ppm())?;
        write_text(cfg.out_dir.join(format!("partition2d_{name}.svg")), &grid.to_svg(600))?;
        counts.push(grid.region_count());
        records.push(RegionRecord {
            method: RegionMethod::Grid,
            n_hidden: cfg.n_hidden,
            heads: None,
            context: None,
            seed: cfg.seed,
            count: grid.region_count(),
        });
    }
    write_csv(cfg.out_dir.join("partition2d.csv"), &records)?;
    Ok(PartitionSummary {
        standard_regions: counts[0],
        zero_bias_regions: counts[1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineConfig {
    pub widths: Vec<usize>,
    pub seed: u64,
    pub steps: usize,
    pub n_points: usize,
    pub loss_every: usize,
    pub adam: AdamConfig,
    pub out_dir: PathBuf,
}

impl Default for SineConfig {
    fn default() -> Self {
        let base = MlpFitConfig::default();
        SineConfig {
            widths: vec![50, 500],
            seed: base.seed,
            steps: base.steps,
            n_points: base.n_points,
            loss_every: 100,
            adam: base.adam,
            out_dir: PathBuf::from("out/fit-sine"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub x: f64,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub x: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SineSummary {
    /// `(n_hidden, final_mse, exact region count)` per width.
    pub runs: Vec<(usize, f64, usize)>,
}

/// Fits each width to the sine target and records predictions, loss curve,
/// pointwise error and the exact region count on `[-2π, 2π]`.
pub fn run_fit_sine(cfg: &SineConfig) -> Result<SineSummary> {
    if cfg.widths.is_empty() {
        return Err(Error::param("need at least one width"));
    }
    let data = SineDatasetMlp::<f64>::new(cfg.n_points)?;
    let (lo, hi) = (data.x[0], data.x[data.len() - 1]);
    let mut runs = Vec::new();
    let mut regions = Vec::new();
    for &n in &cfg.widths {
        let fit = fit_mlp_sine::<f64>(&MlpFitConfig {
            n_hidden: n,
            seed: cfg.seed,
            steps: cfg.steps,
            n_points: cfg.n_points,
            adam: cfg.adam,
        })?;
        let pred = fit.params.forward(&data.inputs())?;
        let preds: Vec<PredictionRecord> = data
            .x
            .iter()
            .zip(&data.y)
            .zip(pred.as_slice())
            .map(|((&x, &y_true), &y_pred)| PredictionRecord { x, y_true, y_pred })
            .collect();
        let errs: Vec<ErrorRecord> = preds
            .iter()
            .map(|r| ErrorRecord {
                x: r.x,
                abs_err: (r.y_pred - r.y_true).abs(),
            })
            .collect();
        let losses: Vec<LossRecord> = fit
            .loss_curve(cfg.loss_every)
            .into_iter()
            .map(|(step, mse)| LossRecord { step, mse })
            .collect();
        write_csv(cfg.out_dir.join(format!("sine_pred_h{n}.csv")), &preds)?;
        write_csv(cfg.out_dir.join(format!("sine_err_h{n}.csv")), &errs)?;
        write_csv(cfg.out_dir.join(format!("sine_loss_h{n}.csv")), &losses)?;
        save_mlp(cfg.out_dir.join(format!("mlp_h{n}.params")), &fit.params)?;
        let count = count_regions_1d_exact(&fit.params, lo, hi)?.count;
        regions.push(RegionRecord {
            method: RegionMethod::Exact1d,
            n_hidden: n,
            heads: None,
            context: None,
            seed: cfg.seed,
            count,
        });
        runs.push((n, fit.final_mse, count));
    }
    write_csv(cfg.out_dir.join("sine_regions.csv"), &regions)?;
    plot_sine(&cfg.out_dir)?;
    Ok(SineSummary { runs })
}

/// Widths with a `<prefix><N>.csv` table in `dir`, ascending.
fn widths_in(dir: &Path, prefix: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|r| r.parse().ok())
        {
            out.push(n);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Renders `sine_pred.svg`, `sine_loss.svg` and `sine_err.svg` from the
/// per-width tables.
pub fn plot_sine(out_dir: &Path) -> Result<()> {
    let widths = widths_in(out_dir, "sine_pred_h")?;
    if widths.is_empty() {
        return Err(Error::param(format!("no sine_pred_h*.csv tables in {}", out_dir.display())));
    }
    let mut pred = LineChart {
        title: "sine fit".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        ..Default::default()
    };
    let mut loss = LineChart {
        title: "training loss".into(),
        x_label: "step".into(),
        y_label: "MSE".into(),
        log_y: true,
        ..Default::default()
    };
    let mut err = LineChart {
        title: "absolute error".into(),
        x_label: "x".into(),
        y_label: "|error|".into(),
        log_y: true,
        ..Default::default()
    };
    for (i, &n) in widths.iter().enumerate() {
        let p: Vec<PredictionRecord> = read_csv(out_dir.join(format!("sine_pred_h{n}.csv")))?;
        if i == 0 {
            pred.series.push(Series::new("sin(x)", p.iter().map(|r| (r.x, r.y_true)).collect()));
        }
        pred.series.push(Series::new(format!("{n} neurons"), p.iter().map(|r| (r.x, r.y_pred)).collect()));
        let l: Vec<LossRecord> = read_csv(out_dir.join(format!("sine_loss_h{n}.csv")))?;
        loss.series.push(Series::new(format!("{n} neurons"), l.iter().map(|r| (r.step as f64, r.mse)).collect()));
        let e: Vec<ErrorRecord> = read_csv(out_dir.join(format!("sine_err_h{n}.csv")))?;
        err.series.push(Series::new(format!("{n} neurons"), e.iter().map(|r| (r.x, r.abs_err)).collect()));
    }
    write_text(out_dir.join("sine_pred.svg"), &pred.to_svg())?;
    write_text(out_dir.join("sine_loss.svg"), &loss.to_svg())?;
    write_text(out_dir.join("sine_err.svg"), &err.to_svg())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub ns: Vec<u64>,
    /// Largest dimension emitted; `None` runs each curve up to `d = n`.
    pub d_max: Option<u64>,
    pub out_dir: PathBuf,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            ns: vec![50, 100, 500],
            d_max: None,
            out_dir: PathBuf::from("out/regions-bound"),
        }
    }
}

/// One row of `bound.csv`; `regions` is an exact decimal integer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub n: u64,
    pub d: u64,
    pub regions: String,
}

pub fn bound_records(ns: &[u64], d_max: Option<u64>) -> Vec<BoundRecord> {
    let mut out = Vec::new();
    for &n in ns {
        let top = d_max.map_or(n, |m| m.min(n));
        for d in 0..=top {
            out.push(BoundRecord {
                n,
                d,
                regions: zaslavsky_bound(n, d).to_string(),
            });
        }
    }
    out
}

pub fn run_regions_bound(cfg: &BoundConfig) -> Result<Vec<BoundRecord>> {
    if cfg.ns.is_empty() {
        return Err(Error::param("need at least one neuron count"));
    }
    let rows = bound_records(&cfg.ns, cfg.d_max);
    write_csv(cfg.out_dir.join("bound.csv"), &rows)?;
    plot_bound(&cfg.out_dir)?;
    Ok(rows)
}

/// Renders `bound.svg` (log-scale region bound against dimension).
pub fn plot_bound(out_dir: &Path) -> Result<()> {
    let rows: Vec<BoundRecord> = read_csv(out_dir.join("bound.csv"))?;
    let mut ns: Vec<u64> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let mut chart = LineChart {
        title: "region upper bound".into(),
        x_label: "input dimension d".into(),
        y_label: "log10 regions".into(),
        ..Default::default()
    };
    for n in ns {
        let pts = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| {
                let v = r.regions.parse().map_err(|_| Error::Format(format!("bad region count {:?}", r.regions)))?;
                Ok((r.d as f64, log10_big(&v)))
            })
            .collect::<Result<Vec<_>>>()?;
        chart.series.push(Series::new(format!("{n} neurons"), pts));
    }
    write_text(out_dir.join("bound.svg"), &chart.to_svg())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdTraceConfig {
    pub trace: PathBuf,
    /// Reference trace for the relative change.
    #[serde(default)]
    pub base: Option<PathBuf>,
    pub epsilon: f64,
    pub policy: RowPolicy,
    pub out_dir: PathBuf,
}

impl Default for IdTraceConfig {
    fn default() -> Self {
        IdTraceConfig {
            trace: PathBuf::from("trace.lgt"),
            base: None,
            epsilon: DEFAULT_EPSILON,
            policy: RowPolicy::Last,
            out_dir: PathBuf::from("out/id-trace"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdChangeRecord {
    pub layer: usize,
    pub relative_change: f64,
}

/// Per-layer ID of a trace, plus the change against `base` when given.
pub fn run_id_trace(cfg: &IdTraceConfig) -> Result<(LayerIdSeries, Option<Vec<f64>>)> {
    let trace = read_trace_file(&cfg.trace)?;
    let series = id_profile(&trace, cfg.epsilon, cfg.policy)?;
    write_csv(cfg.out_dir.join("id.csv"), &series.records())?;
    let change = match &cfg.base {
        Some(path) => {
            let base = read_trace_file(path)?;
            let ch = relative_id_changes(&base, &trace, cfg.epsilon, cfg.policy)?;
            let rows: Vec<IdChangeRecord> = ch
                .iter()
                .enumerate()
                .map(|(layer, &relative_change)| IdChangeRecord { layer, relative_change })
                .collect();
            write_csv(cfg.out_dir.join("id_change.csv"), &rows)?;
            Some(ch)
        }
        None => None,
    };
    plot_id(&cfg.out_dir)?;
    Ok((series, change))
}

/// Renders `id.svg`, and `id_change.svg` when `id_change.csv` exists.
pub fn plot_id(out_dir: &Path) -> Result<()> {
    let rows: Vec<LayerIdRecord> = read_csv(out_dir.join("id.csv"))?;
    let title = rows
        .first()
        .map_or("ID per layer".to_string(), |r| format!("ID per layer (eps {}, {} row)", r.epsilon, r.row_policy));
    let chart = LineChart {
        title,
        x_label: "layer".into(),
        y_label: "ID".into(),
        series: vec![Series::new("ID", rows.iter().map(|r| (r.layer as f64, r.id)).collect())],
        ..Default::default()
    };
    write_text(out_dir.join("id.svg"), &chart.to_svg())?;
    let change_path = out_dir.join("id_change.csv");
    if change_path.exists() {
        let rows: Vec<IdChangeRecord> = read_csv(change_path)?;
        let chart = LineChart {
            title: "relative ID change".into(),
            x_label: "layer".into(),
            y_label: "change (%)".into(),
            series: vec![Series::new(
                "variant vs base",
                rows.iter().map(|r| (r.layer as f64, r.relative_change)).collect(),
            )],
            ..Default::default()
        };
        write_text(out_dir.join("id_change.svg"), &chart.to_svg())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionTensor;
    use crate::numkit::Matrix;
    use crate::traces::{write_trace_file, TraceManifest};

    #[test]
    fn partition_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = Partition2dConfig {
            resolution: 40,
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let s = run_partition2d(&cfg).unwrap();
        assert!(s.standard_regions > 1 && s.zero_bias_regions > 1);
        for f in ["partition2d_standard.ppm", "partition2d_zero.svg", "partition2d.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let rows: Vec<RegionRecord> = read_csv(dir.path().join("partition2d.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, RegionMethod::Grid);
    }

    #[test]
    fn bound_table_and_plot() {
        let rows = bound_records(&[3, 5], Some(2));
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[2], BoundRecord { n: 3, d: 2, regions: "7".into() });
        let dir = tempfile::tempdir().unwrap();
        let cfg = BoundConfig {
            ns: vec![50],
            d_max: Some(10),
            out_dir: dir.path().to_path_buf(),
        };
        run_regions_bound(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join("bound.csv")).unwrap();
        assert!(text.starts_with("n,d,regions\n50,0,1\n50,1,51\n"));
        assert!(dir.path().join("bound.svg").exists());
    }

    #[test]
    fn short_sine_run_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SineConfig {
            widths: vec![4, 8],
            steps: 20,
            n_points: 50,
            loss_every: 10,
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let s = run_fit_sine(&cfg).unwrap();
        assert_eq!(s.runs.len(), 2);
        let loss: Vec<LossRecord> = read_csv(dir.path().join("sine_loss_h8.csv")).unwrap();
        assert_eq!(loss.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 10, 20]);
        let pred: Vec<PredictionRecord> = read_csv(dir.path().join("sine_pred_h4.csv")).unwrap();
        assert_eq!(pred.len(), 50);
        let head = fs::read_to_string(dir.path().join("sine_err_h4.csv")).unwrap();
        assert!(head.starts_with("x,abs_err\n"));
        fs::remove_file(dir.path().join("sine_pred.svg")).unwrap();
        plot_sine(dir.path()).unwrap();
        assert!(dir.path().join("sine_pred.svg").exists());
    }

    #[test]
    fn id_trace_with_base() {
        let dir = tempfile::tempdir().unwrap();
        let n = 10;
        let spread = |k: usize| {
            let mut m = Matrix::zeros(n, n);
            for i in 0..n - 1 {
                m[(i, i)] = 1.0;
            }
            for j in 0..k {
                m[(n - 1, j)] = 1.0 / k as f64;
            }
            AttentionTensor::new(vec![m]).unwrap()
        };
        let manifest = TraceManifest {
            model: "toy".into(),
            layers: 2,
            heads: 1,
            seq_len: n,
        };
        write_trace_file(dir.path().join("base.lgt"), &manifest, &[spread(5), spread(5)]).unwrap();
        write_trace_file(dir.path().join("var.lgt"), &manifest, &[spread(6), spread(4)]).unwrap();
        let cfg = IdTraceConfig {
            trace: dir.path().join("var.lgt"),
            base: Some(dir.path().join("base.lgt")),
            out_dir: dir.path().join("out"),
            ..Default::default()
        };
        let (series, change) = run_id_trace(&cfg).unwrap();
        assert_eq!(series.values, vec![6.0, 4.0]);
        let change = change.unwrap();
        assert!((change[0] - 20.0).abs() < 1e-12 && (change[1] + 20.0).abs() < 1e-12);
        assert!(dir.path().join("out/id_change.svg").exists());
    }
}
