use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{load_bundle, run_pipeline, PipelineConfig, RunReport, Tracker};
use crate::error::{Error, Result};
use crate::train::{object_seed, train_iteration, ObjectModel};

/// Parameters to sweep, parsed from `key=v1,v2;key=...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepSpec {
    /// Cartesian product of hash table sizes and MLP depths; empty lists
    /// keep the configured value.
    ModelSize {
        table_size_log2: Vec<u32>,
        hidden_layers: Vec<usize>,
    },
    /// Trains the most-observed object serially for a fixed number of
    /// iterations per density weight.
    DensityLoss {
        lambda_density: Vec<f64>,
        iterations: usize,
        threshold: f64,
        /// Trailing window for the σ criterion.
        window: usize,
    },
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::Config(format!("bad value {s:?} for {key}"))))
        .collect()
}

impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tables = Vec::new();
        let mut layers = Vec::new();
        let mut lambdas = None;
        let (mut iterations, mut threshold, mut window) = (1200, 1e-2, 10);
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("sweep term {part:?} is not key=values")))?;
            let key = key.trim();
            match key {
                "table_size_log2" => tables = parse_list(key, value)?,
                "hidden_layers" => layers = parse_list(key, value)?,
                "lambda_density" => lambdas = Some(parse_list::<f64>(key, value)?),
                "iterations" => iterations = value.trim().parse().map_err(|_| Error::Config(format!("bad iterations {value:?}")))?,
                "threshold" => threshold = value.trim().parse().map_err(|_| Error::Config(format!("bad threshold {value:?}")))?,
                "window" => window = value.trim().parse().map_err(|_| Error::Config(format!("bad window {value:?}")))?,
                _ => return Err(Error::Config(format!("unknown sweep key {key:?}"))),
            }
        }
        let spec = match lambdas {
            Some(lambda_density) => {
                if !tables.is_empty() || !layers.is_empty() {
                    return Err(Error::Config("lambda_density cannot be combined with model-size keys".into()));
                }
                SweepSpec::DensityLoss {
                    lambda_density,
                    iterations,
                    threshold,
                    window,
                }
            }
            None if tables.is_empty() && layers.is_empty() => return Err(Error::Config("empty sweep".into())),
            None => SweepSpec::ModelSize {
                table_size_log2: tables,
                hidden_layers: layers,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SweepSpec::ModelSize { table_size_log2, hidden_layers } => {
                if table_size_log2.iter().any(|&t| !(4..=24).contains(&t)) {
                    return Err(Error::Config("table_size_log2 must lie in [4, 24]".into()));
                }
                if hidden_layers.contains(&0) {
                    return Err(Error::Config("hidden_layers must be >= 1".into()));
                }
            }
            SweepSpec::DensityLoss {
                lambda_density,
                iterations,
                threshold,
                window,
            } => {
                if lambda_density.is_empty() || lambda_density.iter().any(|l| !(*l >= 0.0)) {
                    return Err(Error::Config("lambda_density values must be non-negative".into()));
                }
                if *iterations < 1 || *window < 1 || !(*threshold > 0.0) {
                    return Err(Error::Config("iterations, window and threshold must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub table_size_log2: u32,
    pub hidden_layers: usize,
    pub mean_ms_per_iteration: Option<f64>,
    pub mean_accuracy_cm: Option<f64>,
    pub mean_completion_cm: Option<f64>,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub lambda_density: f64,
    pub object_id: u32,
    /// Mean background-ray σ per iteration.
    pub mean_background_sigma: Vec<f64>,
    pub total_loss: Vec<f64>,
    /// First iteration (one-based) whose trailing-window mean σ is below the
    /// threshold.
    pub iterations_to_threshold: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "rows", rename_all = "snake_case")]
pub enum AblationTable {
    ModelSize(Vec<AblationRow>),
    DensityLoss(Vec<ConvergenceCurve>),
}

impl AblationTable {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        match self {
            AblationTable::ModelSize(rows) => {
                s.push_str("| T_log2 | layers | ms/iter | Acc [cm] | Comp [cm] | error |\n|---|---|---|---|---|---|\n");
                let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
                for r in rows {
                    s.push_str(&format!(
                        "| {} | {} | {} | {} | {} | {} |\n",
                        r.table_size_log2,
                        r.hidden_layers,
                        f(r.mean_ms_per_iteration),
                        f(r.mean_accuracy_cm),
                        f(r.mean_completion_cm),
                        r.error.as_deref().unwrap_or("")
                    ));
                }
            }
            AblationTable::DensityLoss(curves) => {
                s.push_str("| λ₂ | object | iterations to threshold | final σ | error |\n|---|---|---|---|---|\n");
                for c in curves {
                    s.push_str(&format!(
                        "| {} | {} | {} | {} | {} |\n",
                        c.lambda_density,
                        c.object_id,
                        c.iterations_to_threshold.map_or("never".to_string(), |i| i.to_string()),
                        c.mean_background_sigma.last().map_or("-".to_string(), |v| format!("{v:.3e}")),
                        c.error.as_deref().unwrap_or("")
                    ));
                }
            }
        }
        s
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// First one-based index at which the trailing `window` mean drops below
/// `threshold`.
pub(crate) fn first_below(series: &[f64], window: usize, threshold: f64) -> Option<usize> {
    (window.min(series.len()).max(1)..=series.len()).find(|&end| {
        let w = &series[end.saturating_sub(window)..end];
        w.iter().sum::<f64>() / w.len() as f64 <= threshold
    })
}

fn model_size_row(config: &PipelineConfig, t: u32, l: usize) -> AblationRow {
    let mut cfg = config.clone();
    cfg.model.table_size_log2 = t;
    cfg.model.hidden_layers = l;
    cfg.output_dir = cfg.output_dir.map(|d| d.join(format!("t{t}_l{l}")));
    match run_pipeline(&cfg) {
        Ok(out) => {
            let r = out.report;
            let trained: Vec<_> = r.objects.iter().filter(|o| o.iterations > 0).collect();
            AblationRow {
                table_size_log2: t,
                hidden_layers: l,
                mean_ms_per_iteration: mean(trained.iter().map(|o| o.mean_ms_per_iteration)),
                mean_accuracy_cm: mean(r.objects.iter().filter_map(|o| o.metrics.as_ref()).map(|m| m.accuracy_cm)),
                mean_completion_cm: mean(r.objects.iter().filter_map(|o| o.metrics.as_ref()).map(|m| m.completion_cm)),
                report: Some(r),
                error: None,
            }
        }
        Err(e) => AblationRow {
            table_size_log2: t,
            hidden_layers: l,
            mean_ms_per_iteration: None,
            mean_accuracy_cm: None,
            mean_completion_cm: None,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

fn density_curves(config: &PipelineConfig, lambdas: &[f64], iterations: usize, threshold: f64, window: usize) -> Result<Vec<ConvergenceCurve>> {
    let bundle = load_bundle(config)?;
    let mut tracker = Tracker::new(bundle, config.objslam, config.train.update_angle_deg);
    for i in 0..tracker.frames.len() {
        tracker.step(i)?;
    }
    let target = tracker
        .map
        .landmarks()
        .iter()
        .filter(|l| !l.keyframes.is_empty())
        .max_by_key(|l| (l.keyframes.len(), l.points.len(), std::cmp::Reverse(l.id)))
        .ok_or(Error::Empty("tracked objects"))?;
    let snapshot = tracker.snapshot(target.id)?;
    let mut curves = Vec::new();
    for &lambda in lambdas {
        let mut train = config.train;
        train.lambda_density = lambda;
        let seed = object_seed(train.seed, target.id);
        let mut curve = ConvergenceCurve {
            lambda_density: lambda,
            object_id: target.id,
            mean_background_sigma: Vec::with_capacity(iterations),
            total_loss: Vec::with_capacity(iterations),
            iterations_to_threshold: None,
            error: None,
        };
        let run = (|| -> Result<()> {
            let mut model = ObjectModel::new(target.id, config.model.clone(), seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(object_seed(train.seed ^ 0x0DDB_1A5E_5BAD_5EED, target.id));
            for _ in 0..iterations {
                let r = train_iteration(&mut model, &snapshot, &train, &mut rng)?;
                curve.mean_background_sigma.push(r.mean_background_sigma);
                curve.total_loss.push(r.total);
            }
            Ok(())
        })();
        if let Err(e) = run {
            curve.error = Some(e.to_string());
        }
        curve.iterations_to_threshold = first_below(&curve.mean_background_sigma, window, threshold);
        curves.push(curve);
    }
    Ok(curves)
}

/// Runs the sweep with the configuration's seed shared across runs. A
/// failing configuration is recorded in its row and the sweep continues.
pub fn run_ablation(config: &PipelineConfig, sweep: &SweepSpec) -> Result<AblationTable> {
    config.validate()?;
    sweep.validate()?;
    match sweep {
        SweepSpec::ModelSize { table_size_log2, hidden_layers } => {
            let tables = if table_size_log2.is_empty() { vec![config.model.table_size_log2] } else { table_size_log2.clone() };
            let layers = if hidden_layers.is_empty() { vec![config.model.hidden_layers] } else { hidden_layers.clone() };
            let rows = tables
                .iter()
                .flat_map(|&t| layers.iter().map(move |&l| (t, l)))
                .map(|(t, l)| model_size_row(config, t, l))
                .collect();
            Ok(AblationTable::ModelSize(rows))
        }
        SweepSpec::DensityLoss {
            lambda_density,
            iterations,
            threshold,
            window,
        } => density_curves(config, lambda_density, *iterations, *threshold, *window).map(AblationTable::DensityLoss),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sweeps() {
        let s: SweepSpec = "table_size_log2=14,20;hidden_layers=1,3".parse().unwrap();
        assert_eq!(
            s,
            SweepSpec::ModelSize {
                table_size_log2: vec![14, 20],
                hidden_layers: vec![1, 3]
            }
        );
        let d: SweepSpec = "lambda_density=0,0.01; iterations=50".parse().unwrap();
        assert!(matches!(d, SweepSpec::DensityLoss { iterations: 50, ref lambda_density, .. } if lambda_density == &[0.0, 0.01]));
        assert!("".parse::<SweepSpec>().is_err());
        assert!("hidden_layers=0".parse::<SweepSpec>().is_err());
        assert!("foo=1".parse::<SweepSpec>().is_err());
        assert!("lambda_density=-1".parse::<SweepSpec>().is_err());
    }

    #[test]
    fn threshold_crossing() {
        let s = [1.0, 0.5, 0.1, 0.001, 0.001, 0.001];
        assert_eq!(first_below(&s, 1, 0.01), Some(4));
        assert_eq!(first_below(&s, 3, 0.01), Some(6));
        assert_eq!(first_below(&s, 3, 1e-6), None);
        assert_eq!(first_below(&[], 3, 1.0), None);
    }
}
