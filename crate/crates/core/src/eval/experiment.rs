//! The f/k sweep and its CSV report.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use super::{evaluate, Metrics, DEFAULT_TOP_N};
use crate::baselines::{MostPopular, UserKnn};
use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::neighborhood::{k_nearest_neighbors, ExplainabilityMatrix, NeighborModel, DEFAULT_K};
use crate::rbm::{train, ExplainabilityMode, RbmRecommender, TrainConfig};

/// Column header of the report table.
pub const REPORT_HEADER: &str = "model,f,k,run,rmse,ndcg10,mep,mer";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelTag {
    Erbm,
    Rbm,
    UserKnn,
    MostPopular,
}

impl ModelTag {
    pub const ALL: [ModelTag; 4] = [ModelTag::Erbm, ModelTag::Rbm, ModelTag::UserKnn, ModelTag::MostPopular];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Erbm => "erbm",
            ModelTag::Rbm => "rbm",
            ModelTag::UserKnn => "user_knn",
            ModelTag::MostPopular => "most_popular",
        }
    }

    /// Whether the model has a hidden-unit count.
    pub fn uses_f(self) -> bool {
        matches!(self, ModelTag::Erbm | ModelTag::Rbm)
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erbm" => Ok(ModelTag::Erbm),
            "rbm" | "plain_rbm" => Ok(ModelTag::Rbm),
            "user_knn" | "knn" => Ok(ModelTag::UserKnn),
            "most_popular" | "popular" => Ok(ModelTag::MostPopular),
            _ => Err(Error::Config(format!("unknown model {s:?}"))),
        }
    }
}

/// Which (f, k) pairs a sweep visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridShape {
    /// Every f with every k.
    Full,
    /// Each f at the default k, plus each k at the default f.
    Figure,
}

impl FromStr for GridShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(GridShape::Full),
            "figure" => Ok(GridShape::Figure),
            _ => Err(Error::Config(format!("unknown grid shape {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelTag>,
    pub f_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub default_f: usize,
    pub default_k: usize,
    pub runs: usize,
    pub shape: GridShape,
    pub top_n: usize,
    pub theta: f64,
    /// Training settings; `hidden_units`, `seed` and `explainability_mode`
    /// are overridden per cell.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: ModelTag::ALL.to_vec(),
            f_values: vec![10, 20, 50, 100],
            k_values: vec![10, 25, 50, 100],
            default_f: 50,
            default_k: DEFAULT_K,
            runs: 10,
            shape: GridShape::Figure,
            top_n: DEFAULT_TOP_N,
            theta: 0.0,
            train: TrainConfig::default(),
        }
    }
}

/// One grid cell: a model at a hidden size (RBMs only) and neighborhood size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub model: ModelTag,
    pub f: Option<usize>,
    pub k: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.k_values.is_empty() {
            return Err(Error::Config("grid needs at least one model and one k".into()));
        }
        if self.models.iter().any(|m| m.uses_f()) && self.f_values.is_empty() {
            return Err(Error::Config("RBM models need at least one f".into()));
        }
        if self.runs == 0 || self.top_n == 0 {
            return Err(Error::Config("runs and top_n must be positive".into()));
        }
        if self.k_values.contains(&0) || self.f_values.contains(&0) {
            return Err(Error::Config("f and k values must be positive".into()));
        }
        Ok(())
    }

    fn fk_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        match self.shape {
            GridShape::Full => {
                for &f in &self.f_values {
                    for &k in &self.k_values {
                        pairs.push((f, k));
                    }
                }
            }
            GridShape::Figure => {
                pairs.extend(self.f_values.iter().map(|&f| (f, self.default_k)));
                pairs.extend(self.k_values.iter().map(|&k| (self.default_f, k)));
            }
        }
        dedup(pairs)
    }

    fn k_list(&self) -> Vec<usize> {
        let mut ks = self.k_values.clone();
        if self.shape == GridShape::Figure && self.models.iter().any(|m| m.uses_f()) {
            ks.push(self.default_k);
        }
        dedup(ks)
    }

    /// The grid cells in report order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &model in &self.models {
            if model.uses_f() {
                for (f, k) in self.fk_pairs() {
                    cells.push(Cell { model, f: Some(f), k });
                }
            } else {
                for k in self.k_list() {
                    cells.push(Cell { model, f: None, k });
                }
            }
        }
        dedup(cells)
    }
}

fn dedup<T: PartialEq + Clone>(xs: Vec<T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(xs.len());
    for x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub model: ModelTag,
    pub f: Option<usize>,
    pub k: usize,
    pub run: usize,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub model: ModelTag,
    pub f: Option<usize>,
    pub k: usize,
    pub run: usize,
    pub message: String,
}

/// Mean and, over two or more runs, sample standard deviation of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub cell: Cell,
    pub runs: usize,
    pub mean: Metrics,
    pub std: Option<Metrics>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    /// Free-text lines written as `#` comments above the table.
    pub metadata: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<CellFailure>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn fmt_opt<T: fmt::Display>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl MetricsReport {
    /// Aggregates over completed runs, one per cell with at least one row, in
    /// order of first appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut cells: Vec<Cell> = Vec::new();
        for r in &self.rows {
            let c = Cell {
                model: r.model,
                f: r.f,
                k: r.k,
            };
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        cells
            .into_iter()
            .map(|cell| {
                let rows: Vec<&Metrics> = self
                    .rows
                    .iter()
                    .filter(|r| r.model == cell.model && r.f == cell.f && r.k == cell.k)
                    .map(|r| &r.metrics)
                    .collect();
                let col = |g: fn(&Metrics) -> f64| mean_std(&rows.iter().map(|m| g(m)).collect::<Vec<_>>());
                let rmse: Option<Vec<f64>> = rows.iter().map(|m| m.rmse).collect();
                let rmse = rmse.map(|xs| mean_std(&xs));
                let (ndcg, ndcg_sd) = col(|m| m.ndcg);
                let (mep, mep_sd) = col(|m| m.mep);
                let (mer, mer_sd) = col(|m| m.mer);
                let mean = Metrics {
                    rmse: rmse.map(|p| p.0),
                    ndcg,
                    mep,
                    mer,
                };
                let std = (rows.len() > 1).then_some(Metrics {
                    rmse: rmse.map(|p| p.1),
                    ndcg: ndcg_sd,
                    mep: mep_sd,
                    mer: mer_sd,
                });
                Aggregate {
                    cell,
                    runs: rows.len(),
                    mean,
                    std,
                }
            })
            .collect()
    }

    /// The mean for one cell, if any run of it completed.
    pub fn mean(&self, model: ModelTag, f: Option<usize>, k: usize) -> Option<Metrics> {
        self.aggregates()
            .into_iter()
            .find(|a| a.cell == Cell { model, f, k })
            .map(|a| a.mean)
    }

    fn write_line<W: Write>(out: &mut W, cell: Cell, run: &str, m: &Metrics) -> Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            cell.model,
            fmt_opt(cell.f),
            cell.k,
            run,
            fmt_opt(m.rmse),
            m.ndcg,
            m.mep,
            m.mer
        )?;
        Ok(())
    }

    /// Metadata as `#` lines, the header, every per-run row, then each cell's
    /// `mean` and `std` rows, then failures as `#` lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for line in &self.metadata {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.rows {
            let cell = Cell {
                model: r.model,
                f: r.f,
                k: r.k,
            };
            Self::write_line(&mut out, cell, &r.run.to_string(), &r.metrics)?;
        }
        for agg in self.aggregates() {
            Self::write_line(&mut out, agg.cell, "mean", &agg.mean)?;
            if let Some(std) = &agg.std {
                Self::write_line(&mut out, agg.cell, "std", std)?;
            }
        }
        for fail in &self.failures {
            writeln!(
                out,
                "# failed model={} f={} k={} run={}: {}",
                fail.model,
                fmt_opt(fail.f),
                fail.k,
                fail.run,
                fail.message
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("report is ASCII")
    }
}

fn metadata(config: &ExperimentConfig, split: &DatasetSplit) -> Vec<String> {
    let t = &config.train;
    vec![
        format!(
            "data users={} items={} train_ratings={} test_ratings={} test_fraction={}",
            split.n_users(),
            split.n_items(),
            split.train.n_ratings(),
            split.test.len(),
            split.test_fraction
        ),
        format!(
            "train epochs={} lr_w={} lr_d={} cd_steps={} batch={} momentum={}->{}@{} weight_decay={} init_std={} m_treatment={} hidden_statistics={}",
            t.epochs,
            t.learning_rate_w,
            t.learning_rate_d,
            t.cd_steps,
            t.batch_size,
            t.momentum_initial,
            t.momentum_final,
            t.momentum_switch_epoch,
            t.weight_decay,
            t.init_std,
            t.m_treatment.as_str(),
            t.hidden_statistics.as_str()
        ),
        format!("seeds are run indices 0..{}", config.runs),
        "neighborhoods: cosine similarity over training ratings only; score(u,i) = sum of neighbor ratings / (k * max rating)".into(),
        format!(
            "ndcg{}: full unrated candidate ranking, gain = held-out rating if >= 4 else 0, mean over users with held-out ratings",
            config.top_n
        ),
        format!(
            "mep: mean over users of |top-{n} with score > {th}| / |top-{n}|; mer: mean over users of |top-{n} with score > {th}| / |unrated items with score > {th}|, users with no such item skipped",
            n = config.top_n,
            th = config.theta
        ),
        "user_knn: similarity-weighted mean of positive-similarity neighbors' ratings; fallback user mean, then global mean".into(),
        "most_popular: items by training rating count, ties to smaller item id; no rmse".into(),
        "rbm: same trainer with the explainability units disabled".into(),
        "emf: not computed here; external rows may be appended with model=emf".into(),
    ]
}

/// Runs every cell of the grid for `config.runs` seeds.
///
/// Neighborhoods and explainability matrices are computed once per k and
/// shared. An RBM trained at some f and seed is evaluated at every k it is
/// paired with; E-RBMs are trained per (f, k). The deterministic baselines are
/// evaluated once per cell and repeated for each run. Failures are recorded
/// and the sweep continues.
pub fn run_experiment(
    split: &DatasetSplit,
    config: &ExperimentConfig,
    mut progress: impl FnMut(&str),
) -> Result<MetricsReport> {
    config.validate()?;
    let cells = config.cells();
    let ks: BTreeSet<usize> = cells.iter().map(|c| c.k).collect();
    let max_k = ks.iter().copied().max().unwrap_or(DEFAULT_K);
    let full: NeighborModel = k_nearest_neighbors(&split.train, max_k)?;
    let neighborhoods: Vec<(usize, NeighborModel, ExplainabilityMatrix)> = ks
        .iter()
        .map(|&k| {
            let nbrs = full.truncated(k);
            let expl = ExplainabilityMatrix::from_neighbors(&split.train, &nbrs).with_threshold(config.theta);
            (k, nbrs, expl)
        })
        .collect();
    let lookup = |k: usize| {
        let (_, n, e) = neighborhoods.iter().find(|(kk, _, _)| *kk == k).expect("k was tabulated");
        (n, e)
    };

    let mut report = MetricsReport {
        metadata: metadata(config, split),
        ..MetricsReport::default()
    };
    // (cell index, run) -> outcome
    let mut results: Vec<(usize, usize, std::result::Result<Metrics, String>)> = Vec::new();

    let eval_at = |rec: &dyn super::Recommender, k: usize| {
        let (_, expl) = lookup(k);
        evaluate(rec, split, expl, config.top_n, config.theta)
    };

    for (idx, cell) in cells.iter().enumerate() {
        match cell.model {
            ModelTag::UserKnn => {
                let (nbrs, _) = lookup(cell.k);
                let knn = UserKnn {
                    matrix: &split.train,
                    neighbors: nbrs,
                };
                let out = eval_at(&knn, cell.k).map_err(|e| e.to_string());
                progress(&format!("user_knn k={} done", cell.k));
                for run in 0..config.runs {
                    results.push((idx, run, out.clone()));
                }
            }
            ModelTag::MostPopular => {
                let pop = MostPopular::new(&split.train);
                let out = eval_at(&pop, cell.k).map_err(|e| e.to_string());
                progress(&format!("most_popular k={} done", cell.k));
                for run in 0..config.runs {
                    results.push((idx, run, out.clone()));
                }
            }
            ModelTag::Erbm => {
                let f = cell.f.expect("RBM cells carry f");
                let (_, expl) = lookup(cell.k);
                for run in 0..config.runs {
                    let tc = TrainConfig {
                        hidden_units: f,
                        seed: run as u64,
                        explainability_mode: ExplainabilityMode::Conditioned,
                        ..config.train.clone()
                    };
                    let out = train(split, expl, &tc).and_then(|(params, _)| {
                        let rec = RbmRecommender {
                            params: &params,
                            split,
                            expl,
                        };
                        eval_at(&rec, cell.k)
                    });
                    progress(&format!("erbm f={f} k={} run={run} {}", cell.k, status(&out)));
                    results.push((idx, run, out.map_err(|e| e.to_string())));
                }
            }
            ModelTag::Rbm => {}
        }
    }

    // plain RBMs do not depend on k: train once per (f, run)
    let rbm_fs: Vec<usize> = dedup(cells.iter().filter(|c| c.model == ModelTag::Rbm).filter_map(|c| c.f).collect());
    for f in rbm_fs {
        let at_f: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.model == ModelTag::Rbm && c.f == Some(f))
            .map(|(i, c)| (i, c.k))
            .collect();
        for run in 0..config.runs {
            let tc = TrainConfig {
                hidden_units: f,
                seed: run as u64,
                explainability_mode: ExplainabilityMode::Disabled,
                ..config.train.clone()
            };
            let (_, any_expl) = lookup(at_f[0].1);
            match train(split, any_expl, &tc) {
                Ok((params, _)) => {
                    for &(idx, k) in &at_f {
                        let (_, expl) = lookup(k);
                        let rec = RbmRecommender {
                            params: &params,
                            split,
                            expl,
                        };
                        let out = eval_at(&rec, k);
                        results.push((idx, run, out.map_err(|e| e.to_string())));
                    }
                    progress(&format!("rbm f={f} run={run} ok"));
                }
                Err(e) => {
                    progress(&format!("rbm f={f} run={run} failed: {e}"));
                    for &(idx, _) in &at_f {
                        results.push((idx, run, Err(e.to_string())));
                    }
                }
            }
        }
    }

    results.sort_by_key(|(idx, run, _)| (*idx, *run));
    for (idx, run, out) in results {
        let cell = cells[idx];
        match out {
            Ok(metrics) => report.rows.push(ReportRow {
                model: cell.model,
                f: cell.f,
                k: cell.k,
                run,
                metrics,
            }),
            Err(message) => report.failures.push(CellFailure {
                model: cell.model,
                f: cell.f,
                k: cell.k,
                run,
                message,
            }),
        }
    }
    Ok(report)
}

fn status<T>(r: &Result<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    }
}
