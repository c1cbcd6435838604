use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{LambdaMode, RunConfig};
use super::{
    format_f64, load_csv, load_table, read_json, save_csv, sha256_file, sha256_hex, write_csv, write_json, Manifest,
    OutputDir,
};
use crate::error::{Error, Result};
use crate::estimator::{cross_validate, fit_network, predict, CvResult, FitConfig, NetworkFit};
use crate::glm::Family;
use crate::kernels::KernelSpec;
use crate::network::{adjacency, covariate_cluster, in_degrees, spectral_cluster};
use crate::rates::{tuning, RatesReport};
use crate::series::TimeSeries;
use crate::simulate::{self, GridSpec, SimSpec};

/// A parsed command line: configuration plus optional overrides.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config_path: PathBuf,
    pub config: RunConfig,
    config_sha256: String,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Invocation {
    pub fn load(config_path: &Path, data: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        let (config, bytes) = RunConfig::load(config_path)?;
        Ok(Self {
            config_path: config_path.to_path_buf(),
            config,
            config_sha256: sha256_hex(&bytes),
            data,
            out,
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.config.seed)
    }

    /// Paths inside the configuration are relative to its directory.
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    fn out_dir(&self) -> Result<OutputDir> {
        let root = match (&self.out, &self.config.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => self.resolve(o),
            (None, None) => PathBuf::from("out"),
        };
        OutputDir::create(root)
    }

    fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs --data <csv>".into()))
    }

    fn load_data(&self) -> Result<TimeSeries> {
        let series = load_csv(self.data_path()?)?;
        series.with_family_hint(self.config.family)
    }

    fn manifest(&self, command: &str, inputs: Vec<(&str, &Path)>) -> Result<Manifest> {
        let inputs = inputs
            .into_iter()
            .map(|(role, p)| Ok((role.to_string(), p.display().to_string(), sha256_file(p)?)))
            .collect::<Result<_>>()?;
        Ok(Manifest {
            command: command.to_string(),
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: self.config_path.display().to_string(),
            config_sha256: self.config_sha256.clone(),
            seed: self.seed(),
            inputs,
            outputs: Vec::new(),
        })
    }
}

fn f(v: f64) -> String {
    format_f64(v)
}

/// `spamnet simulate`: `data.csv`, `truth.json`.
pub fn cmd_simulate(inv: &Invocation) -> Result<PathBuf> {
    let sec = inv
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("missing [simulate] section".into()))?;
    let spec = SimSpec {
        family: inv.config.family,
        d: sec.d,
        t: sec.t,
        r: sec.r,
        s: sec.s,
        seed: inv.seed(),
        burn_in: sec.burn_in,
    };
    let (data, truth) = simulate::generate(&spec)?;
    let mut out = inv.out_dir()?;
    save_csv(&data, &out.file("data.csv"))?;
    write_json(&out.file("truth.json"), &truth)?;
    out.finish(inv.manifest("simulate", vec![])?)
}

/// `spamnet rates`: `rates.txt` (key = value) and `rates.json`.
pub fn cmd_rates(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let kernel = cfg.kernel()?;
    let mixing = cfg.mixing()?;
    let mut inputs = Vec::new();
    let (t, d) = match (cfg.rates.t, cfg.rates.d) {
        (Some(t), Some(d)) => (t, d),
        (t, d) => {
            let data = inv.load_data().map_err(|e| match e {
                Error::Config(_) => Error::Config("[rates] needs `t` and `d`, or --data".into()),
                other => other,
            })?;
            inputs.push(("data", inv.data_path()?));
            (t.unwrap_or(data.transitions()), d.unwrap_or(data.dim()))
        }
    };
    let mut report = tuning(&kernel, &mixing, t, d, cfg.lambda.c1)?;
    if let Some(s) = cfg.rates.sparsity {
        report = report.with_nodes(&vec![s; d], cfg.rates.theta, cfg.rates.c4, cfg.rates.c)?;
    }
    let mut out = inv.out_dir()?;
    write_rates(&report, &out.file("rates.txt"))?;
    write_json(&out.file("rates.json"), &report)?;
    out.finish(inv.manifest("rates", inputs)?)
}

fn write_rates(report: &RatesReport, path: &Path) -> Result<()> {
    let text: String = report
        .to_key_values()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// How the penalties of a fit were obtained.
#[derive(Debug, Clone, Serialize)]
struct LambdaChoice {
    mode: LambdaMode,
    lambda_t: f64,
    lambda_h: f64,
    rates: Option<RatesReport>,
    cv: Option<CvResult>,
}

fn choose_lambdas(inv: &Invocation, data: &TimeSeries, kernel: &KernelSpec) -> Result<LambdaChoice> {
    let cfg = &inv.config;
    match cfg.lambda.mode {
        LambdaMode::Fixed => {
            let lt = cfg
                .lambda
                .lambda_t
                .ok_or_else(|| Error::Config("[lambda]: mode = \"fixed\" needs `lambda_t`".into()))?;
            let lh = cfg.lambda.lambda_h.unwrap_or(0.0);
            Ok(LambdaChoice { mode: LambdaMode::Fixed, lambda_t: lt, lambda_h: lh, rates: None, cv: None })
        }
        LambdaMode::Theory => {
            if cfg.lambda.lambda_t.is_some() || cfg.lambda.lambda_h.is_some() {
                return Err(Error::Config("[lambda]: `lambda_t`/`lambda_h` only apply to mode = \"fixed\"".into()));
            }
            let rep = tuning(kernel, &cfg.mixing()?, data.transitions(), data.dim(), cfg.lambda.c1)?;
            Ok(LambdaChoice { mode: LambdaMode::Theory, lambda_t: rep.lambda_t, lambda_h: rep.lambda_h, rates: Some(rep), cv: None })
        }
        LambdaMode::Cv => {
            let cv = run_cv(inv, data, kernel)?;
            Ok(LambdaChoice { mode: LambdaMode::Cv, lambda_t: cv.lambda_t, lambda_h: cv.lambda_h, rates: None, cv: Some(cv) })
        }
    }
}

fn run_cv(inv: &Invocation, data: &TimeSeries, kernel: &KernelSpec) -> Result<CvResult> {
    let cfg = &inv.config;
    let horizon = cfg.lambda.cv_horizon()?;
    let base = cfg.solver.fit_config(0.0, 0.0);
    cross_validate(data, &cfg.lambda.grid(), horizon, kernel, cfg.family, &base)
}

fn cv_rows(cv: &CvResult) -> Vec<Vec<String>> {
    cv.table
        .iter()
        .map(|r| {
            let mut row = vec![f(r.lambda_t), f(r.lambda_h)];
            row.extend(r.fold_losses.iter().map(|&v| f(v)));
            row.push(f(r.mean_loss));
            row
        })
        .collect()
}

const CV_HEADER: [&str; 6] = ["lambda_t", "lambda_h", "fold1", "fold2", "fold3", "mean_loss"];

#[derive(Debug, Serialize)]
struct NodeReport {
    node: usize,
    name: String,
    objective: f64,
    converged: bool,
    intercept: f64,
    parents: Vec<String>,
}

#[derive(Debug, Serialize)]
struct FitReport {
    family: Family,
    d: usize,
    transitions: usize,
    lambda: LambdaChoice,
    edges: usize,
    empty_network: bool,
    all_converged: bool,
    nodes: Vec<NodeReport>,
}

fn adjacency_rows(fit: &NetworkFit, threshold: f64) -> Vec<Vec<String>> {
    fit.adjacency(threshold)
        .iter()
        .zip(&fit.column_names)
        .map(|(row, name)| std::iter::once(name.clone()).chain(row.iter().map(u8::to_string)).collect())
        .collect()
}

/// `spamnet fit`: `fit.json`, `report.json`, `adjacency.csv` (and `cv.csv` in cv mode).
pub fn cmd_fit(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let data = inv.load_data()?;
    let kernel = cfg.kernel()?;
    let mut choice = choose_lambdas(inv, &data, &kernel)?;
    let fit_cfg: FitConfig = cfg.solver.fit_config(choice.lambda_t, choice.lambda_h);
    log::info!("fitting d = {} series over T = {} transitions (λ_T = {}, λ_H = {})", data.dim(), data.transitions(), choice.lambda_t, choice.lambda_h);
    let fit = fit_network(&data, &kernel, cfg.family, &fit_cfg)?;
    if let Some(rep) = choice.rates.take() {
        let r = &cfg.rates;
        choice.rates = Some(rep.with_nodes(&in_degrees(&adjacency(&fit, 0.0)), r.theta, r.c4, r.c)?);
    }

    let nodes: Vec<NodeReport> = fit
        .node_fits
        .iter()
        .map(|n| NodeReport {
            node: n.node,
            name: fit.column_names[n.node].clone(),
            objective: n.objective(),
            converged: n.converged,
            intercept: n.intercept,
            parents: n.support.iter().map(|&k| fit.column_names[k].clone()).collect(),
        })
        .collect();
    let edges = nodes.iter().map(|n| n.parents.len()).sum();
    let report = FitReport {
        family: cfg.family,
        d: data.dim(),
        transitions: data.transitions(),
        lambda: choice,
        edges,
        empty_network: edges == 0,
        all_converged: nodes.iter().all(|n| n.converged),
        nodes,
    };

    let mut out = inv.out_dir()?;
    write_json(&out.file("fit.json"), &fit)?;
    write_json(&out.file("report.json"), &report)?;
    let mut header = vec!["node".to_string()];
    header.extend(fit.column_names.iter().cloned());
    write_csv(&out.file("adjacency.csv"), &header, &adjacency_rows(&fit, 0.0))?;
    if let Some(cv) = &report.lambda.cv {
        write_csv(&out.file("cv.csv"), &CV_HEADER, &cv_rows(cv))?;
    }
    out.finish(inv.manifest("fit", vec![("data", inv.data_path()?)])?)
}

/// `spamnet cv`: `cv.csv` (loss table) and `cv.json` (selection).
pub fn cmd_cv(inv: &Invocation) -> Result<PathBuf> {
    let data = inv.load_data()?;
    let kernel = inv.config.kernel()?;
    let cv = run_cv(inv, &data, &kernel)?;
    let mut out = inv.out_dir()?;
    write_csv(&out.file("cv.csv"), &CV_HEADER, &cv_rows(&cv))?;
    write_json(&out.file("cv.json"), &cv)?;
    out.finish(inv.manifest("cv", vec![("data", inv.data_path()?)])?)
}

/// `spamnet predict`: `predictions.csv` with the conditional mean of row `t+1` given row `t`.
pub fn cmd_predict(inv: &Invocation) -> Result<PathBuf> {
    let sec = inv
        .config
        .predict
        .as_ref()
        .ok_or_else(|| Error::Config("missing [predict] section".into()))?;
    let fit_path = inv.resolve(&sec.fit);
    let fit: NetworkFit = read_json(&fit_path)?;
    let data = load_csv(inv.data_path()?)?;
    if data.dim() != fit.dim() {
        return Err(Error::Data(format!("data has {} columns but the fit has {} nodes", data.dim(), fit.dim())));
    }
    let rows = (0..data.n_rows())
        .map(|t| {
            let (_, mean) = predict(&fit, &data.row(t)).map_err(|e| match e {
                Error::Domain(m) => Error::Numerical(format!("row {t}: {m}")),
                other => other,
            })?;
            Ok(std::iter::once(t.to_string()).chain(mean.into_iter().map(f)).collect())
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    let mut header = vec!["row".to_string()];
    header.extend(fit.column_names.iter().cloned());
    let mut out = inv.out_dir()?;
    write_csv(&out.file("predictions.csv"), &header, &rows)?;
    out.finish(inv.manifest("predict", vec![("fit", &fit_path), ("data", inv.data_path()?)])?)
}

/// `spamnet cluster`: `labels.csv` and `adjacency.csv`.
pub fn cmd_cluster(inv: &Invocation) -> Result<PathBuf> {
    let sec = inv
        .config
        .cluster
        .as_ref()
        .ok_or_else(|| Error::Config("missing [cluster] section".into()))?;
    let fit_path = inv.resolve(&sec.fit);
    let fit: NetworkFit = read_json(&fit_path)?;
    let a = adjacency(&fit, sec.threshold);
    let ccfg = sec.cluster_config(inv.seed());
    let mut inputs = vec![("fit", fit_path.clone())];
    let labels = match &sec.coords {
        Some(p) => {
            let path = inv.resolve(p);
            let (_, coords) = load_table(&path)?;
            inputs.push(("coords", path));
            covariate_cluster(&a, &coords, &ccfg)?
        }
        None => spectral_cluster(&a, &ccfg)?,
    };
    let label_rows: Vec<Vec<String>> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| vec![j.to_string(), fit.column_names[j].clone(), l.to_string()])
        .collect();
    let mut header = vec!["node".to_string()];
    header.extend(fit.column_names.iter().cloned());
    let mut out = inv.out_dir()?;
    write_csv(&out.file("labels.csv"), &["node", "name", "label"], &label_rows)?;
    write_csv(&out.file("adjacency.csv"), &header, &adjacency_rows(&fit, sec.threshold))?;
    let inputs: Vec<(&str, &Path)> = inputs.iter().map(|(r, p)| (*r, p.as_path())).collect();
    out.finish(inv.manifest("cluster", inputs)?)
}

/// Column order of `grid.csv`.
pub const GRID_HEADER: [&str; 10] = ["family", "d", "T", "r", "trial", "mse", "precision", "recall", "seconds", "error"];

/// `spamnet experiment`: `grid.csv`, `grid.jsonl`, `summary.csv`, `slopes.csv`, `plot.csv`.
pub fn cmd_experiment(inv: &Invocation) -> Result<PathBuf> {
    let sec = inv
        .config
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("missing [experiment] section".into()))?;
    let families = if sec.families.is_empty() { vec![inv.config.family] } else { sec.families.clone() };
    let grid = GridSpec {
        families,
        d_list: sec.d_list.clone(),
        t_list: sec.t_list.clone(),
        r_list: sec.r_list.clone(),
        trials: sec.trials,
        seed0: inv.seed.or(sec.seed0).unwrap_or(inv.config.seed),
    };
    let mode = sec.grid_mode(inv.config.mixing.as_ref())?;
    let rows = simulate::run_grid(&grid, &mode)?;
    let summary = simulate::summarize(&rows);
    let slopes = simulate::trend_slopes(&summary);

    let mut out = inv.out_dir()?;
    let grid_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.family.name().to_string(),
                r.d.to_string(),
                r.t.to_string(),
                r.r.to_string(),
                r.trial.to_string(),
                f(r.mse),
                f(r.precision),
                f(r.recall),
                f(r.seconds),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&out.file("grid.csv"), &GRID_HEADER, &grid_rows)?;
    let jsonl: String = rows
        .iter()
        .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Numerical(format!("cannot serialize grid rows: {e}")))?;
    let path = out.file("grid.jsonl");
    std::fs::write(&path, jsonl).map_err(|e| Error::io(&path, e))?;

    let summary_rows: Vec<Vec<String>> = summary
        .iter()
        .map(|c| {
            vec![
                c.family.name().to_string(),
                c.d.to_string(),
                c.t.to_string(),
                c.r.to_string(),
                f(c.median_mse),
                c.successes.to_string(),
                c.failures.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.file("summary.csv"),
        &["family", "d", "T", "r", "median_mse", "successes", "failures"],
        &summary_rows,
    )?;
    let slope_rows: Vec<Vec<String>> = slopes
        .iter()
        .map(|s| vec![s.family.name().to_string(), s.d.to_string(), s.r.to_string(), f(s.slope)])
        .collect();
    write_csv(&out.file("slopes.csv"), &["family", "d", "r", "slope_log_mse_vs_log_T"], &slope_rows)?;
    let plot_rows: Vec<Vec<String>> = summary
        .iter()
        .map(|c| {
            vec![
                c.family.name().to_string(),
                c.d.to_string(),
                c.r.to_string(),
                c.t.to_string(),
                f((c.t as f64).ln()),
                f((c.d as f64).ln()),
                f(c.median_mse.ln()),
            ]
        })
        .collect();
    write_csv(
        &out.file("plot.csv"),
        &["family", "d", "r", "T", "log_T", "log_d", "log_median_mse"],
        &plot_rows,
    )?;
    out.finish(inv.manifest("experiment", vec![])?)
}
