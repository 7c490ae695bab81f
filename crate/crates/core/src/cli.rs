//! Command-line driver. Every subcommand reads one JSON run configuration
//! (flags override its scalar fields) and writes plot-ready files into the
//! output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::active::{run_experiment, ALConfig, QueryStrategy};
use crate::curves::{nbl_predict, nrbl_predict, FitConfig};
use crate::data::{apply_split, load_dataset, synth_generate, CurveDataset, SplitSpec, SplitView, SynthConfig};
use crate::error::{Error, ErrorClass, Result};
use crate::hier::{fit_runs, predict_targets, EnsembleResult, HierConfig, HierGpModel};
use crate::kernels::ModelKind;
use crate::metrics::{eval_report, CurveEval, EvalSlice, MetricReport};
use crate::scaling::{mc_scaling_law, ScalingConfig, ScalingLaw, DEFAULT_ABC_RANGE, DEFAULT_FIT_RANGE};

#[derive(Debug, Parser)]
#[command(
    name = "lcscale",
    version,
    about = "Hierarchical GP learning-curve prediction and scaling laws"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// Fit models and write fitted parameters plus predictions.
    Fit,
    /// Fit models and write predictions for the split's targets.
    Predict,
    /// Write error metrics on the split's targets.
    Eval,
    /// Monte-Carlo scaling law against a reference law.
    ScalingLaw,
    /// Active curve-acquisition experiment.
    Active,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Eval => "eval",
            Command::ScalingLaw => "scaling-law",
            Command::Active => "active",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Split file, or the name of a split defined in the config.
    #[arg(long, global = true)]
    pub split: Option<String>,
    /// magp, dhgp, nbl or nrbl.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
}

/// The JSON run configuration. Relative paths inside a config file are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// A split file path, a name from `splits`, or an inline split object.
    pub split: Option<Value>,
    pub splits: BTreeMap<String, SplitSpec>,
    pub model: String,
    /// Models reported by `eval`; defaults to `[model]`.
    pub models: Vec<String>,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub slices: Vec<String>,
    pub fit_range: (f64, f64),
    pub abc_range: (f64, f64),
    pub posterior_sampling: bool,
    pub gt_law: Option<ScalingLaw>,
    pub hier: HierConfig,
    pub synth: SynthConfig,
    pub nrbl: FitConfig,
    pub strategies: Vec<String>,
    pub steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            split: None,
            splits: BTreeMap::new(),
            model: "magp".into(),
            models: Vec::new(),
            runs: 10,
            seed: 0,
            out: PathBuf::from("out"),
            slices: vec!["all".into(), "last3".into(), "last1".into()],
            fit_range: DEFAULT_FIT_RANGE,
            abc_range: DEFAULT_ABC_RANGE,
            posterior_sampling: false,
            gt_law: None,
            hier: HierConfig::default(),
            synth: SynthConfig::default(),
            nrbl: FitConfig::default(),
            strategies: vec![
                "largest_first".into(),
                "smallest_first".into(),
                "random".into(),
                "uncertainty".into(),
            ],
            steps: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.dataset.as_mut() {
            rebase(d);
        }
        if let Some(Value::String(s)) = cfg.split.as_mut() {
            if !cfg.splits.contains_key(s.as_str()) {
                let mut p = PathBuf::from(&*s);
                rebase(&mut p);
                *s = p.to_string_lossy().into_owned();
            }
        }
        rebase(&mut cfg.out);
        Ok(cfg)
    }

    /// Applies command-line overrides; flags win.
    pub fn apply_flags(&mut self, f: &Flags) {
        if let Some(v) = &f.dataset {
            self.dataset = Some(v.clone());
        }
        if let Some(v) = &f.split {
            self.split = Some(Value::String(v.clone()));
        }
        if let Some(v) = &f.model {
            self.model = v.clone();
            self.models = vec![v.clone()];
        }
        if let Some(v) = f.runs {
            self.runs = v;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = &f.out {
            self.out = v.clone();
        }
        if let Some(v) = &f.strategy {
            self.strategies = v.split(',').map(str::to_string).collect();
        }
        if let Some(v) = f.steps {
            self.steps = v;
        }
    }

    fn dataset(&self) -> Result<CurveDataset> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset given (--dataset or config `dataset`)".into()))?;
        load_dataset(path)
    }

    fn split_spec(&self) -> Result<SplitSpec> {
        match &self.split {
            None => Err(Error::Config("no split given (--split or config `split`)".into())),
            Some(Value::String(s)) => {
                if let Some(spec) = self.splits.get(s) {
                    let mut spec = spec.clone();
                    if spec.name.is_empty() {
                        spec.name = s.clone();
                    }
                    return Ok(spec);
                }
                let path = Path::new(s);
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "split `{s}` is neither a defined split nor a file"
                    )));
                }
                let mut spec = SplitSpec::load(path)?;
                if spec.name.is_empty() {
                    spec.name = path
                        .file_stem()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default();
                }
                Ok(spec)
            }
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("inline split: {e}"))),
        }
    }

    fn slices(&self) -> Result<Vec<EvalSlice>> {
        self.slices
            .iter()
            .map(|s| s.parse().map_err(|e: Error| Error::Config(e.to_string())))
            .collect()
    }

    fn scaling(&self) -> ScalingConfig {
        ScalingConfig {
            hier: self.hier.clone(),
            fit_range: self.fit_range,
            abc_range: self.abc_range,
            posterior_sampling: self.posterior_sampling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelChoice {
    Gp(ModelKind),
    Nbl,
    Nrbl,
}

fn parse_model(s: &str) -> Result<ModelChoice> {
    match s {
        "nbl" => Ok(ModelChoice::Nbl),
        "nrbl" => Ok(ModelChoice::Nrbl),
        other => other.parse().map(ModelChoice::Gp).map_err(Error::Config),
    }
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.written.push(path);
        Ok(())
    }
}

fn gp_ensemble(kind: ModelKind, view: &SplitView, cfg: &RunConfig) -> Result<(Vec<HierGpModel>, EnsembleResult)> {
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let models = fit_runs(kind, &view.train, cfg.runs, &cfg.hier, cfg.seed)?;
    let per_run = predict_targets(&models, &view.test)?;
    let seeds = models.iter().map(|m| m.seed).collect();
    Ok((models, EnsembleResult::from_runs(seeds, per_run)?))
}

#[derive(Serialize)]
struct RunFit {
    seed: u64,
    objective: f64,
    iterations: usize,
    restarts_used: usize,
    params: BTreeMap<String, f64>,
}

fn fit_report_json(kind: ModelKind, models: &[HierGpModel]) -> Result<String> {
    let runs: Vec<RunFit> = models
        .iter()
        .map(|m| RunFit {
            seed: m.seed,
            objective: m.report.objective,
            iterations: m.report.iterations,
            restarts_used: m.report.restarts_used,
            params: m
                .problem
                .params
                .flat_names(kind)
                .into_iter()
                .zip(m.problem.params.to_flat())
                .collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "model": kind.name(),
        "runs": runs,
    }))?)
}

/// Pooled training points for the averaged-regression baseline.
fn nrbl_points(view: &SplitView) -> Vec<(f64, f64)> {
    view.train
        .iter()
        .flat_map(|c| c.x.iter().copied().zip(c.y.iter().copied()))
        .collect()
}

fn baseline_predictions_csv(choice: ModelChoice, view: &SplitView, cfg: &RunConfig) -> Result<String> {
    let mut out = String::from(EnsembleResult::CSV_HEADER);
    out.push('\n');
    for c in &view.test {
        match choice {
            ModelChoice::Nbl => {
                let pred = nbl_predict(&view.train, &c.key, &c.x)?;
                for (x, p) in c.x.iter().zip(pred) {
                    if let Some(m) = p {
                        let _ = writeln!(out, "-1,{},{},{x},{m},0", c.key.task, c.key.within);
                    }
                }
            }
            ModelChoice::Nrbl => {
                let res = nrbl_predict(&nrbl_points(view), &c.x, &cfg.nrbl)?;
                for (i, f) in res.families.iter().enumerate() {
                    if let Some(p) = &f.predictions {
                        for (x, m) in c.x.iter().zip(p) {
                            let _ = writeln!(out, "{i},{},{},{x},{m},0", c.key.task, c.key.within);
                        }
                    }
                }
            }
            ModelChoice::Gp(_) => unreachable!("GP predictions are written from the ensemble"),
        }
    }
    Ok(out)
}

fn eval_model(
    choice: ModelChoice,
    view: &SplitView,
    cfg: &RunConfig,
    slices: &[EvalSlice],
) -> Result<Vec<MetricReport>> {
    match choice {
        ModelChoice::Gp(kind) => {
            let (_, ens) = gp_ensemble(kind, view, cfg)?;
            // mixture variance: mean run variance plus spread of run means
            let vars: Vec<Vec<f64>> = ens
                .curves
                .iter()
                .map(|c| {
                    (0..c.x.len())
                        .map(|j| c.run_variances.iter().map(|v| v[j]).sum::<f64>() / ens.runs as f64 + c.var[j])
                        .collect()
                })
                .collect();
            let evals: Vec<CurveEval> = view
                .test
                .iter()
                .zip(&ens.curves)
                .zip(&vars)
                .map(|((t, c), v)| CurveEval {
                    y_true: &t.y,
                    means: &c.mean,
                    variances: Some(v),
                })
                .collect();
            eval_report(&evals, slices)
        }
        ModelChoice::Nbl => {
            let mut kept = Vec::new();
            for c in &view.test {
                let pred = nbl_predict(&view.train, &c.key, &c.x)?;
                let (t, m): (Vec<f64>, Vec<f64>) = c.y.iter().zip(pred).filter_map(|(y, p)| p.map(|p| (*y, p))).unzip();
                if t.is_empty() {
                    return Err(Error::invalid(format!("NBL covers no point of {}", c.key)));
                }
                kept.push((t, m));
            }
            let evals: Vec<CurveEval> = kept
                .iter()
                .map(|(t, m)| CurveEval {
                    y_true: t,
                    means: m,
                    variances: None,
                })
                .collect();
            eval_report(&evals, slices)
        }
        ModelChoice::Nrbl => {
            let pts = nrbl_points(view);
            let mut reports = Vec::with_capacity(slices.len());
            for &slice in slices {
                let (mut mse, mut mae, mut rmse, mut n_points) = (0.0, 0.0, 0.0, 0);
                for c in &view.test {
                    let m = nrbl_predict(&pts, &c.x, &cfg.nrbl)?.metrics(&c.y, slice)?.average;
                    mse += m.mse;
                    mae += m.mae;
                    rmse += m.rmse;
                    n_points += slice.apply(&c.y)?.len();
                }
                let n = view.test.len() as f64;
                reports.push(MetricReport {
                    slice,
                    mse: mse / n,
                    mae: mae / n,
                    rmse: rmse / n,
                    mnlpd: None,
                    n_curves: view.test.len(),
                    n_points,
                });
            }
            Ok(reports)
        }
    }
}

/// Executes one command and returns the files it wrote.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(&cfg.out)?;
    match command {
        Command::Synth => {
            let synth = SynthConfig {
                seed: cfg.seed,
                ..cfg.synth.clone()
            };
            let ds = synth_generate(&synth)?;
            out.write("dataset.json", &ds.to_json_string()?)?;
        }
        Command::Fit | Command::Predict => {
            let ds = cfg.dataset()?;
            let spec = cfg.split_spec()?;
            let view = apply_split(&ds, &spec)?;
            let choice = parse_model(&cfg.model)?;
            match choice {
                ModelChoice::Gp(kind) => {
                    let (models, ens) = gp_ensemble(kind, &view, cfg)?;
                    if command == Command::Fit {
                        out.write("fit_report.json", &fit_report_json(kind, &models)?)?;
                    }
                    out.write("predictions.csv", &ens.to_csv())?;
                }
                _ => {
                    if command == Command::Fit && choice == ModelChoice::Nrbl {
                        let pts = nrbl_points(&view);
                        let res = nrbl_predict(&pts, &[], &cfg.nrbl)?;
                        let fits: Vec<Value> = res
                            .families
                            .iter()
                            .map(|f| match &f.fit {
                                Ok(r) => serde_json::to_value(r).unwrap_or(Value::Null),
                                Err(e) => serde_json::json!({ "family": f.family, "error": e }),
                            })
                            .collect();
                        let doc = serde_json::json!({ "model": "nrbl", "families": fits });
                        out.write("fit_report.json", &serde_json::to_string_pretty(&doc)?)?;
                    }
                    out.write("predictions.csv", &baseline_predictions_csv(choice, &view, cfg)?)?;
                }
            }
        }
        Command::Eval => {
            let ds = cfg.dataset()?;
            let spec = cfg.split_spec()?;
            let view = apply_split(&ds, &spec)?;
            let slices = cfg.slices()?;
            let models = if cfg.models.is_empty() {
                vec![cfg.model.clone()]
            } else {
                cfg.models.clone()
            };
            let mut csv = String::from(MetricReport::CSV_HEADER);
            csv.push('\n');
            for m in &models {
                for r in eval_model(parse_model(m)?, &view, cfg, &slices)? {
                    csv.push_str(&r.csv_row(m, &spec.name));
                    csv.push('\n');
                }
            }
            out.write("metrics.csv", &csv)?;
        }
        Command::ScalingLaw => {
            let ds = cfg.dataset()?;
            let spec = cfg.split_spec()?;
            let ModelChoice::Gp(kind) = parse_model(&cfg.model)? else {
                return Err(Error::Config("scaling-law needs --model magp or dhgp".into()));
            };
            let report = mc_scaling_law(&ds, &spec, kind, cfg.runs, &cfg.scaling(), cfg.seed, cfg.gt_law)?;
            out.write("law.json", &report.to_json_string()?)?;
        }
        Command::Active => {
            let ds = cfg.dataset()?;
            let ModelChoice::Gp(kind) = parse_model(&cfg.model)? else {
                return Err(Error::Config("active needs --model magp or dhgp".into()));
            };
            let strategies = cfg
                .strategies
                .iter()
                .map(|s| s.parse::<QueryStrategy>())
                .collect::<Result<Vec<_>>>()?;
            let al = ALConfig {
                runs: cfg.runs,
                kind,
                scaling: cfg.scaling(),
                master_seed: cfg.seed,
            };
            let report = run_experiment(&ds, &strategies, cfg.steps, &al, cfg.gt_law)?;
            out.write("experiment.csv", &report.to_csv())?;
            out.write("query_order.csv", &report.query_order_csv())?;
        }
    }
    Ok(out.written)
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LCSCALE_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("LCSCALE_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    configure_threads()?;
    let mut cfg = match &cli.flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_flags(&cli.flags);
    log::info!("running {}", cli.command.name());
    execute(cli.command, &cfg)
}

/// Process entry point; returns the exit status.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}
