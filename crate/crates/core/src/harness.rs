//! Evaluation protocol: grid-search warm-up on the initial batch,
//! interleaved test-then-train over the stream, and the run artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{select, select_random, BudgetMode, BudgetState, SelectionDecision, Verdict};
use crate::baselines::{ChainModel, OneVsRestModel};
use crate::error::{Error, Result};
use crate::ingest::{split_stream, Dataset, Sample};
use crate::learner::{freeze, rows_of, EfcMl, InitialStructure, Row, StreamLearner};
use crate::metrics::MetricState;
use crate::rulebase::{local_output_of, predict_crisp, LearnConfig};

pub const ALPHA_GRID: [f64; 10] = [0.0, 0.01, 0.025, 0.05, 0.075, 0.1, 0.5, 1.0, 5.0, 10.0];
pub const BETA_GRID: [f64; 8] = [0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0];

pub const TREND_HEADER: &str = "n,pa,ap,rules,selected_fraction,cum_update_seconds";
pub const SELECTION_HEADER: &str = "n,verdict,labels,trigger,spend_after";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Efcml,
    Ovr,
    Chain,
    StaticEfcml,
    StaticOvr,
    StaticChain,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Efcml,
        Method::Ovr,
        Method::Chain,
        Method::StaticEfcml,
        Method::StaticOvr,
        Method::StaticChain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Efcml => "efcml",
            Method::Ovr => "ovr",
            Method::Chain => "chain",
            Method::StaticEfcml => "static-efcml",
            Method::StaticOvr => "static-ovr",
            Method::StaticChain => "static-chain",
        }
    }

    pub fn is_static(self) -> bool {
        matches!(self, Method::StaticEfcml | Method::StaticOvr | Method::StaticChain)
    }

    /// The learning method behind a static variant.
    pub fn base(self) -> Method {
        match self {
            Method::StaticEfcml => Method::Efcml,
            Method::StaticOvr => Method::Ovr,
            Method::StaticChain => Method::Chain,
            m => m,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlMode {
    Off,
    Labels,
    Samples,
    /// Uniform random selection at the budget rate.
    Random,
}

impl FromStr for AlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(AlMode::Off),
            "labels" => Ok(AlMode::Labels),
            "samples" => Ok(AlMode::Samples),
            "random" => Ok(AlMode::Random),
            _ => Err(Error::InvalidConfig(format!("unknown active-learning mode `{s}`"))),
        }
    }
}

/// Hyper-parameter grid. Vigilance values are used as `fac`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub vigilance: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            alpha: ALPHA_GRID.to_vec(),
            beta: BETA_GRID.to_vec(),
            vigilance: (2..=18).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

impl Grid {
    pub fn single(alpha: f64, beta: f64, vigilance: f64) -> Self {
        Grid {
            alpha: vec![alpha],
            beta: vec![beta],
            vigilance: vec![vigilance],
        }
    }

    /// Reads a TOML grid, or JSON when the extension is `.json`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: Grid = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::MalformedFile {
                path: path.to_path_buf(),
                line: 0,
                reason: e.to_string(),
            })?
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.beta.is_empty() || self.vigilance.is_empty() {
            return Err(Error::InvalidConfig("grid lists must be non-empty".into()));
        }
        let ok = self.alpha.iter().chain(&self.beta).all(|v| v.is_finite() && *v >= 0.0)
            && self.vigilance.iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(Error::InvalidConfig("grid values out of range".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha.len() * self.beta.len() * self.vigilance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads learner settings from TOML, or JSON when the extension is `.json`.
/// Missing fields take their defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<LearnConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: LearnConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).map_err(|e| Error::MalformedFile {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub method: Method,
    pub split_fraction: f64,
    pub grid: Grid,
    pub al_mode: AlMode,
    pub budget: f64,
    pub seed: u64,
    pub folds: usize,
    /// Record wall-clock update times; off keeps trend files reproducible.
    pub timing: bool,
    /// Settings not covered by the grid.
    pub base: LearnConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            method: Method::Efcml,
            split_fraction: 0.25,
            grid: Grid::default(),
            al_mode: AlMode::Off,
            budget: 1.0,
            seed: 42,
            folds: 5,
            timing: false,
            base: LearnConfig::default(),
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return Err(Error::InvalidConfig("budget must lie in (0, 1]".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("at least two folds are needed".into()));
        }
        if matches!(self.al_mode, AlMode::Labels | AlMode::Samples) && self.method != Method::Efcml {
            return Err(Error::InvalidConfig(
                "criterion-based active learning requires the efcml method".into(),
            ));
        }
        if self.al_mode != AlMode::Off && self.method.is_static() {
            return Err(Error::InvalidConfig("static methods do not learn from the stream".into()));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: usize,
    pub pa: f64,
    pub ap: f64,
    pub rules: usize,
    pub selected_fraction: f64,
    pub cum_update_seconds: f64,
}

/// Everything a run produces. `failure` holds the error that stopped the
/// stream early; `points` then covers the processed prefix.
pub struct RunOutcome {
    pub config: LearnConfig,
    pub points: Vec<TrendPoint>,
    pub decisions: Vec<SelectionDecision>,
    pub model: Box<dyn StreamLearner>,
    pub merges: usize,
    pub failure: Option<Error>,
}

impl RunOutcome {
    pub fn final_point(&self) -> Option<&TrendPoint> {
        self.points.last()
    }

    /// Mean wall-clock seconds per stream update.
    pub fn mean_update_seconds(&self) -> f64 {
        self.points
            .last()
            .map_or(0.0, |p| p.cum_update_seconds / p.n as f64)
    }
}

fn train_method(method: Method, p: usize, k: usize, cfg: &LearnConfig, rows: &[Row]) -> Result<Box<dyn StreamLearner>> {
    let model: Box<dyn StreamLearner> = match method.base() {
        Method::Efcml => Box::new(EfcMl::train(p, k, cfg, rows)?),
        Method::Ovr => Box::new(OneVsRestModel::train(p, k, cfg, rows)?),
        _ => Box::new(ChainModel::train(p, k, cfg, rows, None)?),
    };
    Ok(if method.is_static() { freeze(model) } else { model })
}

fn fold_error<M: StreamLearner + ?Sized>(model: &M, test: &[Sample], k: usize) -> Result<f64> {
    let mut state = MetricState::new(k);
    for s in test {
        let yhat = model.predict(&s.x)?;
        state.observe(&yhat, &predict_crisp(&yhat), &s.y)?;
    }
    Ok(1.0 - state.pa)
}

/// Shuffled fold assignment derived from `seed`.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..folds)
        .map(|f| idx.iter().skip(f).step_by(folds).copied().collect())
        .collect()
}

/// Picks the grid point with the lowest mean cross-validation error
/// (`1 − PA`); ties go to the earliest point in grid order. Baselines only
/// search the vigilance list.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    batch: &[Sample],
    p: usize,
    k: usize,
    method: Method,
    grid: &Grid,
    folds: usize,
    base: &LearnConfig,
    seed: u64,
) -> Result<LearnConfig> {
    grid.validate()?;
    let with = |fac: f64, alpha: f64, beta: f64| LearnConfig {
        fac,
        alpha,
        beta,
        ..base.clone()
    };
    let searches_consequents = method.base() == Method::Efcml;
    let combos: Vec<(f64, f64)> = if searches_consequents {
        grid.alpha
            .iter()
            .flat_map(|&a| grid.beta.iter().map(move |&b| (a, b)))
            .collect()
    } else {
        vec![(0.0, 0.0)]
    };
    if grid.vigilance.len() * combos.len() == 1 {
        let (a, b) = combos[0];
        return Ok(with(grid.vigilance[0], a, b));
    }
    if batch.len() < folds || folds < 2 {
        return Err(Error::BatchTooSmall {
            needed: folds.max(2),
            found: batch.len(),
        });
    }

    let assignment = fold_indices(batch.len(), folds, seed);
    let splits: Vec<(Vec<Row>, Vec<Sample>)> = assignment
        .iter()
        .enumerate()
        .map(|(f, test_idx)| {
            let train: Vec<Sample> = assignment
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, ids)| ids.iter().map(|&i| batch[i].clone()))
                .collect();
            let test = test_idx.iter().map(|&i| batch[i].clone()).collect();
            (rows_of(&train), test)
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..grid.vigilance.len())
        .flat_map(|v| (0..folds).map(move |f| (v, f)))
        .collect();
    // errors[job][combo]
    let errors: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(v, f)| -> Result<Vec<f64>> {
            let (train, test) = &splits[f];
            let fac = grid.vigilance[v];
            if searches_consequents {
                let structure = InitialStructure::build(p, k, &with(fac, 0.0, 0.0), train)?;
                let psi: Vec<Vec<f64>> = test
                    .iter()
                    .map(|s| structure.rb.normalized_activations(&s.x))
                    .collect::<Result<_>>()?;
                combos
                    .iter()
                    .map(|&(a, b)| {
                        let ws = structure.consequents(a, b)?;
                        let mut state = MetricState::new(k);
                        for (s, weights) in test.iter().zip(&psi) {
                            let mut yhat = vec![0.0; k];
                            for (w, q) in ws.iter().zip(weights) {
                                for (o, v) in yhat.iter_mut().zip(local_output_of(w, &s.x).iter()) {
                                    *o += q * v;
                                }
                            }
                            state.observe(&yhat, &predict_crisp(&yhat), &s.y)?;
                        }
                        Ok(1.0 - state.pa)
                    })
                    .collect()
            } else {
                let model = train_method(method, p, k, &with(fac, 0.0, 0.0), train)?;
                Ok(vec![fold_error(model.as_ref(), test, k)?])
            }
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, LearnConfig)> = None;
    for (v, &fac) in grid.vigilance.iter().enumerate() {
        for (c, &(a, b)) in combos.iter().enumerate() {
            let mean = (0..folds).map(|f| errors[v * folds + f][c]).sum::<f64>() / folds as f64;
            if best.as_ref().is_none_or(|(e, _)| mean < *e) {
                best = Some((mean, with(fac, a, b)));
            }
        }
    }
    Ok(best.map(|(_, cfg)| cfg).expect("non-empty grid"))
}

enum Learner {
    Efcml(Box<EfcMl>),
    Other(Box<dyn StreamLearner>),
}

impl Learner {
    fn as_dyn(&self) -> &dyn StreamLearner {
        match self {
            Learner::Efcml(m) => m.as_ref(),
            Learner::Other(m) => m.as_ref(),
        }
    }

    fn as_dyn_mut(&mut self) -> &mut dyn StreamLearner {
        match self {
            Learner::Efcml(m) => m.as_mut(),
            Learner::Other(m) => m.as_mut(),
        }
    }
}

/// Prequential run: every stream sample is predicted and scored before the
/// model may learn from it.
pub fn run_interleaved(spec: &RunSpec, data: &Dataset) -> Result<RunOutcome> {
    let config = select_config(spec, data)?;
    run_with_config(spec, data, config)
}

/// Grid-search result for `spec` on the initial batch of `data`.
pub fn select_config(spec: &RunSpec, data: &Dataset) -> Result<LearnConfig> {
    spec.validate()?;
    let split = split_stream(data, spec.split_fraction)?;
    grid_search(
        split.initial_batch,
        data.p,
        data.k,
        spec.method,
        &spec.grid,
        spec.folds,
        &spec.base,
        spec.seed,
    )
}

/// Prequential run with an already selected configuration; the grid in
/// `spec` is ignored.
pub fn run_with_config(spec: &RunSpec, data: &Dataset, mut config: LearnConfig) -> Result<RunOutcome> {
    spec.validate()?;
    config.budget = spec.budget;
    config.validate()?;
    let split = split_stream(data, spec.split_fraction)?;
    let (p, k) = (data.p, data.k);
    let batch_rows = rows_of(split.initial_batch);
    let mut learner = if spec.method == Method::Efcml {
        Learner::Efcml(Box::new(EfcMl::train(p, k, &config, &batch_rows)?))
    } else {
        Learner::Other(train_method(spec.method, p, k, &config, &batch_rows)?)
    };

    let mut budget = match spec.al_mode {
        AlMode::Labels => Some(BudgetState::new(BudgetMode::LabelsBased, spec.budget, k, &config)),
        AlMode::Samples | AlMode::Random => {
            Some(BudgetState::new(BudgetMode::SamplesBased, spec.budget, k, &config))
        }
        AlMode::Off => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x05ee_da11);
    let mut metrics = MetricState::new(k);
    let mut points = Vec::with_capacity(split.stream.len());
    let mut decisions = Vec::new();
    let mut elapsed = 0.0;
    let mut failure = None;

    for (i, s) in split.stream.iter().enumerate() {
        let step = (|| -> Result<()> {
            let yhat = learner.as_dyn().predict(&s.x)?;
            let crisp = predict_crisp(&yhat);
            metrics.observe(&yhat, &crisp, &s.y)?;

            let verdict = match (&mut budget, &learner) {
                (None, _) => Verdict::Full,
                (Some(b), _) if spec.al_mode == AlMode::Random => {
                    let d = select_random(b, &mut rng);
                    let v = d.verdict.clone();
                    decisions.push(d);
                    v
                }
                (Some(b), Learner::Efcml(m)) => {
                    let d = select(m, &s.x, b)?;
                    let v = d.verdict.clone();
                    decisions.push(d);
                    v
                }
                (Some(_), Learner::Other(_)) => unreachable!("validated"),
            };

            let start = spec.timing.then(Instant::now);
            match &verdict {
                Verdict::Full => learner.as_dyn_mut().learn(&s.x, &s.y)?,
                Verdict::Partial(labels) => {
                    let mut mask = vec![false; k];
                    let mut fill: Vec<f64> = crisp.iter().map(|&v| f64::from(v)).collect();
                    for &l in labels {
                        mask[l] = true;
                        fill[l] = f64::from(s.y[l]);
                    }
                    learner.as_dyn_mut().learn_partial(&s.x, &fill, &mask)?;
                }
                Verdict::None => {}
            }
            if let Some(t) = start {
                elapsed += t.elapsed().as_secs_f64();
            }

            let model = learner.as_dyn();
            points.push(TrendPoint {
                n: i + 1,
                pa: metrics.pa,
                ap: metrics.ap,
                rules: model.rule_count(),
                selected_fraction: match &budget {
                    Some(b) => b.spent_fraction(),
                    None if model.is_frozen() => 0.0,
                    None => 1.0,
                },
                cum_update_seconds: elapsed,
            });
            Ok(())
        })();
        if let Err(e) = step {
            failure = Some(e);
            break;
        }
    }

    let (model, merges): (Box<dyn StreamLearner>, usize) = match learner {
        Learner::Efcml(m) => {
            let merges = m.merge_count();
            (m, merges)
        }
        Learner::Other(m) => {
            let merges = m.merge_count();
            (m, merges)
        }
    };
    Ok(RunOutcome {
        config,
        points,
        decisions,
        model,
        merges,
        failure,
    })
}

/// Mean wall-clock seconds per stream update for `spec` on `data`.
pub fn time_updates(spec: &RunSpec, data: &Dataset) -> Result<f64> {
    let spec = RunSpec {
        timing: true,
        ..spec.clone()
    };
    let outcome = run_interleaved(&spec, data)?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(outcome.mean_update_seconds()),
    }
}

/// Formats `v` with 9 significant digits, trailing zeros removed.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = 8 - magnitude;
    if !(0..=20).contains(&decimals) {
        return format!("{v:.8e}");
    }
    let s = format!("{v:.*}", decimals as usize);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn trends_to_csv(points: &[TrendPoint]) -> String {
    let mut out = String::from(TREND_HEADER);
    out.push('\n');
    for t in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t.n,
            format_sig(t.pa),
            format_sig(t.ap),
            t.rules,
            format_sig(t.selected_fraction),
            format_sig(t.cum_update_seconds)
        );
    }
    out
}

/// Writes the trend file.
pub fn emit_trends(points: &[TrendPoint], path: impl AsRef<Path>) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("no trend points to write".into()));
    }
    let path = path.as_ref();
    fs::write(path, trends_to_csv(points)).map_err(|e| Error::io(path, e))
}

pub fn parse_trends(path: impl AsRef<Path>) -> Result<Vec<TrendPoint>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: String| Error::MalformedFile {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TREND_HEADER => {}
        _ => return Err(bad(1, "missing trend header".into())),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(i + 1, format!("expected 6 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(i + 1, e.to_string()));
            let real = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()));
            Ok(TrendPoint {
                n: int(f[0])?,
                pa: real(f[1])?,
                ap: real(f[2])?,
                rules: int(f[3])?,
                selected_fraction: real(f[4])?,
                cum_update_seconds: real(f[5])?,
            })
        })
        .collect()
}

pub fn selection_to_csv(decisions: &[SelectionDecision]) -> String {
    let mut out = String::from(SELECTION_HEADER);
    out.push('\n');
    for (i, d) in decisions.iter().enumerate() {
        let (verdict, labels) = match &d.verdict {
            Verdict::Full => ("full", String::new()),
            Verdict::Partial(l) => (
                "partial",
                l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
            ),
            Verdict::None => ("none", String::new()),
        };
        let trigger: Vec<&str> = d.trigger.iter().map(|t| t.name()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            verdict,
            labels,
            trigger.join(";"),
            format_sig(d.spend_after)
        );
    }
    out
}

/// Writes `trend.csv`, `selection.csv`, `model.json` and `config.json` into
/// `dir`. The trend file is written first so that an aborted run still
/// leaves its processed prefix.
pub fn write_outputs(outcome: &RunOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("trend.csv", trends_to_csv(&outcome.points))?;
    write("selection.csv", selection_to_csv(&outcome.decisions))?;
    write("config.json", serde_json::to_string_pretty(&outcome.config)? + "\n")?;
    write("model.json", outcome.model.to_document().to_json()? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let g = Grid::default();
        assert_eq!(g.alpha, vec![0.0, 0.01, 0.025, 0.05, 0.075, 0.1, 0.5, 1.0, 5.0, 10.0]);
        assert_eq!(g.beta, vec![0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0]);
        assert_eq!(g.vigilance.len(), 17);
        assert!((g.vigilance[0] - 0.1).abs() < 1e-12);
        assert!((g.vigilance[16] - 0.9).abs() < 1e-12);
        assert_eq!(g.len(), 10 * 8 * 17);
    }

    #[test]
    fn method_and_mode_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::StaticChain.base(), Method::Chain);
        assert!("svm".parse::<Method>().is_err());
        assert_eq!("samples".parse::<AlMode>().unwrap(), AlMode::Samples);
        assert!("all".parse::<AlMode>().is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.5), "0.5");
        assert_eq!(format_sig(2.0 / 3.0), "0.666666667");
        assert_eq!(format_sig(123.456789012), "123.456789");
        assert_eq!(format_sig(1.23456789012e-5), "0.0000123456789");
        assert_eq!(format_sig(1e-30), "1.00000000e-30");
    }

    #[test]
    fn fold_assignment_partitions() {
        let f = fold_indices(23, 5, 1);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|ids| ids.len() == 4 || ids.len() == 5));
        assert_eq!(f, fold_indices(23, 5, 1));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid { alpha: vec![], ..Grid::default() }.validate().is_err());
        assert!(Grid { vigilance: vec![0.0], ..Grid::default() }.validate().is_err());
        let spec = RunSpec {
            method: Method::Ovr,
            al_mode: AlMode::Samples,
            ..RunSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = RunSpec {
            budget: 0.0,
            ..RunSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
