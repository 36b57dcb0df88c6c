//! The six commands. Outputs live under `out_dir` at fixed relative paths so
//! later stages can find earlier ones without extra configuration.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tickmix::benchmarks::{
    anchor_states, fit_birth_death, fit_glm, forecast_birth_death_batch, forecast_glm, BirthDeathRates, GlmParams,
};
use tickmix::eval::{evaluate, EvalReport};
use tickmix::features::store::{load_dataset, save_dataset, DatasetHeader};
use tickmix::features::{build_dataset, split_by_date, NormStats, Sample, SplitRanges, TimeRange};
use tickmix::forecast::Forecast;
use tickmix::mixtures::Family;
use tickmix::net::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use tickmix::net::{EpochLog, Network, TrainState};
use tickmix::orderflow::io::{read_stream, write_stream};
use tickmix::orderflow::{generate_stream, GeneratorConfig, OrderFlowEvent, Pair};
use tickmix::seed::mix_seed;
use tickmix::sim::{
    histogram, paired_t_test, run_experiment, write_scenarios_csv, write_trajectories_csv, ExperimentResult, Forecaster,
    TTest,
};

use crate::config::VERSION;
use crate::{CliError, RunConfig};

pub const BIRTH_DEATH: &str = "birth_death";
pub const GLM: &str = "glm";
pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

/// A JSON payload with the provenance of the run that wrote it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Vec<String>,
    pub data: T,
}

fn write_json<T: Serialize>(path: &Path, provenance: Vec<String>, data: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| io_at(path, e))?);
    serde_json::to_writer_pretty(&mut f, &Stamped { provenance, data })?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let f = fs::File::open(path).map_err(|e| io_at(path, e))?;
    let s: Stamped<T> = serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(s.data)
}

/// Text file with `# ` provenance lines ahead of `body`.
fn write_text(path: &Path, provenance: &[String], body: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut out = String::new();
    for p in provenance {
        let _ = writeln!(out, "# {p}");
    }
    out.push_str(body);
    fs::write(path, out).map_err(|e| io_at(path, e))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
        }
    }
    Ok(())
}

fn io_at(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl RunConfig {
    pub fn stream_path(&self) -> PathBuf {
        self.path(&self.generate.output)
    }

    pub fn dataset_path(&self, split: &str) -> PathBuf {
        self.path(&self.build.output_dir).join(format!("{split}.tmd"))
    }

    pub fn splits_path(&self) -> PathBuf {
        self.path(&self.build.output_dir).join("splits.json")
    }

    pub fn checkpoint_path(&self, head: &str) -> PathBuf {
        self.path(Path::new("models")).join(format!("{head}.ckpt"))
    }

    pub fn train_log_path(&self, head: &str) -> PathBuf {
        self.path(Path::new("models")).join(format!("{head}_log.csv"))
    }

    pub fn timing_path(&self, head: &str) -> PathBuf {
        self.path(Path::new("models")).join(format!("{head}_timing.csv"))
    }

    pub fn benchmark_path(&self, name: &str) -> PathBuf {
        self.path(&self.benchmarks.output_dir).join(format!("{name}.json"))
    }

    pub fn forecast_path(&self, model: &str) -> PathBuf {
        self.path(&self.evaluate.output_dir).join("forecasts").join(format!("{model}.json"))
    }

    pub fn report_path(&self, ext: &str) -> PathBuf {
        self.path(&self.evaluate.output_dir).join(format!("report.{ext}"))
    }

    pub fn sim_path(&self, name: &str) -> PathBuf {
        self.path(&self.simulate.output_dir).join(name)
    }

    /// Heads as families, rejecting unknown names.
    pub fn families(&self) -> Result<Vec<Family>, CliError> {
        if self.heads.is_empty() {
            return Err(CliError::Usage("no heads selected".into()));
        }
        self.heads.iter().map(|h| parse_head(h)).collect()
    }

    /// Explicit evaluation models, or every head plus enabled benchmarks.
    pub fn eval_models(&self) -> Result<Vec<String>, CliError> {
        if !self.evaluate.models.is_empty() {
            return Ok(self.evaluate.models.clone());
        }
        let mut out: Vec<String> = self.families()?.iter().map(|f| f.name().to_string()).collect();
        if self.benchmarks.birth_death {
            out.push(BIRTH_DEATH.into());
        }
        if self.benchmarks.glm {
            out.push(GLM.into());
        }
        Ok(out)
    }
}

pub fn parse_head(name: &str) -> Result<Family, CliError> {
    Family::parse(name).ok_or_else(|| {
        CliError::Usage(format!("unknown head {name:?}; expected poisson, neg_binomial or zero_trunc_poisson"))
    })
}

// ---------------------------------------------------------------- generate

/// Generator settings for pair index `p` (0 or 1).
pub fn pair_generator(cfg: &RunConfig, p: usize) -> GeneratorConfig {
    let mut g = cfg.generator.clone();
    if p == 1 {
        g.pair = Pair::PairB;
        g.seed = mix_seed(&[cfg.generator.seed, 0xb]);
    }
    g
}

/// Merge per-pair streams by timestamp; ties keep pair order.
fn merge_streams(mut parts: Vec<Vec<OrderFlowEvent>>) -> Vec<OrderFlowEvent> {
    if parts.len() == 1 {
        return parts.pop().expect("one part");
    }
    let mut all: Vec<OrderFlowEvent> = parts.into_iter().flatten().collect();
    all.sort_by_key(|e| e.timestamp);
    all
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let g = &cfg.generate;
    if !(g.duration >= 0.0) {
        return Err(CliError::Config("generate.duration must be >= 0".into()));
    }
    if !(1..=2).contains(&g.pairs) {
        return Err(CliError::Config("generate.pairs must be 1 or 2".into()));
    }
    let parts = (0..g.pairs).map(|p| generate_stream(&pair_generator(cfg, p), g.duration)).collect::<Result<Vec<_>, _>>()?;
    let events = merge_streams(parts);
    let path = cfg.stream_path();
    ensure_parent(&path)?;
    write_stream(&path, &cfg.provenance("generate"), &events).map_err(|e| io_at(&path, e))?;
    log::info!("wrote {} events to {}", events.len(), path.display());
    Ok(path)
}

// ------------------------------------------------------------------- build

/// The configured input streams, relabeled PairA/PairB when there are two.
pub fn load_inputs(cfg: &RunConfig) -> Result<Vec<OrderFlowEvent>, CliError> {
    let inputs = &cfg.build.inputs;
    if inputs.is_empty() || inputs.len() > 2 {
        return Err(CliError::Config("build.inputs needs one or two streams".into()));
    }
    let mut parts = Vec::with_capacity(inputs.len());
    for (i, p) in inputs.iter().enumerate() {
        let path = cfg.path(p);
        if !path.exists() {
            return Err(CliError::Io(format!("input stream {} does not exist", path.display())));
        }
        let mut events = read_stream(&path)?;
        if inputs.len() == 2 {
            let pair = Pair::from_index(i).expect("two pairs");
            events.iter_mut().for_each(|e| e.pair = pair);
        }
        parts.push(events);
    }
    Ok(merge_streams(parts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub ranges: SplitRanges,
    pub counts: [usize; 3],
    pub per_pair: [usize; 2],
}

fn fraction_ranges(samples: &[Sample], train: f64, val: f64) -> Result<SplitRanges, CliError> {
    if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
        return Err(CliError::Config("split fractions must be positive and leave room for a test split".into()));
    }
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(CliError::Config("stream yields no samples; lengthen it or shrink dataset.m".into()));
    };
    let t0 = first.anchor_timestamp;
    let t1 = last.anchor_timestamp + 1;
    let cut = |f: f64| t0 + ((t1 - t0) as f64 * f).floor() as i64;
    let ranges = SplitRanges {
        train: TimeRange::new(t0, cut(train)),
        validation: TimeRange::new(cut(train), cut(train + val)),
        test: TimeRange::new(cut(train + val), t1),
    };
    ranges.validate().map_err(|e| CliError::Config(format!("{e}; too few samples for these fractions")))?;
    Ok(ranges)
}

pub fn cmd_build(cfg: &RunConfig) -> Result<BuildSummary, CliError> {
    cfg.dataset.validate()?;
    let stream = load_inputs(cfg)?;
    let samples = build_dataset(&stream, &cfg.dataset)?;
    let ranges = match cfg.build.splits {
        Some(r) => {
            r.validate()?;
            r
        }
        None => fraction_ranges(&samples, cfg.build.train_frac, cfg.build.validation_frac)?,
    };
    let mut per_pair = [0usize; 2];
    for s in &samples {
        per_pair[s.pair.category() as usize - 1] += 1;
    }
    let mut splits = split_by_date(samples, &ranges)?;
    if splits.train.is_empty() {
        return Err(CliError::Config("training split is empty".into()));
    }
    let norm = NormStats::fit(&splits.train);
    for part in [&mut splits.train, &mut splits.validation, &mut splits.test] {
        norm.apply_all(part);
    }
    let prov = cfg.provenance("build");
    for (name, part) in SPLITS.iter().zip([&splits.train, &splits.validation, &splits.test]) {
        let header = DatasetHeader {
            version: VERSION.to_string(),
            config: cfg.dataset.clone(),
            m: cfg.dataset.m,
            count: part.len(),
            norm: Some(norm.clone()),
            provenance: prov.clone(),
        };
        let path = cfg.dataset_path(name);
        ensure_parent(&path)?;
        save_dataset(&path, &header, part)?;
    }
    let summary = BuildSummary {
        ranges,
        counts: [splits.train.len(), splits.validation.len(), splits.test.len()],
        per_pair,
    };
    write_json(&cfg.splits_path(), prov, &summary)?;
    log::info!("built splits {:?}", summary.counts);
    Ok(summary)
}

pub fn load_split(cfg: &RunConfig, split: &str) -> Result<(DatasetHeader, Vec<Sample>), CliError> {
    let path = cfg.dataset_path(split);
    if !path.exists() {
        return Err(CliError::Io(format!("dataset {} does not exist; run build first", path.display())));
    }
    Ok(load_dataset(&path)?)
}

pub fn load_build_summary(cfg: &RunConfig) -> Result<BuildSummary, CliError> {
    read_json(&cfg.splits_path())
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub head: Family,
    pub history: Vec<EpochLog>,
    pub network: Network,
}

fn log_csv(history: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_nll,val_nll,improved\n");
    for h in history {
        let _ = writeln!(out, "{},{},{},{}", h.epoch, h.train_nll, h.val_nll, h.improved);
    }
    out
}

/// Train every configured head, or continue from saved checkpoints when
/// `resume` is set. Wall-clock times go to a separate file so the log itself
/// stays reproducible.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<Vec<TrainSummary>, CliError> {
    let families = cfg.families()?;
    let (header, train) = load_split(cfg, "train")?;
    let (_, val) = load_split(cfg, "validation")?;
    let prov = cfg.provenance("train");
    let mut out = Vec::with_capacity(families.len());
    for fam in families {
        let name = fam.name();
        let ck_path = cfg.checkpoint_path(name);
        let mut state = if resume {
            if !ck_path.exists() {
                return Err(CliError::Io(format!("no checkpoint at {} to resume from", ck_path.display())));
            }
            let ck = load_checkpoint(&ck_path)?;
            let mut st = ck.state;
            st.finished = st.epoch >= cfg.train.epochs || st.since_improvement >= cfg.train.patience;
            st
        } else {
            let mut net = Network::new(cfg.net.clone(), fam)?;
            let targets: Vec<i64> = train.iter().map(|s| s.target).collect();
            net.init_head_from_targets(&targets);
            TrainState::new(net, &cfg.train)
        };
        let mut timing = String::from("epoch,wall_secs\n");
        while !state.finished {
            let t = Instant::now();
            let log = state.step_epoch(&train, &val, &cfg.train)?;
            let _ = writeln!(timing, "{},{:.3}", log.epoch, t.elapsed().as_secs_f64());
            let ck = Checkpoint { state: state.clone(), norm: header.norm.clone(), provenance: prov.clone() };
            ensure_parent(&ck_path)?;
            save_checkpoint(&ck_path, &ck)?;
        }
        if !ck_path.exists() {
            let ck = Checkpoint { state: state.clone(), norm: header.norm.clone(), provenance: prov.clone() };
            ensure_parent(&ck_path)?;
            save_checkpoint(&ck_path, &ck)?;
        }
        write_text(&cfg.train_log_path(name), &prov, &log_csv(&state.history))?;
        write_text(&cfg.timing_path(name), &prov, &timing)?;
        log::info!("{name}: {} epochs, best validation NLL {:?}", state.epoch, state.best_val);
        out.push(TrainSummary { head: fam, history: state.history.clone(), network: state.best_network() });
    }
    Ok(out)
}

// ----------------------------------------------------------- fit-benchmark

pub fn cmd_fit_benchmark(cfg: &RunConfig) -> Result<(), CliError> {
    let b = &cfg.benchmarks;
    if !b.birth_death && !b.glm {
        return Err(CliError::Usage("both benchmarks are disabled".into()));
    }
    let prov = cfg.provenance("fit-benchmark");
    if b.glm {
        let (_, train) = load_split(cfg, "train")?;
        let params = fit_glm(&train, &b.glm_options)?;
        write_json(&cfg.benchmark_path(GLM), prov.clone(), &params)?;
        log::info!("glm: {} EM iterations, log-likelihood {}", params.iterations, params.log_likelihood);
    }
    if b.birth_death {
        let summary = load_build_summary(cfg)?;
        let end = summary.ranges.train.end;
        let stream: Vec<OrderFlowEvent> = load_inputs(cfg)?.into_iter().filter(|e| e.timestamp < end).collect();
        let rates = fit_birth_death(&stream, cfg.dataset.tick_size, b.levels)?;
        write_json(&cfg.benchmark_path(BIRTH_DEATH), prov, &rates)?;
        log::info!("birth-death: fitted on {} events", stream.len());
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluate

/// Period label per test sample: the test range cut into equal time spans.
pub fn period_labels(cfg: &RunConfig, test: &[Sample], range: TimeRange) -> Result<Vec<String>, CliError> {
    let names = &cfg.evaluate.periods;
    if names.is_empty() {
        return Err(CliError::Config("evaluate.periods is empty".into()));
    }
    let span = (range.end - range.start) as f64;
    Ok(test
        .iter()
        .map(|s| {
            let f = (s.anchor_timestamp - range.start) as f64 / span;
            let i = ((f * names.len() as f64) as usize).min(names.len() - 1);
            names[i].clone()
        })
        .collect())
}

/// Forecasts of `model` for every test sample.
pub fn model_forecasts(cfg: &RunConfig, model: &str, test: &[Sample]) -> Result<Vec<Forecast>, CliError> {
    match model {
        GLM => {
            let path = cfg.benchmark_path(GLM);
            if !path.exists() {
                return Err(CliError::Io(format!("missing model file {}", path.display())));
            }
            let params: GlmParams = read_json(&path)?;
            Ok(test.iter().map(|s| Forecast::Mixture(forecast_glm(&params, s))).collect())
        }
        BIRTH_DEATH => {
            let path = cfg.benchmark_path(BIRTH_DEATH);
            if !path.exists() {
                return Err(CliError::Io(format!("missing model file {}", path.display())));
            }
            let rates: BirthDeathRates = read_json(&path)?;
            let stream = load_inputs(cfg)?;
            let states = anchor_states(&stream, test, cfg.dataset.tick_size)?;
            let b = &cfg.benchmarks;
            let seed = mix_seed(&[cfg.train.seed, 0xbd]);
            Ok(forecast_birth_death_batch(&rates, &states, cfg.dataset.tau, b.price_reference, b.n_paths, seed)?)
        }
        head => {
            let fam = parse_head(head)?;
            let path = cfg.checkpoint_path(fam.name());
            if !path.exists() {
                return Err(CliError::Io(format!("missing model file {}", path.display())));
            }
            let net = load_checkpoint(&path)?.network();
            Ok(net.forecast_all(test)?.into_iter().map(Forecast::Mixture).collect())
        }
    }
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let models = cfg.eval_models()?;
    if !models.contains(&cfg.evaluate.baseline) {
        return Err(CliError::Config(format!("baseline {:?} is not among the evaluated models", cfg.evaluate.baseline)));
    }
    let (_, test) = load_split(cfg, "test")?;
    if test.is_empty() {
        return Err(CliError::Config("test split is empty".into()));
    }
    let summary = load_build_summary(cfg)?;
    let periods = period_labels(cfg, &test, summary.ranges.test)?;
    let truths: Vec<i64> = test.iter().map(|s| s.target).collect();
    let prov = cfg.provenance("evaluate");
    let mut all = Vec::with_capacity(models.len());
    for m in &models {
        let f = model_forecasts(cfg, m, &test)?;
        write_json(&cfg.forecast_path(m), prov.clone(), &f)?;
        all.push((m.clone(), f));
    }
    let report = evaluate(&all, &truths, &periods, &cfg.evaluate.baseline)?;
    write_text(&cfg.report_path("csv"), &prov, &report.to_csv())?;
    write_json(&cfg.report_path("json"), prov, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestEntry {
    pub benchmark: String,
    pub model: String,
    /// `None` when the pair admits no test (fewer than two scenarios or
    /// constant non-zero differences).
    pub test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub mean_final: f64,
    pub mean_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub seed: u64,
    pub scenarios: usize,
    pub iterations: usize,
    pub models: Vec<ModelSummary>,
    pub t_tests: Vec<TTestEntry>,
}

pub fn is_benchmark(name: &str) -> bool {
    name == GLM || name == BIRTH_DEATH
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Paired tests of every deep model against every benchmark on scaled
/// final capital.
pub fn t_tests(result: &ExperimentResult) -> Vec<TTestEntry> {
    let mut out = Vec::new();
    for b in result.models.iter().filter(|m| is_benchmark(&m.model)) {
        for m in result.models.iter().filter(|m| !is_benchmark(&m.model)) {
            let test = paired_t_test(&m.scaled, &b.scaled).ok();
            out.push(TTestEntry { benchmark: b.model.clone(), model: m.model.clone(), test });
        }
    }
    out
}

fn ttest_csv(rows: &[TTestEntry]) -> String {
    let mut out = String::from("benchmark,model,t,p,df,mean_diff\n");
    for r in rows {
        match &r.test {
            Some(t) => {
                let _ = writeln!(out, "{},{},{},{},{},{}", r.benchmark, r.model, t.t, t.p, t.df, t.mean_diff);
            }
            None => {
                let _ = writeln!(out, "{},{},,,,", r.benchmark, r.model);
            }
        }
    }
    out
}

fn histogram_csv(result: &ExperimentResult, bins: usize) -> String {
    let h = histogram(result, bins.max(1));
    let mut out = String::from("bin_low,bin_high");
    for (m, _) in &h.counts {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    for i in 0..h.edges.len() - 1 {
        let _ = write!(out, "{},{}", h.edges[i], h.edges[i + 1]);
        for (_, c) in &h.counts {
            let _ = write!(out, ",{}", c[i]);
        }
        out.push('\n');
    }
    out
}

/// Models to simulate: the configured list, or everything that was evaluated.
pub fn sim_models(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    if !cfg.simulate.models.is_empty() {
        return Ok(cfg.simulate.models.clone());
    }
    let path = cfg.report_path("json");
    if !path.exists() {
        return Err(CliError::Io(format!("{} does not exist; run evaluate first", path.display())));
    }
    let report: EvalReport = read_json(&path)?;
    Ok(report.models.into_iter().map(|m| m.model).collect())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(ExperimentResult, SimSummary), CliError> {
    cfg.sim.validate()?;
    if (cfg.sim.tau - cfg.dataset.tau).abs() > 1e-9 {
        return Err(CliError::Config(format!("sim.tau {} differs from dataset.tau {}", cfg.sim.tau, cfg.dataset.tau)));
    }
    let models = sim_models(cfg)?;
    let (_, test) = load_split(cfg, "test")?;
    let mut forecasts: Vec<(String, Vec<Forecast>)> = Vec::with_capacity(models.len());
    for m in &models {
        let path = cfg.forecast_path(m);
        if !path.exists() {
            return Err(CliError::Io(format!("missing forecasts {}; run evaluate first", path.display())));
        }
        forecasts.push((m.clone(), read_json(&path)?));
    }
    let refs: Vec<(String, &dyn Forecaster)> = forecasts.iter().map(|(n, f)| (n.clone(), f as &dyn Forecaster)).collect();
    let result = run_experiment(&refs, &test, &cfg.sim)?;
    let rows = t_tests(&result);
    let summary = SimSummary {
        seed: cfg.sim.seed,
        scenarios: cfg.sim.scenarios,
        iterations: cfg.sim.iterations,
        models: result
            .models
            .iter()
            .map(|m| ModelSummary { model: m.model.clone(), mean_final: mean(&m.finals), mean_scaled: mean(&m.scaled) })
            .collect(),
        t_tests: rows.clone(),
    };
    let prov = cfg.provenance("simulate");
    let mut buf = Vec::new();
    write_scenarios_csv(&mut buf, &prov, &result)?;
    write_bytes(&cfg.sim_path("scenarios.csv"), &buf)?;
    buf.clear();
    write_trajectories_csv(&mut buf, &prov, &result)?;
    write_bytes(&cfg.sim_path("trajectories.csv"), &buf)?;
    write_text(&cfg.sim_path("histogram.csv"), &prov, &histogram_csv(&result, cfg.sim.histogram_bins))?;
    write_text(&cfg.sim_path("ttest.csv"), &prov, &ttest_csv(&rows))?;
    write_json(&cfg.sim_path("summary.json"), prov, &summary)?;
    Ok((result, summary))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| io_at(path, e))
}

/// generate, build, train, fit-benchmark, evaluate and simulate in order.
pub fn run_all(cfg: &RunConfig) -> Result<(EvalReport, SimSummary), CliError> {
    cmd_generate(cfg)?;
    cmd_build(cfg)?;
    cmd_train(cfg, false)?;
    if cfg.benchmarks.glm || cfg.benchmarks.birth_death {
        cmd_fit_benchmark(cfg)?;
    }
    let report = cmd_evaluate(cfg)?;
    let (_, summary) = cmd_simulate(cfg)?;
    Ok((report, summary))
}
