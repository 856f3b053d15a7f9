//! Subcommands of the `erdr` tool. Each `cmd_*` function takes a resolved
//! [`RunConfig`], writes its artifacts into the output directory and returns
//! the `key=value` report it prints on stdout.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use erdr::blocking::{build_index, tune_params};
use erdr::classifier::{
    decode_model, encode_model, inject_noise, kfold_eval, positive_threshold, sample_negatives, train, KFoldReport,
    PairUniverse, TrainedModel,
};
use erdr::config::RunConfig;
use erdr::csv::write_row;
use erdr::compose::TupleDr;
use erdr::data::{align_schemas, load_matches, load_table, validate_pairs, LabeledPair, Linkage, Table};
use erdr::embeddings::{coverage, load_embedding_text, CoverageReport, EmbeddingDictionary};
use erdr::eval::{precision_recall_f1, reduction_ratio, total_pairs, BlockingReport, MatchReport, PairSet};
use erdr::retrofit::{build_graph, init_oov, retrofit};
use erdr::synth::{generate, SynthConfig};
use erdr::{Error, Result};

pub const RESOLVED_CONFIG: &str = "resolved.conf";
pub const COVERAGE_FILE: &str = "coverage.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";
pub const RETROFIT_FILE: &str = "embeddings.retrofit.txt";

/// 0 success, 2 I/O, 3 precondition/contract/input, 4 internal.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => 2,
        Error::Divergence { .. } => 4,
        _ => 3,
    }
}

/// Loads a config file and applies command-line overrides. A relative
/// `--out` is taken relative to the working directory.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    if let Some(o) = out {
        cfg.paths.out = Some(o);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_owned(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serialization cannot fail");
    s.push('\n');
    s
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{key} is required for this command")))
}

/// Tables and embeddings for one run. `right == None` is deduplication.
pub struct Inputs {
    pub left: Table,
    pub right: Option<Table>,
    pub dict: EmbeddingDictionary,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let dict = load_embedding_text(required(&cfg.paths.embeddings, "paths.embeddings")?)?;
        let left = load_table(required(&cfg.paths.left, "paths.left")?, &cfg.id_column)?;
        let right = match &cfg.paths.right {
            Some(p) => {
                let right = load_table(p, &cfg.id_column)?;
                align_schemas(&left, &right)?;
                Some(right)
            }
            None => None,
        };
        Ok(Self { left, right, dict })
    }

    pub fn tables(&self) -> Vec<&Table> {
        std::iter::once(&self.left).chain(self.right.as_ref()).collect()
    }

    pub fn linkage(&self) -> Linkage {
        if self.right.is_some() {
            Linkage::Link
        } else {
            Linkage::Dedup
        }
    }

    fn load_truth(&self, path: &Path) -> Result<Vec<LabeledPair>> {
        let pairs = load_matches(path)?;
        validate_pairs(&pairs, &self.left, self.right.as_ref())?;
        Ok(pairs)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrofit: Option<RetrofitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocking: Option<BlockingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matching: Option<MatchSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrofitSummary {
    pub vertices: usize,
    pub oov_initialized: usize,
    pub psi_before: f64,
    pub psi_after: f64,
    pub psi_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub positives: usize,
    pub negatives: usize,
    pub similarity_threshold: f64,
    pub relaxed_threshold: Option<f64>,
    pub noisy_labels: usize,
    pub cv: KFoldReport,
    pub final_epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneSummary {
    pub p1: f64,
    pub p2: f64,
    pub n: u64,
    pub k: usize,
    pub l: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchSummary {
    pub candidate_pairs: usize,
    pub total_pairs: u64,
    pub comparison_ratio: f64,
    pub predicted_matches: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MatchReport>,
}

fn start_run(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out_dir();
    write_file(&out.join(RESOLVED_CONFIG), cfg.echo())?;
    Ok(out)
}

pub fn stage_coverage(inputs: &Inputs, out: &Path) -> Result<(CoverageReport, String)> {
    let report = coverage(&inputs.dict, &inputs.tables());
    write_file(&out.join(COVERAGE_FILE), to_json(&report))?;
    let mut kv = report.to_kv();
    kv.push_str(if report.is_full() {
        "coverage.advisory=full coverage; the embeddings can be used as they are\n"
    } else {
        "coverage.advisory=partial coverage; consider retrofit.enabled=true\n"
    });
    Ok((report, kv))
}

pub fn stage_retrofit(cfg: &RunConfig, inputs: &Inputs, out: &Path) -> Result<(EmbeddingDictionary, RetrofitSummary)> {
    let graph = build_graph(&inputs.tables(), &inputs.dict);
    let seeded = init_oov(&graph, &inputs.dict, cfg.retrofit.init_neighbors)?;
    let outcome = retrofit(&seeded, &graph, &cfg.retrofit)?;
    let mut text = Vec::new();
    outcome
        .dictionary
        .write_text(&mut text)
        .expect("writing to memory cannot fail");
    write_file(&out.join(RETROFIT_FILE), text)?;
    let summary = RetrofitSummary {
        vertices: graph.vertices.len(),
        oov_initialized: graph.oov.len(),
        psi_before: outcome.history[0],
        psi_after: *outcome.history.last().unwrap(),
        psi_history: outcome.history,
    };
    Ok((outcome.dictionary, summary))
}

/// Threshold, negative sampling, K-fold evaluation and the final model on
/// all pairs. The model is written to the configured model path.
pub fn stage_train(cfg: &RunConfig, inputs: &Inputs, dict: &EmbeddingDictionary) -> Result<(TrainedModel, TrainSummary)> {
    let positives = inputs.load_truth(required(&cfg.paths.matches, "paths.matches")?)?;
    if positives.len() < cfg.train.folds {
        return Err(Error::Precondition(format!(
            "{} labeled matches cannot fill {} folds",
            positives.len(),
            cfg.train.folds
        )));
    }
    let universe = PairUniverse::new(&inputs.left, inputs.right.as_ref(), dict);
    let threshold = positive_threshold(&universe, &positives)?;
    let negatives = sample_negatives(&universe, &positives, cfg.train.neg_ratio, threshold, cfg.seed)?;
    let mut pairs = positives.clone();
    pairs.extend(negatives.pairs.iter().cloned());

    let cv = kfold_eval(&pairs, &inputs.left, inputs.right.as_ref(), dict, &cfg.train)?;
    let noisy = inject_noise(&pairs, cfg.train.noise_fraction, cfg.seed)?;
    let noisy_labels = noisy.iter().zip(&pairs).filter(|(a, b)| a.label != b.label).count();
    let (model, history) = train(&noisy, &inputs.left, inputs.right.as_ref(), dict, &cfg.train)?;
    write_file(&cfg.model_path(), encode_model(&model))?;
    let summary = TrainSummary {
        positives: positives.len(),
        negatives: negatives.pairs.len(),
        similarity_threshold: threshold,
        relaxed_threshold: negatives.relaxed_threshold,
        noisy_labels,
        cv,
        final_epoch_loss: history.epoch_loss,
    };
    Ok((model, summary))
}

/// Picks K and L for the configured goal and stores them in `cfg.lsh`.
pub fn stage_tune(cfg: &mut RunConfig, default_n: Option<u64>) -> Result<TuneSummary> {
    let n = match (cfg.tune.n, default_n) {
        (Some(n), _) | (None, Some(n)) => n,
        (None, None) => return Err(Error::Config("tune.n is required without input tables".into())),
    };
    let goal = cfg.tune.goal(n)?;
    let (k, l) = tune_params(&goal)?;
    cfg.lsh.k = k;
    cfg.lsh.l = l;
    cfg.lsh.validate()?;
    Ok(TuneSummary {
        p1: goal.p1,
        p2: goal.p2,
        n: goal.n,
        k,
        l,
    })
}

pub fn load_model(cfg: &RunConfig) -> Result<TrainedModel> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(Error::Precondition(format!(
            "model file {} not found; train a model first",
            path.display()
        )));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
    decode_model(&text)
}

/// Blocks with LSH over the model's tuple DRs, classifies every candidate
/// pair and writes the predicted matches.
pub fn stage_match(
    cfg: &RunConfig,
    inputs: &Inputs,
    dict: &EmbeddingDictionary,
    model: &TrainedModel,
    out: &Path,
) -> Result<(MatchSummary, Option<BlockingReport>)> {
    let compose_all = |t: &Table| -> Result<HashMap<String, TupleDr>> {
        t.records().iter().map(|r| Ok((r.id.clone(), model.compose(r, dict)?))).collect()
    };
    let as_entries = |t: &Table, drs: &HashMap<String, TupleDr>| -> Vec<(String, Vec<f64>)> {
        t.records().iter().map(|r| (r.id.clone(), drs[&r.id].vector.clone())).collect()
    };
    let left_drs = compose_all(&inputs.left)?;
    let right_drs = inputs.right.as_ref().map(compose_all).transpose()?;
    let left = as_entries(&inputs.left, &left_drs);
    let right = inputs.right.as_ref().zip(right_drs.as_ref()).map(|(t, d)| as_entries(t, d));
    let dim = left.first().map(|(_, v)| v.len()).unwrap_or(1);
    let index = build_index(dim, &left, right.as_deref(), &cfg.lsh)?;
    let candidates = index.candidate_pairs()?;

    let linkage = inputs.linkage();
    let right_drs = right_drs.as_ref().unwrap_or(&left_drs);
    let mut scored: Vec<(String, String, f64)> = Vec::with_capacity(candidates.len());
    for &(a, b) in &candidates {
        let (l, r) = index.oriented(a, b);
        let (l, r) = linkage.key(l, r);
        let p = model.score(&left_drs[&l], &right_drs[&r])?;
        scored.push((l, r, p));
    }
    scored.sort_by(|x, y| y.2.total_cmp(&x.2).then_with(|| (&x.0, &x.1).cmp(&(&y.0, &y.1))));

    let mut csv = Vec::new();
    write_row(&mut csv, &[Some("left_id"), Some("right_id"), Some("probability")]).expect("in-memory write");
    let mut predicted = 0;
    for (l, r, p) in &scored {
        if model.label(*p).is_match() {
            predicted += 1;
            write_row(&mut csv, &[Some(l.as_str()), Some(r.as_str()), Some(p.to_string().as_str())])
                .expect("in-memory write");
        }
    }
    write_file(&out.join(PREDICTIONS_FILE), csv)?;

    let n_right = inputs.right.as_ref().map(Table::len);
    let mut summary = MatchSummary {
        candidate_pairs: candidates.len(),
        total_pairs: total_pairs(inputs.left.len(), n_right),
        comparison_ratio: reduction_ratio(candidates.len(), inputs.left.len(), n_right)?,
        predicted_matches: predicted,
        metrics: None,
    };
    let blocking = match &cfg.paths.matches {
        Some(path) => {
            let truth_pairs = inputs.load_truth(path)?;
            let truth = PairSet::from_pairs(linkage, truth_pairs.iter().map(|p| (p.left_id.as_str(), p.right_id.as_str())));
            let cand_set = PairSet::from_pairs(linkage, scored.iter().map(|(l, r, _)| (l.as_str(), r.as_str())));
            let predictions = scored.iter().map(|(l, r, p)| (l.as_str(), r.as_str(), model.label(*p)));
            summary.metrics = Some(precision_recall_f1(predictions, &truth, Some(summary.total_pairs)));
            Some(BlockingReport::compute(
                &cand_set,
                &truth,
                inputs.left.len(),
                n_right,
                index.occupancy(),
            )?)
        }
        None => None,
    };
    Ok((summary, blocking))
}

fn match_kv(summary: &MatchSummary, blocking: Option<&BlockingReport>) -> String {
    let mut s = format!(
        "match.candidate_pairs={}\nmatch.total_pairs={}\nmatch.comparison_ratio={}\nmatch.predicted_matches={}\n",
        summary.candidate_pairs, summary.total_pairs, summary.comparison_ratio, summary.predicted_matches
    );
    if let Some(b) = blocking {
        s.push_str(&b.to_kv());
    }
    if let Some(m) = &summary.metrics {
        s.push_str(&m.to_kv("match"));
    }
    s
}

fn train_kv(t: &TrainSummary) -> String {
    let mut s = format!(
        "train.positives={}\ntrain.negatives={}\ntrain.similarity_threshold={}\n",
        t.positives, t.negatives, t.similarity_threshold
    );
    if let Some(r) = t.relaxed_threshold {
        s.push_str(&format!("train.relaxed_threshold={r}\n"));
    }
    s.push_str(&t.cv.to_kv());
    s
}

fn retrofit_kv(r: &RetrofitSummary) -> String {
    format!(
        "retrofit.vertices={}\nretrofit.oov_initialized={}\nretrofit.psi_before={}\nretrofit.psi_after={}\n",
        r.vertices, r.oov_initialized, r.psi_before, r.psi_after
    )
}

fn tune_kv(t: &TuneSummary) -> String {
    format!("tune.n={}\nlsh.k={}\nlsh.l={}\n", t.n, t.k, t.l)
}

fn write_report(out: &Path, report: &RunReport) -> Result<()> {
    write_file(&out.join(REPORT_FILE), to_json(report))
}

pub fn cmd_coverage(cfg: &RunConfig) -> Result<String> {
    let out = start_run(cfg)?;
    let inputs = Inputs::load(cfg)?;
    Ok(stage_coverage(&inputs, &out)?.1)
}

pub fn cmd_retrofit(cfg: &RunConfig) -> Result<String> {
    let out = start_run(cfg)?;
    let inputs = Inputs::load(cfg)?;
    let (_, summary) = stage_retrofit(cfg, &inputs, &out)?;
    let kv = retrofit_kv(&summary);
    write_report(&out, &RunReport { retrofit: Some(summary), ..Default::default() })?;
    Ok(kv)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let out = start_run(cfg)?;
    let inputs = Inputs::load(cfg)?;
    let (_, summary) = stage_train(cfg, &inputs, &inputs.dict)?;
    let kv = train_kv(&summary);
    write_report(&out, &RunReport { train: Some(summary), ..Default::default() })?;
    Ok(kv)
}

/// Without `tune.n` the table sizes give the number of indexed tuples.
pub fn cmd_tune_lsh(cfg: &RunConfig) -> Result<String> {
    let mut cfg = cfg.clone();
    let default_n = match (&cfg.paths.left, cfg.tune.n) {
        (_, Some(_)) | (None, None) => None,
        (Some(_), None) => {
            let left = load_table(required(&cfg.paths.left, "paths.left")?, &cfg.id_column)?;
            let right = cfg.paths.right.as_ref().map(|p| load_table(p, &cfg.id_column)).transpose()?;
            Some((left.len() + right.map_or(0, |r| r.len())) as u64)
        }
    };
    let summary = stage_tune(&mut cfg, default_n)?;
    let out = start_run(&cfg)?;
    let kv = tune_kv(&summary);
    write_report(&out, &RunReport { tune: Some(summary), ..Default::default() })?;
    Ok(kv)
}

pub fn cmd_match(cfg: &RunConfig) -> Result<String> {
    let out = start_run(cfg)?;
    let model = load_model(cfg)?;
    let inputs = Inputs::load(cfg)?;
    let (summary, blocking) = stage_match(cfg, &inputs, &inputs.dict, &model, &out)?;
    let kv = match_kv(&summary, blocking.as_ref());
    write_report(
        &out,
        &RunReport {
            blocking,
            matching: Some(summary),
            ..Default::default()
        },
    )?;
    Ok(kv)
}

/// coverage → retrofit (optional) → train (optional) → tune (optional) →
/// match, all in one output directory. The first failing stage aborts.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<String> {
    let mut cfg = cfg.clone();
    let out = start_run(&cfg)?;
    let inputs = Inputs::load(&cfg)?;
    let mut report = RunReport::default();
    let (_, mut kv) = stage_coverage(&inputs, &out)?;

    let retrofitted;
    let dict = if cfg.retrofit_enabled {
        let (d, summary) = stage_retrofit(&cfg, &inputs, &out)?;
        kv.push_str(&retrofit_kv(&summary));
        report.retrofit = Some(summary);
        retrofitted = d;
        &retrofitted
    } else {
        &inputs.dict
    };

    let model = if cfg.pipeline_train {
        let (model, summary) = stage_train(&cfg, &inputs, dict)?;
        kv.push_str(&train_kv(&summary));
        report.train = Some(summary);
        model
    } else {
        load_model(&cfg)?
    };

    if cfg.tune.is_set() {
        let n = inputs.tables().iter().map(|t| t.len() as u64).sum();
        let summary = stage_tune(&mut cfg, Some(n))?;
        kv.push_str(&tune_kv(&summary));
        report.tune = Some(summary);
        write_file(&out.join(RESOLVED_CONFIG), cfg.echo())?;
    }

    let (summary, blocking) = stage_match(&cfg, &inputs, dict, &model, &out)?;
    kv.push_str(&match_kv(&summary, blocking.as_ref()));
    report.blocking = blocking;
    report.matching = Some(summary);
    write_report(&out, &report)?;
    Ok(kv)
}

/// Config text for a generated benchmark directory.
pub fn synth_config_text(linkage: Linkage) -> String {
    let right = match linkage {
        Linkage::Link => "paths.right = right.csv\n",
        Linkage::Dedup => "",
    };
    format!(
        "# synthetic benchmark\npaths.left = left.csv\n{right}paths.matches = matches.csv\npaths.embeddings = embeddings.txt\npaths.out = run\nseed = 0\n"
    )
}

/// Generates a synthetic benchmark plus a ready-to-run `erdr.conf` in `out`.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<String> {
    let data = generate(cfg)?;
    data.write_to(out)?;
    write_file(&out.join("erdr.conf"), synth_config_text(cfg.linkage))?;
    Ok(format!(
        "synth.left={}\nsynth.right={}\nsynth.matches={}\nsynth.vocabulary={}\n",
        data.left.len(),
        data.right.as_ref().map_or(0, Table::len),
        data.matches.len(),
        data.embeddings.len()
    ))
}
