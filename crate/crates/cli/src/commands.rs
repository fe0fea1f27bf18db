use std::fs;
use std::path::{Path, PathBuf};

use procattn::attnstats::{heatmap_csv, heatmap_json};
use procattn::eventlog::{
    extract_prefixes, read_csv, read_xes_filtered, split, synth_log, write_csv, Activity, CsvOptions, EventLog,
    IngestFilter, Prefix, ProcessSpec, ProcessTree,
};
use procattn::explain::{
    export_graph, prefix_activities, AttentionExplorationExplainer, BackwardExplainer, Explainer, GraphFormat,
};
use procattn::metrics::{evaluate_all, render_table, weighted_f1, EvalOptions};
use procattn::prestudy::{experiment1, experiment2, write_exp1_csv, write_exp2_csv, Exp1Options};
use procattn::transformer::{load_checkpoint, save_checkpoint, train_with_report, Predictor, TransformerModel};
use serde::Serialize;

use crate::config::{LogFormat, Method, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

const RESOLVED_CONFIG: &str = "resolved_config.toml";

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

/// Creates the output directory and records the resolved configuration.
fn begin(cfg: &RunConfig) -> Result<&Path> {
    let dir = out_dir(cfg)?;
    write(dir, RESOLVED_CONFIG, cfg.to_toml())?;
    Ok(dir)
}

fn load_log(cfg: &RunConfig) -> Result<EventLog> {
    let path = cfg
        .log
        .as_deref()
        .ok_or_else(|| CliError::Usage("an event log is required (--log)".into()))?;
    let format = cfg.format.unwrap_or_else(|| {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("xes") => LogFormat::Xes,
            _ => LogFormat::Csv,
        }
    });
    let filter = IngestFilter {
        activity_prefix: cfg.activity_prefix.clone(),
        lifecycle: cfg.lifecycle.clone(),
    };
    let log = match format {
        LogFormat::Xes => read_xes_filtered(path, &filter)?,
        LogFormat::Csv => {
            let opts = CsvOptions {
                case_col: cfg.case_col.clone(),
                activity_col: cfg.activity_col.clone(),
                time_col: cfg.time_col.clone(),
                lifecycle_col: cfg.lifecycle_col.clone(),
                filter,
            };
            let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            read_csv(std::io::BufReader::new(file), &opts)?
        }
    };
    Ok(log)
}

fn load_model(cfg: &RunConfig) -> Result<TransformerModel> {
    let path = cfg
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("a model checkpoint is required (--model)".into()))?;
    Ok(load_checkpoint(path)?)
}

/// Prefixes to analyse: the lines of `--prefixes`, or every prefix of the
/// test split of `--log`.
fn load_prefixes(cfg: &RunConfig, model: &TransformerModel) -> Result<Vec<Prefix>> {
    let vocabulary = model.vocabulary();
    if let Some(path) = &cfg.prefixes {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let activities = vocabulary
                .parse_sequence(line)
                .map_err(|e| CliError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
            out.push(Prefix {
                activities,
                target: vocabulary.end(),
                source_case: format!("line {}", i + 1),
            });
        }
        if out.is_empty() {
            return Err(CliError::Parse(format!("{}: no prefixes", path.display())));
        }
        return Ok(out);
    }
    Ok(extract_prefixes(&test_log(cfg, model)?, 1))
}

fn test_log(cfg: &RunConfig, model: &TransformerModel) -> Result<EventLog> {
    let log = load_log(cfg)?.remap(model.vocabulary())?;
    let (_, test) = split(&log, cfg.train_frac, cfg.seed)?;
    Ok(test)
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let dir = begin(cfg)?;
    let stats = log.stats();
    println!("{stats}");
    write(dir, "stats.txt", format!("{stats}\n"))?;
    write(dir, "stats.json", json(&stats))?;
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let mut spec = match (&cfg.synth.tree, &cfg.synth.spec) {
        (Some(tree), None) => ProcessSpec::new(ProcessTree::parse(tree)?)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ProcessSpec::parse(&text)?
        }
        _ => return Err(CliError::Usage("give exactly one of --tree and --spec".into())),
    };
    if let Some(p) = cfg.synth.redo_prob {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Usage(format!("redo_prob must lie in [0, 1], got {p}")));
        }
        spec.redo_prob = p;
    }
    let generated = synth_log(&spec, cfg.synth.traces, cfg.seed)?;
    let dir = begin(cfg)?;
    let mut buf = Vec::new();
    write_csv(&generated.log, &mut buf)?;
    let path = write(dir, "log.csv", buf)?;
    write(dir, "ground_truth.txt", generated.ground_truth_text())?;
    println!("{}", generated.log.stats());
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    weighted_f1: f64,
    train_traces: usize,
    test_traces: usize,
    train_prefixes: usize,
    test_prefixes: usize,
    max_len: usize,
    parameters: usize,
    steps: usize,
    epoch_losses: Vec<f64>,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let (train_log, test) = split(&log, cfg.train_frac, cfg.seed)?;
    let dir = begin(cfg)?;
    let (model, report) = train_with_report(&train_log, &cfg.model_config())?;
    let path = cfg.model.clone().unwrap_or_else(|| dir.join("model.ckpt"));
    save_checkpoint(&model, &path)?;
    let model = load_checkpoint(&path)?;
    let test_prefixes = extract_prefixes(&test, 1);
    let f1 = weighted_f1(&model, &test_prefixes)?;
    let summary = TrainSummary {
        weighted_f1: f1,
        train_traces: train_log.len(),
        test_traces: test.len(),
        train_prefixes: report.num_prefixes,
        test_prefixes: test_prefixes.len(),
        max_len: report.max_len,
        parameters: model.params().count(),
        steps: report.steps,
        epoch_losses: report.epoch_losses,
    };
    write(dir, "train_report.json", json(&summary))?;
    println!("weighted F1 on {} test prefixes: {f1:.4}", test_prefixes.len());
    println!("checkpoint: {}", path.display());
    Ok(())
}

pub fn exp1(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let dir = begin(cfg)?;
    let options = Exp1Options {
        train_frac: cfg.train_frac,
        pairing: cfg.prestudy.pairing,
        scope: cfg.prestudy.scope,
    };
    let result = experiment1(&log, cfg.prestudy.repeats, &cfg.model_config(), &options)?;
    let mut buf = Vec::new();
    write_exp1_csv(&result, &mut buf)?;
    write(dir, "exp1.csv", buf)?;
    write(dir, "exp1.json", json(&result))?;
    for r in &result.rows {
        println!(
            "{} vs {}: mean JSD {:.4}, mean TVD {:.4}",
            r.baseline.name(),
            r.modified.name(),
            r.mean_jsd,
            r.mean_tvd
        );
    }
    Ok(())
}

pub fn exp2(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let prefixes = load_prefixes(cfg, &model)?;
    let dir = begin(cfg)?;
    let result = experiment2(&model, &prefixes)?;
    let mut buf = Vec::new();
    write_exp2_csv(&result, &mut buf)?;
    write(dir, "exp2.csv", buf)?;
    write(dir, "exp2.json", json(&result))?;
    println!(
        "{} masked positions, histogram {:?}",
        result.rows.len(),
        result.histogram
    );
    Ok(())
}

fn explainer(cfg: &RunConfig) -> Box<dyn Explainer> {
    match cfg.explain.method {
        Method::Backward => Box::new(BackwardExplainer {
            thresholds: cfg.thresholds,
            n_mods: cfg.explain.n_mods,
            prune: cfg.explain.prune,
        }),
        Method::AttentionExploration => Box::new(AttentionExplorationExplainer {
            thresholds: cfg.thresholds,
            n_mods: cfg.explain.n_mods,
            subset_cap: cfg.explain.subset_cap,
            indexing: cfg.explain.cell_indexing,
        }),
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    method: Method,
    seed: u64,
    prefix_count: usize,
    vertex_count: usize,
    edge_count: usize,
    delta_edge: f64,
    thresholds: &'a procattn::explain::Thresholds,
    explain: &'a crate::config::ExplainSettings,
}

pub fn explain(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let prefixes = load_prefixes(cfg, &model)?;
    let dir = begin(cfg)?;
    let tokens = prefix_activities(&prefixes);
    let graph = explainer(cfg).explain(&model, &tokens, cfg.seed)?;
    let v = model.vocabulary();
    let dot = export_graph(&graph, v, GraphFormat::Dot);
    write(dir, "graph.dot", &dot)?;
    write(dir, "graph.json", export_graph(&graph, v, GraphFormat::Json))?;
    let provenance = Provenance {
        method: cfg.explain.method,
        seed: cfg.seed,
        prefix_count: tokens.len(),
        vertex_count: graph.vertices.len(),
        edge_count: graph.edges.len(),
        delta_edge: cfg.thresholds.edge_threshold(model.num_activities()),
        thresholds: &cfg.thresholds,
        explain: &cfg.explain,
    };
    write(dir, "provenance.json", json(&provenance))?;
    print!("{dot}");
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let test = test_log(cfg, &model)?;
    let dir = begin(cfg)?;
    let options = EvalOptions {
        sample_frac: cfg.evaluate.sample_frac,
        average: cfg.evaluate.average,
        seed: cfg.seed,
    };
    let (report, rows) = evaluate_all(&model, explainer(cfg).as_ref(), &test, &cfg.thresholds, &options)?;
    let label = cfg
        .log
        .as_deref()
        .and_then(Path::file_stem)
        .and_then(|s| s.to_str())
        .unwrap_or("log");
    let table = render_table(&[(label, &report)]);
    write(dir, "report.json", json(&report))?;
    write(dir, "report.txt", &table)?;
    let mut w = csv_writer();
    w.write_record(["prefix", "correctness", "completeness", "continuity"])
        .expect("in-memory write");
    let cell = |v: Option<f64>| v.map_or_else(|| "N".to_owned(), |x| format!("{x:.12}"));
    for r in &rows {
        let labels: Vec<&str> = r
            .prefix
            .split(' ')
            .filter_map(|id| id.parse::<u32>().ok())
            .map(|id| model.vocabulary().label(Activity(id)))
            .collect();
        w.write_record([
            labels.join(","),
            cell(r.correctness),
            cell(r.completeness),
            cell(r.continuity),
        ])
        .expect("in-memory write");
    }
    write(dir, "per_prefix.csv", w.into_inner().expect("in-memory flush"))?;
    print!("{table}");
    Ok(())
}

fn csv_writer() -> ::csv::Writer<Vec<u8>> {
    ::csv::Writer::from_writer(Vec::new())
}

pub fn heatmap(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let text = cfg
        .heatmap_prefix
        .as_deref()
        .ok_or_else(|| CliError::Usage("a prefix is required (--prefix A,B,C)".into()))?;
    let tokens = model.vocabulary().parse_sequence(text)?;
    let tokens = model.clip(&tokens).to_vec();
    let dir = begin(cfg)?;
    let (p, att) = model.forward(&tokens)?;
    let v = model.vocabulary();
    write(dir, "heatmap.csv", heatmap_csv(&att, &tokens, v))?;
    write(dir, "heatmap.json", heatmap_json(&att, &tokens, v))?;
    let next = p.argmax();
    println!("predicted next: {} ({:.3})", v.label(next), p.prob(next));
    Ok(())
}
