use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ggc::autodiff::{read_checkpoint, write_checkpoint, ParamStore};
use ggc::dataset::{read_dataset, write_dataset};
use ggc::eval::{kfold_test, roc_auc, roc_csv, roc_svg, summary_csv, RocCurve, SummaryRow};
use ggc::gae::{AutoencoderKind, GraphAutoencoder};
use ggc::jetdata::{
    jet_to_graph, parse_jets_text, read_jets, split_and_subsample, synth_dataset_sized, JetDataset, NormalizationStats,
};
use ggc::trainer::{
    classical_search, grid_search, load_params, train, ClassifierKind, Paradigm, Pipeline, SearchMode, TrainConfig,
    TrialRecord,
};
use ggc::Graph;
use rayon::prelude::*;

use crate::config::{
    CompressFile, EvaluateFile, PrepareConfig, ReproduceConfig, SearchFile, SearchPlan, SourceKind, TrainFile,
};

const TRAIN_CONFIG_FILE: &str = "train_config.toml";
const AUTOENCODER_CKPT: &str = "autoencoder.ckpt";
const CLASSIFIER_CKPT: &str = "classifier.ckpt";

fn read_graphs(path: &Path) -> Result<Vec<Graph>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(&mut BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write_graphs(path: &Path, graphs: &[Graph]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_dataset(&mut w, graphs)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn input_dim(graphs: &[Graph]) -> Result<usize> {
    graphs.first().map(Graph::feature_dim).ok_or_else(|| anyhow!("dataset is empty"))
}

/// Lowercase name for file paths, matching the config spelling.
fn ae_key(kind: AutoencoderKind) -> &'static str {
    match kind {
        AutoencoderKind::Miagae => "miagae",
        AutoencoderKind::Sag => "sag",
    }
}

fn classifier_key(kind: ClassifierKind) -> &'static str {
    match kind {
        ClassifierKind::Gnn => "gnn",
        ClassifierKind::Qgnn1 => "qgnn1",
        ClassifierKind::Qgnn2 => "qgnn2",
    }
}

/// Table-style model name, e.g. `MIAGAE + QGNN2`.
pub fn model_name(cfg: &TrainConfig) -> String {
    match cfg.paradigm {
        Paradigm::Uncompressed => cfg.classifier.label().to_string(),
        _ => format!("{} + {}", cfg.autoencoder.label(), cfg.classifier.label()),
    }
}

fn section_name(p: Paradigm) -> &'static str {
    match p {
        Paradigm::Uncompressed => "Uncompressed",
        Paradigm::TwoStep => "Not Guided Graph Compression",
        Paradigm::Guided => "Guided Graph Compression",
    }
}

fn split_line(name: &str, graphs: &[Graph]) -> String {
    let positives = graphs.iter().filter(|g| g.label == 1).count();
    let nodes: usize = graphs.iter().map(Graph::num_nodes).sum();
    format!("{name},{},{positives},{:.4}\n", graphs.len(), nodes as f64 / graphs.len().max(1) as f64)
}

pub fn prepare(cfg: &PrepareConfig, out: &Path) -> Result<()> {
    let s = &cfg.source;
    let graphs = match s.kind {
        SourceKind::Synthetic => synth_dataset_sized(s.samples, s.separation, cfg.seed, s.min_nodes, s.max_nodes),
        SourceKind::Jets => {
            let jets = if s.path.extension().is_some_and(|e| e == "txt") {
                parse_jets_text(&std::fs::read_to_string(&s.path)?)?
            } else {
                read_jets(&mut BufReader::new(File::open(&s.path)?))?
            };
            log::info!("event=jets_loaded jets={}", jets.len());
            jets.iter().map(jet_to_graph).collect::<ggc::Result<Vec<_>>>()?
        }
    };
    let splits = split_and_subsample(&graphs, cfg.split.as_array(), cfg.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| graphs[i].clone()).collect::<Vec<Graph>>();
    let mut parts = [pick(&splits.train), pick(&splits.val), pick(&splits.test)];

    if s.kind == SourceKind::Jets && s.normalize {
        let stats = NormalizationStats::fit(&parts[0])?;
        for part in &mut parts {
            let mut ds = JetDataset::new(std::mem::take(part));
            ds.normalize(&stats);
            *part = ds.graphs;
        }
        write_text(&out.join("normalization.txt"), &stats.to_text())?;
    }

    let mut summary = String::from("split,graphs,positives,mean_nodes\n");
    for (name, part) in ["train", "val", "test"].iter().zip(&parts) {
        write_graphs(&out.join(format!("{name}.ggcd")), part)?;
        summary.push_str(&split_line(name, part));
        log::info!("event=split_written split={name} graphs={}", part.len());
    }
    write_text(&out.join("splits.csv"), &summary)
}

fn save_checkpoint(path: &Path, params: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params, None)?;
    w.flush()?;
    Ok(())
}

fn load_checkpoint(path: &Path, dst: &mut ParamStore) -> Result<()> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (src, _) = read_checkpoint(&mut BufReader::new(f))?;
    load_params(dst, &src).with_context(|| format!("loading {}", path.display()))?;
    Ok(())
}

fn record_summary(rec: &TrialRecord) -> String {
    let c = &rec.config;
    format!(
        "paradigm,autoencoder,classifier,best_epoch,epochs_run,val_auc\n{},{},{},{},{},{}\n",
        c.paradigm.label(),
        ae_key(c.autoencoder),
        classifier_key(c.classifier),
        rec.best_epoch,
        rec.final_phase().count(),
        rec.val_auc.map_or(String::new(), |a| format!("{a}"))
    )
}

pub fn train_cmd(file: &TrainFile, out: &Path) -> Result<()> {
    let tr = read_graphs(&file.data.train)?;
    let va = read_graphs(&file.data.val)?;
    log::info!("event=data_loaded train={} val={}", tr.len(), va.len());
    let outcome = train(&file.model, &tr, &va)?;
    let rec = &outcome.record;
    log::info!(
        "event=trained best_epoch={} val_auc={} secs={:.3}",
        rec.best_epoch,
        rec.val_auc.unwrap_or(f64::NAN),
        rec.wall_clock_secs
    );
    write_text(&out.join("epochs.csv"), &rec.epochs_csv())?;
    write_text(&out.join("summary.csv"), &record_summary(rec))?;
    write_text(&out.join(TRAIN_CONFIG_FILE), &toml::to_string(&file.model)?)?;
    if let Some(ae) = &outcome.pipeline.autoencoder {
        save_checkpoint(&out.join(AUTOENCODER_CKPT), &ae.params)?;
    }
    save_checkpoint(&out.join(CLASSIFIER_CKPT), outcome.pipeline.classifier.params())
}

/// Rebuilds the pipeline a `train` run saved.
fn load_run(run: &Path, input_dim: usize) -> Result<(TrainConfig, Pipeline)> {
    let path = run.join(TRAIN_CONFIG_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: TrainConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut pipe = Pipeline::init(&cfg, input_dim)?;
    if let Some(ae) = &mut pipe.autoencoder {
        load_checkpoint(&run.join(AUTOENCODER_CKPT), &mut ae.params)?;
    }
    load_checkpoint(&run.join(CLASSIFIER_CKPT), pipe.classifier.params_mut())?;
    Ok((cfg, pipe))
}

fn scores_csv(scores: &[f64], labels: &[u8]) -> String {
    let mut s = String::from("graph,label,score\n");
    for (i, (score, label)) in scores.iter().zip(labels).enumerate() {
        s.push_str(&format!("{i},{label},{score}\n"));
    }
    s
}

fn folds_csv(report: &ggc::eval::KFoldReport) -> String {
    let mut s = String::from("fold,size,auc\n");
    for (k, (auc, size)) in report.fold_aucs.iter().zip(&report.fold_sizes).enumerate() {
        s.push_str(&format!("{k},{size},{}\n", auc.map_or(String::new(), |a| format!("{a}"))));
    }
    s
}

pub fn evaluate(file: &EvaluateFile, out: &Path) -> Result<()> {
    let graphs = read_graphs(&file.data)?;
    let (cfg, pipe) = load_run(&file.run, input_dim(&graphs)?)?;
    let scores = pipe.scores(&graphs)?;
    let labels: Vec<u8> = graphs.iter().map(|g| g.label).collect();
    let curve = roc_auc(&scores, &labels)?;
    let report = kfold_test(&scores, &labels, file.folds, file.seed)?;
    log::info!(
        "event=evaluated graphs={} auc={:.6} fold_mean={:.6} fold_std={:.6}",
        graphs.len(),
        curve.auc,
        report.mean,
        report.std
    );
    let name = model_name(&cfg);
    write_text(&out.join("scores.csv"), &scores_csv(&scores, &labels))?;
    write_text(&out.join("roc.csv"), &roc_csv(&curve))?;
    write_text(&out.join("folds.csv"), &folds_csv(&report))?;
    let row = SummaryRow {
        section: section_name(cfg.paradigm).into(),
        model: name.clone(),
        auc_mean: report.mean,
        auc_std: report.std,
    };
    write_text(&out.join("summary.csv"), &summary_csv(&[row]))?;
    let title = format!("{} ({})", name, cfg.paradigm.label());
    write_text(&out.join("roc.svg"), &roc_svg(&title, &[(name, curve)]))
}

pub fn compress(file: &CompressFile, out: &Path) -> Result<()> {
    let graphs = read_graphs(&file.data)?;
    let dim = input_dim(&graphs)?;
    let ae: GraphAutoencoder = match &file.run {
        Some(run) => load_run(run, dim)?
            .1
            .autoencoder
            .ok_or_else(|| anyhow!("run {} has no autoencoder (uncompressed paradigm)", run.display()))?,
        None => {
            let cfg = TrainConfig {
                paradigm: Paradigm::TwoStep,
                autoencoder: file.autoencoder,
                seed: file.seed,
                encoder: file.encoder.clone(),
                ..Default::default()
            };
            Pipeline::init(&cfg, dim)?.autoencoder.expect("compressing paradigm builds an autoencoder")
        }
    };
    let latents: Vec<Graph> = graphs.par_iter().map(|g| ae.encode(g).map(|c| c.graph)).collect::<ggc::Result<_>>()?;
    let mut nodes = String::from("graph,nodes_in,nodes_out\n");
    for (i, (g, z)) in graphs.iter().zip(&latents).enumerate() {
        nodes.push_str(&format!("{i},{},{}\n", g.num_nodes(), z.num_nodes()));
    }
    let widest = latents.iter().map(Graph::num_nodes).max().unwrap_or(0);
    log::info!("event=compressed graphs={} widest_latent={widest} latent_dim={}", latents.len(), ae.latent_dim());
    write_graphs(&out.join("latent.ggcd"), &latents)?;
    write_text(&out.join("nodes.csv"), &nodes)
}

fn trial_row(i: usize, cfg: &TrainConfig, outcome: &std::result::Result<TrialRecord, String>) -> String {
    let (best, run, auc, status) = match outcome {
        Ok(r) => (
            r.best_epoch.to_string(),
            r.final_phase().count().to_string(),
            r.val_auc.map_or(String::new(), |a| format!("{a}")),
            "ok".to_string(),
        ),
        Err(e) => (String::new(), String::new(), String::new(), format!("\"{}\"", e.replace('"', "'"))),
    };
    format!(
        "{i},{},{},{},{},{best},{run},{auc},{status}\n",
        cfg.batch_size, cfg.learning_rate, cfg.layers, cfg.lambda
    )
}

pub fn search(file: &SearchFile, out: &Path) -> Result<()> {
    let tr = read_graphs(&file.data.train)?;
    let va = read_graphs(&file.data.val)?;
    let run = |cfg: &TrainConfig| {
        let r = train(cfg, &tr, &va).map(|o| o.record);
        match &r {
            Ok(rec) => log::info!(
                "event=trial batch_size={} learning_rate={} layers={} lambda={} val_auc={}",
                cfg.batch_size,
                cfg.learning_rate,
                cfg.layers,
                cfg.lambda,
                rec.val_auc.unwrap_or(f64::NAN)
            ),
            Err(e) => log::warn!("event=trial_failed error={:?}", e.to_string()),
        }
        r
    };
    let result = match file.mode {
        SearchPlan::Exhaustive => grid_search(&file.base, &file.space, SearchMode::Exhaustive, run),
        SearchPlan::Sequential => grid_search(&file.base, &file.space, SearchMode::Sequential, run),
        SearchPlan::Classical => classical_search(&file.base, &file.space, run),
    };

    let trials_dir = out.join("trials");
    std::fs::create_dir_all(&trials_dir)?;
    let mut table = String::from("trial,batch_size,learning_rate,layers,lambda,best_epoch,epochs_run,val_auc,status\n");
    for (i, t) in result.trials.iter().enumerate() {
        table.push_str(&trial_row(i, &t.config, &t.outcome));
        if let Ok(rec) = &t.outcome {
            write_text(&trials_dir.join(format!("{i:03}_epochs.csv")), &rec.epochs_csv())?;
        }
    }
    write_text(&out.join("trials.csv"), &table)?;
    let Some(best) = result.best else {
        bail!("all {} trials failed", result.trials.len());
    };
    log::info!("event=search_done trials={} best_trial={best}", result.trials.len());
    write_text(&out.join("best.toml"), &toml::to_string(&result.trials[best].config)?)
}

/// One row of the comparison table: a fully specified training run.
fn reproduce_rows(cfg: &ReproduceConfig) -> Vec<TrainConfig> {
    let base = TrainConfig { seed: cfg.seed, ..cfg.model.clone() };
    let mut rows = vec![TrainConfig { paradigm: Paradigm::Uncompressed, classifier: ClassifierKind::Gnn, ..base.clone() }];
    for paradigm in [Paradigm::TwoStep, Paradigm::Guided] {
        for &autoencoder in &cfg.autoencoders {
            for &classifier in &cfg.classifiers {
                rows.push(TrainConfig { paradigm, autoencoder, classifier, ..base.clone() });
            }
        }
    }
    rows
}

fn slug(cfg: &TrainConfig) -> String {
    match cfg.paradigm {
        Paradigm::Uncompressed => format!("uncompressed-{}", classifier_key(cfg.classifier)),
        p => format!("{}-{}-{}", p.label(), ae_key(cfg.autoencoder), classifier_key(cfg.classifier)),
    }
}

struct RowResult {
    cfg: TrainConfig,
    record: TrialRecord,
    curve: RocCurve,
    report: ggc::eval::KFoldReport,
}

pub fn reproduce(cfg: &ReproduceConfig, out: &Path) -> Result<()> {
    let data = synth_dataset_sized(cfg.samples, cfg.separation, cfg.seed, cfg.min_nodes, cfg.max_nodes);
    let s = split_and_subsample(&data, cfg.split.as_array(), cfg.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<Graph>>();
    let (tr, va, te) = (pick(&s.train), pick(&s.val), pick(&s.test));
    let labels: Vec<u8> = te.iter().map(|g| g.label).collect();
    let rows = reproduce_rows(cfg);
    log::info!("event=reproduce_start rows={} train={} val={} test={}", rows.len(), tr.len(), va.len(), te.len());

    let results: Vec<RowResult> = rows
        .into_par_iter()
        .map(|row| -> Result<RowResult> {
            let outcome = train(&row, &tr, &va).with_context(|| format!("row {}", slug(&row)))?;
            let scores = outcome.pipeline.scores(&te)?;
            let curve = roc_auc(&scores, &labels)?;
            let report = kfold_test(&scores, &labels, cfg.folds, cfg.seed)?;
            log::info!(
                "event=row_done row={} test_auc={:.4} fold_mean={:.4} fold_std={:.4}",
                slug(&row),
                curve.auc,
                report.mean,
                report.std
            );
            Ok(RowResult { cfg: row, record: outcome.record, curve, report })
        })
        .collect::<Result<_>>()?;

    let rows_dir = out.join("rows");
    let mut summary = Vec::new();
    for r in &results {
        let dir = rows_dir.join(slug(&r.cfg));
        std::fs::create_dir_all(&dir)?;
        write_text(&dir.join("epochs.csv"), &r.record.epochs_csv())?;
        write_text(&dir.join("roc.csv"), &roc_csv(&r.curve))?;
        write_text(&dir.join("folds.csv"), &folds_csv(&r.report))?;
        summary.push(SummaryRow {
            section: section_name(r.cfg.paradigm).into(),
            model: model_name(&r.cfg),
            auc_mean: r.report.mean,
            auc_std: r.report.std,
        });
    }
    write_text(&out.join("summary.csv"), &summary_csv(&summary))?;

    // One ROC figure per autoencoder: the uncompressed baseline plus both
    // paradigms for the classical and the strongest quantum classifier.
    let baseline = results.iter().find(|r| r.cfg.paradigm == Paradigm::Uncompressed);
    for &ae in &cfg.autoencoders {
        let mut curves: Vec<(String, RocCurve)> = baseline
            .map(|b| vec![(format!("Uncompressed {}", model_name(&b.cfg)), b.curve.clone())])
            .unwrap_or_default();
        for classifier in [ClassifierKind::Gnn, ClassifierKind::Qgnn2] {
            for r in results.iter().filter(|r| {
                r.cfg.paradigm != Paradigm::Uncompressed && r.cfg.autoencoder == ae && r.cfg.classifier == classifier
            }) {
                curves.push((format!("{} {}", r.cfg.paradigm.label(), model_name(&r.cfg)), r.curve.clone()));
            }
        }
        let title = format!("{} compression", ae.label());
        write_text(&out.join(format!("roc_{}.svg", ae_key(ae))), &roc_svg(&title, &curves))?;
    }
    Ok(())
}
