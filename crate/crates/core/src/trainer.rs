//! Training for the three paradigms and the hyperparameter searches.
//!
//! * `uncompressed`: the classifier sees the raw graphs.
//! * `two-step`: the autoencoder is fitted on reconstruction alone, frozen,
//!   and the classifier is fitted on the latent graphs it produces.
//! * `guided`: one loop minimises `(1 − λ)·L_R + λ·L_C`. The encoder gets
//!   gradient from both terms, the decoder from `L_R` only and the
//!   classifier from `L_C` only.
//!
//! Every phase runs at most `epochs` epochs, stops after `patience` epochs
//! without a strictly lower validation loss, and ends with the best epoch's
//! parameters restored. Per-graph forward/backward passes may run on the
//! rayon pool; gradients are summed in batch order, so results do not depend
//! on the number of threads.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::gae::{mse_on, AutoencoderKind, EncoderConfig, GraphAutoencoder};
use crate::gnn::{GcnClassifier, DEFAULT_HIDDEN};
use crate::graph::{Edge, Graph};
use crate::qgnn::{QgnnKind, QuantumClassifier, PROB_EPS};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    Uncompressed,
    TwoStep,
    Guided,
}

impl Paradigm {
    pub fn label(self) -> &'static str {
        match self {
            Paradigm::Uncompressed => "uncompressed",
            Paradigm::TwoStep => "two-step",
            Paradigm::Guided => "guided",
        }
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uncompressed" => Ok(Self::Uncompressed),
            "two-step" => Ok(Self::TwoStep),
            "guided" => Ok(Self::Guided),
            other => Err(format!("unknown paradigm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Gnn,
    Qgnn1,
    Qgnn2,
}

impl ClassifierKind {
    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::Gnn => "GNN",
            ClassifierKind::Qgnn1 => "QGNN1",
            ClassifierKind::Qgnn2 => "QGNN2",
        }
    }

    pub fn quantum(self) -> Option<QgnnKind> {
        match self {
            ClassifierKind::Gnn => None,
            ClassifierKind::Qgnn1 => Some(QgnnKind::Qgnn1),
            ClassifierKind::Qgnn2 => Some(QgnnKind::Qgnn2),
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gnn" => Ok(Self::Gnn),
            "qgnn1" => Ok(Self::Qgnn1),
            "qgnn2" => Ok(Self::Qgnn2),
            other => Err(format!("unknown classifier kind {other:?}")),
        }
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub paradigm: Paradigm,
    pub autoencoder: AutoencoderKind,
    pub classifier: ClassifierKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Circuit layers; quantum classifiers only.
    pub layers: usize,
    /// Classification weight; guided paradigm only.
    pub lambda: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Training graphs used for every phase except two-step autoencoder fitting.
    pub train_cap: usize,
    /// Hidden width of the classical classifier.
    pub hidden: usize,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::Guided,
            autoencoder: AutoencoderKind::Miagae,
            classifier: ClassifierKind::Gnn,
            batch_size: 32,
            learning_rate: 0.001,
            layers: 2,
            lambda: 0.5,
            epochs: 100,
            patience: 25,
            seed: 42,
            train_cap: 10_000,
            hidden: DEFAULT_HIDDEN,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, each naming its field.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate {} must be positive and finite", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            out.push(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.classifier.quantum().is_some() && self.layers == 0 {
            out.push("layers must be at least 1 for quantum classifiers".into());
        }
        if self.epochs == 0 {
            out.push("epochs must be at least 1".into());
        }
        if self.train_cap == 0 {
            out.push("train_cap must be at least 1".into());
        }
        if self.classifier == ClassifierKind::Gnn && self.hidden == 0 {
            out.push("hidden must be at least 1".into());
        }
        if self.paradigm != Paradigm::Uncompressed {
            out.extend(self.encoder.validate());
        }
        out
    }

    pub fn checked(self) -> Result<Self> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

/// `(1 − λ)·L_R + λ·L_C`.
pub fn guided_loss(l_r: f64, l_c: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    Ok((1.0 - lambda) * l_r + lambda * l_c)
}

fn guided_loss_on(tape: &mut Tape, l_r: Var, l_c: Var, lambda: f64) -> Result<Var> {
    let a = tape.scalar_mul(l_r, 1.0 - lambda);
    let b = tape.scalar_mul(l_c, lambda);
    tape.add(a, b)
}

/// The downstream classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Gcn(GcnClassifier),
    Quantum(QuantumClassifier),
}

impl Classifier {
    pub fn new<R: rand::Rng + ?Sized>(cfg: &TrainConfig, d_in: usize, rng: &mut R) -> Self {
        match cfg.classifier.quantum() {
            None => Classifier::Gcn(GcnClassifier::new(d_in, cfg.hidden, rng)),
            Some(kind) => Classifier::Quantum(QuantumClassifier::new(kind, cfg.layers, d_in, rng)),
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Classifier::Gcn(m) => &m.params,
            Classifier::Quantum(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Classifier::Gcn(m) => &mut m.params,
            Classifier::Quantum(m) => &mut m.params,
        }
    }

    /// `(score, clamped probability)`; the score is what ROC curves rank by.
    fn forward_on(&self, tape: &mut Tape, params: &[Var], x: Var, edges: &[Edge]) -> Result<(Var, Var)> {
        let (score, prob) = match self {
            Classifier::Gcn(m) => {
                let p = m.forward_on(tape, params, x, edges)?;
                (p, p)
            }
            Classifier::Quantum(m) => {
                let f = m.forward_on(tape, params, x, edges)?;
                (f, tape.affine(f, 0.5, 0.5))
            }
        };
        Ok((score, tape.clamp(prob, PROB_EPS, 1.0 - PROB_EPS)))
    }

    /// Class-1 probability for the GCN, `⟨Z_0⟩` for quantum models.
    pub fn score(&self, g: &Graph) -> Result<f64> {
        match self {
            Classifier::Gcn(m) => m.predict(g),
            Classifier::Quantum(m) => Ok(m.classify(g)?.score),
        }
    }
}

/// A trained model: optional frozen encoder in front of a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub autoencoder: Option<GraphAutoencoder>,
    pub classifier: Classifier,
}

impl Pipeline {
    /// Fresh, untrained models for `cfg` on `input_dim`-wide graphs.
    pub fn init(cfg: &TrainConfig, input_dim: usize) -> Result<Self> {
        let autoencoder = match cfg.paradigm {
            Paradigm::Uncompressed => None,
            _ => Some(GraphAutoencoder::new(cfg.autoencoder, input_dim, cfg.encoder.clone(), &mut stream(cfg.seed, 1))?),
        };
        let d = autoencoder.as_ref().map_or(input_dim, GraphAutoencoder::latent_dim);
        let classifier = Classifier::new(cfg, d, &mut stream(cfg.seed, 2));
        Ok(Self { autoencoder, classifier })
    }

    pub fn score(&self, g: &Graph) -> Result<f64> {
        match &self.autoencoder {
            Some(ae) => self.classifier.score(&ae.encode(g)?.graph),
            None => self.classifier.score(g),
        }
    }

    /// Scores in input order.
    pub fn scores(&self, graphs: &[Graph]) -> Result<Vec<f64>> {
        graphs.par_iter().map(|g| self.score(g)).collect()
    }
}

/// Overwrites `dst` with tensors of the same names and shapes from `src`.
pub fn load_params(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Format(format!("checkpoint holds {} tensors, model has {}", src.len(), dst.len())));
    }
    for slot in 0..dst.len() {
        let name = dst.name(slot).to_string();
        let j = src.index_of(&name).ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name:?}")))?;
        let v = src.get(j);
        if v.shape() != dst.get(slot).shape() {
            return Err(Error::Format(format!("tensor {name:?} has shape {:?}, expected {:?}", v.shape(), dst.get(slot).shape())));
        }
        *dst.get_mut(slot) = v.clone();
    }
    Ok(())
}

/// Latent graphs from a frozen encoder, in input order.
pub fn extract_latents(ae: &GraphAutoencoder, graphs: &[Graph]) -> Result<Vec<Graph>> {
    graphs.par_iter().map(|g| ae.encode(g).map(|c| c.graph)).collect()
}

/// One row of the per-epoch log. Loss terms that a phase does not compute are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub phase: &'static str,
    /// 1-based.
    pub epoch: usize,
    pub train_recon: Option<f64>,
    pub train_class: Option<f64>,
    pub train_total: f64,
    pub val_recon: Option<f64>,
    pub val_class: Option<f64>,
    pub val_total: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Best epoch of the final phase (1-based).
    pub best_epoch: usize,
    /// Validation AUC at that epoch.
    pub val_auc: Option<f64>,
    pub wall_clock_secs: f64,
}

pub const EPOCH_CSV_HEADER: &str =
    "phase,epoch,train_recon,train_class,train_total,val_recon,val_class,val_total,val_auc";

impl TrialRecord {
    /// One row per epoch. Wall-clock time is left out so reruns compare byte for byte.
    pub fn epochs_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from(EPOCH_CSV_HEADER);
        s.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                e.phase,
                e.epoch,
                opt(e.train_recon),
                opt(e.train_class),
                e.train_total,
                opt(e.val_recon),
                opt(e.val_class),
                e.val_total,
                opt(e.val_auc)
            );
        }
        s
    }

    /// Final-phase epochs only.
    pub fn final_phase(&self) -> impl Iterator<Item = &EpochRecord> {
        let last = self.epochs.last().map(|e| e.phase);
        self.epochs.iter().filter(move |e| Some(e.phase) == last)
    }
}

pub struct TrainOutcome {
    pub pipeline: Pipeline,
    pub record: TrialRecord,
}

#[derive(Clone, Copy)]
enum Phase {
    Autoencoder,
    Classifier,
    Guided(f64),
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Autoencoder => "autoencoder",
            Phase::Classifier => "classifier",
            Phase::Guided(_) => "guided",
        }
    }
}

struct GraphPass {
    recon: Option<f64>,
    class: Option<f64>,
    total: f64,
    score: Option<f64>,
    ae_grads: Vec<Matrix>,
    clf_grads: Vec<Matrix>,
}

fn run_graph(phase: Phase, ae: Option<&GraphAutoencoder>, clf: Option<&Classifier>, g: &Graph, train: bool) -> Result<GraphPass> {
    let mut tape = Tape::new();
    let bind = |store: &ParamStore, tape: &mut Tape| if train { store.bind(tape) } else { store.bind_frozen(tape) };
    let pa = ae.map(|m| bind(&m.params, &mut tape)).unwrap_or_default();
    let pc = clf.map(|m| bind(m.params(), &mut tape)).unwrap_or_default();
    let label = [f64::from(g.label)];
    let x = tape.constant(g.features.clone());

    let (recon, class, total, score) = match phase {
        Phase::Autoencoder => {
            let ae = ae.expect("autoencoder phase without autoencoder");
            let pass = ae.encode_on(&mut tape, &pa, x, g)?;
            let out = ae.decode_on(&mut tape, &pa, &pass)?;
            let l_r = mse_on(&mut tape, out, x)?;
            (Some(l_r), None, l_r, None)
        }
        Phase::Classifier => {
            let clf = clf.expect("classifier phase without classifier");
            let (score, prob) = clf.forward_on(&mut tape, &pc, x, &g.edges)?;
            let l_c = tape.bce(prob, &label)?;
            (None, Some(l_c), l_c, Some(score))
        }
        Phase::Guided(lambda) => {
            let (ae, clf) = (ae.expect("guided without autoencoder"), clf.expect("guided without classifier"));
            let pass = ae.encode_on(&mut tape, &pa, x, g)?;
            let (score, prob) = clf.forward_on(&mut tape, &pc, pass.latent, &pass.latent_edges)?;
            let l_c = tape.bce(prob, &label)?;
            let out = ae.decode_on(&mut tape, &pa, &pass)?;
            let l_r = mse_on(&mut tape, out, x)?;
            let total = guided_loss_on(&mut tape, l_r, l_c, lambda)?;
            (Some(l_r), Some(l_c), total, Some(score))
        }
    };
    let value = |v: Var| tape.value(v).item();
    let mut out = GraphPass {
        recon: recon.map(value),
        class: class.map(value),
        total: value(total),
        score: score.map(value),
        ae_grads: Vec::new(),
        clf_grads: Vec::new(),
    };
    if train && out.total.is_finite() {
        let grads = tape.backward(total)?;
        out.ae_grads = grads.collect(&tape, &pa);
        out.clf_grads = grads.collect(&tape, &pc);
    }
    Ok(out)
}

#[derive(Default)]
struct Totals {
    recon: f64,
    class: f64,
    total: f64,
    count: usize,
}

impl Totals {
    fn add(&mut self, p: &GraphPass) {
        self.recon += p.recon.unwrap_or(0.0);
        self.class += p.class.unwrap_or(0.0);
        self.total += p.total;
        self.count += 1;
    }

    fn means(&self, phase: Phase) -> (Option<f64>, Option<f64>, f64) {
        let n = self.count.max(1) as f64;
        let (has_r, has_c) = match phase {
            Phase::Autoencoder => (true, false),
            Phase::Classifier => (false, true),
            Phase::Guided(_) => (true, true),
        };
        (has_r.then(|| self.recon / n), has_c.then(|| self.class / n), self.total / n)
    }
}

fn non_finite(phase: Phase, epoch: usize, batch: &[&Graph], ids: &[usize], passes: &[GraphPass]) -> Error {
    let mut s = format!("phase={} epoch={epoch} batch:", phase.name());
    for ((g, id), p) in batch.iter().zip(ids).zip(passes) {
        let _ = write!(
            s,
            " [graph={id} label={} nodes={} edges={} finite_features={} loss={} finite_grads={}]",
            g.label,
            g.num_nodes(),
            g.edges.len(),
            g.features.is_finite(),
            p.total,
            p.ae_grads.iter().chain(&p.clf_grads).all(Matrix::is_finite)
        );
    }
    Error::NonFiniteLoss(s)
}

/// ChaCha stream `stream` of `seed`.
fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn accumulate(sum: &mut Vec<Matrix>, add: &[Matrix]) {
    if sum.is_empty() {
        *sum = add.to_vec();
    } else {
        for (s, a) in sum.iter_mut().zip(add) {
            s.add_assign(a);
        }
    }
}

fn evaluate(phase: Phase, ae: Option<&GraphAutoencoder>, clf: Option<&Classifier>, graphs: &[&Graph]) -> Result<(Totals, Option<f64>)> {
    let passes: Vec<GraphPass> = graphs.par_iter().map(|g| run_graph(phase, ae, clf, g, false)).collect::<Result<_>>()?;
    let mut t = Totals::default();
    passes.iter().for_each(|p| t.add(p));
    let scores: Option<Vec<f64>> = passes.iter().map(|p| p.score).collect();
    let auc = scores.and_then(|s| {
        let labels: Vec<u8> = graphs.iter().map(|g| g.label).collect();
        roc_auc(&s, &labels).ok().map(|c| c.auc)
    });
    Ok((t, auc))
}

/// Fits the models that `phase` trains and restores their best epoch. Returns the best epoch.
fn fit(
    phase: Phase,
    cfg: &TrainConfig,
    ae: &mut Option<GraphAutoencoder>,
    clf: &mut Option<Classifier>,
    train: &[&Graph],
    val: &[&Graph],
    log: &mut Vec<EpochRecord>,
) -> Result<usize> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientSamples("training and validation sets must be nonempty".into()));
    }
    let (train_ae, train_clf) = match phase {
        Phase::Autoencoder => (true, false),
        Phase::Classifier => (false, true),
        Phase::Guided(_) => (true, true),
    };
    let mut ae_opt = ae.as_ref().filter(|_| train_ae).map(|m| Adam::new(&m.params, cfg.learning_rate));
    let mut clf_opt = clf.as_ref().filter(|_| train_clf).map(|m| Adam::new(m.params(), cfg.learning_rate));

    let mut best = (f64::INFINITY, 0usize);
    let mut best_params: (Option<ParamStore>, Option<ParamStore>) = (None, None);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, epoch as u64));
        let mut totals = Totals::default();
        for ids in order.chunks(cfg.batch_size) {
            let batch: Vec<&Graph> = ids.iter().map(|&i| train[i]).collect();
            let passes: Vec<GraphPass> =
                batch.par_iter().map(|g| run_graph(phase, ae.as_ref(), clf.as_ref(), g, true)).collect::<Result<_>>()?;
            let finite = |gs: &[Matrix]| gs.iter().all(Matrix::is_finite);
            if passes.iter().any(|p| !p.total.is_finite() || !finite(&p.ae_grads) || !finite(&p.clf_grads)) {
                return Err(non_finite(phase, epoch, &batch, ids, &passes));
            }
            let (mut ga, mut gc) = (Vec::new(), Vec::new());
            for p in &passes {
                totals.add(p);
                accumulate(&mut ga, &p.ae_grads);
                accumulate(&mut gc, &p.clf_grads);
            }
            let scale = 1.0 / passes.len() as f64;
            if let (Some(opt), Some(m)) = (ae_opt.as_mut(), ae.as_mut()) {
                ga.iter_mut().for_each(|g| *g = g.scale(scale));
                opt.step(&mut m.params, &ga)?;
            }
            if let (Some(opt), Some(m)) = (clf_opt.as_mut(), clf.as_mut()) {
                gc.iter_mut().for_each(|g| *g = g.scale(scale));
                opt.step(m.params_mut(), &gc)?;
            }
        }
        let (tr_r, tr_c, tr_t) = totals.means(phase);
        let (vt, val_auc) = evaluate(phase, ae.as_ref(), clf.as_ref(), val)?;
        let (va_r, va_c, va_t) = vt.means(phase);
        if !va_t.is_finite() {
            return Err(Error::NonFiniteLoss(format!("phase={} epoch={epoch} validation loss {va_t}", phase.name())));
        }
        log::debug!("phase={} epoch={epoch} train_loss={tr_t} val_loss={va_t} val_auc={val_auc:?}", phase.name());
        log.push(EpochRecord {
            phase: phase.name(),
            epoch,
            train_recon: tr_r,
            train_class: tr_c,
            train_total: tr_t,
            val_recon: va_r,
            val_class: va_c,
            val_total: va_t,
            val_auc,
        });
        if va_t < best.0 {
            best = (va_t, epoch);
            best_params = (
                ae.as_ref().filter(|_| train_ae).map(|m| m.params.clone()),
                clf.as_ref().filter(|_| train_clf).map(|m| m.params().clone()),
            );
        } else if epoch - best.1 >= cfg.patience {
            log::info!("phase={} early_stop_epoch={epoch} best_epoch={}", phase.name(), best.1);
            break;
        }
    }
    if let (Some(p), Some(m)) = (best_params.0, ae.as_mut()) {
        m.params = p;
    }
    if let (Some(p), Some(m)) = (best_params.1, clf.as_mut()) {
        *m.params_mut() = p;
    }
    Ok(best.1)
}

/// Trains `cfg` on `train`, early-stopping on `val`.
pub fn train(cfg: &TrainConfig, train: &[Graph], val: &[Graph]) -> Result<TrainOutcome> {
    let cfg = cfg.clone().checked()?;
    let start = Instant::now();
    let input_dim = train
        .first()
        .map(Graph::feature_dim)
        .ok_or_else(|| Error::InsufficientSamples("empty training set".into()))?;
    let Pipeline { autoencoder, classifier } = Pipeline::init(&cfg, input_dim)?;
    let (mut ae, mut clf) = (autoencoder, Some(classifier));
    let mut log = Vec::new();

    let capped: Vec<&Graph> = train.iter().take(cfg.train_cap).collect();
    let val_refs: Vec<&Graph> = val.iter().collect();
    let best_epoch = match cfg.paradigm {
        Paradigm::Uncompressed => fit(Phase::Classifier, &cfg, &mut None, &mut clf, &capped, &val_refs, &mut log)?,
        Paradigm::Guided => fit(Phase::Guided(cfg.lambda), &cfg, &mut ae, &mut clf, &capped, &val_refs, &mut log)?,
        Paradigm::TwoStep => {
            let all: Vec<&Graph> = train.iter().collect();
            fit(Phase::Autoencoder, &cfg, &mut ae, &mut None, &all, &val_refs, &mut log)?;
            let frozen = ae.as_ref().expect("two-step has an autoencoder");
            let lat_train = extract_latents(frozen, &train[..capped.len()])?;
            let lat_val = extract_latents(frozen, val)?;
            let (lt, lv): (Vec<&Graph>, Vec<&Graph>) = (lat_train.iter().collect(), lat_val.iter().collect());
            fit(Phase::Classifier, &cfg, &mut None, &mut clf, &lt, &lv, &mut log)?
        }
    };
    let val_auc = log.iter().rev().find(|e| e.epoch == best_epoch).and_then(|e| e.val_auc);
    let record = TrialRecord { config: cfg, epochs: log, best_epoch, val_auc, wall_clock_secs: start.elapsed().as_secs_f64() };
    Ok(TrainOutcome { pipeline: Pipeline { autoencoder: ae, classifier: clf.expect("classifier present") }, record })
}

/// Values tried along each hyperparameter axis; empty axes are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub batch_size: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub layers: Vec<usize>,
    pub lambda: Vec<f64>,
}

impl SearchSpace {
    /// Default grid: 7 batch sizes, 3 learning rates, 3 layer counts, 11 weights.
    pub fn standard() -> Self {
        Self {
            batch_size: vec![32, 64, 128, 256, 512, 1024, 2048],
            learning_rate: vec![0.001, 0.01, 0.1],
            layers: vec![2, 4, 6],
            lambda: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
        }
    }

    fn axes(&self) -> Vec<Axis> {
        let mut out = Vec::new();
        if !self.batch_size.is_empty() {
            out.push(Axis::BatchSize);
        }
        if !self.learning_rate.is_empty() {
            out.push(Axis::LearningRate);
        }
        if !self.layers.is_empty() {
            out.push(Axis::Layers);
        }
        if !self.lambda.is_empty() {
            out.push(Axis::Lambda);
        }
        out
    }

    fn values(&self, axis: Axis, base: &TrainConfig) -> Vec<TrainConfig> {
        let with = |f: &dyn Fn(&mut TrainConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match axis {
            Axis::BatchSize => self.batch_size.iter().map(|&v| with(&|c| c.batch_size = v)).collect(),
            Axis::LearningRate => self.learning_rate.iter().map(|&v| with(&|c| c.learning_rate = v)).collect(),
            Axis::Layers => self.layers.iter().map(|&v| with(&|c| c.layers = v)).collect(),
            Axis::Lambda => self.lambda.iter().map(|&v| with(&|c| c.lambda = v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    BatchSize,
    LearningRate,
    Layers,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Cartesian product of all axes.
    Exhaustive,
    /// One axis at a time (batch size, learning rate, layers, λ), each with the earlier bests fixed.
    Sequential,
}

impl FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "sequential" => Ok(Self::Sequential),
            other => Err(format!("unknown search mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchTrial {
    pub config: TrainConfig,
    pub outcome: std::result::Result<TrialRecord, String>,
}

impl SearchTrial {
    pub fn val_auc(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|r| r.val_auc)
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub trials: Vec<SearchTrial>,
    /// Index into `trials` of the highest validation AUC; ties go to the earlier trial.
    pub best: Option<usize>,
}

impl SearchResult {
    pub fn best_config(&self) -> Option<&TrainConfig> {
        self.best.map(|i| &self.trials[i].config)
    }
}

/// Every configuration an exhaustive search visits, batch size outermost.
pub fn cartesian(base: &TrainConfig, space: &SearchSpace) -> Vec<TrainConfig> {
    let mut configs = vec![base.clone()];
    for axis in space.axes() {
        configs = configs.iter().flat_map(|c| space.values(axis, c)).collect();
    }
    configs
}

fn best_index(trials: &[SearchTrial]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in trials.iter().enumerate() {
        if let Some(a) = t.val_auc() {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn run_stage<F>(configs: Vec<TrainConfig>, run: &F) -> Vec<SearchTrial>
where
    F: Fn(&TrainConfig) -> Result<TrialRecord> + Sync,
{
    configs
        .into_par_iter()
        .map(|config| {
            let outcome = run(&config).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("trial_failed error={e:?}");
            }
            SearchTrial { config, outcome }
        })
        .collect()
}

/// Runs `run` over the space. Trials within a stage may run concurrently;
/// their order in the result is fixed by the space alone.
pub fn grid_search<F>(base: &TrainConfig, space: &SearchSpace, mode: SearchMode, run: F) -> SearchResult
where
    F: Fn(&TrainConfig) -> Result<TrialRecord> + Sync,
{
    let mut trials = Vec::new();
    match mode {
        SearchMode::Exhaustive => trials = run_stage(cartesian(base, space), &run),
        SearchMode::Sequential => {
            let mut current = base.clone();
            for axis in space.axes() {
                let stage = run_stage(space.values(axis, &current), &run);
                if let Some(i) = best_index(&stage) {
                    current = stage[i].config.clone();
                }
                trials.extend(stage);
            }
        }
    }
    let best = best_index(&trials);
    SearchResult { trials, best }
}

/// Exhaustive over batch size × learning rate at the base λ, then λ alone with those fixed.
pub fn classical_search<F>(base: &TrainConfig, space: &SearchSpace, run: F) -> SearchResult
where
    F: Fn(&TrainConfig) -> Result<TrialRecord> + Sync,
{
    let first = SearchSpace { batch_size: space.batch_size.clone(), learning_rate: space.learning_rate.clone(), ..Default::default() };
    let mut result = grid_search(base, &first, SearchMode::Exhaustive, &run);
    if !space.lambda.is_empty() {
        let pick = result.best_config().cloned().unwrap_or_else(|| base.clone());
        let second = SearchSpace { lambda: space.lambda.clone(), ..Default::default() };
        result.trials.extend(grid_search(&pick, &second, SearchMode::Exhaustive, &run).trials);
        result.best = best_index(&result.trials);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetdata::synth_dataset;

    #[test]
    fn guided_loss_limits() {
        assert_eq!(guided_loss(0.3, 0.9, 0.0).unwrap(), 0.3);
        assert_eq!(guided_loss(0.3, 0.9, 1.0).unwrap(), 0.9);
        assert!((guided_loss(0.2, 0.6, 0.5).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(guided_loss(0.2, 0.6, 1.5), Err(Error::LambdaOutOfRange(_))));
        assert!(guided_loss(0.2, 0.6, -0.1).is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let cfg = TrainConfig { lambda: 2.0, batch_size: 0, learning_rate: -1.0, ..Default::default() };
        let v = cfg.validate();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v.iter().any(|s| s.starts_with("lambda")));
        assert!(v.iter().any(|s| s.starts_with("batch_size")));
    }

    #[test]
    fn search_trial_counts() {
        let base = TrainConfig::default();
        let space = SearchSpace { batch_size: vec![32, 64], learning_rate: vec![0.01, 0.1], ..Default::default() };
        assert_eq!(cartesian(&base, &space).len(), 4);
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let fake = |c: &TrainConfig| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(TrialRecord {
                config: c.clone(),
                epochs: vec![],
                best_epoch: 1,
                val_auc: Some(c.learning_rate),
                wall_clock_secs: 0.0,
            })
        };
        let r = grid_search(&base, &SearchSpace::standard(), SearchMode::Sequential, fake);
        assert_eq!(r.trials.len(), 24);
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 24);
        // All batch sizes tie, so the earliest (32) is kept; lr 0.1 wins its axis.
        let best = r.best_config().unwrap();
        assert_eq!((best.batch_size, best.learning_rate), (32, 0.1));
        assert_eq!(r.best, Some(9));
    }

    #[test]
    fn standard_lambda_grid() {
        let l = SearchSpace::standard().lambda;
        assert_eq!(l.len(), 11);
        assert_eq!((l[0], l[3], l[10]), (0.0, 0.3, 1.0));
    }

    #[test]
    fn tiny_two_step_run() {
        let data = synth_dataset(24, 1.0, 3);
        let cfg = TrainConfig { paradigm: Paradigm::TwoStep, epochs: 2, batch_size: 8, ..Default::default() };
        let out = train(&cfg, &data[..16], &data[16..]).unwrap();
        let phases: Vec<&str> = out.record.epochs.iter().map(|e| e.phase).collect();
        assert_eq!(phases, ["autoencoder", "autoencoder", "classifier", "classifier"]);
        assert!(out.record.epochs_csv().lines().count() == 5);
        let s = out.pipeline.scores(&data[16..]).unwrap();
        assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
