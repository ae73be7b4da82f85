//! The split-learning training loop.
//!
//! Parties compute embeddings from their feature slices, the label owner
//! concatenates them, computes the loss, and returns per-party gradients
//! after the defense pipeline has run. The top model always trains on
//! true gradients; only what parties receive is defended.

use std::cell::RefCell;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::defense::{self, DefenseStack, LadistillConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{self, Metric};
use crate::nn::{self, ForwardTrace, MlpModel, SgdConfig};

/// Who touched a value, for the access-audit shim.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Actor {
    Owner,
    Party(usize),
    /// The adversary's inference head (attack-side training).
    AttackHead,
    /// Experimenter-side measurement; not visible to any participant.
    Scoring,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AccessEvent {
    FeatureRead { actor: Actor, cols: Vec<usize> },
    LabelRead { actor: Actor, rows: Vec<usize> },
    GradientDelivery { party: usize },
}

/// Records every feature/label access routed through the session, so
/// tests can assert the protocol's isolation guarantees.
#[derive(Clone, Debug, Default)]
pub struct AccessAudit {
    pub events: Vec<AccessEvent>,
}

/// How the label owner turns logits into a loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy over `C` logits.
    SoftmaxCe,
    /// Binary cross-entropy on a single logit.
    Logistic,
}

/// One feature-holding participant.
#[derive(Clone, Debug)]
pub struct Party {
    pub id: usize,
    pub bottom: MlpModel,
    pub feature_cols: Vec<usize>,
    pub is_adversary: bool,
    /// Gradient amplification factor; 1 means honest.
    pub active_alpha: f64,
}

impl Party {
    pub fn new(id: usize, bottom: MlpModel, feature_cols: Vec<usize>) -> Self {
        Party {
            id,
            bottom,
            feature_cols,
            is_adversary: false,
            active_alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_cols.is_empty() {
            return Err(Error::config(format!("party {} holds no features", self.id)));
        }
        if self.bottom.input_dim() != self.feature_cols.len() {
            return Err(Error::shape(format!(
                "party {}: bottom model expects {} inputs but the slice has {} columns",
                self.id,
                self.bottom.input_dim(),
                self.feature_cols.len()
            )));
        }
        if !(self.active_alpha >= 1.0) {
            return Err(Error::config(format!(
                "party {}: active_alpha must be >= 1, got {}",
                self.id, self.active_alpha
            )));
        }
        if self.active_alpha > 1.0 && !self.is_adversary {
            return Err(Error::config(format!(
                "party {}: active_alpha > 1 requires the adversary flag",
                self.id
            )));
        }
        Ok(())
    }
}

/// The label holder: top model, hard labels, and (optionally) the
/// anonymized soft labels substituted on the label path.
#[derive(Clone, Debug)]
pub struct LabelOwner {
    pub top: MlpModel,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub loss: LossKind,
    pub label_transform: Option<Matrix>,
}

impl LabelOwner {
    pub fn new(top: MlpModel, labels: Vec<usize>, n_classes: usize, loss: LossKind) -> Self {
        LabelOwner {
            top,
            labels,
            n_classes,
            loss,
            label_transform: None,
        }
    }
}

/// Everything exchanged for one mini-batch. `forward_round` fills the
/// upward direction; `backward_round` completes the downward one.
#[derive(Clone, Debug)]
pub struct BatchExchange {
    pub batch_rows: Vec<usize>,
    /// Per-party embeddings `o_k`.
    pub embeddings: Vec<Matrix>,
    /// Per-party returned gradients; empty until the backward round ran.
    pub returned_grads: Vec<Matrix>,
    pub loss: f64,
    /// Outlier flags per party; empty until the backward round ran.
    pub geno_flags: Vec<bool>,
    grad_logits: Matrix,
    party_traces: Vec<ForwardTrace>,
    top_trace: ForwardTrace,
    completed: bool,
}

impl BatchExchange {
    pub fn is_complete(&self) -> bool {
        self.completed
    }
}

/// Per-epoch record of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub task_metric: f64,
    pub seconds: f64,
}

/// One training run: parties, label owner, defense stack, optimizer
/// state, and the seeded RNG that makes it reproducible.
#[derive(Clone, Debug)]
pub struct VflSession {
    pub parties: Vec<Party>,
    pub owner: LabelOwner,
    pub defense: DefenseStack,
    pub sgd: SgdConfig,
    pub metric: Metric,
    pub epoch_log: Vec<EpochRecord>,
    features: Matrix,
    rng: ChaCha8Rng,
    audit: Option<RefCell<AccessAudit>>,
}

impl VflSession {
    pub fn new(
        parties: Vec<Party>,
        owner: LabelOwner,
        defense: DefenseStack,
        sgd: SgdConfig,
        features: Matrix,
        metric: Metric,
    ) -> Result<Self> {
        sgd.validate()?;
        if parties.is_empty() {
            return Err(Error::config("session needs at least one party"));
        }
        for party in &parties {
            party.validate()?;
        }
        if parties.iter().filter(|p| p.is_adversary).count() > 1 {
            return Err(Error::config("at most one adversarial party per session"));
        }

        // Slices must disjointly cover the feature columns.
        let d = features.cols();
        let mut seen = vec![false; d];
        for party in &parties {
            for &c in &party.feature_cols {
                if c >= d {
                    return Err(Error::validation(format!(
                        "party {}: column {c} out of range for {d} features",
                        party.id
                    )));
                }
                if seen[c] {
                    return Err(Error::validation(format!(
                        "column {c} assigned to more than one party"
                    )));
                }
                seen[c] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|v| !v) {
            return Err(Error::validation(format!(
                "column {missing} not assigned to any party"
            )));
        }

        let concat_width: usize = parties.iter().map(|p| p.bottom.output_dim()).sum();
        if owner.top.input_dim() != concat_width {
            return Err(Error::shape(format!(
                "top model expects {} inputs but parties produce {} embedding columns",
                owner.top.input_dim(),
                concat_width
            )));
        }
        match owner.loss {
            LossKind::SoftmaxCe => {
                if owner.top.output_dim() != owner.n_classes {
                    return Err(Error::shape(format!(
                        "top model emits {} logits for {} classes",
                        owner.top.output_dim(),
                        owner.n_classes
                    )));
                }
            }
            LossKind::Logistic => {
                if owner.top.output_dim() != 1 || owner.n_classes != 2 {
                    return Err(Error::config(
                        "logistic loss needs a single-logit top model and a binary task"
                            .to_string(),
                    ));
                }
            }
        }
        if owner.labels.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} feature rows",
                owner.labels.len(),
                features.rows()
            )));
        }
        if let Some(bad) = owner.labels.iter().find(|&&c| c >= owner.n_classes) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {} classes",
                owner.n_classes
            )));
        }
        if let Some(transform) = &owner.label_transform {
            validate_label_transform(transform, owner.labels.len(), owner.n_classes)?;
        }

        let rng = ChaCha8Rng::seed_from_u64(sgd.seed);
        Ok(VflSession {
            parties,
            owner,
            defense,
            sgd,
            metric,
            epoch_log: Vec::new(),
            features,
            rng,
            audit: None,
        })
    }

    #[inline]
    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.owner.n_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn adversary_index(&self) -> Option<usize> {
        self.parties.iter().position(|p| p.is_adversary)
    }

    /// Column offset of party `k`'s embedding block in the concatenated
    /// top-model input.
    pub fn embedding_offset(&self, party: usize) -> usize {
        self.parties[..party]
            .iter()
            .map(|p| p.bottom.output_dim())
            .sum()
    }

    pub fn enable_audit(&mut self) {
        self.audit = Some(RefCell::new(AccessAudit::default()));
    }

    pub fn take_audit(&mut self) -> Option<AccessAudit> {
        self.audit.take().map(|cell| cell.into_inner())
    }

    pub(crate) fn record_access(&self, event: AccessEvent) {
        if let Some(audit) = &self.audit {
            audit.borrow_mut().events.push(event);
        }
    }

    /// The view party `k` legitimately holds: its own columns of `x`.
    pub(crate) fn party_slice(&self, x: &Matrix, party: usize) -> Matrix {
        let cols = &self.parties[party].feature_cols;
        self.record_access(AccessEvent::FeatureRead {
            actor: Actor::Party(party),
            cols: cols.clone(),
        });
        x.select_cols(cols)
    }

    /// Training targets for a batch: anonymized soft labels when the
    /// label transform is installed, otherwise the hard labels.
    fn batch_targets(&self, rows: &[usize]) -> Result<Matrix> {
        self.record_access(AccessEvent::LabelRead {
            actor: Actor::Owner,
            rows: rows.to_vec(),
        });
        match &self.owner.label_transform {
            Some(transform) => Ok(transform.select_rows(rows)),
            None => {
                let labels: Vec<usize> = rows.iter().map(|&r| self.owner.labels[r]).collect();
                nn::one_hot(&labels, self.owner.n_classes)
            }
        }
    }

    /// Upward half of one batch: embeddings, concatenation, loss.
    pub fn forward_round(&self, batch_rows: &[usize]) -> Result<BatchExchange> {
        if batch_rows.is_empty() {
            return Err(Error::validation("empty batch".to_string()));
        }
        if let Some(&bad) = batch_rows.iter().find(|&&r| r >= self.n_samples()) {
            return Err(Error::validation(format!(
                "batch row {bad} out of range for {} samples",
                self.n_samples()
            )));
        }
        let batch_x = self.features.select_rows(batch_rows);
        let mut embeddings = Vec::with_capacity(self.parties.len());
        let mut party_traces = Vec::with_capacity(self.parties.len());
        for k in 0..self.parties.len() {
            let xk = self.party_slice(&batch_x, k);
            let (ok, trace) = self.parties[k].bottom.forward(&xk)?;
            embeddings.push(ok);
            party_traces.push(trace);
        }
        let concat = Matrix::hstack(&embeddings.iter().collect::<Vec<_>>())?;
        let (logits, top_trace) = self.owner.top.forward(&concat)?;
        let targets = self.batch_targets(batch_rows)?;
        let (loss, grad_logits) = match self.owner.loss {
            LossKind::SoftmaxCe => nn::cross_entropy_soft(&logits, &targets)?,
            LossKind::Logistic => {
                let probs: Vec<f64> = (0..targets.rows()).map(|r| targets.get(r, 1)).collect();
                nn::logistic_cross_entropy(&logits, &probs)?
            }
        };
        Ok(BatchExchange {
            batch_rows: batch_rows.to_vec(),
            embeddings,
            returned_grads: Vec::new(),
            loss,
            geno_flags: Vec::new(),
            grad_logits,
            party_traces,
            top_trace,
            completed: false,
        })
    }

    /// Downward half: true gradients per party, outlier screening, the
    /// gradient defense, and all model updates. The top model steps on
    /// true gradients; each party steps on what it was returned, the
    /// adversary scaling its parameter gradients by its amplification
    /// factor.
    pub fn backward_round(&mut self, mut exchange: BatchExchange) -> Result<BatchExchange> {
        if exchange.completed {
            return Err(Error::state(
                "backward_round called twice on one exchange".to_string(),
            ));
        }
        let batch_len = exchange.batch_rows.len();
        let (top_grads, d_concat) = self
            .owner
            .top
            .backward(&exchange.top_trace, &exchange.grad_logits)?;

        // Split the concatenated gradient back into per-party blocks.
        let mut true_grads = Vec::with_capacity(self.parties.len());
        let mut offset = 0;
        for party in &self.parties {
            let width = party.bottom.output_dim();
            let cols: Vec<usize> = (offset..offset + width).collect();
            true_grads.push(d_concat.select_cols(&cols));
            offset += width;
        }

        let norms: Vec<f64> = true_grads
            .iter()
            .map(|g| defense::l2_norm(g.data()))
            .collect();
        let flags = self.defense.screen(&norms);

        let mut returned = Vec::with_capacity(self.parties.len());
        for (k, g) in true_grads.iter().enumerate() {
            let width = g.cols();
            let true_flat = g.data();
            let screened: Vec<f64> = if flags[k] {
                vec![0.0; true_flat.len()]
            } else {
                true_flat.to_vec()
            };
            let defended = self
                .defense
                .defend(k, &screened, true_flat, &mut self.rng)?;
            returned.push(Matrix::from_vec(batch_len, width, defended)?);
        }

        // Updates: the owner steps on exact gradients, parties on the
        // defended ones they received.
        self.owner.top.sgd_step(&top_grads, self.sgd.learning_rate)?;
        for (k, ghat) in returned.iter().enumerate() {
            self.record_access(AccessEvent::GradientDelivery { party: k });
            let party = &mut self.parties[k];
            let (mut bottom_grads, _) = party.bottom.backward(&exchange.party_traces[k], ghat)?;
            if party.is_adversary && party.active_alpha != 1.0 {
                bottom_grads.scale(party.active_alpha);
            }
            party.bottom.sgd_step(&bottom_grads, self.sgd.learning_rate)?;
        }

        exchange.returned_grads = returned;
        exchange.geno_flags = flags;
        exchange.completed = true;
        Ok(exchange)
    }

    /// Seeded shuffle of all sample rows, chunked into mini-batches.
    /// Consumes RNG state, so successive calls give successive epochs.
    pub fn epoch_batches(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n_samples()).collect();
        order.shuffle(&mut self.rng);
        order
            .chunks(self.sgd.batch_size)
            .map(|c| c.to_vec())
            .collect()
    }

    /// Runs the configured number of epochs, recording loss, the task
    /// metric on the training set, and wall-clock seconds per epoch.
    pub fn train(&mut self) -> Result<Vec<EpochRecord>> {
        let start_epoch = self.epoch_log.len();
        for epoch in 0..self.sgd.epochs {
            let t0 = Instant::now();
            let batches = self.epoch_batches();
            let mut loss_sum = 0.0;
            for (bi, batch) in batches.iter().enumerate() {
                let exchange = self.forward_round(batch)?;
                if !exchange.loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch: start_epoch + epoch,
                        batch: bi,
                    });
                }
                loss_sum += exchange.loss;
                self.backward_round(exchange)?;
            }
            let task_metric = self.evaluate(&self.features, &self.owner.labels, self.metric)?;
            self.epoch_log.push(EpochRecord {
                epoch: start_epoch + epoch,
                mean_loss: loss_sum / batches.len() as f64,
                task_metric,
                seconds: t0.elapsed().as_secs_f64(),
            });
        }
        Ok(self.epoch_log[start_epoch..].to_vec())
    }

    /// Composed-model logits for arbitrary feature rows.
    pub fn predict_logits(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.features.cols() {
            return Err(Error::shape(format!(
                "predict: input has {} columns, expected {}",
                x.cols(),
                self.features.cols()
            )));
        }
        let mut embeddings = Vec::with_capacity(self.parties.len());
        for k in 0..self.parties.len() {
            let xk = self.party_slice(x, k);
            let (ok, _) = self.parties[k].bottom.forward(&xk)?;
            embeddings.push(ok);
        }
        let concat = Matrix::hstack(&embeddings.iter().collect::<Vec<_>>())?;
        let (logits, _) = self.owner.top.forward(&concat)?;
        Ok(logits)
    }

    /// Scores the composed model on held-out data.
    pub fn evaluate(&self, x: &Matrix, y: &[usize], metric: Metric) -> Result<f64> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!(
                "evaluate: {} rows vs {} labels",
                x.rows(),
                y.len()
            )));
        }
        let logits = self.predict_logits(x)?;
        self.record_access(AccessEvent::LabelRead {
            actor: Actor::Scoring,
            rows: (0..y.len()).collect(),
        });
        metrics::score_logits(&logits, y, metric)
    }

    /// Installs anonymized soft labels on the label path: trains the
    /// detached teacher on the hard labels over `x_scope`, then replaces
    /// the training targets with its k-anonymized softmax output.
    pub fn apply_ladistill(&mut self, x_scope: &Matrix, seed: u64) -> Result<()> {
        let cfg: LadistillConfig = self
            .defense
            .ladistill
            .clone()
            .ok_or_else(|| Error::state("no label anonymization configured".to_string()))?;
        if x_scope.rows() != self.n_samples() {
            return Err(Error::shape(format!(
                "teacher scope has {} rows for {} training samples",
                x_scope.rows(),
                self.n_samples()
            )));
        }
        self.record_access(AccessEvent::LabelRead {
            actor: Actor::Owner,
            rows: (0..self.n_samples()).collect(),
        });
        let mut teacher_rng = ChaCha8Rng::seed_from_u64(seed);
        let teacher = defense::train_teacher(
            &cfg,
            x_scope,
            &self.owner.labels,
            self.owner.n_classes,
            &mut teacher_rng,
        )?;
        let targets = defense::ladistill_targets(&teacher, x_scope, &cfg)?;
        validate_label_transform(&targets, self.owner.labels.len(), self.owner.n_classes)?;
        self.owner.label_transform = Some(targets);
        Ok(())
    }
}

fn validate_label_transform(transform: &Matrix, n_rows: usize, n_classes: usize) -> Result<()> {
    if transform.rows() != n_rows || transform.cols() != n_classes {
        return Err(Error::shape(format!(
            "label transform is {}x{}, expected {}x{}",
            transform.rows(),
            transform.cols(),
            n_rows,
            n_classes
        )));
    }
    for r in 0..transform.rows() {
        let sum: f64 = transform.row(r).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "label transform row {r} sums to {sum}"
            )));
        }
    }
    Ok(())
}
