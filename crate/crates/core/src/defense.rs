//! Gradient-space and label-space defenses.
//!
//! The three stack components — surrogate gradient substitution, label
//! anonymization through a distilled teacher, and gradient-norm outlier
//! filtering — plus the four classic baselines (magnitude clipping,
//! Laplace noise, magnitude-bucket quantization, random selective
//! sharing). All transforms are pure given explicit RNG state; the
//! covariance estimator is the only stateful piece.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, MlpModel, MlpSpec};

/// Variance floor for the diagonal covariance estimate.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
/// Exponential decay of the running gradient statistics.
pub const COVARIANCE_DECAY: f64 = 0.9;

const TEACHER_LR: f64 = 0.1;
const TEACHER_BATCH: usize = 32;

/// Cosine similarity plus a degeneracy flag; a zero vector on either
/// side yields `(0.0, true)`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> (f64, bool) {
    assert_eq!(a.len(), b.len(), "cosine_sim: lengths {} vs {}", a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return (0.0, true);
    }
    (dot / (na.sqrt() * nb.sqrt()), false)
}

/// Mahalanobis distance under a diagonal covariance:
/// `sqrt(sum (a_i - b_i)^2 / s_i)`. With `s = 1` everywhere this is the
/// Euclidean distance.
pub fn mahalanobis(a: &[f64], b: &[f64], s_diag: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mahalanobis: lengths {} vs {}", a.len(), b.len());
    assert_eq!(a.len(), s_diag.len(), "mahalanobis: diag length {}", s_diag.len());
    let mut acc = 0.0;
    for ((x, y), s) in a.iter().zip(b).zip(s_diag) {
        debug_assert!(*s >= COVARIANCE_FLOOR);
        let diff = x - y;
        acc += diff * diff / s;
    }
    acc.sqrt()
}

/// Per-coordinate exponentially weighted mean/variance of the flattened
/// gradients one party has produced so far. Starts as the identity
/// (variance 1 everywhere) and never reports a variance below
/// [`COVARIANCE_FLOOR`]. Coordinates beyond anything seen so far (a
/// shorter trailing batch, for instance) read as identity.
#[derive(Clone, Debug, Default)]
pub struct CovarianceEstimator {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl CovarianceEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, v: &[f64]) {
        if v.len() > self.mean.len() {
            self.mean.resize(v.len(), 0.0);
            self.var.resize(v.len(), 1.0);
        }
        for (i, &x) in v.iter().enumerate() {
            let mean_new = COVARIANCE_DECAY * self.mean[i] + (1.0 - COVARIANCE_DECAY) * x;
            let diff = x - mean_new;
            self.var[i] = COVARIANCE_DECAY * self.var[i] + (1.0 - COVARIANCE_DECAY) * diff * diff;
            self.mean[i] = mean_new;
        }
    }

    /// Floored diagonal for a vector of the given length.
    pub fn diagonal(&self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| self.var.get(i).copied().unwrap_or(1.0).max(COVARIANCE_FLOOR))
            .collect()
    }
}

/// Whether the acceptance score penalizes dissimilarity (default) or
/// uses the literal published combination, which rewards low cosine
/// similarity instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Polarity {
    #[default]
    Dissimilarity,
    Literal,
}

/// Surrogate-gradient substitution parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SgsubConfig {
    /// Acceptance threshold on the combined score.
    pub tau: f64,
    pub w_cos: f64,
    pub w_m: f64,
    pub max_attempts: usize,
    pub polarity: Polarity,
}

impl Default for SgsubConfig {
    fn default() -> Self {
        SgsubConfig {
            tau: 0.5,
            w_cos: 1.0,
            w_m: 0.05,
            max_attempts: 50,
            polarity: Polarity::Dissimilarity,
        }
    }
}

impl SgsubConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_cos < 0.0 || self.w_m < 0.0 || self.w_cos + self.w_m <= 0.0 {
            return Err(Error::config(
                "sgsub weights must be nonnegative with a positive sum".to_string(),
            ));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("sgsub max_attempts must be >= 1"));
        }
        Ok(())
    }

    fn score(&self, candidate: &[f64], original: &[f64], s_diag: &[f64]) -> f64 {
        let (cos, _) = cosine_sim(candidate, original);
        let dm = mahalanobis(candidate, original, s_diag);
        match self.polarity {
            Polarity::Dissimilarity => self.w_cos * (1.0 - cos) + self.w_m * dm,
            Polarity::Literal => self.w_cos * cos + self.w_m * dm,
        }
    }
}

/// Outcome of one substitution.
#[derive(Clone, Debug)]
pub struct Substitution {
    pub surrogate: Vec<f64>,
    /// No candidate met the threshold; the best-scoring one was returned.
    pub fallback: bool,
    /// The input was constant (or empty of signal) and passed through.
    pub degenerate: bool,
    pub attempts: usize,
    pub score: f64,
}

/// Replaces a gradient vector with a sampled surrogate that is clamped
/// to the original value range, carries the original rank pattern, and
/// meets the configured similarity score.
///
/// Candidates are drawn i.i.d. from a normal fit to the entries of `v`,
/// clamped to `[min(v), max(v)]`, then rank-transplanted: the i-th
/// smallest candidate value lands at the position of the i-th smallest
/// entry of `v`. The acceptance score is evaluated on that reordered
/// vector, so an accepted surrogate satisfies the inequality as
/// returned. After `max_attempts` rejections the best-scoring candidate
/// is returned with `fallback` set; a constant input is returned
/// unchanged with `degenerate` set.
pub fn sgsub_substitute(
    v: &[f64],
    estimator: &CovarianceEstimator,
    cfg: &SgsubConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Substitution> {
    cfg.validate()?;
    if v.is_empty() {
        return Err(Error::validation("sgsub: empty gradient vector".to_string()));
    }
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(Substitution {
            surrogate: v.to_vec(),
            fallback: false,
            degenerate: true,
            attempts: 0,
            score: 0.0,
        });
    }

    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let normal = Normal::new(mean, std).expect("non-constant vector has positive std");

    // Ascending value order of the original; ties broken by index.
    let mut rank: Vec<usize> = (0..v.len()).collect();
    rank.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));

    let s_diag = estimator.diagonal(v.len());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for attempt in 1..=cfg.max_attempts {
        let mut draws: Vec<f64> = (0..v.len())
            .map(|_| normal.sample(rng).clamp(min, max))
            .collect();
        draws.sort_by(f64::total_cmp);
        let mut candidate = vec![0.0; v.len()];
        for (sorted_pos, &original_pos) in rank.iter().enumerate() {
            candidate[original_pos] = draws[sorted_pos];
        }
        let score = cfg.score(&candidate, v, &s_diag);
        if score <= cfg.tau {
            return Ok(Substitution {
                surrogate: candidate,
                fallback: false,
                degenerate: false,
                attempts: attempt,
                score,
            });
        }
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, candidate));
        }
    }
    let (score, surrogate) = best.expect("max_attempts >= 1");
    Ok(Substitution {
        surrogate,
        fallback: true,
        degenerate: false,
        attempts: cfg.max_attempts,
        score,
    })
}

/// Which features the distillation teacher may see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TeacherScope {
    /// Only the label owner's own feature slice.
    OwnerSlice,
    #[default]
    Full,
}

/// Label anonymization parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LadistillConfig {
    /// The true class hides among the top `k` classes.
    pub k: usize,
    /// Probability mass moved off the argmax.
    pub epsilon: f64,
    pub teacher_epochs: usize,
    pub teacher_hidden: Vec<usize>,
    pub teacher_scope: TeacherScope,
}

impl Default for LadistillConfig {
    fn default() -> Self {
        LadistillConfig {
            k: 3,
            epsilon: 0.45,
            teacher_epochs: 30,
            teacher_hidden: vec![16],
            teacher_scope: TeacherScope::Full,
        }
    }
}

impl LadistillConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.k < 2 || self.k > n_classes {
            return Err(Error::config(format!(
                "ladistill k must be in [2, {n_classes}], got {}",
                self.k
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config(format!(
                "ladistill epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// A detached teacher model. Gradients never flow back into it; the
/// `trained` flag distinguishes a teacher that went through
/// [`train_teacher`] from a bare model.
#[derive(Clone, Debug)]
pub struct Teacher {
    pub model: MlpModel,
    trained: bool,
    pub epochs_trained: usize,
}

impl Teacher {
    /// A freshly initialized teacher that has not seen data yet.
    pub fn untrained(model: MlpModel) -> Self {
        Teacher {
            model,
            trained: false,
            epochs_trained: 0,
        }
    }
}

/// Fits the teacher with hard-label cross-entropy. With
/// `teacher_epochs == 0` the teacher is returned at initialization
/// (soft labels will be near-uniform); it still counts as trained.
pub fn train_teacher(
    cfg: &LadistillConfig,
    x_scope: &Matrix,
    y: &[usize],
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Teacher> {
    cfg.validate(n_classes)?;
    let spec = MlpSpec::new(x_scope.cols(), cfg.teacher_hidden.clone(), n_classes);
    let mut model = MlpModel::from_spec(&spec, rng)?;
    nn::train_classifier(
        &mut model,
        x_scope,
        y,
        n_classes,
        cfg.teacher_epochs,
        TEACHER_LR,
        TEACHER_BATCH,
        rng,
    )?;
    Ok(Teacher {
        model,
        trained: true,
        epochs_trained: cfg.teacher_epochs,
    })
}

/// Teacher softmax outputs, one distribution per row of `x`.
pub fn teacher_soft_labels(teacher: &Teacher, x: &Matrix) -> Result<Matrix> {
    if !teacher.trained {
        return Err(Error::state(
            "teacher has not been trained; call train_teacher first".to_string(),
        ));
    }
    let (logits, _) = teacher.model.forward(x)?;
    Ok(nn::softmax(&logits))
}

/// Redistributes one soft-label row under k-anonymity: the argmax keeps
/// `1 - epsilon`, the next `k - 1` most probable classes share
/// `epsilon / (k - 1)`, everything else drops to zero. Ties at the
/// top-k boundary break toward the lowest class index.
pub fn lad_anonymize(sl_row: &[f64], k: usize, epsilon: f64) -> Result<Vec<f64>> {
    let classes = sl_row.len();
    if k < 2 || k > classes {
        return Err(Error::config(format!(
            "lad_anonymize: k must be in [2, {classes}], got {k}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::config(format!(
            "lad_anonymize: epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| sl_row[b].total_cmp(&sl_row[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; classes];
    out[order[0]] = 1.0 - epsilon;
    let share = epsilon / (k - 1) as f64;
    for &idx in &order[1..k] {
        out[idx] = share;
    }
    Ok(out)
}

/// Anonymized soft labels for every row of `x`: teacher softmax passed
/// through [`lad_anonymize`]. The hard labels are only ever consumed by
/// teacher training, never here.
pub fn ladistill_targets(teacher: &Teacher, x: &Matrix, cfg: &LadistillConfig) -> Result<Matrix> {
    let soft = teacher_soft_labels(teacher, x)?;
    let mut out = Matrix::zeros(soft.rows(), soft.cols());
    for r in 0..soft.rows() {
        let row = lad_anonymize(soft.row(r), cfg.k, cfg.epsilon)?;
        out.row_mut(r).copy_from_slice(&row);
    }
    Ok(out)
}

/// Threshold selection for the outlier filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GenoMode {
    Fixed { lambda: f64 },
    /// `lambda = median(norms) + c * MAD(norms)` over the current set.
    Auto { c: f64 },
}

impl Default for GenoMode {
    fn default() -> Self {
        GenoMode::Auto { c: 5.0 }
    }
}

/// What happens to a flagged gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GenoAction {
    /// Replace with a zero vector of the same shape (the in-loop default).
    #[default]
    Zero,
    /// Remove from the returned set.
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GenoConfig {
    pub mode: GenoMode,
    pub action: GenoAction,
}

impl GenoConfig {
    pub fn validate(&self) -> Result<()> {
        if let GenoMode::Fixed { lambda } = self.mode {
            if !(lambda > 0.0) {
                return Err(Error::config(format!(
                    "geno fixed lambda must be > 0, got {lambda}"
                )));
            }
        }
        Ok(())
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Resolves the effective threshold and flags `norm > lambda`.
pub fn geno_flags(norms: &[f64], cfg: &GenoConfig) -> (f64, Vec<bool>) {
    let lambda = match cfg.mode {
        GenoMode::Fixed { lambda } => lambda,
        GenoMode::Auto { c } => {
            let mut sorted = norms.to_vec();
            sorted.sort_by(f64::total_cmp);
            let med = median(&sorted);
            let mut deviations: Vec<f64> = norms.iter().map(|n| (n - med).abs()).collect();
            deviations.sort_by(f64::total_cmp);
            med + c * median(&deviations)
        }
    };
    let flags = norms.iter().map(|&n| n > lambda).collect();
    (lambda, flags)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Filters gradient vectors whose L2 norm exceeds the threshold.
/// `Zero` preserves list length and per-entry shape; `Drop` removes
/// flagged entries. The flag vector always lines up with the input.
pub fn geno_filter(gradients: &[Vec<f64>], cfg: &GenoConfig) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    cfg.validate()?;
    if gradients.is_empty() {
        return Err(Error::validation("geno_filter: empty gradient set".to_string()));
    }
    let norms: Vec<f64> = gradients.iter().map(|g| l2_norm(g)).collect();
    let (_, flags) = geno_flags(&norms, cfg);
    let filtered = match cfg.action {
        GenoAction::Zero => gradients
            .iter()
            .zip(&flags)
            .map(|(g, &f)| if f { vec![0.0; g.len()] } else { g.clone() })
            .collect(),
        GenoAction::Drop => gradients
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| !f)
            .map(|(g, _)| g.clone())
            .collect(),
    };
    Ok((filtered, flags))
}

/// Keeps the `ceil(p * len)` largest-magnitude entries, zeroing the
/// rest; magnitude ties break toward the lower index.
pub fn gc_clip(v: &[f64], keep_fraction: f64) -> Result<Vec<f64>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::config(format!(
            "gc keep_fraction must be in (0, 1], got {keep_fraction}"
        )));
    }
    let keep = ((keep_fraction * v.len() as f64).ceil() as usize).min(v.len());
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; v.len()];
    for &idx in &order[..keep] {
        out[idx] = v[idx];
    }
    Ok(out)
}

/// I.i.d. Laplace(0, scale) noise on every entry, via inverse CDF.
pub fn ng_noise(v: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::config(format!(
            "ng laplace scale must be > 0, got {scale}"
        )));
    }
    Ok(v.iter()
        .map(|&x| {
            let u: f64 = rng.random::<f64>() - 0.5;
            let mag = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
            x - scale * u.signum() * mag.ln()
        })
        .collect())
}

/// Quantizes each entry to `sign(entry) * centroid` of its magnitude
/// bucket among `buckets` equal-width buckets over `[0, max|v|]`.
pub fn mg_quantize(v: &[f64], buckets: usize) -> Result<Vec<f64>> {
    if buckets == 0 {
        return Err(Error::config("mg needs at least one bucket"));
    }
    let max_abs = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if max_abs == 0.0 {
        return Ok(v.to_vec());
    }
    let width = max_abs / buckets as f64;
    Ok(v.iter()
        .map(|&x| {
            if x == 0.0 {
                return 0.0;
            }
            let bucket = ((x.abs() / width) as usize).min(buckets - 1);
            let centroid = (bucket as f64 + 0.5) * width;
            x.signum() * centroid
        })
        .collect())
}

/// Keeps a uniformly random `ceil(theta * len)` subset of entries,
/// zeroing the rest.
pub fn ppdl_select(v: &[f64], share_fraction: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(share_fraction > 0.0 && share_fraction <= 1.0) {
        return Err(Error::config(format!(
            "ppdl share_fraction must be in (0, 1], got {share_fraction}"
        )));
    }
    let keep = ((share_fraction * v.len() as f64).ceil() as usize).min(v.len());
    let chosen = rand::seq::index::sample(rng, v.len(), keep);
    let mut out = vec![0.0; v.len()];
    for idx in chosen {
        out[idx] = v[idx];
    }
    Ok(out)
}

/// The gradient-space transform applied to each party's returned
/// gradient (after outlier screening).
#[derive(Clone, Debug, PartialEq, Default)]
pub enum GradientDefense {
    #[default]
    None,
    Sgsub(SgsubConfig),
    GradientClip {
        keep_fraction: f64,
    },
    LaplaceNoise {
        scale: f64,
    },
    BucketQuantize {
        buckets: usize,
    },
    SelectiveShare {
        share_fraction: f64,
    },
}

impl GradientDefense {
    pub fn validate(&self) -> Result<()> {
        match self {
            GradientDefense::None => Ok(()),
            GradientDefense::Sgsub(cfg) => cfg.validate(),
            GradientDefense::GradientClip { keep_fraction } => {
                if *keep_fraction > 0.0 && *keep_fraction <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "gc keep_fraction must be in (0, 1], got {keep_fraction}"
                    )))
                }
            }
            GradientDefense::LaplaceNoise { scale } => {
                if *scale > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!("ng scale must be > 0, got {scale}")))
                }
            }
            GradientDefense::BucketQuantize { buckets } => {
                if *buckets >= 2 {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "mg buckets must be >= 2 in experiment configs, got {buckets}"
                    )))
                }
            }
            GradientDefense::SelectiveShare { share_fraction } => {
                if *share_fraction > 0.0 && *share_fraction <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "ppdl share_fraction must be in (0, 1], got {share_fraction}"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GradientDefense::None => "none",
            GradientDefense::Sgsub(_) => "sgsub",
            GradientDefense::GradientClip { .. } => "gc",
            GradientDefense::LaplaceNoise { .. } => "ng",
            GradientDefense::BucketQuantize { .. } => "mg",
            GradientDefense::SelectiveShare { .. } => "ppdl",
        }
    }
}

/// The defense pipeline one session runs per batch: outlier screening
/// first, then the gradient defense on whatever survives. Label
/// anonymization acts once on the label path before training starts.
#[derive(Clone, Debug, Default)]
pub struct DefenseStack {
    pub geno: Option<GenoConfig>,
    pub gradient: GradientDefense,
    pub ladistill: Option<LadistillConfig>,
    estimators: Vec<CovarianceEstimator>,
}

impl DefenseStack {
    pub fn none() -> Self {
        DefenseStack::default()
    }

    pub fn new(
        geno: Option<GenoConfig>,
        gradient: GradientDefense,
        ladistill: Option<LadistillConfig>,
    ) -> Result<Self> {
        if let Some(g) = &geno {
            g.validate()?;
        }
        gradient.validate()?;
        Ok(DefenseStack {
            geno,
            gradient,
            ladistill,
            estimators: Vec::new(),
        })
    }

    /// Short descriptor used in result tables, e.g. `ladsg(k=3,eps=0.45)`
    /// or `ng(0.001)`.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.geno.is_some() {
            parts.push("geno".to_string());
        }
        match &self.gradient {
            GradientDefense::None => {}
            GradientDefense::Sgsub(_) => parts.push("sgsub".to_string()),
            GradientDefense::GradientClip { keep_fraction } => {
                parts.push(format!("gc({keep_fraction})"))
            }
            GradientDefense::LaplaceNoise { scale } => parts.push(format!("ng({scale})")),
            GradientDefense::BucketQuantize { buckets } => parts.push(format!("mg({buckets})")),
            GradientDefense::SelectiveShare { share_fraction } => {
                parts.push(format!("ppdl({share_fraction})"))
            }
        }
        if let Some(lad) = &self.ladistill {
            parts.push(format!("ladistill(k={};eps={})", lad.k, lad.epsilon));
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }

    /// Screens the true per-party gradient norms; returns the flags
    /// (all false when the filter is off).
    pub(crate) fn screen(&self, norms: &[f64]) -> Vec<bool> {
        match &self.geno {
            Some(cfg) => geno_flags(norms, cfg).1,
            None => vec![false; norms.len()],
        }
    }

    /// Applies the gradient defense to one party's flattened gradient.
    /// The estimator for surrogate substitution is updated with the true
    /// gradient after the substitution draws on its current state, so
    /// the first batch scores against the identity.
    pub(crate) fn defend(
        &mut self,
        party: usize,
        flattened: &[f64],
        true_flattened: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let out = match &self.gradient {
            GradientDefense::None => flattened.to_vec(),
            GradientDefense::Sgsub(cfg) => {
                if self.estimators.len() <= party {
                    self.estimators.resize_with(party + 1, CovarianceEstimator::new);
                }
                let sub = sgsub_substitute(flattened, &self.estimators[party], cfg, rng)?;
                self.estimators[party].update(true_flattened);
                sub.surrogate
            }
            GradientDefense::GradientClip { keep_fraction } => gc_clip(flattened, *keep_fraction)?,
            GradientDefense::LaplaceNoise { scale } => ng_noise(flattened, *scale, rng)?,
            GradientDefense::BucketQuantize { buckets } => mg_quantize(flattened, *buckets)?,
            GradientDefense::SelectiveShare { share_fraction } => {
                ppdl_select(flattened, *share_fraction, rng)?
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn cosine_basic_cases() {
        let (c, deg) = cosine_sim(&[1.0, 2.0], &[1.0, 2.0]);
        assert!((c - 1.0).abs() <= 1e-12 && !deg);
        let (c, _) = cosine_sim(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(c, 0.0);
        // Hand arithmetic: 10 / 14.
        let (c, _) = cosine_sim(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]);
        assert!((c - 0.7142857142857143).abs() <= 1e-12);
        let (c, deg) = cosine_sim(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(c == 0.0 && deg);
    }

    #[test]
    fn mahalanobis_basic_cases() {
        assert_eq!(mahalanobis(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]), 0.0);
        // Identity covariance reduces to Euclidean distance.
        assert!((mahalanobis(&[0.0, 0.0], &[3.0, 4.0], &[1.0, 1.0]) - 5.0).abs() <= 1e-12);
        // (2^2 / 4)^0.5 = 1.
        assert!((mahalanobis(&[2.0, 0.0], &[0.0, 0.0], &[4.0, 1.0]) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn covariance_estimator_starts_as_identity_and_floors() {
        let mut est = CovarianceEstimator::new();
        assert_eq!(est.diagonal(3), vec![1.0, 1.0, 1.0]);
        for _ in 0..200 {
            est.update(&[5.0, 5.0]);
        }
        // A constant stream drives variance toward zero; the floor holds.
        let diag = est.diagonal(2);
        assert!(diag.iter().all(|&v| v >= COVARIANCE_FLOOR));
        assert!(diag[0] <= 1e-3);
        // Beyond seen coordinates: identity.
        assert_eq!(est.diagonal(3)[2], 1.0);
    }

    fn ranks(v: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        let mut rank = vec![0; v.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        rank
    }

    #[test]
    fn sgsub_vacuous_threshold_still_clamps_and_reorders() {
        let cfg = SgsubConfig {
            tau: f64::INFINITY,
            ..SgsubConfig::default()
        };
        let v = [0.4, -1.2, 3.0, 0.0, 0.7];
        let mut rng = seeded(5);
        let sub = sgsub_substitute(&v, &CovarianceEstimator::new(), &cfg, &mut rng).unwrap();
        assert_eq!(sub.attempts, 1);
        assert!(!sub.fallback && !sub.degenerate);
        let (min, max) = (-1.2, 3.0);
        assert!(sub.surrogate.iter().all(|&x| x >= min && x <= max));
        // Comonotone with the original.
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] < v[j] {
                    assert!(sub.surrogate[i] <= sub.surrogate[j]);
                }
            }
        }
        assert_eq!(ranks(&v), ranks(&sub.surrogate));
    }

    #[test]
    fn sgsub_constant_vector_is_degenerate() {
        let v = [0.5, 0.5, 0.5];
        let mut rng = seeded(0);
        let sub =
            sgsub_substitute(&v, &CovarianceEstimator::new(), &SgsubConfig::default(), &mut rng)
                .unwrap();
        assert!(sub.degenerate);
        assert_eq!(sub.surrogate, v);
    }

    #[test]
    fn sgsub_accepted_candidates_meet_cosine_bound() {
        use rand::Rng;
        let cfg = SgsubConfig {
            tau: 0.1,
            w_cos: 1.0,
            w_m: 0.0,
            max_attempts: 200,
            polarity: Polarity::Dissimilarity,
        };
        let est = CovarianceEstimator::new();
        let mut rng = seeded(21);
        let mut accepted = 0;
        for _ in 0..1000 {
            let v: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let sub = sgsub_substitute(&v, &est, &cfg, &mut rng).unwrap();
            if !sub.fallback {
                accepted += 1;
                let (cos, _) = cosine_sim(&sub.surrogate, &v);
                assert!(cos >= 0.9 - 1e-12, "cosine {cos}");
            }
        }
        // The rank transplant makes acceptance the common case here.
        assert!(accepted >= 900, "only {accepted}/1000 accepted");
    }

    #[test]
    fn sgsub_fallback_returns_best_seen() {
        let cfg = SgsubConfig {
            tau: -1.0, // unattainable: score is nonnegative here
            w_cos: 1.0,
            w_m: 0.0,
            max_attempts: 7,
            polarity: Polarity::Dissimilarity,
        };
        let v = [1.0, -2.0, 0.3];
        let mut rng = seeded(2);
        let sub = sgsub_substitute(&v, &CovarianceEstimator::new(), &cfg, &mut rng).unwrap();
        assert!(sub.fallback);
        assert_eq!(sub.attempts, 7);
        assert!(sub.score > -1.0);
    }

    #[test]
    fn sgsub_literal_polarity_flips_preference() {
        // Literal scoring accepts on low cosine similarity; with the rank
        // transplant keeping candidates aligned, a moderate tau passes in
        // dissimilarity mode but usually not in literal mode.
        let v: Vec<f64> = (0..32).map(|i| (i as f64 * 0.7).sin()).collect();
        let dissim = SgsubConfig {
            tau: 0.2,
            w_cos: 1.0,
            w_m: 0.0,
            max_attempts: 50,
            polarity: Polarity::Dissimilarity,
        };
        let literal = SgsubConfig {
            polarity: Polarity::Literal,
            ..dissim.clone()
        };
        let est = CovarianceEstimator::new();
        let a = sgsub_substitute(&v, &est, &dissim, &mut seeded(3)).unwrap();
        let b = sgsub_substitute(&v, &est, &literal, &mut seeded(3)).unwrap();
        assert!(!a.fallback);
        assert!(b.fallback);
    }

    #[test]
    fn lad_anonymize_examples() {
        let out = lad_anonymize(&[0.7, 0.2, 0.1], 2, 0.4).unwrap();
        assert_eq!(out, vec![0.6, 0.4, 0.0]);

        // k = C with epsilon = (C-1)/C is exactly uniform.
        let out = lad_anonymize(&[0.4, 0.3, 0.2, 0.1], 4, 0.75).unwrap();
        for v in &out {
            assert!((v - 0.25).abs() <= 1e-12);
        }

        // epsilon -> 0 approaches one-hot at the argmax.
        let out = lad_anonymize(&[0.5, 0.3, 0.2], 2, 1e-9).unwrap();
        assert!(out[0] > 1.0 - 1e-8);
    }

    #[test]
    fn lad_anonymize_tie_break_lowest_index() {
        let out = lad_anonymize(&[0.25, 0.25, 0.25, 0.25], 2, 0.4).unwrap();
        assert_eq!(out, vec![0.6, 0.4, 0.0, 0.0]);
    }

    #[test]
    fn lad_anonymize_support_and_sum() {
        let row = [0.05, 0.3, 0.1, 0.25, 0.2, 0.1];
        for (k, eps) in [(3usize, 0.45), (5, 0.70), (5, 0.75), (5, 0.85)] {
            let out = lad_anonymize(&row, k, eps).unwrap();
            let nonzero = out.iter().filter(|v| **v > 0.0).count();
            assert_eq!(nonzero, k);
            let sum: f64 = out.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn teacher_with_zero_weights_gives_uniform_soft_labels() {
        use crate::nn::{Activation, Layer};
        let w = Matrix::zeros(4, 3);
        let model = MlpModel::new(vec![Layer::new(w, vec![0.0; 4], Activation::Identity).unwrap()])
            .unwrap();
        let teacher = Teacher {
            model,
            trained: true,
            epochs_trained: 1,
        };
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let sl = teacher_soft_labels(&teacher, &x).unwrap();
        for v in sl.row(0) {
            assert!((v - 0.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn untrained_teacher_is_a_state_error() {
        let model = MlpModel::from_spec(&MlpSpec::new(2, vec![], 2), &mut seeded(0)).unwrap();
        let teacher = Teacher::untrained(model);
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            teacher_soft_labels(&teacher, &x),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn zero_epoch_teacher_soft_labels_are_near_uniform() {
        use crate::data::{gen_gaussian_blobs, normalize, SyntheticSpec};
        let data = normalize(
            &gen_gaussian_blobs(&SyntheticSpec {
                n: 200,
                d: 8,
                n_classes: 4,
                cluster_separation: 6.0,
                noise_std: 1.0,
                seed: 11,
            })
            .unwrap(),
        )
        .unwrap();
        let cfg = LadistillConfig {
            teacher_epochs: 0,
            // Two relu layers keep Xavier-initialized logits small, so a
            // never-trained teacher emits close-to-uniform rows.
            teacher_hidden: vec![16, 16],
            ..LadistillConfig::default()
        };
        let teacher = train_teacher(&cfg, &data.x, &data.y, 4, &mut seeded(4)).unwrap();
        let sl = teacher_soft_labels(&teacher, &data.x).unwrap();
        let ln_c = 4.0f64.ln();
        let mut mean_entropy = 0.0;
        for r in 0..sl.rows() {
            let h: f64 = sl
                .row(r)
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| -p * p.ln())
                .sum();
            mean_entropy += h;
        }
        mean_entropy /= sl.rows() as f64;
        assert!(mean_entropy >= 0.9 * ln_c, "mean entropy {mean_entropy}");
    }

    #[test]
    fn trained_teacher_fits_separable_blobs() {
        use crate::data::{gen_gaussian_blobs, normalize, SyntheticSpec};
        let data = normalize(
            &gen_gaussian_blobs(&SyntheticSpec {
                n: 400,
                d: 8,
                n_classes: 4,
                cluster_separation: 8.0,
                noise_std: 1.0,
                seed: 12,
            })
            .unwrap(),
        )
        .unwrap();
        let cfg = LadistillConfig::default();
        let teacher = train_teacher(&cfg, &data.x, &data.y, 4, &mut seeded(6)).unwrap();
        let sl = teacher_soft_labels(&teacher, &data.x).unwrap();
        let preds = crate::metrics::predictions_from_logits(&sl);
        let acc = crate::metrics::top1(&preds, &data.y).unwrap();
        assert!(acc >= 0.9, "teacher accuracy {acc}");
        // Soft-label rows are distributions.
        for r in 0..sl.rows() {
            let sum: f64 = sl.row(r).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
        }
        // Determinism under the seed.
        let again = train_teacher(&cfg, &data.x, &data.y, 4, &mut seeded(6)).unwrap();
        assert_eq!(teacher.model.param_vector(), again.model.param_vector());
    }

    #[test]
    fn geno_fixed_threshold_behavior() {
        let g = vec![vec![0.3, 0.4], vec![1.2, 1.6]]; // norms 0.5 and 2.0
        let cfg = GenoConfig {
            mode: GenoMode::Fixed { lambda: 1.0 },
            action: GenoAction::Zero,
        };
        let (filtered, flags) = geno_filter(&g, &cfg).unwrap();
        assert_eq!(flags, vec![false, true]);
        assert_eq!(filtered[0], g[0]);
        assert_eq!(filtered[1], vec![0.0, 0.0]);

        let nothing = GenoConfig {
            mode: GenoMode::Fixed {
                lambda: f64::INFINITY,
            },
            action: GenoAction::Zero,
        };
        let (_, flags) = geno_filter(&g, &nothing).unwrap();
        assert!(flags.iter().all(|f| !f));

        let drop = GenoConfig {
            mode: GenoMode::Fixed { lambda: 1.0 },
            action: GenoAction::Drop,
        };
        let (filtered, _) = geno_filter(&g, &drop).unwrap();
        assert_eq!(filtered.len(), 1);
    }

    #[test]
    fn geno_auto_flags_an_outlier_among_peers() {
        let g = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.05],
            vec![0.95, 0.0],
            vec![40.0, 0.0],
        ];
        let cfg = GenoConfig::default(); // auto, c = 5
        let (_, flags) = geno_filter(&g, &cfg).unwrap();
        assert_eq!(flags, vec![false, false, false, true]);
    }

    #[test]
    fn gc_keeps_top_magnitudes() {
        assert_eq!(gc_clip(&[3.0, -1.0, 2.0], 2.0 / 3.0).unwrap(), vec![3.0, 0.0, 2.0]);
        // Tie at the cut: lowest index wins the slot.
        assert_eq!(gc_clip(&[1.0, -1.0, 0.5], 1.0 / 3.0).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(gc_clip(&[1.0], 0.0).is_err());
    }

    #[test]
    fn ng_vanishing_scale_is_identity_and_mean_preserving() {
        let v = [0.5, -0.25, 1.5];
        let out = ng_noise(&v, 1e-300, &mut seeded(1)).unwrap();
        assert_eq!(out, v.to_vec());

        // Empirical mean of the noise over many draws is 0 within 3 SE.
        let scale = 0.1;
        let n = 10_000;
        let mut rng = seeded(2);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += ng_noise(&[0.0], scale, &mut rng).unwrap()[0];
        }
        let mean = sum / n as f64;
        // Laplace variance is 2 b^2.
        let se = (2.0 * scale * scale / n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean} vs se {se}");
    }

    #[test]
    fn mg_single_bucket_collapses_to_half_max() {
        let out = mg_quantize(&[2.0, -0.5, 0.0], 1).unwrap();
        assert_eq!(out, vec![1.0, -1.0, 0.0]);
        // All-zero vector is untouched.
        assert_eq!(mg_quantize(&[0.0, 0.0], 4).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mg_buckets_are_equal_width_centroids() {
        // Width 1; |4| clamps into bucket 3 (centroid 3.5), |1| falls in
        // bucket 1 (centroid 1.5), |-3| in bucket 3 with its sign kept.
        let out = mg_quantize(&[4.0, 1.0, -3.0], 4).unwrap();
        assert_eq!(out, vec![3.5, 1.5, -3.5]);
    }

    #[test]
    fn ppdl_full_share_is_identity_and_support_is_exact() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ppdl_select(&v, 1.0, &mut seeded(3)).unwrap(), v.to_vec());
        let out = ppdl_select(&v, 0.5, &mut seeded(4)).unwrap();
        assert_eq!(out.iter().filter(|x| **x != 0.0).count(), 2);
        assert!(ppdl_select(&v, 1.5, &mut seeded(0)).is_err());
    }

    #[test]
    fn stack_describe_is_stable() {
        let stack = DefenseStack::new(
            Some(GenoConfig::default()),
            GradientDefense::Sgsub(SgsubConfig::default()),
            Some(LadistillConfig::default()),
        )
        .unwrap();
        assert_eq!(stack.describe(), "geno+sgsub+ladistill(k=3;eps=0.45)");
        assert_eq!(DefenseStack::none().describe(), "none");
    }
}
