//! Config-driven experiment runner: builds sessions from a declarative
//! config, runs train-then-attack pipelines over seed lists, sweeps
//! parameter grids, and emits machine-readable results.

pub mod config;
pub mod emit;

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{self, AttackReport};
use crate::data::{self, Dataset};
use crate::defense::TeacherScope;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{MlpModel, MlpSpec, SgdConfig};
use crate::protocol::{LabelOwner, Party, VflSession};

pub use config::{expand_sweep, load_config, parse_config, ExperimentConfig};

/// Sub-seeds for each pipeline component, derived from one master seed
/// by fixed offsets through a splitmix64 finalizer. Components stay
/// independently reproducible: the same master seed always yields the
/// same dataset regardless of what else changed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedPlan {
    pub master: u64,
    pub data: u64,
    pub split: u64,
    pub init: u64,
    pub train: u64,
    pub teacher: u64,
    pub attack: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl SeedPlan {
    pub fn from_master(master: u64) -> Self {
        let derive = |offset: u64| splitmix64(master.wrapping_add(offset));
        SeedPlan {
            master,
            data: derive(1),
            split: derive(2),
            init: derive(3),
            train: derive(4),
            teacher: derive(5),
            attack: derive(6),
        }
    }
}

/// One seed's outcome inside a [`ResultRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub task_metric: f64,
    pub attack_success: Option<f64>,
    /// Wall-clock seconds per training epoch (timing; varies run to run).
    pub epoch_seconds: Vec<f64>,
}

/// Aggregates over the per-seed outcomes. The std is the sample
/// standard deviation (n - 1 denominator), 0 for a single seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task_metric_mean: f64,
    pub task_metric_std: f64,
    pub attack_success_mean: Option<f64>,
    pub attack_success_std: Option<f64>,
    pub mean_epoch_seconds: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_outcomes(outcomes: &[SeedOutcome]) -> Aggregate {
        let task: Vec<f64> = outcomes.iter().map(|o| o.task_metric).collect();
        let (task_metric_mean, task_metric_std) = mean_std(&task);
        let attack: Vec<f64> = outcomes.iter().filter_map(|o| o.attack_success).collect();
        let (attack_success_mean, attack_success_std) = if attack.len() == outcomes.len() {
            let (m, s) = mean_std(&attack);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        let all_epochs: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| o.epoch_seconds.iter().copied())
            .collect();
        let mean_epoch_seconds = if all_epochs.is_empty() {
            0.0
        } else {
            all_epochs.iter().sum::<f64>() / all_epochs.len() as f64
        };
        Aggregate {
            task_metric_mean,
            task_metric_std,
            attack_success_mean,
            attack_success_std,
            mean_epoch_seconds,
        }
    }
}

/// One experiment outcome: full config echo, per-seed results, and
/// aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
}

/// Builds the train/test datasets for one seed.
pub fn build_dataset(cfg: &ExperimentConfig, plan: &SeedPlan) -> Result<(Dataset, Dataset)> {
    let full = match cfg.dataset.kind.as_str() {
        "synthetic" => data::gen_gaussian_blobs(&cfg.dataset.synthetic_spec(plan.data))?,
        "csv" => data::load_csv(
            cfg.dataset.path.as_ref().unwrap(),
            cfg.dataset.label_column.as_ref().unwrap(),
            cfg.dataset.has_header.unwrap_or(true),
        )?,
        other => return Err(Error::config(format!("unknown dataset kind '{other}'"))),
    };
    let (train, test) = data::train_test_split(&full, cfg.dataset.test_fraction, plan.split)?;
    if cfg.dataset.normalize {
        let stats = data::ColumnStats::fit(&train)?;
        Ok((stats.apply(&train), stats.apply(&test)))
    } else {
        Ok((train, test))
    }
}

/// Assembles a session from config and training data: vertical slices,
/// seeded model initialization (bottoms in party order, then the top),
/// the defense stack, and the label-path transform when configured.
/// The label owner is co-located with the last party, so the
/// `owner_slice` teacher scope sees that party's columns.
pub fn build_session(
    cfg: &ExperimentConfig,
    train: &Dataset,
    plan: &SeedPlan,
) -> Result<VflSession> {
    let slices = data::vertical_split(train, &cfg.split.to_spec()?)?;
    let loss = cfg.model.loss_kind()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(plan.init);

    let mut parties = Vec::with_capacity(slices.len());
    for (k, slice) in slices.iter().enumerate() {
        let spec = MlpSpec::new(
            slice.len(),
            cfg.model.bottom_hidden.clone(),
            cfg.model.embedding_dim,
        );
        let bottom = MlpModel::from_spec(&spec, &mut init_rng)?;
        let mut party = Party::new(k, bottom, slice.clone());
        party.is_adversary = k == cfg.split.adversary;
        parties.push(party);
    }
    let concat_width = cfg.model.embedding_dim * slices.len();
    let out_dim = match loss {
        crate::protocol::LossKind::SoftmaxCe => train.n_classes,
        crate::protocol::LossKind::Logistic => 1,
    };
    let top = MlpModel::from_spec(
        &MlpSpec::new(concat_width, cfg.model.top_hidden.clone(), out_dim),
        &mut init_rng,
    )?;

    let defense = cfg.defense.to_stack()?;
    let ladistill = defense.ladistill.clone();
    let owner = LabelOwner::new(top, train.y.clone(), train.n_classes, loss);
    let sgd = SgdConfig {
        learning_rate: cfg.sgd.learning_rate,
        batch_size: cfg.sgd.batch_size,
        epochs: cfg.sgd.epochs,
        seed: plan.train,
    };
    let mut session = VflSession::new(
        parties,
        owner,
        defense,
        sgd,
        train.x.clone(),
        cfg.evaluation.metric,
    )?;

    if let Some(lad) = ladistill {
        let scope = match lad.teacher_scope {
            TeacherScope::Full => train.x.clone(),
            TeacherScope::OwnerSlice => {
                let owner_cols = slices.last().expect("at least one party");
                train.x.select_cols(owner_cols)
            }
        };
        session.apply_ladistill(&scope, plan.teacher)?;
    }
    Ok(session)
}

/// The train-then-attack pipeline for one master seed.
fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let plan = SeedPlan::from_master(seed);
    let stage = |stage: &'static str| move |e: Error| e.at_stage(seed, stage);

    let (train, test) = build_dataset(cfg, &plan).map_err(stage("dataset"))?;
    let mut session = build_session(cfg, &train, &plan).map_err(stage("session"))?;

    let mut attack_report: Option<AttackReport> = None;
    match cfg.attack.kind.as_str() {
        "active" => {
            let active = cfg.attack.active_config().expect("validated");
            session = attack::run_active_session(&session, &active).map_err(stage("attack"))?;
        }
        "direct" => {
            // The direct attack observes gradients from the start of
            // training; the configured epochs then run on top.
            let direct = cfg.attack.direct_config().expect("validated");
            attack_report =
                Some(attack::direct_label_infer(&mut session, &direct).map_err(stage("attack"))?);
        }
        _ => {}
    }

    session.train().map_err(stage("train"))?;
    let task_metric = session
        .evaluate(&test.x, &test.y, cfg.evaluation.metric)
        .map_err(stage("evaluate"))?;

    match cfg.attack.kind.as_str() {
        "passive" => {
            attack_report = Some(
                attack::passive_attack(&session, &cfg.attack.passive_config(), plan.attack)
                    .map_err(stage("attack"))?,
            );
        }
        "active" => {
            attack_report = Some(
                attack::active_followup_attack(
                    &session,
                    &cfg.attack.passive_config(),
                    plan.attack,
                )
                .map_err(stage("attack"))?,
            );
        }
        _ => {}
    }

    Ok(SeedOutcome {
        seed,
        task_metric,
        attack_success: attack_report.map(|r| r.success_rate),
        epoch_seconds: session.epoch_log.iter().map(|e| e.seconds).collect(),
    })
}

/// Runs the configured pipeline once per seed and aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    if cfg.sweep.is_some() {
        return Err(Error::config(
            "config contains a [sweep] section; use the sweep command".to_string(),
        ));
    }
    let mut per_seed = Vec::with_capacity(cfg.evaluation.seeds.len());
    for &seed in &cfg.evaluation.seeds {
        per_seed.push(run_single(cfg, seed)?);
    }
    let aggregate = Aggregate::from_outcomes(&per_seed);
    Ok(ResultRecord {
        config: cfg.clone(),
        per_seed,
        aggregate,
    })
}

/// Expands the sweep grid and runs every point. Points are independent;
/// results arrive in grid order (first parameter slowest).
pub fn run_sweep(raw_config: &str) -> Result<Vec<ResultRecord>> {
    let points = expand_sweep(raw_config)?;
    let mut records = Vec::with_capacity(points.len());
    for cfg in &points {
        records.push(run_experiment(cfg)?);
    }
    Ok(records)
}

/// Writes the adversary's bottom-model embeddings for the given rows,
/// one CSV row per sample with the true label in the last column. This
/// is the export behind representation-space visualizations; projecting
/// (t-SNE or otherwise) happens in external tooling.
pub fn dump_embeddings(
    session: &VflSession,
    x: &Matrix,
    labels: &[usize],
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    if x.rows() != labels.len() {
        return Err(Error::shape(format!(
            "dump_embeddings: {} rows vs {} labels",
            x.rows(),
            labels.len()
        )));
    }
    let adversary = session
        .adversary_index()
        .ok_or_else(|| Error::state("no adversary party designated".to_string()))?;
    let xk = session.party_slice(x, adversary);
    let (embeddings, _) = session.parties[adversary].bottom.forward(&xk)?;

    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = (0..embeddings.cols()).map(|j| format!("e{j}")).collect();
    header.push("label".to_string());
    writer
        .write_record(&header)
        .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
    for r in 0..embeddings.rows() {
        let mut record: Vec<String> = embeddings.row(r).iter().map(|v| v.to_string()).collect();
        record.push(labels[r].to_string());
        writer
            .write_record(&record)
            .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOB_RUN: &str = r#"
[dataset]
kind = "synthetic"
n = 240
d = 8
classes = 2
cluster_separation = 6.0
noise_std = 1.0

[split]
parties = 2

[model]
embedding_dim = 4
bottom_hidden = [8]
top_hidden = [8]

[sgd]
learning_rate = 0.1
batch_size = 32
epochs = 4

[attack]
kind = "passive"

[evaluation]
metric = "top1"
seeds = [3, 4]
"#;

    #[test]
    fn seed_plan_components_differ() {
        let plan = SeedPlan::from_master(1);
        let seeds = [
            plan.data,
            plan.split,
            plan.init,
            plan.train,
            plan.teacher,
            plan.attack,
        ];
        for (i, a) in seeds.iter().enumerate() {
            for b in &seeds[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(SeedPlan::from_master(1), SeedPlan::from_master(1));
        assert_ne!(SeedPlan::from_master(1).data, SeedPlan::from_master(2).data);
    }

    #[test]
    fn run_experiment_end_to_end_with_passive_attack() {
        let cfg = parse_config(BLOB_RUN).unwrap();
        let record = run_experiment(&cfg).unwrap();
        assert_eq!(record.per_seed.len(), 2);
        for outcome in &record.per_seed {
            assert!(outcome.task_metric > 0.5);
            assert!(outcome.attack_success.is_some());
            assert_eq!(outcome.epoch_seconds.len(), 4);
        }
        assert!(record.aggregate.attack_success_mean.is_some());
    }

    #[test]
    fn determinism_up_to_timing() {
        let cfg = parse_config(BLOB_RUN).unwrap();
        let mut a = run_experiment(&cfg).unwrap();
        let mut b = run_experiment(&cfg).unwrap();
        for o in a.per_seed.iter_mut().chain(b.per_seed.iter_mut()) {
            o.epoch_seconds.iter_mut().for_each(|s| *s = 0.0);
        }
        a.aggregate.mean_epoch_seconds = 0.0;
        b.aggregate.mean_epoch_seconds = 0.0;
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn aggregates_recompute_from_per_seed() {
        let cfg = parse_config(BLOB_RUN).unwrap();
        let record = run_experiment(&cfg).unwrap();
        let recomputed = Aggregate::from_outcomes(&record.per_seed);
        assert!((recomputed.task_metric_mean - record.aggregate.task_metric_mean).abs() <= 1e-12);
        assert!((recomputed.task_metric_std - record.aggregate.task_metric_std).abs() <= 1e-12);
    }

    #[test]
    fn stage_tagging_names_the_failing_stage() {
        let mut cfg = parse_config(BLOB_RUN).unwrap();
        // f1 on a binary task is fine; break it by requesting 3 classes
        // worth of blobs with an f1 metric.
        cfg.dataset.classes = Some(3);
        cfg.evaluation.metric = crate::metrics::Metric::F1Binary;
        let err = run_experiment(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stage"), "{msg}");
        assert!(msg.contains("seed 3"), "{msg}");
    }

    #[test]
    fn run_rejects_sweep_configs() {
        let text = format!(
            "{BLOB_RUN}\n[[sweep.parameters]]\npath = \"sgd.epochs\"\nvalues = [1]\n"
        );
        let cfg = parse_config(&text).unwrap();
        assert!(run_experiment(&cfg).is_err());
        // But the sweep runner accepts it.
        let records = run_sweep(&text).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].per_seed[0].epoch_seconds.len(), 1);
    }

    #[test]
    fn single_point_sweep_equals_run_experiment() {
        let text = format!(
            "{BLOB_RUN}\n[[sweep.parameters]]\npath = \"sgd.epochs\"\nvalues = [4]\n"
        );
        let sweep_records = run_sweep(&text).unwrap();
        let cfg = parse_config(BLOB_RUN).unwrap();
        let direct = run_experiment(&cfg).unwrap();
        assert_eq!(sweep_records.len(), 1);
        let a = &sweep_records[0].per_seed;
        let b = &direct.per_seed;
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.task_metric.to_bits(), y.task_metric.to_bits());
            assert_eq!(x.attack_success, y.attack_success);
        }
    }

    #[test]
    fn dump_embeddings_layout_and_determinism() {
        let cfg = parse_config(BLOB_RUN).unwrap();
        let plan = SeedPlan::from_master(7);
        let (train, _) = build_dataset(&cfg, &plan).unwrap();
        let session = build_session(&cfg, &train, &plan).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("emb_a.csv");
        let path_b = dir.path().join("emb_b.csv");
        dump_embeddings(&session, &train.x, &train.y, &path_a).unwrap();
        dump_embeddings(&session, &train.x, &train.y, &path_b).unwrap();

        let text = std::fs::read_to_string(&path_a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), train.len() + 1);
        assert_eq!(lines[0], "e0,e1,e2,e3,label");
        // No training steps between dumps: byte-identical.
        assert_eq!(text, std::fs::read_to_string(&path_b).unwrap());
    }
}
