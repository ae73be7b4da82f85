//! Declarative experiment configuration.
//!
//! One TOML file describes the whole pipeline: dataset, vertical split,
//! model widths, optimizer, defense stack, attack, metric, and seeds.
//! Unknown keys are hard errors — a silently misspelled parameter would
//! invalidate a sweep. The optional `[sweep]` section lists one or two
//! dotted parameter paths with value lists for grid runs.

use serde::{Deserialize, Serialize};

use crate::attack::{ActiveAttackConfig, DirectAttackConfig, PassiveAttackConfig};
use crate::data::{SplitAssignment, SyntheticSpec, VerticalSplitSpec};
use crate::defense::{
    DefenseStack, GenoConfig, GenoMode, GradientDefense, LadistillConfig, Polarity, SgsubConfig,
    TeacherScope,
};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::protocol::LossKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub sgd: SgdSection,
    #[serde(default)]
    pub defense: DefenseSection,
    #[serde(default)]
    pub attack: AttackSection,
    pub evaluation: EvaluationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// `synthetic` or `csv`.
    pub kind: String,
    // Synthetic fields.
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub classes: Option<usize>,
    pub cluster_separation: Option<f64>,
    pub noise_std: Option<f64>,
    // CSV fields.
    pub path: Option<String>,
    pub label_column: Option<String>,
    pub has_header: Option<bool>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_true() -> bool {
    true
}

impl DatasetSection {
    pub fn validate(&self) -> Result<()> {
        match self.kind.as_str() {
            "synthetic" => {
                for (name, missing) in [
                    ("n", self.n.is_none()),
                    ("d", self.d.is_none()),
                    ("classes", self.classes.is_none()),
                    ("cluster_separation", self.cluster_separation.is_none()),
                    ("noise_std", self.noise_std.is_none()),
                ] {
                    if missing {
                        return Err(Error::config(format!(
                            "dataset.{name} is required for kind = \"synthetic\""
                        )));
                    }
                }
                if self.path.is_some() || self.label_column.is_some() || self.has_header.is_some()
                {
                    return Err(Error::config(
                        "csv fields are not allowed for a synthetic dataset".to_string(),
                    ));
                }
            }
            "csv" => {
                if self.path.is_none() || self.label_column.is_none() {
                    return Err(Error::config(
                        "dataset.path and dataset.label_column are required for kind = \"csv\""
                            .to_string(),
                    ));
                }
                if self.n.is_some()
                    || self.d.is_some()
                    || self.classes.is_some()
                    || self.cluster_separation.is_some()
                    || self.noise_std.is_some()
                {
                    return Err(Error::config(
                        "synthetic fields are not allowed for a csv dataset".to_string(),
                    ));
                }
            }
            other => {
                return Err(Error::config(format!(
                    "dataset.kind must be \"synthetic\" or \"csv\", got \"{other}\""
                )))
            }
        }
        Ok(())
    }

    pub fn synthetic_spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n: self.n.unwrap(),
            d: self.d.unwrap(),
            n_classes: self.classes.unwrap(),
            cluster_separation: self.cluster_separation.unwrap(),
            noise_std: self.noise_std.unwrap(),
            seed,
        }
    }

    /// Short descriptor for result tables.
    pub fn describe(&self) -> String {
        match self.kind.as_str() {
            "synthetic" => format!(
                "synthetic(n={};d={};c={})",
                self.n.unwrap_or(0),
                self.d.unwrap_or(0),
                self.classes.unwrap_or(0)
            ),
            _ => format!("csv({})", self.path.as_deref().unwrap_or("?")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub parties: usize,
    /// Index of the designated semi-honest party.
    #[serde(default)]
    pub adversary: usize,
    /// `contiguous_even` (default) or explicit column lists.
    #[serde(default = "default_assignment")]
    pub assignment: String,
    pub explicit: Option<Vec<Vec<usize>>>,
}

fn default_assignment() -> String {
    "contiguous_even".to_string()
}

impl SplitSection {
    pub fn to_spec(&self) -> Result<VerticalSplitSpec> {
        let assignment = match self.assignment.as_str() {
            "contiguous_even" => {
                if self.explicit.is_some() {
                    return Err(Error::config(
                        "split.explicit requires assignment = \"explicit\"".to_string(),
                    ));
                }
                SplitAssignment::ContiguousEven
            }
            "explicit" => SplitAssignment::Explicit(self.explicit.clone().ok_or_else(|| {
                Error::config("assignment = \"explicit\" needs split.explicit".to_string())
            })?),
            other => {
                return Err(Error::config(format!(
                    "split.assignment must be \"contiguous_even\" or \"explicit\", got \"{other}\""
                )))
            }
        };
        Ok(VerticalSplitSpec {
            parties: self.parties,
            assignment,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_hidden")]
    pub bottom_hidden: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub top_hidden: Vec<usize>,
    /// `softmax` (default) or `logistic` (binary, single-logit head).
    #[serde(default = "default_loss")]
    pub loss: String,
}

fn default_embedding_dim() -> usize {
    8
}

fn default_hidden() -> Vec<usize> {
    vec![16]
}

fn default_loss() -> String {
    "softmax".to_string()
}

impl ModelSection {
    pub fn loss_kind(&self) -> Result<LossKind> {
        match self.loss.as_str() {
            "softmax" => Ok(LossKind::SoftmaxCe),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::config(format!(
                "model.loss must be \"softmax\" or \"logistic\", got \"{other}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSection {
    pub geno: Option<GenoSection>,
    pub sgsub: Option<SgsubSection>,
    pub ladistill: Option<LadistillSection>,
    pub gc: Option<GcSection>,
    pub ng: Option<NgSection>,
    pub mg: Option<MgSection>,
    pub ppdl: Option<PpdlSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenoSection {
    /// `auto` (default) or `fixed`.
    #[serde(default = "default_geno_mode")]
    pub mode: String,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
}

fn default_geno_mode() -> String {
    "auto".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgsubSection {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_w_cos")]
    pub w_cos: f64,
    #[serde(default = "default_w_m")]
    pub w_m: f64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_polarity")]
    pub polarity: String,
}

fn default_tau() -> f64 {
    0.5
}
fn default_w_cos() -> f64 {
    1.0
}
fn default_w_m() -> f64 {
    0.05
}
fn default_max_attempts() -> usize {
    50
}
fn default_polarity() -> String {
    "dissimilarity".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadistillSection {
    pub k: usize,
    pub epsilon: f64,
    #[serde(default = "default_teacher_epochs")]
    pub teacher_epochs: usize,
    #[serde(default = "default_hidden")]
    pub teacher_hidden: Vec<usize>,
    /// `full` (default) or `owner_slice`.
    #[serde(default = "default_teacher_scope")]
    pub teacher_scope: String,
}

fn default_teacher_epochs() -> usize {
    30
}
fn default_teacher_scope() -> String {
    "full".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcSection {
    pub keep_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgSection {
    pub laplace_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgSection {
    pub buckets: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpdlSection {
    pub share_fraction: f64,
}

impl DefenseSection {
    /// Builds the runtime defense stack. At most one gradient-space
    /// defense may be configured.
    pub fn to_stack(&self) -> Result<DefenseStack> {
        let mut gradient_defenses: Vec<GradientDefense> = Vec::new();
        if let Some(s) = &self.sgsub {
            let polarity = match s.polarity.as_str() {
                "dissimilarity" => Polarity::Dissimilarity,
                "literal" => Polarity::Literal,
                other => {
                    return Err(Error::config(format!(
                        "sgsub.polarity must be \"dissimilarity\" or \"literal\", got \"{other}\""
                    )))
                }
            };
            gradient_defenses.push(GradientDefense::Sgsub(SgsubConfig {
                tau: s.tau,
                w_cos: s.w_cos,
                w_m: s.w_m,
                max_attempts: s.max_attempts,
                polarity,
            }));
        }
        if let Some(g) = &self.gc {
            gradient_defenses.push(GradientDefense::GradientClip {
                keep_fraction: g.keep_fraction,
            });
        }
        if let Some(n) = &self.ng {
            gradient_defenses.push(GradientDefense::LaplaceNoise {
                scale: n.laplace_scale,
            });
        }
        if let Some(m) = &self.mg {
            gradient_defenses.push(GradientDefense::BucketQuantize { buckets: m.buckets });
        }
        if let Some(p) = &self.ppdl {
            gradient_defenses.push(GradientDefense::SelectiveShare {
                share_fraction: p.share_fraction,
            });
        }
        if gradient_defenses.len() > 1 {
            return Err(Error::config(
                "at most one gradient-space defense (sgsub/gc/ng/mg/ppdl) may be configured"
                    .to_string(),
            ));
        }
        let gradient = gradient_defenses.pop().unwrap_or(GradientDefense::None);

        let geno = match &self.geno {
            None => None,
            Some(g) => {
                let mode = match g.mode.as_str() {
                    "auto" => {
                        if g.lambda.is_some() {
                            return Err(Error::config(
                                "geno.lambda requires mode = \"fixed\"".to_string(),
                            ));
                        }
                        GenoMode::Auto {
                            c: g.c.unwrap_or(5.0),
                        }
                    }
                    "fixed" => {
                        if g.c.is_some() {
                            return Err(Error::config(
                                "geno.c requires mode = \"auto\"".to_string(),
                            ));
                        }
                        GenoMode::Fixed {
                            lambda: g.lambda.ok_or_else(|| {
                                Error::config("geno mode = \"fixed\" needs lambda".to_string())
                            })?,
                        }
                    }
                    other => {
                        return Err(Error::config(format!(
                            "geno.mode must be \"auto\" or \"fixed\", got \"{other}\""
                        )))
                    }
                };
                // Inside the training loop flagged gradients are always
                // zeroed to preserve shapes.
                Some(GenoConfig {
                    mode,
                    action: Default::default(),
                })
            }
        };

        let ladistill = match &self.ladistill {
            None => None,
            Some(l) => {
                let scope = match l.teacher_scope.as_str() {
                    "full" => TeacherScope::Full,
                    "owner_slice" => TeacherScope::OwnerSlice,
                    other => {
                        return Err(Error::config(format!(
                            "ladistill.teacher_scope must be \"full\" or \"owner_slice\", got \"{other}\""
                        )))
                    }
                };
                Some(LadistillConfig {
                    k: l.k,
                    epsilon: l.epsilon,
                    teacher_epochs: l.teacher_epochs,
                    teacher_hidden: l.teacher_hidden.clone(),
                    teacher_scope: scope,
                })
            }
        };

        DefenseStack::new(geno, gradient, ladistill)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    /// `none` (default), `passive`, `active`, or `direct`.
    #[serde(default = "default_attack_kind")]
    pub kind: String,
    pub passive: Option<PassiveSection>,
    pub active: Option<ActiveSection>,
    pub direct: Option<DirectSection>,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kind: default_attack_kind(),
            passive: None,
            active: None,
            direct: None,
        }
    }
}

fn default_attack_kind() -> String {
    "none".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassiveSection {
    #[serde(default = "default_aux_per_class")]
    pub aux_per_class: usize,
    #[serde(default = "default_hidden")]
    pub head_hidden: Vec<usize>,
    #[serde(default = "default_head_epochs")]
    pub head_epochs: usize,
    #[serde(default = "default_eval_split")]
    pub eval_split: f64,
}

fn default_aux_per_class() -> usize {
    5
}
fn default_head_epochs() -> usize {
    300
}
fn default_eval_split() -> f64 {
    0.5
}

impl PassiveSection {
    pub fn to_config(&self) -> PassiveAttackConfig {
        PassiveAttackConfig {
            aux_per_class: self.aux_per_class,
            head_hidden: self.head_hidden.clone(),
            head_epochs: self.head_epochs,
            eval_split: self.eval_split,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSection {
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectSection {
    pub observation_batches: usize,
}

impl AttackSection {
    pub fn validate(&self) -> Result<()> {
        match self.kind.as_str() {
            "none" | "passive" => Ok(()),
            "active" => {
                if self.active.is_none() {
                    Err(Error::config(
                        "attack.kind = \"active\" needs an [attack.active] table".to_string(),
                    ))
                } else {
                    Ok(())
                }
            }
            "direct" => {
                if self.direct.is_none() {
                    Err(Error::config(
                        "attack.kind = \"direct\" needs an [attack.direct] table".to_string(),
                    ))
                } else {
                    Ok(())
                }
            }
            other => Err(Error::config(format!(
                "attack.kind must be none/passive/active/direct, got \"{other}\""
            ))),
        }
    }

    pub fn passive_config(&self) -> PassiveAttackConfig {
        self.passive
            .as_ref()
            .map(|p| p.to_config())
            .unwrap_or_default()
    }

    pub fn active_config(&self) -> Option<ActiveAttackConfig> {
        self.active.as_ref().map(|a| ActiveAttackConfig { alpha: a.alpha })
    }

    pub fn direct_config(&self) -> Option<DirectAttackConfig> {
        self.direct.as_ref().map(|d| DirectAttackConfig {
            observation_batches: d.observation_batches,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub metric: Metric,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameters: Vec<SweepParameter>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParameter {
    /// Dotted key path into this config, e.g. `defense.ng.laplace_scale`.
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.split.to_spec()?;
        self.model.loss_kind()?;
        self.defense.to_stack()?;
        self.attack.validate()?;
        if self.evaluation.seeds.is_empty() {
            return Err(Error::config("evaluation.seeds must not be empty"));
        }
        if self.split.adversary >= self.split.parties {
            return Err(Error::config(format!(
                "split.adversary {} out of range for {} parties",
                self.split.adversary, self.split.parties
            )));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.parameters.is_empty() || sweep.parameters.len() > 2 {
                return Err(Error::config(
                    "sweep needs one or two swept parameters".to_string(),
                ));
            }
            for p in &sweep.parameters {
                if p.values.is_empty() {
                    return Err(Error::config(format!(
                        "sweep parameter '{}' has an empty value list",
                        p.path
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a config from TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file.
pub fn load_config(path: impl AsRef<std::path::Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_config(&text)
}

/// Expands the `[sweep]` section of a raw config into the Cartesian
/// product of its parameter values, applied to the base document. Each
/// point re-validates, so a path that does not exist in the schema is a
/// hard error.
pub fn expand_sweep(text: &str) -> Result<Vec<ExperimentConfig>> {
    let base: toml::Value =
        toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
    // Validate the base shape first for a clear error message.
    let parsed = parse_config(text)?;
    let sweep = parsed
        .sweep
        .clone()
        .ok_or_else(|| Error::config("config has no [sweep] section".to_string()))?;

    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for parameter in &sweep.parameters {
        let mut next = Vec::new();
        for combo in &combos {
            for value in &parameter.values {
                let mut extended = combo.clone();
                extended.push((parameter.path.clone(), value.clone()));
                next.push(extended);
            }
        }
        combos = next;
    }

    let mut configs = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut doc = base.clone();
        for (path, value) in &combo {
            set_path(&mut doc, path, value.clone())?;
        }
        // Points are standalone experiments; drop the sweep section.
        if let Some(table) = doc.as_table_mut() {
            table.remove("sweep");
        }
        let mut cfg: ExperimentConfig = doc
            .try_into()
            .map_err(|e| Error::config(format!("sweep point {combo:?}: {e}")))?;
        cfg.sweep = None;
        cfg.validate()
            .map_err(|e| Error::config(format!("sweep point {combo:?}: {e}")))?;
        configs.push(cfg);
    }
    Ok(configs)
}

/// Sets a dotted path inside a TOML document, creating intermediate
/// tables as needed.
fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config(format!("malformed sweep path '{path}'")));
    }
    let mut node = doc;
    for segment in &segments[..segments.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::config(format!("sweep path '{path}': '{segment}' is not a table"))
        })?;
        node = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(|| {
        Error::config(format!("sweep path '{path}' does not lead into a table"))
    })?;
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BASE: &str = r#"
[dataset]
kind = "synthetic"
n = 200
d = 8
classes = 2
cluster_separation = 6.0
noise_std = 1.0

[split]
parties = 2

[model]
embedding_dim = 4

[sgd]
learning_rate = 0.1
batch_size = 32
epochs = 2

[evaluation]
metric = "top1"
seeds = [1, 2]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config(BASE).unwrap();
        assert_eq!(cfg.model.embedding_dim, 4);
        assert_eq!(cfg.model.bottom_hidden, vec![16]);
        assert_eq!(cfg.attack.kind, "none");
        assert_eq!(cfg.dataset.test_fraction, 0.25);
        assert!(cfg.defense.to_stack().unwrap().describe() == "none");
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let bad = BASE.replace("[sgd]", "[sgd]\nmomentum = 0.9");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("momentum"), "{err}");
    }

    #[test]
    fn kind_specific_field_mixups_are_rejected() {
        let bad = BASE.replace("noise_std = 1.0", "noise_std = 1.0\npath = \"x.csv\"");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn two_gradient_defenses_are_rejected() {
        let bad = format!("{BASE}\n[defense.ng]\nlaplace_scale = 0.001\n[defense.gc]\nkeep_fraction = 0.5\n");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn sweep_expansion_is_cartesian() {
        let text = format!(
            "{BASE}\n[defense.ng]\nlaplace_scale = 1.0\n\n[[sweep.parameters]]\npath = \"defense.ng.laplace_scale\"\nvalues = [0.1, 0.01]\n\n[[sweep.parameters]]\npath = \"sgd.epochs\"\nvalues = [1, 2, 3]\n"
        );
        let points = expand_sweep(&text).unwrap();
        assert_eq!(points.len(), 6);
        assert!(points.iter().all(|p| p.sweep.is_none()));
        let scales: Vec<f64> = points
            .iter()
            .map(|p| p.defense.ng.as_ref().unwrap().laplace_scale)
            .collect();
        assert_eq!(scales.iter().filter(|&&s| s == 0.1).count(), 3);
    }

    #[test]
    fn sweep_can_create_missing_tables() {
        let text = format!(
            "{BASE}\n[[sweep.parameters]]\npath = \"defense.ng.laplace_scale\"\nvalues = [0.5]\n"
        );
        let points = expand_sweep(&text).unwrap();
        assert_eq!(points[0].defense.ng.as_ref().unwrap().laplace_scale, 0.5);
    }

    #[test]
    fn sweep_with_bogus_path_is_rejected() {
        let text = format!(
            "{BASE}\n[[sweep.parameters]]\npath = \"defense.ng.lapalce_scale\"\nvalues = [0.5]\n"
        );
        assert!(expand_sweep(&text).is_err());
    }

    #[test]
    fn sweep_rejects_empty_values_and_too_many_paths() {
        let empty = format!(
            "{BASE}\n[[sweep.parameters]]\npath = \"sgd.epochs\"\nvalues = []\n"
        );
        assert!(parse_config(&empty).is_err());
        let three = format!(
            "{BASE}\n[[sweep.parameters]]\npath = \"sgd.epochs\"\nvalues = [1]\n[[sweep.parameters]]\npath = \"sgd.batch_size\"\nvalues = [1]\n[[sweep.parameters]]\npath = \"sgd.learning_rate\"\nvalues = [0.1]\n"
        );
        assert!(parse_config(&three).is_err());
    }

    #[test]
    fn config_echo_serializes_to_json() {
        let cfg = parse_config(BASE).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"metric\":\"top1\""));
    }
}
