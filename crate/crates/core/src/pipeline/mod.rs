//! Standalone and pipeline evaluation, speaker profiles and reports.
//!
//! Standalone mode feeds every stage gold upstream inputs. Pipeline mode
//! feeds stage 2 the utterances stage 1 flagged and stage 3 the types stage 2
//! predicted. Gold persona utterances that stage 1 misses still count in the
//! stage-2 and stage-3 scores, as a wrong type and an empty value.

mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, render_report, PipelineReference, REFERENCE};

use crate::corpus::{Corpus, Dialogue, PersonaType, Split, TypedInstance};
use crate::discovery::{predict_discovery, DiscoveryModel};
use crate::error::{Error, Result};
use crate::metrics::{confusion, prf1, ConfusionMatrix, GenerationScores, MetricReport, TypeScores};
use crate::typeid::{classify, TypeIdModel};
use crate::valueex::ValueExModel;

/// Stage 1.
pub trait PersonaDetector: Sync {
    fn detect(&self, dialogue: &Dialogue) -> Result<Vec<bool>>;
}

/// Stage 2.
pub trait TypeClassifier: Sync {
    fn classify(&self, instance: &TypedInstance) -> Result<PersonaType>;
}

/// Stage 3.
pub trait ValueGenerator: Sync {
    fn generate(&self, instance: &TypedInstance, dialogue: &Dialogue, persona_type: PersonaType) -> Result<String>;
}

impl PersonaDetector for DiscoveryModel {
    fn detect(&self, dialogue: &Dialogue) -> Result<Vec<bool>> {
        Ok(predict_discovery(self, dialogue)?.positive)
    }
}

impl TypeClassifier for TypeIdModel {
    fn classify(&self, instance: &TypedInstance) -> Result<PersonaType> {
        classify(self, instance)
    }
}

impl ValueGenerator for ValueExModel {
    fn generate(&self, instance: &TypedInstance, dialogue: &Dialogue, persona_type: PersonaType) -> Result<String> {
        ValueExModel::generate(self, instance, dialogue, Some(persona_type))
    }
}

/// Echoes the gold annotation of each utterance.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldDetector;

/// Echoes the gold type; utterances without one get `Misc`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldTypes;

/// Echoes the gold value; utterances without one get an empty string.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldValues;

impl PersonaDetector for GoldDetector {
    fn detect(&self, dialogue: &Dialogue) -> Result<Vec<bool>> {
        Ok(dialogue.utterances.iter().map(|u| u.has_persona).collect())
    }
}

impl TypeClassifier for GoldTypes {
    fn classify(&self, instance: &TypedInstance) -> Result<PersonaType> {
        Ok(instance.target.persona_type.unwrap_or(PersonaType::Misc))
    }
}

impl ValueGenerator for GoldValues {
    fn generate(&self, instance: &TypedInstance, _: &Dialogue, _: PersonaType) -> Result<String> {
        Ok(instance.target.persona_value.clone().unwrap_or_default())
    }
}

/// The three stages to evaluate.
#[derive(Clone, Copy)]
pub struct Stages<'a> {
    pub detector: &'a dyn PersonaDetector,
    pub classifier: &'a dyn TypeClassifier,
    pub generator: &'a dyn ValueGenerator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Standalone,
    Pipeline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Standalone => "standalone",
            Self::Pipeline => "pipeline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standalone" => Ok(Self::Standalone),
            "pipeline" => Ok(Self::Pipeline),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feed {
    Gold,
    Predicted,
}

/// Where the inputs of stages 2 and 3 came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub typing: Feed,
    pub values: Feed,
}

/// Stage-2 and stage-3 output for one target utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutput {
    pub index: usize,
    pub persona_type: PersonaType,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DialogueOutputs {
    pub dialogue_id: String,
    pub discovery: Vec<bool>,
    /// Ordered by utterance index.
    pub instances: Vec<InstanceOutput>,
}

impl DialogueOutputs {
    pub fn instance(&self, index: usize) -> Option<&InstanceOutput> {
        self.instances
            .binary_search_by_key(&index, |i| i.index)
            .ok()
            .map(|i| &self.instances[i])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageOutputs {
    pub dialogues: Vec<DialogueOutputs>,
}

/// Options shared by both evaluation modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub split: Split,
    /// Cap on each exemplar list.
    pub max_exemplars: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            split: Split::Test,
            max_exemplars: 10,
        }
    }
}

/// An utterance quoted in an error listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub dialogue_id: String,
    pub index: usize,
    pub speaker: String,
    pub utterance: String,
    pub gold: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Exemplars {
    pub false_positives: Vec<Exemplar>,
    pub false_negatives: Vec<Exemplar>,
    pub type_errors: Vec<Exemplar>,
}

/// Everything that is scored; identical between modes when the upstream
/// stages are gold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResults {
    pub metrics: MetricReport,
    pub discovery_confusion: ConfusionMatrix,
    /// Over typed gold persona utterances that reached stage 2.
    pub type_confusion: ConfusionMatrix,
    /// Gold persona utterances stage 2 never saw.
    pub missed: usize,
    pub exemplars: Exemplars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub split: Split,
    pub provenance: Provenance,
    pub results: EvalResults,
    /// Configuration the run was made with.
    pub config: serde_json::Value,
    #[serde(skip)]
    pub outputs: StageOutputs,
}

impl EvalReport {
    /// Machine-readable form, one JSON document with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Data(e.to_string()))
    }
}

fn run_dialogue(dialogue: &Dialogue, stages: Stages<'_>, mode: Mode) -> Result<DialogueOutputs> {
    let discovery = stages.detector.detect(dialogue)?;
    if discovery.len() != dialogue.len() {
        return Err(Error::Shape(format!(
            "detector returned {} labels for {} utterances in dialogue {}",
            discovery.len(),
            dialogue.len(),
            dialogue.id
        )));
    }
    let targets: Vec<usize> = match mode {
        Mode::Standalone => dialogue.utterances.iter().filter(|u| u.has_persona).map(|u| u.index).collect(),
        Mode::Pipeline => (0..dialogue.len()).filter(|&i| discovery[i]).collect(),
    };
    let mut instances = Vec::with_capacity(targets.len());
    for index in targets {
        let inst = TypedInstance::from_dialogue(dialogue, index);
        let predicted = stages.classifier.classify(&inst)?;
        let value_type = match mode {
            Mode::Standalone => inst.gold_type.unwrap_or(predicted),
            Mode::Pipeline => predicted,
        };
        let value = stages.generator.generate(&inst, dialogue, value_type)?;
        instances.push(InstanceOutput {
            index,
            persona_type: predicted,
            value,
        });
    }
    Ok(DialogueOutputs {
        dialogue_id: dialogue.id.clone(),
        discovery,
        instances,
    })
}

fn evaluate(
    corpus: &Corpus,
    stages: Stages<'_>,
    mode: Mode,
    options: &EvalOptions,
    config: serde_json::Value,
) -> Result<EvalReport> {
    let dialogues = corpus.split(options.split);
    if dialogues.is_empty() {
        return Err(Error::Missing(format!("split {} is empty or absent", options.split)));
    }
    let outputs: Vec<DialogueOutputs> = dialogues
        .par_iter()
        .map(|d| run_dialogue(d, stages, mode))
        .collect::<Result<_>>()?;
    let results = score(dialogues, &outputs, options)?;
    let predicted = match mode {
        Mode::Standalone => Feed::Gold,
        Mode::Pipeline => Feed::Predicted,
    };
    Ok(EvalReport {
        mode,
        split: options.split,
        provenance: Provenance {
            typing: predicted,
            values: predicted,
        },
        results,
        config,
        outputs: StageOutputs { dialogues: outputs },
    })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn score(dialogues: &[Dialogue], outputs: &[DialogueOutputs], options: &EvalOptions) -> Result<EvalResults> {
    let mut disc_pred = Vec::new();
    let mut disc_gold = Vec::new();
    let mut type_pred: Vec<Option<PersonaType>> = Vec::new();
    let mut type_gold = Vec::new();
    let mut reached_pred = Vec::new();
    let mut reached_gold = Vec::new();
    let mut values: Vec<(String, String)> = Vec::new();
    let mut missed = 0;
    let mut ex = Exemplars::default();
    let cap = options.max_exemplars;
    let quote = |d: &Dialogue, i: usize, gold: String, predicted: String| {
        let u = &d.utterances[i];
        Exemplar {
            dialogue_id: d.id.clone(),
            index: i,
            speaker: u.speaker_id.clone(),
            utterance: u.text.clone(),
            gold,
            predicted,
        }
    };
    for (d, out) in dialogues.iter().zip(outputs) {
        for (u, &p) in d.utterances.iter().zip(&out.discovery) {
            disc_pred.push(p);
            disc_gold.push(u.has_persona);
            let list = match (u.has_persona, p) {
                (false, true) => &mut ex.false_positives,
                (true, false) => &mut ex.false_negatives,
                _ => continue,
            };
            if list.len() < cap {
                list.push(quote(d, u.index, yes_no(u.has_persona).into(), yes_no(p).into()));
            }
        }
        for u in d.utterances.iter().filter(|u| u.has_persona) {
            let Some(gold) = u.persona_type else { continue };
            let reached = out.instance(u.index);
            let predicted = reached.map(|r| r.persona_type);
            type_pred.push(predicted);
            type_gold.push(gold);
            match predicted {
                Some(p) => {
                    reached_pred.push(p);
                    reached_gold.push(gold);
                }
                None => missed += 1,
            }
            if predicted != Some(gold) && ex.type_errors.len() < cap {
                let shown = predicted.map_or("(missed)", PersonaType::as_str);
                ex.type_errors.push(quote(d, u.index, gold.to_string(), shown.into()));
            }
            if let Some(v) = &u.persona_value {
                values.push((reached.map(|r| r.value.clone()).unwrap_or_default(), v.clone()));
            }
        }
    }
    let typing = if type_gold.is_empty() {
        None
    } else {
        Some(TypeScores::compute(&type_pred, &type_gold)?)
    };
    let generation = if values.is_empty() {
        None
    } else {
        Some(GenerationScores::mean(values.iter().map(|(c, r)| (c.as_str(), r.as_str())))?)
    };
    let disc_labels = ["no", "yes"];
    let disc_p: Vec<&str> = disc_pred.iter().map(|p| yes_no(*p)).collect();
    let disc_g: Vec<&str> = disc_gold.iter().map(|g| yes_no(*g)).collect();
    Ok(EvalResults {
        metrics: MetricReport {
            discovery: Some(prf1(&disc_pred, &disc_gold)?),
            typing,
            generation,
        },
        discovery_confusion: confusion(&disc_p, &disc_g, &disc_labels)?,
        type_confusion: confusion(&reached_pred, &reached_gold, &PersonaType::ALL)?,
        missed,
        exemplars: ex,
    })
}

/// Score every stage on gold upstream inputs.
pub fn run_standalone(
    corpus: &Corpus,
    stages: Stages<'_>,
    options: &EvalOptions,
    config: serde_json::Value,
) -> Result<EvalReport> {
    evaluate(corpus, stages, Mode::Standalone, options, config)
}

/// Chain the stages on their own predictions.
pub fn run_pipeline(
    corpus: &Corpus,
    stages: Stages<'_>,
    options: &EvalOptions,
    config: serde_json::Value,
) -> Result<EvalReport> {
    evaluate(corpus, stages, Mode::Pipeline, options, config)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub persona_type: PersonaType,
    pub value: String,
    pub evidence: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    /// Ordered by evidence index.
    pub entries: Vec<ProfileEntry>,
}

/// One profile per speaker with at least one typed instance, ordered by
/// each speaker's first evidence utterance.
pub fn assemble_profiles(dialogue: &Dialogue, outputs: &DialogueOutputs) -> Result<Vec<SpeakerProfile>> {
    if outputs.dialogue_id != dialogue.id {
        return Err(Error::InvalidArgument(format!(
            "outputs for dialogue {} given with dialogue {}",
            outputs.dialogue_id, dialogue.id
        )));
    }
    let mut instances: Vec<&InstanceOutput> = outputs.instances.iter().collect();
    instances.sort_by_key(|i| i.index);
    let mut order: Vec<String> = Vec::new();
    let mut by_speaker: BTreeMap<String, Vec<ProfileEntry>> = BTreeMap::new();
    for inst in instances {
        let u = dialogue.utterances.get(inst.index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "instance index {} outside dialogue {} of length {}",
                inst.index,
                dialogue.id,
                dialogue.len()
            ))
        })?;
        if !by_speaker.contains_key(&u.speaker_id) {
            order.push(u.speaker_id.clone());
        }
        by_speaker.entry(u.speaker_id.clone()).or_default().push(ProfileEntry {
            persona_type: inst.persona_type,
            value: inst.value.clone(),
            evidence: inst.index,
        });
    }
    Ok(order
        .into_iter()
        .map(|s| SpeakerProfile {
            entries: by_speaker.remove(&s).unwrap_or_default(),
            speaker_id: s,
        })
        .collect())
}
