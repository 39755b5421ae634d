//! Run configuration, trial plans and trial construction.
//!
//! A plan is the cross product of categories, phases, the ten template
//! variants and repetition indices. Each descriptor carries its own seed,
//! derived from the master seed and its coordinates, and every random choice
//! made while building that trial is drawn from streams keyed by that seed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ModelEndpoint};
use crate::catalog::{self, Attribute, Category, StereotypeMap, Target, MIN_STIMULI};
use crate::seed;
use crate::templates::{
    self, render_explicit, render_implicit, shuffle_likert, Instruction, LikertScale,
    SentenceTemplate, TemplateId,
};

/// Stimuli drawn from each target group per implicit trial.
pub const SUBSET_SIZE: usize = 5;
pub const DEFAULT_REPS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Implicit,
    Explicit,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Implicit, Phase::Explicit];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Implicit => "implicit",
            Phase::Explicit => "explicit",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "implicit" => Ok(Phase::Implicit),
            "explicit" => Ok(Phase::Explicit),
            other => Err(ProtocolError::InvalidConfig(format!("unknown phase {other:?}"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("category {category:?}: {field} has {found} stimuli, need at least {MIN_STIMULI}")]
    InsufficientStimuli {
        category: String,
        field: &'static str,
        found: usize,
    },
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Endpoint(#[from] BackendError),
}

/// Optional numeric tags describing the evaluated checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorTags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain_tokens: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_step: Option<f64>,
}

impl FactorTags {
    fn check(&self) -> Result<(), ProtocolError> {
        for (name, v) in [
            ("parameters", self.parameters),
            ("pretrain_tokens", self.pretrain_tokens),
            ("alignment_step", self.alignment_step),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(ProtocolError::InvalidConfig(format!(
                        "factor tag {name} must be a non-negative number, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn default_seed() -> u64 {
    42
}

fn default_reps() -> u32 {
    DEFAULT_REPS
}

fn default_categories() -> Vec<String> {
    catalog::BUILTIN_IDS.iter().map(|s| s.to_string()).collect()
}

fn default_phases() -> Vec<Phase> {
    Phase::BOTH.to_vec()
}

fn default_instruction_version() -> String {
    templates::DEFAULT_INSTRUCTION_VERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    /// Label used in reports. Defaults to the endpoint's model name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_tag: Option<String>,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_reps")]
    pub reps_per_template: u32,
    #[serde(default = "default_categories")]
    pub categories: Vec<String>,
    #[serde(default = "default_phases")]
    pub phases: Vec<Phase>,
    pub endpoint: ModelEndpoint,
    #[serde(default)]
    pub factor_tags: FactorTags,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub allow_nonzero_temperature: bool,
    /// Ask the explicit question inside the conversation of the matching
    /// implicit trial instead of a fresh one.
    #[serde(default)]
    pub linked_context: bool,
    #[serde(default = "default_instruction_version")]
    pub instruction_version: String,
}

impl RunConfig {
    /// Default experiment over all built-in categories for `endpoint`.
    pub fn new(run_id: impl Into<String>, endpoint: ModelEndpoint) -> Self {
        RunConfig {
            run_id: run_id.into(),
            model_tag: None,
            master_seed: default_seed(),
            reps_per_template: DEFAULT_REPS,
            categories: default_categories(),
            phases: default_phases(),
            endpoint,
            factor_tags: FactorTags::default(),
            temperature: 0.0,
            allow_nonzero_temperature: false,
            linked_context: false,
            instruction_version: default_instruction_version(),
        }
    }

    pub fn model_tag(&self) -> &str {
        self.model_tag
            .as_deref()
            .unwrap_or(&self.endpoint.model_name)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::InvalidConfig(m));
        if self.run_id.trim().is_empty() {
            return bad("run_id is empty".into());
        }
        if self.reps_per_template < 1 {
            return bad("reps_per_template must be at least 1".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.temperature != 0.0 && !self.allow_nonzero_temperature {
            return bad(format!(
                "temperature {} requires allow_nonzero_temperature",
                self.temperature
            ));
        }
        if self.categories.is_empty() {
            return bad("no categories selected".into());
        }
        if self.categories.iter().collect::<BTreeSet<_>>().len() != self.categories.len() {
            return bad("duplicate category id".into());
        }
        if self.phases.is_empty() {
            return bad("no phases selected".into());
        }
        if self.phases.iter().collect::<BTreeSet<_>>().len() != self.phases.len() {
            return bad("duplicate phase".into());
        }
        if self.linked_context && self.phases.len() != 2 {
            return bad("linked_context needs both phases".into());
        }
        self.factor_tags.check()?;
        self.endpoint.validate()?;
        Ok(())
    }

    /// Phases in canonical order.
    pub fn sorted_phases(&self) -> Vec<Phase> {
        let set: BTreeSet<Phase> = self.phases.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// Coordinates of one trial and the seed derived from them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialDescriptor {
    pub trial_id: String,
    pub category_id: String,
    pub phase: Phase,
    pub template_id: TemplateId,
    pub rep_index: u32,
    pub master_seed: u64,
    pub seed: u64,
}

impl TrialDescriptor {
    pub fn new(
        run_id: &str,
        master_seed: u64,
        category_id: &str,
        phase: Phase,
        template_id: TemplateId,
        rep_index: u32,
    ) -> Self {
        let t = template_id.to_string();
        TrialDescriptor {
            trial_id: seed::trial_id(run_id, category_id, phase.as_str(), &t, rep_index),
            category_id: category_id.to_string(),
            phase,
            template_id,
            rep_index,
            master_seed,
            seed: seed::trial_seed(master_seed, category_id, phase.as_str(), &t, rep_index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialPlan {
    pub trials: Vec<TrialDescriptor>,
}

impl TrialPlan {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

/// Trial ids a config produces, in plan order. Needs no catalog.
pub fn planned_descriptors(config: &RunConfig) -> Vec<TrialDescriptor> {
    let templates = templates::standard_templates();
    let mut out = Vec::new();
    for cat in &config.categories {
        for phase in config.sorted_phases() {
            for t in &templates {
                for rep in 0..config.reps_per_template {
                    out.push(TrialDescriptor::new(
                        &config.run_id,
                        config.master_seed,
                        cat,
                        phase,
                        t.id,
                        rep,
                    ));
                }
            }
        }
    }
    out
}

/// Canonical plan: (category, phase, template, rep).
pub fn plan_run(catalog: &[Category], config: &RunConfig) -> Result<TrialPlan, ProtocolError> {
    config.validate()?;
    for id in &config.categories {
        if catalog::find(catalog, id).is_none() {
            return Err(ProtocolError::UnknownCategory(id.clone()));
        }
    }
    Ok(TrialPlan {
        trials: planned_descriptors(config),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitTrial {
    pub trial_id: String,
    pub category_id: String,
    pub template_id: TemplateId,
    pub s_a_subset: Vec<String>,
    pub s_b_subset: Vec<String>,
    pub a_x: String,
    pub a_y: String,
    pub candidates: Vec<String>,
    /// Attribute order of the rendered template, slot 1 first.
    pub slot_attributes: [Attribute; 2],
    /// Copied from the category so the trial is self-describing.
    pub stereotype_map: StereotypeMap,
    /// Template sentence with attributes filled and `<mask>` slots kept.
    pub sentence: String,
    pub instruction_version: String,
    pub prompt: String,
    pub seed_path: TrialDescriptor,
}

impl ImplicitTrial {
    /// Subset drawn from `target`.
    pub fn subset(&self, target: Target) -> &[String] {
        match target {
            Target::A => &self.s_a_subset,
            Target::B => &self.s_b_subset,
        }
    }

    /// Target whose stimulus belongs in `slot` (0 or 1) for a stereotypical answer.
    pub fn stereotypical_target(&self, slot: usize) -> Target {
        self.stereotype_map.target_for(self.slot_attributes[slot])
    }

    /// Which target's subset holds `word`.
    pub fn target_of(&self, word: &str) -> Option<Target> {
        if self.s_a_subset.iter().any(|w| w == word) {
            Some(Target::A)
        } else if self.s_b_subset.iter().any(|w| w == word) {
            Some(Target::B)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitTrial {
    pub trial_id: String,
    pub category_id: String,
    pub template_id: TemplateId,
    pub target_a_word: String,
    pub target_b_word: String,
    pub a_x: String,
    pub a_y: String,
    pub likert: LikertScale,
    /// The stereotype-consistent statement the model is asked to judge.
    pub statement: String,
    pub instruction_version: String,
    pub prompt: String,
    pub seed_path: TrialDescriptor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
pub enum Trial {
    Implicit(ImplicitTrial),
    Explicit(ExplicitTrial),
}

impl Trial {
    pub fn descriptor(&self) -> &TrialDescriptor {
        match self {
            Trial::Implicit(t) => &t.seed_path,
            Trial::Explicit(t) => &t.seed_path,
        }
    }

    pub fn trial_id(&self) -> &str {
        &self.descriptor().trial_id
    }

    pub fn category_id(&self) -> &str {
        &self.descriptor().category_id
    }

    pub fn phase(&self) -> Phase {
        self.descriptor().phase
    }

    pub fn template_id(&self) -> TemplateId {
        self.descriptor().template_id
    }

    pub fn seed(&self) -> u64 {
        self.descriptor().seed
    }

    pub fn prompt(&self) -> &str {
        match self {
            Trial::Implicit(t) => &t.prompt,
            Trial::Explicit(t) => &t.prompt,
        }
    }
}

fn sample<R: Rng>(rng: &mut R, pool: &[String], n: usize) -> Vec<String> {
    let mut pool = pool.to_vec();
    let (chosen, _) = pool.partial_shuffle(rng, n);
    chosen.to_vec()
}

fn pick<'a, R: Rng>(rng: &mut R, words: &'a [String]) -> &'a str {
    &words[rng.random_range(0..words.len())]
}

/// Draws stimuli subsets, attribute words and candidate order for one
/// implicit trial, then renders its prompt.
pub fn build_implicit_trial(
    category: &Category,
    template: &SentenceTemplate,
    descriptor: &TrialDescriptor,
    instruction: &Instruction,
) -> Result<ImplicitTrial, ProtocolError> {
    for (field, group) in [
        ("target_a.stimuli", &category.target_a),
        ("target_b.stimuli", &category.target_b),
    ] {
        if group.stimuli.len() < SUBSET_SIZE {
            return Err(ProtocolError::InsufficientStimuli {
                category: category.id.clone(),
                field,
                found: group.stimuli.len(),
            });
        }
    }
    let mut rng = seed::stream(descriptor.seed, "trial");
    let s_a_subset = sample(&mut rng, &category.target_a.stimuli, SUBSET_SIZE);
    let s_b_subset = sample(&mut rng, &category.target_b.stimuli, SUBSET_SIZE);
    let a_x = pick(&mut rng, &category.attribute_x.words).to_string();
    let a_y = pick(&mut rng, &category.attribute_y.words).to_string();
    let mut candidates: Vec<String> = s_a_subset.iter().chain(&s_b_subset).cloned().collect();
    candidates.shuffle(&mut rng);

    let prompt = render_implicit(template, &a_x, &a_y, &candidates, instruction);
    Ok(ImplicitTrial {
        trial_id: descriptor.trial_id.clone(),
        category_id: category.id.clone(),
        template_id: template.id,
        sentence: template.masked_sentence(&a_x, &a_y),
        s_a_subset,
        s_b_subset,
        a_x,
        a_y,
        candidates,
        slot_attributes: template.attribute_order(),
        stereotype_map: category.stereotype_map,
        instruction_version: instruction.version.clone(),
        prompt,
        seed_path: descriptor.clone(),
    })
}

/// Draws group words, attribute words and option order for one explicit
/// trial. The statement always pairs each attribute with its stereotypical
/// target.
pub fn build_explicit_trial(
    category: &Category,
    template: &SentenceTemplate,
    descriptor: &TrialDescriptor,
    instruction: &Instruction,
) -> Result<ExplicitTrial, ProtocolError> {
    let mut rng = seed::stream(descriptor.seed, "trial");
    let target_a_word = pick(&mut rng, &category.target_a.group_words).to_string();
    let target_b_word = pick(&mut rng, &category.target_b.group_words).to_string();
    let a_x = pick(&mut rng, &category.attribute_x.words).to_string();
    let a_y = pick(&mut rng, &category.attribute_y.words).to_string();
    let likert = shuffle_likert(&mut rng);

    let word_for = |attr: Attribute| match category.stereotype_map.target_for(attr) {
        Target::A => target_a_word.as_str(),
        Target::B => target_b_word.as_str(),
    };
    let (x_word, y_word) = (word_for(Attribute::X), word_for(Attribute::Y));
    let statement = template.statement(x_word, y_word, &a_x, &a_y);
    let prompt = render_explicit(template, x_word, y_word, &a_x, &a_y, &likert, instruction);
    Ok(ExplicitTrial {
        trial_id: descriptor.trial_id.clone(),
        category_id: category.id.clone(),
        template_id: template.id,
        target_a_word,
        target_b_word,
        a_x,
        a_y,
        likert,
        statement,
        instruction_version: instruction.version.clone(),
        prompt,
        seed_path: descriptor.clone(),
    })
}

/// Everything needed to turn descriptors into trials.
pub struct TrialBuilder<'a> {
    catalog: &'a [Category],
    templates: Vec<SentenceTemplate>,
    implicit: Option<Instruction>,
    explicit: Option<Instruction>,
}

impl<'a> TrialBuilder<'a> {
    pub fn new(
        catalog: &'a [Category],
        instructions: &templates::InstructionSet,
        version: &str,
    ) -> Result<Self, ProtocolError> {
        let implicit = instructions.get(Phase::Implicit, version).cloned();
        let explicit = instructions.get(Phase::Explicit, version).cloned();
        if implicit.is_none() && explicit.is_none() {
            return Err(ProtocolError::InvalidConfig(format!(
                "no instruction text for version {version:?}"
            )));
        }
        Ok(TrialBuilder {
            catalog,
            templates: templates::standard_templates(),
            implicit,
            explicit,
        })
    }

    pub fn instruction(&self, phase: Phase) -> Result<&Instruction, ProtocolError> {
        match phase {
            Phase::Implicit => self.implicit.as_ref(),
            Phase::Explicit => self.explicit.as_ref(),
        }
        .ok_or_else(|| ProtocolError::InvalidConfig(format!("no {phase} instruction text")))
    }

    pub fn build(&self, d: &TrialDescriptor) -> Result<Trial, ProtocolError> {
        let category = catalog::find(self.catalog, &d.category_id)
            .ok_or_else(|| ProtocolError::UnknownCategory(d.category_id.clone()))?;
        let template = templates::find_template(&self.templates, d.template_id)
            .ok_or_else(|| ProtocolError::InvalidConfig(format!("unknown template {}", d.template_id)))?;
        let instruction = self.instruction(d.phase)?;
        Ok(match d.phase {
            Phase::Implicit => {
                Trial::Implicit(build_implicit_trial(category, template, d, instruction)?)
            }
            Phase::Explicit => {
                Trial::Explicit(build_explicit_trial(category, template, d, instruction)?)
            }
        })
    }

    pub fn catalog(&self) -> &'a [Category] {
        self.catalog
    }
}
