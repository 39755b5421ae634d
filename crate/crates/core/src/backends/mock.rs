//! Seeded mock model with a configured stereotype rate per (category, phase).
//!
//! The first uniform draw of the trial's `"mock"` stream picks the branch:
//! below `p` the reply is stereotype-consistent, below `p + q` it is
//! malformed, otherwise it is a valid non-stereotypical answer. Later draws
//! only pick wording. Replies depend on the trial alone, never on the prompt
//! text, so a format reminder gets the same reply back.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{now_ms, Backend, BackendError, ChatExchange, ChatRequest, CompletionRequest};
use crate::catalog::Target;
use crate::protocol::{ExplicitTrial, ImplicitTrial, Phase, Trial};
use crate::seed;
use crate::templates::LikertOption;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSpec {
    /// Stereotype probability for implicit trials.
    pub implicit: f64,
    /// Stereotype probability for explicit trials.
    pub explicit: f64,
    /// Probability of a malformed reply.
    #[serde(default)]
    pub invalid_rate: f64,
    /// Per-cell stereotype probabilities keyed `"<category>.<phase>"`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, f64>,
}

impl MockSpec {
    pub fn uniform(implicit: f64, explicit: f64, invalid_rate: f64) -> Self {
        MockSpec {
            implicit,
            explicit,
            invalid_rate,
            overrides: BTreeMap::new(),
        }
    }

    pub fn stereotype_rate(&self, category: &str, phase: Phase) -> f64 {
        self.overrides
            .get(&format!("{category}.{phase}"))
            .copied()
            .unwrap_or(match phase {
                Phase::Implicit => self.implicit,
                Phase::Explicit => self.explicit,
            })
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let q = self.invalid_rate;
        if !unit(q) {
            return Err(BackendError::Config(format!("invalid_rate {q} outside [0, 1]")));
        }
        let cells = [("implicit", self.implicit), ("explicit", self.explicit)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .chain(self.overrides.iter().map(|(k, v)| (k.clone(), *v)));
        for (key, p) in cells {
            if !unit(p) {
                return Err(BackendError::Config(format!("mock rate {key} = {p} outside [0, 1]")));
            }
            if p + q > 1.0 + 1e-12 {
                return Err(BackendError::Config(format!(
                    "mock rate {key} = {p} plus invalid_rate {q} exceeds 1"
                )));
            }
        }
        for key in self.overrides.keys() {
            let ok = key
                .rsplit_once('.')
                .is_some_and(|(_, phase)| phase == "implicit" || phase == "explicit");
            if !ok {
                return Err(BackendError::Config(format!(
                    "override key {key:?} is not <category>.<implicit|explicit>"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Stereotype,
    Invalid,
    Other,
}

fn branch<R: Rng>(rng: &mut R, p: f64, q: f64) -> Branch {
    let u: f64 = rng.random();
    if u < p {
        Branch::Stereotype
    } else if u < p + q {
        Branch::Invalid
    } else {
        Branch::Other
    }
}

fn pick<'a, R: Rng>(rng: &mut R, words: &'a [String]) -> &'a str {
    &words[rng.random_range(0..words.len())]
}

fn implicit_answer<R: Rng>(rng: &mut R, w1: &str, w2: &str) -> String {
    match rng.random_range(0..3) {
        0 => format!("ANSWER: {w1}, {w2}"),
        1 => format!("(1) {w1}\n(2) {w2}\n\nANSWER: {w1}, {w2}"),
        _ => format!("I would complete the sentence with these words.\n\nANSWER: {w1}, {w2}"),
    }
}

fn implicit_reply<R: Rng>(rng: &mut R, trial: &ImplicitTrial, b: Branch) -> String {
    match b {
        Branch::Stereotype => {
            let w1 = pick(rng, trial.subset(trial.stereotypical_target(0))).to_string();
            let w2 = pick(rng, trial.subset(trial.stereotypical_target(1))).to_string();
            implicit_answer(rng, &w1, &w2)
        }
        Branch::Other => {
            let s1 = trial.stereotypical_target(0);
            let s2 = trial.stereotypical_target(1);
            let (t1, t2) = match rng.random_range(0..3) {
                0 => (s2, s1),
                1 => (Target::A, Target::A),
                _ => (Target::B, Target::B),
            };
            let w1 = pick(rng, trial.subset(t1)).to_string();
            let w2 = loop {
                let w = pick(rng, trial.subset(t2));
                if w != w1 {
                    break w.to_string();
                }
            };
            implicit_answer(rng, &w1, &w2)
        }
        Branch::Invalid => match rng.random_range(0..3) {
            0 => "ANSWER: someone, somebody".to_string(),
            1 => "Both blanks could be filled in many ways; it is hard to say.".to_string(),
            _ => "ANSWER:".to_string(),
        },
    }
}

fn explicit_reply<R: Rng>(rng: &mut R, _trial: &ExplicitTrial, b: Branch) -> String {
    let option = match b {
        Branch::Stereotype => [LikertOption::Agree, LikertOption::StronglyAgree][rng.random_range(0..2)],
        Branch::Other => [
            LikertOption::Neutral,
            LikertOption::Disagree,
            LikertOption::StronglyDisagree,
        ][rng.random_range(0..3)],
        Branch::Invalid => {
            return match rng.random_range(0..2) {
                0 => "ANSWER: it depends\nREASON: The statement is too vague.".to_string(),
                _ => "That is a difficult question with many perspectives.".to_string(),
            }
        }
    };
    match rng.random_range(0..2) {
        0 => format!("ANSWER: {option}\nREASON: Mock judgement."),
        _ => format!("ANSWER: {}\nREASON: Mock judgement.", capitalize(option.as_str())),
    }
}

fn capitalize(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<String>>()
        .join(" ")
}

/// Reply of the mock model for `trial`. A pure function of its arguments.
pub fn mock_complete(spec: &MockSpec, trial: &Trial, derived_seed: u64) -> String {
    let mut rng = seed::stream(derived_seed, "mock");
    let p = spec.stereotype_rate(trial.category_id(), trial.phase());
    let b = branch(&mut rng, p, spec.invalid_rate);
    match trial {
        Trial::Implicit(t) => implicit_reply(&mut rng, t, b),
        Trial::Explicit(t) => explicit_reply(&mut rng, t, b),
    }
}

pub struct MockBackend {
    model: String,
    spec: MockSpec,
}

impl MockBackend {
    pub fn new(model: &str, spec: MockSpec) -> Self {
        MockBackend {
            model: model.to_string(),
            spec,
        }
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<ChatExchange, BackendError> {
        let response = mock_complete(&self.spec, request.trial, request.trial.seed());
        Ok(ChatExchange {
            request: ChatRequest {
                model: self.model.clone(),
                messages: request.messages.clone(),
                temperature: request.temperature,
            },
            response,
            latency_ms: 0,
            attempts: 1,
            timestamp_ms: now_ms(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{builtin_catalog, find};
    use crate::protocol::{Phase, TrialBuilder, TrialDescriptor};
    use crate::templates::InstructionSet;

    fn trial(cat: &str, phase: Phase, template: &str, seed: u64) -> Trial {
        let cats = builtin_catalog();
        let b = TrialBuilder::new(&cats, &InstructionSet::builtin(), "v1").unwrap();
        let mut d = TrialDescriptor::new("r", 1, cat, phase, template.parse().unwrap(), 0);
        d.seed = seed;
        b.build(&d).unwrap()
    }

    #[test]
    fn forced_stereotype_implicit() {
        let spec = MockSpec::uniform(1.0, 0.0, 0.0);
        let cats = builtin_catalog();
        let race = find(&cats, "race").unwrap();
        for s in 0..50 {
            let t = trial("race", Phase::Implicit, "t1-normal", s);
            let reply = mock_complete(&spec, &t, s);
            let last = reply.lines().last().unwrap();
            let words: Vec<&str> = last.trim_start_matches("ANSWER: ").split(", ").collect();
            // slot 1 sits next to the positive attribute in t1-normal
            assert!(race.target_a.stimuli.iter().any(|w| w == words[0]), "{reply}");
            assert!(race.target_b.stimuli.iter().any(|w| w == words[1]), "{reply}");
        }
    }

    #[test]
    fn forced_non_stereotype_explicit() {
        let spec = MockSpec::uniform(0.0, 0.0, 0.0);
        for s in 0..50 {
            let t = trial("age", Phase::Explicit, "t3-swapped", s);
            let reply = mock_complete(&spec, &t, s).to_lowercase();
            let answer = reply.lines().next().unwrap().trim_start_matches("answer: ");
            assert!(
                ["neutral", "disagree", "strongly disagree"].contains(&answer),
                "{reply}"
            );
        }
    }

    #[test]
    fn mock_is_deterministic() {
        let spec = MockSpec::uniform(0.5, 0.5, 0.0);
        let t = trial("science", Phase::Implicit, "t4-normal", 5);
        assert_eq!(mock_complete(&spec, &t, 5), mock_complete(&spec, &t, 5));
    }

    #[test]
    fn overrides_apply_per_cell() {
        let mut spec = MockSpec::uniform(0.8, 0.1, 0.0);
        spec.overrides.insert("race.implicit".into(), 0.3);
        assert_eq!(spec.stereotype_rate("race", Phase::Implicit), 0.3);
        assert_eq!(spec.stereotype_rate("race", Phase::Explicit), 0.1);
        assert_eq!(spec.stereotype_rate("age", Phase::Implicit), 0.8);
        spec.overrides.insert("race.sideways".into(), 0.3);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rates_must_leave_room_for_invalids() {
        assert!(MockSpec::uniform(0.98, 0.1, 0.02).validate().is_ok());
        assert!(MockSpec::uniform(0.99, 0.1, 0.02).validate().is_err());
        assert!(MockSpec::uniform(-0.1, 0.1, 0.0).validate().is_err());
    }
}
