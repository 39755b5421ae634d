//! Stereotype categories: target groups, attribute sets and the traditional
//! target/attribute pairing each category probes.
//!
//! Categories are immutable once loaded and are shared by reference across
//! trial builders. The six built-in categories ship as data files under
//! `data/categories/`; users may supply their own through [`load_catalog`].

mod format;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use format::{load_catalog, write_catalog, CatalogError};

/// Smallest stimulus set that still supports drawing five items without
/// replacement.
pub const MIN_STIMULI: usize = 5;

/// Ids of the built-in categories, in canonical report order.
pub const BUILTIN_IDS: [&str; 6] = [
    "age",
    "disability",
    "gender_career",
    "gender_occupation",
    "race",
    "science",
];

const BUILTIN_SOURCES: [(&str, &str); 6] = [
    ("age.cat", include_str!("../../data/categories/age.cat")),
    ("disability.cat", include_str!("../../data/categories/disability.cat")),
    ("gender_career.cat", include_str!("../../data/categories/gender_career.cat")),
    (
        "gender_occupation.cat",
        include_str!("../../data/categories/gender_occupation.cat"),
    ),
    ("race.cat", include_str!("../../data/categories/race.cat")),
    ("science.cat", include_str!("../../data/categories/science.cat")),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetGroup {
    /// Concept words naming the group ("men", "women"). Used by explicit trials.
    pub group_words: Vec<String>,
    /// Concrete exemplars (names, terms). Used as implicit-trial candidates.
    pub stimuli: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub label: String,
    pub words: Vec<String>,
}

/// Which attribute set a target is traditionally associated with. The
/// mapping is a bijection by construction: naming target A's partner fixes
/// target B's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StereotypeMap {
    /// target_a ↔ attr_x, target_b ↔ attr_y
    AWithX,
    /// target_a ↔ attr_y, target_b ↔ attr_x
    AWithY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    X,
    Y,
}

impl StereotypeMap {
    /// Target stereotypically paired with `attr`.
    pub fn target_for(self, attr: Attribute) -> Target {
        match (self, attr) {
            (StereotypeMap::AWithX, Attribute::X) | (StereotypeMap::AWithY, Attribute::Y) => {
                Target::A
            }
            _ => Target::B,
        }
    }

    pub fn attribute_for(self, target: Target) -> Attribute {
        match (self, target) {
            (StereotypeMap::AWithX, Target::A) | (StereotypeMap::AWithY, Target::B) => {
                Attribute::X
            }
            _ => Attribute::Y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub name: String,
    /// Free-form note on where the word lists come from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub target_a: TargetGroup,
    pub target_b: TargetGroup,
    pub attribute_x: AttributeSet,
    pub attribute_y: AttributeSet,
    pub stereotype_map: StereotypeMap,
}

impl Category {
    pub fn target(&self, which: Target) -> &TargetGroup {
        match which {
            Target::A => &self.target_a,
            Target::B => &self.target_b,
        }
    }

    pub fn attribute(&self, which: Attribute) -> &AttributeSet {
        match which {
            Attribute::X => &self.attribute_x,
            Attribute::Y => &self.attribute_y,
        }
    }

    /// Which target (if any) lists `stimulus` among its stimuli.
    pub fn target_of_stimulus(&self, stimulus: &str) -> Option<Target> {
        if self.target_a.stimuli.iter().any(|s| s == stimulus) {
            Some(Target::A)
        } else if self.target_b.stimuli.iter().any(|s| s == stimulus) {
            Some(Target::B)
        } else {
            None
        }
    }
}

/// One broken invariant of a category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Location, e.g. `target_b.stimuli`.
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn check_list(field: &str, items: &[String], out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for item in items {
        if item.trim().is_empty() {
            out.push(Violation {
                field: field.to_string(),
                rule: "empty entry".into(),
            });
        } else if item.trim() != item {
            out.push(Violation {
                field: field.to_string(),
                rule: format!("entry {item:?} has surrounding whitespace"),
            });
        }
        if item.contains(',') {
            out.push(Violation {
                field: field.to_string(),
                rule: format!("entry {item:?} contains the list separator ','"),
            });
        }
        if !seen.insert(item.as_str()) {
            out.push(Violation {
                field: field.to_string(),
                rule: format!("duplicate entry {item:?}"),
            });
        }
    }
}

fn is_slug(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

/// Reports every invariant the category breaks. An empty list means valid.
pub fn validate_category(c: &Category) -> Vec<Violation> {
    let mut out = Vec::new();
    let v = |field: &str, rule: &str| Violation {
        field: field.into(),
        rule: rule.into(),
    };

    if !is_slug(&c.id) {
        out.push(v("id", "id must be a lowercase ASCII slug"));
    }
    if c.name.trim().is_empty() {
        out.push(v("name", "name is empty"));
    }

    for (prefix, group) in [("target_a", &c.target_a), ("target_b", &c.target_b)] {
        if group.group_words.is_empty() {
            out.push(v(&format!("{prefix}.words"), "group words are empty"));
        }
        check_list(&format!("{prefix}.words"), &group.group_words, &mut out);
        if group.stimuli.len() < MIN_STIMULI {
            out.push(v(&format!("{prefix}.stimuli"), "stimuli < 5"));
        }
        check_list(&format!("{prefix}.stimuli"), &group.stimuli, &mut out);
    }
    let a: HashSet<&str> = c.target_a.stimuli.iter().map(String::as_str).collect();
    if c.target_b.stimuli.iter().any(|s| a.contains(s.as_str())) {
        out.push(v("target_b.stimuli", "stimulus sets intersect"));
    }

    for (prefix, attr) in [("attr_x", &c.attribute_x), ("attr_y", &c.attribute_y)] {
        if attr.label.trim().is_empty() {
            out.push(v(&format!("{prefix}.label"), "label is empty"));
        }
        if attr.words.is_empty() {
            out.push(v(&format!("{prefix}.words"), "attribute words are empty"));
        }
        check_list(&format!("{prefix}.words"), &attr.words, &mut out);
    }
    let x: HashSet<&str> = c.attribute_x.words.iter().map(String::as_str).collect();
    if c.attribute_y.words.iter().any(|w| x.contains(w.as_str())) {
        out.push(v("attr_y.words", "attribute sets intersect"));
    }

    out
}

/// The six bundled categories in [`BUILTIN_IDS`] order.
pub fn builtin_catalog() -> Vec<Category> {
    BUILTIN_SOURCES
        .iter()
        .flat_map(|(name, text)| {
            load_catalog(text).unwrap_or_else(|e| panic!("bundled category file {name}: {e}"))
        })
        .collect()
}

/// Finds a category by id.
pub fn find<'a>(catalog: &'a [Category], id: &str) -> Option<&'a Category> {
    catalog.iter().find(|c| c.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn race() -> Category {
        find(&builtin_catalog(), "race").unwrap().clone()
    }

    #[test]
    fn builtin_has_six_categories() {
        let cats = builtin_catalog();
        assert_eq!(cats.len(), 6);
        let ids: Vec<_> = cats.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, BUILTIN_IDS);
    }

    #[test]
    fn gender_occupation_has_ten_pairs() {
        let cats = builtin_catalog();
        let occ = find(&cats, "gender_occupation").unwrap();
        assert_eq!(occ.attribute_x.words.len(), 10);
        assert_eq!(occ.attribute_y.words.len(), 10);
    }

    #[test]
    fn builtins_are_valid() {
        for c in builtin_catalog() {
            assert_eq!(validate_category(&c), vec![], "{}", c.id);
            assert!(c.target_a.stimuli.len() >= MIN_STIMULI);
            assert!(c.target_b.stimuli.len() >= MIN_STIMULI);
            assert!(c.provenance.is_some(), "{} lacks provenance", c.id);
        }
    }

    #[test]
    fn disability_flagged_as_stand_in() {
        let cats = builtin_catalog();
        let d = find(&cats, "disability").unwrap();
        assert!(d.provenance.as_deref().unwrap().contains("stand-in"));
    }

    #[test]
    fn valid_race_is_ok() {
        assert!(validate_category(&race()).is_empty());
    }

    #[test]
    fn four_stimuli_violates_minimum() {
        let mut c = race();
        c.target_b.stimuli.truncate(4);
        let v = validate_category(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "target_b.stimuli");
        assert_eq!(v[0].rule, "stimuli < 5");
    }

    #[test]
    fn overlapping_attributes_violate() {
        let mut c = race();
        c.attribute_y.words.push("joy".into());
        let v = validate_category(&c);
        assert!(v.iter().any(|v| v.rule == "attribute sets intersect"));
    }

    #[test]
    fn reports_every_violation() {
        let mut c = race();
        c.target_a.stimuli = vec!["Emily".into(), "Emily".into()];
        c.target_b.stimuli.push("Emily".into());
        c.attribute_x.words.clear();
        let rules: Vec<_> = validate_category(&c).into_iter().map(|v| v.rule).collect();
        assert!(rules.contains(&"stimuli < 5".to_string()));
        assert!(rules.iter().any(|r| r.starts_with("duplicate entry")));
        assert!(rules.contains(&"stimulus sets intersect".to_string()));
        assert!(rules.contains(&"attribute words are empty".to_string()));
    }

    #[test]
    fn stereotype_map_is_bijection() {
        for map in [StereotypeMap::AWithX, StereotypeMap::AWithY] {
            let tx = map.target_for(Attribute::X);
            let ty = map.target_for(Attribute::Y);
            assert_ne!(tx, ty);
            assert_eq!(map.attribute_for(tx), Attribute::X);
            assert_eq!(map.attribute_for(ty), Attribute::Y);
        }
    }
}
