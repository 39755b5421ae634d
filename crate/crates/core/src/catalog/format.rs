//! Line-oriented category definition files.
//!
//! ```text
//! # comment
//! [category]
//! id = race
//! name = Race
//! provenance = WEAT test 4/5          (optional)
//! target_a.words = White people, European Americans
//! target_a.stimuli = Brad, Emily, ...
//! target_b.words = ...
//! target_b.stimuli = ...
//! attr_x.label = good
//! attr_x.words = joy, love, ...
//! attr_y.label = bad
//! attr_y.words = agony, terrible, ...
//! stereotype = target_a->attr_x      (or target_a->attr_y)
//! ```
//!
//! Each `[category]` line opens a new section. Keys are split from values at
//! the first `=`; list values are comma separated and trimmed. Blank lines and
//! lines starting with `#` are ignored. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{
    validate_category, AttributeSet, Category, StereotypeMap, TargetGroup, Violation,
};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: {field}: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("category {category:?} is invalid: {}", join(.violations))]
    Validation {
        category: String,
        violations: Vec<Violation>,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

const KEYS: [&str; 12] = [
    "id",
    "name",
    "provenance",
    "target_a.words",
    "target_a.stimuli",
    "target_b.words",
    "target_b.stimuli",
    "attr_x.label",
    "attr_x.words",
    "attr_y.label",
    "attr_y.words",
    "stereotype",
];

struct Section {
    header_line: usize,
    values: BTreeMap<&'static str, (usize, String)>,
}

impl Section {
    fn take(&mut self, key: &'static str) -> Result<(usize, String), CatalogError> {
        self.values.remove(key).ok_or_else(|| CatalogError::Parse {
            line: self.header_line,
            field: key.to_string(),
            message: "missing required key".into(),
        })
    }

    fn list(&mut self, key: &'static str) -> Result<Vec<String>, CatalogError> {
        let (_, raw) = self.take(key)?;
        Ok(raw.split(',').map(|s| s.trim().to_string()).collect())
    }

    fn into_category(mut self) -> Result<Category, CatalogError> {
        let id = self.take("id")?.1;
        let name = self.take("name")?.1;
        let provenance = self.values.remove("provenance").map(|(_, v)| v);
        let target_a = TargetGroup {
            group_words: self.list("target_a.words")?,
            stimuli: self.list("target_a.stimuli")?,
        };
        let target_b = TargetGroup {
            group_words: self.list("target_b.words")?,
            stimuli: self.list("target_b.stimuli")?,
        };
        let attribute_x = AttributeSet {
            label: self.take("attr_x.label")?.1,
            words: self.list("attr_x.words")?,
        };
        let attribute_y = AttributeSet {
            label: self.take("attr_y.label")?.1,
            words: self.list("attr_y.words")?,
        };
        let (line, raw) = self.take("stereotype")?;
        let compact: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        let stereotype_map = match compact.as_str() {
            "target_a->attr_x" => StereotypeMap::AWithX,
            "target_a->attr_y" => StereotypeMap::AWithY,
            _ => {
                return Err(CatalogError::Parse {
                    line,
                    field: "stereotype".into(),
                    message: format!("expected target_a->attr_x or target_a->attr_y, got {raw:?}"),
                })
            }
        };
        Ok(Category {
            id,
            name,
            provenance,
            target_a,
            target_b,
            attribute_x,
            attribute_y,
            stereotype_map,
        })
    }
}

/// Parses and validates every category in `source`.
pub fn load_catalog(source: &str) -> Result<Vec<Category>, CatalogError> {
    let mut sections: Vec<Section> = Vec::new();

    for (idx, raw_line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            if line != "[category]" {
                return Err(CatalogError::Parse {
                    line: line_no,
                    field: line.to_string(),
                    message: "unknown section header, expected [category]".into(),
                });
            }
            sections.push(Section {
                header_line: line_no,
                values: BTreeMap::new(),
            });
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CatalogError::Parse {
                line: line_no,
                field: line.to_string(),
                message: "expected `key = value`".into(),
            });
        };
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(CatalogError::Parse {
                line: line_no,
                field: key.to_string(),
                message: "unknown key".into(),
            });
        };
        let Some(section) = sections.last_mut() else {
            return Err(CatalogError::Parse {
                line: line_no,
                field: key.to_string(),
                message: "key outside of a [category] section".into(),
            });
        };
        if section
            .values
            .insert(known, (line_no, value.trim().to_string()))
            .is_some()
        {
            return Err(CatalogError::Parse {
                line: line_no,
                field: key.to_string(),
                message: "duplicate key".into(),
            });
        }
    }

    let mut out = Vec::with_capacity(sections.len());
    for section in sections {
        let category = section.into_category()?;
        let violations = validate_category(&category);
        if !violations.is_empty() {
            return Err(CatalogError::Validation {
                category: category.id,
                violations,
            });
        }
        if out.iter().any(|c: &Category| c.id == category.id) {
            return Err(CatalogError::Validation {
                category: category.id,
                violations: vec![Violation {
                    field: "id".into(),
                    rule: "duplicate category id".into(),
                }],
            });
        }
        out.push(category);
    }
    Ok(out)
}

/// Serializes categories in the format read by [`load_catalog`].
pub fn write_catalog(categories: &[Category]) -> String {
    let mut s = String::new();
    for (i, c) in categories.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "[category]");
        let _ = writeln!(s, "id = {}", c.id);
        let _ = writeln!(s, "name = {}", c.name);
        if let Some(p) = &c.provenance {
            let _ = writeln!(s, "provenance = {p}");
        }
        let _ = writeln!(s, "target_a.words = {}", c.target_a.group_words.join(", "));
        let _ = writeln!(s, "target_a.stimuli = {}", c.target_a.stimuli.join(", "));
        let _ = writeln!(s, "target_b.words = {}", c.target_b.group_words.join(", "));
        let _ = writeln!(s, "target_b.stimuli = {}", c.target_b.stimuli.join(", "));
        let _ = writeln!(s, "attr_x.label = {}", c.attribute_x.label);
        let _ = writeln!(s, "attr_x.words = {}", c.attribute_x.words.join(", "));
        let _ = writeln!(s, "attr_y.label = {}", c.attribute_y.label);
        let _ = writeln!(s, "attr_y.words = {}", c.attribute_y.words.join(", "));
        let map = match c.stereotype_map {
            StereotypeMap::AWithX => "target_a->attr_x",
            StereotypeMap::AWithY => "target_a->attr_y",
        };
        let _ = writeln!(s, "stereotype = {map}");
    }
    s
}
