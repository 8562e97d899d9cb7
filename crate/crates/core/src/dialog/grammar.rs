//! Keyword grammar: token patterns mapped to intents.
//!
//! Matching is deterministic: with an active form, field triggers are tried
//! first (longest trigger wins), then actions, form starts and games in
//! catalog order; the first pattern that occurs contiguously in the
//! transcript wins, and anything unmatched falls back.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::dialog::DialogError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrammarTarget {
    Action(u16),
    StartForm(u16),
    /// Field name; the tokens after the trigger become the value.
    FieldFill(String),
    AgeGame,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarEntry {
    pub pattern: Vec<String>,
    pub target: GrammarTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grammar {
    pub entries: Vec<GrammarEntry>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(|w| w.to_lowercase()).collect()
}

/// Position right after the first contiguous occurrence of `pattern`.
fn find_pattern(tokens: &[String], pattern: &[String]) -> Option<usize> {
    if pattern.is_empty() || tokens.len() < pattern.len() {
        return None;
    }
    (0..=tokens.len() - pattern.len())
        .find(|&i| tokens[i..i + pattern.len()] == *pattern)
        .map(|i| i + pattern.len())
}

impl Grammar {
    /// The default grammar derived from a catalog: one entry per action and
    /// form, one per known field, plus the age game.
    pub fn default_for(catalog: &Catalog) -> Self {
        let mut entries = Vec::new();
        for a in &catalog.actions {
            entries.push(GrammarEntry {
                pattern: words(&a.name),
                target: GrammarTarget::Action(a.id),
            });
        }
        for f in &catalog.forms {
            let mut pattern = vec!["start".to_string()];
            pattern.extend(words(&f.name));
            entries.push(GrammarEntry { pattern, target: GrammarTarget::StartForm(f.id) });
        }
        let mut fields: Vec<String> = Vec::new();
        for f in &catalog.forms {
            for field in f.required_fields.iter().chain(&f.optional_fields) {
                if !fields.contains(field) {
                    fields.push(field.clone());
                }
            }
        }
        for field in fields {
            entries.push(GrammarEntry {
                pattern: words(&field),
                target: GrammarTarget::FieldFill(field),
            });
        }
        entries.push(GrammarEntry {
            pattern: words("guess my age"),
            target: GrammarTarget::AgeGame,
        });
        Self { entries }
    }

    pub fn field_entries(&self) -> impl Iterator<Item = (&[String], &str)> {
        self.entries.iter().filter_map(|e| match &e.target {
            GrammarTarget::FieldFill(f) => Some((e.pattern.as_slice(), f.as_str())),
            _ => None,
        })
    }

    /// First matching field trigger, longest trigger first. Returns the
    /// field name and the value tokens after the trigger.
    pub fn match_field(&self, tokens: &[String]) -> Option<(String, String)> {
        let mut fields: Vec<(&[String], &str)> = self.field_entries().collect();
        fields.sort_by_key(|(p, _)| std::cmp::Reverse(p.len()));
        for (pattern, field) in fields {
            if let Some(end) = find_pattern(tokens, pattern) {
                if end < tokens.len() {
                    return Some((field.to_string(), tokens[end..].join(" ")));
                }
            }
        }
        None
    }

    pub fn match_target(&self, tokens: &[String]) -> Option<&GrammarTarget> {
        // actions, then form starts, then games, in entry order
        let priority = |t: &GrammarTarget| match t {
            GrammarTarget::Action(_) => 0,
            GrammarTarget::StartForm(_) => 1,
            GrammarTarget::AgeGame => 2,
            GrammarTarget::FieldFill(_) => 3,
        };
        let mut best: Option<(&GrammarTarget, usize)> = None;
        for e in &self.entries {
            if matches!(e.target, GrammarTarget::FieldFill(_)) {
                continue;
            }
            if find_pattern(tokens, &e.pattern).is_some() {
                let p = priority(&e.target);
                if best.map(|(_, bp)| p < bp).unwrap_or(true) {
                    best = Some((&e.target, p));
                }
            }
        }
        best.map(|(t, _)| t)
    }

    /// One `kind args : pattern` line per entry.
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), DialogError> {
        for e in &self.entries {
            let pattern = e.pattern.join(" ");
            match &e.target {
                GrammarTarget::Action(id) => writeln!(out, "action {id} : {pattern}")?,
                GrammarTarget::StartForm(id) => writeln!(out, "form {id} : {pattern}")?,
                GrammarTarget::FieldFill(f) => writeln!(out, "field {f} : {pattern}")?,
                GrammarTarget::AgeGame => writeln!(out, "game age : {pattern}")?,
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self, DialogError> {
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || DialogError::BadGrammar(format!("line {}: {line:?}", n + 1));
            let (head, pattern) = line.split_once(':').ok_or_else(bad)?;
            let pattern = words(pattern);
            let head: Vec<&str> = head.split_whitespace().collect();
            let target = match head.as_slice() {
                ["action", id] => GrammarTarget::Action(id.parse().map_err(|_| bad())?),
                ["form", id] => GrammarTarget::StartForm(id.parse().map_err(|_| bad())?),
                ["game", "age"] => GrammarTarget::AgeGame,
                ["field", rest @ ..] if !rest.is_empty() => {
                    GrammarTarget::FieldFill(rest.join(" "))
                }
                _ => return Err(bad()),
            };
            entries.push(GrammarEntry { pattern, target });
        }
        Ok(Self { entries })
    }
}
