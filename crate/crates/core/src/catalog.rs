//! The service catalog shared by the dialog loop and the backend: 129
//! voice-invocable actions and 259 form types. The load-bearing constants
//! are the counts; names and field shapes are generated placeholders with
//! realistic structure.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ACTION_COUNT: u16 = 129;
pub const FORM_COUNT: u16 = 259;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("invalid catalog: {0}")]
    Invalid(String),
    #[error("catalog file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDescriptor {
    /// Dense 1..=129.
    pub id: u16,
    pub name: String,
    pub required_params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSchema {
    /// Dense 1..=259.
    pub id: u16,
    pub name: String,
    pub required_fields: Vec<String>,
    pub optional_fields: Vec<String>,
}

impl FormSchema {
    pub fn knows_field(&self, field: &str) -> bool {
        self.required_fields.iter().any(|f| f == field)
            || self.optional_fields.iter().any(|f| f == field)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub actions: Vec<ActionDescriptor>,
    pub forms: Vec<FormSchema>,
}

const VERBS: [&str; 12] = [
    "book", "cancel", "check", "request", "update", "renew", "submit", "track", "schedule",
    "confirm", "extend", "close",
];
const OBJECTS: [&str; 11] = [
    "appointment", "loan", "statement", "application", "inspection", "payment", "contract",
    "permit", "complaint", "transfer", "maintenance",
];
const FORM_KINDS: [&str; 13] = [
    "housing", "loan", "land", "maintenance", "transfer", "rental", "ownership", "exemption",
    "extension", "inspection", "mortgage", "grant", "settlement",
];
const FORM_PURPOSES: [&str; 20] = [
    "application", "renewal", "cancellation", "amendment", "complaint", "appeal", "clearance",
    "certificate", "registration", "assessment", "valuation", "disbursement", "deferral",
    "objection", "verification", "enrollment", "termination", "reimbursement", "inquiry",
    "declaration",
];
const FIELD_POOL: [&str; 10] = [
    "name", "national id", "phone", "city", "address", "email", "amount", "date", "plot number",
    "reference",
];

impl Catalog {
    /// The deterministic default catalog.
    pub fn generate_default() -> Self {
        let mut actions = Vec::with_capacity(ACTION_COUNT as usize);
        let mut id = 1u16;
        'outer: for object in OBJECTS {
            for verb in VERBS {
                if id > ACTION_COUNT {
                    break 'outer;
                }
                let params = match id % 4 {
                    0 => vec![],
                    1 => vec!["reference".to_string()],
                    2 => vec!["date".to_string()],
                    _ => vec!["reference".to_string(), "date".to_string()],
                };
                actions.push(ActionDescriptor {
                    id,
                    name: format!("{verb} {object}"),
                    required_params: params,
                });
                id += 1;
            }
        }

        let mut forms = Vec::with_capacity(FORM_COUNT as usize);
        let mut id = 1u16;
        'outer2: for purpose in FORM_PURPOSES {
            for kind in FORM_KINDS {
                if id > FORM_COUNT {
                    break 'outer2;
                }
                let n_fields = 2 + (id as usize % 3); // 2..=4 required fields
                let start = (id as usize * 3) % FIELD_POOL.len();
                let required: Vec<String> = (0..n_fields)
                    .map(|k| FIELD_POOL[(start + k) % FIELD_POOL.len()].to_string())
                    .collect();
                forms.push(FormSchema {
                    id,
                    name: format!("{kind} {purpose}"),
                    required_fields: required,
                    optional_fields: vec!["notes".to_string()],
                });
                id += 1;
            }
        }
        let catalog = Self { actions, forms };
        catalog.validate().expect("default catalog is valid");
        catalog
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.actions.len() != ACTION_COUNT as usize {
            return Err(CatalogError::Invalid(format!(
                "expected {ACTION_COUNT} actions, got {}",
                self.actions.len()
            )));
        }
        if self.forms.len() != FORM_COUNT as usize {
            return Err(CatalogError::Invalid(format!(
                "expected {FORM_COUNT} forms, got {}",
                self.forms.len()
            )));
        }
        for (i, a) in self.actions.iter().enumerate() {
            if a.id != i as u16 + 1 {
                return Err(CatalogError::Invalid(format!("action ids not dense at {}", a.id)));
            }
        }
        for (i, f) in self.forms.iter().enumerate() {
            if f.id != i as u16 + 1 {
                return Err(CatalogError::Invalid(format!("form ids not dense at {}", f.id)));
            }
        }
        Ok(())
    }

    pub fn action(&self, id: u16) -> Option<&ActionDescriptor> {
        (1..=ACTION_COUNT).contains(&id).then(|| &self.actions[id as usize - 1])
    }

    pub fn form(&self, id: u16) -> Option<&FormSchema> {
        (1..=FORM_COUNT).contains(&id).then(|| &self.forms[id as usize - 1])
    }

    pub fn save<W: Write>(&self, out: W) -> Result<(), CatalogError> {
        serde_json::to_writer_pretty(out, self).map_err(|e| CatalogError::Format(e.to_string()))
    }

    pub fn load<R: Read>(input: R) -> Result<Self, CatalogError> {
        let catalog: Catalog =
            serde_json::from_reader(input).map_err(|e| CatalogError::Format(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    /// Every word that can appear in grammar phrases for this catalog.
    pub fn grammar_words(&self) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        let mut push = |w: &str| {
            let w = w.to_string();
            if !words.contains(&w) {
                words.push(w);
            }
        };
        for a in &self.actions {
            for w in a.name.split_whitespace() {
                push(w);
            }
        }
        for f in &self.forms {
            for w in f.name.split_whitespace() {
                push(w);
            }
        }
        for field in FIELD_POOL {
            for w in field.split_whitespace() {
                push(w);
            }
        }
        for w in ["start", "form", "field", "notes", "guess", "my", "age", "take", "selfie"] {
            push(w);
        }
        words
    }
}
