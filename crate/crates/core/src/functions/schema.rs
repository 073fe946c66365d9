use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Boolean,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Boolean => "boolean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub ty: ParamType,
    pub required: bool,
    pub description: String,
}

impl ParamSpec {
    pub fn required(name: &str, ty: ParamType, description: &str) -> Self {
        ParamSpec {
            name: name.into(),
            ty,
            required: true,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, ty: ParamType, description: &str) -> Self {
        ParamSpec {
            required: false,
            ..Self::required(name, ty, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSchema {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub returns_page: bool,
}

impl FunctionSchema {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("DuplicateName: function `{0}` is registered twice")]
    DuplicateName(String),
    #[error("DuplicateParam: `{function}` declares parameter `{param}` twice")]
    DuplicateParam { function: String, param: String },
    #[error("EmptyRegistry: at least one function is required")]
    EmptyRegistry,
    #[error("UnknownFunction: `{0}` is not in the default registry")]
    UnknownFunction(String),
}

pub mod names {
    pub const SEND_MESSAGE: &str = "send_message";
    pub const WORKING_CONTEXT_APPEND: &str = "working_context_append";
    pub const WORKING_CONTEXT_REPLACE: &str = "working_context_replace";
    pub const RECALL_SEARCH_TEXT: &str = "recall_search_text";
    pub const RECALL_SEARCH_DATE: &str = "recall_search_date";
    pub const ARCHIVAL_INSERT: &str = "archival_insert";
    pub const ARCHIVAL_SEARCH: &str = "archival_search";
    pub const PAUSE_HEARTBEATS: &str = "pause_heartbeats";
}

/// Immutable set of callable functions, keyed and rendered by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    functions: BTreeMap<String, FunctionSchema>,
}

impl Registry {
    pub fn new(schemas: Vec<FunctionSchema>) -> Result<Self, SchemaError> {
        if schemas.is_empty() {
            return Err(SchemaError::EmptyRegistry);
        }
        let mut functions = BTreeMap::new();
        for s in schemas {
            let mut seen = BTreeSet::new();
            for p in &s.params {
                if !seen.insert(p.name.as_str()) {
                    return Err(SchemaError::DuplicateParam {
                        function: s.name.clone(),
                        param: p.name.clone(),
                    });
                }
            }
            if functions.contains_key(&s.name) {
                return Err(SchemaError::DuplicateName(s.name));
            }
            functions.insert(s.name.clone(), s);
        }
        Ok(Registry { functions })
    }

    /// The eight memory and messaging functions.
    pub fn default_set() -> Self {
        Registry::new(default_schemas()).expect("default registry is well formed")
    }

    /// The default set restricted to `names`.
    pub fn subset<S: AsRef<str>>(names: &[S]) -> Result<Self, SchemaError> {
        let all = default_schemas();
        let mut picked = Vec::new();
        for n in names {
            let n = n.as_ref();
            let s = all
                .iter()
                .find(|s| s.name == n)
                .ok_or_else(|| SchemaError::UnknownFunction(n.to_string()))?;
            picked.push(s.clone());
        }
        Registry::new(picked)
    }

    pub fn get(&self, name: &str) -> Option<&FunctionSchema> {
        self.functions.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FunctionSchema> {
        self.functions.values()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Canonical text for the system instructions: the reply format, the
    /// heartbeat convention, then every function sorted by name.
    pub fn render(&self) -> String {
        let mut out = String::from(OUTPUT_CONVENTION);
        out.push_str("\n\nAvailable functions:\n");
        for f in self.functions.values() {
            let sig: Vec<String> = f
                .params
                .iter()
                .map(|p| format!("{}: {}{}", p.name, p.ty, if p.required { "" } else { "?" }))
                .collect();
            out.push_str(&format!(
                "\n{}({})\n  {}\n",
                f.name,
                sig.join(", "),
                f.description
            ));
            for p in &f.params {
                out.push_str(&format!("  - {}: {}\n", p.name, p.description));
            }
            if f.returns_page {
                out.push_str(
                    "  Returns one page of results with `page`, `total_matches` and `has_more`.\n",
                );
            }
        }
        out
    }
}

/// Validates `schemas` as a registry and renders it.
pub fn render_schema(schemas: &[FunctionSchema]) -> Result<String, SchemaError> {
    Ok(Registry::new(schemas.to_vec())?.render())
}

const OUTPUT_CONVENTION: &str = r#"Reply format: every reply is exactly one JSON object and nothing else:
{"thoughts": "<private reasoning>", "function": "<name>", "params": {<arguments>}, "request_heartbeat": <true|false>}
All keys are optional. "thoughts" is never shown to the user. Leave out "function" to end your turn without acting.
Heartbeats: set "request_heartbeat": true to be run again as soon as the function returns, so you can chain calls (for example, to read the next page of results). Without it you yield and stay paused until the next event. A heartbeat needs a function. If your reply cannot be parsed or a call is invalid, the error is shown to you and you get one immediate retry."#;

fn default_schemas() -> Vec<FunctionSchema> {
    use names::*;
    use ParamType::*;
    let page = || ParamSpec::optional("page", Integer, "Zero-based page number; defaults to 0.");
    vec![
        FunctionSchema {
            name: SEND_MESSAGE.into(),
            description: "Send a message to the user. This is the only way the user sees anything you write.".into(),
            params: vec![ParamSpec::required("content", String, "Message text.")],
            returns_page: false,
        },
        FunctionSchema {
            name: WORKING_CONTEXT_APPEND.into(),
            description: "Append a line to working context. Fails if working context is full.".into(),
            params: vec![ParamSpec::required("content", String, "Text to append on a new line.")],
            returns_page: false,
        },
        FunctionSchema {
            name: WORKING_CONTEXT_REPLACE.into(),
            description: "Replace the first exact occurrence of `old` in working context with `new`.".into(),
            params: vec![
                ParamSpec::required("old", String, "Exact text currently in working context."),
                ParamSpec::required("new", String, "Replacement text; may be empty to delete."),
            ],
            returns_page: false,
        },
        FunctionSchema {
            name: RECALL_SEARCH_TEXT.into(),
            description: "Search the full conversation history for a phrase (case-insensitive), newest first.".into(),
            params: vec![ParamSpec::required("query", String, "Text to look for."), page()],
            returns_page: true,
        },
        FunctionSchema {
            name: RECALL_SEARCH_DATE.into(),
            description: "List conversation history between two dates, oldest first.".into(),
            params: vec![
                ParamSpec::required("start", String, "Start, as YYYY-MM-DD or an RFC 3339 timestamp."),
                ParamSpec::required("end", String, "End (inclusive), same formats as start."),
                page(),
            ],
            returns_page: true,
        },
        FunctionSchema {
            name: ARCHIVAL_INSERT.into(),
            description: "Store text in archival storage for later retrieval.".into(),
            params: vec![ParamSpec::required("content", String, "Text to store.")],
            returns_page: false,
        },
        FunctionSchema {
            name: ARCHIVAL_SEARCH.into(),
            description: "Search archival storage by meaning, best matches first.".into(),
            params: vec![ParamSpec::required("query", String, "What to look for."), page()],
            returns_page: true,
        },
        FunctionSchema {
            name: PAUSE_HEARTBEATS.into(),
            description: "Suppress scheduled wake-ups for a number of minutes.".into(),
            params: vec![ParamSpec::required("minutes", Integer, "How long to pause.")],
            returns_page: false,
        },
    ]
}
