//! The processor's reply grammar.
//!
//! A reply is one JSON object, optionally surrounded by whitespace:
//!
//! ```text
//! reply   := ws "{" [ member ("," member)* ] "}" ws
//! member  := "\"thoughts\"" ":" string
//!          | "\"function\"" ":" string
//!          | "\"params\"" ":" object
//!          | "\"request_heartbeat\"" ":" ("true" | "false")
//! ```
//!
//! Any other key, any text outside the object, `params` or a heartbeat
//! without `function` is a [`ParseError`]. Errors are plain data so the
//! runtime can show them to the processor and let it retry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ParseError: {reason}")]
pub struct ParseError {
    pub reason: String,
}

impl ParseError {
    fn new(reason: impl Into<String>) -> Self {
        ParseError {
            reason: reason.into(),
        }
    }
}

/// A call as written by the processor, before checking it against a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub thoughts: Option<String>,
    pub call: Option<FunctionCall>,
    /// Never true without a call.
    pub request_heartbeat: bool,
}

impl ParsedOutput {
    pub fn monologue(thoughts: impl Into<String>) -> Self {
        ParsedOutput {
            thoughts: Some(thoughts.into()),
            call: None,
            request_heartbeat: false,
        }
    }

    /// Canonical rendering; `parse_output(&x.render()) == Ok(x)`.
    pub fn render(&self) -> String {
        let mut obj = Map::new();
        if let Some(t) = &self.thoughts {
            obj.insert("thoughts".into(), Value::String(t.clone()));
        }
        if let Some(c) = &self.call {
            obj.insert("function".into(), Value::String(c.name.clone()));
            obj.insert(
                "params".into(),
                Value::Object(
                    c.params
                        .iter()
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                ),
            );
            obj.insert(
                "request_heartbeat".into(),
                Value::Bool(self.request_heartbeat),
            );
        }
        Value::Object(obj).to_string()
    }
}

pub fn parse_output(text: &str) -> Result<ParsedOutput, ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|_| ParseError::new("invalid object"))?;
    let Value::Object(obj) = value else {
        return Err(ParseError::new("invalid object: expected a JSON object"));
    };

    let mut thoughts = None;
    let mut function = None;
    let mut params = None;
    let mut request_heartbeat = false;
    for (key, v) in obj {
        match key.as_str() {
            "thoughts" => match v {
                Value::String(s) => thoughts = Some(s),
                _ => return Err(ParseError::new("`thoughts` must be a string")),
            },
            "function" => match v {
                Value::String(s) if !s.is_empty() => function = Some(s),
                _ => return Err(ParseError::new("`function` must be a non-empty string")),
            },
            "params" => match v {
                Value::Object(m) => params = Some(m.into_iter().collect::<BTreeMap<_, _>>()),
                _ => return Err(ParseError::new("`params` must be an object")),
            },
            "request_heartbeat" => match v {
                Value::Bool(b) => request_heartbeat = b,
                _ => return Err(ParseError::new("`request_heartbeat` must be true or false")),
            },
            other => return Err(ParseError::new(format!("unknown key `{other}`"))),
        }
    }

    let call = match (function, params) {
        (Some(name), params) => Some(FunctionCall {
            name,
            params: params.unwrap_or_default(),
        }),
        (None, Some(_)) => return Err(ParseError::new("`params` given without `function`")),
        (None, None) => None,
    };
    if call.is_none() && request_heartbeat {
        return Err(ParseError::new(
            "`request_heartbeat` requires a function call",
        ));
    }
    Ok(ParsedOutput {
        thoughts,
        call,
        request_heartbeat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn full_call() {
        let out = parse_output(
            r#"{"thoughts":"User shared a birthday; save it.","function":"working_context_append","params":{"content":"Birthday: 11th October."},"request_heartbeat":true}"#,
        )
        .unwrap();
        let call = out.call.unwrap();
        assert_eq!(call.name, "working_context_append");
        assert_eq!(call.params["content"], json!("Birthday: 11th October."));
        assert!(out.request_heartbeat);
        assert_eq!(
            out.thoughts.as_deref(),
            Some("User shared a birthday; save it.")
        );
    }

    #[test]
    fn monologue_only() {
        let out = parse_output(r#"{"thoughts":"hi"}"#).unwrap();
        assert_eq!(out, ParsedOutput::monologue("hi"));
    }

    #[test]
    fn not_json() {
        assert_eq!(
            parse_output("not json").unwrap_err().reason,
            "invalid object"
        );
    }

    #[test]
    fn rejects_surrounding_prose() {
        assert!(parse_output(r#"Sure! {"thoughts":"x"}"#).is_err());
        assert!(parse_output(r#"{"thoughts":"x"} done"#).is_err());
        assert!(parse_output("  {\"thoughts\":\"x\"}\n").is_ok());
    }

    #[test]
    fn structural_errors() {
        for (text, needle) in [
            ("[1,2]", "expected a JSON object"),
            (r#"{"thoughts":3}"#, "thoughts"),
            (r#"{"function":""}"#, "function"),
            (r#"{"function":"f","params":[]}"#, "params"),
            (
                r#"{"function":"f","request_heartbeat":"yes"}"#,
                "request_heartbeat",
            ),
            (r#"{"extra":1}"#, "unknown key"),
            (r#"{"params":{}}"#, "without `function`"),
            (r#"{"request_heartbeat":true}"#, "requires a function"),
        ] {
            let e = parse_output(text).unwrap_err();
            assert!(e.reason.contains(needle), "{text}: {}", e.reason);
        }
    }

    #[test]
    fn missing_params_means_empty() {
        let out = parse_output(r#"{"function":"f"}"#).unwrap();
        assert!(out.call.unwrap().params.is_empty());
    }

    proptest! {
        #[test]
        fn never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let text = String::from_utf8_lossy(&bytes);
            let _ = parse_output(&text);
        }

        #[test]
        fn never_panics_on_jsonish(text in r#"[{}\[\]":,a-z0-9 \\tfn.-]{0,80}"#) {
            let _ = parse_output(&text);
        }
    }
}
