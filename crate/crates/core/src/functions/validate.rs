use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::parse::FunctionCall;
use super::schema::{ParamType, Registry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl ArgValue {
    pub fn ty(&self) -> ParamType {
        match self {
            ArgValue::Str(_) => ParamType::String,
            ArgValue::Int(_) => ParamType::Integer,
            ArgValue::Bool(_) => ParamType::Boolean,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            ArgValue::Str(s) => Value::String(s.clone()),
            ArgValue::Int(i) => Value::from(*i),
            ArgValue::Bool(b) => Value::Bool(*b),
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("ValidationError: unknown function `{0}`")]
    UnknownFunction(String),
    #[error("ValidationError: `{function}` is missing required parameter `{param}`")]
    MissingParam { function: String, param: String },
    #[error("ValidationError: `{function}` has no parameter `{param}`")]
    UnknownParam { function: String, param: String },
    #[error("ValidationError: `{function}` parameter `{param}` must be {expected}")]
    TypeMismatch {
        function: String,
        param: String,
        expected: ParamType,
    },
}

/// A call whose name and arguments match a registered schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedCall {
    pub name: String,
    pub args: BTreeMap<String, ArgValue>,
}

impl ValidatedCall {
    pub fn str(&self, name: &str) -> Option<&str> {
        match self.args.get(name) {
            Some(ArgValue::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        match self.args.get(name) {
            Some(ArgValue::Int(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn to_call(&self) -> FunctionCall {
        FunctionCall {
            name: self.name.clone(),
            params: self
                .args
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect(),
        }
    }
}

fn coerce(v: &Value, ty: ParamType) -> Option<ArgValue> {
    match (ty, v) {
        (ParamType::String, Value::String(s)) => Some(ArgValue::Str(s.clone())),
        (ParamType::Integer, Value::Number(n)) => n.as_i64().map(ArgValue::Int),
        (ParamType::Boolean, Value::Bool(b)) => Some(ArgValue::Bool(*b)),
        _ => None,
    }
}

pub fn validate(
    call: &FunctionCall,
    registry: &Registry,
) -> Result<ValidatedCall, ValidationError> {
    let schema = registry
        .get(&call.name)
        .ok_or_else(|| ValidationError::UnknownFunction(call.name.clone()))?;
    for key in call.params.keys() {
        if schema.param(key).is_none() {
            return Err(ValidationError::UnknownParam {
                function: call.name.clone(),
                param: key.clone(),
            });
        }
    }
    let mut args = BTreeMap::new();
    for p in &schema.params {
        match call.params.get(&p.name) {
            None | Some(Value::Null) if p.required => {
                return Err(ValidationError::MissingParam {
                    function: call.name.clone(),
                    param: p.name.clone(),
                })
            }
            None | Some(Value::Null) => {}
            Some(v) => {
                let a = coerce(v, p.ty).ok_or_else(|| ValidationError::TypeMismatch {
                    function: call.name.clone(),
                    param: p.name.clone(),
                    expected: p.ty,
                })?;
                args.insert(p.name.clone(), a);
            }
        }
    }
    Ok(ValidatedCall {
        name: call.name.clone(),
        args,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::parse::parse_output;

    fn call(text: &str) -> FunctionCall {
        parse_output(text).unwrap().call.unwrap()
    }

    #[test]
    fn valid_call() {
        let r = Registry::default_set();
        let v = validate(
            &call(r#"{"function":"recall_search_text","params":{"query":"Brenda","page":1}}"#),
            &r,
        )
        .unwrap();
        assert_eq!(v.str("query"), Some("Brenda"));
        assert_eq!(v.int("page"), Some(1));
    }

    #[test]
    fn optional_omitted() {
        let r = Registry::default_set();
        let v = validate(
            &call(r#"{"function":"archival_search","params":{"query":"x"}}"#),
            &r,
        )
        .unwrap();
        assert_eq!(v.int("page"), None);
    }

    #[test]
    fn errors() {
        let r = Registry::default_set();
        assert_eq!(
            validate(&call(r#"{"function":"fly","params":{}}"#), &r),
            Err(ValidationError::UnknownFunction("fly".into()))
        );
        assert!(matches!(
            validate(&call(r#"{"function":"send_message","params":{}}"#), &r),
            Err(ValidationError::MissingParam { .. })
        ));
        assert!(matches!(
            validate(
                &call(r#"{"function":"send_message","params":{"content":"a","to":"b"}}"#),
                &r
            ),
            Err(ValidationError::UnknownParam { .. })
        ));
        assert!(matches!(
            validate(
                &call(r#"{"function":"pause_heartbeats","params":{"minutes":"ten"}}"#),
                &r
            ),
            Err(ValidationError::TypeMismatch { .. })
        ));
        assert!(matches!(
            validate(
                &call(r#"{"function":"pause_heartbeats","params":{"minutes":1.5}}"#),
                &r
            ),
            Err(ValidationError::TypeMismatch { .. })
        ));
        assert!(matches!(
            validate(
                &call(r#"{"function":"send_message","params":{"content":null}}"#),
                &r
            ),
            Err(ValidationError::MissingParam { .. })
        ));
    }

    #[test]
    fn unknown_function_message() {
        let r = Registry::default_set();
        let e = validate(&call(r#"{"function":"fly"}"#), &r).unwrap_err();
        assert!(e.to_string().contains("unknown function"));
    }
}
