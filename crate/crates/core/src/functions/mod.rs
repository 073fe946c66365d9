//! Function schemas, the reply parser and argument validation.

mod parse;
mod schema;
mod validate;

pub use parse::{parse_output, FunctionCall, ParseError, ParsedOutput};
pub use schema::{
    names, render_schema, FunctionSchema, ParamSpec, ParamType, Registry, SchemaError,
};
pub use validate::{validate, ArgValue, ValidatedCall, ValidationError};
