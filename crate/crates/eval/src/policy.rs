//! Helpers for scripted policies that read the composed prompt.

use serde_json::{json, Value};
use vctx_core::Role;

/// Text of the last queue line with `role`. Lines look like
/// `[<timestamp> #<id>] <role>: <text>`.
pub fn last_line_with_role(prompt: &str, role: Role) -> Option<&str> {
    let tag = format!("] {}: ", role.as_str());
    prompt.lines().rev().find_map(|line| {
        if !line.starts_with('[') {
            return None;
        }
        let at = line.find(&tag)?;
        // The tag must close the `[ts #id]` prefix, not occur inside the text.
        if line[..at].contains("] ") {
            return None;
        }
        Some(&line[at + tag.len()..])
    })
}

/// Parsed JSON of the last function result in the prompt.
pub fn last_function_result(prompt: &str) -> Option<Value> {
    serde_json::from_str(last_line_with_role(prompt, Role::FunctionResult)?).ok()
}

pub fn call(thoughts: &str, function: &str, params: Value, heartbeat: bool) -> String {
    json!({
        "thoughts": thoughts,
        "function": function,
        "params": params,
        "request_heartbeat": heartbeat,
    })
    .to_string()
}

pub fn say(thoughts: &str, content: &str) -> String {
    call(
        thoughts,
        "send_message",
        json!({ "content": content }),
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROMPT: &str = "instructions\n\n### CONVERSATION\n\
[2023-10-11T09:00:00.000Z #0] user: hi] user: not this\n\
[2023-10-11T09:00:00.000Z #1] function_result: {\"status\":\"OK\"}\n\
[2023-10-11T09:00:00.000Z #2] assistant: thinking";

    #[test]
    fn finds_last_lines_by_role() {
        assert_eq!(
            last_line_with_role(PROMPT, Role::User),
            Some("hi] user: not this")
        );
        assert_eq!(
            last_line_with_role(PROMPT, Role::Assistant),
            Some("thinking")
        );
        assert_eq!(last_line_with_role(PROMPT, Role::System), None);
        assert_eq!(last_function_result(PROMPT).unwrap()["status"], "OK");
    }
}
