use std::collections::BTreeMap;

use super::{AgentError, FilteredContext};
use crate::llm::{bindings, Gateway, TemplateId};
use crate::model::{DiffHunk, InstructionBundle, UpdateTask};

/// Bindings for the `test_update` prompt. The `focal_before` and
/// `instructions` sections render only when non-empty.
pub fn update_bindings(task: &UpdateTask, context: &FilteredContext, instructions: Option<&InstructionBundle>) -> BTreeMap<String, String> {
    let mut ctx: Vec<&str> = context.kept_variables.iter().map(String::as_str).collect();
    ctx.extend(context.kept_non_test_methods.iter().map(String::as_str));
    bindings([
        ("test_before", task.test_before.clone()),
        ("focal_after", task.focal_after.source.clone()),
        ("focal_before", if task.focal_changed() { task.focal_before.source.clone() } else { String::new() }),
        ("hunks", context.kept_hunks.iter().map(DiffHunk::render).collect::<Vec<_>>().join("")),
        ("context", if ctx.is_empty() { "// none".to_string() } else { ctx.join("\n\n") }),
        ("instructions", instructions.map(InstructionBundle::to_document).unwrap_or_default()),
    ])
}

/// Asks for an updated test. Iteration 1 must come without instructions and
/// every later iteration with them. Returns the raw reply.
pub fn generate_update(
    task: &UpdateTask,
    context: &FilteredContext,
    instructions: Option<&InstructionBundle>,
    iteration: u32,
    gateway: &Gateway,
) -> Result<String, AgentError> {
    if iteration == 0 {
        return Err(AgentError::Precondition("iteration starts at 1".into()));
    }
    match (iteration, instructions.is_some()) {
        (1, true) => return Err(AgentError::Precondition("instructions given for iteration 1".into())),
        (n, false) if n > 1 => return Err(AgentError::Precondition(format!("no instructions for iteration {n}"))),
        _ => {}
    }
    Ok(gateway.ask(TemplateId::TestUpdate, &update_bindings(task, context, instructions))?)
}
