//! Scripted session input for replayable runs.
//!
//! One step per line: `TICK ACTION [ARG]`. `#` or `;` start a comment.
//!
//! | action        | argument | effect                                              |
//! |---------------|----------|-----------------------------------------------------|
//! | `load`        | path     | `load_source` command with the file's text          |
//! | `write`       | path     | overwrite the watched program file with the file's text |
//! | `pause`       |          | pause command                                       |
//! | `resume`      |          | resume command                                      |
//! | `reset_world` |          | reset command                                       |
//!
//! A step for tick `T` runs once `T` ticks have completed, before the next
//! one. Relative paths resolve against the script's directory.

use std::path::{Path, PathBuf};

use super::protocol::Command;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptAction {
    Load(PathBuf),
    Write(PathBuf),
    Pause,
    Resume,
    ResetWorld,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    pub tick: u64,
    pub action: ScriptAction,
    pub line: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("script line {line}: cannot read {}: {source}", path.display())]
    Io {
        line: usize,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A step with its file argument already read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedAction {
    Command(Command),
    WriteProgram(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedStep {
    pub tick: u64,
    pub action: ResolvedAction,
}

/// Parses script text. Steps are returned sorted by tick; steps sharing a
/// tick keep their file order.
pub fn parse_script(text: &str) -> Result<Vec<ScriptStep>, ScriptError> {
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| ScriptError::Syntax { line, message };
        let mut words = content.split_whitespace();
        let tick_word = words.next().expect("non-empty line");
        let tick: u64 = tick_word
            .parse()
            .map_err(|_| syntax(format!("expected a tick number, found `{tick_word}`")))?;
        let action_word = words
            .next()
            .ok_or_else(|| syntax("missing action".into()))?;
        let arg = words.next();
        if let Some(extra) = words.next() {
            return Err(syntax(format!("unexpected `{extra}`")));
        }
        let path_arg = || {
            arg.map(PathBuf::from)
                .ok_or_else(|| syntax(format!("`{action_word}` needs a file argument")))
        };
        let no_arg = |a: ScriptAction| match arg {
            Some(x) => Err(syntax(format!(
                "`{action_word}` takes no argument, found `{x}`"
            ))),
            None => Ok(a),
        };
        let action = match action_word {
            "load" => ScriptAction::Load(path_arg()?),
            "write" => ScriptAction::Write(path_arg()?),
            "pause" => no_arg(ScriptAction::Pause)?,
            "resume" => no_arg(ScriptAction::Resume)?,
            "reset_world" => no_arg(ScriptAction::ResetWorld)?,
            other => return Err(syntax(format!("unknown action `{other}`"))),
        };
        steps.push(ScriptStep { tick, action, line });
    }
    steps.sort_by_key(|s| s.tick);
    Ok(steps)
}

pub fn resolve_script(
    steps: &[ScriptStep],
    base_dir: &Path,
) -> Result<Vec<ResolvedStep>, ScriptError> {
    let read = |line: usize, p: &Path| {
        let path = base_dir.join(p);
        std::fs::read_to_string(&path).map_err(|source| ScriptError::Io { line, path, source })
    };
    steps
        .iter()
        .map(|s| {
            let action = match &s.action {
                ScriptAction::Load(p) => {
                    ResolvedAction::Command(Command::LoadSource(read(s.line, p)?))
                }
                ScriptAction::Write(p) => ResolvedAction::WriteProgram(read(s.line, p)?),
                ScriptAction::Pause => ResolvedAction::Command(Command::Pause),
                ScriptAction::Resume => ResolvedAction::Command(Command::Resume),
                ScriptAction::ResetWorld => ResolvedAction::Command(Command::ResetWorld),
            };
            Ok(ResolvedStep {
                tick: s.tick,
                action,
            })
        })
        .collect()
}
