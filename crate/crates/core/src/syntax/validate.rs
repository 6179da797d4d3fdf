use std::collections::HashSet;

use super::ast::*;
use crate::diag::Diagnostic;

const SOURCE: &str = "validate";

fn duplicates<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for n in names {
        if !seen.insert(n) && !dups.contains(&n) {
            dups.push(n);
        }
    }
    dups
}

fn check_machine<'a>(
    m: &'a MachineDecl,
    scope: &mut Vec<&'a MachineDecl>,
    out: &mut Vec<Diagnostic>,
) {
    let path = scope
        .iter()
        .map(|m| m.name.as_str())
        .chain(std::iter::once(m.name.as_str()))
        .collect::<Vec<_>>()
        .join("/");
    for (what, dups) in [
        (
            "state",
            duplicates(m.states.iter().map(|s| s.name.as_str())),
        ),
        (
            "transition",
            duplicates(m.transitions.iter().map(|t| t.name.as_str())),
        ),
        (
            "event",
            duplicates(m.events.iter().map(|e| e.name.as_str())),
        ),
        (
            "variable",
            duplicates(m.variables.iter().map(|v| v.name.as_str())),
        ),
    ] {
        for d in dups {
            out.push(Diagnostic::warning(
                SOURCE,
                format!("duplicate {what} `{d}` in machine `{path}`"),
            ));
        }
    }
    scope.push(m);
    for t in &m.transitions {
        for (role, name) in [("source", &t.source), ("target", &t.target)] {
            if m.state(name).is_none() {
                out.push(Diagnostic::warning(
                    SOURCE,
                    format!(
                        "unknown {role} state {name} in transition `{}` of machine `{path}`",
                        t.name
                    ),
                ));
            }
        }
        if let TransitionKind::Event(event) = &t.kind {
            if !scope
                .iter()
                .any(|enclosing| enclosing.event(event).is_some())
            {
                out.push(Diagnostic::warning(
                    SOURCE,
                    format!(
                        "unknown event {event} in transition `{}` of machine `{path}`",
                        t.name
                    ),
                ));
            }
        }
    }
    for s in &m.states {
        match (&s.spawn, &s.nested) {
            (Some(sp), Some(nested)) if sp.machine == nested.name => {
                if nested.state(&sp.state).is_none() {
                    out.push(Diagnostic::warning(
                        SOURCE,
                        format!(
                            "spawn of `{}` in state `{path}/{}` names unknown state {}",
                            sp.machine, s.name, sp.state
                        ),
                    ));
                }
            }
            (Some(sp), _) => out.push(Diagnostic::warning(
                SOURCE,
                format!(
                    "spawn in state `{path}/{}` names unknown machine {}",
                    s.name, sp.machine
                ),
            )),
            _ => {}
        }
        if let Some(nested) = &s.nested {
            check_machine(nested, scope, out);
        }
    }
    scope.pop();
}

/// Name-resolution and uniqueness findings. An empty list means every name resolves.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for d in duplicates(program.variables.iter().map(|v| v.name.as_str())) {
        out.push(Diagnostic::warning(
            SOURCE,
            format!("duplicate variable `{d}`"),
        ));
    }
    for d in duplicates(program.machines.iter().map(|m| m.name.as_str())) {
        out.push(Diagnostic::warning(
            SOURCE,
            format!("duplicate machine `{d}`"),
        ));
    }
    let mut scope = Vec::new();
    for m in &program.machines {
        check_machine(m, &mut scope, &mut out);
    }
    for sp in &program.spawns {
        match program.machine(&sp.machine) {
            None => out.push(Diagnostic::warning(
                SOURCE,
                format!("spawn names unknown machine {}", sp.machine),
            )),
            Some(m) if m.state(&sp.state).is_none() => out.push(Diagnostic::warning(
                SOURCE,
                format!("spawn of `{}` names unknown state {}", sp.machine, sp.state),
            )),
            Some(_) => {}
        }
    }
    out
}
