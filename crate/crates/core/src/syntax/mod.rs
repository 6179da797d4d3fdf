//! Lexing, parsing, printing, and validation of `.lrp` programs.
//!
//! Grammar summary (`;` starts a comment that runs to end of line):
//!
//! ```text
//! program    := (var | machine | spawn)*
//! var        := "(" "var" IDENT ":=" BLOCK ")"
//! spawn      := "(" "spawn" IDENT IDENT ")"
//! machine    := "(" "machine" IDENT (var | state | transition | event)* ")"
//! state      := "(" "state" IDENT (action | machine | spawn)* ")"
//! action     := "(" ("onentry" | "running" | "onexit") BLOCK ")"
//! transition := "(" "on" IDENT IDENT "->" IDENT IDENT BLOCK? ")"
//!             | "(" "ontime" MILLIS IDENT "->" IDENT IDENT BLOCK? ")"
//!             | "(" "eps" IDENT "->" IDENT IDENT BLOCK? ")"
//! event      := "(" "event" IDENT BLOCK ")"
//! ```

mod ast;
mod lexer;
mod parser;
mod print;
mod validate;

use std::fmt;

pub use ast::*;
pub use print::print_program;
pub use validate::validate;

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, serde::Serialize)]
#[error("{line}:{column}: {message}")]
pub struct ParseFailure {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseFailure {
    pub(crate) fn new(pos: Pos, message: impl Into<String>) -> Self {
        Self {
            line: pos.line,
            column: pos.column,
            message: message.into(),
        }
    }
}

/// Parses program text. Unresolved names do not fail the parse; they are
/// reported in [`Program::diagnostics`].
pub fn parse_program(source: &str) -> Result<Program, ParseFailure> {
    let mut program = parser::parse_structure(source)?;
    program.diagnostics = validate(&program);
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SETUP: &str = include_str!("../../programs/setup.lrp");
    const STOP: &str = include_str!("../../programs/stop_at_obstacle.lrp");
    const AVOID: &str = include_str!("../../programs/avoid_obstacles.lrp");

    #[test]
    fn stop_program_structure() {
        let p = parse_program(STOP).unwrap();
        assert_eq!(p.variables.len(), 4);
        assert_eq!(p.machines.len(), 1);
        let tito = &p.machines[0];
        assert_eq!(tito.name, "Tito");
        assert_eq!(tito.states.len(), 2);
        assert_eq!(tito.transitions.len(), 2);
        assert_eq!(tito.events.len(), 2);
        assert_eq!(
            p.spawns,
            vec![SpawnDirective {
                machine: "Tito".into(),
                state: "forward".into()
            }]
        );
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        assert_eq!(tito.transitions[0].name, "t-stop");
        assert_eq!(
            tito.transitions[0].kind,
            TransitionKind::Event("obstacle".into())
        );
    }

    #[test]
    fn avoidance_program_resolves() {
        let p = parse_program(AVOID).unwrap();
        assert_eq!(p.machines[0].states.len(), 4);
        assert_eq!(p.machines[0].transitions.len(), 6);
        assert_eq!(p.machines[0].events.len(), 4);
        assert!(validate(&p).is_empty());
        assert_eq!(parse_program(SETUP).unwrap().variables.len(), 4);
    }

    #[test]
    fn empty_program() {
        let p = parse_program("").unwrap();
        assert!(p.variables.is_empty() && p.machines.is_empty() && p.spawns.is_empty());
        assert!(parse_program("  ; only a comment\n").is_ok());
    }

    #[test]
    fn missing_final_paren_is_unbalanced_at_end() {
        let text = STOP.trim_end();
        let cut = &text[..text.len() - 1];
        let err = parse_program(cut).unwrap_err();
        assert!(
            err.message
                .contains("unbalanced parenthesis at end of input"),
            "{err}"
        );
        let lines = cut.lines().count();
        assert_eq!(err.line, lines);
    }

    #[test]
    fn unknown_target_is_a_diagnostic() {
        let p = parse_program("(machine M (state a) (eps a -> b t)) (spawn M a)").unwrap();
        assert_eq!(p.diagnostics.len(), 1);
        assert!(p.diagnostics[0].message.contains("unknown target state b"));
    }

    #[test]
    fn partial_avoidance_edit_reports_unresolved_names() {
        let extra = "    (on rightObstacle stop -> turnLeft t-lturn)\n    (on leftObstacle stop -> turnRight t-rturn)\n";
        let body_end = STOP.rfind(")\n(spawn").unwrap();
        let text = format!("{}{}{}", &STOP[..body_end], extra, &STOP[body_end..]);
        let p = parse_program(&text).unwrap();
        // Oracle: names referenced by the two transitions minus names declared.
        let declared_states = ["forward", "stop"];
        let declared_events = ["obstacle", "noObstacle"];
        let referenced = [
            ("state", "turnLeft"),
            ("state", "turnRight"),
            ("event", "rightObstacle"),
            ("event", "leftObstacle"),
        ];
        let unresolved = referenced
            .iter()
            .filter(|(kind, name)| match *kind {
                "state" => !declared_states.contains(name),
                _ => !declared_events.contains(name),
            })
            .count();
        assert_eq!(unresolved, 4);
        assert_eq!(p.diagnostics.len(), unresolved);
        assert!(p.diagnostics.len() >= 2);
    }

    #[test]
    fn transition_kinds_and_state_blocks() {
        let src = "(machine M
            (var k := [1])
            (state a (onentry [k]) (running [k]) (onexit [k])
               (machine Inner (state x) (state y) (ontime 200 x -> y inner-t))
               (spawn Inner x))
            (state b)
            (ontime 500 a -> b slow [k negated])
            (eps b -> a back)
            (on go a -> b fast)
            (event go [true]))
            (spawn M a)";
        let p = parse_program(src).unwrap();
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        let m = &p.machines[0];
        assert_eq!(
            m.transitions[0].kind,
            TransitionKind::Timeout { millis: 500 }
        );
        assert!(m.transitions[0].action.is_some());
        assert_eq!(m.transitions[1].kind, TransitionKind::Epsilon);
        let a = m.state("a").unwrap();
        assert!(a.onentry.is_some() && a.running.is_some() && a.onexit.is_some());
        assert_eq!(a.nested.as_ref().unwrap().name, "Inner");
        let path = vec!["M".to_string(), "a".to_string(), "Inner".to_string()];
        assert_eq!(p.machine_at(&path).unwrap().states.len(), 2);
    }

    #[test]
    fn nested_events_resolve_through_enclosing_machines() {
        let src = "(machine Outer
            (state s (machine Inner (state x) (state y) (on ping x -> y t)) (spawn Inner x))
            (event ping [true]))";
        assert!(parse_program(src).unwrap().diagnostics.is_empty());
        let bad = "(machine Outer
            (state s (machine Inner (state x) (state y) (on ping x -> y t)) (spawn Inner nowhere)))";
        assert_eq!(parse_program(bad).unwrap().diagnostics.len(), 2);
    }

    #[test]
    fn duplicate_names_are_diagnosed() {
        let p =
            parse_program("(machine M (state a) (state a) (eps a -> a t) (eps a -> a t))").unwrap();
        assert_eq!(p.diagnostics.len(), 2);
        let p = parse_program("(var x := [1]) (var x := [2]) (machine M) (machine M)").unwrap();
        assert_eq!(p.diagnostics.len(), 2);
    }

    #[test]
    fn malformed_forms_fail_with_position() {
        for (src, line, col) in [
            ("(machine)", 1, 1),
            ("(state s)", 1, 1),
            ("(machine M (state a (onentry [1]) (onentry [2])))", 1, 35),
            ("(machine M (ontime 0 a -> b t))", 1, 20),
            ("(machine M (ontime 1.5 a -> b t))", 1, 20),
            ("(var x [1])", 1, 8),
            ("(var x := [1 +])", 1, 14),
            ("()", 1, 1),
            (")", 1, 1),
            ("(spawn A b c)", 1, 12),
            ("(machine M\n  (event e [(a]))", 2, 15),
        ] {
            let err = parse_program(src).unwrap_err();
            assert_eq!((err.line, err.column), (line, col), "{src}: {err}");
        }
    }

    #[test]
    fn printed_form_reparses_equal() {
        for src in [STOP, AVOID, SETUP] {
            let p = parse_program(src).unwrap();
            let printed = print_program(&p);
            assert_eq!(parse_program(&printed).unwrap(), p, "{printed}");
        }
    }

    #[test]
    fn source_hash_tracks_text() {
        let a = parse_program(STOP).unwrap();
        let b = parse_program(&format!("{STOP}\n")).unwrap();
        assert_ne!(a.source_hash, b.source_hash);
        assert_eq!(a, b);
    }
}
