use std::fmt::Write;

use super::ast::*;

fn block(b: &ActionBlock) -> String {
    format!("[{}]", b.expr)
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_var(out: &mut String, v: &VariableDecl, depth: usize) {
    indent(out, depth);
    let _ = writeln!(out, "(var {} := {})", v.name, block(&v.init));
}

fn print_machine(out: &mut String, m: &MachineDecl, depth: usize) {
    indent(out, depth);
    let _ = writeln!(out, "(machine {}", m.name);
    for v in &m.variables {
        print_var(out, v, depth + 1);
    }
    for s in &m.states {
        indent(out, depth + 1);
        let _ = write!(out, "(state {}", s.name);
        for (kw, b) in [
            ("onentry", &s.onentry),
            ("running", &s.running),
            ("onexit", &s.onexit),
        ] {
            if let Some(b) = b {
                out.push('\n');
                indent(out, depth + 2);
                let _ = write!(out, "({kw} {})", block(b));
            }
        }
        if let Some(nested) = &s.nested {
            out.push('\n');
            print_machine(out, nested, depth + 2);
            out.pop();
        }
        if let Some(sp) = &s.spawn {
            out.push('\n');
            indent(out, depth + 2);
            let _ = write!(out, "(spawn {} {})", sp.machine, sp.state);
        }
        out.push_str(")\n");
    }
    for t in &m.transitions {
        indent(out, depth + 1);
        let head = match &t.kind {
            TransitionKind::Event(e) => format!("on {e}"),
            TransitionKind::Timeout { millis } => format!("ontime {millis}"),
            TransitionKind::Epsilon => "eps".to_string(),
        };
        let _ = write!(out, "({head} {} -> {} {}", t.source, t.target, t.name);
        if let Some(a) = &t.action {
            let _ = write!(out, " {}", block(a));
        }
        out.push_str(")\n");
    }
    for e in &m.events {
        indent(out, depth + 1);
        let _ = writeln!(out, "(event {} {})", e.name, block(&e.guard));
    }
    out.pop();
    out.push_str(")\n");
}

/// Canonical source form of a program. Parsing the output yields a
/// structurally equal program.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for v in &program.variables {
        print_var(&mut out, v, 0);
    }
    for m in &program.machines {
        print_machine(&mut out, m, 0);
    }
    for s in &program.spawns {
        let _ = writeln!(out, "(spawn {} {})", s.machine, s.state);
    }
    out
}
