mod common;

use lrp::expr::parse_expr;
use lrp::syntax::{parse_program, print_program};
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-zA-Z0-9_-]{0,6}".prop_filter("keyword", |s| {
        !matches!(
            s.as_str(),
            "var"
                | "machine"
                | "state"
                | "on"
                | "ontime"
                | "eps"
                | "event"
                | "spawn"
                | "onentry"
                | "running"
                | "onexit"
        )
    })
}

/// Identifiers usable inside expressions, which do not admit `-`.
fn expr_ident() -> impl Strategy<Value = String> {
    ident().prop_map(|s| s.replace('-', "_"))
}

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (-1000.0..1000.0f64).prop_map(|n| format!("{n}")),
        Just("true".to_string()),
        Just("false".to_string()),
        expr_ident(),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (
                inner.clone(),
                prop_oneof![Just("not"), Just("negated"), Just("stop")]
            )
                .prop_map(|(r, s)| format!("{r} {s}")),
            (inner.clone(), inner.clone()).prop_map(|(r, a)| format!("{r} forward: ({a})")),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(r, a, b)| format!("({r}) at: ({a}) put: ({b})")),
            inner.prop_map(|e| format!("({e})")),
        ]
    })
}

fn transition(states: Vec<String>) -> impl Strategy<Value = String> {
    let pick = prop::sample::select(states);
    (
        0..3u8,
        pick.clone(),
        pick,
        ident(),
        ident(),
        1..5000u32,
        prop::option::of(expr()),
    )
        .prop_map(|(kind, src, dst, name, ev, ms, action)| {
            let head = match kind {
                0 => format!("on {ev}"),
                1 => format!("ontime {ms}"),
                _ => "eps".to_string(),
            };
            let action = action.map(|a| format!(" [{a}]")).unwrap_or_default();
            format!("({head} {src} -> {dst} {name}{action})")
        })
}

fn machine(depth: u32) -> BoxedStrategy<String> {
    let states = prop::collection::vec(ident(), 1..4);
    states
        .prop_flat_map(move |names| {
            let state_bodies = prop::collection::vec(
                (
                    prop::option::of(expr()),
                    prop::option::of(expr()),
                    prop::option::of(expr()),
                    if depth > 0 {
                        prop::option::of(machine(depth - 1)).boxed()
                    } else {
                        Just(None).boxed()
                    },
                ),
                names.len(),
            );
            let transitions = prop::collection::vec(transition(names.clone()), 0..4);
            let events = prop::collection::vec((ident(), expr()), 0..3);
            let vars = prop::collection::vec((expr_ident(), expr()), 0..3);
            (
                ident(),
                Just(names),
                state_bodies,
                transitions,
                events,
                vars,
            )
        })
        .prop_map(|(name, names, bodies, transitions, events, vars)| {
            let mut out = format!("(machine {name}\n");
            for (v, e) in vars {
                out += &format!("  (var {v} := [{e}])\n");
            }
            for (s, (entry, running, exit, nested)) in names.iter().zip(bodies) {
                out += &format!("  (state {s}");
                if let Some(e) = entry {
                    out += &format!(" (onentry [{e}])");
                }
                if let Some(e) = running {
                    out += &format!(" (running [{e}])");
                }
                if let Some(e) = exit {
                    out += &format!(" (onexit [{e}])");
                }
                if let Some(m) = nested {
                    out += &format!("\n {m}");
                }
                out += ")\n";
            }
            for t in transitions {
                out += &format!("  {t}\n");
            }
            for (ev, g) in events {
                out += &format!("  (event {ev} [{g}])\n");
            }
            out + ")"
        })
        .boxed()
}

fn program() -> impl Strategy<Value = String> {
    (
        prop::collection::vec((expr_ident(), expr()), 0..3),
        prop::collection::vec(machine(2), 0..3),
        prop::collection::vec((ident(), ident()), 0..2),
    )
        .prop_map(|(vars, machines, spawns)| {
            let mut out = String::new();
            for (v, e) in vars {
                out += &format!("(var {v} := [{e}]) ; comment\n");
            }
            for m in machines {
                out += &m;
                out += "\n";
            }
            for (m, s) in spawns {
                out += &format!("(spawn {m} {s})\n");
            }
            out
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parse_program_is_total(text in "\\PC{0,300}") {
        let _ = parse_program(&text);
    }

    #[test]
    fn parse_program_is_total_on_lrp_like_text(text in "[()\\[\\]a-z0-9 :=>;\n.-]{0,300}") {
        let _ = parse_program(&text);
    }

    #[test]
    fn parse_expr_is_total(text in "\\PC{0,120}") {
        let _ = parse_expr(&text);
    }

    #[test]
    fn print_then_parse_is_identity(src in program()) {
        let p = parse_program(&src).map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?;
        let printed = print_program(&p);
        let again = parse_program(&printed).map_err(|e| TestCaseError::fail(format!("{e}\n{printed}")))?;
        prop_assert_eq!(&again, &p);
        prop_assert_eq!(print_program(&again), printed);
        prop_assert_eq!(again.diagnostics, p.diagnostics);
    }

    #[test]
    fn truncation_never_panics(src in program(), cut in 0usize..2000) {
        let cut = src.char_indices().map(|(i, _)| i).nth(cut).unwrap_or(src.len());
        let _ = parse_program(&src[..cut]);
    }
}

#[test]
fn deeply_nested_input_is_rejected_not_overflowed() {
    let text = "(".repeat(100_000);
    assert!(parse_program(&text).is_err());
    let block = format!("(var x := [{}1{}])", "(".repeat(50_000), ")".repeat(50_000));
    assert!(parse_program(&block).is_err());
    assert!(parse_expr(&"(".repeat(100_000)).is_err());
}

#[test]
fn bundled_programs_print_stably() {
    for name in ["setup.lrp", "stop_at_obstacle.lrp", "avoid_obstacles.lrp"] {
        let p = parse_program(&common::program_text(name)).unwrap();
        let once = print_program(&p);
        assert_eq!(
            print_program(&parse_program(&once).unwrap()),
            once,
            "{name}"
        );
    }
}
