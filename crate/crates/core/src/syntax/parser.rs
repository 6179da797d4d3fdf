use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::{ParseFailure, Pos};
use crate::expr::parse_expr;

const MAX_NESTING: usize = 200;

#[derive(Debug)]
enum Node {
    List(Vec<Node>, Pos),
    Atom(Token),
}

impl Node {
    fn pos(&self) -> Pos {
        match self {
            Node::List(_, pos) => *pos,
            Node::Atom(tok) => tok.pos,
        }
    }
}

fn build_tree(tokens: Vec<Token>, end: Pos) -> Result<Vec<Node>, ParseFailure> {
    // Explicit stack so hostile nesting cannot overflow the call stack.
    let mut stack: Vec<(Vec<Node>, Pos)> = vec![(Vec::new(), Pos { line: 1, column: 1 })];
    for tok in tokens {
        match tok.kind {
            TokenKind::LParen => {
                if stack.len() > MAX_NESTING {
                    return Err(ParseFailure::new(tok.pos, "forms nested too deeply"));
                }
                stack.push((Vec::new(), tok.pos));
            }
            TokenKind::RParen => {
                if stack.len() == 1 {
                    return Err(ParseFailure::new(
                        tok.pos,
                        "unbalanced parenthesis: unexpected `)`",
                    ));
                }
                let (items, open) = stack.pop().expect("stack has an open list");
                stack
                    .last_mut()
                    .expect("root frame")
                    .0
                    .push(Node::List(items, open));
            }
            _ => stack
                .last_mut()
                .expect("root frame")
                .0
                .push(Node::Atom(tok)),
        }
    }
    if stack.len() > 1 {
        let open = stack.last().map(|(_, p)| *p).unwrap_or(end);
        return Err(ParseFailure::new(
            end,
            format!(
                "unbalanced parenthesis at end of input: `(` opened at {}:{} is never closed",
                open.line, open.column
            ),
        ));
    }
    Ok(stack.pop().map(|(items, _)| items).unwrap_or_default())
}

fn end_position(text: &str) -> Pos {
    let mut pos = Pos { line: 1, column: 1 };
    for c in text.chars() {
        if c == '\n' {
            pos.line += 1;
            pos.column = 1;
        } else {
            pos.column += 1;
        }
    }
    pos
}

/// Translates a byte offset inside a block's text into a source position.
fn block_offset_pos(block_pos: Pos, text: &str, offset: usize) -> Pos {
    let mut pos = Pos {
        line: block_pos.line,
        column: block_pos.column + 1,
    };
    for c in text[..offset.min(text.len())].chars() {
        if c == '\n' {
            pos.line += 1;
            pos.column = 1;
        } else {
            pos.column += 1;
        }
    }
    pos
}

struct Form<'a> {
    items: &'a [Node],
    pos: Pos,
    idx: usize,
    keyword: &'a str,
}

impl<'a> Form<'a> {
    fn open(node: &'a Node) -> Result<Self, ParseFailure> {
        match node {
            Node::List(items, pos) => match items.first() {
                Some(Node::Atom(Token {
                    kind: TokenKind::Ident(kw),
                    ..
                })) => Ok(Form {
                    items,
                    pos: *pos,
                    idx: 1,
                    keyword: kw,
                }),
                Some(other) => Err(ParseFailure::new(other.pos(), "expected a form keyword")),
                None => Err(ParseFailure::new(*pos, "empty form `()`")),
            },
            Node::Atom(tok) => Err(ParseFailure::new(tok.pos, "expected a parenthesized form")),
        }
    }

    fn next_pos(&self) -> Pos {
        self.items.get(self.idx).map_or(self.pos, Node::pos)
    }

    fn fail<T>(&self, what: &str) -> Result<T, ParseFailure> {
        Err(ParseFailure::new(
            self.next_pos(),
            format!("malformed `{}` form: expected {what}", self.keyword),
        ))
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseFailure> {
        match self.items.get(self.idx) {
            Some(Node::Atom(Token {
                kind: TokenKind::Ident(name),
                ..
            })) => {
                self.idx += 1;
                Ok(name.clone())
            }
            _ => self.fail(what),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseFailure> {
        match self.items.get(self.idx) {
            Some(Node::Atom(Token {
                kind: TokenKind::Number(n),
                ..
            })) => {
                self.idx += 1;
                Ok(*n)
            }
            _ => self.fail(what),
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), ParseFailure> {
        match self.items.get(self.idx) {
            Some(Node::Atom(tok)) if tok.kind == kind => {
                self.idx += 1;
                Ok(())
            }
            _ => self.fail(what),
        }
    }

    fn block(&mut self) -> Result<Option<ActionBlock>, ParseFailure> {
        match self.items.get(self.idx) {
            Some(Node::Atom(Token {
                kind: TokenKind::Block(text),
                pos,
            })) => {
                self.idx += 1;
                let expr = parse_expr(text).map_err(|e| {
                    ParseFailure::new(block_offset_pos(*pos, text, e.offset), e.message)
                })?;
                Ok(Some(ActionBlock {
                    source_text: text.trim().to_string(),
                    expr,
                }))
            }
            _ => Ok(None),
        }
    }

    fn required_block(&mut self) -> Result<ActionBlock, ParseFailure> {
        match self.block()? {
            Some(b) => Ok(b),
            None => self.fail("an action block `[...]`"),
        }
    }

    fn rest(&mut self) -> &'a [Node] {
        let rest = &self.items[self.idx.min(self.items.len())..];
        self.idx = self.items.len();
        rest
    }

    fn finish(&self) -> Result<(), ParseFailure> {
        if self.idx < self.items.len() {
            self.fail("end of form")
        } else {
            Ok(())
        }
    }
}

fn parse_var(form: &mut Form<'_>) -> Result<VariableDecl, ParseFailure> {
    let name = form.ident("a variable name")?;
    form.expect(TokenKind::Assign, "`:=`")?;
    let init = form.required_block()?;
    form.finish()?;
    Ok(VariableDecl { name, init })
}

fn parse_spawn(form: &mut Form<'_>) -> Result<SpawnDirective, ParseFailure> {
    let machine = form.ident("a machine name")?;
    let state = form.ident("a state name")?;
    form.finish()?;
    Ok(SpawnDirective { machine, state })
}

fn parse_transition(form: &mut Form<'_>) -> Result<TransitionDecl, ParseFailure> {
    let kind = match form.keyword {
        "on" => TransitionKind::Event(form.ident("an event name")?),
        "ontime" => {
            let pos = form.next_pos();
            let ms = form.number("a timeout in milliseconds")?;
            if ms <= 0.0 || ms.fract() != 0.0 || ms > u64::MAX as f64 {
                return Err(ParseFailure::new(
                    pos,
                    "timeout must be a positive whole number of milliseconds",
                ));
            }
            TransitionKind::Timeout { millis: ms as u64 }
        }
        _ => TransitionKind::Epsilon,
    };
    let source = form.ident("a source state")?;
    form.expect(TokenKind::Arrow, "`->`")?;
    let target = form.ident("a target state")?;
    let name = form.ident("a transition name")?;
    let action = form.block()?;
    form.finish()?;
    Ok(TransitionDecl {
        kind,
        source,
        target,
        name,
        action,
    })
}

fn parse_event(form: &mut Form<'_>) -> Result<EventDecl, ParseFailure> {
    let name = form.ident("an event name")?;
    let guard = form.required_block()?;
    form.finish()?;
    Ok(EventDecl { name, guard })
}

fn parse_state(form: &mut Form<'_>) -> Result<StateDecl, ParseFailure> {
    let mut state = StateDecl::new(form.ident("a state name")?);
    for node in form.rest() {
        let mut item = Form::open(node)?;
        let slot = match item.keyword {
            "onentry" => Some(&mut state.onentry),
            "running" => Some(&mut state.running),
            "onexit" => Some(&mut state.onexit),
            _ => None,
        };
        if let Some(slot) = slot {
            if slot.is_some() {
                return Err(ParseFailure::new(
                    item.pos,
                    format!(
                        "state `{}` has more than one `{}` block",
                        state.name, item.keyword
                    ),
                ));
            }
            *slot = Some(item.required_block()?);
            item.finish()?;
            continue;
        }
        match item.keyword {
            "machine" => {
                if state.nested.is_some() {
                    return Err(ParseFailure::new(
                        item.pos,
                        format!(
                            "state `{}` declares more than one nested machine",
                            state.name
                        ),
                    ));
                }
                state.nested = Some(parse_machine(&mut item)?);
            }
            "spawn" => {
                if state.spawn.is_some() {
                    return Err(ParseFailure::new(
                        item.pos,
                        format!("state `{}` has more than one `spawn`", state.name),
                    ));
                }
                state.spawn = Some(parse_spawn(&mut item)?);
            }
            other => {
                return Err(ParseFailure::new(
                    item.pos,
                    format!("unknown form `{other}` in state `{}`", state.name),
                ))
            }
        }
    }
    Ok(state)
}

fn parse_machine(form: &mut Form<'_>) -> Result<MachineDecl, ParseFailure> {
    let mut machine = MachineDecl {
        name: form.ident("a machine name")?,
        variables: Vec::new(),
        states: Vec::new(),
        transitions: Vec::new(),
        events: Vec::new(),
    };
    for node in form.rest() {
        let mut item = Form::open(node)?;
        match item.keyword {
            "var" => machine.variables.push(parse_var(&mut item)?),
            "state" => machine.states.push(parse_state(&mut item)?),
            "on" | "ontime" | "eps" => machine.transitions.push(parse_transition(&mut item)?),
            "event" => machine.events.push(parse_event(&mut item)?),
            other => {
                return Err(ParseFailure::new(
                    item.pos,
                    format!("unknown form `{other}` in machine `{}`", machine.name),
                ))
            }
        }
    }
    Ok(machine)
}

pub(super) fn parse_structure(text: &str) -> Result<Program, ParseFailure> {
    let tokens = tokenize(text)?;
    let nodes = build_tree(tokens, end_position(text))?;
    let mut program = Program::empty();
    program.source_hash = SourceDigest::of(text);
    for node in &nodes {
        let mut form = Form::open(node)?;
        match form.keyword {
            "var" => program.variables.push(parse_var(&mut form)?),
            "machine" => program.machines.push(parse_machine(&mut form)?),
            "spawn" => program.spawns.push(parse_spawn(&mut form)?),
            other => {
                return Err(ParseFailure::new(
                    form.pos,
                    format!("unknown top-level form `{other}`"),
                ))
            }
        }
    }
    Ok(program)
}
