use std::fmt;

use crate::diag::Diagnostic;
use crate::expr::Expr;

/// SHA-256 of the source text a program was parsed from.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceDigest(pub [u8; 32]);

impl SourceDigest {
    pub fn of(text: &str) -> Self {
        use sha2::{Digest, Sha256};
        Self(Sha256::digest(text.as_bytes()).into())
    }
}

impl fmt::Display for SourceDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for SourceDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SourceDigest({self})")
    }
}

/// A parsed action block. Equality compares the expression tree only, so
/// reformatting a block does not count as a change.
#[derive(Debug, Clone)]
pub struct ActionBlock {
    pub source_text: String,
    pub expr: Expr,
}

impl PartialEq for ActionBlock {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDecl {
    pub name: String,
    pub init: ActionBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpawnDirective {
    pub machine: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDecl {
    pub name: String,
    pub guard: ActionBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKind {
    Event(String),
    Timeout { millis: u64 },
    Epsilon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDecl {
    pub kind: TransitionKind,
    pub source: String,
    pub target: String,
    pub name: String,
    pub action: Option<ActionBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDecl {
    pub name: String,
    pub onentry: Option<ActionBlock>,
    pub running: Option<ActionBlock>,
    pub onexit: Option<ActionBlock>,
    pub nested: Option<MachineDecl>,
    /// Starts `nested` whenever this state is entered.
    pub spawn: Option<SpawnDirective>,
}

impl StateDecl {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            onentry: None,
            running: None,
            onexit: None,
            nested: None,
            spawn: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineDecl {
    pub name: String,
    pub variables: Vec<VariableDecl>,
    pub states: Vec<StateDecl>,
    pub transitions: Vec<TransitionDecl>,
    pub events: Vec<EventDecl>,
}

impl MachineDecl {
    pub fn state(&self, name: &str) -> Option<&StateDecl> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn event(&self, name: &str) -> Option<&EventDecl> {
        self.events.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Program {
    pub variables: Vec<VariableDecl>,
    pub machines: Vec<MachineDecl>,
    pub spawns: Vec<SpawnDirective>,
    pub source_hash: SourceDigest,
    /// Name-resolution findings; a program with diagnostics still loads.
    pub diagnostics: Vec<Diagnostic>,
}

impl Program {
    pub fn empty() -> Self {
        Self {
            variables: Vec::new(),
            machines: Vec::new(),
            spawns: Vec::new(),
            source_hash: SourceDigest::of(""),
            diagnostics: Vec::new(),
        }
    }

    pub fn machine(&self, name: &str) -> Option<&MachineDecl> {
        self.machines.iter().find(|m| m.name == name)
    }

    /// Resolves a declaration path: `[machine]` or `[machine, state, machine, ...]`.
    pub fn machine_at(&self, path: &[String]) -> Option<&MachineDecl> {
        let (first, rest) = path.split_first()?;
        let mut machine = self.machine(first)?;
        for pair in rest.chunks(2) {
            let [state, nested] = pair else { return None };
            machine = machine
                .state(state)?
                .nested
                .as_ref()
                .filter(|m| &m.name == nested)?;
        }
        Some(machine)
    }
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.machines == other.machines
            && self.spawns == other.spawns
    }
}
