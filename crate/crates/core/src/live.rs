//! Integrating edited source into a running [`Runtime`].
//!
//! A state is identified by its full name path (`Tito/stop`,
//! `Outer/s/Inner/x`). When the active path survives an edit the instance
//! keeps its state and timer; otherwise it is respawned at its spawn
//! directive, or idled when that is gone too. Variables keep their values
//! unless their initializer changed.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::diag::Diagnostic;
use crate::expr::Frame;
use crate::interp::{init_frame, InstanceStatus, MachineInstance, Runtime};
use crate::syntax::{
    parse_program, ParseFailure, Program, SourceDigest, SpawnDirective, StateDecl,
};

pub const DEFAULT_DEBOUNCE_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Integrated,
    IntegratedWithRespawn,
    RejectedParseError,
    MachineIdled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateOutcome {
    pub kind: UpdateKind,
    /// Active state paths kept across the update.
    pub preserved_states: Vec<String>,
    /// Machine paths restarted at their spawn state.
    pub respawned: Vec<String>,
    /// Machine paths that could not be restarted.
    pub idled: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<ParseFailure>,
    pub diagnostics: Vec<Diagnostic>,
}

impl UpdateOutcome {
    fn rejected(err: ParseFailure) -> Self {
        Self {
            kind: UpdateKind::RejectedParseError,
            preserved_states: Vec::new(),
            respawned: Vec::new(),
            idled: Vec::new(),
            diagnostics: vec![Diagnostic::error("update", format!("parse error at {err}"))],
            parse_error: Some(err),
        }
    }
}

struct Integration<'a> {
    old: &'a Program,
    new: &'a Program,
    runtime: &'a Runtime,
    now: u64,
    preserved: Vec<String>,
    respawned: Vec<String>,
    idled: Vec<String>,
    diags: Vec<Diagnostic>,
}

impl Integration<'_> {
    /// New variable frame for a machine whose declarations may have changed.
    fn carry_vars(
        &mut self,
        old_path: &[String],
        old_vars: &Frame,
        new_decls: &[crate::syntax::VariableDecl],
        outer: &[&Frame],
        scope: &str,
    ) -> Frame {
        let old_decls = self
            .old
            .machine_at(old_path)
            .map(|m| m.variables.as_slice())
            .unwrap_or(&[]);
        init_frame(
            new_decls,
            outer,
            &self.runtime.hosts,
            scope,
            Some((old_vars, old_decls)),
            &mut self.diags,
        )
    }

    fn top_level(
        &mut self,
        old: MachineInstance,
        directive: Option<&SpawnDirective>,
        root: &Frame,
    ) -> MachineInstance {
        let name = old.machine_name().to_string();
        let path = old.machine_path();
        let spawn_state = directive.filter(|d| d.machine == name).and_then(|d| {
            self.new
                .machine(&name)?
                .state(&d.state)
                .map(|_| d.state.clone())
        });

        if old.status == InstanceStatus::IdleError {
            return match spawn_state {
                Some(state) => {
                    let (inst, d) = self.runtime_spawn(&name, &state, root);
                    self.diags.extend(d);
                    self.respawned.push(path);
                    inst
                }
                None => old,
            };
        }

        let Some(decl) = self.new.machine(&name) else {
            self.idle(&path, format!("machine `{name}` was removed"));
            return MachineInstance::idle(old.decl_path);
        };
        let active = old.active_state.clone().unwrap_or_default();
        if decl.state(&active).is_some() {
            let vars = self.carry_vars(&old.decl_path, &old.vars, &decl.variables, &[root], &path);
            self.preserved.push(format!("{path}/{active}"));
            let state = decl.state(&active).expect("checked");
            let nested = self.nested(&old, state, &[root, &vars]);
            return MachineInstance {
                vars,
                nested,
                ..old
            };
        }
        match spawn_state {
            Some(state) => {
                let vars =
                    self.carry_vars(&old.decl_path, &old.vars, &decl.variables, &[root], &path);
                self.respawned.push(path);
                MachineInstance {
                    decl_path: old.decl_path,
                    active_state: Some(state),
                    entered_at_tick: self.now,
                    vars,
                    nested: None,
                    status: InstanceStatus::Running,
                    entry_pending: true,
                }
            }
            None => {
                self.idle(
                    &path,
                    format!("active state `{active}` and its spawn state are gone"),
                );
                MachineInstance::idle(old.decl_path)
            }
        }
    }

    fn runtime_spawn(
        &self,
        machine: &str,
        state: &str,
        root: &Frame,
    ) -> (MachineInstance, Vec<Diagnostic>) {
        let mut diags = Vec::new();
        let decl = self.new.machine(machine).expect("caller resolved machine");
        let vars = init_frame(
            &decl.variables,
            &[root],
            &self.runtime.hosts,
            machine,
            None,
            &mut diags,
        );
        let inst = MachineInstance {
            decl_path: vec![machine.to_string()],
            active_state: Some(state.to_string()),
            entered_at_tick: self.now,
            vars,
            nested: None,
            status: InstanceStatus::Running,
            entry_pending: true,
        };
        (inst, diags)
    }

    /// Reconciles the nested instance of `parent` (whose active state
    /// survived) against the new declaration of that state.
    fn nested(
        &mut self,
        parent: &MachineInstance,
        state: &StateDecl,
        frames: &[&Frame],
    ) -> Option<Box<MachineInstance>> {
        let old_child = parent.nested.as_deref();
        let wanted = state
            .spawn
            .as_ref()
            .zip(state.nested.as_ref())
            .filter(|(sp, m)| sp.machine == m.name);
        let Some((directive, child_decl)) = wanted else {
            if let Some(child) = old_child {
                self.diags.push(Diagnostic::warning(
                    "update",
                    format!(
                        "nested machine `{}` no longer spawned; dropped",
                        child.machine_path()
                    ),
                ));
            }
            return None;
        };
        let mut child_path = parent.decl_path.clone();
        child_path.push(state.name.clone());
        child_path.push(child_decl.name.clone());
        let path = child_path.join("/");

        let Some(old_child) =
            old_child.filter(|c| c.decl_path == child_path && c.status == InstanceStatus::Running)
        else {
            // Newly added, or a different machine now: start it fresh.
            let built = self.runtime.spawn_nested(
                &parent.decl_path,
                state,
                frames,
                self.now,
                &mut self.diags,
            );
            if old_child.is_some() && built.is_some() {
                self.respawned.push(path);
            }
            return built.map(Box::new);
        };

        let active = old_child.active_state.clone().unwrap_or_default();
        let vars = self.carry_vars(
            &old_child.decl_path,
            &old_child.vars,
            &child_decl.variables,
            frames,
            &path,
        );
        if let Some(child_state) = child_decl.state(&active) {
            self.preserved.push(format!("{path}/{active}"));
            let mut child_frames = frames.to_vec();
            child_frames.push(&vars);
            let grandchild = self.nested(old_child, child_state, &child_frames);
            return Some(Box::new(MachineInstance {
                vars,
                nested: grandchild,
                ..old_child.clone()
            }));
        }
        if child_decl.state(&directive.state).is_some() {
            self.respawned.push(path);
            return Some(Box::new(MachineInstance {
                decl_path: child_path,
                active_state: Some(directive.state.clone()),
                entered_at_tick: self.now,
                vars,
                nested: None,
                status: InstanceStatus::Running,
                entry_pending: true,
            }));
        }
        self.idle(
            &path,
            format!("active state `{active}` and its spawn state are gone"),
        );
        Some(Box::new(MachineInstance::idle(child_path)))
    }

    fn idle(&mut self, path: &str, why: String) {
        self.idled.push(path.to_string());
        self.diags
            .push(Diagnostic::error(format!("update {path}"), why));
    }
}

impl Runtime {
    /// Replaces the running program with `new_source` without restarting it.
    pub fn apply_source(&mut self, new_source: &str, now: u64) -> UpdateOutcome {
        let program = match parse_program(new_source) {
            Ok(p) => p,
            Err(e) => return UpdateOutcome::rejected(e),
        };
        self.apply_program(program, now)
    }

    pub fn apply_program(&mut self, program: Program, now: u64) -> UpdateOutcome {
        let new = Arc::new(program);
        let old = self.program.clone();
        let mut diags = new.diagnostics.clone();
        let root = init_frame(
            &new.variables,
            &[],
            &self.hosts,
            "root",
            Some((&self.root, &old.variables)),
            &mut diags,
        );

        let mut old_instances: Vec<Option<MachineInstance>> = std::mem::take(&mut self.instances)
            .into_iter()
            .map(Some)
            .collect();
        let mut integration = Integration {
            old: &old,
            new: &new,
            runtime: self,
            now,
            preserved: Vec::new(),
            respawned: Vec::new(),
            idled: Vec::new(),
            diags,
        };
        let mut instances = Vec::new();
        for directive in &new.spawns {
            let existing = old_instances
                .iter_mut()
                .find(|slot| {
                    slot.as_ref()
                        .is_some_and(|i| i.machine_name() == directive.machine)
                })
                .and_then(Option::take);
            match existing {
                Some(inst) => instances.push(integration.top_level(inst, Some(directive), &root)),
                None => {
                    let (inst, d) = match new.machine(&directive.machine) {
                        Some(m) if m.state(&directive.state).is_some() => {
                            integration.runtime_spawn(&directive.machine, &directive.state, &root)
                        }
                        _ => (
                            MachineInstance::idle(vec![directive.machine.clone()]),
                            vec![Diagnostic::error(
                                format!("spawn {}", directive.machine),
                                format!(
                                    "cannot spawn `{}` at `{}`",
                                    directive.machine, directive.state
                                ),
                            )],
                        ),
                    };
                    integration.diags.extend(d);
                    instances.push(inst);
                }
            }
        }
        for inst in old_instances.into_iter().flatten() {
            instances.push(integration.top_level(inst, None, &root));
        }

        let Integration {
            preserved,
            respawned,
            idled,
            diags,
            ..
        } = integration;
        let kind = if !idled.is_empty() {
            UpdateKind::MachineIdled
        } else if !respawned.is_empty() {
            UpdateKind::IntegratedWithRespawn
        } else {
            UpdateKind::Integrated
        };
        self.program = new;
        self.root = root;
        self.instances = instances;
        UpdateOutcome {
            kind,
            preserved_states: preserved,
            respawned,
            idled,
            parse_error: None,
            diagnostics: diags,
        }
    }
}

/// Free-function form of [`Runtime::apply_source`].
pub fn apply_source(runtime: &mut Runtime, new_source: &str, now: u64) -> UpdateOutcome {
    runtime.apply_source(new_source, now)
}

#[derive(Debug, Clone, PartialEq)]
pub enum WatchEvent {
    Changed(String),
    Unreadable(Diagnostic),
}

/// Debounced content watcher for one source file, driven by an external clock.
///
/// A change is reported once the file's digest has been stable for the
/// debounce window; rewriting identical bytes reports nothing.
#[derive(Debug)]
pub struct SourceWatcher {
    path: PathBuf,
    debounce_ms: u64,
    applied: SourceDigest,
    pending: Option<(SourceDigest, String, u64)>,
    error_reported: bool,
}

impl SourceWatcher {
    pub fn new(path: impl Into<PathBuf>, current_text: &str, debounce_ms: u64) -> Self {
        Self {
            path: path.into(),
            debounce_ms,
            applied: SourceDigest::of(current_text),
            pending: None,
            error_reported: false,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Marks `text` as already integrated, e.g. after a `load_source` command.
    pub fn mark_applied(&mut self, text: &str) {
        self.applied = SourceDigest::of(text);
        self.pending = None;
    }

    pub fn poll(&mut self, now_ms: u64) -> Option<WatchEvent> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) => {
                if self.error_reported {
                    return None;
                }
                self.error_reported = true;
                return Some(WatchEvent::Unreadable(Diagnostic::error(
                    format!("watch {}", self.path.display()),
                    format!("cannot read source: {e}"),
                )));
            }
        };
        self.error_reported = false;
        let digest = SourceDigest::of(&text);
        if digest == self.applied {
            self.pending = None;
            return None;
        }
        match &self.pending {
            Some((d, _, since)) if *d == digest => {
                if now_ms.saturating_sub(*since) < self.debounce_ms {
                    return None;
                }
            }
            _ => {
                self.pending = Some((digest, text, now_ms));
                if self.debounce_ms > 0 {
                    return None;
                }
            }
        }
        let (digest, text, _) = self.pending.take().expect("pending set above");
        self.applied = digest;
        Some(WatchEvent::Changed(text))
    }
}

/// A [`SourceWatcher`] polled on a background thread against wall-clock time.
pub struct WatcherThread {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl WatcherThread {
    pub fn spawn(
        mut watcher: SourceWatcher,
        poll_interval: Duration,
        mut on_event: impl FnMut(WatchEvent) + Send + 'static,
    ) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("lrp-watch".into())
            .spawn(move || {
                let start = Instant::now();
                while !flag.load(Ordering::Relaxed) {
                    if let Some(ev) = watcher.poll(start.elapsed().as_millis() as u64) {
                        on_event(ev);
                    }
                    std::thread::sleep(poll_interval);
                }
            })
            .expect("spawn watcher thread");
        Self {
            stop,
            handle: Some(handle),
        }
    }
}

impl Drop for WatcherThread {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
