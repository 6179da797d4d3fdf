//! Tick-driven execution of parsed programs.
//!
//! Each tick visits every spawned machine outermost first. For the active
//! state the outgoing transitions are checked in declaration order and the
//! first eligible one is taken: nested machines are exited deepest first,
//! then the source `onexit`, the transition action, and the target `onentry`
//! run in that order. Epsilon transitions reached this way chain within the
//! same tick up to a cap. When nothing fires the state's `running` block runs
//! and the nested machine, if any, is ticked. Block failures become
//! diagnostics; nothing a program does stops the interpreter.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::diag::Diagnostic;
use crate::expr::{eval, Environment, EvalError, EvalMode, Frame, HostRegistry, Value};
use crate::syntax::{ActionBlock, MachineDecl, Program, StateDecl, TransitionDecl, TransitionKind};

pub const DEFAULT_TICK_MS: u64 = 50;
pub const DEFAULT_EPS_CHAIN_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterpreterConfig {
    pub tick_period_ms: u64,
    pub eps_chain_cap: usize,
}

impl Default for InterpreterConfig {
    fn default() -> Self {
        Self {
            tick_period_ms: DEFAULT_TICK_MS,
            eps_chain_cap: DEFAULT_EPS_CHAIN_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Running,
    IdleError,
}

/// Runtime state of one spawned machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineInstance {
    /// `[machine]` for a top-level machine, `[machine, state, machine, ...]`
    /// for nested ones.
    pub(crate) decl_path: Vec<String>,
    pub(crate) active_state: Option<String>,
    pub(crate) entered_at_tick: u64,
    pub(crate) vars: Frame,
    pub(crate) nested: Option<Box<MachineInstance>>,
    pub(crate) status: InstanceStatus,
    /// The initial state's `onentry` runs at the start of the next tick.
    pub(crate) entry_pending: bool,
}

impl MachineInstance {
    pub fn machine_path(&self) -> String {
        self.decl_path.join("/")
    }

    pub fn machine_name(&self) -> &str {
        self.decl_path.last().map(String::as_str).unwrap_or("")
    }

    pub fn active_state(&self) -> Option<&str> {
        self.active_state.as_deref()
    }

    /// `machine/.../state` of the active state, if any.
    pub fn active_path(&self) -> Option<String> {
        self.active_state
            .as_ref()
            .map(|s| format!("{}/{s}", self.machine_path()))
    }

    pub fn entered_at_tick(&self) -> u64 {
        self.entered_at_tick
    }

    pub fn variables(&self) -> &Frame {
        &self.vars
    }

    pub fn nested(&self) -> Option<&MachineInstance> {
        self.nested.as_deref()
    }

    pub fn status(&self) -> InstanceStatus {
        self.status
    }

    /// Active state paths, outermost first.
    pub fn active_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = Some(self);
        while let Some(inst) = cur {
            if inst.status == InstanceStatus::Running {
                out.extend(inst.active_path());
            }
            cur = inst.nested.as_deref();
        }
        out
    }

    pub(crate) fn idle(decl_path: Vec<String>) -> Self {
        Self {
            decl_path,
            active_state: None,
            entered_at_tick: 0,
            vars: Frame::new(),
            nested: None,
            status: InstanceStatus::IdleError,
            entry_pending: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitionTaken {
    pub machine: String,
    pub name: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TickReport {
    pub tick: u64,
    pub transitions_taken: Vec<TransitionTaken>,
    pub diagnostics: Vec<Diagnostic>,
    pub eps_chain_truncated: bool,
}

/// One row of [`Runtime::active_configuration`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveState {
    pub machine: String,
    pub state: String,
    pub variables: Vec<(String, Value)>,
}

struct TickCtx {
    now: u64,
    report: TickReport,
    /// Guard results for this tick, keyed by declaring machine path and event.
    guards: HashMap<(String, String), bool>,
}

/// A loaded program with its root variables and spawned machines.
pub struct Runtime {
    pub(crate) program: Arc<Program>,
    pub(crate) hosts: Arc<HostRegistry>,
    pub(crate) root: Frame,
    pub(crate) instances: Vec<MachineInstance>,
    pub(crate) config: InterpreterConfig,
}

fn block_source(path: &str, what: &str) -> String {
    format!("{path} {what}")
}

impl Runtime {
    /// Evaluates root variables in order, then spawns every directive at tick `now`.
    pub fn load(
        program: Program,
        hosts: Arc<HostRegistry>,
        config: InterpreterConfig,
        now: u64,
    ) -> (Self, Vec<Diagnostic>) {
        let mut diags = Vec::new();
        let mut runtime = Self {
            program: Arc::new(program),
            hosts,
            root: Frame::new(),
            instances: Vec::new(),
            config,
        };
        let decls = runtime.program.variables.clone();
        runtime.root = init_frame(&decls, &[], &runtime.hosts, "root", None, &mut diags);
        let spawns = runtime.program.spawns.clone();
        for sp in &spawns {
            let (inst, d) = runtime.spawn(&sp.machine, &sp.state, now);
            diags.extend(d);
            runtime.instances.push(inst);
        }
        (runtime, diags)
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn config(&self) -> InterpreterConfig {
        self.config
    }

    pub fn root_variables(&self) -> &Frame {
        &self.root
    }

    pub fn instances(&self) -> &[MachineInstance] {
        &self.instances
    }

    pub fn hosts(&self) -> &HostRegistry {
        &self.hosts
    }

    /// Creates an instance of a top-level machine in `initial_state`. Machine
    /// variables are initialized now; the state's `onentry` runs on the next tick.
    pub fn spawn(
        &self,
        machine: &str,
        initial_state: &str,
        now: u64,
    ) -> (MachineInstance, Vec<Diagnostic>) {
        let mut diags = Vec::new();
        let Some(decl) = self.program.machine(machine) else {
            diags.push(Diagnostic::error(
                format!("spawn {machine}"),
                format!("unknown machine `{machine}`"),
            ));
            return (MachineInstance::idle(vec![machine.to_string()]), diags);
        };
        if decl.state(initial_state).is_none() {
            diags.push(Diagnostic::error(
                format!("spawn {machine}"),
                format!("unknown state `{initial_state}` in machine `{machine}`"),
            ));
            return (MachineInstance::idle(vec![machine.to_string()]), diags);
        }
        let vars = init_frame(
            &decl.variables,
            &[&self.root],
            &self.hosts,
            machine,
            None,
            &mut diags,
        );
        let inst = MachineInstance {
            decl_path: vec![machine.to_string()],
            active_state: Some(initial_state.to_string()),
            entered_at_tick: now,
            vars,
            nested: None,
            status: InstanceStatus::Running,
            entry_pending: true,
        };
        (inst, diags)
    }

    /// Ticks every spawned machine.
    pub fn tick(&mut self, now: u64) -> TickReport {
        let mut instances = std::mem::take(&mut self.instances);
        let mut report = TickReport {
            tick: now,
            ..TickReport::default()
        };
        for inst in &mut instances {
            let r = self.tick_instance(inst, now);
            report.transitions_taken.extend(r.transitions_taken);
            report.diagnostics.extend(r.diagnostics);
            report.eps_chain_truncated |= r.eps_chain_truncated;
        }
        self.instances = instances;
        report
    }

    pub fn tick_instance(&self, inst: &mut MachineInstance, now: u64) -> TickReport {
        let mut ctx = TickCtx {
            now,
            report: TickReport {
                tick: now,
                ..TickReport::default()
            },
            guards: HashMap::new(),
        };
        self.step(inst, &[&self.root], &[], &mut ctx);
        ctx.report
    }

    /// Active states, deepest first, with the variables visible there.
    pub fn active_configuration(&self, inst: &MachineInstance) -> Vec<ActiveState> {
        let mut rows = Vec::new();
        let mut frames: Vec<&Frame> = vec![&self.root];
        let mut cur = Some(inst);
        while let Some(i) = cur {
            if i.status != InstanceStatus::Running {
                break;
            }
            let Some(state) = &i.active_state else { break };
            frames.push(&i.vars);
            let mut visible: Vec<(String, Value)> = Vec::new();
            for frame in &frames {
                for (k, v) in frame.iter() {
                    if let Some(slot) = visible.iter_mut().find(|(name, _)| name == k) {
                        slot.1 = v.clone();
                    } else {
                        visible.push((k.clone(), v.clone()));
                    }
                }
            }
            rows.push(ActiveState {
                machine: i.machine_path(),
                state: state.clone(),
                variables: visible,
            });
            cur = i.nested.as_deref();
        }
        rows.reverse();
        rows
    }

    fn step(
        &self,
        inst: &mut MachineInstance,
        outer: &[&Frame],
        enclosing: &[&MachineDecl],
        ctx: &mut TickCtx,
    ) {
        if inst.status != InstanceStatus::Running {
            return;
        }
        let path = inst.machine_path();
        let Some(decl) = self.program.machine_at(&inst.decl_path) else {
            ctx.report.diagnostics.push(Diagnostic::error(
                path.clone(),
                "machine declaration no longer exists",
            ));
            return;
        };
        let MachineInstance {
            decl_path,
            active_state,
            entered_at_tick,
            vars,
            nested,
            entry_pending,
            ..
        } = inst;
        let mut frames: Vec<&Frame> = outer.to_vec();
        frames.push(vars);
        let mut scope: Vec<&MachineDecl> = enclosing.to_vec();
        scope.push(decl);

        let Some(mut current) = active_state.clone() else {
            return;
        };
        if *entry_pending {
            *entry_pending = false;
            self.enter_state(decl, decl_path, &current, &frames, nested, ctx);
        }

        let mut taken = 0usize;
        loop {
            let Some(state) = decl.state(&current) else {
                ctx.report.diagnostics.push(Diagnostic::error(
                    path.clone(),
                    format!("active state `{current}` no longer exists"),
                ));
                return;
            };
            let eligible = decl
                .transitions
                .iter()
                .filter(|t| t.source == current)
                .filter(|t| taken == 0 || t.kind == TransitionKind::Epsilon)
                .find(|t| self.eligible(t, *entered_at_tick, &frames, &scope, &path, ctx));
            let Some(t) = eligible else { break };
            if taken == self.config.eps_chain_cap {
                ctx.report.eps_chain_truncated = true;
                ctx.report.diagnostics.push(Diagnostic::warning(
                    path.clone(),
                    format!(
                        "epsilon chain truncated after {} transitions in state `{current}`",
                        self.config.eps_chain_cap
                    ),
                ));
                break;
            }
            if decl.state(&t.target).is_none() {
                ctx.report.diagnostics.push(Diagnostic::error(
                    format!("{path} transition {}", t.name),
                    format!("unknown target state `{}`", t.target),
                ));
                break;
            }
            self.exit_state(state, &path, &frames, nested, ctx);
            if let Some(action) = &t.action {
                run_action(
                    action,
                    &frames,
                    &self.hosts,
                    &block_source(&path, &format!("transition {}", t.name)),
                    ctx,
                );
            }
            ctx.report.transitions_taken.push(TransitionTaken {
                machine: path.clone(),
                name: t.name.clone(),
                from: current.clone(),
                to: t.target.clone(),
            });
            current = t.target.clone();
            *active_state = Some(current.clone());
            *entered_at_tick = ctx.now;
            self.enter_state(decl, decl_path, &current, &frames, nested, ctx);
            taken += 1;
        }

        if taken == 0 {
            if let Some(state) = decl.state(&current) {
                if let Some(running) = &state.running {
                    run_action(
                        running,
                        &frames,
                        &self.hosts,
                        &block_source(&format!("{path}/{current}"), "running"),
                        ctx,
                    );
                }
            }
            if let Some(child) = nested {
                self.step(child, &frames, &scope, ctx);
            }
        }
    }

    fn eligible(
        &self,
        t: &TransitionDecl,
        entered_at: u64,
        frames: &[&Frame],
        scope: &[&MachineDecl],
        path: &str,
        ctx: &mut TickCtx,
    ) -> bool {
        match &t.kind {
            TransitionKind::Epsilon => true,
            TransitionKind::Timeout { millis } => {
                ctx.now
                    .saturating_sub(entered_at)
                    .saturating_mul(self.config.tick_period_ms)
                    >= *millis
            }
            TransitionKind::Event(event) => {
                // Innermost declaring machine; its guard sees only its own scope.
                let Some(depth) = scope.iter().rposition(|m| m.event(event).is_some()) else {
                    let key = (path.to_string(), event.clone());
                    if ctx.guards.insert(key, false).is_none() {
                        ctx.report.diagnostics.push(Diagnostic::error(
                            format!("{path} event {event}"),
                            format!("unknown event `{event}`"),
                        ));
                    }
                    return false;
                };
                let declaring: Vec<&str> =
                    scope[..=depth].iter().map(|m| m.name.as_str()).collect();
                let key = (declaring.join("/"), event.clone());
                if let Some(&cached) = ctx.guards.get(&key) {
                    return cached;
                }
                let guard = &scope[depth].event(event).expect("found above").guard;
                // frames = [root, machine_0, ..., machine_n]; the declaring
                // machine at `depth` owns frames[depth + 1].
                let env = Environment::new(&frames[..depth + 2], &self.hosts);
                let result = match eval(&guard.expr, &env, EvalMode::Guard) {
                    Ok(Value::Boolean(b)) => Ok(b),
                    Ok(other) => Err(EvalError::TypeMismatch {
                        expected: "Boolean",
                        found: other.type_name(),
                    }),
                    Err(e) => Err(e),
                };
                let fired = match result {
                    Ok(b) => b,
                    Err(e) => {
                        ctx.report.diagnostics.push(Diagnostic::error(
                            format!("{} event {event}", key.0),
                            format!("guard failed: {e}"),
                        ));
                        false
                    }
                };
                ctx.guards.insert(key, fired);
                fired
            }
        }
    }

    fn enter_state(
        &self,
        decl: &MachineDecl,
        decl_path: &[String],
        state_name: &str,
        frames: &[&Frame],
        nested: &mut Option<Box<MachineInstance>>,
        ctx: &mut TickCtx,
    ) {
        let path = decl_path.join("/");
        let Some(state) = decl.state(state_name) else {
            return;
        };
        if let Some(entry) = &state.onentry {
            run_action(
                entry,
                frames,
                &self.hosts,
                &block_source(&format!("{path}/{state_name}"), "onentry"),
                ctx,
            );
        }
        *nested = None;
        if let Some(child) = self.spawn_nested(
            decl_path,
            state,
            frames,
            ctx.now,
            &mut ctx.report.diagnostics,
        ) {
            let mut child = child;
            child.entry_pending = false;
            let child_decl = state.nested.as_ref().expect("spawn_nested checked");
            let child_state = child.active_state.clone().expect("spawned running");
            {
                let mut child_frames = frames.to_vec();
                let MachineInstance {
                    decl_path: child_path,
                    vars,
                    nested: grandchild,
                    ..
                } = &mut child;
                child_frames.push(vars);
                self.enter_state(
                    child_decl,
                    child_path,
                    &child_state,
                    &child_frames,
                    grandchild,
                    ctx,
                );
            }
            *nested = Some(Box::new(child));
        }
    }

    /// Builds (without entering) the nested instance a state spawns, if any.
    pub(crate) fn spawn_nested(
        &self,
        decl_path: &[String],
        state: &StateDecl,
        frames: &[&Frame],
        now: u64,
        diags: &mut Vec<Diagnostic>,
    ) -> Option<MachineInstance> {
        let sp = state.spawn.as_ref()?;
        let mut child_path = decl_path.to_vec();
        child_path.push(state.name.clone());
        child_path.push(sp.machine.clone());
        let source = format!("spawn {}", child_path.join("/"));
        let Some(child_decl) = state.nested.as_ref().filter(|m| m.name == sp.machine) else {
            diags.push(Diagnostic::error(
                source,
                format!("unknown nested machine `{}`", sp.machine),
            ));
            return None;
        };
        if child_decl.state(&sp.state).is_none() {
            diags.push(Diagnostic::error(
                source,
                format!("unknown state `{}` in machine `{}`", sp.state, sp.machine),
            ));
            return None;
        }
        let vars = init_frame(
            &child_decl.variables,
            frames,
            &self.hosts,
            &child_path.join("/"),
            None,
            diags,
        );
        Some(MachineInstance {
            decl_path: child_path,
            active_state: Some(sp.state.clone()),
            entered_at_tick: now,
            vars,
            nested: None,
            status: InstanceStatus::Running,
            entry_pending: true,
        })
    }

    fn exit_state(
        &self,
        state: &StateDecl,
        path: &str,
        frames: &[&Frame],
        nested: &mut Option<Box<MachineInstance>>,
        ctx: &mut TickCtx,
    ) {
        if let Some(mut child) = nested.take() {
            self.exit_instance(&mut child, frames, ctx);
        }
        if let Some(exit) = &state.onexit {
            run_action(
                exit,
                frames,
                &self.hosts,
                &block_source(&format!("{path}/{}", state.name), "onexit"),
                ctx,
            );
        }
    }

    fn exit_instance(&self, inst: &mut MachineInstance, outer: &[&Frame], ctx: &mut TickCtx) {
        let Some(decl) = self.program.machine_at(&inst.decl_path) else {
            return;
        };
        let Some(state) = inst.active_state.as_deref().and_then(|s| decl.state(s)) else {
            return;
        };
        let path = inst.machine_path();
        let mut frames = outer.to_vec();
        frames.push(&inst.vars);
        self.exit_state(state, &path, &frames, &mut inst.nested, ctx);
    }
}

fn run_action(
    block: &ActionBlock,
    frames: &[&Frame],
    hosts: &HostRegistry,
    source: &str,
    ctx: &mut TickCtx,
) {
    let env = Environment::new(frames, hosts);
    if let Err(e) = eval(&block.expr, &env, EvalMode::Action) {
        ctx.report
            .diagnostics
            .push(Diagnostic::error(source.to_string(), e.to_string()));
    }
}

/// Evaluates variable declarations in order into a new frame. Each init sees
/// the outer frames plus the variables declared before it. When `previous`
/// is given, variables whose init block is unchanged keep their old value.
pub(crate) fn init_frame(
    decls: &[crate::syntax::VariableDecl],
    outer: &[&Frame],
    hosts: &HostRegistry,
    scope_name: &str,
    previous: Option<(&Frame, &[crate::syntax::VariableDecl])>,
    diags: &mut Vec<Diagnostic>,
) -> Frame {
    let mut frame = Frame::new();
    for decl in decls {
        if let Some((old_frame, old_decls)) = previous {
            let unchanged = old_decls
                .iter()
                .any(|d| d.name == decl.name && d.init == decl.init);
            if let (true, Some(v)) = (unchanged, old_frame.get(&decl.name)) {
                frame.insert(decl.name.clone(), v.clone());
                continue;
            }
        }
        let value = {
            let mut frames = outer.to_vec();
            frames.push(&frame);
            let env = Environment::new(&frames, hosts);
            match eval(&decl.init.expr, &env, EvalMode::Action) {
                Ok(v) => v,
                Err(e) => {
                    diags.push(Diagnostic::error(
                        format!("{scope_name} var {}", decl.name),
                        format!("initializer failed, bound to nil: {e}"),
                    ));
                    Value::Nil
                }
            }
        };
        frame.insert(decl.name.clone(), value);
    }
    frame
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::Mutex;

    use super::*;
    use crate::expr::{HostObject, HostRef};
    use crate::syntax::parse_program;

    /// Records every action-mode message it receives and answers guards
    /// from switchable flags.
    #[derive(Default)]
    struct Probe {
        log: Mutex<Vec<String>>,
        flags: Mutex<HashMap<String, bool>>,
        fail_guards: AtomicBool,
        guard_calls: AtomicUsize,
    }

    impl Probe {
        fn set(&self, flag: &str, value: bool) {
            self.flags.lock().unwrap().insert(flag.to_string(), value);
        }

        fn log(&self) -> Vec<String> {
            self.log.lock().unwrap().clone()
        }
    }

    impl HostObject for Probe {
        fn class_name(&self) -> &str {
            "Probe"
        }

        fn send(&self, selector: &str, args: &[Value], mode: EvalMode) -> Result<Value, EvalError> {
            match (selector, mode) {
                ("flag:", EvalMode::Guard) => {
                    self.guard_calls.fetch_add(1, Ordering::SeqCst);
                    if self.fail_guards.load(Ordering::SeqCst) {
                        return Err(EvalError::Host("probe guard failure".into()));
                    }
                    let key = args.first().map(|v| v.to_string()).unwrap_or_default();
                    Ok(Value::Boolean(
                        *self.flags.lock().unwrap().get(&key).unwrap_or(&false),
                    ))
                }
                ("explode", _) => Err(EvalError::Host("boom".into())),
                ("log:", EvalMode::Action) => {
                    self.log.lock().unwrap().push(args[0].to_string());
                    Ok(Value::Nil)
                }
                _ => Err(EvalError::UnknownSelector {
                    receiver: "Probe".into(),
                    selector: selector.into(),
                }),
            }
        }
    }

    fn load(src: &str) -> (Runtime, Arc<Probe>, Vec<Diagnostic>) {
        let probe = Arc::new(Probe::default());
        let mut hosts = HostRegistry::new();
        let p = probe.clone();
        hosts.register("Probe", move || p.clone() as Arc<dyn HostObject>);
        let program = parse_program(src).unwrap();
        let (rt, diags) = Runtime::load(program, Arc::new(hosts), InterpreterConfig::default(), 0);
        (rt, probe, diags)
    }

    const FLIP: &str = "
        (var p := [Probe uniqueInstance])
        (machine M
          (state a (onentry [p log: 1]) (running [p log: 2]) (onexit [p log: 3]))
          (state b (onentry [p log: 4]) (onexit [p log: 6]))
          (on go a -> b t-ab [p log: 5])
          (on back b -> a t-ba)
          (event go [p flag: 1])
          (event back [p flag: 2]))
        (spawn M a)";

    #[test]
    fn spawn_binds_variables_and_defers_entry() {
        let (rt, probe, diags) = load(FLIP);
        assert!(diags.is_empty(), "{diags:?}");
        let inst = &rt.instances()[0];
        assert_eq!(inst.active_state(), Some("a"));
        assert_eq!(inst.status(), InstanceStatus::Running);
        assert!(matches!(rt.root_variables().get("p"), Some(Value::Host(_))));
        assert!(probe.log().is_empty());
    }

    #[test]
    fn exactly_once_actions_in_order() {
        let (mut rt, probe, _) = load(FLIP);
        let r = rt.tick(1);
        assert!(r.transitions_taken.is_empty());
        assert_eq!(probe.log(), ["1", "2"]);
        probe.set("1", true);
        let r = rt.tick(2);
        assert_eq!(r.transitions_taken.len(), 1);
        assert_eq!(r.transitions_taken[0].name, "t-ab");
        // onexit(a), transition action, onentry(b); no running block on a transition tick.
        assert_eq!(probe.log(), ["1", "2", "3", "5", "4"]);
        assert_eq!(rt.instances()[0].entered_at_tick(), 2);
    }

    #[test]
    fn spawn_errors_idle_the_machine() {
        let (rt, _, _) = load(FLIP);
        let (inst, diags) = rt.spawn("M", "nosuch", 0);
        assert_eq!(inst.status(), InstanceStatus::IdleError);
        assert!(diags[0].message.contains("unknown state"));
        assert!(rt.active_configuration(&inst).is_empty());
        let (inst, diags) = rt.spawn("Nope", "a", 0);
        assert_eq!(inst.status(), InstanceStatus::IdleError);
        assert!(diags[0].message.contains("unknown machine"));
    }

    #[test]
    fn failing_initializer_binds_nil_and_still_spawns() {
        let src = "(var p := [Probe uniqueInstance])
            (machine M (var bad := [p explode]) (var ok := [2]) (state s (onentry [p log: ok])))
            (spawn M s)";
        let (mut rt, probe, diags) = load(src);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].source.contains("var bad"));
        let inst = &rt.instances()[0];
        assert_eq!(inst.variables().get("bad"), Some(&Value::Nil));
        assert_eq!(inst.active_state(), Some("s"));
        rt.tick(1);
        assert_eq!(probe.log(), ["2"]);
    }

    #[test]
    fn epsilon_self_loop_is_truncated_at_cap() {
        let (mut rt, _, _) = load("(machine M (state a) (eps a -> a loop)) (spawn M a)");
        let r = rt.tick(1);
        assert_eq!(r.transitions_taken.len(), DEFAULT_EPS_CHAIN_CAP);
        assert!(r.eps_chain_truncated);
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.transitions_taken.len() <= DEFAULT_EPS_CHAIN_CAP + 1);
    }

    #[test]
    fn epsilon_chain_runs_within_one_tick() {
        let (mut rt, _, _) = load(
            "(machine M (state a) (state b) (state c) (eps a -> b t1) (eps b -> c t2)) (spawn M a)",
        );
        let r = rt.tick(1);
        let names: Vec<_> = r
            .transitions_taken
            .iter()
            .map(|t| t.name.as_str())
            .collect();
        assert_eq!(names, ["t1", "t2"]);
        assert!(!r.eps_chain_truncated);
        assert_eq!(rt.instances()[0].active_state(), Some("c"));
    }

    #[test]
    fn timeout_fires_at_tick_ten() {
        let (mut rt, _, _) =
            load("(machine M (state a) (state b) (ontime 500 a -> b slow)) (spawn M a)");
        let mut fired_at = None;
        for tick in 1..=20 {
            if !rt.tick(tick).transitions_taken.is_empty() {
                fired_at = Some(tick);
                break;
            }
        }
        let fired_at = fired_at.expect("timeout fired");
        assert!((9..=11).contains(&fired_at), "fired at {fired_at}");
    }

    #[test]
    fn first_declared_transition_wins() {
        let (mut rt, probe, _) = load(
            "(var p := [Probe uniqueInstance])
             (machine M (state s) (state l) (state r)
               (on right s -> l t-lturn) (on left s -> r t-rturn)
               (event right [p flag: 1]) (event left [p flag: 2]))
             (spawn M s)",
        );
        probe.set("1", true);
        probe.set("2", true);
        let r = rt.tick(1);
        assert_eq!(r.transitions_taken[0].name, "t-lturn");
    }

    #[test]
    fn throwing_guard_never_stops_the_interpreter() {
        let (mut rt, probe, _) = load(FLIP);
        probe.fail_guards.store(true, Ordering::SeqCst);
        let mut diags = 0;
        for tick in 1..=1000 {
            let r = rt.tick(tick);
            assert!(r.transitions_taken.is_empty());
            diags += r.diagnostics.len();
        }
        assert_eq!(rt.instances()[0].status(), InstanceStatus::Running);
        // One failing guard (`go`) per tick.
        assert_eq!(diags, 1000);
    }

    #[test]
    fn guards_are_evaluated_once_per_tick() {
        let (mut rt, probe, _) = load(
            "(var p := [Probe uniqueInstance])
             (machine M (state s) (state x) (state y)
               (on e s -> x t1) (on e s -> y t2) (event e [p flag: 9]))
             (spawn M s)",
        );
        rt.tick(1);
        assert_eq!(probe.guard_calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn non_boolean_guard_is_an_error_and_false() {
        let (mut rt, _, _) =
            load("(machine M (state s) (state t) (on e s -> t go) (event e [1])) (spawn M s)");
        let r = rt.tick(1);
        assert!(r.transitions_taken.is_empty());
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.diagnostics[0].message.contains("expected Boolean"));
    }

    #[test]
    fn action_errors_skip_only_the_block() {
        let (mut rt, probe, _) = load(
            "(var p := [Probe uniqueInstance])
             (machine M (state s (onentry [p explode])) (state t (onentry [p log: 7])) (eps s -> t go))
             (spawn M s)",
        );
        let r = rt.tick(1);
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.transitions_taken.len(), 1);
        assert_eq!(probe.log(), ["7"]);
    }

    const NESTED: &str = "
        (var p := [Probe uniqueInstance])
        (machine Outer
          (state s (onexit [p log: 100])
            (machine Inner
              (var depth := [2])
              (state x (onentry [p log: 10]) (onexit [p log: 11]))
              (state y (onentry [p log: 20]) (onexit [p log: 21]))
              (on step x -> y t-xy))
            (spawn Inner x))
          (state done (onentry [p log: 200]))
          (on leave s -> done t-leave)
          (event leave [p flag: 1])
          (event step [p flag: 2]))
        (spawn Outer s)";

    #[test]
    fn nested_machine_lifecycle() {
        let (mut rt, probe, _) = load(NESTED);
        rt.tick(1);
        assert_eq!(probe.log(), ["10"]);
        let cfg = rt.active_configuration(&rt.instances()[0]);
        assert_eq!(cfg.len(), 2);
        assert_eq!(cfg[0].machine, "Outer/s/Inner");
        assert_eq!(cfg[0].state, "x");
        assert!(cfg[0].variables.iter().any(|(k, _)| k == "depth"));
        assert_eq!(cfg[1].machine, "Outer");

        // Inner transition, driven by an event declared on the outer machine.
        probe.set("2", true);
        let r = rt.tick(2);
        assert_eq!(r.transitions_taken[0].machine, "Outer/s/Inner");
        assert_eq!(probe.log(), ["10", "11", "20"]);

        // Outer preempts inner: inner exits first, then the outer state.
        probe.set("1", true);
        let r = rt.tick(3);
        assert_eq!(r.transitions_taken.len(), 1);
        assert_eq!(r.transitions_taken[0].name, "t-leave");
        assert_eq!(probe.log(), ["10", "11", "20", "21", "100", "200"]);
        assert!(rt.instances()[0].nested().is_none());
        assert_eq!(rt.instances()[0].active_paths(), ["Outer/done"]);
    }

    #[test]
    fn reentering_respawns_nested_fresh() {
        let src = "(var p := [Probe uniqueInstance])
            (machine O
              (state s (machine I (state x) (state y) (eps x -> y go)) (spawn I x))
              (state t)
              (on leave s -> t out) (on back t -> s in)
              (event leave [p flag: 1]) (event back [(p flag: 1) not]))
            (spawn O s)";
        let (mut rt, probe, _) = load(src);
        rt.tick(1);
        rt.tick(2);
        assert_eq!(rt.instances()[0].active_paths(), ["O/s", "O/s/I/y"]);
        probe.set("1", true);
        rt.tick(3);
        probe.set("1", false);
        rt.tick(4);
        assert_eq!(rt.instances()[0].active_paths(), ["O/s", "O/s/I/x"]);
    }

    #[test]
    fn configuration_snapshot_of_fresh_spawn() {
        let (rt, _, _) = load(FLIP);
        let cfg = rt.active_configuration(&rt.instances()[0]);
        assert_eq!(cfg.len(), 1);
        assert_eq!((cfg[0].machine.as_str(), cfg[0].state.as_str()), ("M", "a"));
        assert!(matches!(cfg[0].variables[0].1, Value::Host(HostRef(_))));
    }

    #[test]
    fn identical_runs_are_deterministic() {
        let trace = || {
            let (mut rt, probe, _) = load(FLIP);
            let mut out = Vec::new();
            for tick in 1..50 {
                probe.set("1", tick % 7 == 0);
                probe.set("2", tick % 5 == 0);
                out.push(rt.tick(tick));
            }
            out
        };
        assert_eq!(trace(), trace());
    }
}
