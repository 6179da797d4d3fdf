//! Session orchestration: program, world, bus, driver, bridge and
//! interpreter driven by one tick loop.
//!
//! Each loop iteration first drains external input (due script steps,
//! commands, source-file changes), then, unless paused, runs one interpreter
//! tick followed by one driver step, and records what happened in the trace.

pub mod config;
pub mod protocol;
pub mod script;
pub mod server;
pub mod snapshot;
pub mod trace;

use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::json;

use crate::bridge::{install_bridge, BridgeHandle};
use crate::bus::{Bus, BusError, BusEvent};
use crate::diag::{Diagnostic, Severity};
use crate::expr::HostRegistry;
use crate::interp::{InterpreterConfig, Runtime, TickReport, DEFAULT_EPS_CHAIN_CAP};
use crate::live::{SourceWatcher, UpdateKind, WatchEvent, WatcherThread, DEFAULT_DEBOUNCE_MS};
use crate::msg::Pose;
use crate::sim::{parse_world_file, run_driver, Driver, RobotState, WorldFileError};
use crate::syntax::{parse_program, Program};

pub use config::{ConfigError, Mode, SessionConfig};
pub use protocol::{Ack, Command, Frame};
pub use script::{ResolvedAction, ResolvedStep};
pub use server::{ClientId, Server};
pub use snapshot::SessionSnapshot;
pub use trace::{Trace, TraceEvent, TraceKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_COLLISION: i32 = 2;

/// Minimum spacing of periodic snapshot pushes. Transitions push immediately.
pub const SNAPSHOT_INTERVAL: Duration = Duration::from_millis(100);
const WATCH_POLL: Duration = Duration::from_millis(20);

/// Where a command's answer goes.
#[derive(Debug)]
pub enum Reply {
    None,
    Client(ClientId),
    Channel(Sender<Ack>),
}

/// Input queued for the tick thread.
#[derive(Debug)]
pub enum Inbound {
    Command { command: Command, reply: Reply },
    Watch(WatchEvent),
    ClientConnected(ClientId),
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    World {
        path: PathBuf,
        #[source]
        source: WorldFileError,
    },
    #[error(transparent)]
    Script(#[from] script::ScriptError),
    #[error("cannot write trace {}: {source}", path.display())]
    Trace {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot start server: {0}")]
    Serve(#[source] io::Error),
    #[error("bus setup failed: {0}")]
    Bus(#[from] BusError),
}

fn read(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(|source| SessionError::Read {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Command,
    Script,
    File,
}

impl Origin {
    fn as_str(self) -> &'static str {
        match self {
            Origin::Command => "command",
            Origin::Script => "script",
            Origin::File => "file",
        }
    }
}

pub struct Session {
    config: SessionConfig,
    bus: Bus,
    driver: Driver,
    bridge: BridgeHandle,
    runtime: Runtime,
    source: String,
    initial_pose: Pose,
    tick: u64,
    paused: bool,
    collided: bool,
    collision_seen: bool,
    trace: Trace,
    recent: VecDeque<Diagnostic>,
    script: VecDeque<ResolvedStep>,
    watcher: Option<SourceWatcher>,
    _watcher_thread: Option<WatcherThread>,
    inbound_tx: Sender<Inbound>,
    inbound_rx: Receiver<Inbound>,
    server: Option<Server>,
    last_push: Option<Instant>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("tick", &self.tick)
            .field("paused", &self.paused)
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        Self::with_history(config, false)
    }

    /// Like [`Session::new`], optionally keeping every trace event in memory.
    pub fn with_history(config: SessionConfig, keep_history: bool) -> Result<Self, SessionError> {
        config.validate()?;
        let source = read(&config.program_path)?;
        let world_file =
            parse_world_file(&read(&config.world_path)?).map_err(|source| SessionError::World {
                path: config.world_path.clone(),
                source,
            })?;
        let script = match &config.script_path {
            Some(path) => {
                let steps = script::parse_script(&read(path)?)?;
                let base = path.parent().unwrap_or(Path::new("."));
                script::resolve_script(&steps, base)?
            }
            None => Vec::new(),
        };
        let out: Option<Box<dyn io::Write + Send>> = match &config.trace_path {
            Some(path) => Some(Box::new(BufWriter::new(File::create(path).map_err(
                |source| SessionError::Trace {
                    path: path.clone(),
                    source,
                },
            )?))),
            None => None,
        };

        let bus = Bus::new();
        let dt = config.tick_ms as f64 / 1000.0;
        let initial_pose = world_file.initial_pose;
        let driver = run_driver(&bus, world_file.world, RobotState::at(initial_pose), dt)?;
        let mut registry = HostRegistry::new();
        let bridge = install_bridge(&mut registry, &bus);
        let interp_config = InterpreterConfig {
            tick_period_ms: config.tick_ms,
            eps_chain_cap: DEFAULT_EPS_CHAIN_CAP,
        };
        let mut startup = Vec::new();
        let program = match parse_program(&source) {
            Ok(p) => p,
            Err(e) => {
                // Keep running an empty program so a later edit can fix it.
                startup.push(Diagnostic::error("load", format!("parse error at {e}")));
                Program::empty()
            }
        };
        startup.extend(program.diagnostics.iter().cloned());
        let (runtime, load_diags) = Runtime::load(program, Arc::new(registry), interp_config, 0);
        startup.extend(load_diags);

        let (inbound_tx, inbound_rx) = mpsc::channel();
        let server = match config.serve_port {
            Some(port) => {
                Some(Server::start(port, inbound_tx.clone()).map_err(SessionError::Serve)?)
            }
            None => None,
        };
        let watcher = SourceWatcher::new(&config.program_path, &source, DEFAULT_DEBOUNCE_MS);
        let (watcher, watcher_thread) = match config.mode {
            Mode::Virtual => (Some(watcher), None),
            Mode::WallClock => {
                let tx = inbound_tx.clone();
                let thread = WatcherThread::spawn(watcher, WATCH_POLL, move |ev| {
                    let _ = tx.send(Inbound::Watch(ev));
                });
                (None, Some(thread))
            }
        };

        let mut session = Self {
            trace: Trace::new(out, keep_history),
            config,
            bus,
            driver,
            bridge,
            runtime,
            source,
            initial_pose,
            tick: 0,
            paused: false,
            collided: false,
            collision_seen: false,
            recent: VecDeque::new(),
            script: script.into(),
            watcher,
            _watcher_thread: watcher_thread,
            inbound_tx,
            inbound_rx,
            server,
            last_push: None,
        };
        session.emit(
            TraceKind::Lifecycle,
            json!({
                "event": "session",
                "state": "running",
                "mode": session.config.mode,
                "tick_ms": session.config.tick_ms,
                "diagnostic_dedup": trace::DEDUP_POLICY,
            }),
        );
        for d in startup {
            session.diagnostic(d);
        }
        if let Err(e) = session.driver.publish_state() {
            session.diagnostic(Diagnostic::error("Driver", e.to_string()));
        }
        session.record_side_effects();
        session.record_pose();
        Ok(session)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn collision_seen(&self) -> bool {
        self.collision_seen
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    pub fn bridge(&self) -> &BridgeHandle {
        &self.bridge
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn server(&self) -> Option<&Server> {
        self.server.as_ref()
    }

    pub fn trace_history(&self) -> Option<&[TraceEvent]> {
        self.trace.history()
    }

    /// Handle for queueing input from other threads; drained at tick start.
    pub fn inbound(&self) -> Sender<Inbound> {
        self.inbound_tx.clone()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let robot = self.driver.robot();
        SessionSnapshot {
            tick: self.tick,
            paused: self.paused,
            machines: snapshot::machine_views(&self.runtime),
            root_variables: self.runtime.root_variables().clone(),
            pose: robot.pose(),
            collided: robot.collided,
            scan: snapshot::decimate(&crate::sim::scan(self.driver.world(), &robot)),
            world: snapshot::WorldView {
                segments: self.driver.world().segments().to_vec(),
                bounds: self.driver.world().bounds(),
            },
            graph: self.bus.graph(),
            diagnostics: self.recent.iter().cloned().collect(),
            source: self.source.clone(),
        }
    }

    /// Runs one command immediately on the calling (tick) thread.
    pub fn execute(&mut self, command: Command) -> Ack {
        let ack = self.execute_from(command, Origin::Command);
        self.record_side_effects();
        ack
    }

    fn execute_from(&mut self, command: Command, origin: Origin) -> Ack {
        let name = command.name();
        match command {
            Command::Pause => {
                self.paused = true;
                self.emit(
                    TraceKind::Lifecycle,
                    json!({"event": "session", "state": "paused"}),
                );
                Ack::ok(name)
            }
            Command::Resume => {
                self.paused = false;
                self.emit(
                    TraceKind::Lifecycle,
                    json!({"event": "session", "state": "running"}),
                );
                Ack::ok(name)
            }
            Command::ResetWorld => {
                self.driver.reset(self.initial_pose);
                self.collided = false;
                self.emit(TraceKind::Lifecycle, json!({"event": "reset_world"}));
                if let Err(e) = self.driver.publish_state() {
                    self.diagnostic(Diagnostic::warning("reset_world", e.to_string()));
                }
                self.record_pose();
                Ack::ok(name)
            }
            Command::LoadSource(text) => {
                let outcome = self.runtime.apply_source(&text, self.tick);
                self.emit(
                    TraceKind::Update,
                    json!({"origin": origin.as_str(), "outcome": &outcome}),
                );
                if outcome.kind != UpdateKind::RejectedParseError {
                    self.source = text;
                }
                for d in outcome.diagnostics.clone() {
                    self.diagnostic(d);
                }
                Ack::with_outcome(name, &outcome)
            }
        }
    }

    fn reply(&mut self, reply: Reply, ack: Ack) {
        match reply {
            Reply::None => {}
            Reply::Client(id) => {
                if let Some(s) = &self.server {
                    s.send_to(id, &Frame::new("ack", &ack));
                }
            }
            Reply::Channel(tx) => {
                let _ = tx.send(ack);
            }
        }
    }

    fn handle_watch(&mut self, ev: WatchEvent) {
        match ev {
            WatchEvent::Changed(text) => {
                self.execute_from(Command::LoadSource(text), Origin::File);
            }
            WatchEvent::Unreadable(d) => self.diagnostic(d),
        }
    }

    /// Drains due script steps, queued input and (in virtual mode) the source
    /// watcher.
    fn process_inputs(&mut self) {
        let mut touched = false;
        while self.script.front().is_some_and(|s| s.tick <= self.tick) {
            let step = self.script.pop_front().expect("front exists");
            touched = true;
            match step.action {
                ResolvedAction::Command(c) => {
                    self.execute_from(c, Origin::Script);
                }
                ResolvedAction::WriteProgram(text) => {
                    if let Err(e) = std::fs::write(&self.config.program_path, text) {
                        self.diagnostic(Diagnostic::error("script", format!("write failed: {e}")));
                    }
                }
            }
        }
        while let Ok(msg) = self.inbound_rx.try_recv() {
            match msg {
                Inbound::Command { command, reply } => {
                    touched = true;
                    let ack = self.execute_from(command, Origin::Command);
                    self.reply(reply, ack);
                }
                Inbound::Watch(ev) => {
                    touched = true;
                    self.handle_watch(ev);
                }
                Inbound::ClientConnected(id) => {
                    if let Some(s) = &self.server {
                        s.send_to(id, &Frame::new("snapshot", self.snapshot()));
                    }
                }
            }
        }
        let now_ms = self.tick.saturating_mul(self.config.tick_ms);
        if let Some(ev) = self.watcher.as_mut().and_then(|w| w.poll(now_ms)) {
            touched = true;
            self.handle_watch(ev);
        }
        if touched {
            self.record_side_effects();
            self.push_snapshot(true);
        }
    }

    /// One loop iteration. Returns whether a tick ran (false while paused).
    pub fn step(&mut self) -> bool {
        self.process_inputs();
        if self.paused {
            return false;
        }
        self.tick += 1;
        let report = self.runtime.tick(self.tick);
        if let Err(e) = self.driver.tick() {
            self.diagnostic(Diagnostic::error("Driver", e.to_string()));
        }
        self.record_tick(report);
        true
    }

    fn record_tick(&mut self, report: TickReport) {
        let transitioned = !report.transitions_taken.is_empty();
        for t in &report.transitions_taken {
            self.emit(TraceKind::Transition, json!(t));
        }
        if report.eps_chain_truncated {
            log::debug!("tick {}: epsilon chain truncated", self.tick);
        }
        for d in report.diagnostics {
            self.diagnostic(d);
        }
        self.record_side_effects();
        self.record_pose();
        if self.config.mode == Mode::WallClock {
            if let Err(e) = self.trace.flush() {
                log::warn!("trace flush failed: {e}");
            }
        }
        self.push_snapshot(transitioned);
    }

    /// Moves bus activity and component diagnostics into the trace.
    fn record_side_effects(&mut self) {
        for ev in self.bus.drain_events() {
            let kind = match ev {
                BusEvent::Publish { .. } => TraceKind::Publish,
                _ => TraceKind::Lifecycle,
            };
            self.emit(kind, json!(ev));
        }
        for d in self.bridge.take_diagnostics() {
            self.diagnostic(d);
        }
        for d in self.driver.take_diagnostics() {
            self.diagnostic(d);
        }
    }

    fn record_pose(&mut self) {
        let r = self.driver.robot();
        if r.collided && !self.collided {
            self.collision_seen = true;
            self.diagnostic(Diagnostic::error(
                "Driver",
                format!("collision at ({:.4}, {:.4})", r.x, r.y),
            ));
        }
        self.collided = r.collided;
        self.emit(
            TraceKind::Pose,
            json!({"x": r.x, "y": r.y, "theta": r.theta, "collided": r.collided}),
        );
    }

    fn push_snapshot(&mut self, force: bool) {
        let Some(server) = &self.server else { return };
        if server.client_count() == 0 {
            return;
        }
        let due = self
            .last_push
            .is_none_or(|t| t.elapsed() >= SNAPSHOT_INTERVAL);
        if force || due {
            server.broadcast(&Frame::new("snapshot", self.snapshot()));
            self.last_push = Some(Instant::now());
        }
    }

    fn emit(&mut self, kind: TraceKind, payload: serde_json::Value) {
        if let Err(e) = self.trace.emit(self.tick, kind, payload) {
            log::warn!("trace write failed: {e}");
        }
    }

    fn diagnostic(&mut self, d: Diagnostic) {
        match d.severity {
            Severity::Error => log::error!("[tick {}] {d}", self.tick),
            Severity::Warning => log::warn!("[tick {}] {d}", self.tick),
        }
        if let Err(e) = self.trace.diagnostic(self.tick, &d) {
            log::warn!("trace write failed: {e}");
        }
        if self.recent.len() == snapshot::SNAPSHOT_DIAGNOSTICS {
            self.recent.pop_front();
        }
        self.recent.push_back(d);
    }

    /// Runs until the tick limit, `stop`, or a pause that nothing can lift.
    /// Returns the process exit status.
    pub fn run(&mut self, stop: &AtomicBool) -> i32 {
        let period = Duration::from_millis(self.config.tick_ms);
        let mut next = Instant::now() + period;
        loop {
            if stop.load(Ordering::Relaxed) {
                log::info!("interrupted at tick {}", self.tick);
                break;
            }
            if self.config.max_ticks.is_some_and(|max| self.tick >= max) {
                break;
            }
            let ticked = self.step();
            match self.config.mode {
                Mode::Virtual => {
                    if !ticked {
                        if self.server.is_none() {
                            log::info!("paused in virtual mode with no command source; ending run");
                            break;
                        }
                        std::thread::sleep(Duration::from_millis(10));
                    }
                }
                Mode::WallClock => {
                    let now = Instant::now();
                    if next > now {
                        std::thread::sleep(next - now);
                        next += period;
                    } else {
                        next = now + period;
                    }
                }
            }
        }
        self.finish()
    }

    /// Flushes the trace and returns the exit status for the run so far.
    pub fn finish(&mut self) -> i32 {
        self.push_snapshot(true);
        if let Err(e) = self.trace.finish(self.tick) {
            log::error!("trace write failed: {e}");
        }
        self.emit(
            TraceKind::Lifecycle,
            json!({"event": "session", "state": "finished"}),
        );
        if let Err(e) = self.trace.flush() {
            log::error!("trace write failed: {e}");
        }
        if self.collision_seen {
            EXIT_COLLISION
        } else {
            EXIT_OK
        }
    }
}

/// Builds a session from `config` and runs it to completion.
pub fn run_session(config: SessionConfig, stop: &AtomicBool) -> i32 {
    match Session::new(config) {
        Ok(mut s) => s.run(stop),
        Err(e) => {
            log::error!("{e}");
            eprintln!("lrp: {e}");
            EXIT_FAILURE
        }
    }
}
