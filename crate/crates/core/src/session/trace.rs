//! JSON-lines session trace.
//!
//! Every line is `{"tick":N,"kind":K,"payload":{...}}` with a fixed field
//! order. Runs of identical diagnostics are folded: the first occurrence is
//! written, later consecutive repeats with the same source and message are
//! counted, and one `repeats` summary record follows when a different
//! diagnostic arrives or the trace is finished.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::diag::Diagnostic;

pub const DEDUP_POLICY: &str =
    "consecutive diagnostics with the same source and message are written once; a summary record with `repeats` follows the run";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Transition,
    Publish,
    Lifecycle,
    Update,
    Diagnostic,
    Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub kind: TraceKind,
    pub payload: Json,
}

#[derive(Debug)]
struct Run {
    diagnostic: Diagnostic,
    first_tick: u64,
    last_tick: u64,
    repeats: u64,
}

/// Append-only trace sink. Lines go to an optional writer; events can also be
/// kept in memory.
pub struct Trace {
    out: Option<Box<dyn Write + Send>>,
    history: Option<Vec<TraceEvent>>,
    run: Option<Run>,
    written: u64,
    last_tick: u64,
}

impl std::fmt::Debug for Trace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trace")
            .field("written", &self.written)
            .finish_non_exhaustive()
    }
}

impl Trace {
    pub fn new(out: Option<Box<dyn Write + Send>>, keep_history: bool) -> Self {
        Self {
            out,
            history: keep_history.then(Vec::new),
            run: None,
            written: 0,
            last_tick: 0,
        }
    }

    pub fn events_written(&self) -> u64 {
        self.written
    }

    pub fn history(&self) -> Option<&[TraceEvent]> {
        self.history.as_deref()
    }

    pub fn emit(&mut self, tick: u64, kind: TraceKind, payload: Json) -> io::Result<()> {
        debug_assert!(tick >= self.last_tick, "trace ticks must not go backwards");
        self.last_tick = tick;
        let event = TraceEvent {
            tick,
            kind,
            payload,
        };
        if let Some(out) = &mut self.out {
            serde_json::to_writer(&mut *out, &event)?;
            out.write_all(b"\n")?;
        }
        if let Some(h) = &mut self.history {
            h.push(event);
        }
        self.written += 1;
        Ok(())
    }

    /// Records a diagnostic, folding repeats of the previous one.
    pub fn diagnostic(&mut self, tick: u64, d: &Diagnostic) -> io::Result<()> {
        if let Some(run) = &mut self.run {
            if run.diagnostic.source == d.source && run.diagnostic.message == d.message {
                run.repeats += 1;
                run.last_tick = tick;
                return Ok(());
            }
        }
        self.close_run(tick)?;
        self.emit(tick, TraceKind::Diagnostic, json!(d))?;
        self.run = Some(Run {
            diagnostic: d.clone(),
            first_tick: tick,
            last_tick: tick,
            repeats: 0,
        });
        Ok(())
    }

    fn close_run(&mut self, tick: u64) -> io::Result<()> {
        match self.run.take() {
            Some(run) if run.repeats > 0 => self.emit(
                tick,
                TraceKind::Diagnostic,
                json!({
                    "severity": run.diagnostic.severity,
                    "source": run.diagnostic.source,
                    "message": run.diagnostic.message,
                    "repeats": run.repeats,
                    "first_tick": run.first_tick,
                    "last_tick": run.last_tick,
                }),
            ),
            _ => Ok(()),
        }
    }

    /// Writes any pending repeat summary and flushes the writer.
    pub fn finish(&mut self, tick: u64) -> io::Result<()> {
        self.close_run(tick)?;
        self.flush()
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match &mut self.out {
            Some(out) => out.flush(),
            None => Ok(()),
        }
    }
}

/// Parses trace text back into events.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
