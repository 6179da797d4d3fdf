use std::path::PathBuf;

use crate::interp::DEFAULT_TICK_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Ticks are paced by a real-time timer.
    WallClock,
    /// Ticks run back to back; time is `tick * tick_ms`.
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub program_path: PathBuf,
    pub world_path: PathBuf,
    pub tick_ms: u64,
    pub mode: Mode,
    pub max_ticks: Option<u64>,
    pub trace_path: Option<PathBuf>,
    /// Port for the snapshot/command server; 0 picks a free port.
    pub serve_port: Option<u16>,
    pub script_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("virtual mode needs a tick limit")]
    VirtualWithoutLimit,
    #[error("tick period must be positive")]
    ZeroTick,
}

impl SessionConfig {
    pub fn new(program_path: impl Into<PathBuf>, world_path: impl Into<PathBuf>) -> Self {
        Self {
            program_path: program_path.into(),
            world_path: world_path.into(),
            tick_ms: DEFAULT_TICK_MS,
            mode: Mode::WallClock,
            max_ticks: None,
            trace_path: None,
            serve_port: None,
            script_path: None,
        }
    }

    pub fn virtual_ticks(mut self, ticks: u64) -> Self {
        self.mode = Mode::Virtual;
        self.max_ticks = Some(ticks);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tick_ms == 0 {
            return Err(ConfigError::ZeroTick);
        }
        if self.mode == Mode::Virtual && self.max_ticks.is_none() {
            return Err(ConfigError::VirtualWithoutLimit);
        }
        Ok(())
    }
}
