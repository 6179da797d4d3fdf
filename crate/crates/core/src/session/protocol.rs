//! Dashboard wire protocol.
//!
//! One duplex byte stream carries frames in both directions. A frame is a
//! 4-byte big-endian length followed by that many bytes of JSON
//! `{"type": ..., "payload": ...}`.
//!
//! Client to server: `pause`, `resume`, `reset_world` (payload ignored) and
//! `load_source` with payload `{"source": "<program text>"}`.
//! Server to client: `snapshot` with a session snapshot, and `ack` with
//! `{"command", "ok", "outcome"?, "error"?}` answering each command. A
//! `load_source` whose text does not parse is answered with `ok: false`, the
//! parse error, and the rejection outcome.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::live::UpdateOutcome;

pub const MAX_FRAME_LEN: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub payload: Json,
}

impl Frame {
    pub fn new(kind: impl Into<String>, payload: impl Serialize) -> Self {
        Self {
            kind: kind.into(),
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("frame of {len} bytes exceeds the {max} byte limit")]
    FrameTooLarge { len: usize, max: usize },
    #[error("malformed frame: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("bad payload for `{command}`: {message}")]
    BadPayload { command: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Pause,
    Resume,
    ResetWorld,
    LoadSource(String),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::ResetWorld => "reset_world",
            Command::LoadSource(_) => "load_source",
        }
    }

    pub fn to_frame(&self) -> Frame {
        match self {
            Command::LoadSource(text) => {
                Frame::new("load_source", serde_json::json!({ "source": text }))
            }
            other => Frame::new(other.name(), Json::Null),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub command: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Ack {
    pub fn ok(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ok: true,
            outcome: None,
            error: None,
        }
    }

    pub fn error(command: &str, error: impl ToString) -> Self {
        Self {
            command: command.to_string(),
            ok: false,
            outcome: None,
            error: Some(error.to_string()),
        }
    }

    /// Acknowledges a source update; a rejected source is reported as a failure.
    pub fn with_outcome(command: &str, outcome: &UpdateOutcome) -> Self {
        let base = match &outcome.parse_error {
            Some(e) => Self::error(command, format!("parse error at {e}")),
            None => Self::ok(command),
        };
        Self {
            outcome: Some(serde_json::to_value(outcome).expect("outcome serializes")),
            ..base
        }
    }
}

pub fn decode_command(frame: &Frame) -> Result<Command, ProtocolError> {
    match frame.kind.as_str() {
        "pause" => Ok(Command::Pause),
        "resume" => Ok(Command::Resume),
        "reset_world" => Ok(Command::ResetWorld),
        "load_source" => match &frame.payload {
            Json::String(s) => Ok(Command::LoadSource(s.clone())),
            Json::Object(map) => match map.get("source") {
                Some(Json::String(s)) => Ok(Command::LoadSource(s.clone())),
                _ => Err(ProtocolError::BadPayload {
                    command: frame.kind.clone(),
                    message: "expected a string field `source`".into(),
                }),
            },
            _ => Err(ProtocolError::BadPayload {
                command: frame.kind.clone(),
                message: "expected {\"source\": text}".into(),
            }),
        },
        other => Err(ProtocolError::UnknownCommand(other.to_string())),
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let body = serde_json::to_vec(frame).expect("frame serializes");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Incremental frame reader for a byte stream.
#[derive(Debug)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    max_len: usize,
}

impl Default for FrameDecoder {
    fn default() -> Self {
        Self::new(MAX_FRAME_LEN)
    }
}

impl FrameDecoder {
    pub fn new(max_len: usize) -> Self {
        Self {
            buf: Vec::new(),
            max_len,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet consumed by a complete frame.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, or `Ok(None)` if more bytes are needed. An
    /// oversized length is reported before its body arrives; a malformed
    /// body is consumed so decoding can continue with the next frame.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, ProtocolError> {
        let Some(header) = self.buf.get(..4) else {
            return Ok(None);
        };
        let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
        if len > self.max_len {
            return Err(ProtocolError::FrameTooLarge {
                len,
                max: self.max_len,
            });
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let parsed = serde_json::from_slice(&self.buf[4..4 + len]);
        self.buf.drain(..4 + len);
        Ok(Some(parsed?))
    }
}
