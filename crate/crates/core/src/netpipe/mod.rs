//! Length-prefixed JSON messages between the robot and the recognition
//! server, plus both endpoints.

mod client;
mod codec;
mod server;
mod session;

pub use client::{robot_sim, SimOptions, SimReport};
pub use codec::{decode_payload, encode_frame, read_message, write_message, FrameDecoder, MAX_FRAME_LEN};
pub use server::{serve, Pipeline, ProcessError, ServerConfig, ServerHandle, BackendFactory, DEFAULT_DEADLINE, DEFAULT_PORT};
pub use session::{Disposition, SessionState};

use std::fmt;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::gesture::{Timeline, TimelineEvent};
use crate::landmark::SignSample;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadFrame,
    Protocol,
    Timeout,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 4] = [Self::BadFrame, Self::Protocol, Self::Timeout, Self::Internal];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BadFrame => "BAD_FRAME",
            Self::Protocol => "PROTOCOL",
            Self::Timeout => "TIMEOUT",
            Self::Internal => "INTERNAL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scheduled events sent alongside a tagged script.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub total_s: f64,
    pub events: Vec<TimelineEvent>,
    pub warnings: Vec<String>,
}

impl TimelineSummary {
    pub fn from_timeline(t: &Timeline, extra_warnings: &[String]) -> Self {
        let mut warnings = extra_warnings.to_vec();
        warnings.extend(t.warnings.iter().map(ToString::to_string));
        Self {
            total_s: t.total_s(),
            events: t.events.clone(),
            warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "UPPERCASE")]
pub enum WireMessage {
    Hello { protocol_version: u32 },
    Landmarks { sample: SignSample },
    Result { gloss: String, confidence_pct: f64 },
    Script { tagged_text: String, timeline: TimelineSummary },
    Error { code: ErrorCode, message: String },
    Bye {},
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Hello,
    Landmarks,
    Result,
    Script,
    Error,
    Bye,
}

impl MessageType {
    pub const ALL: [MessageType; 6] = [
        Self::Hello,
        Self::Landmarks,
        Self::Result,
        Self::Script,
        Self::Error,
        Self::Bye,
    ];
}

impl WireMessage {
    pub fn hello() -> Self {
        Self::Hello {
            protocol_version: PROTOCOL_VERSION,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self::Error {
            code,
            message: message.into(),
        }
    }

    pub fn message_type(&self) -> MessageType {
        match self {
            Self::Hello { .. } => MessageType::Hello,
            Self::Landmarks { .. } => MessageType::Landmarks,
            Self::Result { .. } => MessageType::Result,
            Self::Script { .. } => MessageType::Script,
            Self::Error { .. } => MessageType::Error,
            Self::Bye {} => MessageType::Bye,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN}-byte limit")]
    FrameTooLarge(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(#[from] io::Error),
    #[error("connection closed by peer")]
    Closed,
    #[error("cannot write log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}
