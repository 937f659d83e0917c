//! Simulated robot: sends landmark samples and logs the returned scripts.

use std::fs::File;
use std::io::{LineWriter, Write};
use std::net::TcpStream;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use super::codec::{read_message, write_message};
use super::{ErrorCode, NetError, TimelineSummary, WireMessage, PROTOCOL_VERSION};
use crate::gesture::TimelineEvent;
use crate::landmark::SignSample;

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Sleep until each event's start time instead of logging immediately.
    pub realtime: bool,
    pub read_timeout: Option<Duration>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            realtime: false,
            read_timeout: Some(Duration::from_secs(60)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimReport {
    pub samples_sent: usize,
    pub results: usize,
    pub scripts: usize,
    pub errors: usize,
}

struct Log {
    out: LineWriter<File>,
    path: std::path::PathBuf,
}

impl Log {
    fn line(&mut self, text: &str) -> Result<(), NetError> {
        writeln!(self.out, "{text}").map_err(|source| NetError::Log {
            path: self.path.clone(),
            source,
        })
    }
}

fn event_line(e: &TimelineEvent) -> String {
    match e {
        TimelineEvent::Speech {
            text,
            start_s,
            duration_s,
        } => format!("  {start_s:>8.3}s  SPEECH   {text:?} ({duration_s:.3}s)"),
        TimelineEvent::Gesture {
            tag,
            start_s,
            duration_s,
            body_parts,
        } => format!(
            "  {start_s:>8.3}s  GESTURE  {tag} ({duration_s:.3}s; {})",
            body_parts.join(", ")
        ),
    }
}

fn expect_reply(stream: &mut TcpStream) -> Result<WireMessage, NetError> {
    read_message(stream)?.ok_or(NetError::Closed)
}

fn enact(log: &mut Log, id: &str, tagged_text: &str, timeline: &TimelineSummary, realtime: bool) -> Result<(), NetError> {
    log.line(&format!("sample {id}: SCRIPT {:.3}s {tagged_text}", timeline.total_s))?;
    let start = Instant::now();
    for e in &timeline.events {
        if realtime {
            let at = Duration::from_secs_f64(e.start_s().max(0.0));
            if let Some(wait) = at.checked_sub(start.elapsed()) {
                thread::sleep(wait);
            }
        }
        log.line(&event_line(e))?;
    }
    for w in &timeline.warnings {
        log.line(&format!("  WARNING  {w}"))?;
    }
    Ok(())
}

/// Connects to `addr`, streams `samples` and writes one log block per
/// reply to `log_path`. Lines are flushed as they are written, so a
/// transport failure leaves everything logged up to that point.
pub fn robot_sim(addr: &str, samples: &[SignSample], log_path: &Path, opts: &SimOptions) -> Result<SimReport, NetError> {
    let file = File::create(log_path).map_err(|source| NetError::Log {
        path: log_path.to_path_buf(),
        source,
    })?;
    let mut log = Log {
        out: LineWriter::new(file),
        path: log_path.to_path_buf(),
    };
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(opts.read_timeout)?;
    stream.set_nodelay(true)?;

    write_message(&mut stream, &WireMessage::hello())?;
    match expect_reply(&mut stream)? {
        WireMessage::Hello { protocol_version } if protocol_version == PROTOCOL_VERSION => {}
        WireMessage::Error { code, message } => {
            return Err(NetError::Protocol(format!("handshake refused: {code}: {message}")));
        }
        other => return Err(NetError::Protocol(format!("unexpected handshake reply {:?}", other.message_type()))),
    }

    let mut report = SimReport::default();
    for sample in samples {
        let id = &sample.sample_id;
        write_message(
            &mut stream,
            &WireMessage::Landmarks {
                sample: sample.without_label(),
            },
        )?;
        report.samples_sent += 1;
        loop {
            match expect_reply(&mut stream)? {
                WireMessage::Result { gloss, confidence_pct } => {
                    report.results += 1;
                    log.line(&format!("sample {id}: RESULT {gloss} ({confidence_pct:.2}%)"))?;
                }
                WireMessage::Script { tagged_text, timeline } => {
                    report.scripts += 1;
                    enact(&mut log, id, &tagged_text, &timeline, opts.realtime)?;
                    break;
                }
                WireMessage::Error { code, message } => {
                    report.errors += 1;
                    log.line(&format!("sample {id}: ERROR {code} {message}"))?;
                    if code == ErrorCode::Internal {
                        break;
                    }
                    return Err(NetError::Protocol(format!("server closed the session: {code}: {message}")));
                }
                other => {
                    return Err(NetError::Protocol(format!(
                        "unexpected {:?} while waiting for a script",
                        other.message_type()
                    )));
                }
            }
        }
    }

    write_message(&mut stream, &WireMessage::Bye {})?;
    match read_message(&mut stream)? {
        None | Some(WireMessage::Bye {}) => Ok(report),
        Some(other) => Err(NetError::Protocol(format!("unexpected {:?} after BYE", other.message_type()))),
    }
}
