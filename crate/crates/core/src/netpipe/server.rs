//! Recognition server: one thread per connection, one request in flight per
//! connection.

use std::io::Read;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::codec::{write_message, FrameDecoder};
use super::session::{Disposition, SessionState};
use super::{ErrorCode, NetError, TimelineSummary, WireMessage};
use crate::dialogue::{compose, DialogueError, LlmBackend, PromptTemplate, RecognitionEvent};
use crate::gesture::{schedule, DescriptorDb, GestureError};
use crate::landmark::{CorpusError, LabelMap, SignSample};
use crate::nn::{Classifier, NnError};
use crate::preprocess::{preprocess_pipeline, PreprocessError, SelectionSpec};

pub const DEFAULT_PORT: u16 = 9470;
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(10);

/// Builds a fresh backend for each connection.
pub type BackendFactory = Arc<dyn Fn() -> Box<dyn LlmBackend + Send> + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum ProcessError {
    #[error(transparent)]
    Sample(#[from] CorpusError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Gesture(#[from] GestureError),
    #[error("inconsistent pipeline: {0}")]
    Config(String),
}

/// Everything needed to turn landmarks into a RESULT and a SCRIPT.
pub struct Pipeline {
    pub classifier: Classifier,
    pub labels: LabelMap,
    pub spec: SelectionSpec,
    pub db: DescriptorDb,
    pub template: PromptTemplate,
    pub wpm: f64,
    pub max_retries: usize,
}

impl Pipeline {
    pub fn validate(&self) -> Result<(), ProcessError> {
        let cfg = self.classifier.config();
        if cfg.input_dim != self.spec.feature_dim() {
            return Err(ProcessError::Config(format!(
                "model expects {} features per frame, selection yields {}",
                cfg.input_dim,
                self.spec.feature_dim()
            )));
        }
        if self.labels.len() != cfg.num_classes {
            return Err(ProcessError::Config(format!(
                "label map has {} glosses, model has {} classes",
                self.labels.len(),
                cfg.num_classes
            )));
        }
        self.template.validate()?;
        if !(self.wpm > 0.0 && self.wpm.is_finite()) {
            return Err(GestureError::SpeechRate(self.wpm).into());
        }
        Ok(())
    }

    /// Preprocess, classify, compose and schedule one sample.
    pub fn process(&self, sample: &SignSample, backend: &mut dyn LlmBackend) -> Result<(WireMessage, WireMessage), ProcessError> {
        let cfg = self.classifier.config();
        sample.validate(cfg.num_classes)?;
        let x = preprocess_pipeline(sample, &self.spec, cfg.max_seq_len, None)?;
        let prediction = self.classifier.predict(&x, &self.labels)?;
        let confidence_pct = (prediction.confidence as f64 * 100.0).clamp(0.0, 100.0);
        let event = RecognitionEvent::new(prediction.gloss.clone(), confidence_pct)?;
        let composition = compose(&event, &self.db, backend, &self.template, self.max_retries)?;
        let timeline = schedule(&composition.script, &self.db, self.wpm)?;
        Ok((
            WireMessage::Result {
                gloss: prediction.gloss,
                confidence_pct,
            },
            WireMessage::Script {
                tagged_text: composition.tagged_text,
                timeline: TimelineSummary::from_timeline(&timeline, &composition.warnings),
            },
        ))
    }
}

pub struct ServerConfig {
    pub bind: String,
    pub deadline: Duration,
    pub backend: BackendFactory,
}

impl ServerConfig {
    pub fn new(bind: impl Into<String>, backend: BackendFactory) -> Self {
        Self {
            bind: bind.into(),
            deadline: DEFAULT_DEADLINE,
            backend,
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
    thread: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, drops open connections and joins the accept loop.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        for conn in self.connections.lock().expect("connection list").drain(..) {
            let _ = conn.shutdown(Shutdown::Both);
        }
        let _ = self.thread.join();
    }

    /// Blocks until the accept loop ends.
    pub fn wait(self) {
        let _ = self.thread.join();
    }
}

pub fn serve(pipeline: Arc<Pipeline>, config: ServerConfig) -> Result<ServerHandle, NetError> {
    pipeline.validate().map_err(|e| NetError::Protocol(e.to_string()))?;
    let listener = TcpListener::bind(&config.bind)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let connections = Arc::new(Mutex::new(Vec::new()));
    let config = Arc::new(config);

    let thread = {
        let stop = stop.clone();
        let connections = connections.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let stream = match stream {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                if let Ok(clone) = stream.try_clone() {
                    let mut list = connections.lock().expect("connection list");
                    list.retain(|c: &TcpStream| c.peer_addr().is_ok());
                    list.push(clone);
                }
                let pipeline = pipeline.clone();
                let config = config.clone();
                thread::spawn(move || {
                    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
                    if let Err(e) = handle_connection(stream, &pipeline, &config) {
                        log::debug!("connection {peer} ended: {e}");
                    }
                });
            }
        })
    };
    log::info!("listening on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        connections,
        thread,
    })
}

type Job = (Box<dyn LlmBackend + Send>, Result<(WireMessage, WireMessage), ProcessError>);

/// Runs the pipeline on a worker thread; `None` if the deadline passes.
fn process_with_deadline(
    pipeline: &Arc<Pipeline>,
    sample: SignSample,
    mut backend: Box<dyn LlmBackend + Send>,
    deadline: Duration,
) -> Option<Job> {
    let (tx, rx) = mpsc::channel();
    let pipeline = pipeline.clone();
    thread::spawn(move || {
        let result = pipeline.process(&sample, backend.as_mut());
        let _ = tx.send((backend, result));
    });
    rx.recv_timeout(deadline).ok()
}

fn handle_connection(stream: TcpStream, pipeline: &Arc<Pipeline>, config: &ServerConfig) -> Result<(), NetError> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    let mut backend = Some((config.backend)());
    let mut state = SessionState::AwaitHello;
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];

    let result = loop {
        let msg = match decoder.next_message() {
            Ok(Some(msg)) => msg,
            Ok(None) => {
                let n = reader.read(&mut buf)?;
                if n == 0 {
                    break Ok(());
                }
                decoder.push(&buf[..n]);
                continue;
            }
            Err(e) => break write_message(&mut writer, &WireMessage::error(ErrorCode::BadFrame, e.to_string())),
        };
        let (next, disposition) = state.on_message(&msg);
        state = next;
        match disposition {
            Disposition::Handshake => write_message(&mut writer, &WireMessage::hello())?,
            Disposition::Goodbye => break write_message(&mut writer, &WireMessage::Bye {}),
            Disposition::Reject(reason) => {
                break write_message(&mut writer, &WireMessage::error(ErrorCode::Protocol, reason));
            }
            Disposition::Process => {
                let WireMessage::Landmarks { sample } = msg else {
                    unreachable!("Process is only returned for LANDMARKS")
                };
                let id = sample.sample_id.clone();
                let own = backend.take().expect("backend returned after each request");
                match process_with_deadline(pipeline, sample, own, config.deadline) {
                    Some((returned, outcome)) => {
                        backend = Some(returned);
                        match outcome {
                            Ok((result, script)) => {
                                write_message(&mut writer, &result)?;
                                write_message(&mut writer, &script)?;
                            }
                            Err(e) => {
                                log::warn!("sample {id}: {e}");
                                write_message(&mut writer, &WireMessage::error(ErrorCode::Internal, e.to_string()))?;
                            }
                        }
                    }
                    None => {
                        break write_message(
                            &mut writer,
                            &WireMessage::error(
                                ErrorCode::Timeout,
                                format!("sample {id} not processed within {:?}", config.deadline),
                            ),
                        );
                    }
                }
            }
        }
    };
    let _ = writer.shutdown(Shutdown::Both);
    result
}
