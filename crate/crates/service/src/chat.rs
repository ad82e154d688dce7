//! Sessions and the per-message pipeline: sentiment, frame aggregation,
//! fusion, explanations, prompt assembly, completion and logging.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use cdss_core::affect::{aggregate_window, classify_frame, fuse, window_frames, AffectConfig, AffectError, AffectState, ClassifiedFrame, EmotionObservation, Lexicon};
use cdss_core::prompt::{assemble, HistoryTurn, PromptConfig, Role};
use cdss_core::xai::{explain, ExplainKind, ExplainOptions, XaiError};

use crate::gateway::Gateway;
use crate::jobs::{now_s, RegistryHandle};

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("unknown participant {0}")]
    UnknownParticipant(String),
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Affect(#[from] AffectError),
    #[error(transparent)]
    Xai(#[from] XaiError),
    #[error("chat log {path}: {source}")]
    Log { path: PathBuf, source: std::io::Error },
    #[error("chat log {path} line {line}: {reason}")]
    CorruptLog { path: PathBuf, line: usize, reason: String },
    #[error("background task failed: {0}")]
    Task(String),
}

pub type Result<T> = std::result::Result<T, ChatError>;

/// One row of the conversation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub session_id: String,
    pub email: String,
    pub timestamp: f64,
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub email: String,
    pub participant_id: String,
    pub created_at: f64,
}

/// Append-only JSON-lines files: messages at `path`, session headers in a
/// sidecar next to it.
pub struct ChatLog {
    path: PathBuf,
    sessions_path: PathBuf,
    files: Mutex<(File, File)>,
}

pub fn sessions_path(log_path: &Path) -> PathBuf {
    let mut name = log_path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".sessions");
    log_path.with_file_name(name)
}

fn open_append(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ChatError::Log { path: path.to_path_buf(), source })?;
    }
    OpenOptions::new().create(true).append(true).open(path).map_err(|source| ChatError::Log { path: path.to_path_buf(), source })
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(ChatError::Log { path: path.to_path_buf(), source }),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ChatError::Log { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| ChatError::CorruptLog { path: path.to_path_buf(), line: i + 1, reason: e.to_string() })?;
        out.push(row);
    }
    Ok(out)
}

impl ChatLog {
    pub fn open(path: &Path) -> Result<Self> {
        let sessions_path = sessions_path(path);
        let files = (open_append(path)?, open_append(&sessions_path)?);
        Ok(Self { path: path.to_path_buf(), sessions_path, files: Mutex::new(files) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append<T: Serialize>(&self, row: &T, sessions: bool) -> Result<()> {
        let mut line = serde_json::to_string(row).map_err(|e| ChatError::Task(e.to_string()))?;
        line.push('\n');
        let mut files = self.files.lock().unwrap_or_else(|e| e.into_inner());
        let (file, path) = if sessions { (&mut files.1, &self.sessions_path) } else { (&mut files.0, &self.path) };
        file.write_all(line.as_bytes()).and_then(|_| file.flush()).map_err(|source| ChatError::Log { path: path.clone(), source })
    }

    pub fn append_message(&self, msg: &ChatMessage) -> Result<()> {
        self.append(msg, false)
    }

    pub fn append_session(&self, info: &SessionInfo) -> Result<()> {
        self.append(info, true)
    }

    /// Sessions and their histories as persisted, in log order.
    pub fn replay(path: &Path) -> Result<Vec<(SessionInfo, Vec<ChatMessage>)>> {
        let infos: Vec<SessionInfo> = read_lines(&sessions_path(path))?;
        let messages: Vec<ChatMessage> = read_lines(path)?;
        let mut by_session: HashMap<String, Vec<ChatMessage>> = HashMap::new();
        for m in messages {
            by_session.entry(m.session_id.clone()).or_default().push(m);
        }
        Ok(infos.into_iter().map(|info| {
            let history = by_session.remove(&info.id).unwrap_or_default();
            (info, history)
        }).collect())
    }
}

struct SessionState {
    history: Vec<ChatMessage>,
    affect: AffectState,
}

struct Session {
    info: SessionInfo,
    /// Held for the whole of one message so messages run in arrival order.
    state: tokio::sync::Mutex<SessionState>,
    /// Frames received since the last message.
    frames: Mutex<Vec<ClassifiedFrame>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PostMessage {
    pub text: String,
    /// Explanations to generate and attach for this message.
    #[serde(default)]
    pub artifacts: Vec<ExplainKind>,
    /// Row of the participant's data to explain; defaults to the latest.
    #[serde(default)]
    pub instance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub message: ChatMessage,
    pub affect: AffectState,
    pub attachments: Vec<ExplainKind>,
    pub backend: String,
    pub degraded: bool,
    /// Requested explanations that could not be produced.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAck {
    pub emotion: String,
    pub intensity: f64,
    pub buffered: usize,
}

pub struct ChatService {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    log: ChatLog,
    gateway: Gateway,
    registry: RegistryHandle,
    affect_cfg: AffectConfig,
    prompt_cfg: PromptConfig,
    explain_opts: ExplainOptions,
    queries: Vec<String>,
}

impl ChatService {
    /// Opens the log at `log_path`, restoring any sessions it holds.
    pub fn open(
        log_path: &Path,
        gateway: Gateway,
        registry: RegistryHandle,
        affect_cfg: AffectConfig,
        prompt_cfg: PromptConfig,
        queries: Vec<String>,
    ) -> Result<Self> {
        let restored = ChatLog::replay(log_path)?;
        let log = ChatLog::open(log_path)?;
        let sessions = restored
            .into_iter()
            .map(|(info, history)| {
                let state = SessionState { history, affect: AffectState::default_neutral() };
                let id = info.id.clone();
                (id, Arc::new(Session { info, state: tokio::sync::Mutex::new(state), frames: Mutex::new(Vec::new()) }))
            })
            .collect();
        Ok(Self {
            sessions: RwLock::new(sessions),
            log,
            gateway,
            registry,
            affect_cfg,
            prompt_cfg,
            explain_opts: ExplainOptions::default(),
            queries,
        })
    }

    pub fn log_path(&self) -> &Path {
        self.log.path()
    }

    pub fn predefined_queries(&self) -> &[String] {
        &self.queries
    }

    fn session(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned().ok_or_else(|| ChatError::SessionNotFound(id.into()))
    }

    pub fn create_session(&self, email: &str, participant_id: &str) -> Result<SessionInfo> {
        if self.registry.snapshot().get(participant_id).is_none() {
            return Err(ChatError::UnknownParticipant(participant_id.into()));
        }
        let info = SessionInfo {
            id: uuid::Uuid::new_v4().to_string(),
            email: email.into(),
            participant_id: participant_id.into(),
            created_at: now_s(),
        };
        self.log.append_session(&info)?;
        let state = SessionState { history: Vec::new(), affect: AffectState::default_neutral() };
        let session = Arc::new(Session { info: info.clone(), state: tokio::sync::Mutex::new(state), frames: Mutex::new(Vec::new()) });
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(info.id.clone(), session);
        Ok(info)
    }

    pub fn session_info(&self, id: &str) -> Result<SessionInfo> {
        Ok(self.session(id)?.info.clone())
    }

    pub async fn get_history(&self, id: &str) -> Result<Vec<ChatMessage>> {
        let session = self.session(id)?;
        let state = session.state.lock().await;
        Ok(state.history.clone())
    }

    pub async fn affect(&self, id: &str) -> Result<AffectState> {
        let session = self.session(id)?;
        let state = session.state.lock().await;
        Ok(state.affect.clone())
    }

    /// Validates and buffers one emotion frame. Frames older than the
    /// aggregation cap relative to the newest are dropped.
    pub fn post_frame(&self, id: &str, obs: &EmotionObservation) -> Result<FrameAck> {
        let session = self.session(id)?;
        let frame = classify_frame(obs)?;
        let mut frames = session.frames.lock().unwrap_or_else(|e| e.into_inner());
        frames.push(frame);
        let newest = frames.iter().map(|f| f.timestamp).fold(f64::NEG_INFINITY, f64::max);
        let cap = self.affect_cfg.window_cap_s;
        frames.retain(|f| f.timestamp >= newest - cap);
        Ok(FrameAck { emotion: frame.emotion.as_str().into(), intensity: frame.intensity, buffered: frames.len() })
    }

    pub async fn post_message(&self, id: &str, req: PostMessage) -> Result<Reply> {
        let session = self.session(id)?;
        if req.text.trim().is_empty() {
            return Err(ChatError::InvalidRequest("message text is empty".into()));
        }
        let mut state = session.state.lock().await;
        let registry = self.registry.snapshot();
        let pid = &session.info.participant_id;
        let entry = registry.get(pid).ok_or_else(|| ChatError::UnknownParticipant(pid.clone()))?;
        let rows = entry.data.rows.len();
        let instance = req.instance.unwrap_or(rows.saturating_sub(1));
        if !req.artifacts.is_empty() && instance >= rows {
            return Err(XaiError::InstanceOutOfRange { index: instance, rows }.into());
        }

        let frames = std::mem::take(&mut *session.frames.lock().unwrap_or_else(|e| e.into_inner()));
        let window = window_frames(&frames, None, self.affect_cfg.window_cap_s);
        let face = if window.is_empty() { None } else { aggregate_window(&window)? };
        let text = Lexicon::bundled().analyze(&req.text, self.affect_cfg.text_dead_zone);
        state.affect = fuse(face, &text, Some(&state.affect), &self.affect_cfg);

        let mut warnings = Vec::new();
        let mut attached = Vec::new();
        let mut explanations = Vec::new();
        for kind in req.artifacts.iter().copied() {
            if attached.contains(&kind) {
                continue;
            }
            let reg = registry.clone();
            let pid = pid.clone();
            let opts = self.explain_opts.clone();
            let result = tokio::task::spawn_blocking(move || {
                let entry = reg.get(&pid).expect("participant checked above");
                explain(entry, kind, instance, &opts)
            })
            .await
            .map_err(|e| ChatError::Task(e.to_string()))?;
            match result {
                Ok(e) => {
                    explanations.push(e);
                    attached.push(kind);
                }
                Err(e) => {
                    tracing::warn!(session = %id, %kind, error = %e, "explanation unavailable");
                    warnings.push(format!("{kind}: {e}"));
                }
            }
        }

        let history: Vec<HistoryTurn> = state.history.iter().map(|m| HistoryTurn { role: m.role, content: m.content.clone() }).collect();
        let bundle = assemble(&state.affect, &explanations, &history, &req.text, &self.prompt_cfg);

        let last_ts = state.history.last().map(|m| m.timestamp).unwrap_or(f64::NEG_INFINITY);
        let user = ChatMessage {
            session_id: id.into(),
            email: session.info.email.clone(),
            timestamp: now_s().max(last_ts),
            role: Role::User,
            content: req.text,
        };
        self.log.append_message(&user)?;
        let user_ts = user.timestamp;
        state.history.push(user);

        let response = self.gateway.complete(bundle).await;
        let assistant = ChatMessage {
            session_id: id.into(),
            email: session.info.email.clone(),
            timestamp: now_s().max(user_ts),
            role: Role::Assistant,
            content: response.text,
        };
        self.log.append_message(&assistant)?;
        state.history.push(assistant.clone());
        Ok(Reply {
            message: assistant,
            affect: state.affect.clone(),
            attachments: attached,
            backend: response.backend,
            degraded: response.degraded,
            warnings,
        })
    }
}
