//! Text generation backends: a chat-completion HTTP client, a scripted
//! transcript replayer and the oracle that formats symbolic execution
//! results in the model output contract.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::machine::{symbolic_execute, Decision, ExecError, MachineSpec};
use crate::memory::StrategyVars;
use crate::sim::Observation;

pub const ENV_ENDPOINT: &str = "MASMP_ENDPOINT";
pub const ENV_MODEL: &str = "MASMP_MODEL";
pub const ENV_API_KEY: &str = "MASMP_API_KEY";
pub const ENV_TIMEOUT_SECS: &str = "MASMP_TIMEOUT_SECS";

/// Structured inputs that accompany the prompt. Only the oracle reads them;
/// text backends see the prompt alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionContext {
    pub observation: Observation,
    /// Latest stored strategy; `None` in memoryless mode.
    pub prev: Option<StrategyVars>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub context: Option<DecisionContext>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 512,
            temperature: 0.0,
            seed: None,
            context: None,
        }
    }

    pub fn with_context(mut self, ctx: DecisionContext) -> Self {
        self.context = Some(ctx);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response body: {0}")]
    MalformedBody(String),
    #[error("transcript exhausted after {0} entries")]
    TranscriptEnd(usize),
    #[error("transcript {path}: {message}")]
    Transcript { path: PathBuf, message: String },
    #[error("oracle backend needs the structured decision context")]
    MissingContext,
    #[error(transparent)]
    Oracle(#[from] ExecError),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Failures that a retry may fix: transport trouble, rate limiting and
    /// server-side errors.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout(_) | BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Health {
    Ok,
    Unreachable,
    Unauthorized,
}

pub trait Backend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
    fn health_check(&self) -> Health;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }

    fn health_check(&self) -> Health {
        (**self).health_check()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }

    fn health_check(&self) -> Health {
        (**self).health_check()
    }
}

// ---------------------------------------------------------------------------
// oracle

/// Runs the symbolic executor and writes its decision as model output.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    spec: Arc<MachineSpec>,
}

impl OracleBackend {
    pub fn new(spec: Arc<MachineSpec>) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &MachineSpec {
        &self.spec
    }
}

impl Backend for OracleBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let ctx = request.context.as_ref().ok_or(BackendError::MissingContext)?;
        let decision = symbolic_execute(&self.spec, &ctx.observation, ctx.prev.as_ref())?;
        Ok(format_decision(&self.spec, &decision))
    }

    fn health_check(&self) -> Health {
        Health::Ok
    }
}

/// Reasoning line, strategy variable lines, action lines.
pub fn format_decision(spec: &MachineSpec, d: &Decision) -> String {
    let mut out = String::new();
    match d.fired {
        Some(i) => {
            let t = &spec.transitions[i];
            let _ = writeln!(
                out,
                "Reasoning: moving from {} to {}. {}",
                d.previous_state, d.state, t.gloss
            );
        }
        None => {
            let _ = writeln!(
                out,
                "Reasoning: no transition condition holds, staying in {}.",
                d.state
            );
        }
    }
    for (k, v) in &d.variables {
        let _ = writeln!(out, "[{k}]:<{v}>");
    }
    for a in &d.actions {
        let _ = writeln!(out, "Action: {a}");
    }
    out
}

// ---------------------------------------------------------------------------
// scripted

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub completion: String,
}

/// Replays recorded completions in order, one per call.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<String>) -> Self {
        Self {
            entries,
            cursor: Mutex::new(0),
        }
    }

    /// Reads a JSON Lines transcript: one `{"completion": "..."}` per line.
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let err = |message: String| BackendError::Transcript {
            path: path.to_owned(),
            message,
        };
        let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            entries.push(entry.completion);
        }
        Ok(Self::new(entries))
    }

    pub fn write_transcript(path: &Path, completions: &[String]) -> io::Result<()> {
        let mut text = String::new();
        for c in completions {
            let entry = TranscriptEntry {
                completion: c.clone(),
            };
            text.push_str(&serde_json::to_string(&entry).map_err(io::Error::other)?);
            text.push('\n');
        }
        fs::write(path, text)
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().unwrap()
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let mut cursor = self.cursor.lock().unwrap();
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(BackendError::TranscriptEnd(self.entries.len()))?;
        *cursor += 1;
        Ok(entry.clone())
    }

    fn health_check(&self) -> Health {
        Health::Ok
    }
}

// ---------------------------------------------------------------------------
// remote

/// Chat-completion client. `endpoint` is the API base URL; requests go to
/// `{endpoint}/chat/completions` and the health probe to `{endpoint}/models`.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            model: model.into(),
            api_key,
            timeout,
            agent,
        }
    }

    /// The JSON body sent for `request`.
    pub fn request_body(&self, request: &GenerationRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn authorize(&self, req: ureq::Request) -> ureq::Request {
        match &self.api_key {
            Some(k) => req.set("Authorization", &format!("Bearer {k}")),
            None => req,
        }
    }

    fn map_transport(&self, t: ureq::Transport) -> BackendError {
        let timed_out = std::error::Error::source(&t)
            .and_then(|s| s.downcast_ref::<io::Error>())
            .is_some_and(|e| matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock));
        if timed_out {
            BackendError::Timeout(self.timeout)
        } else {
            BackendError::Transport(t.to_string())
        }
    }
}

impl Backend for RemoteBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let url = format!("{}/chat/completions", self.endpoint);
        let req = self.authorize(self.agent.post(&url));
        let resp = match req.send_json(self.request_body(request)) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(BackendError::Status { status, body });
            }
            Err(ureq::Error::Transport(t)) => return Err(self.map_transport(t)),
        };
        let value: serde_json::Value = resp
            .into_json()
            .map_err(|e| BackendError::MalformedBody(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_owned)
            .ok_or_else(|| BackendError::MalformedBody("missing choices[0].message.content".into()))
    }

    fn health_check(&self) -> Health {
        let url = format!("{}/models", self.endpoint);
        match self.authorize(self.agent.get(&url)).call() {
            Ok(_) => Health::Ok,
            Err(ureq::Error::Status(401 | 403, _)) => Health::Unauthorized,
            Err(ureq::Error::Status(s, _)) if s < 500 => Health::Ok,
            Err(_) => Health::Unreachable,
        }
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Scripted,
    Oracle,
}

/// Backend selection as written in a config file.
///
/// ```toml
/// kind = "remote"
/// endpoint = "http://localhost:8000/v1"
/// model = "some-model"
/// api_key_env = "MY_KEY"   # name of the variable holding the key
/// timeout_secs = 60
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Environment variable that holds the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Key resolved from the environment; never written back out.
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_tokens() -> u32 {
    512
}

impl BackendDescriptor {
    pub fn oracle() -> Self {
        Self::of_kind(BackendKind::Oracle)
    }

    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        Self {
            transcript: Some(path.into()),
            ..Self::of_kind(BackendKind::Scripted)
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            ..Self::of_kind(BackendKind::Remote)
        }
    }

    fn of_kind(kind: BackendKind) -> Self {
        Self {
            kind,
            endpoint: None,
            model: None,
            api_key_env: None,
            api_key: None,
            transcript: None,
            timeout_secs: default_timeout_secs(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, BackendError> {
        toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies `MASMP_ENDPOINT`, `MASMP_MODEL`, `MASMP_API_KEY` and
    /// `MASMP_TIMEOUT_SECS`, then resolves `api_key_env` if no key was given.
    pub fn with_env_overrides(
        mut self,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, BackendError> {
        if let Some(v) = env(ENV_ENDPOINT) {
            self.endpoint = Some(v);
        }
        if let Some(v) = env(ENV_MODEL) {
            self.model = Some(v);
        }
        if let Some(v) = env(ENV_TIMEOUT_SECS) {
            self.timeout_secs = v
                .parse()
                .map_err(|_| BackendError::Config(format!("{ENV_TIMEOUT_SECS}={v:?} is not a number")))?;
        }
        self.api_key = env(ENV_API_KEY).or_else(|| self.api_key_env.as_deref().and_then(&env));
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let missing = |what: &str| Err(BackendError::Config(format!("{what} is required for this backend")));
        match self.kind {
            BackendKind::Remote if self.endpoint.is_none() => missing("endpoint"),
            BackendKind::Remote if self.model.is_none() => missing("model"),
            BackendKind::Scripted if self.transcript.is_none() => missing("transcript"),
            _ if self.timeout_secs == 0 => Err(BackendError::Config("timeout_secs must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Builds a fresh backend. Scripted backends keep a cursor, so build one
    /// per episode.
    pub fn instantiate(&self, spec: &Arc<MachineSpec>) -> Result<Box<dyn Backend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Oracle => Box::new(OracleBackend::new(spec.clone())),
            BackendKind::Scripted => {
                Box::new(ScriptedBackend::open(self.transcript.as_deref().unwrap())?)
            }
            BackendKind::Remote => Box::new(RemoteBackend::new(
                self.endpoint.clone().unwrap(),
                self.model.clone().unwrap(),
                self.api_key.clone(),
                self.timeout(),
            )),
        })
    }

    pub fn health_check(&self) -> Health {
        if self.validate().is_err() {
            return Health::Unreachable;
        }
        match self.kind {
            BackendKind::Oracle => Health::Ok,
            BackendKind::Scripted => match ScriptedBackend::open(self.transcript.as_deref().unwrap()) {
                Ok(_) => Health::Ok,
                Err(_) => Health::Unreachable,
            },
            BackendKind::Remote => RemoteBackend::new(
                self.endpoint.clone().unwrap(),
                self.model.clone().unwrap(),
                self.api_key.clone(),
                self.timeout(),
            )
            .health_check(),
        }
    }
}

// ---------------------------------------------------------------------------
// fault injection

/// The kinds of defect [`CorruptingBackend`] writes into an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    UnknownVerb,
    UnknownArgument,
    MissingPrerequisite,
    Unaffordable,
    IllegalTarget,
}

impl Corruption {
    pub const ALL: [Corruption; 5] = [
        Corruption::UnknownVerb,
        Corruption::UnknownArgument,
        Corruption::MissingPrerequisite,
        Corruption::Unaffordable,
        Corruption::IllegalTarget,
    ];
}

/// Wraps a backend and, for a seeded fraction of calls, appends impossible
/// action lines to the output. The choice depends only on the request, so it
/// is reproducible and safe to share across threads.
#[derive(Debug)]
pub struct CorruptingBackend<B> {
    inner: B,
    rate: f64,
    seed: u64,
}

impl<B: Backend> CorruptingBackend<B> {
    pub fn new(inner: B, rate: f64, seed: u64) -> Self {
        Self { inner, rate, seed }
    }

    /// Which corruption, if any, applies to `request`.
    pub fn corruption_for(&self, request: &GenerationRequest) -> Option<Corruption> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(request.seed.unwrap_or(0).to_le_bytes());
        h.update(request.prompt.as_bytes());
        let digest = h.finalize();
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        if rng.gen::<f64>() >= self.rate {
            return None;
        }
        Some(Corruption::ALL[rng.gen_range(0..Corruption::ALL.len())])
    }
}

impl<B: Backend> Backend for CorruptingBackend<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut text = self.inner.generate(request)?;
        let Some(kind) = self.corruption_for(request) else {
            return Ok(text);
        };
        let obs = request.context.as_ref().map(|c| &c.observation);
        let lines: Vec<String> = match kind {
            Corruption::UnknownVerb => vec!["Action: Summon(dragon)".into()],
            Corruption::UnknownArgument => vec!["Action: Train(dragoon)".into()],
            // Once tech is up there is no missing prerequisite to ask for.
            Corruption::MissingPrerequisite if obs.is_some_and(|o| o.tech_structures > 0) => {
                vec!["Action: Build(nexus)".into(); 64]
            }
            Corruption::MissingPrerequisite => vec!["Action: Train(stalker)".into()],
            // Far beyond any bank the simulator can accumulate.
            Corruption::Unaffordable => vec!["Action: Build(nexus)".into(); 64],
            Corruption::IllegalTarget => {
                let home = obs.map_or("home_A", |o| o.home.name());
                vec![format!("Action: Attack({home})")]
            }
        };
        for l in lines {
            text.push_str(&l);
            text.push('\n');
        }
        Ok(text)
    }

    fn health_check(&self) -> Health {
        self.inner.health_check()
    }
}
