//! Caption and judge service clients.
//!
//! Services are opaque. The wire format is one JSON object per line in each
//! direction; a [`LineTransport`] carries the lines. Offline stubs answer
//! from canned files in a directory.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a remote sensing image analyst. Describe multispectral scenes accurately and concretely, and do not speculate beyond what is visible.";

/// `{category}` is replaced with the target land-cover category.
pub const DEFAULT_AUXILIARY_INSTRUCTION: &str = "Describe this remote sensing image in detail. First summarize the overall landscape, then focus on the {category} regions: describe their size, color, shape, and spatial location within the image.";

pub const DEFAULT_JUDGE_PROMPT: &str = "Rate how well the response follows the instruction for the given image on an integer scale from 1 (unrelated) to 10 (perfectly aligned). Reply with the score only.";

/// Decoding hyperparameters for one generation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
}

impl SamplingParams {
    pub fn new(temperature: f64, top_p: f64) -> Result<Self> {
        let p = Self { temperature, top_p };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature <= 2.0) {
            return Err(Error::Argument(format!(
                "temperature {} outside (0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Argument(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        Ok(())
    }
}

/// One generation at the service defaults, then one regeneration at
/// temperature 0.8, top_p 0.9.
pub fn default_schedule() -> Vec<SamplingParams> {
    vec![
        SamplingParams {
            temperature: 1.0,
            top_p: 1.0,
        },
        SamplingParams {
            temperature: 0.8,
            top_p: 0.9,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image: String,
    pub system: String,
    pub instruction: String,
    pub temperature: f64,
    pub top_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Attempts spent, including the successful one.
    #[serde(skip)]
    pub attempts: u32,
}

/// A caption request plus the instruction/response pair to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub image: String,
    pub system: String,
    pub instruction: String,
    pub response: String,
    pub temperature: f64,
    pub top_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityVerdict {
    /// Alignment score in 1..=10.
    pub score: u8,
    pub accepted: bool,
}

impl QualityVerdict {
    pub fn new(score: u8, threshold: u8) -> Result<Self> {
        if !(1..=10).contains(&score) {
            return Err(Error::Content(format!("alignment score {score} outside 1..=10")));
        }
        Ok(Self {
            score,
            accepted: score >= threshold,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceError {
    /// Worth retrying: dropped connection, timeout, overloaded backend.
    Transient(String),
    Fatal(String),
}

pub trait CaptionService: Sync {
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, ServiceError>;
}

pub trait JudgeService: Sync {
    /// Raw alignment score for the pair.
    fn judge(&self, req: &JudgeRequest) -> Result<u8, ServiceError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3 }
    }
}

fn with_retries<T>(
    retry: RetryPolicy,
    what: &str,
    mut call: impl FnMut() -> Result<T, ServiceError>,
) -> Result<(T, u32)> {
    let budget = retry.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=budget {
        match call() {
            Ok(v) => return Ok((v, attempt)),
            Err(ServiceError::Transient(msg)) => {
                warn!("{what}: attempt {attempt}/{budget} failed: {msg}");
                last = msg;
            }
            Err(ServiceError::Fatal(msg)) => {
                return Err(Error::Transport {
                    attempts: attempt,
                    message: msg,
                })
            }
        }
    }
    Err(Error::Transport {
        attempts: budget,
        message: last,
    })
}

/// Sends a caption request, retrying transient failures within the budget.
pub fn request_caption(
    client: &dyn CaptionService,
    req: &CaptionRequest,
    retry: RetryPolicy,
) -> Result<CaptionResponse> {
    SamplingParams::new(req.temperature, req.top_p)?;
    debug!("caption request: {}", serde_json::to_string(req)?);
    let (mut resp, attempts) = with_retries(retry, "caption", || client.caption(req))?;
    resp.attempts = attempts;
    debug!("caption response for {}: {:?}", req.image, resp.text);
    if resp.text.trim().is_empty() {
        return Err(Error::Content(format!("empty description for {}", req.image)));
    }
    Ok(resp)
}

/// Scores an instruction/response pair against `threshold`.
pub fn request_judgement(
    client: &dyn JudgeService,
    req: &JudgeRequest,
    retry: RetryPolicy,
    threshold: u8,
) -> Result<QualityVerdict> {
    debug!("judge request: {}", serde_json::to_string(req)?);
    let (score, _) = with_retries(retry, "judge", || client.judge(req))?;
    debug!("judge score for {}: {score}", req.image);
    QualityVerdict::new(score, threshold)
}

/// Moves one request line to a service and returns its reply line.
pub trait LineTransport: Send {
    fn exchange(&mut self, line: &str) -> std::io::Result<String>;
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum WireRequest<'a> {
    Caption(&'a CaptionRequest),
    Judge(&'a JudgeRequest),
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    score: Option<u8>,
    #[serde(default)]
    error: Option<String>,
}

/// Speaks the line-delimited JSON protocol over any transport.
///
/// Requests are `{"kind": "caption" | "judge", ...request fields}`; replies
/// are `{"text": ..., "model": ...}`, `{"score": n}` or `{"error": ...}`.
/// I/O failures and `error` replies count as transient.
pub struct LineClient<T> {
    transport: Mutex<T>,
}

impl<T: LineTransport> LineClient<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport: Mutex::new(transport),
        }
    }

    fn call(&self, req: &WireRequest<'_>) -> Result<WireReply, ServiceError> {
        let line = serde_json::to_string(req).map_err(|e| ServiceError::Fatal(e.to_string()))?;
        let reply = self
            .transport
            .lock()
            .map_err(|_| ServiceError::Fatal("transport poisoned".into()))?
            .exchange(&line)
            .map_err(|e| ServiceError::Transient(e.to_string()))?;
        let reply: WireReply =
            serde_json::from_str(reply.trim_end()).map_err(|e| ServiceError::Fatal(format!("bad reply line: {e}")))?;
        match reply.error {
            Some(msg) => Err(ServiceError::Transient(msg)),
            None => Ok(reply),
        }
    }
}

impl<T: LineTransport> CaptionService for LineClient<T> {
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, ServiceError> {
        let reply = self.call(&WireRequest::Caption(req))?;
        Ok(CaptionResponse {
            text: reply
                .text
                .ok_or_else(|| ServiceError::Fatal("caption reply without text".into()))?,
            model: reply.model,
            attempts: 0,
        })
    }
}

impl<T: LineTransport> JudgeService for LineClient<T> {
    fn judge(&self, req: &JudgeRequest) -> Result<u8, ServiceError> {
        self.call(&WireRequest::Judge(req))?
            .score
            .ok_or_else(|| ServiceError::Fatal("judge reply without score".into()))
    }
}

/// A long-lived child process reading request lines on stdin and writing
/// reply lines on stdout.
pub struct ChildProcessTransport {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ChildProcessTransport {
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty service command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::file(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }
}

impl LineTransport for ChildProcessTransport {
    fn exchange(&mut self, line: &str) -> std::io::Result<String> {
        writeln!(self.stdin, "{line}")?;
        self.stdin.flush()?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "service closed its output",
            ));
        }
        Ok(reply)
    }
}

impl Drop for ChildProcessTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn image_key(image: &str) -> String {
    Path::new(image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image.to_string())
}

fn read_canned(dir: &Path, key: &str, ext: &str) -> Result<String, ServiceError> {
    for name in [format!("{key}.{ext}"), format!("default.{ext}")] {
        match fs::read_to_string(dir.join(&name)) {
            Ok(text) => return Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(ServiceError::Fatal(format!("{}: {e}", dir.join(name).display()))),
        }
    }
    Err(ServiceError::Fatal(format!(
        "no canned {ext} for `{key}` (nor default.{ext}) in {}",
        dir.display()
    )))
}

/// Answers captions from `<dir>/<image stem>.txt`, falling back to
/// `<dir>/default.txt`.
#[derive(Debug, Clone)]
pub struct StubCaptionDir {
    dir: PathBuf,
}

impl StubCaptionDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl CaptionService for StubCaptionDir {
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, ServiceError> {
        let text = read_canned(&self.dir, &image_key(&req.image), "txt")?;
        Ok(CaptionResponse {
            text: text.trim_end().to_string(),
            model: Some("stub".into()),
            attempts: 0,
        })
    }
}

/// Answers scores from `<dir>/<image stem>.scores` (or `default.scores`):
/// whitespace-separated integers, the n-th used for the n-th request about
/// that image and the last one repeated after that.
#[derive(Debug)]
pub struct StubJudgeDir {
    dir: PathBuf,
    calls: Mutex<HashMap<String, usize>>,
}

impl StubJudgeDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            calls: Mutex::new(HashMap::new()),
        }
    }
}

impl JudgeService for StubJudgeDir {
    fn judge(&self, req: &JudgeRequest) -> Result<u8, ServiceError> {
        let key = image_key(&req.image);
        let text = read_canned(&self.dir, &key, "scores")?;
        let scores = text
            .split_whitespace()
            .map(str::parse::<u8>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ServiceError::Fatal(format!("scores for `{key}`: {e}")))?;
        let n = {
            let mut calls = self
                .calls
                .lock()
                .map_err(|_| ServiceError::Fatal("stub poisoned".into()))?;
            let n = calls.entry(key.clone()).or_insert(0);
            *n += 1;
            *n - 1
        };
        scores
            .get(n)
            .or(scores.last())
            .copied()
            .ok_or_else(|| ServiceError::Fatal(format!("empty score list for `{key}`")))
    }
}
