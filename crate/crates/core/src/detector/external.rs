//! JSON-lines protocol for out-of-process detectors.
//!
//! One request line per image on the child's stdin, one response line per
//! request on its stdout, in the same order:
//!
//! ```text
//! {"id":"img001","width":800,"height":800,"path":"img001"}
//! {"id":"img001","detections":[{"label":"Spaniel","box":[x,y,w,h],"confidence":0.97}]}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Detector;
use crate::dataset::{AnnotatedImage, Detection};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub id: String,
    pub width: f64,
    pub height: f64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub id: String,
    pub detections: Vec<Detection>,
}

/// Launch settings for an external detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Image locator sent as `path`; `{id}` is replaced by the image id.
    #[serde(default)]
    pub path_template: Option<String>,
    /// Number of worker processes. Each serves one request at a time.
    #[serde(default = "default_pool")]
    pub processes: usize,
}

fn default_pool() -> usize {
    1
}

impl ExternalSpec {
    pub fn request_for(&self, image: &AnnotatedImage) -> DetectRequest {
        let path = match &self.path_template {
            Some(t) => t.replace("{id}", &image.id),
            None => image.id.clone(),
        };
        DetectRequest {
            id: image.id.clone(),
            width: image.width,
            height: image.height,
            path,
        }
    }
}

pub fn write_request<W: Write>(out: &mut W, request: &DetectRequest) -> Result<()> {
    let mut line = serde_json::to_string(request).expect("request serializes");
    line.push('\n');
    out.write_all(line.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::Protocol(format!("writing request for {}: {e}", request.id)))
}

/// Reads one response line and checks it against the request.
pub fn read_response<R: BufRead>(input: &mut R, request: &DetectRequest) -> Result<Vec<Detection>> {
    let mut line = String::new();
    let n = input
        .read_line(&mut line)
        .map_err(|e| Error::Protocol(format!("reading response for {}: {e}", request.id)))?;
    if n == 0 {
        return Err(Error::Protocol(format!(
            "detector closed its output before answering {}",
            request.id
        )));
    }
    let response: DetectResponse = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Protocol(format!("malformed response line for {}: {e}", request.id)))?;
    if response.id != request.id {
        return Err(Error::Protocol(format!(
            "response id {} does not match request {}",
            response.id, request.id
        )));
    }
    for det in &response.detections {
        det.check(request.width, request.height)
            .map_err(|m| Error::Protocol(format!("image {}: {m}", request.id)))?;
    }
    Ok(response.detections)
}

struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self> {
        let display = command.join(" ");
        let (program, args) = command.split_first().ok_or_else(|| Error::Launch {
            command: display.clone(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| Error::Launch {
                command: display,
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Worker {
            child,
            stdin,
            stdout,
        })
    }

    fn call(&mut self, request: &DetectRequest) -> Result<Vec<Detection>> {
        let stdin = self.stdin.as_mut().expect("stdin open while worker lives");
        let result = write_request(stdin, request).and_then(|_| read_response(&mut self.stdout, request));
        result.map_err(|err| match self.child.try_wait() {
            Ok(Some(status)) if !status.success() => {
                Error::Protocol(format!("detector exited with {status} while serving {}", request.id))
            }
            _ => err,
        })
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A pool of external detector processes.
pub struct ExternalDetector {
    spec: ExternalSpec,
    workers: Vec<Mutex<Worker>>,
    next: AtomicUsize,
}

impl std::fmt::Debug for ExternalDetector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalDetector")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

impl ExternalDetector {
    pub fn spawn(spec: ExternalSpec) -> Result<Self> {
        let workers = (0..spec.processes.max(1))
            .map(|_| Worker::spawn(&spec.command).map(Mutex::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExternalDetector {
            spec,
            workers,
            next: AtomicUsize::new(0),
        })
    }
}

impl Detector for ExternalDetector {
    fn detect(&self, image: &AnnotatedImage) -> Result<Vec<Detection>> {
        let request = self.spec.request_for(image);
        let slot = self.next.fetch_add(1, Ordering::Relaxed) % self.workers.len();
        let mut worker = self.workers[slot]
            .lock()
            .map_err(|_| Error::Protocol("detector worker poisoned".into()))?;
        worker.call(&request)
    }
}
