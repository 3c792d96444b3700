//! Environment server for external trainers.
//!
//! Every message is a frame: a little-endian `u32` byte length followed by a
//! UTF-8 JSON object tagged by `type`. A session starts with
//! `{"type":"hello","version":1}`; the server answers with its version and
//! the observation/action widths. Then:
//!
//! ```text
//! reset {task?, scene_seed, spawn_seed, band?}  -> reset {observation}
//! step  {action: [6 reals]}                      -> step {observation, reward, terminated, truncated, info}
//! log                                            -> log {jsonl}
//! close                                          -> closed
//! ```
//!
//! Failures answer `error {kind, message}` and leave the session usable,
//! except a version mismatch or an oversized frame, which end it.

use crate::env::{Env, Observation, StepInfo, TaskKind, OBS_DIM};
use crate::error::{Error, Result};
use crate::kinematics::RAW_ACTION_DIM;
use crate::reward::RewardBreakdown;
use crate::scene::SpawnBand;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_BYTES: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello {
        version: u32,
    },
    Reset {
        #[serde(default)]
        task: Option<TaskKind>,
        scene_seed: u64,
        spawn_seed: u64,
        #[serde(default)]
        band: Option<[f64; 2]>,
    },
    Step {
        action: Vec<f64>,
    },
    Log,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Parse,
    Version,
    Usage,
    Validation,
    Generation,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Hello {
        version: u32,
        obs_dim: usize,
        action_dim: usize,
    },
    Reset {
        observation: Observation,
    },
    Step {
        observation: Observation,
        reward: RewardBreakdown,
        terminated: bool,
        truncated: bool,
        info: StepInfo,
    },
    Log {
        jsonl: String,
    },
    Closed,
    Error {
        kind: ErrorKind,
        message: String,
    },
}

fn error_response(e: &Error) -> Response {
    let kind = match e {
        Error::Usage(_) => ErrorKind::Usage,
        Error::Generation { .. } => ErrorKind::Generation,
        Error::Validation(_) | Error::Dimension { .. } | Error::NonFinite(_) | Error::Config(_) => {
            ErrorKind::Validation
        }
        Error::Parse(_) => ErrorKind::Parse,
        _ => ErrorKind::Internal,
    };
    Response::Error { kind, message: e.to_string() }
}

/// Reads one frame; `None` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {n} bytes exceeds {MAX_FRAME_BYTES}")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<()> {
    let n = u32::try_from(payload.len())
        .ok()
        .filter(|n| *n as usize <= MAX_FRAME_BYTES)
        .ok_or_else(|| Error::Protocol(format!("frame of {} bytes is too large", payload.len())))?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

fn send(w: &mut impl Write, resp: &Response) -> Result<()> {
    let bytes = serde_json::to_vec(resp).map_err(|e| Error::Protocol(e.to_string()))?;
    write_frame(w, &bytes)
}

/// Server-side state of one connection.
pub struct Session {
    default_task: TaskKind,
    greeted: bool,
    env: Option<Env>,
}

impl Session {
    pub fn new(default_task: TaskKind) -> Self {
        Self { default_task, greeted: false, env: None }
    }

    /// Answers one request. The flag is true when the session must end.
    pub fn handle(&mut self, req: Request) -> (Response, bool) {
        match req {
            Request::Hello { version } => {
                if version != PROTOCOL_VERSION {
                    let message = format!("server speaks protocol {PROTOCOL_VERSION}, client asked for {version}");
                    return (Response::Error { kind: ErrorKind::Version, message }, true);
                }
                self.greeted = true;
                let hello = Response::Hello {
                    version: PROTOCOL_VERSION,
                    obs_dim: OBS_DIM,
                    action_dim: RAW_ACTION_DIM,
                };
                (hello, false)
            }
            _ if !self.greeted => (
                error_response(&Error::Usage("send hello before any other request".into())),
                false,
            ),
            Request::Reset { task, scene_seed, spawn_seed, band } => {
                let task = task.unwrap_or(self.default_task);
                let result = match band {
                    Some([lo, hi]) => SpawnBand::new(lo, hi)
                        .and_then(|b| Env::reset_in_band(task, scene_seed, spawn_seed, b)),
                    None => Env::reset(task, scene_seed, spawn_seed),
                };
                match result {
                    Ok((env, observation)) => {
                        self.env = Some(env);
                        (Response::Reset { observation }, false)
                    }
                    Err(e) => (error_response(&e), false),
                }
            }
            Request::Step { action } => {
                let Some(env) = self.env.as_mut() else {
                    return (error_response(&Error::Usage("step before reset".into())), false);
                };
                match env.step(&action) {
                    Ok(r) => (
                        Response::Step {
                            observation: r.observation,
                            reward: r.reward,
                            terminated: r.terminated,
                            truncated: r.truncated,
                            info: r.info,
                        },
                        false,
                    ),
                    Err(e) => (error_response(&e), false),
                }
            }
            Request::Log => match &self.env {
                Some(env) => (Response::Log { jsonl: env.log().to_jsonl() }, false),
                None => (error_response(&Error::Usage("no episode to log".into())), false),
            },
            Request::Close => (Response::Closed, true),
        }
    }
}

/// Serves one session until `close`, end of stream, or a fatal protocol
/// error. The environment is dropped with the session.
pub fn serve_session(default_task: TaskKind, reader: &mut impl Read, writer: &mut impl Write) -> Result<()> {
    let mut session = Session::new(default_task);
    loop {
        let frame = match read_frame(reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e @ Error::Protocol(_)) => {
                send(writer, &error_response(&e))?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let (resp, end) = match serde_json::from_slice::<Request>(&frame) {
            Ok(req) => session.handle(req),
            Err(e) => (Response::Error { kind: ErrorKind::Parse, message: e.to_string() }, false),
        };
        send(writer, &resp)?;
        if end {
            return Ok(());
        }
    }
}

/// Accepts connections forever (or `limit` of them), one thread and one
/// environment per connection.
pub fn serve_tcp(listener: TcpListener, default_task: TaskKind, limit: Option<usize>) -> Result<()> {
    let mut handles = Vec::new();
    for (i, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        handles.push(std::thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            let mut reader = match stream.try_clone() {
                Ok(s) => s,
                Err(e) => return eprintln!("{peer}: {e}"),
            };
            let mut writer = stream;
            if let Err(e) = serve_session(default_task, &mut reader, &mut writer) {
                eprintln!("{peer}: session ended: {e}");
            }
        }));
        if limit.is_some_and(|n| i + 1 >= n) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

pub fn serve_stdio(default_task: TaskKind) -> Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve_session(default_task, &mut stdin.lock(), &mut stdout.lock())
}

/// Client side of the protocol over any byte stream.
pub struct RemoteEnv<S: Read + Write> {
    stream: S,
}

impl RemoteEnv<TcpStream> {
    pub fn connect(addr: &str) -> Result<Self> {
        Self::handshake(TcpStream::connect(addr)?)
    }
}

impl<S: Read + Write> RemoteEnv<S> {
    pub fn handshake(stream: S) -> Result<Self> {
        let mut client = Self { stream };
        match client.request(&Request::Hello { version: PROTOCOL_VERSION })? {
            Response::Hello { version, .. } if version == PROTOCOL_VERSION => Ok(client),
            other => Err(Error::Protocol(format!("unexpected handshake reply {other:?}"))),
        }
    }

    /// Sends `req` and returns the raw reply, including error replies.
    pub fn request(&mut self, req: &Request) -> Result<Response> {
        let bytes = serde_json::to_vec(req).map_err(|e| Error::Protocol(e.to_string()))?;
        write_frame(&mut self.stream, &bytes)?;
        let frame = read_frame(&mut self.stream)?
            .ok_or_else(|| Error::Protocol("server closed the connection".into()))?;
        serde_json::from_slice(&frame).map_err(|e| Error::Protocol(e.to_string()))
    }

    /// Sends an arbitrary payload as one frame and returns the reply.
    pub fn request_raw(&mut self, payload: &[u8]) -> Result<Response> {
        write_frame(&mut self.stream, payload)?;
        let frame = read_frame(&mut self.stream)?
            .ok_or_else(|| Error::Protocol("server closed the connection".into()))?;
        serde_json::from_slice(&frame).map_err(|e| Error::Protocol(e.to_string()))
    }

    pub fn reset(&mut self, task: TaskKind, scene_seed: u64, spawn_seed: u64) -> Result<Observation> {
        match self.request(&Request::Reset { task: Some(task), scene_seed, spawn_seed, band: None })? {
            Response::Reset { observation } => Ok(observation),
            other => Err(reply_error(other)),
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Response> {
        match self.request(&Request::Step { action: action.to_vec() })? {
            r @ Response::Step { .. } => Ok(r),
            other => Err(reply_error(other)),
        }
    }

    pub fn log(&mut self) -> Result<String> {
        match self.request(&Request::Log)? {
            Response::Log { jsonl } => Ok(jsonl),
            other => Err(reply_error(other)),
        }
    }

    pub fn close(mut self) -> Result<()> {
        match self.request(&Request::Close)? {
            Response::Closed => Ok(()),
            other => Err(reply_error(other)),
        }
    }
}

fn reply_error(resp: Response) -> Error {
    match resp {
        Response::Error { kind: ErrorKind::Usage, message } => Error::Usage(message),
        Response::Error { message, .. } => Error::Protocol(message),
        other => Error::Protocol(format!("unexpected reply {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn frames(reqs: &[&str]) -> Vec<u8> {
        let mut out = Vec::new();
        for r in reqs {
            write_frame(&mut out, r.as_bytes()).unwrap();
        }
        out
    }

    fn replies(bytes: &[u8]) -> Vec<Response> {
        let mut cur = Cursor::new(bytes);
        let mut out = Vec::new();
        while let Some(f) = read_frame(&mut cur).unwrap() {
            out.push(serde_json::from_slice(&f).unwrap());
        }
        out
    }

    #[test]
    fn scripted_session() {
        let input = frames(&[
            r#"{"type":"step","action":[0,0,0,0,0,0]}"#,
            r#"{"type":"hello","version":1}"#,
            r#"{"type":"step","action":[0,0,0,0,0,0]}"#,
            r#"{"type":"reset","scene_seed":1,"spawn_seed":2}"#,
            r#"{"type":"step","action":[0.1,0,0,0,0]}"#,
            r#"not json"#,
            r#"{"type":"step","action":[0.1,0,0,0,0,0]}"#,
            r#"{"type":"close"}"#,
            r#"{"type":"hello","version":1}"#,
        ]);
        let mut out = Vec::new();
        serve_session(TaskKind::DoorPush, &mut Cursor::new(input), &mut out).unwrap();
        let r = replies(&out);
        assert_eq!(r.len(), 8, "stops after close");
        assert!(matches!(r[0], Response::Error { kind: ErrorKind::Usage, .. }));
        assert!(matches!(r[1], Response::Hello { version: 1, obs_dim: 19, action_dim: 6 }));
        assert!(matches!(r[2], Response::Error { kind: ErrorKind::Usage, .. }));
        match &r[3] {
            Response::Reset { observation } => assert_eq!(observation.0.len(), 19),
            other => panic!("{other:?}"),
        }
        assert!(matches!(r[4], Response::Error { kind: ErrorKind::Validation, .. }));
        assert!(matches!(r[5], Response::Error { kind: ErrorKind::Parse, .. }));
        assert!(matches!(r[6], Response::Step { .. }));
        assert_eq!(r[7], Response::Closed);
    }

    #[test]
    fn version_mismatch_ends_session() {
        let input = frames(&[r#"{"type":"hello","version":9}"#, r#"{"type":"hello","version":1}"#]);
        let mut out = Vec::new();
        serve_session(TaskKind::DoorPush, &mut Cursor::new(input), &mut out).unwrap();
        let r = replies(&out);
        assert_eq!(r.len(), 1);
        assert!(matches!(r[0], Response::Error { kind: ErrorKind::Version, .. }));
    }

    #[test]
    fn oversized_frame_is_fatal() {
        let mut input = ((MAX_FRAME_BYTES + 1) as u32).to_le_bytes().to_vec();
        input.extend_from_slice(b"{}");
        let mut out = Vec::new();
        assert!(serve_session(TaskKind::DoorPush, &mut Cursor::new(input), &mut out).is_err());
        assert!(matches!(replies(&out)[0], Response::Error { .. }));
    }

    #[test]
    fn step_after_termination_is_a_usage_error() {
        let mut s = Session::new(TaskKind::DoorPush);
        s.handle(Request::Hello { version: 1 });
        s.handle(Request::Reset { task: None, scene_seed: 0, spawn_seed: 1, band: None });
        s.env.as_mut().unwrap().max_steps = 2;
        for _ in 0..2 {
            assert!(matches!(s.handle(Request::Step { action: vec![0.0; 6] }).0, Response::Step { .. }));
        }
        let (resp, end) = s.handle(Request::Step { action: vec![0.0; 6] });
        assert!(matches!(resp, Response::Error { kind: ErrorKind::Usage, .. }));
        assert!(!end);
    }
}
