//! Frame-streaming service over WebSocket.
//!
//! Clients send JSON `pose` and `set` messages; each rendered frame goes out
//! as a `frame_header` text message followed by one binary message of
//! width × height × 3 sRGB bytes. Poses that arrive while a frame renders
//! wait in the socket; before the next frame the whole backlog is drained
//! and only the newest pose is rendered.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};
use voxline_core::culling::Camera;
use voxline_core::glam::DVec3;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::session::{FrameStats, Session};

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Pose {
        id: u64,
        position: [f64; 3],
        forward: [f64; 3],
        up: [f64; 3],
        fov: f64,
    },
    Set {
        key: String,
        value: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    FrameHeader {
        id: u64,
        pose_id: u64,
        width: u32,
        height: u32,
        stats: serde_json::Value,
    },
    Error {
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Pose {
    id: u64,
    position: DVec3,
    forward: DVec3,
    up: DVec3,
    fov: f64,
}

/// Latest-wins intake between two frames.
#[derive(Debug, Default)]
struct Mailbox {
    pose: Option<Pose>,
    /// A setting changed, so the last pose must be rendered again.
    dirty: bool,
    errors: Vec<String>,
    closed: bool,
}

pub struct Server {
    listener: TcpListener,
    session: Session,
    next_frame: u64,
}

fn protocol(e: impl std::fmt::Display) -> Error {
    Error::Protocol(e.to_string())
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn is_closed(e: &tungstenite::Error) -> bool {
    use tungstenite::error::ProtocolError;
    match e {
        tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => true,
        tungstenite::Error::Protocol(ProtocolError::ResetWithoutClosingHandshake) => true,
        tungstenite::Error::Io(io) => matches!(
            io.kind(),
            ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted | ErrorKind::BrokenPipe | ErrorKind::UnexpectedEof
        ),
        _ => false,
    }
}

impl Server {
    /// Validates the config, claims the port, then loads and voxelizes the scene.
    /// Port 0 picks a free port; see [`Server::local_addr`].
    pub fn bind(config: Config) -> Result<Self> {
        config.validate()?;
        let port = config.port;
        let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|source| Error::Bind { port, source })?;
        let session = Session::new(config)?;
        Ok(Server {
            listener,
            session,
            next_frame: 0,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Serves connections one after another until the process ends.
    pub fn run(&mut self) -> Result<()> {
        log::info!("serving on ws://{}", self.local_addr()?);
        loop {
            if let Err(e) = self.serve_connection() {
                log::warn!("connection ended: {e}");
            }
        }
    }

    /// Accepts one client and serves it until it disconnects.
    pub fn serve_connection(&mut self) -> Result<()> {
        let (stream, peer) = self.listener.accept()?;
        log::info!("client {peer} connected");
        let mut ws = tungstenite::accept(stream).map_err(protocol)?;
        let mut last_pose: Option<Pose> = None;
        loop {
            let mut mail = Mailbox::default();
            // Block for the first message, then drain whatever else is queued.
            self.receive(&mut ws, &mut mail, true)?;
            ws.get_mut().set_nonblocking(true)?;
            while !mail.closed && self.receive(&mut ws, &mut mail, false)? {}
            ws.get_mut().set_nonblocking(false)?;
            if mail.closed {
                log::info!("client {peer} disconnected");
                return Ok(());
            }
            for message in mail.errors.drain(..) {
                send_json(&mut ws, &ServerMessage::Error { message })?;
            }
            if let Some(p) = mail.pose {
                last_pose = Some(p);
            }
            let render_pose = if mail.pose.is_some() || mail.dirty { last_pose } else { None };
            if let Some(pose) = render_pose {
                if let Err(e) = self.send_frame(&mut ws, &pose) {
                    match e {
                        Error::Protocol(_) | Error::Io(_) => return Err(e),
                        other => send_json(&mut ws, &ServerMessage::Error { message: other.to_string() })?,
                    }
                }
            }
        }
    }

    /// Reads one message into `mail`. Returns false when nothing was available.
    fn receive(&mut self, ws: &mut WebSocket<TcpStream>, mail: &mut Mailbox, blocking: bool) -> Result<bool> {
        let msg = match ws.read() {
            Ok(m) => m,
            Err(e) if !blocking && would_block(&e) => return Ok(false),
            Err(e) if is_closed(&e) => {
                mail.closed = true;
                return Ok(false);
            }
            Err(tungstenite::Error::Utf8) => {
                mail.errors.push("text message is not valid UTF-8".into());
                return Ok(true);
            }
            Err(e) => return Err(protocol(e)),
        };
        match msg {
            Message::Text(text) => match serde_json::from_str::<ClientMessage>(&text) {
                Ok(ClientMessage::Pose {
                    id,
                    position,
                    forward,
                    up,
                    fov,
                }) => {
                    mail.pose = Some(Pose {
                        id,
                        position: DVec3::from_array(position),
                        forward: DVec3::from_array(forward),
                        up: DVec3::from_array(up),
                        fov,
                    })
                }
                Ok(ClientMessage::Set { key, value }) => match self.session.apply(&key, &value) {
                    Ok(()) => {
                        log::info!("set {key} = {value}");
                        mail.dirty = true;
                    }
                    Err(e) => mail.errors.push(e.to_string()),
                },
                Err(e) => mail.errors.push(format!("malformed message: {e}")),
            },
            Message::Binary(_) => mail.errors.push("binary messages are not accepted".into()),
            Message::Close(_) => mail.closed = true,
            Message::Ping(_) | Message::Pong(_) | Message::Frame(_) => {}
        }
        Ok(true)
    }

    fn send_frame(&mut self, ws: &mut WebSocket<TcpStream>, pose: &Pose) -> Result<()> {
        let c = self.session.config();
        let cam = Camera::new(pose.position, pose.forward, pose.up, pose.fov, c.width, c.height)
            .map_err(|e| Error::Config(format!("pose {}: {e}", pose.id)))?;
        let frame = self.session.render(&cam)?;
        let stats: FrameStats = self.session.stats(&frame);
        let id = self.next_frame;
        self.next_frame += 1;
        send_json(
            ws,
            &ServerMessage::FrameHeader {
                id,
                pose_id: pose.id,
                width: frame.image.width,
                height: frame.image.height,
                stats: serde_json::to_value(stats).map_err(protocol)?,
            },
        )?;
        ws.send(Message::Binary(frame.image.srgb_bytes())).map_err(protocol)?;
        Ok(())
    }
}

fn send_json(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> Result<()> {
    let text = serde_json::to_string(msg).map_err(protocol)?;
    ws.send(Message::Text(text)).map_err(protocol)
}

/// Binds and serves forever.
pub fn cmd_serve(config: Config) -> Result<()> {
    Server::bind(config)?.run()
}
