use std::net::{SocketAddr, TcpStream};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};
use voxline::config::Config;
use voxline::serve::Server;
use voxline::Error;

type Client = WebSocket<TcpStream>;

fn config() -> Config {
    let mut c = Config::default();
    c.apply_text("input = gen:helix,verts=200\nres = 32\nwidth = 24\nheight = 18\nport = 0\nradius = 0.6", "test")
        .unwrap();
    c
}

fn start(config: Config) -> (SocketAddr, JoinHandle<voxline::Result<()>>) {
    let mut server = Server::bind(config).unwrap();
    let addr = server.local_addr().unwrap();
    (addr, std::thread::spawn(move || server.serve_connection()))
}

fn connect(addr: SocketAddr) -> Client {
    let stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
    tungstenite::client(format!("ws://{addr}/"), stream).unwrap().0
}

fn pose(id: u64, azimuth: f64) -> Message {
    let position = [16.0 + 60.0 * azimuth.cos(), 16.0 + 60.0 * azimuth.sin(), 20.0];
    let forward = [-azimuth.cos(), -azimuth.sin(), -0.05];
    Message::Text(
        json!({"type": "pose", "id": id, "position": position, "forward": forward, "up": [0, 0, 1], "fov": 0.7})
            .to_string(),
    )
}

fn set(key: &str, value: &str) -> Message {
    Message::Text(json!({"type": "set", "key": key, "value": value}).to_string())
}

fn text(ws: &mut Client) -> Value {
    match ws.read().unwrap() {
        Message::Text(t) => serde_json::from_str(&t).unwrap(),
        other => panic!("expected text, got {other:?}"),
    }
}

/// Reads a header and its body; checks the body size against the header.
fn frame(ws: &mut Client) -> Value {
    let header = text(ws);
    assert_eq!(header["type"], "frame_header", "{header}");
    let body = match ws.read().unwrap() {
        Message::Binary(b) => b,
        other => panic!("expected binary, got {other:?}"),
    };
    let (w, h) = (header["width"].as_u64().unwrap(), header["height"].as_u64().unwrap());
    assert_eq!(body.len() as u64, w * h * 3);
    header
}

fn finish(mut ws: Client, server: JoinHandle<voxline::Result<()>>) {
    ws.close(None).unwrap();
    while ws.read().is_ok() {}
    server.join().unwrap().unwrap();
}

#[test]
fn pose_yields_one_frame_with_echoed_id() {
    let (addr, server) = start(config());
    let mut ws = connect(addr);
    ws.send(pose(41, 0.3)).unwrap();
    let h = frame(&mut ws);
    assert_eq!(h["pose_id"], 41);
    assert_eq!(h["id"], 0);
    assert_eq!((h["width"].as_u64(), h["height"].as_u64()), (Some(24), Some(18)));
    assert_eq!(h["stats"]["mode"], "opaque");
    assert!(h["stats"]["fragments"].as_u64().unwrap() > 0);
    // nothing else follows
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(300))).unwrap();
    assert!(ws.read().is_err());
    ws.get_mut().set_read_timeout(Some(Duration::from_secs(60))).unwrap();
    ws.send(pose(42, 0.4)).unwrap();
    let h = frame(&mut ws);
    assert_eq!((h["id"].as_u64(), h["pose_id"].as_u64()), (Some(1), Some(42)));
    finish(ws, server);
}

#[test]
fn pose_bursts_coalesce_to_the_latest() {
    let (addr, server) = start(config());
    let mut ws = connect(addr);
    for id in 0..100 {
        ws.send(pose(id, id as f64 * 0.05)).unwrap();
    }
    let mut ids = Vec::new();
    loop {
        let h = frame(&mut ws);
        ids.push(h["id"].as_u64().unwrap());
        if h["pose_id"] == 99 {
            break;
        }
    }
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    assert!(ids.len() <= 100);
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(300))).unwrap();
    assert!(ws.read().is_err(), "frames after the last pose");
    finish(ws, server);
}

#[test]
fn opacity_change_switches_to_transparent() {
    let (addr, server) = start(Config {
        strategy: "vcsv".parse().unwrap(),
        ..config()
    });
    let mut ws = connect(addr);
    ws.send(pose(1, 0.2)).unwrap();
    let first = frame(&mut ws);
    assert_eq!(first["stats"]["mode"], "opaque");
    ws.send(set("alpha", "0.1")).unwrap();
    // the last pose is rendered again with the new settings
    let h = frame(&mut ws);
    assert_eq!(h["pose_id"], 1);
    assert_eq!(h["stats"]["mode"], "transparent");
    assert_eq!(h["stats"]["strategy"], "vsv");
    assert_eq!(h["stats"]["alpha"], 0.1);
    ws.send(pose(2, 0.9)).unwrap();
    assert_eq!(frame(&mut ws)["stats"]["mode"], "transparent");
    finish(ws, server);
}

#[test]
fn malformed_messages_get_error_frames() {
    let (addr, server) = start(config());
    let mut ws = connect(addr);
    for bad in [
        Message::Text("not json".into()),
        Message::Text(json!({"type": "zoom"}).to_string()),
        Message::Text(json!({"type": "pose", "id": 1}).to_string()),
        set("res", "33"),
        set("colour", "red"),
        Message::Binary(vec![1, 2, 3]),
    ] {
        ws.send(bad).unwrap();
        let e = text(&mut ws);
        assert_eq!(e["type"], "error", "{e}");
        assert!(!e["message"].as_str().unwrap().is_empty());
    }
    // a degenerate camera is reported, not fatal
    ws.send(Message::Text(
        json!({"type": "pose", "id": 5, "position": [0, 0, 0], "forward": [0, 0, 0], "up": [0, 0, 1], "fov": 0.7})
            .to_string(),
    ))
    .unwrap();
    assert_eq!(text(&mut ws)["type"], "error");
    // the connection is still usable
    ws.send(pose(7, 1.0)).unwrap();
    assert_eq!(frame(&mut ws)["pose_id"], 7);
    finish(ws, server);
}

#[test]
fn busy_port_fails_at_startup() {
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port();
    match Server::bind(Config { port, ..config() }) {
        Err(Error::Bind { port: p, .. }) => assert_eq!(p, port),
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("bound a busy port"),
    }
}
