//! Network front end for the hub: one task owns the [`Hub`], every socket
//! task talks to it through a channel.
//!
//! A connection is either raw TCP carrying one envelope per line, or a
//! WebSocket carrying one envelope per text message. The two are told apart
//! by the first bytes on the wire.

use std::collections::HashMap;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures_util::{SinkExt, StreamExt};
use log::{debug, error, info, warn};
use peerlingo_core::gateway::{ConnId, Hub, Journal, Outbound};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio_tungstenite::tungstenite::Message;

/// Longest accepted line on a raw TCP connection.
pub const MAX_LINE: usize = 1 << 20;

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub tick_every: Duration,
    /// A connection that has not authenticated by then is closed.
    pub auth_timeout: Duration,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tick_every: Duration::from_secs(1),
            auth_timeout: Duration::from_secs(10),
        }
    }
}

enum ToHub {
    Open(mpsc::UnboundedSender<Frame>, oneshot::Sender<ConnId>),
    Line(ConnId, String),
    Closed(ConnId),
    AuthDeadline(ConnId),
    Tick,
}

#[derive(Debug)]
enum Frame {
    Line(String),
    Close,
}

fn wall_clock() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64)
}

struct HubTask<J: Journal> {
    hub: Hub<J>,
    conns: HashMap<ConnId, mpsc::UnboundedSender<Frame>>,
    halted_logged: bool,
}

impl<J: Journal> HubTask<J> {
    fn route(&mut self, out: Vec<Outbound>) {
        for o in out {
            let Some(tx) = self.conns.get(&o.conn) else { continue };
            let _ = tx.send(Frame::Line(o.line));
            if o.close {
                let _ = tx.send(Frame::Close);
                self.conns.remove(&o.conn);
                let more = self.hub.disconnect(o.conn);
                self.route(more);
            }
        }
        if self.hub.is_halted() && !self.halted_logged {
            self.halted_logged = true;
            error!("journal write failed; no further commands will be accepted");
        }
    }

    fn handle(&mut self, msg: ToHub, auth_timeout: Duration, to_hub: &mpsc::UnboundedSender<ToHub>) {
        match msg {
            ToHub::Open(tx, reply) => {
                let conn = self.hub.connect();
                self.conns.insert(conn, tx);
                let _ = reply.send(conn);
                let to_hub = to_hub.clone();
                tokio::spawn(async move {
                    tokio::time::sleep(auth_timeout).await;
                    let _ = to_hub.send(ToHub::AuthDeadline(conn));
                });
                debug!("conn {conn} opened");
            }
            ToHub::Line(conn, line) => {
                if self.conns.contains_key(&conn) {
                    let out = self.hub.handle_line(conn, &line);
                    self.route(out);
                }
            }
            ToHub::Closed(conn) => {
                self.conns.remove(&conn);
                let out = self.hub.disconnect(conn);
                self.route(out);
                debug!("conn {conn} closed");
            }
            ToHub::AuthDeadline(conn) => {
                if self.conns.contains_key(&conn) && !self.hub.is_authenticated(conn) {
                    info!("conn {conn} did not authenticate in time");
                    if let Some(tx) = self.conns.remove(&conn) {
                        let _ = tx.send(Frame::Close);
                    }
                    let out = self.hub.disconnect(conn);
                    self.route(out);
                }
            }
            ToHub::Tick => {
                if self.hub.is_halted() {
                    return;
                }
                let at = (self.hub.platform().now() + 1).max(wall_clock());
                match self.hub.tick(at) {
                    Ok(out) => self.route(out),
                    Err(e) => warn!("tick at {at} failed: {e}"),
                }
            }
        }
    }
}

/// Serves `listener` until `shutdown` resolves, then hands the hub back.
pub async fn serve<J, F>(listener: TcpListener, hub: Hub<J>, opts: Options, shutdown: F) -> Hub<J>
where
    J: Journal + Send + 'static,
    F: std::future::Future<Output = ()>,
{
    let (to_hub, mut inbox) = mpsc::unbounded_channel::<ToHub>();
    let mut task = HubTask {
        hub,
        conns: HashMap::new(),
        halted_logged: false,
    };
    let mut ticker = tokio::time::interval(opts.tick_every);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    ticker.tick().await;
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    debug!("accepted {peer}");
                    tokio::spawn(connection(stream, to_hub.clone()));
                }
                Err(e) => warn!("accept failed: {e}"),
            },
            _ = ticker.tick() => task.handle(ToHub::Tick, opts.auth_timeout, &to_hub),
            Some(msg) = inbox.recv() => task.handle(msg, opts.auth_timeout, &to_hub),
        }
    }
    for tx in task.conns.values() {
        let _ = tx.send(Frame::Close);
    }
    task.hub
}

async fn connection(stream: TcpStream, to_hub: mpsc::UnboundedSender<ToHub>) {
    let (tx, mut rx) = mpsc::unbounded_channel();
    let (reply, conn) = oneshot::channel();
    if to_hub.send(ToHub::Open(tx, reply)).is_err() {
        return;
    }
    let Ok(conn) = conn.await else { return };
    // the auth deadline is already running, so a silent peer is closed
    // while we wait for its first bytes
    let mut head = [0u8; 4];
    let websocket = tokio::select! {
        n = stream.peek(&mut head) => matches!(n, Ok(4)) && &head == b"GET ",
        _ = rx.recv() => {
            let _ = to_hub.send(ToHub::Closed(conn));
            return;
        }
    };
    let result = if websocket {
        websocket_loop(stream, conn, &to_hub, rx).await.map_err(|e| e.to_string())
    } else {
        line_loop(stream, conn, &to_hub, rx).await.map_err(|e| e.to_string())
    };
    if let Err(e) = result {
        debug!("conn {conn}: {e}");
    }
    let _ = to_hub.send(ToHub::Closed(conn));
}

async fn line_loop(
    stream: TcpStream,
    conn: ConnId,
    to_hub: &mpsc::UnboundedSender<ToHub>,
    mut rx: mpsc::UnboundedReceiver<Frame>,
) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let inbound = to_hub.clone();
    let mut reader = tokio::spawn(async move {
        let mut lines = BufReader::new(read);
        let mut buf = String::new();
        loop {
            buf.clear();
            if lines.read_line(&mut buf).await? == 0 {
                return Ok(());
            }
            if buf.len() > MAX_LINE {
                return Err(std::io::Error::other("line too long"));
            }
            let line = buf.trim_end_matches(['\r', '\n']);
            if !line.is_empty() && inbound.send(ToHub::Line(conn, line.to_owned())).is_err() {
                return Ok(());
            }
        }
    });
    let result = loop {
        tokio::select! {
            done = &mut reader => break done.unwrap_or_else(|e| Err(std::io::Error::other(e))),
            frame = rx.recv() => match frame {
                Some(Frame::Line(l)) => {
                    write.write_all(l.as_bytes()).await?;
                    write.write_all(b"\n").await?;
                }
                Some(Frame::Close) | None => {
                    let _ = write.shutdown().await;
                    break Ok(());
                }
            },
        }
    };
    reader.abort();
    result
}

async fn websocket_loop(
    stream: TcpStream,
    conn: ConnId,
    to_hub: &mpsc::UnboundedSender<ToHub>,
    mut rx: mpsc::UnboundedReceiver<Frame>,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    loop {
        tokio::select! {
            msg = source.next() => match msg {
                Some(Ok(Message::Text(t))) => {
                    if to_hub.send(ToHub::Line(conn, t.as_str().to_owned())).is_err() {
                        return Ok(());
                    }
                }
                Some(Ok(Message::Close(_))) | None => return Ok(()),
                Some(Ok(_)) => {}
                Some(Err(e)) => return Err(e),
            },
            frame = rx.recv() => match frame {
                Some(Frame::Line(l)) => sink.send(Message::text(l)).await?,
                Some(Frame::Close) | None => {
                    let _ = sink.close().await;
                    return Ok(());
                }
            },
        }
    }
}
