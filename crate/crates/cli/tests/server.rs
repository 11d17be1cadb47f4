use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use peerlingo_cli::{serve, Options};
use peerlingo_core::gateway::{Hub, MemJournal};
use peerlingo_core::simharness::default_catalog;
use peerlingo_core::{Config, Platform};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;

const WAIT: Duration = Duration::from_secs(5);

async fn start() -> (String, oneshot::Sender<()>, tokio::task::JoinHandle<Hub<MemJournal>>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let hub = Hub::new(Platform::new(Config::default(), default_catalog()), MemJournal::default(), 0);
    let opts = Options {
        tick_every: Duration::from_millis(50),
        auth_timeout: Duration::from_millis(300),
    };
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(serve(listener, hub, opts, async {
        let _ = stopped.await;
    }));
    (addr, stop, task)
}

fn envelope(kind: &str, seq: u64, payload: Value) -> String {
    json!({"type": kind, "seq": seq, "payload": payload}).to_string()
}

struct LineClient {
    lines: tokio::io::Lines<BufReader<tokio::net::tcp::OwnedReadHalf>>,
    write: tokio::net::tcp::OwnedWriteHalf,
}

impl LineClient {
    async fn connect(addr: &str) -> Self {
        let (r, w) = TcpStream::connect(addr).await.unwrap().into_split();
        LineClient { lines: BufReader::new(r).lines(), write: w }
    }

    async fn send(&mut self, line: &str) {
        self.write.write_all(format!("{line}\n").as_bytes()).await.unwrap();
    }

    /// Next frame answering `seq`, skipping pushes.
    async fn reply_to(&mut self, seq: u64) -> Value {
        loop {
            let line = tokio::time::timeout(WAIT, self.lines.next_line()).await.unwrap().unwrap().unwrap();
            let v: Value = serde_json::from_str(&line).unwrap();
            if v["in_reply_to"] == seq {
                return v;
            }
        }
    }
}

#[tokio::test(flavor = "current_thread")]
async fn line_clients_register_and_query() {
    let (addr, stop, task) = start().await;
    let mut c = LineClient::connect(&addr).await;
    c.send(&envelope("register", 1, json!({"user_id": "tom", "secret": "pw", "native_language": "en"}))).await;
    assert_eq!(c.reply_to(1).await["type"], "register");
    c.send(&envelope("balance", 2, json!({}))).await;
    let r = c.reply_to(2).await;
    assert_eq!(r["type"], "balance");
    assert_eq!(r["payload"]["balance_s"], Config::default().signup_grant_s);

    // the clock is driven by the server
    tokio::time::sleep(Duration::from_millis(200)).await;
    stop.send(()).unwrap();
    let hub = task.await.unwrap();
    assert!(hub.platform().now() > 0);
    assert!(hub.journal().records.len() >= 2);
}

#[tokio::test(flavor = "current_thread")]
async fn websocket_clients_share_the_same_hub() {
    let (addr, stop, task) = start().await;
    let mut line = LineClient::connect(&addr).await;
    line.send(&envelope("register", 1, json!({"user_id": "tom", "secret": "pw", "native_language": "en"}))).await;
    line.reply_to(1).await;

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/")).await.unwrap();
    ws.send(Message::text(envelope("auth", 1, json!({"user_id": "tom", "token": "pw"})))).await.unwrap();
    let reply = loop {
        let msg = tokio::time::timeout(WAIT, ws.next()).await.unwrap().unwrap().unwrap();
        let v: Value = serde_json::from_str(msg.to_text().unwrap()).unwrap();
        if v["in_reply_to"] == 1 {
            break v;
        }
    };
    assert_eq!(reply["type"], "auth");
    assert_eq!(reply["payload"]["user_id"], "tom");
    stop.send(()).unwrap();
    task.await.unwrap();
}

#[tokio::test(flavor = "current_thread")]
async fn silent_connections_are_closed_after_the_auth_timeout() {
    let (addr, stop, task) = start().await;
    let mut c = LineClient::connect(&addr).await;
    let end = tokio::time::timeout(WAIT, async {
        while let Ok(Some(_)) = c.lines.next_line().await {}
    })
    .await;
    assert!(end.is_ok(), "connection stayed open");
    stop.send(()).unwrap();
    task.await.unwrap();
}

#[tokio::test(flavor = "current_thread")]
async fn malformed_line_closes_only_that_connection() {
    let (addr, stop, task) = start().await;
    let mut bad = LineClient::connect(&addr).await;
    let mut good = LineClient::connect(&addr).await;
    good.send(&envelope("register", 1, json!({"user_id": "ana", "secret": "pw", "native_language": "es"}))).await;
    good.reply_to(1).await;
    bad.send("{not json").await;
    let first = tokio::time::timeout(WAIT, bad.lines.next_line()).await.unwrap().unwrap().unwrap();
    let v: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["payload"]["code"], "protocol_error");
    assert!(tokio::time::timeout(WAIT, bad.lines.next_line()).await.unwrap().unwrap().is_none());
    good.send(&envelope("balance", 2, json!({}))).await;
    assert_eq!(good.reply_to(2).await["type"], "balance");
    stop.send(()).unwrap();
    task.await.unwrap();
}
