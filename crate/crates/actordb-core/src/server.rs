//! Line-oriented wire protocol over a local TCP socket.
//!
//! Requests are newline-delimited JSON objects; every request line yields
//! exactly one response line `{"ok":true,"data":...}` or
//! `{"ok":false,"error":{"code","message"}}`. A `subscribe` request
//! switches the connection to streaming mode: after the ack, each change
//! notification arrives as its own JSON line. Malformed input produces an
//! error line and keeps the connection open.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::engine::Engine;
use crate::projection::StreamError;
use crate::security::PopToken;

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Request {
    Command {
        envelope: Option<String>,
    },
    Query {
        token: Option<PopToken>,
        sql: String,
    },
    Subscribe {
        token: Option<PopToken>,
        sql: String,
    },
}

pub struct Server {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_handle: Option<JoinHandle<()>>,
}

impl Server {
    /// Bind and start serving. `addr` may use port 0 for an ephemeral port;
    /// the bound address is available via `local_addr`.
    pub fn start(engine: Arc<Engine>, addr: &str) -> std::io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));

        let accept_shutdown = Arc::clone(&shutdown);
        let accept_handle = std::thread::spawn(move || {
            let mut handlers: Vec<JoinHandle<()>> = Vec::new();
            for stream in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                match stream {
                    Ok(conn) => {
                        let engine = Arc::clone(&engine);
                        let shutdown = Arc::clone(&accept_shutdown);
                        handlers.push(std::thread::spawn(move || {
                            let _ = handle_connection(conn, engine, shutdown);
                        }));
                    }
                    Err(_) => break,
                }
            }
            for handler in handlers {
                let _ = handler.join();
            }
        });

        Ok(Server {
            addr: local,
            shutdown,
            accept_handle: Some(accept_handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if self.accept_handle.is_some() {
            self.stop();
        }
    }
}

fn ok_line(data: serde_json::Value) -> String {
    json!({"ok": true, "data": data}).to_string()
}

fn err_line(code: &str, message: &str) -> String {
    json!({"ok": false, "error": {"code": code, "message": message}}).to_string()
}

fn handle_connection(
    conn: TcpStream,
    engine: Arc<Engine>,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<()> {
    conn.set_nodelay(true).ok();
    // Periodic read timeouts keep the handler responsive to shutdown even
    // while a client sits idle.
    conn.set_read_timeout(Some(Duration::from_millis(200)))?;
    let mut writer = conn.try_clone()?;
    let mut reader = BufReader::new(conn);

    let mut line = String::new();
    loop {
        // read_line appends, so a partially received line survives a
        // timeout and completes on the next pass.
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()), // client closed
            Ok(_) if !line.ends_with('\n') => continue,
            Ok(_) => {}
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                if shutdown.load(Ordering::SeqCst) {
                    return Ok(());
                }
                continue;
            }
            Err(e) => return Err(e),
        }
        let request_line = std::mem::take(&mut line);
        let request_line = request_line.trim();
        if request_line.is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(request_line) {
            Ok(req) => req,
            Err(e) => {
                writeln!(writer, "{}", err_line("Malformed", &e.to_string()))?;
                continue;
            }
        };
        match request {
            Request::Command { envelope } => {
                let response = match envelope {
                    None => err_line("NoSignature", "command requests must carry a signed envelope"),
                    Some(wire) => match engine.submit_command_wire(&wire) {
                        Ok(outcome) => ok_line(serde_json::to_value(outcome).expect("serializable")),
                        Err(e) => err_line(e.code(), &e.to_string()),
                    },
                };
                writeln!(writer, "{response}")?;
            }
            Request::Query { token, sql } => {
                let response = handle_query(&engine, token, &sql);
                writeln!(writer, "{response}")?;
            }
            Request::Subscribe { token, sql } => {
                let stream = match authenticate(&engine, token)
                    .and_then(|principal| engine.subscribe(&sql, &principal).map_err(|e| (e.code(), e.to_string())))
                {
                    Ok(stream) => {
                        writeln!(writer, "{}", ok_line(json!({"subscribed": true})))?;
                        stream
                    }
                    Err((code, message)) => {
                        writeln!(writer, "{}", err_line(code, &message))?;
                        continue;
                    }
                };
                // Streaming mode: this connection now only carries
                // notifications.
                loop {
                    if shutdown.load(Ordering::SeqCst) {
                        return Ok(());
                    }
                    match stream.recv_timeout(Duration::from_millis(100)) {
                        Ok(notification) => {
                            let line = serde_json::to_string(&notification).expect("serializable");
                            if writeln!(writer, "{line}").is_err() {
                                return Ok(()); // client went away
                            }
                        }
                        Err(StreamError::Timeout) => continue,
                        Err(StreamError::Overflow) => {
                            let _ = writeln!(
                                writer,
                                "{}",
                                err_line("Overflow", "subscriber too slow; disconnected")
                            );
                            return Ok(());
                        }
                        Err(StreamError::Closed) => return Ok(()),
                    }
                }
            }
        }
    }
}

fn authenticate(
    engine: &Engine,
    token: Option<PopToken>,
) -> Result<crate::security::Principal, (&'static str, String)> {
    let token = token.ok_or(("NoToken", "query requests must carry a PoP token".to_string()))?;
    engine
        .authenticate(&token)
        .map_err(|e| (e.code(), e.to_string()))
}

fn handle_query(engine: &Engine, token: Option<PopToken>, sql: &str) -> String {
    match authenticate(engine, token) {
        Ok(principal) => match engine.query(sql, &principal) {
            Ok(rows) => ok_line(json!({"rows": rows})),
            Err(e) => err_line(e.code(), &e.to_string()),
        },
        Err((code, message)) => err_line(code, &message),
    }
}
