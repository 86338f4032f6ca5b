#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::time::Duration;

pub const BIN: &str = env!("CARGO_BIN_EXE_glyphforge");
pub const CRASH_ENV: &str = "GLYPHFORGE_CRASH_BEFORE_RENAME";

/// A `glyphforge serve` child process on an ephemeral port.
pub struct Server {
    child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(manifest: &Path, crash_before_rename: bool) -> Server {
        let mut cmd = Command::new(BIN);
        cmd.args(["serve", "--port", "0", "--manifest"]).arg(manifest);
        cmd.stdout(Stdio::piped()).stderr(Stdio::null());
        if crash_before_rename {
            cmd.env(CRASH_ENV, "1");
        } else {
            cmd.env_remove(CRASH_ENV);
        }
        let mut child = cmd.spawn().expect("spawn glyphforge serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).expect("read listen line");
        let addr = line.trim().rsplit("http://").next().unwrap_or_default().to_string();
        assert!(!addr.is_empty(), "server did not report an address: {line:?}");
        Server { child, addr }
    }

    /// Waits for the process to exit on its own.
    pub fn wait(mut self) -> ExitStatus {
        let status = self.child.wait().expect("wait for server");
        std::mem::forget(self);
        status
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Minimal HTTP/1.1 exchange over one connection; returns status and body.
pub fn request(addr: &str, method: &str, path: &str, body: Option<&str>) -> std::io::Result<(u16, String)> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(20)))?;
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw)?;
    let text = String::from_utf8_lossy(&raw).into_owned();
    let (head, rest) = text
        .split_once("\r\n\r\n")
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "incomplete response"))?;
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad status line"))?;
    let chunked = head.to_ascii_lowercase().contains("transfer-encoding: chunked");
    Ok((status, if chunked { dechunk(rest) } else { rest.to_string() }))
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    while let Some((size, rest)) = s.split_once("\r\n") {
        let n = usize::from_str_radix(size.trim(), 16).unwrap_or(0);
        if n == 0 {
            break;
        }
        out.push_str(&rest[..n]);
        s = rest[n..].trim_start_matches("\r\n");
    }
    out
}

pub fn get_json(addr: &str, path: &str) -> (u16, serde_json::Value) {
    let (status, body) = request(addr, "GET", path, None).expect("GET");
    (status, serde_json::from_str(&body).unwrap_or(serde_json::Value::Null))
}

pub fn annotation_body(character: &str, index: &str, editor: &str, version: &str) -> String {
    serde_json::json!({ "character": character, "index": index, "editor": editor, "version": version }).to_string()
}
