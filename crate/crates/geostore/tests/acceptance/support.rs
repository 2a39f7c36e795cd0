use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

/// A `geostore-server` child process listening on a free port.
pub struct ServerProcess {
    child: Child,
    pub url: String,
}

impl ServerProcess {
    pub fn start(data: &Path, env: &[(&str, &str)]) -> Result<ServerProcess, String> {
        let log = File::options()
            .create(true)
            .append(true)
            .open(data.with_extension("log"))
            .map_err(|e| e.to_string())?;
        let mut child = Command::new(env!("CARGO_BIN_EXE_geostore-server"))
            .env_clear()
            .env("GEOSTORE_SERVER_PORT", "0")
            .env("GEOSTORE_STORE_PATH", data)
            .env("RUST_LOG", "warn")
            .envs(env.iter().copied())
            .stdout(Stdio::piped())
            .stderr(log)
            .spawn()
            .map_err(|e| format!("cannot start server: {e}"))?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| e.to_string())?;
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .ok_or_else(|| format!("unexpected server output {line:?}"))?
            .to_owned();
        Ok(ServerProcess { child, url })
    }

    /// SIGKILL, no chance to clean up.
    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

/// Runs the `geostore` client binary.
pub fn cli(url: &str, args: &[&str]) -> CliOutput {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_geostore"))
        .arg("--url")
        .arg(url)
        .args(args)
        .output()
        .expect("client binary runs");
    CliOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        elapsed: start.elapsed(),
    }
}

impl CliOutput {
    pub fn ok(self, what: &str) -> Result<CliOutput, String> {
        if self.code == 0 {
            Ok(self)
        } else {
            Err(format!("{what} exited with {}: {}", self.code, self.stderr.trim()))
        }
    }
}

pub fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Drops whitespace that sits between two tags.
pub fn normalize_xml(doc: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(doc.len());
    let mut i = 0;
    while i < doc.len() {
        let b = doc[i];
        if b.is_ascii_whitespace() && out.last() == Some(&b'>') {
            let mut j = i;
            while j < doc.len() && doc[j].is_ascii_whitespace() {
                j += 1;
            }
            if j == doc.len() || doc[j] == b'<' {
                i = j;
                continue;
            }
        }
        out.push(b);
        i += 1;
    }
    out
}

/// Byte ranges of the root element's child elements.
pub fn xml_member_slices(doc: &str) -> Result<Vec<&str>, String> {
    let tree = roxmltree::Document::parse_with_options(
        doc,
        roxmltree::ParsingOptions {
            allow_dtd: false,
            nodes_limit: u32::MAX,
        },
    )
    .map_err(|e| format!("not well-formed: {e}"))?;
    Ok(tree
        .root_element()
        .children()
        .filter(|n| n.is_element())
        .map(|n| &doc[n.range()])
        .collect())
}

/// An upload still in progress.
pub struct Upload {
    pub status: u16,
    pub location: String,
    writer: std::thread::JoinHandle<()>,
}

impl Upload {
    pub fn join(self) {
        let _ = self.writer.join();
    }
}

/// POSTs `body` with chunked transfer encoding and returns as soon as the
/// response head arrives, while the body is still being sent. The blocking
/// HTTP client only reads the response after the whole request body.
pub fn post_streaming(base: &str, path: &str, mut body: impl std::io::Read + Send + 'static) -> Result<Upload, String> {
    use std::io::Write;
    use std::net::TcpStream;

    let addr = base.strip_prefix("http://").unwrap_or(base);
    let mut stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    write!(
        stream,
        "POST {path} HTTP/1.1\r\nHost: {addr}\r\nTransfer-Encoding: chunked\r\nConnection: close\r\n\r\n"
    )
    .map_err(|e| e.to_string())?;
    let mut out = stream.try_clone().map_err(|e| e.to_string())?;
    let writer = std::thread::spawn(move || {
        let mut buf = vec![0; 64 * 1024];
        let mut send = || -> std::io::Result<()> {
            loop {
                let n = body.read(&mut buf)?;
                write!(out, "{n:x}\r\n")?;
                if n == 0 {
                    out.write_all(b"\r\n")?;
                    return Ok(());
                }
                out.write_all(&buf[..n])?;
                out.write_all(b"\r\n")?;
            }
        };
        // the server may go away mid-upload
        let _ = send();
    });
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| e.to_string())?;
    let status = line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad status line {line:?}"))?;
    let mut location = String::new();
    loop {
        line.clear();
        reader.read_line(&mut line).map_err(|e| e.to_string())?;
        let header = line.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("location") {
                location = value.trim().to_owned();
            }
        }
    }
    Ok(Upload { status, location, writer })
}
