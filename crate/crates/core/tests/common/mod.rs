#![allow(dead_code)]

pub mod oracle;

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

pub fn pmgv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmgv"))
}

pub fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

pub fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

/// A running `netrun --role bob` on an ephemeral port.
pub struct BobProcess {
    pub child: Child,
    pub addr: String,
    stderr: thread::JoinHandle<String>,
}

impl BobProcess {
    pub fn spawn(config: &Path, out: &Path, extra: &[&str]) -> BobProcess {
        let mut child = pmgv()
            .args(["netrun", "--role", "bob", "--listen", "127.0.0.1:0", "--config"])
            .arg(config)
            .arg("--out")
            .arg(out)
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut reader = BufReader::new(child.stderr.take().unwrap());
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected bob stderr: {line:?}"))
            .to_string();
        let stderr = thread::spawn(move || {
            let mut rest = String::new();
            for l in reader.lines().map_while(|l| l.ok()) {
                rest.push_str(&l);
                rest.push('\n');
            }
            rest
        });
        BobProcess { child, addr, stderr }
    }

    /// Waits with a deadline, killing the process if it overruns.
    pub fn finish(mut self, deadline: Duration) -> (Option<i32>, String) {
        let code = wait_with_deadline(&mut self.child, deadline);
        (code, self.stderr.join().unwrap())
    }
}

pub fn spawn_alice(config: &Path, addr: &str, out: &Path, extra: &[&str]) -> Child {
    pmgv()
        .args(["netrun", "--role", "alice", "--connect", addr, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap()
}

pub fn wait_with_deadline(child: &mut Child, deadline: Duration) -> Option<i32> {
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait().unwrap() {
            return status.code();
        }
        if start.elapsed() > deadline {
            let _ = child.kill();
            let _ = child.wait();
            return None;
        }
        thread::sleep(Duration::from_millis(10));
    }
}

pub struct NetrunPair {
    pub alice: Output,
    pub bob_code: Option<i32>,
    pub bob_stderr: String,
}

/// Runs Bob and Alice as two processes against the same config.
pub fn netrun_pair(
    config: &Path,
    out: &Path,
    alice_extra: &[&str],
    bob_extra: &[&str],
) -> NetrunPair {
    let bob = BobProcess::spawn(config, out, bob_extra);
    let alice = spawn_alice(config, &bob.addr, out, alice_extra)
        .wait_with_output()
        .unwrap();
    let (bob_code, bob_stderr) = bob.finish(Duration::from_secs(60));
    NetrunPair {
        alice,
        bob_code,
        bob_stderr,
    }
}
