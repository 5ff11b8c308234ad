//! Shell-command execution with a wall-clock limit, bounded output capture,
//! and process-group cleanup.
//!
//! Every child is placed in its own process group so that a timeout (or an
//! output overflow) kills the whole tree, not just the `/bin/sh` wrapper.

use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

/// Quote a string for inclusion in a POSIX shell command line.
pub fn shell_quote(s: &str) -> String {
    if !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"/._-+=:,".contains(&b))
    {
        return s.to_string();
    }
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Where the child's stdout and stderr go.
pub(crate) enum Sink {
    /// Capture into memory; exceeding the cap kills the process group.
    Capture { max_stdout: usize, max_stderr: usize },
    /// Redirect both streams to the given handles.
    Redirect { stdout: Stdio, stderr: Stdio },
}

pub(crate) struct Invocation<'a> {
    pub shell: &'a str,
    pub cwd: &'a Path,
    pub env: Vec<(String, String)>,
    pub stdin: Stdio,
    pub sink: Sink,
    pub timeout: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Exit {
    Code(i32),
    Signal(i32),
    TimedOut,
    OutputOverflow,
}

#[derive(Debug)]
pub(crate) struct Finished {
    pub exit: Exit,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub wall_time: Duration,
}

struct Reader {
    handle: JoinHandle<Vec<u8>>,
}

impl Reader {
    fn spawn<R: Read + Send + 'static>(mut src: R, cap: usize, overflow: Arc<AtomicBool>) -> Self {
        let handle = thread::spawn(move || {
            let mut buf = Vec::new();
            let mut chunk = [0u8; 64 * 1024];
            loop {
                match src.read(&mut chunk) {
                    Ok(0) => break,
                    Ok(n) => {
                        if buf.len() + n > cap {
                            let room = cap - buf.len();
                            buf.extend_from_slice(&chunk[..room]);
                            overflow.store(true, Ordering::SeqCst);
                            break;
                        }
                        buf.extend_from_slice(&chunk[..n]);
                    }
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                    Err(_) => break,
                }
            }
            buf
        });
        Reader { handle }
    }

    fn join(self) -> Vec<u8> {
        self.handle.join().unwrap_or_default()
    }
}

fn kill_group(pgid: i32) {
    // SAFETY: killpg only sends a signal; an ESRCH result for an already
    // empty group is fine to ignore.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

pub(crate) fn run(inv: Invocation<'_>) -> io::Result<Finished> {
    let mut cmd = Command::new("/bin/sh");
    cmd.arg("-c")
        .arg(inv.shell)
        .current_dir(inv.cwd)
        .stdin(inv.stdin)
        .process_group(0);
    for (k, v) in &inv.env {
        cmd.env(k, v);
    }
    let capture = match inv.sink {
        Sink::Capture {
            max_stdout,
            max_stderr,
        } => {
            cmd.stdout(Stdio::piped()).stderr(Stdio::piped());
            Some((max_stdout, max_stderr))
        }
        Sink::Redirect { stdout, stderr } => {
            cmd.stdout(stdout).stderr(stderr);
            None
        }
    };

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as i32;
    let overflow = Arc::new(AtomicBool::new(false));
    let readers = capture.map(|(max_out, max_err)| {
        let out = Reader::spawn(child.stdout.take().unwrap(), max_out, overflow.clone());
        let err = Reader::spawn(child.stderr.take().unwrap(), max_err, overflow.clone());
        (out, err)
    });

    let exit = wait(&mut child, pgid, inv.timeout, start, &overflow);
    // Descendants that outlived the leader would otherwise hold the pipes open.
    kill_group(pgid);
    let wall_time = start.elapsed();
    let (stdout, stderr) = match readers {
        Some((out, err)) => (out.join(), err.join()),
        None => (Vec::new(), Vec::new()),
    };
    let exit = exit?;
    let exit = if overflow.load(Ordering::SeqCst) && exit != Exit::TimedOut {
        Exit::OutputOverflow
    } else {
        exit
    };
    Ok(Finished {
        exit,
        stdout,
        stderr,
        wall_time,
    })
}

fn wait(
    child: &mut Child,
    pgid: i32,
    timeout: Duration,
    start: Instant,
    overflow: &AtomicBool,
) -> io::Result<Exit> {
    let mut pause = Duration::from_micros(200);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(match (status.code(), status.signal()) {
                (Some(code), _) => Exit::Code(code),
                (None, Some(sig)) => Exit::Signal(sig),
                (None, None) => Exit::Code(-1),
            });
        }
        if overflow.load(Ordering::SeqCst) {
            kill_group(pgid);
            child.wait()?;
            return Ok(Exit::OutputOverflow);
        }
        if start.elapsed() >= timeout {
            kill_group(pgid);
            child.wait()?;
            return Ok(Exit::TimedOut);
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(10));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capture(shell: &str, timeout: Duration) -> Finished {
        let dir = tempfile::tempdir().unwrap();
        run(Invocation {
            shell,
            cwd: dir.path(),
            env: vec![],
            stdin: Stdio::null(),
            sink: Sink::Capture {
                max_stdout: 1024,
                max_stderr: 1024,
            },
            timeout,
        })
        .unwrap()
    }

    #[test]
    fn quoting() {
        assert_eq!(shell_quote("/tmp/a.b"), "/tmp/a.b");
        assert_eq!(shell_quote("a b"), "'a b'");
        assert_eq!(shell_quote("it's"), r"'it'\''s'");
        assert_eq!(shell_quote(""), "''");
    }

    #[test]
    fn exit_codes_and_signals() {
        assert_eq!(capture("exit 3", Duration::from_secs(5)).exit, Exit::Code(3));
        assert_eq!(
            capture("kill -9 $$", Duration::from_secs(5)).exit,
            Exit::Signal(9)
        );
    }

    #[test]
    fn overflow_kills() {
        let f = capture("yes", Duration::from_secs(10));
        assert_eq!(f.exit, Exit::OutputOverflow);
        assert_eq!(f.stdout.len(), 1024);
    }

    #[test]
    fn timeout_kills_background_children() {
        let dir = tempfile::tempdir().unwrap();
        let pidfile = dir.path().join("pid");
        let shell = format!("sleep 30 & echo $! > {}; while :; do :; done", pidfile.display());
        let f = capture(&shell, Duration::from_millis(300));
        assert_eq!(f.exit, Exit::TimedOut);
        let pid: i32 = std::fs::read_to_string(&pidfile).unwrap().trim().parse().unwrap();
        // The orphan may linger as a zombie if init does not reap it.
        let running = || {
            std::fs::read_to_string(format!("/proc/{pid}/stat"))
                .ok()
                .and_then(|s| s.rsplit(") ").next().and_then(|r| r.chars().next()))
                .is_some_and(|state| state != 'Z' && state != 'X')
        };
        let t0 = Instant::now();
        while running() && t0.elapsed() < Duration::from_secs(2) {
            std::thread::sleep(Duration::from_millis(20));
        }
        assert!(!running(), "background child {pid} survived");
    }
}
