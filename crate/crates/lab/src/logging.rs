//! Logger that writes to stderr and, once a run directory exists, to its log file.
//!
//! Colors are used on stderr unless disabled or `NO_COLOR` is set; the file
//! copy is always plain.

use std::fs::File;
use std::io::Write;
use std::sync::{Mutex, OnceLock};

use log::{Level, LevelFilter, Log, Metadata, Record};

struct TeeLogger {
    color: bool,
    file: Mutex<Option<File>>,
}

static LOGGER: OnceLock<TeeLogger> = OnceLock::new();

pub fn color_disabled_by_env() -> bool {
    std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty())
}

fn paint(level: Level) -> &'static str {
    match level {
        Level::Error => "\x1b[31m",
        Level::Warn => "\x1b[33m",
        Level::Info => "\x1b[32m",
        Level::Debug => "\x1b[36m",
        Level::Trace => "\x1b[35m",
    }
}

impl Log for TeeLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= log::max_level()
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let ts = chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ");
        let level = record.level();
        let msg = record.args();
        if self.color {
            eprintln!("{ts} {}{level:<5}\x1b[0m {msg}", paint(level));
        } else {
            eprintln!("{ts} {level:<5} {msg}");
        }
        if let Ok(mut guard) = self.file.lock() {
            if let Some(f) = guard.as_mut() {
                let _ = writeln!(f, "{ts} {level:<5} {}: {msg}", record.target());
            }
        }
    }

    fn flush(&self) {
        if let Ok(mut guard) = self.file.lock() {
            if let Some(f) = guard.as_mut() {
                let _ = f.flush();
            }
        }
    }
}

/// Installs the process logger; later calls only adjust the level.
pub fn init(level: LevelFilter, color: bool) {
    let logger = LOGGER.get_or_init(|| TeeLogger { color: color && !color_disabled_by_env(), file: Mutex::new(None) });
    let _ = log::set_logger(logger);
    log::set_max_level(level);
}

/// Mirrors subsequent records into `file`.
pub fn attach_file(file: File) {
    if let Some(logger) = LOGGER.get() {
        if let Ok(mut guard) = logger.file.lock() {
            *guard = Some(file);
        }
    }
}
