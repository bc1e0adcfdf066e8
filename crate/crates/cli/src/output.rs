use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{self, ExperimentConfig};
use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "PDEATTN_OUT_DIR";

/// A run's output directory, created up front, plus its start time.
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    started: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Flag, then config, then `$PDEATTN_OUT_DIR/<command>`, then
/// `runs/<command>`.
pub fn resolve_dir(flag: Option<&Path>, cfg: &ExperimentConfig, command: &str) -> PathBuf {
    if let Some(p) = flag.or(cfg.out_dir.as_deref()) {
        return p.to_path_buf();
    }
    let base = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    base.join(command)
}

impl RunDir {
    /// Refuses a non-empty directory unless `force` is set, then writes the
    /// resolved config.
    pub fn create(path: PathBuf, force: bool, command: &str, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        if path.exists() {
            let non_empty = path.read_dir()?.next().is_some();
            if non_empty && !force {
                return Err(CliError::Config(format!(
                    "{} already holds outputs; pass --force to overwrite",
                    path.display()
                )));
            }
        }
        std::fs::create_dir_all(&path)?;
        std::fs::write(path.join("config.toml"), config::to_toml(cfg)?)?;
        Ok(RunDir {
            path,
            command: command.to_string(),
            started: unix_now(),
        })
    }

    pub fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.path.join(name))?))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Timestamps live here and only here, so every other output is
    /// reproducible byte for byte.
    pub fn finish(&self, status: &str) -> Result<(), CliError> {
        let finished = unix_now();
        self.write_json(
            "metadata.json",
            &serde_json::json!({
                "command": self.command,
                "args": std::env::args().collect::<Vec<_>>(),
                "version": env!("CARGO_PKG_VERSION"),
                "started_unix": self.started,
                "finished_unix": finished,
                "elapsed_seconds": finished - self.started,
                "status": status,
            }),
        )
    }
}

/// Order-preserving map over a fixed pool of `jobs` scoped threads.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().expect("worker panicked") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("worker panicked").expect("every slot filled"))
        .collect()
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
