//! Deterministic run outputs: prefix-scoped files written atomically
//! (temp-then-rename), full round-trip float formatting, LF line endings.

use std::fs;
use std::io;
use std::path::PathBuf;

/// Formats a float with 17 significant digits so CSV bodies are
/// byte-stable and round-trip exactly.
pub fn fmt(value: f64) -> String {
    format!("{value:.16e}")
}

/// All files of one run, written under a common path prefix. On failure the
/// caller discards the set, removing everything written so far.
pub struct OutputSet {
    prefix: String,
    written: Vec<PathBuf>,
}

impl OutputSet {
    /// Prepares the prefix, creating its parent directory when it has one.
    pub fn new(prefix: &str) -> io::Result<Self> {
        let probe = PathBuf::from(format!("{prefix}probe"));
        if let Some(parent) = probe.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        Ok(Self {
            prefix: prefix.to_string(),
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        PathBuf::from(format!("{}{name}", self.prefix))
    }

    /// Writes one file atomically: the body lands in a sibling temp file
    /// that is renamed over the final path.
    pub fn write(&mut self, name: &str, body: &str) -> io::Result<String> {
        let target = self.path(name);
        let tmp = PathBuf::from(format!("{}.tmp{}", target.display(), std::process::id()));
        fs::write(&tmp, body)?;
        if let Err(e) = fs::rename(&tmp, &target) {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        self.written.push(target.clone());
        Ok(target.display().to_string())
    }

    /// Serializes and writes a JSON document.
    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> io::Result<String> {
        let mut body = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        body.push('\n');
        self.write(name, &body)
    }

    /// File names written so far, relative to the prefix.
    pub fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .map(|p| p.display().to_string())
            .collect()
    }

    /// Best-effort removal of everything written (failure cleanup).
    pub fn discard(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

/// Incremental CSV body builder with LF line endings.
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut body = String::new();
        body.push_str(header);
        body.push('\n');
        Self { body }
    }

    /// Prepends `#`-comment lines before the header (call before rows).
    pub fn with_comments(comments: &[&str], header: &str) -> Self {
        let mut body = String::new();
        for line in comments {
            body.push_str("# ");
            body.push_str(line);
            body.push('\n');
        }
        body.push_str(header);
        body.push('\n');
        Self { body }
    }

    /// Appends one row of pre-rendered cells.
    pub fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        self.body
    }
}
