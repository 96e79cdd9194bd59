use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = write(&tmp).and_then(|()| {
        fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
    });
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |tmp| Ok(fs::write(tmp, bytes)?))
}

/// Rounds to 9 significant digits; non-finite values become `null`.
pub fn sig9(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

/// Ordered key-value summary serialized as pretty JSON.
#[derive(Default)]
pub struct Summary(Map<String, Value>);

impl Summary {
    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.0.insert(key.into(), sig9(v));
        self
    }

    pub fn opt(&mut self, key: &str, v: Option<f64>) -> &mut Self {
        self.0.insert(key.into(), v.map_or(Value::Null, sig9));
        self
    }

    pub fn int(&mut self, key: &str, v: u64) -> &mut Self {
        self.0.insert(key.into(), Value::from(v));
        self
    }

    pub fn text(&mut self, key: &str, v: &str) -> &mut Self {
        self.0.insert(key.into(), Value::from(v));
        self
    }

    pub fn value(&mut self, key: &str, v: Value) -> &mut Self {
        self.0.insert(key.into(), v);
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Value::Object(self.0.clone()))
            .expect("summary serializes");
        s.push('\n');
        s
    }
}
