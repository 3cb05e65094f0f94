//! JSON reading with line, column and field-path diagnostics.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parse `text`; `path` only labels diagnostics.
pub fn from_str<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let location = if field.is_empty() || field == "." {
            format!("line {} column {}", inner.line(), inner.column())
        } else {
            format!("line {} column {} (field `{field}`)", inner.line(), inner.column())
        };
        Error::format(path, location, inner)
    })?;
    de.end().map_err(|e| Error::format(path, format!("line {} column {}", e.line(), e.column()), e))?;
    Ok(value)
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(path, &text)
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    s.push('\n');
    s
}

/// Write pretty JSON, creating parent directories.
pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_string(value))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Inner {
        x: f64,
    }

    #[derive(Debug, serde::Deserialize)]
    #[allow(dead_code)]
    struct Outer {
        items: Vec<Inner>,
    }

    fn err(text: &str) -> String {
        from_str::<Outer>(Path::new("f.json"), text).unwrap_err().to_string()
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let e = err("{\n  \"items\": [\n    {\"x\": 1},\n    {\"x\": \"no\"}\n  ]\n}");
        assert!(e.contains("line 4") && e.contains("items[1].x"), "{e}");
        let e = err("{\"items\": [{\"x\": 1, \"y\": 2}]}");
        assert!(e.contains("unknown field `y`"), "{e}");
        let e = err("{\"items\": [] } trailing");
        assert!(e.starts_with("f.json: line 1"), "{e}");
        assert!(err("").contains("line 1"));
    }
}
