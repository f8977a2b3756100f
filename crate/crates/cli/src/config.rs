//! `--config FILE.json` support: keys in the file replace the matching flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// Overlays the JSON object in `path` onto `args`. Unknown keys are usage errors.
pub fn apply<T: Serialize + DeserializeOwned>(args: T, path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let overrides: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: invalid JSON: {e}", path.display())))?;
    let Value::Object(overrides) = overrides else {
        return Err(Failure::usage(format!("{}: expected a JSON object", path.display())));
    };
    let mut merged = serde_json::to_value(args).expect("arguments serialize");
    let fields = merged.as_object_mut().expect("arguments are a struct");
    for (key, value) in overrides {
        let slot = fields
            .get_mut(&key)
            .ok_or_else(|| Failure::usage(format!("{}: unknown config key `{key}`", path.display())))?;
        *slot = value;
    }
    serde_json::from_value(merged).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Args {
        hidden: usize,
        lr: f64,
        name: Option<String>,
    }

    fn args() -> Args {
        Args {
            hidden: 10,
            lr: 0.1,
            name: None,
        }
    }

    #[test]
    fn file_keys_override_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"hidden": 30, "name": "x"}"#).unwrap();
        let got = apply(args(), Some(&path)).unwrap();
        assert_eq!(
            got,
            Args {
                hidden: 30,
                lr: 0.1,
                name: Some("x".into())
            }
        );
        assert_eq!(apply(args(), None).unwrap(), args());
    }

    #[test]
    fn unknown_keys_and_bad_types_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"hiden": 30}"#).unwrap();
        let e = apply(args(), Some(&path)).unwrap_err();
        assert!(e.message.contains("hiden"));
        std::fs::write(&path, r#"{"hidden": "many"}"#).unwrap();
        assert_eq!(apply(args(), Some(&path)).unwrap_err().category, mtcrbm::ErrorCategory::Usage);
    }
}
