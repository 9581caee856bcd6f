//! Service configuration file.
//!
//! ```toml
//! bind = "127.0.0.1"        # default
//! port = 8080               # default; 0 picks a free port
//! data_dir = "data"         # journal lives here
//! hierarchy = "hierarchy.json"  # omitted: the built-in fixture
//! image_root = "images"     # omitted: /images is disabled
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub data_dir: PathBuf,
    #[serde(default)]
    pub hierarchy: Option<PathBuf>,
    #[serde(default)]
    pub image_root: Option<PathBuf>,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            bind: default_bind(),
            port: default_port(),
            data_dir: data_dir.into(),
            hierarchy: None,
            image_root: None,
        }
    }

    pub fn from_toml(source: &str, base: &Path) -> Result<Self, StoreError> {
        let mut cfg: ServiceConfig =
            toml::from_str(source).map_err(|e| StoreError::Invalid(format!("config: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data_dir);
        cfg.hierarchy.as_mut().map(resolve);
        cfg.image_root.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn address(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_file() {
        let cfg = ServiceConfig::from_toml(
            "port = 9000\ndata_dir = \"data\"\nimage_root = \"/srv/img\"\n",
            Path::new("/etc/diff"),
        )
        .unwrap();
        assert_eq!(cfg.data_dir, Path::new("/etc/diff/data"));
        assert_eq!(cfg.image_root.as_deref(), Some(Path::new("/srv/img")));
        assert_eq!(cfg.address(), "127.0.0.1:9000");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ServiceConfig::from_toml("data_dir = \"d\"\nprot = 1\n", Path::new(".")).is_err());
    }
}
