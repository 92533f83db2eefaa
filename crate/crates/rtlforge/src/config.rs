//! Operator configuration: TOML file with environment-variable
//! interpolation, searched as flag path → ./rtlforge.conf → user config dir.

use crate::feedback::{default_rules, CategoryRule, ErrorCategory};
use crate::prompting::{TokenBudget, BUDGET_MAX_TOTAL, BUDGET_MIN_TOTAL};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_FILE_NAME: &str = "rtlforge.conf";

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub backend_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key; the key itself
    /// never lives in the config file.
    pub api_key_env: String,
    pub budget_total: u32,
    pub workers: usize,
    pub sandbox_root: PathBuf,
    /// Fallback command templates for tasks whose harness omits one.
    pub syntax_cmd: String,
    pub test_cmd: String,
    pub category_rules: Vec<CategoryRule>,
    pub request_timeout_s: u64,
    pub example_dir: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            backend_url: "http://localhost:8000/v1/chat/completions".into(),
            model_name: "local-slm".into(),
            api_key_env: "RTLFORGE_API_KEY".into(),
            budget_total: 8192,
            workers: 1,
            sandbox_root: PathBuf::from("rtlforge-runs"),
            syntax_cmd: String::new(),
            test_cmd: String::new(),
            category_rules: default_rules(),
            request_timeout_s: 120,
            example_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("malformed config {0}: {1}")]
    Malformed(PathBuf, toml::de::Error),
    #[error("config {0}: budget_total {1} outside [{BUDGET_MIN_TOTAL}, {BUDGET_MAX_TOTAL}]")]
    BudgetOutOfRange(PathBuf, u32),
    #[error("config {0}: unknown error category {1:?}")]
    UnknownCategory(PathBuf, String),
    #[error("config {0}: tool_templates.{1} must contain {{candidate}} exactly once")]
    BadTemplate(PathBuf, &'static str),
}

#[derive(Debug, Deserialize, Default)]
struct RawConfig {
    backend_url: Option<String>,
    model_name: Option<String>,
    api_key_env: Option<String>,
    budget_total: Option<u32>,
    workers: Option<usize>,
    sandbox_root: Option<String>,
    request_timeout_s: Option<u64>,
    example_dir: Option<String>,
    #[serde(default)]
    tool_templates: RawToolTemplates,
    /// Ordered override of the category rule table: `[[category_rules]]`
    /// entries with `category` and `patterns`.
    #[serde(default)]
    category_rules: Vec<RawRule>,
}

#[derive(Debug, Deserialize, Default)]
struct RawToolTemplates {
    syntax_cmd: Option<String>,
    test_cmd: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawRule {
    category: String,
    patterns: Vec<String>,
}

/// Replaces `${VAR}` with the environment value, empty when unset.
fn interpolate_env(text: &str) -> String {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = RE
        .get_or_init(|| regex::Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"));
    re.replace_all(text, |caps: &regex::Captures| {
        std::env::var(&caps[1]).unwrap_or_default()
    })
    .into_owned()
}

fn category_by_name(name: &str) -> Option<ErrorCategory> {
    ErrorCategory::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(name))
}

/// Loads a config file over the defaults.
pub fn load_config(path: &Path) -> Result<CliConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.into(), e))?;
    let interpolated = interpolate_env(&text);
    let raw: RawConfig =
        toml::from_str(&interpolated).map_err(|e| ConfigError::Malformed(path.into(), e))?;

    let mut config = CliConfig::default();
    if let Some(v) = raw.backend_url {
        config.backend_url = v;
    }
    if let Some(v) = raw.model_name {
        config.model_name = v;
    }
    if let Some(v) = raw.api_key_env {
        config.api_key_env = v;
    }
    if let Some(v) = raw.budget_total {
        if TokenBudget::with_total(v).is_err() {
            return Err(ConfigError::BudgetOutOfRange(path.into(), v));
        }
        config.budget_total = v;
    }
    if let Some(v) = raw.workers {
        config.workers = v.max(1);
    }
    if let Some(v) = raw.sandbox_root {
        config.sandbox_root = PathBuf::from(v);
    }
    if let Some(v) = raw.request_timeout_s {
        config.request_timeout_s = v;
    }
    if let Some(v) = raw.example_dir {
        config.example_dir = Some(PathBuf::from(v));
    }
    for (field, value, slot) in [
        ("syntax_cmd", raw.tool_templates.syntax_cmd, &mut config.syntax_cmd),
        ("test_cmd", raw.tool_templates.test_cmd, &mut config.test_cmd),
    ] {
        if let Some(v) = value {
            if v.matches("{candidate}").count() != 1 {
                return Err(ConfigError::BadTemplate(path.into(), field));
            }
            *slot = v;
        }
    }
    if !raw.category_rules.is_empty() {
        let mut rules = Vec::new();
        for rule in raw.category_rules {
            let category = category_by_name(&rule.category)
                .ok_or_else(|| ConfigError::UnknownCategory(path.into(), rule.category.clone()))?;
            rules.push(CategoryRule { category, patterns: rule.patterns });
        }
        config.category_rules = rules;
    }
    Ok(config)
}

/// Search order: explicit flag path, `./rtlforge.conf`, then the user config
/// dir (`$XDG_CONFIG_HOME/rtlforge/` or `~/.config/rtlforge/`). Defaults
/// apply when nothing is found.
pub fn resolve_config(flag_path: Option<&Path>) -> Result<CliConfig, ConfigError> {
    if let Some(path) = flag_path {
        return load_config(path);
    }
    let local = PathBuf::from(CONFIG_FILE_NAME);
    if local.exists() {
        return load_config(&local);
    }
    let user_dir = std::env::var_os("XDG_CONFIG_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config")));
    if let Some(dir) = user_dir {
        let candidate = dir.join("rtlforge").join(CONFIG_FILE_NAME);
        if candidate.exists() {
            return load_config(&candidate);
        }
    }
    Ok(CliConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CONFIG_FILE_NAME);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_fields_and_defaults() {
        let (_g, path) = write_config(
            r#"
backend_url = "http://slm.local:9000/v1/chat/completions"
model_name = "deepseek-r1-7b"
budget_total = 16384
workers = 4

[tool_templates]
syntax_cmd = "iverilog -t null {candidate}"
"#,
        );
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.model_name, "deepseek-r1-7b");
        assert_eq!(cfg.budget_total, 16384);
        assert_eq!(cfg.workers, 4);
        assert_eq!(cfg.syntax_cmd, "iverilog -t null {candidate}");
        assert_eq!(cfg.api_key_env, "RTLFORGE_API_KEY");
    }

    #[test]
    fn env_interpolation() {
        std::env::set_var("RTLFORGE_TEST_HOST", "example.test");
        let (_g, path) = write_config("backend_url = \"http://${RTLFORGE_TEST_HOST}/v1\"\n");
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.backend_url, "http://example.test/v1");
    }

    #[test]
    fn custom_category_rules() {
        let (_g, path) = write_config(
            r#"
[[category_rules]]
category = "Latch"
patterns = ["combinational loop"]

[[category_rules]]
category = "Syntax"
patterns = ["syntax error"]
"#,
        );
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.category_rules.len(), 2);
        assert_eq!(cfg.category_rules[0].category, ErrorCategory::Latch);
    }

    #[test]
    fn unknown_category_rejected() {
        let (_g, path) = write_config("[[category_rules]]\ncategory = \"Mystery\"\npatterns = [\"x\"]\n");
        assert!(matches!(load_config(&path), Err(ConfigError::UnknownCategory(..))));
    }

    #[test]
    fn out_of_range_budget_rejected() {
        let (_g, path) = write_config("budget_total = 99\n");
        assert!(matches!(load_config(&path), Err(ConfigError::BudgetOutOfRange(..))));
    }

    #[test]
    fn missing_file_is_error() {
        assert!(load_config(Path::new("/nonexistent/rtlforge.conf")).is_err());
    }
}
