//! Application configuration: one YAML file, overridable from the command line.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::llm::{
    build_system_prompt, GenerationSettings, HttpProvider, HttpProviderConfig, PromptConfig, ProviderFactory,
    ScriptFixture,
};
use crate::orchestrator::{HistoryMode, RunOptions, StageBudget};
use crate::sim::EnvConfig;
use crate::validate::{load_resource_spec, ResourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    #[default]
    Script,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(ProviderKind::Http),
            "script" => Ok(ProviderKind::Script),
            other => Err(format!("unknown provider {other:?} (expected http or script)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanMode {
    #[default]
    Off,
    Serve,
    Tty,
}

impl std::str::FromStr for HumanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(HumanMode::Off),
            "serve" => Ok(HumanMode::Serve),
            "tty" => Ok(HumanMode::Tty),
            other => Err(format!("unknown human mode {other:?} (expected off, serve or tty)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Reply fixture for the scripted provider.
    pub script: Option<PathBuf>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Script,
            base_url: None,
            model: "scripted".to_string(),
            api_key_env: Some("OPENAI_API_KEY".to_string()),
            script: None,
            timeout_secs: 120,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let d = GenerationSettings::default();
        GenerationConfig {
            temperature: d.temperature,
            max_output_tokens: d.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub general_attempts: u32,
    pub detailed_attempts: u32,
    pub human_attempts: u32,
    pub global_cap: u32,
    pub global_cap_human: u32,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let s = StageBudget::default();
        BudgetConfig {
            general_attempts: s.general_attempts,
            detailed_attempts: s.detailed_attempts,
            human_attempts: s.human_attempts,
            global_cap: 15,
            global_cap_human: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub provider: ProviderConfig,
    pub generation: GenerationConfig,
    pub prompt: PromptConfig,
    pub budgets: BudgetConfig,
    pub workers: usize,
    pub history_mode: HistoryMode,
    pub human: HumanMode,
    pub serve_addr: String,
    pub env_fixture: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub resource_spec: Option<PathBuf>,
    pub policies: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            provider: ProviderConfig::default(),
            generation: GenerationConfig::default(),
            prompt: PromptConfig::default(),
            budgets: BudgetConfig::default(),
            workers: 1,
            history_mode: HistoryMode::Full,
            human: HumanMode::Off,
            serve_addr: "127.0.0.1:8765".to_string(),
            env_fixture: None,
            manifest: None,
            output_dir: None,
            resource_spec: None,
            policies: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub provider: Option<ProviderKind>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub script: Option<PathBuf>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub global_cap: Option<u32>,
    pub global_cap_human: Option<u32>,
    pub workers: Option<usize>,
    pub history_mode: Option<HistoryMode>,
    pub human: Option<HumanMode>,
    pub serve_addr: Option<String>,
    pub env_fixture: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n{}", .errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl ConfigError {
    fn one(message: impl Into<String>) -> Self {
        ConfigError {
            errors: vec![message.into()],
        }
    }
}

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.yaml";

/// Keys that would put a credential on disk.
fn credential_keys(raw: &serde_yaml::Value) -> Vec<String> {
    let Some(provider) = raw.get("provider").and_then(|p| p.as_mapping()) else {
        return Vec::new();
    };
    provider
        .keys()
        .filter_map(|k| k.as_str())
        .filter(|k| matches!(*k, "api_key" | "key" | "token" | "secret" | "password"))
        .map(|k| {
            format!("provider.{k}: credentials are never read from config files; name an environment variable in provider.api_key_env")
        })
        .collect()
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Loads `path` (or defaults), applies overrides, then validates every field.
pub fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<AppConfig, ConfigError> {
    let mut cfg = match path {
        None => AppConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::one(format!("{}: {e}", path.display())))?;
            let mut cfg = if text.trim().is_empty() {
                AppConfig::default()
            } else {
                let raw: serde_yaml::Value =
                    serde_yaml::from_str(&text).map_err(|e| ConfigError::one(format!("{}: {e}", path.display())))?;
                let leaked = credential_keys(&raw);
                if !leaked.is_empty() {
                    return Err(ConfigError { errors: leaked });
                }
                serde_yaml::from_value(raw).map_err(|e| ConfigError::one(format!("{}: {e}", path.display())))?
            };
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [
                &mut cfg.provider.script,
                &mut cfg.env_fixture,
                &mut cfg.manifest,
                &mut cfg.output_dir,
                &mut cfg.resource_spec,
                &mut cfg.policies,
            ] {
                resolve(base, p);
            }
            cfg
        }
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}

impl AppConfig {
    fn apply(&mut self, o: &ConfigOverrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut self.provider.kind, &o.provider);
        set_opt(&mut self.provider.base_url, &o.base_url);
        set(&mut self.provider.model, &o.model);
        set_opt(&mut self.provider.api_key_env, &o.api_key_env);
        set_opt(&mut self.provider.script, &o.script);
        set(&mut self.generation.temperature, &o.temperature);
        set(&mut self.generation.max_output_tokens, &o.max_output_tokens);
        set(&mut self.budgets.global_cap, &o.global_cap);
        set(&mut self.budgets.global_cap_human, &o.global_cap_human);
        set(&mut self.workers, &o.workers);
        set(&mut self.history_mode, &o.history_mode);
        set(&mut self.human, &o.human);
        set(&mut self.serve_addr, &o.serve_addr);
        set_opt(&mut self.env_fixture, &o.env_fixture);
        set_opt(&mut self.manifest, &o.manifest);
        set_opt(&mut self.output_dir, &o.output_dir);
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        if self.workers < 1 {
            errors.push("workers: must be at least 1".to_string());
        }
        if !(0.0..=2.0).contains(&self.generation.temperature) {
            errors.push(format!("generation.temperature: {} is outside 0..=2", self.generation.temperature));
        }
        if self.generation.max_output_tokens == 0 {
            errors.push("generation.max_output_tokens: must be at least 1".to_string());
        }
        if self.budgets.general_attempts + self.budgets.detailed_attempts == 0 {
            errors.push("budgets: general_attempts + detailed_attempts must be at least 1".to_string());
        }
        if self.budgets.global_cap == 0 {
            errors.push("budgets.global_cap: must be at least 1".to_string());
        }
        if self.budgets.global_cap_human == 0 {
            errors.push("budgets.global_cap_human: must be at least 1".to_string());
        }
        if self.provider.max_attempts == 0 {
            errors.push("provider.max_attempts: must be at least 1".to_string());
        }
        if self.serve_addr.parse::<std::net::SocketAddr>().is_err() {
            errors.push(format!("serve_addr: {:?} is not a socket address", self.serve_addr));
        }
        for (field, path) in [
            ("provider.script", &self.provider.script),
            ("env_fixture", &self.env_fixture),
            ("manifest", &self.manifest),
            ("resource_spec", &self.resource_spec),
            ("policies", &self.policies),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    errors.push(format!("{field}: {} does not exist", p.display()));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { errors })
        }
    }

    pub fn stage_budget(&self) -> StageBudget {
        StageBudget {
            general_attempts: self.budgets.general_attempts,
            detailed_attempts: self.budgets.detailed_attempts,
            human_attempts: self.budgets.human_attempts,
        }
    }

    pub fn generation_settings(&self) -> GenerationSettings {
        GenerationSettings {
            temperature: self.generation.temperature,
            max_output_tokens: self.generation.max_output_tokens,
            model_name: self.provider.model.clone(),
        }
    }

    pub fn env_config(&self) -> Result<EnvConfig, ConfigError> {
        match &self.env_fixture {
            Some(p) => EnvConfig::load(p).map_err(|e| ConfigError::one(format!("env_fixture: {e}"))),
            None => Ok(EnvConfig::default()),
        }
    }

    pub fn resource_spec(&self) -> Result<Arc<ResourceSpec>, ConfigError> {
        match &self.resource_spec {
            Some(p) => load_resource_spec(p)
                .map(Arc::new)
                .map_err(|e| ConfigError::one(format!("resource_spec: {e}"))),
            None => Ok(Arc::new(ResourceSpec::bundled().clone())),
        }
    }

    /// Run options without a human responder; callers attach one.
    pub fn run_options(&self) -> Result<RunOptions, ConfigError> {
        Ok(RunOptions {
            history_mode: self.history_mode,
            settings: self.generation_settings(),
            system_prompt: build_system_prompt(&self.prompt),
            human: None,
            global_cap: self.budgets.global_cap,
            global_cap_human: self.budgets.global_cap_human,
            spec: self.resource_spec()?,
        })
    }

    pub fn provider_factory(&self) -> Result<Arc<dyn ProviderFactory>, ConfigError> {
        match self.provider.kind {
            ProviderKind::Script => {
                let path = self
                    .provider
                    .script
                    .as_ref()
                    .ok_or_else(|| ConfigError::one("provider.script: required for the script provider"))?;
                let fixture = ScriptFixture::load(path).map_err(|e| ConfigError::one(format!("provider.script: {e}")))?;
                Ok(Arc::new(fixture))
            }
            ProviderKind::Http => {
                let base = self
                    .provider
                    .base_url
                    .as_ref()
                    .ok_or_else(|| ConfigError::one("provider.base_url: required for the http provider"))?;
                let mut http = HttpProviderConfig::new(base.clone()).with_key_from_env(self.provider.api_key_env.as_deref());
                http.timeout = Duration::from_secs(self.provider.timeout_secs);
                http.max_attempts = self.provider.max_attempts;
                let provider = HttpProvider::new(http).map_err(|e| ConfigError::one(format!("provider: {e}")))?;
                Ok(Arc::new(provider))
            }
        }
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        let text = serde_yaml::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
