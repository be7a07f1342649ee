use dsm_core::{MonitorConfig, ReplacementConfig, StoreConfig, SystemConfig};
use serde::{Deserialize, Serialize};
use std::net::SocketAddr;
use std::path::PathBuf;

/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "DSM_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub registry: PathBuf,
    pub store_dir: PathBuf,
    pub grace_multiplier: f64,
    pub margin_ms: i64,
    pub hysteresis: f64,
    /// Events buffered per event-stream subscriber.
    pub event_buffer: usize,
    pub tick_ms: u64,
    pub idle_close_ms: Option<i64>,
    /// Required as `Authorization: Bearer <token>` when set.
    #[serde(skip_serializing)]
    pub token: Option<String>,
}

impl ServiceConfig {
    pub fn new(registry: impl Into<PathBuf>, store_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            registry: registry.into(),
            store_dir: store_dir.into(),
            grace_multiplier: 3.0,
            margin_ms: 1000,
            hysteresis: 0.0,
            event_buffer: 1024,
            tick_ms: 1000,
            idle_close_ms: None,
            token: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (
                self.grace_multiplier.is_finite() && self.grace_multiplier >= 0.0,
                "grace-multiplier",
            ),
            (self.margin_ms >= 0, "margin-ms"),
            (
                self.hysteresis.is_finite() && self.hysteresis >= 0.0,
                "hysteresis",
            ),
            (self.event_buffer > 0, "event-buffer"),
            (self.tick_ms > 0, "tick-ms"),
            (self.idle_close_ms.is_none_or(|ms| ms >= 0), "idle-close-ms"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, name)) => Err(format!("{name} must be non-negative")),
            None => Ok(()),
        }
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            monitor: MonitorConfig {
                grace_multiplier: self.grace_multiplier,
                margin_ms: self.margin_ms,
                ..MonitorConfig::default()
            },
            replacement: ReplacementConfig {
                hysteresis: self.hysteresis,
            },
        }
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            idle_close_ms: self.idle_close_ms,
            ..StoreConfig::default()
        }
    }
}
