//! HTTP service around a [`dsm_core::System`]: registry, matrices, active
//! sources, decision log and operator commands as JSON endpoints, plus a
//! server-sent-event stream of transitions, decisions and alarms.

mod api;
mod config;

pub use api::router;
pub use config::{ServiceConfig, TOKEN_ENV};

use dsm_core::{
    Registry, RegistryError, ScenarioStore, StoreError, System, SystemError, SystemEvent, Timestamp,
};
use std::path::PathBuf;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::broadcast;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot load registry {path}: {source}")]
    Registry {
        path: PathBuf,
        #[source]
        source: RegistryError,
    },
    #[error("cannot open scenario store {path}: {source}")]
    Store {
        path: PathBuf,
        #[source]
        source: StoreError,
    },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(#[source] std::io::Error),
}

/// Source of the current time.
pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// Milliseconds since the Unix epoch.
#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis();
        Timestamp(i64::try_from(ms).unwrap_or(i64::MAX))
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self(AtomicI64::new(start.as_millis()))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t.as_millis(), Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) -> Timestamp {
        Timestamp(self.0.fetch_add(ms, Ordering::SeqCst) + ms)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

/// Shared state of the running service.
#[derive(Clone)]
pub struct AppState {
    system: Arc<Mutex<System>>,
    events: broadcast::Sender<SystemEvent>,
    clock: Arc<dyn Clock>,
    token: Option<Arc<str>>,
}

impl AppState {
    /// Load the registry, open the store and rebuild state from it.
    pub fn open(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        config.validate().map_err(ServiceError::Config)?;
        let registry =
            Registry::load_file(&config.registry).map_err(|source| ServiceError::Registry {
                path: config.registry.clone(),
                source,
            })?;
        let store =
            ScenarioStore::open(&config.store_dir, config.store_config()).map_err(|source| {
                ServiceError::Store {
                    path: config.store_dir.clone(),
                    source,
                }
            })?;
        let system = System::recover(registry, config.system_config(), store, clock.now())?;
        Ok(Self::new(
            system,
            clock,
            config.event_buffer,
            config.token.clone(),
        ))
    }

    pub fn new(
        mut system: System,
        clock: Arc<dyn Clock>,
        event_buffer: usize,
        token: Option<String>,
    ) -> Self {
        system.drain_events();
        let (events, _) = broadcast::channel(event_buffer.max(1));
        Self {
            system: Arc::new(Mutex::new(system)),
            events,
            clock,
            token: token.map(Arc::from),
        }
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SystemEvent> {
        self.events.subscribe()
    }

    /// Lock the system. Events queued while the guard is held are published
    /// when it is dropped.
    pub fn lock(&self) -> SystemGuard<'_> {
        SystemGuard {
            guard: self.system.lock().unwrap_or_else(|p| p.into_inner()),
            events: &self.events,
        }
    }

    /// Advance the monitor to the current time.
    pub fn tick(&self) -> Result<(), SystemError> {
        let now = self.now();
        self.lock().tick(now)
    }
}

pub struct SystemGuard<'a> {
    guard: MutexGuard<'a, System>,
    events: &'a broadcast::Sender<SystemEvent>,
}

impl std::ops::Deref for SystemGuard<'_> {
    type Target = System;
    fn deref(&self) -> &System {
        &self.guard
    }
}

impl std::ops::DerefMut for SystemGuard<'_> {
    fn deref_mut(&mut self) -> &mut System {
        &mut self.guard
    }
}

impl Drop for SystemGuard<'_> {
    fn drop(&mut self) {
        for event in self.guard.drain_events() {
            let _ = self.events.send(event);
        }
    }
}

/// Run the service until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::open(&config, Arc::new(SystemClock))?;
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.listen,
            source,
        })?;
    tracing::info!(addr = %config.listen, "listening");
    serve_on(listener, state, Duration::from_millis(config.tick_ms)).await
}

/// Serve `state` on an already bound listener, ticking every `tick`.
pub async fn serve_on(
    listener: TcpListener,
    state: AppState,
    tick: Duration,
) -> Result<(), ServiceError> {
    let ticker = state.clone();
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        loop {
            interval.tick().await;
            if let Err(e) = ticker.tick() {
                tracing::error!(error = %e, "tick failed");
            }
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Serve)
}
