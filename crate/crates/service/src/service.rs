use std::sync::{Arc, Mutex};
use std::time::Instant;

use clickmat_core::io::{encode_alpha, encode_uncertainty_png};
use clickmat_core::{AlphaMatte, ClickSet, Polarity};
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Result, ServiceError};
use crate::session::{replay, RefinementState, Session, SessionState, SessionStore};

/// Soft latency target for one edit on a 512x512 image.
const LATENCY_TARGET_MS: u128 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResponse {
    #[serde(flatten)]
    pub refinement: RefinementState,
    pub state: SessionState,
}

pub struct UncertaintyPng {
    pub png: Vec<u8>,
    pub min: f32,
    pub max: f32,
}

/// Session operations independent of the transport.
pub struct MattingService {
    engine: Arc<Engine>,
    store: SessionStore,
}

fn lock(session: &Mutex<Session>) -> Result<std::sync::MutexGuard<'_, Session>> {
    session
        .lock()
        .map_err(|_| ServiceError::Internal("session lock poisoned".into()))
}

fn timed<T>(op: &str, pixels: usize, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    let ms = start.elapsed().as_millis();
    tracing::info!(op, pixels, ms, "request done");
    if pixels <= 512 * 512 && ms > LATENCY_TARGET_MS {
        tracing::warn!(op, ms, "over the {LATENCY_TARGET_MS} ms latency target");
    }
    out
}

impl MattingService {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine: Arc::new(engine),
            store: SessionStore::default(),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn session_count(&self) -> usize {
        self.store.len()
    }

    /// Decodes an upload, runs zero-click inference and registers the session.
    pub fn create_session(&self, bytes: &[u8]) -> Result<SessionState> {
        let prepared = self.engine.prepare(bytes)?;
        let (h, w) = prepared.image.shape();
        timed("create", h * w, || {
            let clicks = ClickSet::empty(self.engine.config().click_radius);
            let current = self.engine.infer(&prepared.image, &clicks)?;
            let session = Session {
                id: uuid::Uuid::new_v4().simple().to_string(),
                image: prepared.image,
                original_shape: prepared.original_shape,
                downscaled: prepared.downscaled,
                clicks,
                current,
                refinement: None,
                history: Vec::new(),
            };
            let state = session.state();
            self.store.insert(session);
            Ok(state)
        })
    }

    fn with_session<T>(&self, id: &str, op: &str, f: impl FnOnce(&mut Session, &Engine) -> Result<T>) -> Result<T> {
        let entry = self.store.get(id)?;
        let mut session = lock(&entry)?;
        let pixels = session.image.height() * session.image.width();
        timed(op, pixels, || f(&mut session, &self.engine))
    }

    pub fn add_click(&self, id: &str, row: usize, col: usize, polarity: Polarity) -> Result<SessionState> {
        self.with_session(id, "click", |s, engine| {
            s.add_click(engine, row, col, polarity)?;
            Ok(s.state())
        })
    }

    pub fn undo(&self, id: &str) -> Result<SessionState> {
        self.with_session(id, "undo", |s, engine| {
            s.undo(engine)?;
            Ok(s.state())
        })
    }

    pub fn refine(&self, id: &str, k: usize) -> Result<RefineResponse> {
        self.with_session(id, "refine", |s, engine| {
            let r = s.refine(engine, k)?;
            let refinement = RefinementState {
                k: r.k,
                patches: r.patches.clone(),
                refined_pixels: r.refined_pixels,
            };
            Ok(RefineResponse {
                refinement,
                state: s.state(),
            })
        })
    }

    pub fn state(&self, id: &str) -> Result<SessionState> {
        let entry = self.store.get(id)?;
        let session = lock(&entry)?;
        Ok(session.state())
    }

    pub fn alpha(&self, id: &str) -> Result<AlphaMatte> {
        let entry = self.store.get(id)?;
        let session = lock(&entry)?;
        Ok(session.displayed_alpha().clone())
    }

    /// Displayed matte as a 16-bit grayscale PNG.
    pub fn alpha_png(&self, id: &str) -> Result<Vec<u8>> {
        Ok(encode_alpha(&self.alpha(id)?)?)
    }

    /// Uncertainty normalised to 8 bits, with the range it was mapped from.
    pub fn uncertainty_png(&self, id: &str) -> Result<UncertaintyPng> {
        let entry = self.store.get(id)?;
        let session = lock(&entry)?;
        let sigma = session
            .current
            .sigma
            .as_ref()
            .ok_or(ServiceError::UncertaintyUnavailable)?;
        let (png, (min, max)) = encode_uncertainty_png(sigma)?;
        Ok(UncertaintyPng { png, min, max })
    }

    /// Recomputes the displayed matte from the session's image and history.
    pub fn replay(&self, id: &str) -> Result<AlphaMatte> {
        let entry = self.store.get(id)?;
        let (image, radius, history) = {
            let s = lock(&entry)?;
            (s.image.clone(), s.clicks.radius(), s.history.clone())
        };
        replay(&self.engine, &image, radius, &history)
    }

    pub fn close(&self, id: &str) -> Result<()> {
        self.store.remove(id)
    }
}
