//! Per-session state and its event history.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use clickmat_core::patches::PatchSpec;
use clickmat_core::{AlphaMatte, ClickPoint, ClickSet, Image, Polarity};
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, Inference};
use crate::error::{Result, ServiceError};

/// One edit, in the order it was applied. The log only grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HistoryEvent {
    Click { click: ClickPoint },
    Undo { removed: ClickPoint },
    Refine { k: usize, patches: Vec<PatchSpec> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub k: usize,
    pub alpha: AlphaMatte,
    pub patches: Vec<PatchSpec>,
    pub refined_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub image: Image,
    pub original_shape: (usize, usize),
    pub downscaled: bool,
    pub clicks: ClickSet,
    pub current: Inference,
    /// Latest refinement of `current`; dropped whenever the clicks change.
    pub refinement: Option<Refinement>,
    pub history: Vec<HistoryEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementState {
    pub k: usize,
    pub patches: Vec<PatchSpec>,
    pub refined_pixels: usize,
}

/// Wire form of a session returned by every endpoint that mutates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub original_height: usize,
    pub original_width: usize,
    pub downscaled: bool,
    pub radius: u32,
    pub clicks: Vec<ClickPoint>,
    pub sigma_min: Option<f32>,
    pub sigma_max: Option<f32>,
    pub refinement: Option<RefinementState>,
    pub history: Vec<HistoryEvent>,
}

impl Session {
    /// The matte a client should display: refined if a refinement is current.
    pub fn displayed_alpha(&self) -> &AlphaMatte {
        self.refinement.as_ref().map_or(&self.current.alpha, |r| &r.alpha)
    }

    pub fn state(&self) -> SessionState {
        let (height, width) = self.image.shape();
        let range = self.current.sigma.as_ref().map(|s| s.min_max());
        SessionState {
            id: self.id.clone(),
            height,
            width,
            original_height: self.original_shape.0,
            original_width: self.original_shape.1,
            downscaled: self.downscaled,
            radius: self.clicks.radius(),
            clicks: self.clicks.clicks().to_vec(),
            sigma_min: range.map(|r| r.0),
            sigma_max: range.map(|r| r.1),
            refinement: self.refinement.as_ref().map(|r| RefinementState {
                k: r.k,
                patches: r.patches.clone(),
                refined_pixels: r.refined_pixels,
            }),
            history: self.history.clone(),
        }
    }

    pub fn add_click(&mut self, engine: &Engine, row: usize, col: usize, polarity: Polarity) -> Result<()> {
        let (height, width) = self.image.shape();
        if row >= height || col >= width {
            return Err(ServiceError::OutOfBounds { row, col, height, width });
        }
        let mut clicks = self.clicks.clone();
        let click = clicks.push(row, col, polarity);
        let current = engine.infer(&self.image, &clicks)?;
        self.clicks = clicks;
        self.current = current;
        self.refinement = None;
        self.history.push(HistoryEvent::Click { click });
        Ok(())
    }

    pub fn undo(&mut self, engine: &Engine) -> Result<()> {
        let mut clicks = self.clicks.clone();
        let removed = clicks.pop().ok_or(ServiceError::NothingToUndo)?;
        let current = engine.infer(&self.image, &clicks)?;
        self.clicks = clicks;
        self.current = current;
        self.refinement = None;
        self.history.push(HistoryEvent::Undo { removed });
        Ok(())
    }

    /// Refines the unrefined matte, so repeated calls never compound.
    pub fn refine(&mut self, engine: &Engine, k: usize) -> Result<&Refinement> {
        let refined = engine.refine(&self.image, &self.current, k)?;
        self.history.push(HistoryEvent::Refine {
            k,
            patches: refined.patches.clone(),
        });
        Ok(self.refinement.insert(Refinement {
            k,
            alpha: refined.alpha,
            patches: refined.patches,
            refined_pixels: refined.refined_pixels,
        }))
    }
}

/// Rebuilds the displayed matte from the image and event log alone.
pub fn replay(engine: &Engine, image: &Image, radius: u32, history: &[HistoryEvent]) -> Result<AlphaMatte> {
    let mut clicks = ClickSet::empty(radius);
    let mut last_refine = None;
    for event in history {
        match event {
            HistoryEvent::Click { click } => {
                let pushed = clicks.push(click.row, click.col, click.polarity);
                if pushed != *click {
                    return Err(ServiceError::Internal(format!("history click {click:?} replays as {pushed:?}")));
                }
                last_refine = None;
            }
            HistoryEvent::Undo { .. } => {
                clicks.pop().ok_or(ServiceError::NothingToUndo)?;
                last_refine = None;
            }
            HistoryEvent::Refine { k, .. } => last_refine = Some(*k),
        }
    }
    let inference = engine.infer(image, &clicks)?;
    match last_refine {
        Some(k) => Ok(engine.refine(image, &inference, k)?.alpha),
        None => Ok(inference.alpha),
    }
}

/// Sessions keyed by id. Each session has its own lock, so edits to one
/// session are serialized while different sessions proceed in parallel.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn insert(&self, session: Session) -> Arc<Mutex<Session>> {
        let id = session.id.clone();
        let entry = Arc::new(Mutex::new(session));
        self.sessions
            .write()
            .expect("session map lock poisoned")
            .insert(id, entry.clone());
        entry
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn remove(&self, id: &str) -> Result<()> {
        self.sessions
            .write()
            .expect("session map lock poisoned")
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
