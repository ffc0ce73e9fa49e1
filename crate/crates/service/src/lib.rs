//! Interactive matting sessions over HTTP: upload an image, add and undo
//! clicks, fetch the matte and uncertainty, and spend a refinement budget.

pub mod engine;
pub mod error;
pub mod http;
pub mod service;
pub mod session;

pub use engine::{Engine, EngineConfig, Inference};
pub use error::{Result, ServiceError};
pub use http::{router, serve};
pub use service::{MattingService, RefineResponse};
pub use session::{HistoryEvent, SessionState};
