//! Live teaching sessions over a JSON-over-WebSocket frame protocol.
//!
//! A client records demonstrations point by point, fits a graph policy, runs it on a
//! simulated impedance arm and drags the arm with a pointer spring. Dragging during a
//! correction phase records the visited states and appends them to the model when
//! the drag ends.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{parse_client, ArmFrame, ClientFrame, ErrorCode, ServerFrame, PROTOCOL_VERSION};
pub use server::{run_connection, serve};
pub use session::{drag_to_force, DragState, Session, SessionConfig, DEFAULT_K_DRAG};
