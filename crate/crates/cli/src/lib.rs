//! HTTP service for the dagcheck workbench; the `dagcheck` binary wraps it with a CLI.

pub mod server;

pub use server::{router, AppState};
