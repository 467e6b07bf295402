pub mod analytics;
pub mod atomicity;
pub mod models;
pub mod optimizer;
pub mod scenario;
pub mod vector;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
