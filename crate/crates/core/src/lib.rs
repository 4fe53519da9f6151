pub mod annotate;
pub mod db;
pub mod explain;
pub mod feedback;
pub mod harness;
pub mod rewrite;
pub mod schema;
pub mod sql;
pub mod verify;
