//! HTTP service and command line for vctx agents.
//!
//! Agents live in a data directory (see [`store`]). The server keeps each
//! one on its own worker thread ([`hub`]) and exposes it over HTTP with a
//! server-sent step feed ([`api`]).

pub mod api;
pub mod backends;
pub mod cli;
pub mod config;
pub mod hub;
pub mod store;
