//! File formats, PNG renders, the remote reviser client, the `layrev` CLI and
//! the HTTP session service, on top of [`layrev_core`].

pub mod cli;
pub mod config;
pub mod corpus;
pub mod image;
pub mod remote;
pub mod service;
