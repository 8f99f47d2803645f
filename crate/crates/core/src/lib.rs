//! Summarization-compressed routing tables and discovery protocols for
//! unstructured peer-to-peer data-discovery networks.

pub mod code;
pub mod corpus;
pub mod error;
pub mod netsim;
pub mod protocol;
pub mod rtable;
pub mod sumtree;

pub use code::{BitCode, Code, Scv};
pub use error::{Error, Result};
