//! Covert messaging over lossless images.
//!
//! One 32-bit transaction key, chained from message to message, drives
//! everything: which raster bytes carry data, which bit of each byte, the
//! payload keystream, and the session/request identifiers the server
//! validates before touching a payload. Frames are CRC-checked, carried in
//! PNG images, and padded with decoy bit flips so a cover/stego diff does
//! not reveal the data positions.
//!
//! Modules:
//! - [`formula`]: domain-separated keyed derivations (the four formulae).
//! - [`raster`]: lossless PNG load/save as flat byte rasters.
//! - [`stego`]: bit embedding/extraction and capacity arithmetic.
//! - [`crypto`]: payload ciphers and the integrity check.
//! - [`protocol`]: frame format, session state machine, send/receive.
//! - [`sim`]: scripted client/server runs with fault injection.

pub mod crypto;
pub mod error;
pub mod formula;
pub mod protocol;
pub mod raster;
pub mod sim;
pub mod stego;

pub use crypto::CipherMode;
pub use error::{Error, Result};
pub use formula::{KeyMode, TransactionKey};
pub use raster::Raster;
pub use stego::{StegoParams, UsageFraction};
