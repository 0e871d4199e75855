//! Dataset containers and artifact export.
//!
//! HDF5 containers store grids in `[x, y, z]` order (z fastest); internally
//! everything is `(z, y, x)` (x fastest). Conversion is a plain axis reversal.

mod atomic;
mod csv;
mod h5;
mod nrrd;

pub use self::csv::{read_spectrum_csv, write_spectrum_csv};
pub use atomic::write_atomically;
pub use h5::{
    has_scores, read_h5_bundle, read_score_field, read_score_patch, write_h5_bundle,
    write_score_field, write_score_patch, DatasetBundle,
};
pub use nrrd::{read_nrrd, write_nrrd, Encoding, Grid};
