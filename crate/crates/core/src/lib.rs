pub mod bifurcation;
pub mod dmap;
pub mod dmap_lift;
pub mod error;
pub mod field_sim;
pub mod io;
pub mod kramers;
pub mod langevin;
pub mod lifting_v;
pub mod linalg;
pub mod observables;
pub mod rng;

pub use error::{Error, Result};
