pub mod config;
pub mod experiment;
pub mod freeboundary;
pub mod gfunc;
pub mod profile;
pub mod quad;
pub mod reaction;
pub mod solver;
