pub mod adaptive;
pub mod cli;
pub mod coarse;
pub mod dense;
pub mod estimator;
pub mod fem;
pub mod helmholtz;
pub mod mesh;
pub mod multilevel;
pub mod phjd;
pub mod precond;
pub mod sparse;
