pub mod constants;
pub mod dist;
pub mod error;
pub mod explore;
pub mod psi;
pub mod quadrature;
pub mod schur;
pub mod verify;
