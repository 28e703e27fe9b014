#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camgeom;
pub mod estimator;
pub mod guards;
pub mod insekf;
pub mod scenario;
pub mod selftest;
pub mod terrain;
pub mod uncertainty;
