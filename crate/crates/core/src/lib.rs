//! Critical exponents, explicit radial solutions and numerical identity checks for
//! Lane-Emden, Hardy-Sobolev, Caffarelli-Kohn-Nirenberg, Riesz/Bessel potential and
//! k-Hessian equations.

pub mod families;
pub mod quadrature;
pub mod profiles;
pub mod radial_ops;
pub mod potentials;
pub mod shooting;
pub mod identities;
pub mod cli;
