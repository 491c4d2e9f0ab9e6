pub mod dissipation;
pub mod echo;
pub mod fit;
pub mod landau;
pub mod limit;
pub mod registry;
pub mod threshold;
pub mod triangle;
