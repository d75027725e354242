pub mod gen;
pub mod replay;
