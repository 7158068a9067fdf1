pub mod lp;
pub mod malformed;
