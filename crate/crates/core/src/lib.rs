pub mod cli;
pub mod eval;
pub mod gradcheck;
pub mod motion;
pub mod network;
pub mod tensor;
pub mod training;
