pub mod bench;
pub mod diagnose;
pub mod fit;
pub mod network;
pub mod select;
pub mod simulate;
