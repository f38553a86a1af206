pub mod detect;
pub mod eval;
pub mod graph;
pub mod matching;
pub mod misc;
pub mod sweep;
pub mod synth;
pub mod train;
