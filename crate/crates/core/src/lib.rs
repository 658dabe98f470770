pub mod corpus;
pub mod graph;
pub mod grounder;
pub mod ir;
pub mod logic;
pub mod mln;
pub mod nmp;
pub mod par;
pub mod plan;
pub mod synth;
pub mod train;
pub mod verify;
