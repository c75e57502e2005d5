pub mod bench;
pub mod bridge;
pub mod cli;
pub mod mtl;
pub mod node;
pub mod pubsub;
pub mod rv;
pub mod sync;
pub mod trace;
pub mod timescales;
