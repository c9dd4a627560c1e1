pub mod eval;
pub mod exposure;
pub mod geometry;
pub mod georef;
pub mod io;
pub mod pipeline;
pub mod raycast;
pub mod sim;
pub mod spatial;
pub mod texture;
pub mod trajectory;
