pub mod association;
pub mod cli;
pub mod detections;
pub mod geometry;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod simulator;
pub mod tracker;
pub mod trax;
