pub mod gradchecks;
pub mod oracles;
