pub mod clustering;
pub mod compressor;
pub mod harness;
pub mod linalg;
pub mod router;
