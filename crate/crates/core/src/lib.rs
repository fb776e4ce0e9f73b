pub mod analysis;
pub mod decomposition;
pub mod dumpio;
pub mod linalg;
pub mod prompts;
pub mod report;
pub mod toy;
