pub mod audio;
pub mod codec;
pub mod features;
pub mod net;
pub mod pipeline;
pub mod seed;
pub mod sim;
