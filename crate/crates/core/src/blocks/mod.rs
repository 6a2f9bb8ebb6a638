//! Search space, search blocks and the detection network.

pub mod arch;
pub mod block;
pub mod config;
pub mod flops;
pub mod network;
pub mod params;
pub mod similarity;

pub use arch::{search_space_size, ArchCode, BlockGene, BlockKind};
pub use config::NetworkConfig;
pub use flops::{count_flops, FlopReport};
pub use network::{build_network, network_forward, network_plan, supernet_plan, Heads, Model};
pub use params::{Forward, ForwardOpts, ParamPlan, ParamStore};
