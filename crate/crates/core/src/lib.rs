pub mod bench;
pub mod bridge;
pub mod client;
pub mod clock;
pub mod metrics;
pub mod queries;
pub mod rdf;
pub mod serve;
pub mod sparql;
pub mod system;
pub mod toolchain;
pub mod trs;
pub mod warehouse;
