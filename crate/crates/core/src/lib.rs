pub mod channel;
pub mod traffic;
pub mod beamalloc;
pub mod intrabeam;
pub mod gabench;
pub mod metrics;
pub mod harness;
