//! Deterministic discrete-event simulation of the cluster.

pub mod engine;
pub mod event;
pub mod rng;
pub mod scenario;
pub mod service;
pub mod trace;
pub mod workload;

pub use engine::{run, Simulation};
pub use event::{EventKind, EventQueue};
pub use rng::SimRng;
pub use scenario::{FaultAction, FaultEvent, FaultTarget, Scenario};
pub use service::{process_service_model, ServiceModel};
pub use trace::{EventTrace, IntervalRecord, TraceEvent, TraceRecord};
pub use workload::generate_tasks;
