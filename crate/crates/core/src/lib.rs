//! Deterministic discrete-event simulator for highway vehicular ad-hoc
//! networks: epidemic data-dissemination protocols, distributed jam-boundary
//! tracking with hovering data clouds, and traffic-jam-type classification.

pub mod dissemination;
pub mod hdc;
pub mod jam;
pub mod kernel;
pub mod metrics;
pub mod mobility;
pub mod oracle;
pub mod radio;
pub mod rng;
pub mod road;
pub mod runner;
pub mod scenario;
pub mod units;

pub use dissemination::{
    forwarding_probability, rebroadcast_wait, AutoCastParams, DisseminationParams, MileMode,
    NodeProtocolState, PacketBody, Protocol,
};
pub use hdc::{CrModel, CvModel, HdcMessage, HdcParams, HdcStatus, HdcTimer, HdcVars};
pub use jam::{classify, detect_jams, track_clusters, Classification, ClusterSeries, JamParams, JamType};
pub use kernel::{next_multiple, EventHandle, Kernel, KernelError, Seconds};
pub use metrics::{
    channel_usage_per_km, delivery_ratio, dissemination_speed, partitions, DeliveryEvent,
    MetricSeries,
};
pub use mobility::{
    expected_neighborhood, kmh_to_mps, sample_penetration, History, MobilityParams, Perturbation,
    VehicleId, VehicleState, World,
};
pub use oracle::{contact_intervals, oracle_deliveries, Contact};
pub use radio::{airtime, in_range, ChannelRecord, Medium, NodeId, RadioParams, Scope};
pub use rng::{RngStream, StreamId};
pub use road::{Boundary, Road};
pub use scenario::{Experiment, Scenario};
pub use units::{data_unit_id, DataUnit, DataUnitId};
