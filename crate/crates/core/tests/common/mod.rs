//! Shared fixtures and the reference interpreter used to cross-check the
//! production jam-boundary state machine event for event.

pub mod golden;
