//! Protocol-level behaviors that need several nodes talking to each other:
//! partition merges, converged-network silence, and the empirical
//! neighborhood sizes behind the density-adaptive interval.

use std::collections::BTreeSet;

use vanet_core::dissemination::{
    Action, DisseminationParams, NodeProtocolState, PacketBody, Protocol,
};
use vanet_core::mobility::{sample_penetration, MobilityParams, World};
use vanet_core::rng::{RngStream, StreamId};
use vanet_core::units::DataUnit;

fn unit(tag: u8) -> DataUnit {
    DataUnit::new(1000.0 * tag as f64, 0.0, 500.0, 10_000.0, vec![tag; 64])
}

fn rng(id: u64) -> RngStream {
    RngStream::derive(1234, StreamId::Protocol(id))
}

/// Deliver a packet body to a node and collect what it stores.
fn receive(
    node: &mut NodeProtocolState,
    sender: u32,
    body: &PacketBody,
    params: &DisseminationParams,
    now: f64,
    r: &mut RngStream,
) -> Vec<DataUnit> {
    node.note_sender(sender);
    node.autocast_on_receive(body, params, now, r)
        .into_iter()
        .filter_map(|a| match a {
            Action::Deliver(u) => Some(u),
            _ => None,
        })
        .collect()
}

// Two cliques knowing disjoint units meet: within two update cycles every
// node holds both units. The exchange below replays the exact event order
// of the update timers once the four nodes share one radio range.
#[test]
fn partition_merge_converges_within_two_update_cycles() {
    let params = DisseminationParams::default();
    let a = unit(1);
    let b = unit(2);
    let mut nodes: Vec<NodeProtocolState> = (0..4).map(NodeProtocolState::new).collect();
    let mut rngs: Vec<RngStream> = (0..4).map(|i| rng(i as u64)).collect();
    // Clique {0, 1} knows unit a; clique {2, 3} knows unit b.
    nodes[0].originate(a.clone(), Protocol::AutoCast, 0.0);
    let body = PacketBody::Flood { unit: a.clone() };
    receive(&mut nodes[1], 0, &body, &params, 0.1, &mut rngs[1]);
    nodes[2].originate(b.clone(), Protocol::AutoCast, 0.0);
    let body = PacketBody::Flood { unit: b.clone() };
    receive(&mut nodes[3], 2, &body, &params, 0.1, &mut rngs[3]);

    // The cliques meet. Two full update cycles: every node broadcasts its
    // periodic packet and everyone hears it.
    let mut t = 1.0;
    for _cycle in 0..2 {
        for sender in 0..4 {
            let (body, _) = nodes[sender].autocast_on_timer(&params, t);
            for receiver in 0..4 {
                if receiver != sender {
                    receive(&mut nodes[receiver], sender as u32, &body, &params, t + 0.01, &mut rngs[receiver]);
                }
            }
            t += 0.1;
        }
    }
    for (i, n) in nodes.iter().enumerate() {
        assert!(n.knows(a.id), "node {i} missing the first clique's unit");
        assert!(n.knows(b.id), "node {i} missing the second clique's unit");
    }
}

// In a static, fully informed clique the periodic packets carry ids only:
// no unit payload is ever transmitted again after convergence.
#[test]
fn converged_clique_sends_ids_only() {
    let params = DisseminationParams::default();
    let a = unit(1);
    let b = unit(2);
    let mut nodes: Vec<NodeProtocolState> = (0..4).map(NodeProtocolState::new).collect();
    let mut rngs: Vec<RngStream> = (0..4).map(|i| rng(10 + i as u64)).collect();
    for n in nodes.iter_mut() {
        for u in [&a, &b] {
            let body = PacketBody::Flood { unit: u.clone() };
            receive(n, 99, &body, &params, 0.0, &mut rngs[0]);
        }
    }
    let mut t = 1.0;
    let mut payloads_sent = 0usize;
    for _cycle in 0..5 {
        for sender in 0..4 {
            let (body, _) = nodes[sender].autocast_on_timer(&params, t);
            if let PacketBody::Update { ids, units } = &body {
                assert_eq!(ids.len(), 2);
                payloads_sent += units.len();
            }
            for receiver in 0..4 {
                if receiver != sender {
                    receive(&mut nodes[receiver], sender as u32, &body, &params, t + 0.01, &mut rngs[receiver]);
                }
            }
            t += 0.1;
        }
    }
    assert_eq!(payloads_sent, 0, "a converged clique must never re-send unit payloads");
}

// The desk preset exists so the whole matrix fits in CI: it must finish
// well under a minute of wall clock (pinned with generous slack).
#[test]
fn desk_preset_matrix_runs_quickly() {
    let s = vanet_core::scenario::Scenario::preset("desk-dissemination").unwrap();
    let started = std::time::Instant::now();
    let out = vanet_core::runner::run_matrix(&s, &vanet_core::runner::MatrixOptions { event_log: false })
        .unwrap();
    let elapsed = started.elapsed();
    assert_eq!(
        out.results_csv.lines().count(),
        1 + s.protocols.len() * s.penetrations.len() * s.concurrent_units.len(),
        "one row per matrix cell"
    );
    assert!(elapsed.as_secs() < 60, "desk matrix took {elapsed:?}");
}

// Empirical check of the tabulated average neighborhood size: 36 veh/km at
// 30% penetration and 250 m range gives about 5.4 one-hop neighbors.
#[test]
fn sampled_neighborhood_matches_expectation() {
    let params = MobilityParams { road_length_m: 10_000.0, ..MobilityParams::default() };
    let mut total = 0.0;
    let mut count = 0usize;
    for seed in 0..40u64 {
        let world = World::uniform(&params, seed).unwrap();
        let mut rng = RngStream::derive(seed, StreamId::Penetration);
        let equipped: BTreeSet<u32> = sample_penetration(world.snapshot(), 0.3, &mut rng).unwrap();
        let road = world.road;
        let positions: Vec<f64> = world
            .snapshot()
            .iter()
            .filter(|v| equipped.contains(&v.id))
            .map(|v| v.position)
            .collect();
        for (i, &p) in positions.iter().enumerate() {
            let neighbors = positions
                .iter()
                .enumerate()
                .filter(|(j, &q)| *j != i && road.distance(p, q) <= 250.0)
                .count();
            total += neighbors as f64;
            count += 1;
        }
    }
    let mean = total / count as f64;
    let expected = 5.4;
    assert!(
        (mean - expected).abs() / expected <= 0.10,
        "mean neighborhood {mean:.2}, expected {expected} +-10%"
    );
}
