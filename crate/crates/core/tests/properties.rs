//! Property tests over the core invariants that lend themselves to
//! randomized exploration.

use proptest::prelude::*;

use vanet_core::dissemination::{DisseminationParams, MileMode, NodeProtocolState, PacketBody};
use vanet_core::kernel::Kernel;
use vanet_core::mobility::{MobilityParams, World};
use vanet_core::radio::in_range;
use vanet_core::road::Boundary;
use vanet_core::units::DataUnit;

proptest! {
    // Dispatch order is total: sorted by fire time, FIFO among equals, and
    // cancelled handles never fire.
    #[test]
    fn kernel_dispatch_order_is_deterministic(
        times in proptest::collection::vec(0u32..50, 1..60),
        cancel_mask in proptest::collection::vec(any::<bool>(), 1..60),
    ) {
        let mut kernel: Kernel<usize> = Kernel::new();
        let mut handles = Vec::new();
        for (i, t) in times.iter().enumerate() {
            handles.push(kernel.schedule(*t as f64, i).unwrap());
        }
        let mut cancelled = Vec::new();
        for (i, (&h, c)) in handles.iter().zip(cancel_mask.iter()).enumerate() {
            if *c {
                kernel.cancel(h);
                cancelled.push(i);
            }
        }
        let mut fired: Vec<(f64, usize)> = Vec::new();
        kernel.run_until(100.0, &mut fired, |_, out, t, i| out.push((t, i))).unwrap();
        // Every live event fired exactly once, in (time, insertion) order.
        let mut expected: Vec<(f64, usize)> = times
            .iter()
            .enumerate()
            .filter(|(i, _)| !cancelled.contains(i) || *i >= cancel_mask.len())
            .map(|(i, t)| (*t as f64, i))
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        prop_assert_eq!(fired, expected);
    }

    // The range predicate is symmetric.
    #[test]
    fn in_range_symmetry(a in -1e5f64..1e5, b in -1e5f64..1e5, r in 0f64..1e4) {
        prop_assert_eq!(in_range(a, b, r), in_range(b, a, r));
    }

    // Same-lane gaps stay non-negative and speeds bounded under arbitrary
    // densities, imperfection levels, and perturbation pressure.
    #[test]
    fn mobility_invariants_hold(
        density in 5.0f64..60.0,
        sigma in 0.0f64..0.9,
        seed in 0u64..500,
    ) {
        let params = MobilityParams {
            road_length_m: 1500.0,
            lanes_per_direction: 1,
            directions: 1,
            mean_density_veh_km: density,
            driver_imperfection: sigma,
            ..MobilityParams::default()
        };
        let mut world = World::uniform(&params, seed).unwrap();
        world.perturbations.push(vanet_core::mobility::Perturbation {
            vehicle: 0,
            start: 5.0,
            duration: 20.0,
            speed_cap: 0.0,
        });
        for _ in 0..60 {
            world.advance();
            let mut cars: Vec<_> = world.snapshot().to_vec();
            cars.sort_by(|a, b| a.position.total_cmp(&b.position));
            for pair in cars.windows(2) {
                let gap = pair[1].position - pair[1].length - pair[0].position;
                prop_assert!(gap >= -1e-9, "overlap at density {density}, sigma {sigma}, seed {seed}");
            }
            for v in &cars {
                prop_assert!(v.speed >= -1e-12 && v.speed <= params.v_max + 1e-12);
            }
        }
    }

    // Receiving any packet twice leaves the protocol state exactly as after
    // the first reception.
    #[test]
    fn duplicate_reception_is_idempotent(
        n_units in 1usize..5,
        mode_plain in any::<bool>(),
        now in 0.0f64..40.0,
    ) {
        let params = DisseminationParams::default();
        let units: Vec<DataUnit> = (0..n_units)
            .map(|i| DataUnit::new(100.0 * i as f64, 0.0, 50.0, 5000.0, vec![i as u8; 32]))
            .collect();
        let ids = units.iter().map(|u| u.id).collect::<Vec<_>>();
        let body = PacketBody::Update { ids, units };
        let mode = if mode_plain { MileMode::Plain } else { MileMode::OnDemand };
        let mut state = NodeProtocolState::new(7);
        state.mile_on_receive(&body, mode, now);
        let once = format!("{state:?}");
        let second = state.mile_on_receive(&body, mode, now);
        prop_assert!(second.is_empty());
        prop_assert_eq!(once, format!("{state:?}"));
        let _ = params;
    }

    // Ring worlds conserve their vehicle count and keep positions on the
    // road.
    #[test]
    fn ring_worlds_conserve_vehicles(density in 2.0f64..50.0, seed in 0u64..200) {
        let params = MobilityParams {
            road_length_m: 2000.0,
            mean_density_veh_km: density,
            boundary: Boundary::Ring,
            ..MobilityParams::default()
        };
        let mut world = World::uniform(&params, seed).unwrap();
        let n = world.len();
        for _ in 0..30 {
            world.advance();
        }
        prop_assert_eq!(world.len(), n);
        for v in world.snapshot() {
            prop_assert!(v.position >= 0.0 && v.position < params.road_length_m + 1e-9);
        }
    }
}
