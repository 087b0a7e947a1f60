//! Road geometry shared by the mobility model, the radio medium, and the
//! trace post-processing: a straight segment of fixed length, either with
//! periodic (ring) or open boundaries. Positions grow in the driving
//! direction of the positive lanes.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Periodic: vehicles wrap around, density is conserved.
    Ring,
    /// Vehicles leaving the far end are removed.
    Open,
}

#[derive(Debug, Clone, Copy)]
pub struct Road {
    pub length_m: f64,
    pub boundary: Boundary,
}

impl Road {
    pub fn new(length_m: f64, boundary: Boundary) -> Self {
        Road { length_m, boundary }
    }

    /// Wrap a position into [0, length).
    pub fn wrap(&self, pos: f64) -> f64 {
        match self.boundary {
            Boundary::Open => pos,
            Boundary::Ring => {
                let l = self.length_m;
                let p = pos % l;
                if p < 0.0 {
                    p + l
                } else {
                    p
                }
            }
        }
    }

    /// Distance between two positions, respecting the boundary.
    pub fn distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.boundary {
            Boundary::Open => d,
            Boundary::Ring => d.min(self.length_m - d),
        }
    }

    /// Interpolate between two recorded positions one step apart. On a ring
    /// the pair is unwrapped first so a vehicle crossing the seam does not
    /// appear to teleport through the middle of the road.
    pub fn lerp_position(&self, pos_a: f64, pos_b: f64, frac: f64) -> f64 {
        match self.boundary {
            Boundary::Open => pos_a + (pos_b - pos_a) * frac,
            Boundary::Ring => {
                let l = self.length_m;
                let mut delta = pos_b - pos_a;
                if delta > l / 2.0 {
                    delta -= l;
                } else if delta < -l / 2.0 {
                    delta += l;
                }
                self.wrap(pos_a + delta * frac)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_distance_takes_the_short_way() {
        let r = Road::new(2000.0, Boundary::Ring);
        assert_eq!(r.distance(10.0, 1990.0), 20.0);
        assert_eq!(r.distance(0.0, 1000.0), 1000.0);
        let open = Road::new(2000.0, Boundary::Open);
        assert_eq!(open.distance(10.0, 1990.0), 1980.0);
    }

    #[test]
    fn lerp_across_the_seam() {
        let r = Road::new(1000.0, Boundary::Ring);
        // 990 -> 10 is a 20 m forward move through the seam.
        let mid = r.lerp_position(990.0, 10.0, 0.5);
        assert!((mid - 0.0).abs() < 1e-9 || (mid - 1000.0).abs() < 1e-9);
        let q = r.lerp_position(990.0, 10.0, 0.25);
        assert!((q - 995.0).abs() < 1e-9);
    }

    #[test]
    fn wrap_handles_negatives() {
        let r = Road::new(100.0, Boundary::Ring);
        assert!((r.wrap(-10.0) - 90.0).abs() < 1e-12);
        assert!((r.wrap(250.0) - 50.0).abs() < 1e-12);
    }
}
