//! Occupancy completion: fills unobserved cells of a label grid.
//!
//! The trained completion network is out of scope here; the strategy trait
//! keeps the slot pluggable and the bundled strategies give deterministic
//! baselines for the simulator.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{OccupancyLabelGrid, EMPTY};
use crate::error::{Error, Result};

/// Proposes labels for unknown cells. Implementations only ever see the
/// observed grid; [`complete`] guarantees observed cells are never relabeled
/// no matter what a strategy returns.
pub trait CompletionStrategy {
    fn name(&self) -> &'static str;

    /// Returns a grid of proposals; only cells that are unknown in `observed`
    /// and observed in the proposal are taken.
    fn propose(&self, observed: &OccupancyLabelGrid) -> Result<OccupancyLabelGrid>;
}

/// Fills unknown cells of `observed` using the strategy's proposals.
/// Directly observed cells always pass through untouched.
pub fn complete(
    observed: &OccupancyLabelGrid,
    strategy: &dyn CompletionStrategy,
) -> Result<OccupancyLabelGrid> {
    let proposal = strategy.propose(observed)?;
    observed.check_same_shape(&proposal)?;
    let mut out = observed.clone();
    for flat in 0..observed.cell_count() {
        if observed.raw_unknown_at(flat) && !proposal.raw_unknown_at(flat) {
            out.set_flat(flat, proposal.raw_label_at(flat), false);
        }
    }
    Ok(out)
}

/// Leaves the grid unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl CompletionStrategy for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn propose(&self, observed: &OccupancyLabelGrid) -> Result<OccupancyLabelGrid> {
        Ok(OccupancyLabelGrid::new_unknown(
            observed.frame,
            observed.num_classes,
        ))
    }
}

/// Extends every observed occupied cell into its occlusion shadow: the cells
/// behind it as seen from the sensor origin, up to `depth` cells deep.
#[derive(Debug, Clone)]
pub struct ShadowExtrude {
    pub depth: usize,
    pub sensor_origin: Point3<f64>,
}

impl CompletionStrategy for ShadowExtrude {
    fn name(&self) -> &'static str {
        "shadow_extrude"
    }

    fn propose(&self, observed: &OccupancyLabelGrid) -> Result<OccupancyLabelGrid> {
        if self.depth == 0 {
            return Err(Error::InvalidParameter(
                "shadow_extrude depth must be at least 1".into(),
            ));
        }
        let frame = observed.frame;
        let dims = frame.dims;
        let mut proposal = OccupancyLabelGrid::new_unknown(frame, observed.num_classes);
        for z in 0..dims.h {
            for y in 0..dims.w {
                for x in 0..dims.l {
                    if observed.is_unknown(x, y, z) {
                        continue;
                    }
                    let label = observed.label(x, y, z);
                    if label == EMPTY {
                        continue;
                    }
                    let center = frame.cell_center(x, y, z);
                    let dir = center - self.sensor_origin;
                    let norm = dir.norm();
                    if norm < 1e-9 {
                        continue;
                    }
                    let step = dir / norm * frame.resolution;
                    let mut probe = center;
                    for _ in 0..self.depth {
                        probe += step;
                        if let Some((px, py, pz)) = frame.world_to_cell(&probe) {
                            proposal.set_label(px, py, pz, label);
                        } else {
                            break;
                        }
                    }
                }
            }
        }
        Ok(proposal)
    }
}

/// Stand-in for a trained network inside the simulator: copies the ground
/// truth into unknown cells, corrupting each copied cell independently with
/// probability `noise_p` (occupied becomes empty and vice versa).
#[derive(Debug, Clone)]
pub struct Oracle {
    pub truth: OccupancyLabelGrid,
    pub noise_p: f64,
    pub seed: u64,
}

impl CompletionStrategy for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn propose(&self, observed: &OccupancyLabelGrid) -> Result<OccupancyLabelGrid> {
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::InvalidParameter(format!(
                "noise_p must be in [0, 1], got {}",
                self.noise_p
            )));
        }
        observed.check_same_shape(&self.truth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut proposal = OccupancyLabelGrid::new_unknown(observed.frame, observed.num_classes);
        for flat in 0..observed.cell_count() {
            // Draw for every cell so the stream does not depend on which
            // cells happen to be unknown.
            let corrupt = rng.gen::<f64>() < self.noise_p;
            if !observed.raw_unknown_at(flat) {
                continue;
            }
            let truth_label = self.truth.effective_label_at(flat);
            let label = if corrupt {
                if truth_label == EMPTY {
                    1
                } else {
                    EMPTY
                }
            } else {
                truth_label
            };
            proposal.set_flat(flat, label, false);
        }
        Ok(proposal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{GridDims, GridFrame};

    fn frame(n: usize) -> GridFrame {
        GridFrame::new(GridDims::new(n, n, n), 1.0, Point3::origin())
    }

    #[test]
    fn identity_returns_input() {
        let mut grid = OccupancyLabelGrid::new_unknown(frame(3), 2);
        grid.set_label(1, 1, 1, 2);
        let out = complete(&grid, &Identity).unwrap();
        assert_eq!(out, grid);
    }

    #[test]
    fn oracle_zero_noise_copies_truth_on_unknown_cells() {
        let mut truth = OccupancyLabelGrid::new_empty(frame(3), 2);
        truth.set_label(0, 0, 0, 1);
        truth.set_label(2, 2, 2, 2);
        let mut observed = OccupancyLabelGrid::new_unknown(frame(3), 2);
        observed.set_label(0, 0, 0, 2); // observed disagrees with truth
        let out = complete(
            &observed,
            &Oracle {
                truth: truth.clone(),
                noise_p: 0.0,
                seed: 7,
            },
        )
        .unwrap();
        // Observed cell kept its observation.
        assert_eq!(out.label(0, 0, 0), 2);
        // Unknown cells now carry the truth.
        assert_eq!(out.label(2, 2, 2), 2);
        assert_eq!(out.label(1, 1, 1), EMPTY);
        assert!(!out.is_unknown(1, 1, 1));
    }

    #[test]
    fn oracle_is_deterministic_per_seed() {
        let truth = OccupancyLabelGrid::new_empty(frame(4), 1);
        let observed = OccupancyLabelGrid::new_unknown(frame(4), 1);
        let strat = Oracle {
            truth,
            noise_p: 0.3,
            seed: 99,
        };
        let a = complete(&observed, &strat).unwrap();
        let b = complete(&observed, &strat).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shadow_extrude_fills_exactly_the_shadowed_cells() {
        // Sensor on the -x side, one occupied cell at (1, 2, 2): the shadow
        // runs along +x through (2, 2, 2) and (3, 2, 2).
        let mut observed = OccupancyLabelGrid::new_unknown(frame(5), 1);
        observed.set_label(1, 2, 2, 1);
        let sensor_origin = observed.frame.cell_center(0, 2, 2);
        let out = complete(
            &observed,
            &ShadowExtrude {
                depth: 2,
                sensor_origin,
            },
        )
        .unwrap();
        let mut relabeled = Vec::new();
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    if !out.is_unknown(x, y, z) && !(x == 1 && y == 2 && z == 2) {
                        relabeled.push((x, y, z));
                    }
                }
            }
        }
        assert_eq!(relabeled, vec![(2, 2, 2), (3, 2, 2)]);
        assert_eq!(out.label(2, 2, 2), 1);
        assert_eq!(out.label(3, 2, 2), 1);
    }

    #[test]
    fn complete_never_relabels_observed_cells() {
        let mut truth = OccupancyLabelGrid::new_empty(frame(4), 1);
        for z in 0..4 {
            for y in 0..4 {
                truth.set_label(0, y, z, 1);
            }
        }
        let mut observed = OccupancyLabelGrid::new_unknown(frame(4), 1);
        observed.set_label(0, 0, 0, EMPTY);
        observed.set_label(1, 1, 1, 1);
        let strategies: Vec<Box<dyn CompletionStrategy>> = vec![
            Box::new(Identity),
            Box::new(Oracle {
                truth,
                noise_p: 0.5,
                seed: 3,
            }),
            Box::new(ShadowExtrude {
                depth: 3,
                sensor_origin: Point3::new(-1.0, -1.0, -1.0),
            }),
        ];
        for s in &strategies {
            let out = complete(&observed, s.as_ref()).unwrap();
            assert_eq!(out.label(0, 0, 0), EMPTY, "{}", s.name());
            assert_eq!(out.label(1, 1, 1), 1, "{}", s.name());
        }
    }

    #[test]
    fn oracle_rejects_bad_noise() {
        let truth = OccupancyLabelGrid::new_empty(frame(2), 1);
        let observed = OccupancyLabelGrid::new_unknown(frame(2), 1);
        let r = complete(
            &observed,
            &Oracle {
                truth,
                noise_p: 1.5,
                seed: 0,
            },
        );
        assert!(r.is_err());
    }
}
