//! Desk-scale navigation stack for air-ground robots in dynamic scenes.
//!
//! The crate bundles the deterministic pieces of a perceive-map-plan loop:
//! state-space sequence kernels, point-cloud voxelization with bird's-eye-view
//! projection, a raycast occupancy map with prediction merging, kinodynamic
//! A* over motion primitives, uniform B-spline trajectories, gradient-based
//! trajectory optimization without a distance field, and a seeded scenario
//! simulator that measures success rate, timing, and energy.

pub mod bspline;
pub mod error;
pub mod geom;
pub mod kin_astar;
pub mod map;
pub mod occ;
pub mod ssm;
pub mod world;

pub use bspline::{fit_to_waypoints, BSplineTrajectory, BasisMatrix, TrajectoryMode};
pub use error::{Error, Result};
pub use geom::{Aabb, GridDims, GridFrame};
pub use kin_astar::{
    expand, find_collision_segments, initial_trajectory, plan_guidance, CollisionSegment,
    GuidanceSegment, Mode, MotionPrimitive, PlannerConfig, RobotState,
};
pub use map::{BlockedMask, CellState, LocalMap, MapView};
pub use occ::{
    bev_project, complete, occupancy_iou, semantic_miou, voxelize, BevGrid, CompletionStrategy,
    ConfusionCounts, OccupancyLabelGrid, PointCloud, VoxelFeatureGrid,
};
pub use ssm::{ContinuousSsm, ConvKernel, DiscreteSsm};
pub use world::{MovingCylinder, Ring, RobotPose, SensorModel, WorldModel};
