//! Kinodynamic A* over motion primitives, used to repair the colliding spans
//! of an initial polyline with dynamically feasible guidance segments.
//!
//! Edges are constant-acceleration arcs of fixed duration. Aerial arcs carry
//! an energy surcharge on top of their time cost, so with both a ground and
//! an aerial route available the search prefers driving and only flies when
//! the surcharge is worth it.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::map::{BlockedMask, MapView};

/// Locomotion mode of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ground,
    Aerial,
}

/// Kinodynamic robot state. Ground mode keeps `z` at the ground height with
/// zero vertical velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub position: Point3<f64>,
    pub velocity: Vector3<f64>,
    pub mode: Mode,
}

impl RobotState {
    pub fn ground(x: f64, y: f64) -> Self {
        Self {
            position: Point3::new(x, y, 0.0),
            velocity: Vector3::zeros(),
            mode: Mode::Ground,
        }
    }

    pub fn at_rest(position: Point3<f64>, ground_z: f64) -> Self {
        let mode = if position.z > ground_z + 1e-9 {
            Mode::Aerial
        } else {
            Mode::Ground
        };
        Self {
            position,
            velocity: Vector3::zeros(),
            mode,
        }
    }
}

/// One constant-acceleration arc.
#[derive(Debug, Clone)]
pub struct MotionPrimitive {
    pub accel: Vector3<f64>,
    pub duration: f64,
    /// States sampled along the arc at equal substeps, excluding the start.
    pub samples: Vec<RobotState>,
    /// Time cost plus the energy surcharge when the arc leaves the ground.
    pub cost: f64,
    pub aerial: bool,
}

/// Repair path produced by the search: feasible waypoints from entry toward
/// the exit anchor, with the accumulated primitive cost.
#[derive(Debug, Clone)]
pub struct GuidanceSegment {
    pub states: Vec<RobotState>,
    pub cost: f64,
    pub entry: Point3<f64>,
    pub exit: Point3<f64>,
}

impl GuidanceSegment {
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.states.iter().map(|s| s.position).collect()
    }
}

/// Search parameters: dynamic limits, mode rules, and discretization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub v_max: f64,
    pub a_max: f64,
    /// Energy surcharge per second applied to primitives leaving the ground.
    pub lambda_energy: f64,
    pub allow_aerial: bool,
    pub ground_z: f64,
    /// Duration of one primitive.
    pub primitive_duration: f64,
    /// Collision samples per primitive.
    pub substeps: usize,
    /// Visited-set bins; shrink toward zero for lattice-exact search.
    pub pos_bin: f64,
    pub vel_bin: f64,
    pub goal_tolerance: f64,
    pub node_budget: usize,
    /// States outside this box are discarded.
    pub arena: Aabb,
    /// Robot radius used to inflate blocked cells.
    pub inflation: f64,
}

impl PlannerConfig {
    pub fn desk_default(arena: Aabb) -> Self {
        Self {
            v_max: 1.0,
            a_max: 1.0,
            lambda_energy: 1.0,
            allow_aerial: true,
            ground_z: 0.0,
            primitive_duration: 0.4,
            substeps: 4,
            pos_bin: 0.2,
            vel_bin: 0.5,
            goal_tolerance: 0.2,
            node_budget: 120_000,
            arena,
            inflation: 0.2,
        }
    }
}

/// Seeded polyline from start to goal through jittered intermediate points.
///
/// Point `k` of `n_rand` sits on the straight start-goal chord at fraction
/// `k / (n_rand + 1)`, displaced laterally by up to `jitter` meters and
/// clamped into the arena. The same seed always yields the same polyline.
pub fn initial_trajectory(
    start: &Point3<f64>,
    goal: &Point3<f64>,
    n_rand: usize,
    jitter: f64,
    bounds: &Aabb,
    seed: u64,
) -> Vec<Point3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_rand + 2);
    points.push(*start);
    for k in 1..=n_rand {
        let f = k as f64 / (n_rand + 1) as f64;
        let base = start + (goal - start) * f;
        let dx = rng.gen_range(-jitter..=jitter);
        let dy = rng.gen_range(-jitter..=jitter);
        points.push(Point3::new(
            (base.x + dx).clamp(bounds.min.x, bounds.max.x),
            (base.y + dy).clamp(bounds.min.y, bounds.max.y),
            base.z.clamp(bounds.min.z, bounds.max.z),
        ));
    }
    points.push(*goal);
    points
}

/// A maximal colliding span of a polyline: vertex indices bracketing the run
/// of blocked samples, plus the last free points on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionSegment {
    pub entry_index: usize,
    pub exit_index: usize,
    pub entry_point: Point3<f64>,
    pub exit_point: Point3<f64>,
}

/// Finds the maximal contiguous colliding spans of a polyline, sampling at
/// half the map resolution and inflating blocked cells by `inflation`.
pub fn find_collision_segments(
    polyline: &[Point3<f64>],
    view: &MapView,
    inflation: f64,
) -> Vec<CollisionSegment> {
    find_collision_segments_masked(polyline, &view.inflated(inflation))
}

pub(crate) fn find_collision_segments_masked(
    polyline: &[Point3<f64>],
    mask: &BlockedMask,
) -> Vec<CollisionSegment> {
    if polyline.len() < 2 {
        return Vec::new();
    }
    let step = mask.frame().resolution / 2.0;

    // Sample the whole polyline, remembering which edge each sample is on.
    let mut samples: Vec<(Point3<f64>, usize)> = Vec::new();
    for (i, pair) in polyline.windows(2).enumerate() {
        let len = (pair[1] - pair[0]).norm();
        let n = (len / step).ceil().max(1.0) as usize;
        for k in 0..n {
            let f = k as f64 / n as f64;
            samples.push((pair[0] + (pair[1] - pair[0]) * f, i));
        }
    }
    samples.push((*polyline.last().unwrap(), polyline.len() - 2));

    let blocked: Vec<bool> = samples.iter().map(|(p, _)| mask.is_blocked_at(p)).collect();
    let mut segments = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=blocked.len() {
        let is_blocked = i < blocked.len() && blocked[i];
        match (run_start, is_blocked) {
            (None, true) => run_start = Some(i),
            (Some(s), false) => {
                let e = i - 1;
                let entry_index = samples[s].1;
                let exit_index = (samples[e].1 + 1).min(polyline.len() - 1);
                let entry_point = if s == 0 { polyline[0] } else { samples[s - 1].0 };
                let exit_point = if i == blocked.len() {
                    *polyline.last().unwrap()
                } else {
                    samples[i].0
                };
                segments.push(CollisionSegment {
                    entry_index,
                    exit_index,
                    entry_point,
                    exit_point,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    segments
}

/// Expands a state into feasible successor arcs.
///
/// Ground states get the 9 in-plane accelerations plus, when aerial motion is
/// allowed, 9 takeoff arcs; aerial states get the full 27. Arcs that exceed
/// the velocity limit, leave the arena, or (when a mask is given) touch a
/// blocked cell are discarded. Aerial arcs descending through the ground
/// height are truncated into landing arcs.
pub fn expand(
    state: &RobotState,
    cfg: &PlannerConfig,
    mask: Option<&BlockedMask>,
) -> Vec<(MotionPrimitive, RobotState)> {
    let a = cfg.a_max;
    let mut accels: Vec<Vector3<f64>> = Vec::new();
    match state.mode {
        Mode::Ground => {
            for &ax in &[-a, 0.0, a] {
                for &ay in &[-a, 0.0, a] {
                    accels.push(Vector3::new(ax, ay, 0.0));
                    if cfg.allow_aerial {
                        accels.push(Vector3::new(ax, ay, a));
                    }
                }
            }
        }
        Mode::Aerial => {
            for &ax in &[-a, 0.0, a] {
                for &ay in &[-a, 0.0, a] {
                    for &az in &[-a, 0.0, a] {
                        accels.push(Vector3::new(ax, ay, az));
                    }
                }
            }
        }
    }

    let mut out = Vec::new();
    for accel in accels {
        if let Some(succ) = integrate_primitive(state, &accel, cfg, mask) {
            out.push(succ);
        }
    }
    out
}

fn integrate_primitive(
    state: &RobotState,
    accel: &Vector3<f64>,
    cfg: &PlannerConfig,
    mask: Option<&BlockedMask>,
) -> Option<(MotionPrimitive, RobotState)> {
    let mut duration = cfg.primitive_duration;
    let mut lands = false;

    if state.mode == Mode::Aerial {
        // Earliest time the arc touches the ground plane (descending).
        if let Some(t) = touchdown_time(
            state.position.z - cfg.ground_z,
            state.velocity.z,
            accel.z,
            duration,
        ) {
            duration = t;
            lands = true;
        }
    }
    if duration < 1e-4 {
        return None;
    }

    let eval = |t: f64| -> RobotState {
        let mut p = state.position + state.velocity * t + accel * (0.5 * t * t);
        let mut v = state.velocity + accel * t;
        let grounded = (lands && t >= duration - 1e-12)
            || (state.mode == Mode::Ground && accel.z == 0.0);
        if grounded {
            p.z = cfg.ground_z;
            v.z = 0.0;
        }
        let mode = if p.z > cfg.ground_z + 1e-9 {
            Mode::Aerial
        } else {
            Mode::Ground
        };
        RobotState {
            position: p,
            velocity: v,
            mode,
        }
    };

    let substeps = cfg.substeps.max(1);
    let mut samples = Vec::with_capacity(substeps);
    let mut aerial = state.mode == Mode::Aerial;
    for k in 1..=substeps {
        let t = duration * k as f64 / substeps as f64;
        let s = eval(t);
        if s.velocity.norm() > cfg.v_max + 1e-9 {
            return None;
        }
        if !cfg.arena.contains(&s.position) {
            return None;
        }
        if let Some(mask) = mask {
            if mask.is_blocked_at(&s.position) {
                return None;
            }
        }
        if s.position.z > cfg.ground_z + 1e-9 {
            aerial = true;
        }
        samples.push(s);
    }
    let end = samples[substeps - 1];
    let cost = duration * (1.0 + if aerial { cfg.lambda_energy } else { 0.0 });
    Some((
        MotionPrimitive {
            accel: *accel,
            duration,
            samples,
            cost,
            aerial,
        },
        end,
    ))
}

/// Earliest `t` in `(0, horizon]` where `z0 + v t + a t^2 / 2` reaches zero.
fn touchdown_time(z0: f64, v: f64, a: f64, horizon: f64) -> Option<f64> {
    let roots: Vec<f64> = if a.abs() < 1e-12 {
        if v.abs() < 1e-12 {
            Vec::new()
        } else {
            vec![-z0 / v]
        }
    } else {
        let disc = v * v - 2.0 * a * z0;
        if disc < 0.0 {
            Vec::new()
        } else {
            let sq = disc.sqrt();
            vec![(-v - sq) / a, (-v + sq) / a]
        }
    };
    roots
        .into_iter()
        .filter(|&t| t > 1e-9 && t <= horizon)
        .fold(None, |best: Option<f64>, t| {
            Some(best.map_or(t, |b| b.min(t)))
        })
}

#[derive(Clone, Copy)]
struct OpenNode {
    f: f64,
    g: f64,
    index: usize,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.g == other.g
    }
}
impl Eq for OpenNode {}

impl Ord for OpenNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert so the smallest f pops first,
        // breaking ties by smaller g.
        other
            .f
            .total_cmp(&self.f)
            .then(other.g.total_cmp(&self.g))
    }
}
impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct BinKey {
    pos: [i64; 3],
    vel: [i64; 3],
    mode: Mode,
}

fn bin_key(state: &RobotState, cfg: &PlannerConfig) -> BinKey {
    let q = |v: f64, bin: f64| (v / bin).round() as i64;
    BinKey {
        pos: [
            q(state.position.x, cfg.pos_bin),
            q(state.position.y, cfg.pos_bin),
            q(state.position.z, cfg.pos_bin),
        ],
        vel: [
            q(state.velocity.x, cfg.vel_bin),
            q(state.velocity.y, cfg.vel_bin),
            q(state.velocity.z, cfg.vel_bin),
        ],
        mode: state.mode,
    }
}

struct SearchNode {
    state: RobotState,
    parent: Option<usize>,
    primitive: Option<MotionPrimitive>,
    g: f64,
}

/// Plans a minimum-cost primitive sequence from `entry` to within the goal
/// tolerance of `exit`.
///
/// The heuristic is straight-line distance over `v_max`, which ignores the
/// energy surcharge and is therefore admissible. Fails with
/// [`Error::NoPathFound`] when the reachable set is exhausted and
/// [`Error::BudgetExceeded`] when the node budget runs out first.
pub fn plan_guidance(
    entry: &RobotState,
    exit: &Point3<f64>,
    view: &MapView,
    cfg: &PlannerConfig,
) -> Result<GuidanceSegment> {
    let mask = view.inflated(cfg.inflation);
    plan_guidance_masked(entry, exit, &mask, cfg)
}

pub(crate) fn plan_guidance_masked(
    entry: &RobotState,
    exit: &Point3<f64>,
    mask: &BlockedMask,
    cfg: &PlannerConfig,
) -> Result<GuidanceSegment> {
    if mask.is_blocked_at(&entry.position) {
        return Err(Error::InvalidParameter(
            "guidance entry state is inside a blocked region".into(),
        ));
    }
    if (entry.position - exit).norm() <= cfg.goal_tolerance {
        return Ok(GuidanceSegment {
            states: Vec::new(),
            cost: 0.0,
            entry: entry.position,
            exit: *exit,
        });
    }

    let h = |p: &Point3<f64>| (p - exit).norm() / cfg.v_max;

    let mut nodes = vec![SearchNode {
        state: *entry,
        parent: None,
        primitive: None,
        g: 0.0,
    }];
    let mut open = BinaryHeap::new();
    open.push(OpenNode {
        f: h(&entry.position),
        g: 0.0,
        index: 0,
    });
    let mut best_g: HashMap<BinKey, f64> = HashMap::new();
    best_g.insert(bin_key(entry, cfg), 0.0);

    let mut expanded = 0usize;
    while let Some(top) = open.pop() {
        let node_g = nodes[top.index].g;
        if top.g > node_g + 1e-12 {
            continue; // stale heap entry
        }
        let state = nodes[top.index].state;
        if (state.position - exit).norm() <= cfg.goal_tolerance {
            return Ok(reconstruct(&nodes, top.index, entry, exit));
        }
        expanded += 1;
        if expanded > cfg.node_budget {
            return Err(Error::BudgetExceeded { expanded });
        }

        for (primitive, successor) in expand(&state, cfg, Some(mask)) {
            let g = node_g + primitive.cost;
            let key = bin_key(&successor, cfg);
            match best_g.entry(key) {
                Entry::Occupied(mut e) => {
                    if g + 1e-12 >= *e.get() {
                        continue;
                    }
                    e.insert(g);
                }
                Entry::Vacant(e) => {
                    e.insert(g);
                }
            }
            let index = nodes.len();
            nodes.push(SearchNode {
                state: successor,
                parent: Some(top.index),
                primitive: Some(primitive),
                g,
            });
            open.push(OpenNode {
                f: g + h(&successor.position),
                g,
                index,
            });
        }
    }
    Err(Error::NoPathFound)
}

fn reconstruct(
    nodes: &[SearchNode],
    goal_index: usize,
    entry: &RobotState,
    exit: &Point3<f64>,
) -> GuidanceSegment {
    let mut chain = Vec::new();
    let mut cursor = Some(goal_index);
    while let Some(i) = cursor {
        chain.push(i);
        cursor = nodes[i].parent;
    }
    chain.reverse();
    let mut states = vec![*entry];
    for &i in &chain {
        if let Some(p) = &nodes[i].primitive {
            states.extend_from_slice(&p.samples);
        }
    }
    GuidanceSegment {
        states,
        cost: nodes[goal_index].g,
        entry: entry.position,
        exit: *exit,
    }
}
