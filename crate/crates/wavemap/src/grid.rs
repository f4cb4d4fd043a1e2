//! Nested dyadic mesh hierarchy and field storage.
//!
//! Level k covers [0, R/2^k] with spacing h_k = h_0/2^k, so every level has
//! the same number of intervals and each refinement doubles resolution while
//! halving extent. Nodes of level k+1 with even index coincide exactly with
//! nodes of level k, which makes restriction (injection) a copy and keeps the
//! interpolation bookkeeping simple.
//!
//! A [`LevelState`] also carries the previous step's fields and time. That
//! buys three things: time interpolation of the outer boundary for subcycled
//! child levels, synchronized whole-hierarchy snapshots at any time inside the
//! last step, and mid-step refinement without restarting the step.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("outer radius must be positive and finite, got {0}")]
    BadOuterRadius(f64),
    #[error("base intervals must be an even number ≥ 8, got {0}")]
    BadBaseIntervals(usize),
    #[error("sample radius {r} outside [0, {extent}]")]
    SampleOutOfRange { r: f64, extent: f64 },
    #[error("snapshot time {t} outside the last step [{lo}, {hi}]")]
    SnapshotTimeOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("refinement depth {0} already at configured maximum")]
    DepthExhausted(usize),
}

/// Geometry of one refinement level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshLevel {
    pub index: usize,
    pub h: f64,
    pub extent: f64,
}

impl MeshLevel {
    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

/// The whole nest of levels. Invariants: level 0 spans the full domain;
/// level k+1 has half the spacing and half the extent of level k; all levels
/// share the same interval count.
#[derive(Debug, Clone)]
pub struct GridHierarchy {
    outer_radius: f64,
    base_intervals: usize,
    levels: Vec<MeshLevel>,
}

impl GridHierarchy {
    pub fn build_uniform(outer_radius: f64, base_intervals: usize) -> Result<Self, GridError> {
        if !(outer_radius > 0.0) || !outer_radius.is_finite() {
            return Err(GridError::BadOuterRadius(outer_radius));
        }
        if base_intervals < 8 || base_intervals % 2 != 0 {
            return Err(GridError::BadBaseIntervals(base_intervals));
        }
        let h = outer_radius / base_intervals as f64;
        Ok(GridHierarchy {
            outer_radius,
            base_intervals,
            levels: vec![MeshLevel {
                index: 0,
                h,
                extent: outer_radius,
            }],
        })
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Number of intervals per level; every level has `intervals() + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.base_intervals
    }

    pub fn nodes(&self) -> usize {
        self.base_intervals + 1
    }

    pub fn levels(&self) -> &[MeshLevel] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &MeshLevel {
        &self.levels[k]
    }

    /// Index of the finest level (= current depth).
    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn finest_h(&self) -> f64 {
        self.levels[self.finest()].h
    }

    /// Spacing the hierarchy would have at refinement depth `k`.
    pub fn h_at_depth(&self, k: usize) -> f64 {
        self.levels[0].h / (1u64 << k) as f64
    }

    fn push_level(&mut self) -> MeshLevel {
        let last = *self.levels.last().unwrap();
        let next = MeshLevel {
            index: last.index + 1,
            h: last.h / 2.0,
            extent: last.extent / 2.0,
        };
        self.levels.push(next);
        next
    }
}

/// Fields of one level: current (u, v) at `time`, previous (u, v) at
/// `time_prev`. Node 0 sits at the origin (u = v = 0 always); the last node
/// sits at the level's extent.
#[derive(Debug, Clone)]
pub struct LevelState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
    pub u_prev: Vec<f64>,
    pub v_prev: Vec<f64>,
    pub time_prev: f64,
}

impl LevelState {
    fn zeros(nodes: usize, time: f64) -> Self {
        LevelState {
            u: vec![0.0; nodes],
            v: vec![0.0; nodes],
            time,
            u_prev: vec![0.0; nodes],
            v_prev: vec![0.0; nodes],
            time_prev: time,
        }
    }

    /// Linear interpolation of (u, v) at node `i` to a time inside
    /// [time_prev, time]. Degenerate spans (fresh level) return the current
    /// value.
    pub fn node_at_time(&self, i: usize, t: f64) -> (f64, f64) {
        let span = self.time - self.time_prev;
        if span <= 0.0 {
            return (self.u[i], self.v[i]);
        }
        let theta = ((t - self.time_prev) / span).clamp(0.0, 1.0);
        (
            self.u_prev[i] + theta * (self.u[i] - self.u_prev[i]),
            self.v_prev[i] + theta * (self.v[i] - self.v_prev[i]),
        )
    }
}

/// Fields on every level of a hierarchy, kept structurally parallel to it.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub levels: Vec<LevelState>,
}

impl FieldState {
    pub fn new(grid: &GridHierarchy, time: f64) -> Self {
        FieldState {
            levels: grid
                .levels()
                .iter()
                .map(|_| LevelState::zeros(grid.nodes(), time))
                .collect(),
        }
    }

    /// Fill level 0 from radial profiles u(r), v(r); the origin node is forced
    /// to exactly zero regardless of the closures.
    pub fn set_initial(
        &mut self,
        grid: &GridHierarchy,
        u0: impl Fn(f64) -> f64,
        v0: impl Fn(f64) -> f64,
    ) {
        let mesh = grid.level(0);
        let base = &mut self.levels[0];
        for i in 0..grid.nodes() {
            let r = mesh.radius(i);
            base.u[i] = u0(r);
            base.v[i] = v0(r);
        }
        base.u[0] = 0.0;
        base.v[0] = 0.0;
        base.u_prev.copy_from_slice(&base.u);
        base.v_prev.copy_from_slice(&base.v);
    }

    /// True when every level sits at the same time (up to roundoff slack
    /// proportional to the base step implied by `dt_scale`).
    pub fn is_synchronized(&self, dt_scale: f64) -> bool {
        let t0 = self.levels[0].time;
        self.levels
            .iter()
            .all(|l| (l.time - t0).abs() <= 1e-9 * dt_scale.max(1e-300))
    }
}

/// Add one level below the current finest, populating it from the finest
/// level's current fields: coincident nodes are copied, midpoints are filled
/// by centered cubic interpolation (quadratic in the first cell off the
/// origin). The new level starts with a degenerate previous-state span.
pub fn refine(grid: &mut GridHierarchy, state: &mut FieldState) {
    let parent_idx = grid.finest();
    let nodes = grid.nodes();
    let half = grid.intervals() / 2;
    let mesh = grid.push_level();

    let parent = &state.levels[parent_idx];
    let mut u = vec![0.0; nodes];
    let mut v = vec![0.0; nodes];
    for m in 0..=half {
        u[2 * m] = parent.u[m];
        v[2 * m] = parent.v[m];
    }
    for m in 0..half {
        u[2 * m + 1] = midpoint(&parent.u, m);
        v[2 * m + 1] = midpoint(&parent.v, m);
    }
    let time = parent.time;
    debug_assert_eq!(mesh.index, parent_idx + 1);
    state.levels.push(LevelState {
        u_prev: u.clone(),
        v_prev: v.clone(),
        u,
        v,
        time,
        time_prev: time,
    });
}

/// Restriction: copy the child level's values onto the coincident nodes of its
/// parent (inner half of the parent level). Called after the child has caught
/// up with the parent in time.
pub fn inject(state: &mut FieldState, child: usize) {
    debug_assert!(child >= 1 && child < state.levels.len());
    let (head, tail) = state.levels.split_at_mut(child);
    let parent = &mut head[child - 1];
    let ch = &tail[0];
    let half = (ch.u.len() - 1) / 2;
    for m in 0..=half {
        parent.u[m] = ch.u[2 * m];
        parent.v[m] = ch.v[2 * m];
    }
}

/// Value of the midpoint of interval `m` of a nodal array: centered 4-point
/// cubic, except the innermost interval which uses the quadratic through
/// nodes 0..2 (node −1 does not exist; the odd extension is not assumed here
/// because v need not be odd at machine precision during evolution).
fn midpoint(values: &[f64], m: usize) -> f64 {
    if m == 0 {
        (3.0 * values[0] + 6.0 * values[1] - values[2]) / 8.0
    } else {
        debug_assert!(m + 2 < values.len());
        (-values[m - 1] + 9.0 * values[m] + 9.0 * values[m + 1] - values[m + 2]) / 16.0
    }
}

/// Interpolate a nodal array at radius `r` (0 ≤ r ≤ extent). Exactly nodal
/// values on nodes; cubic between interior nodes, quadratic in the first and
/// last cells.
fn interp(values: &[f64], h: f64, r: f64) -> f64 {
    let n = values.len() - 1;
    let x = r / h;
    let j = x.floor() as usize;
    let frac = x - j as f64;
    if frac == 0.0 && j <= n {
        return values[j];
    }
    debug_assert!(j < n);
    if j == 0 {
        quadratic(values[0], values[1], values[2], frac)
    } else if j + 2 <= n {
        cubic(values[j - 1], values[j], values[j + 1], values[j + 2], frac)
    } else {
        quadratic(values[n - 2], values[n - 1], values[n], 1.0 + frac)
    }
}

/// Lagrange cubic through nodes at local positions −1, 0, 1, 2, evaluated at
/// ξ ∈ (0, 1).
fn cubic(a: f64, b: f64, c: f64, d: f64, xi: f64) -> f64 {
    let wm1 = -xi * (xi - 1.0) * (xi - 2.0) / 6.0;
    let w0 = (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0;
    let w1 = -(xi + 1.0) * xi * (xi - 2.0) / 2.0;
    let w2 = (xi + 1.0) * xi * (xi - 1.0) / 6.0;
    wm1 * a + w0 * b + w1 * c + w2 * d
}

/// Lagrange quadratic through nodes at local positions 0, 1, 2, evaluated at
/// t ∈ (0, 2).
fn quadratic(a: f64, b: f64, c: f64, t: f64) -> f64 {
    let w0 = (t - 1.0) * (t - 2.0) / 2.0;
    let w1 = t * (2.0 - t);
    let w2 = t * (t - 1.0) / 2.0;
    w0 * a + w1 * b + w2 * c
}

/// A time-coherent copy of the whole hierarchy's fields, the unit all
/// diagnostics operate on.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub levels: Vec<SnapshotLevel>,
}

#[derive(Debug, Clone)]
pub struct SnapshotLevel {
    pub h: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SnapshotLevel {
    pub fn extent(&self) -> f64 {
        (self.u.len() - 1) as f64 * self.h
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

impl Snapshot {
    /// Capture the state as-is; requires all levels synchronized in time.
    pub fn capture(grid: &GridHierarchy, state: &FieldState) -> Snapshot {
        debug_assert!(state.is_synchronized(grid.level(0).h));
        Snapshot {
            time: state.levels[0].time,
            levels: grid
                .levels()
                .iter()
                .zip(&state.levels)
                .map(|(mesh, l)| SnapshotLevel {
                    h: mesh.h,
                    u: l.u.clone(),
                    v: l.v.clone(),
                })
                .collect(),
        }
    }

    /// Capture the state interpolated to time `t`, which must lie inside each
    /// level's last step (levels mid-subcycle are fine). Linear in time.
    pub fn capture_at(grid: &GridHierarchy, state: &FieldState, t: f64) -> Result<Snapshot, GridError> {
        let mut levels = Vec::with_capacity(state.levels.len());
        for (mesh, l) in grid.levels().iter().zip(&state.levels) {
            let slack = 1e-9 * (l.time - l.time_prev).abs().max(grid.level(0).h);
            if t < l.time_prev - slack || t > l.time + slack {
                return Err(GridError::SnapshotTimeOutOfRange {
                    t,
                    lo: l.time_prev,
                    hi: l.time,
                });
            }
            let nodes = l.u.len();
            let mut u = Vec::with_capacity(nodes);
            let mut v = Vec::with_capacity(nodes);
            for i in 0..nodes {
                let (ui, vi) = l.node_at_time(i, t);
                u.push(ui);
                v.push(vi);
            }
            levels.push(SnapshotLevel { h: mesh.h, u, v });
        }
        Ok(Snapshot { time: t, levels })
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn outer_radius(&self) -> f64 {
        self.levels[0].extent()
    }

    /// Index of the finest level whose extent covers radius `r`.
    pub fn covering_level(&self, r: f64) -> usize {
        for k in (0..self.levels.len()).rev() {
            if r <= self.levels[k].extent() {
                return k;
            }
        }
        0
    }

    /// Sample (u, v) at radius r from the finest covering level.
    pub fn sample(&self, r: f64) -> Result<(f64, f64), GridError> {
        if !(0.0..=self.outer_radius()).contains(&r) || !r.is_finite() {
            return Err(GridError::SampleOutOfRange {
                r,
                extent: self.outer_radius(),
            });
        }
        let lvl = &self.levels[self.covering_level(r)];
        Ok((interp(&lvl.u, lvl.h, r), interp(&lvl.v, lvl.h, r)))
    }

    /// Central slope u_r(0) from the finest level: one-sided parabolic
    /// difference (4u₁ − u₂)/(2h) through the origin node (u₀ = 0).
    pub fn central_slope(&self) -> f64 {
        let lvl = &self.levels[self.finest()];
        (4.0 * lvl.u[1] - lvl.u[2]) / (2.0 * lvl.h)
    }
}
