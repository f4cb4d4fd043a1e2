//! Time integration of the radial wave-map equation
//! u_tt = u_rr + u_r/r − sin(2u)/(2r²) on the nested hierarchy.
//!
//! Space: the origin-regular flux form
//! `(1/r)·[(r+h/2)(u_{i+1}−u_i) − (r−h/2)(u_i−u_{i−1})]/h²`,
//! second order and exact on {1, r²}, so the regular odd solutions (u ~ c·r
//! near 0) see no spurious force from the coordinate singularity.
//!
//! Time: leapfrog in kick-drift-kick form with the end-of-step acceleration
//! cached, one RHS evaluation per step. This is the standard staggered
//! leapfrog with the half-step velocities merged, but every step is
//! self-contained: (u, v) are synchronized at step boundaries, which is what
//! lets child levels take their outer-edge values by time interpolation, lets
//! refinement happen between any two steps, and lets the last step be
//! shortened to land on an exact output time.
//!
//! Subcycling: each level advances with dt_k = courant·h_k; a parent steps
//! first, then its child takes two half steps and is injected back onto the
//! parent's inner nodes. The refinement trigger is checked after every step of
//! the finest level, so a new level can appear in the middle of a coarse step.

use crate::grid::{self, FieldState, GridHierarchy, Snapshot};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvolveError {
    #[error("non-finite field value at t = {time} on level {level}")]
    NonFinite { time: f64, level: usize },
    #[error("courant number must lie in (0, 1], got {0}")]
    BadCourant(f64),
    #[error("refinement threshold must be positive, got {0}")]
    BadRefineThreshold(f64),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
}

/// Outer boundary treatment at r = R (level 0 only; child levels take their
/// edge values from the parent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Radiation condition for the 2D wave operator, u_t + u_r + u/(2r) = 0,
    /// discretized along the characteristic with trapezoidal (second-order)
    /// time averaging and a one-sided second-order gradient.
    Sommerfeld2d,
    /// Same radiation condition, explicit first-order one-sided version.
    /// Kept as a convergence-study control: it caps the scheme at first order
    /// once outgoing waves touch the boundary.
    SommerfeldFirstOrder,
    /// Dirichlet clamp at the initial boundary values: fully reflecting.
    /// The right choice for fields that do not decay at r = R (the harmonic
    /// map itself), and a control case for radiation-quality measurements.
    None,
}

/// Everything the integrator needs besides the fields themselves.
#[derive(Debug, Clone, Copy)]
pub struct EvolverParams {
    pub outer_radius: f64,
    pub base_intervals: usize,
    pub courant: f64,
    pub boundary: BoundaryKind,
    /// Refinement fires when |u_r(0)|·h_finest exceeds this.
    pub refine_threshold: f64,
    /// Hard refinement-depth cap; at the cap the run keeps evolving on the
    /// existing hierarchy.
    pub max_depth: usize,
}

/// What the step loop reports to its watcher closure.
#[derive(Debug, Clone, Copy)]
pub enum StepEvent {
    /// The finest level finished a step and now sits at `time`.
    FineStep { time: f64 },
    /// A new level was created; `depth` is the new finest index.
    Refined { time: f64, depth: usize },
}

/// Watcher verdict after each event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Watch {
    Continue,
    Stop,
}

pub type Watcher<'a> = dyn FnMut(&GridHierarchy, &FieldState, StepEvent) -> Watch + 'a;

/// Discrete u'' + u'/r at interior node i of a uniform nodal array.
///
/// The grouping matters: with dyadic h the bracketed difference cancels
/// exactly for u = r², making the operator exact on {1, r²} at machine
/// precision rather than merely to O(h²).
#[inline]
pub fn radial_laplacian(u: &[f64], h: f64, i: usize) -> f64 {
    let r = i as f64 * h;
    ((r + 0.5 * h) * (u[i + 1] - u[i]) - (r - 0.5 * h) * (u[i] - u[i - 1])) / (h * h * r)
}

/// Full spatial right-hand side at interior node i:
/// radial Laplacian minus sin(2u)/(2r²).
#[inline]
pub fn spatial_rhs(u: &[f64], h: f64, i: usize) -> f64 {
    let r = i as f64 * h;
    radial_laplacian(u, h, i) - (2.0 * u[i]).sin() / (2.0 * r * r)
}

/// Central slope u_r(0) of a nodal array with u[0] = 0: the one-sided
/// parabolic difference (4u₁ − u₂)/(2h), exact on a·r + b·r².
#[inline]
pub fn central_slope_of(u: &[f64], h: f64) -> f64 {
    (4.0 * u[1] - u[2]) / (2.0 * h)
}

/// Does the mesh need another level? Fires when the core scale λ ≈ 2/|u_r(0)|
/// is no longer comfortably resolved: |u_r(0)|·h > threshold, i.e.
/// λ < 2h/threshold (10 mesh points at the default threshold 0.2).
#[inline]
pub fn refinement_trigger(central_slope: f64, h_finest: f64, threshold: f64) -> bool {
    central_slope.abs() * h_finest > threshold
}

#[derive(Debug)]
pub struct Evolution {
    grid: GridHierarchy,
    state: FieldState,
    accel: Vec<Vec<f64>>,
    params: EvolverParams,
    /// Boundary values held fixed by the Dirichlet clamp.
    clamp: (f64, f64),
    max_abs_u_seen: f64,
    first_overshoot: Option<f64>,
    coarse_steps: u64,
}

impl Evolution {
    /// Build a fresh level-0 evolution with initial data u(0,r) = u0(r),
    /// u_t(0,r) = v0(r); the origin node is pinned to zero.
    pub fn new(
        params: EvolverParams,
        u0: impl Fn(f64) -> f64,
        v0: impl Fn(f64) -> f64,
    ) -> Result<Self, EvolveError> {
        if !(params.courant > 0.0 && params.courant <= 1.0) {
            return Err(EvolveError::BadCourant(params.courant));
        }
        if !(params.refine_threshold > 0.0) {
            return Err(EvolveError::BadRefineThreshold(params.refine_threshold));
        }
        let grid = GridHierarchy::build_uniform(params.outer_radius, params.base_intervals)?;
        let mut state = FieldState::new(&grid, 0.0);
        state.set_initial(&grid, u0, v0);
        let n = grid.intervals();
        let clamp = (state.levels[0].u[n], state.levels[0].v[n]);
        let mut ev = Evolution {
            accel: vec![vec![0.0; grid.nodes()]],
            grid,
            state,
            params,
            clamp,
            max_abs_u_seen: 0.0,
            first_overshoot: None,
            coarse_steps: 0,
        };
        ev.recompute_accel(0, 1, n - 1);
        ev.scan_level(0)?;
        Ok(ev)
    }

    pub fn grid(&self) -> &GridHierarchy {
        &self.grid
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn params(&self) -> &EvolverParams {
        &self.params
    }

    pub fn time(&self) -> f64 {
        self.state.levels[0].time
    }

    pub fn depth(&self) -> usize {
        self.grid.finest()
    }

    pub fn coarse_steps(&self) -> u64 {
        self.coarse_steps
    }

    /// Largest |u| seen at any node of any level at any completed step.
    pub fn max_abs_u_seen(&self) -> f64 {
        self.max_abs_u_seen
    }

    /// Time at which |u| first exceeded π anywhere, the marker of a core
    /// swinging past the far pole of the sphere.
    pub fn first_overshoot_time(&self) -> Option<f64> {
        self.first_overshoot
    }

    /// u_r(0) on the current finest level.
    pub fn central_slope(&self) -> f64 {
        let k = self.grid.finest();
        central_slope_of(&self.state.levels[k].u, self.grid.level(k).h)
    }

    pub fn base_dt(&self) -> f64 {
        self.params.courant * self.grid.level(0).h
    }

    /// Synchronized snapshot at the common current time.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot::capture(&self.grid, &self.state)
    }

    /// One coarse step (all levels advance by the base dt, finer levels by
    /// subcycling). The watcher sees every finest-level step and refinement.
    pub fn advance_coarse(&mut self, watch: &mut Watcher) -> Result<Watch, EvolveError> {
        self.advance_coarse_by(self.base_dt(), watch)
    }

    fn advance_coarse_by(&mut self, dt: f64, watch: &mut Watcher) -> Result<Watch, EvolveError> {
        let w = self.advance_level(0, dt, watch)?;
        self.coarse_steps += 1;
        Ok(w)
    }

    /// Step until the coarse time reaches `t_target` exactly, shortening the
    /// last step as needed. Stops early if the watcher says so.
    pub fn advance_to_time(
        &mut self,
        t_target: f64,
        watch: &mut Watcher,
    ) -> Result<Watch, EvolveError> {
        let dt0 = self.base_dt();
        let slack = 1e-12 * t_target.abs().max(1.0);
        while self.time() < t_target - slack {
            let dt = dt0.min(t_target - self.time());
            if dt < 1e-9 * dt0 {
                break;
            }
            if self.advance_coarse_by(dt, watch)? == Watch::Stop {
                return Ok(Watch::Stop);
            }
        }
        if (self.time() - t_target).abs() <= slack.max(1e-9 * dt0) {
            for l in &mut self.state.levels {
                let d = t_target - l.time;
                l.time = t_target;
                l.time_prev += d;
            }
        }
        Ok(Watch::Continue)
    }

    fn advance_level(
        &mut self,
        k: usize,
        dt: f64,
        watch: &mut Watcher,
    ) -> Result<Watch, EvolveError> {
        let had_child = k < self.grid.finest();
        self.step_level(k, dt)?;
        if had_child {
            let half = dt / 2.0;
            if self.advance_level(k + 1, half, watch)? == Watch::Stop {
                return Ok(Watch::Stop);
            }
            if self.advance_level(k + 1, half, watch)? == Watch::Stop {
                return Ok(Watch::Stop);
            }
            grid::inject(&mut self.state, k + 1);
            // the injected inner half invalidates the cached acceleration
            // there (and one node beyond, whose stencil reaches in)
            let half_nodes = self.grid.intervals() / 2;
            self.recompute_accel(k, 1, (half_nodes + 1).min(self.grid.intervals() - 1));
        } else {
            let time = self.state.levels[k].time;
            if watch(&self.grid, &self.state, StepEvent::FineStep { time }) == Watch::Stop {
                return Ok(Watch::Stop);
            }
            if self.grid.finest() < self.params.max_depth
                && refinement_trigger(
                    self.central_slope(),
                    self.grid.finest_h(),
                    self.params.refine_threshold,
                )
            {
                grid::refine(&mut self.grid, &mut self.state);
                let depth = self.grid.finest();
                self.accel.push(vec![0.0; self.grid.nodes()]);
                self.recompute_accel(depth, 1, self.grid.intervals() - 1);
                if watch(&self.grid, &self.state, StepEvent::Refined { time, depth })
                    == Watch::Stop
                {
                    return Ok(Watch::Stop);
                }
            }
        }
        Ok(Watch::Continue)
    }

    /// One KDK step of a single level. Interior nodes move under the cached
    /// acceleration; the edge nodes are boundary-managed.
    fn step_level(&mut self, k: usize, dt: f64) -> Result<(), EvolveError> {
        let n = self.grid.intervals();
        let h = self.grid.level(k).h;
        let half_dt = 0.5 * dt;
        {
            let lvl = &mut self.state.levels[k];
            lvl.u_prev.copy_from_slice(&lvl.u);
            lvl.v_prev.copy_from_slice(&lvl.v);
            lvl.time_prev = lvl.time;

            let acc = &self.accel[k];
            for i in 1..n {
                lvl.v[i] += half_dt * acc[i];
            }
            for i in 1..n {
                lvl.u[i] += dt * lvl.v[i];
            }
        }
        let t_new = self.state.levels[k].time + dt;
        if k == 0 {
            self.apply_outer_boundary(dt);
        } else {
            let (head, tail) = self.state.levels.split_at_mut(k);
            let parent = &head[k - 1];
            let child = &mut tail[0];
            let (ub, vb) = parent.node_at_time(n / 2, t_new);
            child.u[n] = ub;
            child.v[n] = vb;
        }
        self.recompute_accel(k, 1, n - 1);
        {
            let lvl = &mut self.state.levels[k];
            let acc = &self.accel[k];
            for i in 1..n {
                lvl.v[i] += half_dt * acc[i];
            }
            lvl.time = t_new;
            let _ = h;
        }
        self.scan_level(k)
    }

    /// Update u, v at the outermost node of level 0 for this step. Called
    /// after the drift, so the interior neighbors already hold new values and
    /// the previous-state arrays hold the old ones.
    fn apply_outer_boundary(&mut self, dt: f64) {
        let n = self.grid.intervals();
        let h = self.grid.level(0).h;
        let r_out = self.grid.outer_radius();
        let lvl = &mut self.state.levels[0];
        match self.params.boundary {
            BoundaryKind::None => {
                lvl.u[n] = self.clamp.0;
                lvl.v[n] = self.clamp.1;
            }
            BoundaryKind::Sommerfeld2d => {
                // trapezoidal average of u_t + u_r + u/(2r) = 0 over the step
                let p = lvl.u[n - 1] + lvl.u_prev[n - 1];
                let q = lvl.u[n - 2] + lvl.u_prev[n - 2];
                let a = 1.0 / dt;
                let b = 3.0 / (4.0 * h) + 1.0 / (4.0 * r_out);
                let old = lvl.u[n];
                let new = (old * (a - b) + (4.0 * p - q) / (4.0 * h)) / (a + b);
                lvl.u[n] = new;
                lvl.v[n] = (new - old) / dt;
            }
            BoundaryKind::SommerfeldFirstOrder => {
                let old = lvl.u_prev[n];
                let new =
                    old - dt * ((old - lvl.u_prev[n - 1]) / h + old / (2.0 * r_out));
                lvl.u[n] = new;
                lvl.v[n] = (new - old) / dt;
            }
        }
    }

    /// Refresh cached acceleration on nodes lo..=hi (interior) of level k.
    fn recompute_accel(&mut self, k: usize, lo: usize, hi: usize) {
        let h = self.grid.level(k).h;
        let u = &self.state.levels[k].u;
        let acc = &mut self.accel[k];
        let inv_h2 = 1.0 / (h * h);
        for i in lo..=hi {
            let r = i as f64 * h;
            let lap = ((r + 0.5 * h) * (u[i + 1] - u[i]) - (r - 0.5 * h) * (u[i] - u[i - 1]))
                * inv_h2
                / r;
            acc[i] = lap - (2.0 * u[i]).sin() / (2.0 * r * r);
        }
    }

    /// Track the global |u| high-water mark and fail on non-finite values.
    fn scan_level(&mut self, k: usize) -> Result<(), EvolveError> {
        let lvl = &self.state.levels[k];
        let t = lvl.time;
        let mut m = self.max_abs_u_seen;
        let mut finite = true;
        for &x in &lvl.u {
            let a = x.abs();
            if a > m {
                m = a;
            }
            finite &= x.is_finite();
        }
        for &x in &lvl.v {
            finite &= x.is_finite();
        }
        if !finite {
            return Err(EvolveError::NonFinite { time: t, level: k });
        }
        if self.first_overshoot.is_none() && m > std::f64::consts::PI {
            self.first_overshoot = Some(t);
        }
        self.max_abs_u_seen = m;
        Ok(())
    }
}

/// Watcher that never stops; for plain stepping.
pub fn no_watch() -> impl FnMut(&GridHierarchy, &FieldState, StepEvent) -> Watch {
    |_, _, _| Watch::Continue
}
