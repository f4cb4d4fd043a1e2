//! Experiment drivers: single-run classification (dispersal vs blowup),
//! critical-amplitude bisection, and self-convergence measurement.
//!
//! [`run`] evolves one configuration to a verdict while assembling the
//! diagnostic time series; [`bisect_critical_amplitude`] brackets the
//! threshold amplitude between dispersing and collapsing initial data;
//! [`convergence_study`] measures the scheme's observed order on a
//! resolution triplet.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SimConfig};
use crate::diagnostics::{
    energy_in_ball, fit_power_law, lightcone_energies, profile_collapse_error,
    scale_factor_from_slope, total_energy, DiagnosticRecord, DiagnosticsSeries, PowerLawFit,
};
use crate::evolver::{central_slope_of, Evolution, EvolveError, StepEvent, Watch, no_watch};
use crate::grid::{FieldState, GridHierarchy, Snapshot};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("{0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Dispersal,
    Blowup,
    Inconclusive,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::Dispersal => "dispersal",
            OutcomeKind::Blowup => "blowup",
            OutcomeKind::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum InconclusiveReason {
    /// The scheme produced a non-finite value; the state up to `time` is
    /// reported but nothing is classified.
    SchemeNan { time: f64 },
    /// Neither criterion fired before `t_max`.
    TimeExhausted,
    /// The scale collapsed to the resolution floor but the field never
    /// swung past the pole, so the collapse is not certified.
    CollapseWithoutOvershoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersalInfo {
    /// Time of the minimal scale.
    pub t_bounce: f64,
    /// None only on the degenerate zero-field path.
    pub lambda_min: Option<f64>,
    /// Energy inside half the bump radius at the halt time, as a fraction
    /// of the initial total.
    pub interior_energy_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupInfo {
    /// Estimated collapse time, from the power-law fit when one succeeds.
    pub t_est: f64,
    /// Scale at the halt.
    pub lambda_last: f64,
    /// When |u| first exceeded π.
    pub overshoot_time: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit: Option<PowerLawFit>,
}

/// Classified result of one evolution, with the diagnostic series attached.
/// The series is not part of the serialized form; it goes to its own CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub kind: OutcomeKind,
    pub t_final: f64,
    pub max_abs_u: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dispersal: Option<DispersalInfo>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub blowup: Option<BlowupInfo>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inconclusive: Option<InconclusiveReason>,
    #[serde(skip)]
    pub diagnostics: DiagnosticsSeries,
}

pub struct RunResult {
    pub outcome: RunOutcome,
    /// Full field snapshots at the configured `snapshot_times`.
    pub snapshots: Vec<Snapshot>,
}

/// Fourth root of 2: four extra samples per halving of the scale.
const MILESTONE_RATIO: f64 = 1.189_207_115_002_721;

/// Event-driven sampling and λ bookkeeping for one run.
struct Monitor {
    slope_floor: f64,
    eta_max: f64,
    halt_lambda: f64,
    growth_factor: f64,
    min_time: f64,
    rebound_hold: f64,
    outer_radius: f64,
    series: DiagnosticsSeries,
    /// One snapshot per kept record, for the light-cone post-pass.
    samples: Vec<Snapshot>,
    lambda_first_refine: Option<f64>,
    next_milestone: Option<f64>,
    /// (time, λ) of the sample that tripped the resolution floor.
    lambda_halt: Option<(f64, f64)>,
    /// Running (time, λ) minimum.
    lambda_min: Option<(f64, f64)>,
    /// Start of the current uninterrupted stretch with λ above the rebound
    /// threshold.
    above_since: Option<f64>,
    /// (t_bounce, λ_min) once the rebound criterion fires.
    dispersal_fired: Option<(f64, f64)>,
}

impl Monitor {
    fn new(cfg: &SimConfig, h_cap: f64) -> Self {
        Monitor {
            slope_floor: cfg.slope_floor,
            eta_max: cfg.eta_max,
            halt_lambda: cfg.lambda_stop_factor * h_cap,
            growth_factor: cfg.growth_factor,
            min_time: cfg.min_time,
            rebound_hold: cfg.rebound_hold,
            outer_radius: cfg.outer_radius,
            series: DiagnosticsSeries::new(),
            samples: Vec::new(),
            lambda_first_refine: None,
            next_milestone: None,
            lambda_halt: None,
            lambda_min: None,
            above_since: None,
            dispersal_fired: None,
        }
    }

    fn record_of(&self, snap: &Snapshot) -> DiagnosticRecord {
        let u_r = snap.central_slope();
        let (lambda, sign) = if u_r.abs() > self.slope_floor {
            match scale_factor_from_slope(u_r) {
                Some((l, s)) => (Some(l), Some(s)),
                None => (None, None),
            }
        } else {
            (None, None)
        };
        DiagnosticRecord {
            t: snap.time,
            u_r_center: u_r,
            lambda,
            sign,
            e_total: total_energy(snap),
            e_kinetic_lightcone: None,
            e_potential_lightcone: None,
            profile_error: profile_collapse_error(snap, self.eta_max),
            finest_level: snap.finest(),
        }
    }

    /// Record a sample; keeps `samples` aligned with the kept records.
    fn record(&mut self, snap: Snapshot) -> Option<f64> {
        let rec = self.record_of(&snap);
        let lam = rec.lambda;
        let t = rec.t;
        if self.series.push(rec) {
            self.samples.push(snap);
            if let Some(l) = lam {
                self.note_lambda(t, l);
            }
        }
        lam
    }

    /// Update the running minimum and the rebound criterion. The minimum
    /// only counts once it is an actual scale (at most the domain size),
    /// rebound is never declared before `min_time`, and the rebound must
    /// persist for `rebound_hold`: the central slope oscillates and passes
    /// through zero while the wave is still converging, and every such spike
    /// sends λ far above any running minimum for a moment.
    fn note_lambda(&mut self, t: f64, lam: f64) {
        match self.lambda_min {
            Some((_, lmin)) if lam >= lmin => {}
            _ => self.lambda_min = Some((t, lam)),
        }
        if self.dispersal_fired.is_some() {
            return;
        }
        let (tb, lmin) = self.lambda_min.expect("minimum set above");
        if lmin <= self.outer_radius && lam >= self.growth_factor * lmin {
            let since = *self.above_since.get_or_insert(t);
            if t >= self.min_time && t - since >= self.rebound_hold {
                self.dispersal_fired = Some((tb, lmin));
            }
        } else {
            self.above_since = None;
        }
    }

    fn on_event(&mut self, grid: &GridHierarchy, state: &FieldState, ev: StepEvent) -> Watch {
        match ev {
            StepEvent::Refined { time, .. } => {
                if let Ok(snap) = Snapshot::capture_at(grid, state, time) {
                    let lam = self.record(snap);
                    if self.lambda_first_refine.is_none() {
                        if let Some(l) = lam {
                            self.lambda_first_refine = Some(l);
                            self.next_milestone = Some(l / MILESTONE_RATIO);
                        }
                    }
                }
                Watch::Continue
            }
            StepEvent::FineStep { time } => {
                let k = state.levels.len() - 1;
                let slope = central_slope_of(&state.levels[k].u, grid.level(k).h);
                if !(slope.abs() > self.slope_floor) {
                    return Watch::Continue;
                }
                let lam = 2.0 / slope.abs();
                self.note_lambda(time, lam);
                if lam <= self.halt_lambda {
                    if let Ok(snap) = Snapshot::capture_at(grid, state, time) {
                        self.record(snap);
                    }
                    self.lambda_halt = Some((time, lam));
                    return Watch::Stop;
                }
                if let Some(next) = self.next_milestone {
                    if lam <= next {
                        if let Ok(snap) = Snapshot::capture_at(grid, state, time) {
                            self.record(snap);
                            self.next_milestone = Some(lam / MILESTONE_RATIO);
                        }
                    }
                }
                Watch::Continue
            }
        }
    }
}

enum Halt {
    LambdaFloor,
    Dispersed,
    Time,
    Nan(f64),
}

/// Evolve one configuration to a classified outcome.
///
/// The evolution halts on the first of: the scale rebounding by the growth
/// factor from a genuine minimum (dispersal, after a short continuation to
/// twice the bounce time for the interior-energy measurement), the scale
/// reaching the resolution floor (blowup when the pole-overshoot marker has
/// fired, otherwise inconclusive), or `t_max`. A non-finite value anywhere
/// ends the run as inconclusive rather than an error.
///
/// Sampling: every 2^`cadence_log2` coarse steps, immediately after every
/// refinement, and at every fourth-root-of-2 milestone of the shrinking
/// scale. For blowup outcomes the light-cone energy split is filled in
/// afterwards using the fitted collapse time.
pub fn run(config: &SimConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let family = config.initial_family();
    let mut evol = Evolution::new(config.evolver_params(), |r| family.profile(r), |_| 0.0)?;
    let mut mon = Monitor::new(config, evol.grid().h_at_depth(config.max_depth));
    mon.record(evol.snapshot());
    let e_initial = mon.series.records.first().map(|r| r.e_total).unwrap_or(0.0);

    if e_initial < 1e-14 {
        // the zero map sits still forever
        let snapshots = if config.snapshot_times.iter().any(|&t| t <= 1e-9) {
            vec![evol.snapshot()]
        } else {
            Vec::new()
        };
        return Ok(RunResult {
            outcome: RunOutcome {
                kind: OutcomeKind::Dispersal,
                t_final: 0.0,
                max_abs_u: evol.max_abs_u_seen(),
                dispersal: Some(DispersalInfo {
                    t_bounce: 0.0,
                    lambda_min: None,
                    interior_energy_fraction: None,
                }),
                blowup: None,
                inconclusive: None,
                diagnostics: std::mem::take(&mut mon.series),
            },
            snapshots,
        });
    }

    let mut timed: Vec<Snapshot> = Vec::new();
    let mut want: Vec<f64> = config.snapshot_times.clone();
    want.retain(|&t| t <= config.t_max + 1e-9);
    want.sort_by(f64::total_cmp);
    want.dedup();
    let mut next_snap = 0usize;
    let cadence = 1u64 << config.cadence_log2;
    // once dispersal fires, keep going to 2·t_bounce before halting
    let mut extension: Option<f64> = None;

    let halt = loop {
        let t = evol.time();

        while next_snap < want.len() && t >= want[next_snap] - 1e-9 {
            timed.push(evol.snapshot());
            next_snap += 1;
        }

        if let Some(te) = extension {
            if t >= te - 1e-9 {
                break Halt::Dispersed;
            }
        }
        if t >= config.t_max - 1e-9 {
            break Halt::Time;
        }

        let mut stop = config.t_max.min(t + evol.base_dt());
        if let Some(te) = extension {
            stop = stop.min(te);
        }
        if next_snap < want.len() {
            stop = stop.min(want[next_snap]);
        }

        let status = {
            let m = &mut mon;
            let mut w =
                |g: &GridHierarchy, s: &FieldState, ev: StepEvent| m.on_event(g, s, ev);
            evol.advance_to_time(stop, &mut w)
        };
        match status {
            Err(EvolveError::NonFinite { time, .. }) => break Halt::Nan(time),
            Err(e) => return Err(e.into()),
            Ok(Watch::Stop) => break Halt::LambdaFloor,
            Ok(Watch::Continue) => {}
        }

        if evol.coarse_steps() % cadence == 0 {
            mon.record(evol.snapshot());
        }

        let slope = evol.central_slope();
        if slope.abs() > config.slope_floor {
            mon.note_lambda(evol.time(), 2.0 / slope.abs());
        }
        if extension.is_none() {
            if let Some((tb, _)) = mon.dispersal_fired {
                extension = Some((2.0 * tb).max(evol.time()).min(config.t_max));
            }
        }
    };

    if matches!(halt, Halt::Time | Halt::Dispersed) {
        mon.record(evol.snapshot());
    }

    let t_final = match halt {
        Halt::Nan(t) => t,
        Halt::LambdaFloor => mon.lambda_halt.map(|(t, _)| t).unwrap_or(evol.time()),
        _ => evol.time(),
    };

    let mut kind = OutcomeKind::Inconclusive;
    let mut dispersal = None;
    let mut blowup = None;
    let mut inconclusive = None;

    match halt {
        Halt::Nan(time) => inconclusive = Some(InconclusiveReason::SchemeNan { time }),
        Halt::Time => inconclusive = Some(InconclusiveReason::TimeExhausted),
        Halt::Dispersed => {
            let (tb, lmin) = mon.dispersal_fired.expect("dispersal halt without firing");
            let frac = energy_in_ball(&evol.snapshot(), 0.5 * config.radius) / e_initial;
            kind = OutcomeKind::Dispersal;
            dispersal = Some(DispersalInfo {
                t_bounce: tb,
                lambda_min: Some(lmin),
                interior_energy_fraction: Some(frac),
            });
        }
        Halt::LambdaFloor => {
            if let Some(overshoot_time) = evol.first_overshoot_time() {
                let points = mon.series.lambda_points();
                let window = config.fit_lambda_max.unwrap_or_else(|| {
                    mon.lambda_first_refine
                        .map(|l| l * config.fit_window_factor)
                        .unwrap_or(f64::INFINITY)
                });
                let fit = fit_power_law(&points, window, 0.0).ok();
                let lambda_last = mon
                    .lambda_halt
                    .map(|(_, l)| l)
                    .or_else(|| points.last().map(|&(_, l)| l))
                    .unwrap_or(f64::NAN);
                let t_est = fit
                    .as_ref()
                    .map(|f| f.t_blowup)
                    .unwrap_or(t_final + lambda_last);
                kind = OutcomeKind::Blowup;
                blowup = Some(BlowupInfo {
                    t_est,
                    lambda_last,
                    overshoot_time,
                    fit,
                });
            } else {
                inconclusive = Some(InconclusiveReason::CollapseWithoutOvershoot);
            }
        }
    }

    if let Some(b) = &blowup {
        debug_assert_eq!(mon.samples.len(), mon.series.records.len());
        for (rec, snap) in mon.series.records.iter_mut().zip(&mon.samples) {
            if let Some((ek, ep)) = lightcone_energies(snap, b.t_est) {
                rec.e_kinetic_lightcone = Some(ek);
                rec.e_potential_lightcone = Some(ep);
            }
        }
    }

    Ok(RunResult {
        outcome: RunOutcome {
            kind,
            t_final,
            max_abs_u: evol.max_abs_u_seen(),
            dispersal,
            blowup,
            inconclusive,
            diagnostics: mon.series,
        },
        snapshots: timed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub amplitude: f64,
    pub kind: OutcomeKind,
    pub t_final: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_last: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inconclusive: Option<InconclusiveReason>,
}

impl ProbeRecord {
    fn from_outcome(amplitude: f64, o: &RunOutcome) -> Self {
        ProbeRecord {
            amplitude,
            kind: o.kind,
            t_final: o.t_final,
            lambda_min: o.dispersal.as_ref().and_then(|d| d.lambda_min),
            lambda_last: o.blowup.as_ref().map(|b| b.lambda_last),
            inconclusive: o.inconclusive.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BisectionResult {
    /// Largest amplitude seen to disperse.
    pub lo: f64,
    /// Smallest amplitude seen to blow up.
    pub hi: f64,
    pub tolerance: f64,
    pub rounds: usize,
    /// Every probe in the order it was issued, endpoints first.
    pub probes: Vec<ProbeRecord>,
    pub base_points: usize,
    pub max_depth: usize,
    /// Hash of the probe template (its own amplitude field as given).
    pub template_hash: String,
}

#[derive(Debug, Error)]
pub enum BisectError {
    #[error("invalid bracket: need lo < hi and a positive tolerance")]
    BadBracket,
    #[error("lower endpoint A = {amplitude} did not disperse ({kind})")]
    LowerEndpoint { amplitude: f64, kind: OutcomeKind },
    #[error("upper endpoint A = {amplitude} did not blow up ({kind})")]
    UpperEndpoint { amplitude: f64, kind: OutcomeKind },
    #[error("probe at A = {amplitude} was inconclusive")]
    InconclusiveProbe {
        amplitude: f64,
        reason: InconclusiveReason,
        probes: Vec<ProbeRecord>,
    },
    #[error("outcome ordering inverted inside the bracket")]
    BracketInversion { probes: Vec<ProbeRecord> },
    #[error("bracket cannot shrink further at floating-point resolution")]
    ResolutionFloor { probes: Vec<ProbeRecord> },
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Bracket the critical amplitude between `lo` (must disperse) and `hi`
/// (must blow up) by repeated subdivision of the interval, running `jobs`
/// interior probes per round in parallel. Any inconclusive probe aborts the
/// search with the full probe history attached; so does any violation of
/// the dispersal-below / blowup-above ordering inside the bracket.
pub fn bisect_critical_amplitude(
    lo: f64,
    hi: f64,
    tol: f64,
    template: &SimConfig,
    jobs: usize,
) -> Result<BisectionResult, BisectError> {
    bisect_critical_amplitude_observed(lo, hi, tol, template, jobs, &|_, _| {})
}

/// [`bisect_critical_amplitude`] with a hook that sees each probe's full
/// outcome as it completes, so callers can stream per-probe series to disk.
/// The hook may run from several worker threads at once.
pub fn bisect_critical_amplitude_observed(
    lo: f64,
    hi: f64,
    tol: f64,
    template: &SimConfig,
    jobs: usize,
    observer: &(dyn Fn(f64, &RunOutcome) + Sync),
) -> Result<BisectionResult, BisectError> {
    template.validate().map_err(RunError::from)?;
    let probe = |a: f64| -> Result<ProbeRecord, BisectError> {
        let mut cfg = template.clone();
        cfg.amplitude = a;
        let res = run(&cfg)?;
        observer(a, &res.outcome);
        Ok(ProbeRecord::from_outcome(a, &res.outcome))
    };
    let mut out = bisect_with(&probe, lo, hi, tol, jobs)?;
    out.base_points = template.base_points;
    out.max_depth = template.max_depth;
    out.template_hash = template.hash_hex();
    Ok(out)
}

/// The bracketing engine behind [`bisect_critical_amplitude`], generic over
/// the probe so it can be exercised against synthetic classifiers.
fn bisect_with<F>(
    probe: &F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    jobs: usize,
) -> Result<BisectionResult, BisectError>
where
    F: Fn(f64) -> Result<ProbeRecord, BisectError> + Sync,
{
    if !(lo < hi) || !(tol > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(BisectError::BadBracket);
    }
    let jobs = jobs.max(1);
    let mut probes: Vec<ProbeRecord> = Vec::new();

    let plo = probe(lo)?;
    if plo.kind != OutcomeKind::Dispersal {
        return Err(BisectError::LowerEndpoint { amplitude: lo, kind: plo.kind });
    }
    probes.push(plo);
    let phi = probe(hi)?;
    if phi.kind != OutcomeKind::Blowup {
        return Err(BisectError::UpperEndpoint { amplitude: hi, kind: phi.kind });
    }
    probes.push(phi);

    let mut rounds = 0usize;
    while hi - lo > tol {
        rounds += 1;
        let mids: Vec<f64> = (1..=jobs)
            .map(|i| lo + (hi - lo) * i as f64 / (jobs + 1) as f64)
            .collect();
        let results: Vec<Result<ProbeRecord, BisectError>> = if jobs == 1 {
            vec![probe(mids[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> =
                    mids.iter().map(|&a| s.spawn(move || probe(a))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("probe thread panicked"))
                    .collect()
            })
        };

        let mut round = Vec::with_capacity(results.len());
        for res in results {
            round.push(res?);
        }
        probes.extend(round.iter().cloned());

        if let Some(r) = round.iter().find(|r| r.kind == OutcomeKind::Inconclusive) {
            return Err(BisectError::InconclusiveProbe {
                amplitude: r.amplitude,
                reason: r
                    .inconclusive
                    .clone()
                    .unwrap_or(InconclusiveReason::TimeExhausted),
                probes,
            });
        }

        // everything below the bracket must disperse, everything above must
        // blow up; the round itself must look like D...DB...B
        let (mut new_lo, mut new_hi) = (lo, hi);
        let mut seen_blowup = false;
        for r in &round {
            match r.kind {
                OutcomeKind::Blowup => {
                    if !seen_blowup {
                        seen_blowup = true;
                        new_hi = r.amplitude;
                    }
                }
                OutcomeKind::Dispersal => {
                    if seen_blowup {
                        return Err(BisectError::BracketInversion { probes });
                    }
                    new_lo = r.amplitude;
                }
                OutcomeKind::Inconclusive => unreachable!(),
            }
        }
        if !(new_hi - new_lo < hi - lo) {
            return Err(BisectError::ResolutionFloor { probes });
        }
        lo = new_lo;
        hi = new_hi;
    }

    Ok(BisectionResult {
        lo,
        hi,
        tolerance: tol,
        rounds,
        probes,
        base_points: 0,
        max_depth: 0,
        template_hash: String::new(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub base_points: [usize; 3],
    pub t_eval: f64,
    /// RMS of (coarse − middle) on the coarse nodes.
    pub diff_coarse: f64,
    /// RMS of (middle − fine) on the coarse nodes.
    pub diff_fine: f64,
    /// log2(diff_coarse / diff_fine); None when a flag below is set.
    pub observed_order: Option<f64>,
    /// Differences too small to carry an order.
    pub roundoff_limited: bool,
    /// diff_fine did not decrease below diff_coarse.
    pub non_monotone: bool,
}

/// Evolve the same initial data unrefined at N, 2N, 4N intervals to
/// `t_eval` and measure the self-convergence order from the displacement
/// differences on the shared coarse nodes.
pub fn convergence_study(config: &SimConfig, t_eval: f64) -> Result<ConvergenceStudy, RunError> {
    config.validate()?;
    if !(t_eval.is_finite() && t_eval > 0.0) {
        return Err(RunError::Argument(
            "convergence study needs a positive finite evaluation time".into(),
        ));
    }
    let family = config.initial_family();
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for m in [1usize, 2, 4] {
        let mut params = config.evolver_params();
        params.base_intervals = config.base_points * m;
        params.max_depth = 0;
        let mut evol = Evolution::new(params, |r| family.profile(r), |_| 0.0)?;
        let mut w = no_watch();
        evol.advance_to_time(t_eval, &mut w)?;
        finals.push(evol.state().levels[0].u.clone());
    }

    let n = config.base_points;
    let rms = |a: &dyn Fn(usize) -> f64| -> f64 {
        let s: f64 = (0..=n).map(|i| a(i) * a(i)).sum();
        (s / (n + 1) as f64).sqrt()
    };
    let diff_coarse = rms(&|i| finals[0][i] - finals[1][2 * i]);
    let diff_fine = rms(&|i| finals[1][2 * i] - finals[2][4 * i]);
    let scale = rms(&|i| finals[1][2 * i]);

    let floor = 1e-12 * (1.0 + scale);
    let roundoff_limited = diff_coarse < floor || diff_fine < floor;
    let non_monotone = !roundoff_limited && diff_fine >= diff_coarse;
    let observed_order = if roundoff_limited || non_monotone {
        None
    } else {
        Some((diff_coarse / diff_fine).log2())
    };

    Ok(ConvergenceStudy {
        base_points: [n, 2 * n, 4 * n],
        t_eval,
        diff_coarse,
        diff_fine,
        observed_order,
        roundoff_limited,
        non_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolver::BoundaryKind;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn quick_config(amplitude: f64) -> SimConfig {
        SimConfig::from_json_str(&format!(
            r#"{{"amplitude": {amplitude}, "radius": 2.0, "delta": 0.4,
                 "outer_radius": 8.0, "base_points": 256, "max_depth": 8,
                 "t_max": 8.0, "cadence_log2": 3}}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_amplitude_is_degenerate_dispersal() {
        let cfg = quick_config(0.0);
        let res = run(&cfg).unwrap();
        assert_eq!(res.outcome.kind, OutcomeKind::Dispersal);
        let d = res.outcome.dispersal.unwrap();
        assert_eq!(d.t_bounce, 0.0);
        assert!(d.lambda_min.is_none());
        assert_eq!(res.outcome.t_final, 0.0);
    }

    #[test]
    fn small_amplitude_disperses_with_a_bounce() {
        let res = run(&quick_config(0.5)).unwrap();
        assert_eq!(res.outcome.kind, OutcomeKind::Dispersal, "{:?}", res.outcome);
        let d = res.outcome.dispersal.unwrap();
        assert!(
            (d.t_bounce - 2.4).abs() < 0.3,
            "bounce at t = {}",
            d.t_bounce
        );
        let lmin = d.lambda_min.unwrap();
        assert!(lmin > 0.0 && lmin <= 8.0);
        // the field leaves the core region almost empty
        assert!(d.interior_energy_fraction.unwrap() < 0.05);
        assert!(res.outcome.max_abs_u < std::f64::consts::PI);
    }

    #[test]
    fn large_amplitude_blows_up_with_overshoot_first() {
        let res = run(&quick_config(1.3)).unwrap();
        assert_eq!(res.outcome.kind, OutcomeKind::Blowup, "{:?}", res.outcome);
        let b = res.outcome.blowup.unwrap();
        assert!(b.overshoot_time < res.outcome.t_final);
        assert!(b.lambda_last <= 10.0 * 8.0 / 256.0 / 256.0);
        assert!(b.t_est > res.outcome.t_final);
        // the series must resolve the collapse across its milestones
        let lams = res.outcome.diagnostics.lambda_points();
        let lmin = lams.iter().map(|&(_, l)| l).fold(f64::INFINITY, f64::min);
        assert!(lmin < 2e-3, "deepest sampled λ = {lmin}");
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let cfg = quick_config(1.2);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        let ja = serde_json::to_string(&a.outcome.diagnostics).unwrap();
        let jb = serde_json::to_string(&b.outcome.diagnostics).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn timed_snapshots_land_exactly() {
        let mut cfg = quick_config(0.5);
        cfg.snapshot_times = vec![0.0, 1.0, 2.5];
        cfg.t_max = 3.0;
        let res = run(&cfg).unwrap();
        let times: Vec<f64> = res.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times.len(), 3);
        assert_eq!(times[0], 0.0);
        assert_eq!(times[1], 1.0);
        assert_eq!(times[2], 2.5);
    }

    fn stub(threshold: f64, calls: &AtomicUsize) -> impl Fn(f64) -> Result<ProbeRecord, BisectError> + Sync + '_ {
        move |a: f64| {
            calls.fetch_add(1, Ordering::SeqCst);
            let kind = if a > threshold {
                OutcomeKind::Blowup
            } else {
                OutcomeKind::Dispersal
            };
            Ok(ProbeRecord {
                amplitude: a,
                kind,
                t_final: 1.0,
                lambda_min: None,
                lambda_last: None,
                inconclusive: None,
            })
        }
    }

    #[test]
    fn stub_bisection_converges_in_the_expected_probe_count() {
        let calls = AtomicUsize::new(0);
        let probe = stub(1.0, &calls);
        let r = bisect_with(&probe, 0.0, 2.0, 0.01, 1).unwrap();
        assert!(r.lo <= 1.0 && 1.0 <= r.hi);
        assert!(r.hi - r.lo <= 0.01);
        let interior = calls.load(Ordering::SeqCst) - 2;
        assert_eq!(interior, (2.0f64 / 0.01).log2().ceil() as usize);
        assert_eq!(r.rounds, interior);
    }

    #[test]
    fn stub_bisection_parallel_rounds_quarter_the_bracket() {
        let calls = AtomicUsize::new(0);
        let probe = stub(1.0, &calls);
        let r = bisect_with(&probe, 0.0, 2.0, 0.01, 3).unwrap();
        assert!(r.lo <= 1.0 && 1.0 <= r.hi);
        assert!(r.hi - r.lo <= 0.01);
        // bracket shrinks 4x per round: ceil(log4(200)) rounds of 3 probes
        assert_eq!(r.rounds, 4);
        assert_eq!(calls.load(Ordering::SeqCst), 2 + 3 * 4);
    }

    #[test]
    fn stub_bisection_rejects_bad_endpoints() {
        let calls = AtomicUsize::new(0);
        let probe = stub(10.0, &calls); // everything disperses
        match bisect_with(&probe, 0.0, 2.0, 0.01, 1) {
            Err(BisectError::UpperEndpoint { amplitude, kind }) => {
                assert_eq!(amplitude, 2.0);
                assert_eq!(kind, OutcomeKind::Dispersal);
            }
            other => panic!("expected upper-endpoint error, got {other:?}"),
        }
    }

    #[test]
    fn stub_bisection_aborts_on_inconclusive_probe() {
        let probe = |a: f64| -> Result<ProbeRecord, BisectError> {
            let (kind, inconclusive) = if (0.9..1.1).contains(&a) {
                (
                    OutcomeKind::Inconclusive,
                    Some(InconclusiveReason::TimeExhausted),
                )
            } else if a > 1.0 {
                (OutcomeKind::Blowup, None)
            } else {
                (OutcomeKind::Dispersal, None)
            };
            Ok(ProbeRecord {
                amplitude: a,
                kind,
                t_final: 1.0,
                lambda_min: None,
                lambda_last: None,
                inconclusive,
            })
        };
        match bisect_with(&probe, 0.0, 2.0, 0.01, 1) {
            Err(BisectError::InconclusiveProbe { amplitude, probes, .. }) => {
                assert!((0.9..1.1).contains(&amplitude));
                assert!(probes.len() >= 3);
            }
            other => panic!("expected inconclusive abort, got {other:?}"),
        }
    }

    #[test]
    fn stub_bisection_detects_inverted_ordering() {
        // non-monotone classifier: a blowup island below the dispersal zone
        let probe = |a: f64| -> Result<ProbeRecord, BisectError> {
            let kind = if a > 1.5 || (0.2..0.4).contains(&a) {
                OutcomeKind::Blowup
            } else {
                OutcomeKind::Dispersal
            };
            Ok(ProbeRecord {
                amplitude: a,
                kind,
                t_final: 1.0,
                lambda_min: None,
                lambda_last: None,
                inconclusive: None,
            })
        };
        match bisect_with(&probe, 0.0, 2.0, 0.001, 7) {
            Err(BisectError::BracketInversion { probes }) => assert!(probes.len() >= 9),
            other => panic!("expected inversion abort, got {other:?}"),
        }
    }

    #[test]
    fn mini_bisection_brackets_the_threshold() {
        // tolerance chosen so the probes stay clear of the threshold's
        // resolution-limited band at this depth
        let mut template = quick_config(0.0);
        template.base_points = 128;
        template.max_depth = 10;
        let r = bisect_critical_amplitude(0.5, 1.5, 0.35, &template, 2).unwrap();
        assert!(r.hi - r.lo <= 0.35);
        assert!(r.lo >= 0.5 && r.hi <= 1.5);
        assert!(r.lo < 1.07 && r.hi > 1.07, "bracket [{}, {}]", r.lo, r.hi);
        assert_eq!(r.base_points, 128);
        assert!(!r.template_hash.is_empty());
        for p in &r.probes {
            assert_ne!(p.kind, OutcomeKind::Inconclusive);
        }
    }

    #[test]
    fn convergence_order_is_second_for_smooth_subcritical_data() {
        let mut cfg = quick_config(0.5);
        cfg.base_points = 128;
        let s = convergence_study(&cfg, 1.0).unwrap();
        let order = s.observed_order.unwrap();
        assert!(
            (order - 2.0).abs() < 0.3,
            "observed order {order}, diffs {} / {}",
            s.diff_coarse,
            s.diff_fine
        );
    }

    #[test]
    fn convergence_flags_roundoff_for_the_zero_field() {
        let cfg = quick_config(0.0);
        let s = convergence_study(&cfg, 0.5).unwrap();
        assert!(s.roundoff_limited);
        assert!(s.observed_order.is_none());
    }

    #[test]
    fn first_order_boundary_degrades_the_measured_order() {
        // long boundary contact on a small domain; the O(h) boundary error
        // overtakes the O(h²) interior error as the mesh refines
        let mut cfg = quick_config(0.5);
        cfg.outer_radius = 4.0;
        cfg.base_points = 256;
        cfg.t_max = 10.0;
        cfg.boundary = BoundaryKind::SommerfeldFirstOrder;
        let s = convergence_study(&cfg, 5.0).unwrap();
        let order = s.observed_order.unwrap();
        assert!(
            order < 1.65,
            "expected degraded order with the cheap boundary, got {order}"
        );
        assert!(order > 0.8, "order collapsed entirely: {order}");
    }
}
