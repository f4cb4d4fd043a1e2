//! Measurements on evolving states: the core scale factor, energies (total,
//! in-ball, light-cone split), the rescaled-profile collapse error, and the
//! power-law fit of the shrinking rate.

use crate::analytic::Sign;
use crate::grid::{Snapshot, SnapshotLevel};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Core scale λ = 2/|u_r(0)| and orientation sign(u_r(0)), read off the
/// finest level's central slope. The normalization is the harmonic map's:
/// d/dr [±2·arctan(r/λ)] at r = 0 is ±2/λ. `None` when the slope is zero or
/// not finite.
pub fn scale_factor(snap: &Snapshot) -> Option<(f64, Sign)> {
    scale_factor_from_slope(snap.central_slope())
}

pub fn scale_factor_from_slope(slope: f64) -> Option<(f64, Sign)> {
    if slope == 0.0 || !slope.is_finite() {
        return None;
    }
    Some((2.0 / slope.abs(), Sign::of_slope(slope)))
}

/// Kinetic and field (gradient + potential) energy inside radius `r_cut`:
/// `E_K = π ∫ v² r dr`, `E_P = π ∫ (u_r² + sin²u/r²) r dr`.
///
/// Composite over the hierarchy: each radial segment is integrated on the
/// finest level covering it. Nodal terms use the trapezoid rule; the gradient
/// term uses half-cell differences, which is the quadratic form the flux
/// stencil exactly conserves, so conservation checks measure the scheme and
/// not the quadrature. `r_cut` is truncated linearly inside its cell.
pub fn energy_parts_in_ball(snap: &Snapshot, r_cut: f64) -> (f64, f64) {
    let r_cut = r_cut.clamp(0.0, snap.outer_radius());
    let mut e_k = 0.0;
    let mut e_p = 0.0;
    let finest = snap.finest();
    for (k, lvl) in snap.levels.iter().enumerate() {
        // the segment this level owns: [extent/2, extent], except the finest
        // which owns its whole range
        let lo = if k == finest { 0.0 } else { lvl.extent() / 2.0 };
        let hi = lvl.extent().min(r_cut);
        if hi <= lo {
            continue;
        }
        let (k_part, p_part) = segment_energy(lvl, lo, hi);
        e_k += k_part;
        e_p += p_part;
    }
    (PI * e_k, PI * e_p)
}

/// Total energy π ∫₀ᴿ (v² + u_r² + sin²u/r²) r dr over the whole domain.
pub fn total_energy(snap: &Snapshot) -> f64 {
    let (e_k, e_p) = energy_parts_in_ball(snap, snap.outer_radius());
    e_k + e_p
}

/// Energy inside the ball of radius `r_ball`.
pub fn energy_in_ball(snap: &Snapshot, r_ball: f64) -> f64 {
    let (e_k, e_p) = energy_parts_in_ball(snap, r_ball);
    e_k + e_p
}

/// Energy split truncated to the past light cone of the blowup point
/// (T, r = 0): integration radius min(T − t, R). `None` once t ≥ T.
pub fn lightcone_energies(snap: &Snapshot, t_blowup: f64) -> Option<(f64, f64)> {
    let radius = t_blowup - snap.time;
    if radius <= 0.0 {
        return None;
    }
    Some(energy_parts_in_ball(snap, radius))
}

/// (kinetic, field) energy of one level's segment [lo, hi], without the π.
fn segment_energy(lvl: &SnapshotLevel, lo: f64, hi: f64) -> (f64, f64) {
    let h = lvl.h;
    let n = lvl.u.len() - 1;
    // nodal density r·(v², sin²u/r²) linearly interpolated off nodes
    let nodal = |i: usize| -> (f64, f64) {
        let r = i as f64 * h;
        if i == 0 {
            return (0.0, 0.0);
        }
        let s = lvl.u[i].sin();
        (lvl.v[i] * lvl.v[i] * r, s * s / r)
    };
    let i_lo = (lo / h).round() as usize;
    debug_assert!((i_lo as f64 * h - lo).abs() < 1e-9 * h.max(1e-300) + 1e-12);
    let mut e_k = 0.0;
    let mut e_p = 0.0;
    let mut i = i_lo;
    while i < n {
        let cell_l = i as f64 * h;
        if cell_l >= hi {
            break;
        }
        let cell_r = (i + 1) as f64 * h;
        let du = lvl.u[i + 1] - lvl.u[i];
        let slope2 = (du / h) * (du / h);
        let (k_l, p_l) = nodal(i);
        let (k_r, p_r) = nodal(i + 1);
        if cell_r <= hi {
            e_k += 0.5 * (k_l + k_r) * h;
            e_p += 0.5 * (p_l + p_r) * h + slope2 * (i as f64 + 0.5) * h * h;
        } else {
            // partial cell [cell_l, hi]: linear truncation
            let w = hi - cell_l;
            let f = w / h;
            let k_c = k_l + f * (k_r - k_l);
            let p_c = p_l + f * (p_r - p_l);
            e_k += 0.5 * (k_l + k_c) * w;
            e_p += 0.5 * (p_l + p_c) * w + slope2 * 0.5 * (hi * hi - cell_l * cell_l);
            break;
        }
        i += 1;
    }
    (e_k, e_p)
}

/// Sup-norm distance between the rescaled core and the harmonic map:
/// `max over η of |u(λη) − sign·2·arctan(η)|` on 64 log-spaced η in
/// [h_finest/λ, eta_max]. During an adiabatic collapse this tends to zero
/// even as u_r(0) diverges; for any other shrinking mechanism it stays O(1).
/// `None` when no scale is defined or the window is degenerate.
pub fn profile_collapse_error(snap: &Snapshot, eta_max: f64) -> Option<f64> {
    let (lambda, sign) = scale_factor(snap)?;
    let h = snap.levels[snap.finest()].h;
    let eta_min = h / lambda;
    if !(eta_min < eta_max) || lambda * eta_max > snap.outer_radius() {
        return None;
    }
    let log_lo = eta_min.ln();
    let log_hi = eta_max.ln();
    let mut worst = 0.0f64;
    for j in 0..64 {
        let eta = (log_lo + (log_hi - log_lo) * j as f64 / 63.0).exp();
        let (u, _) = snap.sample(lambda * eta).ok()?;
        let target = sign.as_f64() * 2.0 * eta.atan();
        worst = worst.max((u - target).abs());
    }
    Some(worst)
}

/// One sampled row of the run's time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    /// u_r(0) on the finest level.
    pub u_r_center: f64,
    /// 2/|u_r_center|, when defined.
    pub lambda: Option<f64>,
    pub sign: Option<Sign>,
    pub e_total: f64,
    /// Light-cone split, filled by the post-pass once a blowup time estimate
    /// exists.
    pub e_kinetic_lightcone: Option<f64>,
    pub e_potential_lightcone: Option<f64>,
    pub profile_error: Option<f64>,
    pub finest_level: usize,
}

/// Time-ordered diagnostic samples. Pushes with non-increasing time are
/// dropped, which makes forced samples idempotent when they coincide with the
/// cadence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub records: Vec<DiagnosticRecord>,
}

impl DiagnosticsSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append if strictly later than the last record; returns whether it was
    /// kept.
    pub fn push(&mut self, rec: DiagnosticRecord) -> bool {
        if let Some(last) = self.records.last() {
            if rec.t <= last.t {
                return false;
            }
        }
        self.records.push(rec);
        true
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// (t, λ) pairs of all records with a defined scale.
    pub fn lambda_points(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.lambda.map(|l| (r.t, l)))
            .collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {min} samples in the fit window, have {have}")]
    TooFewSamples { have: usize, min: usize },
    #[error("fit window spans a factor {span:.3} in λ; a full decade is required")]
    InsufficientDecade { span: f64 },
    #[error("λ window is empty or not shrinking toward the end of the series")]
    NoShrinkingTail,
}

/// Result of fitting λ(t) ≈ c·(T − t)^α on the late shrinking tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub t_blowup: f64,
    pub exponent: f64,
    /// (smallest, largest) λ actually used.
    pub lambda_window: (f64, f64),
    pub rms_residual: f64,
    pub samples_used: usize,
}

/// Fit λ ~ (T−t)^α to the monotone shrinking tail of `points` (time-ordered
/// (t, λ) pairs), using only samples with λ < `lambda_max` (and ≥
/// `lambda_min` if positive).
///
/// T is found by minimizing the RMS residual of the straight-line fit of ln λ
/// against ln(T−t): a coarse logarithmic scan of T − t_last over
/// [1e−3·λ_last, 2·λ_last], extended adaptively whenever the minimum lands on
/// an edge (the nominal bracket assumes λ/(T−t) ≳ 1/2 at the last sample,
/// which late adiabatic data can undershoot), then golden-section refinement.
/// Everything is computed from time differences, so the result is exactly
/// invariant under time translation.
pub fn fit_power_law(
    points: &[(f64, f64)],
    lambda_max: f64,
    lambda_min: f64,
) -> Result<PowerLawFit, FitError> {
    const MIN_SAMPLES: usize = 5;
    // maximal strictly-shrinking suffix
    let mut start = points.len();
    while start > 0 {
        let i = start - 1;
        if i + 1 < points.len() {
            let ok_order = points[i].0 < points[i + 1].0;
            let ok_shrink = points[i].1 > points[i + 1].1;
            if !(ok_order && ok_shrink) {
                break;
            }
        }
        if !(points[i].1 > 0.0) || !points[i].1.is_finite() {
            break;
        }
        start = i;
    }
    let tail: Vec<(f64, f64)> = points[start..]
        .iter()
        .filter(|(_, l)| *l < lambda_max && (lambda_min <= 0.0 || *l >= lambda_min))
        .copied()
        .collect();
    if tail.is_empty() {
        return Err(FitError::NoShrinkingTail);
    }
    if tail.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples {
            have: tail.len(),
            min: MIN_SAMPLES,
        });
    }
    let lam_hi = tail.first().unwrap().1;
    let lam_lo = tail.last().unwrap().1;
    let span = lam_hi / lam_lo;
    if !(span >= 10.0) {
        return Err(FitError::InsufficientDecade { span });
    }

    let t_last = tail.last().unwrap().0;
    let lam_last = lam_lo;
    // time offsets from the last sample: dt_i = t_last − t_i ≥ 0
    let data: Vec<(f64, f64)> = tail.iter().map(|&(t, l)| (t_last - t, l.ln())).collect();

    let rms = |delta: f64| -> f64 {
        let n = data.len() as f64;
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for &(dt, y) in &data {
            let x = (delta + dt).ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let var = sxx - sx * sx / n;
        let cov = sxy - sx * sy / n;
        let slope = cov / var;
        let icpt = (sy - slope * sx) / n;
        let mut ss = 0.0;
        for &(dt, y) in &data {
            let resid = y - (slope * (delta + dt).ln() + icpt);
            ss += resid * resid;
        }
        (ss / n).sqrt()
    };

    // coarse logarithmic scan with edge-adaptive bracket
    let mut lo = 1e-3 * lam_last;
    let mut hi = 2.0 * lam_last;
    let (mut best_i, mut grid) = (0usize, Vec::new());
    for _round in 0..80 {
        const M: usize = 256;
        grid = (0..M)
            .map(|j| {
                let f = j as f64 / (M - 1) as f64;
                lo * (hi / lo).powf(f)
            })
            .collect();
        best_i = 0;
        let mut best = f64::INFINITY;
        for (j, &d) in grid.iter().enumerate() {
            let v = rms(d);
            if v < best {
                best = v;
                best_i = j;
            }
        }
        if best_i == grid.len() - 1 && hi < 1e12 {
            hi *= 2.0;
        } else if best_i == 0 && lo > 1e-12 * lam_last {
            lo /= 10.0;
        } else {
            break;
        }
    }
    // golden-section refinement between the scan neighbors
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(grid.len() - 1)];
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = rms(c);
    let mut fd = rms(d);
    for _ in 0..120 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = rms(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = rms(d);
        }
    }
    let delta = 0.5 * (a + b);

    // final line fit at the optimal T
    let n = data.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(dt, y) in &data {
        let x = (delta + dt).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);
    Ok(PowerLawFit {
        t_blowup: t_last + delta,
        exponent: slope,
        lambda_window: (lam_lo, lam_hi),
        rms_residual: rms(delta),
        samples_used: data.len(),
    })
}

/// λ/(T−t) for each (t, λ) pair with t < T: the self-similarity rate. An
/// adiabatic (slower-than-self-similar) collapse drives this to zero.
pub fn rate_ratios(points: &[(f64, f64)], t_blowup: f64) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|(t, _)| *t < t_blowup)
        .map(|&(t, l)| (t, l / (t_blowup - t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::StaticSolution;
    use crate::grid::{refine, FieldState, GridHierarchy};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn snapshot_of(
        n: usize,
        r_out: f64,
        depth: usize,
        u: impl Fn(f64) -> f64 + Copy,
        v: impl Fn(f64) -> f64 + Copy,
    ) -> Snapshot {
        let mut g = GridHierarchy::build_uniform(r_out, n).unwrap();
        let mut s = FieldState::new(&g, 0.0);
        s.set_initial(&g, u, v);
        for _ in 0..depth {
            refine(&mut g, &mut s);
            // refill the new level from the analytic profiles so deep levels
            // are exact, not interpolated (tests of energies want that)
            let k = g.finest();
            let h = g.level(k).h;
            let lvl = &mut s.levels[k];
            for i in 0..lvl.u.len() {
                let r = i as f64 * h;
                lvl.u[i] = u(r);
                lvl.v[i] = v(r);
            }
            lvl.u[0] = 0.0;
            lvl.v[0] = 0.0;
        }
        Snapshot::capture(&g, &s)
    }

    #[test]
    fn scale_factor_reads_slope_and_sign() {
        // resolved map: h/λ = 0.0078/0.2 → (h/λ)² ≈ 1.5e−3 relative error
        let s = StaticSolution::new(0.2, Sign::Minus).unwrap();
        let snap = snapshot_of(256, 2.0, 0, |r| s.eval(r), |_| 0.0);
        let (lam, sign) = scale_factor(&snap).unwrap();
        assert_relative_eq!(lam, 0.2, max_relative = 5e-3);
        assert_eq!(sign, Sign::Minus);
        let s2 = StaticSolution::new(0.5, Sign::Plus).unwrap();
        let snap2 = snapshot_of(256, 2.0, 0, |r| s2.eval(r), |_| 0.0);
        let (lam2, sign2) = scale_factor(&snap2).unwrap();
        assert_relative_eq!(lam2, 0.5, max_relative = 1e-3);
        assert_eq!(sign2, Sign::Plus);
        // zero state has no scale
        let flat = snapshot_of(64, 2.0, 0, |_| 0.0, |_| 0.0);
        assert_eq!(scale_factor(&flat), None);
    }

    #[test]
    fn total_energy_matches_closed_form() {
        let s = StaticSolution::unit();
        let snap = snapshot_of(2048, 32.0, 0, |r| s.eval(r), |_| 0.0);
        let expected = s.energy_in_ball(32.0).unwrap();
        assert_relative_eq!(total_energy(&snap), expected, max_relative = 2e-4);
    }

    #[test]
    fn composite_energy_agrees_across_depths() {
        // the same analytic field measured on 1-level and 4-level hierarchies
        let s = StaticSolution::new(0.3, Sign::Plus).unwrap();
        let flat = snapshot_of(1024, 16.0, 0, |r| s.eval(r), |_| 0.0);
        let deep = snapshot_of(1024, 16.0, 3, |r| s.eval(r), |_| 0.0);
        let expected = s.energy_in_ball(16.0).unwrap();
        // the deep hierarchy resolves the core better: closer to continuum
        let e_flat = total_energy(&flat);
        let e_deep = total_energy(&deep);
        assert_relative_eq!(e_flat, expected, max_relative = 5e-3);
        assert_relative_eq!(e_deep, expected, max_relative = 5e-4);
        assert!((e_deep - expected).abs() < (e_flat - expected).abs());
    }

    #[test]
    fn energy_in_ball_truncates_correctly() {
        let s = StaticSolution::new(0.7, Sign::Minus).unwrap();
        let snap = snapshot_of(4096, 16.0, 0, |r| s.eval(r), |_| 0.0);
        for &rb in &[0.35, 0.7, 1.0, 5.43217, 16.0] {
            let expected = s.energy_in_ball(rb).unwrap();
            assert_relative_eq!(energy_in_ball(&snap, rb), expected, max_relative = 3e-4);
        }
        // monotone in the radius even across cells
        let mut prev = 0.0;
        for j in 1..50 {
            let e = energy_in_ball(&snap, j as f64 * 16.0 / 50.0 + 0.001);
            assert!(e >= prev);
            prev = e;
        }
        assert_eq!(energy_in_ball(&snap, 0.0), 0.0);
    }

    #[test]
    fn lightcone_split_and_bounds() {
        // u static (no kinetic part), v = r inside the ball contributes
        // E_K = π ∫ r²·r dr = π a⁴/4 for cone radius a
        let snap = snapshot_of(2048, 8.0, 0, |r| 0.1 * r, |r| r);
        let t_blowup = 3.0; // snapshot at t = 0 → cone radius 3
        let (e_k, _e_p) = lightcone_energies(&snap, t_blowup).unwrap();
        assert_relative_eq!(e_k, PI * 81.0 / 4.0, max_relative = 1e-3);
        // cone radius beyond the domain truncates at R, bounded by totals
        let (e_k_all, e_p_all) = lightcone_energies(&snap, 100.0).unwrap();
        let tot = total_energy(&snap);
        assert!(e_k_all + e_p_all <= tot * (1.0 + 1e-12));
        // past the blowup point there is no cone
        let late = snapshot_of(64, 8.0, 0, |r| 0.1 * r, |r| r);
        assert!(lightcone_energies(&late, 0.0).is_none());
        assert!(lightcone_energies(&late, -1.0).is_none());
    }

    #[test]
    fn lightcone_sum_never_exceeds_total() {
        let s = StaticSolution::new(0.4, Sign::Minus).unwrap();
        let snap = snapshot_of(512, 8.0, 2, |r| s.eval(r), |r| 0.3 * (-r).exp() * r);
        let tot = total_energy(&snap);
        for &t_b in &[0.1, 0.5, 1.0, 4.0, 7.9, 8.0, 30.0] {
            if let Some((ek, ep)) = lightcone_energies(&snap, t_b) {
                assert!(ek >= 0.0 && ep >= 0.0);
                assert!(ek + ep <= tot * (1.0 + 1e-12), "t_b={t_b}");
            }
        }
    }

    #[test]
    fn profile_error_small_on_exact_bubble() {
        let lam = 0.05;
        let s = StaticSolution::new(lam, Sign::Minus).unwrap();
        // resolved core: h = 8/4096 ≈ λ/25
        let snap = snapshot_of(4096, 8.0, 0, |r| s.eval(r), |_| 0.0);
        let err = profile_collapse_error(&snap, 10.0).unwrap();
        assert!(err < 2e-3, "collapse error on exact bubble: {err}");
        // a field with a central slope but the wrong shape: O(1) error
        let other = snapshot_of(4096, 8.0, 0, |r| 4.0 * r * (-r).exp(), |_| 0.0);
        let err_other = profile_collapse_error(&other, 10.0).unwrap();
        assert!(err_other > 0.5, "non-bubble should not collapse: {err_other}");
    }

    #[test]
    fn profile_error_none_when_degenerate() {
        // no slope at all
        let flat = snapshot_of(64, 8.0, 0, |_| 0.0, |_| 0.0);
        assert_eq!(profile_collapse_error(&flat, 10.0), None);
        // λ·eta_max far beyond the domain
        let s = StaticSolution::new(4.0, Sign::Plus).unwrap();
        let snap = snapshot_of(64, 8.0, 0, |r| s.eval(r), |_| 0.0);
        assert_eq!(profile_collapse_error(&snap, 10.0), None);
    }

    #[test]
    fn series_keeps_time_strictly_increasing() {
        let mut s = DiagnosticsSeries::new();
        let rec = |t: f64| DiagnosticRecord {
            t,
            u_r_center: -1.0,
            lambda: Some(2.0),
            sign: Some(Sign::Minus),
            e_total: 1.0,
            e_kinetic_lightcone: None,
            e_potential_lightcone: None,
            profile_error: None,
            finest_level: 0,
        };
        assert!(s.push(rec(0.0)));
        assert!(s.push(rec(0.5)));
        assert!(!s.push(rec(0.5)));
        assert!(!s.push(rec(0.4)));
        assert!(s.push(rec(0.6)));
        assert_eq!(s.len(), 3);
    }

    fn synthetic(t_blowup: f64, alpha: f64, c: f64, ts: &[f64]) -> Vec<(f64, f64)> {
        ts.iter()
            .map(|&t| (t, c * (t_blowup - t).powf(alpha)))
            .collect()
    }

    #[test]
    fn fit_recovers_planted_power_law() {
        // the acceptance-pinned synthetic: λ = (3−t)^1.1 sampled on [2.5, 2.999]
        let ts: Vec<f64> = (0..200).map(|i| 2.5 + 0.499 * i as f64 / 199.0).collect();
        let pts = synthetic(3.0, 1.1, 1.0, &ts);
        let fit = fit_power_law(&pts, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(fit.t_blowup, 3.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.exponent, 1.1, epsilon = 1e-3);
        assert!(fit.rms_residual < 1e-9);
        assert_eq!(fit.samples_used, 200);
    }

    #[test]
    fn fit_linear_control() {
        // λ = 0.5·(3−t): exponent exactly 1
        let ts: Vec<f64> = (0..100).map(|i| 2.0 + 0.995 * i as f64 / 99.0).collect();
        let pts = synthetic(3.0, 1.0, 0.5, &ts);
        let fit = fit_power_law(&pts, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(fit.exponent, 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(fit.t_blowup, 3.0, epsilon = 1e-4);
    }

    #[test]
    fn fit_is_exactly_translation_invariant() {
        // dyadic times and a dyadic shift keep every time difference exact in
        // floating point, so the fit must come out bitwise identical
        let ts: Vec<f64> = (0..128).map(|i| 2.5 + i as f64 / 256.0).collect();
        let pts = synthetic(3.0, 1.15, 0.8, &ts);
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(t, l)| (t + 17.25, l)).collect();
        let f1 = fit_power_law(&pts, 1.0, 0.0).unwrap();
        let f2 = fit_power_law(&shifted, 1.0, 0.0).unwrap();
        assert_eq!(f1.exponent, f2.exponent);
        assert_eq!(f1.t_blowup + 17.25, f2.t_blowup);
        assert_eq!(f1.rms_residual, f2.rms_residual);
    }

    #[test]
    fn fit_window_and_failure_modes() {
        let ts: Vec<f64> = (0..100).map(|i| 2.9 + 0.09 * i as f64 / 99.0).collect();
        // spans 0.1 → 0.01 in T−t: λ spans ~a factor 12.6 (1.1 exponent)
        let pts = synthetic(3.0, 1.1, 1.0, &ts);
        assert!(fit_power_law(&pts, 1.0, 0.0).is_ok());
        // cutting the window to half a decade must fail loudly
        let err = fit_power_law(&pts, 0.02, 0.0).unwrap_err();
        match err {
            FitError::InsufficientDecade { span } => assert!(span < 10.0),
            other => panic!("expected InsufficientDecade, got {other:?}"),
        }
        // growing λ has no shrinking tail
        let growing: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 1.0 + i as f64)).collect();
        assert!(matches!(
            fit_power_law(&growing, f64::INFINITY, 0.0),
            Err(FitError::NoShrinkingTail) | Err(FitError::TooFewSamples { .. })
        ));
        // too few points
        let few = synthetic(3.0, 1.1, 1.0, &[2.5, 2.9, 2.99]);
        assert!(matches!(
            fit_power_law(&few, 1.0, 0.0),
            Err(FitError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn fit_uses_only_the_monotone_tail() {
        // early bouncing λ followed by a clean collapse: the fit must ignore
        // the bounce
        let mut pts = vec![(0.0, 0.3), (0.5, 0.8), (1.0, 0.25), (1.5, 0.9)];
        let ts: Vec<f64> = (0..120).map(|i| 2.5 + 0.4995 * i as f64 / 119.0).collect();
        pts.extend(synthetic(3.0, 1.1, 1.0, &ts));
        // window below the bounce levels, as a real fit window would be
        let fit = fit_power_law(&pts, 0.4, 0.0).unwrap();
        assert_abs_diff_eq!(fit.t_blowup, 3.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.exponent, 1.1, epsilon = 1e-3);
    }

    #[test]
    fn rate_ratio_shrinks_for_superlinear_law() {
        let ts: Vec<f64> = (0..50).map(|i| 2.0 + 0.99 * i as f64 / 49.0).collect();
        let pts = synthetic(3.0, 1.1, 1.0, &ts);
        let rr = rate_ratios(&pts, 3.0);
        assert_eq!(rr.len(), 50);
        for w in rr.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        // λ/(T−t) = (T−t)^0.1 at c=1, and T−t = 1 at the first sample
        assert_relative_eq!(rr[0].1, 1.0, max_relative = 1e-12);
    }

    use std::f64::consts::PI;
}
