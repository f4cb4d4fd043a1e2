//! Closed-form reference objects: the static harmonic map and its scaling
//! orbit, the zero mode and linearization potential, the one-parameter family
//! of self-similar interior profiles, and the wave-packet initial-data family.
//!
//! Everything here is analytic; the evolver and diagnostics are tested against
//! these expressions, never the other way around.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticError {
    #[error("scale factor must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("similarity coordinate {0} outside [0, 1]")]
    SimilarityCoordinate(f64),
    #[error("similarity coordinate {0} outside the open interval (0, 1)")]
    SimilarityCoordinateInterior(f64),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("slope parameter must be positive and finite, got {0}")]
    NonPositiveSlope(f64),
    #[error("family parameter {name} must be positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
}

/// Orientation of a harmonic-map bubble: which of ±2·arctan(r/λ) the field is
/// locally shaped like. `Minus` is the branch reached from positive-amplitude
/// wave packets (the field dips toward −π at the origin side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// Orientation carried by a central slope: `Plus` iff `slope > 0`.
    pub fn of_slope(slope: f64) -> Sign {
        if slope >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", if *self == Sign::Plus { "+1" } else { "-1" })
    }
}

/// The degree-one equivariant harmonic map, rescaled and oriented:
/// `u(r) = sign · 2 · arctan(r / λ)`.
///
/// Every member is a static solution of the wave-map equation; the scaling
/// orbit is energy-invariant with total energy 4π, which is what makes the
/// problem energy-critical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticSolution {
    lambda: f64,
    sign: Sign,
}

impl StaticSolution {
    pub fn new(lambda: f64, sign: Sign) -> Result<Self, AnalyticError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(AnalyticError::NonPositiveScale(lambda));
        }
        Ok(StaticSolution { lambda, sign })
    }

    /// Unit-scale positive branch, `2 · arctan(r)`.
    pub fn unit() -> Self {
        StaticSolution {
            lambda: 1.0,
            sign: Sign::Plus,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.sign.as_f64() * 2.0 * (r / self.lambda).atan()
    }

    /// du/dr = sign · 2λ / (λ² + r²). At the origin this is sign · 2/λ, the
    /// slope the scale-factor diagnostic inverts.
    pub fn deriv(&self, r: f64) -> f64 {
        let l = self.lambda;
        self.sign.as_f64() * 2.0 * l / (l * l + r * r)
    }

    /// d²u/dr² = −sign · 4λr / (λ² + r²)².
    pub fn second_deriv(&self, r: f64) -> f64 {
        let l = self.lambda;
        let d = l * l + r * r;
        -self.sign.as_f64() * 4.0 * l * r / (d * d)
    }

    /// Static-equation residual u'' + u'/r − sin(2u)/(2r²), identically zero
    /// for every λ and sign; exposed so tests can confirm the cancellation
    /// with the same code paths used on numerical states. Requires r > 0.
    pub fn interior_residual(&self, r: f64) -> Result<f64, AnalyticError> {
        if !(r > 0.0) {
            return Err(AnalyticError::NonPositiveRadius(r));
        }
        let u = self.eval(r);
        Ok(self.second_deriv(r) + self.deriv(r) / r - (2.0 * u).sin() / (2.0 * r * r))
    }

    /// Energy inside the ball of radius `r_max`:
    /// `E(r ≤ r_max) = 4π · r_max² / (λ² + r_max²)`.
    ///
    /// Closed form of `π ∫₀^{r_max} (u_r² + sin²u / r²) r dr`; tends to the
    /// total energy 4π as r_max → ∞ and shows how a shrinking λ concentrates
    /// all of it at the origin.
    pub fn energy_in_ball(&self, r_max: f64) -> Result<f64, AnalyticError> {
        if !(r_max >= 0.0) || !r_max.is_finite() {
            return Err(AnalyticError::NonPositiveRadius(r_max));
        }
        let l2 = self.lambda * self.lambda;
        Ok(4.0 * std::f64::consts::PI * r_max * r_max / (l2 + r_max * r_max))
    }

    /// Total energy of the scaling orbit, 4π exactly.
    pub fn total_energy() -> f64 {
        4.0 * std::f64::consts::PI
    }
}

/// Scaling zero mode of the unit harmonic map: `v₀(r) = 2r / (1 + r²)`,
/// equal to `r · u_S'(r)`, the tangent to the scaling orbit at λ = 1. It lies
/// at the bottom of the continuous spectrum of the linearized operator; the
/// absence of a gap under it is what permits the adiabatic shrinking.
pub fn zero_mode(r: f64) -> f64 {
    2.0 * r / (1.0 + r * r)
}

/// Potential of the linearized operator `L v = −v'' − v'/r + V(r) v` around
/// the unit harmonic map: `V(r) = cos(2 u_S(r)) / r² = (1 − 6r² + r⁴) / ((1 + r²)² r²)`.
/// Requires r > 0 (V ~ 1/r² at the origin).
pub fn linearization_potential(r: f64) -> Result<f64, AnalyticError> {
    if !(r > 0.0) {
        return Err(AnalyticError::NonPositiveRadius(r));
    }
    let r2 = r * r;
    let d = 1.0 + r2;
    Ok((1.0 - 6.0 * r2 + r2 * r2) / (d * d * r2))
}

/// One-parameter family of solutions of the self-similar interior equation,
/// `f_α(ρ) = 2 · arctan( αρ / (1 + √(1 − ρ²)) )` on ρ ∈ [0, 1].
///
/// In similarity coordinates ρ = r/(T−t) the wave-map equation inside the past
/// light cone of (T, 0) reduces to
/// `(1−ρ²) f'' + (1/ρ − 2ρ) f' − sin(2f)/(2ρ²) = 0`,
/// and every member of this family solves it. None of them is analytic across
/// ρ = 1 except the trivial α cases, which is the classical argument that the
/// blowup cannot be exactly self-similar and must instead proceed by the
/// slower adiabatic shrinking of the harmonic map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimilarProfile {
    alpha: f64,
}

impl SelfSimilarProfile {
    pub fn new(alpha: f64) -> Result<Self, AnalyticError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(AnalyticError::NonPositiveSlope(alpha));
        }
        Ok(SelfSimilarProfile { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn check_closed(rho: f64) -> Result<(), AnalyticError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(AnalyticError::SimilarityCoordinate(rho));
        }
        Ok(())
    }

    /// Inner argument g(ρ) = αρ / (1 + √(1−ρ²)) with g(1) = α.
    fn g(&self, rho: f64) -> f64 {
        let s = (1.0 - rho * rho).sqrt();
        self.alpha * rho / (1.0 + s)
    }

    pub fn eval(&self, rho: f64) -> Result<f64, AnalyticError> {
        Self::check_closed(rho)?;
        Ok(2.0 * self.g(rho).atan())
    }

    /// df/dρ, from the closed-form chain
    /// g' = α / (s(1+s)), f' = 2g' / (1+g²), s = √(1−ρ²). Interior only.
    pub fn deriv(&self, rho: f64) -> Result<f64, AnalyticError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(AnalyticError::SimilarityCoordinateInterior(rho));
        }
        let s = (1.0 - rho * rho).sqrt();
        let g = self.g(rho);
        let gp = self.alpha / (s * (1.0 + s));
        Ok(2.0 * gp / (1.0 + g * g))
    }

    /// Residual of the interior equation in the non-divided form
    /// `(1−ρ²) f'' + (1/ρ − 2ρ) f' − sin(2f)/(2ρ²)`;
    /// analytically zero for every α > 0 and ρ ∈ (0, 1).
    pub fn interior_residual(&self, rho: f64) -> Result<f64, AnalyticError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(AnalyticError::SimilarityCoordinateInterior(rho));
        }
        let s = (1.0 - rho * rho).sqrt();
        let g = self.g(rho);
        let g2 = 1.0 + g * g;
        let gp = self.alpha / (s * (1.0 + s));
        let gpp = self.alpha * rho * (1.0 + 2.0 * s) / (s * s * s * (1.0 + s) * (1.0 + s));
        let fp = 2.0 * gp / g2;
        let fpp = 2.0 * gpp / g2 - 4.0 * g * gp * gp / (g2 * g2);
        // sin(2f) = sin(4 arctan g) in closed form avoids evaluating f at all
        let sin2f = 4.0 * g * (1.0 - g * g) / (g2 * g2);
        Ok((1.0 - rho * rho) * fpp + (1.0 / rho - 2.0 * rho) * fp - sin2f / (2.0 * rho * rho))
    }
}

/// Wave-packet initial data `u₀(r) = A · (r/R)³ · exp(−((r−R)/δ)⁴)`, released
/// at rest. The cubic factor enforces the regular odd behavior at the origin;
/// the quartic bump localizes the ring of energy near r = R with width δ. The
/// amplitude A is the dial the critical search turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDataFamily {
    pub amplitude: f64,
    pub radius: f64,
    pub delta: f64,
}

impl InitialDataFamily {
    pub fn new(amplitude: f64, radius: f64, delta: f64) -> Result<Self, AnalyticError> {
        if !amplitude.is_finite() {
            return Err(AnalyticError::NonPositiveParameter {
                name: "amplitude",
                value: amplitude,
            });
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(AnalyticError::NonPositiveParameter {
                name: "radius",
                value: radius,
            });
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(AnalyticError::NonPositiveParameter {
                name: "delta",
                value: delta,
            });
        }
        Ok(InitialDataFamily {
            amplitude,
            radius,
            delta,
        })
    }

    pub fn profile(&self, r: f64) -> f64 {
        let x = r / self.radius;
        let q = (r - self.radius) / self.delta;
        let q2 = q * q;
        self.amplitude * x * x * x * (-q2 * q2).exp()
    }

    /// du₀/dr = u₀(r) · [3/r − 4(r−R)³/δ⁴], written so that r = 0 is regular.
    pub fn profile_deriv(&self, r: f64) -> f64 {
        let rr = self.radius;
        let d = self.delta;
        let q = (r - rr) / d;
        let q2 = q * q;
        let envelope = (-q2 * q2).exp();
        self.amplitude * envelope * (r * r / (rr * rr * rr)) * (3.0 - 4.0 * r * q2 * q / d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    #[test]
    fn static_solution_values() {
        let s = StaticSolution::unit();
        assert_eq!(s.eval(0.0), 0.0);
        assert_relative_eq!(s.eval(1.0), PI / 2.0, max_relative = 1e-15);
        // approaches π (degree one)
        assert!(s.eval(1e8) > PI - 1e-7);
        // rescaled, reflected branch
        let m = StaticSolution::new(0.01, Sign::Minus).unwrap();
        assert_relative_eq!(m.eval(0.01), -PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(m.deriv(0.0), -200.0, max_relative = 1e-15);
    }

    #[test]
    fn static_solution_rejects_bad_scale() {
        assert!(StaticSolution::new(0.0, Sign::Plus).is_err());
        assert!(StaticSolution::new(-1.0, Sign::Plus).is_err());
        assert!(StaticSolution::new(f64::NAN, Sign::Plus).is_err());
        assert!(StaticSolution::new(f64::INFINITY, Sign::Plus).is_err());
    }

    #[test]
    fn static_derivatives_match_finite_differences() {
        let s = StaticSolution::new(0.7, Sign::Minus).unwrap();
        for &r in &[0.1, 0.5, 1.0, 3.0, 10.0] {
            let h = 1e-6;
            let fd1 = (s.eval(r + h) - s.eval(r - h)) / (2.0 * h);
            assert_relative_eq!(s.deriv(r), fd1, max_relative = 1e-8);
            // wider stencil for the second difference: at h = 1e-6 the
            // cancellation noise would swamp the small far-field curvature
            let h2 = 1e-4;
            let fd2 = (s.eval(r + h2) - 2.0 * s.eval(r) + s.eval(r - h2)) / (h2 * h2);
            assert_abs_diff_eq!(s.second_deriv(r), fd2, epsilon = 1e-6 + 1e-4 * fd2.abs());
        }
    }

    #[test]
    fn static_residual_vanishes_analytically() {
        for &lambda in &[0.01, 0.3, 1.0, 7.0] {
            for &sign in &[Sign::Plus, Sign::Minus] {
                let s = StaticSolution::new(lambda, sign).unwrap();
                for &r in &[1e-3, 0.1, 1.0, 5.0, 50.0] {
                    let res = s.interior_residual(r).unwrap();
                    // terms are O(1/λ) near the core; compare against their size
                    let scale = s.deriv(r).abs() / r + 1.0;
                    assert!(
                        res.abs() <= 1e-13 * scale,
                        "residual {res:e} at r={r}, lambda={lambda}"
                    );
                }
            }
        }
    }

    #[test]
    fn energy_in_ball_closed_form() {
        let s = StaticSolution::unit();
        // E(r ≤ λ) is exactly half the total: 4π λ²/(λ²+λ²)
        assert_relative_eq!(
            s.energy_in_ball(1.0).unwrap(),
            2.0 * PI,
            max_relative = 1e-15
        );
        assert_eq!(s.energy_in_ball(0.0).unwrap(), 0.0);
        // tends to the total 4π from below
        let near = s.energy_in_ball(1e6).unwrap();
        assert!(near < StaticSolution::total_energy());
        assert_relative_eq!(near, StaticSolution::total_energy(), max_relative = 1e-11);
        // scale invariance of the ball fraction: E_λ(aλ) independent of λ
        for &a in &[0.5, 2.0, 13.0] {
            let s1 = StaticSolution::new(1.0, Sign::Plus).unwrap();
            let s2 = StaticSolution::new(0.003, Sign::Minus).unwrap();
            assert_relative_eq!(
                s1.energy_in_ball(a).unwrap(),
                s2.energy_in_ball(a * 0.003).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn energy_in_ball_against_quadrature() {
        // independent oracle: adaptive-ish Simpson on the closed-form integrand
        let s = StaticSolution::new(0.8, Sign::Minus).unwrap();
        let r_max = 2.5;
        let integrand = |r: f64| {
            if r == 0.0 {
                return 0.0;
            }
            let ur = s.deriv(r);
            let su = s.eval(r).sin();
            (ur * ur + su * su / (r * r)) * r * PI
        };
        let n = 40_000;
        let h = r_max / n as f64;
        let mut acc = integrand(0.0) + integrand(r_max);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(i as f64 * h);
        }
        let quad = acc * h / 3.0;
        assert_relative_eq!(quad, s.energy_in_ball(r_max).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn zero_mode_is_scaling_tangent() {
        // v0 = r · d/dr[2 arctan r] and also −∂λ|_{λ=1} of 2 arctan(r/λ)
        let s = StaticSolution::unit();
        for &r in &[0.0, 0.3, 1.0, 4.0, 100.0] {
            assert_relative_eq!(zero_mode(r), r * s.deriv(r), max_relative = 1e-14);
            let dl = 1e-7;
            let num = (StaticSolution::new(1.0 - dl, Sign::Plus).unwrap().eval(r)
                - StaticSolution::new(1.0 + dl, Sign::Plus).unwrap().eval(r))
                / (2.0 * dl);
            assert_abs_diff_eq!(zero_mode(r), num, epsilon = 1e-6);
        }
        // peak value 1 at r = 1
        assert_eq!(zero_mode(1.0), 1.0);
    }

    #[test]
    fn linearization_potential_closed_form() {
        // V = cos(2 u_S)/r² computed two independent ways
        let s = StaticSolution::unit();
        for &r in &[0.05, 0.5, 1.0, 2.0, 9.0] {
            let direct = (2.0 * s.eval(r)).cos() / (r * r);
            assert_relative_eq!(
                linearization_potential(r).unwrap(),
                direct,
                max_relative = 1e-13
            );
        }
        assert_relative_eq!(linearization_potential(1.0).unwrap(), -1.0, max_relative = 1e-15);
        assert!(linearization_potential(0.0).is_err());
        assert!(linearization_potential(-1.0).is_err());
    }

    #[test]
    fn zero_mode_annihilated_by_linearized_operator() {
        // L v0 = −v0'' − v0'/r + V v0 should vanish: v0 is the zero mode
        let h = 1e-5;
        for &r in &[0.2, 0.7, 1.0, 2.5, 6.0] {
            let vpp = (zero_mode(r + h) - 2.0 * zero_mode(r) + zero_mode(r - h)) / (h * h);
            let vp = (zero_mode(r + h) - zero_mode(r - h)) / (2.0 * h);
            let lv = -vpp - vp / r + linearization_potential(r).unwrap() * zero_mode(r);
            assert_abs_diff_eq!(lv, 0.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn self_similar_family_solves_interior_equation() {
        for &alpha in &[0.5, 1.0, 2.0, 5.0] {
            let f = SelfSimilarProfile::new(alpha).unwrap();
            for i in 1..=9 {
                let rho = i as f64 / 10.0;
                let res = f.interior_residual(rho).unwrap();
                assert!(
                    res.abs() < 1e-12,
                    "alpha={alpha}, rho={rho}: residual {res:e}"
                );
            }
        }
    }

    #[test]
    fn self_similar_residual_detects_wrong_profile() {
        // sanity that the residual is not trivially zero: perturb the slope
        // used in f' while keeping f, and the residual must be O(1)
        let f = SelfSimilarProfile::new(1.0).unwrap();
        let rho: f64 = 0.5;
        let s = (1.0f64 - rho * rho).sqrt();
        let g = 1.0 * rho / (1.0 + s);
        let g2 = 1.0 + g * g;
        let wrong_fp = 2.0 * (1.1 / (s * (1.0 + s))) / g2;
        let fp = f.deriv(rho).unwrap();
        let true_res = f.interior_residual(rho).unwrap();
        let spoiled = true_res + (1.0 / rho - 2.0 * rho) * (wrong_fp - fp);
        assert!(spoiled.abs() > 1e-2);
    }

    #[test]
    fn self_similar_values_and_domain() {
        let f = SelfSimilarProfile::new(3.0).unwrap();
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
        assert_relative_eq!(f.eval(1.0).unwrap(), 2.0 * 3.0f64.atan(), max_relative = 1e-15);
        // monotone in ρ
        let mut prev = -1.0;
        for i in 0..=100 {
            let v = f.eval(i as f64 / 100.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(f.eval(1.0 + 1e-12).is_err());
        assert!(f.eval(-0.1).is_err());
        assert!(f.interior_residual(0.0).is_err());
        assert!(f.interior_residual(1.0).is_err());
        assert!(SelfSimilarProfile::new(0.0).is_err());
        assert!(SelfSimilarProfile::new(-2.0).is_err());
    }

    #[test]
    fn self_similar_deriv_matches_finite_difference() {
        let f = SelfSimilarProfile::new(1.7).unwrap();
        let h = 1e-7;
        for &rho in &[0.1, 0.4, 0.8] {
            let fd = (f.eval(rho + h).unwrap() - f.eval(rho - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(f.deriv(rho).unwrap(), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn initial_profile_shape() {
        let fam = InitialDataFamily::new(0.5, 2.0, 0.4).unwrap();
        assert_eq!(fam.profile(0.0), 0.0);
        // peak value A at r = R
        assert_relative_eq!(fam.profile(2.0), 0.5, max_relative = 1e-15);
        // effectively compactly supported: three widths out it is below 1e-30
        assert!(fam.profile(2.0 + 3.0 * 0.4).abs() < 1e-30);
        assert!(fam.profile(32.0) == 0.0 || fam.profile(32.0).abs() < 1e-300);
        // cubic origin behavior: u0(r)/r³ → (A/R³)·exp(−(R/δ)⁴); use a wide
        // bump so that constant is not denormal
        let wide = InitialDataFamily::new(1.0, 2.0, 2.0).unwrap();
        let tiny = 1e-5;
        assert_relative_eq!(
            wide.profile(tiny) / (tiny * tiny * tiny),
            (1.0 / 8.0) * (-1.0f64).exp(),
            max_relative = 1e-3
        );
    }

    #[test]
    fn initial_profile_deriv_matches_finite_difference() {
        let fam = InitialDataFamily::new(1.072, 2.0, 0.4).unwrap();
        let h = 1e-6;
        for &r in &[0.0, 0.3, 1.0, 1.9, 2.0, 2.4, 3.1] {
            let fd = if r == 0.0 {
                (fam.profile(h) - fam.profile(0.0)) / h
            } else {
                (fam.profile(r + h) - fam.profile(r - h)) / (2.0 * h)
            };
            assert_abs_diff_eq!(fam.profile_deriv(r), fd, epsilon = 1e-5);
        }
        assert_eq!(fam.profile_deriv(0.0), 0.0);
    }

    #[test]
    fn initial_family_validation() {
        assert!(InitialDataFamily::new(1.0, 0.0, 0.4).is_err());
        assert!(InitialDataFamily::new(1.0, 2.0, -0.1).is_err());
        assert!(InitialDataFamily::new(f64::NAN, 2.0, 0.4).is_err());
        // zero and negative amplitudes are legitimate family members
        assert!(InitialDataFamily::new(0.0, 2.0, 0.4).is_ok());
        assert!(InitialDataFamily::new(-0.5, 2.0, 0.4).is_ok());
    }
}
