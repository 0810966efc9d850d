//! Closed-form limit laws: the κ constants, Yule characteristic functions,
//! the mutant-progeny integral, the continuous Luria-Delbrück law and its
//! shifted and scaled versions, recentering maps, and CDF recovery by
//! Gil-Pelaez inversion.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::quad::{integrate, integrate_complex, QuadOptions};

/// Hard cap on summed terms for every series in this module.
pub const MAX_TERMS: usize = 1_000_000;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult<T> {
    pub value: T,
    /// Bound on the truncation error of `value`.
    pub tail_bound: f64,
    /// Number of series terms evaluated.
    pub terms: usize,
}

/// Falling factorial `x(x−1)⋯(x−k+1)`, with `(x)_0 = 1`.
pub fn falling_factorial(x: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (x - f64::from(j)))
}

/// `1 − 1/s + (1/s) Σ_{k≥2} (s)_k/k! · (−1)^k/(k−1)`.
///
/// The terms have one sign and decay like `k^{−s−2}`. After `K` terms the
/// remaining sum is enclosed between two integral comparisons derived from
/// the exact term ratio `(k−s)(k−1)/(k(k+1))`; the midpoint is added to the
/// partial sum and the half-width, doubled, is reported as the tail bound.
fn kappa_series(shape: f64, tol: f64) -> Result<SeriesResult<f64>> {
    if !(tol > 0.0) {
        return param(format!("tolerance {tol} must be positive"));
    }
    let s = shape;
    // c_k = (s)_k / k!
    let mut c = s * (s - 1.0) / 2.0;
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut k = 2usize;
    let first_bound_k = (s.ceil() as usize + 2).max(4);
    loop {
        let kf = k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = c * sign / (kf - 1.0);
        // Kahan summation; up to 10^6 terms.
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        let terms = k - 1;

        if c == 0.0 {
            // (s)_k vanishes from here on for integral s.
            let value = 1.0 - 1.0 / s + sum / s;
            return Ok(SeriesResult { value, tail_bound: 0.0, terms });
        }
        if k >= first_bound_k {
            let mag = term.abs();
            let q = s + 2.0;
            let upper = mag * (0.5 / (kf - 1.0)).exp() * kf / (s + 1.0);
            let e = s * s / (kf - 1.0 - s) + 1.0 / (kf - 1.0);
            let lower = mag * (-e).exp() * (kf - 1.0).powf(q) * (kf + 1.0).powf(1.0 - q) / (s + 1.0);
            let tail_mid = 0.5 * (upper + lower) * term.signum();
            let half_width = 0.5 * (upper - lower).max(0.0);
            let rounding = 4.0 * f64::EPSILON * (sum.abs() + mag * kf);
            let tail_bound = (2.0 * half_width + rounding) / s;
            if tail_bound <= tol {
                let value = 1.0 - 1.0 / s + (sum + tail_mid) / s;
                return Ok(SeriesResult { value, tail_bound, terms });
            }
            if terms >= MAX_TERMS {
                return Err(Error::Convergence { terms, tail_bound, tol });
            }
        }
        c *= (s - kf) / (kf + 1.0);
        k += 1;
    }
}

/// κ_β for `β = b/(b−1) ∈ (1, 2]`.
pub fn kappa_beta(beta: f64, tol: f64) -> Result<SeriesResult<f64>> {
    if !(beta > 1.0 && beta <= 2.0) {
        return param(format!("beta = {beta} must lie in (1, 2]"));
    }
    kappa_series(beta, tol)
}

/// κ'_α for `α = (1+a)/(2+a) ∈ (0, 1)`.
pub fn kappa_alpha_prime(alpha: f64, tol: f64) -> Result<SeriesResult<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return param(format!("alpha = {alpha} must lie in (0, 1)"));
    }
    kappa_series(alpha, tol)
}

/// Characteristic function of a Yule process with jumps `jump`, unit birth
/// rate per unit mass, started from `start = shape·jump`:
/// `e^{iθ·start} E^shape (1 − (1−E)e^{iθ·jump})^{−shape}` with `E = e^{−jump·t}`.
///
/// Equal to the ratio form `(e^{iθ·jump}E / (1 − e^{iθ·jump} + e^{iθ·jump}E))^shape`
/// wherever the principal branch of the latter is continuous in θ, and
/// correct for every θ because `1 − (1−E)e^{iθ·jump}` has positive real part.
fn yule_cf_general(theta: f64, t: f64, jump: f64, shape: f64) -> Complex64 {
    let e = (-jump * t).exp();
    let phi = theta * jump;
    let y = Complex64::from_polar(1.0, phi);
    // 1 − y written without cancellation, so that θ = 0 gives exactly E.
    let one_minus_y = Complex64::new(2.0 * (0.5 * phi).sin().powi(2), -phi.sin());
    let base = one_minus_y + y * e;
    let log = I * theta * jump * shape + shape * e.ln() - shape * base.ln();
    log.exp()
}

/// `E[e^{iθZ(t)} | Z(0) = b]` for the b-ary Yule process.
pub fn yule_cf(theta: f64, t: f64, b: u32) -> Complex64 {
    let jump = f64::from(b - 1);
    yule_cf_general(theta, t, jump, f64::from(b) / jump)
}

/// Mutant-progeny CF for the scale-free system: jumps `2 + a`, start `1 + a`.
pub fn yule_cf_scalefree(theta: f64, t: f64, a: f64) -> Complex64 {
    yule_cf_general(theta, t, 2.0 + a, (1.0 + a) / (2.0 + a))
}

/// Term-ratio ceiling above which the direct κ_{b,u}(t) series is abandoned
/// in favour of the continuation around `e^{−(b−1)s} = 0`.
const DIRECT_RATIO_MAX: f64 = 0.97;
/// Where the continuation splits: `E* = SPLIT·|e^{−iu(b−1)} − 1|`. The direct
/// series at `E*` has ratio `(SPLIT² + 1 − SPLIT·|y − 1|)^{−1/2}`.
const SPLIT: f64 = 0.75;

/// `∫₀ᵗ e^{−(b−1)s}(φ_s(u) − 1) ds` through the closed form
/// `(1−y)/((b−1)y)·(β Log(1 − y + yE) + κ_{b,u}(t))`, `y = e^{iu(b−1)}`,
/// `E = e^{−(b−1)t}`.
///
/// The κ_{b,u}(t) series converges geometrically with ratio `|y−1|/|1−y+yE|`,
/// which exceeds one once `E < 2(1 − cos u(b−1))`. In that regime the integral
/// is split at `E*` where the series still converges; the piece near `E = 0`
/// is integrated term by term from the expansion
/// `(E/(E+r))^β = r^{−β}E^β Σ_j (−β choose j)(E/r)^j`, `r = ȳ − 1`.
pub fn mutant_integral_closed(u: f64, t: f64, b: u32, tol: f64) -> Result<SeriesResult<Complex64>> {
    if b < 2 {
        return param(format!("arity b = {b} must be at least 2"));
    }
    if !(t >= 0.0) || !(tol > 0.0) {
        return param(format!("need t >= 0 and tol > 0 (t = {t}, tol = {tol})"));
    }
    let zero = SeriesResult { value: Complex64::new(0.0, 0.0), tail_bound: 0.0, terms: 0 };
    if t == 0.0 || u == 0.0 {
        return Ok(zero);
    }
    let jump = f64::from(b - 1);
    let beta = f64::from(b) / jump;
    let y = Complex64::from_polar(1.0, u * jump);
    let w = y - 1.0;
    if w.norm() >= 1.0 {
        return Err(Error::Domain(format!(
            "|e^(iu(b-1)) - 1| = {} >= 1: series diverges, use quadrature",
            w.norm()
        )));
    }
    let e_t = (-jump * t).exp();
    let terminates = beta.fract() == 0.0;
    let ratio = |e: f64| w.norm() / (y * e - w).norm();
    if terminates || ratio(e_t) <= DIRECT_RATIO_MAX {
        return lemma_series(y, e_t, beta, jump, tol);
    }
    let e_split = SPLIT * w.norm();
    if ratio(e_split) > DIRECT_RATIO_MAX || e_split <= e_t {
        return Err(Error::Domain(format!(
            "u(b-1) = {} too large for the series representation, use quadrature",
            u * jump
        )));
    }
    let head = lemma_series(y, e_split, beta, jump, 0.5 * tol)?;
    let near_zero = small_e_piece(y, e_t, e_split, beta, 0.5 * tol * jump)?;
    Ok(SeriesResult {
        value: head.value + near_zero.value / jump,
        tail_bound: head.tail_bound + near_zero.tail_bound / jump,
        terms: head.terms + near_zero.terms,
    })
}

/// The closed form evaluated at `E = e^{−(b−1)t}` by direct summation of κ_{b,u}(t).
fn lemma_series(y: Complex64, e: f64, beta: f64, jump: f64, tol: f64) -> Result<SeriesResult<Complex64>> {
    let w = y - 1.0;
    let x = y * e - w;
    let prefactor = -w / (jump * y);
    let pref_abs = prefactor.norm();
    let q = w.norm() / x.norm();
    let x_inv = x.inv();

    let mut c = beta * (beta - 1.0) / 2.0;
    let mut w_pow = w; // w^{k−1}
    let mut x_inv_pow = x_inv; // x^{−(k−1)}
    let mut kappa = Complex64::new(0.0, 0.0);
    let mut k = 2usize;
    loop {
        let kf = k as f64;
        kappa += c * w_pow * (1.0 - x_inv_pow) / (kf - 1.0);
        let c_next = c * (beta - kf) / (kf + 1.0);
        let terms = k - 1;
        let tail = if c_next == 0.0 {
            0.0
        } else {
            let wk = w.norm().powi(k as i32);
            let qk = q.powi(k as i32);
            let geo_q = if q < 1.0 { qk / (1.0 - q) } else { f64::INFINITY };
            c_next.abs() / kf * (wk / (1.0 - w.norm()) + geo_q)
        };
        let tail_bound = tail * pref_abs;
        if tail_bound <= tol {
            let value = prefactor * (beta * x.ln() + kappa);
            return Ok(SeriesResult { value, tail_bound, terms });
        }
        if terms >= MAX_TERMS {
            return Err(Error::Convergence { terms, tail_bound, tol });
        }
        c = c_next;
        w_pow *= w;
        x_inv_pow *= x_inv;
        k += 1;
    }
}

/// `∫_{e_lo}^{e_hi} ((E/(E+r))^β − 1) dE` with `r = ȳ − 1` and `e_hi < |r|`.
fn small_e_piece(y: Complex64, e_lo: f64, e_hi: f64, beta: f64, tol: f64) -> Result<SeriesResult<Complex64>> {
    let r = y.conj() - 1.0;
    let r_abs = r.norm();
    let rho = e_hi / r_abs;
    debug_assert!(rho < 1.0);
    let r_pow_beta = (-beta * r.ln()).exp(); // r^{−β}
    let r_inv = r.inv();
    let scale = r_abs.powf(-beta) * e_hi.powf(beta + 1.0);

    let mut d = 1.0; // (−β choose j)
    let mut r_inv_pow = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut j = 0usize;
    loop {
        let jf = j as f64;
        let p = beta + jf + 1.0;
        let span = e_hi.powf(p) - e_lo.powf(p);
        sum += d * r_inv_pow * span / p;
        let d_next = d * (-beta - jf) / (jf + 1.0);
        let terms = j + 1;
        // |term_{j+1}| ≤ scale·|d_{j+1}|·ρ^{j+1}/p_{j+1}; later ratios ≤ ρ·max(1, (β+j+1)/(j+2)).
        let next_mag = scale * d_next.abs() * rho.powi(j as i32 + 1) / (p + 1.0);
        let ratio = rho * ((beta + jf + 1.0) / (jf + 2.0)).max(1.0);
        let tail_bound = if ratio < 1.0 { next_mag / (1.0 - ratio) } else { f64::INFINITY };
        if tail_bound <= tol {
            let value = r_pow_beta * sum - (e_hi - e_lo);
            return Ok(SeriesResult { value, tail_bound, terms });
        }
        if terms >= MAX_TERMS {
            return Err(Error::Convergence { terms, tail_bound, tol });
        }
        d = d_next;
        r_inv_pow *= r_inv;
        j += 1;
    }
}

/// Adaptive Gauss-Kronrod evaluation of the same integral as
/// [`mutant_integral_closed`], straight from [`yule_cf`].
pub fn mutant_integral_quadrature(u: f64, t: f64, b: u32, tol: f64) -> Result<Complex64> {
    if b < 2 {
        return param(format!("arity b = {b} must be at least 2"));
    }
    if !(t >= 0.0) || !(tol > 0.0) {
        return param(format!("need t >= 0 and tol > 0 (t = {t}, tol = {tol})"));
    }
    if t == 0.0 || u == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let jump = f64::from(b - 1);
    let opts = QuadOptions::new(tol, tol);
    let r = integrate_complex(|s| (-jump * s).exp() * (yule_cf(u, s, b) - 1.0), 0.0, t, opts)?;
    Ok(r.value)
}

/// CF of the continuous Luria-Delbrück law, `exp(−π|θ|/2 − iθ ln|θ|)`.
pub fn ld_cf(theta: f64) -> Complex64 {
    if theta == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let a = theta.abs();
    Complex64::new(-0.5 * PI * a, -theta * a.ln()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// Root cluster of b-ary recursive trees.
    T1BAry,
    /// Ancestral mass of the b-ary branching system at the tree-size time.
    T2Branching,
    /// Root cluster of scale-free trees.
    T3ScaleFree,
    /// Largest cluster of uniform recursive trees.
    E19Urt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub theorem: Theorem,
    pub c: f64,
    /// β for T1/T2, α for T3, unused for E19.
    pub shape: Option<f64>,
}

impl LimitSpec {
    pub fn new(theorem: Theorem, c: f64, shape: Option<f64>) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return param(format!("c = {c} must be positive"));
        }
        match (theorem, shape) {
            (Theorem::T1BAry | Theorem::T2Branching, Some(beta)) if beta > 1.0 && beta <= 2.0 => {}
            (Theorem::T3ScaleFree, Some(alpha)) if alpha > 0.0 && alpha < 1.0 => {}
            (Theorem::E19Urt, None) => {}
            _ => return param(format!("shape {shape:?} invalid for {theorem:?}")),
        }
        Ok(Self { theorem, c, shape })
    }

    pub fn bary(b: u32, c: f64) -> Result<Self> {
        if b < 2 {
            return param(format!("arity b = {b} must be at least 2"));
        }
        Self::new(Theorem::T1BAry, c, Some(f64::from(b) / f64::from(b - 1)))
    }

    pub fn branching(b: u32, c: f64) -> Result<Self> {
        if b < 2 {
            return param(format!("arity b = {b} must be at least 2"));
        }
        Self::new(Theorem::T2Branching, c, Some(f64::from(b) / f64::from(b - 1)))
    }

    pub fn scalefree(a: f64, c: f64) -> Result<Self> {
        if !(a > -1.0) {
            return param(format!("scale-free parameter a = {a} must be > -1"));
        }
        Self::new(Theorem::T3ScaleFree, c, Some((1.0 + a) / (2.0 + a)))
    }

    pub fn urt(c: f64) -> Result<Self> {
        Self::new(Theorem::E19Urt, c, None)
    }

    fn shape_value(&self) -> f64 {
        self.shape.unwrap_or(1.0)
    }

    /// Limit of the size ratio: `e^{−βc}`, `e^{−βc}/(β−1)`, `e^{−αc}` or `e^{−c}`.
    pub fn center(&self) -> f64 {
        let s = self.shape_value();
        let e = (-s * self.c).exp();
        match self.theorem {
            Theorem::T2Branching => e / (s - 1.0),
            _ => e,
        }
    }

    /// Scale `s` of the limit `−s(Z + shift)`; also the `ln ln n` coefficient.
    pub fn scale(&self) -> f64 {
        let s = self.shape_value();
        let base = s * self.c * (-s * self.c).exp();
        match self.theorem {
            Theorem::T2Branching => base / (s - 1.0),
            _ => base,
        }
    }

    /// Shift inside the limit `−s(Z + shift)`.
    pub fn shift(&self, tol: f64) -> Result<f64> {
        let s = self.shape_value();
        Ok(match self.theorem {
            Theorem::T1BAry => (s * self.c).ln() - kappa_beta(s, tol)?.value,
            Theorem::T2Branching => (s * self.c).ln() - kappa_beta(s, tol)?.value + 1.0 - 1.0 / s,
            Theorem::T3ScaleFree => (s * self.c).ln() - kappa_alpha_prime(s, tol)?.value,
            Theorem::E19Urt => self.c.ln(),
        })
    }

    /// Coefficient of the germ recentering, `β/(β−1)` or `α/(1−α)`.
    pub fn germ_factor(&self) -> Result<f64> {
        let s = self.shape_value();
        match self.theorem {
            Theorem::T1BAry | Theorem::T2Branching => Ok(s / (s - 1.0)),
            Theorem::T3ScaleFree => Ok(s / (1.0 - s)),
            Theorem::E19Urt => param("uniform recursive trees have no germ statistic"),
        }
    }
}

/// A limit law `−s(Z + shift)` with its constants resolved once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    pub spec: LimitSpec,
    pub scale: f64,
    pub shift: f64,
}

impl LimitLaw {
    pub fn new(spec: LimitSpec, tol: f64) -> Result<Self> {
        Ok(Self { spec, scale: spec.scale(), shift: spec.shift(tol)? })
    }

    pub fn cf(&self, theta: f64) -> Complex64 {
        (-I * theta * self.scale * self.shift).exp() * ld_cf(-self.scale * theta)
    }

    /// Exponential decay rate of `|cf|`.
    pub fn decay(&self) -> f64 {
        0.5 * PI * self.scale
    }

    pub fn cdf(&self, x: f64, tol: f64) -> Result<f64> {
        check_cdf_tol(tol)?;
        gil_pelaez_cdf(|t| self.cf(t), self.decay(), x, tol)
    }

    /// The `q`-quantile by bisection on [`LimitLaw::cdf`].
    pub fn quantile(&self, q: f64, tol: f64) -> Result<f64> {
        quantile_by_bisection(|x| self.cdf(x, tol), q, self.scale, tol)
    }
}

/// CF of the limit of the recentered germ statistic:
/// `F·c·(Z − κ + ln(shape·c) + 1 − 1/shape)` with `F` the germ factor.
pub fn germ_limit_cf(theta: f64, spec: &LimitSpec, tol: f64) -> Result<Complex64> {
    let factor = spec.germ_factor()?;
    let s = spec.shape_value();
    let kappa = match spec.theorem {
        Theorem::T3ScaleFree => kappa_alpha_prime(s, tol)?.value,
        _ => kappa_beta(s, tol)?.value,
    };
    let scale = factor * spec.c;
    let shift = (s * spec.c).ln() - kappa + 1.0 - 1.0 / s;
    Ok((I * theta * scale * shift).exp() * ld_cf(scale * theta))
}

/// CF of the right-hand side of the selected limit theorem.
pub fn limit_variable_cf(theta: f64, spec: &LimitSpec, tol: f64) -> Result<Complex64> {
    Ok(LimitLaw::new(*spec, tol)?.cf(theta))
}

fn check_cdf_tol(tol: f64) -> Result<()> {
    if !(tol > 1e-12 && tol < 1e-2) {
        return param(format!("CDF tolerance {tol} must lie in (1e-12, 1e-2)"));
    }
    Ok(())
}

/// Distribution function of the selected limit law at `x`.
pub fn limit_cdf(x: f64, spec: &LimitSpec, tol: f64) -> Result<f64> {
    check_cdf_tol(tol)?;
    LimitLaw::new(*spec, tol * 1e-2)?.cdf(x, tol)
}

/// Distribution function of the Luria-Delbrück variable itself.
pub fn ld_cdf(z: f64, tol: f64) -> Result<f64> {
    check_cdf_tol(tol)?;
    gil_pelaez_cdf(ld_cf, 0.5 * PI, z, tol)
}

/// `F(x) = 1/2 − (1/π)∫₀^∞ Im[e^{−iθx}φ(θ)]/θ dθ` for a CF with
/// `|φ(θ)| ≤ e^{−decay·|θ|}`.
///
/// The head `[0, 1]` is integrated in `θ = v²`, which removes the `1/θ` and
/// `ln θ` endpoint behaviour; the tail `[1, Θ]` stops where the neglected
/// part is below `tol/2`.
pub fn gil_pelaez_cdf<F: Fn(f64) -> Complex64>(cf: F, decay: f64, x: f64, tol: f64) -> Result<f64> {
    if !(decay > 0.0) {
        return param(format!("CF decay rate {decay} must be positive"));
    }
    let integrand = |theta: f64| (Complex64::from_polar(1.0, -theta * x) * cf(theta)).im / theta;
    let head_opts = QuadOptions { abs_tol: 0.25 * PI * tol, rel_tol: 0.0, max_intervals: 20_000 };
    let (head, _) = integrate(
        |v| if v == 0.0 { 0.0 } else { 2.0 * v * integrand(v * v) },
        0.0,
        1.0,
        head_opts,
    )?;
    // Neglected tail: (1/π)∫_Θ^∞ e^{−λθ}/θ dθ ≤ e^{−λΘ}/(πλΘ).
    let cut_err = |big: f64| (-decay * big).exp() / (PI * decay * big);
    let mut big = 1.0f64;
    while cut_err(big) >= 0.5 * tol {
        big *= 1.25;
    }
    let mut tail = 0.0;
    if big > 1.0 {
        // Chunked so that each chunk holds a bounded number of oscillations.
        let chunk = (4.0 * PI / (x.abs() + 1.0)).clamp(0.5, 8.0);
        let pieces = ((big - 1.0) / chunk).ceil().max(1.0) as usize;
        let opts = QuadOptions {
            abs_tol: 0.25 * PI * tol / pieces as f64,
            rel_tol: 0.0,
            max_intervals: 2_000,
        };
        for i in 0..pieces {
            let lo = 1.0 + (big - 1.0) * i as f64 / pieces as f64;
            let hi = 1.0 + (big - 1.0) * (i + 1) as f64 / pieces as f64;
            tail += integrate(&integrand, lo, hi, opts)?.0;
        }
    }
    Ok((0.5 - (head + tail) / PI).clamp(0.0, 1.0))
}

pub(crate) fn quantile_by_bisection<F: Fn(f64) -> Result<f64>>(cdf: F, q: f64, scale: f64, tol: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return param(format!("quantile level {q} must lie in (0, 1)"));
    }
    let step = scale.max(1e-3);
    let (mut lo, mut hi) = (-step, step);
    let mut guard = 0;
    while cdf(lo)? > q {
        lo -= (hi - lo) * 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Domain("quantile bracket search diverged".into()));
        }
    }
    while cdf(hi)? < q {
        hi += (hi - lo) * 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Domain("quantile bracket search diverged".into()));
        }
    }
    let x_tol = tol * scale.max(1.0);
    while hi - lo > x_tol {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_n(n: u64) -> Result<(f64, f64)> {
    if n < 3 {
        return param(format!("n = {n} must be at least 3 so that ln ln n > 0"));
    }
    let ln_n = (n as f64).ln();
    Ok((ln_n, ln_n.ln()))
}

/// `(ratio − center)·ln n − s·ln ln n`.
pub fn recenter(sample_ratio: f64, n: u64, spec: &LimitSpec) -> Result<f64> {
    let (ln_n, lnln_n) = check_n(n)?;
    Ok(recenter_real(sample_ratio, ln_n, lnln_n, spec))
}

/// [`recenter`] with `ln n` and `ln ln n` supplied, for non-integral sizes.
pub fn recenter_real(sample_ratio: f64, ln_n: f64, lnln_n: f64, spec: &LimitSpec) -> f64 {
    (sample_ratio - spec.center()) * ln_n - spec.scale() * lnln_n
}

/// `Δ/ln³n − 3·F·c·ln ln n` with `F = β/(β−1)` or `α/(1−α)`.
pub fn germ_recenter(delta: f64, n: u64, spec: &LimitSpec) -> Result<f64> {
    let (ln_n, lnln_n) = check_n(n)?;
    germ_recenter_real(delta, ln_n, lnln_n, spec)
}

pub fn germ_recenter_real(delta: f64, ln_n: f64, lnln_n: f64, spec: &LimitSpec) -> Result<f64> {
    let factor = spec.germ_factor()?;
    Ok(delta / ln_n.powi(3) - 3.0 * factor * spec.c * lnln_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falling_factorial_examples() {
        assert_eq!(falling_factorial(2.0, 2), 2.0);
        assert_eq!(falling_factorial(2.0, 3), 0.0);
        assert_eq!(falling_factorial(1.5, 2), 0.75);
        assert_eq!(falling_factorial(-0.3, 0), 1.0);
    }

    #[test]
    fn kappa_two_is_one() {
        let r = kappa_beta(2.0, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.tail_bound, 0.0);
        // k = 2 plus the vanishing k = 3 term.
        assert_eq!(r.terms, 2);
    }

    // Frozen from an independent 40-digit evaluation of ψ(s) + γ, which the
    // series sums to in closed form.
    const KAPPA_ORACLE: [(f64, f64); 5] = [
        (1.5, 0.613_705_638_880_109_4),
        (1.25, 0.349_762_131_525_267_45),
        (0.5, -1.386_294_361_119_890_6),
        (2.0 / 3.0, -0.741_018_750_885_055_7),
        (0.999, -0.001_646_137_207_112_567_3),
    ];

    #[test]
    fn kappa_matches_oracle_within_reported_bound() {
        for &(s, exact) in &KAPPA_ORACLE {
            for tol in [1e-6, 1e-9, 1e-12] {
                let r = if s > 1.0 { kappa_beta(s, tol) } else { kappa_alpha_prime(s, tol) }.unwrap();
                assert!(r.tail_bound <= tol);
                assert!(
                    (r.value - exact).abs() <= r.tail_bound + 1e-14,
                    "s={s} tol={tol}: {} vs {exact} (bound {})",
                    r.value,
                    r.tail_bound
                );
            }
        }
    }

    #[test]
    fn kappa_domain_checks() {
        assert!(kappa_beta(1.0, 1e-8).is_err());
        assert!(kappa_beta(2.5, 1e-8).is_err());
        assert!(kappa_alpha_prime(1.0, 1e-8).is_err());
        assert!(kappa_alpha_prime(0.5, 0.0).is_err());
    }

    #[test]
    fn kappa_term_cap_reports_failure() {
        // α → 0 decays like k^{-2}; 1e-15 is out of reach in 10^6 terms.
        match kappa_alpha_prime(0.01, 1e-15) {
            Err(Error::Convergence { terms, .. }) => assert!(terms >= MAX_TERMS),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tighter_tolerance_stays_within_looser_bound() {
        for s in [0.3, 0.5, 0.9, 1.1, 1.5, 1.9] {
            let loose = kappa_series(s, 1e-5).unwrap();
            let tight = kappa_series(s, 1e-11).unwrap();
            assert!((loose.value - tight.value).abs() <= loose.tail_bound + tight.tail_bound);
        }
    }

    #[test]
    fn yule_cf_trivial_points() {
        for b in [2, 3, 7] {
            for theta in [-2.0, 0.3, 1.7] {
                let v = yule_cf(theta, 0.0, b);
                let exact = Complex64::from_polar(1.0, theta * f64::from(b));
                assert!((v - exact).norm() < 1e-14);
            }
            assert!((yule_cf(0.0, 1.3, b) - 1.0).norm() < 1e-14);
        }
        let v = yule_cf_scalefree(0.4, 0.0, 0.7);
        assert!((v - Complex64::from_polar(1.0, 0.4 * 1.7)).norm() < 1e-14);
        assert!((yule_cf_scalefree(0.0, 2.0, -0.5) - 1.0).norm() < 1e-14);
    }

    #[test]
    fn yule_cf_matches_ratio_form() {
        // Literal ratio form with principal powers, valid for small θ(b−1).
        let ratio_form = |theta: f64, t: f64, b: u32| {
            let j = f64::from(b - 1);
            let y = Complex64::from_polar(1.0, theta * j);
            let e = (-j * t).exp();
            (y * e / (1.0 - y + y * e)).powf(f64::from(b) / j)
        };
        for b in [2, 3, 5] {
            for &t in &[0.1, 0.5, 1.0, 3.0] {
                for &theta in &[-0.5, 0.05, 0.3, 0.7] {
                    let d = yule_cf(theta, t, b) - ratio_form(theta, t, b);
                    assert!(d.norm() < 1e-12, "b={b} t={t} θ={theta}");
                }
            }
        }
        // Mpmath value of the ratio form at b = 2, t = 1, θ = 0.5.
        let v = yule_cf(0.5, 1.0, 2);
        assert!((v - Complex64::new(-0.272_730_096_735_124_46, 0.378_485_886_479_169_02)).norm() < 1e-14);
    }

    #[test]
    fn cf_modulus_and_symmetry() {
        for k in -40..=40 {
            let theta = k as f64 * 0.173;
            for v in [ld_cf(theta), yule_cf(theta, 0.8, 3), yule_cf_scalefree(theta, 0.6, 1.5)] {
                assert!(v.norm() <= 1.0 + 1e-14);
            }
            assert!((ld_cf(-theta) - ld_cf(theta).conj()).norm() < 1e-15);
            assert!((yule_cf(-theta, 0.8, 3) - yule_cf(theta, 0.8, 3).conj()).norm() < 1e-14);
            assert!((ld_cf(theta).norm() - (-0.5 * PI * theta.abs()).exp()).abs() < 1e-15);
        }
        assert_eq!(ld_cf(0.0), Complex64::new(1.0, 0.0));
    }

    // Frozen from 30-digit adaptive quadrature in mpmath of
    // ∫₀ᵗ e^{−(b−1)s}(φ_s(u) − 1) ds.
    const LEMMA_ORACLE: [(u32, f64, f64, f64, f64); 6] = [
        (2, 1.0, 0.1, -0.040_054_271_190_576_694, 0.192_345_099_014_261_04),
        (3, 0.5, 0.01, -0.000_493_797_201_534_993_82, 0.014_983_955_606_787_511),
        (3, 2.0, 0.1, -0.182_541_928_166_929_95, 0.220_077_265_694_970_72),
        (5, 0.5, 0.1, -0.106_369_674_504_86, 0.123_860_218_015_275_85),
        (5, 2.0, 0.01, -0.018_466_194_706_058_357, 0.038_741_772_900_334_77),
        (5, 2.0, 0.1, -0.141_466_058_138_925_77, 0.127_600_534_380_503_44),
    ];

    #[test]
    fn closed_form_matches_oracle() {
        for &(b, t, u, re, im) in &LEMMA_ORACLE {
            let exact = Complex64::new(re, im);
            let closed = mutant_integral_closed(u, t, b, 1e-14).unwrap();
            assert!((closed.value - exact).norm() <= 1e-12 * exact.norm(), "b={b} t={t} u={u}: {closed:?}");
            let quad = mutant_integral_quadrature(u, t, b, 1e-13).unwrap();
            assert!((quad - exact).norm() <= 1e-11 * exact.norm(), "b={b} t={t} u={u}: {quad}");
        }
    }

    #[test]
    fn mutant_integral_trivial_points() {
        for b in [2, 3, 5] {
            assert_eq!(mutant_integral_closed(0.1, 0.0, b, 1e-12).unwrap().value, Complex64::new(0.0, 0.0));
            assert_eq!(mutant_integral_closed(0.0, 1.0, b, 1e-12).unwrap().value, Complex64::new(0.0, 0.0));
            assert_eq!(mutant_integral_quadrature(0.0, 1.0, b, 1e-12).unwrap(), Complex64::new(0.0, 0.0));
            assert_eq!(mutant_integral_quadrature(0.1, 0.0, b, 1e-12).unwrap(), Complex64::new(0.0, 0.0));
            // Series at t → 0: the Log and κ parts cancel.
            let tiny = mutant_integral_closed(0.05, 1e-9, b, 1e-15).unwrap().value;
            assert!(tiny.norm() < 1e-9);
        }
    }

    #[test]
    fn mutant_integral_rejects_large_u() {
        assert!(matches!(mutant_integral_closed(0.4, 1.0, 5, 1e-10), Err(Error::Domain(_))));
    }

    #[test]
    fn cauchy_cdf_by_inversion() {
        for x in [-3.0, -1.0, 0.0, 1.0, 3.0f64] {
            let f = gil_pelaez_cdf(|t| Complex64::new((-t.abs()).exp(), 0.0), 1.0, x, 1e-10).unwrap();
            let exact = 0.5 + x.atan() / PI;
            assert!((f - exact).abs() < 1e-8, "x={x}: {f} vs {exact}");
        }
    }

    #[test]
    fn limit_constants_for_binary_tree() {
        let spec = LimitSpec::bary(2, 1.0).unwrap();
        let law = LimitLaw::new(spec, 1e-12).unwrap();
        assert!((law.scale - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((law.shift - ((2.0f64).ln() - 1.0)).abs() < 1e-12);
        assert_eq!(law.cf(0.0), Complex64::new(1.0, 0.0));
        for theta in [-1.0, 0.25, 3.0] {
            assert!((law.cf(theta).norm() - (-0.5 * PI * law.scale * theta.abs()).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn limit_spec_validation() {
        assert!(LimitSpec::new(Theorem::T1BAry, 1.0, Some(0.5)).is_err());
        assert!(LimitSpec::new(Theorem::T3ScaleFree, 1.0, Some(1.5)).is_err());
        assert!(LimitSpec::new(Theorem::E19Urt, 1.0, Some(1.5)).is_err());
        assert!(LimitSpec::urt(0.0).is_err());
        assert!(LimitSpec::urt(1.0).unwrap().germ_factor().is_err());
    }

    #[test]
    fn location_scale_consistency() {
        let tol = 1e-8;
        let spec = LimitSpec::bary(2, 1.0).unwrap();
        let law = LimitLaw::new(spec, 1e-12).unwrap();
        for z in [-1.0, 0.0, 1.0] {
            let lhs = law.cdf(-law.scale * (z + law.shift), tol).unwrap();
            let rhs = 1.0 - ld_cdf(z, tol).unwrap();
            assert!((lhs - rhs).abs() <= 2.0 * tol, "z={z}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn median_maps_through_location_scale() {
        let tol = 1e-9;
        let law = LimitLaw::new(LimitSpec::bary(2, 1.0).unwrap(), 1e-12).unwrap();
        let median_z = quantile_by_bisection(|z| ld_cdf(z, tol), 0.5, 1.0, tol).unwrap();
        let median = law.quantile(0.5, tol).unwrap();
        let mapped = -law.scale * (median_z + law.shift);
        assert!((median - mapped).abs() < 1e-6, "{median} vs {mapped}");
    }

    #[test]
    fn cdf_is_monotone() {
        let tol = 1e-7;
        for spec in [LimitSpec::bary(3, 0.7).unwrap(), LimitSpec::scalefree(1.0, 1.0).unwrap(), LimitSpec::urt(1.0).unwrap()] {
            let mut prev = 0.0;
            for k in -20..=20 {
                let f = limit_cdf(k as f64 * 0.1, &spec, tol).unwrap();
                assert!(prev <= f + 2.0 * tol);
                assert!((0.0..=1.0).contains(&f));
                prev = f;
            }
        }
        assert!(limit_cdf(0.0, &LimitSpec::urt(1.0).unwrap(), 1e-13).is_err());
    }

    #[test]
    fn recentering_examples() {
        let spec = LimitSpec::bary(2, 1.0).unwrap();
        let n = 1_000_000u64;
        let lnln = (n as f64).ln().ln();
        let v = recenter((-2.0f64).exp(), n, &spec).unwrap();
        assert!((v + 2.0 * (-2.0f64).exp() * lnln).abs() < 1e-14);

        let e = std::f64::consts::E;
        let v = germ_recenter_real(0.0, e, 1.0, &spec).unwrap();
        assert!((v + 6.0).abs() < 1e-15);
        assert!(recenter(0.5, 2, &spec).is_err());
    }

    #[test]
    fn recentering_matches_hand_formulas() {
        let c = 0.8;
        let n = 54_321u64;
        let (l, ll) = ((n as f64).ln(), (n as f64).ln().ln());
        let beta: f64 = 1.5;
        let alpha: f64 = 2.0 / 3.0;
        let ratio = 0.41;
        let t1 = (ratio - (-beta * c).exp()) * l - beta * c * (-beta * c).exp() * ll;
        let t2 = (ratio - (-beta * c).exp() / (beta - 1.0)) * l - beta / (beta - 1.0) * c * (-beta * c).exp() * ll;
        let t3 = (ratio - (-alpha * c).exp()) * l - alpha * c * (-alpha * c).exp() * ll;
        let e19 = (ratio - (-c).exp()) * l - c * (-c).exp() * ll;
        assert!((recenter(ratio, n, &LimitSpec::bary(3, c).unwrap()).unwrap() - t1).abs() < 1e-12);
        assert!((recenter(ratio, n, &LimitSpec::branching(3, c).unwrap()).unwrap() - t2).abs() < 1e-12);
        assert!((recenter(ratio, n, &LimitSpec::scalefree(1.0, c).unwrap()).unwrap() - t3).abs() < 1e-12);
        assert!((recenter(ratio, n, &LimitSpec::urt(c).unwrap()).unwrap() - e19).abs() < 1e-12);
        let d = 1234.0;
        let g3 = d / l.powi(3) - 3.0 * alpha / (1.0 - alpha) * c * ll;
        assert!((germ_recenter(d, n, &LimitSpec::scalefree(1.0, c).unwrap()).unwrap() - g3).abs() < 1e-12);
    }
}
