//! Regularized periodic-monopole potential and its derivatives.
//!
//! The potential is the lattice sum
//!
//! ```text
//! V0(eps)(u, y1, y2) = (1/4pi) sum_n [ 1/sqrt((u + n eps)^2 + |y|^2) - a_|n| ]
//! a_n = 1/(n eps) for n > 0,   a_0 = (2/eps) (-gamma + log(2 eps))
//! ```
//!
//! over charges at `(n eps, 0, 0)`, together with `V = V0 + eps^{-1} Re h(y)`
//! for a polynomial `h`, and the rescaled potential
//! `V1 = eps V = V0(1) + (1/2pi) log(1/eps) + Re h` in unit-lattice
//! coordinates.
//!
//! Terms are paired `n, -n` before the constants are subtracted; each paired
//! term is `O(n^-3)`, so the series is absolutely convergent and reorder-safe.
//! The tail beyond the truncation index is closed with a midpoint
//! Euler-Maclaurin integral in closed form, and the remainder is bounded by
//! an explicit envelope integral carried as `err_bound`. Derivatives are
//! termwise series (the subtracted constants vanish), closed with their own
//! integral corrections; the three tail corrections of the Hessian diagonal
//! cancel exactly, so the analytic Laplacian stays at the rounding floor.

use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::math::{self, Kahan};

/// Charge coefficient of a single lattice monopole, `1/(4 pi)`.
///
/// This is also the measured near-charge coefficient `c*` of the unit-lattice
/// potential (`rho * V0(1) -> c*` as `rho -> 0`), and the only charge value
/// for which the fiber-period-1 connection has integer Chern class.
pub const CHARGE: f64 = 1.0 / (4.0 * math::PI);

/// Base coordinates `(u, y1, y2)` on the chart; `u` runs along the charge
/// lattice with period `eps`, `y = y1 + i y2` is the base coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint3 {
    pub u: f64,
    pub y1: f64,
    pub y2: f64,
}

impl ChartPoint3 {
    pub const fn new(u: f64, y1: f64, y2: f64) -> Self {
        Self { u, y1, y2 }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.y1.is_finite() && self.y2.is_finite()
    }

    /// Distance to the nearest charge `(n eps, 0, 0)`.
    pub fn dist_to_nearest_charge(&self, eps: f64) -> f64 {
        let delta = self.u - eps * math::round(self.u / eps);
        math::norm3(delta, self.y1, self.y2)
    }

    /// Distance to the `u`-axis `{y = 0}`.
    pub fn dist_to_axis(&self) -> f64 {
        math::hypot(self.y1, self.y2)
    }
}

/// A base point together with the fiber angle `t` (period 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint4 {
    pub base: ChartPoint3,
    pub t: f64,
}

impl ChartPoint4 {
    pub const fn new(u: f64, y1: f64, y2: f64, t: f64) -> Self {
        Self {
            base: ChartPoint3::new(u, y1, y2),
            t,
        }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.base.u, self.base.y1, self.base.y2, self.t]
    }

    pub fn from_coords(x: [f64; 4]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }
}

/// Parameters of the potential family.
#[derive(Clone, Debug)]
pub struct PotentialParams {
    /// Collapse parameter; also the charge-lattice spacing. In `(0, 1]`.
    pub eps: f64,
    /// Coefficients `c_0..c_k` of the polynomial `h(y) = sum c_j y^j`;
    /// `f = Re h` is the harmonic part, `g = Im h` its conjugate.
    pub h_coeffs: Vec<Complex64>,
    /// Absolute truncation-error budget for the lattice sum.
    pub tail_tol: f64,
    /// Minimum admissible distance to any charge.
    pub exclusion_radius: f64,
    /// Hard cap on the number of `(n, -n)` pairs summed.
    pub max_pairs: u64,
}

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_PAIRS: u64 = 20_000_000;

impl PotentialParams {
    /// Parameters with `h = 0` and default tolerances
    /// (`tail_tol = 1e-10`, `exclusion_radius = 1e-3 eps`).
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            h_coeffs: Vec::new(),
            tail_tol: DEFAULT_TAIL_TOL,
            exclusion_radius: 1e-3 * eps,
            max_pairs: DEFAULT_MAX_PAIRS,
        }
    }

    pub fn with_h(mut self, coeffs: &[Complex64]) -> Self {
        self.h_coeffs = coeffs.to_vec();
        self
    }

    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn with_exclusion_radius(mut self, r: f64) -> Self {
        self.exclusion_radius = r;
        self
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if !(self.eps > 0.0 && self.eps <= 1.0 && self.eps.is_finite()) {
            return Err(PotentialError::InvalidParams("eps must be in (0, 1]"));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol.is_finite()) {
            return Err(PotentialError::InvalidParams("tail_tol must be positive"));
        }
        if !(self.exclusion_radius > 0.0 && self.exclusion_radius.is_finite()) {
            return Err(PotentialError::InvalidParams(
                "exclusion_radius must be positive",
            ));
        }
        if self.h_coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(PotentialError::InvalidParams("h coefficients must be finite"));
        }
        Ok(())
    }

    /// `beta = (1/2pi) log(1/eps)`, the canonical log scale of the collapse.
    pub fn beta(&self) -> f64 {
        math::ln(1.0 / self.eps) / math::TAU
    }
}

/// Value, gradient and Hessian of a potential at a point, with the certified
/// truncation bound on the value.
#[derive(Clone, Copy, Debug)]
pub struct PotentialValue {
    pub value: f64,
    /// `(d_u, d_y1, d_y2)`.
    pub grad: [f64; 3],
    /// Symmetric, indexed by `(u, y1, y2)`.
    pub hess: [[f64; 3]; 3],
    /// Certified absolute truncation bound on `value`.
    pub err_bound: f64,
}

impl PotentialValue {
    pub fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1] + self.hess[2][2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PotentialError {
    InvalidParams(&'static str),
    /// The evaluation point is within `exclusion_radius` of a charge.
    PointTooCloseToCharge { dist: f64, exclusion: f64 },
    /// The tail bound cannot meet `tail_tol` within `max_pairs`.
    TolUnreachable { reachable: f64, max_pairs: u64 },
    /// `V <= 0`: the point left the validity region of the ansatz.
    NegativePotential { value: f64 },
}

impl fmt::Display for PotentialError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidParams(msg) => write!(f, "invalid potential parameters: {msg}"),
            Self::PointTooCloseToCharge { dist, exclusion } => write!(
                f,
                "point too close to a charge: dist {dist:.3e} < exclusion {exclusion:.3e}"
            ),
            Self::TolUnreachable { reachable, max_pairs } => write!(
                f,
                "tail tolerance unreachable: bound {reachable:.3e} at max_pairs {max_pairs}"
            ),
            Self::NegativePotential { value } => {
                write!(f, "potential is non-positive ({value:.3e}); outside validity region")
            }
        }
    }
}

impl core::error::Error for PotentialError {}

/// How much of the jet a series evaluation accumulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd)]
pub(crate) enum JetLevel {
    Value,
    Hess,
}

/// Raw lattice-series output before the `1/4pi` normalization is applied.
struct SeriesJet {
    value: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
    err_bound: f64,
}

/// Remainder-bound envelopes after the midpoint Euler-Maclaurin correction:
/// each paired term `phi(x)` of a component series satisfies
/// `|phi''(x)| <= sum_j c_j eps^2 / (x eps - |delta|)^{p_j}` for `x >= 1`.
fn envelope_remainder(terms: &[(f64, i32)], eps: f64, abs_delta: f64, a: f64) -> f64 {
    math::em_remainder(terms, eps, a * eps - abs_delta)
}

/// Remainder bounds for every component at truncation index `n`.
struct Remainders {
    value: f64,
    worst_deriv: f64,
}

fn remainders(eps: f64, delta: f64, y1: f64, y2: f64, n: u64, level: JetLevel) -> Remainders {
    let a = n as f64 + 0.5;
    let ad = math::fabs(delta);
    let r2 = y1 * y1 + y2 * y2;
    let value = envelope_remainder(&[(36.0 * delta * delta + 12.0 * r2, 5)], eps, ad, a);
    if level == JetLevel::Value {
        return Remainders {
            value,
            worst_deriv: 0.0,
        };
    }
    let gu = envelope_remainder(&[(408.0 * ad, 5)], eps, ad, a);
    let gy = envelope_remainder(&[(36.0 * math::hypot(y1, y2), 5)], eps, ad, a);
    let mut worst = gu.max(gy);
    if level == JetLevel::Hess {
        let r = math::hypot(y1, y2);
        let huu = envelope_remainder(&[(312.0, 5)], eps, ad, a);
        let huy = envelope_remainder(&[(300.0 * r, 6)], eps, ad, a);
        let hyy = envelope_remainder(&[(240.0 * r2, 7), (36.0, 5)], eps, ad, a);
        worst = worst.max(huu).max(huy).max(hyy);
    }
    Remainders {
        value,
        worst_deriv: worst,
    }
}

/// Smallest pair count meeting `tol` on all requested components.
fn choose_pairs(
    eps: f64,
    delta: f64,
    y1: f64,
    y2: f64,
    tol: f64,
    max_pairs: u64,
    level: JetLevel,
) -> Result<u64, PotentialError> {
    let mut n = 8u64.max((2.0 * math::hypot(y1, y2) / eps) as u64);
    loop {
        let rem = remainders(eps, delta, y1, y2, n, level);
        if rem.value <= tol && rem.worst_deriv <= tol {
            return Ok(n);
        }
        if n >= max_pairs {
            return Err(PotentialError::TolUnreachable {
                reachable: rem.value.max(rem.worst_deriv),
                max_pairs,
            });
        }
        n = (n * 2).min(max_pairs);
    }
}

/// Closed-form tail integrals `H(W) = int_W^inf h(w) dw` for the component
/// integrands; all are elementary and stable as `r -> 0`.
struct TailCut {
    w: f64,
    l: f64,
}

impl TailCut {
    fn new(w: f64, r2: f64) -> Self {
        Self {
            w,
            l: math::sqrt(w * w + r2),
        }
    }

    /// `int_W^inf w / l^3`.
    fn h1(&self) -> f64 {
        1.0 / self.l
    }

    /// `int_W^inf 1 / l^3` as `1 / (L (L + W))`.
    fn h2(&self) -> f64 {
        1.0 / (self.l * (self.l + self.w))
    }

    /// `int_W^inf w / l^5`, times 3: `1 / L^3`.
    fn h4x3(&self) -> f64 {
        1.0 / (self.l * self.l * self.l)
    }

    /// `int_W^inf (2 w^2 - r^2) / l^5 = W / L^3`.
    fn huu(&self) -> f64 {
        self.w / (self.l * self.l * self.l)
    }

    /// `int_W^inf 1 / l^5 = (2L + W) / (3 L^3 (L + W)^2)`.
    fn h5(&self) -> f64 {
        let lw = self.l + self.w;
        (2.0 * self.l + self.w) / (3.0 * self.l * self.l * self.l * lw * lw)
    }
}

/// Core lattice sum for the unit-charge potential (before `1/4pi`), with
/// midpoint Euler-Maclaurin tail corrections on every component.
fn lattice_series(
    eps: f64,
    p: ChartPoint3,
    tol_raw: f64,
    max_pairs: u64,
    level: JetLevel,
) -> Result<SeriesJet, PotentialError> {
    let (y1, y2) = (p.y1, p.y2);
    let r2 = y1 * y1 + y2 * y2;
    // exact periodicity: reduce u to the fundamental cell
    let delta = p.u - eps * math::round(p.u / eps);
    let n_pairs = choose_pairs(eps, delta, y1, y2, tol_raw, max_pairs, level)?;
    Ok(lattice_series_fixed(eps, delta, y1, y2, r2, n_pairs, level))
}

fn lattice_series_fixed(
    eps: f64,
    delta: f64,
    y1: f64,
    y2: f64,
    r2: f64,
    n_pairs: u64,
    level: JetLevel,
) -> SeriesJet {
    let mut val = Kahan::new();
    let mut g = [Kahan::new(); 3];
    let mut h = [[Kahan::new(); 3]; 3];

    // n = 0 charge
    let l0 = math::sqrt(delta * delta + r2);
    let a0 = 2.0 / eps * (-math::EULER_GAMMA + math::ln(2.0 * eps));
    val.add(1.0 / l0 - a0);
    accumulate_charge(&mut g, &mut h, delta, y1, y2, r2, l0, level);

    for n in 1..=n_pairs {
        let c = n as f64 * eps;
        let wp = delta + c;
        let wm = delta - c;
        let lp = math::sqrt(wp * wp + r2);
        let lm = math::sqrt(wm * wm + r2);
        val.add(1.0 / lp + 1.0 / lm - 2.0 / c);
        accumulate_charge(&mut g, &mut h, wp, y1, y2, r2, lp, level);
        accumulate_charge(&mut g, &mut h, wm, y1, y2, r2, lm, level);
    }

    // midpoint EM tail corrections
    let a = n_pairs as f64 + 0.5;
    let cp = TailCut::new(delta + a * eps, r2);
    let cm = TailCut::new(a * eps - delta, r2);
    val.add(
        math::ln(4.0 * eps * eps * a * a / ((cp.w + cp.l) * (cm.w + cm.l))) / eps,
    );
    if level >= JetLevel::Hess {
        g[0].add(-(cp.h1() - cm.h1()) / eps);
        let gy_corr = -(cp.h2() + cm.h2()) / eps;
        g[1].add(y1 * gy_corr);
        g[2].add(y2 * gy_corr);
    }
    if level >= JetLevel::Hess {
        h[0][0].add((cp.huu() + cm.huu()) / eps);
        let huy_corr = (cp.h4x3() - cm.h4x3()) / eps;
        h[0][1].add(y1 * huy_corr);
        h[0][2].add(y2 * huy_corr);
        let h5 = 3.0 * (cp.h5() + cm.h5()) / eps;
        let h2 = (cp.h2() + cm.h2()) / eps;
        h[1][1].add(y1 * y1 * h5 - h2);
        h[2][2].add(y2 * y2 * h5 - h2);
        h[1][2].add(y1 * y2 * h5);
    }

    let rem = remainders(eps, delta, y1, y2, n_pairs, level);
    let mut hess = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            hess[i][j] = h[i.min(j)][i.max(j)].value();
        }
    }
    SeriesJet {
        value: val.value(),
        grad: [g[0].value(), g[1].value(), g[2].value()],
        hess,
        err_bound: rem.value,
    }
}

/// Adds one charge's gradient/Hessian contribution (`w` is the signed
/// `u`-offset to the charge, `l` the distance).
#[inline]
fn accumulate_charge(
    g: &mut [Kahan; 3],
    h: &mut [[Kahan; 3]; 3],
    w: f64,
    y1: f64,
    y2: f64,
    r2: f64,
    l: f64,
    level: JetLevel,
) {
    if level < JetLevel::Hess {
        return;
    }
    let inv_l = 1.0 / l;
    let inv_l3 = inv_l * inv_l * inv_l;
    g[0].add(-w * inv_l3);
    g[1].add(-y1 * inv_l3);
    g[2].add(-y2 * inv_l3);
    let inv_l5 = inv_l3 * inv_l * inv_l;
    h[0][0].add((2.0 * w * w - r2) * inv_l5);
    h[0][1].add(3.0 * w * y1 * inv_l5);
    h[0][2].add(3.0 * w * y2 * inv_l5);
    h[1][1].add(3.0 * y1 * y1 * inv_l5 - inv_l3);
    h[2][2].add(3.0 * y2 * y2 * inv_l5 - inv_l3);
    h[1][2].add(3.0 * y1 * y2 * inv_l5);
}

fn scale_jet(s: SeriesJet, factor: f64) -> PotentialValue {
    let mut hess = s.hess;
    for row in &mut hess {
        for v in row {
            *v *= factor;
        }
    }
    PotentialValue {
        value: s.value * factor,
        grad: [s.grad[0] * factor, s.grad[1] * factor, s.grad[2] * factor],
        hess,
        err_bound: s.err_bound * factor,
    }
}

fn check_regular(params: &PotentialParams, p: ChartPoint3, lattice_eps: f64) -> Result<(), PotentialError> {
    params.validate()?;
    if !p.is_finite() {
        return Err(PotentialError::InvalidParams("point must be finite"));
    }
    let dist = p.dist_to_nearest_charge(lattice_eps);
    let exclusion = params.exclusion_radius * lattice_eps / params.eps;
    if dist < exclusion {
        return Err(PotentialError::PointTooCloseToCharge { dist, exclusion });
    }
    Ok(())
}

pub(crate) fn v0_jet(
    params: &PotentialParams,
    p: ChartPoint3,
    level: JetLevel,
) -> Result<PotentialValue, PotentialError> {
    check_regular(params, p, params.eps)?;
    // the 1/4pi normalization is applied afterwards, so the raw budget is 4pi tol
    let series = lattice_series(
        params.eps,
        p,
        params.tail_tol / CHARGE,
        params.max_pairs,
        level,
    )?;
    Ok(scale_jet(series, CHARGE))
}

/// Regularized lattice potential `V0(eps)` at `p`, with value, gradient,
/// Hessian and the certified truncation bound.
pub fn eval_v0(params: &PotentialParams, p: ChartPoint3) -> Result<PotentialValue, PotentialError> {
    v0_jet(params, p, JetLevel::Hess)
}

/// `V0` truncated at exactly `n_pairs` symmetric pairs (tail corrections and
/// the certified bound still applied); diagnostic entry point for the
/// monotone-truncation property.
pub fn eval_v0_pairs(
    params: &PotentialParams,
    p: ChartPoint3,
    n_pairs: u64,
) -> Result<PotentialValue, PotentialError> {
    check_regular(params, p, params.eps)?;
    let delta = p.u - params.eps * math::round(p.u / params.eps);
    let r2 = p.y1 * p.y1 + p.y2 * p.y2;
    let series = lattice_series_fixed(
        params.eps,
        delta,
        p.y1,
        p.y2,
        r2,
        n_pairs,
        JetLevel::Hess,
    );
    Ok(scale_jet(series, CHARGE))
}

/// Jet of `Re h` at `y = y1 + i y2`: value, gradient and Hessian in the
/// `(y1, y2)` block (exact; `Re h` is harmonic by construction).
fn re_h_jet(coeffs: &[Complex64], y1: f64, y2: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let y = Complex64::new(y1, y2);
    let mut h = Complex64::new(0.0, 0.0);
    let mut dh = Complex64::new(0.0, 0.0);
    let mut d2h = Complex64::new(0.0, 0.0);
    for (j, &c) in coeffs.iter().enumerate().rev() {
        // Horner for h, h', h''
        d2h = d2h * y + dh * 2.0;
        dh = dh * y + h;
        h = h * y + c;
        let _ = j;
    }
    let grad = [dh.re, -dh.im];
    let hess = [[d2h.re, -d2h.im], [-d2h.im, -d2h.re]];
    (h.re, grad, hess)
}

fn add_poly_part(out: &mut PotentialValue, coeffs: &[Complex64], y1: f64, y2: f64, scale: f64, coord_scale: f64) {
    if coeffs.is_empty() {
        return;
    }
    let (f, gf, hf) = re_h_jet(coeffs, y1, y2);
    out.value += scale * f;
    out.grad[1] += scale * coord_scale * gf[0];
    out.grad[2] += scale * coord_scale * gf[1];
    let cs2 = coord_scale * coord_scale;
    out.hess[1][1] += scale * cs2 * hf[0][0];
    out.hess[1][2] += scale * cs2 * hf[0][1];
    out.hess[2][1] += scale * cs2 * hf[1][0];
    out.hess[2][2] += scale * cs2 * hf[1][1];
}

/// How a Gibbons-Hawking potential is put together from the lattice sum:
/// `V = V0(lattice) + offset + poly_scale * Re h(poly_coord_scale * y)
///    + quad_u * u^2`.
///
/// The original chart uses `(lattice_eps, offset, poly_scale, coord) =
/// (eps, 0, 1/eps, 1)`; the rescaled unit-lattice chart uses
/// `(1, beta, 1, eps)`. `quad_u` is a deliberate non-harmonic defect used as
/// a negative control downstream.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GhChart {
    pub lattice_eps: f64,
    pub offset: f64,
    pub poly_scale: f64,
    pub poly_coord_scale: f64,
    pub quad_u: f64,
}

impl GhChart {
    pub fn original(eps: f64) -> Self {
        Self {
            lattice_eps: eps,
            offset: 0.0,
            poly_scale: 1.0 / eps,
            poly_coord_scale: 1.0,
            quad_u: 0.0,
        }
    }

    pub fn rescaled(eps: f64) -> Self {
        Self {
            lattice_eps: 1.0,
            offset: math::ln(1.0 / eps) / math::TAU,
            poly_scale: 1.0,
            poly_coord_scale: eps,
            quad_u: 0.0,
        }
    }
}

pub(crate) fn gh_potential_jet(
    params: &PotentialParams,
    chart: &GhChart,
    p: ChartPoint3,
    level: JetLevel,
) -> Result<PotentialValue, PotentialError> {
    check_regular(params, p, chart.lattice_eps)?;
    let series = lattice_series(
        chart.lattice_eps,
        p,
        params.tail_tol / CHARGE,
        params.max_pairs,
        level,
    )?;
    let mut out = scale_jet(series, CHARGE);
    out.value += chart.offset;
    add_poly_part(
        &mut out,
        &params.h_coeffs,
        chart.poly_coord_scale * p.y1,
        chart.poly_coord_scale * p.y2,
        chart.poly_scale,
        chart.poly_coord_scale,
    );
    if chart.quad_u != 0.0 {
        out.value += chart.quad_u * p.u * p.u;
        out.grad[0] += 2.0 * chart.quad_u * p.u;
        out.hess[0][0] += 2.0 * chart.quad_u;
    }
    if out.value <= 0.0 {
        return Err(PotentialError::NegativePotential { value: out.value });
    }
    Ok(out)
}

/// Full potential `V(eps) = V0(eps) + eps^{-1} Re h(y)`.
pub fn eval_v(params: &PotentialParams, p: ChartPoint3) -> Result<PotentialValue, PotentialError> {
    v_jet(params, p, JetLevel::Hess)
}

pub(crate) fn v_jet(
    params: &PotentialParams,
    p: ChartPoint3,
    level: JetLevel,
) -> Result<PotentialValue, PotentialError> {
    gh_potential_jet(params, &GhChart::original(params.eps), p, level)
}

/// Rescaled potential `V1(eps) = eps V(eps)` evaluated in rescaled
/// coordinates `q = (s, v1, v2) = (u, y1, y2)/eps`:
///
/// `V1(q) = V0(1)(q) + (1/2pi) log(1/eps) + Re h(eps (v1 + i v2))`.
///
/// Gradient and Hessian are with respect to the rescaled coordinates. The
/// admissibility lattice is the unit lattice `(n, 0, 0)` with exclusion
/// radius `exclusion_radius / eps`.
pub fn eval_v1(params: &PotentialParams, q: ChartPoint3) -> Result<PotentialValue, PotentialError> {
    v1_jet(params, q, JetLevel::Hess)
}

pub(crate) fn v1_jet(
    params: &PotentialParams,
    q: ChartPoint3,
    level: JetLevel,
) -> Result<PotentialValue, PotentialError> {
    gh_potential_jet(params, &GhChart::rescaled(params.eps), q, level)
}

/// Flat 3-Laplacian residual of `V` at `p`, by the analytic Hessian trace and
/// by central finite differences of the value (one Richardson halving).
#[derive(Clone, Copy, Debug)]
pub struct LaplacianResidual {
    /// Trace of the analytic Hessian (primary path).
    pub analytic: f64,
    /// Richardson-extrapolated central-difference Laplacian of the value.
    pub finite_difference: f64,
}

pub fn laplacian_residual(
    params: &PotentialParams,
    p: ChartPoint3,
    fd_step: f64,
) -> Result<LaplacianResidual, PotentialError> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(PotentialError::InvalidParams("fd_step must be positive"));
    }
    let dist = p.dist_to_nearest_charge(params.eps);
    if dist < params.exclusion_radius + fd_step {
        return Err(PotentialError::PointTooCloseToCharge {
            dist,
            exclusion: params.exclusion_radius + fd_step,
        });
    }
    let analytic = v_jet(params, p, JetLevel::Hess)?.laplacian();

    let value = |q: ChartPoint3| -> Result<f64, PotentialError> {
        Ok(v_jet(params, q, JetLevel::Value)?.value)
    };
    let lap_fd = |h: f64| -> Result<f64, PotentialError> {
        let c = 3.0 * value(p)?;
        let mut acc = -2.0 * c;
        for axis in 0..3 {
            let mut plus = p;
            let mut minus = p;
            match axis {
                0 => {
                    plus.u += h;
                    minus.u -= h;
                }
                1 => {
                    plus.y1 += h;
                    minus.y1 -= h;
                }
                _ => {
                    plus.y2 += h;
                    minus.y2 -= h;
                }
            }
            acc += value(plus)? + value(minus)?;
        }
        Ok(acc / (h * h))
    };
    let coarse = lap_fd(fd_step)?;
    let fine = lap_fd(fd_step / 2.0)?;
    Ok(LaplacianResidual {
        analytic,
        finite_difference: math::richardson(coarse, fine, 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact closed form of `V0(1)(1/2, 0, 0)`: the paired series telescopes
    /// to `(gamma + log 2) / (2 pi)`.
    const V0_HALF_CLOSED: f64 = 0.202_184_526_375_479_8;

    #[test]
    fn v0_matches_closed_form_on_axis_midpoint() {
        let params = PotentialParams::new(1.0).with_tail_tol(1e-12);
        let v = eval_v0(&params, ChartPoint3::new(0.5, 0.0, 0.0)).unwrap();
        assert!(v.err_bound <= 1e-12);
        assert!(
            (v.value - V0_HALF_CLOSED).abs() < 2e-12,
            "value {} vs closed form {}",
            v.value,
            V0_HALF_CLOSED
        );
    }

    #[test]
    fn too_close_to_charge_is_rejected() {
        let params = PotentialParams::new(0.5);
        let err = eval_v0(&params, ChartPoint3::new(0.5 + 1e-5, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, PotentialError::PointTooCloseToCharge { .. }));
    }

    #[test]
    fn unreachable_tolerance_reports_error() {
        let mut params = PotentialParams::new(0.5).with_tail_tol(1e-300);
        params.max_pairs = 10_000;
        let err = eval_v0(&params, ChartPoint3::new(0.2, 0.1, 0.0)).unwrap_err();
        assert!(matches!(err, PotentialError::TolUnreachable { .. }));
    }

    #[test]
    fn eps_outside_unit_interval_is_rejected() {
        let params = PotentialParams::new(1.5);
        assert!(matches!(
            eval_v0(&params, ChartPoint3::new(0.2, 0.1, 0.0)),
            Err(PotentialError::InvalidParams(_))
        ));
    }

    #[test]
    fn negative_potential_detected() {
        // large negative harmonic part drives V below zero
        let params =
            PotentialParams::new(0.5).with_h(&[Complex64::new(-100.0, 0.0)]);
        let err = eval_v(&params, ChartPoint3::new(0.2, 0.3, 0.1)).unwrap_err();
        assert!(matches!(err, PotentialError::NegativePotential { .. }));
    }

    #[test]
    fn linear_h_shifts_value_and_gradient_exactly() {
        let p = ChartPoint3::new(0.2, 0.1, 0.1);
        let base = PotentialParams::new(0.5);
        let with_h = PotentialParams::new(0.5).with_h(&[
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]);
        let v0 = eval_v(&base, p).unwrap();
        let v = eval_v(&with_h, p).unwrap();
        // Re h = y1, scaled by eps^{-1} = 2
        assert!((v.value - v0.value - 0.2).abs() < 1e-14);
        assert!((v.grad[1] - v0.grad[1] - 2.0).abs() < 1e-14);
        assert!((v.grad[2] - v0.grad[2]).abs() < 1e-14);
    }

    #[test]
    fn h_equiv_zero_reduces_to_v0() {
        let p = ChartPoint3::new(0.2, 0.1, 0.1);
        let params = PotentialParams::new(0.5);
        let a = eval_v(&params, p).unwrap();
        let b = eval_v0(&params, p).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.hess, b.hess);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let params = PotentialParams::new(0.4).with_tail_tol(1e-13);
        let p = ChartPoint3::new(0.13, 0.21, -0.17);
        let v = eval_v0(&params, p).unwrap();
        let h = 1e-5;
        for axis in 0..3 {
            let mut plus = p;
            let mut minus = p;
            match axis {
                0 => {
                    plus.u += h;
                    minus.u -= h;
                }
                1 => {
                    plus.y1 += h;
                    minus.y1 -= h;
                }
                _ => {
                    plus.y2 += h;
                    minus.y2 -= h;
                }
            }
            let fd = (eval_v0(&params, plus).unwrap().value
                - eval_v0(&params, minus).unwrap().value)
                / (2.0 * h);
            assert!(
                (fd - v.grad[axis]).abs() < 1e-8,
                "axis {axis}: fd {fd} vs analytic {}",
                v.grad[axis]
            );
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let params = PotentialParams::new(0.4).with_tail_tol(1e-13);
        let p = ChartPoint3::new(0.13, 0.21, -0.17);
        let v = eval_v0(&params, p).unwrap();
        let h = 1e-4;
        // d^2/du dy1 via cross stencil
        let f = |du: f64, dy1: f64| {
            eval_v0(&params, ChartPoint3::new(p.u + du, p.y1 + dy1, p.y2))
                .unwrap()
                .value
        };
        let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        assert!(
            (fd - v.hess[0][1]).abs() < 1e-6,
            "fd {fd} vs analytic {}",
            v.hess[0][1]
        );
    }

    #[test]
    fn v1_is_rescaled_v() {
        // V1(q) = eps * V(eps q), checked rather than assumed
        let params = PotentialParams::new(0.2)
            .with_h(&[Complex64::new(0.3, 0.1), Complex64::new(0.0, 0.5)])
            .with_tail_tol(1e-12);
        let q = ChartPoint3::new(0.31, 0.7, -0.4);
        let v1 = eval_v1(&params, q).unwrap();
        let p = ChartPoint3::new(0.2 * q.u, 0.2 * q.y1, 0.2 * q.y2);
        let v = eval_v(&params, p).unwrap();
        assert!(
            (v1.value - 0.2 * v.value).abs() <= 2.0 * params.tail_tol,
            "V1 {} vs eps V {}",
            v1.value,
            0.2 * v.value
        );
    }

    #[test]
    fn v1_at_eps_one_is_v0() {
        let params = PotentialParams::new(1.0);
        let q = ChartPoint3::new(0.4, 0.2, 0.1);
        let v1 = eval_v1(&params, q).unwrap();
        let v0 = eval_v0(&params, q).unwrap();
        assert!((v1.value - v0.value).abs() < 1e-15);
    }

    #[test]
    fn laplacian_residual_both_paths_small() {
        let params = PotentialParams::new(0.3).with_tail_tol(1e-14);
        let p = ChartPoint3::new(0.11, 0.2, 0.05);
        let res = laplacian_residual(&params, p, 2e-3).unwrap();
        assert!(res.analytic.abs() < 10.0 * params.tail_tol, "analytic {}", res.analytic);
        assert!(res.finite_difference.abs() < 1e-6, "fd {}", res.finite_difference);
    }

    #[test]
    fn laplacian_unchanged_by_harmonic_h() {
        let plain = PotentialParams::new(0.5).with_tail_tol(1e-14);
        let cubic = PotentialParams::new(0.5)
            .with_h(&[
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ])
            .with_tail_tol(1e-14);
        let p = ChartPoint3::new(0.2, 0.3, 0.1);
        let a = laplacian_residual(&plain, p, 1e-3).unwrap();
        let b = laplacian_residual(&cubic, p, 1e-3).unwrap();
        assert!((a.analytic - b.analytic).abs() < 1e-12);
        assert!((a.finite_difference - b.finite_difference).abs() < 1e-6);
    }

    #[test]
    fn err_bound_meets_tolerance() {
        for &(eps, tol) in &[(0.9, 1e-10), (0.25, 1e-12), (0.05, 1e-10)] {
            let params = PotentialParams::new(eps).with_tail_tol(tol);
            let v = eval_v0(&params, ChartPoint3::new(0.3 * eps, 0.2, 0.1)).unwrap();
            assert!(v.err_bound <= tol, "eps {eps}: bound {}", v.err_bound);
        }
    }
}
