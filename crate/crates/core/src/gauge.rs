//! Connection 1-form `theta_0 = dt + A` with `dA = *dV`.
//!
//! `A` is a superposition of per-charge monopole potentials in the azimuthal
//! direction `phi = arg(y1 + i y2)`,
//!
//! ```text
//! A = (1/4pi) sum_n ( (u + n eps)/l_n - s_n ) dphi + eps^{-1} Im h(y) du,
//! ```
//!
//! where `l_n` is the distance to charge `n`. The string signs `s_n = sgn(n)`
//! point each outer charge's Dirac string away from the central cell, which
//! makes the series absolutely convergent (`O(n^-2)` termwise); the central
//! charge's sign `s_0` is the gauge choice. The `eps^{-1} Im h` term is the
//! exact vector potential of the harmonic part `eps^{-1} Re h` of `V` (the
//! harmonic conjugate), so `dA = *dV` holds term by term.
//!
//! The series is truncated with the same midpoint Euler-Maclaurin closure as
//! the potential; all tail integrals are elementary.

use core::fmt;

use num_complex::Complex64;

use crate::math;
use crate::potential::{ChartPoint3, PotentialError, PotentialParams, CHARGE};

/// Which half of the axis `{y = 0}` through the central charge carries its
/// Dirac string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaugeId {
    /// String on `{u >= 0}` (central sign `s_0 = -1`).
    StringPlus,
    /// String on `{u <= 0}` (central sign `s_0 = +1`).
    StringMinus,
}

impl GaugeId {
    pub(crate) fn sigma(self) -> f64 {
        match self {
            GaugeId::StringPlus => -1.0,
            GaugeId::StringMinus => 1.0,
        }
    }
}

/// Base components of `theta_0 - dt` at a point, `(A_u, A_y1, A_y2)`.
#[derive(Clone, Copy, Debug)]
pub struct GaugeForm {
    pub a: [f64; 3],
    pub gauge_id: GaugeId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GaugeError {
    InvalidParams(&'static str),
    /// Within `exclusion_radius` of the axis carrying the strings.
    OnDiracString { dist: f64, exclusion: f64 },
    TolUnreachable { reachable: f64, max_pairs: u64 },
}

impl fmt::Display for GaugeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidParams(msg) => write!(f, "invalid connection parameters: {msg}"),
            Self::OnDiracString { dist, exclusion } => write!(
                f,
                "point on or near the Dirac string axis: dist {dist:.3e} < {exclusion:.3e}"
            ),
            Self::TolUnreachable { reachable, max_pairs } => write!(
                f,
                "tail tolerance unreachable: bound {reachable:.3e} at max_pairs {max_pairs}"
            ),
        }
    }
}

impl core::error::Error for GaugeError {}

impl From<PotentialError> for GaugeError {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::TolUnreachable { reachable, max_pairs } => {
                GaugeError::TolUnreachable { reachable, max_pairs }
            }
            _ => GaugeError::InvalidParams("invalid potential parameters"),
        }
    }
}

/// 2-jet of the three base components of `A`; `grad[i][k] = d_k A_i`,
/// `hess[i][j][k] = d_j d_k A_i`, indices over `(u, y1, y2)`.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ConnectionJet {
    pub a: [f64; 3],
    pub grad: [[f64; 3]; 3],
    pub hess: [[[f64; 3]; 3]; 3],
}

/// 2-jet of the scalar monopole superposition
/// `Phi = sum_n ( (u + n eps)/l_n - s_n )`.
#[derive(Clone, Copy, Debug, Default)]
struct PhiJet {
    v: f64,
    g: [f64; 3],
    h: [[f64; 3]; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd)]
pub(crate) enum JetDepth {
    Value,
    Hess,
}

/// One charge's contribution to the `Phi` jet; `w` is the `u`-offset to the
/// charge, `s` the string sign subtracted from the value only.
#[inline]
fn phi_charge(jet: &mut PhiJet, w: f64, y1: f64, y2: f64, r2: f64, s: f64, depth: JetDepth) {
    let l = math::sqrt(w * w + r2);
    let inv_l = 1.0 / l;
    jet.v += w * inv_l - s;
    if depth < JetDepth::Hess {
        return;
    }
    let inv_l3 = inv_l * inv_l * inv_l;
    let inv_l5 = inv_l3 * inv_l * inv_l;
    jet.g[0] += r2 * inv_l3;
    jet.g[1] += -w * y1 * inv_l3;
    jet.g[2] += -w * y2 * inv_l3;
    jet.h[0][0] += -3.0 * r2 * w * inv_l5;
    jet.h[0][1] += y1 * (2.0 * w * w - r2) * inv_l5;
    jet.h[0][2] += y2 * (2.0 * w * w - r2) * inv_l5;
    jet.h[1][1] += -w * inv_l3 + 3.0 * w * y1 * y1 * inv_l5;
    jet.h[2][2] += -w * inv_l3 + 3.0 * w * y2 * y2 * inv_l5;
    jet.h[1][2] += 3.0 * w * y1 * y2 * inv_l5;
}

/// Tail-cut helper: closed-form integrals past the cut at distance `l` from
/// the axis offset `w` (`l = sqrt(w^2 + r^2)`).
struct Cut {
    w: f64,
    l: f64,
}

impl Cut {
    fn new(w: f64, r2: f64) -> Self {
        Self {
            w,
            l: math::sqrt(w * w + r2),
        }
    }
}

/// Truncation pair count for the `Phi` series at tolerance `tol`.
fn phi_pairs(eps: f64, r2: f64, y_abs: f64, tol: f64, max_pairs: u64, depth: JetDepth) -> Result<u64, GaugeError> {
    let r = math::sqrt(r2);
    let mut n = 8u64.max((2.0 * r / eps) as u64);
    loop {
        let margin = n as f64 * eps;
        let mut worst = math::em_remainder(&[(3.0 * r2, 4)], eps, margin);
        if depth >= JetDepth::Hess {
            worst = worst
                .max(math::em_remainder(&[(18.0 * r2, 5)], eps, margin))
                .max(math::em_remainder(&[(24.0 * y_abs, 4)], eps, margin))
                .max(math::em_remainder(&[(150.0 * r2, 6)], eps, margin))
                .max(math::em_remainder(&[(156.0 * y_abs, 5)], eps, margin))
                .max(math::em_remainder(&[(24.0, 4), (150.0 * r2, 6)], eps, margin));
        }
        if worst <= tol {
            return Ok(n);
        }
        if n >= max_pairs {
            return Err(GaugeError::TolUnreachable {
                reachable: worst,
                max_pairs,
            });
        }
        n = (n * 2).min(max_pairs);
    }
}

/// `Phi` and its jet by windowed summation plus Euler-Maclaurin tails.
///
/// `u` is NOT reduced to the fundamental cell: the gauge is tied to lattice
/// indices, and reducing would cut the connection along cell boundaries.
fn phi_series(
    eps: f64,
    sigma: f64,
    p: ChartPoint3,
    tol: f64,
    max_pairs: u64,
    depth: JetDepth,
) -> Result<PhiJet, GaugeError> {
    let (u, y1, y2) = (p.u, p.y1, p.y2);
    let r2 = y1 * y1 + y2 * y2;
    let y_abs = math::sqrt(r2);
    let n_pairs = phi_pairs(eps, r2, y_abs, tol, max_pairs, depth)? as i64;

    let n_center = math::round(-u / eps) as i64;
    let lo = n_center.min(0) - n_pairs;
    let hi = n_center.max(0) + n_pairs;

    let mut jet = PhiJet::default();
    for n in lo..=hi {
        let s = if n == 0 { sigma } else if n > 0 { 1.0 } else { -1.0 };
        phi_charge(&mut jet, u + n as f64 * eps, y1, y2, r2, s, depth);
    }

    // upper tail: h(w) = w/l - 1 past w_hi; lower tail: h(w) = w/l + 1
    let hi_cut = Cut::new(u + (hi as f64 + 0.5) * eps, r2);
    let lo_cut = Cut::new(u + (lo as f64 - 0.5) * eps, r2);
    debug_assert!(hi_cut.w > 0.0 && lo_cut.w < 0.0);
    jet.v += -r2 / (eps * (hi_cut.l + hi_cut.w));
    jet.v += r2 / (eps * (lo_cut.l - lo_cut.w));
    if depth >= JetDepth::Hess {
        let (lp, lm) = (hi_cut.l, lo_cut.l);
        let (wp, wm_abs) = (hi_cut.w, -lo_cut.w);
        // d_u Phi: r^2/l^3 on both sides
        jet.g[0] += r2 / (eps * lp * (lp + wp)) + r2 / (eps * lm * (lm + wm_abs));
        // d_{y_i} Phi: -y_i w/l^3
        let g_y = -1.0 / (eps * lp) + 1.0 / (eps * lm);
        jet.g[1] += y1 * g_y;
        jet.g[2] += y2 * g_y;
        // d_uu Phi: -3 r^2 w / l^5
        jet.h[0][0] += -r2 / (eps * lp * lp * lp) + r2 / (eps * lm * lm * lm);
        // d_{u y_i} Phi: y_i (2w^2 - r^2)/l^5, H = W/L^3 (even): both sides add
        let h_uy = wp / (eps * lp * lp * lp) + wm_abs / (eps * lm * lm * lm);
        jet.h[0][1] += y1 * h_uy;
        jet.h[0][2] += y2 * h_uy;
        // d_{y_i y_j} Phi: -delta_ij w/l^3 + 3 w y_i y_j / l^5 (odd in w)
        let t1 = -1.0 / (eps * lp) + 1.0 / (eps * lm);
        let t4 = 1.0 / (eps * lp * lp * lp) - 1.0 / (eps * lm * lm * lm);
        jet.h[1][1] += t1 + y1 * y1 * t4;
        jet.h[2][2] += t1 + y2 * y2 * t4;
        jet.h[1][2] += y1 * y2 * t4;
    }
    jet.h[1][0] = jet.h[0][1];
    jet.h[2][0] = jet.h[0][2];
    jet.h[2][1] = jet.h[1][2];
    Ok(jet)
}

/// Assembles the `A` jet from the `Phi` jet:
/// `A_y1 = -c y2 Phi / r^2`, `A_y2 = c y1 Phi / r^2`, plus the harmonic part
/// `poly_scale * Im h(coord_scale * y) du`.
fn assemble(
    phi: &PhiJet,
    charge: f64,
    y1: f64,
    y2: f64,
    h_coeffs: &[Complex64],
    poly_scale: f64,
    coord_scale: f64,
    gauge_id: GaugeId,
    depth: JetDepth,
) -> ConnectionJet {
    let r2 = y1 * y1 + y2 * y2;
    let inv_r2 = 1.0 / r2;
    let inv_r4 = inv_r2 * inv_r2;
    let inv_r6 = inv_r4 * inv_r2;

    // G = Phi / r^2 and its jet (u, y1, y2)
    let g_val = phi.v * inv_r2;
    let mut g_grad = [0.0f64; 3];
    let mut g_hess = [[0.0f64; 3]; 3];
    if depth >= JetDepth::Hess {
        let y = [0.0, y1, y2];
        for k in 0..3 {
            g_grad[k] = phi.g[k] * inv_r2 - 2.0 * y[k] * phi.v * inv_r4;
        }
        for a in 0..3 {
            for b in a..3 {
                let mut v = phi.h[a][b] * inv_r2
                    - 2.0 * (y[a] * phi.g[b] + y[b] * phi.g[a]) * inv_r4
                    + 8.0 * y[a] * y[b] * phi.v * inv_r6;
                if a != 0 && a == b {
                    v -= 2.0 * phi.v * inv_r4;
                }
                g_hess[a][b] = v;
                g_hess[b][a] = v;
            }
        }
    }

    let mut jet = ConnectionJet::default();
    // A_y1 = -c y2 G; A_y2 = c y1 G
    jet.a[1] = -charge * y2 * g_val;
    jet.a[2] = charge * y1 * g_val;
    if depth >= JetDepth::Hess {
        for k in 0..3 {
            let d_y2_k = if k == 2 { 1.0 } else { 0.0 };
            let d_y1_k = if k == 1 { 1.0 } else { 0.0 };
            jet.grad[1][k] = -charge * (d_y2_k * g_val + y2 * g_grad[k]);
            jet.grad[2][k] = charge * (d_y1_k * g_val + y1 * g_grad[k]);
        }
        for a in 0..3 {
            for b in 0..3 {
                let da2 = if a == 2 { 1.0 } else { 0.0 };
                let db2 = if b == 2 { 1.0 } else { 0.0 };
                let da1 = if a == 1 { 1.0 } else { 0.0 };
                let db1 = if b == 1 { 1.0 } else { 0.0 };
                jet.hess[1][a][b] =
                    -charge * (da2 * g_grad[b] + db2 * g_grad[a] + y2 * g_hess[a][b]);
                jet.hess[2][a][b] =
                    charge * (da1 * g_grad[b] + db1 * g_grad[a] + y1 * g_hess[a][b]);
            }
        }
    }

    // harmonic part: A_u = poly_scale * Im h(coord_scale * y)
    if !h_coeffs.is_empty() {
        let y = Complex64::new(coord_scale * y1, coord_scale * y2);
        let mut h = Complex64::new(0.0, 0.0);
        let mut dh = Complex64::new(0.0, 0.0);
        let mut d2h = Complex64::new(0.0, 0.0);
        for &c in h_coeffs.iter().rev() {
            d2h = d2h * y + dh * 2.0;
            dh = dh * y + h;
            h = h * y + c;
        }
        jet.a[0] += poly_scale * h.im;
        if depth >= JetDepth::Hess {
            let cs = coord_scale;
            jet.grad[0][1] += poly_scale * cs * dh.im;
            jet.grad[0][2] += poly_scale * cs * dh.re;
            let cs2 = cs * cs;
            jet.hess[0][1][1] += poly_scale * cs2 * d2h.im;
            jet.hess[0][1][2] += poly_scale * cs2 * d2h.re;
            jet.hess[0][2][1] += poly_scale * cs2 * d2h.re;
            jet.hess[0][2][2] -= poly_scale * cs2 * d2h.im;
        }
    }
    let _ = gauge_id;
    jet
}

fn check_off_axis(p: ChartPoint3, exclusion: f64) -> Result<(), GaugeError> {
    if !p.is_finite() {
        return Err(GaugeError::InvalidParams("point must be finite"));
    }
    let dist = p.dist_to_axis();
    if dist < exclusion {
        return Err(GaugeError::OnDiracString { dist, exclusion });
    }
    Ok(())
}

/// Lattice connection jet in the chart of `params` (charge spacing
/// `lattice_eps`, exclusion rescaled accordingly), including the harmonic
/// part with the given scaling.
pub(crate) fn connection_jet_scaled(
    params: &PotentialParams,
    lattice_eps: f64,
    poly_scale: f64,
    coord_scale: f64,
    p: ChartPoint3,
    gauge: GaugeId,
    depth: JetDepth,
) -> Result<ConnectionJet, GaugeError> {
    params.validate()?;
    let exclusion = params.exclusion_radius * lattice_eps / params.eps;
    check_off_axis(p, exclusion)?;
    let phi = phi_series(
        lattice_eps,
        gauge.sigma(),
        p,
        params.tail_tol / CHARGE,
        params.max_pairs,
        depth,
    )?;
    Ok(assemble(
        &phi,
        CHARGE,
        p.y1,
        p.y2,
        &params.h_coeffs,
        poly_scale,
        coord_scale,
        gauge,
        depth,
    ))
}

/// Connection jet for the original-coordinate chart: lattice spacing `eps`,
/// harmonic part `eps^{-1} Im h(y)`.
pub(crate) fn connection_jet(
    params: &PotentialParams,
    p: ChartPoint3,
    gauge: GaugeId,
    depth: JetDepth,
) -> Result<ConnectionJet, GaugeError> {
    connection_jet_scaled(params, params.eps, 1.0 / params.eps, 1.0, p, gauge, depth)
}

/// Connection jet of a single monopole of charge `c` at the origin
/// (`Phi = u/l - sigma`); closed form, no truncation.
pub(crate) fn connection_jet_single(
    c: f64,
    exclusion: f64,
    p: ChartPoint3,
    gauge: GaugeId,
    depth: JetDepth,
) -> Result<ConnectionJet, GaugeError> {
    check_off_axis(p, exclusion)?;
    let r2 = p.y1 * p.y1 + p.y2 * p.y2;
    let mut phi = PhiJet::default();
    phi_charge(&mut phi, p.u, p.y1, p.y2, r2, gauge.sigma(), depth);
    phi.h[1][0] = phi.h[0][1];
    phi.h[2][0] = phi.h[0][2];
    phi.h[2][1] = phi.h[1][2];
    Ok(assemble(&phi, c, p.y1, p.y2, &[], 0.0, 1.0, gauge, depth))
}

/// Evaluates the lattice connection `A` at `p` in the chosen gauge.
pub fn eval_connection(
    params: &PotentialParams,
    p: ChartPoint3,
    gauge: GaugeId,
) -> Result<GaugeForm, GaugeError> {
    let jet = connection_jet(params, p, gauge, JetDepth::Value)?;
    Ok(GaugeForm {
        a: jet.a,
        gauge_id: gauge,
    })
}

/// Single-monopole mode (only the central charge, lattice disabled): the
/// textbook monopole potential `A = c (u/l - sigma) dphi`.
pub fn eval_connection_single(
    c: f64,
    exclusion: f64,
    p: ChartPoint3,
    gauge: GaugeId,
) -> Result<GaugeForm, GaugeError> {
    let jet = connection_jet_single(c, exclusion, p, gauge, JetDepth::Value)?;
    Ok(GaugeForm {
        a: jet.a,
        gauge_id: gauge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;

    #[test]
    fn single_monopole_matches_textbook_form() {
        // A_phi = c (u/l - sigma), components A = A_phi * (-y2, y1)/r^2
        let c = 1.0 / (4.0 * PI);
        let p = ChartPoint3::new(0.3, 0.4, 0.0);
        let l = (0.3f64 * 0.3 + 0.4 * 0.4).sqrt();
        for (gauge, sigma) in [(GaugeId::StringPlus, -1.0), (GaugeId::StringMinus, 1.0)] {
            let form = eval_connection_single(c, 1e-6, p, gauge).unwrap();
            let a_phi = c * (0.3 / l - sigma);
            assert!((form.a[0]).abs() < 1e-15);
            assert!((form.a[1] - a_phi * (-0.0) / 0.16).abs() < 1e-14);
            assert!((form.a[2] - a_phi * 0.4 / 0.16).abs() < 1e-14);
        }
    }

    #[test]
    fn gauge_change_is_multiple_of_dphi() {
        let params = PotentialParams::new(0.5);
        let p = ChartPoint3::new(0.2, 0.3, 0.1);
        let plus = eval_connection(&params, p, GaugeId::StringPlus).unwrap();
        let minus = eval_connection(&params, p, GaugeId::StringMinus).unwrap();
        // difference is -2c dphi: components -2c (-y2, y1)/r^2
        let c = CHARGE;
        let r2 = p.y1 * p.y1 + p.y2 * p.y2;
        let expect1 = -(-2.0 * c) * p.y2 / r2;
        let expect2 = (-2.0 * c) * p.y1 / r2;
        assert!((plus.a[1] - minus.a[1] - expect1).abs() < 1e-12);
        assert!((plus.a[2] - minus.a[2] - expect2).abs() < 1e-12);
        assert!((plus.a[0] - minus.a[0]).abs() < 1e-15);
    }

    #[test]
    fn on_axis_is_rejected() {
        let params = PotentialParams::new(0.5);
        let err = eval_connection(&params, ChartPoint3::new(0.2, 0.0, 0.0), GaugeId::StringPlus)
            .unwrap_err();
        assert!(matches!(err, GaugeError::OnDiracString { .. }));
    }

    #[test]
    fn connection_jet_grad_matches_fd() {
        let params = PotentialParams::new(0.5).with_tail_tol(1e-12);
        let p = ChartPoint3::new(0.17, 0.23, -0.31);
        let jet = connection_jet(&params, p, GaugeId::StringPlus, JetDepth::Hess).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            for k in 0..3 {
                let mut plus = p;
                let mut minus = p;
                match k {
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
                let ap = eval_connection(&params, plus, GaugeId::StringPlus).unwrap().a[i];
                let am = eval_connection(&params, minus, GaugeId::StringPlus).unwrap().a[i];
                let fd = (ap - am) / (2.0 * h);
                assert!(
                    (fd - jet.grad[i][k]).abs() < 2e-7,
                    "dA_{i}/dx_{k}: fd {fd} vs jet {}",
                    jet.grad[i][k]
                );
            }
        }
    }

    #[test]
    fn connection_jet_hess_matches_fd() {
        let params = PotentialParams::new(0.5).with_tail_tol(1e-12);
        let p = ChartPoint3::new(0.17, 0.23, -0.31);
        let jet = connection_jet(&params, p, GaugeId::StringPlus, JetDepth::Hess).unwrap();
        let h = 1e-4;
        let shift = |q: ChartPoint3, k: usize, d: f64| {
            let mut s = q;
            match k {
                0 => s.u += d,
                1 => s.y1 += d,
                _ => s.y2 += d,
            }
            s
        };
        for i in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    let f = |da: f64, db: f64| {
                        eval_connection(&params, shift(shift(p, a, da), b, db), GaugeId::StringPlus)
                            .unwrap()
                            .a[i]
                    };
                    let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                    assert!(
                        (fd - jet.hess[i][a][b]).abs() < 2e-5,
                        "d2A_{i}/dx_{a}dx_{b}: fd {fd} vs jet {}",
                        jet.hess[i][a][b]
                    );
                }
            }
        }
    }
}
