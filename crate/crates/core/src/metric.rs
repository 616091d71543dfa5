//! Metric fields: the Gibbons-Hawking ansatz, the limit models, the period
//! map, and rescaling.
//!
//! A Gibbons-Hawking metric in coordinates `(u, y1, y2, t)` (fiber period 1,
//! `theta_0 = dt + A`) has components
//!
//! ```text
//! g_ij = V d_ij + V^{-1} A_i A_j,   g_i3 = V^{-1} A_i,   g_33 = V^{-1},
//! ```
//!
//! with `det g = V^2` as an algebraic identity of the ansatz. All fields
//! carry exact analytic 2-jets of their components (the lattice potential and
//! connection have analytic derivative series), so curvature downstream does
//! not have to rely on finite differencing.

use alloc::boxed::Box;
use core::fmt;

use num_complex::Complex64;

use crate::gauge::{self, ConnectionJet, GaugeError, GaugeId, JetDepth};
use crate::linalg::{Mat4, ZERO4};
use crate::math;
use crate::potential::{
    self, ChartPoint3, ChartPoint4, GhChart, JetLevel, PotentialError, PotentialParams,
    PotentialValue,
};

/// Measured near-charge coefficient of the unit-lattice potential:
/// `rho * V0(1)(rho, 0, 0) -> c* = 1/(4 pi)`. Also the charge quantum for
/// which the fiber-period-1 connection has Chern number one, and the default
/// Taub-NUT constant.
pub const C_STAR: f64 = potential::CHARGE;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricError {
    Potential(PotentialError),
    Gauge(GaugeError),
    /// Metric evaluation produced a non-positive-definite matrix.
    NotPositiveDefinite,
    /// `tau` is singular at `y = 0`.
    OriginSingular,
    InvalidParams(&'static str),
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Potential(e) => write!(f, "{e}"),
            Self::Gauge(e) => write!(f, "{e}"),
            Self::NotPositiveDefinite => write!(f, "metric is not positive definite"),
            Self::OriginSingular => write!(f, "period map is singular at y = 0"),
            Self::InvalidParams(msg) => write!(f, "invalid metric parameters: {msg}"),
        }
    }
}

impl core::error::Error for MetricError {}

impl From<PotentialError> for MetricError {
    fn from(e: PotentialError) -> Self {
        Self::Potential(e)
    }
}

impl From<GaugeError> for MetricError {
    fn from(e: GaugeError) -> Self {
        Self::Gauge(e)
    }
}

/// Metric components together with first and second coordinate derivatives,
/// `d1[c][a][b] = d_c g_ab`, `d2[c][d][a][b] = d_c d_d g_ab`.
#[derive(Clone, Debug)]
pub struct MetricJet2 {
    pub g: Mat4,
    pub d1: [Mat4; 4],
    pub d2: [[Mat4; 4]; 4],
}

impl MetricJet2 {
    fn flat(g: Mat4) -> Self {
        Self {
            g,
            d1: [ZERO4; 4],
            d2: [[ZERO4; 4]; 4],
        }
    }
}

/// Gibbons-Hawking data: which chart, which gauge, and the potential family.
#[derive(Clone, Debug)]
pub struct GhField {
    pub params: PotentialParams,
    pub gauge: GaugeId,
    pub(crate) chart: GhChart,
}

/// A callable metric field; evaluation is pure and fields are immutable.
#[derive(Clone, Debug)]
pub enum MetricField {
    /// The Gibbons-Hawking / Ooguri-Vafa family.
    GibbonsHawking(GhField),
    /// One-monopole `V = 1 + c/rho` on the chosen gauge.
    TaubNut { c: f64, gauge: GaugeId, exclusion: f64 },
    /// Flat product `R^3 x S^1`, `diag(1,1,1,1)`.
    FlatR3Product,
    /// Flat product with base factor `gamma0^2` and unit fiber circle.
    FlatS1R2 { gamma0sq: f64 },
    /// `lambda * inner`, optionally precomposed with the coordinate scaling
    /// `x -> coord_scale . x`.
    Rescaled {
        inner: Box<MetricField>,
        lambda: f64,
        coord_scale: Option<[f64; 4]>,
    },
    /// `inner + amp * P` for the fixed smooth symmetric perturbation `P`.
    Perturbed { inner: Box<MetricField>, amp: f64 },
}

/// The Gibbons-Hawking metric of `V(eps) = V0(eps) + eps^{-1} Re h` in
/// original coordinates `(u, y1, y2, t)`.
pub fn gh_metric(params: PotentialParams, gauge: GaugeId) -> MetricField {
    let chart = GhChart::original(params.eps);
    MetricField::GibbonsHawking(GhField {
        params,
        gauge,
        chart,
    })
}

/// The same family rescaled by `eps^{-1}` in rescaled coordinates
/// `(s, v1, v2, t) = (u/eps, y1/eps, y2/eps, t)`: a unit-lattice
/// Gibbons-Hawking metric with potential `V1 = V0(1) + beta + Re h(eps y)`.
pub fn gh_rescaled_model(params: PotentialParams, gauge: GaugeId) -> MetricField {
    let chart = GhChart::rescaled(params.eps);
    MetricField::GibbonsHawking(GhField {
        params,
        gauge,
        chart,
    })
}

/// Debug variant with a non-harmonic defect `V + quad_u * u^2` (connection
/// left unchanged); curvature scans must detect the broken ansatz.
pub fn gh_metric_nonharmonic(
    params: PotentialParams,
    gauge: GaugeId,
    quad_u: f64,
) -> MetricField {
    let mut chart = GhChart::original(params.eps);
    chart.quad_u = quad_u;
    MetricField::GibbonsHawking(GhField {
        params,
        gauge,
        chart,
    })
}

/// Non-harmonic defect on the rescaled unit-lattice chart.
pub fn gh_rescaled_nonharmonic(
    params: PotentialParams,
    gauge: GaugeId,
    quad_u: f64,
) -> MetricField {
    let mut chart = GhChart::rescaled(params.eps);
    chart.quad_u = quad_u;
    MetricField::GibbonsHawking(GhField {
        params,
        gauge,
        chart,
    })
}

/// The Ricci-flat Taub-NUT metric `V = 1 + c/rho` (default gauge, nut at the
/// origin). `c` defaults to the measured `C_STAR` in callers.
pub fn taub_nut(c: f64) -> MetricField {
    MetricField::TaubNut {
        c,
        gauge: GaugeId::StringMinus,
        exclusion: 1e-9,
    }
}

pub fn taub_nut_gauged(c: f64, gauge: GaugeId) -> MetricField {
    MetricField::TaubNut {
        c,
        gauge,
        exclusion: 1e-9,
    }
}

/// `lambda * g`.
pub fn rescale(g: MetricField, lambda: f64) -> MetricField {
    MetricField::Rescaled {
        inner: Box::new(g),
        lambda,
        coord_scale: None,
    }
}

/// `lambda * g` pulled back by the coordinate scaling `x -> s . x`
/// (components transform with the exact Jacobian).
pub fn rescale_with_coords(g: MetricField, lambda: f64, coord_scale: [f64; 4]) -> MetricField {
    MetricField::Rescaled {
        inner: Box::new(g),
        lambda,
        coord_scale: Some(coord_scale),
    }
}

/// `g + amp * P` with the fixed smooth symmetric perturbation `P`.
pub fn perturbed(g: MetricField, amp: f64) -> MetricField {
    MetricField::Perturbed {
        inner: Box::new(g),
        amp,
    }
}

/// Fixed symmetric coefficient matrix of the perturbation `P`.
const PERT_COEFF: Mat4 = [
    [0.30, 0.10, 0.00, 0.05],
    [0.10, 0.20, 0.00, 0.00],
    [0.00, 0.00, 0.25, 0.02],
    [0.05, 0.00, 0.02, 0.15],
];

/// `P_ab(x) = C_ab (1 + 0.5 sin(2 pi u) cos(2 pi y1))`; smooth with exact
/// jets at every order.
fn perturbation_jet(p: ChartPoint4) -> MetricJet2 {
    let (su, cu) = (math::sin(math::TAU * p.base.u), math::cos(math::TAU * p.base.u));
    let (s1, c1) = (
        math::sin(math::TAU * p.base.y1),
        math::cos(math::TAU * p.base.y1),
    );
    let psi = 1.0 + 0.5 * su * c1;
    let dpsi = [
        0.5 * math::TAU * cu * c1,
        -0.5 * math::TAU * su * s1,
        0.0,
        0.0,
    ];
    let t2 = math::TAU * math::TAU;
    let mut d2psi = [[0.0f64; 4]; 4];
    d2psi[0][0] = -0.5 * t2 * su * c1;
    d2psi[0][1] = -0.5 * t2 * cu * s1;
    d2psi[1][0] = d2psi[0][1];
    d2psi[1][1] = -0.5 * t2 * su * c1;
    let mut jet = MetricJet2::flat(ZERO4);
    for a in 0..4 {
        for b in 0..4 {
            jet.g[a][b] = PERT_COEFF[a][b] * psi;
            for c in 0..4 {
                jet.d1[c][a][b] = PERT_COEFF[a][b] * dpsi[c];
                for d in 0..4 {
                    jet.d2[c][d][a][b] = PERT_COEFF[a][b] * d2psi[c][d];
                }
            }
        }
    }
    jet
}

/// Assembles GH components and their derivatives from the jets of `V` and
/// `A`. Index 3 is the fiber; all `t`-derivatives vanish.
fn assemble_gh(v: &PotentialValue, a: &ConnectionJet, depth: JetDepth) -> MetricJet2 {
    let vv = v.value;
    let w = 1.0 / vv;
    let mut g = ZERO4;
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = w * a.a[i] * a.a[j];
        }
        g[i][i] += vv;
        g[i][3] = w * a.a[i];
        g[3][i] = g[i][3];
    }
    g[3][3] = w;
    if depth < JetDepth::Hess {
        return MetricJet2::flat(g);
    }

    // w = 1/V: w_k = -w^2 V_k, w_kl = 2 w^3 V_k V_l - w^2 V_kl
    let mut wk = [0.0f64; 3];
    for k in 0..3 {
        wk[k] = -w * w * v.grad[k];
    }
    let mut wkl = [[0.0f64; 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            wkl[k][l] = 2.0 * w * w * w * v.grad[k] * v.grad[l] - w * w * v.hess[k][l];
        }
    }

    let mut d1 = [ZERO4; 4];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = wk[k] * a.a[i] * a.a[j]
                    + w * (a.grad[i][k] * a.a[j] + a.a[i] * a.grad[j][k]);
                if i == j {
                    s += v.grad[k];
                }
                d1[k][i][j] = s;
            }
            d1[k][i][3] = wk[k] * a.a[i] + w * a.grad[i][k];
            d1[k][3][i] = d1[k][i][3];
        }
        d1[k][3][3] = wk[k];
    }

    let mut d2 = [[ZERO4; 4]; 4];
    for k in 0..3 {
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = wkl[k][l] * a.a[i] * a.a[j]
                        + wk[k] * (a.grad[i][l] * a.a[j] + a.a[i] * a.grad[j][l])
                        + wk[l] * (a.grad[i][k] * a.a[j] + a.a[i] * a.grad[j][k])
                        + w * (a.hess[i][k][l] * a.a[j]
                            + a.grad[i][k] * a.grad[j][l]
                            + a.grad[i][l] * a.grad[j][k]
                            + a.a[i] * a.hess[j][k][l]);
                    if i == j {
                        s += v.hess[k][l];
                    }
                    d2[k][l][i][j] = s;
                }
                d2[k][l][i][3] = wkl[k][l] * a.a[i] + wk[k] * a.grad[i][l] + wk[l] * a.grad[i][k]
                    + w * a.hess[i][k][l];
                d2[k][l][3][i] = d2[k][l][i][3];
            }
            d2[k][l][3][3] = wkl[k][l];
        }
    }

    MetricJet2 { g, d1, d2 }
}

/// Taub-NUT potential jet `V = 1 + c/rho`.
fn taub_nut_potential(c: f64, p: ChartPoint3) -> PotentialValue {
    let x = [p.u, p.y1, p.y2];
    let rho = math::norm3(p.u, p.y1, p.y2);
    let inv3 = 1.0 / (rho * rho * rho);
    let inv5 = inv3 / (rho * rho);
    let mut grad = [0.0f64; 3];
    let mut hess = [[0.0f64; 3]; 3];
    for k in 0..3 {
        grad[k] = -c * x[k] * inv3;
        for l in 0..3 {
            hess[k][l] = 3.0 * c * x[k] * x[l] * inv5;
        }
        hess[k][k] -= c * inv3;
    }
    PotentialValue {
        value: 1.0 + c / rho,
        grad,
        hess,
        err_bound: 0.0,
    }
}

impl GhField {
    fn jet(&self, p: ChartPoint3, depth: JetDepth) -> Result<MetricJet2, MetricError> {
        let level = match depth {
            JetDepth::Value => JetLevel::Value,
            JetDepth::Hess => JetLevel::Hess,
        };
        let v = potential::gh_potential_jet(&self.params, &self.chart, p, level)?;
        let a = gauge::connection_jet_scaled(
            &self.params,
            self.chart.lattice_eps,
            self.chart.poly_scale,
            self.chart.poly_coord_scale,
            p,
            self.gauge,
            depth,
        )?;
        Ok(assemble_gh(&v, &a, depth))
    }

    /// The potential backing this field (value/grad/hess at `p`).
    pub fn potential(&self, p: ChartPoint3) -> Result<PotentialValue, MetricError> {
        Ok(potential::gh_potential_jet(
            &self.params,
            &self.chart,
            p,
            JetLevel::Hess,
        )?)
    }
}

impl MetricField {
    fn jet_depth(&self, p: ChartPoint4, depth: JetDepth) -> Result<MetricJet2, MetricError> {
        match self {
            MetricField::GibbonsHawking(f) => f.jet(p.base, depth),
            MetricField::TaubNut { c, gauge, exclusion } => {
                if !(*c > 0.0) {
                    return Err(MetricError::InvalidParams("taub_nut constant must be positive"));
                }
                let v = taub_nut_potential(*c, p.base);
                let a = gauge::connection_jet_single(*c, *exclusion, p.base, *gauge, depth)?;
                Ok(assemble_gh(&v, &a, depth))
            }
            MetricField::FlatR3Product => {
                let mut g = ZERO4;
                for i in 0..4 {
                    g[i][i] = 1.0;
                }
                Ok(MetricJet2::flat(g))
            }
            MetricField::FlatS1R2 { gamma0sq } => {
                if !(*gamma0sq > 0.0) {
                    return Err(MetricError::InvalidParams("gamma0sq must be positive"));
                }
                let mut g = ZERO4;
                g[0][0] = *gamma0sq;
                g[1][1] = *gamma0sq;
                g[2][2] = *gamma0sq;
                g[3][3] = 1.0;
                Ok(MetricJet2::flat(g))
            }
            MetricField::Rescaled {
                inner,
                lambda,
                coord_scale,
            } => {
                if !(*lambda > 0.0) {
                    return Err(MetricError::InvalidParams("lambda must be positive"));
                }
                let s = coord_scale.unwrap_or([1.0; 4]);
                let q = ChartPoint4::from_coords([
                    s[0] * p.base.u,
                    s[1] * p.base.y1,
                    s[2] * p.base.y2,
                    s[3] * p.t,
                ]);
                let jet = inner.jet_depth(q, depth)?;
                let mut out = MetricJet2::flat(ZERO4);
                for a in 0..4 {
                    for b in 0..4 {
                        let f = lambda * s[a] * s[b];
                        out.g[a][b] = f * jet.g[a][b];
                        for c in 0..4 {
                            out.d1[c][a][b] = f * s[c] * jet.d1[c][a][b];
                            for d in 0..4 {
                                out.d2[c][d][a][b] = f * s[c] * s[d] * jet.d2[c][d][a][b];
                            }
                        }
                    }
                }
                Ok(out)
            }
            MetricField::Perturbed { inner, amp } => {
                let mut jet = inner.jet_depth(p, depth)?;
                let pj = perturbation_jet(p);
                for a in 0..4 {
                    for b in 0..4 {
                        jet.g[a][b] += amp * pj.g[a][b];
                        for c in 0..4 {
                            jet.d1[c][a][b] += amp * pj.d1[c][a][b];
                            for d in 0..4 {
                                jet.d2[c][d][a][b] += amp * pj.d2[c][d][a][b];
                            }
                        }
                    }
                }
                Ok(jet)
            }
        }
    }

    /// Metric components at `p`.
    pub fn eval(&self, p: ChartPoint4) -> Result<Mat4, MetricError> {
        Ok(self.jet_depth(p, JetDepth::Value)?.g)
    }

    /// Components with exact first and second derivatives.
    pub fn jet2(&self, p: ChartPoint4) -> Result<MetricJet2, MetricError> {
        self.jet_depth(p, JetDepth::Hess)
    }
}

/// Period map `tau(y) = (1/2 pi i) log y + i h(y)` (principal branch).
pub fn eval_tau(y: Complex64, h_coeffs: &[Complex64]) -> Result<Complex64, MetricError> {
    if y.re == 0.0 && y.im == 0.0 {
        return Err(MetricError::OriginSingular);
    }
    let theta = math::atan2(y.im, y.re);
    let ln_abs = math::ln(y.norm());
    let mut h = Complex64::new(0.0, 0.0);
    for &c in h_coeffs.iter().rev() {
        h = h * y + c;
    }
    Ok(Complex64::new(theta / math::TAU, -ln_abs / math::TAU) + Complex64::new(0.0, 1.0) * h)
}

/// `tau` after analytic continuation `loops` times counterclockwise around
/// the origin, computed by walking the circle and accumulating the argument
/// (so the monodromy is measured, not assumed).
pub fn tau_continued(
    y: Complex64,
    h_coeffs: &[Complex64],
    loops: i32,
) -> Result<Complex64, MetricError> {
    if y.re == 0.0 && y.im == 0.0 {
        return Err(MetricError::OriginSingular);
    }
    let steps = 256 * loops.unsigned_abs() as usize;
    let mut total = math::atan2(y.im, y.re);
    let mut prev = y;
    for k in 1..=steps {
        let phi = math::TAU * (loops as f64) * (k as f64) / (steps as f64);
        let (s, c) = (math::sin(phi), math::cos(phi));
        let cur = y * Complex64::new(c, s);
        total += math::atan2((cur / prev).im, (cur / prev).re);
        prev = cur;
    }
    let ln_abs = math::ln(y.norm());
    let mut h = Complex64::new(0.0, 0.0);
    for &c in h_coeffs.iter().rev() {
        h = h * prev + c;
    }
    Ok(Complex64::new(total / math::TAU, -ln_abs / math::TAU) + Complex64::new(0.0, 1.0) * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::det4;

    #[test]
    fn constant_potential_limit_is_identity() {
        // far from the nut the Taub-NUT components approach diag(1,1,1,1)
        let g = taub_nut(C_STAR);
        let p = ChartPoint4::new(2000.0, 1.0, 0.5, 0.0);
        let m = g.eval(p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((m[i][j] - want).abs() < 2e-3, "({i},{j}): {}", m[i][j]);
            }
        }
    }

    #[test]
    fn det_is_v_squared() {
        let params = PotentialParams::new(0.4).with_tail_tol(1e-12);
        let g = gh_metric(params.clone(), GaugeId::StringPlus);
        let p = ChartPoint4::new(0.13, 0.21, -0.17, 0.3);
        let m = g.eval(p).unwrap();
        let v = potential::eval_v(&params, p.base).unwrap();
        let det = det4(&m);
        assert!(
            (det / (v.value * v.value) - 1.0).abs() < 1e-12,
            "det {det} vs V^2 {}",
            v.value * v.value
        );
    }

    #[test]
    fn det_is_v_tn_squared_for_taub_nut() {
        let g = taub_nut(C_STAR);
        for &(u, y1, y2) in &[(1.0, 0.2, -0.3), (0.1, 0.5, 0.4), (-0.7, 0.01, 0.3)] {
            let p = ChartPoint4::new(u, y1, y2, 0.0);
            let m = g.eval(p).unwrap();
            let rho = math::norm3(u, y1, y2);
            let v = 1.0 + C_STAR / rho;
            assert!((det4(&m) / (v * v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rescale_identity_is_noop() {
        let g = taub_nut(1.0);
        let r = rescale(g.clone(), 1.0);
        let p = ChartPoint4::new(0.4, 0.3, 0.2, 0.1);
        assert_eq!(g.eval(p).unwrap(), r.eval(p).unwrap());
    }

    #[test]
    fn jet_matches_fd_for_gh() {
        let params = PotentialParams::new(0.5).with_tail_tol(1e-13);
        let g = gh_metric(params, GaugeId::StringPlus);
        let p = ChartPoint4::new(0.11, 0.17, -0.23, 0.0);
        let jet = g.jet2(p).unwrap();
        let h = 1e-5;
        for c in 0..3 {
            let mut xp = p.coords();
            let mut xm = p.coords();
            xp[c] += h;
            xm[c] -= h;
            let gp = g.eval(ChartPoint4::from_coords(xp)).unwrap();
            let gm = g.eval(ChartPoint4::from_coords(xm)).unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    let fd = (gp[a][b] - gm[a][b]) / (2.0 * h);
                    assert!(
                        (fd - jet.d1[c][a][b]).abs() < 5e-7,
                        "d_{c} g_{a}{b}: fd {fd} vs jet {}",
                        jet.d1[c][a][b]
                    );
                }
            }
        }
    }

    #[test]
    fn tau_at_exp_minus_2pi_is_i() {
        let y = Complex64::new(math::exp(-math::TAU), 0.0);
        let tau = eval_tau(y, &[]).unwrap();
        assert!((tau.re).abs() < 1e-14);
        assert!((tau.im - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monodromy_adds_one() {
        let y = Complex64::new(0.3, 0.2);
        let base = eval_tau(y, &[]).unwrap();
        let cont = tau_continued(y, &[], 1).unwrap();
        assert!((cont - base - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn tau_with_h_golden() {
        // h(y) = i y at y = 0.5: tau = (1/2pi i) log(0.5) + i (0.5 i)
        let y = Complex64::new(0.5, 0.0);
        let tau = eval_tau(y, &[Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)]).unwrap();
        let expect = Complex64::new(-0.5, -math::ln(0.5) / math::TAU);
        assert!((tau - expect).norm() < 1e-14, "tau {tau}");
    }

    #[test]
    fn tau_origin_is_singular() {
        assert!(matches!(
            eval_tau(Complex64::new(0.0, 0.0), &[]),
            Err(MetricError::OriginSingular)
        ));
    }
}
