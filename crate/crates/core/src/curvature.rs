//! Numerical curvature of a `MetricField`: Christoffel symbols, Riemann and
//! Ricci tensors in an orthonormal frame, scalar invariants, and the
//! collapse-parameter sweep extracting the curvature scaling law.
//!
//! Two derivative sources feed the same tensor pipeline: the exact component
//! 2-jets that every field provides (primary path), and central finite
//! differences with one Richardson halving on the raw components (generic
//! cross-check path; its `est_error` comes from comparing the extrapolated
//! and fine-step results).

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{gram_frame, inv4, Mat4, ZERO4};
use crate::math;
use crate::metric::{MetricError, MetricField, MetricJet2};
use crate::potential::{ChartPoint3, ChartPoint4, PotentialParams};

pub type Riemann4 = [[[[f64; 4]; 4]; 4]; 4];

/// Riemann components in an orthonormal frame at the point, with the
/// standard symmetries; `ricci` in the same frame.
#[derive(Clone, Debug)]
pub struct CurvatureResult {
    pub riemann: Riemann4,
    pub ricci: Mat4,
    /// `|Rm|^2 = sum R_{abcd}^2` in the orthonormal frame.
    pub norm_rm: f64,
    pub norm_ric: f64,
    pub fd_step: f64,
    pub est_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurvatureError {
    Metric(MetricError),
    /// Gram factorization of `g(p)` failed.
    SingularMetric,
    /// `est_error` exceeded the caller-provided budget.
    StepTooLarge { est_error: f64, budget: f64 },
    InvalidParams(&'static str),
}

impl fmt::Display for CurvatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Metric(e) => write!(f, "{e}"),
            Self::SingularMetric => write!(f, "metric is singular at the evaluation point"),
            Self::StepTooLarge { est_error, budget } => {
                write!(f, "estimated error {est_error:.3e} exceeds budget {budget:.3e}")
            }
            Self::InvalidParams(msg) => write!(f, "invalid curvature parameters: {msg}"),
        }
    }
}

impl core::error::Error for CurvatureError {}

impl From<MetricError> for CurvatureError {
    fn from(e: MetricError) -> Self {
        Self::Metric(e)
    }
}

/// Where component derivatives come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Exact component jets.
    #[default]
    Analytic,
    /// Central differences with one Richardson halving.
    FiniteDifference,
}

#[derive(Clone, Copy, Debug)]
pub struct CurvatureOpts {
    pub mode: DerivativeMode,
    /// Step for the finite-difference path.
    pub fd_step: f64,
    /// When set, fail with `StepTooLarge` if `est_error` exceeds it.
    pub max_est_error: Option<f64>,
}

impl Default for CurvatureOpts {
    fn default() -> Self {
        Self {
            mode: DerivativeMode::Analytic,
            // (machine eps)^{1/3} x unit coordinate scale
            fd_step: 6.1e-6,
            max_est_error: None,
        }
    }
}

impl CurvatureOpts {
    pub fn finite_difference(fd_step: f64) -> Self {
        Self {
            mode: DerivativeMode::FiniteDifference,
            fd_step,
            max_est_error: None,
        }
    }
}

/// Curvature tensors assembled from a component 2-jet.
fn curvature_from_jet(jet: &MetricJet2) -> Result<(Riemann4, Mat4, f64, f64, f64), CurvatureError> {
    let g = &jet.g;
    let ginv = inv4(g).ok_or(CurvatureError::SingularMetric)?;

    // Gamma^a_{bc}
    let mut gamma = [[[0.0f64; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                let mut s = 0.0;
                for d in 0..4 {
                    s += ginv[a][d] * (jet.d1[b][d][c] + jet.d1[c][d][b] - jet.d1[d][b][c]);
                }
                gamma[a][b][c] = 0.5 * s;
            }
        }
    }

    // d_e g^{ad} = -g^{am} (d_e g_{mn}) g^{nd}
    let mut dginv = [[[0.0f64; 4]; 4]; 4];
    for e in 0..4 {
        for a in 0..4 {
            for d in 0..4 {
                let mut s = 0.0;
                for m in 0..4 {
                    for n in 0..4 {
                        s -= ginv[a][m] * jet.d1[e][m][n] * ginv[n][d];
                    }
                }
                dginv[e][a][d] = s;
            }
        }
    }

    // d_e Gamma^a_{bc}
    let mut dgamma = [[[[0.0f64; 4]; 4]; 4]; 4];
    for e in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let mut s = 0.0;
                    for d in 0..4 {
                        s += dginv[e][a][d] * (jet.d1[b][d][c] + jet.d1[c][d][b] - jet.d1[d][b][c]);
                        s += ginv[a][d]
                            * (jet.d2[e][b][d][c] + jet.d2[e][c][d][b] - jet.d2[e][d][b][c]);
                    }
                    dgamma[e][a][b][c] = 0.5 * s;
                }
            }
        }
    }

    // R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb}
    //           + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb}
    let mut riem_up = [[[[0.0f64; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = dgamma[c][a][d][b] - dgamma[d][a][c][b];
                    for e in 0..4 {
                        s += gamma[a][c][e] * gamma[e][d][b] - gamma[a][d][e] * gamma[e][c][b];
                    }
                    riem_up[a][b][c][d] = s;
                }
            }
        }
    }

    // lower the first index
    let mut riem = [[[[0.0f64; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for e in 0..4 {
                        s += g[a][e] * riem_up[e][b][c][d];
                    }
                    riem[a][b][c][d] = s;
                }
            }
        }
    }

    // orthonormal frame: contract each slot with E
    let e = gram_frame(g).ok_or(CurvatureError::SingularMetric)?;
    let mut t1 = [[[[0.0f64; 4]; 4]; 4]; 4];
    for i in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for a in 0..4 {
                        s += e[a][i] * riem[a][b][c][d];
                    }
                    t1[i][b][c][d] = s;
                }
            }
        }
    }
    let mut t2 = [[[[0.0f64; 4]; 4]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for b in 0..4 {
                        s += e[b][j] * t1[i][b][c][d];
                    }
                    t2[i][j][c][d] = s;
                }
            }
        }
    }
    let mut t3 = [[[[0.0f64; 4]; 4]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for c in 0..4 {
                        s += e[c][k] * t2[i][j][c][d];
                    }
                    t3[i][j][k][d] = s;
                }
            }
        }
    }
    let mut rf = [[[[0.0f64; 4]; 4]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let mut s = 0.0;
                    for d in 0..4 {
                        s += e[d][l] * t3[i][j][k][d];
                    }
                    rf[i][j][k][l] = s;
                }
            }
        }
    }

    let mut ric = ZERO4;
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for k in 0..4 {
                s += rf[k][i][k][j];
            }
            ric[i][j] = s;
        }
    }

    let mut rm2 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    rm2 += rf[i][j][k][l] * rf[i][j][k][l];
                }
            }
        }
    }
    let mut ric2 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            ric2 += ric[i][j] * ric[i][j];
        }
    }

    // first-order propagation scale of component errors into the frame norms
    let mut d1max = 0.0f64;
    let mut d2max = 0.0f64;
    let mut ginvmax = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            ginvmax = ginvmax.max(ginv[a][b].abs());
            for c in 0..4 {
                d1max = d1max.max(jet.d1[c][a][b].abs());
                for d in 0..4 {
                    d2max = d2max.max(jet.d2[c][d][a][b].abs());
                }
            }
        }
    }
    let scale = ginvmax * ginvmax * (d2max + d1max * d1max * ginvmax) * 32.0;

    Ok((rf, ric, math::sqrt(rm2), math::sqrt(ric2), scale))
}

/// Plain central-difference jet at step `h` (no extrapolation).
fn fd_jet_raw(g: &MetricField, p: ChartPoint4, h: f64) -> Result<MetricJet2, CurvatureError> {
    let x0 = p.coords();
    let eval = |x: [f64; 4]| -> Result<Mat4, CurvatureError> {
        Ok(g.eval(ChartPoint4::from_coords(x))?)
    };
    let g0 = eval(x0)?;
    let mut plus = [ZERO4; 4];
    let mut minus = [ZERO4; 4];
    for c in 0..4 {
        let mut xp = x0;
        let mut xm = x0;
        xp[c] += h;
        xm[c] -= h;
        plus[c] = eval(xp)?;
        minus[c] = eval(xm)?;
    }
    let mut jet = MetricJet2 {
        g: g0,
        d1: [ZERO4; 4],
        d2: [[ZERO4; 4]; 4],
    };
    for c in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                jet.d1[c][a][b] = (plus[c][a][b] - minus[c][a][b]) / (2.0 * h);
                jet.d2[c][c][a][b] = (plus[c][a][b] - 2.0 * g0[a][b] + minus[c][a][b]) / (h * h);
            }
        }
    }
    for c in 0..4 {
        for d in (c + 1)..4 {
            let mut xpp = x0;
            let mut xpm = x0;
            let mut xmp = x0;
            let mut xmm = x0;
            xpp[c] += h;
            xpp[d] += h;
            xpm[c] += h;
            xpm[d] -= h;
            xmp[c] -= h;
            xmp[d] += h;
            xmm[c] -= h;
            xmm[d] -= h;
            let (gpp, gpm, gmp, gmm) = (eval(xpp)?, eval(xpm)?, eval(xmp)?, eval(xmm)?);
            for a in 0..4 {
                for b in 0..4 {
                    let v = (gpp[a][b] - gpm[a][b] - gmp[a][b] + gmm[a][b]) / (4.0 * h * h);
                    jet.d2[c][d][a][b] = v;
                    jet.d2[d][c][a][b] = v;
                }
            }
        }
    }
    Ok(jet)
}

/// Componentwise Richardson combination of two second-order jets.
fn richardson_jet(coarse: &MetricJet2, fine: &MetricJet2) -> MetricJet2 {
    let mut out = fine.clone();
    for c in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                out.d1[c][a][b] = math::richardson(coarse.d1[c][a][b], fine.d1[c][a][b], 2);
                for d in 0..4 {
                    out.d2[c][d][a][b] =
                        math::richardson(coarse.d2[c][d][a][b], fine.d2[c][d][a][b], 2);
                }
            }
        }
    }
    out
}

/// Riemann curvature of `g` at `p`, in an orthonormal frame obtained by Gram
/// factorization of `g(p)`.
pub fn riemann_at(
    g: &MetricField,
    p: ChartPoint4,
    opts: &CurvatureOpts,
) -> Result<CurvatureResult, CurvatureError> {
    let result = match opts.mode {
        DerivativeMode::Analytic => {
            let jet = g.jet2(p)?;
            let (rf, ric, nrm, nric, scale) = curvature_from_jet(&jet)?;
            // tails of the component series plus rounding, propagated once
            let est = (g.error_hint() + 1e-14) * scale + 1e-13 * (1.0 + nrm);
            CurvatureResult {
                riemann: rf,
                ricci: ric,
                norm_rm: nrm,
                norm_ric: nric,
                fd_step: 0.0,
                est_error: est,
            }
        }
        DerivativeMode::FiniteDifference => {
            if !(opts.fd_step > 0.0 && opts.fd_step.is_finite()) {
                return Err(CurvatureError::InvalidParams("fd_step must be positive"));
            }
            let coarse = fd_jet_raw(g, p, opts.fd_step)?;
            let fine = fd_jet_raw(g, p, opts.fd_step / 2.0)?;
            let combined = richardson_jet(&coarse, &fine);
            let (rf, ric, nrm, nric, _) = curvature_from_jet(&combined)?;
            let (rf_fine, _, _, _, _) = curvature_from_jet(&fine)?;
            let mut est = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            est = est.max((rf[i][j][k][l] - rf_fine[i][j][k][l]).abs());
                        }
                    }
                }
            }
            CurvatureResult {
                riemann: rf,
                ricci: ric,
                norm_rm: nrm,
                norm_ric: nric,
                fd_step: opts.fd_step,
                est_error: est,
            }
        }
    };
    if let Some(budget) = opts.max_est_error {
        if result.est_error > budget {
            return Err(CurvatureError::StepTooLarge {
                est_error: result.est_error,
                budget,
            });
        }
    }
    Ok(result)
}

/// Maximum `|Ric|` over a grid, with its argmax.
#[derive(Clone, Copy, Debug)]
pub struct ScanResult {
    pub max_norm_ric: f64,
    pub argmax: ChartPoint4,
    pub evaluated: usize,
}

pub fn ricci_flatness_scan(
    g: &MetricField,
    grid: &[ChartPoint4],
    opts: &CurvatureOpts,
) -> Result<ScanResult, CurvatureError> {
    if grid.is_empty() {
        return Err(CurvatureError::InvalidParams("empty grid"));
    }
    let mut best = ScanResult {
        max_norm_ric: -1.0,
        argmax: grid[0],
        evaluated: 0,
    };
    for &p in grid {
        let r = riemann_at(g, p, opts)?;
        best.evaluated += 1;
        if r.norm_ric > best.max_norm_ric {
            best.max_norm_ric = r.norm_ric;
            best.argmax = p;
        }
    }
    Ok(best)
}

/// One row of the collapse sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepRow {
    pub eps: f64,
    pub beta: f64,
    /// `max |Rm(g_eps)|` over the near-nut grid (original, unrescaled metric).
    pub max_norm_rm: f64,
    /// Argmax in original coordinates.
    pub argmax_point: ChartPoint3,
    /// `max |Rm| * eps / log(1/eps)`.
    pub ratio_upper: f64,
    /// `max |Rm| * eps * log(1/eps)^2`.
    pub ratio_lower: f64,
    /// More than 1% of grid points failed.
    pub degraded: bool,
    /// Log factors degenerate (`eps = 1`).
    pub not_applicable: bool,
}

/// Grid concentrating points near the nut: logarithmic radial shells from
/// the bubble scale up to the period scale, sampled away from the string
/// axis.
#[derive(Clone, Copy, Debug)]
pub struct SweepGridPolicy {
    pub n_shells: usize,
    pub n_azimuth: usize,
    /// Innermost radius as a fraction of the bubble scale `c*/beta`.
    pub r_min_factor: f64,
    /// Outermost radius in rescaled (unit-lattice) coordinates.
    pub r_max: f64,
}

impl Default for SweepGridPolicy {
    fn default() -> Self {
        Self {
            n_shells: 14,
            n_azimuth: 4,
            r_min_factor: 0.05,
            r_max: 0.45,
        }
    }
}

impl SweepGridPolicy {
    /// Rescaled-coordinate grid points for collapse parameter `eps`.
    pub fn points(&self, eps: f64) -> Vec<ChartPoint4> {
        let beta = math::ln(1.0 / eps) / math::TAU;
        let r_min = (self.r_min_factor * crate::metric::C_STAR / beta.max(0.1)).min(self.r_max / 4.0);
        let mut pts = Vec::new();
        let polar = [0.25 * math::PI, 0.5 * math::PI, 0.75 * math::PI];
        for i in 0..self.n_shells {
            let f = i as f64 / (self.n_shells - 1).max(1) as f64;
            let rho = r_min * math::powf(self.r_max / r_min, f);
            for &th in &polar {
                for k in 0..self.n_azimuth {
                    let ph = math::TAU * (k as f64 + 0.5) / self.n_azimuth as f64;
                    pts.push(ChartPoint4::new(
                        rho * math::cos(th),
                        rho * math::sin(th) * math::cos(ph),
                        rho * math::sin(th) * math::sin(ph),
                        0.0,
                    ));
                }
            }
        }
        pts
    }
}

/// Sweeps the collapse parameter and extracts the curvature scaling ratios.
///
/// Each `eps` is evaluated on the rescaled unit-lattice model (the curvature
/// of `g_eps` at `eps q` is `eps^{-1}` times the curvature of
/// `eps^{-1} g_eps` at `q`, which is numerically benign for all `eps`).
pub fn curvature_sweep(
    eps_list: &[f64],
    policy: &SweepGridPolicy,
    base: &PotentialParams,
) -> Result<Vec<SweepRow>, CurvatureError> {
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(CurvatureError::InvalidParams("eps must be in (0, 1]"));
        }
        let beta = math::ln(1.0 / eps) / math::TAU;
        if beta == 0.0 {
            rows.push(SweepRow {
                eps,
                beta,
                max_norm_rm: f64::NAN,
                argmax_point: ChartPoint3::new(0.0, 0.0, 0.0),
                ratio_upper: f64::NAN,
                ratio_lower: f64::NAN,
                degraded: false,
                not_applicable: true,
            });
            continue;
        }
        let pts = policy.points(eps);
        let mut params = base.clone();
        params.eps = eps;
        // keep the exclusion radius inside the innermost shell
        let r_min_resc = pts
            .iter()
            .map(|p| math::norm3(p.base.u, p.base.y1, p.base.y2))
            .fold(f64::INFINITY, f64::min);
        params.exclusion_radius = params.exclusion_radius.min(0.5 * r_min_resc * eps);
        let model = crate::metric::gh_rescaled_model(params, crate::gauge::GaugeId::StringMinus);
        let opts = CurvatureOpts::default();
        let mut max_rm = -1.0f64;
        let mut argmax = ChartPoint3::new(0.0, 0.0, 0.0);
        let mut failures = 0usize;
        for &p in &pts {
            match riemann_at(&model, p, &opts) {
                Ok(r) => {
                    if r.norm_rm > max_rm {
                        max_rm = r.norm_rm;
                        argmax = p.base;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        if max_rm < 0.0 {
            return Err(CurvatureError::InvalidParams("all sweep grid points failed"));
        }
        let max_norm_rm = max_rm / eps;
        let log_inv = math::ln(1.0 / eps);
        rows.push(SweepRow {
            eps,
            beta,
            max_norm_rm,
            argmax_point: ChartPoint3::new(eps * argmax.u, eps * argmax.y1, eps * argmax.y2),
            ratio_upper: max_norm_rm * eps / log_inv,
            ratio_lower: max_norm_rm * eps * log_inv * log_inv,
            degraded: failures * 100 > pts.len(),
            not_applicable: false,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{taub_nut, C_STAR};

    #[test]
    fn flat_metric_has_zero_curvature() {
        let g = MetricField::FlatR3Product;
        let r = riemann_at(&g, ChartPoint4::new(0.3, 0.1, 0.2, 0.5), &CurvatureOpts::default())
            .unwrap();
        assert!(r.norm_rm < 1e-9, "norm_rm {}", r.norm_rm);
        assert!(r.norm_ric < 1e-9);
    }

    #[test]
    fn taub_nut_golden_norm() {
        // one-time symbolic derivation: |Rm|^2 = 24 c^2 / (rho + c)^6
        let golden = 0.309_837_740_770_654_2;
        let g = taub_nut(C_STAR);
        let p = ChartPoint4::new(0.6, 0.48, 0.64, 0.0); // rho = 1
        let r = riemann_at(&g, p, &CurvatureOpts::default()).unwrap();
        assert!(
            (r.norm_rm / golden - 1.0).abs() < 1e-10,
            "norm {} vs golden {golden}",
            r.norm_rm
        );
        assert!(r.norm_ric < 1e-10, "ricci {}", r.norm_ric);
    }

    #[test]
    fn fd_mode_agrees_with_analytic() {
        let g = taub_nut(0.5);
        let p = ChartPoint4::new(0.5, 0.4, -0.3, 0.2);
        let a = riemann_at(&g, p, &CurvatureOpts::default()).unwrap();
        let f = riemann_at(&g, p, &CurvatureOpts::finite_difference(1e-3)).unwrap();
        assert!(
            (a.norm_rm - f.norm_rm).abs() < 1e-5 + 10.0 * f.est_error,
            "analytic {} fd {} est {}",
            a.norm_rm,
            f.norm_rm,
            f.est_error
        );
    }

    #[test]
    fn step_budget_enforced() {
        let g = taub_nut(0.5);
        let p = ChartPoint4::new(0.5, 0.4, -0.3, 0.2);
        let mut opts = CurvatureOpts::finite_difference(0.05);
        opts.max_est_error = Some(1e-14);
        assert!(matches!(
            riemann_at(&g, p, &opts),
            Err(CurvatureError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn riemann_symmetries_hold() {
        let g = taub_nut(C_STAR);
        let p = ChartPoint4::new(0.21, 0.13, -0.34, 0.7);
        let r = riemann_at(&g, p, &CurvatureOpts::default()).unwrap();
        let tol = 10.0 * r.est_error;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let v = r.riemann[a][b][c][d];
                        assert!((v + r.riemann[b][a][c][d]).abs() < tol);
                        assert!((v + r.riemann[a][b][d][c]).abs() < tol);
                        assert!((v - r.riemann[c][d][a][b]).abs() < tol);
                        let bianchi = v + r.riemann[a][c][d][b] + r.riemann[a][d][b][c];
                        assert!(bianchi.abs() < tol, "bianchi {bianchi} tol {tol}");
                    }
                }
            }
        }
    }
}
