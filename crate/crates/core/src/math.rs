//! Scalar math shims and small numeric utilities.
//!
//! The crate is `no_std`, so `f64` transcendentals route through `libm`.

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = core::f64::consts::TAU;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn fabs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Distance in 3-space, `sqrt(x^2 + y^2 + z^2)` without intermediate overflow
/// concerns at the scales used here.
#[inline]
pub fn norm3(x: f64, y: f64, z: f64) -> f64 {
    sqrt(x * x + y * y + z * z)
}

/// Compensated (Kahan) accumulator; keeps lattice partial sums near one ulp.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Nodes and weights of 32-point Gauss-Legendre quadrature on \[-1, 1\]
/// (positive half; the rule is symmetric).
const GL32_X: [f64; 16] = [
    0.04830766568773831,
    0.1444719615827965,
    0.23928736225213706,
    0.33186860228212767,
    0.42135127613063533,
    0.5068999089322294,
    0.5877157572407623,
    0.6630442669302152,
    0.7321821187402897,
    0.7944837959679424,
    0.84936761373257,
    0.8963211557660522,
    0.9349060759377397,
    0.9647622555875064,
    0.9856115115452684,
    0.9972638618494816,
];
const GL32_W: [f64; 16] = [
    0.09654008851472781,
    0.09563872007927483,
    0.09384439908080457,
    0.09117387869576386,
    0.08765209300440391,
    0.08331192422694685,
    0.07819389578707031,
    0.07234579410884845,
    0.06582222277636175,
    0.058684093478535704,
    0.050998059262376244,
    0.042835898022226426,
    0.034273862913021626,
    0.025392065309262427,
    0.016274394730905965,
    0.007018610009469298,
];

/// 32-point Gauss-Legendre quadrature of `f` over `[a, b]`.
pub fn gauss_legendre_32<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = Kahan::new();
    for i in 0..16 {
        let dx = h * GL32_X[i];
        acc.add(GL32_W[i] * (f(c + dx) + f(c - dx)));
    }
    h * acc.value()
}

/// Richardson extrapolation of a sequence `s(h), s(h/2)` with leading error
/// order `p`: returns the extrapolated value.
#[inline]
pub fn richardson(coarse: f64, fine: f64, p: i32) -> f64 {
    let w = libm::pow(2.0, p as f64);
    (w * fine - coarse) / (w - 1.0)
}

/// Remainder bound of a midpoint Euler-Maclaurin tail closure.
///
/// If each paired tail term `phi(x)` satisfies
/// `|phi''(x)| <= sum_j c_j eps^2 / w(x)^{p_j}` with `w(x) >= margin + (x - a) eps`
/// past the cut `a`, the corrected tail differs from the true sum by at most
/// `(1/24) [ M(a) + int_a^inf M ]`, which this evaluates in closed form.
pub(crate) fn em_remainder(terms: &[(f64, i32)], eps: f64, margin: f64) -> f64 {
    let mut total = 0.0;
    for &(c, p) in terms {
        if c == 0.0 {
            continue;
        }
        let point = c * eps * eps / powf(margin, p as f64);
        let integral = c * eps / ((p - 1) as f64 * powf(margin, (p - 1) as f64));
        total += point + integral;
    }
    total / 24.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl32_integrates_polynomial_exactly() {
        // degree 7 is far inside the exactness degree (63)
        let v = gauss_legendre_32(0.0, 2.0, |x| x * x * x * x * x * x * x);
        assert!((v - 32.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn kahan_beats_naive_on_hard_sum() {
        let mut k = Kahan::new();
        for _ in 0..10_000 {
            k.add(0.1);
        }
        assert!((k.value() - 1000.0).abs() < 1e-10);
    }

    #[test]
    fn richardson_removes_leading_order() {
        // s(h) = 1 + h^2 + h^4
        let s = |h: f64| 1.0 + h * h + h * h * h * h;
        let ex = richardson(s(0.2), s(0.1), 2);
        assert!((ex - 1.0).abs() < 2e-4);
    }
}
