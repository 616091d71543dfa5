//! Fixed-size linear algebra for 3- and 4-dimensional tensors.
//!
//! Everything is plain `[[f64; N]; N]`; the dimensions never change and the
//! hot paths are simple enough that generic matrix crates would only add
//! indirection.

use crate::math::sqrt;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

pub const ZERO3: Mat3 = [[0.0; 3]; 3];
pub const ZERO4: Mat4 = [[0.0; 4]; 4];

pub fn identity4() -> Mat4 {
    let mut m = ZERO4;
    for i in 0..4 {
        m[i][i] = 1.0;
    }
    m
}

pub fn mat4_scale(m: &Mat4, s: f64) -> Mat4 {
    let mut r = ZERO4;
    for i in 0..4 {
        for j in 0..4 {
            r[i][j] = m[i][j] * s;
        }
    }
    r
}

pub fn mat4_add(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut r = ZERO4;
    for i in 0..4 {
        for j in 0..4 {
            r[i][j] = a[i][j] + b[i][j];
        }
    }
    r
}

pub fn mat4_sub(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut r = ZERO4;
    for i in 0..4 {
        for j in 0..4 {
            r[i][j] = a[i][j] - b[i][j];
        }
    }
    r
}

pub fn mat4_max_abs(m: &Mat4) -> f64 {
    let mut best = 0.0f64;
    for row in m {
        for &v in row {
            best = best.max(v.abs());
        }
    }
    best
}

/// Determinant by cofactor expansion; 4x4 only ever holds metric components.
pub fn det4(m: &Mat4) -> f64 {
    let mut det = 0.0;
    for j in 0..4 {
        det += m[0][j] * cofactor4(m, 0, j);
    }
    det
}

fn minor3(m: &Mat4, skip_i: usize, skip_j: usize) -> f64 {
    let mut sub = [[0.0f64; 3]; 3];
    let mut r = 0;
    for i in 0..4 {
        if i == skip_i {
            continue;
        }
        let mut c = 0;
        for j in 0..4 {
            if j == skip_j {
                continue;
            }
            sub[r][c] = m[i][j];
            c += 1;
        }
        r += 1;
    }
    det3(&sub)
}

fn cofactor4(m: &Mat4, i: usize, j: usize) -> f64 {
    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
    sign * minor3(m, i, j)
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse via adjugate; returns `None` when the determinant vanishes.
pub fn inv4(m: &Mat4) -> Option<Mat4> {
    let det = det4(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = ZERO4;
    for i in 0..4 {
        for j in 0..4 {
            // adjugate transposes the cofactor matrix
            inv[i][j] = cofactor4(m, j, i) / det;
        }
    }
    Some(inv)
}

/// Cholesky factor `L` (lower triangular) of a symmetric positive-definite
/// matrix, `m = L L^T`. Returns `None` when a pivot is non-positive.
pub fn cholesky4(m: &Mat4) -> Option<Mat4> {
    let mut l = ZERO4;
    for i in 0..4 {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][j] = sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn inv_lower4(l: &Mat4) -> Mat4 {
    let mut inv = ZERO4;
    for i in 0..4 {
        inv[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += l[i][k] * inv[k][j];
            }
            inv[i][j] = -s / l[i][i];
        }
    }
    inv
}

/// Orthonormal co-frame `E` with `E^T G E = Id`, built from the Cholesky
/// factor: `E = (L^{-1})^T`. Returns `None` when `G` is not positive
/// definite.
pub fn gram_frame(g: &Mat4) -> Option<Mat4> {
    let l = cholesky4(g)?;
    let li = inv_lower4(&l);
    let mut e = ZERO4;
    for i in 0..4 {
        for j in 0..4 {
            e[i][j] = li[j][i];
        }
    }
    Some(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inverse_round_trip() {
        let m: Mat4 = [
            [4.0, 1.0, 0.2, 0.0],
            [1.0, 3.0, 0.0, 0.1],
            [0.2, 0.0, 2.0, 0.3],
            [0.0, 0.1, 0.3, 1.5],
        ];
        let inv = inv4(&m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += m[i][k] * inv[k][j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(approx(s, want, 1e-12), "({i},{j}) -> {s}");
            }
        }
    }

    #[test]
    fn gram_frame_orthonormalizes() {
        let g: Mat4 = [
            [2.5, 0.3, 0.0, 0.1],
            [0.3, 1.8, 0.2, 0.0],
            [0.0, 0.2, 3.1, 0.4],
            [0.1, 0.0, 0.4, 0.9],
        ];
        let e = gram_frame(&g).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        s += e[a][i] * g[a][b] * e[b][j];
                    }
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(approx(s, want, 1e-12), "({i},{j}) -> {s}");
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut g = identity4();
        g[2][2] = -1.0;
        assert!(cholesky4(&g).is_none());
    }

    #[test]
    fn det_of_block_metric() {
        // Gibbons-Hawking shape: V Id3 + V^{-1} A A^T block with fiber row
        let v = 2.7;
        let a = [0.3, -0.4, 0.2];
        let mut g = ZERO4;
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] = a[i] * a[j] / v;
            }
            g[i][i] += v;
            g[i][3] = a[i] / v;
            g[3][i] = a[i] / v;
        }
        g[3][3] = 1.0 / v;
        assert!(approx(det4(&g), v * v, 1e-12));
    }
}
