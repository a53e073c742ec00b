//! Small fixed-size linear algebra for the 3-dimensional state (v, m, c)
//! and the 2-dimensional (m, c) feedback block.
//!
//! Eigenvalues are computed in closed form (trigonometric method for
//! symmetric matrices, Cardano for the general characteristic cubic) so the
//! hot loops never call an iterative eigensolver.

pub type Vec3 = [f64; 3];

pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Dense 3x3 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub fn zeros() -> Self {
        Mat3([[0.0; 3]; 3])
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        let mut m = Self::zeros();
        m.0[0][0] = a;
        m.0[1][1] = b;
        m.0[2][2] = c;
        m
    }

    pub fn transpose(&self) -> Self {
        let a = &self.0;
        Mat3([
            [a[0][0], a[1][0], a[2][0]],
            [a[0][1], a[1][1], a[2][1]],
            [a[0][2], a[1][2], a[2][2]],
        ])
    }

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let mut out = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for (k, rk) in rhs.0.iter().enumerate() {
                    s += self.0[i][k] * rk[j];
                }
                out.0[i][j] = s;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        [
            dot3(&self.0[0], v),
            dot3(&self.0[1], v),
            dot3(&self.0[2], v),
        ]
    }

    pub fn add(&self, rhs: &Mat3) -> Mat3 {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    /// Outer product a b^T.
    pub fn outer(a: &Vec3, b: &Vec3) -> Mat3 {
        let mut out = Mat3::zeros();
        for (row, &ai) in out.0.iter_mut().zip(a) {
            for (x, &bj) in row.iter_mut().zip(b) {
                *x = ai * bj;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let a = &self.0;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    /// Solve self * x = b by Cramer's rule. None if the determinant is
    /// negligible relative to the matrix scale.
    pub fn solve(&self, b: &Vec3) -> Option<Vec3> {
        let det = self.det();
        let scale: f64 = self
            .0
            .iter()
            .flatten()
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        if det.abs() <= 1e-14 * scale.powi(3).max(f64::MIN_POSITIVE) {
            return None;
        }
        let mut x = [0.0; 3];
        for (col, xc) in x.iter_mut().enumerate() {
            let mut m = *self;
            for (row, &bv) in m.0.iter_mut().zip(b) {
                row[col] = bv;
            }
            *xc = m.det() / det;
        }
        Some(x)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Largest real part among the eigenvalues, via the characteristic cubic.
    pub fn max_real_eigenvalue(&self) -> f64 {
        let tr = self.trace();
        let a = &self.0;
        // Sum of principal 2x2 minors.
        let m2 = a[1][1] * a[2][2] - a[1][2] * a[2][1] + a[0][0] * a[2][2] - a[0][2] * a[2][0]
            + a[0][0] * a[1][1]
            - a[0][1] * a[1][0];
        let det = self.det();
        // lambda^3 + c2 lambda^2 + c1 lambda + c0 = 0
        let c2 = -tr;
        let c1 = m2;
        let c0 = -det;
        let (r1, r2, r3) = cubic_real_parts(c2, c1, c0);
        r1.max(r2).max(r3)
    }
}

/// Real parts of the roots of x^3 + a x^2 + b x + c = 0.
pub fn cubic_real_parts(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let shift = -a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    if disc > 0.0 {
        // One real root, one complex conjugate pair.
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        let x1 = u + v;
        (x1 + shift, -x1 / 2.0 + shift, -x1 / 2.0 + shift)
    } else if p.abs() < 1e-300 {
        // Triple root.
        (shift, shift, shift)
    } else {
        // Three real roots (trigonometric form).
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let x1 = m * phi.cos();
        let x2 = m * (phi - 2.0 * std::f64::consts::PI / 3.0).cos();
        let x3 = m * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        (x1 + shift, x2 + shift, x3 + shift)
    }
}

/// Symmetric 3x3 matrix over the (v, m, c) state ordering, stored as its six
/// independent entries. Symmetry is exact by construction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Sym3 {
    pub vv: f64,
    pub vm: f64,
    pub vc: f64,
    pub mm: f64,
    pub mc: f64,
    pub cc: f64,
}

impl Sym3 {
    pub fn zeros() -> Self {
        Sym3 {
            vv: 0.0,
            vm: 0.0,
            vc: 0.0,
            mm: 0.0,
            mc: 0.0,
            cc: 0.0,
        }
    }

    pub fn diag(vv: f64, mm: f64, cc: f64) -> Self {
        Sym3 {
            vv,
            vm: 0.0,
            vc: 0.0,
            mm,
            mc: 0.0,
            cc,
        }
    }

    pub fn from_entries(e: [f64; 6]) -> Self {
        Sym3 {
            vv: e[0],
            vm: e[1],
            vc: e[2],
            mm: e[3],
            mc: e[4],
            cc: e[5],
        }
    }

    pub fn entries(&self) -> [f64; 6] {
        [self.vv, self.vm, self.vc, self.mm, self.mc, self.cc]
    }

    pub fn to_mat(&self) -> Mat3 {
        Mat3([
            [self.vv, self.vm, self.vc],
            [self.vm, self.mm, self.mc],
            [self.vc, self.mc, self.cc],
        ])
    }

    /// Symmetric part of a dense matrix. Exact when the input is symmetric up
    /// to rounding.
    pub fn from_mat(m: &Mat3) -> Self {
        let a = &m.0;
        Sym3 {
            vv: a[0][0],
            vm: 0.5 * (a[0][1] + a[1][0]),
            vc: 0.5 * (a[0][2] + a[2][0]),
            mm: a[1][1],
            mc: 0.5 * (a[1][2] + a[2][1]),
            cc: a[2][2],
        }
    }

    pub fn add(&self, rhs: &Sym3) -> Sym3 {
        Sym3 {
            vv: self.vv + rhs.vv,
            vm: self.vm + rhs.vm,
            vc: self.vc + rhs.vc,
            mm: self.mm + rhs.mm,
            mc: self.mc + rhs.mc,
            cc: self.cc + rhs.cc,
        }
    }

    pub fn sub(&self, rhs: &Sym3) -> Sym3 {
        self.add(&rhs.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Sym3 {
        Sym3 {
            vv: s * self.vv,
            vm: s * self.vm,
            vc: s * self.vc,
            mm: s * self.mm,
            mc: s * self.mc,
            cc: s * self.cc,
        }
    }

    /// self + s * rhs.
    pub fn axpy(&self, s: f64, rhs: &Sym3) -> Sym3 {
        self.add(&rhs.scale(s))
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        [
            self.vv * v[0] + self.vm * v[1] + self.vc * v[2],
            self.vm * v[0] + self.mm * v[1] + self.mc * v[2],
            self.vc * v[0] + self.mc * v[1] + self.cc * v[2],
        ]
    }

    /// x^T S y.
    pub fn quad_form(&self, x: &Vec3, y: &Vec3) -> f64 {
        dot3(x, &self.mul_vec(y))
    }

    pub fn trace(&self) -> f64 {
        self.vv + self.mm + self.cc
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|x| x.is_finite())
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries().iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// All three eigenvalues in descending order (trigonometric closed form;
    /// a symmetric matrix has real spectrum).
    pub fn eigenvalues(&self) -> [f64; 3] {
        let p1 = self.vm * self.vm + self.vc * self.vc + self.mc * self.mc;
        if p1 == 0.0 {
            let mut d = [self.vv, self.mm, self.cc];
            d.sort_by(|a, b| b.partial_cmp(a).unwrap());
            return d;
        }
        let q = self.trace() / 3.0;
        let p2 = (self.vv - q).powi(2) + (self.mm - q).powi(2) + (self.cc - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return [q, q, q];
        }
        let b = Sym3 {
            vv: (self.vv - q) / p,
            vm: self.vm / p,
            vc: self.vc / p,
            mm: (self.mm - q) / p,
            mc: self.mc / p,
            cc: (self.cc - q) / p,
        };
        let r = (b.to_mat().det() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e1, e2, e3]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[2]
    }
}

/// Eigenvalues of a real 2x2 matrix as (real, imag) pairs.
pub fn eig2(m: &[[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(tr / 2.0 + s, 0.0), (tr / 2.0 - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(tr / 2.0, s), (tr / 2.0, -s)]
    }
}

/// Spectral radius of a real 2x2 matrix.
pub fn spectral_radius2(m: &[[f64; 2]; 2]) -> f64 {
    let [(r1, i1), (r2, i2)] = eig2(m);
    (r1 * r1 + i1 * i1).sqrt().max((r2 * r2 + i2 * i2).sqrt())
}
