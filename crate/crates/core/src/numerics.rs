//! Small numerical kernels shared by the solver modules.

/// Thomas algorithm for `lower[i] u[i-1] + diag[i] u[i] + upper[i] u[i+1] = rhs[i]`.
/// `lower[0]` and `upper[n-1]` are ignored. Returns `None` on a zero pivot.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Option<Vec<f64>> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return None;
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { upper[i] / beta } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    let mut u = d;
    for i in (0..n - 1).rev() {
        u[i] -= c[i] * u[i + 1];
    }
    Some(u)
}

/// Three-point weights on a non-uniform stencil `x_{i-1} < x_i < x_{i+1}`
/// with spacings `hm = x_i - x_{i-1}`, `hp = x_{i+1} - x_i`.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub hm: f64,
    pub hp: f64,
}

impl Stencil {
    pub fn at(x: &[f64], i: usize) -> Self {
        Stencil {
            hm: x[i] - x[i - 1],
            hp: x[i + 1] - x[i],
        }
    }

    /// Second-order central first derivative weights `(w_{-}, w_0, w_{+})`.
    pub fn first(&self) -> [f64; 3] {
        let (hm, hp) = (self.hm, self.hp);
        [
            -hp / (hm * (hm + hp)),
            (hp - hm) / (hm * hp),
            hm / (hp * (hm + hp)),
        ]
    }

    pub fn second(&self) -> [f64; 3] {
        let (hm, hp) = (self.hm, self.hp);
        let s = 2.0 / (hm + hp);
        [s / hm, -s * (1.0 / hm + 1.0 / hp), s / hp]
    }

    pub fn apply(w: [f64; 3], f: &[f64], i: usize) -> f64 {
        w[0] * f[i - 1] + w[1] * f[i] + w[2] * f[i + 1]
    }
}

/// Central first derivative of samples `f` on nodes `x` at interior node `i`.
pub fn central_first(x: &[f64], f: &[f64], i: usize) -> f64 {
    Stencil::apply(Stencil::at(x, i).first(), f, i)
}

pub fn central_second(x: &[f64], f: &[f64], i: usize) -> f64 {
    Stencil::apply(Stencil::at(x, i).second(), f, i)
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(
            n >= 2 && y.len() == n,
            "monotone cubic needs matching samples"
        );
        let delta: Vec<f64> = (0..n - 1)
            .map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k]))
            .collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            let (d0, d1) = (delta[k - 1], delta[k]);
            if d0 * d1 <= 0.0 {
                m[k] = 0.0;
            } else {
                // weighted harmonic mean (Fritsch-Butland) keeps the slope inside the monotone region
                let (h0, h1) = (x[k] - x[k - 1], x[k + 1] - x[k]);
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                m[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        for k in 0..n - 1 {
            let d = delta[k];
            if d == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / d;
            let b = m[k + 1] / d;
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[k] = t * a * d;
                m[k + 1] = t * b * d;
            }
        }
        MonotoneCubic { x, y, m }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Coefficients of the cubic on interval `k` in the local variable
    /// `t = (x - x_k) / (x_{k+1} - x_k)`, lowest order first.
    pub fn power_coeffs(&self, k: usize) -> [f64; 4] {
        let h = self.x[k + 1] - self.x[k];
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let (d0, d1) = (h * self.m[k], h * self.m[k + 1]);
        [
            y0,
            d0,
            3.0 * (y1 - y0) - 2.0 * d0 - d1,
            2.0 * (y0 - y1) + d0 + d1,
        ]
    }

    /// Interval index for `x`, searching outward from `hint`.
    pub fn locate_from(&self, hint: usize, x: f64) -> usize {
        let last = self.x.len() - 2;
        let mut k = hint.min(last);
        if x >= self.x[k] {
            while k < last && x > self.x[k + 1] {
                k += 1;
            }
        } else {
            while k > 0 && x < self.x[k] {
                k -= 1;
            }
        }
        k
    }

    pub fn locate(&self, x: f64) -> usize {
        let i = self.x.partition_point(|&v| v <= x);
        i.saturating_sub(1).min(self.x.len() - 2)
    }

    pub fn eval_in(&self, k: usize, x: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let t = (x - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * h * self.m[k] + h01 * self.y[k + 1] + h11 * h * self.m[k + 1]
    }

    /// Evaluates at `x`, clamping to the end intervals.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_in(self.locate(x), x)
    }
}

/// Pairwise (cascade) summation; the reduction tree depends only on the
/// length of the input.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Lagrange polynomial through `(xs, ys)` with its first and second
/// derivatives at `t`.
pub fn lagrange_derivs(xs: &[f64], ys: &[f64], t: f64) -> (f64, f64, f64) {
    let n = xs.len();
    let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let mut denom = 1.0;
        for m in 0..n {
            if m != j {
                denom *= xs[j] - xs[m];
            }
        }
        // numerator polynomial prod_{m != j} (t - x_m) and its derivatives
        let others: Vec<f64> = (0..n).filter(|&m| m != j).map(|m| t - xs[m]).collect();
        let mut p = 1.0;
        for &o in &others {
            p *= o;
        }
        let mut p1 = 0.0;
        for a in 0..others.len() {
            let mut prod = 1.0;
            for (b, &o) in others.iter().enumerate() {
                if b != a {
                    prod *= o;
                }
            }
            p1 += prod;
        }
        let mut p2 = 0.0;
        for a in 0..others.len() {
            for b in 0..others.len() {
                if a == b {
                    continue;
                }
                let mut prod = 1.0;
                for (c, &o) in others.iter().enumerate() {
                    if c != a && c != b {
                        prod *= o;
                    }
                }
                p2 += prod;
            }
        }
        v += ys[j] * p / denom;
        d1 += ys[j] * p1 / denom;
        d2 += ys[j] * p2 / denom;
    }
    (v, d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tridiagonal_against_dense() {
        let lower = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let upper = [-1.0, -1.0, -1.0, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let u = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..4 {
            let mut s = diag[i] * u[i];
            if i > 0 {
                s += lower[i] * u[i - 1];
            }
            if i < 3 {
                s += upper[i] * u[i + 1];
            }
            assert!((s - rhs[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn stencils_exact_for_quadratics() {
        let x = [1.0, 1.3, 2.0];
        let f: Vec<f64> = x.iter().map(|v| 3.0 * v * v - v + 2.0).collect();
        assert!((central_first(&x, &f, 1) - (6.0 * 1.3 - 1.0)).abs() < 1e-12);
        assert!((central_second(&x, &f, 1) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lagrange_recovers_cubic() {
        let xs = [0.5, 1.0, 1.7, 2.2];
        let ys: Vec<f64> = xs.iter().map(|v| v * v * v - 2.0 * v).collect();
        let (v, d1, d2) = lagrange_derivs(&xs, &ys, 3.0);
        assert!((v - 21.0).abs() < 1e-10);
        assert!((d1 - 25.0).abs() < 1e-10);
        assert!((d2 - 18.0).abs() < 1e-10);
    }

    #[test]
    fn cubic_reproduces_nodes_and_lines() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let s = MonotoneCubic::new(x.clone(), y.clone());
        for i in 0..9 {
            assert_eq!(s.eval(x[i]), y[i]);
            let mid = 0.5 * (x[i] + x[i + 1]);
            assert!((s.eval(mid) - (2.0 * mid + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn power_coefficients_agree_with_hermite_form() {
        let x = vec![0.5, 1.0, 2.5, 3.0];
        let s = MonotoneCubic::new(x.clone(), vec![0.1, 0.7, 0.8, 2.0]);
        for k in 0..3 {
            let c = s.power_coeffs(k);
            for &t in &[0.0, 0.3, 0.9, 1.0] {
                let xv = x[k] + t * (x[k + 1] - x[k]);
                let p = c[0] + t * (c[1] + t * (c[2] + t * c[3]));
                assert!((p - s.eval_in(k, xv)).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn cubic_stays_within_data_range(ys in proptest::collection::vec(0.0f64..10.0, 5..30), t in 0.0f64..1.0) {
            let mut ys = ys;
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let x: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let s = MonotoneCubic::new(x.clone(), ys.clone());
            let q = t * (ys.len() - 1) as f64;
            let v = s.eval(q);
            let k = s.locate(q);
            prop_assert!(v >= ys[k] - 1e-12 && v <= ys[k + 1] + 1e-12);
        }

        #[test]
        fn pairwise_matches_naive(v in proptest::collection::vec(-1.0f64..1.0, 0..500)) {
            let naive: f64 = v.iter().sum();
            prop_assert!((pairwise_sum(&v) - naive).abs() < 1e-10);
        }
    }
}
