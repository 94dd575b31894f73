//! Univariate polynomials and real root isolation with Sturm sequences.

/// Relative size below which a leading coefficient is dropped.
const TRIM_TOL: f64 = 1e-12;

/// Relative size below which a Euclidean remainder is treated as zero.
const REMAINDER_TOL: f64 = 1e-10;

/// Polynomial with real coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariatePoly {
    coeffs: Vec<f64>,
}

impl UnivariatePoly {
    /// Builds a polynomial and trims negligible leading coefficients.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Self { coeffs };
        p.trim(TRIM_TOL);
        p
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut coeffs = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= r * c;
            }
            coeffs = next;
        }
        Self::new(coeffs)
    }

    fn trim(&mut self, rel: f64) {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while let Some(&last) = self.coeffs.last() {
            if self.coeffs.len() > 1 && last.abs() <= rel * scale || last == 0.0 {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Degree after trimming; the zero polynomial reports `None`.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Value and first derivative at `x`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    /// Sum of |c_i x^i|, the natural scale of an evaluation at `x`.
    pub fn magnitude_at(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x.abs() + c.abs())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self::new(Vec::new());
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    /// Divides by the largest absolute coefficient; signs are preserved.
    fn normalized(mut self) -> Self {
        let s = self.max_abs_coeff();
        if s > 0.0 {
            for c in &mut self.coeffs {
                *c /= s;
            }
        }
        self
    }

    /// Quotient and remainder of Euclidean division.
    fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dd = divisor.coeffs.len();
        if self.coeffs.len() < dd {
            return (Self { coeffs: vec![] }, self.clone());
        }
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; rem.len() - dd + 1];
        let lead = divisor.leading();
        for k in (0..quot.len()).rev() {
            let f = rem[k + dd - 1] / lead;
            quot[k] = f;
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= f * d;
            }
            rem[k + dd - 1] = 0.0;
        }
        rem.truncate(dd - 1);
        (Self { coeffs: quot }, Self { coeffs: rem })
    }

    /// Strips coefficients below `rel` times `scale`, treating them as zero.
    fn cleaned(mut self, scale: f64, rel: f64) -> Self {
        while let Some(&last) = self.coeffs.last() {
            if last.abs() <= rel * scale {
                self.coeffs.pop();
            } else {
                break;
            }
        }
        self
    }

    /// Removes repeated factors by dividing out gcd(p, p').
    pub fn square_free(&self) -> Self {
        let d = self.derivative();
        if d.degree().unwrap_or(0) == 0 {
            return self.clone();
        }
        let mut a = self.clone().normalized();
        let mut b = d.normalized();
        loop {
            let (_, r) = a.div_rem(&b);
            let r = r.cleaned(1.0, REMAINDER_TOL);
            if r.coeffs.is_empty() {
                break;
            }
            a = b;
            b = r.normalized();
        }
        if b.degree().unwrap_or(0) == 0 {
            return self.clone();
        }
        let (q, _) = self.div_rem(&b);
        Self::new(q.coeffs)
    }
}

/// Sturm sequence p, p', -rem(p, p'), ... with per-step normalization.
#[derive(Debug, Clone)]
pub struct SturmChain {
    chain: Vec<UnivariatePoly>,
}

impl SturmChain {
    pub fn new(p: &UnivariatePoly) -> Self {
        let mut chain = vec![p.clone().normalized()];
        if p.degree().unwrap_or(0) == 0 {
            return Self { chain };
        }
        chain.push(p.derivative().normalized());
        loop {
            let n = chain.len();
            if chain[n - 1].degree().unwrap_or(0) == 0 {
                break;
            }
            let (_, r) = chain[n - 2].div_rem(&chain[n - 1]);
            let r = r.cleaned(1.0, REMAINDER_TOL);
            if r.coeffs.is_empty() {
                break;
            }
            let neg = UnivariatePoly {
                coeffs: r.coeffs.iter().map(|c| -c).collect(),
            };
            chain.push(neg.normalized());
        }
        Self { chain }
    }

    pub fn polys(&self) -> &[UnivariatePoly] {
        &self.chain
    }

    /// Number of sign changes along the chain at `x`, zeros skipped.
    pub fn sign_variations(&self, x: f64) -> usize {
        let mut count = 0;
        let mut last = 0.0f64;
        for p in &self.chain {
            let v = p.eval(x);
            if v == 0.0 {
                continue;
            }
            if last != 0.0 && (v < 0.0) != (last < 0.0) {
                count += 1;
            }
            last = v;
        }
        count
    }

    /// Number of distinct real roots in the half-open interval (a, b].
    pub fn count_roots(&self, a: f64, b: f64) -> usize {
        self.sign_variations(a).saturating_sub(self.sign_variations(b))
    }
}

/// Cauchy bound: every root satisfies |x| < 1 + max |c_i / c_n|.
pub fn cauchy_bound(p: &UnivariatePoly) -> f64 {
    let lead = p.leading().abs();
    let c = p.coeffs();
    1.0 + c[..c.len() - 1]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs() / lead))
}

/// All distinct real roots of `p`, ascending.
///
/// Roots are isolated with Sturm sign-variation counts inside the Cauchy
/// bound and refined by Newton steps safeguarded with bisection.
pub fn sturm_roots(p: &UnivariatePoly) -> Vec<f64> {
    match p.degree() {
        None | Some(0) => return vec![],
        Some(1) => {
            let c = p.coeffs();
            return vec![-c[0] / c[1]];
        }
        _ => {}
    }
    let sf = p.square_free();
    let chain = SturmChain::new(&sf);
    let bound = cauchy_bound(&sf);
    let mut roots = Vec::new();
    let mut stack = vec![(-bound, bound, chain.count_roots(-bound, bound), 0u32)];
    while let Some((a, b, n, depth)) = stack.pop() {
        if n == 0 {
            continue;
        }
        if n == 1 {
            roots.push(refine(&sf, &chain, a, b));
            continue;
        }
        if depth > 200 || b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            // Roots closer than the floating point resolution collapse.
            roots.push(0.5 * (a + b));
            continue;
        }
        let mid = 0.5 * (a + b);
        let left = chain.count_roots(a, mid);
        stack.push((a, mid, left, depth + 1));
        stack.push((mid, b, n.saturating_sub(left), depth + 1));
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Refines the single root of `p` inside (a, b].
fn refine(p: &UnivariatePoly, chain: &SturmChain, mut a: f64, mut b: f64) -> f64 {
    let fb = p.eval(b);
    if fb == 0.0 {
        return b;
    }
    let mut fa = p.eval(a);
    // A root sitting exactly on the open end belongs to a neighbouring
    // interval; step inside until the sign is defined.
    let mut nudge = (b - a) * 1e-9;
    while fa == 0.0 || (fa < 0.0) == (fb < 0.0) {
        let a2 = a + nudge;
        if a2 >= b || chain.count_roots(a2, b) != 1 {
            // Fall back to Sturm bisection when signs cannot bracket the root.
            return sturm_bisect(chain, a, b);
        }
        a = a2;
        fa = p.eval(a);
        nudge *= 2.0;
        if fa != 0.0 && (fa < 0.0) != (fb < 0.0) {
            break;
        }
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (fx, dfx) = p.eval_with_derivative(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        let tol = 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE);
        if (next - x).abs() <= tol || b - a <= tol {
            return next;
        }
        x = next;
    }
    x
}

fn sturm_bisect(chain: &SturmChain, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if chain.count_roots(a, mid) >= 1 {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}
