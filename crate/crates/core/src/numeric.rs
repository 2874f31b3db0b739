//! Exact numerics: integer polynomials, Sturm-chain root isolation, and
//! dyadic interval arithmetic.
//!
//! Growth rates are algebraic numbers; every comparison that a theorem's
//! hypothesis depends on (equality of component eigenvalues, q^m = λ^n,
//! threshold classification of balanced sequences) is decided here either
//! exactly or with certified enclosures that refuse to answer rather than
//! guess.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// integer polynomials, low-degree-first coefficient vectors

pub type Poly = Vec<BigInt>;

pub fn poly_trim(p: &mut Poly) {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
}

pub fn poly_degree(p: &Poly) -> Option<usize> {
    let mut d = p.len();
    while d > 0 && p[d - 1].is_zero() {
        d -= 1;
    }
    d.checked_sub(1)
}

pub fn poly_eval(p: &Poly, x: &BigRational) -> BigRational {
    let mut acc = BigRational::zero();
    for c in p.iter().rev() {
        acc = acc * x + BigRational::from_integer(c.clone());
    }
    acc
}

pub fn poly_derivative(p: &Poly) -> Poly {
    let mut out = Vec::with_capacity(p.len().saturating_sub(1));
    for (i, c) in p.iter().enumerate().skip(1) {
        out.push(c * BigInt::from(i));
    }
    out
}

/// Divide by the (positive) content, preserving signs.
pub fn poly_primitive(p: &Poly) -> Poly {
    let mut g = BigInt::zero();
    for c in p {
        g = g.gcd(c);
    }
    if g.is_zero() || g.is_one() {
        let mut q = p.clone();
        poly_trim(&mut q);
        return q;
    }
    let mut q: Poly = p.iter().map(|c| c / &g).collect();
    poly_trim(&mut q);
    q
}

fn to_rational_poly(p: &Poly) -> Vec<BigRational> {
    p.iter()
        .map(|c| BigRational::from_integer(c.clone()))
        .collect()
}

fn from_rational_poly(p: &[BigRational]) -> Poly {
    // clear denominators, then make primitive
    let mut lcm = BigInt::one();
    for c in p {
        if !c.is_zero() {
            lcm = lcm.lcm(c.denom());
        }
    }
    let ints: Poly = p
        .iter()
        .map(|c| c.numer() * (&lcm / c.denom()))
        .collect();
    poly_primitive(&ints)
}

fn rat_poly_trim(p: &mut Vec<BigRational>) {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
}

pub fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, ca) in a.iter().enumerate() {
        if ca.is_zero() {
            continue;
        }
        for (j, cb) in b.iter().enumerate() {
            if cb.is_zero() {
                continue;
            }
            out[i + j] += ca * cb;
        }
    }
    poly_trim(&mut out);
    out
}

/// Remainder of a ÷ b over ℚ (b nonzero).
fn rat_poly_rem(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let mut r: Vec<BigRational> = a.to_vec();
    rat_poly_trim(&mut r);
    let mut bb = b.to_vec();
    rat_poly_trim(&mut bb);
    let db = bb.len() - 1;
    let lead = bb[db].clone();
    while r.len() > db && !r.is_empty() {
        let dr = r.len() - 1;
        let coef = &r[dr] / &lead;
        for i in 0..=db {
            let t = &coef * &bb[i];
            r[dr - db + i] -= t;
        }
        rat_poly_trim(&mut r);
        if r.len() <= db {
            break;
        }
    }
    r
}

/// Primitive gcd over ℚ[x] (integer output, positive leading coefficient).
pub fn poly_gcd(a: &Poly, b: &Poly) -> Poly {
    let mut x = to_rational_poly(&poly_primitive(a));
    let mut y = to_rational_poly(&poly_primitive(b));
    rat_poly_trim(&mut x);
    rat_poly_trim(&mut y);
    while !y.is_empty() {
        let r = rat_poly_rem(&x, &y);
        x = y;
        y = r;
    }
    let mut g = from_rational_poly(&x);
    if g.last().is_some_and(Signed::is_negative) {
        for c in &mut g {
            *c = -(c.clone());
        }
    }
    g
}

/// Exact quotient a / b, panics on nonzero remainder (used only where
/// divisibility is guaranteed, e.g. squarefree part).
fn poly_div_exact(a: &Poly, b: &Poly) -> Poly {
    let mut r = to_rational_poly(a);
    let bb = to_rational_poly(b);
    let db = poly_degree(b).expect("division by zero polynomial");
    let lead = bb[db].clone();
    let mut q = vec![BigRational::zero(); r.len().saturating_sub(db)];
    rat_poly_trim(&mut r);
    while r.len() > db {
        let dr = r.len() - 1;
        let coef = &r[dr] / &lead;
        q[dr - db] = coef.clone();
        for i in 0..=db {
            let t = &coef * &bb[i];
            r[dr - db + i] -= t;
        }
        rat_poly_trim(&mut r);
    }
    assert!(r.is_empty(), "poly_div_exact: nonzero remainder");
    from_rational_poly(&q)
}

/// Squarefree part p / gcd(p, p′) — same real roots, all simple.
pub fn poly_squarefree(p: &Poly) -> Poly {
    let pp = poly_primitive(p);
    let d = poly_derivative(&pp);
    if poly_degree(&d).is_none() {
        return pp;
    }
    let g = poly_gcd(&pp, &d);
    if poly_degree(&g) == Some(0) {
        pp
    } else {
        poly_div_exact(&pp, &g)
    }
}

/// Characteristic polynomial det(xI − M) of an integer matrix, monic, by the
/// Faddeev–LeVerrier recurrence (exact integer divisions).
pub fn char_poly(m: &[Vec<BigInt>]) -> Poly {
    let n = m.len();
    if n == 0 {
        return vec![BigInt::one()];
    }
    let mut coeffs = vec![BigInt::zero(); n + 1];
    coeffs[n] = BigInt::one();
    // Mk starts as the identity; ck accumulates
    let mut mk: Vec<Vec<BigInt>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigInt::one() } else { BigInt::zero() })
                .collect()
        })
        .collect();
    for k in 1..=n {
        // mk := M * mk
        let mut prod = vec![vec![BigInt::zero(); n]; n];
        for i in 0..n {
            for l in 0..n {
                if m[i][l].is_zero() {
                    continue;
                }
                for j in 0..n {
                    if mk[l][j].is_zero() {
                        continue;
                    }
                    let t = &m[i][l] * &mk[l][j];
                    prod[i][j] += t;
                }
            }
        }
        mk = prod;
        let tr: BigInt = (0..n).map(|i| mk[i][i].clone()).sum();
        let (ck, rem) = (-tr).div_rem(&BigInt::from(k));
        debug_assert!(rem.is_zero());
        coeffs[n - k] = ck.clone();
        for (i, row) in mk.iter_mut().enumerate().take(n) {
            row[i] += &ck;
        }
    }
    coeffs
}

// ---------------------------------------------------------------------------
// Sturm chains and certified root isolation

/// Sturm chain of a squarefree integer polynomial.
#[derive(Clone)]
pub struct SturmChain {
    chain: Vec<Poly>,
}

impl SturmChain {
    pub fn new(squarefree: &Poly) -> SturmChain {
        let p0 = poly_primitive(squarefree);
        let p1 = poly_primitive(&poly_derivative(&p0));
        let mut chain = vec![p0, p1];
        loop {
            let last = &chain[chain.len() - 1];
            if poly_degree(last).is_none() {
                chain.pop();
                break;
            }
            if poly_degree(last) == Some(0) {
                break;
            }
            let prev = &chain[chain.len() - 2];
            let r = rat_poly_rem(&to_rational_poly(prev), &to_rational_poly(last));
            if r.is_empty() {
                break;
            }
            let mut neg: Vec<BigRational> = r.into_iter().map(|c| -c).collect();
            rat_poly_trim(&mut neg);
            chain.push(from_rational_poly(&neg));
        }
        SturmChain { chain }
    }

    fn variations(&self, x: &BigRational) -> usize {
        let mut count = 0;
        let mut last_sign = 0i8;
        for p in &self.chain {
            let v = poly_eval(p, x);
            let s = if v.is_zero() {
                0
            } else if v.is_positive() {
                1
            } else {
                -1
            };
            if s != 0 {
                if last_sign != 0 && s != last_sign {
                    count += 1;
                }
                last_sign = s;
            }
        }
        count
    }

    /// Number of real roots in (lo, hi]; requires p(lo) ≠ 0.
    pub fn count_roots(&self, lo: &BigRational, hi: &BigRational) -> usize {
        self.variations(lo) - self.variations(hi)
    }
}

/// A real algebraic number: a squarefree defining polynomial together with an
/// isolating interval (or an exact rational value when bisection lands on the
/// root).
#[derive(Clone)]
pub struct RealRoot {
    poly: Poly,
    chain: SturmChain,
    lo: BigRational,
    hi: BigRational,
    exact: Option<BigRational>,
}

impl RealRoot {
    /// Isolate the largest real root of `p` (error if none exist).
    pub fn largest_root(p: &Poly) -> Result<RealRoot> {
        let sf = poly_squarefree(p);
        let deg = poly_degree(&sf)
            .ok_or_else(|| Error::Degenerate("zero polynomial has no roots".into()))?;
        if deg == 0 {
            return Err(Error::Degenerate("constant polynomial has no roots".into()));
        }
        let chain = SturmChain::new(&sf);
        // Cauchy bound: all roots within 1 + max |a_i / a_n|
        let lead = BigRational::from_integer(sf[deg].clone());
        let mut maxq = BigRational::zero();
        for c in sf.iter().take(deg) {
            let q = (BigRational::from_integer(c.clone()) / &lead).abs();
            if q > maxq {
                maxq = q;
            }
        }
        let bound = maxq + BigRational::one();
        let lo = -bound.clone();
        let hi = bound;
        // ensure endpoints are not roots (Cauchy bound is strict)
        let total = chain.count_roots(&lo, &hi);
        if total == 0 {
            return Err(Error::Degenerate("polynomial has no real roots".into()));
        }
        // shrink to an interval whose root count is exactly 1 and whose
        // single root is the largest
        let mut root = RealRoot {
            poly: sf,
            chain,
            lo,
            hi,
            exact: None,
        };
        loop {
            if root.exact.is_some() {
                return Ok(root);
            }
            if root.chain.count_roots(&root.lo, &root.hi) == 1 {
                break;
            }
            root.bisect_keep_largest();
        }
        // Detect integer roots exactly: bisection midpoints are dyadic and
        // rarely hit them, yet integers are the only rational roots a monic
        // integer polynomial can have.
        root.refine_to(&BigRational::new(BigInt::one(), BigInt::from(4)));
        if root.exact.is_none() {
            let mut k = root.lo.ceil();
            if k == root.lo {
                k += BigRational::one();
            }
            if k <= root.hi && poly_eval(&root.poly, &k).is_zero() {
                root.exact = Some(k.clone());
                root.lo = k.clone();
                root.hi = k;
            }
        }
        Ok(root)
    }

    /// One bisection step, keeping the upper part whenever it still holds a
    /// root. Establishes `exact` if the midpoint hits a root that turns out
    /// to be the largest.
    fn bisect_keep_largest(&mut self) {
        let mid = (&self.lo + &self.hi) / BigRational::from_integer(BigInt::from(2));
        if poly_eval(&self.poly, &mid).is_zero() {
            // roots strictly above mid?
            if self.chain.count_roots(&mid, &self.hi) > 0 {
                self.lo = mid; // mid excluded from (lo, hi]
            } else {
                self.exact = Some(mid.clone());
                self.lo = mid.clone();
                self.hi = mid;
            }
        } else if self.chain.count_roots(&mid, &self.hi) > 0 {
            self.lo = mid;
        } else {
            self.hi = mid;
        }
    }

    /// Narrow the isolating interval until its width is ≤ `eps`.
    pub fn refine_to(&mut self, eps: &BigRational) {
        while self.exact.is_none() && (&self.hi - &self.lo) > *eps {
            self.bisect_keep_largest();
        }
    }

    pub fn lo(&self) -> &BigRational {
        &self.lo
    }

    pub fn hi(&self) -> &BigRational {
        &self.hi
    }

    pub fn exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    /// Defining squarefree polynomial.
    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn to_f64(&self) -> f64 {
        if let Some(x) = &self.exact {
            return x.to_f64().unwrap_or(f64::NAN);
        }
        let mid = (&self.lo + &self.hi) / BigRational::from_integer(BigInt::from(2));
        mid.to_f64().unwrap_or(f64::NAN)
    }

    /// Does this algebraic number satisfy `other` (an integer polynomial)?
    /// Decided exactly via the gcd of defining polynomials.
    pub fn is_root_of(&self, other: &Poly) -> bool {
        if let Some(x) = &self.exact {
            return poly_eval(other, x).is_zero();
        }
        let g = poly_gcd(&self.poly, other);
        match poly_degree(&g) {
            None | Some(0) => false,
            _ => {
                // any root of g inside the isolating interval must be this
                // root, since g divides the defining polynomial
                let gchain = SturmChain::new(&poly_squarefree(&g));
                gchain.count_roots(&self.lo, &self.hi) > 0
            }
        }
    }

    /// Exact equality with another algebraic number.
    pub fn equals(&mut self, other: &mut RealRoot) -> bool {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => return a == b,
            (Some(a), None) => {
                let a = a.clone();
                return poly_eval(&other.poly, &a).is_zero()
                    && other.lo < a
                    && a <= other.hi;
            }
            (None, Some(b)) => {
                let b = b.clone();
                return poly_eval(&self.poly, &b).is_zero() && self.lo < b && b <= self.hi;
            }
            _ => {}
        }
        let g = poly_gcd(&self.poly, &other.poly);
        if matches!(poly_degree(&g), None | Some(0)) {
            return false;
        }
        let gchain = SturmChain::new(&poly_squarefree(&g));
        loop {
            if self.hi < other.lo || other.hi < self.lo {
                return false;
            }
            // overlapping interval
            let lo = if self.lo > other.lo { &self.lo } else { &other.lo }.clone();
            let hi = if self.hi < other.hi { &self.hi } else { &other.hi }.clone();
            if lo < hi && gchain.count_roots(&lo, &hi) > 0 {
                // a common algebraic value lies in both isolating intervals;
                // each interval holds exactly one root of its own polynomial,
                // and roots of g are roots of both
                return true;
            }
            // shrink both and retry; distinct roots eventually separate
            let w_self = self.width();
            self.refine_to(&(w_self / BigRational::from_integer(BigInt::from(4))));
            let w_other = other.width();
            other.refine_to(&(w_other / BigRational::from_integer(BigInt::from(4))));
            if self.exact.is_some() || other.exact.is_some() {
                return self.equals(other);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// dyadic interval arithmetic

/// m · 2^e with arbitrary-precision mantissa.
#[derive(Clone, Debug)]
pub struct Dyadic {
    pub m: BigInt,
    pub e: i64,
}

impl Dyadic {
    pub fn zero() -> Dyadic {
        Dyadic {
            m: BigInt::zero(),
            e: 0,
        }
    }

    pub fn from_int(k: i64) -> Dyadic {
        Dyadic {
            m: BigInt::from(k),
            e: 0,
        }
    }

    /// Round to at most `prec` mantissa bits; `up` selects the direction
    /// (toward +∞, else toward −∞).
    pub fn round(&self, prec: u32, up: bool) -> Dyadic {
        let bits = self.m.bits();
        if bits <= prec as u64 {
            return self.clone();
        }
        let shift = bits - prec as u64;
        let two = BigInt::one() << shift;
        let q = if up {
            self.m.div_ceil(&two)
        } else {
            self.m.div_floor(&two)
        };
        Dyadic {
            m: q,
            e: self.e + shift as i64,
        }
    }

    pub fn mul_int(&self, k: &BigInt) -> Dyadic {
        Dyadic {
            m: &self.m * k,
            e: self.e,
        }
    }

    pub fn to_rational(&self) -> BigRational {
        let num = BigRational::from_integer(self.m.clone());
        if self.e >= 0 {
            num * BigRational::from_integer(BigInt::one() << self.e as u64)
        } else {
            num / BigRational::from_integer(BigInt::one() << (-self.e) as u64)
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.to_rational().to_f64().unwrap_or(f64::NAN)
    }

    pub fn cmp_val(&self, other: &Dyadic) -> std::cmp::Ordering {
        let e = self.e.min(other.e);
        let a = &self.m << (self.e - e) as u64;
        let b = &other.m << (other.e - e) as u64;
        a.cmp(&b)
    }
}

/// Dyadic approximation of (num/den)·2^e with `prec` significant bits,
/// rounded toward −∞ (`up = false`) or +∞ (`up = true`). `den` > 0.
pub fn dyadic_of_ratio(num: &BigInt, den: &BigInt, e: i64, prec: u32, up: bool) -> Dyadic {
    assert!(den.is_positive());
    if num.is_zero() {
        return Dyadic::zero();
    }
    let shift = (prec as i64 + den.bits() as i64).saturating_sub(num.bits() as i64).max(0) as u64;
    let scaled = num << shift;
    let q = if up {
        scaled.div_ceil(den)
    } else {
        scaled.div_floor(den)
    };
    Dyadic {
        m: q,
        e: e - shift as i64,
    }
}

/// Closed interval with dyadic endpoints and outward rounding.
#[derive(Clone, Debug)]
pub struct DyInterval {
    pub lo: Dyadic,
    pub hi: Dyadic,
}

impl DyInterval {
    pub fn from_rational(r: &BigRational, prec: u32) -> DyInterval {
        DyInterval {
            lo: dyadic_of_ratio(r.numer(), r.denom(), 0, prec, false),
            hi: dyadic_of_ratio(r.numer(), r.denom(), 0, prec, true),
        }
    }

    pub fn from_rationals(lo: &BigRational, hi: &BigRational, prec: u32) -> DyInterval {
        debug_assert!(lo <= hi);
        DyInterval {
            lo: dyadic_of_ratio(lo.numer(), lo.denom(), 0, prec, false),
            hi: dyadic_of_ratio(hi.numer(), hi.denom(), 0, prec, true),
        }
    }

    /// Multiply by a nonnegative integer, keeping `prec` bits outward.
    pub fn mul_uint(&self, k: &BigInt, prec: u32) -> DyInterval {
        debug_assert!(!k.is_negative());
        DyInterval {
            lo: self.lo.mul_int(k).round(prec, false),
            hi: self.hi.mul_int(k).round(prec, true),
        }
    }

    /// Multiply two nonnegative intervals, keeping `prec` bits outward.
    pub fn mul(&self, other: &DyInterval, prec: u32) -> DyInterval {
        debug_assert!(!self.lo.m.is_negative() && !other.lo.m.is_negative());
        let lo = Dyadic {
            m: &self.lo.m * &other.lo.m,
            e: self.lo.e + other.lo.e,
        }
        .round(prec, false);
        let hi = Dyadic {
            m: &self.hi.m * &other.hi.m,
            e: self.hi.e + other.hi.e,
        }
        .round(prec, true);
        DyInterval { lo, hi }
    }

    /// Exact rational midpoint of the enclosure.
    pub fn mid_rational(&self) -> BigRational {
        (self.lo.to_rational() + self.hi.to_rational())
            / BigRational::from_integer(BigInt::from(2))
    }

    /// Divide by a positive interval, outward.
    pub fn div(&self, den: &DyInterval, prec: u32) -> DyInterval {
        debug_assert!(den.lo.m.is_positive());
        // lo/den.hi and hi/den.lo (operands nonnegative in all our uses)
        let lo = {
            let num = &self.lo.m * (BigInt::one() << 0u32); // self.lo.m · 2^self.lo.e / (den.hi.m · 2^den.hi.e)
            dyadic_of_ratio(&num, &den.hi.m, self.lo.e - den.hi.e, prec, false)
        };
        let hi = dyadic_of_ratio(&self.hi.m, &den.lo.m, self.hi.e - den.lo.e, prec, true);
        DyInterval { lo, hi }
    }

    /// Some(true) if certainly < other, Some(false) if certainly ≥, None if
    /// the enclosures overlap.
    pub fn certainly_lt(&self, other: &DyInterval) -> Option<bool> {
        if self.hi.cmp_val(&other.lo) == std::cmp::Ordering::Less {
            Some(true)
        } else if self.lo.cmp_val(&other.hi) != std::cmp::Ordering::Less {
            Some(false)
        } else {
            None
        }
    }

    pub fn width(&self) -> BigRational {
        self.hi.to_rational() - self.lo.to_rational()
    }

    pub fn mid_f64(&self) -> f64 {
        (self.lo.to_f64() + self.hi.to_f64()) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(coeffs: &[i64]) -> Poly {
        coeffs.iter().map(|&c| BigInt::from(c)).collect()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn charpoly_small_matrices() {
        // [[2]] → x − 2
        let m = vec![vec![BigInt::from(2)]];
        assert_eq!(char_poly(&m), p(&[-2, 1]));
        // Fibonacci companion [[0,1],[1,1]] → x² − x − 1
        let m = vec![
            vec![BigInt::from(0), BigInt::from(1)],
            vec![BigInt::from(1), BigInt::from(1)],
        ];
        assert_eq!(char_poly(&m), p(&[-1, -1, 1]));
    }

    #[test]
    fn golden_ratio_isolated_to_high_precision() {
        let mut r = RealRoot::largest_root(&p(&[-1, -1, 1])).unwrap();
        r.refine_to(&rat(1, 1_000_000_000_000));
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert!((r.to_f64() - phi).abs() < 1e-11);
        assert!(r.width() <= rat(1, 1_000_000_000_000));
    }

    #[test]
    fn largest_root_skips_smaller_ones() {
        // (x² − 2)(x − 3) = x³ − 3x² − 2x + 6, largest root 3 (hit exactly)
        let mut r = RealRoot::largest_root(&p(&[6, -2, -3, 1])).unwrap();
        r.refine_to(&rat(1, 1_000_000));
        assert!((r.to_f64() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn multiple_roots_handled_via_squarefree() {
        // (x − 1)² has largest root 1
        let mut r = RealRoot::largest_root(&p(&[1, -2, 1])).unwrap();
        r.refine_to(&rat(1, 1024));
        assert!((r.to_f64() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn integer_root_becomes_exact() {
        let mut r = RealRoot::largest_root(&p(&[-3, 1])).unwrap();
        r.refine_to(&rat(1, 2));
        assert_eq!(r.exact(), Some(&rat(3, 1)));
    }

    #[test]
    fn gcd_and_squarefree() {
        // gcd(x² − 1, x − 1) = x − 1
        assert_eq!(poly_gcd(&p(&[-1, 0, 1]), &p(&[-1, 1])), p(&[-1, 1]));
        // squarefree((x − 1)²(x + 2)) = (x − 1)(x + 2)
        let sq = poly_squarefree(&p(&[2, -3, 0, 1]));
        assert_eq!(sq, p(&[-2, 1, 1]));
    }

    #[test]
    fn algebraic_equality() {
        // √2 from x² − 2 and from x⁴ − 4 = (x² − 2)(x² + 2)
        let mut a = RealRoot::largest_root(&p(&[-2, 0, 1])).unwrap();
        let mut b = RealRoot::largest_root(&p(&[-4, 0, 0, 0, 1])).unwrap();
        assert!(a.equals(&mut b));
        let mut c = RealRoot::largest_root(&p(&[-3, 0, 1])).unwrap();
        assert!(!a.equals(&mut c));
    }

    #[test]
    fn is_root_of_decides_power_relations() {
        // λ = 2: root of x³ − 8? yes (2³ = 8). Root of x² − 2? no.
        let two = RealRoot::largest_root(&p(&[-2, 1])).unwrap();
        assert!(two.is_root_of(&p(&[-8, 0, 0, 1])));
        assert!(!two.is_root_of(&p(&[-2, 0, 1])));
        // λ = √2: root of x⁴ − 4
        let r = RealRoot::largest_root(&p(&[-2, 0, 1])).unwrap();
        assert!(r.is_root_of(&p(&[-4, 0, 0, 0, 1])));
        assert!(!r.is_root_of(&p(&[-8, 0, 0, 1])));
    }

    #[test]
    fn sturm_counts_roots() {
        // x² − 2 has one root in (1, 2] and one in (−2, 0]
        let chain = SturmChain::new(&p(&[-2, 0, 1]));
        assert_eq!(chain.count_roots(&rat(1, 1), &rat(2, 1)), 1);
        assert_eq!(chain.count_roots(&rat(-2, 1), &rat(0, 1)), 1);
        assert_eq!(chain.count_roots(&rat(-2, 1), &rat(2, 1)), 2);
    }

    #[test]
    fn dyadic_ratio_brackets_value() {
        let third = dyadic_of_ratio(&BigInt::from(1), &BigInt::from(3), 0, 64, false);
        let third_up = dyadic_of_ratio(&BigInt::from(1), &BigInt::from(3), 0, 64, true);
        assert!(third.to_rational() <= rat(1, 3));
        assert!(third_up.to_rational() >= rat(1, 3));
        let gap = third_up.to_rational() - third.to_rational();
        assert!(gap < rat(1, 1_000_000_000_000));
    }

    #[test]
    fn interval_arithmetic_outward() {
        let x = DyInterval::from_rational(&rat(10, 1), 96);
        let y = x.mul_uint(&BigInt::from(4), 96);
        let lam = DyInterval::from_rationals(&rat(2999, 1000), &rat(3001, 1000), 96);
        let z = y.div(&lam, 96); // 40/3 ≈ 13.333
        assert!(z.lo.to_rational() <= rat(40_000, 3_001));
        assert!(z.hi.to_rational() >= rat(40_000, 2_999));
        assert!(z.lo.to_f64() < 13.34 && z.hi.to_f64() > 13.32);
        // certain comparisons
        let t = DyInterval::from_rational(&rat(14, 1), 96);
        assert_eq!(z.certainly_lt(&t), Some(true));
        let t2 = DyInterval::from_rational(&rat(13, 1), 96);
        assert_eq!(z.certainly_lt(&t2), Some(false));
    }
}
