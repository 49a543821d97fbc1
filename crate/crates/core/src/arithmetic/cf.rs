use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::circle::{CirclePoint, FixedAlpha};
use crate::error::{Error, Result};

/// Where a rotation number comes from. Every source is turned into an exact
/// rational bracket `lo <= alpha <= hi`; partial quotients are accepted only
/// while both ends of the bracket agree on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// (sqrt 5 - 1) / 2
    Golden,
    /// sqrt 2 - 1
    Silver,
    /// Exact rational p/q; always rejected.
    Rational { p: u64, q: u64 },
    /// Decimal digits such as "0.6180339887", taken to be accurate to half a
    /// unit in the last place.
    Decimal(String),
    /// A double, accurate to half an ulp.
    Float(f64),
    /// Prescribed partial quotients a_1..a_m followed by an all-ones tail.
    Quotients(Vec<u64>),
}

impl AlphaSource {
    pub fn label(&self) -> String {
        match self {
            AlphaSource::Golden => "golden".into(),
            AlphaSource::Silver => "silver".into(),
            AlphaSource::Rational { p, q } => format!("{p}/{q}"),
            AlphaSource::Decimal(s) => s.clone(),
            AlphaSource::Float(x) => format!("{x:?}"),
            AlphaSource::Quotients(a) => format!("cf{a:?}+ones"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Ratio {
    num: BigUint,
    den: BigUint,
}

impl Ratio {
    fn new(num: BigUint, den: BigUint) -> Self {
        Ratio { num, den }
    }
}

const BRACKET_BITS: u32 = 320;

fn quadratic_bracket(radicand: u32, offset: u32, halve: bool) -> (Ratio, Ratio) {
    // (sqrt(r) - offset) / (1 or 2)
    let p = BigUint::one() << BRACKET_BITS;
    let s = (BigUint::from(radicand) * &p * &p).sqrt();
    let off = BigUint::from(offset) * &p;
    let den = if halve { &p * 2u32 } else { p.clone() };
    let lo = Ratio::new(&s - &off, den.clone());
    let hi = Ratio::new(&s + 1u32 - &off, den);
    (lo, hi)
}

fn quotients_bracket(prefix: &[u64]) -> (Ratio, Ratio) {
    // tail x = [1; 1, 1, ...] = (1 + sqrt 5) / 2
    let p = BigUint::one() << BRACKET_BITS;
    let s = (BigUint::from(5u32) * &p * &p).sqrt();
    let den = &p * 2u32;
    let tails = [Ratio::new(&s + &p, den.clone()), Ratio::new(&s + 1u32 + &p, den)];
    let mut ends: Vec<Ratio> = tails
        .iter()
        .map(|t| {
            // alpha = 1/(a1 + 1/(a2 + ... + 1/(am + 1/x)))
            let (mut n, mut d) = (t.num.clone(), t.den.clone());
            for &a in prefix.iter().rev() {
                // a + d/n  ->  (a n + d) / n
                let nn = BigUint::from(a) * &n + &d;
                d = n;
                n = nn;
            }
            // value so far is n/d (>1); alpha = d/n
            Ratio::new(d, n)
        })
        .collect();
    if &ends[0].num * &ends[1].den > &ends[1].num * &ends[0].den {
        ends.swap(0, 1);
    }
    let hi = ends.pop().unwrap();
    let lo = ends.pop().unwrap();
    (lo, hi)
}

fn decimal_bracket(s: &str) -> Result<(Ratio, Ratio)> {
    let t = s.trim();
    let frac = t
        .strip_prefix("0.")
        .or_else(|| t.strip_prefix('.'))
        .ok_or_else(|| Error::Invalid(format!("decimal rotation number must look like 0.ddd: {s}")))?;
    if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::Invalid(format!("bad decimal digits: {s}")));
    }
    let d = BigUint::parse_bytes(frac.as_bytes(), 10).unwrap();
    let den = BigUint::from(10u32).pow(frac.len() as u32) * 2u32;
    let c = d * 2u32;
    if c.is_zero() {
        return Err(Error::OutOfRange { what: "alpha must lie in (0,1)", value: 0.0 });
    }
    Ok((Ratio::new(&c - 1u32, den.clone()), Ratio::new(&c + 1u32, den)))
}

fn float_bracket(x: f64) -> Result<(Ratio, Ratio)> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::OutOfRange { what: "alpha must lie in (0,1)", value: x });
    }
    // x = m * 2^-k exactly; x (1 +- 2^-53) covers half an ulp on either side
    let mut m = x;
    let mut k = 0u32;
    while m.fract() != 0.0 {
        m *= 2.0;
        k += 1;
    }
    let m = BigUint::from(m as u64);
    let den = BigUint::one() << (k + 53);
    let unit = BigUint::one() << 53u32;
    Ok((Ratio::new(&m * (&unit - 1u32), den.clone()), Ratio::new(&m * (&unit + 1u32), den)))
}

fn center_of(lo: &Ratio, hi: &Ratio) -> Ratio {
    Ratio::new(&lo.num * &hi.den + &hi.num * &lo.den, &lo.den * &hi.den * 2u32)
}

/// Terminating continued fraction of a rational in (0,1), if it has at most
/// `depth` quotients.
fn short_expansion(r: &Ratio, depth: usize) -> Option<(u128, u128)> {
    let (mut n, mut d) = (r.num.clone(), r.den.clone());
    let (mut p0, mut p1) = (1u128, 0u128);
    let (mut q0, mut q1) = (0u128, 1u128);
    for _ in 0..depth {
        if n.is_zero() {
            return Some((p1, q1));
        }
        let (a, rem) = d.div_rem(&n);
        let a = a.to_u128()?;
        let p2 = a.checked_mul(p1)?.checked_add(p0)?;
        let q2 = a.checked_mul(q1)?.checked_add(q0)?;
        p0 = p1;
        p1 = p2;
        q0 = q1;
        q1 = q2;
        d = n;
        n = rem;
    }
    if n.is_zero() {
        Some((p1, q1))
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationNumber {
    pub source: AlphaSource,
    /// alpha at 192 bits
    pub alpha: FixedAlpha,
    /// cf[0] = 0, cf[n] = a_n
    pub cf: Vec<u64>,
    pub p: Vec<u128>,
    pub q: Vec<u128>,
}

impl RotationNumber {
    pub fn new(source: AlphaSource, depth: usize) -> Result<Self> {
        if depth < 1 {
            return Err(Error::Invalid("depth must be at least 1".into()));
        }
        let (lo, hi) = match &source {
            AlphaSource::Golden => quadratic_bracket(5, 1, true),
            AlphaSource::Silver => quadratic_bracket(2, 1, false),
            AlphaSource::Rational { p, q } => {
                if *q == 0 || p >= q || *p == 0 {
                    return Err(Error::OutOfRange { what: "alpha must lie in (0,1)", value: *p as f64 / *q as f64 });
                }
                let g = p.gcd(q);
                return Err(Error::RationalInput { p: (*p / g) as u128, q: (*q / g) as u128 });
            }
            AlphaSource::Decimal(s) => decimal_bracket(s)?,
            AlphaSource::Float(x) => float_bracket(*x)?,
            AlphaSource::Quotients(a) => {
                if a.iter().any(|&x| x == 0) {
                    return Err(Error::Invalid("partial quotients must be positive".into()));
                }
                quotients_bracket(a)
            }
        };
        let center = center_of(&lo, &hi);
        let (cf, p, q) = match lockstep(&lo, &hi, depth) {
            Ok(x) => x,
            Err(Error::PrecisionExhausted { depth: d0 }) => {
                // a rational whose expansion ends where certification stops
                // is what the input actually denotes
                if let Some((p, q)) = short_expansion(&center, d0 + 1) {
                    return Err(Error::RationalInput { p, q });
                }
                return Err(Error::PrecisionExhausted { depth: d0 });
            }
            Err(e) => return Err(e),
        };
        let alpha = fixed_from_ratio(&center);
        Ok(RotationNumber { source, alpha, cf, p, q })
    }

    pub fn golden(depth: usize) -> Self {
        Self::new(AlphaSource::Golden, depth).expect("golden mean certifies")
    }

    pub fn silver(depth: usize) -> Self {
        Self::new(AlphaSource::Silver, depth).expect("silver mean certifies")
    }

    pub fn depth(&self) -> usize {
        self.cf.len() - 1
    }

    pub fn alpha_f64(&self) -> f64 {
        self.alpha.to_f64()
    }

    /// `n * alpha mod 1`
    pub fn rot(&self, n: i64) -> CirclePoint {
        self.alpha.times(n)
    }

    /// `theta + n * alpha mod 1`
    pub fn orbit(&self, theta: CirclePoint, n: i64) -> CirclePoint {
        theta.add(self.alpha.times(n))
    }

    pub fn qn(&self, n: usize) -> Result<u128> {
        self.q.get(n).copied().ok_or(Error::DepthExceeded { requested: n, available: self.depth() })
    }

    /// Signed `q_n alpha - p_n`.
    pub fn delta(&self, n: usize) -> f64 {
        self.rot(self.q[n] as i64).signed()
    }

    /// Largest n with q_n <= x.
    pub fn index_below(&self, x: u128) -> usize {
        let mut k = 0;
        for (i, &qi) in self.q.iter().enumerate() {
            if qi <= x {
                k = i;
            } else {
                break;
            }
        }
        k
    }
}

pub fn continued_fraction(source: AlphaSource, depth: usize) -> Result<RotationNumber> {
    RotationNumber::new(source, depth)
}

type Expansion = (Vec<u64>, Vec<u128>, Vec<u128>);

fn lockstep(lo: &Ratio, hi: &Ratio, depth: usize) -> Result<Expansion> {
    let zero = BigUint::zero();
    if lo.num == zero || hi.num >= hi.den {
        return Err(Error::OutOfRange { what: "alpha must lie in (0,1)", value: f64::NAN });
    }
    let (mut n1, mut d1) = (lo.num.clone(), lo.den.clone());
    let (mut n2, mut d2) = (hi.num.clone(), hi.den.clone());
    let mut cf = vec![0u64];
    let mut p = vec![0u128];
    let mut q = vec![1u128];
    let (mut pm, mut qm) = (1u128, 0u128);
    for i in 1..=depth {
        if n1.is_zero() || n2.is_zero() {
            return Err(Error::PrecisionExhausted { depth: i - 1 });
        }
        let (a1, r1) = d1.div_rem(&n1);
        let (a2, r2) = d2.div_rem(&n2);
        if a1 != a2 {
            return Err(Error::PrecisionExhausted { depth: i - 1 });
        }
        let a = a1.to_u64().ok_or(Error::PrecisionExhausted { depth: i - 1 })?;
        let last_p = *p.last().unwrap();
        let last_q = *q.last().unwrap();
        let np = (a as u128)
            .checked_mul(last_p)
            .and_then(|x| x.checked_add(pm))
            .ok_or(Error::PrecisionExhausted { depth: i - 1 })?;
        let nq = (a as u128)
            .checked_mul(last_q)
            .and_then(|x| x.checked_add(qm))
            .ok_or(Error::PrecisionExhausted { depth: i - 1 })?;
        // q must stay well inside the i64 orbit range
        if nq >= 1u128 << 62 {
            return Err(Error::PrecisionExhausted { depth: i - 1 });
        }
        pm = last_p;
        qm = last_q;
        cf.push(a);
        p.push(np);
        q.push(nq);
        d1 = n1;
        n1 = r1;
        d2 = n2;
        n2 = r2;
    }
    Ok((cf, p, q))
}

fn fixed_from_ratio(r: &Ratio) -> FixedAlpha {
    let scaled = (&r.num << 193u32) / &r.den;
    let rounded: BigUint = (scaled + 1u32) >> 1u32;
    let mask64 = (BigUint::one() << 64u32) - 1u32;
    let lo = (&rounded & &mask64).to_u64().unwrap();
    let hi_big = &rounded >> 64u32;
    let mask128 = (BigUint::one() << 128u32) - 1u32;
    let hi = (&hi_big & &mask128).to_u128().unwrap();
    FixedAlpha { hi, lo }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_quotients_and_denominators() {
        let r = RotationNumber::new(AlphaSource::Golden, 8).unwrap();
        assert_eq!(&r.cf[1..], &[1, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(r.q, vec![1, 1, 2, 3, 5, 8, 13, 21, 34]);
        assert!((r.alpha_f64() - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-16);
    }

    #[test]
    fn silver_quotients_and_denominators() {
        let r = RotationNumber::new(AlphaSource::Silver, 5).unwrap();
        assert_eq!(&r.cf[1..], &[2, 2, 2, 2, 2]);
        assert_eq!(r.q, vec![1, 2, 5, 12, 29, 70]);
    }

    #[test]
    fn rational_inputs_are_rejected() {
        let e = RotationNumber::new(AlphaSource::Rational { p: 3, q: 7 }, 8).unwrap_err();
        assert_eq!(e, Error::RationalInput { p: 3, q: 7 });
        let e = RotationNumber::new(AlphaSource::Float(0.375), 8).unwrap_err();
        assert_eq!(e, Error::RationalInput { p: 3, q: 8 });
        let e = RotationNumber::new(AlphaSource::Decimal("0.25".into()), 8).unwrap_err();
        assert_eq!(e, Error::RationalInput { p: 1, q: 4 });
    }

    #[test]
    fn short_decimal_exhausts_precision() {
        let e = RotationNumber::new(AlphaSource::Decimal("0.6180339887".into()), 40).unwrap_err();
        assert!(matches!(e, Error::PrecisionExhausted { depth } if depth > 5 && depth < 40));
        let ok = RotationNumber::new(AlphaSource::Decimal("0.6180339887".into()), 5).unwrap();
        assert_eq!(&ok.cf[1..], &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn prescribed_quotients_then_ones() {
        let r = RotationNumber::new(AlphaSource::Quotients(vec![1, 2, 1_000_000]), 10).unwrap();
        assert_eq!(&r.cf[1..], &[1, 2, 1_000_000, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(r.q[3], 1_000_000 * 3 + 1);
    }

    #[test]
    fn golden_certifies_deep() {
        let r = RotationNumber::golden(80);
        assert_eq!(r.depth(), 80);
        assert!(r.q.windows(3).all(|w| w[2] == w[1] + w[0]));
    }

    #[test]
    fn float_source_matches_golden_shallowly() {
        let x = (5f64.sqrt() - 1.0) / 2.0;
        let r = RotationNumber::new(AlphaSource::Float(x), 30).unwrap();
        assert!(r.cf[1..].iter().all(|&a| a == 1));
        assert!(RotationNumber::new(AlphaSource::Float(x), 60).is_err());
    }
}
