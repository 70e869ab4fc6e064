//! Arithmetic in GF(2^m) for m <= 8 via log/antilog tables.

#[derive(Debug, Clone)]
pub(crate) struct GaloisField {
    /// Multiplicative group order, `2^m - 1`.
    order: usize,
    exp: Vec<u8>,
    log: Vec<usize>,
}

impl GaloisField {
    /// `primitive_poly` includes the `x^m` term (e.g. `0x89` for x^7 + x^3 + 1).
    /// Returns `None` when the polynomial is not primitive of degree `m`.
    pub fn new(m: u32, primitive_poly: u32) -> Option<Self> {
        if !(2..=8).contains(&m) || primitive_poly >> m != 1 {
            return None;
        }
        let order = (1usize << m) - 1;
        let mut exp = vec![0u8; 2 * order];
        let mut log = vec![0usize; order + 1];
        let mut x: u32 = 1;
        for i in 0..order {
            if i > 0 && x == 1 {
                // Cycle shorter than 2^m - 1: not primitive.
                return None;
            }
            exp[i] = x as u8;
            log[x as usize] = i;
            x <<= 1;
            if x >> m != 0 {
                x ^= primitive_poly;
            }
        }
        if x != 1 {
            return None;
        }
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Some(Self { order, exp, log })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn alpha_pow(&self, power: usize) -> u8 {
        self.exp[power % self.order]
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] + self.log[b as usize]]
        }
    }

    #[inline]
    pub fn div(&self, a: u8, b: u8) -> u8 {
        assert!(b != 0, "division by zero in GF(2^m)");
        if a == 0 {
            0
        } else {
            self.exp[self.log[a as usize] + self.order - self.log[b as usize]]
        }
    }

    #[cfg(test)]
    pub fn inv(&self, a: u8) -> u8 {
        self.div(1, a)
    }

    /// Evaluate a polynomial with GF coefficients (`coeffs[i]` multiplies x^i).
    pub fn eval(&self, coeffs: &[u8], x: u8) -> u8 {
        coeffs
            .iter()
            .rev()
            .fold(0u8, |acc, &c| self.mul(acc, x) ^ c)
    }

    /// Minimal polynomial of `alpha^i` over GF(2), as a bitmask
    /// (bit j = coefficient of x^j), plus the cyclotomic coset it covers.
    pub fn minimal_polynomial(&self, i: usize) -> (u128, Vec<usize>) {
        let mut coset = vec![i % self.order];
        let mut next = (2 * i) % self.order;
        while next != coset[0] {
            coset.push(next);
            next = (2 * next) % self.order;
        }
        // Product of (x + alpha^c) with GF coefficients.
        let mut poly: Vec<u8> = vec![1];
        for &c in &coset {
            let root = self.alpha_pow(c);
            let mut out = vec![0u8; poly.len() + 1];
            for (j, &p) in poly.iter().enumerate() {
                out[j + 1] ^= p;
                out[j] ^= self.mul(p, root);
            }
            poly = out;
        }
        let mask = poly.iter().enumerate().fold(0u128, |acc, (j, &c)| {
            debug_assert!(c <= 1, "minimal polynomial must be binary");
            acc | (u128::from(c & 1) << j)
        });
        (mask, coset)
    }
}

/// Carry-less product of two GF(2) polynomials. Degrees must sum below 128.
pub(crate) fn clmul(a: u128, b: u128) -> u128 {
    let mut out = 0u128;
    let mut b = b;
    let mut shift = 0;
    while b != 0 {
        if b & 1 == 1 {
            out ^= a << shift;
        }
        b >>= 1;
        shift += 1;
    }
    out
}

pub(crate) fn degree(p: u128) -> Option<u32> {
    (p != 0).then(|| 127 - p.leading_zeros())
}

/// Remainder of `a` modulo `g` over GF(2).
pub(crate) fn poly_mod(mut a: u128, g: u128) -> u128 {
    let dg = degree(g).expect("modulus must be non-zero");
    while let Some(da) = degree(a) {
        if da < dg {
            break;
        }
        a ^= g << (da - dg);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_axioms_hold_exhaustively() {
        let gf = GaloisField::new(7, 0x89).unwrap();
        for a in 1..=127u8 {
            assert_eq!(gf.mul(a, gf.inv(a)), 1);
            for b in 1..=127u8 {
                assert_eq!(gf.div(gf.mul(a, b), b), a);
            }
        }
    }

    #[test]
    fn rejects_non_primitive() {
        // x^7 + 1 is reducible.
        assert!(GaloisField::new(7, 0x81).is_none());
    }

    #[test]
    fn minimal_polynomial_has_its_roots() {
        let gf = GaloisField::new(7, 0x89).unwrap();
        let (mask, coset) = gf.minimal_polynomial(3);
        assert_eq!(coset.len(), 7);
        let coeffs: Vec<u8> = (0..=7).map(|j| ((mask >> j) & 1) as u8).collect();
        for &c in &coset {
            assert_eq!(gf.eval(&coeffs, gf.alpha_pow(c)), 0);
        }
        // alpha is a root of the primitive polynomial itself.
        assert_eq!(gf.minimal_polynomial(1).0, 0x89);
    }
}
