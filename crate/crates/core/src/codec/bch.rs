use super::gf::{clmul, degree, poly_mod, GaloisField};
use super::{CodecParams, DecodeResult, DecodeStatus, Message, Payload};
use crate::{Error, Result};

/// Shortened, systematic binary BCH code.
///
/// Codeword bit `b` (0-based, payload first) is the coefficient of
/// `x^(len - 1 - b)`, where `len = payload_bits + parity_bits`.
#[derive(Debug, Clone)]
pub struct BchCode {
    params: CodecParams,
    gf: GaloisField,
    generator: u128,
    parity_bits: usize,
}

impl BchCode {
    pub fn new(params: CodecParams) -> Result<Self> {
        let gf = GaloisField::new(params.m, params.primitive_poly).ok_or_else(|| {
            Error::CodecParams(format!(
                "{:#x} is not a primitive polynomial of degree {}",
                params.primitive_poly, params.m
            ))
        })?;
        if params.t == 0 {
            return Err(Error::CodecParams("t must be at least 1".into()));
        }
        // g(x) = lcm of the minimal polynomials of alpha^1 .. alpha^(2t).
        let mut covered = vec![false; gf.order()];
        let mut generator: u128 = 1;
        for i in 1..=(2 * params.t as usize) {
            if covered[i % gf.order()] {
                continue;
            }
            let (mp, coset) = gf.minimal_polynomial(i);
            for c in coset {
                covered[c] = true;
            }
            let (dg, dm) = (degree(generator).unwrap(), degree(mp).unwrap());
            if dg + dm >= 128 {
                return Err(Error::CodecParams("generator degree exceeds 127".into()));
            }
            generator = clmul(generator, mp);
        }
        let parity_bits = degree(generator).unwrap() as usize;
        let len = params.payload_bits + parity_bits;
        if len > gf.order() {
            return Err(Error::CodecParams(format!(
                "{} payload + {} parity bits exceed the natural length {}",
                params.payload_bits,
                parity_bits,
                gf.order()
            )));
        }
        if len > params.message_bits {
            return Err(Error::CodecParams(format!(
                "codeword of {len} bits does not fit a {}-bit message",
                params.message_bits
            )));
        }
        Ok(Self {
            params,
            gf,
            generator,
            parity_bits,
        })
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn t(&self) -> usize {
        self.params.t as usize
    }

    pub fn parity_bits(&self) -> usize {
        self.parity_bits
    }

    /// Unshortened dimension `k = 2^m - 1 - deg g`.
    pub fn full_dimension(&self) -> usize {
        self.gf.order() - self.parity_bits
    }

    pub fn codeword_bits(&self) -> usize {
        self.params.payload_bits + self.parity_bits
    }

    /// Generator polynomial as a bitmask (bit j = coefficient of x^j).
    pub fn generator(&self) -> u128 {
        self.generator
    }

    fn bits_to_poly(&self, bits: &[u8]) -> u128 {
        let len = self.codeword_bits();
        bits[..len]
            .iter()
            .enumerate()
            .fold(0u128, |acc, (b, &v)| acc | (u128::from(v & 1) << (len - 1 - b)))
    }

    pub fn encode(&self, payload: &Payload) -> Message {
        let len = self.codeword_bits();
        let mut bits = [0u8; super::MESSAGE_BITS];
        bits[..self.params.payload_bits].copy_from_slice(&payload.bits());
        let info = self.bits_to_poly(&bits);
        let parity = poly_mod(info, self.generator);
        for j in 0..self.parity_bits {
            let deg = self.parity_bits - 1 - j;
            bits[self.params.payload_bits + j] = ((parity >> deg) & 1) as u8;
        }
        debug_assert_eq!(poly_mod(self.bits_to_poly(&bits), self.generator), 0);
        debug_assert!(bits[len..].iter().all(|&b| b == 0));
        Message::from_bits(&bits).expect("encoder emits valid bits")
    }

    fn syndromes(&self, word: u128) -> Vec<u8> {
        let len = self.codeword_bits();
        (1..=2 * self.t())
            .map(|i| {
                (0..len)
                    .filter(|&d| (word >> d) & 1 == 1)
                    .fold(0u8, |acc, d| acc ^ self.gf.alpha_pow(i * d))
            })
            .collect()
    }

    /// Berlekamp-Massey: error-locator polynomial `Lambda` (lowest degree
    /// first) and its linear complexity.
    fn error_locator(&self, s: &[u8]) -> (Vec<u8>, usize) {
        let gf = &self.gf;
        let mut c = vec![1u8];
        let mut b = vec![1u8];
        let mut l = 0usize;
        let mut shift = 1usize;
        let mut last = 1u8;
        for n in 0..s.len() {
            let mut d = s[n];
            for i in 1..=l.min(c.len() - 1) {
                d ^= gf.mul(c[i], s[n - i]);
            }
            if d == 0 {
                shift += 1;
                continue;
            }
            let coef = gf.div(d, last);
            let mut next = c.clone();
            if next.len() < b.len() + shift {
                next.resize(b.len() + shift, 0);
            }
            for (i, &bi) in b.iter().enumerate() {
                next[i + shift] ^= gf.mul(coef, bi);
            }
            if 2 * l <= n {
                l = n + 1 - l;
                b = c;
                last = d;
                shift = 1;
            } else {
                shift += 1;
            }
            c = next;
        }
        while c.len() > 1 && *c.last().unwrap() == 0 {
            c.pop();
        }
        (c, l)
    }

    pub fn decode(&self, message: &Message) -> DecodeResult {
        let bits = message.bits();
        let payload_of = |bits: &[u8]| {
            Payload::from_bits(&bits[..self.params.payload_bits]).expect("payload slice")
        };
        let word = self.bits_to_poly(bits);
        let s = self.syndromes(word);
        if s.iter().all(|&v| v == 0) {
            return DecodeResult {
                payload: payload_of(bits),
                corrected_bits: 0,
                status: DecodeStatus::Ok,
            };
        }
        let uncorrectable = DecodeResult {
            payload: payload_of(bits),
            corrected_bits: 0,
            status: DecodeStatus::Uncorrectable,
        };
        let (lambda, l) = self.error_locator(&s);
        if l > self.t() || lambda.len() - 1 != l {
            return uncorrectable;
        }
        // Chien search restricted to the shortened positions.
        let len = self.codeword_bits();
        let order = self.gf.order();
        let error_degrees: Vec<usize> = (0..len)
            .filter(|&d| {
                let x = self.gf.alpha_pow((order - d % order) % order);
                self.gf.eval(&lambda, x) == 0
            })
            .collect();
        if error_degrees.len() != l {
            return uncorrectable;
        }
        let mut fixed = *bits;
        for d in &error_degrees {
            fixed[len - 1 - d] ^= 1;
        }
        if self
            .syndromes(self.bits_to_poly(&fixed))
            .iter()
            .any(|&v| v != 0)
        {
            return uncorrectable;
        }
        DecodeResult {
            payload: payload_of(&fixed),
            corrected_bits: l,
            status: DecodeStatus::Ok,
        }
    }
}

impl Default for BchCode {
    fn default() -> Self {
        Self::new(CodecParams::default()).expect("default BCH parameters are valid")
    }
}

/// Encode with the default code.
pub fn ecc_encode(payload: &Payload) -> Message {
    BchCode::default().encode(payload)
}

/// Decode with the default code.
pub fn ecc_decode(message: &Message) -> DecodeResult {
    BchCode::default().decode(message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{MESSAGE_BITS, PAYLOAD_BITS};
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_payload(rng: &mut ChaCha8Rng) -> Payload {
        Payload::from_bytes(rng.random())
    }

    #[test]
    fn default_code_dimensions() {
        let code = BchCode::default();
        assert_eq!(code.parity_bits(), 35);
        assert_eq!(code.full_dimension(), 92);
        assert_eq!(code.codeword_bits(), 91);
        // g(x) divides x^127 + 1.
        let x127_plus_1 = (1u128 << 127) | 1;
        assert_eq!(poly_mod(x127_plus_1, code.generator()), 0);
    }

    #[test]
    fn zero_payload_encodes_to_zero() {
        let m = ecc_encode(&Payload::default());
        assert!(m.bits().iter().all(|&b| b == 0));
    }

    #[test]
    fn systematic_layout_and_zero_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_payload(&mut rng);
        let m = ecc_encode(&p);
        assert_eq!(&m.bits()[..PAYLOAD_BITS], &p.bits());
        assert!(m.bits()[91..].iter().all(|&b| b == 0));
    }

    #[test]
    fn clean_word_decodes_without_corrections() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_payload(&mut rng);
        let r = ecc_decode(&ecc_encode(&p));
        assert_eq!(r.payload, p);
        assert_eq!(r.corrected_bits, 0);
        assert!(r.is_ok());
    }

    #[test]
    fn every_single_bit_error_is_corrected() {
        let code = BchCode::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_payload(&mut rng);
        let clean = code.encode(&p);
        for i in 0..MESSAGE_BITS {
            let mut m = clean;
            m.flip(i);
            let r = code.decode(&m);
            assert_eq!(r.payload, p, "flip at {i}");
            assert!(r.is_ok());
            let expected = usize::from(i < code.codeword_bits());
            assert_eq!(r.corrected_bits, expected, "flip at {i}");
        }
    }

    #[test]
    fn exactly_t_flips_report_t_corrections() {
        let code = BchCode::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let p = random_payload(&mut rng);
            let mut m = code.encode(&p);
            for i in sample(&mut rng, code.codeword_bits(), code.t()) {
                m.flip(i);
            }
            let r = code.decode(&m);
            assert_eq!(r.payload, p);
            assert_eq!(r.corrected_bits, code.t());
        }
    }

    #[test]
    fn beyond_radius_never_panics() {
        let code = BchCode::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut uncorrectable = 0;
        for _ in 0..2000 {
            let p = random_payload(&mut rng);
            let mut m = code.encode(&p);
            let weight = rng.random_range(code.t() + 1..=20);
            for i in sample(&mut rng, MESSAGE_BITS, weight) {
                m.flip(i);
            }
            let r = code.decode(&m);
            if !r.is_ok() {
                uncorrectable += 1;
            } else {
                assert!(r.corrected_bits <= code.t());
            }
        }
        assert!(uncorrectable > 0);
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let (a, b) = (random_payload(&mut rng), random_payload(&mut rng));
            assert_eq!(ecc_encode(&a).xor(&ecc_encode(&b)), ecc_encode(&a.xor(&b)));
        }
    }

    #[test]
    fn minimum_distance_separates_codewords() {
        // Injectivity plus the designed distance on random pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let (a, b) = (random_payload(&mut rng), random_payload(&mut rng));
            if a != b {
                assert!(ecc_encode(&a).hamming_distance(&ecc_encode(&b)) >= 11);
            }
        }
    }

    #[test]
    fn other_field_sizes_are_supported() {
        let code = BchCode::new(CodecParams {
            m: 8,
            t: 5,
            primitive_poly: 0x11d,
            payload_bits: 56,
            message_bits: 100,
        })
        .unwrap();
        assert_eq!(code.parity_bits(), 40);
        let p = Payload::from_text("abc").unwrap();
        let mut m = code.encode(&p);
        m.flip(0);
        m.flip(60);
        assert_eq!(code.decode(&m).payload, p);
    }

    #[test]
    fn oversized_codes_are_rejected() {
        let err = BchCode::new(CodecParams {
            t: 7,
            ..CodecParams::default()
        });
        assert!(matches!(err, Err(Error::CodecParams(_))));
    }
}
