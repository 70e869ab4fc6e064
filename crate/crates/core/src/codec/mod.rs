//! Payload codec: a 56-bit user payload is protected with a shortened binary
//! BCH code and laid out in the 100-bit message the networks carry.
//!
//! Default instantiation: BCH over GF(2^7) (primitive polynomial
//! x^7 + x^3 + 1), designed distance 11, so `t = 5`. The generator has degree
//! 35, giving a (127, 92) code shortened to (91, 56). Message layout:
//!
//! ```text
//! bits  0..56   payload (systematic, MSB of the first byte first)
//! bits 56..91   parity
//! bits 91..100  zero padding, ignored on decode
//! ```

mod bch;
mod gf;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bch::{ecc_decode, ecc_encode, BchCode};

pub const PAYLOAD_BITS: usize = 56;
pub const MESSAGE_BITS: usize = 100;

/// Parameters that embed/extract pairs must agree on. Stored in every model
/// bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecParams {
    /// Field degree: the code lives in GF(2^m), natural length 2^m - 1.
    pub m: u32,
    /// Correctable bit errors per codeword.
    pub t: u32,
    /// Primitive polynomial including the x^m term.
    pub primitive_poly: u32,
    pub payload_bits: usize,
    pub message_bits: usize,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            m: 7,
            t: 5,
            primitive_poly: 0x89,
            payload_bits: PAYLOAD_BITS,
            message_bits: MESSAGE_BITS,
        }
    }
}

/// 56 user bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Payload([u8; 7]);

impl Payload {
    pub fn from_bytes(bytes: [u8; 7]) -> Self {
        Self(bytes)
    }

    pub fn bytes(&self) -> [u8; 7] {
        self.0
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() != PAYLOAD_BITS {
            return Err(Error::PayloadLength {
                expected: PAYLOAD_BITS,
                actual: bits.len(),
            });
        }
        let mut bytes = [0u8; 7];
        for (i, &b) in bits.iter().enumerate() {
            if b > 1 {
                return Err(Error::NotABit { index: i, value: b });
            }
            bytes[i / 8] |= b << (7 - i % 8);
        }
        Ok(Self(bytes))
    }

    /// Big-endian bit order: bit 0 is the MSB of the first byte.
    pub fn bits(&self) -> [u8; PAYLOAD_BITS] {
        let mut out = [0u8; PAYLOAD_BITS];
        for (i, bit) in out.iter_mut().enumerate() {
            *bit = (self.0[i / 8] >> (7 - i % 8)) & 1;
        }
        out
    }

    /// 14 uppercase hex characters.
    pub fn to_hex(&self) -> String {
        hex::encode_upper(self.0)
    }

    /// Accepts exactly 14 hex characters, with an optional `0x` prefix.
    pub fn from_hex(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        let digits = trimmed
            .strip_prefix("0x")
            .or_else(|| trimmed.strip_prefix("0X"))
            .unwrap_or(trimmed);
        if digits.len() != 14 {
            return Err(Error::PayloadHex {
                input: s.to_owned(),
                reason: format!("expected 14 hex characters, got {}", digits.len()),
            });
        }
        let mut bytes = [0u8; 7];
        hex::decode_to_slice(digits, &mut bytes).map_err(|e| Error::PayloadHex {
            input: s.to_owned(),
            reason: e.to_string(),
        })?;
        Ok(Self(bytes))
    }

    /// UTF-8 text of at most 7 bytes, zero-padded on the right.
    pub fn from_text(s: &str) -> Result<Self> {
        let raw = s.as_bytes();
        if raw.len() > 7 {
            return Err(Error::PayloadTooLong(raw.len()));
        }
        let mut bytes = [0u8; 7];
        bytes[..raw.len()].copy_from_slice(raw);
        Ok(Self(bytes))
    }

    pub fn xor(&self, other: &Payload) -> Payload {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o ^= b;
        }
        Payload(out)
    }
}

pub fn payload_from_text(s: &str) -> Result<Payload> {
    Payload::from_text(s)
}

pub fn payload_to_hex(p: &Payload) -> String {
    p.to_hex()
}

/// The 100-bit channel word carried by the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Message([u8; MESSAGE_BITS]);

impl Default for Message {
    fn default() -> Self {
        Self([0; MESSAGE_BITS])
    }
}

impl Message {
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() != MESSAGE_BITS {
            return Err(Error::MessageLength {
                expected: MESSAGE_BITS,
                actual: bits.len(),
            });
        }
        let mut out = [0u8; MESSAGE_BITS];
        for (i, (&b, o)) in bits.iter().zip(out.iter_mut()).enumerate() {
            if b > 1 {
                return Err(Error::NotABit { index: i, value: b });
            }
            *o = b;
        }
        Ok(Self(out))
    }

    /// Hard decision at 0.5: bit is 1 exactly when `p > 0.5`.
    pub fn from_probabilities(probs: &[f32]) -> Result<Self> {
        if probs.len() != MESSAGE_BITS {
            return Err(Error::MessageLength {
                expected: MESSAGE_BITS,
                actual: probs.len(),
            });
        }
        let mut out = [0u8; MESSAGE_BITS];
        for (o, &p) in out.iter_mut().zip(probs) {
            *o = u8::from(p > 0.5);
        }
        Ok(Self(out))
    }

    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut out = [0u8; MESSAGE_BITS];
        for o in out.iter_mut() {
            *o = u8::from(rng.random::<bool>());
        }
        Self(out)
    }

    pub fn bits(&self) -> &[u8; MESSAGE_BITS] {
        &self.0
    }

    pub fn flip(&mut self, index: usize) {
        self.0[index] ^= 1;
    }

    pub fn xor(&self, other: &Message) -> Message {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o ^= b;
        }
        Message(out)
    }

    pub fn hamming_distance(&self, other: &Message) -> usize {
        self.0.iter().zip(other.0).filter(|(a, b)| **a != *b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    Ok,
    Uncorrectable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeResult {
    pub payload: Payload,
    pub corrected_bits: usize,
    pub status: DecodeStatus,
}

impl DecodeResult {
    pub fn is_ok(&self) -> bool {
        self.status == DecodeStatus::Ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_all_zero() {
        assert_eq!(payload_from_text("").unwrap().bits(), [0u8; 56]);
    }

    #[test]
    fn hex_sets_leading_bits() {
        let p = Payload::from_hex("FF000000000000").unwrap();
        let bits = p.bits();
        assert!(bits[..8].iter().all(|&b| b == 1));
        assert!(bits[8..].iter().all(|&b| b == 0));
        assert_eq!(payload_to_hex(&p), "FF000000000000");
        assert_eq!(Payload::from_hex("0xff000000000000").unwrap(), p);
    }

    #[test]
    fn text_round_trips_through_bits() {
        let p = payload_from_text("rawmark").unwrap();
        assert_eq!(Payload::from_bits(&p.bits()).unwrap(), p);
        assert_eq!(&p.bytes(), b"rawmark");
    }

    #[test]
    fn overlong_inputs_are_rejected() {
        assert!(matches!(
            payload_from_text("12345678"),
            Err(Error::PayloadTooLong(8))
        ));
        assert!(Payload::from_hex("FF").is_err());
        assert!(Payload::from_hex("GG000000000000").is_err());
    }

    #[test]
    fn probability_threshold_is_strict() {
        let mut probs = vec![0.5f32; MESSAGE_BITS];
        probs[3] = 0.500_001;
        let m = Message::from_probabilities(&probs).unwrap();
        assert_eq!(m.bits().iter().map(|&b| b as usize).sum::<usize>(), 1);
        assert_eq!(m.bits()[3], 1);
    }

    proptest::proptest! {
        #[test]
        fn random_seven_bytes_round_trip(bytes in proptest::array::uniform7(0u8..)) {
            let p = Payload::from_bytes(bytes);
            proptest::prop_assert_eq!(Payload::from_hex(&p.to_hex()).unwrap(), p);
            proptest::prop_assert_eq!(Payload::from_bits(&p.bits()).unwrap(), p);
        }
    }
}
