//! Arithmetic in GF(2^255 - 19).
//!
//! Elements are stored as five 51-bit limbs. Limbs may exceed 51 bits
//! between operations (weak reduction); [`FieldElement::to_bytes`] always
//! produces the canonical encoding of the value in `[0, p)`.

use core::ops::{Add, Mul, Neg, Sub};

use crate::curve::CurveError;

const LOW_51: u64 = (1u64 << 51) - 1;

/// An element of the prime field with p = 2^255 - 19.
#[derive(Clone, Copy)]
pub struct FieldElement([u64; 5]);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement([0, 0, 0, 0, 0]);
    pub const ONE: FieldElement = FieldElement([1, 0, 0, 0, 0]);

    pub fn from_u64(v: u64) -> FieldElement {
        FieldElement([v & LOW_51, v >> 51, 0, 0, 0])
    }

    /// Decodes 32 little-endian bytes. Bit 255 is ignored and values in
    /// `[p, 2^255)` are accepted and reduced, following the X25519 convention.
    pub fn from_bytes(bytes: &[u8; 32]) -> FieldElement {
        let load8 = |i: usize| -> u64 {
            let mut w = [0u8; 8];
            w.copy_from_slice(&bytes[i..i + 8]);
            u64::from_le_bytes(w)
        };
        FieldElement([
            load8(0) & LOW_51,
            (load8(6) >> 3) & LOW_51,
            (load8(12) >> 6) & LOW_51,
            (load8(19) >> 1) & LOW_51,
            (load8(24) >> 12) & LOW_51,
        ])
    }

    /// Canonical little-endian encoding (value fully reduced below p).
    pub fn to_bytes(&self) -> [u8; 32] {
        let mut l = FieldElement::weak_reduce(self.0);

        // q = 1 iff the value is >= p, found by propagating a +19 carry.
        let mut q = (l[0] + 19) >> 51;
        q = (l[1] + q) >> 51;
        q = (l[2] + q) >> 51;
        q = (l[3] + q) >> 51;
        q = (l[4] + q) >> 51;

        l[0] += 19 * q;
        l[1] += l[0] >> 51;
        l[0] &= LOW_51;
        l[2] += l[1] >> 51;
        l[1] &= LOW_51;
        l[3] += l[2] >> 51;
        l[2] &= LOW_51;
        l[4] += l[3] >> 51;
        l[3] &= LOW_51;
        l[4] &= LOW_51;

        let mut out = [0u8; 32];
        let words = [
            l[0] | (l[1] << 51),
            (l[1] >> 13) | (l[2] << 38),
            (l[2] >> 26) | (l[3] << 25),
            (l[3] >> 39) | (l[4] << 12),
        ];
        for (chunk, w) in out.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.to_bytes() == [0u8; 32]
    }

    pub fn square(&self) -> FieldElement {
        self * self
    }

    fn pow2k(&self, k: u32) -> FieldElement {
        let mut r = *self;
        for _ in 0..k {
            r = r.square();
        }
        r
    }

    /// Multiplicative inverse as `self^(p-2)`, computed with a fixed
    /// addition chain so the operation sequence is independent of the value.
    pub fn invert(&self) -> Result<FieldElement, CurveError> {
        if self.is_zero() {
            return Err(CurveError::ZeroInverse);
        }
        let z = self;
        let z2 = z.square();
        let z9 = z * &z2.pow2k(2);
        let z11 = z2 * z9;
        let z_5_0 = z9 * z11.square(); // 2^5 - 1
        let z_10_0 = z_5_0.pow2k(5) * z_5_0;
        let z_20_0 = z_10_0.pow2k(10) * z_10_0;
        let z_40_0 = z_20_0.pow2k(20) * z_20_0;
        let z_50_0 = z_40_0.pow2k(10) * z_10_0;
        let z_100_0 = z_50_0.pow2k(50) * z_50_0;
        let z_200_0 = z_100_0.pow2k(100) * z_100_0;
        let z_250_0 = z_200_0.pow2k(50) * z_50_0;
        // 2^255 - 32 + 11 = p - 2
        Ok(z_250_0.pow2k(5) * z11)
    }

    fn weak_reduce(mut l: [u64; 5]) -> [u64; 5] {
        let c0 = l[0] >> 51;
        let c1 = l[1] >> 51;
        let c2 = l[2] >> 51;
        let c3 = l[3] >> 51;
        let c4 = l[4] >> 51;
        l[0] &= LOW_51;
        l[1] &= LOW_51;
        l[2] &= LOW_51;
        l[3] &= LOW_51;
        l[4] &= LOW_51;
        l[0] += c4 * 19;
        l[1] += c0;
        l[2] += c1;
        l[3] += c2;
        l[4] += c3;
        l
    }
}

impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

impl Eq for FieldElement {}

impl core::fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let mut be = self.to_bytes();
        be.reverse();
        write!(f, "FieldElement(0x{})", hex::encode(be))
    }
}

impl<'a> Add<&'a FieldElement> for &FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: &'a FieldElement) -> FieldElement {
        let mut l = self.0;
        for (a, b) in l.iter_mut().zip(rhs.0) {
            *a += b;
        }
        FieldElement(FieldElement::weak_reduce(l))
    }
}

impl<'a> Sub<&'a FieldElement> for &FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: &'a FieldElement) -> FieldElement {
        // Add 16p first so no limb underflows.
        let a = FieldElement::weak_reduce(self.0);
        let b = FieldElement::weak_reduce(rhs.0);
        FieldElement(FieldElement::weak_reduce([
            (a[0] + 36028797018963664) - b[0],
            (a[1] + 36028797018963952) - b[1],
            (a[2] + 36028797018963952) - b[2],
            (a[3] + 36028797018963952) - b[3],
            (a[4] + 36028797018963952) - b[4],
        ]))
    }
}

impl<'a> Mul<&'a FieldElement> for &FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: &'a FieldElement) -> FieldElement {
        #[inline(always)]
        fn m(x: u64, y: u64) -> u128 {
            (x as u128) * (y as u128)
        }
        let a = FieldElement::weak_reduce(self.0);
        let b = FieldElement::weak_reduce(rhs.0);

        let b1_19 = b[1] * 19;
        let b2_19 = b[2] * 19;
        let b3_19 = b[3] * 19;
        let b4_19 = b[4] * 19;

        let c0 = m(a[0], b[0]) + m(a[4], b1_19) + m(a[3], b2_19) + m(a[2], b3_19) + m(a[1], b4_19);
        let mut c1 = m(a[1], b[0]) + m(a[0], b[1]) + m(a[4], b2_19) + m(a[3], b3_19) + m(a[2], b4_19);
        let mut c2 = m(a[2], b[0]) + m(a[1], b[1]) + m(a[0], b[2]) + m(a[4], b3_19) + m(a[3], b4_19);
        let mut c3 = m(a[3], b[0]) + m(a[2], b[1]) + m(a[1], b[2]) + m(a[0], b[3]) + m(a[4], b4_19);
        let mut c4 = m(a[4], b[0]) + m(a[3], b[1]) + m(a[2], b[2]) + m(a[1], b[3]) + m(a[0], b[4]);

        c1 += c0 >> 51;
        let mut l0 = (c0 as u64) & LOW_51;
        c2 += c1 >> 51;
        let l1 = (c1 as u64) & LOW_51;
        c3 += c2 >> 51;
        let l2 = (c2 as u64) & LOW_51;
        c4 += c3 >> 51;
        let l3 = (c3 as u64) & LOW_51;
        let carry = (c4 >> 51) as u64;
        let l4 = (c4 as u64) & LOW_51;

        l0 += carry * 19;
        FieldElement([l0 & LOW_51, l1 + (l0 >> 51), l2, l3, l4])
    }
}

impl Neg for &FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        &FieldElement::ZERO - self
    }
}

macro_rules! by_value {
    ($tr:ident, $m:ident) => {
        impl $tr<FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $m(self, rhs: FieldElement) -> FieldElement {
                (&self).$m(&rhs)
            }
        }
    };
}
by_value!(Add, add);
by_value!(Sub, sub);
by_value!(Mul, mul);
