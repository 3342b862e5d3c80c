//! Embedding binarization and code primitives.
//!
//! A [`ProjectionPlan`] holds `B` random hyperplanes drawn from a seeded
//! [`SplitMix64`] stream; bit `j` of a code is the sign of the projection
//! onto hyperplane `j` (ties at zero map to 1). Codes are stored as
//! big-endian bit strings packed into `u64` words so that bit 0 is the most
//! significant bit of the serialized form.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// A real-valued image fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("embedding must have at least one dimension"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord(alloc::format!(
                "embedding value {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|&v| v as f64 * v as f64).sum())
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// Codec parameters: input dimension `D`, code length `B`, subcode count `m`
/// and the projection seed. Subcodes are `B / m` bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub dim: usize,
    pub code_bits: usize,
    pub subcode_count: usize,
    pub projection_seed: u64,
}

impl CodecConfig {
    pub const DEFAULT_SUBCODE_BITS: usize = 16;

    pub fn new(dim: usize, code_bits: usize, subcode_count: usize, projection_seed: u64) -> Result<Self> {
        let cfg = Self {
            dim,
            code_bits,
            subcode_count,
            projection_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config with the default 16-bit subcodes.
    pub fn with_default_subcodes(dim: usize, code_bits: usize, projection_seed: u64) -> Result<Self> {
        Self::new(
            dim,
            code_bits,
            code_bits / Self::DEFAULT_SUBCODE_BITS,
            projection_seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim must be positive"));
        }
        if self.code_bits == 0 {
            return Err(Error::config("code_bits must be positive"));
        }
        if self.subcode_count == 0 {
            return Err(Error::config("subcode_count must be at least 1"));
        }
        if self.code_bits % self.subcode_count != 0 {
            return Err(Error::config(alloc::format!(
                "code_bits {} is not divisible by subcode_count {}",
                self.code_bits,
                self.subcode_count
            )));
        }
        if self.subcode_bits() > 64 {
            return Err(Error::config("subcodes wider than 64 bits are not supported"));
        }
        Ok(())
    }

    pub fn subcode_bits(&self) -> usize {
        self.code_bits / self.subcode_count
    }

    /// Search radius used when the caller gives none: any item sharing at
    /// least one subcode with the query is a candidate.
    pub fn default_radius(&self) -> usize {
        self.subcode_count - 1
    }
}

/// `B` hyperplanes of dimension `D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPlan {
    seed: u64,
    dim_in: usize,
    bits_out: usize,
    hyperplanes: Vec<f64>,
}

impl ProjectionPlan {
    /// Draws every coefficient from a standard normal keyed only by `seed`,
    /// hyperplane by hyperplane.
    pub fn build(seed: u64, dim_in: usize, bits_out: usize) -> Result<Self> {
        if dim_in == 0 || bits_out == 0 {
            return Err(Error::config("projection dimensions must be positive"));
        }
        let mut rng = SplitMix64::new(seed);
        let hyperplanes = (0..dim_in * bits_out).map(|_| rng.next_normal()).collect();
        Ok(Self {
            seed,
            dim_in,
            bits_out,
            hyperplanes,
        })
    }

    pub fn for_config(cfg: &CodecConfig) -> Result<Self> {
        cfg.validate()?;
        Self::build(cfg.projection_seed, cfg.dim, cfg.code_bits)
    }

    /// A plan with explicit hyperplanes. The seed is recorded as 0.
    pub fn from_hyperplanes(rows: &[Vec<f64>]) -> Result<Self> {
        let dim_in = rows.first().map_or(0, Vec::len);
        if dim_in == 0 || rows.iter().any(|r| r.len() != dim_in) {
            return Err(Error::config("hyperplanes must be non-empty and of equal length"));
        }
        Ok(Self {
            seed: 0,
            dim_in,
            bits_out: rows.len(),
            hyperplanes: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn bits_out(&self) -> usize {
        self.bits_out
    }

    pub fn hyperplane(&self, j: usize) -> &[f64] {
        &self.hyperplanes[j * self.dim_in..(j + 1) * self.dim_in]
    }

    pub fn binarize(&self, v: &EmbeddingVector) -> Result<BinaryCode> {
        if v.dim() != self.dim_in {
            return Err(Error::shape(self.dim_in, v.dim()));
        }
        let mut code = BinaryCode::zeros(self.bits_out);
        for (j, row) in self.hyperplanes.chunks_exact(self.dim_in).enumerate() {
            let dot: f64 = row
                .iter()
                .zip(v.values())
                .map(|(&h, &x)| h * x as f64)
                .sum();
            if dot >= 0.0 {
                code.set(j);
            }
        }
        Ok(code)
    }
}

/// A `B`-bit binary code. Bit 0 is the most significant bit.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CodeRepr", into = "CodeRepr")]
pub struct BinaryCode {
    words: Vec<u64>,
    len: usize,
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BinaryCode {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: alloc::vec![0; word_count(len)],
            len,
        }
    }

    /// The low `len` bits of `value`, most significant first
    /// (`from_u64(0b10, 2)` has bit 0 set and bit 1 clear).
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len > 0 && len <= 64, "from_u64 takes 1..=64 bits");
        let masked = if len == 64 { value } else { value & ((1u64 << len) - 1) };
        Self {
            words: alloc::vec![masked << (64 - len)],
            len,
        }
    }

    /// Builds from big-endian bytes; bits past `len` must be zero.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::shape(len.div_ceil(8), bytes.len()));
        }
        let mut words = alloc::vec![0u64; word_count(len)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (56 - 8 * (i % 8));
        }
        let code = Self { words, len };
        if code.has_padding_bits() {
            return Err(Error::InvalidRecord("code has bits set past its length".into()));
        }
        Ok(code)
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != word_count(len) {
            return Err(Error::shape(word_count(len), words.len()));
        }
        let code = Self { words, len };
        if code.has_padding_bits() {
            return Err(Error::InvalidRecord("code has bits set past its length".into()));
        }
        Ok(code)
    }

    fn has_padding_bits(&self) -> bool {
        let tail = self.len % 64;
        tail != 0 && self.words.last().is_some_and(|w| w << tail != 0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_be_bytes())
            .take(n)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, j: usize) -> bool {
        assert!(j < self.len);
        self.words[j / 64] >> (63 - j % 64) & 1 == 1
    }

    pub fn set(&mut self, j: usize) {
        assert!(j < self.len);
        self.words[j / 64] |= 1 << (63 - j % 64);
    }

    pub fn flip(&mut self, j: usize) {
        assert!(j < self.len);
        self.words[j / 64] ^= 1 << (63 - j % 64);
    }

    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= !0u64 << (64 - tail);
            }
        }
        Self { words, len: self.len }
    }

    /// Bits `[start, start + width)` as an integer, first bit most significant.
    /// `width` must be in `1..=64`.
    pub fn bits_at(&self, start: usize, width: usize) -> u64 {
        debug_assert!(start + width <= self.len);
        bits_at_words(&self.words, start, width)
    }

    /// Subcode `p` for subcodes of `width` bits.
    #[inline]
    pub fn subcode(&self, p: usize, width: usize) -> u64 {
        self.bits_at(p * width, width)
    }

    /// Splits into `m` equal subcodes, returned in position order.
    pub fn split_subcodes(&self, m: usize) -> Result<Vec<(usize, u64)>> {
        if m == 0 || self.len % m != 0 {
            return Err(Error::config(alloc::format!(
                "code length {} is not divisible into {m} subcodes",
                self.len
            )));
        }
        let width = self.len / m;
        if width > 64 {
            return Err(Error::config("subcodes wider than 64 bits are not supported"));
        }
        Ok((0..m).map(|p| (p, self.subcode(p, width))).collect())
    }

    pub fn hamming(&self, other: &BinaryCode) -> Result<u32> {
        if self.len != other.len {
            return Err(Error::shape(self.len, other.len));
        }
        Ok(hamming_words(&self.words, &other.words))
    }

    pub fn to_hex(&self) -> String {
        const DIGITS: &[u8; 16] = b"0123456789abcdef";
        let mut out = String::with_capacity(self.len.div_ceil(4));
        for b in self.to_bytes() {
            out.push(DIGITS[(b >> 4) as usize] as char);
            out.push(DIGITS[(b & 0xf) as usize] as char);
        }
        out
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        let bad = || Error::InvalidRecord(alloc::format!("invalid hex code {hex:?}"));
        if hex.len() % 2 != 0 {
            return Err(bad());
        }
        let bytes = hex
            .as_bytes()
            .chunks(2)
            .map(|pair| {
                let s = core::str::from_utf8(pair).map_err(|_| bad())?;
                u8::from_str_radix(s, 16).map_err(|_| bad())
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_bytes(&bytes, len)
    }
}

impl fmt::Debug for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryCode({}:{})", self.len, self.to_hex())
    }
}

#[derive(Serialize, Deserialize)]
struct CodeRepr {
    bits: usize,
    hex: String,
}

impl From<BinaryCode> for CodeRepr {
    fn from(c: BinaryCode) -> Self {
        CodeRepr {
            bits: c.len,
            hex: c.to_hex(),
        }
    }
}

impl TryFrom<CodeRepr> for BinaryCode {
    type Error = Error;

    fn try_from(r: CodeRepr) -> Result<Self> {
        BinaryCode::from_hex(&r.hex, r.bits)
    }
}

/// Bits `[start, start + width)` of a packed code, first bit most significant.
#[inline]
pub fn bits_at_words(words: &[u64], start: usize, width: usize) -> u64 {
    debug_assert!((1..=64).contains(&width));
    let w = start / 64;
    let off = start % 64;
    let hi = words[w] as u128;
    let lo = words.get(w + 1).copied().unwrap_or(0) as u128;
    let window = (hi << 64 | lo) << off;
    (window >> (128 - width)) as u64
}

/// Popcount of the XOR of two equal-length word slices.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector("cosine of a zero-norm vector"));
    }
    let dot: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn ev(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn naive_hamming(a: &BinaryCode, b: &BinaryCode) -> u32 {
        (0..a.len()).filter(|&j| a.bit(j) != b.bit(j)).count() as u32
    }

    fn random_code(rng: &mut SplitMix64, len: usize) -> BinaryCode {
        let mut c = BinaryCode::zeros(len);
        for j in 0..len {
            if rng.next_u64() & 1 == 1 {
                c.set(j);
            }
        }
        c
    }

    #[test]
    fn plan_is_deterministic() {
        let a = ProjectionPlan::build(7, 128, 256).unwrap();
        let b = ProjectionPlan::build(7, 128, 256).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ProjectionPlan::build(8, 128, 256).unwrap());
    }

    #[test]
    fn plan_rejects_zero_dims() {
        assert!(matches!(ProjectionPlan::build(7, 0, 256), Err(Error::InvalidConfig(_))));
        assert!(matches!(ProjectionPlan::build(7, 4, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_vector_binarizes_to_all_ones() {
        let plan = ProjectionPlan::build(3, 8, 70).unwrap();
        let code = plan.binarize(&ev(&[0.0; 8])).unwrap();
        assert_eq!(code, BinaryCode::zeros(70).complement());
        assert_eq!(code.words()[1], 0b111111 << 58);
    }

    #[test]
    fn injected_hyperplanes_give_expected_bits() {
        let plan = ProjectionPlan::from_hyperplanes(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let code = plan.binarize(&ev(&[1.0, 0.0])).unwrap();
        assert_eq!(code, BinaryCode::from_u64(0b10, 2));
    }

    #[test]
    fn binarize_checks_dimension() {
        let plan = ProjectionPlan::build(1, 4, 8).unwrap();
        assert_eq!(
            plan.binarize(&ev(&[1.0; 3])),
            Err(Error::Shape { expected: 4, actual: 3 })
        );
    }

    #[test]
    fn negation_complements_code() {
        let plan = ProjectionPlan::build(11, 16, 128).unwrap();
        let mut rng = SplitMix64::new(5);
        let mut checked = 0;
        while checked < 100 {
            let v: Vec<f32> = (0..16).map(|_| rng.next_normal() as f32).collect();
            let pos = ev(&v);
            let neg = ev(&v.iter().map(|x| -x).collect::<Vec<_>>());
            let has_zero_dot = (0..128).any(|j| {
                let d: f64 = plan.hyperplane(j).iter().zip(&v).map(|(h, &x)| h * x as f64).sum();
                d == 0.0
            });
            if has_zero_dot {
                continue;
            }
            assert_eq!(plan.binarize(&neg).unwrap(), plan.binarize(&pos).unwrap().complement());
            checked += 1;
        }
    }

    #[test]
    fn split_examples() {
        let code = BinaryCode::from_u64(0b1011_0010, 8);
        assert_eq!(code.split_subcodes(2).unwrap(), vec![(0, 0b1011), (1, 0b0010)]);
        assert_eq!(code.split_subcodes(1).unwrap(), vec![(0, 0b1011_0010)]);
        assert!(matches!(code.split_subcodes(3), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn split_across_word_boundary() {
        // 96-bit code, 2 subcodes of 48 bits: the second spans words 0 and 1.
        let mut rng = SplitMix64::new(77);
        let code = random_code(&mut rng, 96);
        let parts = code.split_subcodes(2).unwrap();
        for (p, value) in parts {
            let naive = (0..48).fold(0u64, |acc, i| acc << 1 | code.bit(p * 48 + i) as u64);
            assert_eq!(value, naive);
        }
    }

    #[test]
    fn hamming_examples() {
        let a = BinaryCode::from_u64(0b1011, 4);
        let b = BinaryCode::from_u64(0b0010, 4);
        assert_eq!(a.hamming(&b).unwrap(), 2);
        assert_eq!(a.hamming(&a).unwrap(), 0);
        assert!(matches!(
            a.hamming(&BinaryCode::zeros(5)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn hamming_matches_bit_loop() {
        let mut rng = SplitMix64::new(2024);
        for i in 0..1000 {
            let len = 1 + (i % 300);
            let a = random_code(&mut rng, len);
            let b = random_code(&mut rng, len);
            assert_eq!(a.hamming(&b).unwrap(), naive_hamming(&a, &b));
        }
    }

    #[test]
    fn cosine_examples() {
        let v = ev(&[0.3, -1.2, 4.0]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-6);
        let v2 = ev(&[0.6, -2.4, 8.0]);
        assert!((cosine(&v, &v2).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(cosine(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine(&ev(&[0.0, 0.0]), &ev(&[0.0, 1.0])),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn embedding_rejects_bad_values() {
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![1.0, f32::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CodecConfig::new(8, 8, 3, 0).is_err());
        assert!(CodecConfig::new(8, 256, 2, 0).is_err());
        assert!(CodecConfig::new(0, 256, 16, 0).is_err());
        let c = CodecConfig::with_default_subcodes(512, 512, 1).unwrap();
        assert_eq!((c.subcode_count, c.subcode_bits()), (32, 16));
    }

    #[test]
    fn hex_round_trip_and_padding() {
        let mut rng = SplitMix64::new(3);
        let c = random_code(&mut rng, 70);
        assert_eq!(BinaryCode::from_hex(&c.to_hex(), 70).unwrap(), c);
        assert!(BinaryCode::from_bytes(&[0xff], 4).is_err());
    }

    fn code_strategy(len: usize) -> impl Strategy<Value = BinaryCode> {
        proptest::collection::vec(any::<u64>(), len.div_ceil(64)).prop_map(move |mut w| {
            if len % 64 != 0 {
                let last = w.len() - 1;
                w[last] &= !0u64 << (64 - len % 64);
            }
            BinaryCode::from_words(w, len).unwrap()
        })
    }

    proptest! {
        #[test]
        fn subcode_distances_add_up(
            (a, b, m) in (1usize..6).prop_flat_map(|k| {
                let m = [1usize, 2, 4, 8, 16][k - 1];
                (code_strategy(m * 12), code_strategy(m * 12), Just(m))
            })
        ) {
            let sa = a.split_subcodes(m).unwrap();
            let sb = b.split_subcodes(m).unwrap();
            let sum: u32 = sa.iter().zip(&sb).map(|((_, x), (_, y))| (x ^ y).count_ones()).sum();
            prop_assert_eq!(sum, a.hamming(&b).unwrap());
            // concatenating subcodes rebuilds the code
            let mut rebuilt = BinaryCode::zeros(a.len());
            for (p, v) in sa {
                for i in 0..12 {
                    if v >> (11 - i) & 1 == 1 { rebuilt.set(p * 12 + i); }
                }
            }
            prop_assert_eq!(rebuilt, a);
        }

        #[test]
        fn hamming_is_a_metric(a in code_strategy(130), b in code_strategy(130), c in code_strategy(130)) {
            let ab = a.hamming(&b).unwrap();
            prop_assert_eq!(ab, b.hamming(&a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(a.hamming(&c).unwrap() <= ab + b.hamming(&c).unwrap());
        }
    }
}
