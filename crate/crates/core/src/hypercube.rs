//! Points of `{0,1}^n`, index sets, literal lists and layer predicates.
//!
//! Coordinates are 1-based everywhere in the public API. Internally bit `i`
//! lives at position `i - 1` of a packed `u64` word array.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A vertex of the hypercube with a cached Hamming weight.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    n: u32,
    weight: u32,
    words: Vec<u64>,
}

fn word_count(n: u32) -> usize {
    (n as usize).div_ceil(64)
}

impl Point {
    pub fn zeros(n: u32) -> Self {
        Point { n, weight: 0, words: vec![0; word_count(n)] }
    }

    pub fn ones(n: u32) -> Self {
        let mut words = vec![u64::MAX; word_count(n)];
        let rem = n % 64;
        if rem != 0 {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << rem) - 1;
            }
        }
        Point { n, weight: n, words }
    }

    /// Builds a point from bits listed in coordinate order.
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut p = Point::zeros(bits.len() as u32);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                p.words[i / 64] |= 1 << (i % 64);
            }
        }
        p.recount();
        p
    }

    /// Builds the point whose coordinate `i` is bit `i - 1` of `index`.
    pub fn from_index(n: u32, index: u64) -> Self {
        assert!(n <= 64, "from_index needs n <= 64");
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut p = Point::zeros(n);
        if n > 0 {
            p.words[0] = index & mask;
        }
        p.recount();
        p
    }

    /// Inverse of [`Point::from_index`].
    pub fn to_index(&self) -> u64 {
        assert!(self.n <= 64, "to_index needs n <= 64");
        self.words.first().copied().unwrap_or(0)
    }

    /// Builds a point of dimension `n` with ones exactly at `coords`.
    pub fn from_ones(n: u32, coords: &[u32]) -> Result<Self> {
        let mut p = Point::zeros(n);
        for &c in coords {
            p.check(c)?;
            let (w, b) = slot(c);
            p.words[w] |= 1 << b;
        }
        p.recount();
        Ok(p)
    }

    fn recount(&mut self) {
        self.weight = self.words.iter().map(|w| w.count_ones()).sum();
    }

    fn check(&self, i: u32) -> Result<()> {
        if i == 0 || i > self.n {
            Err(Error::IndexOutOfRange { index: i, n: self.n })
        } else {
            Ok(())
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn weight(&self) -> u32 {
        debug_assert_eq!(self.weight, self.words.iter().map(|w| w.count_ones()).sum::<u32>());
        self.weight
    }

    /// Value of coordinate `i`. Panics when `i` is not in `[1, n]`.
    #[inline]
    pub fn get(&self, i: u32) -> bool {
        assert!(i >= 1 && i <= self.n, "coordinate {i} outside [1, {}]", self.n);
        let (w, b) = slot(i);
        (self.words[w] >> b) & 1 == 1
    }

    /// Checked variant of [`Point::get`].
    pub fn try_get(&self, i: u32) -> Result<bool> {
        self.check(i)?;
        Ok(self.get(i))
    }

    /// Returns `x^S`.
    pub fn flip(&self, s: &IndexSet) -> Result<Point> {
        if s.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: s.n() });
        }
        Ok(self.flip_coords(s.as_slice()))
    }

    /// Flips each listed coordinate once. Coordinates must be distinct and in range.
    pub fn flip_coords(&self, coords: &[u32]) -> Point {
        let mut p = self.clone();
        for &c in coords {
            assert!(c >= 1 && c <= self.n, "coordinate {c} outside [1, {}]", self.n);
            let (w, b) = slot(c);
            let was = (p.words[w] >> b) & 1 == 1;
            p.words[w] ^= 1 << b;
            if was {
                p.weight -= 1;
            } else {
                p.weight += 1;
            }
        }
        debug_assert_eq!(p.weight, p.words.iter().map(|w| w.count_ones()).sum::<u32>());
        p
    }

    /// Returns a copy with coordinate `i` set to `value`.
    pub fn with(&self, i: u32, value: bool) -> Point {
        if self.get(i) == value {
            self.clone()
        } else {
            self.flip_coords(&[i])
        }
    }

    /// Coordinates equal to 1, increasing.
    pub fn ones_coords(&self) -> Vec<u32> {
        (1..=self.n).filter(|&i| self.get(i)).collect()
    }

    /// Coordinates equal to 0, increasing.
    pub fn zeros_coords(&self) -> Vec<u32> {
        (1..=self.n).filter(|&i| !self.get(i)).collect()
    }

    /// Coordinatewise `self ≤ other`.
    pub fn precedes_eq(&self, other: &Point) -> bool {
        self.n == other.n && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Coordinatewise `self ≤ other` and `self ≠ other`.
    pub fn precedes(&self, other: &Point) -> bool {
        self.precedes_eq(other) && self.weight < other.weight
    }

    /// Coordinates where the two points differ.
    pub fn diff(&self, other: &Point) -> Vec<u32> {
        (1..=self.n).filter(|&i| self.get(i) != other.get(i)).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

#[inline]
fn slot(i: u32) -> (usize, u32) {
    let k = i - 1;
    ((k / 64) as usize, k % 64)
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (1..=self.n).map(|i| if self.get(i) { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point({self})")
    }
}

impl FromStr for Point {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("invalid bit {other:?} in point string"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Point::from_bits(&bits))
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A sorted set of distinct coordinates in `[n]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet {
    n: u32,
    items: Vec<u32>,
}

impl IndexSet {
    /// Sorts the input; rejects duplicates and out-of-range coordinates.
    pub fn new(n: u32, mut items: Vec<u32>) -> Result<Self> {
        items.sort_unstable();
        for w in items.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Parse(format!("duplicate coordinate {}", w[0])));
            }
        }
        if let Some(&bad) = items.iter().find(|&&i| i == 0 || i > n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        Ok(IndexSet { n, items })
    }

    pub fn empty(n: u32) -> Self {
        IndexSet { n, items: Vec::new() }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.items
    }

    pub fn contains(&self, i: u32) -> bool {
        self.items.binary_search(&i).is_ok()
    }
}

/// The index tuple of a term or clause: `s` coordinates, repeats allowed.
pub type LiteralList = Vec<u32>;

/// AND over the listed coordinates.
#[inline]
pub fn term_eval(t: &[u32], x: &Point) -> bool {
    t.iter().all(|&i| x.get(i))
}

/// OR over the listed coordinates.
#[inline]
pub fn clause_eval(c: &[u32], x: &Point) -> bool {
    c.iter().any(|&i| x.get(i))
}

/// Integer square root, exact for perfect squares.
pub fn isqrt(n: u32) -> u32 {
    let mut r = (n as f64).sqrt() as u32;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

pub fn is_perfect_square(n: u32) -> bool {
    let r = isqrt(n);
    r * r == n
}

/// Inclusive weight bounds `[n/2 - √n, n/2 + √n]`. `n` must be a perfect square.
pub fn middle_bounds(n: u32) -> (u32, u32) {
    let r = isqrt(n);
    debug_assert_eq!(r * r, n);
    let half = n / 2;
    (half.saturating_sub(r), half + r)
}

/// Inclusive weight bounds `[3n/4, 3n/4 + 1]`. `n` must be divisible by 4.
pub fn sandwich_bounds(n: u32) -> (u32, u32) {
    debug_assert_eq!(n % 4, 0);
    (3 * n / 4, 3 * n / 4 + 1)
}

pub fn in_middle_layers(x: &Point, n: u32) -> bool {
    let (lo, hi) = middle_bounds(n);
    (lo..=hi).contains(&x.weight())
}

pub fn in_sandwich_layers(x: &Point, n: u32) -> bool {
    let (lo, hi) = sandwich_bounds(n);
    (lo..=hi).contains(&x.weight())
}

/// Uniform point of weight `w` via partial Fisher-Yates over the coordinates.
pub fn sample_layer<R: Rng + ?Sized>(n: u32, w: u32, rng: &mut R) -> Point {
    assert!(w <= n, "weight {w} exceeds dimension {n}");
    let mut idx: Vec<u32> = (1..=n).collect();
    for k in 0..w as usize {
        let j = rng.random_range(k..n as usize);
        idx.swap(k, j);
    }
    Point::from_ones(n, &idx[..w as usize]).expect("coordinates in range")
}

/// Uniform `k`-subset of `pool` (order of the result is random).
pub fn sample_subset<R: Rng + ?Sized>(pool: &[u32], k: usize, rng: &mut R) -> Vec<u32> {
    let k = k.min(pool.len());
    let mut v = pool.to_vec();
    for i in 0..k {
        let j = rng.random_range(i..v.len());
        v.swap(i, j);
    }
    v.truncate(k);
    v
}

/// Uniform point of the whole cube.
pub fn sample_uniform<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Point {
    let bits: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    Point::from_bits(&bits)
}
