//! Gray-mapped square QAM with unit average symbol energy.
//!
//! The first half of each symbol's bits selects the in-phase level, the
//! second half the quadrature level, each Gray-coded MSB first.

use serde::{Deserialize, Serialize};

use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum QamOrder {
    Qam4,
    Qam16,
    Qam64,
    Qam256,
}

impl TryFrom<u32> for QamOrder {
    type Error = Error;

    fn try_from(order: u32) -> Result<Self> {
        match order {
            4 => Ok(QamOrder::Qam4),
            16 => Ok(QamOrder::Qam16),
            64 => Ok(QamOrder::Qam64),
            256 => Ok(QamOrder::Qam256),
            _ => Err(Error::invalid(format!("unsupported QAM order {order} (use 4, 16, 64 or 256)"))),
        }
    }
}

impl From<QamOrder> for u32 {
    fn from(o: QamOrder) -> u32 {
        o.order() as u32
    }
}

impl std::fmt::Display for QamOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-QAM", self.order())
    }
}

impl QamOrder {
    pub fn order(self) -> usize {
        match self {
            QamOrder::Qam4 => 4,
            QamOrder::Qam16 => 16,
            QamOrder::Qam64 => 64,
            QamOrder::Qam256 => 256,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        self.order().trailing_zeros() as usize
    }

    /// Amplitude levels per axis.
    pub fn levels(self) -> usize {
        1 << (self.bits_per_symbol() / 2)
    }

    fn scale(self) -> f64 {
        let l = self.levels() as f64;
        (2.0 * (l * l - 1.0) / 3.0).sqrt()
    }

    /// Symbol for index `idx` in `0..order`, where the index is the
    /// symbol's bit label read MSB first.
    pub fn point(self, idx: usize) -> Complex64 {
        let half = self.bits_per_symbol() / 2;
        let mask = (1 << half) - 1;
        let i = self.level((idx >> half) & mask);
        let q = self.level(idx & mask);
        Complex64::new(i, q) / self.scale()
    }

    fn level(self, gray: usize) -> f64 {
        let pos = gray_decode(gray);
        2.0 * pos as f64 - (self.levels() as f64 - 1.0)
    }

    /// All `order` points, indexed by bit label.
    pub fn constellation(self) -> Vec<Complex64> {
        (0..self.order()).map(|i| self.point(i)).collect()
    }

    fn axis_label(self, x: f64) -> usize {
        let l = self.levels() as f64;
        let pos = ((x * self.scale() + l - 1.0) / 2.0).round().clamp(0.0, l - 1.0) as usize;
        pos ^ (pos >> 1)
    }

    /// Bit label of the constellation point nearest to `z`.
    pub fn slice(self, z: Complex64) -> usize {
        let half = self.bits_per_symbol() / 2;
        (self.axis_label(z.re) << half) | self.axis_label(z.im)
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Maps a bit stream (one bit per byte, 0 or 1) onto symbols.
pub fn qam_mod(bits: &[u8], order: QamOrder) -> Result<Vec<Complex64>> {
    let b = order.bits_per_symbol();
    if !bits.len().is_multiple_of(b) {
        return Err(Error::invalid(format!("{} bits is not a multiple of {b}", bits.len())));
    }
    if bits.iter().any(|&x| x > 1) {
        return Err(Error::invalid("bits must be 0 or 1"));
    }
    Ok(bits.chunks_exact(b).map(|c| order.point(c.iter().fold(0usize, |acc, &x| (acc << 1) | x as usize))).collect())
}

/// Hard-decision demapping back to bits.
pub fn qam_demod(symbols: &[Complex64], order: QamOrder) -> Vec<u8> {
    let b = order.bits_per_symbol();
    let mut out = Vec::with_capacity(symbols.len() * b);
    for &z in symbols {
        let label = order.slice(z);
        out.extend((0..b).rev().map(|i| ((label >> i) & 1) as u8));
    }
    out
}
