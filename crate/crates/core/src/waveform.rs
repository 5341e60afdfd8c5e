//! Transmitter side: Zadoff-Chu spreading codes and M-ary DPSK.
//!
//! Spreading sequences are odd-length Zadoff-Chu sequences
//!
//! ```text
//! zc[n] = exp(-j * pi * root * n * (n + 1) / L),   n = 0..L-1
//! p[n]  = zc[(n + shift) mod L] / sqrt(L)
//! ```
//!
//! so every column of the spreading matrix has unit energy and every entry
//! has modulus `1/sqrt(L)`. For prime `L`, sequences with distinct roots
//! have cross-correlation magnitude exactly `1/sqrt(L)`, and distinct
//! cyclic shifts of one root are orthogonal.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{param, Error, Result};

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// One unit-energy Zadoff-Chu sequence.
pub fn zc_sequence(root: usize, shift: usize, length: usize) -> Result<Vec<Complex64>> {
    if length == 0 || length.is_multiple_of(2) {
        return param(format!("ZC length must be odd and positive, got {length}"));
    }
    if root == 0 || gcd(root, length) != 1 {
        return param(format!("ZC root {root} is not coprime with length {length}"));
    }
    if shift >= length {
        return param(format!("ZC shift {shift} out of range [0, {length})"));
    }
    let scale = 1.0 / (length as f64).sqrt();
    let seq = (0..length)
        .map(|n| {
            let m = ((n + shift) % length) as u128;
            // Reduce the phase index modulo 2L before converting to float so
            // large roots do not lose precision.
            let k = (root as u128 * m * (m + 1)) % (2 * length as u128);
            let phase = -PI * k as f64 / length as f64;
            Complex64::from_polar(scale, phase)
        })
        .collect();
    Ok(seq)
}

/// Number of distinct (root, shift) pairs available for a given length.
pub fn zc_capacity(length: usize) -> usize {
    if length == 0 || length.is_multiple_of(2) {
        return 0;
    }
    (1..length).filter(|&r| gcd(r, length) == 1).count() * length
}

/// `L x U` spreading matrix with one Zadoff-Chu column per device.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingMatrix {
    entries: DMatrix<Complex64>,
    plan: Vec<(usize, usize)>,
}

impl SpreadingMatrix {
    /// Builds the matrix from an explicit `(root, shift)` plan, or from the
    /// default root-major enumeration when `plan` is `None`.
    pub fn build(chips: usize, devices: usize, plan: Option<&[(usize, usize)]>) -> Result<Self> {
        if devices == 0 {
            return param("spreading matrix needs at least one device");
        }
        let plan: Vec<(usize, usize)> = match plan {
            Some(p) => {
                if p.len() != devices {
                    return Err(Error::Dimension(format!(
                        "plan has {} entries for {devices} devices",
                        p.len()
                    )));
                }
                for (i, a) in p.iter().enumerate() {
                    if p[..i].contains(a) {
                        return param(format!("plan entry {a:?} repeated"));
                    }
                }
                p.to_vec()
            }
            None => auto_plan(chips, devices)?,
        };
        let mut entries = DMatrix::zeros(chips, devices);
        for (u, &(root, shift)) in plan.iter().enumerate() {
            let col = zc_sequence(root, shift, chips)?;
            for (l, c) in col.into_iter().enumerate() {
                entries[(l, u)] = c;
            }
        }
        Ok(Self { entries, plan })
    }

    pub fn chips(&self) -> usize {
        self.entries.nrows()
    }

    pub fn devices(&self) -> usize {
        self.entries.ncols()
    }

    pub fn plan(&self) -> &[(usize, usize)] {
        &self.plan
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// `L x K` restriction to the given device columns, in the given order.
    pub fn restrict(&self, support: &[usize]) -> Result<DMatrix<Complex64>> {
        if let Some(&bad) = support.iter().find(|&&u| u >= self.devices()) {
            return Err(Error::Dimension(format!(
                "device index {bad} out of range for {} devices",
                self.devices()
            )));
        }
        Ok(self.entries.select_columns(support.iter()))
    }
}

fn auto_plan(chips: usize, devices: usize) -> Result<Vec<(usize, usize)>> {
    if chips == 0 || chips.is_multiple_of(2) {
        return param(format!("ZC length must be odd and positive, got {chips}"));
    }
    let available = zc_capacity(chips);
    if devices > available {
        return Err(Error::Capacity {
            requested: devices,
            available,
            length: chips,
        });
    }
    Ok((1..chips)
        .filter(|&r| gcd(r, chips) == 1)
        .flat_map(|r| (0..chips).map(move |s| (r, s)))
        .take(devices)
        .collect())
}

/// M-ary DPSK constellation `{exp(j 2 pi q / M)}` with Gray labels.
///
/// Point `q` carries the label `q ^ (q >> 1)`, written MSB first. For
/// DQPSK this gives 00 -> 1, 01 -> j, 11 -> -1, 10 -> -j. The data
/// alphabet and the transmit alphabet are the same set.
#[derive(Debug, Clone, PartialEq)]
pub struct DpskAlphabet {
    points: Vec<Complex64>,
    labels: Vec<u32>,
    bits_per_symbol: usize,
}

impl DpskAlphabet {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return param(format!("DPSK order must be a power of two >= 2, got {order}"));
        }
        let points = (0..order).map(|q| unit_root(q, order)).collect();
        let labels = (0..order as u32).map(|q| q ^ (q >> 1)).collect();
        Ok(Self {
            points,
            labels,
            bits_per_symbol: order.trailing_zeros() as usize,
        })
    }

    pub fn dqpsk() -> Self {
        Self::new(4).expect("4 is a valid order")
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Known reference symbol sent before the first data symbol.
    pub fn reference(&self) -> Complex64 {
        self.points[0]
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Index of the constellation point nearest to `z`. Ties go to the
    /// lowest index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (q, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Exact index of `z` if it is a constellation point (to 1e-9).
    pub fn index_of(&self, z: Complex64) -> Option<usize> {
        let q = self.nearest(z);
        ((z - self.points[q]).norm() < 1e-9).then_some(q)
    }

    fn index_for_label(&self, label: u32) -> usize {
        self.labels
            .iter()
            .position(|&g| g == label)
            .expect("Gray labels form a bijection")
    }

    /// Maps bits (0/1, MSB first per word) to data symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let b = self.bits_per_symbol;
        if !bits.len().is_multiple_of(b) {
            return param(format!(
                "bit count {} is not a multiple of {b} bits per symbol",
                bits.len()
            ));
        }
        bits.chunks(b)
            .map(|word| {
                let mut label = 0u32;
                for &bit in word {
                    if bit > 1 {
                        return param(format!("bit value {bit} is not 0 or 1"));
                    }
                    label = (label << 1) | bit as u32;
                }
                Ok(self.points[self.index_for_label(label)])
            })
            .collect()
    }

    /// Inverse of [`Self::map_bits`]. Off-constellation inputs are snapped
    /// to the nearest point rather than rejected.
    pub fn demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &z in symbols {
            self.push_label_bits(self.nearest(z), &mut bits);
        }
        bits
    }

    /// Bits carried by the point with the given index.
    pub fn label_bits(&self, index: usize) -> Vec<u8> {
        let mut bits = Vec::with_capacity(self.bits_per_symbol);
        self.push_label_bits(index, &mut bits);
        bits
    }

    fn push_label_bits(&self, index: usize, out: &mut Vec<u8>) {
        let label = self.labels[index];
        for i in (0..self.bits_per_symbol).rev() {
            out.push(((label >> i) & 1) as u8);
        }
    }

    /// `s_0 = reference`, `s_t = psi_t * s_{t-1}`. The product is carried
    /// out on point indices, so every output is exactly a constellation
    /// point.
    pub fn differential_encode(
        &self,
        data: &[Complex64],
        reference: Complex64,
    ) -> Result<Vec<Complex64>> {
        let m = self.order();
        let mut idx = self
            .index_of(reference)
            .ok_or_else(|| Error::Parameter(format!("reference {reference} is not a point")))?;
        let mut out = Vec::with_capacity(data.len() + 1);
        out.push(self.points[idx]);
        for &psi in data {
            let d = self
                .index_of(psi)
                .ok_or_else(|| Error::Parameter(format!("data symbol {psi} is not a point")))?;
            idx = (idx + d) % m;
            out.push(self.points[idx]);
        }
        Ok(out)
    }

    /// Element ratios `s_t / s_{t-1}` snapped to the alphabet.
    pub fn differential_decode(&self, encoded: &[Complex64]) -> Vec<Complex64> {
        encoded
            .windows(2)
            .map(|w| self.points[self.nearest(w[1] / w[0])])
            .collect()
    }
}

fn unit_root(q: usize, order: usize) -> Complex64 {
    // Quarter turns are built exactly so that products and ratios of DQPSK
    // points stay exact in floating point.
    if (4 * q).is_multiple_of(order) {
        match (4 * q / order) % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    } else {
        Complex64::from_polar(1.0, 2.0 * PI * q as f64 / order as f64)
    }
}

/// One device's symbol stream: data symbols and their differential
/// encoding (`encoded.len() == data.len() + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub data: Vec<Complex64>,
    pub encoded: Vec<Complex64>,
}

impl SymbolFrame {
    pub fn new(alphabet: &DpskAlphabet, data: Vec<Complex64>) -> Result<Self> {
        let encoded = alphabet.differential_encode(&data, alphabet.reference())?;
        Ok(Self { data, encoded })
    }

    /// Frame length `T`.
    pub fn len(&self) -> usize {
        self.encoded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encoded.is_empty()
    }
}
