//! Serial radix-2 FFT mathematics.
//!
//! The transform is organised the way a mesh executes it: the input is first
//! permuted by repeated even/odd partitioning (ending in bit-reversed order),
//! then `m = log2 n` merge levels combine adjacent segment pairs with a
//! *crossing*: `O' = U ⊙ O`, `L = E + O'`, `R = E - O'`. Every crossing at a
//! level is independent of the others, which is what makes the schedule
//! amenable to a wave of processing elements.
//!
//! Nothing here knows about the mesh; [`crate::slide_fft`] reuses
//! [`cross_in_place`] so both paths share the exact same arithmetic.

use std::f64::consts::PI;
use std::ops::Deref;

use num_complex::{Complex, Complex32, Complex64};
use num_traits::Float;
use thiserror::Error;

/// Real FLOPs booked per crossing pair: one complex multiply (6) and two
/// complex adds (2 each).
pub const FLOPS_PER_PAIR: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FftError {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("input is empty")]
    Empty,
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("level count must be at least 1")]
    ZeroLevels,
    #[error("level count {0} is too large for this platform")]
    TooManyLevels(u32),
    #[error("index {index} does not fit in {bits} bits")]
    IndexOutOfRange { index: usize, bits: u32 },
    #[error("twiddle table size {0} must be a power of two and at least 2")]
    InvalidTwiddleSize(usize),
    #[error("segment length mismatch: even {even}, odd {odd}, twiddles {twiddles}")]
    LengthMismatch {
        even: usize,
        odd: usize,
        twiddles: usize,
    },
}

/// Storage precision of a complex datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    /// Complex single precision, a 64-bit datum.
    Single,
    #[default]
    Double,
}

impl Precision {
    pub const fn element_bits(self) -> u32 {
        match self {
            Precision::Single => 64,
            Precision::Double => 128,
        }
    }

    pub fn from_element_bits(bits: u32) -> Option<Self> {
        match bits {
            64 => Some(Precision::Single),
            128 => Some(Precision::Double),
            _ => None,
        }
    }
}

/// Running count of real floating point operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopTally(u64);

impl FlopTally {
    pub fn new() -> Self {
        Self(0)
    }

    pub fn add(&mut self, flops: u64) {
        self.0 += flops;
    }

    pub fn get(&self) -> u64 {
        self.0
    }
}

/// A finite complex array whose length is a power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    values: Vec<Complex64>,
}

impl SampleVector {
    pub fn new(values: Vec<Complex64>) -> Result<Self, FftError> {
        if values.is_empty() {
            return Err(FftError::Empty);
        }
        if !values.len().is_power_of_two() {
            return Err(FftError::NotPowerOfTwo(values.len()));
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn from_real(values: &[f64]) -> Result<Self, FftError> {
        Self::new(values.iter().map(|&re| Complex64::new(re, 0.0)).collect())
    }

    /// Unit impulse at index 0.
    pub fn impulse(n: usize) -> Result<Self, FftError> {
        let mut values = vec![Complex64::new(0.0, 0.0); n];
        if let Some(first) = values.first_mut() {
            *first = Complex64::new(1.0, 0.0);
        }
        Self::new(values)
    }

    pub fn constant(n: usize, value: Complex64) -> Result<Self, FftError> {
        Self::new(vec![value; n])
    }

    /// `m` such that `len() == 2^m`.
    pub fn log2_len(&self) -> u32 {
        self.values.len().trailing_zeros()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.values
    }

    /// Round every sample through complex single precision.
    pub fn to_single(&self) -> Vec<Complex32> {
        self.values
            .iter()
            .map(|c| Complex32::new(c.re as f32, c.im as f32))
            .collect()
    }
}

impl Deref for SampleVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.values
    }
}

fn check_finite(values: &[Complex64]) -> Result<(), FftError> {
    match values
        .iter()
        .position(|c| !(c.re.is_finite() && c.im.is_finite()))
    {
        Some(i) => Err(FftError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Reverse the low `bits` bits of `index`.
pub fn bit_reverse_index(index: usize, bits: u32) -> Result<usize, FftError> {
    if bits >= usize::BITS {
        return Err(FftError::TooManyLevels(bits));
    }
    if index >> bits != 0 {
        return Err(FftError::IndexOutOfRange { index, bits });
    }
    if bits == 0 {
        return Ok(0);
    }
    Ok(index.reverse_bits() >> (usize::BITS - bits))
}

/// Index layouts for every partitioning level of an `n = 2^m` array.
///
/// Row `p` (1-based, `p = 1..=m`) is obtained from row `p - 1` by splitting it
/// into segments of `n / 2^(p-2)` entries and placing each segment's
/// even-position entries before its odd-position entries. Row 1 is the
/// identity and row `m` is the bit-reversal permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationTable {
    levels: u32,
    rows: Vec<Vec<usize>>,
    lookup: Vec<Vec<usize>>,
}

impl PermutationTable {
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn len(&self) -> usize {
        1 << self.levels
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    /// Index layout at level `p`, `1 <= p <= m`.
    pub fn row(&self, p: u32) -> Option<&[usize]> {
        let i = usize::try_from(p).ok()?.checked_sub(1)?;
        self.rows.get(i).map(Vec::as_slice)
    }

    /// Position of each index within row `p`: `lookup(p)[row(p)[i]] == i`.
    pub fn lookup(&self, p: u32) -> Option<&[usize]> {
        let i = usize::try_from(p).ok()?.checked_sub(1)?;
        self.lookup.get(i).map(Vec::as_slice)
    }

    pub fn final_row(&self) -> &[usize] {
        self.rows.last().expect("table has at least one row")
    }
}

/// Build the level-by-level even/odd partitioning table for `n = 2^m`.
pub fn build_permutation(m: u32) -> Result<PermutationTable, FftError> {
    if m == 0 {
        return Err(FftError::ZeroLevels);
    }
    if m >= usize::BITS - 1 {
        return Err(FftError::TooManyLevels(m));
    }
    let n = 1usize << m;
    let mut rows = Vec::with_capacity(m as usize);
    rows.push((0..n).collect::<Vec<_>>());
    for level in 2..=m {
        let prev = rows.last().expect("identity row pushed above");
        let segment = n >> (level - 2);
        let mut next = Vec::with_capacity(n);
        for chunk in prev.chunks(segment) {
            next.extend(chunk.iter().step_by(2));
            next.extend(chunk.iter().skip(1).step_by(2));
        }
        rows.push(next);
    }
    let lookup = rows
        .iter()
        .map(|row| {
            let mut inverse = vec![0; n];
            for (position, &index) in row.iter().enumerate() {
                inverse[index] = position;
            }
            inverse
        })
        .collect();
    Ok(PermutationTable {
        levels: m,
        rows,
        lookup,
    })
}

/// The `N/2` roots `e^{-i 2πk/N}` applied to the odd segment of a pair of
/// size `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwiddleTable {
    size: usize,
    factors: Vec<Complex64>,
}

impl TwiddleTable {
    /// Segment pair size `N`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn factors(&self) -> &[Complex64] {
        &self.factors
    }

    pub fn factors_as<T: Float>(&self) -> Vec<Complex<T>> {
        self.factors
            .iter()
            .map(|c| Complex::new(cast(c.re), cast(c.im)))
            .collect()
    }

    /// Product of all factors, i.e. the determinant of the diagonal twiddle
    /// matrix.
    pub fn product(&self) -> Complex64 {
        self.factors
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, f| acc * f)
    }

    /// `exp(-iπ(N/2 - 1)/2)`, the product of `e^{-i2πk/N}` over `k < N/2`.
    pub fn closed_form_product(size: usize) -> Complex64 {
        let half = (size / 2) as f64;
        Complex64::from_polar(1.0, -PI * (half - 1.0) / 2.0)
    }
}

pub fn twiddle_table(size: usize) -> Result<TwiddleTable, FftError> {
    if size < 2 || !size.is_power_of_two() {
        return Err(FftError::InvalidTwiddleSize(size));
    }
    let factors = (0..size / 2)
        .map(|k| {
            if k == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                let angle = 2.0 * PI * k as f64 / size as f64;
                Complex64::new(angle.cos(), -angle.sin())
            }
        })
        .collect();
    Ok(TwiddleTable { size, factors })
}

/// Even and odd halves entering one crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingBuffers {
    pub even: Vec<Complex64>,
    pub odd: Vec<Complex64>,
}

impl CrossingBuffers {
    pub fn new(even: Vec<Complex64>, odd: Vec<Complex64>) -> Self {
        Self { even, odd }
    }
}

/// Merge `E` and `O` into `(L, R)` with `L = E + U⊙O`, `R = E - U⊙O`.
pub fn crossing(
    buffers: &CrossingBuffers,
    twiddles: &TwiddleTable,
) -> Result<(Vec<Complex64>, Vec<Complex64>), FftError> {
    crossing_tallied(buffers, twiddles, &mut FlopTally::new())
}

pub fn crossing_tallied(
    buffers: &CrossingBuffers,
    twiddles: &TwiddleTable,
    tally: &mut FlopTally,
) -> Result<(Vec<Complex64>, Vec<Complex64>), FftError> {
    let (even, odd, tw) = (
        buffers.even.len(),
        buffers.odd.len(),
        twiddles.factors.len(),
    );
    if even != odd || even != tw {
        return Err(FftError::LengthMismatch {
            even,
            odd,
            twiddles: tw,
        });
    }
    let mut left = buffers.even.clone();
    let mut right = buffers.odd.clone();
    tally.add(cross_in_place(&mut left, &mut right, &twiddles.factors));
    Ok((left, right))
}

/// In-place crossing: `even` becomes `L` and `odd` becomes `R`.
///
/// All three slices must have the same length. Returns the FLOPs performed.
pub fn cross_in_place<T: Float>(
    even: &mut [Complex<T>],
    odd: &mut [Complex<T>],
    twiddles: &[Complex<T>],
) -> u64 {
    assert_eq!(even.len(), odd.len(), "crossing halves differ in length");
    assert_eq!(
        even.len(),
        twiddles.len(),
        "twiddle count differs from half length"
    );
    for ((e, o), u) in even.iter_mut().zip(odd.iter_mut()).zip(twiddles) {
        let rotated = *u * *o;
        let l = *e + rotated;
        let r = *e - rotated;
        *e = l;
        *o = r;
    }
    FLOPS_PER_PAIR * even.len() as u64
}

/// Run the merge levels `p = m..1` over data already in bit-reversed order.
///
/// `N` doubles from 2 and each level performs `n/N` crossings in ascending
/// order.
pub(crate) fn merge_levels<T: Float>(data: &mut [Complex<T>], tally: &mut FlopTally) {
    let n = data.len();
    let mut size = 2;
    while size <= n {
        let twiddles = twiddle_table(size)
            .expect("size is a power of two >= 2")
            .factors_as::<T>();
        let half = size / 2;
        for pair in data.chunks_mut(size) {
            let (even, odd) = pair.split_at_mut(half);
            tally.add(cross_in_place(even, odd, &twiddles));
        }
        size *= 2;
    }
}

fn permuted<T: Copy>(values: &[T]) -> Vec<T> {
    let m = values.len().trailing_zeros();
    if m == 0 {
        return values.to_vec();
    }
    let table = build_permutation(m).expect("length checked by SampleVector");
    table.final_row().iter().map(|&i| values[i]).collect()
}

/// Unnormalised forward DFT by the permutation + crossing schedule.
pub fn fft_serial(x: &SampleVector) -> SampleVector {
    fft_serial_tallied(x, &mut FlopTally::new())
}

pub fn fft_serial_tallied(x: &SampleVector, tally: &mut FlopTally) -> SampleVector {
    let mut data = permuted(x.as_slice());
    merge_levels(&mut data, tally);
    SampleVector { values: data }
}

/// The same schedule evaluated in complex single precision, widened back to
/// double on return.
pub fn fft_serial_single(x: &SampleVector) -> SampleVector {
    fft_serial_single_tallied(x, &mut FlopTally::new())
}

pub fn fft_serial_single_tallied(x: &SampleVector, tally: &mut FlopTally) -> SampleVector {
    let mut data = permuted(&x.to_single());
    merge_levels(&mut data, tally);
    SampleVector {
        values: data
            .into_iter()
            .map(|c| Complex64::new(c.re.into(), c.im.into()))
            .collect(),
    }
}

/// Inverse transform, `conj(fft(conj(X))) / n`.
pub fn ifft_serial(spectrum: &SampleVector) -> SampleVector {
    let conjugated = SampleVector {
        values: spectrum.iter().map(|c| c.conj()).collect(),
    };
    let scale = 1.0 / spectrum.len() as f64;
    let values = fft_serial(&conjugated)
        .values
        .into_iter()
        .map(|c| c.conj() * scale)
        .collect();
    SampleVector { values }
}

/// Direct `O(n²)` DFT, `X[j] = Σ_k x[k] e^{-i2πjk/n}`, for any `n >= 1`.
pub fn dft_oracle(x: &[Complex64]) -> Result<Vec<Complex64>, FftError> {
    if x.is_empty() {
        return Err(FftError::Empty);
    }
    check_finite(x)?;
    let n = x.len();
    // indexed by jk mod n, which keeps the angle accurate for large n
    let roots: Vec<Complex64> = (0..n)
        .map(|r| Complex64::from_polar(1.0, -2.0 * PI * (r as f64 / n as f64)))
        .collect();
    Ok((0..n)
        .map(|j| {
            x.iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (k, &v)| {
                    acc + v * roots[(j * k) % n]
                })
        })
        .collect())
}

/// `max |a - b| / max |b|`, falling back to absolute error when `b` is zero.
pub fn relative_error(actual: &[Complex64], expected: &[Complex64]) -> f64 {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    let diff = actual
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let scale = expected.iter().map(|b| b.norm()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn cast<T: Float>(x: f64) -> T {
    T::from(x).expect("f64 converts to any Float")
}
