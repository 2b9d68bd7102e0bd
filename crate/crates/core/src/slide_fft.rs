//! Distributed FFT over a one-row wave of `2^k` PEs.
//!
//! The permuted input is laid out block-contiguously, `2^(m-k)` elements per
//! PE. Merge levels whose segment pairs fit inside one PE run with no data
//! movement. Wider levels align each pair's halves with slides, compute the
//! crossing on one span, and slide the results back so every level starts
//! from the same layout.
//!
//! Two alignment strategies are available:
//!
//! - [`AlignStrategy::Overlay`]: `O` slides onto `E`'s span, `L` overwrites
//!   `E` in place and `R` slides back to `O`'s span.
//! - [`AlignStrategy::Midpoint`]: `E` and `O` both slide toward the span half
//!   way between them and `L`, `R` return to their origins afterwards.

use num_complex::{Complex, Complex64};
use num_rational::Ratio;
use num_traits::Float;
use thiserror::Error;

use crate::fft_core::{
    build_permutation, cross_in_place, twiddle_table, FftError, FlopTally, Precision, SampleVector,
    FLOPS_PER_PAIR,
};
use crate::mesh_sim::{CycleLedger, Displacement, Mesh, MeshError, PePos, PeSpan, SlideDescriptor};

/// Per-PE buffers reserved by a wave: resident data, incoming segment and
/// output staging.
pub const BUFFER_FACTOR: usize = 3;

pub const DEFAULT_ARRAY_NAME: &str = "data";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SlideFftError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fft(#[from] FftError),
    #[error(
        "wave of 2^{k} PEs needs {required} bytes per PE but local memory holds {capacity}{}",
        match minimal_k { Some(k) => format!("; smallest feasible k is {k}"), None => String::from("; no k is feasible") }
    )]
    Infeasible {
        k: u32,
        required: usize,
        capacity: usize,
        minimal_k: Option<u32>,
    },
    #[error("wave exponent k={k} exceeds log2(n)={m}")]
    WaveTooLong { k: u32, m: u32 },
    #[error("unsupported element width {0} bits (expected 64 or 128)")]
    UnsupportedElementBits(u32),
    #[error("input has {actual} samples but the wave was planned for {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("ledger holds no cycles")]
    EmptyLedger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AlignStrategy {
    #[default]
    Overlay,
    Midpoint,
}

/// Placement of one `n`-point transform on a wave of `2^k` PEs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveLayout {
    pub k: u32,
    pub origin: PePos,
    pub n: usize,
    pub m: u32,
    pub elements_per_pe: usize,
    pub element_bits: u32,
    pub name: String,
    pub strategy: AlignStrategy,
}

/// One merge level, `p = m` down to `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelDescriptor {
    pub p: u32,
    /// Segment pair size `N = 2^(m-p+1)`.
    pub size: usize,
    pub crossings: usize,
    /// Both halves of every pair live on a single PE.
    pub local: bool,
}

impl WaveLayout {
    pub fn pe_count(&self) -> usize {
        1 << self.k
    }

    pub fn span(&self) -> PeSpan {
        PeSpan::row_run(self.origin, self.pe_count())
    }

    pub fn precision(&self) -> Precision {
        Precision::from_element_bits(self.element_bits).expect("validated by plan_wave")
    }

    pub fn bytes_per_pe(&self) -> usize {
        self.elements_per_pe * self.element_bits as usize / 8
    }

    pub fn with_strategy(mut self, strategy: AlignStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn levels(&self) -> Vec<LevelDescriptor> {
        (1..=self.m)
            .rev()
            .map(|p| {
                let size = 1usize << (self.m - p + 1);
                LevelDescriptor {
                    p,
                    size,
                    crossings: self.n / size,
                    local: size <= self.elements_per_pe,
                }
            })
            .collect()
    }

    fn pe(&self, offset: usize) -> PePos {
        PePos::new(self.origin.row, self.origin.col + offset)
    }

    fn staging(&self, role: &str) -> String {
        format!("{}.{role}", self.name)
    }
}

fn bytes_needed(n: usize, k: u32, element_bits: u32) -> usize {
    (n >> k) * element_bits as usize / 8 * BUFFER_FACTOR
}

/// Lay out an `n`-point transform on `2^k` PEs of one row starting at
/// `origin`.
pub fn plan_wave(
    n: usize,
    k: u32,
    element_bits: u32,
    mesh: &Mesh,
    origin: PePos,
) -> Result<WaveLayout, SlideFftError> {
    if n == 0 || !n.is_power_of_two() {
        return Err(FftError::NotPowerOfTwo(n).into());
    }
    let m = n.trailing_zeros();
    if k > m {
        return Err(SlideFftError::WaveTooLong { k, m });
    }
    if Precision::from_element_bits(element_bits).is_none() {
        return Err(SlideFftError::UnsupportedElementBits(element_bits));
    }
    let config = mesh.config();
    let last_col = origin.col + (1usize << k) - 1;
    if origin.row >= config.rows || last_col >= config.cols {
        return Err(MeshError::OffGrid {
            row: origin.row as i64,
            col: last_col as i64,
            rows: config.rows,
            cols: config.cols,
        }
        .into());
    }
    let capacity = config.local_memory_bytes;
    let required = bytes_needed(n, k, element_bits);
    if required > capacity {
        let minimal_k = (k..=m).find(|&k| bytes_needed(n, k, element_bits) <= capacity);
        return Err(SlideFftError::Infeasible {
            k,
            required,
            capacity,
            minimal_k,
        });
    }
    Ok(WaveLayout {
        k,
        origin,
        n,
        m,
        elements_per_pe: n >> k,
        element_bits,
        name: DEFAULT_ARRAY_NAME.to_owned(),
        strategy: AlignStrategy::default(),
    })
}

/// Complex components that can live in PE memory.
trait Lane: Float {
    const BYTES: usize;
    fn put(self, out: &mut [u8]);
    fn get(bytes: &[u8]) -> Self;
    fn widen(self) -> f64;
    fn narrow(x: f64) -> Self;
}

impl Lane for f32 {
    const BYTES: usize = 4;
    fn put(self, out: &mut [u8]) {
        out.copy_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte lane"))
    }
    fn widen(self) -> f64 {
        self.into()
    }
    fn narrow(x: f64) -> Self {
        x as f32
    }
}

impl Lane for f64 {
    const BYTES: usize = 8;
    fn put(self, out: &mut [u8]) {
        out.copy_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte lane"))
    }
    fn widen(self) -> f64 {
        self
    }
    fn narrow(x: f64) -> Self {
        x
    }
}

fn encode<T: Lane>(values: &[Complex<T>]) -> Vec<u8> {
    let mut out = vec![0; values.len() * 2 * T::BYTES];
    write_into(values, &mut out);
    out
}

fn write_into<T: Lane>(values: &[Complex<T>], out: &mut [u8]) {
    for (c, chunk) in values.iter().zip(out.chunks_exact_mut(2 * T::BYTES)) {
        let (re, im) = chunk.split_at_mut(T::BYTES);
        c.re.put(re);
        c.im.put(im);
    }
}

fn decode<T: Lane>(bytes: &[u8]) -> Vec<Complex<T>> {
    bytes
        .chunks_exact(2 * T::BYTES)
        .map(|chunk| {
            let (re, im) = chunk.split_at(T::BYTES);
            Complex::new(T::get(re), T::get(im))
        })
        .collect()
}

/// Store `x` across the wave in bit-reversed order, one contiguous block per
/// PE. Host I/O, not booked.
pub fn distribute(
    x: &SampleVector,
    layout: &WaveLayout,
    mesh: &mut Mesh,
) -> Result<(), SlideFftError> {
    if x.len() != layout.n {
        return Err(SlideFftError::LengthMismatch {
            expected: layout.n,
            actual: x.len(),
        });
    }
    let permuted: Vec<Complex64> = if layout.m == 0 {
        x.to_vec()
    } else {
        let table = build_permutation(layout.m)?;
        table.final_row().iter().map(|&i| x[i]).collect()
    };
    match layout.precision() {
        Precision::Single => distribute_as::<f32>(&permuted, layout, mesh),
        Precision::Double => distribute_as::<f64>(&permuted, layout, mesh),
    }
}

fn distribute_as<T: Lane>(
    permuted: &[Complex64],
    layout: &WaveLayout,
    mesh: &mut Mesh,
) -> Result<(), SlideFftError> {
    for (j, block) in permuted.chunks(layout.elements_per_pe).enumerate() {
        let narrowed: Vec<Complex<T>> = block
            .iter()
            .map(|c| Complex::new(T::narrow(c.re), T::narrow(c.im)))
            .collect();
        mesh.pe_store(
            layout.pe(j),
            &layout.name,
            layout.element_bits,
            encode(&narrowed),
        )?;
    }
    Ok(())
}

/// Read the wave back in PE order. Host I/O, not booked.
pub fn gather(mesh: &Mesh, layout: &WaveLayout) -> Result<SampleVector, SlideFftError> {
    let values = match layout.precision() {
        Precision::Single => gather_as::<f32>(mesh, layout)?,
        Precision::Double => gather_as::<f64>(mesh, layout)?,
    };
    Ok(SampleVector::new(values)?)
}

fn gather_as<T: Lane>(mesh: &Mesh, layout: &WaveLayout) -> Result<Vec<Complex64>, SlideFftError> {
    let mut out = Vec::with_capacity(layout.n);
    for j in 0..layout.pe_count() {
        let array = mesh.pe_load(layout.pe(j), &layout.name)?;
        out.extend(
            decode::<T>(array.bytes())
                .into_iter()
                .map(|c| Complex64::new(c.re.widen(), c.im.widen())),
        );
    }
    Ok(out)
}

/// Run every merge level on distributed data and return the spectrum.
///
/// Output matches [`crate::fft_core::fft_serial`] (or its single precision
/// counterpart) bit for bit: each crossing uses the same arithmetic in the
/// same order regardless of `k`.
pub fn slide_fft(mesh: &mut Mesh, layout: &WaveLayout) -> Result<SampleVector, SlideFftError> {
    match layout.precision() {
        Precision::Single => run_levels::<f32>(mesh, layout)?,
        Precision::Double => run_levels::<f64>(mesh, layout)?,
    }
    gather(mesh, layout)
}

fn run_levels<T: Lane>(mesh: &mut Mesh, layout: &WaveLayout) -> Result<(), SlideFftError> {
    for level in layout.levels() {
        let twiddles = twiddle_table(level.size)?.factors_as::<T>();
        if level.local {
            local_level(mesh, layout, level, &twiddles)?;
        } else {
            match layout.strategy {
                AlignStrategy::Overlay => overlay_level(mesh, layout, level, &twiddles)?,
                AlignStrategy::Midpoint => midpoint_level(mesh, layout, level, &twiddles)?,
            }
        }
    }
    Ok(())
}

fn local_level<T: Lane>(
    mesh: &mut Mesh,
    layout: &WaveLayout,
    level: LevelDescriptor,
    twiddles: &[Complex<T>],
) -> Result<(), SlideFftError> {
    let half = level.size / 2;
    let mut flops = Vec::with_capacity(layout.pe_count());
    for j in 0..layout.pe_count() {
        let bytes = mesh.pe_bytes_mut(layout.pe(j), &layout.name)?;
        let mut values = decode::<T>(bytes);
        let mut tally = FlopTally::new();
        for pair in values.chunks_mut(level.size) {
            let (even, odd) = pair.split_at_mut(half);
            tally.add(cross_in_place(even, odd, twiddles));
        }
        write_into(&values, bytes);
        flops.push(tally.get());
    }
    mesh.compute_phase(flops);
    Ok(())
}

/// PEs spanned by one half of a pair at a non-local level.
fn half_span_pes(layout: &WaveLayout, level: LevelDescriptor) -> usize {
    level.size / 2 / layout.elements_per_pe
}

/// Crossing on one PE: `even_name` becomes `L` in place, `R` is written to a
/// fresh `output_name` array and `odd_name` is released.
fn cross_on_pe<T: Lane>(
    mesh: &mut Mesh,
    layout: &WaveLayout,
    pe: PePos,
    names: (&str, &str, &str),
    twiddles: &[Complex<T>],
) -> Result<u64, SlideFftError> {
    let (even_name, odd_name, output_name) = names;
    let mut odd = decode::<T>(mesh.pe_load(pe, odd_name)?.bytes());
    let even_bytes = mesh.pe_bytes_mut(pe, even_name)?;
    let mut even = decode::<T>(even_bytes);
    let flops = cross_in_place(&mut even, &mut odd, twiddles);
    write_into(&even, even_bytes);
    mesh.pe_store(pe, output_name, layout.element_bits, encode(&odd))?;
    mesh.pe_release(pe, odd_name)?;
    Ok(flops)
}

fn overlay_level<T: Lane>(
    mesh: &mut Mesh,
    layout: &WaveLayout,
    level: LevelDescriptor,
    twiddles: &[Complex<T>],
) -> Result<(), SlideFftError> {
    let d = half_span_pes(layout, level);
    let epp = layout.elements_per_pe;
    let bits = layout.element_bits;
    let incoming = layout.staging("incoming");
    let output = layout.staging("output");

    let forward: Vec<_> = (0..level.crossings)
        .map(|v| {
            let odd_span = PeSpan::row_run(layout.pe(2 * v * d + d), d);
            SlideDescriptor::new(
                odd_span,
                layout.name.clone(),
                Displacement::east(-(d as i64)),
                bits,
            )
            .renamed(incoming.clone())
        })
        .collect();
    mesh.slide_batch(&forward)?;

    let mut flops = vec![0; layout.pe_count()];
    for v in 0..level.crossings {
        for i in 0..d {
            let col = 2 * v * d + i;
            flops[col] = cross_on_pe(
                mesh,
                layout,
                layout.pe(col),
                (&layout.name, &incoming, &output),
                &twiddles[i * epp..(i + 1) * epp],
            )?;
        }
    }
    mesh.compute_phase(flops);

    let backward: Vec<_> = (0..level.crossings)
        .map(|v| {
            let even_span = PeSpan::row_run(layout.pe(2 * v * d), d);
            SlideDescriptor::new(
                even_span,
                output.clone(),
                Displacement::east(d as i64),
                bits,
            )
            .renamed(layout.name.clone())
        })
        .collect();
    mesh.slide_batch(&backward)?;
    Ok(())
}

/// Hops travelled by `(E, O)` toward the shared span under the midpoint
/// strategy for halves `d` PEs apart.
fn midpoint_shifts(d: usize) -> (usize, usize) {
    let even = d / 2;
    (even, d - even)
}

fn midpoint_level<T: Lane>(
    mesh: &mut Mesh,
    layout: &WaveLayout,
    level: LevelDescriptor,
    twiddles: &[Complex<T>],
) -> Result<(), SlideFftError> {
    let d = half_span_pes(layout, level);
    let (shift_even, shift_odd) = midpoint_shifts(d);
    let epp = layout.elements_per_pe;
    let bits = layout.element_bits;
    let even = layout.staging("even");
    let odd = layout.staging("odd");
    let output = layout.staging("output");

    let mut forward = Vec::with_capacity(2 * level.crossings);
    for v in 0..level.crossings {
        let base = 2 * v * d;
        forward.push(
            SlideDescriptor::new(
                PeSpan::row_run(layout.pe(base), d),
                layout.name.clone(),
                Displacement::east(shift_even as i64),
                bits,
            )
            .renamed(even.clone()),
        );
        forward.push(
            SlideDescriptor::new(
                PeSpan::row_run(layout.pe(base + d), d),
                layout.name.clone(),
                Displacement::east(-(shift_odd as i64)),
                bits,
            )
            .renamed(odd.clone()),
        );
    }
    mesh.slide_batch(&forward)?;

    let mut flops = vec![0; layout.pe_count()];
    for v in 0..level.crossings {
        for i in 0..d {
            let col = 2 * v * d + shift_even + i;
            flops[col] = cross_on_pe(
                mesh,
                layout,
                layout.pe(col),
                (&even, &odd, &output),
                &twiddles[i * epp..(i + 1) * epp],
            )?;
        }
    }
    mesh.compute_phase(flops);

    let mut backward = Vec::with_capacity(2 * level.crossings);
    for v in 0..level.crossings {
        let shared = PeSpan::row_run(layout.pe(2 * v * d + shift_even), d);
        backward.push(
            SlideDescriptor::new(
                shared,
                even.clone(),
                Displacement::east(-(shift_even as i64)),
                bits,
            )
            .renamed(layout.name.clone()),
        );
        backward.push(
            SlideDescriptor::new(
                shared,
                output.clone(),
                Displacement::east(shift_odd as i64),
                bits,
            )
            .renamed(layout.name.clone()),
        );
    }
    mesh.slide_batch(&backward)?;
    Ok(())
}

/// Predicted data movement of a full transform on `layout`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransferBudget {
    pub non_local_levels: u32,
    /// Elements leaving their PE while aligning halves.
    pub forward_elements: u64,
    /// Elements leaving their PE while returning results.
    pub backward_elements: u64,
    /// Σ elements × hops over both directions.
    pub element_hops: u64,
    /// `2 · Σ N/2` over the non-local levels: the slide distances in
    /// elements, `2(n/2 + n/4 + … + 1) ≈ 2n` when every level slides.
    pub geometric_estimate: u64,
}

impl TransferBudget {
    /// Forward plus backward element transfers, as booked by the simulator.
    pub fn elements_moved(&self) -> u64 {
        self.forward_elements + self.backward_elements
    }
}

pub fn transfer_budget(layout: &WaveLayout) -> TransferBudget {
    let mut budget = TransferBudget::default();
    let half_n = (layout.n / 2) as u64;
    for level in layout.levels().into_iter().filter(|l| !l.local) {
        let d = half_span_pes(layout, level) as u64;
        let one_way = match layout.strategy {
            AlignStrategy::Overlay => half_n,
            AlignStrategy::Midpoint => {
                let (shift_even, _) = midpoint_shifts(d as usize);
                if shift_even == 0 {
                    half_n
                } else {
                    2 * half_n
                }
            }
        };
        budget.non_local_levels += 1;
        budget.forward_elements += one_way;
        budget.backward_elements += one_way;
        budget.element_hops += 2 * half_n * d;
        budget.geometric_estimate += level.size as u64;
    }
    budget
}

/// Share of booked cycles spent on arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredEfficiency {
    pub eta: f64,
    pub eta_exact: Ratio<u64>,
    pub compute_cycles: u64,
    pub total_cycles: u64,
    pub flops: u64,
}

pub fn measure_efficiency(ledger: &CycleLedger) -> Result<MeasuredEfficiency, SlideFftError> {
    let total = ledger.total_cycles();
    if total == 0 {
        return Err(SlideFftError::EmptyLedger);
    }
    let eta_exact = Ratio::new(ledger.compute_cycles, total);
    Ok(MeasuredEfficiency {
        eta: ledger.compute_cycles as f64 / total as f64,
        eta_exact,
        compute_cycles: ledger.compute_cycles,
        total_cycles: total,
        flops: ledger.flops,
    })
}

/// FLOPs the schedule books for an `n`-point transform.
pub fn scheduled_flops(n: usize) -> u64 {
    FLOPS_PER_PAIR * (n as u64 / 2) * u64::from(n.trailing_zeros())
}

/// Plan, distribute and transform `x` on a fresh region of `mesh`.
pub fn run_on_wave(
    mesh: &mut Mesh,
    x: &SampleVector,
    k: u32,
    element_bits: u32,
    strategy: AlignStrategy,
) -> Result<SampleVector, SlideFftError> {
    let layout =
        plan_wave(x.len(), k, element_bits, mesh, PePos::new(0, 0))?.with_strategy(strategy);
    distribute(x, &layout, mesh)?;
    slide_fft(mesh, &layout)
}
