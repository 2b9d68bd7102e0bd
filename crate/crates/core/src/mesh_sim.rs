//! Deterministic model of a homogeneous 2D grid of processing elements.
//!
//! Each PE owns a bounded local store of named byte arrays. Data moves only by
//! [`Mesh::slide`]: a synchronous translation of a rectangular region by a
//! displacement in PE units, routed over nearest-neighbour links. Costs are
//! booked into a [`CycleLedger`].
//!
//! Per PE, a slide of `E` elements over `d = |dx| + |dy|` hops costs
//!
//! ```text
//! ramp + a_eff * E + (d - 1)
//! a_eff = (element_bits / packet_bits) * cycles_per_packet_per_hop + per_element_overhead
//! ```
//!
//! and a slide (or a batch of concurrent slides) takes the maximum over its
//! PEs, rounded up to whole cycles once per batch.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// Exact non-negative cycle quantities (e.g. `13/10` cycles per element).
pub type Rational = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("invalid mesh configuration: {0}")]
    InvalidConfig(String),
    #[error("PE ({row}, {col}) is off the {rows}x{cols} grid")]
    OffGrid {
        row: i64,
        col: i64,
        rows: usize,
        cols: usize,
    },
    #[error("PE {pe} capacity exceeded: {requested} bytes requested, {available} available")]
    CapacityExceeded {
        pe: PePos,
        requested: usize,
        available: usize,
    },
    #[error("PE {pe} holds no array named {name:?}")]
    MissingArray { pe: PePos, name: String },
    #[error("PE {pe} already holds an array named {name:?}")]
    ArrayExists { pe: PePos, name: String },
    #[error("array {name:?} on PE {pe} has {actual}-bit elements, expected {expected}")]
    ElementWidthMismatch {
        pe: PePos,
        name: String,
        expected: u32,
        actual: u32,
    },
    #[error("element width {0} bits is not a positive multiple of 8")]
    InvalidElementWidth(u32),
    #[error("{len} bytes is not a whole number of {element_bits}-bit elements")]
    RaggedArray { len: usize, element_bits: u32 },
    #[error("array {name:?} on PE {pe} is the source of more than one slide")]
    DuplicateSource { pe: PePos, name: String },
    #[error("more than one array would arrive at PE {pe} as {name:?}")]
    DestinationCollision { pe: PePos, name: String },
    #[error("malformed ledger dump: {0}")]
    MalformedLedger(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PePos {
    pub row: usize,
    pub col: usize,
}

impl PePos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for PePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Translation in PE units; `dx` moves along a row (east positive), `dy`
/// along a column (south positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Displacement {
    pub dx: i64,
    pub dy: i64,
}

impl Displacement {
    pub const fn new(dx: i64, dy: i64) -> Self {
        Self { dx, dy }
    }

    pub const fn east(hops: i64) -> Self {
        Self { dx: hops, dy: 0 }
    }

    /// Hop count with horizontal-then-vertical routing.
    pub fn hops(&self) -> u64 {
        self.dx.unsigned_abs() + self.dy.unsigned_abs()
    }

    pub fn is_zero(&self) -> bool {
        self.dx == 0 && self.dy == 0
    }
}

/// A rectangle of PEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeSpan {
    pub origin: PePos,
    pub rows: usize,
    pub cols: usize,
}

impl PeSpan {
    pub const fn new(origin: PePos, rows: usize, cols: usize) -> Self {
        Self { origin, rows, cols }
    }

    /// `len` consecutive PEs of one row starting at `origin`.
    pub const fn row_run(origin: PePos, len: usize) -> Self {
        Self {
            origin,
            rows: 1,
            cols: len,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// PEs in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = PePos> + '_ {
        (0..self.rows).flat_map(move |r| {
            (0..self.cols).map(move |c| PePos::new(self.origin.row + r, self.origin.col + c))
        })
    }
}

/// Named cost presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CostPreset {
    /// Ramp latency 3 and 0.3 extra cycles per element: a 32-bit element
    /// streams at 1.3 cycles.
    #[default]
    Cs2Calibrated,
    /// No ramp and no per-element overhead: one cycle per 32-bit packet.
    PurePacket,
}

impl CostPreset {
    pub const fn name(self) -> &'static str {
        match self {
            CostPreset::Cs2Calibrated => "cs2-calibrated",
            CostPreset::PurePacket => "pure-packet",
        }
    }

    pub fn ramp_cycles(self) -> u64 {
        match self {
            CostPreset::Cs2Calibrated => 3,
            CostPreset::PurePacket => 0,
        }
    }

    pub fn per_element_overhead_cycles(self) -> Rational {
        match self {
            CostPreset::Cs2Calibrated => Rational::new(3, 10),
            CostPreset::PurePacket => Rational::zero(),
        }
    }
}

impl fmt::Display for CostPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cs2-calibrated" => Ok(CostPreset::Cs2Calibrated),
            "pure-packet" => Ok(CostPreset::PurePacket),
            other => Err(format!(
                "unknown preset {other:?} (expected cs2-calibrated or pure-packet)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshConfig {
    pub rows: usize,
    pub cols: usize,
    pub local_memory_bytes: usize,
    pub packet_bits: u32,
    pub cycles_per_packet_per_hop: u64,
    /// CE-to-router latency charged once per slide message per PE.
    pub ramp_cycles: u64,
    pub per_element_overhead_cycles: Rational,
    /// Cycles per FLOP on a compute element, local memory traffic included.
    pub cycles_per_flop: Rational,
}

impl MeshConfig {
    pub const DEFAULT_LOCAL_MEMORY_BYTES: usize = 48 * 1024;

    pub fn with_preset(rows: usize, cols: usize, preset: CostPreset) -> Self {
        Self {
            rows,
            cols,
            local_memory_bytes: Self::DEFAULT_LOCAL_MEMORY_BYTES,
            packet_bits: 32,
            cycles_per_packet_per_hop: 1,
            ramp_cycles: preset.ramp_cycles(),
            per_element_overhead_cycles: preset.per_element_overhead_cycles(),
            cycles_per_flop: Rational::from_integer(3),
        }
    }

    pub fn cs2_calibrated(rows: usize, cols: usize) -> Self {
        Self::with_preset(rows, cols, CostPreset::Cs2Calibrated)
    }

    pub fn pure_packet(rows: usize, cols: usize) -> Self {
        Self::with_preset(rows, cols, CostPreset::PurePacket)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let fail = |msg: &str| Err(MeshError::InvalidConfig(msg.to_owned()));
        if self.rows == 0 || self.cols == 0 {
            return fail("rows and cols must be at least 1");
        }
        if self.local_memory_bytes == 0 {
            return fail("local_memory_bytes must be positive");
        }
        if self.packet_bits == 0 {
            return fail("packet_bits must be positive");
        }
        if self.cycles_per_flop.is_zero() {
            return fail("cycles_per_flop must be positive");
        }
        Ok(())
    }

    pub fn pe_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Streaming cost `a_eff` of one element over a link, in cycles.
    pub fn cycles_per_element(&self, element_bits: u32) -> Rational {
        Rational::new(u64::from(element_bits), u64::from(self.packet_bits))
            * self.cycles_per_packet_per_hop
            + self.per_element_overhead_cycles
    }

    /// Wall-clock cycles of one slide whose busiest PE moves `elements`
    /// elements over `hops` hops.
    pub fn slide_cycles(&self, elements: u64, element_bits: u32, hops: u64) -> u64 {
        if hops == 0 {
            return 0;
        }
        self.ramp_cycles + ceil(self.cycles_per_element(element_bits) * elements + (hops - 1))
    }
}

fn ceil(r: Rational) -> u64 {
    r.ceil().to_integer()
}

/// Cycle and operation totals for one simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CycleLedger {
    /// Wall-clock cycles spent in compute phases.
    pub compute_cycles: u64,
    /// Wall-clock link occupancy of slides, ramps excluded.
    pub transfer_cycles: u64,
    pub ramp_cycles: u64,
    pub flops: u64,
    /// Sum over moved elements of the hops each travelled.
    pub element_hops: u64,
    /// Elements that left their PE, counted once per slide.
    pub elements_moved: u64,
}

impl CycleLedger {
    const DUMP_KEYS: [&'static str; 5] = [
        "compute_cycles",
        "transfer_cycles",
        "ramp_cycles",
        "flops",
        "element_hops",
    ];

    pub fn total_cycles(&self) -> u64 {
        self.compute_cycles + self.transfer_cycles + self.ramp_cycles
    }

    /// `name=value` lines, one per counter.
    pub fn dump(&self) -> String {
        let values = [
            self.compute_cycles,
            self.transfer_cycles,
            self.ramp_cycles,
            self.flops,
            self.element_hops,
        ];
        Self::DUMP_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Parse a [`dump`](Self::dump). Unknown keys are ignored; every dump key
    /// must be present.
    pub fn parse_dump(text: &str) -> Result<Self, MeshError> {
        let mut seen = HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| MeshError::MalformedLedger(format!("no '=' in {line:?}")))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| MeshError::MalformedLedger(format!("bad value in {line:?}")))?;
            seen.insert(key.trim().to_owned(), value);
        }
        let get = |key: &str| {
            seen.get(key)
                .copied()
                .ok_or_else(|| MeshError::MalformedLedger(format!("missing {key}")))
        };
        Ok(Self {
            compute_cycles: get("compute_cycles")?,
            transfer_cycles: get("transfer_cycles")?,
            ramp_cycles: get("ramp_cycles")?,
            flops: get("flops")?,
            element_hops: get("element_hops")?,
            elements_moved: 0,
        })
    }
}

/// Bytes held under one name on one PE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredArray {
    element_bits: u32,
    bytes: Vec<u8>,
}

impl StoredArray {
    pub fn element_bits(&self) -> u32 {
        self.element_bits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn elements(&self) -> u64 {
        (self.bytes.len() as u64 * 8) / u64::from(self.element_bits)
    }
}

#[derive(Debug, Clone, Default)]
struct PeMemory {
    arrays: BTreeMap<String, StoredArray>,
    used: usize,
}

/// Where a slide left its data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub span: PeSpan,
    pub name: String,
}

/// One slide: move `array` from every PE of `source` by `displacement`,
/// arriving as `destination_name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideDescriptor {
    pub source: PeSpan,
    pub array: String,
    pub destination_name: String,
    pub displacement: Displacement,
    pub element_bits: u32,
}

impl SlideDescriptor {
    pub fn new(
        source: PeSpan,
        array: impl Into<String>,
        displacement: Displacement,
        element_bits: u32,
    ) -> Self {
        let array = array.into();
        Self {
            source,
            destination_name: array.clone(),
            array,
            displacement,
            element_bits,
        }
    }

    pub fn renamed(mut self, destination_name: impl Into<String>) -> Self {
        self.destination_name = destination_name.into();
        self
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    config: MeshConfig,
    memories: Vec<PeMemory>,
    ledger: CycleLedger,
}

impl Mesh {
    pub fn new(config: MeshConfig) -> Result<Self, MeshError> {
        config.validate()?;
        let memories = vec![PeMemory::default(); config.pe_count()];
        Ok(Self {
            config,
            memories,
            ledger: CycleLedger::default(),
        })
    }

    pub fn config(&self) -> &MeshConfig {
        &self.config
    }

    pub fn pe_count(&self) -> usize {
        self.memories.len()
    }

    pub fn ledger_report(&self) -> CycleLedger {
        self.ledger
    }

    fn index(&self, pe: PePos) -> Result<usize, MeshError> {
        self.offset(pe, Displacement::default())
    }

    fn offset(&self, pe: PePos, by: Displacement) -> Result<usize, MeshError> {
        let row = pe.row as i64 + by.dy;
        let col = pe.col as i64 + by.dx;
        let (rows, cols) = (self.config.rows, self.config.cols);
        if row < 0 || col < 0 || row as usize >= rows || col as usize >= cols {
            return Err(MeshError::OffGrid {
                row,
                col,
                rows,
                cols,
            });
        }
        Ok(row as usize * cols + col as usize)
    }

    fn position(&self, index: usize) -> PePos {
        PePos::new(index / self.config.cols, index % self.config.cols)
    }

    pub fn pe_used_bytes(&self, pe: PePos) -> Result<usize, MeshError> {
        Ok(self.memories[self.index(pe)?].used)
    }

    pub fn pe_free_bytes(&self, pe: PePos) -> Result<usize, MeshError> {
        Ok(self.config.local_memory_bytes - self.pe_used_bytes(pe)?)
    }

    /// Place `data` on `pe` under `name`. Host I/O, not booked.
    pub fn pe_store(
        &mut self,
        pe: PePos,
        name: &str,
        element_bits: u32,
        data: Vec<u8>,
    ) -> Result<(), MeshError> {
        if element_bits == 0 || !element_bits.is_multiple_of(8) {
            return Err(MeshError::InvalidElementWidth(element_bits));
        }
        if !(data.len() * 8).is_multiple_of(element_bits as usize) {
            return Err(MeshError::RaggedArray {
                len: data.len(),
                element_bits,
            });
        }
        let idx = self.index(pe)?;
        let capacity = self.config.local_memory_bytes;
        let memory = &mut self.memories[idx];
        if memory.arrays.contains_key(name) {
            return Err(MeshError::ArrayExists {
                pe,
                name: name.to_owned(),
            });
        }
        let available = capacity - memory.used;
        if data.len() > available {
            return Err(MeshError::CapacityExceeded {
                pe,
                requested: data.len(),
                available,
            });
        }
        memory.used += data.len();
        memory.arrays.insert(
            name.to_owned(),
            StoredArray {
                element_bits,
                bytes: data,
            },
        );
        Ok(())
    }

    pub fn pe_load(&self, pe: PePos, name: &str) -> Result<&StoredArray, MeshError> {
        self.memories[self.index(pe)?]
            .arrays
            .get(name)
            .ok_or_else(|| MeshError::MissingArray {
                pe,
                name: name.to_owned(),
            })
    }

    /// Mutable view of an array's bytes; its size cannot change.
    pub fn pe_bytes_mut(&mut self, pe: PePos, name: &str) -> Result<&mut [u8], MeshError> {
        let idx = self.index(pe)?;
        self.memories[idx]
            .arrays
            .get_mut(name)
            .map(|a| a.bytes.as_mut_slice())
            .ok_or_else(|| MeshError::MissingArray {
                pe,
                name: name.to_owned(),
            })
    }

    /// Remove an array, releasing its capacity. Host I/O, not booked.
    pub fn pe_release(&mut self, pe: PePos, name: &str) -> Result<StoredArray, MeshError> {
        let idx = self.index(pe)?;
        let memory = &mut self.memories[idx];
        let array = memory
            .arrays
            .remove(name)
            .ok_or_else(|| MeshError::MissingArray {
                pe,
                name: name.to_owned(),
            })?;
        memory.used -= array.bytes.len();
        Ok(array)
    }

    /// Book one compute phase. PEs run concurrently, so the phase lasts as
    /// long as its busiest PE. Returns the cycles booked.
    pub fn compute_phase<I>(&mut self, flops_per_pe: I) -> u64
    where
        I: IntoIterator<Item = u64>,
    {
        let (max, total) = flops_per_pe
            .into_iter()
            .fold((0, 0), |(max, total), f| (u64::max(max, f), total + f));
        let cycles = ceil(self.config.cycles_per_flop * max);
        self.ledger.compute_cycles += cycles;
        self.ledger.flops += total;
        cycles
    }

    /// Translate one region. See [`Mesh::slide_batch`].
    pub fn slide(&mut self, desc: &SlideDescriptor) -> Result<Region, MeshError> {
        let mut regions = self.slide_batch(std::slice::from_ref(desc))?;
        Ok(regions.pop().expect("one region per descriptor"))
    }

    /// Run several slides as one synchronous phase.
    ///
    /// Every source array is lifted before any destination is written, so a
    /// region may slide onto PEs it currently occupies. Either every slide
    /// succeeds or the mesh is left untouched.
    pub fn slide_batch(&mut self, descs: &[SlideDescriptor]) -> Result<Vec<Region>, MeshError> {
        struct Move {
            from: usize,
            to: usize,
            bytes: usize,
        }
        let capacity = self.config.local_memory_bytes;
        let mut moves = Vec::new();
        let mut sources = HashSet::new();
        let mut arrivals = HashSet::new();
        let mut delta: HashMap<usize, (usize, usize)> = HashMap::new();

        for (d, desc) in descs.iter().enumerate() {
            for pe in desc.source.positions() {
                let from = self.index(pe)?;
                let to = self.offset(pe, desc.displacement)?;
                let array = self.memories[from].arrays.get(&desc.array).ok_or_else(|| {
                    MeshError::MissingArray {
                        pe,
                        name: desc.array.clone(),
                    }
                })?;
                if array.element_bits != desc.element_bits {
                    return Err(MeshError::ElementWidthMismatch {
                        pe,
                        name: desc.array.clone(),
                        expected: desc.element_bits,
                        actual: array.element_bits,
                    });
                }
                if !sources.insert((from, desc.array.as_str())) {
                    return Err(MeshError::DuplicateSource {
                        pe,
                        name: desc.array.clone(),
                    });
                }
                if !arrivals.insert((to, desc.destination_name.as_str())) {
                    return Err(MeshError::DestinationCollision {
                        pe: self.position(to),
                        name: desc.destination_name.clone(),
                    });
                }
                let bytes = array.bytes.len();
                delta.entry(from).or_default().1 += bytes;
                delta.entry(to).or_default().0 += bytes;
                moves.push((d, Move { from, to, bytes }));
            }
        }
        for &(to, name) in &arrivals {
            if self.memories[to].arrays.contains_key(name) && !sources.contains(&(to, name)) {
                return Err(MeshError::ArrayExists {
                    pe: self.position(to),
                    name: name.to_owned(),
                });
            }
        }
        let mut touched: Vec<_> = delta.iter().collect();
        touched.sort_unstable_by_key(|(idx, _)| **idx);
        for (&idx, &(incoming, outgoing)) in touched {
            let after_release = self.memories[idx].used - outgoing;
            if after_release + incoming > capacity {
                return Err(MeshError::CapacityExceeded {
                    pe: self.position(idx),
                    requested: incoming,
                    available: capacity - after_release,
                });
            }
        }

        // Cost: the busiest moving PE sets the phase length.
        let mut busiest: Option<Rational> = None;
        let mut element_hops = 0;
        let mut elements_moved = 0;
        for (d, mv) in &moves {
            let desc = &descs[*d];
            let hops = desc.displacement.hops();
            if hops == 0 {
                continue;
            }
            let elements = (mv.bytes as u64 * 8) / u64::from(desc.element_bits);
            let time = self.config.cycles_per_element(desc.element_bits) * elements + (hops - 1);
            busiest = Some(busiest.map_or(time, |b| b.max(time)));
            element_hops += elements * hops;
            elements_moved += elements;
        }
        if let Some(time) = busiest {
            self.ledger.ramp_cycles += self.config.ramp_cycles;
            self.ledger.transfer_cycles += ceil(time);
        }
        self.ledger.element_hops += element_hops;
        self.ledger.elements_moved += elements_moved;

        let mut lifted = Vec::with_capacity(moves.len());
        for (d, mv) in &moves {
            let memory = &mut self.memories[mv.from];
            let array = memory
                .arrays
                .remove(&descs[*d].array)
                .expect("source validated above");
            memory.used -= mv.bytes;
            lifted.push(array);
        }
        for ((d, mv), array) in moves.iter().zip(lifted) {
            let memory = &mut self.memories[mv.to];
            memory.used += mv.bytes;
            memory
                .arrays
                .insert(descs[*d].destination_name.clone(), array);
        }

        Ok(descs
            .iter()
            .map(|desc| Region {
                span: PeSpan {
                    origin: PePos::new(
                        (desc.source.origin.row as i64 + desc.displacement.dy) as usize,
                        (desc.source.origin.col as i64 + desc.displacement.dx) as usize,
                    ),
                    ..desc.source
                },
                name: desc.destination_name.clone(),
            })
            .collect())
    }
}

/// Floating-point view of a rational, for reports.
pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
