//! Benchmark rows and their CSV encoding.

use std::fmt::Write as _;

use num_rational::Ratio;

pub const CSV_HEADER: &str = "pe_count,elements_per_pe,total_elements,total_cycles,cycles_per_element,transfer_cycles,compute_cycles,flops,eta_measured,eta_predicted,status";

/// Measured numbers of one sweep point. Unset fields are written empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRecord {
    pub pe_count: u64,
    pub elements_per_pe: u64,
    pub total_elements: u64,
    pub total_cycles: Option<u64>,
    pub transfer_cycles: Option<u64>,
    pub compute_cycles: Option<u64>,
    pub flops: Option<u64>,
    pub eta_measured: Option<Ratio<u64>>,
    pub eta_predicted: Option<Ratio<u64>>,
    pub status: String,
}

impl BenchRecord {
    pub fn failed(pe_count: u64, elements_per_pe: u64, status: impl Into<String>) -> Self {
        Self {
            pe_count,
            elements_per_pe,
            total_elements: pe_count * elements_per_pe,
            total_cycles: None,
            transfer_cycles: None,
            compute_cycles: None,
            flops: None,
            eta_measured: None,
            eta_predicted: None,
            status: status.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Wall-clock cycles per element held by one PE.
    pub fn cycles_per_element(&self) -> Option<Ratio<u64>> {
        let total = self.total_cycles?;
        (self.elements_per_pe > 0).then(|| Ratio::new(total, self.elements_per_pe))
    }

    pub fn csv_row(&self) -> String {
        let int = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        let dec = |v: Option<Ratio<u64>>| v.map(|r| format_decimal(r, 6)).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.pe_count,
            self.elements_per_pe,
            self.total_elements,
            int(self.total_cycles),
            dec(self.cycles_per_element()),
            int(self.transfer_cycles),
            int(self.compute_cycles),
            int(self.flops),
            dec(self.eta_measured),
            dec(self.eta_predicted),
            self.status,
        )
    }
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for record in records {
        out.push_str(&record.csv_row());
        out.push('\n');
    }
    out
}

/// Exact decimal rendering with `places` digits, rounding half up.
pub fn format_decimal(r: Ratio<u64>, places: u32) -> String {
    let scale = 10u128.pow(places);
    let num = u128::from(*r.numer()) * scale;
    let den = u128::from(*r.denom());
    let scaled = (num + den / 2) / den;
    let whole = scaled / scale;
    let frac = scaled % scale;
    let mut s = whole.to_string();
    if places > 0 {
        let _ = write!(s, ".{:0width$}", frac, width = places as usize);
    }
    s
}
