//! The four subcommands. Each returns its full output as text so callers
//! decide where it goes.

use std::fmt::Write as _;

use num_complex::Complex64;
use num_rational::Ratio;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slidefft_core::fft_core::{
    bit_reverse_index, build_permutation, dft_oracle, fft_serial, fft_serial_single,
    relative_error, Precision, SampleVector,
};
use slidefft_core::mesh_sim::{Displacement, Mesh, PePos, PeSpan, SlideDescriptor};
use slidefft_core::perf_model::{self, check_margin, predict_efficiency, reconcile, CostModel};
use slidefft_core::slide_fft::{
    distribute, measure_efficiency, plan_wave, scheduled_flops, slide_fft, transfer_budget,
    SlideFftError, TransferBudget,
};

use crate::options::RunConfig;
use crate::record::{format_decimal, to_csv, BenchRecord};
use crate::{CliError, Status};

/// Text output plus the exit status it implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub body: String,
    pub status: Status,
    pub records: Vec<BenchRecord>,
}

/// `n` samples uniform in `[0,1) x [0,1)` from a ChaCha8 stream seeded with
/// `seed`.
pub fn random_input(n: usize, seed: u64) -> SampleVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| Complex64::new(rng.gen(), rng.gen()))
        .collect();
    SampleVector::new(values).expect("random samples are finite and n is a power of two")
}

fn power_of_two(n: u64) -> Result<usize, CliError> {
    let n = usize::try_from(n).map_err(|_| CliError::Usage(format!("n={n} is too large")))?;
    if n == 0 || !n.is_power_of_two() {
        return Err(CliError::Usage(format!("n={n} is not a power of two")));
    }
    Ok(n)
}

fn single_n(cfg: &RunConfig, default: usize) -> Result<usize, CliError> {
    match &cfg.n {
        None => Ok(default),
        Some(set) if set.0.len() == 1 => power_of_two(set.0[0]),
        Some(_) => Err(CliError::Usage("this subcommand takes a single --n".into())),
    }
}

fn transform_precision(cfg: &RunConfig, default: u32) -> Result<Precision, CliError> {
    let bits = cfg.element_bits.unwrap_or(default);
    Precision::from_element_bits(bits).ok_or_else(|| {
        CliError::Usage(format!(
            "--element-bits {bits} must be 64 or 128 for transforms"
        ))
    })
}

fn serial_reference(x: &SampleVector, precision: Precision) -> SampleVector {
    match precision {
        Precision::Single => fft_serial_single(x),
        Precision::Double => fft_serial(x),
    }
}

struct Suite {
    name: &'static str,
    checks: usize,
    failures: Vec<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn summary(&self, out: &mut String) {
        let verdict = if self.failures.is_empty() {
            "pass"
        } else {
            "FAIL"
        };
        let _ = writeln!(
            out,
            "{:<14} {verdict} ({} checks, {} failed)",
            self.name,
            self.checks,
            self.failures.len()
        );
        for failure in self.failures.iter().take(10) {
            let _ = writeln!(out, "  {failure}");
        }
    }
}

/// Run the oracle, Parseval, permutation and k-consistency suites.
pub fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let sizes = match &cfg.n {
        Some(set) => set
            .0
            .iter()
            .map(|&n| power_of_two(n))
            .collect::<Result<Vec<_>, _>>()?,
        None => (1..=10).map(|m| 1usize << m).collect(),
    };
    let trials = cfg.trials.unwrap_or(10);
    let precision = transform_precision(cfg, 128)?;
    let tolerance = match precision {
        Precision::Single => 1e-4,
        Precision::Double => 1e-9,
    };
    let mut out = String::new();

    let smoke = fft_serial(&SampleVector::impulse(8).expect("8 is a power of two"));
    let rendered: Vec<String> = smoke.iter().map(|c| format!("{}", c.re)).collect();
    let _ = writeln!(out, "impulse n=8 -> [{}]", rendered.join(", "));
    let mut smoke_suite = Suite::new("smoke");
    smoke_suite.check(smoke.iter().all(|&c| c == Complex64::new(1.0, 0.0)), || {
        "impulse spectrum is not all ones".into()
    });

    let mut permutation = Suite::new("permutation");
    let mut oracle = Suite::new("oracle");
    let mut parseval = Suite::new("parseval");
    let mut consistency = Suite::new("k-consistency");
    let mut skipped = Vec::new();

    for &n in &sizes {
        let m = n.trailing_zeros();
        if m >= 1 {
            let table = build_permutation(m).expect("m >= 1");
            let reversal_ok = table
                .final_row()
                .iter()
                .enumerate()
                .all(|(i, &j)| bit_reverse_index(i, m) == Ok(j));
            permutation.check(reversal_ok, || {
                format!("n={n}: final row is not the bit reversal")
            });
            for (p, row) in (1..).zip(table.rows()) {
                let mut sorted = row.clone();
                sorted.sort_unstable();
                let lookup = table.lookup(p).expect("row exists");
                let ok = sorted.iter().copied().eq(0..n)
                    && row.iter().enumerate().all(|(i, &v)| lookup[v] == i);
                permutation.check(ok, || format!("n={n}: row {p} is not a permutation"));
            }
        }
        for trial in 0..trials {
            let seed = cfg.seed().wrapping_add(trial);
            let x = random_input(n, seed);
            let spectrum = fft_serial(&x);
            let reference = dft_oracle(&x).expect("finite input");
            let err = relative_error(&spectrum, &reference);
            oracle.check(err < 1e-9, || {
                format!("n={n} seed={seed}: relative error {err:e}")
            });

            let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let freq: f64 = spectrum.iter().map(|v| v.norm_sqr()).sum();
            let rel = (freq - n as f64 * time).abs() / (n as f64 * time);
            parseval.check(rel < 1e-9, || {
                format!("n={n} seed={seed}: Parseval mismatch {rel:e}")
            });

            let expected = serial_reference(&x, precision);
            for k in 0..=m {
                if cfg
                    .k
                    .as_ref()
                    .is_some_and(|set| !set.0.contains(&u64::from(k)))
                {
                    continue;
                }
                let mut mesh = Mesh::new(cfg.mesh_config(1, 1 << k))
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                let layout =
                    match plan_wave(n, k, precision.element_bits(), &mesh, PePos::new(0, 0)) {
                        Ok(layout) => layout.with_strategy(cfg.strategy()),
                        Err(SlideFftError::Infeasible { .. }) => {
                            if trial == 0 {
                                skipped.push(format!("n={n} k={k}"));
                            }
                            continue;
                        }
                        Err(e) => return Err(CliError::Usage(e.to_string())),
                    };
                let result =
                    distribute(&x, &layout, &mut mesh).and_then(|()| slide_fft(&mut mesh, &layout));
                let ledger = mesh.ledger_report();
                let ok = match &result {
                    Ok(got) => {
                        got == &expected
                            && relative_error(got, &reference) < tolerance
                            && ledger.flops == scheduled_flops(n)
                            && ledger.elements_moved == transfer_budget(&layout).elements_moved()
                    }
                    Err(_) => false,
                };
                consistency.check(ok, || match &result {
                    Ok(_) => format!("n={n} k={k} seed={seed}: output or ledger differs from the serial transform"),
                    Err(e) => format!("n={n} k={k} seed={seed}: {e}"),
                });
            }
        }
    }

    let suites = [smoke_suite, permutation, oracle, parseval, consistency];
    for suite in &suites {
        suite.summary(&mut out);
    }
    if !skipped.is_empty() {
        let _ = writeln!(out, "skipped infeasible waves: {}", skipped.join(", "));
    }
    let passed = suites.iter().all(|s| s.failures.is_empty());
    let _ = writeln!(out, "verify: {}", if passed { "PASS" } else { "FAIL" });
    Ok(Report {
        body: out,
        status: if passed {
            Status::Success
        } else {
            Status::VerificationFailure
        },
        records: Vec::new(),
    })
}

/// Single-hop slide of `elements` elements on each of `pes` PEs.
pub fn slide_point(
    cfg: &RunConfig,
    pes: u64,
    elements: u64,
    element_bits: u32,
    rng: &mut ChaCha8Rng,
) -> BenchRecord {
    let cols = pes as usize + 1;
    let mut mesh = match Mesh::new(cfg.mesh_config(1, cols)) {
        Ok(mesh) => mesh,
        Err(e) => {
            return BenchRecord::failed(
                pes,
                elements,
                format!("error:{}", e.to_string().replace(',', ";")),
            )
        }
    };
    let bytes_per_pe = elements as usize * element_bits as usize / 8;
    let mut sent = Vec::with_capacity(pes as usize);
    for col in 0..pes as usize {
        let mut data = vec![0; bytes_per_pe];
        rng.fill_bytes(&mut data);
        if mesh
            .pe_store(PePos::new(0, col), "a", element_bits, data.clone())
            .is_err()
        {
            return BenchRecord::failed(pes, elements, "capacity_exceeded");
        }
        sent.push(data);
    }
    let desc = SlideDescriptor::new(
        PeSpan::row_run(PePos::new(0, 0), pes as usize),
        "a",
        Displacement::east(1),
        element_bits,
    );
    if mesh.slide(&desc).is_err() {
        return BenchRecord::failed(pes, elements, "capacity_exceeded");
    }
    let conserved = sent.iter().enumerate().all(|(col, data)| {
        mesh.pe_load(PePos::new(0, col + 1), "a")
            .map(|a| a.bytes() == data.as_slice())
            == Ok(true)
    });
    let ledger = mesh.ledger_report();
    BenchRecord {
        pe_count: pes,
        elements_per_pe: elements,
        total_elements: pes * elements,
        total_cycles: Some(ledger.total_cycles()),
        transfer_cycles: Some(ledger.transfer_cycles),
        compute_cycles: Some(ledger.compute_cycles),
        flops: Some(ledger.flops),
        eta_measured: None,
        eta_predicted: None,
        status: if conserved { "ok" } else { "corrupted" }.into(),
    }
}

pub fn bench_slide(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut pes = cfg
        .pes
        .clone()
        .map(|s| s.0)
        .unwrap_or_else(|| vec![8, 16, 32]);
    let mut elements = cfg
        .elements
        .clone()
        .map(|s| s.0)
        .unwrap_or_else(|| (1..=500).collect());
    let element_bits = cfg.element_bits.unwrap_or(32);
    if element_bits == 0 || !element_bits.is_multiple_of(8) {
        return Err(CliError::Usage(format!(
            "--element-bits {element_bits} must be a positive multiple of 8"
        )));
    }
    if pes.contains(&0) {
        return Err(CliError::Usage("PE counts must be at least 1".into()));
    }
    pes.sort_unstable();
    pes.dedup();
    elements.sort_unstable();
    elements.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let mut records = Vec::with_capacity(pes.len() * elements.len());
    for &p in &pes {
        for &e in &elements {
            records.push(slide_point(cfg, p, e, element_bits, &mut rng));
        }
    }
    let status = sweep_status(&records);
    let body = if cfg.csv() {
        to_csv(&records)
    } else {
        slide_table(&records)
    };
    Ok(Report {
        body,
        status,
        records,
    })
}

fn sweep_status(records: &[BenchRecord]) -> Status {
    if records
        .iter()
        .any(|r| r.status == "corrupted" || r.status == "mismatch")
    {
        Status::VerificationFailure
    } else if records.iter().any(|r| !r.is_ok()) {
        Status::Infeasible
    } else {
        Status::Success
    }
}

fn slide_table(records: &[BenchRecord]) -> String {
    let mut out = format!(
        "{:>8} {:>10} {:>12} {:>12} {:>12}  status\n",
        "pes", "elems/pe", "total_elems", "cycles", "cyc/elem"
    );
    for r in records {
        let _ = writeln!(
            out,
            "{:>8} {:>10} {:>12} {:>12} {:>12}  {}",
            r.pe_count,
            r.elements_per_pe,
            r.total_elements,
            r.total_cycles.map(|c| c.to_string()).unwrap_or_default(),
            r.cycles_per_element()
                .map(|c| format_decimal(c, 6))
                .unwrap_or_default(),
            r.status
        );
    }
    out
}

/// One transform per wave exponent, with measured and predicted efficiency.
pub struct FftSweep {
    pub records: Vec<BenchRecord>,
    pub budgets: Vec<(u32, Option<TransferBudget>, u64)>,
}

pub fn fft_sweep(cfg: &RunConfig) -> Result<FftSweep, CliError> {
    let n = single_n(cfg, 1024)?;
    let m = n.trailing_zeros();
    let precision = transform_precision(cfg, 64)?;
    let ks: Vec<u32> = match &cfg.k {
        Some(set) => {
            let mut ks = set
                .0
                .iter()
                .map(|&k| u32::try_from(k).ok().filter(|&k| k <= m))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| CliError::Usage(format!("every k must be at most log2(n) = {m}")))?;
            ks.sort_unstable();
            ks.dedup();
            ks
        }
        None => (0..=m).collect(),
    };
    let model = cost_model(cfg)?;
    let predicted = if m >= 1 {
        Some(predict_efficiency(&model, n, m).map_err(|e| CliError::Usage(e.to_string()))?)
    } else {
        None
    };
    let x = random_input(n, cfg.seed());
    let expected = serial_reference(&x, precision);

    let mut records = Vec::with_capacity(ks.len());
    let mut budgets = Vec::with_capacity(ks.len());
    for k in ks {
        let pes = 1u64 << k;
        let epp = (n >> k) as u64;
        let mut mesh =
            Mesh::new(cfg.mesh_config(1, 1 << k)).map_err(|e| CliError::Usage(e.to_string()))?;
        let layout = match plan_wave(n, k, precision.element_bits(), &mesh, PePos::new(0, 0)) {
            Ok(layout) => layout.with_strategy(cfg.strategy()),
            Err(SlideFftError::Infeasible { minimal_k, .. }) => {
                let status = match minimal_k {
                    Some(min) => format!("infeasible:min_k={min}"),
                    None => "infeasible".to_owned(),
                };
                let mut record = BenchRecord::failed(pes, epp, status);
                record.total_elements = n as u64;
                records.push(record);
                budgets.push((k, None, 0));
                continue;
            }
            Err(e) => return Err(CliError::Usage(e.to_string())),
        };
        let result =
            distribute(&x, &layout, &mut mesh).and_then(|()| slide_fft(&mut mesh, &layout));
        let ledger = mesh.ledger_report();
        let status = match result {
            Ok(spectrum) if spectrum == expected => "ok".to_owned(),
            Ok(_) => "mismatch".to_owned(),
            Err(e) => format!("error:{}", e.to_string().replace(',', ";")),
        };
        let eta_measured = measure_efficiency(&ledger).ok().map(|e| e.eta_exact);
        records.push(BenchRecord {
            pe_count: pes,
            elements_per_pe: epp,
            total_elements: n as u64,
            total_cycles: Some(ledger.total_cycles()),
            transfer_cycles: Some(ledger.transfer_cycles),
            compute_cycles: Some(ledger.compute_cycles),
            flops: Some(ledger.flops),
            eta_measured,
            eta_predicted: predicted.map(|p| p.eta_exact),
            status,
        });
        budgets.push((k, Some(transfer_budget(&layout)), ledger.elements_moved));
    }
    Ok(FftSweep { records, budgets })
}

pub fn bench_fft(cfg: &RunConfig) -> Result<Report, CliError> {
    let sweep = fft_sweep(cfg)?;
    let status = sweep_status(&sweep.records);
    let body = if cfg.csv() {
        to_csv(&sweep.records)
    } else {
        fft_table(&sweep)
    };
    Ok(Report {
        body,
        status,
        records: sweep.records,
    })
}

fn fft_table(sweep: &FftSweep) -> String {
    let mut out = format!(
        "{:>3} {:>6} {:>8} {:>10} {:>12} {:>10} {:>10} {:>9} {:>9} {:>8} {:>9} {:>9} {:>10}  status\n",
        "k", "pes", "elems/pe", "cycles", "cyc/elem", "transfer", "compute", "eta", "eta_pred", "dev", "moved", "budget", "geometric"
    );
    for (r, (k, budget, moved)) in sweep.records.iter().zip(&sweep.budgets) {
        let dec = |v: Option<Ratio<u64>>| v.map(|v| format_decimal(v, 6)).unwrap_or_default();
        let deviation = match (r.eta_measured, r.eta_predicted) {
            (Some(meas), Some(pred)) => {
                let pred = perf_model::to_f64(pred);
                format!("{:.4}", (perf_model::to_f64(meas) - pred).abs() / pred)
            }
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "{:>3} {:>6} {:>8} {:>10} {:>12} {:>10} {:>10} {:>9} {:>9} {:>8} {:>9} {:>9} {:>10}  {}",
            k,
            r.pe_count,
            r.elements_per_pe,
            r.total_cycles.map(|c| c.to_string()).unwrap_or_default(),
            dec(r.cycles_per_element()),
            r.transfer_cycles.map(|c| c.to_string()).unwrap_or_default(),
            r.compute_cycles.map(|c| c.to_string()).unwrap_or_default(),
            dec(r.eta_measured),
            dec(r.eta_predicted),
            deviation,
            if budget.is_some() { moved.to_string() } else { String::new() },
            budget.map(|b| b.elements_moved().to_string()).unwrap_or_default(),
            budget.map(|b| b.geometric_estimate.to_string()).unwrap_or_default(),
            r.status
        );
    }
    out
}

fn cost_model(cfg: &RunConfig) -> Result<CostModel, CliError> {
    let a = cfg.a.map(|r| r.0).unwrap_or_else(|| Ratio::from_integer(2));
    let b = cfg.b.map(|r| r.0).unwrap_or_else(|| Ratio::from_integer(3));
    Ok(CostModel::new(a, b)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .doubled(cfg.doubled_transfer.unwrap_or(false)))
}

/// Evaluate the closed-form model for `a`, `b` and `m`.
pub fn predict(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cost_model(cfg)?;
    let m = match (cfg.m, &cfg.n) {
        (Some(m), _) => m,
        (None, Some(_)) => single_n(cfg, 0)?.trailing_zeros(),
        (None, None) => return Err(CliError::Usage("predict needs --m or --n".into())),
    };
    if m == 0 || m >= usize::BITS {
        return Err(CliError::Usage(format!(
            "m={m} must be between 1 and {}",
            usize::BITS - 1
        )));
    }
    let threshold = cfg
        .threshold
        .unwrap_or(perf_model::DEFAULT_MARGIN_THRESHOLD);
    let report =
        predict_efficiency(&model, 1usize << m, m).map_err(|e| CliError::Usage(e.to_string()))?;
    let margin = check_margin(&model, m, threshold).map_err(|e| CliError::Usage(e.to_string()))?;
    let verdict = if margin.pass { "pass" } else { "fail" };
    let body = if cfg.csv() {
        format!(
            "a,b,m,alpha,eta,eta_first_order,margin,margin_status,flops\n{},{},{},{},{},{:.6},{},{},{}\n",
            model.a,
            model.b,
            m,
            format_decimal(report.alpha, 6),
            format_decimal(report.eta_exact, 6),
            report.eta_first_order,
            format_decimal(margin.value, 6),
            verdict,
            report.flops
        )
    } else {
        format!(
            "a={} b={} m={} doubled_transfer={}\nalpha={} ({})\neta={} ({})\neta_first_order={:.6}\nmargin={} ({}) {verdict} (threshold {threshold})\nflops={}\n",
            model.a,
            model.b,
            m,
            model.doubled_transfer,
            format_decimal(report.alpha, 6),
            report.alpha,
            format_decimal(report.eta_exact, 6),
            report.eta_exact,
            report.eta_first_order,
            format_decimal(margin.value, 6),
            margin.value,
            report.flops
        )
    };
    Ok(Report {
        body,
        status: Status::Success,
        records: Vec::new(),
    })
}

/// Relative deviation of every feasible row's measured efficiency from the
/// closed-form prediction.
pub fn deviations(records: &[BenchRecord]) -> Vec<(u64, f64)> {
    records
        .iter()
        .filter_map(|r| {
            let meas = perf_model::to_f64(r.eta_measured?);
            let pred = r.eta_predicted?;
            let report = perf_model::EfficiencyReport {
                eta: perf_model::to_f64(pred),
                eta_exact: pred,
                eta_first_order: 0.0,
                alpha: Ratio::from_integer(0),
                m: 0,
                flops: 0,
            };
            Some((r.pe_count, reconcile(&report, meas)))
        })
        .collect()
}
