//! Fit the fixed-overhead-plus-per-byte cost structure of measured transfer
//! times and suggest config overrides that reproduce it.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bench::sig4;
use crate::config::SimConfig;
use crate::driver::DriverKind;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("driver {driver} has {points} samples; at least 2 distinct sizes required")]
    InsufficientPoints { driver: String, points: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("no samples found")]
    Empty,
}

/// One measured sample: total transfer time for a payload size.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub driver: DriverKind,
    pub size_bytes: u64,
    pub total_ns: u64,
}

/// Least-squares line per driver: `time = intercept + slope * size`.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationFit {
    pub driver: DriverKind,
    pub intercept_ns: f64,
    pub slope_ns_per_byte: f64,
    /// Root-mean-square residual of the fit, in ns.
    pub residual_ns: f64,
}

/// Parse `driver,size,time` CSV rows (header optional, `#` comments).
pub fn parse_samples(text: &str) -> Result<Vec<Sample>, CalibrateError> {
    let mut samples = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.to_lowercase().starts_with("driver") {
            continue;
        }
        let bad = |reason: String| CalibrateError::Parse {
            line: lineno + 1,
            reason,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 3 {
            return Err(bad(format!("expected driver,size,time, got {line:?}")));
        }
        let driver = match f[0] {
            "user-poll" | "poll" => DriverKind::UserPoll,
            "user-scheduled" | "scheduled" => DriverKind::UserScheduled,
            "kernel-interrupt" | "kernel" => DriverKind::KernelInterrupt,
            other => return Err(bad(format!("unknown driver {other:?}"))),
        };
        let size_bytes: u64 = f[1]
            .parse()
            .map_err(|_| bad(format!("bad size {:?}", f[1])))?;
        let total_ns: f64 = f[2]
            .parse()
            .map_err(|_| bad(format!("bad time {:?}", f[2])))?;
        samples.push(Sample {
            driver,
            size_bytes,
            total_ns: total_ns.round() as u64,
        });
    }
    if samples.is_empty() {
        return Err(CalibrateError::Empty);
    }
    Ok(samples)
}

type DriverPoints = (DriverKind, Vec<(f64, f64)>);

/// Ordinary least squares per driver over (size, time).
pub fn fit(samples: &[Sample]) -> Result<Vec<CalibrationFit>, CalibrateError> {
    let mut by_driver: BTreeMap<&'static str, DriverPoints> = BTreeMap::new();
    for s in samples {
        by_driver
            .entry(s.driver.as_str())
            .or_insert_with(|| (s.driver, Vec::new()))
            .1
            .push((s.size_bytes as f64, s.total_ns as f64));
    }
    let mut fits = Vec::new();
    for (_, (driver, points)) in by_driver {
        let mut sizes: Vec<u64> = points.iter().map(|(x, _)| *x as u64).collect();
        sizes.sort_unstable();
        sizes.dedup();
        if sizes.len() < 2 {
            return Err(CalibrateError::InsufficientPoints {
                driver: driver.to_string(),
                points: sizes.len(),
            });
        }
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|(x, _)| x).sum();
        let sy: f64 = points.iter().map(|(_, y)| y).sum();
        let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
        let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
        let denom = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / denom;
        let intercept = (sy - slope * sx) / n;
        let rss: f64 = points
            .iter()
            .map(|(x, y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum();
        fits.push(CalibrationFit {
            driver,
            intercept_ns: intercept,
            slope_ns_per_byte: slope,
            residual_ns: (rss / n).sqrt(),
        });
    }
    Ok(fits)
}

fn fit_for(fits: &[CalibrationFit], driver: DriverKind) -> Option<&CalibrationFit> {
    fits.iter().find(|f| f.driver == driver)
}

/// Config keys that, under the closed-form cost model, reproduce the fitted
/// slopes and intercepts: the polling slope in excess of the stream rate is
/// application preparation; the kernel slope in excess of the polling slope
/// is the two virtual/physical copies; the kernel intercept in excess of the
/// user intercept is split over the two per-direction request overheads.
pub fn suggest_overrides(fits: &[CalibrationFit], cfg: &SimConfig) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let stream_npb = cfg.stream_rate().time_ns(1_000_000) as f64 / 1e6;
    if let Some(poll) = fit_for(fits, DriverKind::UserPoll) {
        let prep = poll.slope_ns_per_byte - stream_npb;
        if prep > 0.0 {
            out.push(("prepare_cost_ns_per_byte".to_string(), format!("{:.3}", (prep * 1000.0).round() / 1000.0)));
        }
        let submit = cfg.syscall_overhead_ns + cfg.dma_setup_ns;
        let user_fixed = 2 * submit + cfg.sg_descriptor_fetch_ns;
        let extra = poll.intercept_ns - user_fixed as f64;
        if extra > 0.0 {
            out.push((
                "syscall_overhead_ns".to_string(),
                format!("{}", cfg.syscall_overhead_ns + (extra / 2.0).round() as u64),
            ));
        }
        if let Some(kernel) = fit_for(fits, DriverKind::KernelInterrupt) {
            let copy_npb = kernel.slope_ns_per_byte - poll.slope_ns_per_byte + prep.max(0.0);
            if copy_npb > 0.0 {
                // Two copies per loop-back session: in before TX, out after RX.
                let bpns = 2.0 / copy_npb;
                out.push(("memcpy_bandwidth_bpns".to_string(), format!("{:.3}", (bpns * 1000.0).round() / 1000.0)));
            }
            let kernel_fixed = kernel.intercept_ns - poll.intercept_ns;
            if kernel_fixed > 0.0 {
                let per_request = (kernel_fixed / 2.0 - cfg.irq_latency_ns as f64).max(0.0);
                out.push((
                    "kernel_request_overhead_ns".to_string(),
                    format!("{}", per_request.round() as u64),
                ));
            }
        }
    }
    if let Some(sched) = fit_for(fits, DriverKind::UserScheduled) {
        if let Some(poll) = fit_for(fits, DriverKind::UserPoll) {
            // Two quantized completions per session, ~q/2 expected lateness each.
            let delta = sched.intercept_ns - poll.intercept_ns;
            if delta > 0.0 {
                out.push(("sched_quantum_ns".to_string(), format!("{}", delta.round() as u64)));
            }
        }
    }
    out
}

/// Human-readable calibration report.
pub fn render_report(fits: &[CalibrationFit], overrides: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str("driver,intercept_ns,slope_ns_per_byte,residual_ns\n");
    for f in fits {
        out.push_str(&format!(
            "{},{},{},{}\n",
            f.driver,
            sig4(f.intercept_ns),
            sig4(f.slope_ns_per_byte),
            sig4(f.residual_ns)
        ));
    }
    if !overrides.is_empty() {
        out.push_str("# suggested config overrides\n");
        for (k, v) in overrides {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_two_point_fit_recovers_line_exactly() {
        let samples = vec![
            Sample { driver: DriverKind::UserPoll, size_bytes: 100, total_ns: 1_500 + 100 * 2 },
            Sample { driver: DriverKind::UserPoll, size_bytes: 10_000, total_ns: 1_500 + 10_000 * 2 },
        ];
        let fits = fit(&samples).unwrap();
        assert_eq!(fits.len(), 1);
        assert!((fits[0].slope_ns_per_byte - 2.0).abs() < 1e-9);
        assert!((fits[0].intercept_ns - 1500.0).abs() < 1e-6);
        assert!(fits[0].residual_ns < 1e-6);
    }

    #[test]
    fn reported_per_byte_ordering_recovers_from_table_style_input() {
        // Per-byte figures at 100 KB scale: 5.4, 7.2 and 11 ns/byte.
        let mk = |driver, npb: f64| {
            [50_000u64, 100_000, 200_000].map(|size| Sample {
                driver,
                size_bytes: size,
                total_ns: (npb * size as f64) as u64 + 1_000,
            })
        };
        let mut samples = Vec::new();
        samples.extend(mk(DriverKind::UserPoll, 5.4));
        samples.extend(mk(DriverKind::UserScheduled, 7.2));
        samples.extend(mk(DriverKind::KernelInterrupt, 11.0));
        let fits = fit(&samples).unwrap();
        let slope = |d: DriverKind| fits.iter().find(|f| f.driver == d).unwrap().slope_ns_per_byte;
        assert!(slope(DriverKind::UserPoll) < slope(DriverKind::UserScheduled));
        assert!(slope(DriverKind::UserScheduled) < slope(DriverKind::KernelInterrupt));
    }

    #[test]
    fn perturbed_points_fit_within_ten_percent() {
        // +-5% alternating noise around a 1500 + 2x line.
        let sizes = [1_000u64, 5_000, 20_000, 80_000, 300_000, 900_000];
        let samples: Vec<Sample> = sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| {
                let clean = 1_500.0 + 2.0 * size as f64;
                let noisy = clean * if i % 2 == 0 { 1.05 } else { 0.95 };
                Sample {
                    driver: DriverKind::UserPoll,
                    size_bytes: size,
                    total_ns: noisy as u64,
                }
            })
            .collect();
        let fits = fit(&samples).unwrap();
        let f = &fits[0];
        assert!((f.slope_ns_per_byte - 2.0).abs() / 2.0 < 0.10, "slope {}", f.slope_ns_per_byte);
        assert!(f.residual_ns > 0.0);
    }

    #[test]
    fn single_size_is_insufficient() {
        let samples = vec![
            Sample { driver: DriverKind::UserPoll, size_bytes: 100, total_ns: 500 },
            Sample { driver: DriverKind::UserPoll, size_bytes: 100, total_ns: 510 },
        ];
        let err = fit(&samples).unwrap_err();
        assert!(matches!(err, CalibrateError::InsufficientPoints { .. }));
    }

    #[test]
    fn sample_csv_parses_with_aliases() {
        let text = "# measured\ndriver,size,time\npoll,8,1604\npoll,4096,10248\nkernel,8,32726\nkernel,4096,40000\n";
        let samples = parse_samples(text).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(samples[0].driver, DriverKind::UserPoll);
        assert_eq!(samples[2].driver, DriverKind::KernelInterrupt);
    }
}
