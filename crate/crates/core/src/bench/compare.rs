//! Side-by-side comparison of variants with the acceptance inequalities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::study::{PointStats, StatsSummary};
use super::BenchError;
use crate::enkm::Variant;

const VARIANTS: [Variant; 3] = [Variant::Full, Variant::RbBiased, Variant::RbAdjusted];

/// One sweep point: per-iteration mean (H) and standard deviation (S) of
/// the relative error for each variant, and the checks that apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub ensemble_size: usize,
    pub noise_level: f64,
    pub basis_size: Option<usize>,
    /// `h[variant][n]`, `s[variant][n]`
    pub h: BTreeMap<String, Vec<f64>>,
    pub s: BTreeMap<String, Vec<f64>>,
    /// `|mean estimate - mu*|_inf` per variant.
    pub mean_estimate_error: BTreeMap<String, f64>,
    /// Final H of adjusted at most a fifth of biased.
    pub adjusted_vs_biased: Option<bool>,
    /// Final H of adjusted at most ten times full order.
    pub adjusted_vs_full: Option<bool>,
    /// Adjusted mean estimate strictly closer to `mu*` than biased.
    pub estimate_ordering: Option<bool>,
    /// Variant pairs with identical final errors.
    pub suspicious: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictTable {
    pub rows: Vec<VerdictRow>,
}

impl VerdictTable {
    /// Per-iteration H/S table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ensemble_size,noise_level,basis_size,variant,iteration,h,s\n");
        for r in &self.rows {
            for (v, h) in &r.h {
                for (n, hv) in h.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{:e},{},{},{},{:e},{:e}\n",
                        r.ensemble_size,
                        r.noise_level,
                        r.basis_size.map(|b| b.to_string()).unwrap_or_default(),
                        v,
                        n,
                        hv,
                        r.s[v][n]
                    ));
                }
            }
        }
        out
    }

    /// Plain-text rendering with final values and flags.
    pub fn render(&self) -> String {
        let flag = |f: Option<bool>| match f {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "-",
        };
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "J={} noise={:e} basis={}\n",
                r.ensemble_size,
                r.noise_level,
                r.basis_size.map(|b| b.to_string()).unwrap_or_else(|| "-".into())
            ));
            for (v, h) in &r.h {
                out.push_str(&format!(
                    "  {v:<12} H_final={:.3e} S_final={:.3e} |E-mu*|_inf={:.3e}\n",
                    h.last().copied().unwrap_or(f64::NAN),
                    r.s[v].last().copied().unwrap_or(f64::NAN),
                    r.mean_estimate_error[v]
                ));
            }
            out.push_str(&format!(
                "  adjusted<=biased/5: {}  adjusted<=10*full: {}  estimate ordering: {}\n",
                flag(r.adjusted_vs_biased),
                flag(r.adjusted_vs_full),
                flag(r.estimate_ordering)
            ));
            for s in &r.suspicious {
                out.push_str(&format!("  suspicious: {s}\n"));
            }
        }
        out
    }
}

/// Pads an iteration trace to `len` by repeating its last value.
fn padded(v: Vec<f64>, len: usize) -> Vec<f64> {
    let last = *v.last().expect("non-empty trace");
    let mut v = v;
    v.resize(len, last);
    v
}

/// Aligns the points of one or more studies by (ensemble size, noise
/// level, surrogate size) and evaluates the comparison inequalities.
/// Studies must share problem, `mu*` and replicate count.
pub fn compare_variants(results: &[StatsSummary]) -> Result<VerdictTable, BenchError> {
    let first = results.first().ok_or_else(|| BenchError::Misaligned("no results to compare".into()))?;
    for r in results {
        if r.problem != first.problem || r.mu_star != first.mu_star || r.replicates != first.replicates {
            return Err(BenchError::Misaligned("studies differ in problem, mu* or replicate count".into()));
        }
    }
    let mu_star = &first.mu_star;
    let all: Vec<&PointStats> = results.iter().flat_map(|r| &r.points).collect();
    let mut keys: Vec<(usize, u64, Option<usize>)> = Vec::new();
    for p in &all {
        if p.variant != Variant::Full {
            keys.push((p.ensemble_size, p.noise_level.to_bits(), p.basis_size));
        }
    }
    for p in &all {
        if p.variant == Variant::Full && !keys.iter().any(|k| k.0 == p.ensemble_size && k.1 == p.noise_level.to_bits()) {
            keys.push((p.ensemble_size, p.noise_level.to_bits(), None));
        }
    }
    keys.sort_by(|a, b| (a.0, f64::from_bits(a.1), a.2).partial_cmp(&(b.0, f64::from_bits(b.1), b.2)).expect("finite noise levels"));
    keys.dedup();

    let mut rows = Vec::new();
    for (j, bits, basis) in keys {
        let noise = f64::from_bits(bits);
        let mut cells: BTreeMap<Variant, &PointStats> = BTreeMap::new();
        for p in &all {
            let matches = p.ensemble_size == j
                && p.noise_level.to_bits() == bits
                && (p.variant == Variant::Full || p.basis_size == basis);
            if matches && cells.insert(p.variant, p).is_some() {
                return Err(BenchError::Misaligned(format!(
                    "duplicate {} results at J={j}, noise={noise:e}",
                    p.variant.as_str()
                )));
            }
        }
        let has_rb = cells.keys().any(|v| *v != Variant::Full);
        for v in [Variant::RbBiased, Variant::RbAdjusted] {
            let present_elsewhere = all.iter().any(|p| p.variant == v);
            if has_rb && present_elsewhere && !cells.contains_key(&v) {
                return Err(BenchError::Misaligned(format!(
                    "{} has no result at J={j}, noise={noise:e}, basis={basis:?}",
                    v.as_str()
                )));
            }
        }
        let len = cells.values().map(|p| p.iterations.len()).max().unwrap_or(0);
        let mut h = BTreeMap::new();
        let mut s = BTreeMap::new();
        let mut est = BTreeMap::new();
        for v in VARIANTS {
            if let Some(p) = cells.get(&v) {
                h.insert(v.as_str().to_string(), padded(p.iterations.iter().map(|i| i.mean).collect(), len));
                s.insert(v.as_str().to_string(), padded(p.iterations.iter().map(|i| i.std).collect(), len));
                est.insert(v.as_str().to_string(), p.mean_estimate_error(mu_star));
            }
        }
        let final_h = |v: Variant| cells.get(&v).map(|p| p.final_stats().mean);
        let adjusted = final_h(Variant::RbAdjusted);
        let adjusted_vs_biased = adjusted.zip(final_h(Variant::RbBiased)).map(|(a, b)| a <= b / 5.0);
        let adjusted_vs_full = adjusted.zip(final_h(Variant::Full)).map(|(a, f)| a <= 10.0 * f);
        let estimate_ordering = cells
            .get(&Variant::RbAdjusted)
            .zip(cells.get(&Variant::RbBiased))
            .map(|(a, b)| a.mean_estimate_error(mu_star) < b.mean_estimate_error(mu_star));
        let mut suspicious = Vec::new();
        let present: Vec<(&Variant, &&PointStats)> = cells.iter().collect();
        for (i, (va, pa)) in present.iter().enumerate() {
            for (vb, pb) in &present[i + 1..] {
                if pa.final_errors == pb.final_errors {
                    suspicious.push(format!("{} and {} have identical final errors", va.as_str(), vb.as_str()));
                }
            }
        }
        rows.push(VerdictRow {
            ensemble_size: j,
            noise_level: noise,
            basis_size: basis,
            h,
            s,
            mean_estimate_error: est,
            adjusted_vs_biased,
            adjusted_vs_full,
            estimate_ordering,
            suspicious,
        });
    }
    Ok(VerdictTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::stats::IterationStats;
    use crate::bench::Problem;

    fn cell(variant: Variant, errors: &[f64], basis: Option<usize>) -> PointStats {
        PointStats {
            ensemble_size: 10,
            noise_level: 1e-3,
            sigma: 1e-3,
            basis_size: basis,
            variant,
            iterations: vec![IterationStats::from_sample(&[1.0; 2]), IterationStats::from_sample(errors)],
            final_errors: errors.to_vec(),
            estimates: errors.iter().map(|e| vec![1.0 + e]).collect(),
            iteration_counts: vec![1; errors.len()],
            run_files: Vec::new(),
        }
    }

    fn summary(points: Vec<PointStats>) -> StatsSummary {
        StatsSummary { problem: Problem::TaylorGreen, mu_star: vec![1.0], replicates: 2, points, timings: BTreeMap::new() }
    }

    #[test]
    fn flags_follow_the_inequalities() {
        let s = summary(vec![
            cell(Variant::Full, &[1e-4, 1e-4], None),
            cell(Variant::RbBiased, &[1e-2, 1e-2], Some(5)),
            cell(Variant::RbAdjusted, &[1e-3, 1e-3], Some(5)),
        ]);
        let t = compare_variants(&[s]).unwrap();
        assert_eq!(t.rows.len(), 1);
        let r = &t.rows[0];
        assert_eq!(r.adjusted_vs_biased, Some(true));
        assert_eq!(r.adjusted_vs_full, Some(true));
        assert_eq!(r.estimate_ordering, Some(true));
        assert!(r.suspicious.is_empty());
        assert!(t.render().contains("pass"));
        assert_eq!(t.to_csv().lines().count(), 1 + 3 * 2);
    }

    #[test]
    fn identical_variants_are_suspicious() {
        let s = summary(vec![cell(Variant::RbBiased, &[1e-2, 2e-2], Some(5)), cell(Variant::RbAdjusted, &[1e-2, 2e-2], Some(5))]);
        let r = &compare_variants(&[s]).unwrap().rows[0];
        assert_eq!(r.adjusted_vs_biased, Some(false));
        assert_eq!(r.suspicious.len(), 1);
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let s = summary(vec![cell(Variant::RbBiased, &[1e-2, 2e-2], Some(5)), cell(Variant::RbAdjusted, &[1e-2, 2e-2], Some(6))]);
        assert!(matches!(compare_variants(&[s]), Err(BenchError::Misaligned(_))));
        let mut other = summary(vec![cell(Variant::Full, &[1e-2, 2e-2], None)]);
        other.mu_star = vec![2.0];
        assert!(compare_variants(&[summary(vec![]), other]).is_err());
        assert!(compare_variants(&[]).is_err());
    }
}
