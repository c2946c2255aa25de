//! Convergence analytics evaluated over a realized training trace.
//!
//! Per iteration the expected optimality gap contracts by `A_t` and grows by
//! `B_t`:
//!
//! ```text
//! A_t = (L − μ)/L + Σ_i μ K_i ρ₂ ‖1 − β_i‖² / (L K)
//! B_t = L σ²/2 · Σ_d (Σ_i K_i β_i^d b^d)^{−2} + Σ_i K_i ρ₁ ‖1 − β_i‖² / (2 L K)
//! ```
//!
//! where `‖1 − β_i‖²` counts the entries worker `i` did not transmit.
//! Unrolling `Δ_t = A_t Δ_{t−1} + B_t` from `Δ_0 = 0` gives the cumulative gap.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::SchedulingDecision;
use crate::error::{Error, Result};

/// Analysis constants shared by every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub lipschitz: f64,
    pub strong_convexity: f64,
    pub noise_variance: f64,
    pub rho1: f64,
    pub rho2: f64,
}

/// One iteration's scheduling outcome seen by the analytics.
///
/// Unlike [`SchedulingDecision`] this admits entries nobody transmits, which
/// [`coeff_b`] reports as unbounded.
#[derive(Debug, Clone, Copy)]
pub struct IterationBoundInputs<'a> {
    /// Entry-major: `selected[d * U + i]`.
    pub selected: &'a [bool],
    pub scaling: &'a [f64],
    pub sample_counts: &'a [usize],
    pub constants: BoundConstants,
}

impl<'a> IterationBoundInputs<'a> {
    pub fn new(
        selected: &'a [bool],
        scaling: &'a [f64],
        sample_counts: &'a [usize],
        constants: BoundConstants,
    ) -> Result<Self> {
        let expected = scaling.len() * sample_counts.len();
        if selected.len() != expected {
            return Err(Error::Shape {
                expected,
                got: selected.len(),
            });
        }
        Ok(Self {
            selected,
            scaling,
            sample_counts,
            constants,
        })
    }

    pub fn from_decision(
        decision: &'a SchedulingDecision,
        sample_counts: &'a [usize],
        constants: BoundConstants,
    ) -> Result<Self> {
        Self::new(
            decision.selections(),
            decision.scaling(),
            sample_counts,
            constants,
        )
    }

    fn num_workers(&self) -> usize {
        self.sample_counts.len()
    }

    fn total_samples(&self) -> f64 {
        self.sample_counts.iter().sum::<usize>() as f64
    }

    /// `Σ_i K_i ‖1 − β_i‖²`.
    fn weighted_deselections(&self) -> f64 {
        let u = self.num_workers();
        let mut total = 0usize;
        for entry in self.selected.chunks_exact(u) {
            for (s, k) in entry.iter().zip(self.sample_counts) {
                if !*s {
                    total += k;
                }
            }
        }
        total as f64
    }
}

/// Contraction coefficient `A_t`.
pub fn coeff_a(input: &IterationBoundInputs<'_>) -> f64 {
    let c = input.constants;
    let (l, mu) = (c.lipschitz, c.strong_convexity);
    (l - mu) / l + mu * c.rho2 * input.weighted_deselections() / (l * input.total_samples())
}

/// Growth coefficient `B_t`, or the first entry nobody transmits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoeffB {
    Finite(f64),
    Unbounded { entry: usize },
}

impl CoeffB {
    pub fn value(self) -> Option<f64> {
        match self {
            CoeffB::Finite(v) => Some(v),
            CoeffB::Unbounded { .. } => None,
        }
    }
}

/// Growth coefficient `B_t`.
pub fn coeff_b(input: &IterationBoundInputs<'_>) -> CoeffB {
    let c = input.constants;
    let l = c.lipschitz;
    let u = input.num_workers();
    let mut inverse_sq = 0.0;
    for (d, (entry, &b)) in input
        .selected
        .chunks_exact(u)
        .zip(input.scaling)
        .enumerate()
    {
        let k: usize = entry
            .iter()
            .zip(input.sample_counts)
            .filter(|(s, _)| **s)
            .map(|(_, k)| k)
            .sum();
        if k == 0 {
            return CoeffB::Unbounded { entry: d };
        }
        let denom = k as f64 * b;
        inverse_sq += 1.0 / (denom * denom);
    }
    let noise = l * c.noise_variance / 2.0 * inverse_sq;
    let exclusion = c.rho1 * input.weighted_deselections() / (2.0 * l * input.total_samples());
    CoeffB::Finite(noise + exclusion)
}

/// `G_t = Δ_t + (Π_{j≤t} A_j) · initial_gap` for `t = 1..=T`.
pub fn cumulative_gap(coefficients: &[(f64, f64)], initial_gap: f64) -> Vec<f64> {
    let mut delta = 0.0;
    let mut product = 1.0;
    coefficients
        .iter()
        .map(|&(a, b)| {
            delta = a * delta + b;
            product *= a;
            delta + product * initial_gap
        })
        .collect()
}

/// Gap after `t` noiseless full-participation steps: `(1 − μ/L)^t · initial_gap`.
pub fn ideal_gap(lipschitz: f64, strong_convexity: f64, t: u32, initial_gap: f64) -> f64 {
    (1.0 - strong_convexity / lipschitz).powi(t as i32) * initial_gap
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexCheck {
    pub holds: bool,
    /// `1/D − ρ₂`; negative when ρ₂ is too large.
    pub margin: f64,
}

/// Whether `0 < ρ₂ ≤ 1/D`, which keeps every `A_t` at most 1.
pub fn check_convex_convergence(rho2: f64, dim: usize) -> ConvexCheck {
    let inv = 1.0 / dim as f64;
    ConvexCheck {
        holds: rho2 > 0.0 && rho2 <= inv,
        margin: inv - rho2,
    }
}

/// `|1 + (A_t − 1) 𝒢 / (2μ)| ≤ 1`.
pub fn check_nonconvex_condition(a: f64, strong_convexity: f64, g: f64) -> bool {
    (1.0 + (a - 1.0) * g / (2.0 * strong_convexity)).abs() <= 1.0
}

/// One step of the non-convex gap recursion, with `g_bound` the measured
/// squared gradient norm at the previous global model.
pub fn nonconvex_gap_step(
    prev_gap: f64,
    a: f64,
    b: f64,
    g_bound: f64,
    strong_convexity: f64,
) -> f64 {
    b + (a - 1.0) * g_bound / (2.0 * strong_convexity) + prev_gap
}

/// One row of a [`BoundTrace`]. `None` marks values lost to an unbounded `B_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub t: usize,
    #[serde(rename = "A_t")]
    pub a: f64,
    #[serde(rename = "B_t")]
    pub b: Option<f64>,
    #[serde(rename = "Delta_t")]
    pub delta: Option<f64>,
    pub cumulative_bound: Option<f64>,
    pub empirical_gap: Option<f64>,
    pub convex_flag: bool,
    pub nonconvex_flag: bool,
}

/// Per-iteration coefficients, the cumulative gap, and condition flags.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTrace {
    pub records: Vec<BoundRecord>,
    delta: Option<f64>,
    product: f64,
}

impl Default for BoundTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl BoundTrace {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            delta: Some(0.0),
            product: 1.0,
        }
    }

    /// Appends iteration `t = len + 1`. Once `B_t` is unbounded every later
    /// `Δ_t` and cumulative bound is unbounded too.
    pub fn push(
        &mut self,
        a: f64,
        b: CoeffB,
        initial_gap: f64,
        empirical_gap: Option<f64>,
        strong_convexity: f64,
        nonconvex_g: f64,
    ) {
        let b = b.value();
        self.delta = match (self.delta, b) {
            (Some(delta), Some(b)) => Some(a * delta + b),
            _ => None,
        };
        self.product *= a;
        let cumulative = self.delta.map(|d| d + self.product * initial_gap);
        self.records.push(BoundRecord {
            t: self.records.len() + 1,
            a,
            b,
            delta: self.delta,
            cumulative_bound: cumulative,
            empirical_gap,
            convex_flag: a <= 1.0,
            nonconvex_flag: check_nonconvex_condition(a, strong_convexity, nonconvex_g),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First iteration whose empirical gap exceeds the cumulative bound.
    pub fn first_violation(&self, tolerance: f64) -> Option<&BoundRecord> {
        self.records
            .iter()
            .find(|r| match (r.empirical_gap, r.cumulative_bound) {
                (Some(e), Some(g)) => e > g + tolerance,
                _ => false,
            })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::format("bounds.csv", e))?;
        }
        w.flush().map_err(|e| Error::io("bounds.csv", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn consts(l: f64, mu: f64, sigma2: f64, rho1: f64, rho2: f64) -> BoundConstants {
        BoundConstants {
            lipschitz: l,
            strong_convexity: mu,
            noise_variance: sigma2,
            rho1,
            rho2,
        }
    }

    #[test]
    fn coeff_a_examples() {
        let counts = [3, 5];
        let d = 4;
        let c = consts(2.0, 0.5, 1.0, 1.0, 1.0 / d as f64);
        let b = vec![1.0; d];
        let full = vec![true; 2 * d];
        let input = IterationBoundInputs::new(&full, &b, &counts, c).unwrap();
        assert_eq!(coeff_a(&input), 0.75);

        let none = vec![false; 2 * d];
        let input = IterationBoundInputs::new(&none, &b, &counts, c).unwrap();
        let a_max = 1.0 - 0.5 / 2.0 + 0.5 * c.rho2 * d as f64 / 2.0;
        assert!((coeff_a(&input) - a_max).abs() < 1e-15);

        let d = 6;
        let half: Vec<bool> = (0..d).map(|e| e % 2 == 0).collect();
        let b = vec![1.0; d];
        let c = consts(1.0, 0.5, 1.0, 1.0, 1.0 / d as f64);
        let input = IterationBoundInputs::new(&half, &b, &[7], c).unwrap();
        assert!((coeff_a(&input) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn coeff_b_examples() {
        let c = consts(1.0, 0.1, 1.0, 5.0, 1.0);
        let input = IterationBoundInputs::new(&[true], &[2.0], &[1], c).unwrap();
        assert_eq!(coeff_b(&input), CoeffB::Finite(0.125));

        let quiet = consts(1.0, 0.1, 0.0, 5.0, 1.0);
        let sel = vec![true; 6];
        let input = IterationBoundInputs::new(&sel, &[1.0, 2.0, 3.0], &[1, 2], quiet).unwrap();
        assert_eq!(coeff_b(&input), CoeffB::Finite(0.0));

        let b1 = [0.5, 1.5, 2.0];
        let b2: Vec<f64> = b1.iter().map(|b| 2.0 * b).collect();
        let lhs = coeff_b(&IterationBoundInputs::new(&sel, &b1, &[1, 2], c).unwrap())
            .value()
            .unwrap();
        let rhs = coeff_b(&IterationBoundInputs::new(&sel, &b2, &[1, 2], c).unwrap())
            .value()
            .unwrap();
        assert!((lhs - 4.0 * rhs).abs() < 1e-12);

        let hole = [true, true, false, false, true, false];
        let input = IterationBoundInputs::new(&hole, &b1, &[1, 2], c).unwrap();
        assert_eq!(coeff_b(&input), CoeffB::Unbounded { entry: 1 });
    }

    #[test]
    fn shape_mismatch_rejected() {
        let c = consts(1.0, 0.1, 1.0, 1.0, 1.0);
        assert!(IterationBoundInputs::new(&[true; 3], &[1.0, 1.0], &[1, 1], c).is_err());
    }

    #[test]
    fn cumulative_gap_examples() {
        let g = cumulative_gap(&[(0.5, 1.0); 3], 0.0);
        assert_eq!(g, vec![1.0, 1.5, 1.75]);

        let a = 0.9;
        let g = cumulative_gap(&[(a, 0.0); 8], 2.0);
        for (t, v) in g.iter().enumerate() {
            assert!((v - ideal_gap(1.0, 0.1, t as u32 + 1, 2.0)).abs() < 1e-15);
        }
    }

    /// Nested product-sum form of the cumulative gap, evaluated directly.
    fn direct_gap(coeffs: &[(f64, f64)], t: usize, initial_gap: f64) -> f64 {
        let mut total = 0.0;
        for i in 1..t {
            let prod: f64 = (i + 1..=t).map(|j| coeffs[j - 1].0).product();
            total += prod * coeffs[i - 1].1;
        }
        total += coeffs[t - 1].1;
        let prod: f64 = (1..=t).map(|j| coeffs[j - 1].0).product();
        total + prod * initial_gap
    }

    proptest! {
        #[test]
        fn recursion_matches_direct_sum(
            coeffs in prop::collection::vec((0.0f64..1.5, 0.0f64..2.0), 1..=10),
            initial in 0.0f64..10.0,
        ) {
            let g = cumulative_gap(&coeffs, initial);
            for t in 1..=coeffs.len() {
                let direct = direct_gap(&coeffs, t, initial);
                prop_assert!((g[t - 1] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }

        #[test]
        fn coeff_a_nondecreasing_under_deselection(
            sel in prop::collection::vec(any::<bool>(), 12),
            flip in 0usize..12,
            counts in prop::collection::vec(1usize..50, 3),
        ) {
            let c = consts(2.0, 0.3, 0.1, 1.0, 0.25);
            let b = vec![1.0; 4];
            let before = coeff_a(&IterationBoundInputs::new(&sel, &b, &counts, c).unwrap());
            let mut fewer = sel.clone();
            fewer[flip] = false;
            let after = coeff_a(&IterationBoundInputs::new(&fewer, &b, &counts, c).unwrap());
            prop_assert!(after >= before);
        }

        #[test]
        fn coeff_b_nonincreasing_in_scaling(
            b in prop::collection::vec(0.01f64..10.0, 5),
            entry in 0usize..5,
            factor in 1.0f64..4.0,
            counts in prop::collection::vec(1usize..50, 3),
        ) {
            let c = consts(1.5, 0.3, 0.2, 1.0, 0.2);
            let sel = vec![true; 15];
            let before = coeff_b(&IterationBoundInputs::new(&sel, &b, &counts, c).unwrap()).value().unwrap();
            let mut bigger = b.clone();
            bigger[entry] *= factor;
            let after = coeff_b(&IterationBoundInputs::new(&sel, &bigger, &counts, c).unwrap()).value().unwrap();
            prop_assert!(after <= before);
        }
    }

    #[test]
    fn convex_condition_examples() {
        assert_eq!(
            check_convex_convergence(0.5, 2),
            ConvexCheck {
                holds: true,
                margin: 0.0
            }
        );
        assert!(!check_convex_convergence(0.6, 2).holds);
        assert!(check_convex_convergence(1.0 / 50890.0, 50890).holds);
        assert!(!check_convex_convergence(0.0, 2).holds);
    }

    #[test]
    fn nonconvex_condition_examples() {
        let mu = 0.3;
        for a in [-1.0, -0.5, 0.0, 0.7, 1.0] {
            assert!(check_nonconvex_condition(a, mu, 2.0 * mu));
        }
        assert!(!check_nonconvex_condition(1.01, mu, 2.0 * mu));
        assert!(!check_nonconvex_condition(-1.01, mu, 2.0 * mu));
        assert!(check_nonconvex_condition(1.0, mu, 123.0));
        assert!(!check_nonconvex_condition(1.5, 0.25, 2.0));
    }

    #[test]
    fn nonconvex_step_examples() {
        assert_eq!(nonconvex_gap_step(2.0, 1.0, 0.3, 7.0, 0.1), 2.3);
        assert_eq!(nonconvex_gap_step(2.0, 0.4, 0.0, 0.0, 0.1), 2.0);
        assert!((nonconvex_gap_step(2.0, 0.5, 0.1, 1.0, 0.25) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn trace_matches_cumulative_gap() {
        let coeffs = [(0.9, 0.1), (0.8, 0.3), (0.95, 0.0)];
        let mut trace = BoundTrace::new();
        for &(a, b) in &coeffs {
            trace.push(a, CoeffB::Finite(b), 4.0, Some(0.0), 0.1, 0.2);
        }
        let expected = cumulative_gap(&coeffs, 4.0);
        let got: Vec<f64> = trace
            .records
            .iter()
            .map(|r| r.cumulative_bound.unwrap())
            .collect();
        assert_eq!(got, expected);
        assert!(trace.first_violation(0.0).is_none());
        assert!(trace
            .records
            .iter()
            .all(|r| r.convex_flag && r.nonconvex_flag));
    }

    #[test]
    fn unbounded_coefficient_propagates() {
        let mut trace = BoundTrace::new();
        trace.push(0.9, CoeffB::Finite(0.1), 1.0, None, 0.1, 0.2);
        trace.push(0.9, CoeffB::Unbounded { entry: 3 }, 1.0, None, 0.1, 0.2);
        trace.push(0.9, CoeffB::Finite(0.1), 1.0, None, 0.1, 0.2);
        assert!(trace.records[0].cumulative_bound.is_some());
        assert!(trace.records[1].b.is_none());
        assert!(trace.records[2].cumulative_bound.is_none());
    }

    #[test]
    fn csv_has_expected_header() {
        let mut trace = BoundTrace::new();
        trace.push(0.9, CoeffB::Finite(0.1), 1.0, Some(0.5), 0.1, 0.2);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,A_t,B_t,Delta_t,cumulative_bound,empirical_gap,convex_flag,nonconvex_flag"
        );
    }
}
