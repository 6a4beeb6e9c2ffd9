//! Numerical reproduction of the worst-case multiplier constants.
//!
//! The knockoff-side constant bounds E[sup_k S_k / (1 + k - S_k)] for a fair
//! coin walk S_k; the p-value-side constant bounds
//! E[sup_t F_n(t) / (1/n + t)] for a uniform empirical CDF F_n. Both are
//! evaluated here by quadrature of boundary-crossing probabilities, by exact
//! enumeration, and by Monte Carlo, so the routes cross-check each other.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::derive_seed;
use crate::special::ln_choose;

pub const LN2: f64 = std::f64::consts::LN_2;

/// How a reported number was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Quadrature,
    DpEnumeration,
    MonteCarlo,
    ClosedForm,
}

/// A computed constant with an error estimate and the parameters that
/// produced it.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub method: BoundMethod,
    /// For quadrature: tolerance + truncation bound. For Monte Carlo: the
    /// 95% confidence half-width.
    pub error_estimate: f64,
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl BoundReport {
    fn new(name: &str, value: f64, method: BoundMethod, error_estimate: f64) -> Self {
        BoundReport {
            name: name.to_string(),
            value,
            method,
            error_estimate,
            parameters: BTreeMap::new(),
        }
    }

    fn with_param(mut self, key: &str, value: serde_json::Value) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }
}

// ---------------------------------------------------------------------------
// root solvers
// ---------------------------------------------------------------------------

/// The unique positive root of exp(theta (1 - c1)) + exp(-theta c1) = 2 for
/// c1 in (1/2, 1); c1 = 1/2 returns 0 by convention.
pub fn theta_root(c1: f64) -> Result<f64> {
    if c1 == 0.5 {
        return Ok(0.0);
    }
    if !(0.5 < c1 && c1 < 1.0) {
        return Err(Error::Domain(format!("theta_root requires c1 in (1/2, 1), got {c1}")));
    }
    let f = |theta: f64| (theta * (1.0 - c1)).exp() + (-theta * c1).exp();
    // f(0) = 2 with negative slope; the positive root lies beyond the minimum
    // at theta_min = ln(c1 / (1 - c1)).
    let theta_min = (c1 / (1.0 - c1)).ln();
    let mut lo = theta_min;
    let mut hi = theta_min + 1.0;
    while f(hi) < 2.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The root of e^theta + e^{-t theta} = 2 in (0, ln 2), i.e.
/// Theta(t/(1+t)) / (1+t). Returns 0 at t = 1 (the convention above).
pub fn theta_t(t: f64) -> Result<f64> {
    if t == 1.0 {
        return Ok(0.0);
    }
    if t < 1.0 {
        return Err(Error::Domain(format!("theta_t requires t >= 1, got {t}")));
    }
    let f = |theta: f64| theta.exp() + (-t * theta).exp();
    // minimum at ln(t)/(1+t); the root sits between there and ln 2
    let mut lo = t.ln() / (1.0 + t);
    let mut hi = LN2;
    debug_assert!(f(lo) < 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The positive root of e^gamma = 1 + gamma x for x > 1.
pub fn gamma_x_root(x: f64) -> Result<f64> {
    if x <= 1.0 {
        return Err(Error::Domain(format!(
            "gamma_x_root requires x > 1 (root degenerates to 0 at x = 1), got {x}"
        )));
    }
    let f = |g: f64| g.exp() - 1.0 - g * x;
    // f(0) = 0 with slope 1 - x < 0; root beyond the minimum at ln(x)
    let mut lo = x.ln();
    let mut hi = x.ln() + 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// adaptive Simpson quadrature
// ---------------------------------------------------------------------------

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

fn adaptive_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, fa, m, fm, left, lm, flm, eps / 2.0, depth - 1)
        + adaptive_step(f, m, fm, b, fb, right, rm, frm, eps / 2.0, depth - 1)
}

/// Adaptive Simpson integration of `f` over [a, b] to absolute tolerance eps.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    adaptive_step(f, a, fa, b, fb, whole, m, fm, eps, 40)
}

// ---------------------------------------------------------------------------
// the knockoff-side constant
// ---------------------------------------------------------------------------

const LOOSE_TAIL_CUTOFF: f64 = 60.0;
const QUAD_EPS: f64 = 1e-9;

/// Upper bound on the walk constant via the union-free boundary-crossing
/// bound: 1 + integral over t >= 1 of exp(-Theta(t/(1+t)) t/(1+t)) dt.
/// The integrand equals 2 - e^{theta_t}, which at t = 1 is 1.
pub fn akn_loose_bound() -> BoundReport {
    let integrand = |t: f64| {
        let th = theta_t(t).expect("t >= 1");
        2.0 - th.exp()
    };
    let body = integrate(&integrand, 1.0, LOOSE_TAIL_CUTOFF, QUAD_EPS);
    // beyond the cutoff the integrand is below exp(-t * theta_T)
    let theta_cut = theta_t(LOOSE_TAIL_CUTOFF).expect("cutoff >= 1");
    let tail_bound = (-LOOSE_TAIL_CUTOFF * theta_cut).exp() / theta_cut;
    BoundReport::new(
        "akn_loose",
        1.0 + body,
        BoundMethod::Quadrature,
        QUAD_EPS + tail_bound,
    )
    .with_param("tail_cutoff", serde_json::json!(LOOSE_TAIL_CUTOFF))
    .with_param("tail_bound", serde_json::json!(tail_bound))
}

/// Maximum ratio of steps right to (1 + steps left) along a walk prefix,
/// stored exactly as a reduced fraction to avoid float ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    const ZERO: Ratio = Ratio { num: 0, den: 1 };

    fn reduced(num: u64, den: u64) -> Ratio {
        let g = gcd(num, den);
        if g == 0 {
            Ratio { num, den }
        } else {
            Ratio {
                num: num / g,
                den: den / g,
            }
        }
    }

    fn less_than(&self, other: &Ratio) -> bool {
        (self.num as u128) * (other.den as u128) < (other.num as u128) * (self.den as u128)
    }

    fn at_most_one(&self) -> bool {
        self.num <= self.den
    }

    fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// DP state after the enumerated prefix: the bound's summand depends on a
/// path only through (partial sum, running max ratio). Ratios at most one are
/// collapsed since only max(R, 1) enters the integral.
type StateCounts = BTreeMap<(u64, Ratio), u64>;

fn dp_states(k0: u32) -> StateCounts {
    let mut states: StateCounts = BTreeMap::new();
    states.insert((0, Ratio::ZERO), 1);
    for step in 1..=k0 as u64 {
        let mut next: StateCounts = BTreeMap::new();
        for (&(p, r), &count) in &states {
            for x in [0u64, 1u64] {
                let p2 = p + x;
                let candidate = Ratio::reduced(p2, 1 + step - p2);
                let mut r2 = if r.less_than(&candidate) { candidate } else { r };
                if r2.at_most_one() {
                    r2 = Ratio::ZERO;
                }
                *next.entry((p2, r2)).or_insert(0) += count;
            }
        }
        states = next;
    }
    states
}

fn enumerate_states(k0: u32) -> Result<StateCounts> {
    if k0 > 20 {
        return Err(Error::CostGuard(format!(
            "direct enumeration of 2^{k0} paths refused (max 20)"
        )));
    }
    let mut states: StateCounts = BTreeMap::new();
    for bits in 0..(1u64 << k0) {
        let mut p = 0u64;
        let mut r = Ratio::ZERO;
        for step in 1..=k0 as u64 {
            p += (bits >> (step - 1)) & 1;
            let candidate = Ratio::reduced(p, 1 + step - p);
            if r.less_than(&candidate) {
                r = candidate;
            }
        }
        if r.at_most_one() {
            r = Ratio::ZERO;
        }
        *states.entry((p, r)).or_insert(0) += 1;
    }
    Ok(states)
}

/// Jacobian factor (e^th th + (2 - e^th) ln(2 - e^th)) / th^2 of the change
/// of variables from t to theta_t; series near 0 avoids cancellation.
fn theta_jacobian(theta: f64) -> f64 {
    if theta < 1e-4 {
        return 1.0 + theta + 0.75 * theta * theta;
    }
    let u = 2.0 - theta.exp();
    let log_term = if u > 0.0 { u * u.ln() } else { 0.0 };
    (theta.exp() * theta + log_term) / (theta * theta)
}

/// Per-state integral of the refined bound, in theta space over
/// [theta_L, ln 2]: exp((k0 - P) ln(2 - e^th) + th P) * jacobian.
fn state_integral(l: f64, p: u64, k0: u32) -> Result<f64> {
    let theta_lo = if l <= 1.0 { 0.0 } else { theta_t(l)? };
    let a = k0 as i64 - p as i64;
    debug_assert!(a >= 0);
    let integrand = move |theta: f64| {
        let u = 2.0 - theta.exp();
        let log_factor = if a == 0 {
            0.0
        } else if u <= 0.0 {
            return 0.0;
        } else {
            a as f64 * u.ln()
        };
        (log_factor + theta * p as f64).exp() * theta_jacobian(theta)
    };
    // local tolerance scaled to a first coarse estimate of the magnitude
    let rough = integrand(0.5 * (theta_lo + LN2)).abs().max(1.0);
    Ok(integrate(&integrand, theta_lo, LN2, 1e-11 * rough))
}

fn bound_from_states(states: &StateCounts, k0: u32) -> Result<f64> {
    let mut total = 0.0;
    for (&(p, r), &count) in states {
        let l = r.as_f64().max(1.0);
        let term = l + state_integral(l, p, k0)?;
        total += count as f64 * term;
    }
    Ok(total / (1u64 << k0) as f64)
}

/// The k0-refined upper bound on the walk constant: enumerate the first k0
/// steps exactly (aggregated by dynamic program), then apply the
/// boundary-crossing bound from the reached state.
pub fn akn_refined_bound(k0: u32) -> Result<BoundReport> {
    if k0 > 24 {
        return Err(Error::CostGuard(format!("akn_refined_bound: k0 = {k0} exceeds cap 24")));
    }
    let states = dp_states(k0);
    let value = bound_from_states(&states, k0)?;
    Ok(
        BoundReport::new("akn_refined", value, BoundMethod::DpEnumeration, 1e-8)
            .with_param("k0", serde_json::json!(k0))
            .with_param("num_states", serde_json::json!(states.len())),
    )
}

/// Same bound by brute-force walk enumeration; oracle for the DP.
pub fn akn_refined_bound_enumeration(k0: u32) -> Result<BoundReport> {
    let states = enumerate_states(k0)?;
    let value = bound_from_states(&states, k0)?;
    Ok(
        BoundReport::new("akn_refined_enum", value, BoundMethod::DpEnumeration, 1e-8)
            .with_param("k0", serde_json::json!(k0))
            .with_param("num_states", serde_json::json!(states.len())),
    )
}

#[doc(hidden)]
pub fn dp_state_counts(k0: u32) -> Vec<((u64, u64, u64), u64)> {
    dp_states(k0)
        .into_iter()
        .map(|((p, r), c)| ((p, r.num, r.den), c))
        .collect()
}

#[doc(hidden)]
pub fn enumerated_state_counts(k0: u32) -> Result<Vec<((u64, u64, u64), u64)>> {
    Ok(enumerate_states(k0)?
        .into_iter()
        .map(|((p, r), c)| ((p, r.num, r.den), c))
        .collect())
}

/// k0 versus refined bound, the data behind the upper-bounds figure.
pub fn bounds_table(k0_max: u32) -> Result<Vec<(u32, f64)>> {
    (0..=k0_max)
        .map(|k0| Ok((k0, akn_refined_bound(k0)?.value)))
        .collect()
}

/// Running maximum of S_k / (1 + k - S_k) along a single walk.
pub fn walk_max_ratio<I: IntoIterator<Item = bool>>(steps: I) -> f64 {
    let mut s: u64 = 0;
    let mut k: u64 = 0;
    let mut best_num: u64 = 0;
    let mut best_den: u64 = 1;
    for up in steps {
        k += 1;
        if up {
            s += 1;
        }
        let den = 1 + k - s;
        // s / den > best ?
        if (s as u128) * (best_den as u128) > (best_num as u128) * (den as u128) {
            best_num = s;
            best_den = den;
        }
    }
    best_num as f64 / best_den as f64
}

/// Monte Carlo estimate of E[sup_{k <= steps} S_k / (1 + k - S_k)] over
/// i.i.d. fair-coin walks. The truncation at `steps` is benign because the
/// ratio converges to 1 almost surely while the sup is attained early.
pub fn akn_monte_carlo(steps: usize, reps: usize, seed: u64) -> Result<BoundReport> {
    if steps < 1000 {
        return Err(Error::InvalidInput(format!(
            "akn_monte_carlo needs steps >= 1000 for the truncated sup, got {steps}"
        )));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("akn_monte_carlo needs reps >= 1".into()));
    }
    let (sum, sum_sq) = (0..reps)
        .into_par_iter()
        .map(|rep| {
            use rand::{RngCore, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(seed, 0xA58, rep as u64));
            let mut s: u64 = 0;
            let mut best_num: u64 = 0;
            let mut best_den: u64 = 1;
            let mut k: u64 = 0;
            let mut remaining = steps as u64;
            while remaining > 0 {
                let mut word = rng.next_u64();
                let take = remaining.min(64);
                for _ in 0..take {
                    k += 1;
                    s += word & 1;
                    word >>= 1;
                    let den = 1 + k - s;
                    if (s as u128) * (best_den as u128) > (best_num as u128) * (den as u128) {
                        best_num = s;
                        best_den = den;
                    }
                }
                remaining -= take;
            }
            let v = best_num as f64 / best_den as f64;
            (v, v * v)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sum / reps as f64;
    let var = ((sum_sq - sum * sum / reps as f64) / (reps as f64 - 1.0)).max(0.0);
    let half_width = 1.96 * (var / reps as f64).sqrt();
    Ok(
        BoundReport::new("akn_monte_carlo", mean, BoundMethod::MonteCarlo, half_width)
            .with_param("steps", serde_json::json!(steps))
            .with_param("reps", serde_json::json!(reps))
            .with_param("seed", serde_json::json!(seed))
            .with_param("ci_half_width", serde_json::json!(half_width)),
    )
}

// ---------------------------------------------------------------------------
// the p-filter-side constant
// ---------------------------------------------------------------------------

/// Closed-form worst-case multiplier
/// c_pf(G) = 1 + exp(G^{-1/2} + G^{-1}/2) * 0.42 + e * G^{-1/4}.
///
/// The limit as G grows is 1.42; the e G^{-1/4} term decays slowly, so the
/// value at G = 10^6 is still about 1.506.
pub fn cpf_formula(g: u64) -> f64 {
    assert!(g >= 1, "cpf_formula requires G >= 1");
    let g = g as f64;
    1.0 + (g.powf(-0.5) + 0.5 / g).exp() * 0.42 + std::f64::consts::E * g.powf(-0.25)
}

/// Quadrature of the constant 0.42 appearing in the c_pf formula:
/// integral over x >= 1 of exp(-gamma_x x) dx.
pub fn gamma_x_integral() -> BoundReport {
    let cutoff = 40.0;
    let integrand = |x: f64| {
        if x <= 1.0 {
            1.0
        } else {
            (-gamma_x_root(x).expect("x > 1") * x).exp()
        }
    };
    let body = integrate(&integrand, 1.0, cutoff, QUAD_EPS);
    let gamma_cut = gamma_x_root(cutoff).expect("cutoff > 1");
    let tail = (-gamma_cut * cutoff).exp() / gamma_cut;
    BoundReport::new("gamma_x_integral", body, BoundMethod::Quadrature, QUAD_EPS + tail)
        .with_param("tail_cutoff", serde_json::json!(cutoff))
}

/// P[sup_t N_t / (1 + n t) >= x] for the uniform empirical process, the
/// exact linear-boundary hitting probability (valid for x > 1).
fn hitting_probability(n: u64, x: f64) -> f64 {
    let kmax = (n as f64 - x).floor();
    if kmax < 0.0 {
        return 0.0;
    }
    let kmax = kmax as u64;
    let nf = n as f64;
    let mut sum = 0.0;
    for i in 0..=kmax {
        let q = (nf - i as f64 - x) / (nf * x);
        if q <= 0.0 {
            continue;
        }
        let log_term = ln_choose(n, i)
            + (nf - i as f64) * q.ln()
            + (i as f64 - 1.0) * (-q).ln_1p();
        sum += log_term.exp();
    }
    sum * (1.0 + 1.0 / nf - 1.0 / x)
}

/// a_pf(n) evaluated from the exact hitting-probability formula:
/// 1 + integral over x >= 1 of P[sup >= x] dx. Because the integral starts at
/// x = 1, this equals E[max(1, sup_t F_n(t)/(1/n + t))].
pub fn apf_exact(n: u64) -> Result<BoundReport> {
    if n < 1 || n > 5000 {
        return Err(Error::CostGuard(format!("apf_exact supports 1 <= n <= 5000, got {n}")));
    }
    let mut total = 0.0;
    let mut truncation = 0.0;
    // the integrand has floor kinks at integer x; integrate piecewise
    for j in 1..n {
        let a = j as f64;
        let b = (j + 1) as f64;
        let piece = integrate(&|x| hitting_probability(n, x), a, b, QUAD_EPS / n as f64);
        total += piece;
        if piece < 1e-13 {
            // hitting probability decreases in x; bound the rest crudely
            truncation = hitting_probability(n, b) * (n as f64 - b).max(0.0);
            break;
        }
    }
    Ok(
        BoundReport::new("apf_exact", 1.0 + total, BoundMethod::Quadrature, QUAD_EPS + truncation)
            .with_param("n", serde_json::json!(n)),
    )
}

/// Monte Carlo of the empirical-process sup over sorted uniforms:
/// max_k k / (1 + n p_(k)). With `clamp_at_one` the per-replicate value is
/// max(1, sup), the quantity whose closed form is [`apf_exact`] (the exact
/// formula integrates only over x >= 1).
pub fn apf_monte_carlo(n: u64, reps: usize, seed: u64, clamp_at_one: bool) -> BoundReport {
    let (sum, sum_sq) = (0..reps)
        .into_par_iter()
        .map(|rep| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(seed, 0xAF5, rep as u64));
            let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            p.sort_by(|a, b| a.total_cmp(b));
            let mut sup = 0.0f64;
            for (k0, &pk) in p.iter().enumerate() {
                let v = (k0 as f64 + 1.0) / (1.0 + n as f64 * pk);
                sup = sup.max(v);
            }
            let v = if clamp_at_one { sup.max(1.0) } else { sup };
            (v, v * v)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sum / reps as f64;
    let var = ((sum_sq - sum * sum / reps as f64) / (reps as f64 - 1.0)).max(0.0);
    let half_width = 1.96 * (var / reps as f64).sqrt();
    BoundReport::new("apf_monte_carlo", mean, BoundMethod::MonteCarlo, half_width)
        .with_param("n", serde_json::json!(n))
        .with_param("reps", serde_json::json!(reps))
        .with_param("seed", serde_json::json!(seed))
        .with_param("clamp_at_one", serde_json::json!(clamp_at_one))
        .with_param("ci_half_width", serde_json::json!(half_width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn theta_root_residuals() {
        for i in 0..49 {
            let c1 = 0.51 + 0.01 * i as f64;
            let th = theta_root(c1).unwrap();
            let resid = ((th * (1.0 - c1)).exp() + (-th * c1).exp() - 2.0).abs();
            assert!(resid <= 1e-10, "c1 = {c1}: residual {resid}");
        }
    }

    #[test]
    fn theta_root_domain() {
        assert_eq!(theta_root(0.5).unwrap(), 0.0);
        assert!(theta_root(0.4).is_err());
        assert!(theta_root(1.0).is_err());
    }

    #[test]
    fn theta_root_convexity_bracketing() {
        let c1 = 2.0 / 3.0;
        let th = theta_root(c1).unwrap();
        let f = |theta: f64| (theta * (1.0 - c1)).exp() + (-theta * c1).exp();
        assert!(f(th / 2.0) < 2.0);
        assert!(f(2.0 * th) > 2.0);
    }

    #[test]
    fn theta_t_matches_theta_root() {
        for &t in &[1.5, 2.0, 3.7, 10.0] {
            let via_c1 = theta_root(t / (1.0 + t)).unwrap() / (1.0 + t);
            assert_abs_diff_eq!(theta_t(t).unwrap(), via_c1, epsilon = 1e-10);
        }
    }

    #[test]
    fn loose_bound_window() {
        let rep = akn_loose_bound();
        assert!(rep.value >= 2.0988 && rep.value <= 2.1008, "got {}", rep.value);
        assert!(rep.value <= 2.1);
        // integrand at t = 1 equals 1 (Theta(1/2) = 0 convention)
        assert_abs_diff_eq!(2.0 - theta_t(1.0).unwrap().exp(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn refined_k0_zero_reduces_to_loose() {
        let loose = akn_loose_bound();
        let refined = akn_refined_bound(0).unwrap();
        assert_abs_diff_eq!(loose.value, refined.value, epsilon = 3e-4);
    }

    #[test]
    fn dp_matches_enumeration_small() {
        for k0 in [0u32, 1, 2, 3, 5, 8, 10, 12] {
            assert_eq!(
                dp_state_counts(k0),
                enumerated_state_counts(k0).unwrap(),
                "state counts differ at k0 = {k0}"
            );
            let dp = akn_refined_bound(k0).unwrap().value;
            let en = akn_refined_bound_enumeration(k0).unwrap().value;
            assert_eq!(dp, en, "bound differs at k0 = {k0}");
        }
    }

    #[test]
    fn refined_bound_monotone_and_hits_paper_value() {
        let table = bounds_table(12).unwrap();
        for w in table.windows(2) {
            assert!(
                w[1].1 <= w[0].1 + 1e-9,
                "bound increased from k0={} to k0={}",
                w[0].0,
                w[1].0
            );
        }
    }

    #[test]
    fn walk_max_ratio_alternating() {
        // +,-,+,-,...: sup = 1 reached at k = 1
        let bits = (0..100).map(|i| i % 2 == 0);
        assert_eq!(walk_max_ratio(bits), 1.0);
    }

    #[test]
    fn monte_carlo_guards() {
        assert!(akn_monte_carlo(10, 10, 1).is_err());
        assert!(akn_monte_carlo(1000, 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_ci_scales() {
        let a = akn_monte_carlo(1000, 400, 5).unwrap();
        let b = akn_monte_carlo(1000, 1600, 5).unwrap();
        // quadrupling reps should halve the CI width, within 20% slack
        let ratio = b.error_estimate / a.error_estimate;
        assert!(ratio < 0.5 * 1.2 && ratio > 0.5 / 1.2, "ratio {ratio}");
    }

    #[test]
    fn cpf_formula_examples() {
        let g1 = cpf_formula(1);
        let expect = 1.0 + (1.5f64).exp() * 0.42 + std::f64::consts::E;
        assert_abs_diff_eq!(g1, expect, epsilon = 1e-12);
        assert!((g1 - 5.6006).abs() < 1e-3);
        // strictly decreasing over a sampled ladder up to 10^6
        let ladder = [1u64, 2, 5, 10, 100, 1000, 10_000, 100_000, 1_000_000];
        for w in ladder.windows(2) {
            assert!(cpf_formula(w[1]) < cpf_formula(w[0]));
        }
    }

    #[test]
    fn gamma_x_root_behaviour() {
        assert!(gamma_x_root(1.0).is_err());
        // x -> 1+ gives gamma -> 0
        assert!(gamma_x_root(1.0 + 1e-6).unwrap() < 1e-2);
        let g = gamma_x_root(2.0).unwrap();
        assert!((g.exp() - 1.0 - 2.0 * g).abs() <= 1e-10);
    }

    #[test]
    fn gamma_x_integral_is_042() {
        let rep = gamma_x_integral();
        assert!((rep.value - 0.42).abs() <= 0.005, "got {}", rep.value);
    }

    #[test]
    fn apf_exact_n1_is_one() {
        // sup = 1/(1+U) <= 1 always, so the x >= 1 integral vanishes
        let rep = apf_exact(1).unwrap();
        assert_abs_diff_eq!(rep.value, 1.0, epsilon = 1e-9);
        // the unclamped sup has mean ln 2, the clamped one is exactly 1
        let raw = apf_monte_carlo(1, 4000, 9, false);
        assert!((raw.value - std::f64::consts::LN_2).abs() < 3.0 * raw.error_estimate / 1.96);
        let clamped = apf_monte_carlo(1, 500, 9, true);
        assert_eq!(clamped.value, 1.0);
    }

    #[test]
    fn apf_exact_guards() {
        assert!(apf_exact(0).is_err());
        assert!(apf_exact(5001).is_err());
    }
}
