//! P-value based multilayer testing: Simes and Fisher group aggregation, the
//! Benjamini-Hochberg procedure, and the generalized p-filter.

use crate::error::{Error, Result};
use crate::filter::ThresholdVector;
use crate::model::{induce_group_selections, LayerSpec, SelectionSet};
use crate::special::chi_square_sf;
use std::collections::BTreeSet;

/// Per-layer vectors of group p-values, lengths matching the layer's G_m.
#[derive(Debug, Clone)]
pub struct PValueLayers {
    layers: Vec<Vec<f64>>,
}

impl PValueLayers {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        for (m, p) in layers.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::InvalidInput(format!("layer {} has no p-values", m + 1)));
            }
            if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::InvalidInput(format!(
                    "layer {} has p-values outside [0, 1]",
                    m + 1
                )));
            }
        }
        Ok(PValueLayers { layers })
    }

    pub fn layer(&self, m: usize) -> &[f64] {
        &self.layers[m]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Optional worst-case correction multiplying the FDP estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    /// No correction (the simulations' default).
    None,
    /// c_pf(G_m) per-layer multiplier. Under independent null p-values the
    /// corrected procedure controls the modified FDR (mFDR) at the targets;
    /// plain-FDR control under this correction is not claimed.
    Cpf,
}

#[derive(Debug, Clone)]
pub struct PfilterConfig {
    pub q: Vec<f64>,
    pub correction: Correction,
}

impl PfilterConfig {
    pub fn new(q: Vec<f64>, correction: Correction) -> Result<Self> {
        if q.is_empty() || q.iter().any(|v| !(0.0 < *v && *v < 1.0)) {
            return Err(Error::InvalidInput("targets q must lie in (0, 1)".into()));
        }
        Ok(PfilterConfig { q, correction })
    }
}

/// Simes global test: min over i of (k/i) p_(i), capped at 1.
pub fn simes(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidInput("simes needs at least one p-value".into()));
    }
    validate_unit_interval(p)?;
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = sorted.len() as f64;
    let min = sorted
        .iter()
        .enumerate()
        .map(|(i, &pi)| k / (i as f64 + 1.0) * pi)
        .fold(f64::INFINITY, f64::min);
    Ok(min.min(1.0))
}

/// A group p-value, flagging inputs that were exactly zero (Fisher's
/// statistic is infinite there and the output is clamped to 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupPValue {
    pub value: f64,
    pub zero_clamped: bool,
}

/// Fisher combination: upper chi-square tail with 2k degrees of freedom at
/// -2 Σ log p_i.
pub fn fisher(p: &[f64]) -> Result<GroupPValue> {
    if p.is_empty() {
        return Err(Error::InvalidInput("fisher needs at least one p-value".into()));
    }
    validate_unit_interval(p)?;
    if p.iter().any(|&v| v == 0.0) {
        return Ok(GroupPValue {
            value: 0.0,
            zero_clamped: true,
        });
    }
    let stat: f64 = p.iter().map(|&v| -2.0 * v.ln()).sum();
    let value = chi_square_sf(2.0 * p.len() as f64, stat)?;
    Ok(GroupPValue {
        value,
        zero_clamped: false,
    })
}

fn validate_unit_interval(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err(Error::InvalidInput("p-values must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Benjamini-Hochberg step-up at level q; returns the rejected indices.
pub fn bh(p: &[f64], q: f64) -> Result<Vec<usize>> {
    validate_unit_interval(p)?;
    let n = p.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut k_hat = 0;
    for (rank0, &idx) in order.iter().enumerate() {
        let k = rank0 + 1;
        if p[idx] <= k as f64 * q / n as f64 {
            k_hat = k;
        }
    }
    let mut rejected: Vec<usize> = order[..k_hat].to_vec();
    rejected.sort_unstable();
    Ok(rejected)
}

/// The theoretical worst-case multiplier for the generalized p-filter,
/// re-exported here for the correction option.
pub fn cpf_multiplier(g: usize) -> f64 {
    crate::bounds::cpf_formula(g as u64)
}

/// The generalized p-filter: find the coordinatewise maximal threshold
/// vector t in [0,1]^M with FDPhat_m(t) <= q_m for all m, where
/// FDPhat_m(t) = corr_m * G_m * t_m / max(1, |S_m(t)|) and
/// S(t) = {j : p_{g(j,m)}^m <= t_m for all m}.
pub fn generalized_pfilter(
    layers: &PValueLayers,
    spec: &LayerSpec,
    cfg: &PfilterConfig,
) -> Result<(SelectionSet, ThresholdVector)> {
    let m_layers = spec.num_layers();
    if layers.num_layers() != m_layers {
        return Err(Error::InvalidInput(format!(
            "{} p-value layers but spec has {} layers",
            layers.num_layers(),
            m_layers
        )));
    }
    if cfg.q.len() != m_layers {
        return Err(Error::InvalidInput(format!(
            "{} target levels but spec has {} layers",
            cfg.q.len(),
            m_layers
        )));
    }
    for m in 0..m_layers {
        if layers.layer(m).len() != spec.layer(m).num_groups() {
            return Err(Error::InvalidInput(format!(
                "layer {} has {} p-values but {} groups",
                m + 1,
                layers.layer(m).len(),
                spec.layer(m).num_groups()
            )));
        }
    }

    let corr: Vec<f64> = (0..m_layers)
        .map(|m| match cfg.correction {
            Correction::None => 1.0,
            Correction::Cpf => cpf_multiplier(spec.layer(m).num_groups()),
        })
        .collect();

    // candidate thresholds: observed p-values plus 0, descending scan
    let grids: Vec<Vec<f64>> = (0..m_layers)
        .map(|m| {
            let mut g: Vec<f64> = layers.layer(m).to_vec();
            g.push(0.0);
            g.sort_by(|a, b| a.total_cmp(b));
            g.dedup();
            g
        })
        .collect();

    // cursor[m]: index into grids[m]; start at the largest candidate
    let mut cursor: Vec<usize> = grids.iter().map(|g| g.len() - 1).collect();

    let fdp_ok = |t: &[f64], m: usize, layers: &PValueLayers| -> bool {
        let count = count_layer_selected(layers, spec, t, m);
        let g_m = spec.layer(m).num_groups() as f64;
        corr[m] * g_m * t[m] / (count.max(1) as f64) <= cfg.q[m]
    };

    loop {
        let mut changed = false;
        for m in 0..m_layers {
            let t_now: Vec<f64> = cursor
                .iter()
                .enumerate()
                .map(|(mm, &c)| grids[mm][c])
                .collect();
            let mut t_try = t_now.clone();
            let mut c = cursor[m];
            loop {
                t_try[m] = grids[m][c];
                if fdp_ok(&t_try, m, layers) {
                    break;
                }
                // grids contain 0, which always passes (numerator 0)
                c -= 1;
            }
            if c != cursor[m] {
                cursor[m] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let t_star: Vec<f64> = cursor
        .iter()
        .enumerate()
        .map(|(m, &c)| grids[m][c])
        .collect();
    let vars = pfilter_selection(layers, spec, &t_star);
    let sel = induce_group_selections(&vars, spec)?;
    Ok((sel, ThresholdVector::new(t_star)))
}

/// Variables passing every layer's threshold.
fn pfilter_selection(layers: &PValueLayers, spec: &LayerSpec, t: &[f64]) -> BTreeSet<usize> {
    (0..spec.num_variables())
        .filter(|&j| {
            (0..spec.num_layers()).all(|m| layers.layer(m)[spec.group_of(j, m)] <= t[m])
        })
        .collect()
}

/// |S_m(t)|: groups at layer m containing at least one passing variable.
fn count_layer_selected(layers: &PValueLayers, spec: &LayerSpec, t: &[f64], m: usize) -> usize {
    let vars = pfilter_selection(layers, spec, t);
    let groups: BTreeSet<usize> = vars.iter().map(|&j| spec.group_of(j, m)).collect();
    groups.len()
}

/// Exhaustive search over the candidate product grid for the coordinatewise
/// maximal acceptable threshold vector. Test oracle for small instances.
pub fn pfilter_corner_oracle(
    layers: &PValueLayers,
    spec: &LayerSpec,
    cfg: &PfilterConfig,
) -> Result<Vec<f64>> {
    let m_layers = spec.num_layers();
    let corr: Vec<f64> = (0..m_layers)
        .map(|m| match cfg.correction {
            Correction::None => 1.0,
            Correction::Cpf => cpf_multiplier(spec.layer(m).num_groups()),
        })
        .collect();
    let grids: Vec<Vec<f64>> = (0..m_layers)
        .map(|m| {
            let mut g: Vec<f64> = layers.layer(m).to_vec();
            g.push(0.0);
            g.sort_by(|a, b| a.total_cmp(b));
            g.dedup();
            g
        })
        .collect();
    let mut acceptable: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; m_layers];
    'outer: loop {
        let t: Vec<f64> = idx.iter().enumerate().map(|(m, &i)| grids[m][i]).collect();
        let ok = (0..m_layers).all(|m| {
            let count = count_layer_selected(layers, spec, &t, m);
            corr[m] * spec.layer(m).num_groups() as f64 * t[m] / (count.max(1) as f64)
                <= cfg.q[m]
        });
        if ok {
            acceptable.push(t);
        }
        for m in 0..m_layers {
            idx[m] += 1;
            if idx[m] < grids[m].len() {
                continue 'outer;
            }
            idx[m] = 0;
        }
        break;
    }
    // coordinatewise maximum over the acceptable set (0-vector is always in it)
    let corner: Vec<f64> = (0..m_layers)
        .map(|m| {
            acceptable
                .iter()
                .map(|t| t[m])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(corner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn simes_examples() {
        assert_abs_diff_eq!(simes(&[0.03]).unwrap(), 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(simes(&[0.01, 0.5]).unwrap(), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(simes(&[1.0, 1.0, 1.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert!(simes(&[]).is_err());
    }

    #[test]
    fn fisher_examples() {
        // k = 1: identity
        for &u in &[0.037, 0.5, 0.91] {
            assert_abs_diff_eq!(fisher(&[u]).unwrap().value, u, epsilon = 1e-12);
        }
        // closed form for two p-values of 0.5: Q(2, 2 ln 2) = 0.5 (1 + 2 ln 2) / 2
        let got = fisher(&[0.5, 0.5]).unwrap().value;
        let stat: f64 = 4.0 * (2.0f64).ln();
        let expect = (-stat / 2.0).exp() * (1.0 + stat / 2.0);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        assert!((got - 0.5966).abs() < 5e-4);
        // boundary
        assert_abs_diff_eq!(fisher(&[1.0, 1.0]).unwrap().value, 1.0, epsilon = 1e-12);
        // zero clamp
        let z = fisher(&[0.0, 0.4]).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.zero_clamped);
    }

    #[test]
    fn simes_fisher_monotone() {
        let base = [0.2, 0.4, 0.7];
        let lowered = [0.1, 0.4, 0.7];
        assert!(simes(&lowered).unwrap() <= simes(&base).unwrap());
        assert!(fisher(&lowered).unwrap().value <= fisher(&base).unwrap().value);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh(&[0.001], 0.2).unwrap(), vec![0]);
        assert_eq!(bh(&[0.01, 0.02, 0.5, 0.9], 0.2).unwrap(), vec![0, 1]);
        assert!(bh(&[0.9, 0.95], 0.2).unwrap().is_empty());
    }

    #[test]
    fn pfilter_single_layer_equals_bh() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let q = 0.05 + 0.3 * rng.random::<f64>();
            let spec = LayerSpec::new(n, vec![LayerSpec::singleton_partition(n)]).unwrap();
            let layers = PValueLayers::new(vec![p.clone()]).unwrap();
            let cfg = PfilterConfig::new(vec![q], Correction::None).unwrap();
            let (sel, _) = generalized_pfilter(&layers, &spec, &cfg).unwrap();
            let got: Vec<usize> = sel.variables().iter().copied().collect();
            let want = bh(&p, q).unwrap();
            assert_eq!(got, want, "p = {p:?}, q = {q}");
        }
    }

    #[test]
    fn pfilter_two_layer_toy_matches_oracle() {
        // 3 base hypotheses; layer 1 singletons, layer 2 pairs {1,2} and {3}
        let spec = LayerSpec::new(
            3,
            vec![LayerSpec::singleton_partition(3), vec![vec![0, 1], vec![2]]],
        )
        .unwrap();
        let layers = PValueLayers::new(vec![vec![0.01, 0.2, 0.9], vec![0.02, 0.9]]).unwrap();
        let cfg = PfilterConfig::new(vec![0.2, 0.2], Correction::None).unwrap();
        let (sel, t) = generalized_pfilter(&layers, &spec, &cfg).unwrap();
        let corner = pfilter_corner_oracle(&layers, &spec, &cfg).unwrap();
        assert_eq!(t.as_slice(), corner.as_slice());
        // the corner's selection must match as well
        let vars = pfilter_selection(&layers, &spec, &corner);
        assert_eq!(sel.variables(), &vars);
    }

    #[test]
    fn pfilter_all_ones_selects_nothing() {
        let spec = LayerSpec::new(
            4,
            vec![LayerSpec::singleton_partition(4), vec![vec![0, 1], vec![2, 3]]],
        )
        .unwrap();
        let layers = PValueLayers::new(vec![vec![1.0; 4], vec![1.0; 2]]).unwrap();
        let cfg = PfilterConfig::new(vec![0.2, 0.2], Correction::None).unwrap();
        let (sel, _) = generalized_pfilter(&layers, &spec, &cfg).unwrap();
        assert!(sel.is_empty());
    }

    #[test]
    fn pfilter_monotone_in_q() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 8;
            let spec = LayerSpec::new(
                n,
                vec![LayerSpec::singleton_partition(n), vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]],
            )
            .unwrap();
            let p1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let p2: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            let layers = PValueLayers::new(vec![p1, p2]).unwrap();
            let q_small = PfilterConfig::new(vec![0.1, 0.1], Correction::None).unwrap();
            let q_large = PfilterConfig::new(vec![0.3, 0.3], Correction::None).unwrap();
            let (sel_small, _) = generalized_pfilter(&layers, &spec, &q_small).unwrap();
            let (sel_large, _) = generalized_pfilter(&layers, &spec, &q_large).unwrap();
            assert!(sel_small.variables().is_subset(sel_large.variables()));
        }
    }

    #[test]
    fn rejects_out_of_range_pvalues() {
        assert!(PValueLayers::new(vec![vec![0.5, 1.2]]).is_err());
        assert!(PValueLayers::new(vec![vec![f64::NAN]]).is_err());
    }
}
