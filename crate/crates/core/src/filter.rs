//! The multilayer threshold search: false-discovery estimates, the
//! lower-left-corner threshold vector, and the final selection set, plus the
//! classic single-layer knockoff filter used as a reference implementation.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::importance::{compute_layer_statistics, Combiner, KnockoffStatistics, PenaltySpec};
use crate::knockoffs::KnockoffDesign;
use crate::model::{induce_group_selections, Dataset, LayerSpec, SelectionSet};

/// Worst-case multiplier from the random-walk bound; with c = C_KN the
/// multilayer guarantees hold at the nominal levels even in the worst case.
pub const C_KN: f64 = 1.93;

/// Which false-discovery estimate to use: `Plus` adds the +1 needed for
/// exact FDR control, `Basic` controls the modified FDR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Basic,
    Plus,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Plus => "plus",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub q: Vec<f64>,
    pub variant: Variant,
    pub c: f64,
}

impl FilterConfig {
    pub fn new(q: Vec<f64>, variant: Variant, c: f64) -> Result<Self> {
        if q.is_empty() || q.iter().any(|v| !(0.0 < *v && *v < 1.0)) {
            return Err(Error::InvalidInput("targets q must lie in (0, 1)".into()));
        }
        if !(c > 0.0) {
            return Err(Error::InvalidInput("multiplier c must be positive".into()));
        }
        Ok(FilterConfig { q, variant, c })
    }
}

/// Per-layer thresholds in [0, inf]^M; +inf means the layer selects nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    t: Vec<f64>,
}

impl ThresholdVector {
    pub fn new(t: Vec<f64>) -> Self {
        ThresholdVector { t }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }

    pub fn get(&self, m: usize) -> f64 {
        self.t[m]
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Ascending unique magnitudes of the nonzero statistics; groups with W = 0
/// can never be selected, so zero is never a candidate.
pub fn candidate_grid(w: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = w.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    grid
}

/// The false-discovery estimate numerator at one layer:
/// basic: c * #{g : W_g <= -t}; plus: c * (1 + #{g : W_g <= -t}).
pub fn v_hat(w: &[f64], t: f64, cfg: &FilterConfig) -> f64 {
    let below = w.iter().filter(|&&x| x <= -t).count() as f64;
    match cfg.variant {
        Variant::Basic => cfg.c * below,
        Variant::Plus => cfg.c * (1.0 + below),
    }
}

/// Variables passing every layer's threshold:
/// S(t) = {j : W_{g(j,m)}^m >= t_m for all m}.
pub fn selection_at(all_w: &[Vec<f64>], t: &[f64], spec: &LayerSpec) -> BTreeSet<usize> {
    (0..spec.num_variables())
        .filter(|&j| {
            (0..spec.num_layers()).all(|m| all_w[m][spec.group_of(j, m)] >= t[m])
        })
        .collect()
}

fn count_layer_groups(vars: &BTreeSet<usize>, spec: &LayerSpec, m: usize) -> usize {
    let groups: BTreeSet<usize> = vars.iter().map(|&j| spec.group_of(j, m)).collect();
    groups.len()
}

/// Acceptance test used by the threshold search: V_hat_m(t_m) divided by
/// max(1, |S_m(t)|). The max(1, .) denominator is what makes the acceptable
/// region closed under coordinatewise minima (the lower-left-corner
/// property), so the corner is well defined.
fn fdp_hat_accepts(all_w: &[Vec<f64>], t: &[f64], m: usize, spec: &LayerSpec, cfg: &FilterConfig) -> bool {
    let vars = selection_at(all_w, t, spec);
    let denom = count_layer_groups(&vars, spec, m).max(1) as f64;
    v_hat(&all_w[m], t[m], cfg) / denom <= cfg.q[m]
}

/// Reported per-layer FDP estimate at a threshold vector. When the selection
/// is empty this follows the no-discoveries convention: 0 for the basic
/// variant; the plus variant reports +inf (its numerator is at least c) so
/// that an empty selection is never mistaken for a controlled one.
pub fn fdp_hat(all_w: &[Vec<f64>], t: &[f64], m: usize, spec: &LayerSpec, cfg: &FilterConfig) -> f64 {
    let vars = selection_at(all_w, t, spec);
    let denom = count_layer_groups(&vars, spec, m);
    let num = v_hat(&all_w[m], t[m], cfg);
    if denom == 0 {
        match cfg.variant {
            Variant::Basic => 0.0,
            Variant::Plus => f64::INFINITY,
        }
    } else {
        num / denom as f64
    }
}

fn validate_inputs(all_w: &[Vec<f64>], spec: &LayerSpec, cfg: &FilterConfig) -> Result<()> {
    if all_w.len() != spec.num_layers() {
        return Err(Error::InvalidInput(format!(
            "{} statistic layers but spec has {}",
            all_w.len(),
            spec.num_layers()
        )));
    }
    if cfg.q.len() != spec.num_layers() {
        return Err(Error::InvalidInput(format!(
            "{} target levels but spec has {} layers",
            cfg.q.len(),
            spec.num_layers()
        )));
    }
    for (m, w) in all_w.iter().enumerate() {
        if w.len() != spec.layer(m).num_groups() {
            return Err(Error::InvalidInput(format!(
                "layer {}: {} statistics but {} groups",
                m + 1,
                w.len(),
                spec.layer(m).num_groups()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("layer {}: non-finite statistic", m + 1)));
        }
    }
    Ok(())
}

/// Coordinate-wise search for the lower-left corner of the acceptable
/// threshold region: start every t_m at its smallest candidate magnitude and
/// repeatedly raise each coordinate to the smallest candidate whose
/// FDP estimate passes given the other coordinates, until a full sweep makes
/// no change. A coordinate that exhausts its grid sticks at +inf (that layer,
/// and hence the whole selection, is empty).
pub fn find_thresholds(all_w: &[Vec<f64>], spec: &LayerSpec, cfg: &FilterConfig) -> Result<ThresholdVector> {
    validate_inputs(all_w, spec, cfg)?;
    let m_layers = spec.num_layers();
    let grids: Vec<Vec<f64>> = all_w
        .iter()
        .map(|w| {
            let mut g = candidate_grid(w);
            g.push(f64::INFINITY);
            g
        })
        .collect();
    let mut cursor = vec![0usize; m_layers];

    loop {
        let mut changed = false;
        for m in 0..m_layers {
            let mut t: Vec<f64> = (0..m_layers).map(|mm| grids[mm][cursor[mm]]).collect();
            while cursor[m] + 1 < grids[m].len() {
                t[m] = grids[m][cursor[m]];
                if fdp_hat_accepts(all_w, &t, m, spec, cfg) {
                    break;
                }
                cursor[m] += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    Ok(ThresholdVector::new(
        (0..m_layers).map(|m| grids[m][cursor[m]]).collect(),
    ))
}

/// Exhaustive search over the full candidate product grid for the
/// coordinatewise minimum of the acceptable region; panics if the region is
/// nonempty but does not contain its corner. Oracle for small instances.
pub fn corner_oracle(all_w: &[Vec<f64>], spec: &LayerSpec, cfg: &FilterConfig) -> Result<ThresholdVector> {
    validate_inputs(all_w, spec, cfg)?;
    let m_layers = spec.num_layers();
    let grids: Vec<Vec<f64>> = all_w
        .iter()
        .map(|w| {
            let mut g = candidate_grid(w);
            g.push(f64::INFINITY);
            g
        })
        .collect();
    let mut acceptable: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; m_layers];
    'outer: loop {
        let t: Vec<f64> = idx.iter().enumerate().map(|(m, &i)| grids[m][i]).collect();
        if (0..m_layers).all(|m| fdp_hat_accepts(all_w, &t, m, spec, cfg)) {
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
    if acceptable.is_empty() {
        return Ok(ThresholdVector::new(vec![f64::INFINITY; m_layers]));
    }
    let corner: Vec<f64> = (0..m_layers)
        .map(|m| acceptable.iter().map(|t| t[m]).fold(f64::INFINITY, f64::min))
        .collect();
    let corner_ok = (0..m_layers).all(|m| fdp_hat_accepts(all_w, &corner, m, spec, cfg));
    assert!(corner_ok, "acceptable region lost its lower-left corner");
    Ok(ThresholdVector::new(corner))
}

/// Output of a full multilayer run.
#[derive(Debug, Clone)]
pub struct MkfOutput {
    pub selection: SelectionSet,
    pub thresholds: ThresholdVector,
    pub statistics: Vec<KnockoffStatistics>,
}

/// End-to-end multilayer knockoff filter: per-layer statistics from the
/// provided knockoff designs, threshold search, induced selection.
pub fn run_mkf(
    ds: &Dataset,
    spec: &LayerSpec,
    designs: &[KnockoffDesign],
    pen: &PenaltySpec,
    combiner: Combiner,
    cfg: &FilterConfig,
) -> Result<MkfOutput> {
    if designs.len() != spec.num_layers() {
        return Err(Error::InvalidInput(format!(
            "{} knockoff designs but spec has {} layers",
            designs.len(),
            spec.num_layers()
        )));
    }
    let statistics: Vec<KnockoffStatistics> = spec
        .layers()
        .iter()
        .zip(designs)
        .map(|(layer, design)| compute_layer_statistics(ds, design, layer.groups(), pen, combiner))
        .collect::<Result<_>>()?;
    let all_w: Vec<Vec<f64>> = statistics.iter().map(|s| s.w.clone()).collect();
    let thresholds = find_thresholds(&all_w, spec, cfg)?;
    let vars = selection_at(&all_w, thresholds.as_slice(), spec);
    let selection = induce_group_selections(&vars, spec)?;
    Ok(MkfOutput {
        selection,
        thresholds,
        statistics,
    })
}

/// The classic single-layer knockoff filter: the smallest threshold t in the
/// magnitude grid with V_hat(t) / max(1, #{W >= t}) <= q; returns the selected
/// group indices and the threshold (+inf and empty when nothing passes).
pub fn knockoff_filter(w: &[f64], q: f64, variant: Variant, c: f64) -> (BTreeSet<usize>, f64) {
    let cfg = FilterConfig {
        q: vec![q],
        variant,
        c,
    };
    for t in candidate_grid(w) {
        let selected = w.iter().filter(|&&x| x >= t).count();
        if v_hat(w, t, &cfg) / (selected.max(1) as f64) <= q {
            let set = w
                .iter()
                .enumerate()
                .filter(|(_, &x)| x >= t)
                .map(|(g, _)| g)
                .collect();
            return (set, t);
        }
    }
    (BTreeSet::new(), f64::INFINITY)
}
