//! Shared data model: layered partitions, datasets, selection sets, and the
//! selection/induction logic common to every method.
//!
//! Variable and group indices are 0-based everywhere inside the crate; the
//! CSV/JSON boundary in [`crate::io`] converts to the 1-based external
//! convention exactly once.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One partition of the variables into disjoint groups covering `0..N`.
#[derive(Debug, Clone)]
pub struct Layer {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    /// External labels for the groups (1-based ids in file formats).
    external_ids: Vec<u32>,
}

impl Layer {
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, var: usize) -> usize {
        self.group_of[var]
    }

    pub fn external_id(&self, group: usize) -> u32 {
        self.external_ids[group]
    }
}

/// The M partitions of `{0..N-1}` defining the layers of inference.
///
/// Partitions must be total: a variable that should carry no group
/// interpretation at some layer still needs a group there — give it a
/// singleton.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    num_variables: usize,
    layers: Vec<Layer>,
}

impl LayerSpec {
    /// Build from explicit group lists (0-based variable indices). Every
    /// layer must partition `0..num_variables`.
    pub fn new(num_variables: usize, partitions: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if num_variables == 0 {
            return Err(Error::InvalidInput("need at least one variable".into()));
        }
        if partitions.is_empty() {
            return Err(Error::InvalidInput("need at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(partitions.len());
        for (m, groups) in partitions.into_iter().enumerate() {
            if groups.is_empty() {
                return Err(Error::InvalidInput(format!("layer {} has no groups", m + 1)));
            }
            let mut group_of = vec![usize::MAX; num_variables];
            for (g, members) in groups.iter().enumerate() {
                if members.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "layer {} group {} is empty",
                        m + 1,
                        g + 1
                    )));
                }
                for &j in members {
                    if j >= num_variables {
                        return Err(Error::InvalidInput(format!(
                            "layer {}: variable index {} out of range (N = {})",
                            m + 1,
                            j + 1,
                            num_variables
                        )));
                    }
                    if group_of[j] != usize::MAX {
                        return Err(Error::InvalidInput(format!(
                            "layer {}: variable {} appears in two groups",
                            m + 1,
                            j + 1
                        )));
                    }
                    group_of[j] = g;
                }
            }
            if let Some(j) = group_of.iter().position(|&g| g == usize::MAX) {
                return Err(Error::InvalidInput(format!(
                    "layer {}: variable {} belongs to no group (partitions must be total)",
                    m + 1,
                    j + 1
                )));
            }
            let external_ids = (1..=groups.len() as u32).collect();
            layers.push(Layer {
                groups,
                group_of,
                external_ids,
            });
        }
        Ok(LayerSpec {
            num_variables,
            layers,
        })
    }

    /// As [`LayerSpec::new`], but keeping caller-supplied external group ids.
    pub fn with_external_ids(
        num_variables: usize,
        partitions: Vec<Vec<Vec<usize>>>,
        ids: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let mut spec = Self::new(num_variables, partitions)?;
        if ids.len() != spec.layers.len() {
            return Err(Error::InvalidInput("external id layer count mismatch".into()));
        }
        for (layer, layer_ids) in spec.layers.iter_mut().zip(ids) {
            if layer_ids.len() != layer.groups.len() {
                return Err(Error::InvalidInput("external id group count mismatch".into()));
            }
            layer.external_ids = layer_ids;
        }
        Ok(spec)
    }

    /// The all-singletons partition of `0..n`.
    pub fn singleton_partition(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|j| vec![j]).collect()
    }

    /// Contiguous groups of `size` (the last group absorbs any remainder).
    pub fn contiguous_partition(n: usize, size: usize) -> Vec<Vec<usize>> {
        assert!(size >= 1);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut g: Vec<usize> = Vec::new();
        for j in 0..n {
            g.push(j);
            if g.len() == size && n - j - 1 >= size {
                groups.push(std::mem::take(&mut g));
            }
        }
        if !g.is_empty() {
            groups.push(g);
        }
        groups
    }

    pub fn num_variables(&self) -> usize {
        self.num_variables
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, m: usize) -> &Layer {
        &self.layers[m]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// g(j, m): the group of variable `j` at layer `m`.
    pub fn group_of(&self, var: usize, m: usize) -> usize {
        self.layers[m].group_of[var]
    }
}

/// Design matrix and response, with a flag recording whether the columns of X
/// are centered and unit-norm and y is centered.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    standardized: bool,
    /// Euclidean norms of the original (centered) columns, kept for reporting.
    column_scales: Option<Vec<f64>>,
    column_means: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput("empty design matrix".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::InvalidInput(format!(
                "response length {} does not match {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entries in data".into()));
        }
        Ok(Dataset {
            x,
            y,
            standardized: false,
            column_scales: None,
            column_means: None,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column_scales(&self) -> Option<&[f64]> {
        self.column_scales.as_deref()
    }

    pub fn column_means(&self) -> Option<&[f64]> {
        self.column_means.as_deref()
    }

    /// Replace the response (centering it if the dataset is standardized).
    pub fn with_response(mut self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.x.nrows() {
            return Err(Error::InvalidInput("response length mismatch".into()));
        }
        if self.standardized {
            let mean = y.sum() / y.len() as f64;
            self.y = y.add_scalar(-mean);
        } else {
            self.y = y;
        }
        Ok(self)
    }
}

/// Center X's columns, scale them to unit Euclidean norm, center y.
///
/// Scaling is to unit column norm rather than unit variance so that lasso
/// entry values are comparable across columns. Original column norms are
/// retained for reporting. Idempotent on already-standardized input.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let n = ds.x.nrows();
    let mut x = ds.x.clone();
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mut col = x.column_mut(j);
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if norm <= 1e-12 {
            return Err(Error::Degenerate(format!(
                "column {} of X is constant (zero variance)",
                j + 1
            )));
        }
        col /= norm;
        means.push(mean);
        scales.push(norm);
    }
    let y_mean = ds.y.sum() / n as f64;
    let y = ds.y.add_scalar(-y_mean);
    Ok(Dataset {
        x,
        y,
        standardized: true,
        column_scales: Some(scales),
        column_means: Some(means),
    })
}

/// A set of selected variables together with the group selections it induces
/// at every layer (two-way consistent by construction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionSet {
    variables: BTreeSet<usize>,
    per_layer_groups: Vec<BTreeSet<usize>>,
}

impl SelectionSet {
    pub fn variables(&self) -> &BTreeSet<usize> {
        &self.variables
    }

    pub fn groups(&self, m: usize) -> &BTreeSet<usize> {
        &self.per_layer_groups[m]
    }

    pub fn num_layers(&self) -> usize {
        self.per_layer_groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

/// Group selections induced by a set of variables: a group is selected at
/// layer m iff it contains at least one selected variable.
pub fn induce_group_selections(vars: &BTreeSet<usize>, spec: &LayerSpec) -> Result<SelectionSet> {
    if let Some(&j) = vars.iter().find(|&&j| j >= spec.num_variables()) {
        return Err(Error::InvalidInput(format!(
            "selected variable index {} out of range (N = {})",
            j + 1,
            spec.num_variables()
        )));
    }
    let per_layer_groups = spec
        .layers()
        .iter()
        .map(|layer| vars.iter().map(|&j| layer.group_of(j)).collect())
        .collect();
    Ok(SelectionSet {
        variables: vars.clone(),
        per_layer_groups,
    })
}

/// The set of truly non-null variables; group-level nullness at each layer is
/// derived by the rule that a group is null iff all its variables are null.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    nonnull: BTreeSet<usize>,
}

impl GroundTruth {
    pub fn new(nonnull: BTreeSet<usize>) -> Self {
        GroundTruth { nonnull }
    }

    pub fn nonnull_variables(&self) -> &BTreeSet<usize> {
        &self.nonnull
    }

    pub fn is_var_null(&self, j: usize) -> bool {
        !self.nonnull.contains(&j)
    }

    /// Groups with at least one non-null variable at layer m.
    pub fn nonnull_groups(&self, spec: &LayerSpec, m: usize) -> BTreeSet<usize> {
        self.nonnull
            .iter()
            .map(|&j| spec.group_of(j, m))
            .collect()
    }
}

/// Per-layer false discovery proportion and power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerMetrics {
    pub fdp: f64,
    pub power: f64,
}

/// FDP_m = |S_m ∩ H0_m| / |S_m| (0/0 = 0: the FDP of no discoveries is 0);
/// power_m = fraction of non-null groups at layer m that are selected.
pub fn fdp_and_power(
    sel: &SelectionSet,
    truth: &GroundTruth,
    spec: &LayerSpec,
) -> Vec<LayerMetrics> {
    (0..spec.num_layers())
        .map(|m| {
            let nonnull = truth.nonnull_groups(spec, m);
            let selected = sel.groups(m);
            let false_discoveries = selected.iter().filter(|g| !nonnull.contains(g)).count();
            let fdp = if selected.is_empty() {
                0.0
            } else {
                false_discoveries as f64 / selected.len() as f64
            };
            let power = if nonnull.is_empty() {
                0.0
            } else {
                let hits = nonnull.iter().filter(|g| selected.contains(g)).count();
                hits as f64 / nonnull.len() as f64
            };
            LayerMetrics { fdp, power }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_layer_spec() -> LayerSpec {
        // layer 1: singletons; layer 2: pairs {0,1}, {2,3}
        LayerSpec::new(
            4,
            vec![
                LayerSpec::singleton_partition(4),
                vec![vec![0, 1], vec![2, 3]],
            ],
        )
        .unwrap()
    }

    #[test]
    fn rejects_partial_partition() {
        let err = LayerSpec::new(4, vec![vec![vec![0, 1], vec![2]]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_overlapping_groups() {
        let err = LayerSpec::new(3, vec![vec![vec![0, 1], vec![1, 2]]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn induce_empty_selection() {
        let spec = two_layer_spec();
        let sel = induce_group_selections(&BTreeSet::new(), &spec).unwrap();
        assert!(sel.groups(0).is_empty());
        assert!(sel.groups(1).is_empty());
    }

    #[test]
    fn induce_one_layer_pairs() {
        // N=4, one layer with groups {1,2},{3,4}; vars={1,4} -> S_1 = both groups
        let spec = LayerSpec::new(4, vec![vec![vec![0, 1], vec![2, 3]]]).unwrap();
        let vars: BTreeSet<usize> = [0, 3].into_iter().collect();
        let sel = induce_group_selections(&vars, &spec).unwrap();
        assert_eq!(sel.groups(0).iter().copied().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn induce_two_layers() {
        // vars = {3} (1-based) = {2} internal -> singleton {2}, pair group {2,3}
        let spec = two_layer_spec();
        let vars: BTreeSet<usize> = [2].into_iter().collect();
        let sel = induce_group_selections(&vars, &spec).unwrap();
        assert_eq!(sel.groups(0).iter().copied().collect::<Vec<_>>(), vec![2]);
        assert_eq!(sel.groups(1).iter().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn induce_out_of_range_is_error() {
        let spec = two_layer_spec();
        let vars: BTreeSet<usize> = [7].into_iter().collect();
        assert!(induce_group_selections(&vars, &spec).is_err());
    }

    #[test]
    fn induce_is_monotone() {
        let spec = two_layer_spec();
        let small: BTreeSet<usize> = [1].into_iter().collect();
        let big: BTreeSet<usize> = [1, 2, 3].into_iter().collect();
        let s1 = induce_group_selections(&small, &spec).unwrap();
        let s2 = induce_group_selections(&big, &spec).unwrap();
        for m in 0..2 {
            assert!(s1.groups(m).is_subset(s2.groups(m)));
        }
    }

    #[test]
    fn standardize_constant_column_errors() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let y = DVector::from_element(3, 0.0);
        let ds = Dataset::new(x, y).unwrap();
        let err = standardize(&ds).unwrap_err();
        assert!(err.to_string().contains("column 1"));
    }

    #[test]
    fn standardize_hand_computed_column() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.0]);
        let y = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let ds = Dataset::new(x, y).unwrap();
        let out = standardize(&ds).unwrap();
        let c = out.x().column(0);
        let r2 = std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(c[0], 1.0 / r2, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], -1.0 / r2, epsilon = 1e-15);
        assert_abs_diff_eq!(c[2], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.y().sum(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = DMatrix::from_row_slice(4, 2, &[0.3, -1.2, 1.7, 0.4, -0.9, 2.2, 0.1, -0.6]);
        let y = DVector::from_row_slice(&[1.0, -2.0, 0.5, 0.5]);
        let ds = Dataset::new(x, y).unwrap();
        let once = standardize(&ds).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.x().iter().zip(twice.x().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        for j in 0..once.num_vars() {
            assert_abs_diff_eq!(once.x().column(j).norm(), 1.0, epsilon = 1e-12);
            assert!(once.x().column(j).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn metrics_empty_selection_is_zero() {
        let spec = two_layer_spec();
        let sel = induce_group_selections(&BTreeSet::new(), &spec).unwrap();
        let truth = GroundTruth::new([0].into_iter().collect());
        for m in fdp_and_power(&sel, &truth, &spec) {
            assert_eq!(m.fdp, 0.0);
            assert_eq!(m.power, 0.0);
        }
    }

    #[test]
    fn metrics_one_null_of_three() {
        // 3 selected groups, 1 null among them -> FDP = 1/3
        let spec = LayerSpec::new(6, vec![vec![vec![0, 1], vec![2, 3], vec![4, 5]]]).unwrap();
        let truth = GroundTruth::new([0, 2].into_iter().collect()); // groups 0 and 1 non-null
        let vars: BTreeSet<usize> = [0, 2, 4].into_iter().collect();
        let sel = induce_group_selections(&vars, &spec).unwrap();
        let m = fdp_and_power(&sel, &truth, &spec);
        assert_abs_diff_eq!(m[0].fdp, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[0].power, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn metrics_match_figure_one_counts() {
        // Group-demo scenario: 500 variables in 50 groups of 10, 70 non-nulls
        // spread over the first 10 groups. A selection with 64 true positives
        // and 17 false positives spread over 14 distinct null groups gives
        // FDP_ind = 17/81 and FDP_grp = 14/24, which round to 0.21 and 0.58.
        let n_vars = 500;
        let spec = LayerSpec::new(
            n_vars,
            vec![
                LayerSpec::singleton_partition(n_vars),
                LayerSpec::contiguous_partition(n_vars, 10),
            ],
        )
        .unwrap();
        // 7 non-nulls in each of the first 10 groups
        let nonnull: BTreeSet<usize> = (0..10)
            .flat_map(|g| (0..7).map(move |i| g * 10 + i))
            .collect();
        let truth = GroundTruth::new(nonnull.clone());

        // select 64 of the 70 true (drop one from each of six groups, so all
        // ten groups stay hit), plus 17 false spread over 14 null groups
        let mut vars = nonnull.clone();
        for g in 0..6 {
            vars.remove(&(g * 10 + 6));
        }
        for k in 0..17usize {
            let group = 10 + (k % 14);
            let slot = k / 14;
            vars.insert(group * 10 + slot);
        }
        let sel = induce_group_selections(&vars, &spec).unwrap();
        let m = fdp_and_power(&sel, &truth, &spec);
        assert_abs_diff_eq!(m[0].fdp, 17.0 / 81.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1].fdp, 14.0 / 24.0, epsilon = 1e-12);
        assert_eq!((m[0].fdp * 100.0).round() as i64, 21);
        assert_eq!((m[1].fdp * 100.0).round() as i64, 58);
    }

    #[test]
    fn singleton_layer_groups_equal_variables() {
        let spec = two_layer_spec();
        let vars: BTreeSet<usize> = [0, 3].into_iter().collect();
        let sel = induce_group_selections(&vars, &spec).unwrap();
        assert_eq!(sel.groups(0), &vars);
    }
}
