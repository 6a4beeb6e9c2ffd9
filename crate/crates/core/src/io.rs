//! File formats shared with the command-line front end: layered group
//! specifications, matrices, p-values (all CSV) and the JSON result records.
//!
//! External formats are 1-based; the conversion to the crate's 0-based
//! indices happens here and nowhere else.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{fdp_hat, v_hat, FilterConfig, MkfOutput};
use crate::model::LayerSpec;
use crate::pfilter::PValueLayers;
use crate::sim::{ExperimentResult, Method};

fn csv_err(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::Csv(format!("{}: {detail}", path.display()))
}

/// Read a LayerSpec from CSV with header `variable,layer,group`, one row per
/// (variable, layer) pair, all 1-based. Rejects partial layers. Group ids
/// within a layer may be arbitrary positive integers; they are kept as
/// external labels.
pub fn read_layer_spec_csv(path: &Path) -> Result<LayerSpec> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    {
        let headers = reader.headers().map_err(|e| csv_err(path, e))?;
        let expect = ["variable", "layer", "group"];
        if headers.len() != 3 || headers.iter().zip(expect).any(|(h, e)| h != e) {
            return Err(csv_err(path, "expected header 'variable,layer,group'"));
        }
    }
    // (layer -> variable -> group id)
    let mut assignments: BTreeMap<u32, BTreeMap<u32, u32>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = line + 2;
        let parse = |idx: usize, name: &str| -> Result<u32> {
            record
                .get(idx)
                .ok_or_else(|| csv_err(path, format!("row {row}: missing {name}")))?
                .parse::<u32>()
                .map_err(|_| csv_err(path, format!("row {row}: bad {name}")))
        };
        let variable = parse(0, "variable")?;
        let layer = parse(1, "layer")?;
        let group = parse(2, "group")?;
        if variable == 0 || layer == 0 {
            return Err(csv_err(path, format!("row {row}: indices are 1-based")));
        }
        let prev = assignments.entry(layer).or_default().insert(variable, group);
        if prev.is_some() {
            return Err(csv_err(
                path,
                format!("row {row}: variable {variable} assigned twice in layer {layer}"),
            ));
        }
    }
    if assignments.is_empty() {
        return Err(csv_err(path, "no assignments"));
    }
    let num_layers = assignments.len() as u32;
    if *assignments.keys().last().unwrap() != num_layers || *assignments.keys().next().unwrap() != 1 {
        return Err(csv_err(path, "layers must be numbered 1..M with no gaps"));
    }
    let num_vars = assignments[&1].len();
    let mut partitions = Vec::new();
    let mut external = Vec::new();
    for (layer, vars) in &assignments {
        if vars.len() != num_vars {
            return Err(csv_err(
                path,
                format!(
                    "layer {layer} covers {} variables but layer 1 covers {num_vars} (partial layer)",
                    vars.len()
                ),
            ));
        }
        for j in 1..=num_vars as u32 {
            if !vars.contains_key(&j) {
                return Err(csv_err(path, format!("layer {layer}: variable {j} missing")));
            }
        }
        // groups ordered by external id
        let mut by_group: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (&var, &gid) in vars {
            by_group.entry(gid).or_default().push(var as usize - 1);
        }
        external.push(by_group.keys().copied().collect::<Vec<u32>>());
        partitions.push(by_group.into_values().collect::<Vec<Vec<usize>>>());
    }
    LayerSpec::with_external_ids(num_vars, partitions, external)
}

/// Headerless CSV matrix of floats, rows of equal length.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row: Vec<f64> = record
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| csv_err(path, format!("row {}: bad number '{v}'", line + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(csv_err(path, format!("row {}: ragged row", line + 1)));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_err(path, "empty matrix"));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Single-column headerless CSV vector.
pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(csv_err(path, format!("expected one column, found {}", m.ncols())));
    }
    Ok(DVector::from_column_slice(m.column(0).as_slice()))
}

/// Write a matrix as headerless CSV.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Base-level p-values: CSV with header `variable,pvalue`, complete 1..N.
pub fn read_base_pvalues_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    {
        let headers = reader.headers().map_err(|e| csv_err(path, e))?;
        if headers.len() != 2 || &headers[0] != "variable" || &headers[1] != "pvalue" {
            return Err(csv_err(path, "expected header 'variable,pvalue'"));
        }
    }
    let mut by_var: BTreeMap<u32, f64> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = line + 2;
        let var: u32 = record[0]
            .parse()
            .map_err(|_| csv_err(path, format!("row {row}: bad variable")))?;
        let p: f64 = record[1]
            .parse()
            .map_err(|_| csv_err(path, format!("row {row}: bad pvalue")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(csv_err(path, format!("row {row}: p-value {p} outside [0, 1]")));
        }
        if by_var.insert(var, p).is_some() {
            return Err(csv_err(path, format!("row {row}: duplicate variable {var}")));
        }
    }
    let n = by_var.len() as u32;
    for j in 1..=n {
        if !by_var.contains_key(&j) {
            return Err(csv_err(path, format!("variable {j} missing")));
        }
    }
    Ok(by_var.into_values().collect())
}

/// Precomputed group p-values: CSV with header `layer,group,pvalue`, complete
/// for every group of every layer of `spec` (groups named by external id).
pub fn read_group_pvalues_csv(path: &Path, spec: &LayerSpec) -> Result<PValueLayers> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    {
        let headers = reader.headers().map_err(|e| csv_err(path, e))?;
        if headers.len() != 3
            || &headers[0] != "layer"
            || &headers[1] != "group"
            || &headers[2] != "pvalue"
        {
            return Err(csv_err(path, "expected header 'layer,group,pvalue'"));
        }
    }
    let mut values: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); spec.num_layers()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = line + 2;
        let layer: usize = record[0]
            .parse()
            .map_err(|_| csv_err(path, format!("row {row}: bad layer")))?;
        let group: u32 = record[1]
            .parse()
            .map_err(|_| csv_err(path, format!("row {row}: bad group")))?;
        let p: f64 = record[2]
            .parse()
            .map_err(|_| csv_err(path, format!("row {row}: bad pvalue")))?;
        if layer == 0 || layer > spec.num_layers() {
            return Err(csv_err(path, format!("row {row}: layer {layer} out of range")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(csv_err(path, format!("row {row}: p-value {p} outside [0, 1]")));
        }
        if values[layer - 1].insert(group, p).is_some() {
            return Err(csv_err(path, format!("row {row}: duplicate group {group}")));
        }
    }
    let mut layers = Vec::with_capacity(spec.num_layers());
    for (m, map) in values.iter().enumerate() {
        let layer = spec.layer(m);
        let mut p = Vec::with_capacity(layer.num_groups());
        for g in 0..layer.num_groups() {
            let id = layer.external_id(g);
            match map.get(&id) {
                Some(&v) => p.push(v),
                None => {
                    return Err(csv_err(path, format!("layer {}: group {id} missing", m + 1)));
                }
            }
        }
        if map.len() != layer.num_groups() {
            return Err(csv_err(
                path,
                format!("layer {}: {} p-values for {} groups", m + 1, map.len(), layer.num_groups()),
            ));
        }
        layers.push(p);
    }
    PValueLayers::new(layers)
}

/// Dump per-group importance data as CSV `layer,group,Z,Z_tilde,W`.
pub fn write_statistics_csv(
    path: &Path,
    spec: &LayerSpec,
    pairs: &[crate::importance::ImportancePair],
    stats: &[crate::importance::KnockoffStatistics],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "layer,group,Z,Z_tilde,W")?;
    for (m, (pair, stat)) in pairs.iter().zip(stats).enumerate() {
        let layer = spec.layer(m);
        for g in 0..layer.num_groups() {
            writeln!(
                out,
                "{},{},{},{},{}",
                m + 1,
                layer.external_id(g),
                pair.z[g],
                pair.z_tilde[g],
                stat.w[g]
            )?;
        }
    }
    Ok(())
}

/// One layer of the JSON result record. `t_star` is null when the layer's
/// threshold is +inf (nothing selectable there).
#[derive(Debug, Clone, Serialize)]
pub struct LayerResultRecord {
    pub groups: Vec<u32>,
    pub n_selected: usize,
    pub q: f64,
    pub t_star: Option<f64>,
    pub v_hat: f64,
    pub fdp_hat: Option<f64>,
}

/// The JSON result record for filter runs.
#[derive(Debug, Clone, Serialize)]
pub struct FilterResultRecord {
    pub c: f64,
    pub layers: Vec<LayerResultRecord>,
    pub selected_variables: Vec<u32>,
    pub variant: String,
}

impl FilterResultRecord {
    pub fn from_mkf(out: &MkfOutput, spec: &LayerSpec, cfg: &FilterConfig) -> Self {
        let all_w: Vec<Vec<f64>> = out.statistics.iter().map(|s| s.w.clone()).collect();
        let layers = (0..spec.num_layers())
            .map(|m| {
                let t_m = out.thresholds.get(m);
                let layer = spec.layer(m);
                let est = fdp_hat(&all_w, out.thresholds.as_slice(), m, spec, cfg);
                LayerResultRecord {
                    groups: out
                        .selection
                        .groups(m)
                        .iter()
                        .map(|&g| layer.external_id(g))
                        .collect(),
                    n_selected: out.selection.groups(m).len(),
                    q: cfg.q[m],
                    t_star: if t_m.is_finite() { Some(t_m) } else { None },
                    v_hat: v_hat(&all_w[m], t_m, cfg),
                    fdp_hat: if est.is_finite() { Some(est) } else { None },
                }
            })
            .collect();
        FilterResultRecord {
            c: cfg.c,
            layers,
            selected_variables: out
                .selection
                .variables()
                .iter()
                .map(|&j| j as u32 + 1)
                .collect(),
            variant: cfg.variant.as_str().to_string(),
        }
    }
}

/// JSON record for p-filter runs, mirroring the filter record's shape.
#[derive(Debug, Clone, Serialize)]
pub struct PfilterResultRecord {
    pub layers: Vec<LayerResultRecord>,
    pub selected_variables: Vec<u32>,
    pub correction: String,
}

/// Reproducibility manifest written next to every CLI output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub library_version: String,
    pub outputs: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub wall_time_seconds: f64,
}

/// Serialize with sorted keys (serde_json's Value object is a BTreeMap), the
/// stable form used for golden files.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&v).expect("JSON encoding");
    s.push('\n');
    s
}

/// Experiment results as CSV
/// `method,layer,param,param_value,fdr,fdr_se,power,power_se`.
pub fn write_experiment_csv(
    path: &Path,
    blocks: &[(String, f64, ExperimentResult)],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "method,layer,param,param_value,fdr,fdr_se,power,power_se")?;
    for (param, value, result) in blocks {
        for s in &result.summaries {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.method.as_str(),
                s.layer + 1,
                param,
                value,
                s.mean_fdp,
                s.fdp_se,
                s.mean_power,
                s.power_se
            )?;
        }
    }
    Ok(())
}

/// Parse a comma-separated list of methods.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',')
        .map(|tok| Method::parse(tok.trim()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn layer_spec_roundtrip() {
        let csv = "variable,layer,group\n\
                   1,1,1\n2,1,1\n3,1,2\n4,1,2\n\
                   1,2,10\n2,2,10\n3,2,10\n4,2,20\n";
        let f = write_tmp(csv);
        let spec = read_layer_spec_csv(f.path()).unwrap();
        assert_eq!(spec.num_variables(), 4);
        assert_eq!(spec.num_layers(), 2);
        assert_eq!(spec.layer(0).num_groups(), 2);
        assert_eq!(spec.layer(1).num_groups(), 2);
        assert_eq!(spec.group_of(3, 1), 1);
        assert_eq!(spec.layer(1).external_id(0), 10);
        assert_eq!(spec.layer(1).external_id(1), 20);
    }

    #[test]
    fn layer_spec_rejects_partial_layer() {
        let csv = "variable,layer,group\n1,1,1\n2,1,1\n1,2,1\n";
        let f = write_tmp(csv);
        let err = read_layer_spec_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("partial") || err.to_string().contains("missing"));
    }

    #[test]
    fn layer_spec_rejects_duplicates() {
        let csv = "variable,layer,group\n1,1,1\n1,1,2\n";
        let f = write_tmp(csv);
        assert!(read_layer_spec_csv(f.path()).is_err());
    }

    #[test]
    fn matrix_and_vector_parsing() {
        let f = write_tmp("1.5,2\n-0.25,4\n");
        let m = read_matrix_csv(f.path()).unwrap();
        assert_eq!(m.nrows(), 2);
        assert_eq!(m[(1, 0)], -0.25);
        let ragged = write_tmp("1,2\n3\n");
        assert!(read_matrix_csv(ragged.path()).is_err());
        let v = write_tmp("1\n2\n3\n");
        assert_eq!(read_vector_csv(v.path()).unwrap().len(), 3);
    }

    #[test]
    fn base_pvalues_validation() {
        let good = write_tmp("variable,pvalue\n1,0.5\n2,0.25\n");
        assert_eq!(read_base_pvalues_csv(good.path()).unwrap(), vec![0.5, 0.25]);
        let bad_range = write_tmp("variable,pvalue\n1,1.5\n");
        assert!(read_base_pvalues_csv(bad_range.path()).is_err());
        let gap = write_tmp("variable,pvalue\n1,0.5\n3,0.25\n");
        assert!(read_base_pvalues_csv(gap.path()).is_err());
    }

    #[test]
    fn sorted_json_keys() {
        #[derive(Serialize)]
        struct Demo {
            zebra: u32,
            alpha: u32,
        }
        let s = to_sorted_json(&Demo { zebra: 1, alpha: 2 });
        let za = s.find("zebra").unwrap();
        let al = s.find("alpha").unwrap();
        assert!(al < za);
    }
}
