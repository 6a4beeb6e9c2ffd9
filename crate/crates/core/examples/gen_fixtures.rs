use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;

fn main() {
    let dir = std::env::args().nth(1).expect("output dir");
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let (n, p) = (40usize, 10usize);
    let x: DMatrix<f64> = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let mut beta = DVector::zeros(p);
    for j in 0..6 {
        beta[j] = 3.0;
    }
    let noise: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let y: DVector<f64> = &x * beta + noise * 0.5;

    let mut xs = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..p).map(|j| format!("{:.12}", x[(i, j)])).collect();
        writeln!(xs, "{}", row.join(",")).unwrap();
    }
    std::fs::write(format!("{dir}/toy_x.csv"), xs).unwrap();
    let mut ys = String::new();
    for i in 0..n {
        writeln!(ys, "{:.12}", y[i]).unwrap();
    }
    std::fs::write(format!("{dir}/toy_y.csv"), ys).unwrap();

    // two layers: singletons, then pairs
    let mut gs = String::from("variable,layer,group\n");
    for j in 1..=p {
        writeln!(gs, "{j},1,{j}").unwrap();
    }
    for j in 1..=p {
        writeln!(gs, "{j},2,{}", (j + 1) / 2).unwrap();
    }
    std::fs::write(format!("{dir}/toy_groups.csv"), gs).unwrap();

    // single singleton layer over the same variables
    let mut g1 = String::from("variable,layer,group\n");
    for j in 1..=p {
        writeln!(g1, "{j},1,{j}").unwrap();
    }
    std::fs::write(format!("{dir}/toy_groups_m1.csv"), g1).unwrap();

    // p-filter toy: 3 hypotheses, singleton layer + {1,2},{3}
    std::fs::write(
        format!("{dir}/pf_groups.csv"),
        "variable,layer,group\n1,1,1\n2,1,2\n3,1,3\n1,2,1\n2,2,1\n3,2,2\n",
    )
    .unwrap();
    std::fs::write(
        format!("{dir}/pf_pvalues.csv"),
        "layer,group,pvalue\n1,1,0.01\n1,2,0.2\n1,3,0.9\n2,1,0.02\n2,2,0.9\n",
    )
    .unwrap();

    // BH fixture: 4 hypotheses, single singleton layer, base p-values
    std::fs::write(
        format!("{dir}/bh_groups.csv"),
        "variable,layer,group\n1,1,1\n2,1,2\n3,1,3\n4,1,4\n",
    )
    .unwrap();
    std::fs::write(
        format!("{dir}/bh_pvalues.csv"),
        "variable,pvalue\n1,0.01\n2,0.02\n3,0.5\n4,0.9\n",
    )
    .unwrap();

    // fisher zero-clamp fixture
    std::fs::write(
        format!("{dir}/zero_pvalues.csv"),
        "variable,pvalue\n1,0.0\n2,0.4\n3,0.7\n4,0.2\n",
    )
    .unwrap();

    // tiny simulation config
    std::fs::write(
        format!("{dir}/sim_small.toml"),
        "design = \"ar1_linear\"\nn = 120\nnum_vars = 40\nrho = 0.2\nsnr = 1.5\n\
         k_groups = 2\nn_nonzero = 6\ngroup_size = 10\nmethods = [\"KF\", \"MKF+\", \"BH\", \"PF\"]\n\
         q = [0.25, 0.25]\nreps = 2\nmaster_seed = 99\npattern_seed = 1\n",
    )
    .unwrap();
    println!("fixtures written to {dir}");
}
