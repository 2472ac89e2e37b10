//! Scratch diagnostic: isolate the slow-feature extractor on an exact
//! batch-whitened derivative stream, sweeping the learning rate.

use incsfa::signal::quadratic_expand;
use incsfa::generators::gen_simple;
use incsfa::mca::{GammaEstimator, SlowFeatureSet};
use nalgebra::{DMatrix, DVector};

fn main() {
    let mut eta: f64 = 0.08;
    let mut epochs: usize = 10;
    let mut gamma_mode = String::from("true"); // "true" | "est"
    let mut j: usize = 3;
    for arg in std::env::args().skip(1) {
        if let Some((k, v)) = arg.split_once('=') {
            match k {
                "eta" => eta = v.parse().unwrap(),
                "epochs" => epochs = v.parse().unwrap(),
                "gamma" => gamma_mode = v.to_string(),
                "j" => j = v.parse().unwrap(),
                _ => panic!("unknown knob {k}"),
            }
        }
    }

    let data = gen_simple(2000).unwrap();
    let expanded: Vec<DVector<f64>> = data.iter().map(|x| quadratic_expand(x).unwrap()).collect();
    let n = expanded.len();
    let dim = expanded[0].len();

    // Exact batch whitening.
    let mean = expanded.iter().fold(DVector::zeros(dim), |a, x| a + x) / n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in &expanded {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut wmat = DMatrix::zeros(dim, dim);
    for (row, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i].max(1e-12);
        let v = eig.eigenvectors.column(i) / lam.sqrt();
        wmat.set_row(row, &v.transpose());
    }

    let z: Vec<DVector<f64>> = expanded.iter().map(|x| &wmat * (x - &mean)).collect();
    let zdot: Vec<DVector<f64>> = (1..n).map(|t| &z[t] - &z[t - 1]).collect();

    // Exact derivative covariance -> ground-truth eigenbasis.
    let mut cd = DMatrix::zeros(dim, dim);
    for d in &zdot {
        cd += d * d.transpose();
    }
    cd /= zdot.len() as f64;
    let eigd = nalgebra::SymmetricEigen::new(cd);
    let mut dorder: Vec<usize> = (0..dim).collect();
    dorder.sort_by(|&a, &b| eigd.eigenvalues[a].partial_cmp(&eigd.eigenvalues[b]).unwrap());
    let dvals: Vec<f64> = dorder.iter().map(|&i| eigd.eigenvalues[i]).collect();
    println!("derivative eigenvalues (asc): {dvals:?}");
    let lam1 = dvals[dim - 1];
    let gamma_true = 1.1 * lam1;

    let mut set = SlowFeatureSet::new(j, dim, 42).unwrap();
    let mut gest = GammaEstimator::new(dim);
    let mut step = 0usize;
    for ep in 1..=epochs {
        for t in 1..n {
            let d = &z[t] - &z[t - 1];
            gest.update(&d, 1.0 / (step + 1) as f64).unwrap();
            let gamma = if gamma_mode == "true" { gamma_true } else { gest.gamma() };
            set.update(&d, gamma, eta, true).unwrap();
            step += 1;
        }
        // Alignment of each feature with each true eigendirection (asc).
        print!("ep {ep:2} ");
        for i in 0..j {
            let wi = &set.features()[i];
            let aligns: Vec<f64> = dorder
                .iter()
                .map(|&k| (wi.dot(&eigd.eigenvectors.column(k).into_owned())).abs())
                .collect();
            let best = aligns
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            print!(
                "| w{} a[{:.3} {:.3} {:.3} {:.3} {:.3}] best=e{}({:.3}) ",
                i + 1,
                aligns[0],
                aligns[1],
                aligns[2],
                aligns[3],
                aligns[4],
                best.0 + 1,
                best.1
            );
        }
        println!("| gest={:.4e}", gest.lambda1());
    }
}
