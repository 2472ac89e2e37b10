//! Scratch: CCIPCA-in-isolation convergence check (not a deliverable).

use incsfa::ccipca::{AmnesicSchedule, PrincipalComponentSet};
use incsfa::generators::gen_simple;
use incsfa::signal::quadratic_expand;
use nalgebra::{DMatrix, DVector};

fn main() {
    let data = gen_simple(2000).unwrap();
    let xs: Vec<DVector<f64>> = data.iter().map(|x| quadratic_expand(x).unwrap()).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<DVector<f64>>() / n;
    let us: Vec<DVector<f64>> = xs.iter().map(|x| x - &mean).collect();
    let mut c = DMatrix::<f64>::zeros(5, 5);
    for u in &us {
        c += u * u.transpose();
    }
    c /= n;
    let eig = c.clone().symmetric_eigen();
    // sort descending
    let mut idx: Vec<usize> = (0..5).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let lam_true: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let v_true: Vec<DVector<f64>> = idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    eprintln!("true lambda: {lam_true:?}");

    let mut sched = AmnesicSchedule { t1: 20, t2: 200, c: 2.0, r: 5000.0 };
    let args: Vec<String> = std::env::args().collect();
    for a in &args[1..] {
        let mut it = a.splitn(2, '=');
        let k = it.next().unwrap();
        let v = it.next().unwrap_or("");
        match k {
            "c" => sched.c = v.parse().unwrap(),
            "r" => sched.r = v.parse().unwrap(),
            "t1" => sched.t1 = v.parse().unwrap(),
            "t2" => sched.t2 = v.parse().unwrap(),
            _ => panic!("unknown knob {k}"),
        }
    }
    let running_mean = std::env::var("RUNNING_MEAN").is_ok();
    let mut pcs = PrincipalComponentSet::new(5, 5).unwrap();
    let mut mean_est = DVector::<f64>::zeros(5);
    let mut t = 0u64;
    for epoch in 1..=10 {
        for x in &xs {
            t += 1;
            let eta = sched.rate(t);
            let u = if running_mean {
                let eta_mean = if std::env::var("MEAN_1T").is_ok() {
                    1.0 / t as f64
                } else {
                    eta
                };
                mean_est = &mean_est * (1.0 - eta_mean) + x * eta_mean;
                x - &mean_est
            } else {
                x - &mean
            };
            pcs.update(&u, eta).unwrap();
        }
        let lam_est = pcs.eigenvalues();
        let mut line = format!("epoch {epoch:2} ");
        for i in 0..5 {
            let v = &pcs.vectors()[i];
            let align = (v.dot(&v_true[i]) / v.norm()).abs();
            line += &format!(" [{} l={:.4}/{:.4} a={:.3}]", i, lam_est[i], lam_true[i], align);
        }
        // whitened covariance from current estimates (batch-mean centering)
        let rows: Vec<DVector<f64>> = pcs
            .vectors()
            .iter()
            .map(|v| v / (v.norm() * v.norm().sqrt()))
            .collect();
        let zs: Vec<DVector<f64>> = us
            .iter()
            .map(|u| DVector::from_iterator(5, rows.iter().map(|r| r.dot(u))))
            .collect();
        let zm = zs.iter().sum::<DVector<f64>>() / n;
        let mut cz = DMatrix::<f64>::zeros(5, 5);
        for z in &zs {
            let d = z - &zm;
            cz += &d * d.transpose();
        }
        cz /= n;
        let dev = (&cz - DMatrix::<f64>::identity(5, 5)).norm();
        eprintln!("{line} |Cz-I|={dev:.3}");
    }
}
