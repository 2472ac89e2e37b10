//! Scratch calibration harness for the chaotic-series experiment (not part
//! of the deliverable).

use incsfa::batch::batch_sfa;
use incsfa::generators::gen_logistic;
use incsfa::signal::{quadratic_expand, time_embed};
use incsfa::metrics::{correlation, rmse_sign_aligned};
use incsfa::pipeline::{DimReduction, Expansion, IncSfaConfig, IncSfaUnit, McaNormalization};
use nalgebra::{DMatrix, DVector};

fn main() {
    let (series, force) = gen_logistic(1000).unwrap();
    let frames = time_embed(&series, 10).unwrap();
    let oracle = batch_sfa(&frames, 3, true).unwrap();
    let y_oracle = oracle.outputs(&frames).unwrap();
    let force_labels: Vec<f64> = (0..frames.len()).map(|k| force[k + 5]).collect();

    // batch spectrum of the expanded input
    let expanded: Vec<DVector<f64>> = frames.iter().map(|f| quadratic_expand(f).unwrap()).collect();
    let n = expanded.len() as f64;
    let dim = expanded[0].len();
    let mean = expanded.iter().sum::<DVector<f64>>() / n;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for x in &expanded {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    cov /= n;
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut lams: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    lams.sort_by(|a, b| b.total_cmp(a));
    eprintln!(
        "expanded spectrum: top5 {:?}\n  mid {:?}\n  bottom10 {:?}",
        &lams[..5],
        &lams[30..35],
        &lams[dim - 10..]
    );

    // batch floor per retained-K: exact whitening in the top-K PCA subspace,
    // exact minors of the derivative covariance, corr vs full oracle.
    let yo1: Vec<f64> = y_oracle.iter().map(|f| f[0]).collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for kk in [30usize, 32, 34, 35, 36, 38, 40, 42, 44] {
        let basis: Vec<DVector<f64>> = order[..kk]
            .iter()
            .map(|&i| {
                let v = eig.eigenvectors.column(i).into_owned();
                let l = eig.eigenvalues[i].max(1e-300);
                v / l.sqrt()
            })
            .collect();
        let zs: Vec<DVector<f64>> = expanded
            .iter()
            .map(|x| {
                let d = x - &mean;
                DVector::from_fn(kk, |j, _| basis[j].dot(&d))
            })
            .collect();
        let mut czd = DMatrix::<f64>::zeros(kk, kk);
        for t in 1..zs.len() {
            let d = &zs[t] - &zs[t - 1];
            czd += &d * d.transpose();
        }
        czd /= (zs.len() - 1) as f64;
        let e2 = nalgebra::SymmetricEigen::new(czd);
        let mut i2: Vec<usize> = (0..kk).collect();
        i2.sort_by(|&a, &b| e2.eigenvalues[a].total_cmp(&e2.eigenvalues[b]));
        let wst = e2.eigenvectors.column(i2[0]).into_owned();
        let y1: Vec<f64> = zs.iter().map(|z| wst.dot(z)).collect();
        let c_or = correlation(&y1, &yo1).map(f64::abs).unwrap_or(0.0);
        let c_f = correlation(&y1, &force_labels).map(f64::abs).unwrap_or(0.0);
        eprintln!("  K={kk:2}: batch-restricted corr vs oracle {c_or:.4}, vs force {c_f:.4}");
    }

    let mut cfg = IncSfaConfig::defaults(10, 65, 3, 7);
    cfg.expansion = Expansion::Quadratic;
    cfg.mca_rate.eta_low = 0.004;
    cfg.mca_rate.eta_high = 0.004;
    cfg.mca_normalize = McaNormalization::Always;
    let mut epochs = 60u32;
    let args: Vec<String> = std::env::args().collect();
    for a in &args[1..] {
        let mut it = a.splitn(2, '=');
        let k = it.next().unwrap();
        let v = it.next().unwrap_or("");
        match k {
            "c" => cfg.amnesic.c = v.parse().unwrap(),
            "r" => cfg.amnesic.r = v.parse().unwrap(),
            "t1" => cfg.amnesic.t1 = v.parse().unwrap(),
            "t2" => cfg.amnesic.t2 = v.parse().unwrap(),
            "eta" => {
                cfg.mca_rate.eta_low = v.parse().unwrap();
                cfg.mca_rate.eta_high = cfg.mca_rate.eta_low;
            }
            "k" => cfg.num_components = v.parse().unwrap(),
            "beta" => {
                cfg.dim_reduction = Some(DimReduction {
                    beta: v.parse().unwrap(),
                    interval: 2000,
                })
            }
            "interval" => {
                if let Some(dr) = &mut cfg.dim_reduction {
                    dr.interval = v.parse().unwrap();
                }
            }
            "stagger" => cfg.mca_stagger = v.parse().unwrap(),
            "seed" => cfg.seed = v.parse().unwrap(),
            "clip" => {
                let b: f64 = v.parse().unwrap();
                cfg.clip = Some((-b, b));
            }
            "varnorm" => cfg.variance_normalization = v.parse().unwrap(),
            "mean1t" => {
                cfg.mean_amnesic = if v.parse().unwrap() {
                    Some(incsfa::ccipca::AmnesicSchedule::inverse_t())
                } else {
                    None
                }
            }
            "epochs" => epochs = v.parse().unwrap(),
            _ => panic!("unknown knob {k}"),
        }
    }
    eprintln!("config: {cfg:?}");
    let mut unit = IncSfaUnit::new(cfg).unwrap();

    for epoch in 1..=epochs {
        unit.begin_episode();
        unit.update_stream(&frames).unwrap();
        if epoch % 5 != 0 && epoch != 1 {
            continue;
        }
        let out = unit.infer_stream(&frames).unwrap();
        let rmse = rmse_sign_aligned(&out, &y_oracle).unwrap();
        let y1: Vec<f64> = out.iter().map(|f| f[0]).collect();
        let corr_force = correlation(&y1, &force_labels).map(f64::abs).unwrap_or(0.0);
        let yo1: Vec<f64> = y_oracle.iter().map(|f| f[0]).collect();
        let corr1 = correlation(&y1, &yo1).map(f64::abs).unwrap_or(0.0);
        let var1 = {
            let m = y1.iter().sum::<f64>() / y1.len() as f64;
            y1.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y1.len() as f64
        };
        let lam = unit.eigenvalues_descending();
        let kk = lam.len();
        // z covariance deviation
        let zs: Vec<DVector<f64>> = frames.iter().map(|x| unit.whiten(x).unwrap()).collect();
        let mut dev_max: f64 = 0.0;
        let mut zmax: f64 = 0.0;
        for z in &zs {
            zmax = zmax.max(z.amax());
        }
        let zm = zs.iter().sum::<DVector<f64>>() / zs.len() as f64;
        let mut cz = DMatrix::<f64>::zeros(kk, kk);
        for z in &zs {
            let d = z - &zm;
            cz += &d * d.transpose();
        }
        cz /= zs.len() as f64;
        for i in 0..kk {
            for j in 0..kk {
                let target = if i == j { 1.0 } else { 0.0 };
                dev_max = dev_max.max((cz[(i, j)] - target).abs());
            }
        }
        eprintln!(
            "epoch {epoch:2} rmse1 {:.4} corr1 {:.3} corrF {:.3} var1 {:.2e} k={} lam {:.2e}/{:.2e} zmax {:.1e} devmax {:.2} eta_cc {:.2e}",
            rmse[0], corr1, corr_force, var1, kk, lam[0], lam[kk - 1], zmax, dev_max,
            unit.slowness_report().learning_rate,
        );
    }
}
