//! Scratch calibration harness (not part of the deliverable).

use incsfa::batch::batch_sfa;
use incsfa::generators::gen_simple;
use incsfa::metrics::rmse_sign_aligned;
use incsfa::pipeline::{Expansion, IncSfaConfig, IncSfaUnit, McaNormalization};
use nalgebra::DVector;

fn main() {
    let data = gen_simple(2000).unwrap();
    let oracle = batch_sfa(&data, 3, true).unwrap();
    let oracle_out = oracle.outputs(&data).unwrap();

    // Oracle feature directions in the oracle's whitened space are the
    // canonical axes; to compare subspaces we need the incremental unit's
    // features pulled back to input space vs the oracle's input-space rows.
    let e_oracle: Vec<DVector<f64>> = (0..3).map(|i| oracle.input_space_feature(i)).collect();

    let mut cfg = IncSfaConfig::defaults(2, 5, 3, 7);
    cfg.expansion = Expansion::Quadratic;
    cfg.mca_rate.eta_low = 0.08;
    cfg.mca_rate.eta_high = 0.08;
    cfg.mca_normalize = McaNormalization::Always;
    // knobs under test:
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
            "ramp" => cfg.mca_rate.ramp = v.parse().unwrap(),
            "etalow" => cfg.mca_rate.eta_low = v.parse().unwrap(),
            "adapt" => cfg.adapt_rate = v.parse().unwrap(),
            "seed" => cfg.seed = v.parse().unwrap(),
            "win" => cfg.slowness_window = v.parse().unwrap(),
            "stagger" => cfg.mca_stagger = v.parse().unwrap(),
            "mean1t" => {
                cfg.mean_amnesic = if v.parse().unwrap() {
                    Some(incsfa::ccipca::AmnesicSchedule::inverse_t())
                } else {
                    None
                }
            }
            "epochs" => {}
            _ => panic!("unknown knob {k}"),
        }
    }
    let mut epochs = 10u32;
    for a in &args[1..] {
        if let Some(v) = a.strip_prefix("epochs=") {
            epochs = v.parse().unwrap();
        }
    }
    eprintln!("config: {cfg:?}");
    let mut unit = IncSfaUnit::new(cfg).unwrap();

    for epoch in 1..=epochs {
        let stream_out = unit.update_stream(&data).unwrap();
        let stream_rmse = rmse_sign_aligned(&stream_out, &oracle_out).unwrap();
        let out = unit.infer_stream(&data).unwrap();
        let rmse = rmse_sign_aligned(&out, &oracle_out).unwrap();
        let n = out.len() as f64;
        let mut corr = [0.0f64; 3];
        let mut var = [0.0f64; 3];
        for j in 0..3 {
            let a: Vec<f64> = out.iter().map(|f| f[j]).collect();
            let b: Vec<f64> = oracle_out.iter().map(|f| f[j]).collect();
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
            for t in 0..out.len() {
                let da = a[t] - ma;
                let db = b[t] - mb;
                saa += da * da;
                sbb += db * db;
                sab += da * db;
            }
            corr[j] = (sab / (saa.sqrt() * sbb.sqrt())).abs();
            var[j] = saa / n;
        }
        // subspace alignment: |corr| matrix between unit features and oracle
        // features in input space (cosine of pulled-back directions).
        let mut cos = [[0.0f64; 3]; 3];
        for (i, row) in cos.iter_mut().enumerate() {
            let wi = unit.input_space_feature(i).unwrap();
            for (j, c) in row.iter_mut().enumerate() {
                *c = wi.dot(&e_oracle[j]) / (wi.norm() * e_oracle[j].norm());
            }
        }
        let lam = unit.eigenvalues_descending();
        let sr = unit.slowness_report();
        // whitened-covariance deviation from identity
        let zs: Vec<DVector<f64>> = data.iter().map(|x| unit.whiten(x).unwrap()).collect();
        let k = zs[0].len();
        let zmean = zs.iter().sum::<DVector<f64>>() / n;
        let mut cz = nalgebra::DMatrix::<f64>::zeros(k, k);
        for z in &zs {
            let d = z - &zmean;
            cz += &d * d.transpose();
        }
        cz /= n;
        let dev = (&cz - nalgebra::DMatrix::<f64>::identity(k, k)).norm();
        // whitening-limited floor: batch-exact minor components of the
        // frozen z-stream's derivative covariance used as the readout.
        let mut czd = nalgebra::DMatrix::<f64>::zeros(k, k);
        for t in 1..zs.len() {
            let d = &zs[t] - &zs[t - 1];
            czd += &d * d.transpose();
        }
        czd /= (zs.len() - 1) as f64;
        let eig = nalgebra::SymmetricEigen::new(czd);
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let wstar: Vec<DVector<f64>> = idx
            .iter()
            .take(3)
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let floor_out: Vec<DVector<f64>> = zs
            .iter()
            .map(|z| DVector::from_fn(3, |j, _| wstar[j].dot(z)))
            .collect();
        let floor = rmse_sign_aligned(&floor_out, &oracle_out).unwrap();
        let w_now = unit.feature_vectors();
        let inb: Vec<f64> = (0..3)
            .map(|i| {
                let n = w_now[i].norm();
                if n > 1e-12 { w_now[i].dot(&wstar[i]).abs() / n } else { 0.0 }
            })
            .collect();
        let w = unit.feature_vectors();
        let fdelta: Vec<f64> = (0..3)
            .map(|j| {
                let mut acc = 0.0;
                for t in 1..out.len() {
                    let d = out[t][j] - out[t - 1][j];
                    acc += d * d;
                }
                acc / (out.len() - 1) as f64
            })
            .collect();
        eprintln!(
            "epoch {epoch:2} frozen [{:.4} {:.4} {:.4}] floor [{:.4} {:.4} {:.4}] inb [{:.3} {:.3} {:.3}] corr [{:.3} {:.3} {:.3}] var [{:.3} {:.3} {:.3}] ww [{:.3} {:.3} {:.3}] fD [{:.1e} {:.1e} {:.1e}] lam {:.3}/{:.4} |Cz-I|={:.3} eta={:.3} l1zd={:.2e} gam={:.2e}",
            rmse[0], rmse[1], rmse[2],
            floor[0], floor[1], floor[2],
            inb[0], inb[1], inb[2],
            corr[0], corr[1], corr[2],
            var[0], var[1], var[2],
            w[0].dot(&w[1]).abs(), w[0].dot(&w[2]).abs(), w[1].dot(&w[2]).abs(),
            fdelta[0], fdelta[1], fdelta[2],
            lam[0], lam[4], dev, sr.learning_rate, sr.derivative_lambda1,
            sr.derivative_lambda1 * 1.1,
        );
        let _ = (&stream_rmse, &cos);
    }
}
