// quick diagnostic binary
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use wlm_core::markov::Lmmc;
use wlm_core::metric::{LabelMetric, MetricKind};
use wlm_core::coupling::{bicausal_lp_with_plan, check_bicausal, DEFAULT_LP_VAR_CAP};

fn random_chain(rng: &mut ChaCha8Rng, n: usize, d: usize, force_dup: bool) -> Lmmc {
    let mut kernel = Array2::zeros((n, n));
    for i in 0..n {
        let mut row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
        if n > 1 && rng.gen_bool(0.25) {
            let j = rng.gen_range(0..n);
            if j != i { row[j] = 0.0; }
        }
        let s: f64 = row.iter().sum();
        for j in 0..n { kernel[[i, j]] = row[j] / s; }
    }
    let mut mu: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= s);
    let mut labels = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    if force_dup && n > 1 { for j in 0..d { labels[[1, j]] = labels[[0, j]]; } }
    Lmmc::new(kernel, Array1::from(mu), labels, LabelMetric::new(MetricKind::L1, d).unwrap()).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    for t in 0..200 {
        let nx = rng.gen_range(2..=3);
        let ny = rng.gen_range(2..=3);
        let k = rng.gen_range(0..=2);
        let d = rng.gen_range(1..=2);
        let dup = t % 10 == 9;
        let x = random_chain(&mut rng, nx, d, dup);
        let y = random_chain(&mut rng, ny, d, false);
        let (lp, plan) = bicausal_lp_with_plan(&x, &y, k, DEFAULT_LP_VAR_CAP).unwrap();
        let bw = wlm_core::wl::wl_distance(&x, &y, k).unwrap().distance;
        if (lp - bw).abs() > 1e-8 {
            let bc = check_bicausal(&plan, &x, &y);
            println!("instance {t}: nx={nx} ny={ny} k={k} lp={lp:.9} backward={bw:.9} (diff {:.3e}) argmin bicausal: {bc}", lp - bw);
            println!("x kernel: {:?}", x.kernel());
            println!("x mu: {:?}", x.mu());
            println!("y kernel: {:?}", y.kernel());
            println!("y mu: {:?}", y.mu());
        }
    }
    println!("all done");
}
