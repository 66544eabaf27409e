use siagg::aggregation::*;
use siagg::data::SplitConfig;
use siagg::rng::*;
use siagg::simbench::*;
use rand_chacha::rand_core::RngCore;

fn main() {
    let mut cfg = preset_table1();
    cfg.n = 100;
    cfg.seed = 2024;
    cfg.rsnr = 25.0;
    for rep in 0..8 {
        let mut data_rng = replication_rng(cfg.seed, rep, CHANNEL_DATA);
        let (sample, truth) = gen_dataset(&cfg, &mut data_rng).unwrap();
        let split_seed = replication_rng(cfg.seed, rep, CHANNEL_SPLIT).next_u64();
        let mut fit_cfg = FitConfig::new(truth.sigma, TemperatureSelection::Fixed(1.0));
        fit_cfg.split = SplitConfig::fraction(cfg.train_fraction, split_seed);
        let pipeline = fit_pipeline(&sample, &fit_cfg).unwrap();
        // best direction in the section vs theta
        let dirs = pipeline.param_grid().directions();
        let dist_min = dirs.points().iter().map(|p| {
            p.iter().zip(&truth.theta).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt()
        }).fold(f64::INFINITY, f64::min);
        let dist_max = dirs.points().iter().map(|p| {
            p.iter().zip(&truth.theta).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt()
        }).fold(0.0, f64::max);
        // central-zone mise at T=1
        let mut test_rng = replication_rng(cfg.seed, rep, CHANNEL_TEST);
        let mut sampler = uniform_design(2);
        let mut test: Vec<Vec<f64>> = Vec::new();
        while test.len() < 1500 {
            let x = sampler(&mut test_rng);
            let z = truth.theta[0]*x[0] + truth.theta[1]*x[1];
            if z.abs() <= 1.0 { test.push(x); }
        }
        let w = gibbs_weights(pipeline.risks(), 1.0).unwrap();
        let mut acc = 0.0;
        for x in &test {
            let mut p = 0.0;
            for (l, m) in pipeline.members().iter().enumerate() { p += w[l] * m.predict(x); }
            let e = p - truth.regression(x);
            acc += e * e;
        }
        println!("rep {rep}: |section| {} dirs, dist(theta) in [{dist_min:.3},{dist_max:.3}], central T=1 mise {:.4}",
            dirs.len(), acc / test.len() as f64);
    }
}
