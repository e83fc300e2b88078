use loadscale::experiment::*;
use loadscale::forecast::{ForecasterSpec, SarSpec};
use loadscale::metrics::Metric;
use loadscale::scaling::fit_scaling_law;
use loadscale::synth::DeviationModel;
fn main() {
    let mut c = ExperimentConfig::desk(20_240_601);
    c.fit.bootstrap = 0;
    c.metrics = vec![Metric::Mape, Metric::Cv];
    c.forecast.horizons = vec![1, 2, 3, 4];
    c.forecasters = vec![NamedForecaster {
        name: "sar".into(),
        spec: ForecasterSpec::Sar(SarSpec::new(3, 1, 24).unwrap()),
        refit_every: None,
    }];
    let pers: f64 = std::env::var("PERS")
        .map(|s| s.parse().unwrap())
        .unwrap_or(0.8);
    if let DataSource::Synth(src) = &mut c.data {
        src.deviation = DeviationModel::random_pair(0.05, 1.0, 0.2)
            .unwrap()
            .with_persistence(pers)
            .unwrap();
    }
    let exp = Experiment::new(c).unwrap();
    let out = exp.run().unwrap();
    let mut sizes: Vec<usize> = out.metrics.iter().map(|r| r.size).collect();
    sizes.sort();
    sizes.dedup();
    for h in 1..=4 {
        let line: Vec<String> = sizes
            .iter()
            .map(|s| {
                let rs: Vec<_> = out
                    .metrics
                    .iter()
                    .filter(|r| r.size == *s && r.horizon == h)
                    .collect();
                format!(
                    "{:.2}",
                    rs.iter().map(|r| r.mape).sum::<f64>() / rs.len() as f64
                )
            })
            .collect();
        println!("h={h} mape by size: {}", line.join(" "));
    }
    for f in &out.fits {
        println!(
            "{} h={} a0={:.3} a1={:.3} p={:.3}",
            f.metric, f.horizon, f.sqrt_alpha0, f.sqrt_alpha1, f.p
        );
    }
    for h in 1..=4 {
        let pts: Vec<_> = out
            .metrics
            .iter()
            .filter(|r| r.horizon == h && r.size >= 2)
            .map(|r| r.error_point(Metric::Mape))
            .collect();
        let f = fit_scaling_law(&pts, None).unwrap();
        println!(
            "MAPE n>=2 h={h}: a0={:.3} a1={:.3} p={:.3}",
            f.sqrt_alpha0(),
            f.sqrt_alpha1(),
            f.p
        );
    }
}
