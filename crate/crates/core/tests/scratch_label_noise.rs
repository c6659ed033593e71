// temporary diagnostic
use qexpr::backend::BackendModel;
use qexpr::expressibility::{expressibility, ExprConfig, ExprMode};
use qexpr::pqcgen::{random_pqc, GenConfig};
use qexpr::transpile::CouplingMap;

#[test]
#[ignore]
fn measure_label_noise() {
    let backend = BackendModel::ideal(10, CouplingMap::full(10));
    for (n, cseed) in [(2usize, 5u64), (3, 9), (4, 13), (5, 21)] {
        let c = random_pqc(&GenConfig::new(n, 2, cseed)).unwrap();
        let vals: Vec<f64> = (0..10)
            .map(|seed| {
                let cfg = ExprConfig {
                    num_pairs: 5000,
                    n_bins: 75,
                    mode: ExprMode::Exact,
                    shots: 0,
                    seed,
                };
                expressibility(&c, &backend, &cfg).unwrap().expr
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64).sqrt();
        println!("n={n} mean={mean:.4} std={std:.5}");
    }
}
