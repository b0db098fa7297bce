use orthofuse::gradcheck::check_attention_gradients;

#[test]
fn attention_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let check = check_attention_gradients(seed);
        assert!(check.max_error() < 1e-4, "seed {seed}: {:?}", check.classes);
        worst = worst.max(check.max_error());
    }
    eprintln!("worst relative error {worst:.3e}");
}
