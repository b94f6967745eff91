use cnlab::datagen::{sample_mvn, GaussianSpec};
use cnlab::gmm::{select_k, EmConfig};
use cnlab::{Matrix, RngStream};

#[test]
fn bic_picks_one_component_for_gaussian_data() {
    let spec = GaussianSpec::new(
        vec![1.0, -2.0, 0.5],
        Matrix::from_rows(&[vec![2.0, 0.5, 0.3], vec![0.5, 1.0, 0.2], vec![0.3, 0.2, 1.5]]).unwrap(),
    )
    .unwrap();
    let config = EmConfig::default();
    let mut ones = 0;
    for seed in 0..100 {
        let root = RngStream::new(seed);
        let data = sample_mvn(&spec, 500, &root.child("data", 0)).unwrap();
        let model = select_k(&data, 1, 6, &config, &root.child("fit", 0)).unwrap();
        ones += usize::from(model.k() == 1);
    }
    assert!(ones >= 95, "K = 1 chosen in {ones} of 100 seeds");
}
