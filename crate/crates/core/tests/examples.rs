macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }
    };
}

example!(kernels_oracle);
example!(gradient_check);
example!(similarity_oracle);
example!(synthetic_dataset);
example!(train_embedding);
example!(evaluate_schemes);
example!(export_embedding);

use tripemb::sampling::TestScheme;

#[test]
fn kernels_example() {
    // Ramp 0..15, ReLU(box sum - 40) pooled and averaged; identity channel max-pooled then averaged.
    let e = kernels_oracle::run_example().unwrap();
    assert_eq!(e.len(), 2);
    assert_eq!(e[0], (5.0 + 7.0 + 13.0 + 15.0) / 4.0);
}

#[test]
fn gradient_check_example() {
    let r = gradient_check::run_example().unwrap();
    assert_eq!(r.checked, 150);
    assert!(r.pass_rate() >= 0.99);
}

#[test]
fn similarity_example() {
    let rates = similarity_oracle::run_example().unwrap();
    let all_diff = rates.iter().find(|(s, _)| *s == TestScheme::AllDiff).unwrap().1;
    assert_eq!(all_diff, 0.0);
}

#[test]
fn synthetic_dataset_example() {
    let ds = synthetic_dataset::run_example(None).unwrap();
    assert_eq!(ds.images.len(), 60);
    assert_eq!(ds.image_dims(), (32, 64));
}

#[test]
fn train_example() {
    let r = train_embedding::run_example().unwrap();
    assert!(r.epochs_used <= 6);
    assert!(r.val_violations < r.history[0].val_violations + 1e-9);
}

#[test]
fn evaluate_example() {
    let s = evaluate_schemes::run_example().unwrap();
    assert_eq!(s.completed_runs, 2);
    assert!(s.test[TestScheme::Ge1.name()].is_some());
}

#[test]
fn export_example() {
    let rows = export_embedding::run_example(None).unwrap();
    assert_eq!(rows.len(), 80);
    assert!(rows.iter().all(|r| r.coords.len() == 2));
}
