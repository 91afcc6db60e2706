use forgefuse_core::deep_linear::{
    closed_form_trajectory, forget_time, optimal_separator, pca_rotate, synthesize_gaussian_classes, train_gd,
    GaussianSpec, LinearConfig, SpectralData, TargetEncoding,
};

fn binary_data(per_class: usize, separation: f64, spectrum: Vec<f64>, seed: u64) -> SpectralData {
    let spec = GaussianSpec { per_class, num_classes: 2, separation, spectrum };
    let (raw, labels) = synthesize_gaussian_classes(&spec, seed).unwrap();
    pca_rotate(&raw, &labels, TargetEncoding::Binary).unwrap()
}

#[test]
fn pca_recovers_anisotropic_variances() {
    let variances = [4.0, 1.0, 0.25, 0.0625];
    let data = binary_data(5_000, 0.0, variances.to_vec(), 11);
    let n = data.num_points() as f64;
    for (s, v) in data.singular_values.iter().zip(variances) {
        let est = s * s / n;
        assert!((est - v).abs() <= 0.05 * v, "estimated {est}, expected {v}");
    }
    // axis-aligned covariance, so each principal axis is close to a coordinate axis
    for j in 0..variances.len() {
        assert!(data.basis[(j, j)].abs() > 0.95, "axis {j}: {}", data.basis[(j, j)]);
    }
}

#[test]
fn simulated_forget_times_track_closed_form() {
    let data = binary_data(60, 1.0, vec![2.0, 0.8, 0.3, 0.1, 0.03], 5);
    let w_opt = optimal_separator(&data, None).unwrap();
    let steps = 1500;
    let config = LinearConfig {
        depth: 2,
        gamma: LinearConfig::gamma_for_ratio(0.4, &data, 2),
        steps,
        init_scale: 1e-3,
        hidden_width: None,
        seed: 3,
    };
    let sim = train_gd(&config, &data).unwrap();
    let cf = closed_form_trajectory(&config, &data, sim.initial(), &w_opt).unwrap();
    let mut compared = 0;
    for i in 0..data.num_points() {
        let x: Vec<f64> = data.x.column(i).iter().copied().collect();
        let y = data.targets[(0, i)];
        let (a, b) = (forget_time(&sim, &x, y).unwrap(), forget_time(&cf, &x, y).unwrap());
        if let (Some(a), Some(b)) = (a, b) {
            compared += 1;
            assert!(a.abs_diff(b) as f64 <= 0.1 * steps as f64, "point {i}: simulated {a}, closed form {b}");
        }
    }
    assert!(compared > 0, "no point was forgotten by both trajectories");
}

#[test]
fn stable_descent_never_increases_loss() {
    let data = binary_data(40, 2.0, vec![3.0, 1.0, 0.2], 9);
    for ratio in [0.1, 0.5, 0.9] {
        let config = LinearConfig {
            depth: 3,
            gamma: LinearConfig::gamma_for_ratio(ratio, &data, 3),
            steps: 400,
            init_scale: 1e-2,
            hidden_width: None,
            seed: 1,
        };
        let traj = train_gd(&config, &data).unwrap();
        let losses: Vec<f64> = traj.points.iter().map(|p| p.loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "ratio {ratio}: {} -> {}", w[0], w[1]);
        }
    }
}
