use amctl::simulate::{full_lagrangian_oracle, reduced_to_full, step_reduced};
use amctl_bench::default_equilibrium;
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DVector, Vector2, Vector3};
use std::hint::black_box;

fn dynamics(c: &mut Criterion) {
    let (model, eq) = default_equilibrium();
    let x = eq.q_star.to_vector();

    c.bench_function("mass_matrix", |b| {
        b.iter(|| model.mass_matrix(black_box(&Vector2::new(0.4, -0.7))))
    });
    c.bench_function("reduced_dynamics", |b| {
        b.iter(|| model.dynamics_vec(black_box(&x), black_box(&eq.u_star)).unwrap())
    });
    c.bench_function("rk4_step", |b| {
        b.iter(|| step_reduced(&model, black_box(&x), &eq.u_star, 1e-3).unwrap())
    });
    let full = reduced_to_full(&model, &eq.q_star, &Vector3::zeros(), &DVector::zeros(4)).unwrap();
    c.bench_function("oracle_dynamics", |b| {
        b.iter(|| full_lagrangian_oracle(&model, black_box(&full), &eq.u_star).unwrap())
    });
    c.bench_function("equilibrium_solve", |b| {
        b.iter(|| model.find_equilibrium(black_box(&Vector2::new(0.4, -0.7)), 0.0, None).unwrap())
    });
}

criterion_group!(benches, dynamics);
criterion_main!(benches);
