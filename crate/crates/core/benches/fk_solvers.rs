use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use verne_core::forward_kinematics::{forward_kinematics_all, select_assembly_mode};
use verne_core::geometry::MachineGeometry;
use verne_core::oracle_bench::{newton_fk, NEWTON_MAX_ITER, NEWTON_TOLERANCE};
use verne_core::sampling::{draw_working_configuration, SamplingBox};

fn solvers(c: &mut Criterion) {
    let geom = MachineGeometry::synthetic();
    let bounds = SamplingBox::for_geometry(&geom);
    let nominal = geom.home_pose();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<_> = (0..32).map(|_| draw_working_configuration(&geom, &bounds, &mut rng).1).collect();

    c.bench_function("analytic_fk_and_selection", |b| {
        b.iter(|| {
            for j in &inputs {
                let set = forward_kinematics_all(&geom, black_box(j));
                black_box(select_assembly_mode(&set.modes, &geom));
            }
        })
    });
    c.bench_function("newton_fk_from_home", |b| {
        b.iter(|| {
            for j in &inputs {
                black_box(newton_fk(&geom, black_box(j), &nominal, NEWTON_MAX_ITER, NEWTON_TOLERANCE).ok());
            }
        })
    });
}

criterion_group!(benches, solvers);
criterion_main!(benches);
