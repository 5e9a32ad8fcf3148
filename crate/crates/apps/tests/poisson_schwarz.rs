use parapat_apps::poisson::{global_residual, run_poisson, Grid2D, PoissonConfig};
use parapat_core::{spawn_group, Backend, CommGroup, Error};

fn solve(cfg: &PoissonConfig, procs: usize, backend: Backend) -> parapat_apps::poisson::PoissonReport {
    let out = spawn_group(&CommGroup::new(procs, backend, 0), |comm| run_poisson(cfg, comm)).unwrap();
    out.into_iter().next().unwrap().unwrap()
}

#[test]
fn converged_field_nearly_satisfies_global_equations() {
    let cfg = PoissonConfig::square(31);
    let grid = Grid2D::new(31, 31).unwrap();
    let whole = solve(&cfg, 1, Backend::Threads);
    assert!(global_residual(&grid, &whole.field) < 1e-9);
    let split = solve(&cfg, 3, Backend::Threads);
    assert!(split.converged);
    // the Schwarz stop leaves a small global residual; it shrinks with the threshold
    let loose = global_residual(&grid, &split.field);
    let tight = solve(
        &PoissonConfig {
            threshold: 1e-16,
            ..cfg
        },
        3,
        Backend::Threads,
    );
    let tighter = global_residual(&grid, &tight.field);
    assert!(tighter < loose, "{tighter} vs {loose}");
    assert!(tighter < 1e-2 * loose, "{tighter} vs {loose}");
}

#[test]
fn iterations_fall_as_overlap_grows() {
    let mut previous = usize::MAX;
    for overlap in [2, 4, 6, 8] {
        let cfg = PoissonConfig {
            overlap,
            ..PoissonConfig::square(63)
        };
        let r = solve(&cfg, 4, Backend::Threads);
        assert!(r.converged);
        assert!(r.iterations <= previous, "overlap {overlap}: {} > {previous}", r.iterations);
        previous = r.iterations;
    }
}

#[test]
fn backends_give_identical_fields() {
    let cfg = PoissonConfig::square(23);
    assert_eq!(solve(&cfg, 2, Backend::Threads), solve(&cfg, 2, Backend::Sockets));
}

#[test]
fn bad_layouts_are_reported() {
    let err = spawn_group(&CommGroup::threads(8), |comm| run_poisson(&PoissonConfig::square(15), comm)).unwrap_err();
    assert!(matches!(err.root(), Error::InvalidArgument(_)));
    let err = spawn_group(&CommGroup::threads(1), |comm| run_poisson(&PoissonConfig::square(2), comm)).unwrap_err();
    assert!(matches!(err.root(), Error::InvalidArgument(_)));
}
