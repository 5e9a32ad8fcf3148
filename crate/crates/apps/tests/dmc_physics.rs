use parapat_apps::dmc::{run_dmc, run_dmc_serial, DmcConfig};
use parapat_core::population::TimingSource;
use parapat_core::{spawn_group, Backend, CommGroup};

fn one_dimensional() -> DmcConfig {
    DmcConfig {
        nwalkers: 500,
        nspacedim: 1,
        stepsize: 0.01,
        timesteps: 3000,
        seed: 3,
        ..DmcConfig::default()
    }
}

#[test]
fn one_dimensional_trap_energy() {
    // ground-state energy of −u'' + x²u is 1
    let res = run_dmc_serial(&one_dimensional(), 500).unwrap();
    assert!((res.estimate.energy - 1.0).abs() < 0.05, "{:?}", res.estimate);
    assert!(res.estimate.standard_error > 0.0);
    let pops: Vec<u64> = res.trace.iter().map(|o| o.population).collect();
    // the incremental trial-energy rule lets the size oscillate about the
    // target, but it must neither die out nor run away
    assert!(pops.iter().all(|&p| (100..=2500).contains(&p)), "population drifted");
    let mean = pops.iter().sum::<u64>() as f64 / pops.len() as f64;
    assert!((mean - 500.0).abs() < 100.0, "{mean}");
}

#[test]
fn two_ranks_agree_with_one_within_error() {
    let cfg = one_dimensional();
    let serial = run_dmc_serial(&cfg, 500).unwrap().estimate;
    let out = spawn_group(&CommGroup::threads(2), |comm| run_dmc(&cfg, 500, comm, TimingSource::Uniform)).unwrap();
    let parallel = out[0].result.as_ref().unwrap().estimate;
    let spread = 3.0 * (serial.standard_error + parallel.standard_error);
    assert!((serial.energy - parallel.energy).abs() < spread, "{serial:?} vs {parallel:?}");
}

#[test]
fn single_rank_driver_matches_serial_driver() {
    let cfg = DmcConfig {
        timesteps: 100,
        nwalkers: 200,
        ..one_dimensional()
    };
    let serial = run_dmc_serial(&cfg, 20).unwrap();
    let out = spawn_group(&CommGroup::threads(1), |comm| run_dmc(&cfg, 20, comm, TimingSource::Uniform)).unwrap();
    assert_eq!(out[0].result.as_ref().unwrap(), &serial);
}

#[test]
fn backends_give_identical_traces() {
    let cfg = DmcConfig {
        timesteps: 150,
        nwalkers: 300,
        nspacedim: 3,
        seed: 9,
        ..DmcConfig::default()
    };
    let run = |backend| {
        let out = spawn_group(&CommGroup::new(3, backend, 9), |comm| {
            run_dmc(&cfg, 30, comm, TimingSource::Uniform)
        })
        .unwrap();
        let steps: Vec<Vec<usize>> = out[0].steps.iter().map(|s| s.counts.clone()).collect();
        (out.into_iter().next().unwrap().result.unwrap(), steps)
    };
    assert_eq!(run(Backend::Threads), run(Backend::Sockets));
}

#[test]
fn too_short_a_run_is_rejected() {
    let cfg = DmcConfig {
        timesteps: 30,
        ..one_dimensional()
    };
    assert!(run_dmc_serial(&cfg, 20).is_err());
}
