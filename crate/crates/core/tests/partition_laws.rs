use parapat_core::partition::{
    collect_subproblem_output_args, get_subproblem_input_args, simple_partitioning, subproblem_offset,
};
use parapat_core::{spawn_group, Backend, CommGroup};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn counts_sum_balance_and_order(length in 0usize..=1000, procs in 1usize..=64) {
        let counts = simple_partitioning(length, procs).unwrap();
        prop_assert_eq!(counts.len(), procs);
        prop_assert_eq!(counts.iter().sum::<usize>(), length);
        let (max, min) = (*counts.iter().max().unwrap(), *counts.iter().min().unwrap());
        prop_assert!(max - min <= 1);
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn slices_concatenate_back(length in 0usize..=1000, procs in 1usize..=64) {
        let items: Vec<usize> = (0..length).collect();
        let mut rebuilt = Vec::with_capacity(length);
        for rank in 0..procs {
            let slice = get_subproblem_input_args(&items, rank, procs).unwrap();
            if let Some(&first) = slice.first() {
                prop_assert_eq!(first, subproblem_offset(length, rank, procs).unwrap());
            }
            rebuilt.extend_from_slice(slice);
        }
        prop_assert_eq!(rebuilt, items);
    }
}

#[test]
fn zero_ranks_and_bad_rank_are_rejected() {
    assert!(simple_partitioning(10, 0).is_err());
    assert!(subproblem_offset(10, 4, 4).is_err());
    assert!(get_subproblem_input_args(&[1, 2, 3], 3, 3).is_err());
}

#[test]
fn gather_restores_sequence_on_both_backends() {
    let items: Vec<u64> = (0..97).map(|i| i * i).collect();
    for backend in [Backend::Threads, Backend::Sockets] {
        for procs in [1, 2, 5, 8] {
            let out = spawn_group(&CommGroup::new(procs, backend, 0), |comm| {
                let mine = get_subproblem_input_args(&items, comm.rank(), comm.size())?.to_vec();
                collect_subproblem_output_args(mine, comm)
            })
            .unwrap();
            assert_eq!(out[0].as_ref(), Some(&items), "{backend} P={procs}");
            assert!(out[1..].iter().all(Option::is_none));
        }
    }
}
