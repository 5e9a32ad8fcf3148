//! Static partitioning of equally weighted tasks and gathering of results.

use crate::codec::Codec;
use crate::comm::{Comm, Rank};
use crate::error::{Error, Result};

/// Per-rank task counts: `floor(length / num_procs)` each, with the first
/// `length % num_procs` ranks taking one extra.
pub fn simple_partitioning(length: usize, num_procs: usize) -> Result<Vec<usize>> {
    if num_procs == 0 {
        return Err(Error::InvalidArgument("num_procs must be positive".into()));
    }
    let base = length / num_procs;
    let extra = length % num_procs;
    Ok((0..num_procs).map(|r| base + usize::from(r < extra)).collect())
}

/// Offset of `rank`'s block within the full sequence.
pub fn subproblem_offset(length: usize, rank: Rank, num_procs: usize) -> Result<usize> {
    check_rank(rank, num_procs)?;
    Ok(simple_partitioning(length, num_procs)?[..rank].iter().sum())
}

fn check_rank(rank: Rank, num_procs: usize) -> Result<()> {
    if rank >= num_procs {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} out of range for {num_procs} ranks"
        )));
    }
    Ok(())
}

/// The contiguous slice of `items` that `my_rank` works on.
pub fn get_subproblem_input_args<T>(items: &[T], my_rank: Rank, num_procs: usize) -> Result<&[T]> {
    check_rank(my_rank, num_procs)?;
    let lengths = simple_partitioning(items.len(), num_procs)?;
    let offset: usize = lengths[..my_rank].iter().sum();
    Ok(&items[offset..offset + lengths[my_rank]])
}

/// Concatenates every rank's outputs on rank 0 in ascending rank order.
///
/// Rank 0 gets `Some(all_outputs)`; every other rank gets `None`.
pub fn collect_subproblem_output_args<T: Codec>(my_outputs: Vec<T>, comm: &Comm) -> Result<Option<Vec<T>>> {
    if comm.is_root() {
        let mut all = my_outputs;
        for source in 1..comm.size() {
            let block: Vec<T> = comm.recv_value(source)?;
            all.extend(block);
        }
        Ok(Some(all))
    } else {
        comm.send_value(0, &my_outputs)?;
        Ok(None)
    }
}
