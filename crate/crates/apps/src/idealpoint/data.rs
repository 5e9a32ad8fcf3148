//! Roll-call vote matrices: CSV input and synthetic generation.

use std::io::Read;
use std::path::Path;

use parapat_core::codec::Codec;
use parapat_core::{CodecError, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::truncnorm::std_normal_cdf;

/// Votes of `n` legislators on `m` roll calls. `None` marks a missing vote.
#[derive(Debug, Clone, PartialEq)]
pub struct RollCallMatrix {
    n: usize,
    m: usize,
    /// Row-major, one row per legislator.
    votes: Vec<Option<bool>>,
}

impl RollCallMatrix {
    pub fn new(n: usize, m: usize, votes: Vec<Option<bool>>) -> Result<Self> {
        if n < 2 || m < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 legislators and 2 votes, got {n}x{m}"
            )));
        }
        if votes.len() != n * m {
            return Err(Error::InvalidArgument(format!("{} cells for a {n}x{m} matrix", votes.len())));
        }
        for i in 0..n {
            if votes[i * m..(i + 1) * m].iter().all(Option::is_none) {
                return Err(Error::InvalidArgument(format!("legislator {i} has no observed vote")));
            }
        }
        Ok(RollCallMatrix { n, m, votes })
    }

    pub fn legislators(&self) -> usize {
        self.n
    }

    pub fn roll_calls(&self) -> usize {
        self.m
    }

    pub fn vote(&self, i: usize, j: usize) -> Option<bool> {
        self.votes[i * self.m + j]
    }

    /// Reads CSV with a header row, one row per legislator, cells `0`, `1`
    /// or `NA` (an empty cell also counts as missing).
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let m = reader
            .headers()
            .map_err(|e| Error::App(format!("roll-call CSV header: {e}")))?
            .len();
        let mut votes = Vec::new();
        let mut n = 0;
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::App(format!("roll-call CSV row {}: {e}", row + 1)))?;
            if record.len() != m {
                return Err(Error::App(format!(
                    "roll-call CSV row {} has {} cells, header has {m}",
                    row + 1,
                    record.len()
                )));
            }
            for (col, cell) in record.iter().enumerate() {
                votes.push(match cell.trim() {
                    "1" => Some(true),
                    "0" => Some(false),
                    "NA" | "" => None,
                    other => {
                        return Err(Error::App(format!(
                            "roll-call CSV row {} column {}: unexpected cell `{other}`",
                            row + 1,
                            col + 1
                        )))
                    }
                });
            }
            n += 1;
        }
        RollCallMatrix::new(n, m, votes)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::App(format!("{}: {e}", path.display())))?;
        Self::from_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::App(format!("writing roll-call CSV: {e}"));
        w.write_record((0..self.m).map(|j| format!("v{j}"))).map_err(err)?;
        for i in 0..self.n {
            w.write_record((0..self.m).map(|j| match self.vote(i, j) {
                Some(true) => "1",
                Some(false) => "0",
                None => "NA",
            }))
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::App(format!("writing roll-call CSV: {e}")))?;
        Ok(())
    }
}

impl Codec for RollCallMatrix {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.n.encode(buf);
        self.m.encode(buf);
        let cells: Vec<u8> = self
            .votes
            .iter()
            .map(|v| match v {
                Some(false) => 0,
                Some(true) => 1,
                None => 2,
            })
            .collect();
        cells.encode(buf);
    }

    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        let n = usize::decode(input)?;
        let m = usize::decode(input)?;
        let cells: Vec<u8> = Vec::decode(input)?;
        let votes = cells
            .into_iter()
            .map(|c| match c {
                0 => Ok(Some(false)),
                1 => Ok(Some(true)),
                2 => Ok(None),
                t => Err(CodecError::InvalidTag(t)),
            })
            .collect::<Result<_, _>>()?;
        Ok(RollCallMatrix { n, m, votes })
    }
}

/// Parameters that generated a synthetic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub dims: usize,
    /// `n × d`, row-major.
    pub x: Vec<f64>,
    /// `m × d`, row-major.
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Probability of a Yea given the linear predictor `β·x − α`.
pub fn vote_probability(eta: f64) -> f64 {
    std_normal_cdf(eta)
}

/// Draws `x ~ N(0,1)`, `β ~ N(0,1)`, `α ~ N(0, 0.5²)` and votes from the
/// probit link.
pub fn generate_synthetic(n: usize, m: usize, dims: usize, seed: u64) -> Result<(RollCallMatrix, SyntheticTruth)> {
    if dims == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * dims).map(|_| StandardNormal.sample(&mut rng)).collect();
    let beta: Vec<f64> = (0..m * dims).map(|_| StandardNormal.sample(&mut rng)).collect();
    let alpha_dist = Normal::new(0.0, 0.5).expect("valid scale");
    let alpha: Vec<f64> = (0..m).map(|_| alpha_dist.sample(&mut rng)).collect();
    let mut votes = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let eta: f64 = (0..dims).map(|k| beta[j * dims + k] * x[i * dims + k]).sum::<f64>() - alpha[j];
            votes.push(Some(rng.random::<f64>() < vote_probability(eta)));
        }
    }
    let data = RollCallMatrix::new(n, m, votes)?;
    Ok((data, SyntheticTruth { dims, x, beta, alpha }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use parapat_core::Payload;

    #[test]
    fn reads_csv_with_missing_cells() {
        let text = "v1,v2,v3\n1,0,NA\n0,,1\n";
        let data = RollCallMatrix::from_csv(text.as_bytes()).unwrap();
        assert_eq!((data.legislators(), data.roll_calls()), (2, 3));
        assert_eq!(data.vote(0, 0), Some(true));
        assert_eq!(data.vote(0, 2), None);
        assert_eq!(data.vote(1, 1), None);

        let mut out = Vec::new();
        data.write_csv(&mut out).unwrap();
        assert_eq!(RollCallMatrix::from_csv(out.as_slice()).unwrap(), data);
        assert_eq!(Payload::encode(&data).decode::<RollCallMatrix>().unwrap(), data);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RollCallMatrix::from_csv("a,b\n1,2\n0,1\n".as_bytes()).is_err());
        assert!(RollCallMatrix::from_csv("a,b\nNA,NA\n0,1\n".as_bytes()).is_err());
        assert!(RollCallMatrix::from_csv("a,b\n1,0\n".as_bytes()).is_err());
        assert!(RollCallMatrix::from_csv("a,b\n1,0\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_predictor_is_a_coin_flip() {
        assert_eq!(vote_probability(0.0), 0.5);
    }

    #[test]
    fn synthetic_is_seeded() {
        let (a, ta) = generate_synthetic(5, 7, 1, 11).unwrap();
        let (b, tb) = generate_synthetic(5, 7, 1, 11).unwrap();
        assert_eq!((a, ta), (b, tb));
    }

    #[test]
    fn link_calibration() {
        // bucket the linear predictor and compare Yea frequency with the link
        let (data, truth) = generate_synthetic(400, 250, 1, 5).unwrap();
        let edges = [-3.0, -1.5, -0.75, -0.25, 0.25, 0.75, 1.5, 3.0];
        for w in edges.windows(2) {
            let (mut yeas, mut total, mut expected) = (0.0, 0.0, 0.0);
            for i in 0..400 {
                for j in 0..250 {
                    let eta = truth.beta[j] * truth.x[i] - truth.alpha[j];
                    if eta >= w[0] && eta < w[1] {
                        total += 1.0;
                        expected += vote_probability(eta);
                        yeas += f64::from(u8::from(data.vote(i, j) == Some(true)));
                    }
                }
            }
            let p = expected / total;
            let se = (p * (1.0 - p) / total).sqrt();
            assert!((yeas / total - p).abs() < 4.0 * se, "bucket {w:?}: {} vs {p}", yeas / total);
        }
    }
}
