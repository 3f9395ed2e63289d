use std::ops::Range;

use super::CsrMatrix;
use crate::{Error, Result};

/// Contiguous row blocks, one per agent, and the neighbor relation induced by
/// the sparsity of the iteration matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    ranges: Vec<Range<usize>>,
    owner: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
}

impl Partition {
    pub fn agent_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn dim(&self) -> usize {
        self.owner.len()
    }

    pub fn block_ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn range(&self, agent: usize) -> Range<usize> {
        self.ranges[agent].clone()
    }

    pub fn block_len(&self, agent: usize) -> usize {
        self.ranges[agent].len()
    }

    pub fn owner_of(&self, row: usize) -> usize {
        self.owner[row]
    }

    /// Agents `j != i` whose columns appear in the rows of `i`, ascending.
    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }

    /// Agents that list `agent` as a neighbor, i.e. the subscribers to its
    /// solution broadcasts.
    pub fn subscribers(&self, agent: usize) -> Vec<usize> {
        (0..self.agent_count())
            .filter(|&i| self.neighbors[i].binary_search(&agent).is_ok())
            .collect()
    }
}

/// Splits `m` rows into `agents` contiguous blocks whose sizes differ by at
/// most one (the first `m mod agents` blocks take the extra row).
pub fn partition_rows(m: usize, agents: usize, iteration: &CsrMatrix) -> Result<Partition> {
    if agents == 0 || agents > m {
        return Err(Error::InvalidArgument(format!(
            "cannot split {m} rows across {agents} agents"
        )));
    }
    if iteration.nrows() != m || iteration.ncols() != m {
        return Err(Error::InvalidArgument(format!(
            "iteration matrix is {}x{}, expected {m}x{m}",
            iteration.nrows(),
            iteration.ncols()
        )));
    }
    let base = m / agents;
    let extra = m % agents;
    let mut ranges = Vec::with_capacity(agents);
    let mut start = 0;
    for a in 0..agents {
        let len = base + usize::from(a < extra);
        ranges.push(start..start + len);
        start += len;
    }
    let mut owner = vec![0; m];
    for (a, r) in ranges.iter().enumerate() {
        owner[r.clone()].fill(a);
    }
    let neighbors = ranges
        .iter()
        .enumerate()
        .map(|(a, r)| {
            let mut n: Vec<usize> = r
                .clone()
                .flat_map(|row| iteration.row(row))
                .filter(|&(_, v)| v != 0.0)
                .map(|(col, _)| owner[col])
                .filter(|&o| o != a)
                .collect();
            n.sort_unstable();
            n.dedup();
            n
        })
        .collect();
    Ok(Partition {
        ranges,
        owner,
        neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::build_poisson;
    use proptest::prelude::*;

    #[test]
    fn even_split() {
        let p = partition_rows(400, 16, &CsrMatrix::identity(400)).unwrap();
        assert!(p.block_ranges().iter().all(|r| r.len() == 25));
    }

    #[test]
    fn remainder_goes_first() {
        let p = partition_rows(5, 2, &CsrMatrix::identity(5)).unwrap();
        assert_eq!(p.block_ranges(), &[0..3, 3..5]);
    }

    #[test]
    fn too_many_agents() {
        assert!(partition_rows(3, 4, &CsrMatrix::identity(3)).is_err());
        assert!(partition_rows(3, 0, &CsrMatrix::identity(3)).is_err());
    }

    #[test]
    fn poisson_grid_rows() {
        let s = build_poisson(4).unwrap();
        let p = partition_rows(16, 4, &s.iteration).unwrap();
        assert_eq!(p.neighbors(1), &[0, 2]);
        assert_eq!(p.neighbors(0), &[1]);
        assert_eq!(p.subscribers(3), vec![2]);
    }

    #[test]
    fn poisson_twenty_sixteen_agents() {
        let s = build_poisson(20).unwrap();
        let p = partition_rows(400, 16, &s.iteration).unwrap();
        for a in 0..16 {
            assert!(p.neighbors(a).len() <= 2);
            assert!(p.neighbors(a).iter().all(|&n| n + 1 == a || n == a + 1));
        }
    }

    #[test]
    fn neighbors_match_brute_force() {
        let s = build_poisson(6).unwrap();
        let p = partition_rows(36, 5, &s.iteration).unwrap();
        let dense = s.iteration.to_dense();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let any = p.range(i).any(|r| p.range(j).any(|c| dense[(r, c)] != 0.0));
                assert_eq!(any, p.neighbors(i).contains(&j), "i={i} j={j}");
            }
        }
    }

    proptest! {
        #[test]
        fn ranges_cover_and_round_trip(m in 1usize..300, n_frac in 0.0f64..1.0) {
            let n = 1 + ((m - 1) as f64 * n_frac) as usize;
            let p = partition_rows(m, n, &CsrMatrix::identity(m)).unwrap();
            let mut next = 0;
            for r in p.block_ranges() {
                prop_assert_eq!(r.start, next);
                next = r.end;
            }
            prop_assert_eq!(next, m);
            let sizes: Vec<usize> = p.block_ranges().iter().map(|r| r.len()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            if m % n == 0 { prop_assert_eq!(lo, hi); }
            for row in 0..m {
                for a in 0..n {
                    prop_assert_eq!(p.owner_of(row) == a, p.range(a).contains(&row));
                }
            }
        }
    }
}
