use crate::error::{Error, Result};
use crate::numkit::{derive_stream, streams};

/// Per-client sample index sets. The sets are disjoint, cover `0..N` and are
/// each nonempty and sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientPartition {
    assignments: Vec<Vec<usize>>,
}

impl ClientPartition {
    pub fn new(assignments: Vec<Vec<usize>>, total: usize) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::invalid("partition needs at least one client"));
        }
        let mut seen = vec![false; total];
        for (client, set) in assignments.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::invalid(format!(
                    "client {client} received no samples"
                )));
            }
            for &i in set {
                if i >= total || seen[i] {
                    return Err(Error::invalid(format!(
                        "sample {i} is out of range or assigned twice"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("partition does not cover every sample"));
        }
        Ok(ClientPartition { assignments })
    }

    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, i: usize) -> &[usize] {
        &self.assignments[i]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }
}

/// A `frac_random` share of the samples is shuffled and dealt round-robin to
/// the clients; every other sample with label `l` goes to client `l mod n`.
pub fn partition_heterogeneous(
    labels: &[u32],
    n: usize,
    frac_random: f64,
    seed: u64,
) -> Result<ClientPartition> {
    let total = labels.len();
    if n == 0 || n > total {
        return Err(Error::invalid(format!(
            "cannot split {total} samples across {n} clients"
        )));
    }
    if !(0.0..=1.0).contains(&frac_random) {
        return Err(Error::invalid(format!(
            "frac_random must lie in [0, 1], got {frac_random}"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = derive_stream(seed, streams::PARTITION);
    rng.shuffle(&mut order);
    let random_count = (frac_random * total as f64).round() as usize;
    let mut assignments = vec![Vec::new(); n];
    for (pos, &i) in order[..random_count].iter().enumerate() {
        assignments[pos % n].push(i);
    }
    for &i in &order[random_count..] {
        assignments[labels[i] as usize % n].push(i);
    }
    for set in &mut assignments {
        set.sort_unstable();
    }
    ClientPartition::new(assignments, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_random_split_is_balanced() {
        let labels = vec![0u32; 103];
        let p = partition_heterogeneous(&labels, 4, 1.0, 3).unwrap();
        let sizes: Vec<usize> = p.assignments().iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert!(sizes.iter().all(|&s| s == 25 || s == 26));
    }

    #[test]
    fn half_random_ten_labels() {
        let labels: Vec<u32> = (0..1000).map(|i| (i % 10) as u32).collect();
        let p = partition_heterogeneous(&labels, 10, 0.5, 7).unwrap();
        assert_eq!(p.num_clients(), 10);
        // each client holds at least its label-routed share
        for c in 0..10 {
            let own = p
                .client(c)
                .iter()
                .filter(|&&i| labels[i] as usize == c)
                .count();
            let total = p.client(c).len();
            assert!(
                own as f64 >= 0.5 * total as f64,
                "client {c}: {own}/{total}"
            );
        }
    }

    #[test]
    fn single_client_holds_everything() {
        let labels = vec![3u32; 9];
        let p = partition_heterogeneous(&labels, 1, 0.0, 0).unwrap();
        assert_eq!(p.client(0), (0..9).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn errors() {
        assert!(partition_heterogeneous(&[0, 1], 3, 1.0, 0).is_err());
        assert!(partition_heterogeneous(&[0, 1], 1, 1.5, 0).is_err());
        // label routing leaves client 1 empty
        assert!(partition_heterogeneous(&[0, 0, 0, 0], 2, 0.0, 0).is_err());
    }
}
