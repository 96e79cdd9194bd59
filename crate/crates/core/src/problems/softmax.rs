use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::{derive_stream, dot_slices, streams, DenseVector};

use super::SmoothOracle;

/// `f(x) = mu * log sum_i exp((<a_i, x> - b_i) / mu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxProblem {
    dim: usize,
    /// Row-major `k x d`.
    rows: Vec<f64>,
    offsets: Vec<f64>,
    mu: f64,
    recentred: bool,
}

impl SoftmaxProblem {
    pub fn new(dim: usize, rows: Vec<f64>, offsets: Vec<f64>, mu: f64) -> Result<Self> {
        if dim == 0 || offsets.is_empty() {
            return Err(Error::invalid("softmax needs d >= 1 and k >= 1"));
        }
        if rows.len() != dim * offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * offsets.len(),
                found: rows.len(),
            });
        }
        if !(mu > 0.0) {
            return Err(Error::invalid(format!(
                "softmax smoothing must be > 0, got {mu}"
            )));
        }
        if rows.iter().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("softmax data".into()));
        }
        Ok(SoftmaxProblem {
            dim,
            rows,
            offsets,
            mu,
            recentred: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn is_recentred(&self) -> bool {
        self.recentred
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    /// `max_i ||a_i||^2 / mu`, an upper bound on the gradient Lipschitz
    /// constant of the softmax over any subset of rows.
    pub fn smoothness_bound(&self) -> f64 {
        (0..self.num_rows())
            .map(|i| dot_slices(self.row(i), self.row(i)))
            .fold(0.0, f64::max)
            / self.mu
    }

    pub fn value(&self, x: &DenseVector) -> f64 {
        self.value_on(x, None)
    }

    pub fn gradient(&self, x: &DenseVector) -> DenseVector {
        self.gradient_on(x, None)
    }

    fn scaled_logits(&self, x: &DenseVector, subset: Option<&[usize]>) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let logit = |i: usize| (dot_slices(self.row(i), x.as_slice()) - self.offsets[i]) / self.mu;
        match subset {
            Some(idx) => idx.iter().map(|&i| logit(i)).collect(),
            None => (0..self.num_rows()).map(logit).collect(),
        }
    }

    pub(crate) fn value_on(&self, x: &DenseVector, subset: Option<&[usize]>) -> f64 {
        let z = self.scaled_logits(x, subset);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum = z.iter().fold(0.0, |acc, v| acc + (v - max).exp());
        self.mu * (max + sum.ln())
    }

    /// `sum_i w_i a_i` with `w = softmax((Ax - b) / mu)`, max-shifted.
    pub(crate) fn gradient_on(&self, x: &DenseVector, subset: Option<&[usize]>) -> DenseVector {
        let z = self.scaled_logits(x, subset);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total = weights.iter().fold(0.0, |acc, w| acc + w);
        let mut grad = vec![0.0; self.dim];
        let mut accumulate = |i: usize, w: f64| {
            let scale = w / total;
            for (g, a) in grad.iter_mut().zip(self.row(i)) {
                *g += scale * a;
            }
        };
        match subset {
            Some(idx) => idx
                .iter()
                .zip(&weights)
                .for_each(|(&i, &w)| accumulate(i, w)),
            None => weights
                .iter()
                .enumerate()
                .for_each(|(i, &w)| accumulate(i, w)),
        }
        DenseVector::from_vec(grad)
    }

    /// Writes the instance as text: a `softmax,d,k,mu` header followed by one
    /// `b_i,a_i1,...,a_id` line per row, in round-trip exponent notation.
    pub fn write_instance(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(
            out,
            "softmax,{},{},{:e}",
            self.dim,
            self.num_rows(),
            self.mu
        )
        .unwrap();
        for i in 0..self.num_rows() {
            write!(out, "{:e}", self.offsets[i]).unwrap();
            for a in self.row(i) {
                write!(out, ",{a:e}").unwrap();
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load_instance(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::EmptyInput {
            path: path.to_path_buf(),
        })?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.len() != 4 || fields[0] != "softmax" {
            return Err(parse_err(1, "expected header `softmax,d,k,mu`".into()));
        }
        let dim: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(1, format!("d: {e}")))?;
        let k: usize = fields[2]
            .parse()
            .map_err(|e| parse_err(1, format!("k: {e}")))?;
        let mu: f64 = fields[3]
            .parse()
            .map_err(|e| parse_err(1, format!("mu: {e}")))?;
        let mut rows = Vec::with_capacity(dim * k);
        let mut offsets = Vec::with_capacity(k);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != dim + 1 {
                return Err(parse_err(
                    idx + 1,
                    format!("expected {} fields, found {}", dim + 1, cells.len()),
                ));
            }
            for (c, cell) in cells.iter().enumerate() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(idx + 1, format!("field {}: {e}", c + 1)))?;
                if c == 0 {
                    offsets.push(v);
                } else {
                    rows.push(v);
                }
            }
        }
        if offsets.len() != k {
            return Err(parse_err(
                1,
                format!("header declares {k} rows, found {}", offsets.len()),
            ));
        }
        let mut problem = SoftmaxProblem::new(dim, rows, offsets, mu)?;
        problem.recentred = problem.gradient(&DenseVector::zeros(dim)).norm() <= 1e-10;
        Ok(problem)
    }
}

/// Generates a recentred instance: entries of `a_hat_i` and `b_i` are uniform
/// on `[-1, 1]`, then `a_i = a_hat_i - grad f_hat(0)` so that `grad f(0) = 0`.
///
/// Recentring leaves the softmax weights at the origin unchanged (they only
/// depend on `b`), which is why the shifted gradient vanishes there.
pub fn gen_softmax(dim: usize, rows: usize, mu: f64, seed: u64) -> Result<SoftmaxProblem> {
    if dim == 0 || rows == 0 {
        return Err(Error::invalid("gen_softmax needs d >= 1 and k >= 1"));
    }
    let mut rng = derive_stream(seed, streams::DATA);
    let a_hat: Vec<f64> = (0..dim * rows).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let offsets: Vec<f64> = (0..rows).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let preliminary = SoftmaxProblem::new(dim, a_hat, offsets, mu)?;
    let shift = preliminary.gradient(&DenseVector::zeros(dim));
    let mut shifted = preliminary.rows.clone();
    for row in shifted.chunks_mut(dim) {
        for (a, s) in row.iter_mut().zip(shift.iter()) {
            *a -= s;
        }
    }
    let mut problem = SoftmaxProblem::new(dim, shifted, preliminary.offsets, mu)?;
    problem.recentred = true;
    Ok(problem)
}

/// A softmax instance whose rows are dealt to `n` clients; client `i`
/// minimizes the softmax over its own rows.
#[derive(Clone, Debug)]
pub struct SoftmaxClients {
    problem: SoftmaxProblem,
    groups: Vec<Vec<usize>>,
}

impl SoftmaxClients {
    pub fn problem(&self) -> &SoftmaxProblem {
        &self.problem
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// Shuffles the rows and cuts them into `n` near-equal groups. Each group is
/// kept in ascending row order, so `n = 1` reproduces the original objective
/// bit for bit.
pub fn split_softmax_to_clients(
    problem: SoftmaxProblem,
    n: usize,
    seed: u64,
) -> Result<SoftmaxClients> {
    let k = problem.num_rows();
    if n == 0 || n > k {
        return Err(Error::invalid(format!(
            "cannot split {k} rows across {n} clients"
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    if n > 1 {
        derive_stream(seed, streams::PARTITION).shuffle(&mut order);
    }
    let mut groups = Vec::with_capacity(n);
    let base = k / n;
    let extra = k % n;
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        let mut group = order[start..start + len].to_vec();
        group.sort_unstable();
        groups.push(group);
        start += len;
    }
    Ok(SoftmaxClients { problem, groups })
}

/// Gives every one of the `n` clients all rows, so the global objective is
/// the full softmax for any `n` and clients differ only in their noise.
pub fn replicate_softmax_to_clients(problem: SoftmaxProblem, n: usize) -> Result<SoftmaxClients> {
    if n == 0 {
        return Err(Error::invalid("need at least one client"));
    }
    let all: Vec<usize> = (0..problem.num_rows()).collect();
    Ok(SoftmaxClients {
        problem,
        groups: vec![all; n],
    })
}

impl SmoothOracle for SoftmaxClients {
    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn num_clients(&self) -> usize {
        self.groups.len()
    }

    fn client_value(&self, client: usize, x: &DenseVector) -> f64 {
        self.problem.value_on(x, Some(&self.groups[client]))
    }

    fn client_gradient(&self, client: usize, x: &DenseVector) -> DenseVector {
        self.problem.gradient_on(x, Some(&self.groups[client]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff_gradient;

    #[test]
    fn replicated_clients_share_the_full_objective() {
        let p = gen_softmax(8, 30, 0.1, 6).unwrap();
        let x = derive_stream(6, 1).normal_vector(8, 1.0);
        let full = p.value(&x);
        let c = replicate_softmax_to_clients(p, 5).unwrap();
        assert_eq!(c.num_clients(), 5);
        for i in 0..5 {
            assert_eq!(c.client_value(i, &x), full);
        }
        assert!(replicate_softmax_to_clients(c.problem().clone(), 0).is_err());
    }

    #[test]
    fn recentred_gradient_vanishes_at_origin() {
        let p = gen_softmax(20, 64, 0.1, 3).unwrap();
        assert!(p.is_recentred());
        assert!(p.gradient(&DenseVector::zeros(20)).norm() <= 1e-10);
    }

    #[test]
    fn origin_is_a_minimizer() {
        let p = gen_softmax(10, 40, 0.1, 4).unwrap();
        let f0 = p.value(&DenseVector::zeros(10));
        let expected: f64 = {
            // mu log sum exp(-b/mu), evaluated independently
            let terms: Vec<f64> = (0..40).map(|i| -p.offset(i) / 0.1).collect();
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            0.1 * (m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln())
        };
        assert!((f0 - expected).abs() <= 1e-12);
        let mut rng = derive_stream(99, 0);
        for _ in 0..1000 {
            let radius = 10.0 * rng.unit();
            let x = rng.normal_vector(10, 1.0);
            let x = x.scale(radius / x.norm());
            assert!(p.value(&x) >= f0 - 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = gen_softmax(8, 30, 0.1, 5).unwrap();
        let mut rng = derive_stream(6, 0);
        for _ in 0..20 {
            let x = rng.normal_vector(8, 0.3);
            let analytic = p.gradient(&x);
            let numeric = finite_diff_gradient(|y| p.value(y), &x, 1e-5).unwrap();
            let rel = analytic.dist(&numeric).unwrap() / analytic.norm().max(1e-12);
            assert!(rel <= 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn single_row_gradient_is_the_row() {
        let p = SoftmaxProblem::new(3, vec![1.0, -2.0, 0.5], vec![0.3], 0.1).unwrap();
        let mut rng = derive_stream(7, 0);
        for _ in 0..10 {
            let x = rng.normal_vector(3, 5.0);
            assert_eq!(p.gradient(&x).as_slice(), &[1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = SoftmaxProblem::new(1, vec![1.0, -1.0], vec![0.0, 0.0], 0.01).unwrap();
        let x = DenseVector::from_vec(vec![100.0]);
        assert!((p.value(&x) - 100.0).abs() < 1e-9);
        assert!(p.gradient(&x).is_finite());
    }

    #[test]
    fn client_split_structure() {
        let p = gen_softmax(5, 21, 0.1, 8).unwrap();
        let single = split_softmax_to_clients(p.clone(), 1, 1).unwrap();
        let x = derive_stream(1, 2).normal_vector(5, 1.0);
        assert_eq!(single.value(&x), p.value(&x));
        assert_eq!(single.gradient(&x), p.gradient(&x));

        let split = split_softmax_to_clients(p, 4, 1).unwrap();
        let mut seen: Vec<usize> = split.groups().iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..21).collect::<Vec<_>>());
        let mean = (0..4).map(|i| split.client_value(i, &x)).sum::<f64>() / 4.0;
        assert!((split.value(&x) - mean).abs() <= 1e-15);
        assert!(split_softmax_to_clients(gen_softmax(2, 3, 0.1, 1).unwrap(), 4, 1).is_err());
    }

    #[test]
    fn instance_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.csv");
        let p = gen_softmax(6, 9, 0.1, 12).unwrap();
        p.write_instance(&path).unwrap();
        let q = SoftmaxProblem::load_instance(&path).unwrap();
        assert_eq!(p, q);
    }
}
