//! Exact discrete probability for the chain S → (X, Y) → (X_E, Y_E).
//!
//! A joint p(x, y) is pushed through two independent channels Q(x_E | x) and
//! R(y_E | y). Mutual information is computed exactly in nats, which makes the
//! data-processing inequality and the invariance of the total information
//! I((X, X_E); (Y, Y_E)) = I(X; Y) directly checkable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::numeric::{derive_seed, Matrix};

/// Normalization tolerance for distributions and kernel rows.
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for the total-information invariance.
pub const INVARIANCE_TOL: f64 = 1e-10;

fn check_entries(m: &Matrix, what: &str) -> Result<()> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::InvalidDistribution(format!(
            "{what} has an empty dimension"
        )));
    }
    if let Some(v) = m.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has an entry {v} outside [0, ∞)"
        )));
    }
    Ok(())
}

/// Finite joint distribution p(x, y), rows indexed by x.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    p: Matrix,
}

impl JointDistribution {
    pub fn new(p: Matrix) -> Result<Self> {
        check_entries(&p, "joint distribution")?;
        let total: f64 = p.as_slice().iter().sum();
        if (total - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::InvalidDistribution(format!(
                "joint distribution sums to {total}, not 1"
            )));
        }
        Ok(JointDistribution { p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Product distribution p(x)·p(y).
    pub fn product(px: &[f64], py: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = px
            .iter()
            .map(|a| py.iter().map(|b| a * b).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn dims(&self) -> (usize, usize) {
        self.p.shape()
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.p.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let mut py = vec![0.0; self.p.cols()];
        for row in self.p.row_iter() {
            for (acc, v) in py.iter_mut().zip(row) {
                *acc += v;
            }
        }
        py
    }

    pub fn to_text(&self) -> String {
        io::write_matrix_text(&self.p)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(io::read_matrix_text(text)?)
    }
}

/// Conditional distribution kernel, rows indexed by the input symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticKernel {
    q: Matrix,
}

impl StochasticKernel {
    pub fn new(q: Matrix) -> Result<Self> {
        check_entries(&q, "stochastic kernel")?;
        for (i, row) in q.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STRUCTURAL_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "kernel row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(StochasticKernel { q })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(Matrix::identity(n))
    }

    /// Deterministic channel sending input `i` to output `perm[i]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        let mut q = Matrix::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            if j >= n || seen[j] {
                return Err(Error::invalid(format!("{perm:?} is not a permutation")));
            }
            seen[j] = true;
            q[(i, j)] = 1.0;
        }
        Self::new(q)
    }

    /// Channel that maps every input to output symbol 0 of `outputs`.
    pub fn constant(inputs: usize, outputs: usize) -> Result<Self> {
        let mut q = Matrix::zeros(inputs, outputs);
        for i in 0..inputs {
            q[(i, 0)] = 1.0;
        }
        Self::new(q)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn inputs(&self) -> usize {
        self.q.rows()
    }

    pub fn outputs(&self) -> usize {
        self.q.cols()
    }

    pub fn to_text(&self) -> String {
        io::write_matrix_text(&self.q)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(io::read_matrix_text(text)?)
    }
}

/// p4(x, x_E, y, y_E) stored densely in that index order.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedJoint {
    dims: [usize; 4],
    p4: Vec<f64>,
}

impl AugmentedJoint {
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, xe: usize, y: usize, ye: usize) -> f64 {
        let [_, dxe, dy, dye] = self.dims;
        self.p4[((x * dxe + xe) * dy + y) * dye + ye]
    }

    pub fn total(&self) -> f64 {
        self.p4.iter().sum()
    }

    /// Regroups the tensor as a joint over the pair symbols (x, x_E) and (y, y_E).
    pub fn grouped(&self) -> Result<JointDistribution> {
        let [dx, dxe, dy, dye] = self.dims;
        JointDistribution::new(Matrix::from_vec(dx * dxe, dy * dye, self.p4.clone())?)
    }
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Marginal entropies (H(X), H(Y)) in nats.
pub fn marginal_entropies(joint: &JointDistribution) -> (f64, f64) {
    (entropy(&joint.marginal_x()), entropy(&joint.marginal_y()))
}

/// I(X; Y) in nats; zero cells contribute nothing.
pub fn mutual_information(joint: &JointDistribution) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut total = 0.0;
    for (x, row) in joint.matrix().row_iter().enumerate() {
        for (y, &pxy) in row.iter().enumerate() {
            if pxy > 0.0 {
                total += pxy * (pxy / (px[x] * py[y])).ln();
            }
        }
    }
    total
}

fn check_kernels(
    joint: &JointDistribution,
    q_x: &StochasticKernel,
    r_y: &StochasticKernel,
) -> Result<()> {
    let (dx, dy) = joint.dims();
    if q_x.inputs() != dx {
        return Err(Error::mismatch("X-side kernel inputs", dx, q_x.inputs()));
    }
    if r_y.inputs() != dy {
        return Err(Error::mismatch("Y-side kernel inputs", dy, r_y.inputs()));
    }
    Ok(())
}

/// p(x_E, y_E) = Σ_x Σ_y Q(x_E|x) R(y_E|y) p(x, y), computed as Qᵀ·P·R.
pub fn apply_kernels(
    joint: &JointDistribution,
    q_x: &StochasticKernel,
    r_y: &StochasticKernel,
) -> Result<JointDistribution> {
    check_kernels(joint, q_x, r_y)?;
    let pr = joint.matrix().matmul(r_y.matrix())?;
    let out = q_x.matrix().transpose().matmul(&pr)?;
    JointDistribution::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DpiReport {
    pub i_xy: f64,
    pub i_ee: f64,
    pub gap: f64,
}

pub fn verify_dpi(
    joint: &JointDistribution,
    q_x: &StochasticKernel,
    r_y: &StochasticKernel,
) -> Result<DpiReport> {
    let processed = apply_kernels(joint, q_x, r_y)?;
    let i_xy = mutual_information(joint);
    let i_ee = mutual_information(&processed);
    Ok(DpiReport {
        i_xy,
        i_ee,
        gap: i_xy - i_ee,
    })
}

pub fn build_augmented_joint(
    joint: &JointDistribution,
    q_x: &StochasticKernel,
    r_y: &StochasticKernel,
) -> Result<AugmentedJoint> {
    check_kernels(joint, q_x, r_y)?;
    let (dx, dy) = joint.dims();
    let (dxe, dye) = (q_x.outputs(), r_y.outputs());
    let (p, q, r) = (joint.matrix(), q_x.matrix(), r_y.matrix());
    let mut p4 = Vec::with_capacity(dx * dxe * dy * dye);
    for x in 0..dx {
        for xe in 0..dxe {
            for y in 0..dy {
                for ye in 0..dye {
                    p4.push(p[(x, y)] * q[(x, xe)] * r[(y, ye)]);
                }
            }
        }
    }
    let aug = AugmentedJoint {
        dims: [dx, dxe, dy, dye],
        p4,
    };
    let total = aug.total();
    if (total - 1.0).abs() > STRUCTURAL_TOL {
        return Err(Error::InvalidDistribution(format!(
            "augmented joint sums to {total}"
        )));
    }
    Ok(aug)
}

/// |I((X, X_E); (Y, Y_E)) − I(X; Y)|.
pub fn verify_total_invariance(
    joint: &JointDistribution,
    q_x: &StochasticKernel,
    r_y: &StochasticKernel,
) -> Result<f64> {
    let aug = build_augmented_joint(joint, q_x, r_y)?;
    let total = mutual_information(&aug.grouped()?);
    Ok((total - mutual_information(joint)).abs())
}

fn positive_draws(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // gen() is in [0, 1); flip it to (0, 1] so every cell is strictly positive
    (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect()
}

pub fn random_joint(seed: u64, dims: (usize, usize)) -> Result<JointDistribution> {
    let (rows, cols) = dims;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("joint dimensions must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = positive_draws(&mut rng, rows * cols);
    let total: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= total);
    JointDistribution::new(Matrix::from_vec(rows, cols, data)?)
}

pub fn random_kernel(seed: u64, dims: (usize, usize)) -> Result<StochasticKernel> {
    let (inputs, outputs) = dims;
    if inputs == 0 || outputs == 0 {
        return Err(Error::invalid("kernel dimensions must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Matrix::zeros(inputs, outputs);
    for i in 0..inputs {
        let draws = positive_draws(&mut rng, outputs);
        let total: f64 = draws.iter().sum();
        for (dst, v) in q.row_mut(i).iter_mut().zip(draws) {
            *dst = v / total;
        }
    }
    StochasticKernel::new(q)
}

/// A joint plus its two channels.
#[derive(Debug, Clone)]
pub struct ChainSystem {
    pub joint: JointDistribution,
    pub q_x: StochasticKernel,
    pub r_y: StochasticKernel,
}

/// Seeded system whose four alphabet sizes are drawn from `1..=max_alphabet`.
pub fn random_system(seed: u64, max_alphabet: usize) -> Result<ChainSystem> {
    if max_alphabet == 0 {
        return Err(Error::invalid("max_alphabet must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut size = || rng.gen_range(1..=max_alphabet);
    let (dx, dy, dxe, dye) = (size(), size(), size(), size());
    Ok(ChainSystem {
        joint: random_joint(derive_seed(seed, 1), (dx, dy))?,
        q_x: random_kernel(derive_seed(seed, 2), (dx, dxe))?,
        r_y: random_kernel(derive_seed(seed, 3), (dy, dye))?,
    })
}

/// Aggregate of a seeded sweep over random chain systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainSweep {
    pub num_systems: usize,
    pub dpi_violations: usize,
    /// Most negative I(X;Y) − I(X_E;Y_E) seen (0 when all gaps are positive).
    pub min_dpi_gap: f64,
    pub max_dpi_gap: f64,
    pub invariance_violations: usize,
    pub max_invariance_gap: f64,
    /// Systems where relabeling both sides by random permutations changed I by more than 1e-12.
    pub permutation_violations: usize,
    pub max_permutation_gap: f64,
    pub max_mi: f64,
}

impl ChainSweep {
    pub fn violations(&self) -> usize {
        self.dpi_violations + self.invariance_violations + self.permutation_violations
    }
}

fn random_permutation(seed: u64, n: usize) -> Result<StochasticKernel> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    StochasticKernel::permutation(&perm)
}

/// Runs `verify_dpi`, `verify_total_invariance` and a permutation-kernel
/// equality check on `num_systems` seeded systems. Systems are evaluated in parallel; the aggregate only uses counts
/// and extrema, so it does not depend on evaluation order.
pub fn chain_sweep(num_systems: usize, max_alphabet: usize, seed: u64) -> Result<ChainSweep> {
    let per_system = (0..num_systems as u64)
        .into_par_iter()
        .map(|i| {
            let sys_seed = derive_seed(seed, i);
            let sys = random_system(sys_seed, max_alphabet)?;
            let dpi = verify_dpi(&sys.joint, &sys.q_x, &sys.r_y)?;
            let inv = verify_total_invariance(&sys.joint, &sys.q_x, &sys.r_y)?;
            let (dx, dy) = sys.joint.dims();
            let px = random_permutation(derive_seed(sys_seed, 4), dx)?;
            let py = random_permutation(derive_seed(sys_seed, 5), dy)?;
            let perm = verify_dpi(&sys.joint, &px, &py)?.gap.abs();
            Ok((dpi, inv, perm))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sweep = ChainSweep {
        num_systems,
        dpi_violations: 0,
        min_dpi_gap: 0.0,
        max_dpi_gap: 0.0,
        invariance_violations: 0,
        max_invariance_gap: 0.0,
        permutation_violations: 0,
        max_permutation_gap: 0.0,
        max_mi: 0.0,
    };
    for (dpi, inv, perm) in per_system {
        if perm > STRUCTURAL_TOL {
            sweep.permutation_violations += 1;
        }
        sweep.max_permutation_gap = sweep.max_permutation_gap.max(perm);
        if dpi.gap < -STRUCTURAL_TOL {
            sweep.dpi_violations += 1;
        }
        if inv > INVARIANCE_TOL {
            sweep.invariance_violations += 1;
        }
        sweep.min_dpi_gap = sweep.min_dpi_gap.min(dpi.gap);
        sweep.max_dpi_gap = sweep.max_dpi_gap.max(dpi.gap);
        sweep.max_invariance_gap = sweep.max_invariance_gap.max(inv);
        sweep.max_mi = sweep.max_mi.max(dpi.i_xy);
    }
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    /// Independent oracle: marginals and the double sum written out cell by cell.
    fn brute_force_mi(rows: &[Vec<f64>]) -> f64 {
        let nx = rows.len();
        let ny = rows[0].len();
        let mut total = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                let pxy = rows[x][y];
                if pxy == 0.0 {
                    continue;
                }
                let mut px = 0.0;
                for yy in 0..ny {
                    px += rows[x][yy];
                }
                let mut py = 0.0;
                for xx in 0..nx {
                    py += rows[xx][y];
                }
                total += pxy * (pxy.ln() - px.ln() - py.ln());
            }
        }
        total
    }

    fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(<[f64]>::to_vec).collect()
    }

    #[test]
    fn mi_of_independent_uniform_is_zero() {
        let j = JointDistribution::from_rows(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        assert_eq!(mutual_information(&j), 0.0);
    }

    #[test]
    fn mi_of_perfect_correlation_is_ln2() {
        let j = JointDistribution::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((mutual_information(&j) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn mi_matches_double_sum_oracle() {
        let j = random_joint(42, (3, 3)).unwrap();
        let oracle = brute_force_mi(&to_rows(j.matrix()));
        assert!((mutual_information(&j) - oracle).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_distributions() {
        assert!(JointDistribution::from_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(JointDistribution::from_rows(&[vec![1.5, -0.5]]).is_err());
        assert!(JointDistribution::from_rows(&[vec![f64::NAN, 1.0]]).is_err());
        assert!(StochasticKernel::from_rows(&[vec![0.5, 0.5], vec![0.9, 0.0]]).is_err());
    }

    #[test]
    fn identity_kernels_leave_joint_unchanged() {
        let j = random_joint(5, (3, 4)).unwrap();
        let out = apply_kernels(
            &j,
            &StochasticKernel::identity(3).unwrap(),
            &StochasticKernel::identity(4).unwrap(),
        )
        .unwrap();
        assert_eq!(out, j);
    }

    #[test]
    fn constant_kernels_give_point_mass() {
        let j = random_joint(6, (3, 2)).unwrap();
        let out = apply_kernels(
            &j,
            &StochasticKernel::constant(3, 2).unwrap(),
            &StochasticKernel::constant(2, 3).unwrap(),
        )
        .unwrap();
        let m = out.matrix();
        assert!((m[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((m.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(m.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn apply_kernels_matches_triple_sum_oracle() {
        let j = random_joint(11, (3, 4)).unwrap();
        let q = random_kernel(12, (3, 2)).unwrap();
        let r = random_kernel(13, (4, 5)).unwrap();
        let out = apply_kernels(&j, &q, &r).unwrap();
        for xe in 0..2 {
            for ye in 0..5 {
                let mut s = 0.0;
                for x in 0..3 {
                    for y in 0..4 {
                        s += q.matrix()[(x, xe)] * r.matrix()[(y, ye)] * j.matrix()[(x, y)];
                    }
                }
                assert!((out.matrix()[(xe, ye)] - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn apply_kernels_rejects_mismatch() {
        let j = random_joint(1, (3, 3)).unwrap();
        let q = random_kernel(2, (2, 2)).unwrap();
        let r = random_kernel(3, (3, 2)).unwrap();
        assert!(matches!(
            apply_kernels(&j, &q, &r),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(build_augmented_joint(&j, &q, &r).is_err());
    }

    #[test]
    fn dpi_equality_under_permutations() {
        let j = random_joint(21, (4, 3)).unwrap();
        let q = StochasticKernel::permutation(&[2, 0, 3, 1]).unwrap();
        let r = StochasticKernel::permutation(&[1, 2, 0]).unwrap();
        let rep = verify_dpi(&j, &q, &r).unwrap();
        assert!(rep.gap.abs() <= 1e-12, "gap {}", rep.gap);
    }

    #[test]
    fn dpi_with_constant_kernel_loses_everything() {
        let j = random_joint(22, (3, 3)).unwrap();
        let rep = verify_dpi(
            &j,
            &StochasticKernel::constant(3, 2).unwrap(),
            &random_kernel(23, (3, 3)).unwrap(),
        )
        .unwrap();
        assert_eq!(rep.i_ee, 0.0);
        assert_eq!(rep.gap, rep.i_xy);
    }

    #[test]
    fn dpi_sweep_has_no_violations() {
        let sweep = chain_sweep(1000, 6, 99).unwrap();
        assert_eq!(sweep.dpi_violations, 0);
        assert!(sweep.min_dpi_gap >= -1e-12);
    }

    #[test]
    fn augmented_joint_identity_support() {
        let j = JointDistribution::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let id = StochasticKernel::identity(2).unwrap();
        let aug = build_augmented_joint(&j, &id, &id).unwrap();
        for x in 0..2 {
            for xe in 0..2 {
                for y in 0..2 {
                    for ye in 0..2 {
                        let v = aug.get(x, xe, y, ye);
                        if xe == x && ye == y {
                            assert_eq!(v, j.matrix()[(x, y)]);
                        } else {
                            assert_eq!(v, 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn augmented_joint_matches_product_oracle() {
        let j = random_joint(31, (2, 3)).unwrap();
        let q = random_kernel(32, (2, 4)).unwrap();
        let r = random_kernel(33, (3, 2)).unwrap();
        let aug = build_augmented_joint(&j, &q, &r).unwrap();
        assert!((aug.total() - 1.0).abs() <= 1e-12);
        for x in 0..2 {
            for xe in 0..4 {
                for y in 0..3 {
                    for ye in 0..2 {
                        let oracle = j.matrix()[(x, y)] * q.matrix()[(x, xe)] * r.matrix()[(y, ye)];
                        assert!((aug.get(x, xe, y, ye) - oracle).abs() <= 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn total_invariance_cases() {
        let j = random_joint(41, (3, 3)).unwrap();
        let id = StochasticKernel::identity(3).unwrap();
        assert!(verify_total_invariance(&j, &id, &id).unwrap() <= 1e-12);

        let prod = JointDistribution::product(&[0.2, 0.8], &[0.5, 0.3, 0.2]).unwrap();
        let gap = verify_total_invariance(
            &prod,
            &random_kernel(1, (2, 3)).unwrap(),
            &random_kernel(2, (3, 2)).unwrap(),
        )
        .unwrap();
        assert!(mutual_information(&prod).abs() < 1e-15);
        assert!(gap < 1e-15);

        let sweep = chain_sweep(200, 6, 7).unwrap();
        assert!(sweep.max_invariance_gap <= 1e-10);
    }

    #[test]
    fn random_generators_are_deterministic() {
        let a = random_joint(9, (4, 5)).unwrap();
        let b = random_joint(9, (4, 5)).unwrap();
        assert!(a
            .matrix()
            .as_slice()
            .iter()
            .zip(b.matrix().as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(random_joint(0, (1, 1)).unwrap().matrix().as_slice(), &[1.0]);
        let k = random_kernel(7, (3, 3)).unwrap();
        for row in k.matrix().row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!(random_joint(1, (0, 3)).is_err());
        assert!(random_kernel(1, (2, 0)).is_err());
    }

    #[test]
    fn degenerate_zero_cells_fixture() {
        // zero cells: support on an "L" shape
        let j = JointDistribution::from_rows(&[vec![0.5, 0.25], vec![0.0, 0.25]]).unwrap();
        let oracle = brute_force_mi(&to_rows(j.matrix()));
        let mi = mutual_information(&j);
        assert!((mi - oracle).abs() < 1e-15);
        let (hx, hy) = marginal_entropies(&j);
        assert!(mi > 0.0 && mi <= hx.min(hy));
    }

    #[test]
    fn text_format_round_trip() {
        let j = random_joint(3, (2, 3)).unwrap();
        assert_eq!(JointDistribution::from_text(&j.to_text()).unwrap(), j);
        let k = random_kernel(4, (3, 2)).unwrap();
        assert_eq!(StochasticKernel::from_text(&k.to_text()).unwrap(), k);
    }

    fn permute(j: &JointDistribution, rp: &[usize], cp: &[usize]) -> JointDistribution {
        let m = j.matrix();
        let rows: Vec<Vec<f64>> = rp
            .iter()
            .map(|&r| cp.iter().map(|&c| m[(r, c)]).collect())
            .collect();
        JointDistribution::from_rows(&rows).unwrap()
    }

    proptest! {
        #[test]
        fn mi_bounded_by_marginal_entropies(seed in any::<u64>(), dx in 1usize..7, dy in 1usize..7) {
            let j = random_joint(seed, (dx, dy)).unwrap();
            let mi = mutual_information(&j);
            let (hx, hy) = marginal_entropies(&j);
            prop_assert!(mi >= -1e-12);
            prop_assert!(mi <= hx.min(hy) + 1e-12);
        }

        #[test]
        fn mi_invariant_under_relabeling(seed in any::<u64>(), shift_r in 0usize..4, shift_c in 0usize..5) {
            let j = random_joint(seed, (4, 5)).unwrap();
            let rp: Vec<usize> = (0..4).map(|i| (i + shift_r) % 4).rev().collect();
            let cp: Vec<usize> = (0..5).map(|i| (i + shift_c) % 5).collect();
            let pj = permute(&j, &rp, &cp);
            prop_assert!((mutual_information(&j) - mutual_information(&pj)).abs() <= 1e-12);
        }
    }
}
