//! Retrieval metrics over paired query/gallery similarity matrices.

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::io;
use crate::numeric::Matrix;

/// Query × gallery similarities; in the paired protocol query `q` matches
/// gallery item `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    s: Matrix,
}

impl SimilarityMatrix {
    pub fn new(s: Matrix) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::NonFinite("similarity entry".into()));
        }
        Ok(SimilarityMatrix { s })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(io::read_csv_matrix(text)?)
    }

    pub fn to_csv(&self) -> String {
        io::write_csv_matrix(&self.s)
    }

    /// 1-based rank of the ground-truth item in row `q`. Equal scores are
    /// ordered by ascending gallery index.
    pub fn rank_of_match(&self, q: usize) -> usize {
        let row = self.s.row(q);
        let target = row[q];
        1 + row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > target || (v == target && j < q))
            .count()
    }
}

pub fn cosine_matrix(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<SimilarityMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::mismatch("embedding dimension", a.dim(), b.dim()));
    }
    SimilarityMatrix::new(a.matrix().matmul_t(b.matrix())?)
}

/// Percentage of queries whose match ranks within the top `k`.
pub fn recall_at_k(s: &SimilarityMatrix, k: usize) -> Result<f64> {
    let (rows, cols) = s.matrix().shape();
    if rows != cols {
        return Err(Error::mismatch(
            "paired retrieval needs a square matrix",
            rows,
            cols,
        ));
    }
    if rows == 0 {
        return Err(Error::invalid("empty similarity matrix"));
    }
    if k == 0 || k > rows {
        return Err(Error::invalid(format!("k = {k} outside 1..={rows}")));
    }
    let hits = (0..rows).filter(|&q| s.rank_of_match(q) <= k).count();
    Ok(100.0 * hits as f64 / rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sim(rows: &[Vec<f64>]) -> SimilarityMatrix {
        SimilarityMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn random_sim(seed: u64, n: usize) -> SimilarityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SimilarityMatrix::new(Matrix::from_vec(n, n, data).unwrap()).unwrap()
    }

    /// Full stable sort of each row by descending score, then position lookup.
    fn full_sort_recall(s: &SimilarityMatrix, k: usize) -> f64 {
        let n = s.matrix().rows();
        let mut hits = 0;
        for q in 0..n {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| s.matrix()[(q, b)].partial_cmp(&s.matrix()[(q, a)]).unwrap());
            if idx.iter().position(|&j| j == q).unwrap() < k {
                hits += 1;
            }
        }
        100.0 * hits as f64 / n as f64
    }

    #[test]
    fn cosine_of_orthonormal_rows_is_identity() {
        let a = EmbeddingBatch::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let s = cosine_matrix(&a, &a).unwrap();
        assert_eq!(s.matrix(), &Matrix::identity(2));
        assert_eq!(recall_at_k(&s, 1).unwrap(), 100.0);
    }

    #[test]
    fn cosine_of_negated_batch_is_negated_gram() {
        let a =
            EmbeddingBatch::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let neg = EmbeddingBatch::new({
            let mut m = a.matrix().clone();
            m.scale(-1.0);
            m
        })
        .unwrap();
        let s = cosine_matrix(&a, &neg).unwrap();
        let gram = a.matrix().matmul(&a.matrix().transpose()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.matrix()[(i, j)], -gram[(i, j)]);
            }
        }
    }

    #[test]
    fn cosine_matches_dot_product_oracle() {
        let a = EmbeddingBatch::from_rows(&[vec![0.6, 0.8], vec![0.8, -0.6]]).unwrap();
        let b =
            EmbeddingBatch::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.6, 0.8]]).unwrap();
        let s = cosine_matrix(&a, &b).unwrap();
        let oracle = [[0.6, 0.8, 0.28], [0.8, -0.6, -0.96]];
        for i in 0..2 {
            for j in 0..3 {
                assert!((s.matrix()[(i, j)] - oracle[i][j]).abs() < 1e-15);
            }
        }
        let c = EmbeddingBatch::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(cosine_matrix(&a, &c).is_err());
    }

    #[test]
    fn anti_diagonal_ranks_last() {
        let n = 4;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { 1.0 + j as f64 })
                    .collect()
            })
            .collect();
        let s = sim(&rows);
        assert_eq!(recall_at_k(&s, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&s, 3).unwrap(), 0.0);
        assert_eq!(recall_at_k(&s, 4).unwrap(), 100.0);
    }

    #[test]
    fn ties_break_by_gallery_index() {
        let s = sim(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        // query 0 wins its tie, query 1 loses to index 0
        assert_eq!(s.rank_of_match(0), 1);
        assert_eq!(s.rank_of_match(1), 2);
        assert_eq!(recall_at_k(&s, 1).unwrap(), 50.0);
    }

    #[test]
    fn rejects_bad_k_and_shape() {
        let s = random_sim(1, 3);
        assert!(recall_at_k(&s, 0).is_err());
        assert!(recall_at_k(&s, 4).is_err());
        let rect = SimilarityMatrix::new(Matrix::zeros(2, 3)).unwrap();
        assert!(recall_at_k(&rect, 1).is_err());
    }

    #[test]
    fn matches_full_sort_oracle() {
        let s = random_sim(50, 50);
        for k in [1, 5, 10, 25, 50] {
            assert_eq!(recall_at_k(&s, k).unwrap(), full_sort_recall(&s, k));
        }
    }

    proptest! {
        #[test]
        fn recall_monotone_and_full_at_n(seed in any::<u64>(), n in 1usize..30) {
            let s = random_sim(seed, n);
            let mut prev = 0.0;
            for k in 1..=n {
                let r = recall_at_k(&s, k).unwrap();
                prop_assert!(r >= prev);
                prev = r;
            }
            prop_assert_eq!(prev, 100.0);
        }

        #[test]
        fn recall_invariant_under_increasing_transform(seed in any::<u64>(), n in 2usize..20) {
            let s = random_sim(seed, n);
            let mut t = s.matrix().clone();
            t.as_mut_slice().iter_mut().for_each(|v| *v = (3.0 * *v).exp() + 2.0);
            let t = SimilarityMatrix::new(t).unwrap();
            for k in 1..=n {
                prop_assert_eq!(recall_at_k(&s, k).unwrap(), recall_at_k(&t, k).unwrap());
            }
        }
    }
}
