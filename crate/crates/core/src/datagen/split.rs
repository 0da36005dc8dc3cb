use rand::seq::SliceRandom;
use rand::Rng;

use super::{Dataset, Standardization};
use crate::error::{Error, Result};

/// Standardizes `train` to zero mean and unit sample sd (n−1 divisor) per
/// column, and applies the same transform to every dataset in `others`.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
    let (n, p) = (train.n(), train.p());
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "standardization needs at least 2 training cases, got {n}"
        )));
    }
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for (l, col) in train.x.columns().into_iter().enumerate() {
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) || var.sqrt() <= 1e-12 * m.abs().max(1.0) {
            return Err(Error::ZeroVariance { column: l });
        }
        mean[l] = m;
        sd[l] = var.sqrt();
    }
    let step = Standardization { mean, sd };
    let apply = |d: &Dataset| -> Result<Dataset> {
        if d.p() != p {
            return Err(Error::DimensionMismatch(format!(
                "train has {p} columns, other dataset {}",
                d.p()
            )));
        }
        let mut out = d.clone();
        for mut row in out.x.rows_mut() {
            step.apply_row(row.as_slice_mut().expect("standard layout"));
        }
        // compose with any earlier transform so the record maps raw inputs
        out.standardization = Some(match &d.standardization {
            None => step.clone(),
            Some(prev) => Standardization {
                mean: prev
                    .mean
                    .iter()
                    .zip(&prev.sd)
                    .zip(&step.mean)
                    .map(|((m0, s0), m1)| m0 + s0 * m1)
                    .collect(),
                sd: prev.sd.iter().zip(&step.sd).map(|(s0, s1)| s0 * s1).collect(),
            },
        });
        Ok(out)
    };
    let train_std = apply(train)?;
    let others = others.iter().map(apply).collect::<Result<_>>()?;
    Ok((train_std, others))
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Vec<Dataset>,
    pub test: Dataset,
    /// Pool row indices of each training set.
    pub train_indices: Vec<Vec<usize>>,
    /// Pool row indices of the test set, ascending.
    pub test_indices: Vec<usize>,
}

/// Samples `k` pairwise-disjoint training sets of `size` cases without
/// replacement; every remaining case forms the shared test set.
pub fn subsample_splits<R: Rng + ?Sized>(pool: &Dataset, k: usize, size: usize, rng: &mut R) -> Result<Splits> {
    let n = pool.n();
    if k == 0 || size == 0 || k.saturating_mul(size) >= n {
        return Err(Error::InsufficientPool { pool: n, k, size });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let train_indices: Vec<Vec<usize>> = idx[..k * size].chunks(size).map(|c| c.to_vec()).collect();
    let mut test_indices = idx[k * size..].to_vec();
    test_indices.sort_unstable();
    Ok(Splits {
        train: train_indices.iter().map(|ix| pool.select(ix)).collect(),
        test: pool.select(&test_indices),
        train_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::RngStream;
    use ndarray::{array, Array2};

    fn ds(x: Array2<f64>) -> Dataset {
        let n = x.nrows();
        Dataset::new(x, vec![0; n], vec!["a".into()]).unwrap()
    }

    #[test]
    fn unit_sample_sd() {
        let (t, _) = standardize(&ds(array![[1.0], [2.0], [3.0]]), &[]).unwrap();
        assert_eq!(t.x, array![[-1.0], [0.0], [1.0]]);
    }

    #[test]
    fn idempotent_on_train() {
        let train = ds(array![[1.0, 10.0], [4.0, -2.0], [2.5, 7.0], [0.3, 1.0]]);
        let (once, _) = standardize(&train, &[]).unwrap();
        let (twice, _) = standardize(&once, &[]).unwrap();
        for (a, b) in once.x.iter().zip(twice.x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let s1 = once.standardization.unwrap();
        let s2 = twice.standardization.unwrap();
        for (a, b) in s1.mean.iter().zip(&s2.mean).chain(s1.sd.iter().zip(&s2.sd)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn others_use_train_statistics() {
        let train = ds(array![[1.0], [2.0], [3.0]]);
        let test = ds(array![[10.0], [12.0]]);
        let (_, others) = standardize(&train, &[test]).unwrap();
        assert_eq!(others[0].x, array![[8.0], [10.0]]);
    }

    #[test]
    fn zero_variance_rejected() {
        let err = standardize(&ds(array![[1.0, 5.0], [2.0, 5.0]]), &[]).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { column: 1 }));
    }

    #[test]
    fn paper_sized_splits() {
        let pool = ds(Array2::zeros((5556, 1)));
        let mut rng = RngStream::new(1, 0);
        let s = subsample_splits(&pool, 10, 200, &mut rng).unwrap();
        assert_eq!(s.test.n(), 3556);
        assert!(s.train.iter().all(|t| t.n() == 200));
    }

    #[test]
    fn empty_test_set_rejected() {
        let pool = ds(Array2::zeros((50, 1)));
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(
            subsample_splits(&pool, 1, 50, &mut rng),
            Err(Error::InsufficientPool { .. })
        ));
    }

    #[test]
    fn disjoint_and_reproducible() {
        let pool = ds(Array2::from_shape_fn((137, 1), |(i, _)| i as f64));
        for seed in 0..20 {
            let s = subsample_splits(&pool, 4, 1 + seed as usize, &mut RngStream::new(seed, 0)).unwrap();
            let again = subsample_splits(&pool, 4, 1 + seed as usize, &mut RngStream::new(seed, 0)).unwrap();
            assert_eq!(s.train_indices, again.train_indices);
            let mut all: Vec<usize> = s.train_indices.iter().flatten().copied().collect();
            all.extend(&s.test_indices);
            for a in 0..s.train_indices.len() {
                for b in a + 1..s.train_indices.len() {
                    assert!(s.train_indices[a].iter().all(|i| !s.train_indices[b].contains(i)));
                }
            }
            all.sort_unstable();
            assert_eq!(all, (0..137).collect::<Vec<_>>());
        }
    }
}
