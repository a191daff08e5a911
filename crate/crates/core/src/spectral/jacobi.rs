//! Cyclic Jacobi eigensolver for the small projected matrices of the Krylov
//! iteration.

/// Eigen-decomposes the symmetric `m x m` row-major matrix `a` (destroyed).
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns of a row-major `m x m` matrix.
pub(crate) fn symmetric_eigen(a: &mut [f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(a.len(), m * m);
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum();
        let diag: f64 = (0..m).map(|i| a[i * m + i] * a[i * m + i]).sum();
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| a[y * m + y].total_cmp(&a[x * m + x]).then(x.cmp(&y)));
    let values = order.iter().map(|&j| a[j * m + j]).collect();
    let mut vectors = vec![0.0; m * m];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..m {
            vectors[k * m + new] = v[k * m + old];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let mut a = vec![2.0, 1.0, 1.0, 2.0];
        let (vals, vecs) = symmetric_eigen(&mut a, 2);
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        assert!((vecs[0].abs() - vecs[2].abs()).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_matrix() {
        let m = 17;
        let mut a = vec![0.0; m * m];
        let mut state = 7u64;
        for i in 0..m {
            for j in 0..=i {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                let x = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                a[i * m + j] = x;
                a[j * m + i] = x;
            }
        }
        let orig = a.clone();
        let (vals, vecs) = symmetric_eigen(&mut a, m);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..m {
            for j in 0..m {
                let r: f64 = (0..m)
                    .map(|k| vecs[i * m + k] * vals[k] * vecs[j * m + k])
                    .sum();
                assert!((r - orig[i * m + j]).abs() < 1e-12);
                let o: f64 = (0..m).map(|k| vecs[k * m + i] * vecs[k * m + j]).sum();
                assert!((o - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
