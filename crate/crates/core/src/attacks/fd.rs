use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Gradient estimate from loss queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub values: Vec<f64>,
    /// Loss evaluations spent. Through an averaging oracle each of these
    /// costs `k` physical queries.
    pub queries_spent: u64,
    /// Finite-difference step, or the search radius for NES.
    pub h: f64,
}

/// Symmetric difference quotient `(L(x + h e_i) - L(x - h e_i)) / 2h`.
/// Exactly two loss calls.
///
/// # Panics
/// If `i` is out of range or `h` is not positive.
pub fn fd_gradient<F, E>(mut loss: F, x: &[f64], i: usize, h: f64) -> Result<f64, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    assert!(i < x.len(), "coordinate {i} out of range for length {}", x.len());
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    probe[i] = x[i] + h;
    let up = loss(&probe)?;
    probe[i] = x[i] - h;
    let down = loss(&probe)?;
    Ok((up - down) / (2.0 * h))
}

/// [`fd_gradient`] over several coordinates; `values[j]` belongs to `coords[j]`.
pub fn fd_gradient_coords<F, E>(mut loss: F, x: &[f64], coords: &[usize], h: f64) -> Result<GradientEstimate, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let mut values = Vec::with_capacity(coords.len());
    for &i in coords {
        values.push(fd_gradient(&mut loss, x, i, h)?);
    }
    Ok(GradientEstimate { values, queries_spent: 2 * coords.len() as u64, h })
}

/// Antithetic NES estimate
/// `g = Σ_j [L(x + σu_j) - L(x - σu_j)] u_j / (2mσ)`, `u_j ~ N(0, I)`.
/// Exactly `2m` loss calls.
///
/// # Panics
/// If `m == 0` or `search_sigma` is not positive.
pub fn nes_gradient<F, E, R>(
    mut loss: F,
    x: &[f64],
    search_sigma: f64,
    m: usize,
    rng: &mut R,
) -> Result<GradientEstimate, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    R: Rng + ?Sized,
{
    assert!(m >= 1, "need at least one sample pair");
    assert!(search_sigma > 0.0, "search radius must be positive");
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut probe = vec![0.0; n];
    for _ in 0..m {
        for v in u.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for k in 0..n {
            probe[k] = x[k] + search_sigma * u[k];
        }
        let up = loss(&probe)?;
        for k in 0..n {
            probe[k] = x[k] - search_sigma * u[k];
        }
        let down = loss(&probe)?;
        let w = up - down;
        if w != 0.0 {
            for k in 0..n {
                g[k] += w * u[k];
            }
        }
    }
    let scale = 1.0 / (2.0 * m as f64 * search_sigma);
    for v in &mut g {
        *v *= scale;
    }
    Ok(GradientEstimate { values: g, queries_spent: 2 * m as u64, h: search_sigma })
}
