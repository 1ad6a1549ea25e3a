//! Convergence diagnostics: split potential scale reduction factor and
//! effective sample size.

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split-chain R-hat. Each chain is cut in half (dropping the middle draw of
/// odd-length chains) and `sqrt((W (n-1)/n + B/n) / W)` is computed over the
/// halves. `Ok(None)` when the within-chain variance is zero.
pub fn rhat(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    if chains.len() < 2 {
        return Err(Error::Shape("R-hat needs at least two chains".into()));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("R-hat needs chains of equal length".into()));
    }
    if len < 4 {
        return Err(Error::Shape("R-hat needs at least four draws per chain".into()));
    }
    let n = len / 2;
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[len - n..]]).collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| sample_var(h)).collect::<Vec<_>>());
    if !(w > 0.0) {
        return Ok(None);
    }
    let b = n as f64 * sample_var(&means);
    let nf = n as f64;
    let var_plus = w * (nf - 1.0) / nf + b / nf;
    Ok(Some((var_plus / w).sqrt()))
}

/// Biased (divide-by-n) sample autocorrelation at `lag`.
fn autocorrelation(xs: &[f64], m: f64, gamma0: f64, lag: usize) -> f64 {
    let n = xs.len();
    let cov: f64 = xs[..n - lag].iter().zip(&xs[lag..]).map(|(a, b)| (a - m) * (b - m)).sum();
    cov / n as f64 / gamma0
}

/// Effective sample size with Geyer's initial positive sequence: pairs
/// `rho_2m + rho_2m+1` are summed until the first negative pair.
/// `Ok(None)` for a constant chain.
pub fn ess(chain: &[f64]) -> Result<Option<f64>> {
    let n = chain.len();
    if n < 10 {
        return Err(Error::Shape("ESS needs at least ten draws".into()));
    }
    let m = mean(chain);
    let gamma0 = chain.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    if !(gamma0 > 0.0) {
        return Ok(None);
    }
    // tau = -1 + 2 * sum of positive pair sums (the first pair includes rho_0 = 1).
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = autocorrelation(chain, m, gamma0, k) + autocorrelation(chain, m, gamma0, k + 1);
        if pair < 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    Ok(Some(n as f64 / tau))
}

/// Effective sample size pooled over chains (sum of per-chain values).
pub fn ess_chains(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let mut total = 0.0;
    for c in chains {
        match ess(c)? {
            Some(e) => total += e,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn identical_chains_near_one() {
        let c = noise(1, 2000);
        let r = rhat(&[c.clone(), c]).unwrap().unwrap();
        assert!((r - 1.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn separated_chains_flagged() {
        let a = noise(2, 500);
        let b: Vec<f64> = noise(3, 500).iter().map(|x| x + 10.0).collect();
        assert!(rhat(&[a, b]).unwrap().unwrap() > 1.1);
    }

    #[test]
    fn affine_invariance() {
        let (a, b) = (noise(4, 300), noise(5, 300));
        let r0 = rhat(&[a.clone(), b.clone()]).unwrap().unwrap();
        let f = |v: &Vec<f64>| v.iter().map(|x| 3.0 * x - 7.0).collect::<Vec<_>>();
        let r1 = rhat(&[f(&a), f(&b)]).unwrap().unwrap();
        assert!((r0 - r1).abs() < 1e-12);
    }

    #[test]
    fn constant_chains_not_computable() {
        assert_eq!(rhat(&[vec![1.0; 10], vec![1.0; 10]]).unwrap(), None);
        assert_eq!(ess(&[2.0; 20]).unwrap(), None);
    }

    #[test]
    fn preconditions() {
        assert!(rhat(&[vec![0.0; 10]]).is_err());
        assert!(rhat(&[vec![0.0; 3], vec![1.0; 3]]).is_err());
        assert!(rhat(&[vec![0.0; 10], vec![1.0; 9]]).is_err());
        assert!(ess(&[0.0; 9]).is_err());
    }

    #[test]
    fn white_noise_ess_near_n() {
        for seed in 0..10 {
            let e = ess(&noise(100 + seed, 2000)).unwrap().unwrap();
            assert!((e / 2000.0 - 1.0).abs() < 0.2, "{e}");
        }
    }
}
