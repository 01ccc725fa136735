//! Smoothed state marginals for the three-state Gaussian-emission HMM,
//! via scaled forward-backward. State 0 is the unobserved initial state;
//! observations drive states 1..16. A trailing predictive marginal (one
//! step past the last observation) is computed separately.

#[derive(Debug, Clone)]
pub struct HmmSpec {
    pub initial: [f64; 3],
    pub transitions: [[f64; 3]; 3],
    pub emission_means: [f64; 3],
    pub emission_std: f64,
    pub observations: Vec<f64>,
}

impl Default for HmmSpec {
    fn default() -> HmmSpec {
        HmmSpec {
            initial: [1.0 / 3.0; 3],
            transitions: [[0.1, 0.5, 0.4], [0.2, 0.2, 0.6], [0.15, 0.15, 0.7]],
            emission_means: [-1.0, 1.0, 0.0],
            emission_std: 1.0,
            observations: vec![
                0.9, 0.8, 0.7, 0.0, -0.025, 5.0, 2.0, 0.1, 0.0, 0.13, 0.45, 6.0, 0.2,
                0.3, -1.0, -1.0,
            ],
        }
    }
}

fn emission(spec: &HmmSpec, state: usize, y: f64) -> f64 {
    let z = (y - spec.emission_means[state]) / spec.emission_std;
    (-0.5 * z * z).exp() / spec.emission_std
}

fn normalize(v: &mut [f64; 3]) {
    let s: f64 = v.iter().sum();
    assert!(s > 0.0, "vanishing probability vector");
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Smoothed marginals for states 0..=N where N = number of observations.
pub fn hmm_marginals(spec: &HmmSpec) -> Vec<[f64; 3]> {
    let n = spec.observations.len();
    let mut alphas = Vec::with_capacity(n + 1);
    let mut alpha = spec.initial;
    normalize(&mut alpha);
    alphas.push(alpha);
    for i in 0..n {
        let mut next = [0.0; 3];
        for (k, nk) in next.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..3 {
                s += alpha[j] * spec.transitions[j][k];
            }
            *nk = s * emission(spec, k, spec.observations[i]);
        }
        normalize(&mut next);
        alpha = next;
        alphas.push(alpha);
    }
    let mut gammas = vec![[0.0; 3]; n + 1];
    let mut beta = [1.0f64; 3];
    for i in (0..=n).rev() {
        let mut g = alphas[i];
        for k in 0..3 {
            g[k] *= beta[k];
        }
        normalize(&mut g);
        gammas[i] = g;
        if i > 0 {
            // Absorb the observation at step i while stepping beta back.
            let mut prev = [0.0; 3];
            for (j, pj) in prev.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..3 {
                    s += spec.transitions[j][k]
                        * emission(spec, k, spec.observations[i - 1])
                        * beta[k];
                }
                *pj = s;
            }
            normalize(&mut prev);
            beta = prev;
        }
    }
    gammas
}

/// Predictive marginal one step past the final observed state.
pub fn hmm_trailing_predictive(spec: &HmmSpec) -> [f64; 3] {
    let gammas = hmm_marginals(spec);
    let last = gammas[gammas.len() - 1];
    let mut out = [0.0; 3];
    for (k, ok) in out.iter_mut().enumerate() {
        for j in 0..3 {
            *ok += last[j] * spec.transitions[j][k];
        }
    }
    out
}

/// Exhaustive path enumeration (3^(N+1) paths) with compensated sums.
/// Exists only to validate `hmm_marginals`; run via the ignored test.
pub fn hmm_brute_force(spec: &HmmSpec) -> Vec<[f64; 3]> {
    struct Kahan {
        sum: f64,
        c: f64,
    }
    impl Kahan {
        fn add(&mut self, x: f64) {
            let y = x - self.c;
            let t = self.sum + y;
            self.c = (t - self.sum) - y;
            self.sum = t;
        }
    }
    let n = spec.observations.len();
    let mut marg: Vec<[Kahan; 3]> = (0..=n)
        .map(|_| std::array::from_fn(|_| Kahan { sum: 0.0, c: 0.0 }))
        .collect();
    let mut total = Kahan { sum: 0.0, c: 0.0 };
    let mut path = vec![0usize; n + 1];
    // DFS over the path prefix with its partial weight.
    fn rec(
        spec: &HmmSpec,
        depth: usize,
        w: f64,
        path: &mut Vec<usize>,
        marg: &mut [[Kahan; 3]],
        total: &mut Kahan,
    ) {
        let n = spec.observations.len();
        if depth > n {
            total.add(w);
            for (i, &s) in path.iter().enumerate() {
                marg[i][s].add(w);
            }
            return;
        }
        for s in 0..3 {
            let step = if depth == 0 {
                spec.initial[s]
            } else {
                spec.transitions[path[depth - 1]][s]
                    * emission(spec, s, spec.observations[depth - 1])
            };
            path[depth] = s;
            rec(spec, depth + 1, w * step, path, marg, total);
        }
    }
    rec(spec, 0, 1.0, &mut path, &mut marg, &mut total);
    marg.into_iter()
        .map(|row| {
            let mut out = [0.0; 3];
            for (k, cell) in row.iter().enumerate() {
                out[k] = cell.sum / total.sum;
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_marginal_rows_normalize() {
        let g = hmm_marginals(&HmmSpec::default());
        assert_eq!(g.len(), 17);
        for row in &g {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        let t = hmm_trailing_predictive(&HmmSpec::default());
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn test_uninformative_observations_give_prior_chain() {
        // Equal emission means make every observation carry no state
        // information, so smoothing collapses to the prior marginals.
        let spec = HmmSpec { emission_means: [0.3; 3], ..HmmSpec::default() };
        let g = hmm_marginals(&spec);
        let mut prior = spec.initial;
        for (i, row) in g.iter().enumerate() {
            if i > 0 {
                let mut next = [0.0; 3];
                for k in 0..3 {
                    for j in 0..3 {
                        next[k] += prior[j] * spec.transitions[j][k];
                    }
                }
                prior = next;
            }
            for k in 0..3 {
                assert!((row[k] - prior[k]).abs() < 1e-12, "step {i} state {k}");
            }
        }
    }

    #[test]
    fn test_single_observation_hand_computed() {
        // One step, one observation: γ_1(k) ∝ (Σ_j π_j A_jk)·e(k),
        // γ_0(j) ∝ π_j Σ_k A_jk e(k). Worked with explicit arithmetic.
        let spec = HmmSpec { observations: vec![0.9], ..HmmSpec::default() };
        let e = |k: usize| emission(&spec, k, 0.9);
        let pred =
            |k: usize| (0..3).map(|j| spec.initial[j] * spec.transitions[j][k]).sum::<f64>();
        let z: f64 = (0..3).map(|k| pred(k) * e(k)).sum();
        let g = hmm_marginals(&spec);
        for k in 0..3 {
            assert!((g[1][k] - pred(k) * e(k) / z).abs() < 1e-12);
        }
        let like = |j: usize| {
            (0..3).map(|k| spec.transitions[j][k] * e(k)).sum::<f64>()
        };
        let z0: f64 = (0..3).map(|j| spec.initial[j] * like(j)).sum();
        for j in 0..3 {
            assert!((g[0][j] - spec.initial[j] * like(j) / z0).abs() < 1e-12);
        }
    }

    #[test]
    fn test_brute_force_small_case_agrees() {
        // 4 observations → 3^5 paths, cheap enough for the regular suite.
        let spec = HmmSpec {
            observations: vec![0.9, 0.8, 0.7, 0.0],
            ..HmmSpec::default()
        };
        let fb = hmm_marginals(&spec);
        let bf = hmm_brute_force(&spec);
        for (a, b) in fb.iter().zip(&bf) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[ignore = "enumerates 3^17 paths; run explicitly to revalidate the oracle"]
    fn test_brute_force_full_agrees() {
        let spec = HmmSpec::default();
        let fb = hmm_marginals(&spec);
        let bf = hmm_brute_force(&spec);
        for (i, (a, b)) in fb.iter().zip(&bf).enumerate() {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-8, "state {i} comp {k}: {} {}", a[k], b[k]);
            }
        }
    }

    #[test]
    fn test_golden_file_match() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/golden/hmm_marginals.csv"
        ))
        .expect("golden file present");
        let g = hmm_marginals(&HmmSpec::default());
        let trailing = hmm_trailing_predictive(&HmmSpec::default());
        let mut checked = 0;
        for line in text.lines().skip(1) {
            let mut parts = line.split(',');
            let label = parts.next().unwrap();
            let state: usize = parts.next().unwrap().parse().unwrap();
            let p: f64 = parts.next().unwrap().parse().unwrap();
            let ours = if label == "trailing" {
                trailing[state]
            } else {
                let idx: usize = label
                    .strip_prefix("(get-state ")
                    .and_then(|s| s.strip_suffix(')'))
                    .unwrap()
                    .parse()
                    .unwrap();
                g[idx][state]
            };
            assert!((ours - p).abs() < 1e-8, "{label} state {state}: {ours} vs {p}");
            checked += 1;
        }
        assert_eq!(checked, 17 * 3 + 3);
    }
}
