use super::DesignError;

/// Above this size the generator search visits an evenly strided subset of
/// the admissible generators instead of all of them.
const EXHAUSTIVE_LIMIT: usize = 1024;
const MAX_CANDIDATES: usize = 256;
/// Scores within this relative margin count as tied. Ties come in pairs
/// `h`, `h⁻¹ mod n` giving transposed lattices; the larger `h` is kept.
const TIE_TOL: f64 = 1e-12;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn single_factor(a: f64) -> f64 {
    let c = (a - 0.5).abs();
    1.0 + 0.5 * c - 0.5 * c * c
}

fn pair_factor(a: f64, b: f64) -> f64 {
    1.0 + 0.5 * (a - 0.5).abs() + 0.5 * (b - 0.5).abs() - 0.5 * (a - b).abs()
}

/// Squared centered L2 discrepancy of a point set in `[0,1]^d`.
pub fn centered_l2_discrepancy_sq(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points.first().map_or(0, Vec::len) as i32;
    let single: f64 = points.iter().map(|p| p.iter().map(|&a| single_factor(a)).product::<f64>()).sum();
    let mut pair = 0.0;
    for (i, p) in points.iter().enumerate() {
        pair += p.iter().map(|&a| pair_factor(a, a)).product::<f64>();
        for q in &points[..i] {
            pair += 2.0 * p.iter().zip(q).map(|(&a, &b)| pair_factor(a, b)).product::<f64>();
        }
    }
    (13.0f64 / 12.0).powi(d) - 2.0 / n * single + pair / (n * n)
}

/// Centered L2 discrepancy (the square root of the usual squared form).
pub fn centered_l2_discrepancy(points: &[Vec<f64>]) -> f64 {
    centered_l2_discrepancy_sq(points).max(0.0).sqrt()
}

/// Lattice coordinate `((i·h mod n) + 0.5) / n`.
pub(super) fn lattice_coord(i: usize, h: usize, n: usize) -> f64 {
    ((i * h) % n) as f64 / n as f64 + 0.5 / n as f64
}

/// Chooses the generating vector `(1, h₂, …, h_d)` of distinct integers
/// coprime to `n` minimizing centered L2 discrepancy, one coordinate at a
/// time. For `d = 2` this is an exhaustive search.
pub(super) fn choose_generator(n: usize, d: usize) -> Result<Vec<usize>, DesignError> {
    let coprime: Vec<usize> = (2..n).filter(|&h| gcd(h, n) == 1).collect();
    if coprime.len() + 1 < d {
        return Err(DesignError::GeneratorUnavailable { n, d });
    }
    let mut gen = vec![1];
    if d == 1 {
        return Ok(gen);
    }

    // Every lattice coordinate takes values from the same 1-D grid, so the
    // discrepancy terms reduce to lookups into per-grid-value tables.
    let values: Vec<f64> = (0..n).map(|m| (m as f64 + 0.5) / n as f64).collect();
    let g: Vec<f64> = values.iter().map(|&a| single_factor(a)).collect();
    let mut a_tab = vec![0.0; n * n];
    for (m, &vm) in values.iter().enumerate() {
        for (k, &vk) in values.iter().enumerate() {
            a_tab[m * n + k] = pair_factor(vm, vk);
        }
    }
    // running products over the coordinates chosen so far; with h₁ = 1 the
    // first coordinate of point i is grid value i
    let mut single_prod = g.clone();
    let mut pair_prod = a_tab.clone();

    let mut remaining = coprime;
    while gen.len() < d {
        let candidates: Vec<usize> = if n > EXHAUSTIVE_LIMIT && remaining.len() > MAX_CANDIDATES {
            (0..MAX_CANDIDATES).map(|k| remaining[k * remaining.len() / MAX_CANDIDATES]).collect()
        } else {
            remaining.clone()
        };
        let mut best: Option<(f64, usize)> = None;
        for &h in &candidates {
            let idx: Vec<usize> = (0..n).map(|i| (i * h) % n).collect();
            let single: f64 = (0..n).map(|i| single_prod[i] * g[idx[i]]).sum();
            let mut pair = 0.0;
            for i in 0..n {
                let row = &pair_prod[i * n..i * n + i];
                let a_row = &a_tab[idx[i] * n..(idx[i] + 1) * n];
                let off: f64 = row.iter().zip(&idx[..i]).map(|(p, &k)| p * a_row[k]).sum();
                pair += 2.0 * off + pair_prod[i * n + i] * a_row[idx[i]];
            }
            // only the h-dependent part matters for the comparison
            let score = pair / (n * n) as f64 - 2.0 / n as f64 * single;
            let better = match best {
                None => true,
                Some((b, _)) => score <= b + TIE_TOL * b.abs().max(1.0),
            };
            if better {
                best = Some((score, h));
            }
        }
        let (_, h) = best.expect("candidate list is non-empty");
        gen.push(h);
        remaining.retain(|&c| c != h);
        if gen.len() < d {
            let idx: Vec<usize> = (0..n).map(|i| (i * h) % n).collect();
            for i in 0..n {
                single_prod[i] *= g[idx[i]];
                for k in 0..n {
                    pair_prod[i * n + k] *= a_tab[idx[i] * n + idx[k]];
                }
            }
        }
    }
    Ok(gen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, gen: &[usize]) -> Vec<Vec<f64>> {
        (0..n).map(|i| gen.iter().map(|&h| lattice_coord(i, h, n)).collect()).collect()
    }

    #[test]
    fn discrepancy_of_single_centre_point() {
        // d = 1, x = 0.5: 13/12 - 2·1 + 1 = 1/12
        let cd2 = centered_l2_discrepancy_sq(&[vec![0.5]]);
        assert!((cd2 - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn search_matches_brute_force() {
        for n in [5, 8, 13, 25, 26, 30] {
            let gen = choose_generator(n, 2).unwrap();
            let best = (2..n)
                .filter(|&h| gcd(h, n) == 1)
                .map(|h| (centered_l2_discrepancy_sq(&lattice(n, &[1, h])), h))
                .fold((f64::INFINITY, 0), |acc, c| if c.0 < acc.0 - 1e-12 { c } else { acc });
            let chosen = centered_l2_discrepancy_sq(&lattice(n, &gen));
            assert!((chosen - best.0).abs() < 1e-12, "n {n}: {gen:?} vs h {}", best.1);
        }
    }

    #[test]
    fn ties_keep_the_larger_generator() {
        // 11·16 ≡ 1 (mod 25) and 11·19 ≡ 1 (mod 26)
        assert_eq!(choose_generator(25, 2).unwrap(), vec![1, 16]);
        assert_eq!(choose_generator(26, 2).unwrap(), vec![1, 19]);
    }

    #[test]
    fn greedy_in_three_dimensions() {
        let gen = choose_generator(31, 3).unwrap();
        assert_eq!(gen.len(), 3);
        assert_eq!(gen[0], 1);
        assert_ne!(gen[1], gen[2]);
        assert!(gen.iter().all(|&h| gcd(h, 31) == 1));
    }

    #[test]
    fn too_few_generators() {
        // only 1, 3, 5, 7 are coprime to 8
        assert!(choose_generator(8, 4).is_ok());
        assert!(matches!(choose_generator(8, 5), Err(DesignError::GeneratorUnavailable { .. })));
    }
}
