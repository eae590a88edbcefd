//! Oracle suite for the distance library: every estimator is recomputed by an
//! independent method and compared property by property.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use xdomain_core::metrics::{
    emd_discrete, euclidean_distance, gram_matrix, imq_kernel, kl_divergence, manhattan_distance, minkowski_distance,
    mmd_biased, mmd_unbiased, DiscreteDistribution, KernelSpec,
};
use xdomain_core::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        PropertyResult { name, passed, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

const PIVOT_EPS: f64 = 1e-12;

/// `min c.x` subject to `A x = b`, `x >= 0`, with `b >= 0`. Dense two-phase
/// tableau simplex under Bland's rule; `None` when infeasible.
pub fn simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let r = a.len();
    let nv = c.len();
    let rhs = nv + r;
    let mut t: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            let mut row = a[i].clone();
            row.resize(nv + r + 1, 0.0);
            row[nv + i] = 1.0;
            row[rhs] = b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (nv..nv + r).collect();

    fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
        let p = t[row][col];
        for v in t[row].iter_mut() {
            *v /= p;
        }
        let pr = t[row].clone();
        for (i, ti) in t.iter_mut().enumerate() {
            if i != row && ti[col] != 0.0 {
                let f = ti[col];
                for (v, pv) in ti.iter_mut().zip(&pr) {
                    *v -= f * pv;
                }
            }
        }
        basis[row] = col;
    }

    fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize, rhs: usize) {
        loop {
            let entering = (0..allowed).find(|&j| {
                let z: f64 = basis.iter().zip(t.iter()).map(|(&bi, row)| cost[bi] * row[j]).sum();
                cost[j] - z < -PIVOT_EPS
            });
            let Some(j) = entering else { return };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][j] > PIVOT_EPS {
                    let ratio = t[i][rhs] / t[i][j];
                    leave = match leave {
                        Some((l, best)) if ratio > best || (ratio == best && basis[l] < basis[i]) => Some((l, best)),
                        _ => Some((i, ratio)),
                    };
                }
            }
            // unbounded cannot happen for transport problems
            let Some((i, _)) = leave else { return };
            pivot(t, basis, i, j);
        }
    }

    let mut phase1 = vec![0.0; nv + r];
    phase1[nv..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, nv + r, rhs);
    let infeasibility: f64 = basis.iter().zip(&t).filter(|(&bi, _)| bi >= nv).map(|(_, row)| row[rhs]).sum();
    if infeasibility > 1e-9 {
        return None;
    }
    for i in 0..r {
        if basis[i] >= nv {
            if let Some(j) = (0..nv).find(|&j| t[i][j].abs() > PIVOT_EPS) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    let mut phase2 = c.to_vec();
    phase2.resize(nv + r, 0.0);
    run(&mut t, &mut basis, &phase2, nv, rhs);
    Some(basis.iter().zip(&t).map(|(&bi, row)| phase2[bi] * row[rhs]).sum())
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut y: Vec<f64>) -> Option<Vec<f64>> {
    let n = y.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[p][k].abs() < 1e-10 {
            return None;
        }
        m.swap(k, p);
        y.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for c in k..n {
                    m[i][c] -= f * m[k][c];
                }
                y[i] -= f * y[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| m[k][c] * x[c]).sum();
        x[k] = (y[k] - s) / m[k][k];
    }
    Some(x)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// `min c.x` over every basic solution of a full-row-rank `A x = b, x >= 0`.
pub fn vertex_enumeration(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let (r, nv) = (a.len(), c.len());
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        let m: Vec<Vec<f64>> = (0..r).map(|i| idx.iter().map(|&j| a[i][j]).collect()).collect();
        if let Some(x) = solve(m, b.to_vec()) {
            if x.iter().all(|&v| v >= -1e-12) {
                let cost: f64 = idx.iter().zip(&x).map(|(&j, v)| c[j] * v).sum();
                best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            }
        }
        // next combination in lexicographic order
        let Some(k) = (0..r).rev().find(|&k| idx[k] < nv - r + k) else {
            return best;
        };
        idx[k] += 1;
        for l in k + 1..r {
            idx[l] = idx[l - 1] + 1;
        }
    }
}

/// Largest basis count for which the transport oracle enumerates vertices
/// instead of running the simplex.
pub const ENUMERATION_LIMIT: usize = 20_000;

/// Transport problem as an LP; the last column constraint is implied by the
/// others and dropped so the rows are independent.
fn transport_lp(p: &DiscreteDistribution, q: &DiscreteDistribution) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (n, m) = (p.len(), q.len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let mut row = vec![0.0; n * m];
        row[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = 1.0);
        a.push(row);
        b.push(p.masses()[i]);
    }
    for j in 0..m - 1 {
        let mut row = vec![0.0; n * m];
        (0..n).for_each(|i| row[i * m + j] = 1.0);
        a.push(row);
        b.push(q.masses()[j]);
    }
    let mut c = Vec::with_capacity(n * m);
    for x in p.locations() {
        for y in q.locations() {
            let sq: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
            c.push(sq.sqrt());
        }
    }
    (a, b, c)
}

/// Optimal transport cost by vertex enumeration when small, else by simplex.
pub fn emd_oracle(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let (a, b, c) = transport_lp(p, q);
    if binomial(c.len(), a.len()) <= ENUMERATION_LIMIT { vertex_enumeration(&a, &b, &c) } else { simplex(&a, &b, &c) }
        .expect("balanced transport problems are feasible")
}

fn imq(scale: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut sq = 0.0;
    for k in 0..x.len() {
        sq += (x[k] - y[k]) * (x[k] - y[k]);
    }
    scale / (scale + sq)
}

/// `MMD^2` by explicit double sums over the rows of `xs` and `ys`.
pub fn mmd_oracle(xs: &[Vec<f64>], ys: &[Vec<f64>], scale: f64, unbiased: bool) -> f64 {
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let mut kxx = 0.0;
    for (i, a) in xs.iter().enumerate() {
        for (j, b) in xs.iter().enumerate() {
            if !(unbiased && i == j) {
                kxx += imq(scale, a, b);
            }
        }
    }
    let mut kyy = 0.0;
    for (i, a) in ys.iter().enumerate() {
        for (j, b) in ys.iter().enumerate() {
            if !(unbiased && i == j) {
                kyy += imq(scale, a, b);
            }
        }
    }
    let mut kxy = 0.0;
    for a in xs {
        for b in ys {
            kxy += imq(scale, a, b);
        }
    }
    let (dx, dy) = if unbiased { (n * (n - 1.0), m * (m - 1.0)) } else { (n * n, m * m) };
    kxx / dx + kyy / dy - 2.0 * kxy / (n * m)
}

fn random_distribution(rng: &mut ChaCha8Rng, atoms: usize, dim: usize) -> DiscreteDistribution {
    let mut w: Vec<f64> = (0..atoms).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.01..1.0) }).collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    let atoms_v = w.iter().map(|&m| ((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(), m / total)).collect();
    DiscreteDistribution::new(atoms_v).expect("valid random distribution")
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    v + shift
                })
                .collect::<Vec<f64>>()
        })
        .collect()
}

fn tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_vec(&[rows.len(), rows[0].len()], rows.concat()).expect("rectangular")
}

/// Optimal transport: oracle agreement, marginals, symmetry, permutation
/// invariance and the triangle inequality.
pub fn check_emd(seed: u64) -> Vec<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let start = Instant::now();
    let (mut worst, mut worst_marginal) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let dim = rng.gen_range(1..=3);
        let (np, nq) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let p = random_distribution(&mut rng, np, dim);
        let q = random_distribution(&mut rng, nq, dim);
        let sol = emd_discrete(&p, &q).expect("valid pair");
        worst = worst.max((sol.cost - emd_oracle(&p, &q)).abs());
        for (i, row) in sol.plan.iter().enumerate() {
            worst_marginal = worst_marginal.max((row.iter().sum::<f64>() - p.masses()[i]).abs());
        }
        for j in 0..q.len() {
            let col: f64 = sol.plan.iter().map(|r| r[j]).sum();
            worst_marginal = worst_marginal.max((col - q.masses()[j]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    out.push(PropertyResult::new(
        "emd_matches_lp_oracle",
        worst <= 1e-9 && secs < 60.0,
        format!("500 pairs, max |diff| {worst:.2e}, {secs:.1}s"),
    ));
    out.push(PropertyResult::new(
        "emd_plan_marginals",
        worst_marginal <= 1e-9,
        format!("max error {worst_marginal:.2e}"),
    ));

    let mut worst_cross = 0.0f64;
    for _ in 0..100 {
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let p = random_distribution(&mut rng, n, 2);
        let q = random_distribution(&mut rng, m, 2);
        let (a, b, c) = transport_lp(&p, &q);
        let diff = (simplex(&a, &b, &c).unwrap() - vertex_enumeration(&a, &b, &c).unwrap()).abs();
        worst_cross = worst_cross.max(diff);
    }
    out.push(PropertyResult::new(
        "lp_oracles_agree",
        worst_cross <= 1e-10,
        format!("simplex vs enumeration, max |diff| {worst_cross:.2e}"),
    ));

    let (mut sym, mut perm, mut tri_violation) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let dim = rng.gen_range(1..=3);
        let sizes: [usize; 3] = std::array::from_fn(|_| rng.gen_range(1..=5));
        let p = random_distribution(&mut rng, sizes[0], dim);
        let q = random_distribution(&mut rng, sizes[1], dim);
        let r = random_distribution(&mut rng, sizes[2], dim);
        let d = |a: &DiscreteDistribution, b: &DiscreteDistribution| emd_discrete(a, b).unwrap().cost;
        sym = sym.max((d(&p, &q) - d(&q, &p)).abs());
        let mut atoms: Vec<(Vec<f64>, f64)> = p.locations().iter().cloned().zip(p.masses().iter().copied()).collect();
        atoms.reverse();
        let p_rev = DiscreteDistribution::new(atoms).unwrap();
        perm = perm.max((d(&p, &q) - d(&p_rev, &q)).abs());
        tri_violation = tri_violation.max(d(&p, &r) - d(&p, &q) - d(&q, &r));
    }
    out.push(PropertyResult::new("emd_symmetric", sym <= 1e-9, format!("max |d(p,q)-d(q,p)| {sym:.2e}")));
    out.push(PropertyResult::new("emd_permutation_invariant", perm <= 1e-9, format!("max diff {perm:.2e}")));
    out.push(PropertyResult::new(
        "emd_triangle_inequality",
        tri_violation <= 1e-9,
        format!("max violation {tri_violation:.2e}"),
    ));
    out
}

/// MMD estimators against double sums, and the null-hypothesis mean.
pub fn check_mmd(seed: u64) -> Vec<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let (mut worst_u, mut worst_b, mut min_biased) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let d = rng.gen_range(1..=4);
        let (n, m) = (rng.gen_range(2..=10), rng.gen_range(2..=10));
        let scale = rng.gen_range(0.5..8.0);
        let xs = random_rows(&mut rng, n, d, 0.0);
        let shift = rng.gen_range(0.0..1.5);
        let ys = random_rows(&mut rng, m, d, shift);
        let spec = KernelSpec::imq(scale).unwrap();
        let (tx, ty) = (tensor(&xs), tensor(&ys));
        let u = mmd_unbiased(&tx, &ty, &spec).unwrap();
        let b = mmd_biased(&tx, &ty, &spec).unwrap();
        worst_u = worst_u.max((u - mmd_oracle(&xs, &ys, scale, true)).abs());
        worst_b = worst_b.max((b - mmd_oracle(&xs, &ys, scale, false)).abs());
        min_biased = min_biased.min(b);
    }
    out.push(PropertyResult::new(
        "mmd_unbiased_matches_double_sum",
        worst_u <= 1e-12,
        format!("200 pairs, max |diff| {worst_u:.2e}"),
    ));
    out.push(PropertyResult::new(
        "mmd_biased_matches_double_sum",
        worst_b <= 1e-12,
        format!("200 pairs, max |diff| {worst_b:.2e}"),
    ));
    out.push(PropertyResult::new("mmd_biased_non_negative", min_biased >= 0.0, format!("min {min_biased:.2e}")));

    let d = 4;
    let spec = KernelSpec::imq_for_prior(d, 1.0).unwrap();
    let vals: Vec<f64> = (0..100)
        .map(|_| {
            let xs = tensor(&random_rows(&mut rng, 500, d, 0.0));
            let ys = tensor(&random_rows(&mut rng, 500, d, 0.0));
            mmd_unbiased(&xs, &ys, &spec).unwrap()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / 100.0;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 99.0;
    let se = (var / 100.0).sqrt();
    out.push(PropertyResult::new(
        "mmd_unbiased_null_mean_zero",
        mean.abs() <= 3.0 * se,
        format!("n=m=500, 100 reps, mean {mean:.3e}, se {se:.3e}"),
    ));

    let near = tensor(&random_rows(&mut rng, 200, 2, 0.0));
    let same = tensor(&random_rows(&mut rng, 200, 2, 0.0));
    let far = tensor(&random_rows(&mut rng, 200, 2, 3.0));
    let spec = KernelSpec::imq(4.0).unwrap();
    let (a, b) = (mmd_biased(&near, &far, &spec).unwrap(), mmd_biased(&near, &same, &spec).unwrap());
    out.push(PropertyResult::new("mmd_separates_clouds", a > b, format!("separated {a:.4}, same {b:.4}")));
    out
}

/// Tabulated distances, KL values and kernel properties.
pub fn check_closed_forms(seed: u64) -> Vec<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut failures = String::new();
    let mut expect = |label: &str, got: f64, want: f64| {
        if got != want {
            let _ = write!(failures, "{label}: {got} != {want}; ");
        }
    };
    expect("minkowski p=1", minkowski_distance(&[1.0, 2.0], &[4.0, 6.0], 1.0).unwrap(), 7.0);
    expect("minkowski p=2", minkowski_distance(&[0.0, 0.0], &[3.0, 4.0], 2.0).unwrap(), 5.0);
    let z = [0.3, -1.1, 7.0];
    for p in [1.0, 1.5, 2.0, 3.0] {
        expect("minkowski identity", minkowski_distance(&z, &z, p).unwrap(), 0.0);
    }
    expect("manhattan", manhattan_distance(&[1.0, 2.0], &[4.0, 6.0]).unwrap(), 7.0);
    expect("euclidean", euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    expect("manhattan identity", manhattan_distance(&z, &z).unwrap(), 0.0);
    expect("euclidean identity", euclidean_distance(&z, &z).unwrap(), 0.0);
    let half = DiscreteDistribution::from_probabilities(&[0.5, 0.5]).unwrap();
    let skew = DiscreteDistribution::from_probabilities(&[0.25, 0.75]).unwrap();
    let point = DiscreteDistribution::from_probabilities(&[1.0, 0.0]).unwrap();
    expect("kl identity", kl_divergence(&skew, &skew).unwrap(), 0.0);
    expect("kl (0.5,0.5)||(0.25,0.75)", kl_divergence(&half, &skew).unwrap(), 0.14384103622589042);
    expect("kl (1,0)||(0.5,0.5)", kl_divergence(&point, &half).unwrap(), 0.6931471805599453);
    let spec2 = KernelSpec::imq(2.0).unwrap();
    let spec1 = KernelSpec::imq(1.0).unwrap();
    expect("imq identity", imq_kernel(&z, &z, &spec2).unwrap(), 1.0);
    expect("imq (0),(1),C=1", imq_kernel(&[0.0], &[1.0], &spec1).unwrap(), 0.5);
    let line = |a: &[(f64, f64)]| DiscreteDistribution::new(a.iter().map(|&(x, m)| (vec![x], m)).collect()).unwrap();
    expect("emd identity", emd_discrete(&half, &half).unwrap().cost, 0.0);
    expect("emd 0 -> 3", emd_discrete(&line(&[(0.0, 1.0)]), &line(&[(3.0, 1.0)])).unwrap().cost, 3.0);
    expect("emd split", emd_discrete(&line(&[(0.0, 0.5), (1.0, 0.5)]), &line(&[(0.0, 1.0)])).unwrap().cost, 0.5);
    out.push(PropertyResult::new(
        "closed_form_tables",
        failures.is_empty(),
        if failures.is_empty() { "exact".into() } else { failures },
    ));

    let (mut min_kl, mut self_kl) = (f64::INFINITY, 0.0f64);
    for _ in 0..10_000 {
        let k = rng.gen_range(1..=6);
        let mut p: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut q: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        if p.iter().all(|&v| v == 0.0) {
            p[0] = 1.0;
        }
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        p.iter_mut().for_each(|v| *v /= sp);
        q.iter_mut().for_each(|v| *v /= sq);
        let (pd, qd) = (
            DiscreteDistribution::from_probabilities(&p).unwrap(),
            DiscreteDistribution::from_probabilities(&q).unwrap(),
        );
        min_kl = min_kl.min(kl_divergence(&pd, &qd).unwrap());
        self_kl = self_kl.max(kl_divergence(&pd, &pd).unwrap().abs());
    }
    out.push(PropertyResult::new(
        "kl_non_negative",
        min_kl >= 0.0 && self_kl <= 1e-12,
        format!("10000 pairs, min {min_kl:.2e}, max |kl(p,p)| {self_kl:.2e}"),
    ));

    let (mut sym, mut tri, mut spec_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let d = rng.gen_range(1..=5);
        let p = rng.gen_range(1.0..4.0);
        let v = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
        let (x, y, w) = (v(&mut rng), v(&mut rng), v(&mut rng));
        let m = |a: &[f64], b: &[f64]| minkowski_distance(a, b, p).unwrap();
        sym = sym.max((m(&x, &y) - m(&y, &x)).abs());
        tri = tri.max(m(&x, &w) - m(&x, &y) - m(&y, &w));
        spec_err = spec_err
            .max((manhattan_distance(&x, &y).unwrap() - minkowski_distance(&x, &y, 1.0).unwrap()).abs())
            .max((euclidean_distance(&x, &y).unwrap() - minkowski_distance(&x, &y, 2.0).unwrap()).abs());
    }
    out.push(PropertyResult::new(
        "minkowski_metric_axioms",
        sym == 0.0 && tri <= 1e-12 && spec_err <= 1e-12,
        format!("1000 triples, asymmetry {sym:.1e}, triangle violation {tri:.1e}, p=1/2 mismatch {spec_err:.1e}"),
    ));

    let mut min_eig = f64::INFINITY;
    for _ in 0..50 {
        let (n, d) = (rng.gen_range(2..=20), rng.gen_range(1..=4));
        let xs = tensor(&random_rows(&mut rng, n, d, 0.0));
        let scale = rng.gen_range(0.5..8.0);
        let g = gram_matrix(&xs, &xs, &KernelSpec::imq(scale).unwrap()).unwrap();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i][j]);
        min_eig = min_eig.min(m.symmetric_eigenvalues().min());
    }
    out.push(PropertyResult::new("imq_gram_psd", min_eig >= -1e-10, format!("smallest eigenvalue {min_eig:.2e}")));
    out
}

pub fn run_all(seed: u64) -> Vec<PropertyResult> {
    let mut out = check_emd(seed);
    out.extend(check_mmd(seed.wrapping_add(1)));
    out.extend(check_closed_forms(seed.wrapping_add(2)));
    out
}
