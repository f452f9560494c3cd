//! End-to-end acceptance checks. Each check prints one PASS/FAIL line, and
//! the binary exits non-zero if any check fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use lighthash::analysis::stats::{chi_square, linear_fit, merge_bins};
use lighthash::analysis::{
    dispersion_sweep, energy_estimate, estimate_rho, feasibility_sweep, measure_cell, measure_sigma_out,
    predict_hash_error, CellMeasurement, CellSpec, EnergyModel,
};
use lighthash::chain::{
    mine_block, validate_block, validate_chain, Block, ChainConfig, DifficultySchedule, MineOutcome, MinerBackend,
};
use lighthash::hash::{
    lighthash_digest, oracle_matvec, select_threshold, threshold_seed, Backend, BlockHeader, BlockMatrix,
    CorrectedBackend, LightHashParams, OracleBackend, PhotonicBackend,
};
use lighthash::mesh::{
    cyclic_permutation, decompose_unitary, haar_unitary, max_abs_diff, permute_svd, reconstruct, svd_program, CMatrix,
    Layout,
};
use lighthash::noise::{derive_seed, ErrorProfile};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Fabrication spread used by the feasibility checks.
fn reference_profile() -> ErrorProfile {
    ErrorProfile::new(0.01, 0.01, 0.03)
}

fn oracle_equivalence() -> Outcome {
    let mut mismatches = 0usize;
    let mut total = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [4, 8, 16] {
        for k in [2, 4, 8] {
            let header = BlockHeader {
                height: rng.random(),
                prev_hash: rng.random(),
                merkle_root: rng.random(),
                n: n as u16,
                k: k as u16,
                difficulty: 0,
                t_int: 0,
            };
            let bm = BlockMatrix::derive(&header.prev_hash, &header.merkle_root, n, k).unwrap();
            let t = select_threshold(&bm, threshold_seed(&header.merkle_root));
            let header = BlockHeader { t_int: t, ..header };
            let bytes = header.to_bytes();
            let params = LightHashParams::new(n, k, t);
            let oracle = OracleBackend::new(&bm, &params).unwrap();
            let photonic =
                PhotonicBackend::new(&bm, &params, &ErrorProfile::zero(), 1560.0, rng.random(), Layout::Rectangular)
                    .unwrap();
            let start: u64 = rng.random();
            mismatches += (0..10_000u64)
                .into_par_iter()
                .filter(|i| {
                    let nonce = start.wrapping_add(*i);
                    lighthash_digest(&bytes, nonce, &bm, &params, &oracle).unwrap()
                        != lighthash_digest(&bytes, nonce, &bm, &params, &photonic).unwrap()
                })
                .count();
            total += 10_000;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches in {total} hashes over N in {{4,8,16}}, K in {{2,4,8}}"))
}

fn error_scaling() -> Outcome {
    let sigma = 0.005;
    let profile = ErrorProfile::new(sigma, sigma, 3.0 * sigma);
    let cells: Vec<(usize, usize)> = [8, 16, 32].iter().flat_map(|&n| [2, 4].map(|k| (n, k))).collect();
    let fits: Vec<_> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(n, k))| measure_sigma_out(&CellSpec::new(n, k, profile, 2000, 20, 200 + i as u64)).unwrap())
        .collect();
    let ratios: Vec<f64> = fits.iter().map(|f| f.k_phase).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let worst_ratio = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
    let worst_quad = fits.iter().map(|f| f.quadrature_residual().abs()).fold(0.0, f64::max);
    let table: Vec<String> = fits
        .iter()
        .map(|f| format!("N={} K={}: {:.3} (quad {:+.1}%)", f.n, f.k, f.k_phase, 100.0 * f.quadrature_residual()))
        .collect();
    check(
        worst_ratio <= 0.30 && worst_quad <= 0.20,
        format!(
            "phase-only sigma_out/(NK sigma) mean {mean:.3}, worst deviation {:.1}% (<= 30%); worst quadrature miss {:.1}% (<= 20%); {}",
            100.0 * worst_ratio,
            100.0 * worst_quad,
            table.join(", ")
        ),
    )
}

fn single_type_profiles() -> [(&'static str, ErrorProfile); 3] {
    let p = reference_profile();
    [
        ("phase", ErrorProfile { sigma_phase: p.sigma_phase, ..ErrorProfile::zero() }),
        ("coupling", ErrorProfile { sigma_coupling: p.sigma_coupling, ..ErrorProfile::zero() }),
        ("loss", ErrorProfile::new(0.0, 0.0, p.sigma_loss_db)),
    ]
}

/// Hash error along `K = 2` for `NK = 64 … 512`.
fn k2_curve(profile: &ErrorProfile, seed: u64) -> Vec<CellMeasurement> {
    [32, 64, 128, 256]
        .par_iter()
        .enumerate()
        .map(|(i, &n)| measure_cell(&CellSpec::new(n, 2, *profile, 2000, 20, seed + i as u64)).unwrap())
        .collect()
}

fn sharp_transition(eps: &[f64]) -> bool {
    eps.windows(2).any(|w| w[0] <= 0.10 && w[1] >= 0.50)
}

fn feasibility_boundary() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (name, p)) in single_type_profiles().iter().enumerate() {
        let eps: Vec<f64> = k2_curve(p, 300 + 10 * i as u64).iter().map(|c| c.eps_measured).collect();
        let pass = eps[0] <= 0.10 && eps[3] >= 0.50 && sharp_transition(&eps);
        ok &= pass;
        parts.push(format!("{name} {:?}", eps.iter().map(|e| format!("{:.3}", e)).collect::<Vec<_>>()));
    }
    // Reported only: all three error types at once, for three splits of NK.
    let combined = reference_profile();
    let mut info = Vec::new();
    for (j, k) in [2usize, 4, 8].iter().enumerate() {
        let ns: Vec<usize> = [64usize, 128, 256, 512].iter().map(|nk| nk / k).filter(|n| *n >= 2).collect();
        let eps: Vec<String> = ns
            .par_iter()
            .enumerate()
            .map(|(i, &n)| {
                let c =
                    measure_cell(&CellSpec::new(n, *k, combined, 2000, 20, 340 + 10 * j as u64 + i as u64)).unwrap();
                format!("{:.3}", c.eps_measured)
            })
            .collect();
        info.push(format!("K={k} {eps:?}"));
    }
    check(
        ok,
        format!(
            "single error type, K=2, NK=64..512: {}; all types together (reported): {}",
            parts.join(", "),
            info.join(", ")
        ),
    )
}

fn model_consistency() -> Outcome {
    let template = reference_profile();
    let mut cells = feasibility_sweep(&[8, 16, 32], &[2, 4], &[0.5, 1.0, 1.5], &template, 2000, 20, 400).unwrap();
    for (i, (_, p)) in single_type_profiles().iter().enumerate() {
        cells.extend(k2_curve(p, 450 + 10 * i as u64).into_iter().take(2));
    }
    let in_range: Vec<&CellMeasurement> = cells.iter().filter(|c| (1e-3..=0.3).contains(&c.eps_measured)).collect();
    let bad: Vec<String> = in_range
        .iter()
        .filter(|c| !(0.5..=2.0).contains(&(c.eps_predicted / c.eps_measured)))
        .map(|c| {
            format!(
                "N={} K={} ({:.3},{:.3},{:.3}) pred {:.4} meas {:.4}",
                c.spec.n,
                c.spec.k,
                c.spec.profile.sigma_phase,
                c.spec.profile.sigma_coupling,
                c.spec.profile.sigma_loss_db,
                c.eps_predicted,
                c.eps_measured
            )
        })
        .collect();
    let anchor = predict_hash_error(estimate_rho(4, 2, 1), 0.25).linear;
    check(
        bad.is_empty() && !in_range.is_empty() && anchor < 0.01,
        format!(
            "{} of {} cells with measured error in [1e-3, 0.3] outside a factor 2 of the prediction{}; predicted error at sigma_out=0.25, N=4, K=2: {:.4}",
            bad.len(),
            in_range.len(),
            if bad.is_empty() { String::new() } else { format!(" [{}]", bad.join("; ")) },
            anchor
        ),
    )
}

/// RMS of the in-phase deviation `Re(y)·σ_max√N − s`, the quantity signed
/// detection sees, with the same devices as the main measurement.
fn in_phase_deviation(n: usize, k: usize, profile: &ErrorProfile, r: usize, seed: u64) -> f64 {
    let (sq, count) = (0..20u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[d, 0]));
            let bm = BlockMatrix::random(n, k, &mut rng).unwrap();
            let params = LightHashParams { r, ..LightHashParams::new(n, k, 1) };
            let dev =
                CorrectedBackend::new(&bm, &params, profile, 1560.0, derive_seed(seed, &[d, 1]), Layout::Rectangular)
                    .unwrap();
            let mut sq = 0.0;
            let mut count = 0.0;
            for _ in 0..50 {
                for m in 0..256 / n {
                    let bits: Vec<bool> = (0..n).map(|_| rng.random()).collect();
                    let s = oracle_matvec(&bm.blocks[m], &bits).unwrap();
                    let scale = dev.sigma_max(m) * (n as f64).sqrt();
                    let x = lighthash::hash::encode_input(&bits, n).unwrap();
                    let copies = dev.copies(m);
                    for (i, si) in s.iter().enumerate() {
                        let re: f64 =
                            copies.iter().map(|c| (c.transfer.row(i) * &x)[(0, 0)].re).sum::<f64>() / r as f64;
                        sq += (re * scale - *si as f64).powi(2);
                        count += 1.0;
                    }
                }
            }
            (sq, count)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (sq / count).sqrt()
}

fn error_correction() -> Outcome {
    let profile = reference_profile();
    let ks: Vec<usize> = (2..=8).collect();
    let rows: Vec<(f64, f64)> = ks
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let base = CellSpec::new(4, k, profile, 2000, 20, 500 + i as u64);
            let plain = measure_cell(&base).unwrap().sigma_out;
            let corrected = measure_cell(&CellSpec { r: 4, ..base }).unwrap().sigma_out;
            (plain, corrected)
        })
        .collect();
    let kx: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let (m1, _, _) = linear_fit(&kx, &rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let (m4, _, _) = linear_fit(&kx, &rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let ratio = m1 / m4;
    let pointwise: Vec<String> = rows.iter().map(|(a, b)| format!("{:.2}", a / b)).collect();
    let in_phase = in_phase_deviation(4, 8, &profile, 1, 590) / in_phase_deviation(4, 8, &profile, 4, 590);
    check(
        (1.7..=2.3).contains(&ratio),
        format!(
            "N=4, K=2..8, R=4 vs R=1: slope ratio {ratio:.3} (target 2.0 +/- 0.3, slope cut {:.0}%; hardware reported a 41% cut); per-K ratios {pointwise:?}; in-phase deviation ratio at K=8 (reported): {in_phase:.3}",
            100.0 * (1.0 - 1.0 / ratio)
        ),
    )
}

fn mine_chain(len: usize, d: u16, seed: u64) -> (Vec<Block>, Vec<u64>) {
    let cfg = ChainConfig { n: 8, k: 4, schedule: DifficultySchedule::Constant { difficulty: d } };
    let mut chain: Vec<Block> = Vec::new();
    let mut attempts = Vec::new();
    for h in 0..len {
        let txs = vec![format!("coinbase {h}").into_bytes(), vec![h as u8; 3], b"transfer".to_vec()];
        match mine_block(chain.last(), txs, &cfg, &MinerBackend::Oracle, 1 << 24, seed).unwrap() {
            MineOutcome::Mined { block, attempts: a } => {
                chain.push(block);
                attempts.push(a);
            }
            MineOutcome::Exhausted { .. } => panic!("exhausted at height {h}"),
        }
    }
    (chain, attempts)
}

/// Every single-bit flip of every persisted field of `b`.
fn single_bit_corruptions(b: &Block) -> Vec<Block> {
    let mut out = Vec::new();
    for bit in 0..64 {
        out.push(Block { height: b.height ^ (1 << bit), ..b.clone() });
        out.push(Block { nonce: b.nonce ^ (1 << bit), ..b.clone() });
    }
    for bit in 0..16 {
        out.push(Block { n: b.n ^ (1 << bit), ..b.clone() });
        out.push(Block { k: b.k ^ (1 << bit), ..b.clone() });
        out.push(Block { difficulty: b.difficulty ^ (1 << bit), ..b.clone() });
    }
    for bit in 0..32 {
        out.push(Block { t_int: b.t_int ^ (1 << bit), ..b.clone() });
    }
    for bit in 0..256 {
        let flip = |mut h: [u8; 32]| {
            h[bit / 8] ^= 0x80 >> (bit % 8);
            h
        };
        out.push(Block { prev_hash: flip(b.prev_hash), ..b.clone() });
        out.push(Block { merkle_root: flip(b.merkle_root), ..b.clone() });
        out.push(Block { hash: flip(b.hash), ..b.clone() });
    }
    for (t, tx) in b.transactions.iter().enumerate() {
        for bit in 0..tx.len() * 8 {
            let mut c = b.clone();
            c.transactions[t][bit / 8] ^= 0x80 >> (bit % 8);
            out.push(c);
        }
    }
    out
}

fn mining_statistics() -> Outcome {
    let (chain, attempts) = mine_chain(50, 12, 600);
    let p = 2f64.powi(-12);
    let mean = attempts.iter().sum::<u64>() as f64 / attempts.len() as f64;
    let se = (1.0 - p).sqrt() / p / (attempts.len() as f64).sqrt();
    let mean_ok = (mean - 1.0 / p).abs() <= 3.0 * se;
    let chain_ok = validate_chain(&chain, Some(&DifficultySchedule::Constant { difficulty: 12 })).is_ok();
    let targets = [0usize, 1, 24, 48, 49];
    let (injected, missed) = targets
        .par_iter()
        .map(|&i| {
            let prev = i.checked_sub(1).map(|j| &chain[j]);
            let all = single_bit_corruptions(&chain[i]);
            let missed = all.iter().filter(|c| validate_block(c, prev).is_ok()).count();
            (all.len(), missed)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    check(
        mean_ok && chain_ok && missed == 0,
        format!(
            "mean attempts {mean:.0} vs 4096 +/- {:.0} (3 SE); chain of 50 valid: {chain_ok}; {missed} of {injected} single-bit corruptions accepted",
            3.0 * se
        ),
    )
}

fn binomial(n: u64, j: u64) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn random_walk_law() -> Outcome {
    let n = 16;
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut counts = vec![0.0; n + 1];
    for _ in 0..draws {
        let q = nalgebra::DMatrix::from_fn(1, n, |_, _| if rng.random::<bool>() { 1 } else { -1 });
        let bits: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let s = oracle_matvec(&q, &bits).unwrap()[0];
        counts[((s + n as i64) / 2) as usize] += 1.0;
    }
    let expected: Vec<f64> =
        (0..=n as u64).map(|j| draws as f64 * binomial(n as u64, j) / 2f64.powi(n as i32)).collect();
    let (o, e) = merge_bins(&counts, &expected, 5.0);
    let t = chi_square(&o, &e);
    check(
        t.p_value > 0.01,
        format!("chi-square {:.2} over {} bins, p = {:.3} (> 0.01)", t.statistic, o.len(), t.p_value),
    )
}

fn energy_arithmetic() -> Outcome {
    let e = energy_estimate(64, &EnergyModel::default());
    check(
        e.photonic_pj_per_hash == 10.496 && e.digital_matmul_pj_per_hash / 1000.0 == 1.6384,
        format!(
            "photonic {} pJ/hash, digital {} nJ/hash, ratio {:.1}",
            e.photonic_pj_per_hash,
            e.digital_matmul_pj_per_hash / 1000.0,
            e.ratio
        ),
    )
}

fn dispersion() -> Outcome {
    let lambdas: Vec<f64> = (0..9).map(|i| 1550.0 + 2.5 * i as f64).collect();
    let profile = ErrorProfile { mu_eta: 0.001, mu_bs: 1e-4, ..ErrorProfile::new(0.02, 0.02, 0.06) };
    let fit = match dispersion_sweep(&CellSpec::new(8, 4, profile, 1000, 40, 800), &lambdas) {
        Ok(f) => f,
        Err(e) => return Err(format!("fit failed: {e}")),
    };
    let vertex = fit.vertex_nm.unwrap_or(f64::NAN);
    // Reported only: relative dispersion against K.
    let trend: Vec<String> = [3usize, 4, 5]
        .iter()
        .map(|&k| match dispersion_sweep(&CellSpec::new(8, k, profile, 1000, 40, 810 + k as u64), &lambdas) {
            Ok(f) => format!("K={k}: {:.4}", f.d_epsilon),
            Err(e) => format!("K={k}: {e}"),
        })
        .collect();
    check(
        fit.r_squared > 0.9 && (vertex - fit.lambda_c).abs() <= 1.0 && fit.d_epsilon > 0.0,
        format!(
            "eps_c {:.3}, D_eps {:.4} /nm^2, R^2 {:.3}, vertex {:.2} nm (center {} nm) over 20 nm; D_eps vs K: {}",
            fit.epsilon_center,
            fit.d_epsilon,
            fit.r_squared,
            vertex,
            fit.lambda_c,
            trend.join(", ")
        ),
    )
}

fn linear_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut worst = [0.0f64; 3];
    for i in 0..100 {
        let n = rng.random_range(2..=32);
        let layout = if i % 2 == 0 { Layout::Rectangular } else { Layout::Triangular };
        let u = haar_unitary(n, &mut rng);
        let program = decompose_unitary(&u, layout).unwrap();
        worst[0] = worst[0].max(max_abs_diff(&reconstruct(&program, None).unwrap(), &u));

        let k = rng.random_range(2..=8);
        let q = nalgebra::DMatrix::from_fn(n, n, |_, _| 2 * rng.random_range(1..=k) - k - 1);
        let qc: CMatrix = q.map(|v| Complex64::from(f64::from(v)));
        let svd = svd_program(&q, layout).unwrap();
        worst[1] = worst[1].max(max_abs_diff(&svd.reconstruct_block(), &qc));

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for p in [perm, cyclic_permutation(n, i)] {
            let permuted = permute_svd(&svd, &p).unwrap();
            worst[2] = worst[2].max(max_abs_diff(&permuted.reconstruct_block(), &svd.reconstruct_block()));
        }
    }
    check(
        worst.iter().all(|w| *w <= 1e-9),
        format!(
            "max errors over 100 instances, N <= 32: unitary {:.1e}, SVD {:.1e}, permutation {:.1e} (<= 1e-9)",
            worst[0], worst[1], worst[2]
        ),
    )
}

type Check = (&'static str, fn() -> Outcome);

fn main() {
    let checks: [Check; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("error scaling", error_scaling),
        ("feasibility boundary", feasibility_boundary),
        ("model consistency", model_consistency),
        ("error correction", error_correction),
        ("mining statistics", mining_statistics),
        ("random-walk law", random_walk_law),
        ("energy arithmetic", energy_arithmetic),
        ("dispersion", dispersion),
        ("linear-algebra invariants", linear_algebra),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[{:>2}] PASS {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[{:>2}] FAIL {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
