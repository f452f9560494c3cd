use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use lighthash::analysis::{
    correction_sweep, dispersion_sweep, energy_estimate, feasibility_sweep, scaling_sweep, state_space, write_csv,
    CellSpec, SweepRow,
};
use lighthash::chain::{
    block_threshold, generate_block_matrix, mine_block, validate_chain, ChainStore, DifficultySchedule, MineOutcome,
    StoreError,
};
use lighthash::hash::{abs_histogram, lighthash_trace, threshold_seed, BlockHeader, LightHashParams, HEADER_LEN};
use serde::Serialize;

use crate::config::{read_profile, RunConfig};
use crate::{
    Cli, Command, DeviceArgs, EnergyArgs, Failure, HashArgs, HeaderSource, MineArgs, SweepArgs, SweepKind,
    ThresholdArgs, VerifyArgs,
};

pub fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(anyhow!("--jobs must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("starting thread pool")?;
    }
    let has_config = cli.config.is_some();
    match cli.command {
        Command::Hash(a) => hash(cfg, a),
        Command::Mine(a) => mine(cfg, a),
        Command::Verify(a) => verify(cfg, a, has_config),
        Command::Sweep(a) => sweep(cfg, a),
        Command::Energy(a) => energy(cfg, a),
        Command::Threshold(a) => threshold(a),
    }
}

fn apply_device(cfg: &mut RunConfig, d: &DeviceArgs) -> anyhow::Result<()> {
    if let Some(b) = d.backend {
        cfg.backend = b;
    }
    if let Some(p) = &d.profile {
        cfg.profile = read_profile(p)?;
    }
    if let Some(r) = d.r {
        cfg.r = r;
    }
    Ok(())
}

fn read_header(src: &HeaderSource) -> anyhow::Result<BlockHeader> {
    let bytes = match (&src.header, &src.header_file) {
        (Some(h), _) => hex::decode(h.trim()).context("header is not valid hex")?,
        (None, Some(path)) => {
            let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            if raw.len() == HEADER_LEN && raw.starts_with(b"LHB1") {
                raw
            } else {
                let text = String::from_utf8(raw).context("header file is neither a raw header nor hex")?;
                hex::decode(text.trim()).context("header file is not valid hex")?
            }
        }
        (None, None) => bail!("no header given"),
    };
    BlockHeader::from_bytes(&bytes).ok_or_else(|| anyhow!("not a {HEADER_LEN}-byte LightHash header"))
}

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn hash(mut cfg: RunConfig, a: HashArgs) -> Result<(), Failure> {
    apply_device(&mut cfg, &a.device)?;
    cfg.validate()?;
    let header = read_header(&a.source)?;
    let (n, k) = (usize::from(header.n), usize::from(header.k));
    let bm = generate_block_matrix(&header.prev_hash, &header.merkle_root, n, k).map_err(anyhow::Error::from)?;
    let params = LightHashParams::new(n, k, header.t_int);
    params.validate().map_err(anyhow::Error::from)?;
    let device = cfg.miner().build(&bm, &params).map_err(anyhow::Error::from)?;
    let trace =
        lighthash_trace(&header.to_bytes(), a.nonce, device.params(), device.as_ref()).map_err(anyhow::Error::from)?;
    println!("{}", hex::encode(trace.digest));
    if a.verbose {
        println!("d1 {}", hex::encode(trace.d1));
        println!("out {}", hex::encode(trace.out_bits));
        for (m, c) in trace.chunks.iter().enumerate() {
            let p: Vec<String> = c.p.iter().map(|x| format!("{x:.6}")).collect();
            let s = c.s.as_ref().map_or_else(|| "-".to_string(), |s| format!("{s:?}"));
            println!("chunk {m} s={s} p=[{}] bits={}", p.join(", "), bit_string(&c.bits));
        }
    }
    Ok(())
}

fn transactions(path: Option<&Path>) -> anyhow::Result<Vec<Vec<u8>>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(|l| l.as_bytes().to_vec()).collect())
}

fn mine(mut cfg: RunConfig, a: MineArgs) -> Result<(), Failure> {
    apply_device(&mut cfg, &a.device)?;
    if let Some(dir) = a.chain {
        cfg.chain_dir = dir;
    }
    if let Some(n) = a.n {
        cfg.chain.n = n;
    }
    if let Some(k) = a.k {
        cfg.chain.k = k;
    }
    if let Some(d) = a.difficulty {
        cfg.chain.schedule = DifficultySchedule::Constant { difficulty: d };
    }
    if let Some(m) = a.max_attempts {
        cfg.max_attempts = m;
    }
    cfg.validate()?;
    let txs = transactions(a.transactions.as_deref())?;
    let store =
        if cfg.chain_dir.is_dir() { ChainStore::open(&cfg.chain_dir) } else { ChainStore::create(&cfg.chain_dir) }
            .map_err(store_failure)?;
    let mut tip = store.tip().map_err(store_failure)?;
    let backend = cfg.miner();
    for _ in 0..a.count {
        let height = tip.as_ref().map_or(0, |b| b.height + 1);
        let mut block_txs = vec![format!("coinbase {height}").into_bytes()];
        block_txs.extend(txs.iter().cloned());
        let start = Instant::now();
        let outcome = mine_block(tip.as_ref(), block_txs, &cfg.chain, &backend, cfg.max_attempts, cfg.seed)
            .map_err(anyhow::Error::from)?;
        let elapsed = start.elapsed().as_secs_f64();
        match outcome {
            MineOutcome::Mined { block, attempts } => {
                store.append(&block).map_err(store_failure)?;
                println!(
                    "block {} nonce {} attempts {attempts} elapsed {elapsed:.3}s hash {}",
                    block.height,
                    block.nonce,
                    hex::encode(block.hash)
                );
                tip = Some(block);
            }
            MineOutcome::Exhausted { attempts } => {
                return Err(Failure::Invalid(anyhow!(
                    "block {height}: exhausted after {attempts} attempts in {elapsed:.3}s"
                )));
            }
        }
    }
    Ok(())
}

fn store_failure(e: StoreError) -> Failure {
    match e {
        StoreError::Corrupt { .. } => Failure::Invalid(e.into()),
        _ => Failure::Usage(e.into()),
    }
}

fn verify(mut cfg: RunConfig, a: VerifyArgs, has_config: bool) -> Result<(), Failure> {
    if let Some(dir) = a.chain {
        cfg.chain_dir = dir;
    }
    if a.schedule && !has_config {
        return Err(anyhow!("--schedule needs --config").into());
    }
    let store = ChainStore::open(&cfg.chain_dir).map_err(store_failure)?;
    let blocks = store.load().map_err(store_failure)?;
    let schedule = a.schedule.then_some(&cfg.chain.schedule);
    match validate_chain(&blocks, schedule) {
        Ok(()) => {
            let tip = blocks.last().expect("load rejects empty chains");
            println!("ok: {} blocks, tip {} {}", blocks.len(), tip.height, hex::encode(tip.hash));
            Ok(())
        }
        Err((i, v)) => Err(Failure::Invalid(anyhow!(
            "block {} ({}): {} check failed: {v}",
            blocks[i].height,
            ChainStore::file_name(&blocks[i]),
            v.check()
        ))),
    }
}

#[derive(Serialize)]
struct ScalingRow {
    n: usize,
    k: usize,
    sigma_out: f64,
    rho: f64,
    sigma_out_phase: f64,
    sigma_out_coupling: f64,
    sigma_out_loss: f64,
    k_phase: f64,
    k_coupling: f64,
    k_loss: f64,
    quadrature_residual: f64,
}

#[derive(Serialize)]
struct CorrectionCsvRow {
    n: usize,
    k: usize,
    r_copies: usize,
    sigma_out_plain: f64,
    sigma_out_corrected: f64,
    ratio: f64,
    eps_plain: f64,
    eps_corrected: f64,
    seed: u64,
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn sweep(mut cfg: RunConfig, a: SweepArgs) -> Result<(), Failure> {
    let s = &mut cfg.sweep;
    if let Some(v) = a.n_list {
        s.n_list = v;
    }
    if let Some(v) = a.k_list {
        s.k_list = v;
    }
    if let Some(v) = a.scales {
        s.scales = v;
    }
    if let Some(v) = a.lambdas {
        s.lambdas = v;
    }
    if let Some(v) = a.trials {
        s.trials = v;
    }
    if let Some(v) = a.devices {
        s.devices = v;
    }
    if let Some(v) = a.r {
        s.r = v;
    }
    if let Some(p) = &a.profile {
        cfg.profile = read_profile(p)?;
    }
    cfg.validate()?;
    let name = match a.kind {
        SweepKind::Scaling => "scaling",
        SweepKind::Feasibility => "feasibility",
        SweepKind::Dispersion => "dispersion",
        SweepKind::Correction => "correction",
    };
    let out = a.out.unwrap_or_else(|| cfg.output_dir.join(format!("{name}.csv")));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    run_sweep(&cfg, a.kind, &out)?;
    let snapshot = snapshot_path(&out);
    cfg.write_snapshot(&snapshot)?;
    println!("wrote {} and {}", out.display(), snapshot.display());
    Ok(())
}

fn snapshot_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}.config.json"))
}

fn run_sweep(cfg: &RunConfig, kind: SweepKind, out: &Path) -> anyhow::Result<()> {
    let s = &cfg.sweep;
    let p = &cfg.profile;
    match kind {
        SweepKind::Scaling => {
            let fits = scaling_sweep(&s.n_list, &s.k_list, p, s.trials, s.devices, cfg.seed)?;
            let rows: Vec<ScalingRow> = fits
                .iter()
                .map(|f| ScalingRow {
                    n: f.n,
                    k: f.k,
                    sigma_out: f.sigma_out,
                    rho: f.rho,
                    sigma_out_phase: f.sigma_out_phase,
                    sigma_out_coupling: f.sigma_out_coupling,
                    sigma_out_loss: f.sigma_out_loss,
                    k_phase: f.k_phase,
                    k_coupling: f.k_coupling,
                    k_loss: f.k_loss,
                    quadrature_residual: f.quadrature_residual(),
                })
                .collect();
            write_rows(&rows, out)
        }
        SweepKind::Feasibility => {
            let cells = feasibility_sweep(&s.n_list, &s.k_list, &s.scales, p, s.trials, s.devices, cfg.seed)?;
            let rows: Vec<SweepRow> = cells.iter().map(SweepRow::from).collect();
            let file = fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
            Ok(write_csv(&rows, file)?)
        }
        SweepKind::Dispersion => {
            let spec = CellSpec::new(s.n_list[0], s.k_list[0], *p, s.trials, s.devices, cfg.seed);
            let fit = dispersion_sweep(&spec, &s.lambdas)?;
            let file = fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
            write_csv(&fit.rows, file)?;
            let vertex = fit.vertex_nm.map_or_else(|| "none".to_string(), |v| format!("{v:.3} nm"));
            println!(
                "eps_center {:.6} d_eps {:.6} /nm^2 r2 {:.4} vertex {vertex}",
                fit.epsilon_center, fit.d_epsilon, fit.r_squared
            );
            Ok(())
        }
        SweepKind::Correction => {
            let rows = correction_sweep(&s.n_list, &s.k_list, p, s.r, s.trials, s.devices, cfg.seed)?;
            let rows: Vec<CorrectionCsvRow> = rows
                .iter()
                .map(|c| CorrectionCsvRow {
                    n: c.plain.spec.n,
                    k: c.plain.spec.k,
                    r_copies: c.corrected.spec.r,
                    sigma_out_plain: c.plain.sigma_out,
                    sigma_out_corrected: c.corrected.sigma_out,
                    ratio: c.ratio,
                    eps_plain: c.plain.eps_measured,
                    eps_corrected: c.corrected.eps_measured,
                    seed: c.plain.spec.seed,
                })
                .collect();
            write_rows(&rows, out)
        }
    }
}

fn energy(cfg: RunConfig, a: EnergyArgs) -> Result<(), Failure> {
    let mut model = cfg.energy;
    if let Some(v) = a.comparator_fj {
        model.comparator_fj_per_bit = v;
    }
    if let Some(v) = a.modulator_fj {
        model.modulator_fj_per_bit = v;
    }
    if let Some(v) = a.digital_op_pj {
        model.digital_op_pj = v;
    }
    if let Some(v) = a.sha_pj {
        model.sha_asic_pj_per_hash = v;
    }
    lighthash::hash::validate_nk(a.n, a.k.unwrap_or(2)).map_err(anyhow::Error::from)?;
    let e = energy_estimate(a.n, &model);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&e).map_err(anyhow::Error::from)?);
        return Ok(());
    }
    println!("N                          {}", e.n);
    println!("photonic MVM     pJ/hash   {}", e.photonic_pj_per_hash);
    println!("digital MVM      pJ/hash   {}", e.digital_matmul_pj_per_hash);
    println!("digital/photonic           {:.1}", e.ratio);
    println!("SHA3 stages      pJ/hash   {}", e.sha_pj_per_hash);
    if let Some(k) = a.k {
        let ss = state_space(a.n, k);
        println!("matrix states (K = {k})     10^{:.1}", ss.log10);
    }
    Ok(())
}

fn threshold(a: ThresholdArgs) -> Result<(), Failure> {
    let h = read_header(&a.source)?;
    let bm =
        generate_block_matrix(&h.prev_hash, &h.merkle_root, h.n.into(), h.k.into()).map_err(anyhow::Error::from)?;
    let t = block_threshold(&bm);
    println!("{t}");
    if a.verbose {
        let hist = abs_histogram(&bm, threshold_seed(&h.merkle_root));
        println!("p_above {:.6}", hist.prob_above(t.into()));
        if h.t_int != t {
            println!("header t_int {} differs", h.t_int);
        }
    }
    Ok(())
}
