use std::io::Write;
use std::path::Path;
use std::time::Duration;

use ndarray::Array2;
use pde_attention::attention::random_attention_field;
use pde_attention::bench::{run_bench, scaling_exponent, BenchPoint};
use pde_attention::metrics::{run_suite, VerificationReport, SUITE_NAMES};
use pde_attention::model::{
    save_checkpoint, train, AblationCell, AblationConfig, Dataset, DatasetKind, Model, Task,
};
use pde_attention::pde::{evolve, AttentionField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{EvolveConfig, ExperimentConfig, InitKind, TrainSection};
use crate::error::CliError;
use crate::output::{parallel_map, RunDir};

fn read_matrix(path: &Path) -> Result<Array2<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| {
                        CliError::Config(format!("{} line {}: `{}`: {e}", path.display(), i + 1, v.trim()))
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("{} is not a square matrix", path.display())));
    }
    Array2::from_shape_vec((n, n), rows.concat()).map_err(|e| CliError::Config(e.to_string()))
}

fn initial_field(cfg: &EvolveConfig, seed: u64) -> Result<AttentionField, CliError> {
    let bc = cfg.pde.bc;
    let t = cfg.t;
    let field = match cfg.init {
        InitKind::Onehot => AttentionField::one_hot(t, bc)?,
        InitKind::Uniform => AttentionField::uniform(t, bc)?,
        InitKind::Softmax => {
            let mut f = random_attention_field(t, cfg.d_head, &mut ChaCha8Rng::seed_from_u64(seed))?;
            f.bc = bc;
            f
        }
        InitKind::File => {
            let path = cfg
                .input
                .as_deref()
                .ok_or_else(|| CliError::Config("init = \"file\" needs `input`".into()))?;
            AttentionField::new(read_matrix(path)?, bc)?
        }
    };
    if cfg.causal {
        // the prefix of a softmax row, renormalized, is the masked softmax
        let mut v = field.values;
        for i in 0..v.nrows() {
            let mass: f64 = v.row(i).iter().take(i + 1).sum();
            for j in 0..v.ncols() {
                v[(i, j)] = if j <= i && mass > 0.0 { v[(i, j)] / mass } else { 0.0 };
            }
        }
        return Ok(AttentionField::causal(v)?);
    }
    Ok(field)
}

fn format_row(row: &[f64]) -> String {
    let parts: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
    format!("[{}]", parts.join(","))
}

pub fn evolve_cmd(cfg: &ExperimentConfig, dir: &RunDir) -> Result<(), CliError> {
    let ec = &cfg.evolve;
    let a0 = initial_field(ec, cfg.seed)?;
    let traj = evolve(&a0, &ec.pde)?;
    let mut w = dir.file("trajectory.csv")?;
    traj.write_snapshots_csv(&mut w)?;
    w.flush()?;
    let mut w = dir.file("metrics.csv")?;
    traj.write_metrics_csv(&mut w)?;
    w.flush()?;
    let last = traj.last();
    let mut w = dir.file("final.csv")?;
    for row in last.values.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    println!(
        "{} steps of {} on T={}: final row 0 = {}",
        ec.pde.n_steps,
        ec.pde.kind.name(),
        last.len(),
        format_row(&last.values.row(0).to_vec())
    );
    Ok(())
}

/// The requested suites, or all of them.
pub fn suite_names(cfg: &ExperimentConfig) -> Result<Vec<String>, CliError> {
    let names: Vec<String> = if cfg.verify.suites.is_empty() {
        SUITE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.verify.suites.clone()
    };
    match names.iter().find(|n| !SUITE_NAMES.contains(&n.as_str())) {
        Some(bad) => Err(CliError::Config(format!(
            "unknown suite `{bad}`; expected one of {}",
            SUITE_NAMES.join(", ")
        ))),
        None => Ok(names),
    }
}

pub fn verify_cmd(cfg: &ExperimentConfig, dir: &RunDir, jobs: usize) -> Result<(), CliError> {
    let names = suite_names(cfg)?;
    let results = parallel_map(&names, jobs, |name| -> Result<VerificationReport, CliError> {
        let report = run_suite(name, cfg.seed)?;
        dir.write_json(&format!("{name}.json"), &report)?;
        Ok(report)
    });
    let mut summary = dir.file("summary.csv")?;
    writeln!(summary, "suite,pass")?;
    let mut failed = Vec::new();
    for (name, r) in names.iter().zip(results) {
        let r = r?;
        writeln!(summary, "{name},{}", r.pass)?;
        println!("{:<24} {}", name, if r.pass { "PASS" } else { "FAIL" });
        if !r.pass {
            failed.push(name.clone());
        }
    }
    summary.flush()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed))
    }
}

fn build_dataset(ts: &TrainSection, seed: u64) -> Result<Dataset, CliError> {
    let d = &ts.dataset;
    Ok(match d.kind {
        DatasetKind::CopyTask => Dataset::copy_task(d.n_samples, d.prefix_len, d.vocab_size, seed)?,
        DatasetKind::LongRangeRecall => {
            Dataset::long_range_recall(d.n_samples, d.seq_len, d.n_keys, d.n_distractors, seed)?
        }
        DatasetKind::CharText => {
            let path = d
                .text_path
                .as_deref()
                .ok_or_else(|| CliError::Config("char_text needs `train.dataset.text_path`".into()))?;
            Dataset::char_text_file(path, d.seq_len)?
        }
    })
}

/// Fill in the model fields that follow from the data. Done before the
/// resolved config is written so it records what actually ran.
pub fn resolve_train(cfg: &mut ExperimentConfig) -> Result<Dataset, CliError> {
    let data = build_dataset(&cfg.train, cfg.seed)?;
    let m = &mut cfg.train.model;
    m.vocab_size = data.vocab_size;
    m.max_seq_len = data.max_len();
    match data.n_classes {
        Some(c) => {
            m.task = Task::Classification;
            m.n_classes = c;
        }
        None => m.task = Task::CausalLm,
    }
    m.validate()?;
    cfg.train.optimizer.validate()?;
    Ok(data)
}

pub fn train_cmd(cfg: &ExperimentConfig, data: &Dataset, dir: &RunDir) -> Result<(), CliError> {
    let ts = &cfg.train;
    let (tr, va) = data.split(ts.dataset.val_fraction, cfg.seed)?;
    let mut model = Model::new(ts.model.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let rec = train(&mut model, &tr, &va, &ts.optimizer)?;
    let mut w = dir.file("train.csv")?;
    rec.write_csv(&mut w)?;
    w.flush()?;
    save_checkpoint(&model, dir.path.join("checkpoint.json"))?;
    for e in &rec.epochs {
        eprintln!(
            "epoch {:>3}  train {:.4}  val {:.4}  metric {:.4}",
            e.epoch, e.train_loss, e.val_loss, e.metric
        );
    }
    println!(
        "{} epochs, loss reduction {:.3}{}",
        rec.epochs.len().saturating_sub(1),
        rec.loss_reduction(),
        if rec.stopped_early { " (stopped early)" } else { "" }
    );
    match rec.divergence_reason {
        Some(reason) if rec.diverged => Err(CliError::Divergence(reason)),
        _ => Ok(()),
    }
}

pub fn bench_cmd(cfg: &ExperimentConfig, dir: &RunDir) -> Result<(), CliError> {
    let bc = &cfg.bench;
    let points = run_bench(&bc.kinds, &bc.sizes, bc.batches, Duration::from_millis(bc.min_batch_ms))?;
    let mut w = dir.file("bench.csv")?;
    writeln!(w, "kind,T,ns_per_step")?;
    for p in &points {
        writeln!(w, "{},{},{}", p.kind.name(), p.t, p.ns_per_step)?;
    }
    w.flush()?;
    let mut w = dir.file("scaling.csv")?;
    writeln!(w, "kind,slope,correlation,T_min,T_max")?;
    for &kind in &bc.kinds {
        let fit: Vec<BenchPoint> = points
            .iter()
            .filter(|p| p.kind == kind && p.t <= bc.fit_max_t)
            .copied()
            .collect();
        let (lo, hi) = (fit.first().map_or(0, |p| p.t), fit.last().map_or(0, |p| p.t));
        match scaling_exponent(&fit) {
            Some((slope, r)) => {
                writeln!(w, "{},{slope},{r},{lo},{hi}", kind.name())?;
                println!("{:<20} time ~ T^{slope:.2} (r = {r:.4}, T in {lo}..{hi})", kind.name());
            }
            None => println!("{:<20} too few sizes to fit", kind.name()),
        }
    }
    w.flush()?;
    Ok(())
}

fn cell_name(c: &AblationCell) -> String {
    format!("{}_nt{}_seed{}.json", c.spec.kind.name(), c.spec.n_steps, c.spec.seed)
}

pub fn ablate_cmd(cfg: &ExperimentConfig, dir: &RunDir, jobs: usize) -> Result<(), CliError> {
    let ab: &AblationConfig = &cfg.ablate;
    ab.validate()?;
    let cells_dir = dir.path.join("cells");
    std::fs::create_dir_all(&cells_dir)?;
    let specs = ab.cells();
    let results = parallel_map(&specs, jobs, |&spec| -> Result<AblationCell, CliError> {
        let cell = ab.run_cell(spec)?;
        let f = std::fs::File::create(cells_dir.join(cell_name(&cell)))?;
        serde_json::to_writer_pretty(f, &cell)?;
        eprintln!(
            "{} N_t={} seed={}: reduction {:.3}{} ({:.1} s)",
            spec.kind.name(),
            spec.n_steps,
            spec.seed,
            cell.loss_reduction,
            if cell.diverged { ", diverged" } else { "" },
            cell.seconds
        );
        Ok(cell)
    });
    let cells: Vec<AblationCell> = results.into_iter().collect::<Result<_, _>>()?;
    let mut w = dir.file("ablation.csv")?;
    ab.write_csv(&cells, &mut w)?;
    w.flush()?;

    println!("{:<20} {:>4} {:>10} {:>10} {:>9}", "kind", "N_t", "reduction", "converged", "diverged");
    for group in cells.chunks(ab.seeds.len()) {
        let s = group[0].spec;
        let mean = group.iter().map(|c| c.loss_reduction).sum::<f64>() / group.len() as f64;
        let conv = group.iter().filter(|c| c.converged).count();
        let div = group.iter().filter(|c| c.diverged).count();
        println!(
            "{:<20} {:>4} {:>10.3} {:>7}/{:<2} {:>6}/{:<2}{}",
            s.kind.name(),
            s.n_steps,
            mean,
            conv,
            group.len(),
            div,
            group.len(),
            if s.unstable { "  (instability config)" } else { "" }
        );
    }
    let unexpected: Vec<String> = cells
        .iter()
        .filter(|c| c.diverged && !c.spec.unstable)
        .map(cell_name)
        .collect();
    if unexpected.is_empty() {
        Ok(())
    } else {
        Err(CliError::Divergence(format!("stable cells diverged: {}", unexpected.join(", "))))
    }
}
