use std::io::Write;

use clap::{Args, ValueEnum};
use sens_asr_core::distillation::LossWeights;
use sens_asr_core::gradcheck::suite::{run_suite, SuiteEntry, COMPOSITE};
use sens_asr_core::gradcheck::{COMPOSITE_TOL_F64, TOL_F32, TOL_F64};
use sens_asr_core::oracle::{mask_sweep, rnnt_sweep};

use super::emit;
use crate::error::{CliError, Result};

/// Agreement required between the lattice recursion and enumeration.
pub const ORACLE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Random instances per operation.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Distillation weight of the composite loss.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// FastEmit weight of the composite loss.
    #[arg(long, default_value_t = 0.006)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    /// Random lattices to compare against path enumeration.
    #[arg(long, default_value_t = 100)]
    pub lattices: usize,
    /// Largest sequence length of the mask sweep.
    #[arg(long, default_value_t = 12)]
    pub max_frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn entry_line(e: &SuiteEntry, tol: f64) -> String {
    let worst = e
        .worst
        .as_ref()
        .map(|(i, name, k)| format!("instance {i} {name}[{k}]"))
        .unwrap_or_else(|| "-".into());
    format!(
        "{}\t{}\t{:.3e}\t{tol:e}\t{}\t{worst}\n",
        e.name,
        e.instances,
        e.max_rel_err,
        verdict(e.passes(tol))
    )
}

pub fn grad_check(args: GradCheckArgs, out: &mut dyn Write) -> Result<()> {
    let weights = LossWeights {
        alpha: args.alpha,
        lambda_fastemit: args.lambda,
    };
    let entries = match args.precision {
        Precision::F32 => run_suite::<f32>(args.instances, args.seed, &weights)?,
        Precision::F64 => run_suite::<f64>(args.instances, args.seed, &weights)?,
    };
    let mut failed = 0;
    for e in &entries {
        let tol = match args.precision {
            Precision::F32 => TOL_F32,
            Precision::F64 if e.name == COMPOSITE => COMPOSITE_TOL_F64,
            Precision::F64 => TOL_F64,
        };
        failed += usize::from(!e.passes(tol));
        emit(out, &entry_line(e, tol))?;
    }
    if failed > 0 {
        return Err(CliError::Check(format!(
            "{failed} of {} gradient checks exceed their tolerance",
            entries.len()
        )));
    }
    Ok(())
}

pub fn oracle_check(args: OracleCheckArgs, out: &mut dyn Write) -> Result<()> {
    let r = rnnt_sweep(args.lattices, args.seed)?;
    let rnnt_ok = r.max_rnnt_err <= ORACLE_TOL && r.max_label_err <= ORACLE_TOL;
    emit(
        out,
        &format!(
            "rnnt\t{} lattices\tmax_err {:.3e}\tlabel_paths max_err {:.3e}\t{}\n",
            r.cases,
            r.max_rnnt_err,
            r.max_label_err,
            verdict(rnnt_ok)
        ),
    )?;
    let m = mask_sweep(args.max_frames)?;
    let mask_ok = m.mismatched_entries == 0 && m.full_chunk_failures == 0;
    emit(
        out,
        &format!(
            "mask\t{} matrices\tmismatched {}\tfull_chunk_failures {}\t{}\n",
            m.matrices,
            m.mismatched_entries,
            m.full_chunk_failures,
            verdict(mask_ok)
        ),
    )?;
    if !(rnnt_ok && mask_ok) {
        return Err(CliError::Check("oracle disagreement".into()));
    }
    Ok(())
}
