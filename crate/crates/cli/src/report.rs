//! Table and summary emission. Output is deterministic for a fixed config
//! and seed: no timestamps, shortest-roundtrip float formatting.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use levydiv_core::barrier::AuxSolution;
use levydiv_core::regime::RegimeSolution;

pub const VALUE_TABLE_HEADER: &str = "x,state,value,derivative,above_barrier";

pub fn write_aux_table(
    path: &Path,
    sol: &AuxSolution,
    x_max: f64,
    n: usize,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(VALUE_TABLE_HEADER);
    out.push('\n');
    for k in 0..n {
        let x = x_max * k as f64 / (n - 1) as f64;
        let above = if x >= sol.b_star { 1 } else { 0 };
        out.push_str(&format!(
            "{x},0,{},{},{above}\n",
            sol.value.eval(x),
            sol.value.deriv(x)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_regime_table(path: &Path, sol: &RegimeSolution) -> Result<()> {
    let mut out = String::new();
    out.push_str(VALUE_TABLE_HEADER);
    out.push('\n');
    let grid = &sol.value.grid;
    for (i, slice) in sol.value.slices.iter().enumerate() {
        for k in 0..grid.n {
            let x = grid.point(k);
            let d = if k + 1 < grid.n {
                (slice.values[k + 1] - slice.values[k]) / grid.step()
            } else {
                slice.tail_slope
            };
            let above = if x >= sol.b_star[i] { 1 } else { 0 };
            out.push_str(&format!("{x},{i},{},{d},{above}\n", slice.values[k]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_aux_summary(path: &Path, sol: &AuxSolution, echo: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "optimal barrier b* = {}", sol.b_star)?;
    writeln!(f, "value at 0        = {}", sol.value.eval(0.0))?;
    writeln!(f, "G(b*)             = {:.3e}", sol.diagnostics.g_at_b_star)?;
    writeln!(
        f,
        "smooth fit        v'(b*) = {} (gap across b*: {:.3e})",
        sol.diagnostics.v_prime_at_b_star, sol.diagnostics.v_prime_continuity_gap
    )?;
    writeln!(
        f,
        "slope bound violation = {:.3e}",
        sol.diagnostics.slope_violation
    )?;
    writeln!(
        f,
        "HJB sup residual (relative) = {:.3e}",
        sol.diagnostics.hjb_sup_rel
    )?;
    writeln!(f, "\n-- configuration --\n{echo}")?;
    Ok(())
}

pub fn write_regime_summary(path: &Path, sol: &RegimeSolution, echo: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for (i, b) in sol.b_star.iter().enumerate() {
        writeln!(f, "b*({i}) = {b}")?;
    }
    writeln!(f, "contraction constant K = max_i lambda_i/theta(i) = {}", sol.k)?;
    writeln!(f, "iterations = {}", sol.iterations)?;
    writeln!(f, "a-priori error bound   K^n/(1-K)·|v1-v0| = {:.3e}", sol.error_bound)?;
    writeln!(f, "certified error bound  K/(1-K)·|dv|      = {:.3e}", sol.posterior_bound)?;
    writeln!(f, "grid: {} points on [0, {}]", sol.value.grid.n, sol.value.grid.x_max)?;
    writeln!(f, "\n-- configuration --\n{echo}")?;
    Ok(())
}
