use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::{HomogeneousSdp, SdpSolution};
use crate::error::Result;

fn write_matrix<W: Write>(out: &mut W, title: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(out, "# {title} {}x{}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Writes the problem matrices, the final iterate and the iteration log as
/// plain text: one `# title` line per block followed by one row per line.
pub fn write_debug_dump(path: &Path, prob: &HomogeneousSdp, sol: Option<&SdpSolution>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix(&mut out, "Q0", &prob.q0)?;
    for (j, c) in prob.constraints.iter().enumerate() {
        write_matrix(&mut out, &format!("Q{} rhs={:e}", j + 1, c.rhs), &c.q)?;
    }
    if let Some(sol) = sol {
        write_matrix(&mut out, "X", &sol.x)?;
        writeln!(out, "# iterations {}", sol.trace.len())?;
        for r in &sol.trace {
            writeln!(
                out,
                "{} {:e} {:e} {:e} {:e} {:e} {:e}",
                r.iteration,
                r.primal_objective,
                r.dual_objective,
                r.primal_infeasibility,
                r.dual_infeasibility,
                r.relative_gap,
                r.mu
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
