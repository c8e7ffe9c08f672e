//! Mode container and per-point weight dump.

use std::io::Write;
use std::path::Path;

use rkpm_core::discretize::Discretization;
use rkpm_core::modes::SkinningModes;

use crate::error::HarnessError;
use crate::trajectory::write_atomic;

/// One line per integration point: `x y z w0 … wm`.
pub fn write_weight_dump(w: &mut impl Write, disc: &Discretization, modes: &SkinningModes) -> std::io::Result<()> {
    let weights = modes.weights_table(&disc.table);
    write!(w, "# x y z")?;
    for j in 0..weights.ncols() {
        write!(w, " w{j}")?;
    }
    writeln!(w)?;
    for (i, p) in disc.integ.points.iter().enumerate() {
        write!(w, "{:e} {:e} {:e}", p.x, p.y, p.z)?;
        for j in 0..weights.ncols() {
            write!(w, " {:e}", weights[(i, j)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes `<out>.modes` (binary container) and `<out>.weights.txt`.
pub fn export_modes(out: &Path, disc: &Discretization, modes: &SkinningModes) -> Result<(std::path::PathBuf, std::path::PathBuf), HarnessError> {
    let modes_path = out.with_extension("modes");
    let dump_path = out.with_extension("weights.txt");
    write_atomic(&modes_path, |f| modes.write_to(f))?;
    write_atomic(&dump_path, |f| {
        let mut w = std::io::BufWriter::new(f);
        write_weight_dump(&mut w, disc, modes)?;
        w.flush()
    })?;
    Ok((modes_path, dump_path))
}

/// Parses a weight dump back into point coordinates and weight rows.
pub fn read_weight_dump(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2)))
                .collect()
        })
        .collect()
}
