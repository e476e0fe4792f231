//! Fixed-layout MPS export.
//!
//! Layout (1-based character columns): field 1 at 2–3, field 2 at 5–12,
//! field 3 at 15–22, field 4 at 25–36, field 5 at 40–47, field 6 at 50–61.
//! Variables are named `X0000000`, `X0000001`, …, rows `R0000000`, …, and the
//! objective row `OBJ`. MPS minimizes, so the objective is written negated:
//! the minimum of the exported file is the negated maximum of the program.
//! Every column carries an `OBJ` entry (possibly zero) so that no variable is
//! dropped. Numbers are printed in at most 12 characters, keeping as many
//! significant digits as fit.

use std::io::{self, Write};

use super::{LinearProgram, Relation};

pub fn write_mps<W: Write>(lp: &LinearProgram, name: &str, out: &mut W) -> io::Result<()> {
    let name: String = name.chars().filter(|c| !c.is_whitespace()).take(8).collect();
    writeln!(out, "* maximize c.x exported as minimize -c.x")?;
    writeln!(out, "NAME          {name}")?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N  OBJ")?;
    for (i, c) in lp.constraints().iter().enumerate() {
        let kind = match c.relation {
            Relation::Le => 'L',
            Relation::Eq => 'E',
            Relation::Ge => 'G',
        };
        writeln!(out, " {kind}  {}", row_name(i))?;
    }

    let mut by_column: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (i, c) in lp.constraints().iter().enumerate() {
        for &(j, v) in &c.coeffs {
            by_column[j].push((i, v));
        }
    }
    writeln!(out, "COLUMNS")?;
    for (j, entries) in by_column.iter().enumerate() {
        let col = col_name(j);
        let mut fields: Vec<(String, f64)> = vec![("OBJ".to_string(), -lp.objective()[j])];
        fields.extend(entries.iter().map(|&(i, v)| (row_name(i), v)));
        write_pairs(out, &col, &fields)?;
    }

    writeln!(out, "RHS")?;
    let rhs: Vec<(String, f64)> = lp
        .constraints()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.rhs != 0.0)
        .map(|(i, c)| (row_name(i), c.rhs))
        .collect();
    write_pairs(out, "RHS", &rhs)?;
    writeln!(out, "ENDATA")
}

fn write_pairs<W: Write>(out: &mut W, first: &str, fields: &[(String, f64)]) -> io::Result<()> {
    for chunk in fields.chunks(2) {
        write!(out, "    {:<8}  {:<8}  {:>12}", first, chunk[0].0, number(chunk[0].1))?;
        if let Some((row, v)) = chunk.get(1) {
            write!(out, "   {:<8}  {:>12}", row, number(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn col_name(j: usize) -> String {
    format!("X{j:07}")
}

fn row_name(i: usize) -> String {
    format!("R{i:07}")
}

/// Shortest rendering that fits a 12-character field.
fn number(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    (0..=11)
        .rev()
        .map(|p| format!("{v:.p$e}"))
        .find(|s| s.len() <= 12)
        .unwrap_or_else(|| format!("{v:.0e}"))
}
