use std::io::{BufWriter, Write};
use std::path::Path;

use tempfile::NamedTempFile;

use crate::Failure;

/// Writes through a temporary file in the target directory, then renames it
/// into place so readers never see a partial file.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let fail = |e: &dyn std::fmt::Display| Failure::Runtime(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).map_err(|e| fail(&e))?;
        w.flush().map_err(|e| fail(&e))?;
    }
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

/// Writes a CSV table atomically.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.write_record(r)?;
        }
        csv.flush()
    })
}

/// Full precision for CSV cells.
pub fn full(v: f64) -> String {
    sig(v, 17)
}

/// `v` rounded to `digits` significant digits, fixed or scientific
/// notation as `%g` would choose.
pub fn sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let (mantissa, _) = sci.split_at(sci.find('e').unwrap());
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders a ratio as a small-denominator fraction when one matches.
pub fn fraction(r: f64) -> String {
    (1..=12u32)
        .find_map(|d| {
            let n = r * d as f64;
            ((n - n.round()).abs() < 1e-12).then(|| match d {
                1 => format!("{}", n.round()),
                _ => format!("{}/{d}", n.round()),
            })
        })
        .unwrap_or_else(|| sig(r, 6))
}
