use std::io::Write;
use std::path::Path;

use super::write_atomically;
use crate::error::{Error, Result};
use crate::nesting::Spectrum1D;

/// Two columns `lag_mm,s2`. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_spectrum_csv(spectrum: &Spectrum1D, path: &Path) -> Result<()> {
    if spectrum.is_empty() {
        return Err(Error::Empty("spectrum has no samples".into()));
    }
    let mut text = String::from("lag_mm,s2\n");
    for (l, v) in spectrum.lags().iter().zip(spectrum.values()) {
        text.push_str(&format!("{l},{v}\n"));
    }
    write_atomically(path, |tmp| {
        let mut f = std::fs::File::create(tmp).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    })
}

/// Parse a file written by [`write_spectrum_csv`] back into `(lag, value)` pairs.
pub fn read_spectrum_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("lag_mm,s2") {
        return Err(Error::format(path, "expected header `lag_mm,s2`"));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let (a, b) = l.split_once(',').ok_or_else(|| {
                Error::format(path, format!("row {}: expected two columns", i + 1))
            })?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::format(path, format!("row {}: `{s}` is not a number", i + 1))
                })
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = Spectrum1D::new(vec![0.0], vec![0.5357], 0.02022).unwrap();
        write_spectrum_csv(&s, &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "lag_mm,s2\n0,0.5357\n"
        );
    }

    #[test]
    fn empty_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let s = Spectrum1D::new(vec![], vec![], 1.0).unwrap();
        assert!(write_spectrum_csv(&s, &path).is_err());
        assert!(!path.exists());
    }
}
