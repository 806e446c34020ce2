//! Text formats.
//!
//! ```text
//! funkgrid 2 <nx> <ny> -1 1 -1 1
//! <ny rows of nx values>
//!
//! funksino <n_detectors> <n_radii> <R> <r_min> <r_max> <delta|full>
//! <n_detectors rows of n_radii values>
//! ```
//!
//! Every float is written with 17 significant digits so that reading back
//! reproduces the exact bits.

use std::fmt::Write as _;
use std::path::Path;

use super::{GridDensity, SinoKind, Sinogram};
use crate::error::{FunkError, Result};
use crate::geometry::ScanGeometry;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(out: &mut String, values: &[f64], width: usize) -> Result<()> {
    for (row_idx, row) in values.chunks(width).enumerate() {
        for (k, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(FunkError::NonFiniteValue(format!("row {row_idx}, column {k}")));
            }
            if k > 0 {
                out.push(' ');
            }
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    Ok(())
}

pub fn format_grid(f: &GridDensity) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "funkgrid 2 {} {} -1 1 -1 1", f.nx(), f.ny()).unwrap();
    write_rows(&mut out, f.values(), f.nx())?;
    Ok(out)
}

pub fn format_sinogram(u: &Sinogram) -> Result<String> {
    let g = u.geom();
    let delta = match g.delta {
        None => "full".to_string(),
        Some(d) => fmt_f64(d),
    };
    let mut out = String::new();
    writeln!(
        out,
        "funksino {} {} {} {} {} {}",
        g.n_detectors,
        g.n_radii,
        fmt_f64(g.detector_radius),
        fmt_f64(g.r_min),
        fmt_f64(g.r_max),
        delta
    )
    .unwrap();
    write_rows(&mut out, u.values(), g.n_radii)?;
    Ok(out)
}

fn header_count(tok: Option<&str>, name: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| FunkError::MalformedHeader(format!("missing {name}")))?;
    let v: i64 = tok
        .parse()
        .map_err(|_| FunkError::MalformedHeader(format!("{name} = `{tok}` is not an integer")))?;
    if v <= 0 {
        return Err(FunkError::MalformedHeader(format!("{name} = {v} must be positive")));
    }
    Ok(v as usize)
}

fn header_float(tok: Option<&str>, name: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| FunkError::MalformedHeader(format!("missing {name}")))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| FunkError::MalformedHeader(format!("{name} = `{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(FunkError::MalformedHeader(format!("{name} is not finite")));
    }
    Ok(v)
}

fn parse_rows<'a>(
    lines: impl Iterator<Item = &'a str>,
    rows: usize,
    cols: usize,
) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(rows * cols);
    let mut n_rows = 0;
    for (r, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        if r >= rows {
            return Err(FunkError::DimensionMismatch(format!("more than {rows} data rows")));
        }
        let before = values.len();
        for (c, tok) in line.split_whitespace().enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                FunkError::DimensionMismatch(format!("row {r}, column {c}: `{tok}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(FunkError::NonFiniteValue(format!("row {r}, column {c}")));
            }
            values.push(v);
        }
        if values.len() - before != cols {
            return Err(FunkError::DimensionMismatch(format!(
                "row {r} has {} values, expected {cols}",
                values.len() - before
            )));
        }
        n_rows += 1;
    }
    if n_rows != rows {
        return Err(FunkError::DimensionMismatch(format!("{n_rows} data rows, expected {rows}")));
    }
    Ok(values)
}

pub fn parse_grid(text: &str) -> Result<GridDensity> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| FunkError::MalformedHeader("empty file".into()))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("funkgrid") {
        return Err(FunkError::MalformedHeader("expected `funkgrid`".into()));
    }
    if toks.next() != Some("2") {
        return Err(FunkError::MalformedHeader("only dimension 2 is supported".into()));
    }
    let nx = header_count(toks.next(), "nx")?;
    let ny = header_count(toks.next(), "ny")?;
    let bounds: Vec<f64> = (0..4)
        .map(|k| header_float(toks.next(), &format!("bound {k}")))
        .collect::<Result<_>>()?;
    if bounds != [-1.0, 1.0, -1.0, 1.0] {
        return Err(FunkError::MalformedHeader(format!("bounds {bounds:?} must be -1 1 -1 1")));
    }
    if toks.next().is_some() {
        return Err(FunkError::MalformedHeader("trailing header tokens".into()));
    }
    let values = parse_rows(lines, ny, nx)?;
    GridDensity::from_values(nx, ny, values)
}

pub fn parse_sinogram(text: &str) -> Result<Sinogram> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| FunkError::MalformedHeader("empty file".into()))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("funksino") {
        return Err(FunkError::MalformedHeader("expected `funksino`".into()));
    }
    let nd = header_count(toks.next(), "n_detectors")?;
    let nr = header_count(toks.next(), "n_radii")?;
    let radius = header_float(toks.next(), "R")?;
    let r_min = header_float(toks.next(), "r_min")?;
    let r_max = header_float(toks.next(), "r_max")?;
    let delta_tok = toks
        .next()
        .ok_or_else(|| FunkError::MalformedHeader("missing delta".into()))?;
    if toks.next().is_some() {
        return Err(FunkError::MalformedHeader("trailing header tokens".into()));
    }
    let geom = match delta_tok {
        "full" => ScanGeometry::full(radius, nd, nr),
        d => ScanGeometry::partial(radius, header_float(Some(d), "delta")?, nd, nr),
    }
    .and_then(|g| g.with_radius_window(r_min, r_max))
    .map_err(|e| FunkError::MalformedHeader(e.to_string()))?;
    let values = parse_rows(lines, nd, nr)?;
    Sinogram::from_values(geom, values, SinoKind::Function)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| FunkError::Io { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| FunkError::Io { path: path.to_path_buf(), source })
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridDensity> {
    parse_grid(&read_text(path.as_ref())?)
}

pub fn write_grid(path: impl AsRef<Path>, f: &GridDensity) -> Result<()> {
    write_text(path.as_ref(), &format_grid(f)?)
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    parse_sinogram(&read_text(path.as_ref())?)
}

pub fn write_sinogram(path: impl AsRef<Path>, u: &Sinogram) -> Result<()> {
    write_text(path.as_ref(), &format_sinogram(u)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_phantom, PhantomSpec};
    use proptest::prelude::*;

    #[test]
    fn phantom_file_round_trip_is_bit_exact() {
        let spec = PhantomSpec::random_gaussians(3, 5, None);
        let f = make_phantom(&spec, 64, 64).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.grid");
        write_grid(&path, &f).unwrap();
        let g = read_grid(&path).unwrap();
        assert_eq!(f.values().len(), g.values().len());
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("funkgrid 2 64 64 -1 1 -1 1\n"));
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(parse_grid("funkgrid 2 0 4 -1 1 -1 1\n"), Err(FunkError::MalformedHeader(_))));
        assert!(matches!(parse_grid("funkgrid 2 -3 4 -1 1 -1 1\n"), Err(FunkError::MalformedHeader(_))));
        assert!(matches!(parse_grid("funkgrid 3 2 2 -1 1 -1 1\n"), Err(FunkError::MalformedHeader(_))));
        assert!(matches!(parse_grid("grid 2 2 2\n"), Err(FunkError::MalformedHeader(_))));
        assert!(matches!(
            parse_sinogram("funksino 2 2 0.5 0.1 1 full\n1 1\n1 1\n"),
            Err(FunkError::MalformedHeader(_))
        ));
    }

    #[test]
    fn dimension_and_value_errors() {
        let short = "funkgrid 2 2 2 -1 1 -1 1\n1 2\n";
        assert!(matches!(parse_grid(short), Err(FunkError::DimensionMismatch(_))));
        let ragged = "funkgrid 2 2 2 -1 1 -1 1\n1 2\n3\n";
        assert!(matches!(parse_grid(ragged), Err(FunkError::DimensionMismatch(_))));
        let nan = "funksino 2 2 1.5 0.5 2.5 full\n1 NaN\n1 1\n";
        assert!(matches!(parse_sinogram(nan), Err(FunkError::NonFiniteValue(_))));
        let geom = ScanGeometry::full(1.5, 2, 2).unwrap();
        let bad = Sinogram::from_values(geom, vec![1.0, f64::INFINITY, 0.0, 0.0], SinoKind::Function).unwrap();
        assert!(matches!(format_sinogram(&bad), Err(FunkError::NonFiniteValue(_))));
    }

    #[test]
    fn partial_sinogram_header_round_trip() {
        let geom = ScanGeometry::partial(1.5, 0.3, 5, 3).unwrap().with_radius_window(0.6, 2.4).unwrap();
        let u = Sinogram::from_fn(geom, SinoKind::Function, |t, r| t.sin() * r);
        let back = parse_sinogram(&format_sinogram(&u).unwrap()).unwrap();
        assert_eq!(back, u);
    }

    proptest! {
        #[test]
        fn sinogram_text_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 12)) {
            let geom = ScanGeometry::full(1.7, 4, 3).unwrap();
            let u = Sinogram::from_values(geom, values, SinoKind::Function).unwrap();
            let back = parse_sinogram(&format_sinogram(&u).unwrap()).unwrap();
            prop_assert_eq!(back, u);
        }
    }
}
