//! `full:R=1.5,nd=180,nr=160` and `partial:delta=0.3,R=1.5,nd=..,nr=..`, with
//! optional `rmin`, `rmax` and `cutoff` keys. A value without a `kind:` prefix
//! names a JSON geometry file.

use funkrad::{CutoffKind, FunkError, Result, ScanGeometry};

pub fn parse_geometry(text: &str) -> Result<ScanGeometry> {
    let Some((kind, rest)) = text.split_once(':') else {
        let json = std::fs::read_to_string(text)
            .map_err(|source| FunkError::Io { path: text.into(), source })?;
        return Ok(serde_json::from_str(&json)?);
    };
    let mut radius = None;
    let mut delta = None;
    let mut nd = None;
    let mut nr = None;
    let mut window = (None, None);
    let mut cutoff = None;
    for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| FunkError::InvalidConfig(format!("geometry item `{pair}` lacks `=`")))?;
        let value = value.trim();
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| FunkError::InvalidConfig(format!("geometry `{key}` = `{value}` is not a number")))
        };
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| FunkError::InvalidConfig(format!("geometry `{key}` = `{value}` is not a count")))
        };
        match key.trim() {
            "R" => radius = Some(float()?),
            "delta" => delta = Some(float()?),
            "nd" => nd = Some(count()?),
            "nr" => nr = Some(count()?),
            "rmin" => window.0 = Some(float()?),
            "rmax" => window.1 = Some(float()?),
            "cutoff" => cutoff = Some(value.parse::<CutoffKind>()?),
            other => return Err(FunkError::InvalidConfig(format!("unknown geometry key `{other}`"))),
        }
    }
    let radius = radius.unwrap_or(1.5);
    let nd = nd.unwrap_or(180);
    let nr = nr.unwrap_or(160);
    let base = match kind.trim() {
        "full" => {
            if delta.is_some() {
                return Err(FunkError::InvalidConfig("a full scan takes no delta".into()));
            }
            ScanGeometry::full(radius, nd, nr)?
        }
        "partial" => {
            let delta = delta.ok_or_else(|| FunkError::InvalidConfig("partial scan needs delta".into()))?;
            ScanGeometry::partial(radius, delta, nd, nr)?
        }
        other => return Err(FunkError::InvalidConfig(format!("unknown scan kind `{other}`"))),
    };
    let geom = base.with_radius_window(window.0.unwrap_or(base.r_min), window.1.unwrap_or(base.r_max))?;
    match cutoff {
        Some(kind) => geom.with_cutoff(kind),
        None => Ok(geom),
    }
}

/// Canonical form with every key present; parses back to the same geometry.
pub fn format_geometry(g: &ScanGeometry) -> String {
    let head = match g.delta {
        None => "full:".to_string(),
        Some(d) => format!("partial:delta={d},"),
    };
    format!(
        "{head}R={},nd={},nr={},rmin={},rmax={},cutoff={}",
        g.detector_radius,
        g.n_detectors,
        g.n_radii,
        g.r_min,
        g.r_max,
        g.cutoff.kind.as_str()
    )
}
