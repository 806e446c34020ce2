use std::f64::consts::PI;
use std::fmt::Write as _;

use funkrad::fields::{make_phantom, read_grid, read_sinogram, write_grid, write_sinogram};
use funkrad::geometry::{conjugate_gap, phi_determinant};
use funkrad::kaczmarz::{discrete_adjoint_apply, Kaczmarz};
use funkrad::range::{
    build_annihilator_with, moment_residuals, range_residual, Annihilator, Harmonic, Term,
};
use funkrad::transform::{adjoint_residual, backproject, forward, kernel_probe, spectrum_probe};
use funkrad::{FunkError, KaczmarzConfig, PhantomSpec, Primitive, Region, Result, ScanGeometry, SinoKind, Sinogram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::args::*;
use crate::geom::parse_geometry;

pub struct Report {
    pub table: String,
    pub summary: serde_json::Value,
}

fn geometry(text: &Option<String>) -> Result<ScanGeometry> {
    parse_geometry(text.as_deref().expect("resolved"))
}

fn optional_region(name: &str) -> Result<Option<Region>> {
    match name {
        "none" => Ok(None),
        other => other.parse().map(Some),
    }
}

fn parse_pair(text: &str, what: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| FunkError::InvalidConfig(format!("{what} `{text}` is not `a,b`")))?;
    match v[..] {
        [a, b] => Ok([a, b]),
        _ => Err(FunkError::InvalidConfig(format!("{what} `{text}` needs two numbers"))),
    }
}

fn phantom_spec(spec: &[String], random: usize, seed: u64, mask: Option<Region>) -> Result<PhantomSpec> {
    let listed: Vec<Primitive> = spec.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let mut out = if random > 0 {
        PhantomSpec::random_gaussians(random, seed, mask)
    } else {
        PhantomSpec { primitives: Vec::new(), seed: None, mask }
    };
    out.primitives.extend(listed);
    Ok(out)
}

pub fn phantom(a: &PhantomArgs) -> Result<Report> {
    let mask = optional_region(a.mask.as_deref().unwrap())?;
    let spec = phantom_spec(&a.spec, a.random.unwrap(), a.seed.unwrap(), mask)?;
    let (nx, ny) = (a.nx.unwrap(), a.ny.unwrap());
    let f = make_phantom(&spec, nx, ny)?;
    let out = a.out.as_ref().unwrap();
    write_grid(out, &f)?;
    let max = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut table = String::from("primitive\n");
    for p in &spec.primitives {
        writeln!(table, "{}", serde_json::to_string(p)?).unwrap();
    }
    Ok(Report {
        table,
        summary: json!({ "out": out, "nx": nx, "ny": ny, "norm": f.norm(), "max_abs": max }),
    })
}

pub fn forward_cmd(a: &ForwardArgs) -> Result<Report> {
    let geom = geometry(&a.geom)?;
    let f = read_grid(a.input.as_ref().unwrap())?;
    let g = forward(&f, &geom)?;
    let out = a.out.as_ref().unwrap();
    write_sinogram(out, &g)?;
    let max = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Report {
        table: String::new(),
        summary: json!({ "out": out, "geometry": geom, "norm": g.norm(), "max_abs": max }),
    })
}

pub fn backproject_cmd(a: &BackprojectArgs) -> Result<Report> {
    let u = read_sinogram(a.input.as_ref().unwrap())?;
    let (nx, ny) = (a.nx.unwrap(), a.ny.unwrap());
    let f = match a.mode.as_deref().unwrap() {
        "transpose" => discrete_adjoint_apply(&u, u.geom(), nx, ny)?,
        _ => backproject(&u, u.geom(), nx, ny)?,
    };
    let out = a.out.as_ref().unwrap();
    write_grid(out, &f)?;
    Ok(Report { table: String::new(), summary: json!({ "out": out, "norm": f.norm() }) })
}

/// Smooth density on `Σ`: a few low harmonics in `t` times a Gaussian in `r`.
fn smooth_weight(geom: ScanGeometry, seed: u64) -> Sinogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: [f64; 3] = [rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let p: [f64; 2] = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
    let c = rng.gen_range(1.0..2.0);
    let s: f64 = rng.gen_range(0.2..0.4);
    Sinogram::from_fn(geom, SinoKind::Density, |t, r| {
        (a[0] + a[1] * (t + p[0]).cos() + a[2] * (2.0 * t + p[1]).sin()) * (-(r - c).powi(2) / (2.0 * s * s)).exp()
    })
}

pub fn adjoint_check(a: &AdjointCheckArgs) -> Result<Report> {
    let base = geometry(&a.geom)?;
    let seed = a.seed.unwrap();
    let spec = phantom_spec(&a.spec, a.random.unwrap(), seed, None)?;
    let mut table = String::from("level nx n_detectors n_radii residual ratio\n");
    let mut rows = Vec::new();
    let mut previous: Option<f64> = None;
    for level in 0..a.levels.unwrap() {
        let factor = 1usize << level;
        let geom = base.refined(factor)?;
        let n = a.nx.unwrap() * factor;
        let f = make_phantom(&spec, n, n)?;
        let residual = adjoint_residual(&f, &smooth_weight(geom, seed.wrapping_add(1)), &geom)?;
        let ratio = previous.map(|p| p / residual);
        let ratio_text = ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.6}"));
        writeln!(
            table,
            "{level} {n} {} {} {residual:.16e} {ratio_text}",
            geom.n_detectors, geom.n_radii
        )
        .unwrap();
        rows.push(json!({ "level": level, "nx": n, "residual": residual, "ratio": ratio }));
        previous = Some(residual);
    }
    Ok(Report { table, summary: json!({ "levels": rows }) })
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<Report> {
    let data = read_sinogram(a.input.as_ref().unwrap())?;
    let geom = *data.geom();
    let support = match a.support.as_deref().unwrap() {
        "auto" => KaczmarzConfig::for_geometry(&geom).support,
        other => optional_region(other)?,
    };
    let config = KaczmarzConfig {
        omega: a.omega.unwrap(),
        theta_rel: a.theta_rel.unwrap(),
        max_iters: a.iters.unwrap(),
        stop_tol: a.stop_tol.unwrap(),
        cg_tol: a.cg_tol.unwrap(),
        cg_max_iters: a.cg_max_iters.unwrap(),
        seed: a.seed.unwrap(),
        power_iters: a.power_iters.unwrap(),
        support,
        fatal_cg: a.fatal_cg,
    };
    let (nx, ny) = (a.nx.unwrap(), a.ny.unwrap());
    let truth = a.truth.as_ref().map(read_grid).transpose()?;
    let solver = Kaczmarz::new(&geom, nx, ny, config)?;
    let (f, report) = solver.run(&data, None, truth.as_ref())?;
    if let Some(out) = &a.out {
        write_grid(out, &f)?;
    }
    let mut summary = report.summary_json();
    summary["out"] = json!(a.out);
    Ok(Report { table: report.to_table(), summary })
}

fn inline_annihilator(
    deg: usize,
    freq: usize,
    amps: &[f64],
    radius: f64,
    sine: bool,
) -> Result<Annihilator> {
    let harmonic = if sine { Harmonic::Sin } else { Harmonic::Cos };
    build_annihilator_with(deg, freq, amps, radius, harmonic)
}

pub fn range_build(a: &RangeBuildArgs) -> Result<Report> {
    let ann = inline_annihilator(a.deg.unwrap(), a.freq.unwrap(), &a.amps, a.radius.unwrap(), a.sine)?;
    if let Some(out) = &a.out {
        std::fs::write(out, ann.to_json()? + "\n").map_err(|source| FunkError::Io { path: out.clone(), source })?;
    }
    let moments = moment_residuals(&ann);
    Ok(Report {
        table: moments.to_table(),
        summary: json!({ "out": a.out, "max_moment_residual": moments.max_abs(), "annihilator": ann }),
    })
}

pub fn range_check(a: &RangeCheckArgs) -> Result<Report> {
    let g = read_sinogram(a.input.as_ref().unwrap())?;
    let radius = g.geom().detector_radius;
    let mut named: Vec<(String, Annihilator)> = Vec::new();
    for path in &a.annihilator {
        let text = std::fs::read_to_string(path).map_err(|source| FunkError::Io { path: path.clone(), source })?;
        named.push((path.display().to_string(), Annihilator::from_json(&text)?));
    }
    if let (Some(deg), Some(freq)) = (a.deg, a.freq) {
        let ann = inline_annihilator(deg, freq, &a.amps, radius, a.sine)?;
        named.push((format!("deg={deg},freq={freq}"), ann));
    }
    let reference = Annihilator {
        degree: 0,
        detector_radius: radius,
        terms: vec![Term { j: 0, frequency: 0, cos_amp: 1.0, sin_amp: 0.0 }],
    };
    let mut table = String::from("annihilator certified residual\n");
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (name, ann) in &named {
        let residual = range_residual(&g, ann)?;
        let certified = moment_residuals(ann).is_certified();
        if certified {
            worst = worst.max(residual);
        }
        writeln!(table, "{name} {certified} {residual:.16e}").unwrap();
        rows.push(json!({ "annihilator": name, "certified": certified, "residual": residual }));
    }
    let constant = range_residual(&g, &reference)?;
    writeln!(table, "constant(reference) false {constant:.16e}").unwrap();
    Ok(Report {
        table,
        summary: json!({ "residuals": rows, "max_certified_residual": worst, "constant_reference": constant }),
    })
}

pub fn kernel_probe_cmd(a: &KernelProbeArgs) -> Result<Report> {
    let geom = geometry(&a.geom)?;
    let base = parse_pair(a.base.as_deref().unwrap(), "base")?;
    let dir = parse_pair(a.dir.as_deref().unwrap(), "dir")?;
    let (lo, hi, n) = (a.dmin.unwrap(), a.dmax.unwrap(), a.samples.unwrap());
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(FunkError::InvalidConfig("need 0 < dmin < dmax and samples >= 2".into()));
    }
    let distances: Vec<f64> = (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect();
    let report = kernel_probe(base, dir, &distances, &geom)?;
    Ok(Report { table: report.to_table(), summary: serde_json::to_value(&report)? })
}

pub fn spectrum(a: &SpectrumArgs) -> Result<Report> {
    let geom = geometry(&a.geom)?;
    let mask: Region = a.mask.as_deref().unwrap().parse()?;
    let report = spectrum_probe(&geom, a.nx.unwrap(), a.ny.unwrap(), mask, (a.kmin.unwrap(), a.kmax.unwrap()))?;
    let lambda1 = report.eigenvalues[0];
    let smallest = report.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Report {
        table: report.to_table(),
        summary: json!({
            "slope": report.slope,
            "intercept": report.intercept,
            "fit_residual": report.residual,
            "k_window": report.k_window,
            "lambda_1": lambda1,
            "smallest_eigenvalue": smallest,
            "count": report.eigenvalues.len(),
        }),
    })
}

fn ball_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    loop {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if p[0] * p[0] + p[1] * p[1] < 1.0 {
            return p;
        }
    }
}

pub fn geom_check(a: &GeomCheckArgs) -> Result<Report> {
    let geom = geometry(&a.geom)?;
    let model = geom.incidence();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap());
    let n = a.samples.unwrap();
    let (mut det_min, mut det_max) = (f64::INFINITY, 0.0f64);
    let mut defect = 0.0f64;
    for _ in 0..n {
        let x = ball_point(&mut rng);
        let t = geom.detector_angle(rng.gen_range(0..geom.n_detectors));
        let y = model.detector(t);
        let d = phi_determinant(&model, x, [t, (x[0] - y[0]).hypot(x[1] - y[1])])?.abs();
        det_min = det_min.min(d);
        det_max = det_max.max(d);
        defect = defect.max(funkrad::range::hyperplane_check(x, t, &geom));
    }
    let mut gap_min = f64::INFINITY;
    let mut empty = 0usize;
    for _ in 0..n {
        let gap = conjugate_gap(ball_point(&mut rng), ball_point(&mut rng), &geom)?;
        if gap.is_infinite() {
            empty += 1;
        } else {
            gap_min = gap_min.min(gap);
        }
    }
    let mut table = String::from("quantity value\n");
    writeln!(table, "det_phi_min_abs {det_min:.16e}").unwrap();
    writeln!(table, "det_phi_max_abs {det_max:.16e}").unwrap();
    writeln!(table, "conjugate_gap_min {gap_min:.16e}").unwrap();
    writeln!(table, "pairs_without_common_circle {empty}").unwrap();
    writeln!(table, "hyperplane_defect_max {defect:.16e}").unwrap();
    Ok(Report {
        table,
        summary: json!({
            "samples": n,
            "det_phi_min_abs": det_min,
            "det_phi_max_abs": det_max,
            "conjugate_gap_min": if gap_min.is_finite() { Some(gap_min) } else { None },
            "pairs_without_common_circle": empty,
            "hyperplane_defect_max": defect,
        }),
    })
}
