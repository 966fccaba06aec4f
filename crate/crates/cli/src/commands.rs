use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dixon_core::detect::{classify_swaps_prior, flag_volume_excluding, ingest_segmentation, organ_overlap, SwapReport};
use dixon_core::fitting::{
    fit_mago_sp, fit_two_starts, select_min_residual, smooth_residual_select, FitConfig, Objective,
    RicianNoiseModel,
};
use dixon_core::io::{read_mask, read_multi_echo, read_scalar, write_mask, write_multi_echo, write_scalar, container_paths};
use dixon_core::metrics::MetricReport;
use dixon_core::phantom::{simulate_phantom, PhantomLayout};
use dixon_core::synth::{synthesize_swap, DEFAULT_THRESHOLD_RANGE};
use dixon_core::twopoint::{default_tolerance, select_volume_with_prior, TwoPointFlags};
use dixon_core::volume::{body_mask_from_signal, default_echo_times_ms, DEFAULT_BODY_QUANTILE};
use dixon_core::{BinaryMask, FatSpectrum, MultiEchoVolume, ParamMaps, ScalarVolume};
use serde::Serialize;
use serde_json::json;

use crate::config::usage;
use crate::{
    debug, info, DetectArgs, FitArgs, MetricsArgs, Method, PipelineArgs, Select2ptArgs, SimulateArgs, SynthSwapArgs,
};

fn required(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    match p {
        Some(p) => existing(p),
        None => Err(usage(format!("missing required --{flag}"))),
    }
}

fn optional(p: &Option<PathBuf>) -> Result<Option<PathBuf>> {
    p.as_deref().map(existing).transpose()
}

fn existing(p: &Path) -> Result<PathBuf> {
    let (header, _) = container_paths(p);
    if header.is_file() {
        Ok(p.to_path_buf())
    } else {
        Err(usage(format!("input not found: {}", header.display())))
    }
}

fn out_dir(p: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = p.clone().ok_or_else(|| usage("missing required --out"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn named(spec: &str, flag: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => Ok((name.to_string(), existing(Path::new(path))?)),
        _ => Err(usage(format!("--{flag} expects NAME=PATH, got '{spec}'"))),
    }
}

fn spectrum(name: &Option<String>) -> Result<FatSpectrum> {
    let name = name.as_deref().unwrap_or("6peak-3t");
    if let Some(s) = FatSpectrum::preset(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(usage(format!("unknown spectrum '{name}' (not a preset or a file)")));
    }
    FatSpectrum::from_file(path).map_err(|e| usage(format!("invalid spectrum file {name}: {e}")))
}

fn noise_sigma(sigma: Option<f64>) -> Result<Option<f64>> {
    match sigma {
        Some(s) if !(s >= 0.0 && s.is_finite()) => Err(usage(format!("invalid noise sigma {s}"))),
        s => Ok(s),
    }
}

fn fit_config(base: Option<FitConfig>, max_iterations: Option<usize>, r2star_max: Option<f64>) -> Result<FitConfig> {
    let mut cfg = base.unwrap_or_default();
    if let Some(n) = max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(r) = r2star_max {
        cfg.r2star_max = r;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Pretty JSON to `dir/name.json`, one-row CSV to `dir/name.csv`, JSON to stdout.
fn report<T: Serialize>(dir: Option<&Path>, name: &str, value: &T, header: &str, row: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(dir) = dir {
        fs::write(dir.join(format!("{name}.json")), &text)?;
        fs::write(dir.join(format!("{name}.csv")), format!("{header}\n{row}\n"))?;
    }
    // A closed stdout (e.g. piped into head) is not an error; the files are written.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn write_maps(dir: &Path, maps: &ParamMaps) -> Result<()> {
    write_scalar(&maps.rho_w, &dir.join("water"))?;
    write_scalar(&maps.rho_f, &dir.join("fat"))?;
    write_scalar(&maps.r2star, &dir.join("r2star"))?;
    write_scalar(&maps.pdff, &dir.join("pdff"))?;
    write_scalar(&maps.residual, &dir.join("residual"))?;
    write_scalar(&maps.basin_volume(), &dir.join("basin"))?;
    write_scalar(&maps.flags_volume(), &dir.join("flags"))?;
    Ok(())
}

fn nonzero_sum(a: &ScalarVolume, b: &ScalarVolume) -> BinaryMask {
    BinaryMask::from_fn(*a.geometry(), |i| a.get(i) + b.get(i) > 0.0)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let sigma = noise_sigma(a.sigma)?.unwrap_or(0.0);
    let layout = match &a.layout {
        Some(p) => PhantomLayout::from_file(p).map_err(|e| usage(format!("invalid layout {}: {e}", p.display())))?,
        None => {
            let d = a.dims.clone().unwrap_or_else(|| vec![64, 64, 64]);
            let dims: [usize; 3] = d.try_into().map_err(|_| usage("--dims takes three values"))?;
            PhantomLayout::abdomen(dims)
        }
    };
    layout.validate().map_err(|e| usage(format!("invalid layout: {e}")))?;
    let echo_times = match (&a.echo_times, a.echoes) {
        (Some(t), _) => t.clone(),
        (None, n) => default_echo_times_ms(n.unwrap_or(6)),
    };
    if echo_times.is_empty() {
        return Err(usage("need at least one echo"));
    }
    let spec = spectrum(&a.spectrum)?;
    let seed = a.seed.unwrap_or(0);
    let dir = out_dir(&a.out)?;

    info!("simulating {:?} phantom, {} echoes, sigma {sigma}, seed {seed}", layout.dims, echo_times.len());
    let ph = simulate_phantom(&layout, &spec, &echo_times, sigma, seed)?;
    write_multi_echo(&ph.echoes, &dir.join("echoes"))?;
    write_scalar(&ph.oracle_prior, &dir.join("prior"))?;
    let body = nonzero_sum(&ph.truth.rho_w, &ph.truth.rho_f);
    write_mask(&body, &dir.join("body"))?;
    let truth = dir.join("truth");
    fs::create_dir_all(&truth)?;
    write_scalar(&ph.truth.rho_w, &truth.join("water"))?;
    write_scalar(&ph.truth.rho_f, &truth.join("fat"))?;
    write_scalar(&ph.truth.r2star, &truth.join("r2star"))?;
    write_scalar(&ph.truth.pdff, &truth.join("pdff"))?;
    let regions = dir.join("regions");
    fs::create_dir_all(&regions)?;
    let masks = layout.region_masks()?;
    for (name, mask) in &masks {
        write_mask(mask, &regions.join(name))?;
    }

    let summary = json!({
        "dims": layout.dims,
        "voxel_size_mm": layout.voxel_size_mm,
        "echo_times_ms": ph.echoes.echo_times_ms(),
        "noise_sigma": sigma,
        "seed": seed,
        "body_voxels": body.count(),
        "regions": masks.iter().map(|(n, m)| json!({"name": n, "voxels": m.count()})).collect::<Vec<_>>(),
    });
    let header = "echo,te_ms";
    let rows: Vec<String> = echo_times.iter().enumerate().map(|(i, t)| format!("{i},{t}")).collect();
    report(Some(&dir), "simulate", &summary, header, &rows.join("\n"))
}

struct FitInputs {
    echoes: MultiEchoVolume,
    mask: BinaryMask,
    prior: Option<ScalarVolume>,
}

fn load_fit_inputs(echoes: &Option<PathBuf>, mask: &Option<PathBuf>, prior: &Option<PathBuf>) -> Result<FitInputs> {
    let echoes_path = required(echoes, "echoes")?;
    let mask_path = optional(mask)?;
    let prior_path = optional(prior)?;
    let echoes = read_multi_echo(&echoes_path)?;
    let mask = match mask_path {
        Some(p) => read_mask(&p)?,
        None => body_mask_from_signal(&echoes, DEFAULT_BODY_QUANTILE)?,
    };
    let prior = prior_path.map(|p| read_scalar(&p)).transpose()?;
    Ok(FitInputs { echoes, mask, prior })
}

fn rician(sigma: Option<f64>, inputs: &FitInputs) -> Result<RicianNoiseModel> {
    Ok(match sigma {
        Some(s) => RicianNoiseModel::fixed(s).map_err(|e| usage(e.to_string()))?,
        None => RicianNoiseModel::from_background(&inputs.echoes, &inputs.mask)?,
    })
}

fn run_method(
    method: Method,
    inputs: &FitInputs,
    cfg: &FitConfig,
    spec: &FatSpectrum,
    sigma: Option<f64>,
    radius: usize,
) -> Result<(ParamMaps, Option<RicianNoiseModel>)> {
    let (m, mask) = (&inputs.echoes, &inputs.mask);
    let prior = || inputs.prior.as_ref().ok_or_else(|| usage(format!("--method {method:?} requires --prior")));
    Ok(match method {
        Method::Mago => {
            let (w, f) = fit_two_starts(m, mask, cfg, spec, Objective::Gaussian)?;
            (select_min_residual(&w, &f)?, None)
        }
        Method::MagoSmoothed => {
            let (w, f) = fit_two_starts(m, mask, cfg, spec, Objective::Gaussian)?;
            (smooth_residual_select(&w, &f, radius)?, None)
        }
        Method::Magorino => {
            let noise = rician(sigma, inputs)?;
            let (w, f) = fit_two_starts(m, mask, cfg, spec, Objective::Rician { sigma: noise.sigma })?;
            (select_min_residual(&w, &f)?, Some(noise))
        }
        Method::MagoSp => (fit_mago_sp(m, prior()?, mask, cfg, spec, Objective::Gaussian)?, None),
        Method::MagorinoSp => {
            let p = prior()?;
            let noise = rician(sigma, inputs)?;
            (fit_mago_sp(m, p, mask, cfg, spec, Objective::Rician { sigma: noise.sigma })?, Some(noise))
        }
    })
}

fn method_name(m: Method) -> String {
    serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn fit_summary(method: Method, maps: &ParamMaps, mask: &BinaryMask, noise: Option<RicianNoiseModel>) -> (serde_json::Value, String, String) {
    let n = mask.count();
    let mean = |v: &ScalarVolume| {
        if n == 0 {
            0.0
        } else {
            (0..v.len()).filter(|&i| mask.get(i)).map(|i| v.get(i) as f64).sum::<f64>() / n as f64
        }
    };
    let (pdff, r2) = (mean(&maps.pdff), mean(&maps.r2star));
    let nc = maps.not_converged_count();
    let value = json!({
        "method": method_name(method),
        "fitted_voxels": n,
        "not_converged": nc,
        "mean_pdff": pdff,
        "mean_r2star": r2,
        "noise": noise,
    });
    let sigma = noise.map(|s| s.sigma.to_string()).unwrap_or_default();
    (
        value,
        "method,fitted_voxels,not_converged,mean_pdff,mean_r2star,sigma".into(),
        format!("{},{n},{nc},{pdff},{r2},{sigma}", method_name(method)),
    )
}

pub fn fit(a: FitArgs) -> Result<()> {
    let method = a.method.unwrap_or(Method::Mago);
    if method.needs_prior() && a.prior.is_none() {
        return Err(usage(format!("--method {} requires --prior", method_name(method))));
    }
    let sigma = noise_sigma(a.sigma)?;
    let cfg = fit_config(a.fit, a.max_iterations, a.r2star_max)?;
    let spec = spectrum(&a.spectrum)?;
    let inputs = load_fit_inputs(&a.echoes, &a.mask, &a.prior)?;
    let dir = out_dir(&a.out)?;
    info!("fitting {} voxels with {}", inputs.mask.count(), method_name(method));
    let (maps, noise) = run_method(method, &inputs, &cfg, &spec, sigma, a.radius.unwrap_or(1))?;
    write_maps(&dir, &maps)?;
    let (value, header, row) = fit_summary(method, &maps, &inputs.mask, noise);
    report(Some(&dir), "fit", &value, &header, &row)
}

pub fn select2pt(a: Select2ptArgs) -> Result<()> {
    let sigma = noise_sigma(a.sigma)?;
    let s0 = read_scalar(&required(&a.s0, "s0")?)?;
    let s1 = read_scalar(&required(&a.s1, "s1")?)?;
    let prior = read_scalar(&required(&a.prior, "prior")?)?;
    let mask = match optional(&a.mask)? {
        Some(p) => read_mask(&p)?,
        None => BinaryMask::full(*s0.geometry()),
    };
    let tolerance = match a.tolerance {
        Some(t) if t >= 0.0 && t.is_finite() => t,
        Some(t) => return Err(usage(format!("invalid tolerance {t}"))),
        None => default_tolerance(&s1, sigma),
    };
    let dir = out_dir(&a.out)?;
    let r = select_volume_with_prior(&s0, &s1, &prior, &mask, tolerance)?;
    write_scalar(&r.water, &dir.join("water"))?;
    write_scalar(&r.fat, &dir.join("fat"))?;
    write_scalar(&r.flags_volume(), &dir.join("flags"))?;
    let (inf, clamp, tie) =
        (r.count(TwoPointFlags::INFEASIBLE), r.count(TwoPointFlags::CLAMPED), r.count(TwoPointFlags::TIE));
    let value = json!({
        "voxels": mask.count(),
        "tolerance": tolerance,
        "infeasible": inf,
        "clamped": clamp,
        "tie": tie,
    });
    report(
        Some(&dir),
        "select2pt",
        &value,
        "voxels,tolerance,infeasible,clamped,tie",
        &format!("{},{tolerance},{inf},{clamp},{tie}", mask.count()),
    )
}

pub fn synth_swap(a: SynthSwapArgs) -> Result<()> {
    let water = read_scalar(&required(&a.water, "water")?)?;
    let fat = read_scalar(&required(&a.fat, "fat")?)?;
    let range = [
        a.threshold_min.unwrap_or(DEFAULT_THRESHOLD_RANGE[0]),
        a.threshold_max.unwrap_or(DEFAULT_THRESHOLD_RANGE[1]),
    ];
    let spacing = a.spacing.unwrap_or(8);
    let seed = a.seed.unwrap_or(0);
    let dir = out_dir(&a.out)?;
    let fx = synthesize_swap(&water, &fat, spacing, range, seed)?;
    write_scalar(&fx.water, &dir.join("water"))?;
    write_scalar(&fx.fat, &dir.join("fat"))?;
    write_mask(&fx.kappa, &dir.join("kappa"))?;
    let swapped = fx.kappa.count();
    let fraction = swapped as f64 / fx.kappa.len() as f64;
    let value = json!({
        "seed": seed,
        "spacing": spacing,
        "threshold": fx.threshold,
        "swapped_voxels": swapped,
        "swapped_fraction": fraction,
    });
    report(
        Some(&dir),
        "synth",
        &value,
        "seed,spacing,threshold,swapped_voxels,swapped_fraction",
        &format!("{seed},{spacing},{},{swapped},{fraction}", fx.threshold),
    )
}

fn finish_report(
    swaps: &BinaryMask,
    body: &BinaryMask,
    exclude: Option<&BinaryMask>,
    organs: &[(String, BinaryMask)],
) -> Result<SwapReport> {
    let mut r = flag_volume_excluding(swaps, body, exclude)?;
    for (name, organ) in organs {
        r.per_organ.push(organ_overlap(swaps, organ, name)?);
    }
    Ok(r)
}

fn detect_csv(r: &SwapReport) -> (String, String) {
    let mut header = SwapReport::csv_header().to_string();
    let mut row = r.csv_row();
    for o in &r.per_organ {
        header.push_str(&format!(",overlap_{}", o.organ));
        row.push_str(&format!(",{}", o.overlap_fraction));
    }
    (header, row)
}

pub fn detect(a: DetectArgs) -> Result<()> {
    if a.margin.is_some_and(|m| !(m >= 0.0 && m.is_finite())) {
        return Err(usage("--margin must be a nonnegative number"));
    }
    let organs: Vec<(String, PathBuf)> = a.organ.iter().map(|s| named(s, "organ")).collect::<Result<_>>()?;
    let body_path = optional(&a.body)?;
    let exclude_path = optional(&a.exclude)?;
    let (swaps, default_body) = match (&a.water_label, &a.fat_label, &a.water, &a.fat, &a.prior) {
        (Some(_), Some(_), None, None, None) => {
            let wl = read_mask(&required(&a.water_label, "water-label")?)?;
            let fl = read_mask(&required(&a.fat_label, "fat-label")?)?;
            let g = *wl.geometry();
            (ingest_segmentation(&wl, &fl)?, BinaryMask::full(g))
        }
        (None, None, Some(_), Some(_), Some(_)) => {
            let water = read_scalar(&required(&a.water, "water")?)?;
            let fat = read_scalar(&required(&a.fat, "fat")?)?;
            let prior = read_scalar(&required(&a.prior, "prior")?)?;
            let body = nonzero_sum(&water, &fat);
            (classify_swaps_prior(&water, &fat, &prior, &body, a.margin.unwrap_or(0.0))?, body)
        }
        _ => {
            return Err(usage(
                "detect needs either --water, --fat and --prior, or --water-label and --fat-label",
            ))
        }
    };
    let body = match body_path {
        Some(p) => read_mask(&p)?,
        None => default_body,
    };
    let exclude = exclude_path.map(|p| read_mask(&p)).transpose()?;
    let organs = organs
        .into_iter()
        .map(|(n, p)| Ok((n, read_mask(&p)?)))
        .collect::<Result<Vec<_>>>()?;
    let r = finish_report(&swaps, &body, exclude.as_ref(), &organs)?;
    let dir = out_dir(&a.out)?;
    write_mask(&swaps, &dir.join("swaps"))?;
    let (header, row) = detect_csv(&r);
    info!("swap fraction {:.5}, flagged {}", r.swap_fraction, r.flagged);
    report(Some(&dir), "detect", &r, &header, &row)
}

fn read_maps(dir: &Path) -> Result<ParamMaps> {
    let water = read_scalar(&existing(&dir.join("water"))?)?;
    let fat = read_scalar(&existing(&dir.join("fat"))?)?;
    let r2 = dir.join("r2star");
    let r2 = if container_paths(&r2).0.is_file() { read_scalar(&r2)? } else { ScalarVolume::zeros(*water.geometry()) };
    Ok(ParamMaps::reference(water, fat, r2)?)
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let recon_dir = a.recon.clone().ok_or_else(|| usage("missing required --recon"))?;
    let ref_dir = a.reference.clone().ok_or_else(|| usage("missing required --reference"))?;
    let mask_path = optional(&a.mask)?;
    let regions: Vec<(String, PathBuf)> = a.region.iter().map(|s| named(s, "region")).collect::<Result<_>>()?;
    let recon = read_maps(&recon_dir)?;
    let reference = read_maps(&ref_dir)?;
    let mask = match mask_path {
        Some(p) => read_mask(&p)?,
        None => nonzero_sum(&reference.rho_w, &reference.rho_f),
    };
    let regions = regions
        .into_iter()
        .map(|(n, p)| Ok((n, read_mask(&p)?)))
        .collect::<Result<Vec<_>>>()?;
    let r = MetricReport::compute(&recon, &reference, &mask, &regions)?;
    let dir = match &a.out {
        Some(_) => Some(out_dir(&a.out)?),
        None => None,
    };
    report(dir.as_deref(), "metrics", &r, &r.csv_header(), &r.csv_row())
}

pub fn pipeline(a: PipelineArgs) -> Result<()> {
    let method = a.method.unwrap_or(Method::MagoSp);
    if !method.needs_prior() {
        return Err(usage("pipeline correction --method must be mago-sp or magorino-sp"));
    }
    if a.prior.is_none() {
        return Err(usage("missing required --prior"));
    }
    if a.water.is_some() != a.fat.is_some() {
        return Err(usage("--water and --fat must be given together"));
    }
    let sigma = noise_sigma(a.sigma)?;
    if a.margin.is_some_and(|m| !(m >= 0.0 && m.is_finite())) {
        return Err(usage("--margin must be a nonnegative number"));
    }
    let cfg = fit_config(a.fit, None, None)?;
    let spec = spectrum(&a.spectrum)?;
    let inputs = load_fit_inputs(&a.echoes, &a.mask, &a.prior)?;
    let initial_paths = (optional(&a.water)?, optional(&a.fat)?);
    let dir = out_dir(&a.out)?;
    let prior = inputs.prior.as_ref().expect("prior checked above");
    let body = &inputs.mask;

    let margin = match a.margin.or(sigma) {
        Some(m) => m,
        None => dixon_core::fitting::estimate_sigma_background(&inputs.echoes, body).unwrap_or(0.0),
    };
    debug!("classifier margin {margin}");

    let (water, fat) = match initial_paths {
        (Some(w), Some(f)) => (read_scalar(&w)?, read_scalar(&f)?),
        _ => {
            info!("initial reconstruction with mago");
            let maps = run_method(Method::Mago, &inputs, &cfg, &spec, sigma, 1)?.0;
            (maps.rho_w, maps.rho_f)
        }
    };
    let swaps = classify_swaps_prior(&water, &fat, prior, body, margin)?;
    let before = finish_report(&swaps, body, None, &[])?;
    write_mask(&swaps, &dir.join("swaps_initial"))?;
    info!("initial swap fraction {:.5}, flagged {}", before.swap_fraction, before.flagged);

    let after = if before.flagged {
        info!("correcting with {}", method_name(method));
        let (maps, _) = run_method(method, &inputs, &cfg, &spec, sigma, 1)?;
        let swaps = classify_swaps_prior(&maps.rho_w, &maps.rho_f, prior, body, margin)?;
        write_mask(&swaps, &dir.join("swaps_final"))?;
        write_maps(&dir, &maps)?;
        Some(finish_report(&swaps, body, None, &[])?)
    } else {
        write_scalar(&water, &dir.join("water"))?;
        write_scalar(&fat, &dir.join("fat"))?;
        None
    };

    let value = json!({
        "margin": margin,
        "initial": before,
        "corrected": after.is_some(),
        "correction_method": after.as_ref().map(|_| method_name(method)),
        "final": after.as_ref().unwrap_or(&before),
    });
    let header = format!("stage,{}", SwapReport::csv_header());
    let mut rows = vec![format!("initial,{}", before.csv_row())];
    if let Some(r) = &after {
        rows.push(format!("corrected,{}", r.csv_row()));
    }
    report(Some(&dir), "pipeline", &value, &header, &rows.join("\n"))
}
