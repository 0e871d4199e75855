//! Command-line front end. Every subcommand validates its inputs before
//! writing anything and prints a `key=value` summary on stdout.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{s, Array4};

use crate::descriptors::{axis_spectrum, class_s2, volume_fractions, Boundary, GridAxis};
use crate::error::{Error, Result};
use crate::io::{self, DatasetBundle, Encoding, Grid};
use crate::metrics::{composite_loss, confusion, cross_entropy, dice_loss, iou_f1, LossConfig};
use crate::nesting::{
    laminate_thickness, nesting_from_spectrum, CompactionSpec, NestingReport, AREAL_WEIGHT_GSM,
    DEFAULT_INTERP_FACTOR, FIBER_DENSITY_G_CM3,
};
use crate::patching::{
    crop_center, gaussian_window, patch_grid, stitch, DEFAULT_PAD, DEFAULT_SIGMA_SCALE,
};
use crate::synth::{generate_plain_weave, nesting_ground_truth, WeaveSpec};
use crate::volume::{
    argmax_decode, one_hot_encode, softmax_field, FieldKind, GridGeometry, LabelVolume,
    ProbabilityField, CT_VOXEL_PITCH_MM,
};

#[derive(Debug, Parser)]
#[command(
    name = "weavestat",
    version,
    about = "Microstructure statistics for woven-composite CT segmentations"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert between HDF5 bundles and NRRD grids.
    Convert(ConvertArgs),
    /// Two-point correlation of one class.
    S2(S2Args),
    /// Layer thickness and nesting factor from the z-axis S2 spectrum.
    Nesting(NestingArgs),
    /// IoU/F1 (and losses, when the prediction carries scores).
    Metrics(MetricsArgs),
    /// Blend per-patch score files into one volume.
    Stitch(StitchArgs),
    /// Generate a synthetic plain-weave stack.
    Synth(SynthArgs),
    /// Volume fractions, per-class S2 and nesting in one pass.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Voxel pitch in mm (overrides any NRRD spacing).
    #[arg(long)]
    pub pitch_mm: Option<f64>,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct BoundaryArgs {
    /// Periodic boundaries (default).
    #[arg(long, conflicts_with = "aperiodic")]
    pub periodic: bool,
    /// Zero-padded, non-periodic correlation.
    #[arg(long)]
    pub aperiodic: bool,
}

impl BoundaryArgs {
    fn boundary(self) -> Boundary {
        if self.aperiodic {
            Boundary::Aperiodic { unbiased: false }
        } else {
            Boundary::Periodic
        }
    }
}

#[derive(Debug, Args)]
pub struct S2Args {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub class: u16,
    #[command(flatten)]
    pub boundary: BoundaryArgs,
    /// Full correlation field as NRRD (float64).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// z-axis spectrum as CSV.
    #[arg(long)]
    pub spectrum_csv: Option<PathBuf>,
    #[arg(long)]
    pub pitch_mm: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct StackArgs {
    /// Number of fabric layers.
    #[arg(long)]
    pub layers: Option<u32>,
    /// Measured tamp gap in mm.
    #[arg(long)]
    pub gap_mm: Option<f64>,
    /// Areal weight in g/m^2.
    #[arg(long)]
    pub areal_weight: Option<f64>,
    /// Fiber density in g/cm^3.
    #[arg(long)]
    pub fiber_density: Option<f64>,
    /// Target fiber volume content in (0, 1].
    #[arg(long)]
    pub fvc: Option<f64>,
}

impl StackArgs {
    fn given(&self) -> bool {
        self.layers.is_some() || self.gap_mm.is_some() || self.fvc.is_some()
    }

    /// Gap from `--gap-mm`, or from the laminate thickness at `--fvc`. With
    /// only a gap, the fiber volume content is the one it implies.
    fn spec(&self) -> Result<CompactionSpec> {
        let layers = self
            .layers
            .ok_or_else(|| Error::invalid("--layers is required"))?;
        let mut spec = CompactionSpec {
            layers,
            areal_weight: self.areal_weight.unwrap_or(AREAL_WEIGHT_GSM),
            fiber_density: self.fiber_density.unwrap_or(FIBER_DENSITY_G_CM3),
            target_fvc: self.fvc.unwrap_or(1.0),
            gap_mm: 1.0,
        };
        match (self.gap_mm, self.fvc) {
            (Some(gap), Some(_)) => spec.gap_mm = gap,
            (Some(gap), None) => {
                spec.gap_mm = gap;
                spec.target_fvc = laminate_thickness(&spec)? / gap;
            }
            (None, Some(_)) => spec.gap_mm = laminate_thickness(&spec)?,
            (None, None) => return Err(Error::invalid("either --gap-mm or --fvc is required")),
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct NestingArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub class: u16,
    #[arg(long)]
    pub pitch_mm: Option<f64>,
    #[command(flatten)]
    pub stack: StackArgs,
    #[command(flatten)]
    pub boundary: BoundaryArgs,
    #[arg(long, default_value_t = DEFAULT_INTERP_FACTOR)]
    pub interp_factor: usize,
    /// Report as a one-row CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct LossArgs {
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.7)]
    pub beta: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.45,0.45")]
    pub class_weights: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
}

impl LossArgs {
    fn config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            beta: self.beta,
            class_weights: self.class_weights.clone(),
            epsilon: self.epsilon,
            ..LossConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Classes entering the means.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub classes: Vec<usize>,
    #[command(flatten)]
    pub loss: LossArgs,
    #[arg(long)]
    pub pitch_mm: Option<f64>,
    /// Per-class scores as a one-row CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// Patch score files, or directories of `*.h5` patch files.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SIGMA_SCALE)]
    pub sigma_scale: f64,
    /// Mirror-padding width to crop from every side after blending.
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pub pad: usize,
    /// Expected patch edge; with --stride, offsets must form the regular grid.
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub pitch_mm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `.h5` bundle or `.nrrd` grid.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = CT_VOXEL_PITCH_MM)]
    pub pitch_mm: f64,
    /// Random in-plane layer shifts from this seed (none: aligned layers).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid shape `z,y,x` (default: stack height by one unit cell).
    #[arg(long, value_delimiter = ',')]
    pub shape: Option<Vec<usize>>,
    /// Interpenetration of adjacent layers in mm.
    #[arg(long, default_value_t = 0.0)]
    pub interpenetration_mm: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub classes: Vec<u16>,
    #[command(flatten)]
    pub boundary: BoundaryArgs,
    #[command(flatten)]
    pub stack: StackArgs,
    #[arg(long, default_value_t = DEFAULT_INTERP_FACTOR)]
    pub interp_factor: usize,
    #[arg(long)]
    pub pitch_mm: Option<f64>,
    /// One CSV row per analyzed class.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub spectrum_csv: Option<PathBuf>,
}

/// Parse, execute and map the outcome to a process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be positive"));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut summary = Summary::default();
    match &cli.command {
        Command::Convert(a) => convert(a, &mut summary)?,
        Command::S2(a) => s2(a, &mut summary)?,
        Command::Nesting(a) => nesting(a, &mut summary)?,
        Command::Metrics(a) => metrics(a, &mut summary)?,
        Command::Stitch(a) => stitch_cmd(a, &mut summary)?,
        Command::Synth(a) => synth(a, &mut summary)?,
        Command::Analyze(a) => analyze(a, &mut summary)?,
    }
    out.write_all(summary.text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

#[derive(Default)]
struct Summary {
    text: String,
}

impl Summary {
    fn put(&mut self, key: impl AsRef<str>, value: impl std::fmt::Display) {
        self.text.push_str(&format!("{}={value}\n", key.as_ref()));
    }

    fn float(&mut self, key: impl AsRef<str>, value: f64) {
        self.put(key, format!("{value:?}"));
    }

    fn opt(&mut self, key: impl AsRef<str>, value: Option<f64>) {
        match value {
            Some(v) => self.float(key, v),
            None => self.put(key, "undefined"),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn check_pitch(pitch: Option<f64>) -> Result<Option<f64>> {
    match pitch {
        Some(p) if !(p.is_finite() && p > 0.0) => {
            Err(Error::invalid(format!("--pitch-mm {p} must be positive")))
        }
        p => Ok(p),
    }
}

enum Kind {
    Hdf5,
    Nrrd,
}

fn kind_of(path: &Path) -> Result<Kind> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("h5" | "hdf5" | "hdf") => Ok(Kind::Hdf5),
        Some("nrrd") => Ok(Kind::Nrrd),
        _ => Err(Error::invalid(format!(
            "{}: expected a .h5 or .nrrd file",
            path.display()
        ))),
    }
}

fn shape_str(shape: [usize; 3]) -> String {
    format!("{},{},{}", shape[0], shape[1], shape[2])
}

/// Labels from an NRRD grid or from the `labels` (else argmax of `masks`) of an HDF5 bundle.
fn load_labels(path: &Path, pitch: Option<f64>) -> Result<LabelVolume> {
    let pitch = check_pitch(pitch)?;
    match kind_of(path)? {
        Kind::Nrrd => {
            let (grid, geometry) = io::read_nrrd(path)?;
            let spacing = pitch.map(|p| [p; 3]).unwrap_or(geometry.spacing());
            LabelVolume::from_array(grid.to_labels()?, spacing)
        }
        Kind::Hdf5 => {
            let bundle = io::read_h5_bundle(path, [pitch.unwrap_or(CT_VOXEL_PITCH_MM); 3])?;
            if let Some(l) = bundle.labels {
                return Ok(l);
            }
            let masks = bundle.masks.ok_or_else(|| {
                Error::invalid(format!(
                    "{}: no `labels` or `masks` dataset",
                    path.display()
                ))
            })?;
            let field = ProbabilityField::new(
                *masks.geometry(),
                masks.channels().mapv(f64::from),
                FieldKind::Probabilities,
            )?;
            argmax_decode(&field)
        }
    }
}

fn check_class(labels: &LabelVolume, class: u16) -> Result<()> {
    if class as usize >= labels.num_classes() {
        return Err(Error::invalid(format!(
            "class {class} is out of range for {} classes",
            labels.num_classes()
        )));
    }
    Ok(())
}

fn write_csv_text(path: &Path, text: &str) -> Result<()> {
    io::write_atomically(path, |tmp| {
        std::fs::write(tmp, text).map_err(|e| Error::io(path, e))
    })
}

fn convert(a: &ConvertArgs, sum: &mut Summary) -> Result<()> {
    let pitch = check_pitch(a.pitch_mm)?;
    let out_kind = kind_of(&a.out)?;
    match kind_of(&a.input)? {
        Kind::Nrrd => {
            let (grid, geometry) = io::read_nrrd(&a.input)?;
            let geometry = match pitch {
                Some(p) => geometry.with_spacing([p; 3])?,
                None => geometry,
            };
            sum.put("dataset", "labels");
            sum.put("shape", shape_str(geometry.shape()));
            match out_kind {
                Kind::Nrrd => io::write_nrrd(&grid, &geometry, &a.out, Encoding::Gzip)?,
                Kind::Hdf5 => {
                    let labels = LabelVolume::from_array(grid.to_labels()?, geometry.spacing())?;
                    io::write_h5_bundle(&DatasetBundle::from_labels(labels), &a.out)?;
                }
            }
        }
        Kind::Hdf5 => {
            let bundle = io::read_h5_bundle(&a.input, [pitch.unwrap_or(CT_VOXEL_PITCH_MM); 3])?;
            sum.put("shape", shape_str(bundle.geometry.shape()));
            match out_kind {
                Kind::Hdf5 => {
                    sum.put("dataset", "all");
                    io::write_h5_bundle(&bundle, &a.out)?;
                }
                Kind::Nrrd => {
                    let (name, grid) = if let Some(l) = &bundle.labels {
                        ("labels", Grid::U16(l.labels().clone()))
                    } else if let Some(v) = &bundle.volume {
                        ("volume", Grid::U16(v.clone()))
                    } else if let Some(m) = &bundle.masks {
                        let field = ProbabilityField::new(
                            *m.geometry(),
                            m.channels().mapv(f64::from),
                            FieldKind::Probabilities,
                        )?;
                        ("masks", Grid::U16(argmax_decode(&field)?.into_labels()))
                    } else if let Some(i) = &bundle.instances {
                        ("instances", Grid::U16(i.clone()))
                    } else {
                        unreachable!("bundles always hold a member")
                    };
                    sum.put("dataset", name);
                    io::write_nrrd(&grid, &bundle.geometry, &a.out, Encoding::Gzip)?;
                }
            }
        }
    }
    sum.put("out", a.out.display());
    Ok(())
}

fn s2(a: &S2Args, sum: &mut Summary) -> Result<()> {
    let labels = load_labels(&a.input, a.pitch_mm)?;
    check_class(&labels, a.class)?;
    let boundary = a.boundary.boundary();
    let field = class_s2(&labels, a.class, boundary)?;
    let spectrum = axis_spectrum(&field, GridAxis::Z);
    if let Some(out) = &a.out {
        kind_of(out)?;
        io::write_nrrd(
            &Grid::F64(field.values().clone()),
            field.geometry(),
            out,
            Encoding::Gzip,
        )?;
    }
    if let Some(csv) = &a.spectrum_csv {
        io::write_spectrum_csv(&spectrum, csv)?;
    }
    sum.put("class", a.class);
    sum.put(
        "boundary",
        if a.boundary.aperiodic {
            "aperiodic"
        } else {
            "periodic"
        },
    );
    sum.put("shape", shape_str(field.geometry().shape()));
    sum.float("s2_zero_lag", field.zero_lag());
    sum.float(
        "spectrum_min",
        spectrum
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
    );
    sum.float(
        "spectrum_max",
        spectrum
            .values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(())
}

fn nesting(a: &NestingArgs, sum: &mut Summary) -> Result<()> {
    let spec = a.stack.spec()?;
    if a.interp_factor == 0 {
        return Err(Error::invalid("--interp-factor must be positive"));
    }
    if let Some(out) = &a.out {
        if out.extension().and_then(|e| e.to_str()) != Some("csv") {
            return Err(Error::invalid(format!(
                "{}: nesting reports are written as .csv",
                out.display()
            )));
        }
    }
    let labels = load_labels(&a.input, a.pitch_mm)?;
    check_class(&labels, a.class)?;
    let field = class_s2(&labels, a.class, a.boundary.boundary())?;
    let report =
        nesting_from_spectrum(&axis_spectrum(&field, GridAxis::Z), a.interp_factor, &spec)?;
    if let Some(out) = &a.out {
        write_csv_text(
            out,
            &format!("{}\n{}\n", report.csv_header(), report.csv_row()),
        )?;
    }
    sum.put("class", a.class);
    sum.text.push_str(&report.to_kv_block());
    Ok(())
}

fn metrics(a: &MetricsArgs, sum: &mut Summary) -> Result<()> {
    let pitch = check_pitch(a.pitch_mm)?;
    let truth = load_labels(&a.truth, pitch)?;
    let scores = match kind_of(&a.pred)? {
        Kind::Hdf5 if io::has_scores(&a.pred)? => {
            Some(io::read_score_field(&a.pred, truth.geometry().spacing())?)
        }
        _ => None,
    };
    let pred = match &scores {
        Some(f) => argmax_decode(f)?,
        None => load_labels(&a.pred, pitch)?,
    };
    let c = pred.num_classes().max(truth.num_classes());
    if let Some(&bad) = a.classes.iter().find(|&&k| k >= c) {
        return Err(Error::invalid(format!(
            "class {bad} is out of range for {c} classes"
        )));
    }
    let pred = LabelVolume::new(*pred.geometry(), pred.labels().clone(), c)?;
    let truth = LabelVolume::new(*truth.geometry(), truth.labels().clone(), c)?;
    let cm = confusion(&pred, &truth)?;
    let report = iou_f1(&cm, &a.classes)?;

    let losses = match &scores {
        Some(field) => {
            let cfg = a.loss.config();
            cfg.validate(field.num_classes())?;
            let onehot = one_hot_encode(&LabelVolume::new(
                *truth.geometry(),
                truth.labels().clone(),
                field.num_classes(),
            )?);
            Some(match field.kind() {
                FieldKind::Logits => {
                    let prob = softmax_field(field)?;
                    (
                        Some(cross_entropy(field, &onehot, &cfg)?),
                        dice_loss(&prob, &onehot, &cfg)?,
                        Some(composite_loss(field, &onehot, &cfg)?),
                    )
                }
                FieldKind::Probabilities => (None, dice_loss(field, &onehot, &cfg)?, None),
            })
        }
        None => None,
    };

    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    if let Some(out) = &a.out {
        let mut header = vec!["stage".to_string(), "dataset".to_string()];
        let mut row = vec![stem(&a.pred), stem(&a.truth)];
        for s in &report.per_class {
            header.push(format!("iou_{}", s.class));
            row.push(fmt_opt(s.iou));
        }
        for s in &report.per_class {
            header.push(format!("f1_{}", s.class));
            row.push(fmt_opt(s.f1));
        }
        header.extend(["mean_iou".into(), "mean_f1".into()]);
        row.extend([fmt_opt(report.mean_iou), fmt_opt(report.mean_f1)]);
        write_csv_text(out, &format!("{}\n{}\n", header.join(","), row.join(",")))?;
    }

    sum.put("stage", stem(&a.pred));
    sum.put("dataset", stem(&a.truth));
    for s in &report.per_class {
        sum.opt(format!("iou_{}", s.class), s.iou);
        sum.opt(format!("f1_{}", s.class), s.f1);
    }
    sum.opt("meanIoU", report.mean_iou);
    sum.opt("meanF1", report.mean_f1);
    if let Some((ce, dice, total)) = losses {
        sum.opt("cross_entropy", ce);
        sum.float("dice_loss", dice);
        sum.opt("composite_loss", total);
    }
    Ok(())
}

fn patch_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| matches!(kind_of(f), Ok(Kind::Hdf5)))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::invalid("no patch files found"));
    }
    Ok(files)
}

fn stitch_cmd(a: &StitchArgs, sum: &mut Summary) -> Result<()> {
    let pitch = check_pitch(a.pitch_mm)?.unwrap_or(CT_VOXEL_PITCH_MM);
    kind_of(&a.out)?;
    let files = patch_files(&a.input)?;
    let mut patches = Vec::with_capacity(files.len());
    let mut kind = None;
    for f in &files {
        let (p, k) = io::read_score_patch(f)?;
        if *kind.get_or_insert(k) != k {
            return Err(Error::consistency(format!(
                "{} mixes logits and probabilities",
                f.display()
            )));
        }
        patches.push(p);
    }
    let kind = kind.expect("at least one patch");
    let sh = patches[0].scores.shape();
    let patch_shape = [sh[1], sh[2], sh[3]];
    let mut full = [0usize; 3];
    for p in &patches {
        for d in 0..3 {
            full[d] = full[d].max(p.offset[d] + patch_shape[d]);
        }
    }
    if let (Some(edge), Some(stride)) = (a.patch, a.stride) {
        if patch_shape != [edge; 3] {
            return Err(Error::consistency(format!(
                "patch files have shape {patch_shape:?}, expected {edge}^3"
            )));
        }
        let mut expected = patch_grid(full, patch_shape, [stride; 3])?.offsets;
        let mut got: Vec<_> = patches.iter().map(|p| p.offset).collect();
        expected.sort_unstable();
        got.sort_unstable();
        if expected != got {
            return Err(Error::consistency(format!(
                "{} patch offsets do not match the {}-patch grid for stride {stride}",
                got.len(),
                expected.len()
            )));
        }
    }
    if full.iter().any(|&n| n <= 2 * a.pad) {
        return Err(Error::invalid(format!(
            "--pad {} leaves nothing of a {full:?} volume",
            a.pad
        )));
    }
    let window = gaussian_window(patch_shape, a.sigma_scale)?;
    let stitched = stitch(&patches, &window, full, kind, [pitch; 3])?;
    let field = if a.pad > 0 {
        let c = stitched.num_classes();
        let cropped: Vec<_> = (0..c)
            .map(|k| crop_center(stitched.channels().slice(s![k, .., .., ..]), a.pad))
            .collect::<Result<_>>()?;
        let (cz, cy, cx) = cropped[0].dim();
        let channels = Array4::from_shape_fn((c, cz, cy, cx), |(k, z, y, x)| cropped[k][[z, y, x]]);
        ProbabilityField::new(GridGeometry::new([cz, cy, cx], [pitch; 3])?, channels, kind)?
    } else {
        stitched
    };
    let labels = argmax_decode(&field)?;
    io::write_score_field(&field, &labels, &a.out)?;
    sum.put("patches", patches.len());
    sum.put(
        "kind",
        if kind == FieldKind::Logits {
            "logits"
        } else {
            "probabilities"
        },
    );
    sum.put("stitched_shape", shape_str(full));
    sum.put("shape", shape_str(field.geometry().shape()));
    sum.put("classes", field.num_classes());
    sum.put("out", a.out.display());
    Ok(())
}

fn synth(a: &SynthArgs, sum: &mut Summary) -> Result<()> {
    let out_kind = kind_of(&a.out)?;
    let mut spec = WeaveSpec {
        layers: a.layers,
        voxel_pitch: a.pitch_mm,
        interpenetration: a.interpenetration_mm,
        ..WeaveSpec::default()
    };
    spec.layer_offsets = vec![(0.0, 0.0); a.layers];
    if let Some(seed) = a.seed {
        spec = spec.with_random_offsets(seed);
    }
    spec.validate()?;
    let shape = match &a.shape {
        Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
        Some(v) => {
            return Err(Error::invalid(format!(
                "--shape needs three values, got {}",
                v.len()
            )))
        }
        None => {
            let cells = |mm: f64| (mm / spec.voxel_pitch - 1e-9).ceil() as usize;
            let inplane = cells(spec.period());
            [cells(spec.stack_extent()), inplane, inplane]
        }
    };
    let labels = generate_plain_weave(&spec, shape)?;
    let fractions = volume_fractions(&one_hot_encode(&labels));
    match out_kind {
        Kind::Hdf5 => io::write_h5_bundle(&DatasetBundle::from_labels(labels.clone()), &a.out)?,
        Kind::Nrrd => io::write_nrrd(
            &Grid::U16(labels.labels().clone()),
            labels.geometry(),
            &a.out,
            Encoding::Gzip,
        )?,
    }
    sum.put("shape", shape_str(shape));
    sum.put("layers", spec.layers);
    sum.float("layer_pitch_mm", spec.layer_pitch());
    sum.float("stack_extent_mm", spec.stack_extent());
    sum.float("nesting_ground_truth", nesting_ground_truth(&spec));
    for (c, phi) in fractions.iter().enumerate() {
        sum.float(format!("phi_{c}"), *phi);
    }
    if let Some(seed) = a.seed {
        sum.put("seed", seed);
    }
    sum.put("out", a.out.display());
    Ok(())
}

fn analyze(a: &AnalyzeArgs, sum: &mut Summary) -> Result<()> {
    let spec = if a.stack.given() {
        Some(a.stack.spec()?)
    } else {
        None
    };
    if a.interp_factor == 0 {
        return Err(Error::invalid("--interp-factor must be positive"));
    }
    if a.spectrum_csv.is_some() && a.classes.len() != 1 {
        return Err(Error::invalid("--spectrum-csv needs exactly one class"));
    }
    let labels = load_labels(&a.input, a.pitch_mm)?;
    for &c in &a.classes {
        check_class(&labels, c)?;
    }
    let fractions = volume_fractions(&one_hot_encode(&labels));
    let set = crate::descriptors::describe(&labels, &a.classes, a.boundary.boundary())?;

    let mut rows: Vec<(u16, f64, Option<NestingReport>)> = Vec::new();
    let mut spectra = Vec::new();
    for &c in &a.classes {
        let field = set.correlations[c as usize]
            .as_ref()
            .expect("requested class was computed");
        let spectrum = axis_spectrum(field, GridAxis::Z);
        let report = match &spec {
            Some(spec) => nesting_from_spectrum(&spectrum, a.interp_factor, spec).ok(),
            None => None,
        };
        rows.push((c, field.zero_lag(), report));
        spectra.push(spectrum);
    }
    if let Some(out) = &a.out {
        let mut text = String::from(
            "class,volume_fraction,s2_zero_lag,layer_thickness_mm,layer_sigma_mm,nesting_factor,nesting_sigma\n",
        );
        for (c, zero, report) in &rows {
            let r = report.as_ref();
            text.push_str(&format!(
                "{c},{:?},{zero:?},{},{},{},{}\n",
                fractions[*c as usize],
                fmt_opt(r.map(|r| r.layer_thickness_mm)),
                fmt_opt(r.map(|r| r.layer_sigma_mm)),
                fmt_opt(r.map(|r| r.nesting_factor)),
                fmt_opt(r.map(|r| r.nesting_sigma)),
            ));
        }
        write_csv_text(out, &text)?;
    }
    if let Some(csv) = &a.spectrum_csv {
        io::write_spectrum_csv(&spectra[0], csv)?;
    }

    sum.put("shape", shape_str(labels.geometry().shape()));
    for (c, phi) in fractions.iter().enumerate() {
        sum.float(format!("phi_{c}"), *phi);
    }
    for (c, zero, report) in &rows {
        sum.float(format!("s2_zero_lag_{c}"), *zero);
        if spec.is_some() {
            match report {
                Some(r) => {
                    sum.float(format!("layer_thickness_mm_{c}"), r.layer_thickness_mm);
                    sum.float(format!("layer_sigma_mm_{c}"), r.layer_sigma_mm);
                    sum.float(format!("nesting_factor_{c}"), r.nesting_factor);
                    sum.float(format!("nesting_sigma_{c}"), r.nesting_sigma);
                }
                None => sum.put(format!("nesting_factor_{c}"), "undefined"),
            }
        }
    }
    Ok(())
}
