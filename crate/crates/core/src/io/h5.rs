use std::path::Path;

use hdf5::File;
use ndarray::{Array3, Array4, Ix3, Ix4};

use super::write_atomically;
use crate::error::{Error, Result};
use crate::patching::ScorePatch;
use crate::volume::{FieldKind, GridGeometry, LabelVolume, OneHotMask, ProbabilityField};

const VOLUME: &str = "volume";
const LABELS: &str = "labels";
const MASKS: &str = "masks";
const INSTANCES: &str = "instances";
const SCORES: &str = "scores";

/// Contents of one dataset container. Every present member shares the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub geometry: GridGeometry,
    pub volume: Option<Array3<u16>>,
    pub labels: Option<LabelVolume>,
    pub masks: Option<OneHotMask>,
    pub instances: Option<Array3<u16>>,
}

impl DatasetBundle {
    pub fn from_labels(labels: LabelVolume) -> Self {
        Self {
            geometry: *labels.geometry(),
            volume: None,
            labels: Some(labels),
            masks: None,
            instances: None,
        }
    }

    fn members(&self) -> Vec<(&'static str, [usize; 3])> {
        let dim3 = |a: &Array3<u16>| {
            let (z, y, x) = a.dim();
            [z, y, x]
        };
        let mut out = Vec::new();
        if let Some(v) = &self.volume {
            out.push((VOLUME, dim3(v)));
        }
        if let Some(l) = &self.labels {
            out.push((LABELS, l.geometry().shape()));
        }
        if let Some(m) = &self.masks {
            out.push((MASKS, m.geometry().shape()));
        }
        if let Some(i) = &self.instances {
            out.push((INSTANCES, dim3(i)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let members = self.members();
        if members.is_empty() {
            return Err(Error::Empty("bundle has no datasets".into()));
        }
        for (name, shape) in &members {
            if *shape != self.geometry.shape() {
                return Err(Error::consistency(format!(
                    "{name} has shape {shape:?} (z, y, x) but the bundle grid is {:?}",
                    self.geometry.shape()
                )));
            }
        }
        if let (Some(l), Some(m)) = (&self.labels, &self.masks) {
            if l.num_classes() != m.num_classes() {
                return Err(Error::consistency(format!(
                    "labels declare {} classes, masks have {} channels",
                    l.num_classes(),
                    m.num_classes()
                )));
            }
        }
        Ok(())
    }
}

fn to_disk3<T: Clone>(a: &Array3<T>) -> Array3<T> {
    a.view().reversed_axes().as_standard_layout().into_owned()
}

fn from_disk3<T: Clone>(a: Array3<T>) -> Array3<T> {
    a.reversed_axes().as_standard_layout().into_owned()
}

fn to_disk4<T: Clone>(a: &Array4<T>) -> Array4<T> {
    a.view()
        .permuted_axes([0, 3, 2, 1])
        .as_standard_layout()
        .into_owned()
}

fn from_disk4<T: Clone>(a: Array4<T>) -> Array4<T> {
    a.permuted_axes([0, 3, 2, 1])
        .as_standard_layout()
        .into_owned()
}

fn create_file(tmp: &Path, path: &Path) -> Result<File> {
    hdf5::silence_errors(true);
    File::with_options()
        .with_fcpl(|p| p.obj_track_times(false))
        .create(tmp)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

fn open(path: &Path) -> Result<File> {
    // The library's automatic error printing is per thread.
    hdf5::silence_errors(true);
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ));
    }
    File::open(path).map_err(|e| Error::format(path, format!("not a readable HDF5 container: {e}")))
}

fn read_u16_grid(file: &File, path: &Path, name: &str) -> Result<Option<Array3<u16>>> {
    if !file.link_exists(name) {
        return Ok(None);
    }
    let ds = file.dataset(name)?;
    if ds.ndim() != 3 {
        return Err(Error::format(
            path,
            format!("dataset `{name}` has {} dimensions, expected 3", ds.ndim()),
        ));
    }
    let data = ds
        .read::<u16, Ix3>()
        .map_err(|e| Error::format(path, format!("dataset `{name}` is not integer data: {e}")))?;
    Ok(Some(from_disk3(data)))
}

fn read_masks(file: &File, path: &Path) -> Result<Option<Array4<u8>>> {
    if !file.link_exists(MASKS) {
        return Ok(None);
    }
    let ds = file.dataset(MASKS)?;
    if ds.ndim() != 4 {
        return Err(Error::format(
            path,
            format!("dataset `masks` has {} dimensions, expected 4", ds.ndim()),
        ));
    }
    let data = match ds.read::<u8, Ix4>() {
        Ok(d) => d,
        Err(_) => ds
            .read::<bool, Ix4>()
            .map_err(|e| Error::format(path, format!("dataset `masks` is not boolean data: {e}")))?
            .mapv(u8::from),
    };
    Ok(Some(from_disk4(data)))
}

/// Load whichever of `volume`, `labels`, `masks` and `instances` exist.
/// Containers carry no spacing, so the caller supplies it.
pub fn read_h5_bundle(path: &Path, spacing: [f64; 3]) -> Result<DatasetBundle> {
    let file = open(path)?;
    let volume = read_u16_grid(&file, path, VOLUME)?;
    let labels = read_u16_grid(&file, path, LABELS)?;
    let instances = read_u16_grid(&file, path, INSTANCES)?;
    let masks = read_masks(&file, path)?;

    let mut shapes: Vec<(&str, [usize; 3])> = Vec::new();
    let dim3 = |a: &Array3<u16>| {
        let (z, y, x) = a.dim();
        [z, y, x]
    };
    if let Some(v) = &volume {
        shapes.push((VOLUME, dim3(v)));
    }
    if let Some(l) = &labels {
        shapes.push((LABELS, dim3(l)));
    }
    if let Some(m) = &masks {
        let (_, z, y, x) = m.dim();
        shapes.push((MASKS, [z, y, x]));
    }
    if let Some(i) = &instances {
        shapes.push((INSTANCES, dim3(i)));
    }
    let (first_name, shape) = *shapes.first().ok_or_else(|| {
        Error::format(
            path,
            "container holds none of volume, labels, masks, instances",
        )
    })?;
    for (name, other) in &shapes[1..] {
        if *other != shape {
            let rev = |s: [usize; 3]| [s[2], s[1], s[0]];
            return Err(Error::consistency(format!(
                "{first_name} has shape {:?} but {name} has shape {:?} (x, y, z)",
                rev(shape),
                rev(*other)
            )));
        }
    }
    let geometry = GridGeometry::new(shape, spacing)?;
    let masks = masks
        .map(|m| OneHotMask::new(geometry, m))
        .transpose()
        .map_err(|e| Error::format(path, format!("dataset `masks`: {e}")))?;
    let labels = labels
        .map(|l| match &masks {
            Some(m) => LabelVolume::new(geometry, l, m.num_classes()),
            None => LabelVolume::from_array(l, spacing),
        })
        .transpose()?;
    Ok(DatasetBundle {
        geometry,
        volume,
        labels,
        masks,
        instances,
    })
}

/// Write the present members with their canonical names, dtypes and axis order.
pub fn write_h5_bundle(bundle: &DatasetBundle, path: &Path) -> Result<()> {
    bundle.validate()?;
    write_atomically(path, |tmp| {
        let file = create_file(tmp, path)?;
        if let Some(v) = &bundle.volume {
            file.new_dataset_builder()
                .with_data(&to_disk3(v))
                .create(VOLUME)?;
        }
        if let Some(l) = &bundle.labels {
            file.new_dataset_builder()
                .with_data(&to_disk3(l.labels()))
                .create(LABELS)?;
        }
        if let Some(m) = &bundle.masks {
            file.new_dataset_builder()
                .with_data(&to_disk4(m.channels()))
                .create(MASKS)?;
        }
        if let Some(i) = &bundle.instances {
            file.new_dataset_builder()
                .with_data(&to_disk3(i))
                .create(INSTANCES)?;
        }
        file.close()?;
        Ok(())
    })
}

/// Per-patch scores: dataset `scores` `[C, x, y, z]` with attributes
/// `offset` (`[x, y, z]`, u64) and `probabilities` (u8, 1 if the scores are
/// probabilities, 0 for logits).
pub fn write_score_patch(patch: &ScorePatch, kind: FieldKind, path: &Path) -> Result<()> {
    write_atomically(path, |tmp| {
        let file = create_file(tmp, path)?;
        let ds = file
            .new_dataset_builder()
            .with_data(&to_disk4(&patch.scores))
            .create(SCORES)?;
        let [z, y, x] = patch.offset;
        let offset = [x as u64, y as u64, z as u64];
        ds.new_attr::<u64>()
            .shape(3)
            .create("offset")?
            .write(&offset)?;
        ds.new_attr::<u8>()
            .create("probabilities")?
            .write_scalar(&u8::from(kind == FieldKind::Probabilities))?;
        file.close()?;
        Ok(())
    })
}

pub fn read_score_patch(path: &Path) -> Result<(ScorePatch, FieldKind)> {
    let file = open(path)?;
    if !file.link_exists(SCORES) {
        return Err(Error::format(path, "missing dataset `scores`"));
    }
    let ds = file.dataset(SCORES)?;
    let scores = ds
        .read::<f64, Ix4>()
        .map_err(|e| Error::format(path, format!("dataset `scores`: {e}")))?;
    let offset = ds
        .attr("offset")
        .and_then(|a| a.read_raw::<u64>())
        .map_err(|e| Error::format(path, format!("attribute `offset`: {e}")))?;
    if offset.len() != 3 {
        return Err(Error::format(
            path,
            "attribute `offset` must hold three values",
        ));
    }
    let kind = match ds.attr("probabilities").and_then(|a| a.read_scalar::<u8>()) {
        Ok(1) => FieldKind::Probabilities,
        Ok(0) | Err(_) => FieldKind::Logits,
        Ok(v) => {
            return Err(Error::format(
                path,
                format!("attribute `probabilities` is {v}"),
            ))
        }
    };
    Ok((
        ScorePatch {
            offset: [offset[2] as usize, offset[1] as usize, offset[0] as usize],
            scores: from_disk4(scores),
        },
        kind,
    ))
}

/// Whether the container holds a `scores` dataset.
pub fn has_scores(path: &Path) -> Result<bool> {
    Ok(open(path)?.link_exists(SCORES))
}

/// Read a stitched `scores` field written by [`write_score_field`].
pub fn read_score_field(path: &Path, spacing: [f64; 3]) -> Result<ProbabilityField> {
    let file = open(path)?;
    if !file.link_exists(SCORES) {
        return Err(Error::format(path, "missing dataset `scores`"));
    }
    let ds = file.dataset(SCORES)?;
    let scores = ds
        .read::<f64, Ix4>()
        .map_err(|e| Error::format(path, format!("dataset `scores`: {e}")))?;
    let kind = match ds.attr("probabilities").and_then(|a| a.read_scalar::<u8>()) {
        Ok(1) => FieldKind::Probabilities,
        _ => FieldKind::Logits,
    };
    let scores = from_disk4(scores);
    let (_, z, y, x) = scores.dim();
    ProbabilityField::new(GridGeometry::new([z, y, x], spacing)?, scores, kind)
        .map_err(|e| Error::format(path, format!("dataset `scores`: {e}")))
}

/// Stitched output: `scores` `[C, x, y, z]` (f64) and the argmax `labels`.
pub fn write_score_field(
    field: &ProbabilityField,
    labels: &LabelVolume,
    path: &Path,
) -> Result<()> {
    write_atomically(path, |tmp| {
        let file = create_file(tmp, path)?;
        let ds = file
            .new_dataset_builder()
            .with_data(&to_disk4(field.channels()))
            .create(SCORES)?;
        ds.new_attr::<u8>()
            .create("probabilities")?
            .write_scalar(&u8::from(field.kind() == FieldKind::Probabilities))?;
        file.new_dataset_builder()
            .with_data(&to_disk3(labels.labels()))
            .create(LABELS)?;
        file.close()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::one_hot_encode;

    #[test]
    fn axis_reversal_is_an_involution() {
        let a = Array3::from_shape_fn((2, 3, 4), |(z, y, x)| (z * 100 + y * 10 + x) as u16);
        let disk = to_disk3(&a);
        assert_eq!(disk.dim(), (4, 3, 2));
        assert_eq!(disk[[3, 1, 0]], a[[0, 1, 3]]);
        assert_eq!(from_disk3(disk), a);
        let m = Array4::from_shape_fn((3, 2, 3, 4), |(c, z, y, x)| (c + z + y + x) as u8);
        assert_eq!(from_disk4(to_disk4(&m)), m);
    }

    #[test]
    fn labels_only_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.h5");
        let labels = LabelVolume::from_array(
            Array3::from_shape_fn((4, 4, 4), |(z, y, x)| ((z + y * x) % 3) as u16),
            [1.0; 3],
        )
        .unwrap();
        write_h5_bundle(&DatasetBundle::from_labels(labels.clone()), &path).unwrap();
        let file = File::open(&path).unwrap();
        assert_eq!(file.member_names().unwrap(), vec!["labels".to_string()]);
        drop(file);
        let back = read_h5_bundle(&path, [1.0; 3]).unwrap();
        assert_eq!(back.labels, Some(labels));
        assert!(back.volume.is_none() && back.masks.is_none() && back.instances.is_none());
    }

    #[test]
    fn empty_bundle_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.h5");
        let bundle = DatasetBundle {
            geometry: GridGeometry::isotropic([1, 1, 1], 1.0).unwrap(),
            volume: None,
            labels: None,
            masks: None,
            instances: None,
        };
        assert!(matches!(
            write_h5_bundle(&bundle, &path),
            Err(Error::Empty(_))
        ));
        assert!(!path.exists());
    }

    #[test]
    fn mismatched_members_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.h5");
        {
            let file = File::create(&path).unwrap();
            file.new_dataset_builder()
                .with_data(&Array3::<u16>::zeros((4, 4, 4)))
                .create("labels")
                .unwrap();
            file.new_dataset_builder()
                .with_data(&Array4::<u8>::zeros((3, 4, 4, 5)))
                .create("masks")
                .unwrap();
        }
        let err = read_h5_bundle(&path, [1.0; 3]).unwrap_err().to_string();
        assert!(
            err.contains("[4, 4, 4]") && err.contains("[4, 4, 5]"),
            "{err}"
        );
    }

    #[test]
    fn unknown_datasets_are_ignored_and_masks_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.h5");
        let labels = LabelVolume::from_array(
            Array3::from_shape_fn((2, 3, 4), |(z, y, x)| ((z + y + x) % 3) as u16),
            [1.0; 3],
        )
        .unwrap();
        let mut bundle = DatasetBundle::from_labels(labels.clone());
        bundle.masks = Some(one_hot_encode(&labels));
        write_h5_bundle(&bundle, &path).unwrap();
        {
            let file = File::open_rw(&path).unwrap();
            file.new_dataset_builder()
                .with_data(&ndarray::arr1(&[1.0f32, 2.0]))
                .create("extra")
                .unwrap();
        }
        assert_eq!(read_h5_bundle(&path, [1.0; 3]).unwrap(), bundle);
    }

    #[test]
    fn not_hdf5() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.h5");
        std::fs::write(&path, b"definitely not hdf5").unwrap();
        assert!(matches!(
            read_h5_bundle(&path, [1.0; 3]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn score_patch_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.h5");
        let patch = ScorePatch {
            offset: [5, 6, 7],
            scores: Array4::from_shape_fn((3, 2, 3, 4), |(c, z, y, x)| {
                (c * 1000 + z * 100 + y * 10 + x) as f64 / 7.0
            }),
        };
        write_score_patch(&patch, FieldKind::Logits, &path).unwrap();
        let (back, kind) = read_score_patch(&path).unwrap();
        assert_eq!(back, patch);
        assert_eq!(kind, FieldKind::Logits);
    }
}
