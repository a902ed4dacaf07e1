//! CIFAR binary reader, channel-mean normalization, pad-crop-flip
//! augmentation, class subsets and a synthetic stand-in dataset.
//!
//! Images are kept in raw pixel units (0..=255) as `(N, 3, H, W)`;
//! normalization is applied per batch after augmentation so that padding
//! fills with raw pixel value 0.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{param_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const CIFAR_SIDE: usize = 32;
const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
/// Divisor applied after mean subtraction.
pub const PIXEL_SCALE: f64 = 128.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarKind {
    /// 1 label byte + 3072 pixel bytes.
    Cifar10,
    /// Coarse label byte, fine label byte, 3072 pixel bytes.
    Cifar100,
}

impl CifarKind {
    pub fn record_len(self) -> usize {
        match self {
            CifarKind::Cifar10 => 1 + CIFAR_PIXELS,
            CifarKind::Cifar100 => 2 + CIFAR_PIXELS,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            CifarKind::Cifar10 => 10,
            CifarKind::Cifar100 => 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Raw pixels, `(N, C, H, W)`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// CIFAR-100 coarse labels, kept so records round-trip.
    pub coarse_labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.shape().n != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.shape().n,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {bad} >= {num_classes} classes")));
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
            coarse_labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s.c, s.h, s.w)
    }

    /// The images at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let s = self.images.shape();
        let mut data = Vec::with_capacity(indices.len() * s.sample_len());
        for &i in indices {
            if i >= s.n {
                return Err(Error::Data(format!("index {i} out of {} images", s.n)));
            }
            data.extend_from_slice(self.images.sample(i));
        }
        let images = Tensor::from_vec(Shape::new(indices.len(), s.c, s.h, s.w), data)?;
        let mut out = Dataset::new(images, indices.iter().map(|&i| self.labels[i]).collect(), self.num_classes)?;
        out.coarse_labels = self
            .coarse_labels
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i]).collect());
        Ok(out)
    }

    /// Concatenates datasets with the same image shape and class count.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let (c, h, w) = first.image_shape();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut coarse = first.coarse_labels.as_ref().map(|_| Vec::new());
        for p in parts {
            if p.image_shape() != (c, h, w) || p.num_classes != first.num_classes {
                return Err(Error::Data("datasets differ in image shape or classes".into()));
            }
            data.extend_from_slice(p.images.data());
            labels.extend_from_slice(&p.labels);
            if let (Some(all), Some(mine)) = (coarse.as_mut(), p.coarse_labels.as_ref()) {
                all.extend_from_slice(mine);
            }
        }
        let images = Tensor::from_vec(Shape::new(labels.len(), c, h, w), data)?;
        let mut out = Dataset::new(images, labels, first.num_classes)?;
        out.coarse_labels = coarse;
        Ok(out)
    }
}

/// Parses concatenated CIFAR records.
pub fn parse_cifar_bytes(bytes: &[u8], kind: CifarKind) -> Result<Dataset> {
    let rec = kind.record_len();
    if !bytes.len().is_multiple_of(rec) {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {rec}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / rec;
    let mut data = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    let mut coarse = Vec::new();
    for r in bytes.chunks_exact(rec) {
        let (head, pixels) = r.split_at(rec - CIFAR_PIXELS);
        match kind {
            CifarKind::Cifar10 => labels.push(head[0] as usize),
            CifarKind::Cifar100 => {
                coarse.push(head[0] as usize);
                labels.push(head[1] as usize);
            }
        }
        data.extend(pixels.iter().map(|&p| f64::from(p)));
    }
    let images = Tensor::from_vec(Shape::new(n, 3, CIFAR_SIDE, CIFAR_SIDE), data)?;
    let mut ds = Dataset::new(images, labels, kind.num_classes())?;
    if kind == CifarKind::Cifar100 {
        ds.coarse_labels = Some(coarse);
    }
    Ok(ds)
}

/// Serializes a 3x32x32 dataset back to CIFAR records. Pixels are rounded
/// and must lie in 0..=255.
pub fn write_cifar_bytes(ds: &Dataset, kind: CifarKind) -> Result<Vec<u8>> {
    if ds.image_shape() != (3, CIFAR_SIDE, CIFAR_SIDE) {
        return Err(Error::Data(format!("CIFAR records hold 3x32x32 images, got {:?}", ds.image_shape())));
    }
    let byte = |v: usize| -> Result<u8> {
        u8::try_from(v).map_err(|_| Error::Data(format!("label {v} does not fit a byte")))
    };
    let mut out = Vec::with_capacity(ds.len() * kind.record_len());
    for i in 0..ds.len() {
        if kind == CifarKind::Cifar100 {
            let coarse = ds.coarse_labels.as_ref().map_or(0, |c| c[i]);
            out.push(byte(coarse)?);
        }
        out.push(byte(ds.labels[i])?);
        for &p in ds.images.sample(i) {
            let r = p.round();
            if !(0.0..=255.0).contains(&r) {
                return Err(Error::Data(format!("pixel {p} outside 0..=255")));
            }
            out.push(r as u8);
        }
    }
    Ok(out)
}

pub fn read_cifar_binary(path: &Path, kind: CifarKind) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_bytes(&bytes, kind).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// File names of the train and test splits of the binary distribution.
fn split_files(kind: CifarKind) -> (Vec<&'static str>, &'static str, &'static str) {
    match kind {
        CifarKind::Cifar10 => (
            vec![
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            "test_batch.bin",
            "cifar-10-batches-bin",
        ),
        CifarKind::Cifar100 => (vec!["train.bin"], "test.bin", "cifar-100-binary"),
    }
}

/// Finds the directory holding the split files: `dir` itself or the
/// archive's top-level folder inside it.
pub fn locate_cifar(dir: &Path, kind: CifarKind) -> Option<PathBuf> {
    let (_, test, sub) = split_files(kind);
    [dir.to_path_buf(), dir.join(sub)]
        .into_iter()
        .find(|d| d.join(test).is_file())
}

/// Loads `(train, test)` from a directory of CIFAR binary batches.
pub fn load_cifar(dir: &Path, kind: CifarKind) -> Result<(Dataset, Dataset)> {
    let (train_files, test_file, sub) = split_files(kind);
    let root = locate_cifar(dir, kind).ok_or_else(|| {
        Error::Data(format!(
            "no {test_file} under {} or {}",
            dir.display(),
            dir.join(sub).display()
        ))
    })?;
    let parts = train_files
        .iter()
        .map(|f| read_cifar_binary(&root.join(f), kind))
        .collect::<Result<Vec<_>>>()?;
    let test = read_cifar_binary(&root.join(test_file), kind)?;
    Ok((Dataset::concat(&parts)?, test))
}

/// Per-channel pixel means over the whole dataset.
pub fn channel_means(ds: &Dataset) -> Result<Vec<f64>> {
    let s = ds.images.shape();
    if s.n == 0 || s.map_len() == 0 {
        return Err(Error::Data("channel means of an empty dataset".into()));
    }
    let mut sums = vec![0.0; s.c];
    for n in 0..s.n {
        for (c, sum) in sums.iter_mut().enumerate() {
            *sum += ds.images.map(n, c).iter().sum::<f64>();
        }
    }
    let count = (s.n * s.map_len()) as f64;
    Ok(sums.into_iter().map(|v| v / count).collect())
}

/// `(x - mean_c) / 128`, in place.
pub fn normalize_in_place(x: &mut Tensor, means: &[f64]) -> Result<()> {
    let s = x.shape();
    if means.len() != s.c {
        return Err(param_err!("{} channel means for {} channels", means.len(), s.c));
    }
    for n in 0..s.n {
        for (c, m) in means.iter().enumerate() {
            x.map_mut(n, c).iter_mut().for_each(|v| *v = (*v - m) / PIXEL_SCALE);
        }
    }
    Ok(())
}

pub fn normalize(ds: &Dataset, means: &[f64]) -> Result<Dataset> {
    let mut out = ds.clone();
    normalize_in_place(&mut out.images, means)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPolicy {
    /// Zero padding added on every side before cropping.
    pub pad: usize,
    pub hflip_prob: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            pad: 4,
            hflip_prob: 0.5,
        }
    }
}

/// Pads `img` (`(1, C, H, W)`) by `policy.pad` zeros, crops an `H x W`
/// window whose top-left corner is `(dy, dx)` in padded coordinates, and
/// mirrors horizontally if `flip`.
pub fn augment_with(img: &Tensor, policy: &AugmentPolicy, dy: usize, dx: usize, flip: bool) -> Result<Tensor> {
    let s = img.shape();
    if s.n != 1 {
        return Err(param_err!("augment takes one image, got {s}"));
    }
    let p = policy.pad;
    if dy > 2 * p || dx > 2 * p {
        return Err(param_err!("crop offset ({dy}, {dx}) beyond padding {p}"));
    }
    let mut out = Tensor::zeros(s);
    for c in 0..s.c {
        let src = img.map(0, c);
        let dst = out.map_mut(0, c);
        for y in 0..s.h {
            let sy = (y + dy) as isize - p as isize;
            if sy < 0 || sy >= s.h as isize {
                continue;
            }
            for x in 0..s.w {
                let ox = if flip { s.w - 1 - x } else { x };
                let sx = (ox + dx) as isize - p as isize;
                if sx >= 0 && sx < s.w as isize {
                    dst[y * s.w + x] = src[sy as usize * s.w + sx as usize];
                }
            }
        }
    }
    Ok(out)
}

/// Random crop offset in `[0, 2*pad]` per axis and a flip with
/// probability `hflip_prob`.
pub fn augment(img: &Tensor, policy: &AugmentPolicy, rng: &mut Rng) -> Result<Tensor> {
    let span = 2 * policy.pad + 1;
    let dy = rng.below(span);
    let dx = rng.below(span);
    let flip = rng.next_f64() < policy.hflip_prob;
    augment_with(img, policy, dy, dx, flip)
}

#[derive(Clone, Debug)]
pub struct Subset {
    pub data: Dataset,
    /// Selected image indices, ascending.
    pub indices: Vec<usize>,
    /// Original ids of the chosen classes, ascending; new label `i` is `classes[i]`.
    pub classes: Vec<usize>,
}

/// Picks `classes` of the dataset's classes and `per_class` images of
/// each, relabelling the chosen classes `0..classes` in ascending order of
/// their original ids.
pub fn subset_sample(ds: &Dataset, classes: usize, per_class: usize, rng: &mut Rng) -> Result<Subset> {
    if classes == 0 || classes > ds.num_classes {
        return Err(param_err!("cannot pick {classes} of {} classes", ds.num_classes));
    }
    let mut ids: Vec<usize> = (0..ds.num_classes).collect();
    rng.shuffle(&mut ids);
    let mut chosen = ids[..classes].to_vec();
    chosen.sort_unstable();
    let mut indices = Vec::with_capacity(classes * per_class);
    for &class in &chosen {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if members.len() < per_class {
            return Err(Error::Data(format!(
                "class {class} has {} images, {per_class} requested",
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        indices.extend_from_slice(&members[..per_class]);
    }
    indices.sort_unstable();
    let mut sub = ds.select(&indices)?;
    for l in &mut sub.labels {
        *l = chosen.binary_search(l).expect("label of a chosen class");
    }
    sub.num_classes = classes;
    sub.coarse_labels = None;
    Ok(Subset {
        data: sub,
        indices,
        classes: chosen,
    })
}

/// Same subset as [`subset_sample`], applied to another split (e.g. the
/// test set) by class id, keeping every image of the chosen classes.
pub fn restrict_classes(ds: &Dataset, chosen: &[usize]) -> Result<Dataset> {
    let indices: Vec<usize> = (0..ds.len()).filter(|&i| chosen.contains(&ds.labels[i])).collect();
    let mut sub = ds.select(&indices)?;
    let mut sorted = chosen.to_vec();
    sorted.sort_unstable();
    for l in &mut sub.labels {
        *l = sorted.binary_search(l).expect("label of a chosen class");
    }
    sub.num_classes = chosen.len();
    sub.coarse_labels = None;
    Ok(sub)
}

/// Class-conditional images in raw pixel units: a Gaussian blob whose
/// position and color depend on the class, on a noisy grey background.
/// Labels cycle `0, 1, .., classes-1`.
pub fn synthetic_dataset(classes: usize, per_class: usize, side: usize, rng: &mut Rng) -> Result<Dataset> {
    if classes == 0 || side < 4 {
        return Err(param_err!("synthetic data needs classes >= 1 and side >= 4"));
    }
    let n = classes * per_class;
    let shape = Shape::new(n, 3, side, side);
    let mut images = Tensor::new(shape, 0.0)?;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mid = (side as f64 - 1.0) / 2.0;
    let radius = side as f64 * 0.28;
    let sigma = side as f64 * 0.12;
    for (i, &k) in labels.iter().enumerate() {
        let angle = std::f64::consts::TAU * k as f64 / classes as f64;
        let cy = mid + radius * angle.sin() + 0.5 * rng.normal();
        let cx = mid + radius * angle.cos() + 0.5 * rng.normal();
        for c in 0..3 {
            let tint = 0.6 + 0.4 * (angle + c as f64 * std::f64::consts::TAU / 3.0).cos();
            let map = images.map_mut(i, c);
            for y in 0..side {
                for x in 0..side {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    let blob = 150.0 * tint * (-d2 / (2.0 * sigma * sigma)).exp();
                    let v = 80.0 + blob + 20.0 * rng.normal();
                    map[y * side + x] = v.clamp(0.0, 255.0);
                }
            }
        }
    }
    Dataset::new(images, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn record10(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend(std::iter::repeat_n(fill, CIFAR_PIXELS));
        r
    }

    #[test]
    fn single_cifar10_record() {
        let ds = parse_cifar_bytes(&record10(3, 7), CifarKind::Cifar10).unwrap();
        assert_eq!(ds.labels, vec![3]);
        assert_eq!(ds.images.shape(), Shape::new(1, 3, 32, 32));
        assert!(ds.images.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn channel_major_pixel_layout() {
        let mut r = vec![0u8];
        r.extend((0..CIFAR_PIXELS).map(|i| (i / 1024) as u8));
        let ds = parse_cifar_bytes(&r, CifarKind::Cifar10).unwrap();
        for c in 0..3 {
            assert!(ds.images.map(0, c).iter().all(|&v| v == c as f64));
        }
    }

    #[test]
    fn truncated_file_is_format_error() {
        let mut b = record10(1, 0);
        b.pop();
        assert!(matches!(parse_cifar_bytes(&b, CifarKind::Cifar10), Err(Error::Format(_))));
    }

    #[test]
    fn out_of_range_label_is_data_error() {
        assert!(matches!(parse_cifar_bytes(&record10(10, 0), CifarKind::Cifar10), Err(Error::Data(_))));
    }

    #[test]
    fn cifar100_keeps_fine_and_coarse() {
        let mut r = vec![4u8, 77];
        r.extend(std::iter::repeat_n(1u8, CIFAR_PIXELS));
        let ds = parse_cifar_bytes(&r, CifarKind::Cifar100).unwrap();
        assert_eq!(ds.labels, vec![77]);
        assert_eq!(ds.coarse_labels, Some(vec![4]));
        assert_eq!(write_cifar_bytes(&ds, CifarKind::Cifar100).unwrap(), r);
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("cifar-10-batches-bin");
        fs::create_dir(&root).unwrap();
        for (i, f) in ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"]
            .iter()
            .enumerate()
        {
            fs::write(root.join(f), record10(i as u8, 0)).unwrap();
        }
        fs::write(root.join("test_batch.bin"), [record10(9, 1), record10(8, 2)].concat()).unwrap();
        let (train, test) = load_cifar(dir.path(), CifarKind::Cifar10).unwrap();
        assert_eq!(train.labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(test.labels, vec![9, 8]);
        let missing = tempfile::tempdir().unwrap();
        assert!(load_cifar(missing.path(), CifarKind::Cifar10).is_err());
    }

    #[test]
    fn constant_channels_normalize_to_zero() {
        let mut r = vec![0u8];
        r.extend([100u8, 150, 200].iter().flat_map(|&v| std::iter::repeat_n(v, 1024)));
        let ds = parse_cifar_bytes(&r, CifarKind::Cifar10).unwrap();
        let means = channel_means(&ds).unwrap();
        assert_eq!(means, vec![100.0, 150.0, 200.0]);
        let norm = normalize(&ds, &means).unwrap();
        assert!(norm.images.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_scale() {
        let mut x = Tensor::new((1, 1, 1, 2), 0.0).unwrap();
        x.data_mut().copy_from_slice(&[0.0, 256.0]);
        normalize_in_place(&mut x, &[128.0]).unwrap();
        assert_eq!(x.data(), &[-1.0, 1.0]);
    }

    fn numbered(side: usize) -> Tensor {
        Tensor::from_vec((1, 1, side, side), (1..=side * side).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn centered_crop_is_identity() {
        let img = numbered(32);
        let out = augment_with(&img, &AugmentPolicy::default(), 4, 4, false).unwrap();
        assert!(out.bitwise_eq(&img));
    }

    #[test]
    fn corner_crop_has_zero_border() {
        let img = numbered(32);
        let out = augment_with(&img, &AugmentPolicy::default(), 0, 0, false).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let v = out.at(0, 0, y, x);
                if y < 4 || x < 4 {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, img.at(0, 0, y - 4, x - 4));
                }
            }
        }
    }

    #[test]
    fn flip_reverses_rows() {
        let img = numbered(8);
        let out = augment_with(&img, &AugmentPolicy::default(), 4, 4, true).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(out.at(0, 0, y, x), img.at(0, 0, y, 7 - x));
            }
        }
        assert!(augment_with(&img, &AugmentPolicy::default(), 9, 0, false).is_err());
    }

    #[test]
    fn random_augment_is_seeded() {
        let img = numbered(32);
        let p = AugmentPolicy::default();
        let a = augment(&img, &p, &mut Rng::new(3)).unwrap();
        let b = augment(&img, &p, &mut Rng::new(3)).unwrap();
        assert!(a.bitwise_eq(&b));
    }

    fn labelled(n_per: usize, classes: usize) -> Dataset {
        let n = n_per * classes;
        let images = Tensor::from_vec((n, 1, 1, 1), (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(images, (0..n).map(|i| i % classes).collect(), classes).unwrap()
    }

    #[test]
    fn subset_counts_and_determinism() {
        let ds = labelled(20, 10);
        let s = subset_sample(&ds, 4, 5, &mut Rng::new(1)).unwrap();
        let t = subset_sample(&ds, 4, 5, &mut Rng::new(1)).unwrap();
        assert_eq!(s.indices, t.indices);
        assert_eq!(s.classes.len(), 4);
        let a = s.data;
        assert_eq!(a.len(), 20);
        assert_eq!(a.num_classes, 4);
        for k in 0..4 {
            assert_eq!(a.labels.iter().filter(|&&l| l == k).count(), 5);
        }
        assert!(subset_sample(&ds, 11, 1, &mut Rng::new(1)).is_err());
        assert!(subset_sample(&ds, 2, 21, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn restrict_matches_subset_relabelling() {
        let ds = labelled(3, 5);
        let sub = restrict_classes(&ds, &[4, 1]).unwrap();
        assert_eq!(sub.len(), 6);
        // class 1 -> 0, class 4 -> 1
        for (i, &l) in sub.labels.iter().enumerate() {
            let orig = sub.images.data()[i] as usize % 5;
            assert_eq!(l, usize::from(orig == 4));
        }
    }

    #[test]
    fn synthetic_is_balanced_and_in_range() {
        let ds = synthetic_dataset(4, 6, 16, &mut Rng::new(0)).unwrap();
        assert_eq!(ds.len(), 24);
        assert!(ds.images.data().iter().all(|v| (0.0..=255.0).contains(v)));
        for k in 0..4 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == k).count(), 6);
        }
    }

    proptest! {
        #[test]
        fn cifar10_round_trip(labels in proptest::collection::vec(0u8..10, 1..4), seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let bytes: Vec<u8> = labels
                .iter()
                .flat_map(|&l| {
                    let mut r = vec![l];
                    r.extend((0..CIFAR_PIXELS).map(|_| rng.below(256) as u8));
                    r
                })
                .collect();
            let ds = parse_cifar_bytes(&bytes, CifarKind::Cifar10).unwrap();
            prop_assert_eq!(write_cifar_bytes(&ds, CifarKind::Cifar10).unwrap(), bytes);
        }

        #[test]
        fn augment_preserves_shape_and_values(dy in 0usize..9, dx in 0usize..9, flip: bool) {
            let img = numbered(12);
            let out = augment_with(&img, &AugmentPolicy::default(), dy, dx, flip).unwrap();
            prop_assert_eq!(out.shape(), img.shape());
            for &v in out.data() {
                prop_assert!(v == 0.0 || img.data().contains(&v));
            }
        }
    }
}
