//! Toy grayscale image pipeline: binary PGM (P5) IO, class-per-directory
//! loading, bilinear resize with /255 normalization, and augmentation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use super::{LabeledDataset, LabeledExample};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// 8-bit pixels as read from disk, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

/// Normalized pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(height * width, pixels.len(), "pixel count");
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a fractional position; neighbours outside the image read as 0.
    fn sample_zero_padded(&self, y: f64, x: f64) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let px = |yy: f64, xx: f64| -> f64 {
            if yy < 0.0 || xx < 0.0 || yy >= self.height as f64 || xx >= self.width as f64 {
                0.0
            } else {
                self.get(yy as usize, xx as usize)
            }
        };
        let mut v = 0.0;
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let w = wy * wx;
                if w != 0.0 {
                    v += w * px(y0 + dy, x0 + dx);
                }
            }
        }
        v
    }
}

// Exact when both ends are equal, so constant images stay constant.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Corner-aligned bilinear resize: output pixel `i` samples source position
/// `i * (in - 1) / (out - 1)` along each axis.
fn resize_bilinear(
    src: &[f64],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let (y0, y1, fy) = coord(i, in_h, out_h);
        for j in 0..out_w {
            let (x0, x1, fx) = coord(j, in_w, out_w);
            let top = lerp(src[y0 * in_w + x0], src[y0 * in_w + x1], fx);
            let bot = lerp(src[y1 * in_w + x0], src[y1 * in_w + x1], fx);
            out.push(lerp(top, bot, fy));
        }
    }
    out
}

/// Resize to `target_h x target_w`, then divide by 255.
pub fn preprocess_image(img: &RawImage, target_h: usize, target_w: usize) -> Result<GrayImage> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::ZeroTargetSize);
    }
    if img.height == 0 || img.width == 0 {
        return Err(Error::EmptyDataset("image has no pixels".into()));
    }
    let src: Vec<f64> = img.pixels.iter().map(|&p| f64::from(p)).collect();
    let pixels = resize_bilinear(&src, img.height, img.width, target_h, target_w)
        .into_iter()
        .map(|v| (v / 255.0).clamp(0.0, 1.0))
        .collect();
    Ok(GrayImage::new(target_h, target_w, pixels))
}

/// Augmentation magnitudes. Defaults: crop scale in [0.8, 1.0], flip with
/// probability 0.5, rotation within +-10 degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
    pub flip_probability: f64,
    pub max_rotation_deg: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            crop_scale_min: 0.8,
            crop_scale_max: 1.0,
            flip_probability: 0.5,
            max_rotation_deg: 10.0,
        }
    }
}

impl AugmentSpec {
    pub fn none() -> Self {
        Self {
            crop_scale_min: 1.0,
            crop_scale_max: 1.0,
            flip_probability: 0.0,
            max_rotation_deg: 0.0,
        }
    }
}

/// Random crop (resized back), horizontal flip, then rotation about the centre.
///
/// Always draws the same number of values from `rng` (four) whatever the spec,
/// so streams stay aligned across configurations.
pub fn augment_image(img: &GrayImage, spec: &AugmentSpec, rng: &mut Rng) -> GrayImage {
    let (h, w) = (img.height, img.width);

    let u: f64 = rng.random();
    let scale = spec.crop_scale_min + u * (spec.crop_scale_max - spec.crop_scale_min);
    let ch = ((scale * h as f64).round() as usize).clamp(1, h);
    let cw = ((scale * w as f64).round() as usize).clamp(1, w);
    let offsets: u64 = rng.random();
    let y0 = (offsets % (h - ch + 1) as u64) as usize;
    let x0 = ((offsets >> 32) % (w - cw + 1) as u64) as usize;
    let mut cur = if ch == h && cw == w {
        img.clone()
    } else {
        let crop: Vec<f64> = (y0..y0 + ch)
            .flat_map(|y| img.pixels[y * w + x0..y * w + x0 + cw].iter().copied())
            .collect();
        GrayImage::new(h, w, resize_bilinear(&crop, ch, cw, h, w))
    };

    let flip: f64 = rng.random();
    if flip < spec.flip_probability {
        cur = flip_horizontal(&cur);
    }

    let r: f64 = rng.random();
    let angle = (2.0 * r - 1.0) * spec.max_rotation_deg;
    if angle != 0.0 {
        cur = rotate(&cur, angle.to_radians());
    }
    cur
}

pub fn flip_horizontal(img: &GrayImage) -> GrayImage {
    let pixels = img
        .pixels
        .chunks_exact(img.width)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    GrayImage::new(img.height, img.width, pixels)
}

/// Rotation by `theta` radians about the image centre, bilinear, zero padded.
pub fn rotate(img: &GrayImage, theta: f64) -> GrayImage {
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    let (s, c) = theta.sin_cos();
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        for x in 0..img.width {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            // Inverse map of the output pixel into the source.
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            pixels.push(img.sample_zero_padded(sy, sx));
        }
    }
    GrayImage::new(img.height, img.width, pixels)
}

pub fn write_pgm(img: &RawImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend_from_slice(&img.pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|reason| Error::MalformedPgm {
        path: path.to_path_buf(),
        reason,
    })
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<RawImage, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("only binary P5 graymaps are supported".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("bad header field: {e}"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} is not an 8-bit depth"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing separator after header".into());
    }
    pos += 1;
    let data = &bytes[pos..];
    if data.len() < width * height {
        return Err(format!(
            "expected {} pixel bytes, found {}",
            width * height,
            data.len()
        ));
    }
    let pixels = data[..width * height]
        .iter()
        .map(|&p| {
            if maxval == 255 {
                p
            } else {
                ((u32::from(p.min(maxval as u8)) * 255 + maxval as u32 / 2) / maxval as u32) as u8
            }
        })
        .collect();
    Ok(RawImage {
        height,
        width,
        pixels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageExample {
    pub image: RawImage,
    pub label: usize,
    pub source_id: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub class_names: Vec<String>,
    pub examples: Vec<ImageExample>,
}

impl ImageDataset {
    /// Preprocesses every image and flattens its pixels into a feature vector.
    pub fn to_features(&self, target_h: usize, target_w: usize) -> Result<LabeledDataset> {
        let examples = self
            .examples
            .iter()
            .map(|ex| {
                Ok(LabeledExample {
                    features: preprocess_image(&ex.image, target_h, target_w)?.pixels,
                    label: ex.label,
                    source_id: ex.source_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::with_dim(self.class_names.clone(), examples, target_h * target_w)
    }
}

/// Reads `root/<class>/<image>.pgm`. Classes are sorted by name and images by
/// file name; pixels stay raw until preprocessing.
pub fn load_image_dataset(root: impl AsRef<Path>) -> Result<ImageDataset> {
    let root = root.as_ref();
    let mut class_dirs: Vec<(String, PathBuf)> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_dir())
        .map(|entry| (entry.file_name().to_string_lossy().into_owned(), entry.path()))
        .collect();
    class_dirs.sort();

    let mut dataset = ImageDataset {
        class_names: Vec::with_capacity(class_dirs.len()),
        examples: Vec::new(),
    };
    for (label, (name, dir)) in class_dirs.into_iter().enumerate() {
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|entry| entry.ok())
            .map(|entry| entry.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"))
            })
            .collect();
        files.sort();
        for path in files {
            let image = read_pgm(&path)?;
            let source_id = dataset.examples.len();
            dataset.examples.push(ImageExample {
                image,
                label,
                source_id,
                path,
            });
        }
        dataset.class_names.push(name);
    }
    if dataset.examples.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no .pgm images under {}",
            root.display()
        )));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn raw(height: usize, width: usize, pixels: Vec<u8>) -> RawImage {
        RawImage {
            height,
            width,
            pixels,
        }
    }

    #[test]
    fn constant_images_normalize() {
        let white = raw(5, 7, vec![255; 35]);
        let p = preprocess_image(&white, 224, 224).unwrap();
        assert_eq!(p.pixels.len(), 224 * 224);
        assert!(p.pixels.iter().all(|&v| v == 1.0));
        let black = raw(3, 3, vec![0; 9]);
        assert!(preprocess_image(&black, 4, 9).unwrap().pixels.iter().all(|&v| v == 0.0));
        assert!(matches!(preprocess_image(&black, 0, 4), Err(Error::ZeroTargetSize)));
    }

    #[test]
    fn checkerboard_upsample_matches_interpolation_formula() {
        let img = raw(2, 2, vec![0, 255, 255, 0]);
        let out = preprocess_image(&img, 3, 3).unwrap();
        // Direct formula: f(y, x) = sum of corner values weighted by (1-|y-yi|)(1-|x-xi|)
        // with source position = output index / 2.
        let corners = [(0.0, 0.0, 0.0), (0.0, 1.0, 255.0), (1.0, 0.0, 255.0), (1.0, 1.0, 0.0)];
        for i in 0..3 {
            for j in 0..3 {
                let (sy, sx) = (i as f64 / 2.0, j as f64 / 2.0);
                let v: f64 = corners
                    .iter()
                    .map(|&(cy, cx, val)| (1.0 - (sy - cy as f64).abs()) * (1.0 - (sx - cx as f64).abs()) * val)
                    .sum();
                assert!((out.get(i, j) - v / 255.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flip_examples() {
        let img = GrayImage::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(flip_horizontal(&img).pixels, vec![2.0, 1.0, 4.0, 3.0]);
        let spec = AugmentSpec {
            flip_probability: 1.0,
            ..AugmentSpec::none()
        };
        let mut rng = seeded(4);
        let once = augment_image(&img, &spec, &mut rng);
        let twice = augment_image(&once, &spec, &mut rng);
        assert_eq!(once.pixels, vec![2.0, 1.0, 4.0, 3.0]);
        assert_eq!(twice, img);
    }

    #[test]
    fn no_op_augmentation_is_identity() {
        let pixels: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let img = GrayImage::new(6, 8, pixels);
        let out = augment_image(&img, &AugmentSpec::none(), &mut seeded(1));
        for (a, b) in out.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() < 1e-9);
        }
        let rotated = rotate(&img, 0.0);
        for (a, b) in rotated.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn augmentation_deterministic_and_in_range() {
        let pixels: Vec<f64> = (0..100).map(|i| (i % 17) as f64 / 16.0).collect();
        let img = GrayImage::new(10, 10, pixels);
        let spec = AugmentSpec::default();
        for seed in 0..20 {
            let a = augment_image(&img, &spec, &mut seeded(seed));
            let b = augment_image(&img, &spec, &mut seeded(seed));
            assert_eq!(a, b);
            assert!(a.pixels.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn quarter_turn_moves_corners() {
        let mut pixels = vec![0.0; 9];
        pixels[0] = 1.0;
        let img = GrayImage::new(3, 3, pixels);
        let out = rotate(&img, std::f64::consts::FRAC_PI_2);
        let hot: Vec<usize> = out
            .pixels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(hot.len(), 1);
        assert_ne!(hot[0], 0);
        assert!([2, 6].contains(&hot[0]));
    }

    #[test]
    fn pgm_round_trip_and_rejects_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..64).map(|i| ((i % 8) * 32 + (i / 8) * 4) as u8).collect();
        let img = raw(8, 8, pixels);
        let path = dir.path().join("g.pgm");
        write_pgm(&img, &path).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);

        let ascii = dir.path().join("a.pgm");
        fs::write(&ascii, "P2\n2 1\n255\n0 255\n").unwrap();
        assert!(matches!(read_pgm(&ascii), Err(Error::MalformedPgm { .. })));
        fs::write(&ascii, b"P5\n4 4\n255\n\x00\x01").unwrap();
        assert!(matches!(read_pgm(&ascii), Err(Error::MalformedPgm { .. })));
        fs::write(&ascii, b"P5\n# comment\n2 1\n255\n\x07\x09").unwrap();
        assert_eq!(read_pgm(&ascii).unwrap().pixels, vec![7, 9]);
    }

    #[test]
    fn directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["TB", "Sick", "Healthy"] {
            fs::create_dir(dir.path().join(class)).unwrap();
            for i in 0..2 {
                let img = raw(4, 4, vec![i * 100; 16]);
                write_pgm(&img, dir.path().join(class).join(format!("img{i}.pgm"))).unwrap();
            }
        }
        fs::write(dir.path().join("README.txt"), "not a class").unwrap();
        let ds = load_image_dataset(dir.path()).unwrap();
        assert_eq!(ds.class_names, vec!["Healthy", "Sick", "TB"]);
        assert_eq!(ds.examples.len(), 6);
        assert_eq!(ds.examples[1].image.pixels[0], 100);
        let feats = ds.to_features(8, 8).unwrap();
        assert_eq!(feats.dim(), 64);
        assert_eq!(feats.class_sizes(), vec![2, 2, 2]);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_image_dataset(empty.path()), Err(Error::EmptyDataset(_))));
    }
}
