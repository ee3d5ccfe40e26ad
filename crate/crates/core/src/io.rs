//! Template persistence: a numeric CSV matrix (row = coordinate, column =
//! template) or one binary PGM (P5) image per template.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::templates::TemplateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateFormat {
    Csv,
    /// A directory of `<label>.pgm` files, loaded in file-name order.
    Pgm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    /// CSV only: first line holds template labels.
    pub header: bool,
    /// Rescale every template to `norm`. When off, the loaded templates must
    /// already share a norm.
    pub normalize: bool,
    pub norm: f64,
    /// PGM only: subtract the pixel mean before normalizing.
    pub subtract_mean: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            header: false,
            normalize: true,
            norm: 1.0,
            subtract_mean: true,
        }
    }
}

pub fn load_templates(path: &Path, format: TemplateFormat, opts: &LoadOptions) -> Result<TemplateSet> {
    let (data, labels) = match format {
        TemplateFormat::Csv => read_csv_matrix(path, opts.header)?,
        TemplateFormat::Pgm => read_pgm_dir(path, opts.subtract_mean)?,
    };
    if opts.normalize {
        TemplateSet::normalized(data, opts.norm, labels)
    } else {
        TemplateSet::new(data, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveFormat {
    Csv { header: bool },
    /// Each template rendered as a `width × height` image into a directory.
    Pgm { width: usize, height: usize },
}

pub fn save_templates(set: &TemplateSet, path: &Path, format: SaveFormat) -> Result<()> {
    match format {
        SaveFormat::Csv { header } => {
            let labels: Vec<String> = (0..set.len()).map(|l| set.label(l)).collect();
            write_csv_matrix(path, set.data(), header.then_some(labels.as_slice()))
        }
        SaveFormat::Pgm { width, height } => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            for l in 0..set.len() {
                let v: Vec<f64> = set.template(l).iter().copied().collect();
                render_pgm(&v, width, height, &path.join(format!("{}.pgm", set.label(l))))?;
            }
            Ok(())
        }
    }
}

/// Writes a `rows × cols` matrix as CSV with shortest round-trip float text.
pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_csv_matrix(path: &Path, header: bool) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(&text, header).map_err(|(line, msg)| Error::parse(path, line, msg))
}

type Labelled = (DMatrix<f64>, Option<Vec<String>>);

fn parse_csv_matrix(text: &str, header: bool) -> std::result::Result<Labelled, (usize, String)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, s)| (i + 1, s.trim()))
        .filter(|(_, s)| !s.is_empty());
    let labels = if header {
        let (_, h) = lines.next().ok_or((1, "missing header line".to_string()))?;
        Some(h.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = labels.as_ref().map(Vec::len);
    let mut last_line = 1;
    for (lineno, line) in lines {
        last_line = lineno;
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                let v: f64 = f.parse().map_err(|_| (lineno, format!("not a number: {f:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err((lineno, format!("non-finite entry {f:?}")))
                }
            })
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        match width {
            Some(w) if w != row.len() => {
                return Err((lineno, format!("expected {w} columns, found {}", row.len())));
            }
            None => width = Some(row.len()),
            _ => {}
        }
        rows.push(row);
    }
    let cols = width.unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err((last_line, "no data rows".into()));
    }
    let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    Ok((m, labels))
}

/// An 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    /// Row-major pixels.
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Pgm, String> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        let magic = next_token(bytes, &mut pos).ok_or("empty file")?;
        if magic != b"P5" {
            return Err(format!("unsupported magic {:?} (expected P5)", String::from_utf8_lossy(magic)));
        }
        for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
            let tok = next_token(bytes, &mut pos).ok_or_else(|| format!("missing {name}"))?;
            fields[k] = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("invalid {name}"))?;
        }
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(format!("maxval {maxval} not supported (need 1..=255)"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let n = width * height;
        if width == 0 || height == 0 {
            return Err("zero-sized image".into());
        }
        let raster = bytes.get(pos..pos + n).ok_or_else(|| {
            format!("raster truncated: need {n} bytes, have {}", bytes.len().saturating_sub(pos))
        })?;
        let pixels = if maxval == 255 {
            raster.to_vec()
        } else {
            raster
                .iter()
                .map(|&p| ((p as f64) * 255.0 / maxval as f64).round() as u8)
                .collect()
        };
        Ok(Pgm { width, height, pixels })
    }

    pub fn read(path: &Path) -> Result<Pgm> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Pgm::decode(&bytes).map_err(|msg| Error::parse(path, 1, msg))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.pixels.len(), self.pixels.iter().map(|&p| p as f64))
    }
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Affinely maps `[min, max]` of `v` onto `[0, 255]`. A constant vector maps
/// to 128.
pub fn quantize(v: &[f64]) -> Vec<u8> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi <= lo {
        return vec![128; v.len()];
    }
    v.iter()
        .map(|&x| ((x - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Renders `v` (row-major, `width·height` entries) as a binary PGM.
pub fn render_pgm(v: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    if width * height != v.len() {
        return Err(Error::Dimension(format!(
            "{width}x{height} image needs {} entries, vector has {}",
            width * height,
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("cannot render non-finite entries".into()));
    }
    Pgm {
        width,
        height,
        pixels: quantize(v),
    }
    .write(path)
}

fn read_pgm_dir(dir: &Path, subtract_mean: bool) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::parse(dir, 0, "no .pgm files found"));
    }
    let mut cols = Vec::with_capacity(files.len());
    let mut labels = Vec::with_capacity(files.len());
    let mut shape = None;
    for f in &files {
        let img = Pgm::read(f)?;
        match shape {
            None => shape = Some((img.width, img.height)),
            Some(s) if s != (img.width, img.height) => {
                return Err(Error::parse(
                    f,
                    1,
                    format!(
                        "image is {}x{} but the first image is {}x{}",
                        img.width, img.height, s.0, s.1
                    ),
                ));
            }
            _ => {}
        }
        let mut v = img.to_vector();
        if subtract_mean {
            let mean = v.mean();
            v.add_scalar_mut(-mean);
        }
        cols.push(v);
        labels.push(
            f.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    Ok((DMatrix::from_columns(&cols), Some(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::{make_exponential, make_haar_family};

    #[test]
    fn csv_identity_loads_orthonormal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "1,0\n0,1\n").unwrap();
        let set = load_templates(&p, TemplateFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!((set.dim(), set.len()), (2, 2));
        assert!((set.data() - DMatrix::identity(2, 2)).abs().max() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let x0 = make_exponential(20, 0.1, 1.0).unwrap();
        let set = make_haar_family(&x0, 5, 3).unwrap();
        save_templates(&set, &p, SaveFormat::Csv { header: true }).unwrap();
        let opts = LoadOptions {
            header: true,
            normalize: false,
            ..Default::default()
        };
        let back = load_templates(&p, TemplateFormat::Csv, &opts).unwrap();
        assert!((back.data() - set.data()).abs().max() < 1e-12);
        assert_eq!(back.label(2), "t002");
    }

    #[test]
    fn csv_errors_are_descriptive() {
        assert!(matches!(parse_csv_matrix("1,2\n3\n", false), Err((2, _))));
        assert!(matches!(parse_csv_matrix("1,x\n", false), Err((1, _))));
        assert!(matches!(parse_csv_matrix("1,inf\n", false), Err((1, _))));
        assert!(parse_csv_matrix("", false).is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("uneven.csv");
        fs::write(&p, "1,0\n0,2\n").unwrap();
        let opts = LoadOptions {
            normalize: false,
            ..Default::default()
        };
        assert!(load_templates(&p, TemplateFormat::Csv, &opts).is_err());
    }

    #[test]
    fn pgm_encode_decode() {
        let img = Pgm {
            width: 3,
            height: 2,
            pixels: vec![0, 10, 20, 30, 40, 255],
        };
        assert_eq!(Pgm::decode(&img.encode()).unwrap(), img);
        let with_comment = b"P5\n# made by hand\n3 2\n255\n\x00\x0a\x14\x1e\x28\xff";
        assert_eq!(Pgm::decode(with_comment).unwrap(), img);
        assert!(Pgm::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(Pgm::decode(b"P5\n4 4\n255\n\x00").is_err());
    }

    #[test]
    fn quantize_conventions() {
        assert_eq!(quantize(&[2.5; 4]), vec![128; 4]);
        let v = [-1.0, 0.2, 1.0];
        let a = quantize(&v);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let b = quantize(&neg);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x as u16 + *y as u16, 255);
        }
    }

    #[test]
    fn pgm_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w = 4;
        let mut cols = Vec::new();
        for k in 0..3 {
            cols.push(DVector::from_fn(w * w, |i, _| ((i * (k + 1)) % 7) as f64));
        }
        let set = TemplateSet::normalized(DMatrix::from_columns(&cols), 1.0, None).unwrap();
        save_templates(&set, dir.path(), SaveFormat::Pgm { width: w, height: w }).unwrap();
        let back = load_templates(dir.path(), TemplateFormat::Pgm, &LoadOptions::default()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.labels().unwrap()[1], "t001");
        for l in 0..3 {
            let centered = {
                let v = set.template(l).into_owned();
                let m = v.mean();
                let c = v.add_scalar(-m);
                let n = c.norm();
                c / n
            };
            let diff = (back.template(l) - centered).abs().max();
            assert!(diff < 0.02, "template {l}: {diff}");
        }
        let img = dir.path().join("odd.pgm");
        Pgm {
            width: 2,
            height: 2,
            pixels: vec![0; 4],
        }
        .write(&img)
        .unwrap();
        assert!(load_templates(dir.path(), TemplateFormat::Pgm, &LoadOptions::default()).is_err());
    }

    #[test]
    fn render_rejects_bad_shape() {
        let dir = tempfile::tempdir().unwrap();
        let err = render_pgm(&[0.0; 5], 2, 2, &dir.path().join("x.pgm")).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }
}
