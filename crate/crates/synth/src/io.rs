//! PGM images and the `path,task,pan,tilt` annotation table.
//!
//! Export layout: `<root>/task<k>/img<i>.pgm` plus `<root>/annotations.csv`.
//! Images are written as 16-bit binary PGM, which holds the renderer's
//! quantized intensities exactly.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use m2dl_core::linalg::format_g17;
use m2dl_core::{Matrix, Tensor4};

use crate::{Error, ImageTask, Result};

const MAXVAL: f64 = 65535.0;

/// Writes a `h × w` image with values in [0, 1] as binary 16-bit PGM.
pub fn write_pgm(path: impl AsRef<Path>, pixels: &[f64], h: usize, w: usize) -> Result<()> {
    if pixels.len() != h * w {
        return Err(Error::InvalidParameter {
            name: "pixels",
            reason: format!("{} values for a {h}x{w} image", pixels.len()),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n65535\n")?;
    for &v in pixels {
        let level = (v.clamp(0.0, 1.0) * MAXVAL).round() as u16;
        out.write_all(&level.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads binary (P5, 8 or 16 bit) or ASCII (P2) PGM. Returns `(h, w, pixels)`
/// with pixels scaled to [0, 1].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let bad = |msg: &str| Error::Pgm {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;

    // header: magic, width, height, maxval, separated by whitespace and comments
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    let scale = maxval as f64;
    let n = w * h;
    let pixels = match tokens[0].as_str() {
        "P5" => {
            let data = &bytes[(pos + 1).min(bytes.len())..];
            if maxval < 256 {
                if data.len() < n {
                    return Err(bad("truncated pixel data"));
                }
                data[..n].iter().map(|&b| b as f64 / scale).collect()
            } else {
                if data.len() < 2 * n {
                    return Err(bad("truncated pixel data"));
                }
                data.chunks_exact(2)
                    .take(n)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
                    .collect()
            }
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let vals: Vec<f64> = text
                .split_ascii_whitespace()
                .take(n)
                .map(|t| t.parse::<f64>().map(|v| v / scale).map_err(|_| bad("bad pixel value")))
                .collect::<Result<_>>()?;
            if vals.len() < n {
                return Err(bad("truncated pixel data"));
            }
            vals
        }
        _ => return Err(bad("not a PGM (expected P5 or P2)")),
    };
    Ok((h, w, pixels))
}

/// Writes every sample of `tasks` under `root` together with `annotations.csv`.
pub fn export_tasks(tasks: &[ImageTask], root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    let mut csv = BufWriter::new(File::create(root.join("annotations.csv"))?);
    writeln!(csv, "path,task,pan,tilt")?;
    for t in tasks {
        let dir = format!("task{}", t.task);
        fs::create_dir_all(root.join(&dir))?;
        let [_, c, h, w] = t.images.shape();
        if c != 1 {
            return Err(Error::InvalidParameter {
                name: "images",
                reason: format!("PGM export needs single-channel images, task {} has {c}", t.task),
            });
        }
        for i in 0..t.len() {
            let rel = format!("{dir}/img{i}.pgm");
            write_pgm(root.join(&rel), t.images.item(i), h, w)?;
            writeln!(
                csv,
                "{rel},{},{},{}",
                t.task,
                format_g17(t.targets[(i, 0)]),
                format_g17(t.targets[(i, 1)])
            )?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn resize_nearest(src: &[f64], h: usize, w: usize, size: usize) -> Vec<f64> {
    if h == size && w == size {
        return src.to_vec();
    }
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        let si = i * h / size;
        for j in 0..size {
            out.push(src[si * w + j * w / size]);
        }
    }
    out
}

/// Loads images listed in `annotations_csv` (paths relative to `image_dir`),
/// resizing to `size × size` by nearest neighbour, and groups them by task id
/// in ascending order. All missing files are reported together.
pub fn load_csv_dataset(
    image_dir: impl AsRef<Path>,
    annotations_csv: impl AsRef<Path>,
    size: usize,
) -> Result<Vec<ImageTask>> {
    let image_dir = image_dir.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(annotations_csv)
        .map_err(|e| Error::Io(e.to_string()))?;

    struct Row {
        path: String,
        pan: f64,
        tilt: f64,
    }
    let mut groups: BTreeMap<usize, Vec<Row>> = BTreeMap::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if idx == 0 {
            let header: Vec<&str> = rec.iter().collect();
            if header != ["path", "task", "pan", "tilt"] {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected header path,task,pan,tilt, got {}", header.join(",")),
                });
            }
            continue;
        }
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, got {}", rec.len()),
            });
        }
        let field = |k: usize, what: &str| Error::Parse {
            line,
            msg: format!("bad {what} {:?}", &rec[k]),
        };
        let task: usize = rec[1].parse().map_err(|_| field(1, "task"))?;
        let pan: f64 = rec[2].parse().map_err(|_| field(2, "pan"))?;
        let tilt: f64 = rec[3].parse().map_err(|_| field(3, "tilt"))?;
        if !pan.is_finite() || !tilt.is_finite() {
            return Err(field(2, "angle"));
        }
        groups.entry(task).or_default().push(Row {
            path: rec[0].to_string(),
            pan,
            tilt,
        });
    }

    let missing: Vec<String> = groups
        .values()
        .flatten()
        .filter(|r| !image_dir.join(&r.path).is_file())
        .map(|r| r.path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingImages(missing));
    }

    groups
        .into_iter()
        .map(|(task, rows)| {
            let n = rows.len();
            let mut data = Vec::with_capacity(n * size * size);
            for r in &rows {
                let (h, w, px) = read_pgm(image_dir.join(&r.path))?;
                data.extend(resize_nearest(&px, h, w, size));
            }
            Ok(ImageTask {
                task,
                images: Tensor4::from_vec([n, 1, size, size], data)?,
                targets: Matrix::from_fn(n, 2, |i, k| if k == 0 { rows[i].pan } else { rows[i].tilt }),
                subjects: Vec::new(),
            })
        })
        .collect()
}
