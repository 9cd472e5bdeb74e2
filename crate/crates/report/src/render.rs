//! Raster rendering of sidecars. Rendering reads nothing but the sidecar,
//! so a figure can always be rebuilt from its data file.

use std::fs;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};

use crate::error::{ReportError, Result};
use crate::sidecar::{parse_cell, Sidecar};

const MAX_SIDE: usize = 8192;

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

pub fn group_color(group: usize) -> Rgb<u8> {
    let base = PALETTE[group % PALETTE.len()];
    let shade = (group / PALETTE.len()) as u32 % 4;
    Rgb(base.map(|c| (c as u32 * (4 - shade) / 4) as u8))
}

/// White for 0, dark blue for 1.
pub fn heat_color(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0)])
}

fn check_side(name: &str, v: usize) -> Result<u32> {
    if v == 0 || v > MAX_SIDE {
        return Err(ReportError::Sidecar(format!("`{name}` = {v} is outside 1..={MAX_SIDE}")));
    }
    Ok(v as u32)
}

fn render_heatmap(s: &Sidecar) -> Result<RgbImage> {
    let rows = s.get_usize("rows")?;
    let cols = s.get_usize("cols")?;
    let cell = s.get_usize("cell_px")?;
    let vmin = s.get_f64("vmin")?;
    let vmax = s.get_f64("vmax")?;
    let w = check_side("cols * cell_px", cols.saturating_mul(cell))?;
    let h = check_side("rows * cell_px", rows.saturating_mul(cell))?;
    let (ci, cj, cv) = (s.column("row")?, s.column("col")?, s.column("value")?);
    let mut img = RgbImage::from_pixel(w, h, Rgb([160, 160, 160]));
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    for r in &s.rows {
        let get = |k: usize| r.get(k).map(String::as_str).unwrap_or("");
        let i: usize = get(ci).parse().map_err(|_| ReportError::Sidecar("bad row index".into()))?;
        let j: usize = get(cj).parse().map_err(|_| ReportError::Sidecar("bad col index".into()))?;
        if i >= rows || j >= cols {
            return Err(ReportError::Sidecar(format!("cell ({i}, {j}) outside {rows}×{cols}")));
        }
        let color = match parse_cell(get(cv))? {
            Some(v) => heat_color((v - vmin) / span),
            None => continue,
        };
        for y in i * cell..(i + 1) * cell {
            for x in j * cell..(j + 1) * cell {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
    Ok(img)
}

fn render_scatter(s: &Sidecar) -> Result<RgbImage> {
    let w = check_side("width", s.get_usize("width")?)?;
    let h = check_side("height", s.get_usize("height")?)?;
    let margin = s.get_usize("margin")? as f64;
    let radius = s.get_usize("radius")?.min(64) as i64;
    let (xmin, xmax) = (s.get_f64("xmin")?, s.get_f64("xmax")?);
    let (ymin, ymax) = (s.get_f64("ymin")?, s.get_f64("ymax")?);
    let (cx, cy, cg) = (s.column("x")?, s.column("y")?, s.column("group")?);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let inner_w = (w as f64 - 2.0 * margin).max(1.0);
    let inner_h = (h as f64 - 2.0 * margin).max(1.0);
    let frame = Rgb([200, 200, 200]);
    let (x0, y0) = (margin as u32, margin as u32);
    let (x1, y1) = ((margin + inner_w) as u32, (margin + inner_h) as u32);
    for x in x0..=x1.min(w - 1) {
        for y in [y0, y1.min(h - 1)] {
            if y < h {
                img.put_pixel(x, y, frame);
            }
        }
    }
    for y in y0..=y1.min(h - 1) {
        for x in [x0, x1.min(w - 1)] {
            if x < w {
                img.put_pixel(x, y, frame);
            }
        }
    }
    let project = |v: f64, lo: f64, hi: f64, len: f64| {
        if hi > lo {
            (v - lo) / (hi - lo) * len
        } else {
            len / 2.0
        }
    };
    for r in &s.rows {
        let get = |k: usize| r.get(k).map(String::as_str).unwrap_or("");
        let (Some(x), Some(y)) = (parse_cell(get(cx))?, parse_cell(get(cy))?) else {
            return Err(ReportError::Sidecar("point without coordinates".into()));
        };
        let g: usize = get(cg).parse().map_err(|_| ReportError::Sidecar("bad group".into()))?;
        let px = (margin + project(x, xmin, xmax, inner_w)).round() as i64;
        let py = (margin + inner_h - project(y, ymin, ymax, inner_h)).round() as i64;
        let color = group_color(g);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let (qx, qy) = (px + dx, py + dy);
                if qx >= 0 && qy >= 0 && (qx as u32) < w && (qy as u32) < h {
                    img.put_pixel(qx as u32, qy as u32, color);
                }
            }
        }
    }
    Ok(img)
}

pub fn render(sidecar: &Sidecar) -> Result<RgbImage> {
    match sidecar.get("kind")? {
        "heatmap" => render_heatmap(sidecar),
        "scatter" => render_scatter(sidecar),
        other => Err(ReportError::Sidecar(format!("unknown figure kind `{other}`"))),
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| ReportError::Image(e.to_string()))?;
    Ok(out)
}

/// Renders the sidecar at `sidecar_path` into PNG bytes.
pub fn render_file(sidecar_path: &Path) -> Result<Vec<u8>> {
    encode_png(&render(&Sidecar::read(sidecar_path)?)?)
}

/// Writes `sidecar` beside `png_path` (same stem, `.csv`), then renders the
/// PNG from the file just written.
pub fn emit_figure(sidecar: &Sidecar, png_path: &Path) -> Result<()> {
    if let Some(dir) = png_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    }
    let csv_path = sidecar_path_for(png_path);
    sidecar.write(&csv_path)?;
    let png = render_file(&csv_path)?;
    fs::write(png_path, png).map_err(|e| ReportError::io(png_path, e))
}

pub fn sidecar_path_for(png_path: &Path) -> std::path::PathBuf {
    png_path.with_extension("csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_cells_take_scale_colors() {
        let mut s = Sidecar::new(&["row", "col", "value"]);
        for (k, v) in
            [("kind", "heatmap"), ("rows", "1"), ("cols", "2"), ("cell_px", "2"), ("vmin", "0"), ("vmax", "1")]
        {
            s.set(k, v);
        }
        s.push_row(vec!["0".into(), "0".into(), "0".into()]);
        s.push_row(vec!["0".into(), "1".into(), "1".into()]);
        let img = render(&s).unwrap();
        assert_eq!(img.dimensions(), (4, 2));
        assert_eq!(*img.get_pixel(0, 0), Rgb([255, 255, 255]));
        assert_eq!(*img.get_pixel(3, 1), Rgb([8, 48, 107]));
    }

    #[test]
    fn rejects_unknown_kinds_and_huge_canvases() {
        let mut s = Sidecar::new(&["x", "y", "group"]);
        s.set("kind", "pie");
        assert!(render(&s).is_err());
        for (k, v) in [("kind", "scatter"), ("width", "100000"), ("height", "10"), ("margin", "1"), ("radius", "1")] {
            s.set(k, v);
        }
        for k in ["xmin", "xmax", "ymin", "ymax"] {
            s.set(k, 0);
        }
        assert!(render(&s).is_err());
    }
}
