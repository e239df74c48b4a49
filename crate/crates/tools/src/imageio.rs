//! PNG (and any other format the `image` crate decodes) to and from
//! [`acf_core::Image`].

use std::path::Path;

use acf_core::{BBox, Image, Plane};

use crate::error::{ToolError, ToolResult};

/// Image files of a directory (png, jpg, jpeg, bmp, ppm), sorted by name,
/// or the path itself when it is a file.
pub fn list_images(path: &Path) -> ToolResult<Vec<std::path::PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| ToolError::io(path, e))? {
        let p = entry.map_err(|e| ToolError::io(path, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg" | "bmp" | "ppm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// File stem used as the image id in annotation and detection files.
pub fn image_id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn load_image(path: &Path) -> ToolResult<Image> {
    let rgb = image::open(path)
        .map_err(|source| ToolError::Image {
            path: path.into(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Ok(Image::from_fn(w, h, |x, y| {
        let p = rgb.get_pixel(x as u32, y as u32).0;
        [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0]
    }))
}

/// 8-bit quantization, rounding to nearest.
pub fn to_rgb8(image: &Image) -> image::RgbImage {
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8;
    image::RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let p = image.pixel(x as usize, y as usize);
        image::Rgb([q(p[0]), q(p[1]), q(p[2])])
    })
}

pub fn save_png(image: &Image, path: &Path) -> ToolResult<()> {
    to_rgb8(image).save(path).map_err(|source| ToolError::Image {
        path: path.into(),
        source,
    })
}

/// Saves a plane as grayscale, mapping its min..max onto 0..255.
pub fn save_plane_png(plane: &Plane, path: &Path) -> ToolResult<()> {
    let lo = plane.data.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = plane.data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = image::GrayImage::from_fn(plane.width as u32, plane.height as u32, |x, y| {
        let v = (plane.get(x as usize, y as usize) - lo) / span;
        image::Luma([(v * 255.0 + 0.5) as u8])
    });
    img.save(path).map_err(|source| ToolError::Image {
        path: path.into(),
        source,
    })
}

/// Draws one-pixel box outlines in `color`.
pub fn draw_boxes(image: &mut image::RgbImage, boxes: &[BBox], color: [u8; 3]) {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            image.put_pixel(x as u32, y as u32, image::Rgb(color));
        }
    };
    for b in boxes {
        let (x0, y0) = (b.x.round() as i64, b.y.round() as i64);
        let (x1, y1) = ((b.x + b.w).round() as i64 - 1, (b.y + b.h).round() as i64 - 1);
        for x in x0..=x1 {
            put(x, y0);
            put(x, y1);
        }
        for y in y0..=y1 {
            put(x0, y);
            put(x1, y);
        }
    }
}
