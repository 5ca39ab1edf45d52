//! Videos and masks as directories of 8-bit PNG frames plus `manifest.txt`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use effecterase_core::{MaskVideo, VideoTensor};
use image::{GrayImage, RgbImage};

use crate::error::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const FRAME_NAMING: &str = "frame_%06d.png";
pub const COLOR_RGB: &str = "srgb-8bit";
pub const COLOR_GRAY: &str = "gray-8bit";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Default for Fps {
    fn default() -> Self {
        Fps { num: 24, den: 1 }
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fps {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        let num = n.trim().parse().map_err(|_| format!("bad fps `{s}`"))?;
        let den: u32 = d.trim().parse().map_err(|_| format!("bad fps `{s}`"))?;
        if den == 0 {
            return Err(format!("bad fps `{s}`"));
        }
        Ok(Fps { num, den })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoManifest {
    pub fps: Fps,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub frame_naming: String,
    pub color_space: String,
}

impl VideoManifest {
    pub fn frame_name(&self, index: usize) -> Result<String> {
        format_frame_name(&self.frame_naming, index)
    }

    pub fn to_text(&self) -> String {
        format!(
            "fps = {}\nwidth = {}\nheight = {}\nframe_count = {}\nframe_naming = {}\ncolor_space = {}\n",
            self.fps, self.width, self.height, self.frame_count, self.frame_naming, self.color_space
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fps = None;
        let mut width = None;
        let mut height = None;
        let mut frame_count = None;
        let mut frame_naming = None;
        let mut color_space = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LabError::data(format!("manifest line {}: expected `key = value`", n + 1)))?;
            let value = value.trim();
            let int = |v: &str| v.parse::<usize>().map_err(|_| LabError::data(format!("manifest: bad integer `{v}`")));
            match key.trim() {
                "fps" => fps = Some(value.parse::<Fps>().map_err(LabError::data)?),
                "width" => width = Some(int(value)?),
                "height" => height = Some(int(value)?),
                "frame_count" => frame_count = Some(int(value)?),
                "frame_naming" => frame_naming = Some(value.to_string()),
                "color_space" => color_space = Some(value.to_string()),
                other => return Err(LabError::data(format!("manifest: unknown key `{other}`"))),
            }
        }
        let need = |name: &str| LabError::data(format!("manifest: missing `{name}`"));
        let m = VideoManifest {
            fps: fps.ok_or_else(|| need("fps"))?,
            width: width.ok_or_else(|| need("width"))?,
            height: height.ok_or_else(|| need("height"))?,
            frame_count: frame_count.ok_or_else(|| need("frame_count"))?,
            frame_naming: frame_naming.ok_or_else(|| need("frame_naming"))?,
            color_space: color_space.ok_or_else(|| need("color_space"))?,
        };
        m.frame_name(0)?;
        Ok(m)
    }
}

/// Expands a `prefix%0Nd.suffix` pattern.
pub fn format_frame_name(pattern: &str, index: usize) -> Result<String> {
    let bad = || LabError::data(format!("unsupported frame naming pattern `{pattern}`"));
    let start = pattern.find('%').ok_or_else(bad)?;
    let rest = &pattern[start + 1..];
    let end = rest.find('d').ok_or_else(bad)?;
    let spec = &rest[..end];
    let width: usize = if spec.is_empty() {
        0
    } else if let Some(w) = spec.strip_prefix('0') {
        w.parse().map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    Ok(format!("{}{:0width$}{}", &pattern[..start], index, &rest[end + 1..]))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn read_manifest(dir: &Path) -> Result<VideoManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(LabError::data(format!("{}: missing manifest", dir.display())));
    }
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    VideoManifest::parse(&text)
}

fn write_frames(
    dir: &Path,
    dims: (usize, usize, usize),
    color_space: &str,
    fps: Fps,
    mut frame: impl FnMut(usize, &Path) -> image::ImageResult<()>,
) -> Result<VideoManifest> {
    let (frames, height, width) = dims;
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let manifest = VideoManifest {
        fps,
        width,
        height,
        frame_count: frames,
        frame_naming: FRAME_NAMING.to_string(),
        color_space: color_space.to_string(),
    };
    for t in 0..frames {
        let path = dir.join(manifest.frame_name(t)?);
        frame(t, &path).map_err(|e| LabError::Runtime(format!("{}: {e}", path.display())))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text()).map_err(|e| LabError::io(&path, e))?;
    Ok(manifest)
}

pub fn write_video_dir(video: &VideoTensor, dir: &Path) -> Result<VideoManifest> {
    write_video_dir_with_fps(video, dir, Fps::default())
}

pub fn write_video_dir_with_fps(video: &VideoTensor, dir: &Path, fps: Fps) -> Result<VideoManifest> {
    let (h, w) = (video.height(), video.width());
    write_frames(dir, (video.frames(), h, w), COLOR_RGB, fps, |t, path| {
        let bytes = video.frame(t).iter().map(|&v| quantize(v)).collect();
        RgbImage::from_raw(w as u32, h as u32, bytes).expect("frame buffer size").save(path)
    })
}

pub fn write_mask_dir(mask: &MaskVideo, dir: &Path) -> Result<VideoManifest> {
    let (h, w) = (mask.height(), mask.width());
    write_frames(dir, (mask.frames(), h, w), COLOR_GRAY, Fps::default(), |t, path| {
        let plane = &mask.data()[t * h * w..(t + 1) * h * w];
        let bytes = plane.iter().map(|&v| quantize(v)).collect();
        GrayImage::from_raw(w as u32, h as u32, bytes).expect("frame buffer size").save(path)
    })
}

/// Checks the manifest against the directory and returns each frame's bytes.
fn read_frames(dir: &Path, channels: usize) -> Result<(VideoManifest, Vec<u8>)> {
    let manifest = read_manifest(dir)?;
    let expected = if channels == 3 { COLOR_RGB } else { COLOR_GRAY };
    if manifest.color_space != expected {
        return Err(LabError::data(format!(
            "{}: color space `{}`, expected `{expected}`",
            dir.display(),
            manifest.color_space
        )));
    }
    let names: Vec<String> = (0..manifest.frame_count).map(|t| manifest.frame_name(t)).collect::<Result<_>>()?;
    let on_disk = count_frame_files(dir, &manifest)?;
    if on_disk != manifest.frame_count || names.iter().any(|n| !dir.join(n).is_file()) {
        return Err(LabError::data(format!(
            "{}: frame count mismatch: manifest says {}, found {on_disk}",
            dir.display(),
            manifest.frame_count
        )));
    }
    let (w, h) = (manifest.width, manifest.height);
    let mut data = Vec::with_capacity(manifest.frame_count * h * w * channels);
    for name in &names {
        let path = dir.join(name);
        let img = image::open(&path).map_err(|e| LabError::data(format!("{}: {e}", path.display())))?;
        if img.width() as usize != w || img.height() as usize != h {
            return Err(LabError::data(format!(
                "{}: dimension mismatch: {}x{} but manifest says {w}x{h}",
                path.display(),
                img.width(),
                img.height()
            )));
        }
        if channels == 3 {
            data.extend_from_slice(img.into_rgb8().as_raw());
        } else {
            data.extend_from_slice(img.into_luma8().as_raw());
        }
    }
    Ok((manifest, data))
}

/// Files in `dir` that look like frames of this manifest's naming pattern.
fn count_frame_files(dir: &Path, manifest: &VideoManifest) -> Result<usize> {
    let start = manifest.frame_naming.find('%').unwrap_or(0);
    let prefix = &manifest.frame_naming[..start];
    let suffix = manifest.frame_naming.rsplit_once('d').map_or("", |(_, s)| s);
    let entries = fs::read_dir(dir).map_err(|e| LabError::io(dir, e))?;
    let mut n = 0;
    for entry in entries {
        let entry = entry.map_err(|e| LabError::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.len() > prefix.len() + suffix.len() && name.starts_with(prefix) && name.ends_with(suffix) {
            let digits = &name[prefix.len()..name.len() - suffix.len()];
            if digits.bytes().all(|b| b.is_ascii_digit()) {
                n += 1;
            }
        }
    }
    Ok(n)
}

pub fn read_video_dir(dir: &Path) -> Result<VideoTensor> {
    let (m, bytes) = read_frames(dir, 3)?;
    let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(VideoTensor::new(m.frame_count, m.height, m.width, data)?)
}

pub fn read_mask_dir(dir: &Path) -> Result<MaskVideo> {
    let (m, bytes) = read_frames(dir, 1)?;
    let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(MaskVideo::new(m.frame_count, m.height, m.width, data)?)
}
