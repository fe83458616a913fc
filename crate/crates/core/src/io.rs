//! On-disk formats: little-endian float arrays with JSON sidecars, PCM16 WAV, PNG
//! frames and label maps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sidecar for `landmarks.bin`: `frames * points * dims` float32 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkManifest {
    pub frames: usize,
    pub points: usize,
    pub dims: usize,
}

/// Sidecar for `poses.bin`: `frames * 6` float32 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseManifest {
    pub frames: usize,
    pub dims: usize,
}

/// Sidecar for precomputed audio features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub frames: usize,
    pub dim: usize,
    pub fps: f64,
}

/// Sidecar for optical-flow files: `frames * height * width * 2` float32 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowManifest {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// The JSON sidecar path for a binary array file (`x.bin` -> `x.json`).
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes via a temporary sibling and a rename, so readers never see partial files.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn f32_to_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn bytes_to_f32(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Data(format!("float32 file length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Writes `values` as float32 to `bin` and `manifest` as JSON next to it.
pub fn write_f32_array<M: Serialize>(bin: &Path, values: &[f32], manifest: &M) -> Result<()> {
    atomic_write(bin, &f32_to_bytes(values))?;
    write_json(&sidecar_path(bin), manifest)
}

/// Reads a float32 array and its manifest; `expected_len` checks the element count.
pub fn read_f32_array<M: DeserializeOwned>(bin: &Path, expected_len: impl Fn(&M) -> usize) -> Result<(Vec<f32>, M)> {
    let manifest: M = read_json(&sidecar_path(bin))?;
    let bytes = fs::read(bin).map_err(|e| Error::io(bin, e))?;
    let values = bytes_to_f32(&bytes)?;
    let want = expected_len(&manifest);
    if values.len() != want {
        return Err(Error::Data(format!("{}: manifest implies {want} values, file holds {}", bin.display(), values.len())));
    }
    Ok((values, manifest))
}

pub fn write_landmarks(bin: &Path, frames: &[Vec<[f64; 3]>]) -> Result<()> {
    let points = frames.first().map_or(0, Vec::len);
    if frames.iter().any(|f| f.len() != points) {
        return Err(Error::Data("landmark frames differ in point count".into()));
    }
    let flat: Vec<f32> = frames.iter().flatten().flatten().map(|&v| v as f32).collect();
    write_f32_array(bin, &flat, &LandmarkManifest { frames: frames.len(), points, dims: 3 })
}

pub fn read_landmarks(bin: &Path) -> Result<Vec<Vec<[f64; 3]>>> {
    let (values, m) = read_f32_array::<LandmarkManifest>(bin, |m| m.frames * m.points * m.dims)?;
    if m.dims != 3 {
        return Err(Error::Data(format!("landmarks must be 3-D, manifest says {}", m.dims)));
    }
    Ok(values
        .chunks_exact(m.points * 3)
        .map(|f| f.chunks_exact(3).map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect())
        .collect())
}

pub fn write_poses(bin: &Path, poses: &[[f64; 6]]) -> Result<()> {
    let flat: Vec<f32> = poses.iter().flatten().map(|&v| v as f32).collect();
    write_f32_array(bin, &flat, &PoseManifest { frames: poses.len(), dims: 6 })
}

pub fn read_poses(bin: &Path) -> Result<Vec<[f64; 6]>> {
    let (values, m) = read_f32_array::<PoseManifest>(bin, |m| m.frames * m.dims)?;
    if m.dims != 6 {
        return Err(Error::Data(format!("poses need 6 values per frame, manifest says {}", m.dims)));
    }
    Ok(values
        .chunks_exact(6)
        .map(|c| {
            let mut p = [0.0; 6];
            for (d, s) in p.iter_mut().zip(c) {
                *d = *s as f64;
            }
            p
        })
        .collect())
}

/// Mono PCM samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmAudio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Reads a 16-bit PCM WAV file, averaging channels to mono.
pub fn read_wav(path: &Path) -> Result<PcmAudio> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes).map_err(|msg| Error::Data(format!("{}: {msg}", path.display())))
}

fn parse_wav(bytes: &[u8]) -> std::result::Result<PcmAudio, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(pos + 4) as usize;
        let body = pos + 8;
        let end = (body + len).min(bytes.len());
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err("fmt chunk too short".into());
                }
                format = Some((u16_at(body), u16_at(body + 2), u32_at(body + 4), u16_at(body + 14)));
            }
            b"data" => {
                let (fmt, channels, rate, bits) = format.ok_or("data chunk before fmt chunk")?;
                if fmt != 1 || bits != 16 {
                    return Err(format!("only 16-bit PCM is supported (format {fmt}, {bits} bits)"));
                }
                if channels == 0 || rate == 0 {
                    return Err("zero channels or sample rate".into());
                }
                let ch = channels as usize;
                let samples = bytes[body..end]
                    .chunks_exact(2 * ch)
                    .map(|frame| {
                        let sum: f64 = frame
                            .chunks_exact(2)
                            .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0)
                            .sum();
                        sum / ch as f64
                    })
                    .collect();
                return Ok(PcmAudio { samples, sample_rate: rate });
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    Err("no data chunk".into())
}

/// Writes mono 16-bit PCM. Samples are clipped to `[-1, 1]`.
pub fn write_wav(path: &Path, audio: &PcmAudio) -> Result<()> {
    let data: Vec<u8> = audio
        .samples
        .iter()
        .flat_map(|&s| ((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).to_le_bytes())
        .collect();
    let mut out = Vec::with_capacity(44 + data.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&data);
    atomic_write(path, &out)
}

/// Channel-first image with values in `[-1, 1]`.
pub type Raster = Array3<f64>;

fn to_u8(v: f64) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8
}

/// Saves a 3-channel `[-1, 1]` raster as an 8-bit RGB PNG.
pub fn write_png(path: &Path, img: &Raster) -> Result<()> {
    let (c, h, w) = img.dim();
    if c != 3 && c != 1 {
        return Err(Error::shape("1 or 3 channels", c));
    }
    let mut buf = Vec::new();
    let mut cursor = std::io::Cursor::new(&mut buf);
    if c == 3 {
        let mut rgb = image::RgbImage::new(w as u32, h as u32);
        for (x, y, px) in rgb.enumerate_pixels_mut() {
            let (x, y) = (x as usize, y as usize);
            *px = image::Rgb([to_u8(img[[0, y, x]]), to_u8(img[[1, y, x]]), to_u8(img[[2, y, x]])]);
        }
        rgb.write_to(&mut cursor, image::ImageFormat::Png)?;
    } else {
        let mut gray = image::GrayImage::new(w as u32, h as u32);
        for (x, y, px) in gray.enumerate_pixels_mut() {
            *px = image::Luma([to_u8(img[[0, y as usize, x as usize]])]);
        }
        gray.write_to(&mut cursor, image::ImageFormat::Png)?;
    }
    atomic_write(path, &buf)
}

/// Loads a PNG as a 3-channel `[-1, 1]` raster.
pub fn read_png(path: &Path) -> Result<Raster> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = Raster::zeros((3, h as usize, w as usize));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] = px.0[c] as f64 / 255.0 * 2.0 - 1.0;
        }
    }
    Ok(out)
}

/// Reads an 8-bit label PNG as `(height, width, labels)`.
pub fn read_label_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

pub fn write_label_png(path: &Path, height: usize, width: usize, labels: &[u8]) -> Result<()> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, labels.to_vec())
        .ok_or_else(|| Error::shape(height * width, labels.len()))?;
    let mut buf = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png)?;
    atomic_write(path, &buf)
}

/// Condition tensors cached as float16: a JSON header `{shape}` and raw halfs.
pub fn write_f16_raster(bin: &Path, raster: &Raster) -> Result<()> {
    let bytes: Vec<u8> = raster
        .as_standard_layout()
        .iter()
        .flat_map(|&v| half::f16::from_f64(v).to_le_bytes())
        .collect();
    atomic_write(bin, &bytes)?;
    let (c, h, w) = raster.dim();
    write_json(&sidecar_path(bin), &serde_json::json!({ "shape": [c, h, w], "dtype": "float16" }))
}

pub fn read_f16_raster(bin: &Path) -> Result<Raster> {
    #[derive(Deserialize)]
    struct Header {
        shape: [usize; 3],
    }
    let header: Header = read_json(&sidecar_path(bin))?;
    let bytes = fs::read(bin).map_err(|e| Error::io(bin, e))?;
    let [c, h, w] = header.shape;
    if bytes.len() != c * h * w * 2 {
        return Err(Error::Data(format!("{}: expected {} bytes, found {}", bin.display(), c * h * w * 2, bytes.len())));
    }
    let data = bytes.chunks_exact(2).map(|b| half::f16::from_le_bytes([b[0], b[1]]).to_f64()).collect();
    Raster::from_shape_vec((c, h, w), data).map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_quantized_to_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let audio = PcmAudio { samples: vec![0.0, 0.5, -0.25, 1.0, -1.0], sample_rate: 16000 };
        write_wav(&path, &audio).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        for (a, b) in audio.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }

    #[test]
    fn landmark_and_pose_files() {
        let dir = tempfile::tempdir().unwrap();
        let lm = dir.path().join("landmarks.bin");
        let frames = vec![vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]; 3];
        write_landmarks(&lm, &frames).unwrap();
        assert_eq!(read_landmarks(&lm).unwrap(), frames);
        let m: LandmarkManifest = read_json(&sidecar_path(&lm)).unwrap();
        assert_eq!(m, LandmarkManifest { frames: 3, points: 2, dims: 3 });
        let poses = dir.path().join("poses.bin");
        write_poses(&poses, &[[0.5, 0.0, 0.0, 1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(read_poses(&poses).unwrap(), vec![[0.5, 0.0, 0.0, 1.0, 2.0, 3.0]]);
    }

    #[test]
    fn truncated_array_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let lm = dir.path().join("landmarks.bin");
        write_landmarks(&lm, &[vec![[1.0, 2.0, 3.0]]]).unwrap();
        fs::write(&lm, [0u8; 8]).unwrap();
        assert!(matches!(read_landmarks(&lm), Err(Error::Data(_))));
    }

    #[test]
    fn png_and_f16_rasters() {
        let dir = tempfile::tempdir().unwrap();
        let img = Raster::from_shape_fn((3, 4, 5), |(c, y, x)| (c as f64 * 0.3 + y as f64 * 0.1 - x as f64 * 0.2).clamp(-1.0, 1.0));
        let p = dir.path().join("f.png");
        write_png(&p, &img).unwrap();
        let back = read_png(&p).unwrap();
        assert!(img.iter().zip(back.iter()).all(|(a, b)| (a - b).abs() <= 1.0 / 255.0 + 1e-12));
        let c = dir.path().join("c.bin");
        write_f16_raster(&c, &img).unwrap();
        let back = read_f16_raster(&c).unwrap();
        assert!(img.iter().zip(back.iter()).all(|(a, b)| (a - b).abs() < 1e-3));
    }
}
