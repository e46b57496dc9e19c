use std::io::{Read, Write};
use std::process::{Command, Stdio};

use crate::io::{decode_pnm, encode_pgm};
use crate::raster::{BinaryMask, PixelRect, RasterImage};

#[derive(Debug, thiserror::Error)]
pub enum RefinerError {
    #[error("refiner output is {got:?}, crop is {expected:?}")]
    WrongSize { expected: (u32, u32), got: (u32, u32) },
    #[error("external refiner: {0}")]
    External(String),
    #[error("unknown refiner {0:?}")]
    Unknown(String),
}

/// One crop handed to a refiner. Prompt coordinates are crop-local.
#[derive(Debug, Clone, Copy)]
pub struct CropRequest<'a> {
    pub image: &'a RasterImage,
    pub base: &'a BinaryMask,
    pub prompts: &'a [(u32, u32)],
    pub rect: PixelRect,
}

/// Prompt-driven mask refiner. Implementations must return a mask with the
/// crop's dimensions.
pub trait Refiner: Sync {
    fn name(&self) -> &str;
    fn refine(&self, req: &CropRequest<'_>) -> Result<BinaryMask, RefinerError>;
}

/// Returns the base crop unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn name(&self) -> &str {
        "identity"
    }

    fn refine(&self, req: &CropRequest<'_>) -> Result<BinaryMask, RefinerError> {
        Ok(req.base.clone())
    }
}

/// Dilates the base crop with a square of the given radius.
#[derive(Debug, Clone, Copy)]
pub struct DilateRefiner {
    pub radius: u32,
}

impl Default for DilateRefiner {
    fn default() -> Self {
        Self { radius: 1 }
    }
}

impl Refiner for DilateRefiner {
    fn name(&self) -> &str {
        "dilate"
    }

    fn refine(&self, req: &CropRequest<'_>) -> Result<BinaryMask, RefinerError> {
        Ok(req.base.dilate(self.radius))
    }
}

/// Adversarial: floods the whole crop.
#[derive(Debug, Clone, Copy, Default)]
pub struct FloodRefiner;

impl Refiner for FloodRefiner {
    fn name(&self) -> &str {
        "flood"
    }

    fn refine(&self, req: &CropRequest<'_>) -> Result<BinaryMask, RefinerError> {
        let (w, h) = req.base.dims();
        Ok(BinaryMask::from_fn(w, h, |_, _| true))
    }
}

/// Adversarial: thickens the base and punches a one-pixel hole at each of
/// the first `holes` prompts off the crop border. A pixel on the border
/// would open onto the outside instead of forming a hole.
#[derive(Debug, Clone, Copy)]
pub struct HoleRefiner {
    pub holes: usize,
}

impl Refiner for HoleRefiner {
    fn name(&self) -> &str {
        "holes"
    }

    fn refine(&self, req: &CropRequest<'_>) -> Result<BinaryMask, RefinerError> {
        let mut m = req.base.dilate(3);
        let (w, h) = m.dims();
        let interior = |&&(u, v): &&(u32, u32)| u > 0 && v > 0 && u + 1 < w && v + 1 < h;
        for &(u, v) in req.prompts.iter().filter(interior).take(self.holes) {
            m.set(u, v, false);
        }
        Ok(m)
    }
}

/// Runs a child process per crop. Request on stdin: the crop as binary PGM,
/// a newline, the prompt count, then one `u v` line per prompt. Response on
/// stdout: a PGM mask of the crop's size, binarized at 128.
#[derive(Debug, Clone)]
pub struct ExternalRefiner {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalRefiner {
    /// Splits a command line on whitespace.
    pub fn from_command_line(cmd: &str) -> Result<Self, RefinerError> {
        let mut parts = cmd.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| RefinerError::External("empty command".into()))?;
        Ok(Self {
            program,
            args: parts.collect(),
        })
    }
}

/// Serializes a refiner request in the external protocol.
pub fn encode_request(image: &RasterImage, prompts: &[(u32, u32)]) -> Vec<u8> {
    let mut out = encode_pgm(image);
    out.extend_from_slice(format!("\n{}\n", prompts.len()).as_bytes());
    for (u, v) in prompts {
        out.extend_from_slice(format!("{u} {v}\n").as_bytes());
    }
    out
}

/// Parses a request written by [`encode_request`].
pub fn decode_request(bytes: &[u8]) -> Result<(RasterImage, Vec<(u32, u32)>), RefinerError> {
    let (img, used) = decode_pnm(bytes).map_err(|e| RefinerError::External(e.to_string()))?;
    let text = std::str::from_utf8(&bytes[used..])
        .map_err(|_| RefinerError::External("prompt list is not UTF-8".into()))?;
    let mut nums = text.split_whitespace().map(|t| {
        t.parse::<u32>()
            .map_err(|_| RefinerError::External(format!("bad prompt token {t:?}")))
    });
    let count = nums
        .next()
        .ok_or_else(|| RefinerError::External("missing prompt count".into()))??;
    let mut prompts = Vec::with_capacity(count as usize);
    for _ in 0..count {
        match (nums.next(), nums.next()) {
            (Some(u), Some(v)) => prompts.push((u?, v?)),
            _ => return Err(RefinerError::External("truncated prompt list".into())),
        }
    }
    Ok((img, prompts))
}

impl Refiner for ExternalRefiner {
    fn name(&self) -> &str {
        "external"
    }

    fn refine(&self, req: &CropRequest<'_>) -> Result<BinaryMask, RefinerError> {
        let ext = |e: std::io::Error| RefinerError::External(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(ext)?;
        let request = encode_request(req.image, req.prompts);
        let mut stdin = child.stdin.take().expect("stdin is piped");
        // write from a separate thread so a child that streams output early
        // cannot deadlock against a full pipe
        let writer = std::thread::spawn(move || stdin.write_all(&request));
        let mut response = Vec::new();
        child
            .stdout
            .take()
            .expect("stdout is piped")
            .read_to_end(&mut response)
            .map_err(ext)?;
        let status = child.wait().map_err(ext)?;
        let _ = writer.join();
        if !status.success() {
            return Err(RefinerError::External(format!("{} exited with {status}", self.program)));
        }
        let (img, _) = decode_pnm(&response).map_err(|e| RefinerError::External(e.to_string()))?;
        Ok(BinaryMask::from_image(&img))
    }
}

/// Looks up a refiner by name: `identity`, `dilate`, `dilate:<r>`, `flood`,
/// `holes:<n>`, or `external:<command line>`.
pub fn refiner_by_name(name: &str) -> Result<Box<dyn Refiner>, RefinerError> {
    let unknown = || RefinerError::Unknown(name.to_owned());
    let (kind, arg) = match name.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (name, None),
    };
    Ok(match (kind, arg) {
        ("identity", None) => Box::new(IdentityRefiner),
        ("dilate", None) => Box::new(DilateRefiner::default()),
        ("dilate", Some(r)) => Box::new(DilateRefiner {
            radius: r.parse().map_err(|_| unknown())?,
        }),
        ("flood", None) => Box::new(FloodRefiner),
        ("holes", Some(n)) => Box::new(HoleRefiner {
            holes: n.parse().map_err(|_| unknown())?,
        }),
        ("external", Some(cmd)) => Box::new(ExternalRefiner::from_command_line(cmd)?),
        _ => return Err(unknown()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_round_trip() {
        let img = RasterImage::new(3, 2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let bytes = encode_request(&img, &[(0, 1), (2, 0)]);
        let (back, prompts) = decode_request(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(prompts, vec![(0, 1), (2, 0)]);
        assert!(decode_request(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn names() {
        for n in ["identity", "dilate", "dilate:3", "flood", "holes:3", "external:cat -"] {
            assert!(refiner_by_name(n).is_ok(), "{n}");
        }
        for n in ["nope", "dilate:x", "holes", "external:"] {
            assert!(refiner_by_name(n).is_err(), "{n}");
        }
    }
}
