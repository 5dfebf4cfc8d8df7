//! Checkpoint files: a text architecture descriptor terminated by a line
//! `end`, followed immediately by the raw little-endian `f32` parameters.
//!
//! ```text
//! ffn-checkpoint 1
//! fov 17 17 9
//! channels 8
//! modules 3
//! dtype f32
//! tensor stem.weight 3 3 3 2 8
//! tensor stem.bias 8
//! ...
//! params 12345
//! end
//! ```
//!
//! Tensors appear in payload order; weight shapes are `(kx, ky, kz, c_in,
//! c_out)` row-major.

use std::fs;
use std::path::Path;

use super::conv::ConvLayer;
use super::model::{FfnModel, ModelSpec};
use crate::error::{Error, Result};

const MAGIC: &str = "ffn-checkpoint 1";

fn descriptor(model: &FfnModel<f32>) -> String {
    let spec = model.spec();
    let mut s = format!(
        "{MAGIC}\nfov {} {} {}\nchannels {}\nmodules {}\ndtype f32\n",
        spec.fov[0], spec.fov[1], spec.fov[2], spec.channels, spec.modules
    );
    for (name, layer) in model.layer_names().iter().zip(model.layers()) {
        let k = layer.kernel();
        s.push_str(&format!(
            "tensor {name}.weight {} {} {} {} {}\n",
            k[0],
            k[1],
            k[2],
            layer.c_in(),
            layer.c_out()
        ));
        s.push_str(&format!("tensor {name}.bias {}\n", layer.c_out()));
    }
    s.push_str(&format!("params {}\nend\n", model.param_count()));
    s
}

pub fn checkpoint_bytes(model: &FfnModel<f32>) -> Vec<u8> {
    let mut bytes = descriptor(model).into_bytes();
    for v in model.flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn save_checkpoint(model: &FfnModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

fn parse_usizes(value: &str, n: usize, line: usize) -> Result<Vec<usize>> {
    let parts: Vec<usize> = value
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line,
            reason: format!("expected integers, got `{value}`"),
        })?;
    if parts.len() != n {
        return Err(Error::Parse {
            line,
            reason: format!("expected {n} integers, got `{value}`"),
        });
    }
    Ok(parts)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<FfnModel<f32>> {
    // Locate the end of the descriptor.
    let marker = b"\nend\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Architecture("descriptor has no `end` line".into()))?;
    let text = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::Architecture("descriptor is not utf-8".into()))?;
    let payload = &bytes[split + marker.len()..];

    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(MAGIC) {
        return Err(Error::Architecture(format!("first line must be `{MAGIC}`")));
    }
    let (mut fov, mut channels, mut modules, mut params) = (None, None, None, None);
    let mut tensors: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "fov" => {
                let v = parse_usizes(value, 3, n)?;
                fov = Some([v[0], v[1], v[2]]);
            }
            "channels" => channels = Some(parse_usizes(value, 1, n)?[0]),
            "modules" => modules = Some(parse_usizes(value, 1, n)?[0]),
            "params" => params = Some(parse_usizes(value, 1, n)?[0]),
            "dtype" if value == "f32" => {}
            "dtype" => return Err(Error::UnsupportedDtype(value.to_string())),
            "tensor" => {
                let (name, shape) = value.split_once(' ').ok_or_else(|| Error::Parse {
                    line: n,
                    reason: "tensor line needs a name and a shape".into(),
                })?;
                let shape = shape
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<Vec<usize>, _>>()
                    .map_err(|_| Error::Parse {
                        line: n,
                        reason: format!("bad tensor shape `{shape}`"),
                    })?;
                tensors.push((name.to_string(), shape));
            }
            _ => {
                return Err(Error::Parse {
                    line: n,
                    reason: format!("unknown key `{key}`"),
                })
            }
        }
    }
    let missing = |k: &str| Error::Architecture(format!("descriptor lacks `{k}`"));
    let spec = ModelSpec {
        fov: fov.ok_or_else(|| missing("fov"))?,
        channels: channels.ok_or_else(|| missing("channels"))?,
        modules: modules.ok_or_else(|| missing("modules"))?,
    };
    let template = FfnModel::<f32>::zeros(spec)?;
    // The declared tensor list must be exactly what the architecture implies.
    let expected: Vec<(String, Vec<usize>)> = template
        .layer_names()
        .into_iter()
        .zip(template.layers())
        .flat_map(|(name, l)| {
            let k = l.kernel();
            [
                (format!("{name}.weight"), vec![k[0], k[1], k[2], l.c_in(), l.c_out()]),
                (format!("{name}.bias"), vec![l.c_out()]),
            ]
        })
        .collect();
    if tensors != expected {
        let first_diff = tensors
            .iter()
            .zip(&expected)
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("declared {} {:?}, architecture implies {} {:?}", a.0, a.1, b.0, b.1))
            .unwrap_or_else(|| format!("declared {} tensors, architecture implies {}", tensors.len(), expected.len()));
        return Err(Error::Architecture(first_diff));
    }
    let count = template.param_count();
    if params != Some(count) {
        return Err(Error::Architecture(format!(
            "descriptor declares {params:?} parameters, architecture implies {count}"
        )));
    }
    if payload.len() != count * 4 {
        return Err(Error::PayloadMismatch {
            expected: count,
            actual: payload.len() / 4,
        });
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let layers = template
        .layers()
        .into_iter()
        .map(|l| {
            let w = values.by_ref().take(l.weights().len()).collect();
            let b = values.by_ref().take(l.bias().len()).collect();
            ConvLayer::from_parts(l.kernel(), l.c_in(), l.c_out(), w, b)
        })
        .collect::<Result<Vec<_>>>()?;
    FfnModel::from_layers(spec, layers)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FfnModel<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

/// Loads a checkpoint and requires its architecture to equal `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelSpec) -> Result<FfnModel<f32>> {
    let model = load_checkpoint(path)?;
    if model.spec() != *expected {
        return Err(Error::Architecture(format!(
            "checkpoint architecture {:?} does not match expected {:?}",
            model.spec(),
            expected
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn spec() -> ModelSpec {
        ModelSpec {
            fov: [9, 9, 5],
            channels: 4,
            modules: 2,
        }
    }

    #[test]
    fn round_trip_preserves_forward() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let m = FfnModel::<f32>::init(spec(), 42).unwrap();
        save_checkpoint(&m, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back, m);
        let img = Grid::from_fn([9, 9, 5], |[x, y, z]| ((x + 2 * y + 3 * z) % 7) as f32 / 7.0);
        let mask = Grid::filled([9, 9, 5], 0.05);
        assert_eq!(m.forward(&img, &mask).unwrap(), back.forward(&img, &mask).unwrap());
    }

    #[test]
    fn saves_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = FfnModel::<f32>::init(spec(), 42).unwrap();
        save_checkpoint(&m, dir.path().join("a")).unwrap();
        save_checkpoint(&m, dir.path().join("b")).unwrap();
        assert_eq!(
            fs::read(dir.path().join("a")).unwrap(),
            fs::read(dir.path().join("b")).unwrap()
        );
    }

    #[test]
    fn mismatched_channel_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&FfnModel::<f32>::init(spec(), 1).unwrap(), &p).unwrap();
        let other = ModelSpec { channels: 8, ..spec() };
        assert!(matches!(load_checkpoint_for(&p, &other), Err(Error::Architecture(_))));

        // A descriptor whose channel line disagrees with its tensor list.
        let bytes = fs::read(&p).unwrap();
        let text = String::from_utf8_lossy(&bytes).replacen("channels 4", "channels 5", 1);
        let tampered: Vec<u8> = text.bytes().collect();
        let header_len = bytes.windows(5).position(|w| w == b"\nend\n").unwrap() + 5;
        let mut forged = tampered[..header_len].to_vec();
        forged.extend_from_slice(&bytes[header_len..]);
        assert!(matches!(parse_checkpoint(&forged), Err(Error::Architecture(_))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let m = FfnModel::<f32>::init(spec(), 1).unwrap();
        let mut bytes = checkpoint_bytes(&m);
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(parse_checkpoint(&bytes), Err(Error::PayloadMismatch { .. })));
    }
}
