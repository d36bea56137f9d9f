use factify_core::rng::seeded;
use image::RgbImage;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::preprocess::Recipe;
use super::{EncodeInput, Encoder, EncoderError, EncoderSpec};

const MARKER_OPEN: char = '⟦';
const MARKER_CLOSE: char = '⟧';
const GROUP_BITS: u32 = 24;

/// Marker understood by the planted backend: texts sharing `group` map to
/// vectors whose cosine with the group's anchor is `similarity` (quantized to
/// 1/255). The marker is made only of non-alphanumeric characters, so the
/// tokenizer, and therefore ROUGE and length features, never see it.
pub fn planted_marker(group: u32, similarity: f64) -> String {
    assert!(group < 1 << GROUP_BITS, "planted group out of range");
    let q = (similarity.clamp(0.0, 1.0) * 255.0).round() as u32;
    let bits = |v: u32, n: u32| {
        (0..n)
            .rev()
            .map(move |i| if v >> i & 1 == 1 { '+' } else { '~' })
    };
    let mut s = String::new();
    s.push(MARKER_OPEN);
    s.extend(bits(group, GROUP_BITS));
    s.push('/');
    s.extend(bits(q, 8));
    s.push(MARKER_CLOSE);
    s
}

/// Inverse of [`planted_marker`]: `(group, similarity)`.
pub fn parse_marker(text: &str) -> Option<(u32, f64)> {
    let start = text.find(MARKER_OPEN)? + MARKER_OPEN.len_utf8();
    let end = start + text[start..].find(MARKER_CLOSE)?;
    let (g, q) = text[start..end].split_once('/')?;
    let read = |s: &str, n: usize| -> Option<u32> {
        if s.chars().count() != n {
            return None;
        }
        s.chars().try_fold(0u32, |acc, c| match c {
            '+' => Some(acc << 1 | 1),
            '~' => Some(acc << 1),
            _ => None,
        })
    };
    let group = read(g, GROUP_BITS as usize)?;
    let q = read(q, 8)?;
    Some((group, f64::from(q) / 255.0))
}

fn seed_of(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

fn uniform_vec(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = seeded(seed, 0);
    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn salt(spec: &EncoderSpec) -> String {
    format!("{}|{}", spec.backend_id, spec.cache_version())
}

fn text_of<'a>(spec: &EncoderSpec, input: EncodeInput<'a>) -> Result<&'a str, EncoderError> {
    match input {
        EncodeInput::Text(t) => Ok(t),
        EncodeInput::Image { .. } => Err(EncoderError::WrongModality {
            backend: spec.backend_id.clone(),
            expected: spec.modality,
        }),
    }
}

/// Deterministic vectors seeded from a hash of the input.
#[derive(Debug)]
pub struct HashEncoder {
    spec: EncoderSpec,
    salt: String,
}

impl HashEncoder {
    pub fn new(spec: EncoderSpec) -> Self {
        let salt = salt(&spec);
        HashEncoder { spec, salt }
    }
}

impl Encoder for HashEncoder {
    fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    fn encode_raw(&mut self, input: EncodeInput<'_>) -> Result<Vec<f32>, EncoderError> {
        let seed = match input {
            EncodeInput::Text(t) => seed_of(&[self.salt.as_bytes(), b"text", t.as_bytes()]),
            EncodeInput::Image { raster, .. } => {
                seed_of(&[self.salt.as_bytes(), b"image", raster.as_raw()])
            }
        };
        Ok(uniform_vec(seed, self.spec.dim)
            .into_iter()
            .map(|v| v as f32)
            .collect())
    }
}

/// Text backend with controllable pairwise similarity; see
/// [`planted_marker`]. Unmarked text falls back to hash vectors.
///
/// A marked text's vector is `s * anchor + sqrt(1 - s^2) * n` where `n` is a
/// unit vector orthogonal to the anchor.
#[derive(Debug)]
pub struct PlantedEncoder {
    spec: EncoderSpec,
    salt: String,
}

impl PlantedEncoder {
    pub fn new(spec: EncoderSpec) -> Self {
        let salt = salt(&spec);
        PlantedEncoder { spec, salt }
    }

    fn planted(&self, text: &str, group: u32, similarity: f64) -> Vec<f64> {
        let dim = self.spec.dim;
        let anchor = unit(uniform_vec(
            seed_of(&[self.salt.as_bytes(), b"anchor", &group.to_le_bytes()]),
            dim,
        ));
        if similarity >= 1.0 || dim == 1 {
            return anchor;
        }
        // The off-anchor part leans on a direction shared by all groups, so
        // the similarity is also linearly readable from one side alone.
        let shared = unit(uniform_vec(
            seed_of(&[self.salt.as_bytes(), b"shared"]),
            dim,
        ));
        let own = unit(uniform_vec(
            seed_of(&[self.salt.as_bytes(), b"noise", text.as_bytes()]),
            dim,
        ));
        let mut noise: Vec<f64> = shared.iter().zip(&own).map(|(s, o)| s + 0.5 * o).collect();
        let along: f64 = noise.iter().zip(&anchor).map(|(a, b)| a * b).sum();
        noise
            .iter_mut()
            .zip(&anchor)
            .for_each(|(n, a)| *n -= along * a);
        let noise = unit(noise);
        let orth = (1.0 - similarity * similarity).sqrt();
        anchor
            .iter()
            .zip(&noise)
            .map(|(a, n)| similarity * a + orth * n)
            .collect()
    }
}

impl Encoder for PlantedEncoder {
    fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    fn encode_raw(&mut self, input: EncodeInput<'_>) -> Result<Vec<f32>, EncoderError> {
        let text = text_of(&self.spec, input)?;
        let v = match parse_marker(text) {
            Some((group, sim)) => self.planted(text, group, sim),
            None => uniform_vec(
                seed_of(&[self.salt.as_bytes(), b"text", text.as_bytes()]),
                self.spec.dim,
            ),
        };
        Ok(v.into_iter().map(|x| x as f32).collect())
    }
}

/// Fixed random projection of preprocessed pixels. Approximately preserves
/// angles, so near-duplicate images get high cosine.
#[derive(Debug)]
pub struct ProjectionEncoder {
    spec: EncoderSpec,
    recipe: Recipe,
    matrix: Vec<f32>,
}

impl ProjectionEncoder {
    pub fn new(spec: EncoderSpec) -> Result<Self, EncoderError> {
        let recipe_id = spec.recipe.as_deref().unwrap_or("mock-32");
        let recipe = Recipe::from_id(recipe_id)
            .ok_or_else(|| EncoderError::InvalidSpec(format!("unknown recipe {recipe_id:?}")))?;
        let n = recipe.output_len();
        let mut rng = seeded(seed_of(&[salt(&spec).as_bytes(), b"projection"]), 0);
        let scale = 1.0 / (n as f64).sqrt();
        let matrix = (0..spec.dim * n)
            .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * scale) as f32)
            .collect();
        Ok(ProjectionEncoder {
            spec,
            recipe,
            matrix,
        })
    }

    fn project(&self, raster: &RgbImage) -> Vec<f32> {
        let x = self.recipe.apply(raster);
        self.matrix
            .chunks_exact(x.len())
            .map(|row| {
                row.iter()
                    .zip(&x)
                    .map(|(w, v)| f64::from(*w) * f64::from(*v))
                    .sum::<f64>() as f32
            })
            .collect()
    }
}

impl Encoder for ProjectionEncoder {
    fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    fn encode_raw(&mut self, input: EncodeInput<'_>) -> Result<Vec<f32>, EncoderError> {
        match input {
            EncodeInput::Image { raster, .. } => {
                if raster.width() == 0 || raster.height() == 0 {
                    return Err(EncoderError::EncodingFailure {
                        backend: self.spec.backend_id.clone(),
                        reason: "empty raster".into(),
                    });
                }
                Ok(self.project(raster))
            }
            EncodeInput::Text(_) => Err(EncoderError::WrongModality {
                backend: self.spec.backend_id.clone(),
                expected: self.spec.modality,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{encode_image, encode_text, BackendKind, Modality};
    use super::*;
    use factify_core::lexical::tokenize;
    use factify_core::similarity::cosine;

    fn spec(kind: BackendKind, modality: Modality, dim: usize) -> EncoderSpec {
        EncoderSpec {
            backend_id: "t".into(),
            kind,
            modality,
            dim,
            version: "1".into(),
            recipe: None,
            asset: None,
        }
    }

    #[test]
    fn marker_round_trip_and_invisible_to_tokenizer() {
        for (g, s) in [(0, 0.0), (12345, 0.5), ((1 << 24) - 1, 1.0)] {
            let m = planted_marker(g, s);
            let (g2, s2) = parse_marker(&format!("some words {m} more")).unwrap();
            assert_eq!(g2, g);
            assert!((s2 - s).abs() <= 0.5 / 255.0);
            assert!(tokenize(&m).is_empty());
        }
        assert_eq!(parse_marker("no marker here"), None);
        assert_eq!(parse_marker("⟦+~/+⟧"), None);
    }

    #[test]
    fn planted_cosine_matches_prescription() {
        let mut enc = PlantedEncoder::new(spec(BackendKind::Planted, Modality::Text, 64));
        let anchor = format!("claim words {}", planted_marker(7, 1.0));
        let a = encode_text(&mut enc, &anchor).unwrap();
        for q in [0u32, 60, 128, 230, 255] {
            let s = f64::from(q) / 255.0;
            let doc = format!("document words {}", planted_marker(7, s));
            let d = encode_text(&mut enc, &doc).unwrap();
            assert!((a.cosine(&d).unwrap() - s).abs() < 1e-5, "q={q}");
        }
        // self-similarity is exact up to f32 rounding
        assert!((a.cosine(&a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn projection_keeps_near_duplicates_close() {
        let mut enc =
            ProjectionEncoder::new(spec(BackendKind::Projection, Modality::Image, 64)).unwrap();
        let mut a = RgbImage::new(16, 16);
        for (x, y, p) in a.enumerate_pixels_mut() {
            *p = image::Rgb([(x * 16) as u8, (y * 16) as u8, 128]);
        }
        let mut b = a.clone();
        b.get_pixel_mut(3, 3).0 = [0, 0, 0];
        let mut c = RgbImage::new(16, 16);
        for (x, y, p) in c.enumerate_pixels_mut() {
            *p = image::Rgb([255 - (y * 16) as u8, 40, (x * 16) as u8]);
        }
        let ea = encode_image(&mut enc, "a", &a).unwrap();
        let eb = encode_image(&mut enc, "b", &b).unwrap();
        let ec = encode_image(&mut enc, "c", &c).unwrap();
        assert_eq!(ea.dim(), 64);
        let near = cosine(ea.values(), eb.values()).unwrap();
        let far = cosine(ea.values(), ec.values()).unwrap();
        assert!(near > 0.98 && near > far + 0.2, "near {near} far {far}");
        assert_eq!(encode_image(&mut enc, "a", &a).unwrap(), ea);
    }
}
