//! Image preprocessing recipes: resize, center crop, per-channel
//! normalization, CHW float layout.

use image::imageops::{self, FilterType};
use image::RgbImage;

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];
const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
const CLIP_STD: [f32; 3] = [0.268_629_5, 0.261_302_6, 0.275_777_1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// Shorter side to 256 (bilinear), center crop 224, ImageNet statistics.
    Imagenet224,
    /// Shorter side to 224 (bicubic), center crop 224, CLIP statistics.
    Clip224,
    /// Straight resize to 32×32, ImageNet statistics. For mock backends.
    Mock32,
}

impl Recipe {
    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "imagenet-224" => Some(Recipe::Imagenet224),
            "clip-224" => Some(Recipe::Clip224),
            "mock-32" => Some(Recipe::Mock32),
            _ => None,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Recipe::Imagenet224 => "imagenet-224",
            Recipe::Clip224 => "clip-224",
            Recipe::Mock32 => "mock-32",
        }
    }

    pub fn side(self) -> u32 {
        match self {
            Recipe::Imagenet224 | Recipe::Clip224 => 224,
            Recipe::Mock32 => 32,
        }
    }

    /// Length of [`Recipe::apply`]'s output.
    pub fn output_len(self) -> usize {
        3 * (self.side() as usize).pow(2)
    }

    pub fn apply(self, img: &RgbImage) -> Vec<f32> {
        let (framed, mean, std) = match self {
            Recipe::Imagenet224 => (
                shorter_side_then_crop(img, 256, 224, FilterType::Triangle),
                IMAGENET_MEAN,
                IMAGENET_STD,
            ),
            Recipe::Clip224 => (
                shorter_side_then_crop(img, 224, 224, FilterType::CatmullRom),
                CLIP_MEAN,
                CLIP_STD,
            ),
            Recipe::Mock32 => (
                imageops::resize(img, 32, 32, FilterType::Triangle),
                IMAGENET_MEAN,
                IMAGENET_STD,
            ),
        };
        let plane = (framed.width() * framed.height()) as usize;
        let mut out = vec![0.0f32; 3 * plane];
        for (i, px) in framed.pixels().enumerate() {
            for c in 0..3 {
                out[c * plane + i] = (f32::from(px[c]) / 255.0 - mean[c]) / std[c];
            }
        }
        out
    }
}

fn shorter_side_then_crop(img: &RgbImage, shorter: u32, crop: u32, filter: FilterType) -> RgbImage {
    let (w, h) = img.dimensions();
    let scale = f64::from(shorter) / f64::from(w.min(h).max(1));
    let nw = ((f64::from(w) * scale).round() as u32).max(crop);
    let nh = ((f64::from(h) * scale).round() as u32).max(crop);
    let resized = imageops::resize(img, nw, nh, filter);
    imageops::crop_imm(&resized, (nw - crop) / 2, (nh - crop) / 2, crop, crop).to_image()
}
