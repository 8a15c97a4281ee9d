//! Deterministic mock backend.
//!
//! The mock simulates every backend kind as a pure function of its seed and
//! the request, so full pipelines run offline and reproduce exactly.
//!
//! It maintains a dictionary of up to 64 *concept tags*, each owning one
//! axis of a 64-dimensional space (exactly orthonormal directions). Images
//! are addressed as `mock://<tag>?sigma=<s>&salt=<n>` and synthesized as
//! small PNGs that carry their tag, noise level and salt in the first pixel
//! row, so the mock "models" genuinely work from the image bytes they are
//! given:
//!
//! - **embed_image**: `unit((1 - sigma) * e_tag + sigma * g)` with `g` a
//!   seeded standard normal vector — noisy but centred on the tag's axis;
//! - **embed_text**: the tag axis `e_tag` if the text contains a registered
//!   tag verbatim, otherwise a seeded random unit vector;
//! - **caption**: `an image with <tag>`;
//! - **vqa**: yes iff the question mentions the image's tag;
//! - **chat**: recognizes the proposer, ranker and judge prompt shapes and
//!   answers them plausibly (proposals list the configured distractor tags
//!   *before* the planted difference, so ranking has real work to do).
//!
//! Individual requests can be overridden with scripted fixtures keyed by
//! the request's cache key.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use image::{DynamicImage, Rgb, RgbImage};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{BackendKind, GatewayRequest, Transport, TransportError};
use crate::seeds;

/// Dimension of the mock embedding space; also the concept capacity.
pub const MOCK_DIM: usize = 64;

const IMG_SIZE: u32 = 64;
const MAX_TAG_LEN: usize = (IMG_SIZE as usize) - 9;

/// Default distractor concepts used when a run does not configure its own.
pub const DEFAULT_DISTRACTORS: [&str; 9] = [
    "ancient stone bridges",
    "bicycles leaning on walls",
    "bowls of ramen",
    "foggy mountain trails",
    "neon street signs",
    "origami cranes",
    "sailboats at dusk",
    "spiral staircases",
    "wildflower meadows",
];

/// Parsed `mock://` image source.
#[derive(Debug, Clone, PartialEq)]
pub struct MockSource {
    pub tag: String,
    pub sigma: f64,
    pub salt: u32,
}

impl MockSource {
    pub fn new(tag: impl Into<String>, sigma: f64, salt: u32) -> Self {
        MockSource { tag: tag.into(), sigma, salt }
    }

    pub fn parse(source: &str) -> Result<Self, String> {
        let rest = source
            .strip_prefix("mock://")
            .ok_or_else(|| format!("not a mock source: {source:?}"))?;
        let (tag, query) = match rest.split_once('?') {
            Some((t, q)) => (t, q),
            None => (rest, ""),
        };
        if tag.is_empty() {
            return Err(format!("mock source has no tag: {source:?}"));
        }
        let mut sigma = 0.0;
        let mut salt = 0u32;
        for part in query.split('&').filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some(("sigma", v)) => {
                    sigma = v.parse().map_err(|_| format!("bad sigma in {source:?}"))?
                }
                Some(("salt", v)) => {
                    salt = v.parse().map_err(|_| format!("bad salt in {source:?}"))?
                }
                _ => return Err(format!("unknown parameter {part:?} in {source:?}")),
            }
        }
        if !(0.0..=1.0).contains(&sigma) {
            return Err(format!("sigma must be in [0, 1], got {sigma}"));
        }
        Ok(MockSource { tag: tag.to_lowercase(), sigma, salt })
    }

    pub fn to_source(&self) -> String {
        format!("mock://{}?sigma={}&salt={}", self.tag, self.sigma, self.salt)
    }

    fn sigma_q(&self) -> u16 {
        (self.sigma * 10_000.0).round() as u16
    }
}

pub struct MockBackend {
    seed: u64,
    concepts: Mutex<Vec<String>>,
    distractors: Vec<String>,
    fixtures: Mutex<HashMap<String, Vec<u8>>>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Arc<Self> {
        Self::with_distractors(seed, &DEFAULT_DISTRACTORS.map(String::from))
    }

    /// Mock with a custom distractor vocabulary (pre-registered as concepts).
    pub fn with_distractors(seed: u64, distractors: &[String]) -> Arc<Self> {
        let distractors: Vec<String> = distractors.iter().map(|d| d.to_lowercase()).collect();
        Arc::new(MockBackend {
            seed,
            concepts: Mutex::new(distractors.clone()),
            distractors,
            fixtures: Mutex::new(HashMap::new()),
        })
    }

    /// Pre-register concept tags (idempotent). Registering everything a run
    /// will touch up front keeps concept axes independent of request order.
    pub fn register_concepts<I: IntoIterator<Item = S>, S: AsRef<str>>(&self, tags: I) {
        for tag in tags {
            let _ = self.axis_of(&tag.as_ref().to_lowercase());
        }
    }

    /// Scripted override: this exact request will answer with `response`.
    pub fn set_fixture(&self, request: &GatewayRequest, response: &[u8]) {
        self.fixtures
            .lock()
            .unwrap()
            .insert(request.cache_key(), response.to_vec());
    }

    /// Identity string used as the gateway model id; distinct seeds or
    /// concept dictionaries get distinct cache namespaces.
    pub fn fingerprint(&self) -> String {
        let concepts = self.concepts.lock().unwrap();
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for c in concepts.iter() {
            h.update(c.as_bytes());
            h.update([0]);
        }
        format!("mock-{}", &hex::encode(h.finalize())[..12])
    }

    fn axis_of(&self, tag: &str) -> Result<usize, TransportError> {
        let mut concepts = self.concepts.lock().unwrap();
        if let Some(idx) = concepts.iter().position(|c| c == tag) {
            return Ok(idx);
        }
        if concepts.len() >= MOCK_DIM {
            return Err(TransportError::fatal(format!(
                "mock concept capacity ({MOCK_DIM}) exceeded registering {tag:?}"
            )));
        }
        concepts.push(tag.to_string());
        Ok(concepts.len() - 1)
    }

    /// Longest registered tag contained in `text` (lowercased); ties go to
    /// the lexicographically first.
    fn registered_tag_in(&self, text: &str) -> Option<String> {
        let text = text.to_lowercase();
        let concepts = self.concepts.lock().unwrap();
        let mut best: Option<&String> = None;
        for tag in concepts.iter() {
            if text.contains(tag.as_str()) {
                let better = match best {
                    None => true,
                    Some(b) => {
                        tag.len() > b.len() || (tag.len() == b.len() && tag < b)
                    }
                };
                if better {
                    best = Some(tag);
                }
            }
        }
        best.cloned()
    }

    // ---- image synthesis ----

    /// Render the PNG for a mock source. The first pixel row encodes
    /// `(tag, sigma, salt)` in the red channel; the body is a solid color
    /// derived from the tag.
    pub fn synthesize_png(src: &MockSource) -> Result<Vec<u8>, TransportError> {
        if src.tag.len() > MAX_TAG_LEN {
            return Err(TransportError::fatal(format!(
                "mock tag too long ({} > {MAX_TAG_LEN} bytes): {:?}",
                src.tag.len(),
                src.tag
            )));
        }
        let mut header = vec![b'M', b'K', src.tag.len() as u8];
        header.extend_from_slice(src.tag.as_bytes());
        header.extend_from_slice(&src.sigma_q().to_le_bytes());
        header.extend_from_slice(&src.salt.to_le_bytes());

        let tag_hash = Sha256::digest(src.tag.as_bytes());
        let body = Rgb([tag_hash[0], tag_hash[1], tag_hash[2]]);
        let mut img = RgbImage::from_pixel(IMG_SIZE, IMG_SIZE, body);
        for x in 0..IMG_SIZE {
            let byte = header.get(x as usize).copied().unwrap_or(0);
            img.put_pixel(x, 0, Rgb([byte, 0, 0]));
        }
        let mut out = Vec::new();
        DynamicImage::ImageRgb8(img)
            .write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
            .map_err(|e| TransportError::fatal(format!("mock png encode: {e}")))?;
        Ok(out)
    }

    /// Recover `(tag, sigma, salt)` from mock image bytes.
    pub fn decode_png(bytes: &[u8]) -> Result<MockSource, TransportError> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| TransportError::fatal(format!("mock cannot decode image: {e}")))?
            .to_rgb8();
        if img.width() < IMG_SIZE || img.height() < 1 {
            return Err(TransportError::fatal("image too small to be a mock image"));
        }
        let row: Vec<u8> = (0..IMG_SIZE).map(|x| img.get_pixel(x, 0).0[0]).collect();
        if row[0] != b'M' || row[1] != b'K' {
            return Err(TransportError::fatal(
                "image lacks the mock header (not generated by the mock backend?)",
            ));
        }
        let len = row[2] as usize;
        if len > MAX_TAG_LEN {
            return Err(TransportError::fatal("corrupt mock header"));
        }
        let tag = String::from_utf8(row[3..3 + len].to_vec())
            .map_err(|_| TransportError::fatal("corrupt mock tag"))?;
        let sigma_q = u16::from_le_bytes([row[3 + len], row[4 + len]]);
        let salt = u32::from_le_bytes([
            row[5 + len],
            row[6 + len],
            row[7 + len],
            row[8 + len],
        ]);
        Ok(MockSource {
            tag,
            sigma: sigma_q as f64 / 10_000.0,
            salt,
        })
    }

    // ---- model behaviors ----

    fn embed_image(&self, src: &MockSource) -> Result<Vec<f64>, TransportError> {
        let axis = self.axis_of(&src.tag)?;
        let sigma = src.sigma;
        let mut rng = seeds::rng_keyed(
            self.seed,
            "mock-image-noise",
            &format!("{}|{}|{}", src.tag, src.sigma_q(), src.salt),
        );
        let mut v = vec![0.0f64; MOCK_DIM];
        for item in v.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *item = sigma * g;
        }
        v[axis] += 1.0 - sigma;
        normalize(&mut v);
        Ok(v)
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        if let Some(tag) = self.registered_tag_in(text) {
            let axis = self.axis_of(&tag)?;
            let mut v = vec![0.0f64; MOCK_DIM];
            v[axis] = 1.0;
            return Ok(v);
        }
        let mut rng = seeds::rng_keyed(self.seed, "mock-text-embed", text);
        let mut v = vec![0.0f64; MOCK_DIM];
        for item in v.iter_mut() {
            *item = rng.sample(StandardNormal);
        }
        normalize(&mut v);
        Ok(v)
    }

    fn chat(&self, request: &GatewayRequest) -> Result<Vec<u8>, TransportError> {
        let prompt = last_user_content(request)?;
        if prompt.contains("Ground truth:") && prompt.contains("Prediction:") {
            return Ok(self.judge_reply(&prompt).into_bytes());
        }
        if prompt.contains("Caption:") && prompt.contains("Property:") {
            return Ok(self.caption_qa_reply(&prompt).into_bytes());
        }
        if prompt.contains("top half") {
            return Ok(self.grid_proposals(&prompt).into_bytes());
        }
        if prompt.contains("Group A:") {
            return Ok(self.caption_proposals(&prompt).into_bytes());
        }
        Ok(b"ok".to_vec())
    }

    fn judge_reply(&self, prompt: &str) -> String {
        let truth = normalize_phrase(line_value(prompt, "Ground truth:").unwrap_or_default());
        let predicted = normalize_phrase(line_value(prompt, "Prediction:").unwrap_or_default());
        if truth.is_empty() || predicted.is_empty() {
            return "0".into();
        }
        if truth == predicted {
            "1".into()
        } else if truth.contains(&predicted) || predicted.contains(&truth) {
            "0.5".into()
        } else {
            "0".into()
        }
    }

    fn caption_qa_reply(&self, prompt: &str) -> String {
        let caption = line_value(prompt, "Caption:").unwrap_or_default().to_lowercase();
        let property = line_value(prompt, "Property:").unwrap_or_default().to_lowercase();
        let concepts = self.concepts.lock().unwrap();
        let shared = concepts
            .iter()
            .any(|tag| caption.contains(tag.as_str()) && property.contains(tag.as_str()));
        if shared { "Yes".into() } else { "No".into() }
    }

    /// Proposals for a captions prompt: count which concept separates the
    /// Group A captions from Group B, then answer with the configured
    /// distractors first and the best-separating concept *last*.
    fn caption_proposals(&self, prompt: &str) -> String {
        let n = requested_count(prompt).unwrap_or(10);
        let (captions_a, captions_b) = caption_sections(prompt);

        let mut candidates: std::collections::BTreeSet<String> = self
            .concepts
            .lock()
            .unwrap()
            .iter()
            .cloned()
            .collect();
        for line in captions_a.iter().chain(&captions_b) {
            if let Some(rest) = line.to_lowercase().split_once("an image with ").map(|x| x.1.to_string()) {
                let tag = rest.trim().trim_end_matches(['.', '!', '?']).to_string();
                if !tag.is_empty() && tag.len() <= MAX_TAG_LEN {
                    candidates.insert(tag);
                }
            }
        }

        let count = |tag: &str, captions: &[String]| {
            captions.iter().filter(|c| c.to_lowercase().contains(tag)).count() as i64
        };
        let mut planted: Option<(i64, String)> = None;
        for tag in candidates {
            let ca = count(&tag, &captions_a);
            let cb = count(&tag, &captions_b);
            if ca + cb == 0 {
                continue;
            }
            let diff = ca - cb;
            if planted.as_ref().map_or(true, |(best, _)| diff > *best) {
                planted = Some((diff, tag));
            }
        }

        let mut lines: Vec<String> = Vec::new();
        let quota = if planted.is_some() { n.saturating_sub(1) } else { n };
        for d in self.distractors.iter().take(quota) {
            lines.push(format!("images with {d}"));
        }
        if let Some((_, tag)) = planted {
            lines.push(format!("images with {tag}"));
        }
        numbered(&lines)
    }

    /// Proposals for a grid prompt: every registered non-distractor concept,
    /// again preceded by distractors.
    fn grid_proposals(&self, prompt: &str) -> String {
        let n = requested_count(prompt).unwrap_or(10);
        let concepts = self.concepts.lock().unwrap();
        let non_distractors: Vec<String> = concepts
            .iter()
            .filter(|c| !self.distractors.contains(c))
            .cloned()
            .collect();
        drop(concepts);
        let keep = non_distractors.len().min(n);
        let mut lines: Vec<String> = self
            .distractors
            .iter()
            .take(n - keep)
            .map(|d| format!("images with {d}"))
            .collect();
        lines.extend(
            non_distractors
                .into_iter()
                .take(keep)
                .map(|t| format!("images with {t}")),
        );
        if lines.is_empty() {
            lines.push("images with something".into());
        }
        numbered(&lines)
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

fn numbered(lines: &[String]) -> String {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Normalization used by the mock judge: lowercase, collapsed whitespace,
/// no terminal punctuation.
fn normalize_phrase(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?', ';', ':', ','])
        .to_string()
}

fn line_value<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.trim().strip_prefix(label))
        .map(str::trim)
}

fn requested_count(prompt: &str) -> Option<usize> {
    let rest = prompt.split_once("Propose up to ")?.1;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Captions listed under "Group A:" / "Group B:", one per "- " line.
fn caption_sections(prompt: &str) -> (Vec<String>, Vec<String>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut current: Option<&mut Vec<String>> = None;
    for line in prompt.lines() {
        let t = line.trim();
        if t == "Group A:" {
            current = Some(&mut a);
        } else if t == "Group B:" {
            current = Some(&mut b);
        } else if let Some(rest) = t.strip_prefix("- ") {
            if let Some(section) = current.as_deref_mut() {
                section.push(rest.to_string());
            }
        }
    }
    (a, b)
}

fn last_user_content(request: &GatewayRequest) -> Result<String, TransportError> {
    let messages = request.payload["messages"]
        .as_array()
        .ok_or_else(|| TransportError::fatal("chat payload has no messages"))?;
    messages
        .iter()
        .rev()
        .find(|m| m["role"] == "user")
        .and_then(|m| m["content"].as_str())
        .map(str::to_string)
        .ok_or_else(|| TransportError::fatal("chat payload has no user message"))
}

impl Transport for MockBackend {
    fn execute(&self, request: &GatewayRequest) -> Result<Vec<u8>, TransportError> {
        if let Some(fixed) = self.fixtures.lock().unwrap().get(&request.cache_key()) {
            return Ok(fixed.clone());
        }
        match request.kind {
            BackendKind::Fetch => {
                let source = request.payload["source"]
                    .as_str()
                    .ok_or_else(|| TransportError::fatal("fetch payload has no source"))?;
                let src = MockSource::parse(source).map_err(TransportError::fatal)?;
                self.axis_of(&src.tag)?;
                Self::synthesize_png(&src)
            }
            BackendKind::Caption => {
                let src = Self::decode_png(attachment(request)?)?;
                self.axis_of(&src.tag)?;
                Ok(format!("an image with {}", src.tag).into_bytes())
            }
            BackendKind::EmbedImage => {
                let src = Self::decode_png(attachment(request)?)?;
                let v = self.embed_image(&src)?;
                Ok(serde_json::to_vec(&v).expect("vector serializes"))
            }
            BackendKind::EmbedText => {
                let text = request.payload["input"]
                    .as_str()
                    .ok_or_else(|| TransportError::fatal("embed payload has no input"))?;
                let v = self.embed_text(text)?;
                Ok(serde_json::to_vec(&v).expect("vector serializes"))
            }
            BackendKind::Vqa => {
                let src = Self::decode_png(attachment(request)?)?;
                self.axis_of(&src.tag)?;
                let question = request.payload["question"]
                    .as_str()
                    .ok_or_else(|| TransportError::fatal("vqa payload has no question"))?
                    .to_lowercase();
                Ok(if question.contains(&src.tag) { b"Yes".to_vec() } else { b"No".to_vec() })
            }
            BackendKind::Chat => self.chat(request),
        }
    }

    fn describe(&self) -> String {
        format!("mock backend (seed {})", self.seed)
    }
}

fn attachment(request: &GatewayRequest) -> Result<&[u8], TransportError> {
    request
        .attachments
        .first()
        .map(|a| a.bytes.as_slice())
        .ok_or_else(|| TransportError::fatal("request carries no image attachment"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Gateway;
    use crate::model::ImageRecord;

    fn record(tag: &str, sigma: f64, salt: u32) -> ImageRecord {
        ImageRecord::new(
            format!("{tag}-{salt}"),
            MockSource::new(tag, sigma, salt).to_source(),
        )
    }

    #[test]
    fn source_round_trip() {
        let src = MockSource::new("cats", 0.1, 42);
        assert_eq!(MockSource::parse(&src.to_source()).unwrap(), src);
        let bare = MockSource::parse("mock://dogs").unwrap();
        assert_eq!(bare.tag, "dogs");
        assert_eq!(bare.sigma, 0.0);
        assert!(MockSource::parse("file://x").is_err());
        assert!(MockSource::parse("mock://x?sigma=2.0").is_err());
        assert!(MockSource::parse("mock://x?bogus=1").is_err());
    }

    #[test]
    fn png_header_round_trip() {
        let src = MockSource::new("practicing yoga", 0.25, 7);
        let png = MockBackend::synthesize_png(&src).unwrap();
        let back = MockBackend::decode_png(&png).unwrap();
        assert_eq!(back.tag, "practicing yoga");
        assert_eq!(back.salt, 7);
        assert!((back.sigma - 0.25).abs() < 1e-9);
    }

    #[test]
    fn image_embedding_is_deterministic_across_instances() {
        let a = Gateway::mock(MockBackend::new(5));
        let b = Gateway::mock(MockBackend::new(5));
        let rec = record("cats", 0.3, 11);
        assert_eq!(a.embed_image(&rec).unwrap(), b.embed_image(&rec).unwrap());
        let other_seed = Gateway::mock(MockBackend::new(6));
        assert_ne!(a.embed_image(&rec).unwrap(), other_seed.embed_image(&rec).unwrap());
    }

    #[test]
    fn zero_noise_image_sits_exactly_on_its_axis() {
        let mock = MockBackend::new(1);
        let gw = Gateway::mock(mock.clone());
        let e_img = gw.embed_image(&record("cats", 0.0, 3)).unwrap();
        let e_txt = gw.embed_text("a photo full of cats").unwrap();
        assert_eq!(e_img.dot(&e_txt).unwrap(), 1.0);
    }

    #[test]
    fn registered_text_embeds_as_the_axis_and_unregistered_is_random_unit() {
        let mock = MockBackend::new(9);
        let gw = Gateway::mock(mock.clone());
        gw.embed_image(&record("cats", 0.1, 0)).unwrap(); // registers "cats"

        let on_axis = gw.embed_text("images with cats").unwrap();
        assert_eq!(on_axis.as_slice().iter().filter(|&&x| x != 0.0).count(), 1);

        let off = gw.embed_text("completely unrelated text").unwrap();
        let off2 = gw.embed_text("completely unrelated text").unwrap();
        assert_eq!(off, off2);
        let norm: f64 = off.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!(off.as_slice().iter().filter(|&&x| x != 0.0).count() > 32);
    }

    #[test]
    fn longest_registered_tag_wins() {
        let mock = MockBackend::new(2);
        mock.register_concepts(["cats", "cats wearing hats"]);
        let gw = Gateway::mock(mock.clone());
        let long = gw.embed_text("images with cats wearing hats").unwrap();
        let short = gw.embed_text("images with cats").unwrap();
        assert_eq!(long.dot(&short).unwrap(), 0.0, "distinct axes");
    }

    /// The geometry the whole pipeline leans on: with sigma = 0.1 every
    /// planted image scores higher against the planted text than any image
    /// from the other set.
    #[test]
    fn planted_populations_separate_cleanly() {
        let mock = MockBackend::new(3);
        let gw = Gateway::mock(mock.clone());
        let text = gw.embed_text("images with cats").unwrap();
        // "cats" not yet registered: embed one cat image first.
        let _ = gw.embed_image(&record("cats", 0.1, 0));
        let text = {
            // Re-embed now that the tag is registered.
            let t = gw.embed_text("images with cats please").unwrap();
            assert_ne!(t, text);
            t
        };
        let mut scores_a = Vec::new();
        let mut scores_b = Vec::new();
        for salt in 0..20 {
            let ea = gw.embed_image(&record("cats", 0.1, salt)).unwrap();
            let eb = gw.embed_image(&record("dogs", 0.1, salt)).unwrap();
            scores_a.push(ea.dot(&text).unwrap());
            scores_b.push(eb.dot(&text).unwrap());
        }
        let min_a = scores_a.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_b = scores_b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            min_a > max_b,
            "populations overlap: min_a = {min_a}, max_b = {max_b}"
        );
    }

    #[test]
    fn caption_follows_the_template() {
        let gw = Gateway::mock(MockBackend::new(0));
        assert_eq!(
            gw.caption(&record("sailboats", 0.5, 9)).unwrap(),
            "an image with sailboats"
        );
    }

    #[test]
    fn vqa_answers_by_tag_membership() {
        let gw = Gateway::mock(MockBackend::new(0));
        let rec = record("cats", 0.2, 1);
        assert!(gw.vqa(&rec, "Does this image contain cats?").unwrap());
        assert!(!gw.vqa(&rec, "Does this image contain dogs?").unwrap());
    }

    #[test]
    fn judge_prompt_scoring_levels() {
        let gw = Gateway::mock(MockBackend::new(0));
        let ask = |truth: &str, predicted: &str| {
            gw.complete_chat(&[crate::backend::ChatMessage::user(format!(
                "Ground truth: {truth}\nPrediction: {predicted}\nAnswer with 0, 0.5, or 1."
            ))])
            .unwrap()
        };
        assert_eq!(ask("green apples", "Green apples."), "1");
        assert_eq!(ask("green apples", "green apples in a basket"), "0.5");
        assert_eq!(ask("green apples", "red sports cars"), "0");
    }

    #[test]
    fn proposer_prompt_lists_planted_concept_last() {
        let mock = MockBackend::new(4);
        let gw = Gateway::mock(mock.clone());
        let mut prompt = String::from(
            "The following are the results of captioning two groups of images.\n\nGroup A:\n",
        );
        for i in 0..5 {
            prompt.push_str(&format!("- an image with cats ({i})\n"));
        }
        prompt.push_str("\nGroup B:\n");
        for i in 0..5 {
            prompt.push_str(&format!("- an image with dogs ({i})\n"));
        }
        prompt.push_str("\nPropose up to 4 short descriptions of concepts more often true for Group A.\n");
        let reply = gw.complete_chat(&[crate::backend::ChatMessage::user(prompt)]).unwrap();
        let lines: Vec<&str> = reply.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].contains("cats"), "last line should be planted: {lines:?}");
        for l in &lines[..3] {
            assert!(!l.contains("cats"), "distractors first: {lines:?}");
        }
    }

    #[test]
    fn fixtures_override_default_behavior() {
        let mock = MockBackend::new(0);
        let gw = Gateway::mock(mock.clone());
        let rec = record("cats", 0.0, 0);
        // Build the same request the gateway will issue.
        let bytes = gw.fetch_image(&rec).unwrap();
        let att = crate::backend::Attachment::new(bytes);
        let request = GatewayRequest {
            kind: BackendKind::Caption,
            model_id: gw.model_id(BackendKind::Caption).unwrap().to_string(),
            payload: serde_json::json!({ "prompt": crate::backend::CAPTION_PROMPT, "image": att.sha256 }),
            attachments: vec![att],
        };
        mock.set_fixture(&request, b"a scripted caption");
        assert_eq!(gw.caption(&rec).unwrap(), "a scripted caption");
    }

    #[test]
    fn concept_capacity_is_enforced() {
        let mock = MockBackend::with_distractors(0, &[]);
        let gw = Gateway::mock(mock.clone());
        for i in 0..MOCK_DIM {
            gw.embed_image(&record(&format!("tag{i:03}"), 0.0, 0)).unwrap();
        }
        let err = gw.embed_image(&record("one-too-many", 0.0, 0)).unwrap_err();
        assert!(err.to_string().contains("capacity"), "{err}");
    }

    #[test]
    fn fingerprint_tracks_seed_and_concepts() {
        let a = MockBackend::new(1);
        let b = MockBackend::new(1);
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.register_concepts(["zebras"]);
        assert_ne!(a.fingerprint(), b.fingerprint());
        let c = MockBackend::new(2);
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
