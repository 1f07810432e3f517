//! Procedural training sets: a 2-D Gaussian mixture and 12x12 glyph faces.
//!
//! Glyphs are drawn in layers on a `[-1, 1]` canvas: background, face disc
//! (whose level is the `tone` attribute), then eyes and mouth painted dark on
//! top, then an optional bright corner mark. Each attribute owns a pixel
//! footprint, so an edit of one attribute can only touch the union of its old
//! and new footprints.
//!
//! The desk dataset holds every unmarked combination plus a few marked copies;
//! the marked glyphs are the rare, distinctive instances used as forget targets.

use crate::rng::{Purpose, StreamRng};

pub const GLYPH_SIDE: usize = 12;
pub const GLYPH_DIM: usize = GLYPH_SIDE * GLYPH_SIDE;

const BACKGROUND: f64 = -1.0;
const FEATURE: f64 = -1.0;
const MARK: f64 = 1.0;
/// Number of distinct corner marks (attribute values 1..=MARK_KINDS).
pub const MARK_KINDS: usize = 4;
const TONE_LEVELS: [f64; 3] = [-0.3, 0.2, 0.7];
const FACE_RADIUS_SQ: f64 = 5.4 * 5.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GlyphAttribute {
    /// Eye row below the top of the face, 0..=4.
    EyeOffset,
    /// Horizontal eye shift, -1..=1.
    Gaze,
    /// -1 frown, 0 flat, 1 smile.
    Mouth,
    /// Face level index, 0..=2.
    Tone,
    /// 0 none, 1..=4 a bright patch in one corner (clockwise from top-left).
    Mark,
}

pub const ALL_ATTRIBUTES: [GlyphAttribute; 5] =
    [GlyphAttribute::EyeOffset, GlyphAttribute::Gaze, GlyphAttribute::Mouth, GlyphAttribute::Tone, GlyphAttribute::Mark];

impl GlyphAttribute {
    pub fn name(self) -> &'static str {
        match self {
            GlyphAttribute::EyeOffset => "eye_offset",
            GlyphAttribute::Gaze => "gaze",
            GlyphAttribute::Mouth => "mouth",
            GlyphAttribute::Tone => "tone",
            GlyphAttribute::Mark => "mark",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eye_offset" => Some(GlyphAttribute::EyeOffset),
            "gaze" => Some(GlyphAttribute::Gaze),
            "mouth" => Some(GlyphAttribute::Mouth),
            "tone" => Some(GlyphAttribute::Tone),
            "mark" => Some(GlyphAttribute::Mark),
            _ => None,
        }
    }

    pub fn range(self) -> std::ops::RangeInclusive<i32> {
        match self {
            GlyphAttribute::EyeOffset => 0..=4,
            GlyphAttribute::Gaze | GlyphAttribute::Mouth => -1..=1,
            GlyphAttribute::Tone => 0..=2,
            GlyphAttribute::Mark => 0..=MARK_KINDS as i32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GlyphAttrs {
    pub eye_offset: i32,
    pub gaze: i32,
    pub mouth: i32,
    pub tone: i32,
    pub mark: i32,
}

impl GlyphAttrs {
    pub fn get(&self, a: GlyphAttribute) -> i32 {
        match a {
            GlyphAttribute::EyeOffset => self.eye_offset,
            GlyphAttribute::Gaze => self.gaze,
            GlyphAttribute::Mouth => self.mouth,
            GlyphAttribute::Tone => self.tone,
            GlyphAttribute::Mark => self.mark,
        }
    }

    /// Copy with one attribute replaced, or `None` if the value is out of range.
    pub fn with(&self, a: GlyphAttribute, value: i32) -> Option<Self> {
        if !a.range().contains(&value) {
            return None;
        }
        let mut out = *self;
        match a {
            GlyphAttribute::EyeOffset => out.eye_offset = value,
            GlyphAttribute::Gaze => out.gaze = value,
            GlyphAttribute::Mouth => out.mouth = value,
            GlyphAttribute::Tone => out.tone = value,
            GlyphAttribute::Mark => out.mark = value,
        }
        Some(out)
    }

    pub fn is_valid(&self) -> bool {
        ALL_ATTRIBUTES.iter().all(|a| a.range().contains(&self.get(*a)))
    }

    fn eye_pixels(&self) -> Vec<(usize, usize)> {
        let row = (2 + self.eye_offset) as usize;
        [3, 4, 7, 8].iter().map(|c| (row, (c + self.gaze) as usize)).collect()
    }

    fn mouth_pixels(&self) -> Vec<(usize, usize)> {
        match self.mouth {
            1 => vec![(8, 3), (9, 4), (9, 5), (9, 6), (9, 7), (8, 8)],
            0 => (3..=8).map(|c| (9, c)).collect(),
            _ => vec![(9, 3), (8, 4), (8, 5), (8, 6), (8, 7), (9, 8)],
        }
    }

    /// A 3x3 corner block minus its inner corner, which lies inside the face.
    fn mark_pixels(&self) -> Vec<(usize, usize)> {
        let last = GLYPH_SIDE - 1;
        let corner = |(r, c): (usize, usize)| match self.mark {
            1 => Some((r, c)),
            2 => Some((r, last - c)),
            3 => Some((last - r, last - c)),
            4 => Some((last - r, c)),
            _ => None,
        };
        (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).filter(|&(r, c)| r + c < 4).filter_map(corner).collect()
    }
}

fn in_face(r: usize, c: usize) -> bool {
    let (dr, dc) = (r as f64 - 5.5, c as f64 - 5.5);
    dr * dr + dc * dc <= FACE_RADIUS_SQ
}

pub fn render_glyph(attrs: &GlyphAttrs) -> Vec<f64> {
    assert!(attrs.is_valid(), "glyph attributes out of range: {attrs:?}");
    let mut img = vec![BACKGROUND; GLYPH_DIM];
    let level = TONE_LEVELS[attrs.tone as usize];
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            if in_face(r, c) {
                img[r * GLYPH_SIDE + c] = level;
            }
        }
    }
    for (r, c) in attrs.eye_pixels().into_iter().chain(attrs.mouth_pixels()) {
        img[r * GLYPH_SIDE + c] = FEATURE;
    }
    for (r, c) in attrs.mark_pixels() {
        img[r * GLYPH_SIDE + c] = MARK;
    }
    img
}

/// Pixels an edit of `attribute` to `new_value` is allowed to change: the
/// union of the attribute's footprint before and after the edit.
pub fn attribute_mask(attrs: &GlyphAttrs, attribute: GlyphAttribute, new_value: i32) -> Vec<bool> {
    let edited = attrs.with(attribute, new_value).expect("edited value in range");
    let mut mask = vec![false; GLYPH_DIM];
    match attribute {
        GlyphAttribute::EyeOffset | GlyphAttribute::Gaze => {
            for (r, c) in attrs.eye_pixels().into_iter().chain(edited.eye_pixels()) {
                mask[r * GLYPH_SIDE + c] = true;
            }
        }
        GlyphAttribute::Mouth => {
            for (r, c) in attrs.mouth_pixels().into_iter().chain(edited.mouth_pixels()) {
                mask[r * GLYPH_SIDE + c] = true;
            }
        }
        GlyphAttribute::Mark => {
            for (r, c) in attrs.mark_pixels().into_iter().chain(edited.mark_pixels()) {
                mask[r * GLYPH_SIDE + c] = true;
            }
        }
        GlyphAttribute::Tone => {
            for r in 0..GLYPH_SIDE {
                for c in 0..GLYPH_SIDE {
                    mask[r * GLYPH_SIDE + c] = in_face(r, c);
                }
            }
        }
    }
    mask
}

/// Left-right mirror of a square image.
pub fn mirror(img: &[f64], side: usize) -> Vec<f64> {
    assert_eq!(img.len(), side * side);
    let mut out = vec![0.0; img.len()];
    for r in 0..side {
        for c in 0..side {
            out[r * side + c] = img[r * side + side - 1 - c];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlyphDataset {
    attrs: Vec<GlyphAttrs>,
    images: Vec<Vec<f64>>,
}

impl GlyphDataset {
    /// Every unmarked attribute combination with `eye_offset <= 2` (81
    /// glyphs), so a `+2` eye edit is always in range.
    pub fn all_combinations() -> Vec<GlyphAttrs> {
        let mut out = Vec::new();
        for eye_offset in 0..=2 {
            for gaze in -1..=1 {
                for mouth in -1..=1 {
                    for tone in 0..=2 {
                        out.push(GlyphAttrs { eye_offset, gaze, mouth, tone, mark: 0 });
                    }
                }
            }
        }
        out
    }

    /// `count` distinct unmarked glyphs in a seeded order, followed by marked
    /// versions (marks `1..=marked`) of the first `marked` bright-faced
    /// glyphs among them, each repeated `copies` times. Panics if there are
    /// not enough bright-faced glyphs.
    pub fn generate(count: usize, marked: usize, copies: usize, seed: u64) -> Self {
        let mut combos = Self::all_combinations();
        assert!(count >= 1 && count <= combos.len(), "glyph count must be in 1..={}", combos.len());
        assert!(marked <= MARK_KINDS.min(count), "marked glyph count must be at most {}", MARK_KINDS.min(count));
        StreamRng::new(seed, Purpose::Data).shuffle(&mut combos);
        combos.truncate(count);
        assert!(marked == 0 || copies >= 1, "marked glyphs need at least one copy");
        let bright: Vec<GlyphAttrs> = combos.iter().filter(|a| a.tone == 2).take(marked).copied().collect();
        assert_eq!(bright.len(), marked, "not enough bright-faced glyphs to mark");
        for (k, base) in bright.into_iter().enumerate() {
            combos.extend(std::iter::repeat_n(GlyphAttrs { mark: k as i32 + 1, ..base }, copies));
        }
        let images = combos.iter().map(render_glyph).collect();
        Self { attrs: combos, images }
    }

    /// Index of the first copy of each marked glyph, in mark order.
    pub fn marked_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.attrs[i].mark != 0 && (i == 0 || self.attrs[i - 1] != self.attrs[i])).collect()
    }

    /// Indices of every sample whose image equals sample `i`.
    pub fn copies_of(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.attrs[j] == self.attrs[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn attrs(&self, i: usize) -> &GlyphAttrs {
        &self.attrs[i]
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    pub centers: Vec<[f64; 2]>,
    pub std: f64,
}

impl GaussianMixture {
    /// `modes` isotropic components evenly spaced on a circle.
    pub fn ring(modes: usize, radius: f64, std: f64) -> Self {
        let centers = (0..modes)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / modes as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect();
        Self { centers, std }
    }

    /// Eight modes on a radius-2 circle, std 0.1.
    pub fn desk() -> Self {
        Self::ring(8, 2.0, 0.1)
    }

    pub fn sample(&self, count: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = StreamRng::new(seed, Purpose::Data);
        let mut points = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let k = rng.below(self.centers.len());
            let c = self.centers[k];
            points.push(vec![c[0] + self.std * rng.normal(), c[1] + self.std * rng.normal()]);
            labels.push(k);
        }
        (points, labels)
    }

    pub fn nearest_mode(&self, p: &[f64]) -> usize {
        self.nearest_excluding(p, None)
    }

    fn nearest_excluding(&self, p: &[f64], skip: Option<usize>) -> usize {
        let mut best = (usize::MAX, f64::INFINITY);
        for (k, c) in self.centers.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    /// Translates `p` from its own mode to the nearest other mode.
    pub fn shift_to_neighbor(&self, p: &[f64]) -> Vec<f64> {
        let own = self.nearest_mode(p);
        let other = self.nearest_excluding(p, Some(own));
        let (a, b) = (self.centers[own], self.centers[other]);
        vec![p[0] - a[0] + b[0], p[1] - a[1] + b[1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Mixture { spec: GaussianMixture, points: Vec<Vec<f64>>, labels: Vec<usize> },
    Glyphs(GlyphDataset),
}

impl Dataset {
    pub fn name(&self) -> &'static str {
        match self {
            Dataset::Mixture { .. } => "mixture",
            Dataset::Glyphs(_) => "glyphs",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dataset::Mixture { .. } => 2,
            Dataset::Glyphs(_) => GLYPH_DIM,
        }
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        match self {
            Dataset::Mixture { points, .. } => points,
            Dataset::Glyphs(g) => g.images(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples().len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples().is_empty()
    }

    /// Inclusive value range, if the data is bounded.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            Dataset::Mixture { .. } => None,
            Dataset::Glyphs(_) => Some((-1.0, 1.0)),
        }
    }

    /// Per-coordinate mean of the training samples.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for s in self.samples() {
            for (a, b) in m.iter_mut().zip(s) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Index of the training sample closest to `x` in L2.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.samples().iter().enumerate() {
            let d: f64 = s.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}
