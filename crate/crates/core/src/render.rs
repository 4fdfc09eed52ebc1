//! Figures: the eight-colour single-versus-ensemble disagreement map (PNG
//! plus JSON legend) and the precision/recall performance diagram (SVG).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DiagramSpec;
use crate::util::{write_atomic, write_json_atomic};

/// Colour of pixels outside the valid mask.
pub const INVALID_COLOR: [u8; 3] = [64, 64, 64];

/// Outcome of one valid pixel, from (label, single prediction, ensemble
/// prediction).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffClass {
    /// Landslide found by both.
    BothCorrect,
    /// Landslide missed by the single model, found by the ensemble.
    SingleMissedEnsembleCorrect,
    /// Landslide found by the single model, missed by the ensemble.
    SingleCorrectEnsembleMissed,
    /// Landslide missed by both.
    BothMissed,
    /// False alarm of the single model only.
    SingleFalseAlarm,
    /// False alarm of the ensemble only.
    EnsembleFalseAlarm,
    /// False alarm of both.
    BothFalseAlarm,
    /// No landslide and no prediction.
    Background,
}

impl DiffClass {
    /// Ordered by code.
    pub const ALL: [DiffClass; 8] = [
        Self::Background,
        Self::EnsembleFalseAlarm,
        Self::SingleFalseAlarm,
        Self::BothFalseAlarm,
        Self::BothMissed,
        Self::SingleMissedEnsembleCorrect,
        Self::SingleCorrectEnsembleMissed,
        Self::BothCorrect,
    ];

    pub fn from_bits(label: bool, single: bool, ensemble: bool) -> Self {
        Self::ALL[usize::from(label) << 2 | usize::from(single) << 1 | usize::from(ensemble)]
    }

    /// `label << 2 | single << 1 | ensemble`.
    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&c| c == self).unwrap() as u8
    }

    pub fn bits(self) -> (bool, bool, bool) {
        let c = self.code();
        (c & 4 != 0, c & 2 != 0, c & 1 != 0)
    }

    pub fn color(self) -> [u8; 3] {
        match self {
            Self::BothCorrect => [255, 255, 255],
            Self::SingleMissedEnsembleCorrect => [0, 255, 255],
            Self::SingleCorrectEnsembleMissed => [255, 255, 0],
            Self::BothMissed => [0, 160, 0],
            Self::SingleFalseAlarm => [255, 0, 0],
            Self::EnsembleFalseAlarm => [0, 0, 255],
            Self::BothFalseAlarm => [255, 0, 255],
            Self::Background => [0, 0, 0],
        }
    }

    pub fn color_name(self) -> &'static str {
        match self {
            Self::BothCorrect => "white",
            Self::SingleMissedEnsembleCorrect => "cyan",
            Self::SingleCorrectEnsembleMissed => "yellow",
            Self::BothMissed => "green",
            Self::SingleFalseAlarm => "red",
            Self::EnsembleFalseAlarm => "blue",
            Self::BothFalseAlarm => "magenta",
            Self::Background => "black",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::BothCorrect => "landslide detected by both",
            Self::SingleMissedEnsembleCorrect => "landslide missed by the single model, detected by the ensemble",
            Self::SingleCorrectEnsembleMissed => "landslide detected by the single model, missed by the ensemble",
            Self::BothMissed => "landslide missed by both",
            Self::SingleFalseAlarm => "false alarm of the single model",
            Self::EnsembleFalseAlarm => "false alarm of the ensemble",
            Self::BothFalseAlarm => "false alarm of both",
            Self::Background => "no landslide, none predicted",
        }
    }
}

/// Per-pixel classes of a scene; `None` marks invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffMap {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<Option<DiffClass>>,
}

impl DiffMap {
    /// Row-major RGB bytes.
    pub fn rgb(&self) -> Vec<u8> {
        self.classes.iter().flat_map(|c| c.map_or(INVALID_COLOR, DiffClass::color)).collect()
    }

    pub fn count(&self, class: Option<DiffClass>) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }
}

/// Classifies every pixel from the label and the two binary predictions.
pub fn diff_map(
    label: &[u8],
    single: &[u8],
    ensemble: &[u8],
    valid: &[u8],
    width: usize,
    height: usize,
) -> Result<DiffMap> {
    let n = width * height;
    if [label.len(), single.len(), ensemble.len(), valid.len()].iter().any(|&l| l != n) {
        return Err(Error::invalid(format!(
            "mask lengths {}/{}/{}/{} do not match {width}×{height}",
            label.len(),
            single.len(),
            ensemble.len(),
            valid.len()
        )));
    }
    let classes = (0..n)
        .map(|i| (valid[i] == 1).then(|| DiffClass::from_bits(label[i] == 1, single[i] == 1, ensemble[i] == 1)))
        .collect();
    Ok(DiffMap { width, height, classes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    /// `label << 2 | single << 1 | ensemble`; absent for invalid pixels.
    pub code: Option<u8>,
    pub class: Option<DiffClass>,
    pub color: [u8; 3],
    pub color_name: String,
    pub description: String,
    pub pixels: usize,
}

/// The legend written next to a diff-map PNG.
pub fn legend(map: &DiffMap) -> Vec<LegendEntry> {
    let mut out: Vec<LegendEntry> = DiffClass::ALL
        .iter()
        .map(|&c| LegendEntry {
            code: Some(c.code()),
            class: Some(c),
            color: c.color(),
            color_name: c.color_name().to_string(),
            description: c.description().to_string(),
            pixels: map.count(Some(c)),
        })
        .collect();
    out.push(LegendEntry {
        code: None,
        class: None,
        color: INVALID_COLOR,
        color_name: "dark gray".to_string(),
        description: "outside the valid mask".to_string(),
        pixels: map.count(None),
    });
    out
}

/// Legend path of a diff map: `x.png` → `x.legend.json`.
pub fn legend_path(png: &Path) -> PathBuf {
    png.with_extension("legend.json")
}

/// Writes the map as an 8-bit RGB PNG plus its JSON legend.
pub fn write_diff_png(map: &DiffMap, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, map.width as u32, map.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let encoded = enc.write_header().and_then(|mut w| w.write_image_data(&map.rgb()));
        encoded.map_err(|e| Error::invalid(format!("PNG encoding failed: {e}")))?;
    }
    write_atomic(path, &bytes)?;
    write_json_atomic(&legend_path(path), &legend(map))
}

/// Pixel geometry of the diagram.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Canvas {
    pub size: f64,
    pub margin: f64,
}

impl Default for Canvas {
    fn default() -> Self {
        Self { size: 600.0, margin: 60.0 }
    }
}

impl Canvas {
    fn plot(&self) -> f64 {
        self.size - 2.0 * self.margin
    }

    /// Screen position of unit coordinates (precision, recall).
    pub fn to_screen(&self, x: f64, y: f64) -> (f64, f64) {
        (self.margin + x * self.plot(), self.margin + (1.0 - y) * self.plot())
    }

    /// Inverse of [`Canvas::to_screen`].
    pub fn to_unit(&self, sx: f64, sy: f64) -> (f64, f64) {
        ((sx - self.margin) / self.plot(), 1.0 - (sy - self.margin) / self.plot())
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG markup of the diagram: unit axes, F1 isolines, dashed bias rays and
/// labelled markers. Screen coordinates are rounded to 0.01 px.
pub fn diagram_svg(spec: &DiagramSpec, canvas: Canvas) -> String {
    let mut s = String::new();
    let size = canvas.size;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);

    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
    let (x0, y0) = canvas.to_screen(0.0, 0.0);
    let (x1, y1) = canvas.to_screen(1.0, 1.0);
    let _ = writeln!(s, r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}"/>"#, x1 - x0, y0 - y1);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" fill="black">"#);
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let (tx, _) = canvas.to_screen(v, 0.0);
        let (_, ty) = canvas.to_screen(0.0, v);
        let _ = writeln!(s, r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"#, y0 + 16.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, x0 - 6.0, ty + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Precision</text>"#, (x0 + x1) / 2.0, size - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">Recall</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="isolines" stroke="gray" fill="none">"#);
    for line in &spec.isolines {
        let pts: Vec<String> = line
            .points
            .iter()
            .map(|&(x, y)| {
                let (sx, sy) = canvas.to_screen(x, y);
                format!("{sx:.2},{sy:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline class="isoline" data-f1="{}" points="{}"/>"#, line.f1, pts.join(" "));
        if let Some(&(lx, ly)) = line.points.last() {
            let (sx, sy) = canvas.to_screen(lx, ly);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="gray" stroke="none">{:.1}</text>"#, sx + 3.0, sy, line.f1);
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="bias-rays" stroke="gray" stroke-dasharray="4 3" fill="none">"#);
    for ray in &spec.bias_rays {
        let (ex, ey) = canvas.to_screen(ray.end.0, ray.end.1);
        let _ = writeln!(
            s,
            r#"<line class="bias-ray" data-bias="{}" x1="{x0:.2}" y1="{y0:.2}" x2="{ex:.2}" y2="{ey:.2}"/>"#,
            ray.bias
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="markers">"#);
    for p in &spec.points {
        let (cx, cy) = canvas.to_screen(p.x, p.y);
        let name = escape(&p.name);
        let _ = writeln!(
            s,
            r#"<circle class="marker" data-name="{name}" data-precision="{}" data-recall="{}" cx="{cx:.2}" cy="{cy:.2}" r="5" fill="black"/>"#,
            p.x, p.y
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{name}</text>"#, cx + 7.0, cy - 7.0);
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

/// Writes [`diagram_svg`] with the default canvas to `path`.
pub fn render_diagram(spec: &DiagramSpec, path: &Path) -> Result<()> {
    write_atomic(path, diagram_svg(spec, Canvas::default()).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for (i, c) in DiffClass::ALL.iter().enumerate() {
            assert_eq!(c.code() as usize, i);
            let (l, s, e) = c.bits();
            assert_eq!(DiffClass::from_bits(l, s, e), *c);
        }
    }

    #[test]
    fn canvas_inverse() {
        let c = Canvas::default();
        let (sx, sy) = c.to_screen(0.25, 0.75);
        assert_eq!(c.to_unit(sx, sy), (0.25, 0.75));
    }
}
