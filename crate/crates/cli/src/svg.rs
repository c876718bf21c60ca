//! SVG 1.1 heatmaps of field files, one `rect` per cell.

use std::fmt::Write as _;
use std::str::FromStr;

use fput::{Error, Result};

use crate::fieldfile::FieldFile;

pub const DEFAULT_LOG_FLOOR: f64 = 1e-11;
pub const BACKGROUND: &str = "#ffffff";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scale {
    Linear,
    /// `log10`, with values below the floor clamped to it.
    Log { floor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Palette {
    /// Perceptually ordered dark-blue to yellow ramp.
    Viridis,
    /// White to black.
    Gray,
    /// White to dark red.
    Heat,
}

impl FromStr for Palette {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viridis" => Ok(Palette::Viridis),
            "gray" | "grey" => Ok(Palette::Gray),
            "heat" => Ok(Palette::Heat),
            _ => Err(Error::Config(format!("unknown palette '{s}' (viridis, gray, heat)"))),
        }
    }
}

impl Palette {
    fn stops(self) -> &'static [(u8, u8, u8)] {
        match self {
            Palette::Viridis => &[(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
            Palette::Gray => &[(255, 255, 255), (0, 0, 0)],
            Palette::Heat => &[(255, 255, 255), (253, 174, 97), (215, 48, 39), (103, 0, 13)],
        }
    }

    /// Colour of `t` in `[0, 1]` by piecewise-linear interpolation.
    pub fn color(self, t: f64) -> (u8, u8, u8) {
        let stops = self.stops();
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
        let x = t * (stops.len() - 1) as f64;
        let i = (x.floor() as usize).min(stops.len() - 2);
        let f = x - i as f64;
        let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
        let (a, b) = (stops[i], stops[i + 1]);
        (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
    }
}

fn transform(v: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => v,
        Scale::Log { floor } => v.max(floor).log10(),
    }
}

/// Render the field; row 0 (smallest `y`) is drawn at the bottom.
pub fn render(field: &FieldFile, scale: Scale, palette: Palette, cell_size: u32) -> String {
    let (nx, ny) = (field.nx as usize, field.ny as usize);
    let t: Vec<f64> = field.values.iter().map(|&v| if v.is_nan() { f64::NAN } else { transform(v, scale) }).collect();
    let finite = t.iter().filter(|v| v.is_finite());
    let lo = match scale {
        Scale::Log { floor } => floor.log10(),
        Scale::Linear => finite.clone().cloned().fold(f64::INFINITY, f64::min),
    };
    let hi = finite.cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let c = cell_size.max(1) as usize;
    let (w, h) = (nx * c, ny * c);
    let mut out = String::with_capacity(64 * nx * ny + 512);
    let (xl, yl) = crate::fieldfile::Domain::axis_labels(field.domain);
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(
        out,
        "<desc>{xl} in [{:e}, {:e}], {yl} in [{:e}, {:e}]</desc>",
        field.bounds.0, field.bounds.1, field.bounds.2, field.bounds.3
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="{BACKGROUND}"/>"#);
    for iy in 0..ny {
        for ix in 0..nx {
            let v = t[iy * nx + ix];
            let fill = if v.is_finite() {
                let (r, g, b) = palette.color((v - lo) / span);
                format!("#{r:02x}{g:02x}{b:02x}")
            } else {
                BACKGROUND.to_string()
            };
            let _ = writeln!(out, r#"<rect x="{}" y="{}" width="{c}" height="{c}" fill="{fill}"/>"#, ix * c, (ny - 1 - iy) * c);
        }
    }
    out.push_str("</svg>\n");
    out
}
