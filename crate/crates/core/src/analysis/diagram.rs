use std::fmt::Write as _;

use crate::gait::{LEG_NAMES, NUM_LEGS};

use super::AnalysisError;

/// Per-leg binary contact strips sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitDiagram {
    pub label: String,
    pub contacts: Vec<[bool; NUM_LEGS]>,
    /// Desired stance probabilities of the same steps.
    pub desired: Vec<[f64; NUM_LEGS]>,
    pub dt: f64,
}

impl GaitDiagram {
    pub fn new(
        label: &str,
        contacts: Vec<[bool; NUM_LEGS]>,
        desired: Vec<[f64; NUM_LEGS]>,
        dt: f64,
    ) -> Result<Self, AnalysisError> {
        if contacts.len() != desired.len() {
            return Err(AnalysisError::Mismatch(contacts.len(), desired.len()));
        }
        if !(dt > 0.0) {
            return Err(AnalysisError::Invalid(format!("diagram dt {dt}")));
        }
        Ok(Self {
            label: label.to_string(),
            contacts,
            desired,
            dt,
        })
    }

    /// Fraction of leg-steps whose contact equals `desired > 0.5`.
    pub fn match_rate(&self) -> f64 {
        if self.contacts.is_empty() {
            return f64::NAN;
        }
        let hits = self
            .contacts
            .iter()
            .zip(&self.desired)
            .flat_map(|(c, d)| (0..NUM_LEGS).map(move |leg| c[leg] == (d[leg] > 0.5)))
            .filter(|&m| m)
            .count();
        hits as f64 / (self.contacts.len() * NUM_LEGS) as f64
    }

    /// Text strips: `#` stance, `.` swing; the desired schedule sits under
    /// each measured strip.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} ({} steps, dt {} s, contact match {:.3})\n",
            self.label,
            self.contacts.len(),
            self.dt,
            self.match_rate()
        );
        for (leg, name) in LEG_NAMES.iter().enumerate() {
            let actual: String = self.contacts.iter().map(|c| if c[leg] { '#' } else { '.' }).collect();
            let wanted: String = self.desired.iter().map(|d| if d[leg] > 0.5 { '#' } else { '.' }).collect();
            let _ = writeln!(out, "{name}     |{actual}|");
            let _ = writeln!(out, "{name} des |{wanted}|");
        }
        out
    }

    pub fn to_svg(&self) -> String {
        const CELL: f64 = 6.0;
        const ROW: f64 = 14.0;
        const LEFT: f64 = 60.0;
        const TOP: f64 = 24.0;
        let n = self.contacts.len();
        let width = LEFT + CELL * n as f64 + 10.0;
        let height = TOP + ROW * 2.0 * NUM_LEGS as f64 + 10.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="4" y="14">{} | contact match {:.3}</text>"#,
            xml_escape(&self.label),
            self.match_rate()
        );
        for (leg, name) in LEG_NAMES.iter().enumerate() {
            let y_act = TOP + ROW * (2 * leg) as f64;
            let y_des = y_act + ROW;
            let _ = writeln!(s, r#"<text x="4" y="{}">{name}</text>"#, y_act + 10.0);
            let _ = writeln!(s, r#"<text x="4" y="{}">{name} des</text>"#, y_des + 10.0);
            for k in 0..n {
                let x = LEFT + CELL * k as f64;
                if self.contacts[k][leg] {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x}" y="{y_act}" width="{CELL}" height="{}" fill="#222"/>"##,
                        ROW - 3.0
                    );
                }
                if self.desired[k][leg] > 0.5 {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x}" y="{y_des}" width="{CELL}" height="{}" fill="#9ab"/>"##,
                        ROW - 3.0
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
